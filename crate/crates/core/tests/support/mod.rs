//! Synthetic subjects shared by the integration tests.
#![allow(dead_code)]

pub mod gradients;

use fullhead_core::fit::{render_observation, Observation, Occlusion};
use fullhead_core::model::{HeadParams, ModelAsset};
use fullhead_core::render::RenderSettings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random head in front of the camera, sized for a 1:130 mm-to-NDC scale.
pub fn subject(model: &ModelAsset, seed: u64) -> HeadParams {
    let mut r = rng(seed);
    let mut p = HeadParams::zeros(model.dims());
    for b in p.beta.iter_mut().take(20) {
        *b = r.random_range(-0.75..0.75);
    }
    for v in p.psi.iter_mut().take(10) {
        *v = r.random_range(-0.5..0.5);
    }
    for a in p.alpha.iter_mut().take(10) {
        *a = r.random_range(-1.0..1.0);
    }
    p.theta = [0.1, 0.0, 0.0, 0.05, 0.0, 0.0];
    p.cam = [1.0 / 130.0, 0.02, -0.03];
    for c in 0..3 {
        p.light[c] = 0.9;
        p.light[9 + c] = 0.2;
    }
    p
}

pub fn with_yaw(p: &HeadParams, yaw: f64) -> HeadParams {
    let mut q = p.clone();
    q.theta[1] = yaw;
    q
}

/// Renders `p` at `size`² and labels it as `(pose, level)`.
pub fn observe(model: &ModelAsset, p: &HeadParams, size: usize, occlusion: Occlusion, pose: usize, level: usize) -> Observation {
    let obs = render_observation(model, p, &RenderSettings::new(size, size, 0.004), occlusion).unwrap();
    Observation { pose_index: pose, crop_level: level, ..obs }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both norms are negligible.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = na.max(nb);
    if n < floor {
        0.0
    } else {
        d / n
    }
}
