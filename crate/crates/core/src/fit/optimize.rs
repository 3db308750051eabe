//! Adaptive-moment descent with step-halving safeguard.

use std::time::Instant;

use super::objective::{FitState, LossTerms, Objective};
use super::{derangement, CellFit, Conventions, FitConfig, FitReport, Observation, ObservationGrid, ShuffleStrategy, TrajectoryEntry};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Rotation3, Vector2};

use crate::model::{embed_landmarks, HeadParams, ModelAsset, ParamGroup, Vec3};

const MAX_HALVINGS: usize = 20;

/// Rounds of alternating rigid / linear-shape estimation in
/// [`initial_params`].
const INIT_ROUNDS: usize = 10;
/// Ridge weight of the landmark shape solve, in mm² per unit coefficient².
const INIT_RIDGE: f64 = 1.0;

struct RigidGuess {
    rot: Matrix3<f64>,
    scale: f64,
    shift: Vector2<f64>,
}

/// Closest scaled-orthographic camera to the affine least-squares map from
/// `points` (model space) to the observed 2D landmarks `idx`.
fn fit_rigid(points: &[Vec3], obs: &Observation, idx: &[usize], j0: &Vec3) -> Result<RigidGuess> {
    let n = idx.len() as f64;
    let obs2 = |i: usize| Vector2::new(obs.landmarks.points[i][0], obs.landmarks.points[i][1]);
    let mean3 = idx.iter().fold(Vec3::zeros(), |a, &i| a + points[i]) / n;
    let mean2 = idx.iter().fold(Vector2::zeros(), |a, &i| a + obs2(i)) / n;
    let mut xtx = Matrix3::zeros();
    let mut ytx = Matrix2x3::zeros();
    for &i in idx {
        let x = points[i] - mean3;
        let y = obs2(i) - mean2;
        xtx += x * x.transpose();
        ytx += y * x.transpose();
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("visible template landmarks are coplanar".into()))?;
    let svd = (ytx * inv).svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let scale = (svd.singular_values[0] + svd.singular_values[1]) / 2.0;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Degenerate("observed landmarks are collinear".into()));
    }
    let rows = u * vt;
    let r1 = Vec3::new(rows[(0, 0)], rows[(0, 1)], rows[(0, 2)]);
    let r2 = Vec3::new(rows[(1, 0)], rows[(1, 1)], rows[(1, 2)]);
    let mut rot = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), r1.cross(&r2).transpose()]);
    // snap to the nearest proper rotation
    let s = rot.svd(true, true);
    rot = s.u.unwrap() * s.v_t.unwrap();
    // global rotation acts about the root joint
    let moved = rot * (mean3 - j0) + j0;
    let shift = mean2 - scale * Vector2::new(moved.x, moved.y);
    Ok(RigidGuess { rot, scale, shift })
}

/// Default starting point for an observation.
///
/// Jaw pose and albedo start at zero. Global rotation, camera, shape and
/// expression come from alternating a scaled-orthographic fit of the
/// visible landmarks off the jaw with a ridge solve for the coefficients
/// under that camera. DC lighting is the mean skin color over the mean
/// albedo.
pub fn initial_params(model: &ModelAsset, obs: &Observation) -> Result<HeadParams> {
    let mut p = HeadParams::zeros(model.dims());
    let template = embed_landmarks(&model.template_mesh(), &model.landmarks)?;
    // landmarks carried by the jaw joint would bias the rigid estimate
    let jaw_weight = |i: usize| {
        let e = &model.landmarks[i];
        let f = model.faces[e.face];
        (0..3).map(|k| e.bary[k] * model.skinning_weights[f[k]][1]).sum::<f64>()
    };
    let mut idx: Vec<usize> =
        (0..template.len()).filter(|&i| obs.landmarks.visible[i] && jaw_weight(i) < 0.05).collect();
    if idx.len() < 4 {
        idx = (0..template.len()).filter(|&i| obs.landmarks.visible[i]).collect();
    }
    if idx.len() < 4 {
        return Err(Error::contract("initialization needs at least 4 visible landmarks"));
    }
    let j0 = model.joints[0];
    let (ns, ne) = (model.shape_basis.cols(), model.expression_basis.cols());
    let k = ns + ne;
    // landmark rows of the stacked shape/expression basis, 3 rows per landmark
    let mut basis = DMatrix::<f64>::zeros(3 * idx.len(), k);
    for (r, &i) in idx.iter().enumerate() {
        let e = &model.landmarks[i];
        let f = model.faces[e.face];
        for c in 0..3 {
            for (j, &v) in f.iter().enumerate() {
                let w = e.bary[j];
                for col in 0..ns {
                    basis[(3 * r + c, col)] += w * model.shape_basis.get(3 * v + c, col);
                }
                for col in 0..ne {
                    basis[(3 * r + c, ns + col)] += w * model.expression_basis.get(3 * v + c, col);
                }
            }
        }
    }

    let mut points = template.clone();
    let mut coeffs = DVector::<f64>::zeros(k);
    let mut guess = fit_rigid(&points, obs, &idx, &j0)?;
    for _ in 0..INIT_ROUNDS {
        // residual in model units: observed minus projected template
        let pr = guess.rot.fixed_rows::<2>(0).into_owned();
        let mut a = DMatrix::<f64>::zeros(2 * idx.len(), k);
        let mut y = DVector::<f64>::zeros(2 * idx.len());
        for (r, &i) in idx.iter().enumerate() {
            let moved = guess.rot * (template[i] - j0) + j0;
            let target = (Vector2::new(obs.landmarks.points[i][0], obs.landmarks.points[i][1]) - guess.shift)
                / guess.scale;
            let res = target - Vector2::new(moved.x, moved.y);
            y[2 * r] = res.x;
            y[2 * r + 1] = res.y;
            let rows = pr * basis.rows(3 * r, 3);
            a.set_row(2 * r, &rows.row(0));
            a.set_row(2 * r + 1, &rows.row(1));
        }
        let mut normal = a.transpose() * &a;
        for d in 0..k {
            normal[(d, d)] += INIT_RIDGE;
        }
        coeffs = match normal.cholesky() {
            Some(ch) => ch.solve(&(a.transpose() * y)),
            None => break,
        };
        let offsets = &basis * &coeffs;
        for (r, &i) in idx.iter().enumerate() {
            points[i] = template[i] + Vec3::new(offsets[3 * r], offsets[3 * r + 1], offsets[3 * r + 2]);
        }
        guess = fit_rigid(&points, obs, &idx, &j0)?;
    }
    p.beta.copy_from_slice(&coeffs.as_slice()[..ns]);
    p.psi.copy_from_slice(&coeffs.as_slice()[ns..]);
    let w = Rotation3::from_matrix_unchecked(guess.rot).scaled_axis();
    p.theta[..3].copy_from_slice(w.as_slice());
    p.cam = [guess.scale, guess.shift.x, guess.shift.y];

    let albedo_mean: [f64; 3] = {
        let mut a = [0.0; 3];
        for v in &model.albedo_mean {
            for c in 0..3 {
                a[c] += v[c] / model.albedo_mean.len() as f64;
            }
        }
        a
    };
    let mut skin = [0.0; 3];
    let mut weight = 0.0;
    for (px, m) in obs.skin_mask.values.iter().enumerate() {
        for c in 0..3 {
            skin[c] += m * obs.image.rgb[3 * px + c];
        }
        weight += m;
    }
    for c in 0..3 {
        p.light[c] = if weight > 0.0 && albedo_mean[c] > 0.0 { skin[c] / weight / albedo_mean[c] } else { 1.0 };
    }
    Ok(p)
}

fn entry(iteration: usize, terms: LossTerms) -> TrajectoryEntry {
    TrajectoryEntry { iteration, total: terms.total(), terms }
}

fn shuffle_for(strategy: ShuffleStrategy, n: usize, seed: u64, iteration: usize) -> Vec<usize> {
    match strategy {
        ShuffleStrategy::Identity => (0..n).collect(),
        ShuffleStrategy::Derangement => derangement(n, seed),
        ShuffleStrategy::DerangementPerIteration => {
            derangement(n, seed.wrapping_add((iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        }
    }
}

/// Per-coordinate step multipliers laid out like [`FitState::pack`].
fn rate_vector(state: &FitState, config: &FitConfig) -> Vec<f64> {
    let r = &config.rates;
    let mut rates = state.zeros_like();
    if let Some(b) = &mut rates.shared_beta {
        b.iter_mut().for_each(|x| *x = r.shape);
    }
    for (dst, p) in rates.sets.iter_mut().zip(&state.sets) {
        for g in ParamGroup::ALL {
            let v = match g {
                ParamGroup::Shape => r.shape,
                ParamGroup::Expression => r.expression,
                ParamGroup::Pose => r.pose,
                ParamGroup::Albedo => r.albedo,
                ParamGroup::Light => r.light,
                ParamGroup::Camera => r.camera_shift,
            };
            dst.group_mut(g).iter_mut().for_each(|x| *x = v);
        }
        dst.cam[0] = r.camera_scale * p.cam[0].abs();
    }
    rates.pack()
}

/// Minimizes the full objective over the grid.
///
/// `init` seeds every cell; without it each cell starts from
/// [`initial_params`].
pub fn fit(
    grid: &ObservationGrid,
    model: &ModelAsset,
    config: &FitConfig,
    init: Option<&HeadParams>,
) -> Result<FitReport> {
    let start = Instant::now();
    let obj = Objective::new(grid, model, config)?;
    let n = obj.num_cells();
    let inits = match init {
        Some(p) => vec![p.clone(); n],
        None => obj.cells().iter().map(|o| initial_params(model, o)).collect::<Result<Vec<_>>>()?,
    };
    let mut state = obj.state_from(&inits)?;
    let mut shuffle = shuffle_for(config.shuffle, n, config.seed, 0);
    let (mut terms, mut grad) = obj.evaluate(&state, &shuffle, 0, config.iterations > 0)?;
    let mut trajectory = vec![entry(0, terms)];

    let rates = rate_vector(&state, config);
    let mut m = vec![0.0; rates.len()];
    let mut v = vec![0.0; rates.len()];
    let mut rejected = 0;
    let mut halvings = 0;
    let mut quiet = 0;
    let mut converged = false;
    let mut iterations_run = 0;
    // step fraction tried first; doubles back toward 1 after each success
    let mut trust = 1.0f64;

    for t in 1..=config.iterations {
        if config.shuffle == ShuffleStrategy::DerangementPerIteration && n > 1 {
            shuffle = shuffle_for(config.shuffle, n, config.seed, t);
            let (tt, gg) = obj.evaluate(&state, &shuffle, t, true)?;
            terms = tt;
            grad = gg;
        }
        let g = grad.as_ref().expect("gradient requested").pack();
        let (b1, b2) = (config.beta1, config.beta2);
        let lr = config.learning_rate * config.decay.powi(t as i32 - 1);
        let c1 = 1.0 - b1.powi(t as i32);
        let c2 = 1.0 - b2.powi(t as i32);
        let mut step = vec![0.0; g.len()];
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            step[i] = -lr * rates[i] * (m[i] / c1) / ((v[i] / c2).sqrt() + config.adam_epsilon);
        }

        let x = state.pack();
        let before = terms.total();
        let mut accepted = None;
        let attempts = if config.safeguard { MAX_HALVINGS + 1 } else { 1 };
        let mut factor = if config.safeguard { trust } else { 1.0 };
        for _ in 0..attempts {
            let mut cand = state.clone();
            cand.unpack(&x.iter().zip(&step).map(|(a, d)| a + factor * d).collect::<Vec<_>>());
            factor *= 0.5;
            halvings += 1;
            if cand.sets.iter().any(|p| p.cam[0] <= 0.0) {
                continue;
            }
            match obj.evaluate(&cand, &shuffle, t, !config.safeguard) {
                Ok((ct, cg)) => {
                    if !config.safeguard {
                        accepted = Some((cand, ct, cg));
                        break;
                    }
                    if ct.total() <= before {
                        trust = (4.0 * factor).min(1.0);
                        let (ct, cg) = obj.evaluate(&cand, &shuffle, t, true)?;
                        accepted = Some((cand, ct, cg));
                        break;
                    }
                }
                Err(e @ Error::NonFinite { .. }) => return Err(e),
                Err(e) if !config.safeguard => return Err(e),
                Err(_) => {}
            }
        }
        match accepted {
            Some((s, ct, cg)) => {
                state = s;
                terms = ct;
                grad = cg;
            }
            None => rejected += 1,
        }
        trajectory.push(entry(t, terms));
        iterations_run = t;

        let after = terms.total();
        if before - after <= config.tolerance * before.abs().max(1e-12) {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= config.patience.max(1) {
            converged = true;
            break;
        }
    }

    let shared = state.shared_beta.clone();
    let strip = |mut p: HeadParams| {
        if shared.is_some() {
            p.beta.clear();
        }
        p
    };
    let cells = obj
        .cells()
        .iter()
        .enumerate()
        .map(|(c, o)| CellFit {
            pose_index: o.pose_index,
            crop_level: o.crop_level,
            subject: o.subject.clone(),
            params: strip(state.sets[c].clone()),
            bald_params: config.dual_bald.then(|| strip(state.sets[n + c].clone())),
        })
        .collect();
    Ok(FitReport {
        dims: model.dims(),
        cells,
        shape: shared,
        trajectory,
        iterations_run,
        rejected_steps: rejected,
        trial_steps: halvings,
        converged,
        wall_clock_s: start.elapsed().as_secs_f64(),
        shuffle,
        config: config.clone(),
        conventions: Conventions::default(),
    })
}
