//! Central-difference checks of every differentiable term w.r.t. HeadParams.
//!
//! Targets are placed so that no L1 residual sits near its kink, which keeps
//! the finite differences away from subgradient points. The renderer itself
//! is only piecewise smooth: the hard-z face under a pixel can switch, the
//! distance to a triangle's boundary has kinks where the closest edge
//! switches, and faces enter or leave the cutoff radius. A stencil that
//! straddles one of these is retried with a 10x smaller step.

use fullhead_core::loss::{
    dice_loss_grad, edge_loss_grad, encoder_loss_grad, identity_loss_grad, landmark_loss_grad, perceptual_loss_grad,
    photometric_loss_grad, regularization_grad, DownsampleEmbedder, EmbeddingProvider, EmbeddingVector, FeatureMaps,
    FeatureProvider, Landmarks2D, PoolPyramidFeatures, Reduction,
};
use fullhead_core::model::{HeadParams, ModelAsset, ParamGroup};
use fullhead_core::render::{render_head, HeadRender, ImagePlane, RenderGrad, RenderSettings, SoftMask};
use fullhead_core::ExecMode;
use rand::Rng;

pub const TERMS: [&str; 10] = [
    "landmark",
    "photometric",
    "identity",
    "dice",
    "encoder",
    "regularization",
    "edge",
    "perceptual",
    "silhouette_pixels",
    "color_pixels",
];

/// Terms read through the hard-z color buffer.
const COLOR_TERMS: [usize; 5] = [1, 2, 6, 7, 9];
/// Terms read through the soft silhouette.
const SILHOUETTE_TERMS: [usize; 2] = [3, 8];

/// True when some pixel's one-sided slopes disagree by more than 1% of its
/// central slope.
fn kinked(minus: &[f64], base: &[f64], plus: &[f64]) -> bool {
    minus.iter().zip(base).zip(plus).any(|((m, b), p)| (p - 2.0 * b + m).abs() > 0.01 * (p - m).abs() + 1e-13)
}

pub const STEP: f64 = 1e-4;
/// Step multipliers tried in turn while a stencil straddles a kink.
const REFINEMENT: [f64; 5] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4];

/// Finite-difference step for flat coordinate `i`. The camera scale is
/// about 1/130, so it is stepped relative to its value.
pub fn step_for(p: &HeadParams, i: usize) -> f64 {
    match p.locate(i) {
        Some((ParamGroup::Camera, 0)) => STEP * p.cam[0].abs(),
        _ => STEP,
    }
}

pub struct Problem<'a> {
    pub model: &'a ModelAsset,
    pub params: HeadParams,
    settings: RenderSettings,
    landmarks: Landmarks2D,
    photo_input: ImagePlane,
    photo_mask: SoftMask,
    identity: EmbeddingVector,
    dice_target: SoftMask,
    encoder_target: HeadParams,
    edge_target: ImagePlane,
    features: FeatureMaps,
    w_sil: Vec<f64>,
    w_col: Vec<f64>,
}

fn offset(r: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let v = r.random_range(lo..hi);
    if r.random_bool(0.5) {
        v
    } else {
        -v
    }
}

/// Per-(term, group) comparison for one configuration.
#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub term: &'static str,
    pub group: ParamGroup,
    pub analytic_norm: f64,
    pub fd_norm: f64,
    pub rel_err: f64,
    /// Coordinates left out because no step gave a smooth stencil.
    pub skipped: usize,
    /// Coordinates of this term (over all groups) that needed a smaller step.
    pub refined: usize,
}

impl<'a> Problem<'a> {
    /// A random pose, shape, appearance and set of targets.
    pub fn random(model: &'a ModelAsset, seed: u64, size: usize, sigma: f64) -> Self {
        let mut r = super::rng(seed);
        let mut p = super::subject(model, seed);
        p.theta = [
            r.random_range(-0.2..0.2),
            r.random_range(-0.5..0.5),
            r.random_range(-0.1..0.1),
            r.random_range(0.0..0.15),
            r.random_range(-0.05..0.05),
            r.random_range(-0.05..0.05),
        ];
        p.cam = [r.random_range(0.006..0.009), r.random_range(-0.1..0.1), r.random_range(-0.1..0.1)];
        for c in 0..3 {
            p.light[c] = r.random_range(0.6..0.8);
        }
        for l in p.light.iter_mut().skip(3) {
            *l = r.random_range(-0.08..0.08);
        }
        let mut settings = RenderSettings::new(size, size, sigma);
        settings.exec = ExecMode::Sequential;
        let base = render_head(model, &p, &settings).unwrap();
        let color = &base.out.color;
        let n = size * size;

        let mut landmarks = Landmarks2D::new(base.landmarks().iter().map(|q| q.map(|v| v + offset(&mut r, 0.01, 0.05))).collect());
        for w in landmarks.weights.iter_mut() {
            *w = r.random_range(0.5..2.0);
        }
        let mut photo_input = color.clone();
        for v in photo_input.rgb.iter_mut() {
            *v += offset(&mut r, 0.05, 0.2);
        }
        let photo_mask = SoftMask::from_values(size, size, (0..n).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let mut other = color.clone();
        for v in other.rgb.iter_mut() {
            *v = r.random_range(0.0..1.0);
        }
        let identity = DownsampleEmbedder.embed(&other);
        let dice_target = SoftMask::from_values(size, size, (0..n).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let mut encoder_target = p.clone();
        for i in 0..p.len() {
            encoder_target.set_flat(i, p.get_flat(i) + r.random_range(-0.5..0.5));
        }
        // half the rendered edges: |E(a) - E(b)| stays off its kink
        let mut edge_target = color.clone();
        for v in edge_target.rgb.iter_mut() {
            *v = 0.5 * *v + 0.25;
        }
        let mut features = PoolPyramidFeatures.features(color);
        for l in features.layers.iter_mut() {
            for v in l.data.iter_mut() {
                *v += offset(&mut r, 0.05, 0.15);
            }
        }
        let w_sil = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let w_col = (0..3 * n).map(|_| r.random_range(-1.0..1.0)).collect();
        Problem {
            model,
            params: p,
            settings,
            landmarks,
            photo_input,
            photo_mask,
            identity,
            dice_target,
            encoder_target,
            edge_target,
            features,
            w_sil,
            w_col,
        }
    }

    fn render(&self, p: &HeadParams) -> HeadRender {
        render_head(self.model, p, &self.settings).unwrap()
    }

    /// Every term at `p`.
    pub fn values(&self, p: &HeadParams, render: &HeadRender) -> [f64; 10] {
        let out = &render.out;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        [
            landmark_loss_grad(&self.landmarks, render.landmarks()).unwrap().0,
            photometric_loss_grad(&self.photo_input, &out.color, &self.photo_mask, Reduction::Mean).unwrap().0,
            identity_loss_grad(&DownsampleEmbedder.embed(&out.color), &self.identity).unwrap().0,
            dice_loss_grad(&self.dice_target, &out.silhouette, 1.0).unwrap().0,
            encoder_loss_grad(p, &self.encoder_target).unwrap().0,
            regularization_grad(p).0,
            edge_loss_grad(&out.color, &self.edge_target).unwrap().0,
            perceptual_loss_grad(&PoolPyramidFeatures.features(&out.color), &self.features).unwrap().0,
            dot(&self.w_sil, &out.silhouette.values),
            dot(&self.w_col, &out.color.rgb),
        ]
    }

    /// Analytic gradients of every term at the base parameters.
    pub fn analytic(&self) -> Vec<HeadParams> {
        let p = &self.params;
        let render = self.render(p);
        let color = &render.out.color;
        let back = |g: RenderGrad| render.backward(self.model, p, &g).unwrap();
        let color_grad = |c: Vec<f64>| back(RenderGrad { color: Some(c), ..Default::default() });

        let (_, gl) = landmark_loss_grad(&self.landmarks, render.landmarks()).unwrap();
        let (_, gp) = photometric_loss_grad(&self.photo_input, color, &self.photo_mask, Reduction::Mean).unwrap();
        let (_, ga, _) = identity_loss_grad(&DownsampleEmbedder.embed(color), &self.identity).unwrap();
        let (_, gd) = dice_loss_grad(&self.dice_target, &render.out.silhouette, 1.0).unwrap();
        let (_, ge) = edge_loss_grad(color, &self.edge_target).unwrap();
        let (_, gf) = perceptual_loss_grad(&PoolPyramidFeatures.features(color), &self.features).unwrap();
        vec![
            back(RenderGrad { landmarks: Some(gl), ..Default::default() }),
            color_grad(gp.rendered),
            color_grad(DownsampleEmbedder.embed_vjp(color, &ga)),
            back(RenderGrad { silhouette: Some(gd.b), ..Default::default() }),
            encoder_loss_grad(p, &self.encoder_target).unwrap().1,
            regularization_grad(p).1,
            color_grad(ge),
            color_grad(PoolPyramidFeatures.features_vjp(color, &gf)),
            back(RenderGrad { silhouette: Some(self.w_sil.clone()), ..Default::default() }),
            color_grad(self.w_col.clone()),
        ]
    }

    /// Compares analytic and central-difference gradients term by term and
    /// group by group.
    pub fn check(&self) -> Vec<GroupCheck> {
        let analytic = self.analytic();
        let base = self.render(&self.params).out;
        let n = self.params.len();
        let mut fd = vec![vec![None; n]; TERMS.len()];
        let mut refined = vec![0usize; TERMS.len()];
        for i in 0..n {
            for (level, shrink) in REFINEMENT.iter().enumerate() {
                let h = step_for(&self.params, i) * shrink;
                let mut plus = self.params.clone();
                plus.set_flat(i, plus.get_flat(i) + h);
                let mut minus = self.params.clone();
                minus.set_flat(i, minus.get_flat(i) - h);
                let rp = self.render(&plus);
                let rm = self.render(&minus);
                let face_changed = rp.out.face_index != base.face_index || rm.out.face_index != base.face_index;
                let kink = kinked(&rm.out.silhouette.values, &base.silhouette.values, &rp.out.silhouette.values);
                let vp = self.values(&plus, &rp);
                let vm = self.values(&minus, &rm);
                for t in 0..TERMS.len() {
                    let smooth = !(COLOR_TERMS.contains(&t) && face_changed) && !(SILHOUETTE_TERMS.contains(&t) && kink);
                    if fd[t][i].is_none() && smooth {
                        fd[t][i] = Some((vp[t] - vm[t]) / (2.0 * h));
                        refined[t] += (level > 0) as usize;
                    }
                }
                if fd.iter().all(|f| f[i].is_some()) {
                    break;
                }
            }
        }
        let mut out = Vec::new();
        for (t, term) in TERMS.iter().enumerate() {
            let flat = analytic[t].to_flat();
            for g in ParamGroup::ALL {
                let mut a = Vec::new();
                let mut f = Vec::new();
                let mut skipped = 0;
                for i in 0..n {
                    if self.params.locate(i).map(|(gg, _)| gg) != Some(g) {
                        continue;
                    }
                    match fd[t][i] {
                        Some(v) => {
                            a.push(flat[i]);
                            f.push(v);
                        }
                        None => skipped += 1,
                    }
                }
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                out.push(GroupCheck {
                    term,
                    group: g,
                    analytic_norm: norm(&a),
                    fd_norm: norm(&f),
                    rel_err: super::rel_err(&a, &f, 1e-9),
                    skipped,
                    refined: refined[t],
                });
            }
        }
        out
    }
}
