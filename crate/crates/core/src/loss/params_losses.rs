use crate::error::Result;
use crate::model::{HeadParams, ParamGroup};

/// `Σ_groups ‖p_in - p_out‖²`.
pub fn encoder_loss(p_in: &HeadParams, p_out: &HeadParams) -> Result<f64> {
    encoder_loss_grad(p_in, p_out).map(|(v, _)| v)
}

/// Encoder loss and its gradient w.r.t. `p_in` (the gradient w.r.t. `p_out`
/// is its negation).
pub fn encoder_loss_grad(p_in: &HeadParams, p_out: &HeadParams) -> Result<(f64, HeadParams)> {
    p_out.check_dims(p_in.dims())?;
    let mut grad = HeadParams::zeros(p_in.dims());
    let mut total = 0.0;
    for g in ParamGroup::ALL {
        let mut group = 0.0;
        for ((gi, a), b) in grad.group_mut(g).iter_mut().zip(p_in.group(g)).zip(p_out.group(g)) {
            let d = a - b;
            group += d * d;
            *gi = 2.0 * d;
        }
        total += group;
    }
    Ok((total, grad))
}

/// `‖β‖² + ‖ψ‖² + ‖α‖²`; pose, camera and light are not penalized.
pub fn regularization(p: &HeadParams) -> f64 {
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    sq(&p.beta) + sq(&p.psi) + sq(&p.alpha)
}

pub fn regularization_grad(p: &HeadParams) -> (f64, HeadParams) {
    let mut g = HeadParams::zeros(p.dims());
    for (gi, x) in g.beta.iter_mut().zip(&p.beta) {
        *gi = 2.0 * x;
    }
    for (gi, x) in g.psi.iter_mut().zip(&p.psi) {
        *gi = 2.0 * x;
    }
    for (gi, x) in g.alpha.iter_mut().zip(&p.alpha) {
        *gi = 2.0 * x;
    }
    (regularization(p), g)
}
