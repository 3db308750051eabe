use crate::error::{ensure, Result};
use crate::model::Vec3;

/// Weak-perspective projection `p = s·(X, Y) + (tx, ty)` into normalized
/// image coordinates (x right, y up, both in [-1, 1] across the image).
pub fn project(points: &[Vec3], cam: &[f64; 3]) -> Result<Vec<[f64; 2]>> {
    ensure(cam.iter().all(|c| c.is_finite()), || "camera parameters must be finite".into())?;
    ensure(cam[0] > 0.0, || format!("camera scale must be > 0, got {}", cam[0]))?;
    ensure(points.iter().all(|p| p.iter().all(|x| x.is_finite())), || {
        "cannot project non-finite points".into()
    })?;
    Ok(points.iter().map(|p| [cam[0] * p.x + cam[1], cam[0] * p.y + cam[2]]).collect())
}

/// Backward of [`project`]: accumulates into `grad_points` (x, y only) and
/// returns the camera gradient.
pub fn project_backward(
    points: &[Vec3],
    cam: &[f64; 3],
    grad_proj: &[[f64; 2]],
    grad_points: &mut [Vec3],
) -> [f64; 3] {
    let mut g = [0.0; 3];
    for ((p, gp), out) in points.iter().zip(grad_proj).zip(grad_points.iter_mut()) {
        out.x += cam[0] * gp[0];
        out.y += cam[0] * gp[1];
        g[0] += gp[0] * p.x + gp[1] * p.y;
        g[1] += gp[0];
        g[2] += gp[1];
    }
    g
}
