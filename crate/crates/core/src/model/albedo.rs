use super::{HeadParams, ModelAsset};
use crate::error::{ensure, Result};

/// `albedo_mean + A·α` before clamping.
pub fn decode_albedo_unclamped(alpha: &[f64], model: &ModelAsset) -> Result<Vec<[f64; 3]>> {
    ensure(alpha.len() == model.albedo_basis.cols(), || {
        format!("albedo has {} coefficients, model expects {}", alpha.len(), model.albedo_basis.cols())
    })?;
    let mut flat: Vec<f64> = model.albedo_mean.iter().flatten().copied().collect();
    model.albedo_basis.accumulate(alpha, &mut flat);
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Per-vertex reflectance clamped to [0, 1].
pub fn decode_albedo(alpha: &[f64], model: &ModelAsset) -> Result<Vec<[f64; 3]>> {
    let mut a = decode_albedo_unclamped(alpha, model)?;
    for c in a.iter_mut().flatten() {
        *c = c.clamp(0.0, 1.0);
    }
    Ok(a)
}

impl HeadParams {
    pub fn albedo(&self, model: &ModelAsset) -> Result<Vec<[f64; 3]>> {
        decode_albedo(&self.alpha, model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synth_model, Basis};

    fn flat_model() -> ModelAsset {
        let mut m = synth_model(5, 162).unwrap();
        let v = m.num_vertices();
        m.albedo_mean = vec![[0.5; 3]; v];
        let mut b = Basis::zeros(3 * v, m.albedo_basis.cols());
        for c in 0..3 {
            b.set(c, 0, 0.1);
        }
        m.albedo_basis = b;
        m
    }

    #[test]
    fn zero_alpha_is_mean() {
        let m = synth_model(5, 162).unwrap();
        let a = decode_albedo(&vec![0.0; m.albedo_basis.cols()], &m).unwrap();
        assert_eq!(a, m.albedo_mean);
    }

    #[test]
    fn unit_coefficient_and_clamp() {
        let m = flat_model();
        let mut alpha = vec![0.0; m.albedo_basis.cols()];
        alpha[0] = 1.0;
        let a = decode_albedo(&alpha, &m).unwrap();
        for c in 0..3 {
            assert!((a[0][c] - 0.6).abs() < 1e-15);
        }
        alpha[0] = 12.0; // 0.5 + 1.2 = 1.7
        let a = decode_albedo(&alpha, &m).unwrap();
        assert_eq!(a[0], [1.0; 3]);
        assert!((decode_albedo_unclamped(&alpha, &m).unwrap()[0][0] - 1.7).abs() < 1e-12);
    }

    #[test]
    fn wrong_length_rejected() {
        let m = flat_model();
        assert!(decode_albedo(&[0.0], &m).is_err());
    }
}
