use super::{sign0, Reduction};
use crate::error::{ensure, Result};
use crate::render::{ImagePlane, SoftMask};

/// Masked L1 photometric loss `‖M ⊙ (I - I_r)‖₁`.
pub fn photometric_loss(input: &ImagePlane, rendered: &ImagePlane, mask: &SoftMask, reduction: Reduction) -> Result<f64> {
    photometric_loss_grad(input, rendered, mask, reduction).map(|(v, _)| v)
}

/// Gradients of the photometric loss.
#[derive(Debug, Clone)]
pub struct PhotometricGrad {
    /// With respect to the rendered image.
    pub rendered: Vec<f64>,
    pub mask: Vec<f64>,
}

pub fn photometric_loss_grad(
    input: &ImagePlane,
    rendered: &ImagePlane,
    mask: &SoftMask,
    reduction: Reduction,
) -> Result<(f64, PhotometricGrad)> {
    ensure(input.same_shape(rendered) && mask.matches_image(input), || {
        format!(
            "photometric loss shape mismatch: input {}x{}, rendered {}x{}, mask {}x{}",
            input.width, input.height, rendered.width, rendered.height, mask.width, mask.height
        )
    })?;
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / input.num_pixels().max(1) as f64,
    };
    let mut total = 0.0;
    let mut g_r = vec![0.0; rendered.rgb.len()];
    let mut g_m = vec![0.0; mask.values.len()];
    for (p, &m) in mask.values.iter().enumerate() {
        for c in 0..3 {
            let i = 3 * p + c;
            let d = input.rgb[i] - rendered.rgb[i];
            total += (m * d).abs();
            g_r[i] = -scale * m.abs() * sign0(d);
            g_m[p] += scale * d.abs() * sign0(m);
        }
    }
    Ok((total * scale, PhotometricGrad { rendered: g_r, mask: g_m }))
}

/// Soft dice loss `1 - (2·Σ A⊙B + ε) / (ΣA² + ΣB² + ε)`.
///
/// On binary masks the denominator equals `ΣA + ΣB`; squaring keeps
/// `dice(A, A) = 0` for soft masks too.
pub fn dice_loss(a: &SoftMask, b: &SoftMask, epsilon: f64) -> Result<f64> {
    let (num, den) = dice_parts(a, b, epsilon)?;
    Ok(1.0 - num / den)
}

fn dice_parts(a: &SoftMask, b: &SoftMask, epsilon: f64) -> Result<(f64, f64)> {
    ensure(a.same_shape(b), || {
        format!("dice shape mismatch: {}x{} vs {}x{}", a.width, a.height, b.width, b.height)
    })?;
    ensure(epsilon > 0.0, || format!("dice epsilon must be > 0, got {epsilon}"))?;
    let mut inter = 0.0;
    let mut sa = 0.0;
    let mut sb = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        inter += x * y;
        sa += x * x;
        sb += y * y;
    }
    Ok((2.0 * inter + epsilon, sa + sb + epsilon))
}

#[derive(Debug, Clone)]
pub struct DiceGrad {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn dice_loss_grad(a: &SoftMask, b: &SoftMask, epsilon: f64) -> Result<(f64, DiceGrad)> {
    let (num, den) = dice_parts(a, b, epsilon)?;
    // d/dA_i [1 - num/den] = -(2 B_i den - 2 A_i num) / den²
    let d2 = den * den;
    let ga = a.values.iter().zip(&b.values).map(|(x, y)| -(2.0 * y * den - 2.0 * x * num) / d2).collect();
    let gb = a.values.iter().zip(&b.values).map(|(x, y)| -(2.0 * x * den - 2.0 * y * num) / d2).collect();
    Ok((1.0 - num / den, DiceGrad { a: ga, b: gb }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn photometric_examples() {
        let i = ImagePlane::filled(1, 1, [1.0; 3]);
        let r = ImagePlane::filled(1, 1, [0.25; 3]);
        let m = SoftMask::filled(1, 1, 0.5);
        assert!((photometric_loss(&i, &r, &m, Reduction::Sum).unwrap() - 1.125).abs() < 1e-15);
        assert_eq!(photometric_loss(&i, &i, &m, Reduction::Sum).unwrap(), 0.0);
        assert_eq!(photometric_loss(&i, &r, &SoftMask::new(1, 1), Reduction::Mean).unwrap(), 0.0);
        let big_i = ImagePlane::filled(2, 2, [1.0; 3]);
        let big_r = ImagePlane::filled(2, 2, [0.25; 3]);
        let mean = photometric_loss(&big_i, &big_r, &SoftMask::filled(2, 2, 0.5), Reduction::Mean).unwrap();
        assert!((mean - 1.125).abs() < 1e-15);
        assert!(photometric_loss(&i, &big_r, &m, Reduction::Sum).is_err());
    }

    #[test]
    fn dice_examples() {
        let a = SoftMask::from_values(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let b = SoftMask::from_values(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(dice_loss(&a, &a, 0.3).unwrap(), 0.0);
        let z = SoftMask::new(2, 2);
        assert_eq!(dice_loss(&z, &z, 1.0).unwrap(), 0.0);
        let v = dice_loss(&a, &b, 1e-6).unwrap();
        assert!((v - (1.0 - 1e-6 / (4.0 + 1e-6))).abs() < 1e-15);
        assert!((v - 0.99999975).abs() < 1e-12);
        assert!(dice_loss(&a, &b, 0.0).is_err());
        let soft = SoftMask::from_values(2, 2, vec![0.1, 0.35, 0.9, 0.5]).unwrap();
        assert_eq!(dice_loss(&soft, &soft, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn nested_masks() {
        // 100-pixel bald mask containing a 64-pixel silhouette
        let bald = SoftMask::filled(10, 10, 1.0);
        let mut sil = SoftMask::new(10, 10);
        for y in 0..8 {
            for x in 0..8 {
                sil.values[y * 10 + x] = 1.0;
            }
        }
        let v = dice_loss(&bald, &sil, 1.0).unwrap();
        assert!((v - (1.0 - 129.0 / 165.0)).abs() < 1e-15);
        assert!((v - 0.2182).abs() < 1e-4);
    }
}
