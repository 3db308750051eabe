use crate::error::{ensure, Result};
use crate::model::Vec3;

/// Unnormalized 9-term real spherical-harmonic basis with `H0 = 1`.
pub fn sh_basis(n: &Vec3) -> [f64; 9] {
    let (x, y, z) = (n.x, n.y, n.z);
    [1.0, y, z, x, x * y, y * z, 3.0 * z * z - 1.0, x * z, x * x - y * y]
}

fn sh_basis_grad(n: &Vec3) -> [Vec3; 9] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        Vec3::zeros(),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(y, x, 0.0),
        Vec3::new(0.0, z, y),
        Vec3::new(0.0, 0.0, 6.0 * z),
        Vec3::new(z, 0.0, x),
        Vec3::new(2.0 * x, -2.0 * y, 0.0),
    ]
}

/// Per-channel irradiance `Σ_k light[3k + c]·H_k(n)`.
pub fn irradiance(n: &Vec3, light: &[f64; 27]) -> [f64; 3] {
    let h = sh_basis(n);
    let mut out = [0.0; 3];
    for (k, hk) in h.iter().enumerate() {
        for (c, o) in out.iter_mut().enumerate() {
            *o += light[3 * k + c] * hk;
        }
    }
    out
}

fn check_normals(normals: &[Vec3]) -> Result<()> {
    for (i, n) in normals.iter().enumerate() {
        ensure((n.norm() - 1.0).abs() <= 1e-6, || {
            format!("normal {i} has length {}, expected unit length", n.norm())
        })?;
    }
    Ok(())
}

/// Lambertian SH shading: `clamp(albedo ⊙ irradiance(n), 0, 1)`.
pub fn shade_sh(albedo: &[[f64; 3]], normals: &[Vec3], light: &[f64; 27]) -> Result<Vec<[f64; 3]>> {
    ensure(albedo.len() == normals.len(), || "albedo and normals differ in length".into())?;
    check_normals(normals)?;
    Ok(shade_unclamped(albedo, normals, light)
        .into_iter()
        .map(|c| c.map(|v| v.clamp(0.0, 1.0)))
        .collect())
}

pub fn shade_unclamped(albedo: &[[f64; 3]], normals: &[Vec3], light: &[f64; 27]) -> Vec<[f64; 3]> {
    albedo
        .iter()
        .zip(normals)
        .map(|(a, n)| {
            let e = irradiance(n, light);
            [a[0] * e[0], a[1] * e[1], a[2] * e[2]]
        })
        .collect()
}

/// Gradients of [`shade_sh`] given the upstream gradient on the clamped output.
pub struct ShadeGrad {
    pub albedo: Vec<[f64; 3]>,
    pub normals: Vec<Vec3>,
    pub light: [f64; 27],
}

pub fn shade_sh_backward(
    albedo: &[[f64; 3]],
    normals: &[Vec3],
    light: &[f64; 27],
    grad_out: &[[f64; 3]],
) -> ShadeGrad {
    let mut g_albedo = vec![[0.0; 3]; albedo.len()];
    let mut g_normals = vec![Vec3::zeros(); albedo.len()];
    let mut g_light = [0.0; 27];
    for i in 0..albedo.len() {
        let n = &normals[i];
        let h = sh_basis(n);
        let e = irradiance(n, light);
        let dh = sh_basis_grad(n);
        for c in 0..3 {
            let raw = albedo[i][c] * e[c];
            let g = grad_out[i][c];
            if g == 0.0 || !(0.0..=1.0).contains(&raw) {
                continue;
            }
            g_albedo[i][c] += g * e[c];
            let ga = g * albedo[i][c];
            for k in 0..9 {
                g_light[3 * k + c] += ga * h[k];
                g_normals[i] += ga * light[3 * k + c] * dh[k];
            }
        }
    }
    ShadeGrad { albedo: g_albedo, normals: g_normals, light: g_light }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc(v: f64) -> [f64; 27] {
        let mut l = [0.0; 27];
        l[..3].copy_from_slice(&[v; 3]);
        l
    }

    #[test]
    fn dc_light_returns_albedo() {
        let a = [[0.2, 0.5, 0.9]];
        let n = [Vec3::new(0.6, 0.0, 0.8)];
        assert_eq!(shade_sh(&a, &n, &dc(1.0)).unwrap(), a.to_vec());
    }

    #[test]
    fn zero_light_is_black() {
        let out = shade_sh(&[[0.7; 3]], &[Vec3::z()], &[0.0; 27]).unwrap();
        assert_eq!(out[0], [0.0; 3]);
    }

    #[test]
    fn first_order_term_along_y() {
        let mut l = [0.0; 27];
        for c in 0..3 {
            l[3 + c] = 1.0;
        }
        let out = shade_sh(&[[1.0; 3]], &[Vec3::y()], &l).unwrap();
        assert_eq!(out[0], [1.0; 3]);
    }

    #[test]
    fn non_unit_normal_rejected() {
        assert!(shade_sh(&[[1.0; 3]], &[Vec3::new(0.0, 0.0, 1.01)], &dc(1.0)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let albedo = [[0.4, 0.6, 0.3], [0.8, 0.2, 0.5]];
        let normals = [Vec3::new(0.3, 0.4, 0.866).normalize(), Vec3::new(-0.5, 0.1, 0.7).normalize()];
        let mut light = [0.0; 27];
        for (i, l) in light.iter_mut().enumerate() {
            *l = 0.05 * ((i as f64) * 0.7).sin();
        }
        light[0] = 0.7;
        light[1] = 0.8;
        light[2] = 0.6;
        let gout = [[0.3, -0.2, 0.5], [1.0, 0.4, -0.7]];
        let f = |a: &[[f64; 3]], n: &[Vec3], l: &[f64; 27]| -> f64 {
            shade_unclamped(a, n, l)
                .iter()
                .zip(&gout)
                .map(|(o, g)| o[0] * g[0] + o[1] * g[1] + o[2] * g[2])
                .sum()
        };
        let g = shade_sh_backward(&albedo, &normals, &light, &gout);
        let h = 1e-6;
        for k in [0, 4, 13, 26] {
            let mut lp = light;
            lp[k] += h;
            let mut lm = light;
            lm[k] -= h;
            let fd = (f(&albedo, &normals, &lp) - f(&albedo, &normals, &lm)) / (2.0 * h);
            assert!((fd - g.light[k]).abs() < 1e-8);
        }
        for c in 0..3 {
            let mut np = normals;
            np[1][c] += h;
            let mut nm = normals;
            nm[1][c] -= h;
            let fd = (f(&albedo, &np, &light) - f(&albedo, &nm, &light)) / (2.0 * h);
            assert!((fd - g.normals[1][c]).abs() < 1e-8);
        }
    }
}
