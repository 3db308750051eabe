use nalgebra::Matrix3;

use super::Vec3;

fn skew(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix of an axis-angle vector.
pub fn rodrigues(w: &Vec3) -> Matrix3<f64> {
    let t2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if t2 < 1e-8 {
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        let t = t2.sqrt();
        (t.sin() / t, (1.0 - t.cos()) / t2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation matrix and its partial derivatives with respect to the three
/// axis-angle components.
pub fn rodrigues_with_jacobian(w: &Vec3) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let r = rodrigues(w);
    let t2 = w.norm_squared();
    let e = [Vec3::x(), Vec3::y(), Vec3::z()];
    let mut d = [Matrix3::zeros(); 3];
    if t2 < 1e-8 {
        // second-order expansion of dR/dw_i around the origin
        let kw = skew(w);
        for i in 0..3 {
            let ki = skew(&e[i]);
            d[i] = ki + (ki * kw + kw * ki) * 0.5;
        }
    } else {
        let kw = skew(w);
        let i_minus_r = Matrix3::identity() - r;
        for i in 0..3 {
            let v = w.cross(&(i_minus_r * e[i]));
            d[i] = (kw * w[i] + skew(&v)) * r / t2;
        }
    }
    (r, d)
}
