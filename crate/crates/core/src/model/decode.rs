use nalgebra::Matrix3;

use super::rotation::rodrigues_with_jacobian;
use super::{HeadParams, ModelAsset, TriMesh, Vec3, NUM_JOINTS};
use crate::error::Result;

/// Decodes parameters into a posed mesh.
///
/// Rest shape is `template + S·β + E·ψ`; posing is linear blend skinning
/// with the jaw transform chained after the global one.
pub fn decode_geometry(params: &HeadParams, model: &ModelAsset) -> Result<TriMesh> {
    Ok(GeometryForward::new(params, model)?.mesh)
}

/// Forward state of the decoder, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GeometryForward {
    pub mesh: TriMesh,
    rest: Vec<Vec3>,
    local_rot: [Matrix3<f64>; NUM_JOINTS],
    local_drot: [[Matrix3<f64>; 3]; NUM_JOINTS],
    world_rot: [Matrix3<f64>; NUM_JOINTS],
}

/// Decoder gradients for the geometry-driving groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryGrad {
    pub beta: Vec<f64>,
    pub psi: Vec<f64>,
    pub theta: [f64; 6],
}

impl GeometryForward {
    pub fn new(params: &HeadParams, model: &ModelAsset) -> Result<Self> {
        let dims = model.dims();
        if params.beta.len() != dims.shape || params.psi.len() != dims.expression {
            return Err(crate::Error::contract(format!(
                "parameter dims (shape {}, expression {}) do not match model (shape {}, expression {})",
                params.beta.len(),
                params.psi.len(),
                dims.shape,
                dims.expression
            )));
        }
        let n = model.num_vertices();
        let mut offsets = vec![0.0; 3 * n];
        model.shape_basis.accumulate(&params.beta, &mut offsets);
        model.expression_basis.accumulate(&params.psi, &mut offsets);
        let rest: Vec<Vec3> = model
            .template
            .iter()
            .zip(offsets.chunks_exact(3))
            .map(|(t, o)| t + Vec3::new(o[0], o[1], o[2]))
            .collect();

        let mut local_rot = [Matrix3::identity(); NUM_JOINTS];
        let mut local_drot = [[Matrix3::zeros(); 3]; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            let w = Vec3::new(params.theta[3 * j], params.theta[3 * j + 1], params.theta[3 * j + 2]);
            let (r, d) = rodrigues_with_jacobian(&w);
            local_rot[j] = r;
            local_drot[j] = d;
        }
        let (world_rot, world_t) = chain(&local_rot, &model.joints);

        let vertices = rest
            .iter()
            .zip(&model.skinning_weights)
            .map(|(v, w)| {
                // v + Σ w_j ((R_j - I) v + t_j): exact at identity pose
                let mut out = *v;
                for j in 0..NUM_JOINTS {
                    if w[j] != 0.0 {
                        out += w[j] * (world_rot[j] * v - v + world_t[j]);
                    }
                }
                out
            })
            .collect();
        Ok(GeometryForward {
            mesh: TriMesh::new(vertices, model.faces.clone()),
            rest,
            local_rot,
            local_drot,
            world_rot,
        })
    }

    pub fn rest_vertices(&self) -> &[Vec3] {
        &self.rest
    }

    /// Pulls a gradient on posed vertices back to (β, ψ, θ).
    pub fn backward(&self, model: &ModelAsset, grad_vertices: &[Vec3]) -> GeometryGrad {
        let mut g_rot = [Matrix3::zeros(); NUM_JOINTS];
        let mut g_t = [Vec3::zeros(); NUM_JOINTS];
        let mut g_rest = vec![0.0; 3 * self.rest.len()];
        for (i, g) in grad_vertices.iter().enumerate() {
            if g.iter().all(|x| *x == 0.0) {
                continue;
            }
            let w = model.skinning_weights[i];
            let v = self.rest[i];
            let mut blended = Matrix3::identity();
            for j in 0..NUM_JOINTS {
                if w[j] != 0.0 {
                    g_rot[j] += w[j] * g * v.transpose();
                    g_t[j] += w[j] * g;
                    blended += w[j] * (self.world_rot[j] - Matrix3::identity());
                }
            }
            let gr = blended.transpose() * g;
            g_rest[3 * i..3 * i + 3].copy_from_slice(gr.as_slice());
        }

        // world: R0 = L0, t0 = j0 - L0 j0; R1 = L0 L1, t1 = L0 (j1 - L1 j1) + t0
        let [l0, l1] = self.local_rot;
        let [j0, j1] = model.joints;
        let arm = j1 - l1 * j1;
        let g_l0 = g_rot[0] + g_rot[1] * l1.transpose() + g_t[1] * arm.transpose()
            - (g_t[0] + g_t[1]) * j0.transpose();
        let g_l1 = l0.transpose() * g_rot[1] - l0.transpose() * g_t[1] * j1.transpose();

        let mut theta = [0.0; 6];
        for (j, g_l) in [g_l0, g_l1].iter().enumerate() {
            for k in 0..3 {
                theta[3 * j + k] = g_l.component_mul(&self.local_drot[j][k]).sum();
            }
        }
        GeometryGrad {
            beta: model.shape_basis.transpose_apply(&g_rest),
            psi: model.expression_basis.transpose_apply(&g_rest),
            theta,
        }
    }
}

fn chain(
    local: &[Matrix3<f64>; NUM_JOINTS],
    joints: &[Vec3; NUM_JOINTS],
) -> ([Matrix3<f64>; NUM_JOINTS], [Vec3; NUM_JOINTS]) {
    let r0 = local[0];
    let t0 = joints[0] - r0 * joints[0];
    let r1 = r0 * local[1];
    let t1 = r0 * (joints[1] - local[1] * joints[1]) + t0;
    ([r0, r1], [t0, t1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rodrigues, synth_model};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_params_give_template_exactly() {
        let m = synth_model(3, 162).unwrap();
        let p = HeadParams::zeros(m.dims());
        let mesh = decode_geometry(&p, &m).unwrap();
        assert_eq!(mesh.vertices, m.template);
    }

    #[test]
    fn first_shape_component_is_added() {
        let m = synth_model(3, 162).unwrap();
        let mut p = HeadParams::zeros(m.dims());
        p.beta[0] = 1.0;
        let mesh = decode_geometry(&p, &m).unwrap();
        for (i, v) in mesh.vertices.iter().enumerate() {
            for c in 0..3 {
                let want = m.template[i][c] + m.shape_basis.get(3 * i + c, 0);
                assert!((v[c] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn global_quarter_turn_rotates_about_root() {
        let m = synth_model(1, 642).unwrap();
        let mut p = HeadParams::zeros(m.dims());
        p.theta[2] = FRAC_PI_2;
        let mesh = decode_geometry(&p, &m).unwrap();
        // hand-built R_z(pi/2)
        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let root = m.joints[0];
        for (v, rest) in mesh.vertices.iter().zip(&m.template) {
            let want = rz * (rest - root) + root;
            assert!((v - want).norm() < 1e-9);
        }
        assert!((rodrigues(&Vec3::new(0.0, 0.0, FRAC_PI_2)) - rz).norm() < 1e-15);
    }

    #[test]
    fn identity_rotations_leave_rest_shape() {
        let m = synth_model(2, 162).unwrap();
        let mut p = HeadParams::zeros(m.dims());
        p.beta[1] = 0.7;
        p.psi[0] = -1.2;
        let fwd = GeometryForward::new(&p, &m).unwrap();
        for (a, b) in fwd.mesh.vertices.iter().zip(fwd.rest_vertices()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = synth_model(2, 162).unwrap();
        let mut p = HeadParams::zeros(m.dims());
        p.beta.pop();
        assert!(decode_geometry(&p, &m).is_err());
    }
}
