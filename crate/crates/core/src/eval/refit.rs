//! Refitting the linear model to an arbitrary same-topology mesh and
//! transferring per-vertex edits between fittings.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{umeyama_align, RigidTransform};
use crate::error::{ensure, Error, Result};
use crate::model::{HeadParams, ModelAsset, TriMesh, Vec3};

const MAX_ALTERNATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refit {
    /// Shape and expression coefficients; pose, albedo and lighting are zero
    /// and the camera is `(1, 0, 0)`.
    pub params: HeadParams,
    /// Maps the target mesh into the model frame.
    pub alignment: RigidTransform,
    /// `‖decode(β, ψ, 0) − aligned target‖²` in mm².
    pub residual: f64,
    pub lambda: f64,
    pub alternations: usize,
}

fn check_topology(model: &ModelAsset, mesh: &TriMesh, what: &str) -> Result<()> {
    ensure(mesh.vertices.len() == model.num_vertices() && mesh.faces == model.faces, || {
        format!(
            "{what} mesh ({} vertices, {} faces) does not share the model topology ({} vertices, {} faces)",
            mesh.vertices.len(),
            mesh.faces.len(),
            model.num_vertices(),
            model.faces.len()
        )
    })
}

/// Ridge-regularized least-squares fit of (β, ψ) to `target` at zero pose.
///
/// The target is rigidly aligned to the current fit with [`umeyama_align`],
/// then the coefficients are re-solved, until the coefficients stop changing.
pub fn refit_model_to_mesh(target: &TriMesh, model: &ModelAsset, lambda: f64) -> Result<Refit> {
    check_topology(model, target, "target")?;
    ensure(lambda >= 0.0 && lambda.is_finite(), || format!("lambda must be finite and >= 0, got {lambda}"))?;
    let n = model.num_vertices();
    let (ns, ne) = (model.shape_basis.cols(), model.expression_basis.cols());
    let k = ns + ne;
    let rows = 3 * n;
    let mut b = DMatrix::<f64>::zeros(rows, k);
    for r in 0..rows {
        for c in 0..ns {
            b[(r, c)] = model.shape_basis.get(r, c);
        }
        for c in 0..ne {
            b[(r, ns + c)] = model.expression_basis.get(r, c);
        }
    }
    let mut normal = b.transpose() * &b;
    let trace = normal.trace();
    for d in 0..k {
        normal[(d, d)] += lambda;
    }
    let chol = normal.clone().cholesky().filter(|ch| {
        let l = ch.l_dirty();
        let min = (0..k).map(|d| l[(d, d)] * l[(d, d)]).fold(f64::INFINITY, f64::min);
        min > 1e-12 * trace.max(f64::MIN_POSITIVE) / k.max(1) as f64
    });
    let chol = chol.ok_or_else(|| {
        Error::Degenerate(format!(
            "normal equations are singular at lambda = {lambda}; the shape/expression basis is rank deficient, use lambda > 0"
        ))
    })?;

    let template = &model.template;
    let mut fitted: Vec<Vec3> = template.clone();
    let mut coeffs = DVector::<f64>::zeros(k);
    let mut alignment = RigidTransform::identity();
    let mut residual = 0.0;
    let mut alternations = 0;
    for it in 0..MAX_ALTERNATIONS {
        alternations = it + 1;
        alignment = umeyama_align(&target.vertices, &fitted, false)?;
        let aligned = alignment.apply_all(&target.vertices);
        let mut rhs = DVector::<f64>::zeros(rows);
        for i in 0..n {
            for c in 0..3 {
                rhs[3 * i + c] = aligned[i][c] - template[i][c];
            }
        }
        let next = chol.solve(&(b.transpose() * &rhs));
        let offsets = &b * &next;
        fitted = (0..n)
            .map(|i| template[i] + Vec3::new(offsets[3 * i], offsets[3 * i + 1], offsets[3 * i + 2]))
            .collect();
        residual = fitted.iter().zip(&aligned).map(|(f, a)| (f - a).norm_squared()).sum();
        let change = (&next - &coeffs).amax();
        coeffs = next;
        if change <= 1e-14 * (1.0 + coeffs.amax()) {
            break;
        }
    }
    let mut params = HeadParams::zeros(model.dims());
    params.beta.copy_from_slice(&coeffs.as_slice()[..ns]);
    params.psi.copy_from_slice(&coeffs.as_slice()[ns..]);
    params.cam[0] = 1.0;
    Ok(Refit { params, alignment, residual, lambda, alternations })
}

/// Carries the edit `manual_neutral − refit_neutral` onto `refit_expr`,
/// rotated by the rigid alignment from `refit_neutral` to `refit_expr`.
pub fn displacement_transfer(refit_neutral: &TriMesh, manual_neutral: &TriMesh, refit_expr: &TriMesh) -> Result<TriMesh> {
    ensure(refit_neutral.same_topology(manual_neutral) && refit_neutral.same_topology(refit_expr), || {
        "displacement transfer needs three meshes with identical topology".into()
    })?;
    let t = umeyama_align(&refit_neutral.vertices, &refit_expr.vertices, false)?;
    let r = t.matrix();
    let vertices = refit_expr
        .vertices
        .iter()
        .zip(manual_neutral.vertices.iter().zip(&refit_neutral.vertices))
        .map(|(e, (m, n))| e + r * (m - n))
        .collect();
    Ok(TriMesh::new(vertices, refit_expr.faces.clone()))
}
