use serde::{Deserialize, Serialize};

use super::camera::{project, project_backward};
use super::normals::{vertex_normals, VertexNormals};
use super::raster::{rasterize_soft, rasterize_soft_backward, RasterSettings, RenderOut};
use super::sh::{shade_sh_backward, shade_unclamped};
use crate::error::{ensure, Result};
use crate::exec::ExecMode;
use crate::model::{
    decode_albedo_unclamped, embed_landmarks, embed_landmarks_backward, GeometryForward, HeadParams,
    ModelAsset, Vec3,
};

/// Resolution and softness of a head render.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    /// Silhouette softness as a fraction of the image width.
    pub sigma: f64,
    #[serde(default)]
    pub exec: ExecMode,
}

impl RenderSettings {
    pub fn new(width: usize, height: usize, sigma: f64) -> Self {
        RenderSettings { width, height, sigma, exec: ExecMode::default() }
    }

    pub fn raster(&self) -> RasterSettings {
        let mut r = RasterSettings::new(self.width, self.height, self.sigma);
        r.exec = self.exec;
        r
    }
}

/// Upstream gradients on a head render. Missing entries are treated as zero.
#[derive(Debug, Clone, Default)]
pub struct RenderGrad {
    pub silhouette: Option<Vec<f64>>,
    pub color: Option<Vec<f64>>,
    pub landmarks: Option<Vec<[f64; 2]>>,
}

/// A rendered head together with the intermediate state its backward pass
/// needs.
#[derive(Debug, Clone)]
pub struct HeadRender {
    pub out: RenderOut,
    pub geometry: GeometryForward,
    normals: VertexNormals,
    albedo_raw: Vec<[f64; 3]>,
    albedo: Vec<[f64; 3]>,
    colors: Vec<[f64; 3]>,
    projected: Vec<[f64; 2]>,
    landmarks3d: Vec<Vec3>,
    settings: RenderSettings,
}

/// Decodes, shades, projects and rasterizes `params`; landmark projections
/// are always included in the output.
pub fn render_head(model: &ModelAsset, params: &HeadParams, settings: &RenderSettings) -> Result<HeadRender> {
    params.validate(model.dims())?;
    let geometry = GeometryForward::new(params, model)?;
    let mesh = &geometry.mesh;
    let normals = vertex_normals(mesh);
    ensure(normals.degenerate.is_empty(), || {
        format!("{} vertices have no incident area", normals.degenerate.len())
    })?;
    let albedo_raw = decode_albedo_unclamped(&params.alpha, model)?;
    let albedo: Vec<[f64; 3]> = albedo_raw.iter().map(|a| a.map(|v| v.clamp(0.0, 1.0))).collect();
    let colors: Vec<[f64; 3]> = shade_unclamped(&albedo, &normals.normals, &params.light)
        .into_iter()
        .map(|c| c.map(|v| v.clamp(0.0, 1.0)))
        .collect();
    let projected = project(&mesh.vertices, &params.cam)?;
    let landmarks3d = embed_landmarks(mesh, &model.landmarks)?;
    let mut out = rasterize_soft(mesh, &projected, &colors, &settings.raster())?;
    out.landmarks = Some(project(&landmarks3d, &params.cam)?);
    Ok(HeadRender {
        out,
        geometry,
        normals,
        albedo_raw,
        albedo,
        colors,
        projected,
        landmarks3d,
        settings: *settings,
    })
}

impl HeadRender {
    pub fn landmarks(&self) -> &[[f64; 2]] {
        self.out.landmarks.as_deref().unwrap_or(&[])
    }

    pub fn projected_vertices(&self) -> &[[f64; 2]] {
        &self.projected
    }

    /// Pulls render-space gradients back to every parameter group.
    pub fn backward(&self, model: &ModelAsset, params: &HeadParams, grad: &RenderGrad) -> Result<HeadParams> {
        let mesh = &self.geometry.mesh;
        let n = mesh.vertices.len();
        let mut out = HeadParams::zeros(params.dims());
        let mut g_vertices = vec![Vec3::zeros(); n];

        if let Some(gl) = &grad.landmarks {
            ensure(gl.len() == self.landmarks3d.len(), || "landmark gradient has wrong length".into())?;
            let mut g_l3 = vec![Vec3::zeros(); gl.len()];
            let gcam = project_backward(&self.landmarks3d, &params.cam, gl, &mut g_l3);
            add3(&mut out.cam, &gcam);
            embed_landmarks_backward(mesh, &model.landmarks, &g_l3, &mut g_vertices);
        }

        if grad.silhouette.is_some() || grad.color.is_some() {
            let rg = rasterize_soft_backward(
                mesh,
                &self.projected,
                &self.colors,
                &self.settings.raster(),
                grad.silhouette.as_deref(),
                grad.color.as_deref(),
            )?;
            let gcam = project_backward(&mesh.vertices, &params.cam, &rg.projected, &mut g_vertices);
            add3(&mut out.cam, &gcam);

            if rg.colors.iter().any(|c| c.iter().any(|v| *v != 0.0)) {
                let sg = shade_sh_backward(&self.albedo, &self.normals.normals, &params.light, &rg.colors);
                for (o, g) in out.light.iter_mut().zip(&sg.light) {
                    *o += g;
                }
                let gn = self.normals.backward(mesh, &sg.normals);
                for (a, b) in g_vertices.iter_mut().zip(&gn) {
                    *a += b;
                }
                let mut g_albedo = Vec::with_capacity(3 * n);
                for (raw, g) in self.albedo_raw.iter().zip(&sg.albedo) {
                    for c in 0..3 {
                        g_albedo.push(if (0.0..=1.0).contains(&raw[c]) { g[c] } else { 0.0 });
                    }
                }
                out.alpha = model.albedo_basis.transpose_apply(&g_albedo);
            }
        }

        let gg = self.geometry.backward(model, &g_vertices);
        out.beta = gg.beta;
        out.psi = gg.psi;
        out.theta = gg.theta;
        Ok(out)
    }
}

fn add3(a: &mut [f64; 3], b: &[f64; 3]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
