//! Weak-perspective camera, spherical-harmonic shading and the soft
//! differentiable rasterizer.

mod camera;
mod head;
mod normals;
mod planes;
mod raster;
mod sh;

pub use camera::{project, project_backward};
pub use head::{render_head, HeadRender, RenderGrad, RenderSettings};
pub use normals::{vertex_normals, VertexNormals};
pub use planes::{ImagePlane, SoftMask};
pub use raster::{hard_coverage, rasterize_soft, rasterize_soft_backward, RasterGrad, RasterSettings, RenderOut};
pub use sh::{irradiance, sh_basis, shade_sh, shade_sh_backward, shade_unclamped, ShadeGrad};
