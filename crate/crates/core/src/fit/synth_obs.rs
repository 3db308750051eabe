//! Synthetic observations rendered from known parameters.

use serde::{Deserialize, Serialize};

use super::Observation;
use crate::error::Result;
use crate::loss::Landmarks2D;
use crate::model::{HeadParams, ModelAsset, NUM_FACE_LANDMARKS};
use crate::render::{render_head, RenderSettings};

/// What covers the head in a synthetic observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occlusion {
    #[default]
    None,
    /// The "upper_head" region is painted as hair: excluded from the skin
    /// mask and its scalp landmarks are invisible. The bald mask still
    /// covers the whole head.
    Hair,
}

pub const HAIR_COLOR: [f64; 3] = [0.22, 0.14, 0.09];

/// Renders `params` into an observation with skin and bald masks and
/// projected landmarks.
pub fn render_observation(
    model: &ModelAsset,
    params: &HeadParams,
    settings: &RenderSettings,
    occlusion: Occlusion,
) -> Result<Observation> {
    let render = render_head(model, params, settings)?;
    let out = &render.out;
    let mut image = out.color.clone();
    let mut skin = out.silhouette.clone();
    let mut landmarks = Landmarks2D::new(render.landmarks().to_vec());
    if occlusion == Occlusion::Hair {
        let upper = model.region("upper_head")?;
        let mut is_upper = vec![false; model.num_vertices()];
        for &v in upper {
            is_upper[v] = true;
        }
        let faces = &render.geometry.mesh.faces;
        for (px, f) in out.face_index.iter().enumerate() {
            if let Some(f) = f {
                if faces[*f].iter().any(|&v| is_upper[v]) {
                    skin.values[px] = 0.0;
                    image.rgb[3 * px..3 * px + 3].copy_from_slice(&HAIR_COLOR);
                }
            }
        }
        for v in landmarks.visible.iter_mut().skip(NUM_FACE_LANDMARKS) {
            *v = false;
        }
    }
    Ok(Observation {
        image,
        skin_mask: skin,
        bald_skin_mask: Some(out.silhouette.clone()),
        landmarks,
        crop_level: 1,
        pose_index: 1,
        subject: String::from("synthetic"),
    })
}
