//! File formats: asset container, parameter JSON, OBJ meshes, PNG images
//! and masks, landmark CSV and observation manifests.

mod asset;
mod manifest;
mod obj;
mod params;
mod raster;

pub use asset::{asset_from_bytes, asset_to_bytes, load_asset, save_asset, ASSET_MAGIC, ASSET_VERSION};
pub use manifest::{load_manifest, load_observation, manifest_from_json, save_manifest, ManifestRecord};
pub use obj::{load_obj, mesh_from_obj, mesh_to_obj, save_obj};
pub use params::{load_params, params_from_json, params_to_json, save_params};
pub use raster::{
    landmarks_from_csv, landmarks_to_csv, load_landmarks, load_png_mask, load_png_rgb, save_landmarks, save_png_mask,
    save_png_rgb,
};

/// Reads a plain-text vertex index list: one 0-based index per line; blank
/// lines and `#` comments are skipped.
pub fn parse_index_list(text: &str) -> crate::Result<Vec<usize>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse().map_err(|_| crate::Error::Format(format!("index list line {}: `{t}` is not an index", n + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synth_model, HeadParams, TriMesh, Vec3};

    #[test]
    fn asset_round_trip_is_bitwise() {
        let a = synth_model(1, 162).unwrap();
        let bytes = asset_to_bytes(&a).unwrap();
        assert_eq!(&bytes[..4], b"HMM1");
        let b = asset_from_bytes(&bytes).unwrap();
        assert_eq!(a, b);
        assert_eq!(asset_to_bytes(&b).unwrap(), bytes);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let a = synth_model(1, 162).unwrap();
        let mut bytes = asset_to_bytes(&a).unwrap();
        assert!(matches!(asset_from_bytes(b"HMM2xxxxxxxxxxxx"), Err(crate::Error::Format(_))));
        bytes.pop();
        assert!(matches!(asset_from_bytes(&bytes), Err(crate::Error::Format(_))));
    }

    #[test]
    fn params_round_trip() {
        let dims = crate::model::ModelDims::default();
        let mut p = HeadParams::zeros(dims);
        p.beta[99] = 0.1 + 0.2;
        p.light[26] = -1e-300;
        let text = params_to_json(&p).unwrap();
        assert_eq!(params_from_json(&text).unwrap(), p);
        let short = text.replacen("\"beta\": [", "\"beta\": [1.0,", 1);
        let err = params_from_json(&short).unwrap_err().to_string();
        assert!(err.contains("params.beta"), "{err}");
    }

    #[test]
    fn obj_fixture() {
        let text = "# exported\nv 0 0 0\nv 1 0 0\nvt 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/1/1 3/1/1 4/1/1\nf -4 -2 -1\n";
        let m = mesh_from_obj(text).unwrap();
        assert_eq!(m.vertices[2], Vec3::new(1.0, 1.0, 0.0));
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3], [0, 2, 3]]);
        assert!(mesh_from_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }

    #[test]
    fn obj_round_trip() {
        let m = TriMesh::new(
            vec![Vec3::new(0.1, -2.5e-7, 3.0), Vec3::new(1.0 / 3.0, 2.0, 0.0), Vec3::new(0.0, 0.0, 1e10)],
            vec![[0, 1, 2]],
        );
        assert_eq!(mesh_from_obj(&mesh_to_obj(&m)).unwrap(), m);
    }

    #[test]
    fn landmark_csv_round_trip() {
        let mut l = crate::loss::Landmarks2D::new(vec![[0.25, -0.5], [1.0 / 3.0, 0.0]]);
        l.visible[1] = false;
        l.weights[0] = 2.0;
        let text = landmarks_to_csv(&l).unwrap();
        assert!(text.starts_with("index,x,y,weight,visible\n"));
        assert_eq!(landmarks_from_csv(&text).unwrap(), l);
        assert!(landmarks_from_csv("index,x,y,weight,visible\n1,0,0,1,1\n").is_err());
    }

    #[test]
    fn index_list() {
        assert_eq!(parse_index_list("3\n\n# c\n1 # x\n").unwrap(), vec![3, 1]);
        assert!(parse_index_list("a\n").is_err());
    }
}
