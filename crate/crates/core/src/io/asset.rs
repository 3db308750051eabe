//! `HMM1` asset container: 4-byte magic, little-endian u64 header length,
//! a JSON header, then the numeric tensors as little-endian f64 blocks in
//! header order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Basis, LandmarkEmbedding, ModelAsset, ModelDims, Vec3, NUM_JOINTS};

pub const ASSET_MAGIC: &[u8; 4] = b"HMM1";
pub const ASSET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkRecord {
    face: usize,
    bary: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    vertices: usize,
    dims: ModelDims,
    faces: Vec<[usize; 3]>,
    joints: [[f64; 3]; NUM_JOINTS],
    landmarks: Vec<LandmarkRecord>,
    regions: BTreeMap<String, Vec<usize>>,
    blocks: Vec<BlockInfo>,
}

const BLOCK_NAMES: [&str; 6] =
    ["template", "shape_basis", "expression_basis", "albedo_mean", "albedo_basis", "skinning_weights"];

fn push_block(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes `asset` to the container byte layout.
pub fn asset_to_bytes(asset: &ModelAsset) -> Result<Vec<u8>> {
    asset.validate()?;
    let v = asset.num_vertices();
    let dims = asset.dims();
    let shapes = [
        (v, 3),
        (3 * v, dims.shape),
        (3 * v, dims.expression),
        (v, 3),
        (3 * v, dims.albedo),
        (v, NUM_JOINTS),
    ];
    let header = Header {
        version: ASSET_VERSION,
        vertices: v,
        dims,
        faces: asset.faces.clone(),
        joints: asset.joints.map(|j| [j.x, j.y, j.z]),
        landmarks: asset.landmarks.iter().map(|l| LandmarkRecord { face: l.face, bary: l.bary }).collect(),
        regions: asset.regions.clone(),
        blocks: BLOCK_NAMES
            .iter()
            .zip(shapes)
            .map(|(n, (rows, cols))| BlockInfo { name: n.to_string(), rows, cols })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * (6 * v + 3 * v * (dims.shape + dims.expression + dims.albedo)));
    out.extend_from_slice(ASSET_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    push_block(&mut out, asset.template.iter().flat_map(|p| [p.x, p.y, p.z]));
    push_block(&mut out, asset.shape_basis.data().iter().copied());
    push_block(&mut out, asset.expression_basis.data().iter().copied());
    push_block(&mut out, asset.albedo_mean.iter().flatten().copied());
    push_block(&mut out, asset.albedo_basis.data().iter().copied());
    push_block(&mut out, asset.skinning_weights.iter().flatten().copied());
    Ok(out)
}

/// Parses the container layout written by [`asset_to_bytes`].
pub fn asset_from_bytes(bytes: &[u8]) -> Result<ModelAsset> {
    if bytes.len() < 12 || &bytes[..4] != ASSET_MAGIC {
        return Err(Error::format("not an HMM1 asset (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(12..12usize.saturating_add(len)).ok_or_else(|| Error::format("asset header truncated"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| Error::format(format!("asset header: {e}")))?;
    if header.version != ASSET_VERSION {
        return Err(Error::format(format!(
            "asset version {} is not supported (expected {ASSET_VERSION})",
            header.version
        )));
    }
    let v = header.vertices;
    let d = header.dims;
    let expected = [(v, 3), (3 * v, d.shape), (3 * v, d.expression), (v, 3), (3 * v, d.albedo), (v, NUM_JOINTS)];
    if header.blocks.len() != BLOCK_NAMES.len() {
        return Err(Error::format(format!("asset has {} blocks, expected {}", header.blocks.len(), BLOCK_NAMES.len())));
    }
    for ((b, name), (rows, cols)) in header.blocks.iter().zip(BLOCK_NAMES).zip(expected) {
        if b.name != name || b.rows != rows || b.cols != cols {
            return Err(Error::format(format!(
                "block `{}` ({}x{}) does not match expected `{name}` ({rows}x{cols})",
                b.name, b.rows, b.cols
            )));
        }
    }
    let total: usize = expected.iter().map(|(r, c)| r * c).sum();
    let data = &bytes[12 + len..];
    if data.len() != 8 * total {
        return Err(Error::format(format!("asset data has {} bytes, expected {}", data.len(), 8 * total)));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

    let template = take(3 * v).chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    let shape_basis = Basis::new(3 * v, d.shape, take(3 * v * d.shape))?;
    let expression_basis = Basis::new(3 * v, d.expression, take(3 * v * d.expression))?;
    let albedo_mean = take(3 * v).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let albedo_basis = Basis::new(3 * v, d.albedo, take(3 * v * d.albedo))?;
    let skinning_weights = take(NUM_JOINTS * v).chunks_exact(NUM_JOINTS).map(|c| [c[0], c[1]]).collect();
    let asset = ModelAsset {
        template,
        faces: header.faces,
        shape_basis,
        expression_basis,
        albedo_mean,
        albedo_basis,
        joints: header.joints.map(Vec3::from),
        skinning_weights,
        landmarks: header.landmarks.into_iter().map(|l| LandmarkEmbedding { face: l.face, bary: l.bary }).collect(),
        regions: header.regions,
    };
    asset.validate().map_err(|e| Error::format(format!("asset fails validation: {e}")))?;
    Ok(asset)
}

pub fn save_asset(path: &Path, asset: &ModelAsset) -> Result<()> {
    std::fs::write(path, asset_to_bytes(asset)?)?;
    Ok(())
}

pub fn load_asset(path: &Path) -> Result<ModelAsset> {
    asset_from_bytes(&std::fs::read(path)?)
}
