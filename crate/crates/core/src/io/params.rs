//! Parameter vectors as JSON with explicit dimensions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HeadParams, ModelDims};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    dims: ModelDims,
    beta: Vec<f64>,
    psi: Vec<f64>,
    theta: [f64; 6],
    alpha: Vec<f64>,
    cam: [f64; 3],
    light: Vec<f64>,
}

pub fn params_to_json(p: &HeadParams) -> Result<String> {
    let file = ParamsFile {
        dims: p.dims(),
        beta: p.beta.clone(),
        psi: p.psi.clone(),
        theta: p.theta,
        alpha: p.alpha.clone(),
        cam: p.cam,
        light: p.light.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn params_from_json(text: &str) -> Result<HeadParams> {
    let f: ParamsFile = serde_json::from_str(text).map_err(|e| Error::format(format!("params: {e}")))?;
    for (field, len, want) in [
        ("beta", f.beta.len(), f.dims.shape),
        ("psi", f.psi.len(), f.dims.expression),
        ("alpha", f.alpha.len(), f.dims.albedo),
        ("light", f.light.len(), 27),
    ] {
        if len != want {
            return Err(Error::format(format!("params.{field}: expected {want} values, got {len}")));
        }
    }
    let light: [f64; 27] = f.light.try_into().expect("length checked");
    Ok(HeadParams { beta: f.beta, psi: f.psi, theta: f.theta, alpha: f.alpha, cam: f.cam, light })
}

pub fn save_params(path: &Path, p: &HeadParams) -> Result<()> {
    std::fs::write(path, params_to_json(p)?)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<HeadParams> {
    params_from_json(&std::fs::read_to_string(path)?)
}
