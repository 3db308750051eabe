//! Command arguments, doubling as the replayable `run.json` schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use fullhead_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "1";

/// Environment variables that may replace default output paths.
pub const ENV_OUT_DIR: &str = "FULLHEAD_OUT_DIR";
pub const ENV_ASSET: &str = "FULLHEAD_ASSET";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    pub seed: u64,
    pub threads: usize,
    pub command: Command,
    #[serde(default)]
    pub versions: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(seed: u64, threads: usize, command: Command) -> Self {
        let versions = BTreeMap::from([("fullhead".to_string(), env!("CARGO_PKG_VERSION").to_string())]);
        RunConfig { schema_version: SCHEMA_VERSION.into(), seed, threads, command, versions }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Format(format!("run config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "run config schema_version `{}` is not supported (expected `{SCHEMA_VERSION}`)",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a deterministic synthetic head asset.
    SynthModel(SynthModelArgs),
    /// Render an asset with a parameter file to image, masks, landmarks and mesh.
    Render(RenderArgs),
    /// Cut loose-to-tight crops around the landmarks of an image.
    Crops(CropsArgs),
    /// Fit parameters to the observations listed in a manifest.
    Fit(FitArgs),
    /// Compare a predicted mesh with a ground-truth mesh.
    Evaluate(EvaluateArgs),
    /// Fit shape and expression coefficients to a mesh in model topology.
    RefitMesh(RefitMeshArgs),
    /// Carry a manual edit of a neutral fit over to another fit.
    TransferDeform(TransferArgs),
    /// Print the dice loss between two mask images.
    Dice(DiceArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthModelArgs {
    /// Minimum vertex count; the smallest sphere subdivision reaching it is used.
    #[arg(long, default_value_t = 2562)]
    pub vertices: usize,
    /// Replace shape/expression bases by an orthonormal basis of their span.
    #[arg(long)]
    #[serde(default)]
    pub orthonormalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OcclusionArg {
    None,
    Hair,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderArgs {
    /// Asset file; defaults to $FULLHEAD_ASSET.
    #[arg(long)]
    pub asset: Option<PathBuf>,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    /// Defaults to the width.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value_t = 0.004)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = OcclusionArg::None)]
    pub occlusion: OcclusionArg,
    /// Output directory; defaults to $FULLHEAD_OUT_DIR or `.`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropsArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub landmarks: PathBuf,
    /// With a skin mask a manifest of the crops is written as well.
    #[arg(long)]
    pub skin_mask: Option<PathBuf>,
    #[arg(long)]
    pub bald_mask: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, default_value_t = 224)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub pose_index: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub asset: Option<PathBuf>,
    /// JSON file with fitting settings; unknown keys are rejected.
    #[arg(long)]
    pub fit_config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub render_size: Option<usize>,
    /// Fit one shape vector for all observations.
    #[arg(long)]
    #[serde(default)]
    pub shared_shape: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolArg {
    NowStyle,
    FullheadRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignArg {
    None,
    AllVertices,
    /// Vertices nearest to the model landmarks; needs an asset.
    Landmarks,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolArg::NowStyle)]
    pub protocol: ProtocolArg,
    #[arg(long, value_enum, default_value_t = AlignArg::AllVertices)]
    pub align: AlignArg,
    #[arg(long, default_value_t = 0)]
    pub icp: usize,
    /// Region name in the asset (fullhead-region protocol).
    #[arg(long)]
    pub region: Option<String>,
    /// Plain-text vertex index list, one 0-based index per line.
    #[arg(long)]
    pub region_file: Option<PathBuf>,
    #[arg(long)]
    pub asset: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefitMeshArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub asset: Option<PathBuf>,
    /// Ridge weight; larger values give a smoother, looser fit.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferArgs {
    #[arg(long)]
    pub refit_neutral: PathBuf,
    #[arg(long)]
    pub manual_neutral: PathBuf,
    #[arg(long)]
    pub refit_expr: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiceArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Smoothing term; defaults to 1e-6 of the pixel count.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// `explicit`, else the environment default, else `.`.
pub fn out_dir_or_default(explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().or_else(|| env_path(ENV_OUT_DIR)).unwrap_or_else(|| PathBuf::from("."))
}

pub fn asset_or_default(explicit: &Option<PathBuf>) -> Result<PathBuf> {
    explicit
        .clone()
        .or_else(|| env_path(ENV_ASSET))
        .ok_or_else(|| Error::Contract(format!("an asset is required: pass --asset or set {ENV_ASSET}")))
}

fn require_file(what: &str, p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{what}: {} does not exist or is not a file", p.display()),
        )))
    }
}

fn require_parent(what: &str, p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{what}: directory {} does not exist", d.display()),
        ))),
        _ => Ok(()),
    }
}

impl Command {
    /// Resolves environment defaults so the saved config replays exactly.
    pub fn resolve_defaults(&mut self) -> Result<()> {
        match self {
            Command::Render(a) => {
                a.asset = Some(asset_or_default(&a.asset)?);
                a.out_dir = Some(out_dir_or_default(&a.out_dir));
            }
            Command::Crops(a) => a.out_dir = Some(out_dir_or_default(&a.out_dir)),
            Command::Fit(a) => {
                a.asset = Some(asset_or_default(&a.asset)?);
                a.out_dir = Some(out_dir_or_default(&a.out_dir));
            }
            Command::Evaluate(a) => {
                if a.asset.is_none() && (a.region.is_some() || a.align == AlignArg::Landmarks) {
                    a.asset = Some(asset_or_default(&a.asset)?);
                }
                a.out_dir = Some(out_dir_or_default(&a.out_dir));
            }
            Command::RefitMesh(a) => a.asset = Some(asset_or_default(&a.asset)?),
            Command::SynthModel(_) | Command::TransferDeform(_) | Command::Dice(_) => {}
        }
        Ok(())
    }

    /// Checks every input path exists and every output location is usable
    /// before any work starts.
    pub fn validate_paths(&self) -> Result<()> {
        let asset = |a: &Option<PathBuf>| a.as_deref().map_or(Ok(()), |p| require_file("asset", p));
        match self {
            Command::SynthModel(a) => require_parent("out", &a.out),
            Command::Render(a) => {
                asset(&a.asset)?;
                require_file("params", &a.params)
            }
            Command::Crops(a) => {
                require_file("image", &a.image)?;
                require_file("landmarks", &a.landmarks)?;
                for (w, p) in [("skin_mask", &a.skin_mask), ("bald_mask", &a.bald_mask)] {
                    if let Some(p) = p {
                        require_file(w, p)?;
                    }
                }
                Ok(())
            }
            Command::Fit(a) => {
                asset(&a.asset)?;
                require_file("manifest", &a.manifest)?;
                a.fit_config.as_deref().map_or(Ok(()), |p| require_file("fit_config", p))
            }
            Command::Evaluate(a) => {
                require_file("pred", &a.pred)?;
                require_file("gt", &a.gt)?;
                asset(&a.asset)?;
                a.region_file.as_deref().map_or(Ok(()), |p| require_file("region_file", p))
            }
            Command::RefitMesh(a) => {
                require_file("mesh", &a.mesh)?;
                asset(&a.asset)?;
                require_parent("out", &a.out)
            }
            Command::TransferDeform(a) => {
                require_file("refit_neutral", &a.refit_neutral)?;
                require_file("manual_neutral", &a.manual_neutral)?;
                require_file("refit_expr", &a.refit_expr)?;
                require_parent("out", &a.out)
            }
            Command::Dice(a) => {
                require_file("a", &a.a)?;
                require_file("b", &a.b)
            }
        }
    }

    /// Where `run.json` goes: the output directory, or next to the output
    /// file, or the working directory.
    pub fn run_json_dir(&self) -> PathBuf {
        let parent = |p: &Path| match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        match self {
            Command::SynthModel(a) => parent(&a.out),
            Command::RefitMesh(a) => parent(&a.out),
            Command::TransferDeform(a) => parent(&a.out),
            Command::Render(a) => out_dir_or_default(&a.out_dir),
            Command::Crops(a) => out_dir_or_default(&a.out_dir),
            Command::Fit(a) => out_dir_or_default(&a.out_dir),
            Command::Evaluate(a) => out_dir_or_default(&a.out_dir),
            Command::Dice(_) => PathBuf::from("."),
        }
    }
}
