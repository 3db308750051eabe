//! Runs the `fullhead` binary through a small end-to-end pipeline.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fullhead_core::io::save_params;
use fullhead_core::model::{HeadParams, ModelDims};

pub fn fullhead(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fullhead"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FULLHEAD_OUT_DIR")
        .env_remove("FULLHEAD_ASSET")
        .output()
        .expect("binary runs")
}

pub fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = fullhead(cwd, args);
    assert!(
        out.status.success(),
        "fullhead {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// One pipeline step: where it runs, its arguments and the directory its
/// outputs (and `run.json`) land in.
pub struct Step {
    pub name: &'static str,
    pub cwd: PathBuf,
    pub args: Vec<String>,
    pub out_dir: PathBuf,
}

fn params(dims: ModelDims) -> HeadParams {
    let mut p = HeadParams::zeros(dims);
    for (k, b) in p.beta.iter_mut().take(10).enumerate() {
        *b = 0.4 * ((k as f64) * 1.7).sin();
    }
    p.psi[0] = 0.3;
    p.alpha[1] = -0.5;
    p.theta = [0.1, 0.25, 0.0, 0.05, 0.0, 0.0];
    p.cam = [1.0 / 130.0, 0.02, -0.03];
    for c in 0..3 {
        p.light[c] = 0.85;
        p.light[9 + c] = 0.15;
    }
    p
}

/// Steps of the pipeline rooted at `root`, every one single-threaded.
pub fn steps(root: &Path) -> Vec<Step> {
    let d = |s: &str| root.join(s);
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    for sub in ["asset", "render", "crops", "fit", "refit", "eval", "transfer", "dice"] {
        std::fs::create_dir_all(d(sub)).unwrap();
    }
    save_params(&d("params.json"), &params(ModelDims::default())).unwrap();
    let step = |name, out: &str, args: Vec<String>| {
        let mut full = vec!["--threads".to_string(), "1".into(), "--seed".into(), "7".into()];
        full.extend(args);
        Step { name, cwd: d(out), args: full, out_dir: d(out) }
    };
    let v = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let asset = s(d("asset/head.hmm"));
    vec![
        step("synth-model", "asset", v(&["synth-model", "--vertices", "162", "--out", &asset])),
        step(
            "render",
            "render",
            v(&["render", "--asset", &asset, "--params", &s(d("params.json")), "--width", "64", "--occlusion", "hair", "--out-dir", &s(d("render"))]),
        ),
        step(
            "crops",
            "crops",
            v(&[
                "crops", "--image", &s(d("render/image.png")), "--landmarks", &s(d("render/landmarks.csv")),
                "--skin-mask", &s(d("render/skin_mask.png")), "--bald-mask", &s(d("render/silhouette.png")),
                "--levels", "2", "--size", "32", "--out-dir", &s(d("crops")),
            ]),
        ),
        step(
            "fit",
            "fit",
            v(&["fit", "--manifest", &s(d("crops/manifest.json")), "--asset", &asset, "--iterations", "4", "--shared-shape", "--out-dir", &s(d("fit"))]),
        ),
        step(
            "refit-mesh",
            "refit",
            v(&["refit-mesh", "--mesh", &s(d("render/mesh.obj")), "--asset", &asset, "--lambda", "0.5", "--out", &s(d("refit/params.json"))]),
        ),
        step(
            "evaluate",
            "eval",
            v(&[
                "evaluate", "--pred", &s(d("refit/params.obj")), "--gt", &s(d("render/mesh.obj")), "--asset", &asset,
                "--region", "upper_head", "--icp", "3", "--out-dir", &s(d("eval")),
            ]),
        ),
        step(
            "transfer-deform",
            "transfer",
            v(&[
                "transfer-deform", "--refit-neutral", &s(d("refit/params.obj")), "--manual-neutral", &s(d("render/mesh.obj")),
                "--refit-expr", &s(d("refit/params.obj")), "--out", &s(d("transfer/out.obj")),
            ]),
        ),
        step("dice", "dice", v(&["dice", &s(d("render/skin_mask.png")), &s(d("render/silhouette.png"))])),
    ]
}

/// Runs every step; returns each step's stdout.
pub fn run_all(steps: &[Step]) -> Vec<String> {
    steps
        .iter()
        .map(|st| ok(&st.cwd, &st.args.iter().map(String::as_str).collect::<Vec<_>>()))
        .collect()
}

/// Files a step wrote, by name. Wall-clock timings are excluded.
pub fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if p.is_file() && name != "timing.json" {
            out.insert(name, std::fs::read(&p).unwrap());
        }
    }
    out
}
