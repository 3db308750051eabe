use std::fs;
use std::path::{Path, PathBuf};

use fullhead_core::eval::{evaluate_mesh, displacement_transfer, refit_model_to_mesh, Alignment, EvalOptions, Protocol};
use fullhead_core::fit::{
    crop_mask, fit, generate_crops, render_observation, FitConfig, Observation, ObservationGrid, Occlusion,
};
use fullhead_core::io::{
    load_asset, load_landmarks, load_manifest, load_obj, load_observation, load_params,
    load_png_mask, load_png_rgb, parse_index_list, save_asset, save_landmarks, save_manifest, save_obj, save_params,
    save_png_mask, save_png_rgb, ManifestRecord,
};
use fullhead_core::loss::dice_loss;
use fullhead_core::model::{decode_geometry, orthonormalize_geometry_bases, synth_model, ModelAsset};
use fullhead_core::render::RenderSettings;
use fullhead_core::{Error, Result};
use serde::Serialize;

use crate::config::*;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn asset_path(a: &Option<PathBuf>) -> Result<PathBuf> {
    asset_or_default(a)
}

/// Runs one command. Returns text for stdout.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    match &cfg.command {
        Command::SynthModel(a) => synth(a, cfg.seed),
        Command::Render(a) => render(a),
        Command::Crops(a) => crops(a),
        Command::Fit(a) => fit_cmd(a, cfg.seed),
        Command::Evaluate(a) => evaluate(a),
        Command::RefitMesh(a) => refit(a),
        Command::TransferDeform(a) => transfer(a),
        Command::Dice(a) => dice(a),
    }
}

fn synth(a: &SynthModelArgs, seed: u64) -> Result<String> {
    let mut model = synth_model(seed, a.vertices)?;
    if a.orthonormalize {
        orthonormalize_geometry_bases(&mut model)?;
    }
    save_asset(&a.out, &model)?;
    Ok(format!("wrote {} ({} vertices)", a.out.display(), model.num_vertices()))
}

fn render(a: &RenderArgs) -> Result<String> {
    let model = load_asset(&asset_path(&a.asset)?)?;
    let params = load_params(&a.params)?;
    let settings = RenderSettings::new(a.width, a.height.unwrap_or(a.width), a.sigma);
    let occlusion = match a.occlusion {
        OcclusionArg::None => Occlusion::None,
        OcclusionArg::Hair => Occlusion::Hair,
    };
    let obs = render_observation(&model, &params, &settings, occlusion)?;
    let dir = out_dir_or_default(&a.out_dir);
    ensure_dir(&dir)?;
    save_png_rgb(&dir.join("image.png"), &obs.image)?;
    save_png_mask(&dir.join("skin_mask.png"), &obs.skin_mask)?;
    let bald = obs.bald_skin_mask.as_ref().expect("synthetic observations carry a bald mask");
    save_png_mask(&dir.join("silhouette.png"), bald)?;
    save_landmarks(&dir.join("landmarks.csv"), &obs.landmarks)?;
    save_obj(&dir.join("mesh.obj"), &decode_geometry(&params, &model)?)?;
    let record = ManifestRecord {
        image: "image.png".into(),
        skin_mask: "skin_mask.png".into(),
        bald_mask: Some("silhouette.png".into()),
        landmarks_csv: "landmarks.csv".into(),
        pose_index: 1,
        crop_level: 1,
        subject: None,
    };
    save_manifest(&dir.join("manifest.json"), &[record])?;
    Ok(format!("rendered {}x{} into {}", settings.width, settings.height, dir.display()))
}

fn crops(a: &CropsArgs) -> Result<String> {
    let image = load_png_rgb(&a.image)?;
    let landmarks = load_landmarks(&a.landmarks)?;
    let skin = a.skin_mask.as_deref().map(load_png_mask).transpose()?;
    let bald = a.bald_mask.as_deref().map(load_png_mask).transpose()?;
    for m in skin.iter().chain(&bald) {
        if m.width != image.width || m.height != image.height {
            return Err(Error::Contract("masks must have the image size".into()));
        }
    }
    let crops = generate_crops(&image, &landmarks, a.levels, a.size)?;
    let dir = out_dir_or_default(&a.out_dir);
    ensure_dir(&dir)?;
    let mut records = Vec::new();
    for c in &crops {
        let k = c.level;
        save_png_rgb(&dir.join(format!("crop_{k}.png")), &c.image)?;
        save_landmarks(&dir.join(format!("crop_{k}_landmarks.csv")), &c.landmarks)?;
        if let Some(m) = &skin {
            save_png_mask(&dir.join(format!("crop_{k}_skin.png")), &crop_mask(m, &c.bbox, a.size))?;
        }
        if let Some(m) = &bald {
            save_png_mask(&dir.join(format!("crop_{k}_bald.png")), &crop_mask(m, &c.bbox, a.size))?;
        }
        records.push(ManifestRecord {
            image: format!("crop_{k}.png").into(),
            skin_mask: format!("crop_{k}_skin.png").into(),
            bald_mask: bald.as_ref().map(|_| format!("crop_{k}_bald.png").into()),
            landmarks_csv: format!("crop_{k}_landmarks.csv").into(),
            pose_index: a.pose_index,
            crop_level: k,
            subject: None,
        });
    }
    write_json(&dir.join("crops.json"), &crops.iter().map(|c| (&c.bbox, &c.affine)).collect::<Vec<_>>())?;
    if skin.is_some() {
        save_manifest(&dir.join("manifest.json"), &records)?;
    }
    Ok(format!("wrote {} crops into {}", crops.len(), dir.display()))
}

fn fit_cmd(a: &FitArgs, seed: u64) -> Result<String> {
    let model = load_asset(&asset_path(&a.asset)?)?;
    let records = load_manifest(&a.manifest)?;
    let mut config = match &a.fit_config {
        Some(p) => serde_json::from_str::<FitConfig>(&fs::read_to_string(p)?)
            .map_err(|e| Error::Format(format!("fit config: {e}")))?,
        None => FitConfig::default(),
    };
    config.seed = seed;
    if let Some(n) = a.iterations {
        config.iterations = n;
    }
    if a.render_size.is_some() {
        config.render_size = a.render_size;
    }
    let cells: Vec<Observation> = records.iter().map(load_observation).collect::<Result<_>>()?;
    let n_poses = records.iter().map(|r| r.pose_index).max().unwrap_or(1);
    let n_scales = records.iter().map(|r| r.crop_level).max().unwrap_or(1);
    let grid = ObservationGrid::new(n_poses, n_scales, cells, a.shared_shape)?;
    let report = fit(&grid, &model, &config, None)?;
    let dir = out_dir_or_default(&a.out_dir);
    ensure_dir(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    let mut csv = String::from("iteration,term,value\n");
    for (it, term, v) in report.trajectory_rows() {
        csv.push_str(&format!("{it},{term},{v}\n"));
    }
    fs::write(dir.join("trajectory.csv"), csv)?;
    for (i, c) in report.cells.iter().enumerate() {
        save_params(&dir.join(format!("params_p{}_s{}.json", c.pose_index, c.crop_level)), &report.cell_params(i))?;
    }
    write_json(&dir.join("timing.json"), &serde_json::json!({ "wall_clock_s": report.wall_clock_s }))?;
    Ok(format!(
        "fit {} observations: loss {} -> {} in {} iterations",
        report.cells.len(),
        report.initial_total(),
        report.final_total(),
        report.iterations_run
    ))
}

/// Vertex with the largest barycentric weight for each landmark.
fn landmark_vertices(model: &ModelAsset) -> Vec<usize> {
    model
        .landmarks
        .iter()
        .map(|l| {
            let k = (0..3).max_by(|&i, &j| l.bary[i].total_cmp(&l.bary[j])).unwrap_or(0);
            model.faces[l.face][k]
        })
        .collect()
}

fn evaluate(a: &EvaluateArgs) -> Result<String> {
    let pred = load_obj(&a.pred)?;
    let gt = load_obj(&a.gt)?;
    let model = a.asset.as_deref().map(load_asset).transpose()?;
    let alignment = match a.align {
        AlignArg::None => Alignment::None,
        AlignArg::AllVertices => Alignment::AllVertices,
        AlignArg::Landmarks => {
            let m = model.as_ref().ok_or_else(|| Error::Contract("--align landmarks needs --asset".into()))?;
            Alignment::Vertices(landmark_vertices(m))
        }
    };
    let region = match (&a.region, &a.region_file) {
        (Some(_), Some(_)) => return Err(Error::Contract("pass either --region or --region-file, not both".into())),
        (Some(name), None) => {
            let m = model.as_ref().ok_or_else(|| Error::Contract("--region needs --asset".into()))?;
            Some(m.region(name)?.to_vec())
        }
        (None, Some(p)) => Some(parse_index_list(&fs::read_to_string(p)?)?),
        (None, None) => None,
    };
    let protocol = match a.protocol {
        ProtocolArg::NowStyle => Protocol::NowStyle,
        ProtocolArg::FullheadRegion => Protocol::FullheadRegion,
    };
    let options = EvalOptions { alignment, icp_iterations: a.icp, region };
    let report = evaluate_mesh(&pred, &gt, protocol, &options)?;
    let dir = out_dir_or_default(&a.out_dir);
    ensure_dir(&dir)?;
    write_json(&dir.join("eval_report.json"), &report)?;
    fs::write(dir.join("curve.csv"), report.curve_csv())?;
    Ok(format!("median {} mean {} std {}", report.median, report.mean, report.std))
}

fn refit(a: &RefitMeshArgs) -> Result<String> {
    let model = load_asset(&asset_path(&a.asset)?)?;
    let mesh = load_obj(&a.mesh)?;
    let r = refit_model_to_mesh(&mesh, &model, a.lambda)?;
    save_params(&a.out, &r.params)?;
    let fitted = decode_geometry(&r.params, &model)?;
    save_obj(&a.out.with_extension("obj"), &fitted)?;
    Ok(format!("residual {} mm² after {} alternations", r.residual, r.alternations))
}

fn transfer(a: &TransferArgs) -> Result<String> {
    let out = displacement_transfer(&load_obj(&a.refit_neutral)?, &load_obj(&a.manual_neutral)?, &load_obj(&a.refit_expr)?)?;
    save_obj(&a.out, &out)?;
    Ok(format!("wrote {}", a.out.display()))
}

fn dice(a: &DiceArgs) -> Result<String> {
    let ma = load_png_mask(&a.a)?;
    let mb = load_png_mask(&a.b)?;
    let eps = a.epsilon.unwrap_or(1e-6 * ma.values.len() as f64);
    Ok(format!("{:?}", dice_loss(&ma, &mb, eps)?))
}

