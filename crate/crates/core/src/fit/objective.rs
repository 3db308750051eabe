//! The fitting objective: per-cell render jobs, the scale-consistency
//! shuffle, dice and shape-consistency terms, encoder self-consistency and
//! regularization.

use serde::{Deserialize, Serialize};

use super::crops::{crop_image, crop_mask, CropBox};
use super::{FitConfig, Observation, ObservationGrid};
use crate::error::{ensure, Error, Result};
use crate::loss::{
    dice_loss, dice_loss_grad, identity_loss_grad, landmark_loss_grad, photometric_loss_grad, DownsampleEmbedder,
    EmbeddingProvider, EmbeddingVector, Landmarks2D,
};
use crate::model::{HeadParams, ModelAsset, ParamGroup};
use crate::render::{render_head, HeadRender, ImagePlane, RenderGrad, RenderOut, RenderSettings, SoftMask};

/// Weighted loss breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub landmark: f64,
    pub photometric: f64,
    pub identity: f64,
    pub scale: f64,
    pub dice: f64,
    pub shape_consistency: f64,
    pub encoder: f64,
    pub regularization: f64,
}

impl LossTerms {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("landmark", self.landmark),
            ("photometric", self.photometric),
            ("identity", self.identity),
            ("scale", self.scale),
            ("dice", self.dice),
            ("shape_consistency", self.shape_consistency),
            ("encoder", self.encoder),
            ("regularization", self.regularization),
        ]
    }

    pub fn total(&self) -> f64 {
        self.named().iter().map(|(_, v)| v).sum()
    }

    fn slot(&mut self, b: Bucket) -> &mut f64 {
        match b {
            Bucket::Landmark => &mut self.landmark,
            Bucket::Photometric => &mut self.photometric,
            Bucket::Identity => &mut self.identity,
            Bucket::Dice => &mut self.dice,
            Bucket::Scale => &mut self.scale,
        }
    }
}

/// Optimization variables: one parameter set per cell (plus one hair-free
/// set per cell in dual mode, stored after the first `n` sets) and an
/// optional shared shape vector that overrides every set's `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub sets: Vec<HeadParams>,
    pub shared_beta: Option<Vec<f64>>,
}

impl FitState {
    pub fn beta(&self, set: usize) -> &[f64] {
        self.shared_beta.as_deref().unwrap_or(&self.sets[set].beta)
    }

    /// Parameters of `set` rendered with the shape of `beta_from`.
    pub fn params(&self, set: usize, beta_from: usize) -> HeadParams {
        let mut p = self.sets[set].clone();
        p.beta = self.beta(beta_from).to_vec();
        p
    }

    pub fn zeros_like(&self) -> FitState {
        FitState {
            sets: self.sets.iter().map(|p| HeadParams::zeros(p.dims())).collect(),
            shared_beta: self.shared_beta.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    /// Adds a gradient taken w.r.t. `params(set, beta_from)`.
    fn add_grad(&mut self, set: usize, beta_from: usize, g: &HeadParams) {
        for grp in ParamGroup::ALL {
            if grp == ParamGroup::Shape {
                continue;
            }
            for (x, y) in self.sets[set].group_mut(grp).iter_mut().zip(g.group(grp)) {
                *x += y;
            }
        }
        let dst = match &mut self.shared_beta {
            Some(b) => b,
            None => &mut self.sets[beta_from].beta,
        };
        for (x, y) in dst.iter_mut().zip(&g.beta) {
            *x += y;
        }
    }

    /// Flat view: shared shape first, then every set in group order with
    /// its shape omitted when shared.
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(b) = &self.shared_beta {
            out.extend_from_slice(b);
        }
        for p in &self.sets {
            for g in ParamGroup::ALL {
                if g == ParamGroup::Shape && self.shared_beta.is_some() {
                    continue;
                }
                out.extend_from_slice(p.group(g));
            }
        }
        out
    }

    /// Inverse of [`FitState::pack`], writing into `self`.
    pub fn unpack(&mut self, flat: &[f64]) {
        let mut off = 0;
        let shared = self.shared_beta.is_some();
        if let Some(b) = &mut self.shared_beta {
            let n = b.len();
            b.copy_from_slice(&flat[..n]);
            off = n;
        }
        for p in &mut self.sets {
            for g in ParamGroup::ALL {
                if g == ParamGroup::Shape && shared {
                    continue;
                }
                let dst = p.group_mut(g);
                let n = dst.len();
                dst.copy_from_slice(&flat[off..off + n]);
                off += n;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.sets.iter().all(|p| p.is_finite()) && self.shared_beta.iter().flatten().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    Landmark,
    Photometric,
    Identity,
    Dice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bucket {
    Landmark,
    Photometric,
    Identity,
    Dice,
    Scale,
}

impl Bucket {
    fn name(self) -> &'static str {
        match self {
            Bucket::Landmark => "landmark",
            Bucket::Photometric => "photometric",
            Bucket::Identity => "identity",
            Bucket::Dice => "dice",
            Bucket::Scale => "scale",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Part {
    bucket: Bucket,
    term: Term,
    weight: f64,
}

/// One render of `set` with the shape of `beta_from`, evaluated against
/// observation `obs`.
#[derive(Debug, Clone)]
struct Job {
    obs: usize,
    set: usize,
    beta_from: usize,
    parts: Vec<Part>,
}

struct JobOut {
    values: Vec<(Bucket, f64)>,
    grad: Option<HeadParams>,
}

/// The assembled objective over a grid.
pub struct Objective<'a> {
    model: &'a ModelAsset,
    cells: Vec<Observation>,
    config: FitConfig,
    shared: bool,
    dual: bool,
    embedder: Box<dyn EmbeddingProvider + 'a>,
    target_embeddings: Vec<EmbeddingVector>,
}

fn masked(image: &ImagePlane, mask: &SoftMask) -> ImagePlane {
    let mut out = image.clone();
    for (p, m) in mask.values.iter().enumerate() {
        for c in 0..3 {
            out.rgb[3 * p + c] *= m;
        }
    }
    out
}

fn resample_observation(obs: &Observation, size: usize) -> Result<Observation> {
    if obs.image.width == size && obs.image.height == size {
        return Ok(obs.clone());
    }
    ensure(obs.image.width == obs.image.height, || {
        format!(
            "render_size needs square observations, got {}x{}",
            obs.image.width, obs.image.height
        )
    })?;
    let b = CropBox { min: [0.0, 0.0], size: obs.image.width as f64, expansion: 1.0 };
    Ok(Observation {
        image: crop_image(&obs.image, &b, size),
        skin_mask: crop_mask(&obs.skin_mask, &b, size),
        bald_skin_mask: obs.bald_skin_mask.as_ref().map(|m| crop_mask(m, &b, size)),
        ..obs.clone()
    })
}

impl<'a> Objective<'a> {
    pub fn new(grid: &ObservationGrid, model: &'a ModelAsset, config: &FitConfig) -> Result<Self> {
        Self::with_embedder(grid, model, config, Box::new(DownsampleEmbedder))
    }

    pub fn with_embedder(
        grid: &ObservationGrid,
        model: &'a ModelAsset,
        config: &FitConfig,
        embedder: Box<dyn EmbeddingProvider + 'a>,
    ) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let w = &config.weights;
        if w.scale > 0.0 && grid.len() > 1 {
            grid.require_complete()?;
        }
        let needs_bald = w.dice > 0.0 || config.dual_bald;
        let cells = grid
            .cells
            .iter()
            .enumerate()
            .map(|(i, o)| {
                ensure(!needs_bald || o.bald_skin_mask.is_some(), || {
                    format!("observation {i} has no bald skin mask but the dice term is enabled")
                })?;
                match config.render_size {
                    Some(n) => resample_observation(o, n),
                    None => Ok(o.clone()),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let target_embeddings = cells.iter().map(|o| embedder.embed(&masked(&o.image, &o.skin_mask))).collect();
        Ok(Objective {
            model,
            cells,
            config: config.clone(),
            shared: grid.shared_shape,
            dual: config.dual_bald,
            embedder,
            target_embeddings,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_sets(&self) -> usize {
        if self.dual {
            2 * self.cells.len()
        } else {
            self.cells.len()
        }
    }

    pub fn cells(&self) -> &[Observation] {
        &self.cells
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    fn settings(&self, obs: usize) -> RenderSettings {
        let img = &self.cells[obs].image;
        let mut s = RenderSettings::new(img.width, img.height, self.config.sigma);
        s.exec = self.config.exec;
        s
    }

    /// State with every set equal to `init` (and the shared shape taken
    /// from it when shape is shared).
    pub fn state_from(&self, init: &[HeadParams]) -> Result<FitState> {
        ensure(init.len() == self.cells.len(), || {
            format!("{} initial parameter sets for {} cells", init.len(), self.cells.len())
        })?;
        for p in init {
            p.validate(self.model.dims())?;
        }
        let mut sets = init.to_vec();
        if self.dual {
            sets.extend(init.iter().cloned());
        }
        Ok(FitState { shared_beta: self.shared.then(|| init[0].beta.clone()), sets })
    }

    fn data_parts(&self, bucket: Option<Bucket>, mult: f64) -> Vec<Part> {
        let w = &self.config.weights;
        [(Term::Landmark, w.landmark), (Term::Photometric, w.photometric), (Term::Identity, w.identity)]
            .into_iter()
            .filter(|(_, wt)| *wt > 0.0)
            .map(|(term, wt)| Part {
                bucket: bucket.unwrap_or(match term {
                    Term::Landmark => Bucket::Landmark,
                    Term::Photometric => Bucket::Photometric,
                    _ => Bucket::Identity,
                }),
                term,
                weight: wt * mult,
            })
            .collect()
    }

    fn jobs(&self, shuffle: &[usize]) -> Vec<Job> {
        let n = self.cells.len();
        let w = &self.config.weights;
        let mut jobs: Vec<Job> = Vec::new();
        let mut push = |obs: usize, set: usize, beta_from: usize, parts: Vec<Part>| {
            if parts.is_empty() {
                return;
            }
            let key = if self.shared { usize::MAX } else { beta_from };
            let existing = jobs
                .iter_mut()
                .find(|j| j.set == set && (if self.shared { usize::MAX } else { j.beta_from }) == key);
            match existing {
                Some(j) => j.parts.extend(parts),
                None => jobs.push(Job { obs, set, beta_from, parts }),
            }
        };
        for c in 0..n {
            let mut parts = self.data_parts(None, 1.0);
            if !self.dual && w.dice > 0.0 {
                parts.push(Part { bucket: Bucket::Dice, term: Term::Dice, weight: w.dice });
            }
            push(c, c, c, parts);
        }
        if w.scale > 0.0 {
            for c in 0..n {
                push(c, c, shuffle[c], self.data_parts(Some(Bucket::Scale), w.scale));
            }
        }
        if self.dual {
            for c in 0..n {
                let mut parts = Vec::new();
                if w.landmark > 0.0 {
                    parts.push(Part { bucket: Bucket::Landmark, term: Term::Landmark, weight: w.landmark });
                }
                if w.dice > 0.0 {
                    parts.push(Part { bucket: Bucket::Dice, term: Term::Dice, weight: w.dice });
                }
                push(c, n + c, n + c, parts);
            }
            if w.scale > 0.0 {
                // swapped shapes between the hair and hair-free sets
                for c in 0..n {
                    push(c, c, n + c, self.data_parts(Some(Bucket::Scale), w.scale));
                    if w.dice > 0.0 {
                        let p = Part { bucket: Bucket::Scale, term: Term::Dice, weight: w.scale * w.dice };
                        push(c, n + c, c, vec![p]);
                    }
                }
            }
        }
        jobs
    }

    fn run_job(&self, job: &Job, params: &HeadParams, need_grad: bool) -> Result<JobOut> {
        let obs = &self.cells[job.obs];
        let render = render_head(self.model, params, &self.settings(job.obs))?;
        self.score(obs, &self.target_embeddings[job.obs], &render, params, &job.parts, need_grad)
    }

    fn score(
        &self,
        obs: &Observation,
        target: &EmbeddingVector,
        render: &HeadRender,
        params: &HeadParams,
        parts: &[Part],
        need_grad: bool,
    ) -> Result<JobOut> {
        let weight_of = |t: Term| parts.iter().filter(|p| p.term == t).map(|p| p.weight).sum::<f64>();
        let has = |t: Term| parts.iter().any(|p| p.term == t);
        let out = &render.out;
        let mut values = Vec::with_capacity(parts.len());
        let mut rg = RenderGrad::default();
        let n_px = out.color.num_pixels();
        let mut color_grad = vec![0.0; 3 * n_px];
        let mut has_color = false;

        let mut unweighted = [0.0; 4];
        if has(Term::Landmark) {
            let (v, g) = landmark_loss_grad(&obs.landmarks, render.landmarks())?;
            unweighted[0] = v;
            let w = weight_of(Term::Landmark);
            rg.landmarks = Some(g.iter().map(|p| [w * p[0], w * p[1]]).collect());
        }
        if has(Term::Photometric) {
            let (v, g) = photometric_loss_grad(&obs.image, &out.color, &obs.skin_mask, self.config.weights.reduction)?;
            unweighted[1] = v;
            let w = weight_of(Term::Photometric);
            for (a, b) in color_grad.iter_mut().zip(&g.rendered) {
                *a += w * b;
            }
            has_color = true;
        }
        if has(Term::Identity) {
            let m = &obs.skin_mask;
            let rendered = masked(&out.color, m);
            let emb = self.embedder.embed(&rendered);
            let norm = emb.values.iter().map(|x| x * x).sum::<f64>();
            // a black render has no direction; score it as orthogonal
            if norm > 0.0 {
                let (v, ga, _) = identity_loss_grad(&emb, target)?;
                unweighted[2] = v;
                if need_grad {
                    let w = weight_of(Term::Identity);
                    let g = self.embedder.embed_vjp(&rendered, &ga);
                    for p in 0..n_px {
                        for c in 0..3 {
                            color_grad[3 * p + c] += w * m.values[p] * g[3 * p + c];
                        }
                    }
                    has_color = true;
                }
            } else {
                unweighted[2] = 1.0;
            }
        }
        if has(Term::Dice) {
            let bald = obs
                .bald_skin_mask
                .as_ref()
                .ok_or_else(|| Error::contract("dice term needs a bald skin mask"))?;
            let eps = self.config.weights.dice_epsilon_for(n_px);
            let (v, g) = dice_loss_grad(bald, &out.silhouette, eps)?;
            unweighted[3] = v;
            let w = weight_of(Term::Dice);
            rg.silhouette = Some(g.b.iter().map(|x| w * x).collect());
        }
        for p in parts {
            let idx = match p.term {
                Term::Landmark => 0,
                Term::Photometric => 1,
                Term::Identity => 2,
                Term::Dice => 3,
            };
            values.push((p.bucket, p.weight * unweighted[idx]));
        }
        if has_color {
            rg.color = Some(color_grad);
        }
        let grad = if need_grad { Some(render.backward(self.model, params, &rg)?) } else { None };
        Ok(JobOut { values, grad })
    }

    /// Total loss breakdown and, optionally, its gradient.
    pub fn evaluate(
        &self,
        state: &FitState,
        shuffle: &[usize],
        iteration: usize,
        need_grad: bool,
    ) -> Result<(LossTerms, Option<FitState>)> {
        let n = self.cells.len();
        ensure(is_permutation(shuffle, n), || format!("shuffle is not a permutation of {n} cells"))?;
        let jobs = self.jobs(shuffle);
        let outs = self.config.exec.map(jobs.len(), |i| {
            let j = &jobs[i];
            self.run_job(j, &state.params(j.set, j.beta_from), need_grad)
        });
        let mut terms = LossTerms::default();
        let mut grad = need_grad.then(|| state.zeros_like());
        for (job, out) in jobs.iter().zip(outs) {
            let out = out?;
            for (b, v) in out.values {
                if !v.is_finite() {
                    return Err(Error::NonFinite { term: b.name().into(), iteration });
                }
                *terms.slot(b) += v;
            }
            if let (Some(g), Some(jg)) = (grad.as_mut(), out.grad.as_ref()) {
                if !jg.is_finite() {
                    let names: Vec<&str> = job.parts.iter().map(|p| p.bucket.name()).collect();
                    return Err(Error::NonFinite { term: format!("gradient of {}", names.join("+")), iteration });
                }
                g.add_grad(job.set, job.beta_from, jg);
            }
        }

        let w = &self.config.weights;
        if w.regularization > 0.0 {
            let mut reg = 0.0;
            for (s, p) in state.sets.iter().enumerate() {
                reg += sq(&p.psi) + sq(&p.alpha);
                if state.shared_beta.is_none() {
                    reg += sq(&p.beta);
                }
                if let Some(g) = grad.as_mut() {
                    let gs = &mut g.sets[s];
                    axpy(&mut gs.psi, 2.0 * w.regularization, &p.psi);
                    axpy(&mut gs.alpha, 2.0 * w.regularization, &p.alpha);
                    if state.shared_beta.is_none() {
                        axpy(&mut gs.beta, 2.0 * w.regularization, &p.beta);
                    }
                }
            }
            if let Some(b) = &state.shared_beta {
                reg += sq(b);
                if let Some(g) = grad.as_mut() {
                    axpy(g.shared_beta.as_mut().unwrap(), 2.0 * w.regularization, b);
                }
            }
            terms.regularization = w.regularization * reg;
        }

        if self.dual && w.shape_consistency > 0.0 && state.shared_beta.is_none() {
            let mut total = 0.0;
            for c in 0..n {
                let diff: Vec<f64> = state.sets[c].beta.iter().zip(&state.sets[n + c].beta).map(|(a, b)| a - b).collect();
                total += sq(&diff);
                if let Some(g) = grad.as_mut() {
                    axpy(&mut g.sets[c].beta, 2.0 * w.shape_consistency, &diff);
                    axpy(&mut g.sets[n + c].beta, -2.0 * w.shape_consistency, &diff);
                }
            }
            terms.shape_consistency = w.shape_consistency * total;
        }

        if w.encoder > 0.0 {
            let outs = self.config.exec.map(state.sets.len(), |s| self.encoder_term(state, s));
            let mut total = 0.0;
            for (s, r) in outs.into_iter().enumerate() {
                let diff = r?;
                total += diff.norm_sq();
                if let Some(g) = grad.as_mut() {
                    let mut scaled = diff.clone();
                    scaled.scale(2.0 * w.encoder);
                    g.add_grad(s, s, &scaled);
                }
            }
            terms.encoder = w.encoder * total;
        }

        for (name, v) in terms.named() {
            if !v.is_finite() {
                return Err(Error::NonFinite { term: name.into(), iteration });
            }
        }
        Ok((terms, grad))
    }

    /// `p − sg(p_out)` where `p_out` is one gradient step of the
    /// reconstruction objective from `p` against the render of `p` itself.
    fn encoder_term(&self, state: &FitState, set: usize) -> Result<HeadParams> {
        let obs_idx = set % self.cells.len();
        let p = state.params(set, set);
        let settings = self.settings(obs_idx);
        let render = render_head(self.model, &p, &settings)?;
        let own = Observation {
            image: render.out.color.clone(),
            skin_mask: render.out.silhouette.clone(),
            bald_skin_mask: None,
            landmarks: Landmarks2D::new(render.landmarks().to_vec()),
            crop_level: 1,
            pose_index: 1,
            subject: String::new(),
        };
        let target = self.embedder.embed(&masked(&own.image, &own.skin_mask));
        let parts = self.data_parts(None, 1.0);
        let mut g = self.score(&own, &target, &render, &p, &parts, true)?.grad.unwrap_or_else(|| {
            HeadParams::zeros(p.dims())
        });
        let wr = self.config.weights.regularization;
        axpy(&mut g.beta, 2.0 * wr, &p.beta);
        axpy(&mut g.psi, 2.0 * wr, &p.psi);
        axpy(&mut g.alpha, 2.0 * wr, &p.alpha);
        // p − p_out = lr·g
        g.scale(self.config.learning_rate);
        Ok(g)
    }

    /// Data-term total `Σ_c L(obs_c, params_c with β_{shuffle(c)})`, with
    /// optional gradients per cell.
    fn shuffled_data_loss(
        &self,
        params: &[HeadParams],
        shuffle: &[usize],
        need_grad: bool,
    ) -> Result<(f64, Option<Vec<HeadParams>>)> {
        let n = self.cells.len();
        ensure(params.len() == n, || format!("{} parameter sets for {n} cells", params.len()))?;
        ensure(is_permutation(shuffle, n), || format!("shuffle is not a permutation of {n} cells"))?;
        let state = FitState { sets: params.to_vec(), shared_beta: None };
        let parts = self.data_parts(Some(Bucket::Scale), 1.0);
        let outs = self.config.exec.map(n, |c| {
            let job = Job { obs: c, set: c, beta_from: shuffle[c], parts: parts.clone() };
            self.run_job(&job, &state.params(c, shuffle[c]), need_grad)
        });
        let mut total = 0.0;
        let mut grad = need_grad.then(|| state.zeros_like());
        for (c, out) in outs.into_iter().enumerate() {
            let out = out?;
            total += out.values.iter().map(|(_, v)| v).sum::<f64>();
            if let (Some(g), Some(jg)) = (grad.as_mut(), out.grad.as_ref()) {
                g.add_grad(c, shuffle[c], jg);
            }
        }
        Ok((total, grad.map(|g| g.sets)))
    }
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &i in p {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

/// Scale-consistency loss over a complete grid: each cell is rendered with
/// its own parameters except for the shape, taken from cell `shuffle[c]`,
/// and scored with the weighted landmark, photometric and identity terms.
pub fn scale_consistency_loss(
    grid: &ObservationGrid,
    model: &ModelAsset,
    params: &[HeadParams],
    shuffle: &[usize],
    config: &FitConfig,
) -> Result<f64> {
    grid.require_complete()?;
    let obj = Objective::new(grid, model, &without_bald_terms(config))?;
    obj.shuffled_data_loss(params, shuffle, false).map(|(v, _)| v)
}

/// [`scale_consistency_loss`] with its gradient per cell.
pub fn scale_consistency_loss_grad(
    grid: &ObservationGrid,
    model: &ModelAsset,
    params: &[HeadParams],
    shuffle: &[usize],
    config: &FitConfig,
) -> Result<(f64, Vec<HeadParams>)> {
    grid.require_complete()?;
    let obj = Objective::new(grid, model, &without_bald_terms(config))?;
    let (v, g) = obj.shuffled_data_loss(params, shuffle, true)?;
    Ok((v, g.unwrap_or_default()))
}

fn without_bald_terms(config: &FitConfig) -> FitConfig {
    let mut c = config.clone();
    c.weights.dice = 0.0;
    c.dual_bald = false;
    c
}

/// `(dice(bald mask, silhouette), ‖β_I − β_Ib‖²)`.
pub fn dice_consistency_terms(
    obs: &Observation,
    render: &RenderOut,
    params_i: &HeadParams,
    params_ib: &HeadParams,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let bald = obs
        .bald_skin_mask
        .as_ref()
        .ok_or_else(|| Error::contract("dice consistency needs the observation's bald skin mask"))?;
    ensure(params_i.beta.len() == params_ib.beta.len(), || "shape vectors differ in length".into())?;
    let dice = dice_loss(bald, &render.silhouette, epsilon)?;
    let consistency = params_i.beta.iter().zip(&params_ib.beta).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((dice, consistency))
}
