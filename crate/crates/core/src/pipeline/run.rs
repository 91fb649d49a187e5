use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, Mode, PipelineConfig, SeedPlan};
use super::report::{RunReport, StageTimings};
use super::PipelineError;
use crate::clustering::{kmeans, KMeansConfig, KMeansResult};
use crate::dataset::{load_csv, load_uci, split_indices, MixedDataset, SplitSpec};
use crate::embedding::{
    build_affinity, concat_latents, penalty_from_pencil, project_all, solve_lpp, Affinity,
    KernelSpec, LatentEmbedding, LppSolution, Pencil,
};
use crate::metrics::{score, Scores};
use crate::neuralnet::{
    encoder_widths, train_with_latent_penalty, Checkpoint, EncoderDecoderNet, HeadSpec,
    LatentPenalty, LossHistory, NetworkSpec, TrainConfig,
};

/// Read the dataset named by `cfg.dataset`.
pub fn load_dataset(cfg: &PipelineConfig) -> Result<MixedDataset, PipelineError> {
    match &cfg.dataset {
        DatasetSource::Uci { name, cache_dir } => Ok(load_uci(*name, cache_dir)?),
        DatasetSource::Csv {
            path,
            schema,
            missing_policy,
        } => Ok(load_csv(path, schema, *missing_policy)?),
        DatasetSource::InMemory => Err(PipelineError::Config(
            "in-memory dataset source cannot be loaded from config".into(),
        )),
    }
}

/// Everything produced before clustering.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub net_num: EncoderDecoderNet,
    pub net_cat: EncoderDecoderNet,
    pub history_num: LossHistory,
    pub history_cat: LossHistory,
    pub embedding: LatentEmbedding,
    pub pencil: Pencil,
    /// All `d` eigenpairs, ascending.
    pub spectrum: LppSolution,
    pub seeds: SeedPlan,
    pub train_rows: Vec<usize>,
    /// Outer rounds run in alternating mode (0 in two-stage mode).
    pub rounds: usize,
    /// Alternating mode met the relative objective tolerance.
    pub converged: bool,
    pub timings: StageTimings,
}

impl FittedModel {
    pub fn max_dims(&self) -> usize {
        self.spectrum.dim()
    }

    /// `n × L` feature maps.
    pub fn features(&self, dims: usize) -> Result<Array2<f64>, PipelineError> {
        let sol = self.spectrum.truncate(dims)?;
        Ok(project_all(sol.v.view(), self.embedding.w.view())?)
    }

    /// Final mean per-sample training losses `(J1, J2)`.
    pub fn head_losses(&self) -> (f64, f64) {
        (
            self.history_num.final_train_loss().unwrap_or(f64::NAN),
            self.history_cat.final_train_loss().unwrap_or(f64::NAN),
        )
    }

    /// `(P(V), αJ1 + (1−α)J2 + βP(V))` for the first `dims` directions.
    pub fn objective(
        &self,
        cfg: &PipelineConfig,
        dims: usize,
    ) -> Result<(f64, f64), PipelineError> {
        let sol = self.spectrum.truncate(dims)?;
        let penalty = penalty_from_pencil(sol.v.view(), &self.pencil);
        let (j1, j2) = self.head_losses();
        Ok((
            penalty,
            cfg.alpha * j1 + (1.0 - cfg.alpha) * j2 + cfg.beta * penalty,
        ))
    }
}

fn kmeans_config(cfg: &PipelineConfig, seeds: &SeedPlan, k: usize) -> KMeansConfig {
    KMeansConfig {
        k,
        seed: seeds.kmeans ^ cfg.kmeans.seed,
        ..cfg.kmeans.clone()
    }
}

fn network_specs(
    cfg: &PipelineConfig,
    ds: &MixedDataset,
    seeds: &SeedPlan,
) -> Result<(NetworkSpec, NetworkSpec), PipelineError> {
    let (p1, p2) = (ds.schema().p1(), ds.schema().p2());
    if p1 == 0 || p2 == 0 {
        return Err(PipelineError::Config(format!(
            "mixed data required, got {p1} numerical and {p2} dummy columns"
        )));
    }
    let (latent_num, latent_cat) = cfg.latent_widths(p1, p2);
    let make = |input, latent, depth, head, seed| {
        let (dims, lift) = encoder_widths(input, latent, depth);
        let spec = NetworkSpec {
            use_bias: cfg.network.use_bias,
            input_lift: lift,
            ..NetworkSpec::new(dims, head, seed)
        };
        spec.validate().map(|_| spec)
    };
    let blocks = cfg
        .network
        .blockwise_softmax
        .then(|| ds.schema().category_blocks());
    let num = make(
        p1,
        latent_num,
        cfg.network.kappa_num,
        HeadSpec::SoftmaxCategorical {
            output_dim: p2,
            blocks,
        },
        seeds.net_num_init,
    )?;
    let cat = make(
        p2,
        latent_cat,
        cfg.network.kappa_cat,
        HeadSpec::MseNumerical { output_dim: p1 },
        seeds.net_cat_init,
    )?;
    Ok((num, cat))
}

fn embed(
    net_num: &EncoderDecoderNet,
    net_cat: &EncoderDecoderNet,
    ds: &MixedDataset,
) -> Result<LatentEmbedding, PipelineError> {
    let y_num = net_num.encode_all(ds.numerical().view())?;
    let y_cat = net_cat.encode_all(ds.categorical().view())?;
    Ok(concat_latents(y_num.view(), y_cat.view())?)
}

fn with_seed(train: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        shuffle_seed: seed ^ train.shuffle_seed,
        ..train.clone()
    }
}

/// `4·β·V Vᵀ W (Λ − S)`: column `i` is `d (βP) / d w_i`.
fn penalty_gradient(
    v: ArrayView2<f64>,
    w: ArrayView2<f64>,
    affinity: &Affinity,
    beta: f64,
) -> Array2<f64> {
    let degrees = affinity.degrees();
    let laplacian_w = &w * &degrees.view().insert_axis(Axis(0)) - affinity.mul(w.t()).t();
    v.dot(&v.t().dot(&laplacian_w)) * (4.0 * beta)
}

/// Train both networks and solve the projection.
pub fn fit(cfg: &PipelineConfig, ds: &MixedDataset) -> Result<FittedModel, PipelineError> {
    cfg.validate_static()?;
    let seeds = SeedPlan::new(cfg.master_seed);
    let (spec_num, spec_cat) = network_specs(cfg, ds, &seeds)?;
    let d = spec_num.latent_dim() + spec_cat.latent_dim();
    if cfg.dims > d {
        return Err(PipelineError::Config(format!(
            "dims = {} exceeds the concatenated latent width {d}",
            cfg.dims
        )));
    }
    let (train_rows, val_rows) = split_indices(
        ds.n(),
        SplitSpec {
            train_fraction: cfg.train_fraction,
            seed: seeds.split,
        },
    )?;
    let rows = |m: &Array2<f64>, idx: &[usize]| m.select(Axis(0), idx);
    let (xn, xc) = (ds.numerical(), ds.categorical());
    let (xn_tr, xc_tr, xn_va, xc_va) = (
        rows(xn, &train_rows),
        rows(xc, &train_rows),
        rows(xn, &val_rows),
        rows(xc, &val_rows),
    );
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let mut net_num = EncoderDecoderNet::init(&spec_num)?;
    let train_num = with_seed(&cfg.train_num, seeds.net_num_shuffle);
    let mut history_num = train_with_latent_penalty(
        &mut net_num,
        (xn_tr.view(), xc_tr.view()),
        Some((xn_va.view(), xc_va.view())),
        &train_num,
        1.0,
        None,
    )?;
    timings.train_num = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut net_cat = EncoderDecoderNet::init(&spec_cat)?;
    let train_cat = with_seed(&cfg.train_cat, seeds.net_cat_shuffle);
    let mut history_cat = train_with_latent_penalty(
        &mut net_cat,
        (xc_tr.view(), xn_tr.view()),
        Some((xc_va.view(), xn_va.view())),
        &train_cat,
        1.0,
        None,
    )?;
    timings.train_cat = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let affinity = build_affinity(ds.encoded_rows().view(), &cfg.kernel)?;
    timings.kernel = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut embedding = embed(&net_num, &net_cat, ds)?;
    let mut pencil = Pencil::build(embedding.w.view(), &affinity)?;
    let mut spectrum = solve_lpp(
        &pencil,
        d,
        Some(
            cfg.ridge
                .unwrap_or_else(|| pencil.relative_ridge(cfg.ridge_scale)),
        ),
    )?;
    timings.lpp = t.elapsed().as_secs_f64();

    let mut model = FittedModel {
        net_num: net_num.clone(),
        net_cat: net_cat.clone(),
        history_num: history_num.clone(),
        history_cat: history_cat.clone(),
        embedding: embedding.clone(),
        pencil: pencil.clone(),
        spectrum: spectrum.clone(),
        seeds,
        train_rows: train_rows.clone(),
        rounds: 0,
        converged: true,
        timings,
    };

    if let Mode::Alternating {
        outer_rounds,
        epochs_per_round,
    } = cfg.mode
    {
        let mut previous = model.objective(cfg, cfg.dims)?.1;
        model.converged = false;
        let cat_dim = embedding.cat_dim;
        for round in 0..outer_rounds {
            let t = Instant::now();
            let v = spectrum.truncate(cfg.dims)?.v;
            let grad = penalty_gradient(v.view(), embedding.w.view(), &affinity, cfg.beta);
            let grad_cat = grad
                .slice(s![..cat_dim, ..])
                .t()
                .select(Axis(0), &train_rows);
            let grad_num = grad
                .slice(s![cat_dim.., ..])
                .t()
                .select(Axis(0), &train_rows);
            let round_cfg = |base: &TrainConfig, seed: u64| TrainConfig {
                epochs: epochs_per_round,
                ..with_seed(base, seed ^ (round as u64 + 1))
            };
            let h_num = train_with_latent_penalty(
                &mut net_num,
                (xn_tr.view(), xc_tr.view()),
                Some((xn_va.view(), xc_va.view())),
                &round_cfg(&cfg.train_num, seeds.net_num_shuffle),
                cfg.alpha,
                Some(&LatentPenalty { grad: grad_num }),
            )?;
            let h_cat = train_with_latent_penalty(
                &mut net_cat,
                (xc_tr.view(), xn_tr.view()),
                Some((xc_va.view(), xn_va.view())),
                &round_cfg(&cfg.train_cat, seeds.net_cat_shuffle),
                1.0 - cfg.alpha,
                Some(&LatentPenalty { grad: grad_cat }),
            )?;
            append_history(&mut history_num, h_num);
            append_history(&mut history_cat, h_cat);
            embedding = embed(&net_num, &net_cat, ds)?;
            pencil = Pencil::build(embedding.w.view(), &affinity)?;
            spectrum = solve_lpp(
                &pencil,
                d,
                Some(
                    cfg.ridge
                        .unwrap_or_else(|| pencil.relative_ridge(cfg.ridge_scale)),
                ),
            )?;
            model = FittedModel {
                net_num: net_num.clone(),
                net_cat: net_cat.clone(),
                history_num: history_num.clone(),
                history_cat: history_cat.clone(),
                embedding: embedding.clone(),
                pencil: pencil.clone(),
                spectrum: spectrum.clone(),
                rounds: round + 1,
                converged: false,
                timings: StageTimings {
                    alternating: model.timings.alternating + t.elapsed().as_secs_f64(),
                    ..model.timings
                },
                ..model
            };
            let current = model.objective(cfg, cfg.dims)?.1;
            if (current - previous).abs() <= 1e-4 * previous.abs() {
                model.converged = true;
                break;
            }
            previous = current;
        }
        if !model.converged {
            log::warn!("alternating mode stopped after {outer_rounds} rounds without convergence");
        }
    }
    Ok(model)
}

fn append_history(into: &mut LossHistory, more: LossHistory) {
    let offset = into.len();
    into.epochs.extend(more.epochs.into_iter().map(|mut e| {
        e.epoch += offset;
        e
    }));
}

/// Cluster `features` and score against the dataset's truth labels.
pub fn score_features(
    features: ArrayView2<f64>,
    ds: &MixedDataset,
    kmeans_cfg: &KMeansConfig,
) -> Result<(KMeansResult, Option<Scores>), PipelineError> {
    let clusters = kmeans(features, kmeans_cfg)?;
    let scores = match ds.truth_labels() {
        Some(truth) => Some(score(&clusters.labels, truth)?),
        None => None,
    };
    Ok((clusters, scores))
}

/// Full run on an already loaded dataset.
pub fn run_kmfm_on(
    cfg: &PipelineConfig,
    ds: &MixedDataset,
) -> Result<(RunReport, FittedModel), PipelineError> {
    let model = fit(cfg, ds)?;
    let t = Instant::now();
    let features = model.features(cfg.dims)?;
    let km_cfg = kmeans_config(cfg, &model.seeds, cfg.kmeans.k);
    let (clusters, scores) = score_features(features.view(), ds, &km_cfg)?;
    let mut timings = model.timings;
    timings.kmeans = t.elapsed().as_secs_f64();
    let (penalty, objective) = model.objective(cfg, cfg.dims)?;
    let (j1, j2) = model.head_losses();
    let report = RunReport {
        dataset: dataset_label(cfg),
        n: ds.n(),
        p1: ds.schema().p1(),
        p2: ds.schema().p2(),
        layer_dims_num: model.net_num.spec().layer_dims.clone(),
        layer_dims_cat: model.net_cat.spec().layer_dims.clone(),
        config: cfg.clone(),
        seeds: model.seeds,
        kmeans_seed: km_cfg.seed,
        history_num: model.history_num.clone(),
        history_cat: model.history_cat.clone(),
        j1,
        j2,
        penalty,
        objective,
        eigenvalues: model.spectrum.eigenvalues[..cfg.dims].to_vec(),
        ridge: model.spectrum.ridge,
        inertia: clusters.inertia,
        labels: clusters.labels,
        scores,
        rounds: model.rounds,
        converged: model.converged,
        timings,
    };
    Ok((report, model))
}

pub fn run_kmfm(
    cfg: &PipelineConfig,
) -> Result<(RunReport, FittedModel, MixedDataset), PipelineError> {
    let ds = load_dataset(cfg)?;
    let (report, model) = run_kmfm_on(cfg, &ds)?;
    Ok((report, model, ds))
}

pub(crate) fn dataset_label(cfg: &PipelineConfig) -> String {
    match &cfg.dataset {
        DatasetSource::Uci { name, .. } => name.to_string(),
        DatasetSource::Csv { path, .. } => path
            .file_stem()
            .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned()),
        DatasetSource::InMemory => "in_memory".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `L` or `k`, depending on the sweep.
    pub value: usize,
    pub rand_index: f64,
    pub nmi: f64,
}

fn require_scores(scores: Option<Scores>) -> Result<Scores, PipelineError> {
    scores.ok_or_else(|| {
        PipelineError::Config("dataset has no ground-truth labels to score against".into())
    })
}

/// Metrics for each `L`, reusing one fitted model.
pub fn sweep_feature_dim(
    cfg: &PipelineConfig,
    model: &FittedModel,
    ds: &MixedDataset,
    values: &[usize],
) -> Result<Vec<SweepRow>, PipelineError> {
    let km_cfg = kmeans_config(cfg, &model.seeds, cfg.kmeans.k);
    values
        .iter()
        .map(|&l| {
            let features = model.features(l)?;
            let scores = require_scores(score_features(features.view(), ds, &km_cfg)?.1)?;
            Ok(SweepRow {
                value: l,
                rand_index: scores.rand_index,
                nmi: scores.nmi,
            })
        })
        .collect()
}

/// Metrics for each cluster count on the `cfg.dims` features.
pub fn sweep_clusters(
    cfg: &PipelineConfig,
    model: &FittedModel,
    ds: &MixedDataset,
    values: &[usize],
) -> Result<Vec<SweepRow>, PipelineError> {
    let features = model.features(cfg.dims)?;
    values
        .iter()
        .map(|&k| {
            let km_cfg = kmeans_config(cfg, &model.seeds, k);
            let scores = require_scores(score_features(features.view(), ds, &km_cfg)?.1)?;
            Ok(SweepRow {
                value: k,
                rand_index: scores.rand_index,
                nmi: scores.nmi,
            })
        })
        .collect()
}

/// Persisted state sufficient to recompute features and clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub net_num: Checkpoint,
    pub net_cat: Checkpoint,
    pub projection: LppSolution,
    pub kernel: KernelSpec,
    pub kmeans: KMeansConfig,
}

impl ModelBundle {
    pub fn new(cfg: &PipelineConfig, model: &FittedModel) -> Result<Self, PipelineError> {
        Ok(Self {
            format: "kmfm-model/1".to_string(),
            net_num: model.net_num.to_checkpoint(),
            net_cat: model.net_cat.to_checkpoint(),
            projection: model.spectrum.truncate(cfg.dims)?,
            kernel: cfg.kernel.clone(),
            kmeans: kmeans_config(cfg, &model.seeds, cfg.kmeans.k),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string(self).expect("bundle serialises");
        std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }
}

/// Re-encode, project and cluster from a saved bundle.
pub fn replay(
    bundle: &ModelBundle,
    ds: &MixedDataset,
) -> Result<(KMeansResult, Option<Scores>), PipelineError> {
    let net_num = EncoderDecoderNet::from_checkpoint(bundle.net_num.clone())?;
    let net_cat = EncoderDecoderNet::from_checkpoint(bundle.net_cat.clone())?;
    let embedding = embed(&net_num, &net_cat, ds)?;
    let features = project_all(bundle.projection.v.view(), embedding.w.view())?;
    score_features(features.view(), ds, &bundle.kmeans)
}
