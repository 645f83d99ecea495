//! End-to-end training run: split, standardize, train, evaluate, archive.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::checkpoint::{self, Checkpoint};
use crate::config::{ModelSelection, RunConfig};
use crate::data::resample::{random_split, smote, undersample, ResampleMethod, SplitPlan};
use crate::data::{assemble_dataset, Dataset, FireRecord, GrayImage, Standardizer, VegetationMap};
use crate::error::{Error, Result};
use crate::metrics::{roc, RocCurve};
use crate::models::{init_baseline, BaselineConfig, HybridConfig, HybridModel, Model, WiinConfig};
use crate::report;
use crate::train::{predict, train, EpochRecord, EvalSummary, TrainOptions, TrainingLog};

/// File names written into an archive directory.
pub const ARTIFACTS: [&str; 8] = [
    "model.fcp",
    "parameters.json",
    "loss_epoch.csv",
    "loss_batch.csv",
    "confusion.csv",
    "roc.csv",
    "roc.svg",
    "split_index.csv",
];

#[derive(Debug, Clone)]
pub struct Prepared {
    pub plan: SplitPlan,
    pub standardizer: Standardizer,
    pub train: Dataset,
    pub test: Dataset,
    /// Synthetic rows appended to `train` by SMOTE.
    pub synthetic_rows: usize,
}

/// Splits `data` per the configured resampling, fits the standardizer on
/// the training rows and applies it to both sides.
pub fn prepare(data: &Dataset, cfg: &RunConfig) -> Result<Prepared> {
    let plan = match cfg.resample_method {
        ResampleMethod::Undersample => undersample(&data.labels, cfg.other_size, cfg.test_size, cfg.seed)?,
        ResampleMethod::None | ResampleMethod::Smote => {
            let mut p = random_split(data.len(), cfg.test_size, cfg.seed)?;
            p.method = cfg.resample_method;
            p
        }
    };
    let standardizer = if cfg.standardize {
        Standardizer::fit(data, &plan.train)?
    } else {
        Standardizer::identity(data.width)
    };
    let mut train = data.subset(&plan.train);
    let mut test = data.subset(&plan.test);
    standardizer.apply(&mut train)?;
    standardizer.apply(&mut test)?;
    let mut synthetic_rows = 0;
    if cfg.resample_method == ResampleMethod::Smote {
        let minority: Vec<Vec<f64>> = (0..train.len())
            .filter(|&i| train.labels[i])
            .map(|i| train.row(i).to_vec())
            .collect();
        let deficit = (train.len() - minority.len()).saturating_sub(minority.len());
        if deficit > 0 {
            let rows: Vec<Vec<f64>> = smote(&minority, cfg.smote_k, deficit, cfg.seed, cfg.smote_mode)?
                .into_iter()
                .map(|s| s.row)
                .collect();
            train.append_rows(&rows, true, -1 - rows.len() as i64)?;
            synthetic_rows = rows.len();
        }
    }
    Ok(Prepared { plan, standardizer, train, test, synthetic_rows })
}

/// Builds the feature table from parsed records and optional tiles.
pub fn assemble(
    records: &[FireRecord],
    images: Option<&HashMap<i64, GrayImage>>,
    veg_map: &VegetationMap,
    cfg: &RunConfig,
) -> Result<Dataset> {
    if cfg.satellite_img && images.is_none() {
        return Err(Error::Usage("--satellite-img=True needs an image directory".into()));
    }
    assemble_dataset(records, veg_map, cfg.with_vegetation, images.filter(|_| cfg.satellite_img))
}

pub fn build_model(cfg: &RunConfig, width: usize, wiin: &WiinConfig) -> Result<Model> {
    Ok(match cfg.model_selection {
        ModelSelection::Baseline => Model::Baseline(init_baseline(
            &BaselineConfig {
                input_dim: width,
                loss: cfg.loss_function,
                learning_rate: cfg.learning_rate,
                epochs: cfg.epochs,
                ..BaselineConfig::default()
            },
            cfg.seed,
        )?),
        ModelSelection::Hybrid => Model::Hybrid(HybridModel::new(
            &HybridConfig {
                tabular_width: width,
                wiin: wiin.clone(),
                loss: cfg.loss_function,
                batch_size: cfg.effective_batch_size().unwrap_or(32),
                epochs: cfg.epochs,
                threshold: cfg.threshold,
                learning_rate: cfg.learning_rate,
                ..HybridConfig::default()
            },
            cfg.seed,
        )?),
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainingLog,
    pub test_probabilities: Vec<f64>,
    pub summary: EvalSummary,
    pub roc: Option<RocCurve>,
}

pub fn run(
    prepared: &Prepared,
    cfg: &RunConfig,
    wiin: &WiinConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut model = build_model(cfg, prepared.train.width, wiin)?;
    let opts = TrainOptions {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        weight_decay: 1e-4,
        batch_size: cfg.effective_batch_size(),
        threshold: cfg.threshold,
        seed: cfg.seed,
    };
    let test = (!prepared.test.is_empty()).then_some(&prepared.test);
    let log = train(&mut model, &prepared.train, test, &opts, on_epoch)?;
    let checkpoint = Checkpoint {
        model,
        standardizer: prepared.standardizer.clone(),
        seed: cfg.seed,
        threshold: cfg.threshold,
        log_digest: log.digest(),
    };
    let (test_probabilities, summary, curve) = match test {
        Some(t) => {
            let probs = predict(&checkpoint.model, t)?;
            let summary = EvalSummary::from_probabilities(&probs, &t.labels, cfg.threshold)?;
            (probs.clone(), summary, roc(&probs, &t.labels).ok())
        }
        None => return Err(Error::Sampling("empty test split".into())),
    };
    Ok(RunOutcome { checkpoint, log, test_probabilities, summary, roc: curve })
}

fn split_index_csv(prepared: &Prepared, data_ids: &[i64]) -> String {
    let mut s = String::from("set,row,fod_id\n");
    let plan = &prepared.plan;
    for &i in &plan.train {
        s += &format!("train,{i},{}\n", data_ids[i]);
    }
    for (k, &i) in plan.test.iter().enumerate() {
        let set = if k < plan.spillover_start { "test" } else { "spillover" };
        s += &format!("{set},{i},{}\n", data_ids[i]);
    }
    s
}

fn parameters_json(cfg: &RunConfig, outcome: &RunOutcome) -> String {
    let store = outcome.checkpoint.model.store();
    let tensors: Vec<_> = store
        .entries()
        .iter()
        .map(|e| json!({ "name": e.name, "shape": e.tensor.shape(), "trainable": e.trainable }))
        .collect();
    let doc = json!({
        "run": cfg,
        "model_kind": outcome.checkpoint.model.kind(),
        "param_count": store.param_count(),
        "tensors": tensors,
    });
    serde_json::to_string_pretty(&doc).expect("json") + "\n"
}

/// Writes the eight run artifacts into `dir` (created if needed).
pub fn write_artifacts(
    dir: &Path,
    cfg: &RunConfig,
    prepared: &Prepared,
    data_ids: &[i64],
    outcome: &RunOutcome,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let empty_roc = RocCurve { points: vec![(0.0, 0.0), (1.0, 1.0)], thresholds: vec![f64::NAN], auc: f64::NAN };
    let curve = outcome.roc.as_ref().unwrap_or(&empty_roc);
    let texts = [
        parameters_json(cfg, outcome),
        outcome.log.epoch_csv(),
        outcome.log.batch_csv(),
        report::confusion_csv(&outcome.summary.confusion),
        report::roc_csv(curve),
        report::roc_svg(curve),
        split_index_csv(prepared, data_ids),
    ];
    let mut written = Vec::new();
    let path = dir.join(ARTIFACTS[0]);
    checkpoint::save(&path, &outcome.checkpoint)?;
    written.push(path);
    for (name, text) in ARTIFACTS[1..].iter().zip(texts) {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// `<root>/<UTC timestamp>-seed<seed>`.
pub fn archive_dir(root: &Path, seed: u64) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    root.join(format!("{stamp}-seed{seed}"))
}
