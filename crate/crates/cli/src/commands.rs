use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use firecast_core::checkpoint;
use firecast_core::data::synthetic::{brightness_tile, synthetic_records};
use firecast_core::data::{
    assemble_dataset, load_gray_image, load_image_dir, parse_records, write_pgm, write_records, Dataset, FireRecord,
    VegetationMap, VEG_GROUPS,
};
use firecast_core::features::dump_feature_maps;
use firecast_core::grid::{self, load_tiles};
use firecast_core::metrics::roc;
use firecast_core::models::{Model, WiinConfig};
use firecast_core::pipeline::{archive_dir, assemble, prepare, run, write_artifacts};
use firecast_core::report::metrics_text;
use firecast_core::train::{predict, EvalSummary};
use firecast_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{DumpArgs, EvalArgs, GridArgs, SyntheticArgs, TrainArgs};

fn read_records(path: &Path) -> Result<Vec<FireRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_records(BufReader::new(file))?;
    if parsed.dropped > 0 {
        eprintln!("dropped {} rows with empty required cells", parsed.dropped);
    }
    Ok(parsed.records)
}

fn read_veg_map(path: Option<&Path>) -> Result<VegetationMap> {
    match path {
        None => Ok(VegetationMap::default()),
        Some(p) => {
            let file = File::open(p).map_err(|e| Error::io(p, e))?;
            Ok(VegetationMap::from_csv(BufReader::new(file))?)
        }
    }
}

/// A fresh directory under `root`, suffixed when two runs share a second.
fn unique_archive(root: &Path, seed: u64) -> PathBuf {
    let base = archive_dir(root, seed);
    let mut dir = base.clone();
    let mut k = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{k}", base.display()));
        k += 1;
    }
    dir
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.run_config();
    cfg.validate()?;
    let records = read_records(&args.data)?;
    let images = match (&args.images, cfg.satellite_img) {
        (Some(dir), true) => {
            let ids: Vec<i64> = records.iter().map(|r| r.fod_id).collect();
            Some(load_image_dir(dir, &ids)?)
        }
        _ => None,
    };
    let veg = read_veg_map(args.veg_map.as_deref())?;
    let data = assemble(&records, images.as_ref(), &veg, &cfg)?;
    let prepared = prepare(&data, &cfg)?;
    println!(
        "train rows {} ({} synthetic), test rows {} ({} spillover)",
        prepared.train.len(),
        prepared.synthetic_rows,
        prepared.test.len(),
        prepared.plan.spillover().len()
    );
    let step = cfg.display_step.max(1);
    let outcome = run(&prepared, &cfg, &WiinConfig::default(), |e| {
        if (e.epoch + 1) % step == 0 || e.epoch + 1 == cfg.epochs {
            let test = e.test.as_ref().map_or_else(String::new, |t| format!(" test_acc {:.4}", t.accuracy));
            println!("epoch {:>4} loss {:.6} train_acc {:.4}{test}", e.epoch + 1, e.loss, e.train_accuracy);
        }
    })?;
    println!("{} parameters", outcome.checkpoint.model.param_count());
    print!("{}", metrics_text(&outcome.summary.confusion, outcome.roc.as_ref().map(|r| r.auc)));
    if cfg.archive {
        let dir = unique_archive(&args.output, cfg.seed);
        write_artifacts(&dir, &cfg, &prepared, &data.ids, &outcome)?;
        println!("saved run to {}", dir.display());
    }
    Ok(())
}

/// Row positions of the test and spillover entries of a split index.
fn test_rows(path: &Path) -> Result<Vec<usize>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.get(0) != Some("train") {
            let row = rec.get(1).context("split index row without a row column")?;
            rows.push(row.parse().with_context(|| format!("bad row index `{row}`"))?);
        }
    }
    Ok(rows)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let ck = checkpoint::load(&args.checkpoint)?;
    let width = ck.standardizer.width();
    let with_veg = match width {
        14 => false,
        w if w == 14 + VEG_GROUPS => true,
        w => return Err(Error::Schema { expected: 14 + VEG_GROUPS, got: w }.into()),
    };
    let records = read_records(&args.data)?;
    let images = if ck.model.needs_images() {
        let dir = args.images.as_ref().ok_or_else(|| Error::Usage("a hybrid checkpoint needs --images".into()))?;
        Some(load_image_dir(dir, &records.iter().map(|r| r.fod_id).collect::<Vec<_>>())?)
    } else {
        None
    };
    let veg = read_veg_map(args.veg_map.as_deref())?;
    let mut data: Dataset = assemble_dataset(&records, &veg, with_veg, images.as_ref())?;
    if let Some(index) = &args.split_index {
        let rows = test_rows(index)?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= data.len()) {
            return Err(Error::Validation { line: 0, field: "row", detail: format!("split row {bad} out of range") }.into());
        }
        data = data.subset(&rows);
    }
    ck.standardizer.apply(&mut data)?;
    let probs = predict(&ck.model, &data)?;
    let threshold = args.threshold.unwrap_or(ck.threshold);
    let summary = EvalSummary::from_probabilities(&probs, &data.labels, threshold)?;
    let auc = roc(&probs, &data.labels).ok().map(|r| r.auc);
    println!("{} model, {} rows, threshold {threshold}", ck.model.kind(), data.len());
    print!("{}", metrics_text(&summary.confusion, auc));
    Ok(())
}

pub fn predict_grid(args: &GridArgs) -> Result<()> {
    let ck = checkpoint::load(&args.checkpoint)?;
    let info: Vec<f64> = args
        .info
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad --info value `{v}`")))
        .collect::<Result<_>>()?;
    let tiles = load_tiles(&args.images, args.rows, args.cols)?;
    let grid = grid::predict_grid(&ck, &info, tiles, args.rows, args.cols, (args.origin_lat, args.origin_lon))?;
    fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
    let csv_path = args.output.join("grid.csv");
    fs::write(&csv_path, grid.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    grid.write_heatmap(&args.output.join("heatmap.pgm"))?;
    let flagged = (0..grid.rows).flat_map(|r| (0..grid.cols).map(move |c| (r, c))).filter(|&(r, c)| grid.flagged(r, c)).count();
    println!("{} cells, {flagged} above 0.70; wrote {}", grid.rows * grid.cols, args.output.display());
    Ok(())
}

pub fn generate_synthetic(args: &SyntheticArgs) -> Result<()> {
    let records = synthetic_records(args.rows, args.natural_share, args.seed)?;
    fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
    let path = args.output.join("fires.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_records(file, &records)?;
    if args.images {
        let dir = args.output.join("tiles");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x7469_6c65);
        for r in &records {
            write_pgm(&dir.join(format!("{}.pgm", r.fod_id)), &brightness_tile(r.is_natural(), 100, &mut rng))?;
        }
    }
    println!("wrote {} records to {}", records.len(), args.output.display());
    Ok(())
}

pub fn dump_features(args: &DumpArgs) -> Result<()> {
    let ck = checkpoint::load(&args.checkpoint)?;
    let Model::Hybrid(model) = &ck.model else {
        return Err(Error::Usage("feature maps need a hybrid-model checkpoint".into()).into());
    };
    let tile = load_gray_image(&args.image)?;
    fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
    for (i, (name, img)) in dump_feature_maps(model, &tile)?.iter().enumerate() {
        write_pgm(&args.output.join(format!("{i}_{name}.pgm")), img)?;
    }
    println!("wrote feature maps to {}", args.output.display());
    Ok(())
}
