//! `sacl train`: one independent training run per seed, test scores
//! aggregated as mean plus sample standard deviation.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use sacl_core::data::jsonl;
use sacl_core::eval::evaluate_split;
use sacl_core::model::checkpoint::save_model;
use sacl_core::seeds::{self, Stream};
use sacl_core::trainer::{fit_many, RunLog};
use sacl_core::{Error, Result};

use crate::commands::Aggregate;
use crate::config::load_train_file;
use crate::manifest::{resolve_out_dir, resolve_threads, OutDir, RunManifest};

#[derive(Args)]
pub struct TrainArgs {
    /// Training config (.json or .toml) with [model] and [train] sections.
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset directory holding meta.json and the three .jsonl splits.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory (or set SACL_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of independent runs.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Master seed; per-run seeds derive from it.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Parallel training runs (or set SACL_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Serialize)]
struct TrainRunRecord {
    seed: u64,
    checkpoint: String,
    test_accuracy: f64,
    test_weighted_f1: f64,
    test_macro_f1: f64,
    log: RunLog,
}

#[derive(Serialize)]
struct TrainAggregate {
    runs: usize,
    seeds: Vec<u64>,
    test_weighted_f1: Aggregate,
    test_accuracy: Aggregate,
    test_macro_f1: Aggregate,
    best_val_weighted_f1: Aggregate,
}

pub fn run(args: TrainArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".to_string()));
    }
    let file = load_train_file(&args.config)?;
    let (train, meta) = jsonl::load_split(&args.data, "train")?;
    let (val, _) = jsonl::load_split(&args.data, "val")?;
    let (test, _) = jsonl::load_split(&args.data, "test")?;
    if meta.d_u != file.model.config.d_u {
        return Err(Error::Config(format!(
            "config d_u = {} but dataset d_u = {}",
            file.model.config.d_u, meta.d_u
        )));
    }
    if meta.num_classes() != file.model.config.num_classes {
        return Err(Error::Config(format!(
            "config num_classes = {} but dataset has {} labels",
            file.model.config.num_classes,
            meta.num_classes()
        )));
    }

    let run_seeds: Vec<u64> =
        (0..args.seeds).map(|i| seeds::derive(args.seed, Stream::TrainRun, i as u64)).collect();
    let threads = resolve_threads(args.threads)?;
    let results = fit_many(
        &file.model.config,
        file.model.kind,
        &train,
        &val,
        &file.train,
        &run_seeds,
        threads,
    )?;

    let mut out = OutDir::create(&resolve_out_dir(args.out)?)?;
    let mut accuracy = Vec::new();
    let mut weighted_f1 = Vec::new();
    let mut macro_f1 = Vec::new();
    let mut best_val = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        let eval = evaluate_split(&result.model, &test, file.train.batch_size)?;
        let checkpoint_name = format!("run{}.checkpoint.json", i);
        save_model(&result.model, &meta.label_names, &out.join(&checkpoint_name))?;
        out.record(&checkpoint_name);
        let record = TrainRunRecord {
            seed: run_seeds[i],
            checkpoint: checkpoint_name,
            test_accuracy: eval.report.accuracy,
            test_weighted_f1: eval.report.weighted_f1,
            test_macro_f1: eval.report.macro_f1,
            log: result.log,
        };
        out.write_json(&format!("run{}.log.json", i), &record)?;
        println!(
            "run {}  seed {:>20}  best epoch {:>3}  test acc {:.4}  test wF1 {:.4}",
            i, record.seed, record.log.best_epoch, record.test_accuracy, record.test_weighted_f1
        );
        accuracy.push(record.test_accuracy);
        weighted_f1.push(record.test_weighted_f1);
        macro_f1.push(record.test_macro_f1);
        best_val.push(record.log.best_val_weighted_f1);
    }

    let aggregate = TrainAggregate {
        runs: args.seeds,
        seeds: run_seeds.clone(),
        test_weighted_f1: Aggregate::from_values(weighted_f1),
        test_accuracy: Aggregate::from_values(accuracy),
        test_macro_f1: Aggregate::from_values(macro_f1),
        best_val_weighted_f1: Aggregate::from_values(best_val),
    };
    println!(
        "aggregate over {} runs: test wF1 {}  test acc {}",
        aggregate.runs, aggregate.test_weighted_f1.display, aggregate.test_accuracy.display
    );
    out.write_json("aggregate.json", &aggregate)?;

    let mut manifest = RunManifest::new(
        "train",
        args.seed,
        run_seeds,
        serde_json::json!({
            "config_path": args.config.display().to_string(),
            "data": args.data.display().to_string(),
            "runs": args.seeds,
            "threads": threads,
            "model": &file.model,
            "train": &file.train,
        }),
    );
    manifest.inputs = vec![args.config.display().to_string(), args.data.display().to_string()];
    out.finish(manifest)
}
