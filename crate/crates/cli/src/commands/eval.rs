//! `sacl eval`: score a checkpoint on one split, emitting the full report
//! as JSON plus per-class and confusion-matrix CSV tables.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use sacl_core::eval::evaluate_split;
use sacl_core::metrics::classification::ClassificationReport;
use sacl_core::Result;

use crate::commands::load_model_and_split;
use crate::manifest::{resolve_out_dir, OutDir, RunManifest};

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Which split to score.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Output directory (or set SACL_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dialogues per forward pass.
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
}

fn per_class_csv(report: &ClassificationReport, label_names: &[String]) -> String {
    let mut csv = String::from("class,label,precision,recall,f1,support\n");
    for (i, m) in report.per_class.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            i, label_names[i], m.precision, m.recall, m.f1, m.support
        );
    }
    csv
}

fn confusion_csv(label_names: &[String], rows: impl Iterator<Item = String>) -> String {
    let mut csv = String::from("true\\pred");
    for name in label_names {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for (name, row) in label_names.iter().zip(rows) {
        let _ = writeln!(csv, "{},{}", name, row);
    }
    csv
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn run(args: EvalArgs) -> Result<()> {
    let (model, label_names, conversations, _) =
        load_model_and_split(&args.checkpoint, &args.data, &args.split)?;
    let eval = evaluate_split(&model, &conversations, args.batch_size)?;
    let report = &eval.report;

    let mut out = OutDir::create(&resolve_out_dir(args.out)?)?;
    out.write_json("report.json", report)?;
    out.write_text("per_class.csv", &per_class_csv(report, &label_names))?;
    out.write_text(
        "confusion.csv",
        &confusion_csv(&label_names, report.confusion.counts.iter().map(|r| join(r))),
    )?;
    out.write_text(
        "confusion_normalized.csv",
        &confusion_csv(&label_names, report.confusion.normalized().iter().map(|r| join(r))),
    )?;

    println!(
        "{} on {}: accuracy {:.4}  weighted F1 {:.4}  macro F1 {:.4}",
        args.checkpoint.display(),
        args.split,
        report.accuracy,
        report.weighted_f1,
        report.macro_f1
    );
    for (i, m) in report.per_class.iter().enumerate() {
        println!(
            "  {:<12} precision {:.4}  recall {:.4}  f1 {:.4}  support {}",
            label_names[i], m.precision, m.recall, m.f1, m.support
        );
    }

    let mut manifest = RunManifest::new(
        "eval",
        0,
        Vec::new(),
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
            "split": args.split,
            "batch_size": args.batch_size,
        }),
    );
    manifest.inputs =
        vec![args.checkpoint.display().to_string(), args.data.display().to_string()];
    out.finish(manifest)
}
