//! `sacl cluster`: k-means over a checkpoint's learned representations,
//! scored against gold labels and by cluster geometry, with the raw
//! representations exported for external plotting.

use std::path::PathBuf;

use clap::Args;

use sacl_core::data::{write_representations_csv, UtteranceBatch};
use sacl_core::eval::{cluster_quality, evaluate_split};
use sacl_core::Result;

use crate::commands::load_model_and_split;
use crate::manifest::{resolve_out_dir, OutDir, RunManifest};

#[derive(Args)]
pub struct ClusterArgs {
    /// Checkpoint file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Which split to cluster.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Number of clusters; defaults to the label vocabulary size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for k-means restarts.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory (or set SACL_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dialogues per forward pass.
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
}

pub fn run(args: ClusterArgs) -> Result<()> {
    let (model, label_names, conversations, _) =
        load_model_and_split(&args.checkpoint, &args.data, &args.split)?;
    let k = args.k.unwrap_or(label_names.len());
    let eval = evaluate_split(&model, &conversations, args.batch_size)?;
    let report = cluster_quality(&eval.representations, &eval.labels, k, args.seed)?;

    let mut out = OutDir::create(&resolve_out_dir(args.out)?)?;
    out.write_json("clustering_report.json", &report)?;
    let batch = UtteranceBatch::new(conversations.iter().collect());
    let mut csv = Vec::new();
    write_representations_csv(&mut csv, &batch, &eval.representations)?;
    out.write_text(
        "representations.csv",
        std::str::from_utf8(&csv).expect("csv writer emits utf-8"),
    )?;

    println!(
        "k={} on {} utterances: ARI {:.4}  NMI {:.4}  FMI {:.4}",
        report.k,
        eval.labels.len(),
        report.ari,
        report.nmi,
        report.fmi
    );
    println!(
        "geometry: silhouette {:.4}  Calinski-Harabasz {:.2}  Davies-Bouldin {:.4}",
        report.silhouette, report.calinski_harabasz, report.davies_bouldin
    );

    let mut manifest = RunManifest::new(
        "cluster",
        args.seed,
        vec![args.seed],
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
            "split": args.split,
            "k": k,
            "batch_size": args.batch_size,
        }),
    );
    manifest.inputs =
        vec![args.checkpoint.display().to_string(), args.data.display().to_string()];
    out.finish(manifest)
}
