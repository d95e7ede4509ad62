//! `sacl attack`: robustness curves over an attack-budget grid, for one
//! checkpoint or several side by side.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use sacl_core::adversarial::NormQ;
use sacl_core::eval::{robustness_curve, AttackKind};
use sacl_core::metrics::robustness::RobustnessPoint;
use sacl_core::seeds::{self, Stream};
use sacl_core::{Error, Result};

use crate::commands::load_model_and_split;
use crate::manifest::{resolve_out_dir, OutDir, RunManifest};

#[derive(Args)]
pub struct AttackArgs {
    /// Checkpoint file; repeat the flag to compare several models on the
    /// same grid.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Which split to attack.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Attack budgets, comma separated and strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    /// Perturbation placement: contextual, feature, random_contextual, or
    /// random_feature.
    #[arg(long, default_value = "contextual", value_parser = parse_kind)]
    pub kind: AttackKind,
    /// Norm the budget applies to: l2 or linf.
    #[arg(long, default_value = "l2", value_parser = parse_norm)]
    pub norm: NormQ,
    /// Master seed for random attacks.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Repetitions to average for random attacks (deterministic attacks
    /// ignore extra repetitions).
    #[arg(long, default_value_t = 1)]
    pub attack_seeds: usize,
    /// Output directory (or set SACL_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dialogues per forward pass.
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
}

fn parse_kind(s: &str) -> std::result::Result<AttackKind, String> {
    match s {
        "contextual" => Ok(AttackKind::Contextual),
        "feature" => Ok(AttackKind::Feature),
        "random_contextual" => Ok(AttackKind::RandomContextual),
        "random_feature" => Ok(AttackKind::RandomFeature),
        other => Err(format!("unknown attack kind `{}`", other)),
    }
}

fn parse_norm(s: &str) -> std::result::Result<NormQ, String> {
    match s {
        "l2" => Ok(NormQ::L2),
        "linf" | "l_inf" => Ok(NormQ::LInf),
        other => Err(format!("unknown norm `{}` (expected l2 or linf)", other)),
    }
}

#[derive(Serialize)]
struct ModelCurve {
    checkpoint: String,
    points: Vec<RobustnessPoint>,
}

#[derive(Serialize)]
struct AttackReport {
    kind: AttackKind,
    norm: NormQ,
    epsilons: Vec<f64>,
    attack_seeds: usize,
    models: Vec<ModelCurve>,
    /// Across-model mean at each budget; present with two or more models.
    #[serde(skip_serializing_if = "Option::is_none")]
    mean: Option<Vec<RobustnessPoint>>,
}

fn mean_points(curves: &[ModelCurve]) -> Vec<RobustnessPoint> {
    let n = curves.len() as f64;
    (0..curves[0].points.len())
        .map(|i| RobustnessPoint {
            epsilon: curves[0].points[i].epsilon,
            accuracy: curves.iter().map(|c| c.points[i].accuracy).sum::<f64>() / n,
            weighted_f1: curves.iter().map(|c| c.points[i].weighted_f1).sum::<f64>() / n,
        })
        .collect()
}

fn curves_csv(report: &AttackReport) -> String {
    let mut header = String::from("epsilon");
    for i in 0..report.models.len() {
        let _ = write!(header, ",acc_{},wf1_{}", i, i);
    }
    if report.mean.is_some() {
        header.push_str(",mean_acc,mean_wf1");
    }
    let mut csv = header;
    csv.push('\n');
    for (row, &epsilon) in report.epsilons.iter().enumerate() {
        let _ = write!(csv, "{}", epsilon);
        for model in &report.models {
            let p = &model.points[row];
            let _ = write!(csv, ",{},{}", p.accuracy, p.weighted_f1);
        }
        if let Some(mean) = &report.mean {
            let _ = write!(csv, ",{},{}", mean[row].accuracy, mean[row].weighted_f1);
        }
        csv.push('\n');
    }
    csv
}

pub fn run(args: AttackArgs) -> Result<()> {
    if args.eps.is_empty() {
        return Err(Error::Config("--eps needs at least one budget".to_string()));
    }
    if let Some(bad) = args.eps.iter().find(|&&e| e < 0.0) {
        return Err(Error::Config(format!("attack budgets must be non-negative, got {}", bad)));
    }
    for pair in args.eps.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Config(format!(
                "attack budgets must strictly increase, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if args.attack_seeds == 0 {
        return Err(Error::Config("--attack-seeds must be at least 1".to_string()));
    }

    let mut models = Vec::new();
    for path in &args.checkpoint {
        let (model, _, conversations, _) =
            load_model_and_split(path, &args.data, &args.split)?;
        // Repetitions only matter for the random baselines; gradient
        // attacks are deterministic, so their repetition mean is just the
        // single curve.
        let reps = match args.kind {
            AttackKind::Contextual | AttackKind::Feature => 1,
            AttackKind::RandomContextual | AttackKind::RandomFeature => args.attack_seeds,
        };
        let mut curves = Vec::with_capacity(reps);
        for rep in 0..reps {
            let rep_seed = seeds::derive(args.seed, Stream::Crt, rep as u64);
            curves.push(robustness_curve(
                &model,
                &conversations,
                &args.eps,
                args.kind,
                args.norm,
                args.batch_size,
                rep_seed,
            )?);
        }
        let n = curves.len() as f64;
        let points: Vec<RobustnessPoint> = (0..args.eps.len())
            .map(|i| RobustnessPoint {
                epsilon: args.eps[i],
                accuracy: curves.iter().map(|c| c.points[i].accuracy).sum::<f64>() / n,
                weighted_f1: curves.iter().map(|c| c.points[i].weighted_f1).sum::<f64>() / n,
            })
            .collect();
        models.push(ModelCurve { checkpoint: path.display().to_string(), points });
    }

    let mean = (models.len() > 1).then(|| mean_points(&models));
    let report = AttackReport {
        kind: args.kind,
        norm: args.norm,
        epsilons: args.eps.clone(),
        attack_seeds: args.attack_seeds,
        models,
        mean,
    };

    let mut out = OutDir::create(&resolve_out_dir(args.out)?)?;
    out.write_json("curves.json", &report)?;
    out.write_text("curves.csv", &curves_csv(&report))?;

    for model in &report.models {
        println!("{}", model.checkpoint);
        for p in &model.points {
            println!(
                "  eps {:>8}  accuracy {:.4}  weighted F1 {:.4}",
                p.epsilon, p.accuracy, p.weighted_f1
            );
        }
    }

    let mut manifest = RunManifest::new(
        "attack",
        args.seed,
        (0..args.attack_seeds).map(|r| seeds::derive(args.seed, Stream::Crt, r as u64)).collect(),
        serde_json::json!({
            "checkpoints": report.models.iter().map(|m| m.checkpoint.clone()).collect::<Vec<_>>(),
            "data": args.data.display().to_string(),
            "split": args.split,
            "eps": args.eps,
            "kind": args.kind,
            "norm": args.norm,
            "attack_seeds": args.attack_seeds,
            "batch_size": args.batch_size,
        }),
    );
    manifest.inputs = args
        .checkpoint
        .iter()
        .map(|p| p.display().to_string())
        .chain([args.data.display().to_string()])
        .collect();
    out.finish(manifest)
}
