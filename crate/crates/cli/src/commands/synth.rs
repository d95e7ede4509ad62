//! `sacl synth`: generate a synthetic dataset and describe it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use sacl_core::data::synth::{generate, SynthConfig};
use sacl_core::data::{jsonl, Conversation};
use sacl_core::Result;

use crate::config::load_synth_config;
use crate::manifest::{resolve_out_dir, OutDir, RunManifest};

#[derive(Args)]
pub struct SynthArgs {
    /// Generator config (.json or .toml); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (or set SACL_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed for the generator.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn describe(split: &str, conversations: &[Conversation], label_names: &[String]) -> String {
    let dialogues = conversations.len();
    let utterances: usize = conversations.iter().map(Conversation::len).sum();
    let turns = utterances as f64 / dialogues as f64;
    let parties = conversations.iter().map(|c| c.speakers().len()).sum::<usize>() as f64
        / dialogues as f64;
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for conv in conversations {
        for u in &conv.utterances {
            *histogram.entry(u.label).or_insert(0) += 1;
        }
    }
    let classes = histogram
        .iter()
        .map(|(label, count)| {
            format!(
                "{}={} ({:.1}%)",
                label_names[*label],
                count,
                100.0 * *count as f64 / utterances as f64
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "{:<6} {:>5} dialogues {:>6} utterances  avg turns {:>5.1}  avg parties {:>4.2}\n       {}",
        split, dialogues, utterances, turns, parties, classes
    )
}

pub fn run(args: SynthArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => load_synth_config(path)?,
        None => SynthConfig::default(),
    };
    cfg.validate()?;
    let corpus = generate(&cfg, args.seed)?;

    let mut out = OutDir::create(&resolve_out_dir(args.out)?)?;
    jsonl::save_meta(&out.join("meta.json"), &corpus.meta)?;
    out.record("meta.json");
    for (name, split) in
        [("train", &corpus.train), ("val", &corpus.val), ("test", &corpus.test)]
    {
        let file = format!("{}.jsonl", name);
        jsonl::save_conversations(&out.join(&file), split)?;
        out.record(&file);
        println!("{}", describe(name, split, &corpus.meta.label_names));
    }

    let manifest = RunManifest::new(
        "synth",
        args.seed,
        vec![args.seed],
        serde_json::json!({
            "config_path": args.config.as_ref().map(|p| p.display().to_string()),
            "generator": &cfg,
        }),
    );
    out.finish(manifest)
}
