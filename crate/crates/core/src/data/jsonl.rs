//! JSONL persistence: one dialogue per line, metadata in a JSON sidecar.
//!
//! The on-disk layout of a split directory is
//!
//! ```text
//! data/
//!   meta.json      {"d_u": 32, "label_names": ["joy", ...], "split": null}
//!   train.jsonl    {"dialogue_id": "...", "utterances": [...]}
//!   val.jsonl
//!   test.jsonl
//! ```
//!
//! where each utterance is `{"speaker": "A", "features": [...], "label": 0}`.
//! Parse failures report the 1-based line number of the offending dialogue.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_conversations, Conversation, DatasetMeta, Utterance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Serialize, Deserialize)]
struct WireUtterance {
    speaker: String,
    features: Vec<f64>,
    label: usize,
}

#[derive(Serialize, Deserialize)]
struct WireConversation {
    dialogue_id: String,
    utterances: Vec<WireUtterance>,
}

/// Reads conversations from a JSONL file, one dialogue per line.
pub fn load_conversations(path: &Path) -> Result<Vec<Conversation>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireConversation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(Conversation {
            dialogue_id: wire.dialogue_id,
            utterances: wire
                .utterances
                .into_iter()
                .map(|u| Utterance {
                    speaker: u.speaker,
                    features: Tensor::from_vec(u.features),
                    label: u.label,
                })
                .collect(),
        });
    }
    Ok(out)
}

/// Writes conversations as JSONL, one dialogue per line.
pub fn save_conversations(path: &Path, conversations: &[Conversation]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for conv in conversations {
        let wire = WireConversation {
            dialogue_id: conv.dialogue_id.clone(),
            utterances: conv
                .utterances
                .iter()
                .map(|u| WireUtterance {
                    speaker: u.speaker.clone(),
                    features: u.features.data().to_vec(),
                    label: u.label,
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &wire)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads the metadata sidecar.
pub fn load_meta(path: &Path) -> Result<DatasetMeta> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Writes the metadata sidecar as pretty-printed JSON.
pub fn save_meta(path: &Path, meta: &DatasetMeta) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, meta)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Loads `<dir>/<split>.jsonl` validated against `<dir>/meta.json`.
pub fn load_split(dir: &Path, split: &str) -> Result<(Vec<Conversation>, DatasetMeta)> {
    let meta = load_meta(&dir.join("meta.json"))?;
    let conversations = load_conversations(&dir.join(format!("{}.jsonl", split)))?;
    validate_conversations(&conversations, &meta)?;
    Ok((conversations, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Vec<Conversation>, DatasetMeta) {
        let convs = vec![Conversation {
            dialogue_id: "d0".into(),
            utterances: vec![
                Utterance {
                    speaker: "A".into(),
                    features: Tensor::from_vec(vec![0.25, -1.0 / 3.0]),
                    label: 0,
                },
                Utterance {
                    speaker: "B".into(),
                    features: Tensor::from_vec(vec![1e-17, 2.0f64.sqrt()]),
                    label: 1,
                },
            ],
        }];
        let meta = DatasetMeta {
            d_u: 2,
            label_names: vec!["a".into(), "b".into()],
            split: Some("train".into()),
        };
        (convs, meta)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (convs, meta) = sample();
        save_conversations(&dir.path().join("train.jsonl"), &convs).unwrap();
        save_meta(&dir.path().join("meta.json"), &meta).unwrap();
        let (back, meta_back) = load_split(dir.path(), "train").unwrap();
        assert_eq!(meta, meta_back);
        assert_eq!(convs.len(), back.len());
        for (a, b) in convs[0].utterances.iter().zip(&back[0].utterances) {
            assert_eq!(a.speaker, b.speaker);
            assert_eq!(a.label, b.label);
            for (x, y) in a.features.data().iter().zip(b.features.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"dialogue_id\":\"d0\",\"utterances\":[]}\nnot json at all\n",
        )
        .unwrap();
        match load_conversations(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other.map(|v| v.len())),
        }
    }

    #[test]
    fn load_split_validates_against_meta() {
        let dir = tempfile::tempdir().unwrap();
        let (convs, mut meta) = sample();
        meta.d_u = 3;
        save_conversations(&dir.path().join("train.jsonl"), &convs).unwrap();
        save_meta(&dir.path().join("meta.json"), &meta).unwrap();
        assert!(matches!(load_split(dir.path(), "train"), Err(Error::Data(_))));
    }
}
