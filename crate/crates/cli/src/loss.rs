use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use vessel_scales::loss::{contrastive_loss, EmbeddingBatch};

use crate::output::emit;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Embedding batch JSON: `{"tau": .., "vectors": [[..]], "scales": [..]}`.
    #[arg(long)]
    input: PathBuf,
    /// Also report the gradient with respect to the input vectors.
    #[arg(long)]
    gradient: bool,
    #[arg(long, default_value = "-")]
    output: PathBuf,
}

#[derive(Debug, Serialize)]
struct Report {
    tau: f64,
    loss: f64,
    per_anchor: Vec<Option<f64>>,
    skipped_anchors: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradient: Option<Vec<Vec<f64>>>,
}

pub fn run(args: Args) -> Result<()> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let batch: EmbeddingBatch =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.input.display()))?;
    let r = contrastive_loss(&batch)?;
    let report = Report {
        tau: batch.tau,
        loss: r.loss,
        per_anchor: r.per_anchor,
        skipped_anchors: r.skipped_anchors,
        gradient: args.gradient.then_some(r.grad),
    };
    let mut out = serde_json::to_vec(&report)?;
    out.push(b'\n');
    emit(&args.output, &out)
}
