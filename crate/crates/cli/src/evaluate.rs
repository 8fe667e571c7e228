use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use vessel_scales::io::load_volume;
use vessel_scales::metrics::{evaluate, MetricsReport};
use vessel_scales::volume::MaskVolume;

use crate::output::{emit, positive, thread_pool};
use crate::UsageError;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Ground-truth masks, paired with `--pred` by position.
    #[arg(long, num_args = 1.., required = true)]
    gt: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    /// JSON destination (`-` for stdout). One pair prints one object,
    /// several pairs an array.
    #[arg(long, conflicts_with = "csv")]
    json: Option<PathBuf>,
    /// CSV destination (`-` for stdout), one row per pair.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    jobs: usize,
}

fn load_mask(path: &Path) -> Result<MaskVolume> {
    load_volume(path)?
        .into_mask()
        .with_context(|| format!("{} is not a binary mask", path.display()))
}

fn csv_field(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "inf".to_string()
    }
}

pub fn run(args: Args) -> Result<()> {
    if args.gt.len() != args.pred.len() {
        return Err(UsageError(format!(
            "{} ground-truth masks but {} predictions",
            args.gt.len(),
            args.pred.len()
        ))
        .into());
    }
    let pool = thread_pool(args.jobs)?;
    let reports: Vec<MetricsReport> = pool.install(|| {
        args.gt
            .par_iter()
            .zip(&args.pred)
            .map(|(g, p)| {
                let gt = load_mask(g)?;
                let pred = load_mask(p)?;
                evaluate(&gt, &pred)
                    .with_context(|| format!("comparing {} with {}", g.display(), p.display()))
            })
            .collect::<Result<_>>()
    })?;

    if let Some(target) = &args.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["gt", "pred", "dsc", "jacc", "cldsc", "hd_mm"])?;
        for ((g, p), r) in args.gt.iter().zip(&args.pred).zip(&reports) {
            w.write_record([
                g.display().to_string(),
                p.display().to_string(),
                r.dsc.to_string(),
                r.jacc.to_string(),
                r.cldsc.to_string(),
                csv_field(r.hd_mm),
            ])?;
        }
        return emit(target, &w.into_inner()?);
    }
    let target = args.json.unwrap_or_else(|| PathBuf::from("-"));
    let mut text = if reports.len() == 1 {
        serde_json::to_vec(&reports[0])?
    } else {
        serde_json::to_vec(&reports)?
    };
    text.push(b'\n');
    emit(&target, &text)
}
