use std::fs::File;
use std::path::PathBuf;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use vessel_scales::branches::{BranchTable, DEFAULT_NEIGHBOURS};
use vessel_scales::io::load_volume;
use vessel_scales::pipeline::{decompose, DecomposeParams};
use vessel_scales::scales::{radius_statistics, RadiusStats};

use crate::output::{emit, positive, stem, thread_pool};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Branch tables (`.csv`) or binary masks, which are decomposed first.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NEIGHBOURS, value_parser = positive)]
    m: usize,
    /// CSV destination (`-` for stdout).
    #[arg(long, default_value = "-")]
    csv: PathBuf,
    /// Optional JSON destination (`-` for stdout).
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    jobs: usize,
}

#[derive(Debug, Serialize)]
struct Row {
    volume: String,
    #[serde(flatten)]
    stats: RadiusStats,
}

fn table_for(path: &PathBuf, m: usize) -> Result<BranchTable> {
    if path.extension().is_some_and(|e| e == "csv") {
        let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        return BranchTable::read_csv(f).with_context(|| format!("reading {}", path.display()));
    }
    let mask = load_volume(path)?
        .into_mask()
        .with_context(|| format!("{} is not a binary mask", path.display()))?;
    let params = DecomposeParams {
        m,
        ..DecomposeParams::default()
    };
    Ok(decompose(&mask, params)
        .with_context(|| format!("decomposing {}", path.display()))?
        .table)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run(args: Args) -> Result<()> {
    let pool = thread_pool(args.jobs)?;
    let rows: Vec<Row> = pool.install(|| {
        args.input
            .par_iter()
            .map(|p| {
                Ok(Row {
                    volume: stem(p)?,
                    stats: radius_statistics(&table_for(p, args.m)?),
                })
            })
            .collect::<Result<_>>()
    })?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["volume", "n_b", "min", "q1", "median", "q3", "max"])?;
    for r in &rows {
        let s = &r.stats;
        w.write_record([
            r.volume.clone(),
            s.n_b.to_string(),
            opt(s.min),
            opt(s.q1),
            opt(s.median),
            opt(s.q3),
            opt(s.max),
        ])?;
    }
    emit(&args.csv, &w.into_inner()?)?;
    if let Some(target) = &args.json {
        let mut text = serde_json::to_vec_pretty(&rows)?;
        text.push(b'\n');
        emit(target, &text)?;
    }
    Ok(())
}
