use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use vessel_scales::io::AnyVolume;
use vessel_scales::phantom::PhantomSpec;

use crate::output::{stem, OutputFormat, Staging};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Phantom spec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Nrrd)]
    format: OutputFormat,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    spec: PathBuf,
    rasterization: &'static str,
    foreground_voxels: usize,
    n_branches: usize,
    outputs: Vec<String>,
}

pub fn run(args: Args) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("cannot read {}", args.spec.display()))?;
    let spec = PhantomSpec::from_json(&text)
        .with_context(|| format!("parsing {}", args.spec.display()))?;
    let phantom = spec.generate()?;
    let name = stem(&args.spec)?;

    let mut staging = Staging::new(&args.out_dir)?;
    let mut outputs = Vec::new();
    let mask: AnyVolume = phantom.mask.clone().into();
    outputs.extend(staging.volume(&format!("{name}_mask"), &mask, args.format)?);
    let labels: AnyVolume = phantom.labels.into();
    outputs.extend(staging.volume(&format!("{name}_labels"), &labels, args.format)?);
    outputs.push(staging.bytes(&format!("{name}_table.csv"), &phantom.table.to_csv_bytes()?)?);
    let manifest = Manifest {
        tool: "vessel-scales",
        version: env!("CARGO_PKG_VERSION"),
        command: "synth",
        spec: args.spec.clone(),
        rasterization: "capsules on voxel centers at index*spacing; labels from the nearest containing segment, ties to the lower id",
        foreground_voxels: phantom.mask.count(),
        n_branches: phantom.table.len(),
        outputs,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    staging.bytes("manifest.json", &text)?;
    staging.commit()
}
