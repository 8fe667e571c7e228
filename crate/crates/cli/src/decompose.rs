use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;
use vessel_scales::branches::{RadiusMetric, DEFAULT_NEIGHBOURS, DEFAULT_PRUNE_FACTOR};
use vessel_scales::io::{load_volume, AnyVolume};
use vessel_scales::pipeline::{decompose, DecomposeParams, Decomposition};
use vessel_scales::scales::{Estimator, DEFAULT_SCALES};
use vessel_scales::volume::{resample_nearest, Dims, MaskVolume};

use crate::output::{at_least_two, positive, thread_pool, unique_stems, OutputFormat, Staging};
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    /// Distance to the exposed faces of surface voxels.
    Face,
    /// Distance to surface voxel centers.
    Center,
}

impl From<MetricArg> for RadiusMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Face => RadiusMetric::BoundaryFace,
            MetricArg::Center => RadiusMetric::VoxelCenter,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Binary mask volumes (NRRD or raw+JSON).
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Local radius is the distance to the m-th nearest surface voxel.
    #[arg(long, default_value_t = DEFAULT_NEIGHBOURS, value_parser = positive)]
    m: usize,
    /// Number of scales.
    #[arg(long, default_value_t = DEFAULT_SCALES, value_parser = at_least_two)]
    scales: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Nrrd)]
    format: OutputFormat,
    /// Volumes processed in parallel.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    jobs: usize,
    /// Spur-pruning factor relative to the junction radius; 0 disables.
    #[arg(long, default_value_t = DEFAULT_PRUNE_FACTOR)]
    prune_factor: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::Face)]
    radius_metric: MetricArg,
    /// Nearest-neighbour resampling to NXxNYxNZ before decomposition.
    #[arg(long, value_parser = parse_dims)]
    resample: Option<Dims>,
    /// Report wall-clock time per volume on stderr.
    #[arg(long)]
    timings: bool,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let n: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected NXxNYxNZ, got `{s}`"))?;
    if n.len() != 3 {
        return Err(format!("expected NXxNYxNZ, got `{s}`"));
    }
    Dims::new(n[0], n[1], n[2]).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct Parameters {
    m: usize,
    scales: usize,
    connectivity: u8,
    quantile_estimator: &'static str,
    threshold_rule: &'static str,
    radius_metric: RadiusMetric,
    prune_factor: f64,
    thinning_order: &'static str,
    tie_rules: TieRules,
    resample: Option<[usize; 3]>,
    format: &'static str,
}

#[derive(Debug, Serialize)]
struct TieRules {
    reconstruction: &'static str,
    junction: &'static str,
    threshold_boundary: &'static str,
    branch_ids: &'static str,
}

#[derive(Debug, Serialize)]
struct VolumeEntry {
    input: PathBuf,
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    foreground_voxels: usize,
    skeleton_voxels: usize,
    pruned_voxels: usize,
    n_branches: usize,
    estimator: Estimator,
    thresholds_mm: Vec<f64>,
    scale_voxels: Vec<usize>,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    parameters: Parameters,
    volumes: Vec<VolumeEntry>,
}

fn load_mask(path: &Path, resample: Option<Dims>) -> Result<MaskVolume> {
    let mask = load_volume(path)?
        .into_mask()
        .with_context(|| format!("{} is not a binary mask", path.display()))?;
    Ok(match resample {
        Some(d) => resample_nearest(&mask, d),
        None => mask,
    })
}

pub fn run(args: Args) -> Result<()> {
    let start = Instant::now();
    if !(args.prune_factor.is_finite() && args.prune_factor >= 0.0) {
        return Err(UsageError(format!(
            "--prune-factor must be >= 0, got {}",
            args.prune_factor
        ))
        .into());
    }
    let stems = unique_stems(&args.input)?;
    let params = DecomposeParams {
        m: args.m,
        scales: args.scales,
        prune_factor: args.prune_factor,
        radius_metric: args.radius_metric.into(),
    };

    let pool = thread_pool(args.jobs)?;
    let results: Vec<(MaskVolume, Decomposition, f64)> = pool.install(|| {
        args.input
            .par_iter()
            .map(|path| {
                let t = Instant::now();
                let mask = load_mask(path, args.resample)?;
                let d = decompose(&mask, params)
                    .with_context(|| format!("decomposing {}", path.display()))?;
                Ok((mask, d, t.elapsed().as_secs_f64() * 1e3))
            })
            .collect::<Result<_>>()
    })?;

    let mut staging = Staging::new(&args.out_dir)?;
    let mut volumes = Vec::new();
    for ((path, stem), result) in args.input.iter().zip(&stems).zip(results) {
        let (mask, d, ms) = result;
        let mut outputs = Vec::new();
        let skel: AnyVolume = d.skeleton.to_mask().into();
        outputs.extend(staging.volume(&format!("{stem}_skeleton"), &skel, args.format)?);
        let labels: AnyVolume = d.branch_labels.clone().into();
        outputs.extend(staging.volume(&format!("{stem}_branches"), &labels, args.format)?);
        outputs.push(staging.bytes(&format!("{stem}_branches.csv"), &d.table.to_csv_bytes()?)?);
        for (s, m) in d.scales.masks.iter().enumerate() {
            let v: AnyVolume = m.clone().into();
            outputs.extend(staging.volume(&format!("{stem}_scale{}", s + 1), &v, args.format)?);
        }
        volumes.push(VolumeEntry {
            input: path.clone(),
            dims: mask.dims().as_array(),
            spacing_mm: mask.spacing().0,
            foreground_voxels: mask.count(),
            skeleton_voxels: d.skeleton.len(),
            pruned_voxels: d.raw_skeleton.len().saturating_sub(d.skeleton.len()),
            n_branches: d.table.len(),
            estimator: d.scales.thresholds.estimator,
            thresholds_mm: d.scales.thresholds.values.clone(),
            scale_voxels: d.scales.masks.iter().map(MaskVolume::count).collect(),
            outputs,
        });
        if args.timings {
            eprintln!("{stem}: {ms:.1} ms");
        }
    }

    let manifest = Manifest {
        tool: "vessel-scales",
        version: env!("CARGO_PKG_VERSION"),
        command: "decompose",
        parameters: Parameters {
            m: params.m,
            scales: params.scales,
            connectivity: 26,
            quantile_estimator:
                "linear interpolation at h = (n-1)p; Q1/Q3 for 3 scales, k/S otherwise",
            threshold_rule: "scale = 1 + number of thresholds strictly below the branch radius",
            radius_metric: params.radius_metric,
            prune_factor: params.prune_factor,
            thinning_order: "U,D,N,S,E,W",
            tie_rules: TieRules {
                reconstruction: "nearest skeleton voxel; equal distances go to the lower branch id",
                junction: "junction voxels take the lowest adjacent branch id",
                threshold_boundary: "a radius equal to a threshold goes to the smaller scale",
                branch_ids: "ordered by the smallest linear index of each branch",
            },
            resample: args.resample.map(|d| d.as_array()),
            format: args.format.name(),
        },
        volumes,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    staging.bytes("manifest.json", &text)?;
    staging.commit()?;
    if args.timings {
        eprintln!("total: {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(())
}
