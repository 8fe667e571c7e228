//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vessel_scales::io::{save_volume, AnyVolume};
use vessel_scales::loss::{
    contrastive_loss, finite_difference_check, soft_dice_loss, total_loss, weighted_cross_entropy,
    ClassWeights, EmbeddingBatch, LossConfig, ProbabilityField,
};
use vessel_scales::metrics::{cl_dice, dice, evaluate, hausdorff, jaccard};
use vessel_scales::phantom::{PhantomSpec, Segment};
use vessel_scales::pipeline::{decompose, DecomposeParams};
use vessel_scales::skeleton::{skeletonize, Skeleton};
use vessel_scales::volume::{connected_components, Connectivity, Dims, MaskVolume, Spacing};

use common::{random_tree, TreeShape};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn seg(start: [f64; 3], end: [f64; 3], radius_mm: f64, id: u32) -> Segment {
    Segment {
        start,
        end,
        radius_mm,
        id,
    }
}

fn components(mask: &MaskVolume) -> usize {
    connected_components(mask, Connectivity::TwentySix).1
}

fn partition_identity() -> Outcome {
    let mut worst = Duration::ZERO;
    for seed in 0..20u64 {
        let n = [96, 112, 128][seed as usize % 3];
        let spec = random_tree(
            seed,
            TreeShape {
                dims: [n, n, n],
                spacing: [1.0; 3],
                segments: 15,
                root_radius: (4.0, 7.0),
                min_radius: 1.2,
            },
        );
        let mask = spec.generate().map_err(|e| e.to_string())?.mask;
        let t = Instant::now();
        let d = decompose(&mask, DecomposeParams::default()).map_err(|e| e.to_string())?;
        let elapsed = t.elapsed();
        worst = worst.max(elapsed);
        check(elapsed < Duration::from_secs(10), || {
            format!("tree {seed} took {elapsed:?}")
        })?;
        check(d.scales.masks.len() == 3, || {
            format!("tree {seed}: {} masks", d.scales.masks.len())
        })?;
        for (i, &m) in mask.data().iter().enumerate() {
            let hits = d.scales.masks.iter().filter(|s| s.data()[i]).count();
            check(hits == m as usize, || {
                format!("tree {seed}: voxel {i} covered {hits} times")
            })?;
        }
    }
    Ok(format!(
        "20 trees up to 128^3, disjoint and exact union, slowest {worst:.2?}"
    ))
}

fn radius_recovery() -> Outcome {
    let mut report = Vec::new();
    for r in [2.0, 3.0, 5.0, 8.0] {
        let spec = PhantomSpec {
            dims: [48, 48, 72],
            spacing_mm: [1.0; 3],
            segments: vec![seg([24.0, 24.0, 12.0], [24.0, 24.0, 60.0], r, 1)],
        };
        let mask = spec.generate().map_err(|e| e.to_string())?.mask;
        let params = DecomposeParams {
            m: 8,
            ..DecomposeParams::default()
        };
        let d = decompose(&mask, params).map_err(|e| e.to_string())?;
        check(d.table.len() == 1, || {
            format!("r = {r}: {} branches", d.table.len())
        })?;
        let est = d.table.rows[0].radius_mm;
        check((est - r).abs() <= 0.8, || {
            format!("r = {r}: estimate {est:.3}")
        })?;
        report.push(format!("{r}->{est:.2}"));
    }
    Ok(format!("|r_hat - r| <= 0.8 voxel: {}", report.join(", ")))
}

fn y_tree() -> Outcome {
    let spec = PhantomSpec {
        dims: [64, 40, 64],
        spacing_mm: [1.0; 3],
        segments: vec![
            seg([32.0, 20.0, 8.0], [32.0, 20.0, 32.0], 6.0, 1),
            seg([32.0, 20.0, 32.0], [14.0, 20.0, 56.0], 2.0, 2),
            seg([32.0, 20.0, 32.0], [50.0, 20.0, 56.0], 2.0, 3),
        ],
    };
    let truth = spec.generate().map_err(|e| e.to_string())?;
    let d = decompose(&truth.mask, DecomposeParams::default()).map_err(|e| e.to_string())?;
    check(d.table.len() == 3, || format!("{} branches", d.table.len()))?;
    // map each recovered branch to the declared one it overlaps most
    let mut scale_of_declared = BTreeMap::new();
    for &(id, scale) in &d.scales.branch_scales {
        let mut votes = [0usize; 4];
        for (&l, &g) in d.branch_labels.data().iter().zip(truth.labels.data()) {
            if l == id {
                votes[g as usize] += 1;
            }
        }
        let declared = (1..4).max_by_key(|&k| votes[k]).unwrap();
        scale_of_declared.insert(declared, scale);
    }
    let expected = BTreeMap::from([(1, 3), (2, 1), (3, 1)]);
    check(scale_of_declared == expected, || {
        format!("scales by declared branch {scale_of_declared:?}")
    })?;
    let radii: Vec<String> = d
        .table
        .rows
        .iter()
        .map(|r| format!("{:.2}", r.radius_mm))
        .collect();
    Ok(format!(
        "3 branches, radii [{}], parent -> scale 3, children -> scale 1",
        radii.join(", ")
    ))
}

fn brute_hausdorff(a: &MaskVolume, b: &MaskVolume) -> f64 {
    let d = a.dims();
    let s = a.spacing();
    let directed = |from: &[usize], to: &[usize]| {
        from.iter()
            .map(|&i| {
                let c = d.coord(i);
                to.iter()
                    .map(|&j| s.sq_dist(c, d.coord(j)))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    let (fa, fb) = (a.foreground(), b.foreground());
    directed(&fa, &fb).max(directed(&fb, &fa)).sqrt()
}

fn random_mask(rng: &mut ChaCha8Rng, dims: Dims, spacing: Spacing, p: f64) -> MaskVolume {
    let data = (0..dims.len()).map(|_| rng.gen_bool(p)).collect();
    MaskVolume::from_vec(dims, spacing, data).unwrap()
}

fn metric_identities() -> Outcome {
    let tree = |seed| {
        random_tree(
            seed,
            TreeShape {
                dims: [48, 48, 48],
                spacing: [0.8, 0.8, 1.5],
                segments: 8,
                root_radius: (2.0, 3.5),
                min_radius: 0.9,
            },
        )
        .generate()
        .unwrap()
        .mask
    };
    let a = tree(1);
    let r = evaluate(&a, &a).map_err(|e| e.to_string())?;
    check(
        r.dsc == 1.0 && r.jacc == 1.0 && r.cldsc == 1.0 && r.hd_mm == 0.0,
        || format!("identical masks gave {r:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut largest = 0;
    for k in 0..100u64 {
        let (x, y) = if k % 2 == 0 {
            (tree(100 + k), tree(200 + k))
        } else {
            let dims = Dims::new(
                rng.gen_range(4..30),
                rng.gen_range(4..30),
                rng.gen_range(4..20),
            )
            .unwrap();
            let s = Spacing::new(
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
            )
            .unwrap();
            let p = rng.gen_range(0.01..0.5);
            (
                random_mask(&mut rng, dims, s, p),
                random_mask(&mut rng, dims, s, p * 0.7),
            )
        };
        let dsc = dice(&x, &y).unwrap();
        let jacc = jaccard(&x, &y).unwrap();
        check((jacc - dsc / (2.0 - dsc)).abs() <= 1e-12, || {
            format!("pair {k}: jacc {jacc} dsc {dsc}")
        })?;
        let h = hausdorff(&x, &y).unwrap();
        let total = x.count() + y.count();
        if total <= 20_000 && x.count() > 0 && y.count() > 0 {
            largest = largest.max(total);
            let brute = brute_hausdorff(&x, &y);
            check(h == brute, || {
                format!("pair {k}: hd {h} vs brute force {brute}")
            })?;
        }
    }
    Ok(format!(
        "identical -> (1, 1, 1, 0 mm); 100 pairs: jacc identity within 1e-12, HD equals brute force (up to {largest} voxels)"
    ))
}

fn tube(gap: bool) -> MaskVolume {
    // radius-1 capsule whose axis spans 30 voxel centers
    let spec = PhantomSpec {
        dims: [40, 9, 9],
        spacing_mm: [1.0; 3],
        segments: vec![seg([5.0, 4.0, 4.0], [34.0, 4.0, 4.0], 1.0, 1)],
    };
    let mut m = spec.generate().unwrap().mask;
    if gap {
        for i in 0..m.data().len() {
            if (19..22).contains(&m.dims().coord(i).x) {
                m.data_mut()[i] = false;
            }
        }
    }
    m
}

fn connectivity_sensitivity() -> Outcome {
    let (a, b) = (tube(false), tube(true));
    let dsc = dice(&a, &b).unwrap();
    let cl = cl_dice(&a, &b).unwrap();
    check(cl < dsc, || format!("clDSC {cl} not below DSC {dsc}"))?;
    Ok(format!("3-voxel gap: clDSC {cl:.5} < DSC {dsc:.5}"))
}

fn reconstruction_exactness() -> Outcome {
    let mut largest = 0;
    for seed in 0..25u64 {
        let spacing = if seed % 3 == 0 {
            [1.0, 1.0, 1.6]
        } else {
            [1.0; 3]
        };
        let spec = random_tree(
            1000 + seed,
            TreeShape {
                dims: [96, 96, 64],
                spacing,
                segments: 20,
                root_radius: (5.0, 8.0),
                min_radius: 1.0,
            },
        );
        let mask = spec.generate().map_err(|e| e.to_string())?.mask;
        check(mask.count() <= 50_000, || {
            format!("phantom {seed} has {} voxels", mask.count())
        })?;
        largest = largest.max(mask.count());
        let d = decompose(&mask, DecomposeParams::default()).map_err(|e| e.to_string())?;
        let dims = mask.dims();
        let s = mask.spacing();
        let skel: Vec<(usize, u32)> = d
            .labeled
            .indices()
            .iter()
            .copied()
            .zip(d.labeled.labels().iter().copied())
            .collect();
        for i in mask.foreground() {
            let c = dims.coord(i);
            let (_, label, _) = skel
                .iter()
                .map(|&(j, l)| (s.sq_dist(c, dims.coord(j)), l, j))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
                .unwrap();
            let got = d.branch_labels.data()[i];
            check(got == label, || {
                format!("phantom {seed}: voxel {c:?} labeled {got}, oracle {label}")
            })?;
        }
    }
    Ok(format!(
        "25 phantoms (up to {largest} voxels) match the brute-force oracle voxel for voxel"
    ))
}

fn skeleton_topology() -> Outcome {
    for seed in 0..50u64 {
        let spec = random_tree(
            5000 + seed,
            TreeShape {
                dims: [56, 56, 56],
                spacing: [1.0; 3],
                segments: 6,
                root_radius: (2.0, 5.0),
                min_radius: 1.0,
            },
        );
        let mask = spec.generate().map_err(|e| e.to_string())?.mask;
        let expected = components(&mask);
        check(expected == 1, || {
            format!("phantom {seed} is not connected ({expected} components)")
        })?;
        let skel = skeletonize(&mask);
        check(skel.indices().iter().all(|&i| mask.data()[i]), || {
            format!("phantom {seed}: skeleton leaves the mask")
        })?;
        let got = components(&skel.to_mask());
        check(got == expected, || {
            format!("phantom {seed}: {got} skeleton components, mask has {expected}")
        })?;
    }
    let dims = Dims::new(30, 5, 5).unwrap();
    let line = Skeleton::from_indices(
        dims,
        Spacing::unit(),
        (2..28).map(|x| dims.index([x, 2, 2].into())).collect(),
    );
    check(skeletonize(&line.to_mask()) == line, || {
        "straight line changed".into()
    })?;
    Ok("50 connected phantoms keep one component inside the mask; a straight line is a fixed point".into())
}

fn loss_kernels() -> Outcome {
    let b = EmbeddingBatch {
        tau: 1.0,
        vectors: vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        scales: vec![1, 1, 2],
    };
    let l = contrastive_loss(&b).map_err(|e| e.to_string())?.per_anchor[0].unwrap();
    let closed = (1.0 + (-1f64).exp()).ln();
    check((l - closed).abs() <= 1e-9, || {
        format!("closed form {l} vs {closed}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dims = Dims::new(8, 8, 8).unwrap();
    let g: Vec<bool> = (0..dims.len()).map(|_| rng.gen_bool(0.3)).collect();
    let gt = MaskVolume::from_vec(dims, Spacing::unit(), g).unwrap();
    let p: Vec<f64> = (0..dims.len()).map(|_| rng.gen_range(0.05..0.95)).collect();
    let field = |p: &[f64]| ProbabilityField::new(dims, p.to_vec()).unwrap();
    let dice_err = finite_difference_check(
        |p| {
            let r = soft_dice_loss(&field(p), &gt).unwrap();
            (r.value, r.grad)
        },
        &p,
        1e-5,
    );
    let w = ClassWeights::inverse_frequency(&gt);
    let ce_err = finite_difference_check(
        |p| {
            let r = weighted_cross_entropy(&field(p), &gt, w).unwrap();
            (r.value, r.grad)
        },
        &p,
        1e-6,
    );
    let (n, d) = (12, 16);
    let scales: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
    let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let con_err = finite_difference_check(
        |x| {
            let b = EmbeddingBatch {
                tau: 0.94,
                vectors: x.chunks(d).map(<[f64]>::to_vec).collect(),
                scales: scales.clone(),
            };
            let r = contrastive_loss(&b).unwrap();
            (r.loss, r.grad.concat())
        },
        &x,
        1e-5,
    );
    for (name, e) in [
        ("soft Dice", dice_err),
        ("weighted CE", ce_err),
        ("contrastive", con_err),
    ] {
        check(e < 1e-5, || format!("{name} gradient relative error {e:e}"))?;
    }
    let t = total_loss(1.0, &[1.0, 1.0, 1.0], 1.0, &LossConfig::default())
        .map_err(|e| e.to_string())?;
    check((t.total - 3.33).abs() <= 1e-12, || {
        format!("total {}", t.total)
    })?;
    Ok(format!(
        "log(1+e^-1) exact to 1e-9; gradient errors {dice_err:.1e}/{ce_err:.1e}/{con_err:.1e}; total 3.33"
    ))
}

fn throughput() -> Outcome {
    let spec = random_tree(
        42,
        TreeShape {
            dims: [256, 256, 128],
            spacing: [1.0; 3],
            segments: 120,
            root_radius: (8.0, 11.0),
            min_radius: 1.2,
        },
    );
    let mask = spec.generate().map_err(|e| e.to_string())?.mask;
    let t = Instant::now();
    let d = decompose(&mask, DecomposeParams::default()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    check(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "256x256x128, {} foreground voxels, {} branches in {elapsed:.2?}",
        mask.count(),
        d.table.len()
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vessel-scales"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

/// Every file in `dir` with its bytes.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let mut inputs = Vec::new();
    for seed in 0..4u64 {
        let spec = random_tree(
            300 + seed,
            TreeShape {
                dims: [64, 64, 64],
                spacing: [1.0, 1.0, 1.25],
                segments: 9,
                root_radius: (3.0, 5.0),
                min_radius: 1.0,
            },
        );
        let mask = spec.generate().map_err(|e| e.to_string())?.mask;
        let path = root.join(format!("tree{seed}.nrrd"));
        save_volume(&AnyVolume::from(mask), &path).map_err(|e| e.to_string())?;
        inputs.push(path.to_string_lossy().into_owned());
    }
    let mut snapshots = Vec::new();
    for (k, jobs) in ["1", "1", "4"].iter().enumerate() {
        let out = root.join(format!("out{k}"));
        let mut args = vec!["decompose", "--input"];
        args.extend(inputs.iter().map(String::as_str));
        let out_s = out.to_string_lossy().into_owned();
        args.extend(["--out-dir", &out_s, "--jobs", jobs]);
        run_cli(&args)?;
        snapshots.push(snapshot(&out));
    }
    check(snapshots[0] == snapshots[1], || {
        "repeated runs differ".into()
    })?;
    check(snapshots[0] == snapshots[2], || {
        "--jobs 1 and --jobs 4 differ".into()
    })?;
    Ok(format!(
        "{} output files byte-identical across 2 runs and --jobs 1/4",
        snapshots[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("partition identity", partition_identity),
        ("radius recovery", radius_recovery),
        ("Y-tree scale separation", y_tree),
        ("metric identities", metric_identities),
        ("connectivity sensitivity", connectivity_sensitivity),
        ("reconstruction exactness", reconstruction_exactness),
        ("skeleton topology", skeleton_topology),
        ("loss kernels", loss_kernels),
        ("throughput", throughput),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
