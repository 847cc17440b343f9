//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Numeric arguments select criteria, e.g.
//! `cargo test --release --test acceptance -- 1 3`. Without arguments the
//! two training criteria (7 and 8, hours of CPU) print SKIP unless
//! `INFOCLUSTER_ACCEPT_ALL=1` is set.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use infocluster::baseline::{flatten_images, kmeans};
use infocluster::cli::{export_assignments, export_cluster_montage, hard_assignments};
use infocluster::dataset::{generate_synthetic, truth_labels, Factor, ImageRecord, SynthSpec};
use infocluster::evaluate::{effect_validation, nmi, purity, silhouette, ClassifierConfig};
use infocluster::infogan::gradcheck::{check_discriminator, check_generator_q, miniature_checkpoint};
use infocluster::infogan::{classify, loss_generator_q, sample_latent, GanCheckpoint, LatentSpec, TrainConfig};
use infocluster::nn::Tensor;
use infocluster::preprocess::{apply, assign_to_grid, GridSpec, Mode};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1
const PRE_IMAGES: usize = 1000;
const PRE_CONST_TOL: f64 = 1e-6;
const PRE_BUDGET: Duration = Duration::from_secs(60);
// Criterion 2
const ASSIGN_INSTANCES: usize = 200;
const ASSIGN_MAX_N: usize = 8;
const ASSIGN_BUDGET: Duration = Duration::from_secs(60);
// Criterion 3
const SIL_INSTANCES: usize = 100;
const SIL_MAX_N: usize = 60;
const SIL_MAX_K: usize = 5;
const SIL_TOL: f64 = 1e-9;
// Criterion 4
const LAMBDA0_BATCHES: usize = 50;
const LAMBDA0_TOL: f64 = 1e-12;
// Criterion 5
const GRAD_PARAMS: usize = 20;
const GRAD_STEP: f64 = 1e-3;
const GRAD_TOL: f64 = 1e-3;
// Criterion 6
const POSTERIOR_IMAGES: usize = 1000;
const POSTERIOR_TOL: f64 = 1e-6;
// Criteria 7 and 8
const RECOVERY_IMAGES: usize = 2000;
const RECOVERY_K: usize = 4;
const RECOVERY_EPOCHS: usize = 200;
const RECOVERY_WIDTH: usize = 32;
const RECOVERY_SEEDS: [u64; 3] = [1, 2, 3];
const RECOVERY_CORPUS_SEED: u64 = 0;
const MIN_PURITY: f64 = 0.7;
const MIN_NMI: f64 = 0.5;
const EFFECT_SEED: u64 = 0;
const MIN_EFFECT_MARGIN: f64 = 0.05;
const LONG: [usize; 2] = [7, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_spec(rng: &mut ChaCha8Rng, n_images: usize) -> SynthSpec {
    let mut factors = vec![
        (Factor::Perspective, 4),
        (Factor::ColorSystem, rng.gen_range(2..=6)),
        (Factor::GrayScale, 4),
    ];
    factors.shuffle(rng);
    factors.truncate(rng.gen_range(1..=3));
    SynthSpec::new(n_images, &factors, rng.gen())
}

fn in_unit_range(r: &ImageRecord<f32>) -> bool {
    r.pixels.iter().all(|v| (0.0..=1.0).contains(v))
}

fn preprocessing_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut records = Vec::new();
    while records.len() < PRE_IMAGES {
        records.extend(generate_synthetic::<f32>(&random_spec(&mut rng, 100)).unwrap());
    }
    let mut worst_const = 0.0f64;
    for r in &records {
        let m = apply(r, Mode::Mask).unwrap();
        if apply(&m, Mode::Mask).unwrap().pixels != m.pixels {
            return outcome(false, format!("mask not idempotent on {}", r.id));
        }
        let i = apply(r, Mode::Interp).unwrap();
        let seg = r.seg.as_ref().unwrap();
        let mut fill: Option<[f32; 3]> = None;
        for (p, (a, b)) in r.pixels.chunks(3).zip(i.pixels.chunks(3)).enumerate() {
            if seg.is_building(p) {
                if a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits()) {
                    return outcome(false, format!("interp changed a building pixel of {}", r.id));
                }
            } else {
                let f = *fill.get_or_insert([b[0], b[1], b[2]]);
                for c in 0..3 {
                    worst_const = worst_const.max((b[c] - f[c]).abs() as f64);
                }
            }
        }
        let rf = apply(r, Mode::Rf).unwrap();
        if !(in_unit_range(&m) && in_unit_range(&i) && in_unit_range(&rf)) {
            return outcome(false, format!("output outside [0,1] for {}", r.id));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_const <= PRE_CONST_TOL && elapsed < PRE_BUDGET,
        format!(
            "{} images, non-building spread {worst_const:.1e} (tol {PRE_CONST_TOL:.0e}), {:.1}s",
            records.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn cost_of(points: &[(f64, f64)], grid: &GridSpec, mapping: &[usize]) -> f64 {
    let mut total = 0.0;
    for (p, &cell) in points.iter().zip(mapping) {
        let cy = ((cell / grid.columns) as f64 + 0.5) / grid.rows as f64;
        let cx = ((cell % grid.columns) as f64 + 0.5) / grid.columns as f64;
        total += (p.0 - cy).powi(2) + (p.1 - cx).powi(2);
    }
    total
}

/// Minimum over every injective point → cell map.
fn exhaustive_optimum(points: &[(f64, f64)], grid: &GridSpec) -> f64 {
    fn rec(points: &[(f64, f64)], grid: &GridSpec, used: &mut Vec<bool>, mapping: &mut Vec<usize>, best: &mut f64) {
        if mapping.len() == points.len() {
            *best = best.min(cost_of(points, grid, mapping));
            return;
        }
        for cell in 0..used.len() {
            if !used[cell] {
                used[cell] = true;
                mapping.push(cell);
                rec(points, grid, used, mapping, best);
                mapping.pop();
                used[cell] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(points, grid, &mut vec![false; grid.cells()], &mut Vec::new(), &mut best);
    best
}

fn assignment_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for t in 0..ASSIGN_INSTANCES {
        let n = rng.gen_range(1..=ASSIGN_MAX_N);
        let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
        // Any grid shape with at most two spare cells.
        let shapes: Vec<(usize, usize)> = (1..=n + 2)
            .flat_map(|c| (1..=n + 2).map(move |r| (c, r)))
            .filter(|&(c, r)| c * r >= n && c * r <= n + 2)
            .collect();
        let (columns, rows) = *shapes.choose(&mut rng).unwrap();
        let grid = GridSpec::new(columns, rows, n).unwrap();
        let got = assign_to_grid(&points, &grid, usize::MAX).unwrap();
        let solved = cost_of(&points, &grid, &got.mapping);
        let cells: BTreeSet<usize> = got.mapping.iter().copied().collect();
        let best = exhaustive_optimum(&points, &grid);
        if cells.len() != n || solved != best {
            return outcome(false, format!("instance {t}: n={n}, solver {solved} vs optimum {best}"));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        elapsed < ASSIGN_BUDGET,
        format!("{ASSIGN_INSTANCES} instances exact, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn silhouette_oracle(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..x.len() {
        let mean_to = |c: usize| {
            let (mut s, mut m) = (0.0, 0usize);
            for j in 0..x.len() {
                if j != i && labels[j] == c {
                    s += dist(&x[i], &x[j]);
                    m += 1;
                }
            }
            (s, m)
        };
        let (sa, ma) = mean_to(labels[i]);
        if ma == 0 {
            continue;
        }
        let a = sa / ma as f64;
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .map(|&c| {
                let (s, m) = mean_to(c);
                s / m as f64
            })
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / x.len() as f64
}

fn silhouette_matches_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..SIL_INSTANCES {
        let n = rng.gen_range(2..=SIL_MAX_N);
        let k = rng.gen_range(2..=SIL_MAX_K.min(n));
        let d = rng.gen_range(1..=6);
        // Every cluster gets at least one member.
        let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
        labels.shuffle(&mut rng);
        let x: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..d).map(|_| l as f64 * 0.5 + rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let got = silhouette(&x, &labels).unwrap();
        worst = worst.max((got - silhouette_oracle(&x, &labels)).abs());
    }
    outcome(
        worst <= SIL_TOL,
        format!("{SIL_INSTANCES} instances, max |diff| {worst:.1e} (tol {SIL_TOL:.0e})"),
    )
}

fn lambda_zero_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let spec = LatentSpec::default();
    let mut worst = 0.0f64;
    for _ in 0..LAMBDA0_BATCHES {
        let n = rng.gen_range(1..=64);
        let codes = sample_latent::<f64, _>(n, &spec, &mut rng);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let q = Tensor::from_vec(&[n, spec.k_dis], (0..n * spec.k_dis).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let mu = Tensor::from_vec(&[n, spec.n_con], (0..n * spec.n_con).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let loss = loss_generator_q(&logits, &q, &mu, &codes, 0.0).unwrap();
        // Pure adversarial term, -mean log sigmoid(logit), computed directly.
        let adv = logits.iter().map(|&l| (1.0 + (-l).exp()).ln()).sum::<f64>() / n as f64;
        worst = worst.max((loss.total - adv).abs());
    }
    outcome(
        worst <= LAMBDA0_TOL,
        format!("{LAMBDA0_BATCHES} batches, max |total - adv| {worst:.1e} (tol {LAMBDA0_TOL:.0e})"),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut ck = miniature_checkpoint(5).unwrap();
    let n = ck.config.batch;
    let (h, w) = ck.config.image_size;
    let real = Tensor::from_vec(&[n, 3, h, w], (0..n * 3 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let codes = sample_latent(n, &ck.latent, &mut rng);
    let d = check_discriminator(&mut ck, &real, &codes, GRAD_PARAMS, GRAD_STEP, &mut rng).unwrap();
    let codes = sample_latent(n, &ck.latent, &mut rng);
    let g = check_generator_q(&mut ck, &codes, GRAD_PARAMS, GRAD_STEP, &mut rng).unwrap();
    let (wd, wg) = (d.max_rel_err(), g.max_rel_err());
    outcome(
        d.entries.len() == GRAD_PARAMS && g.entries.len() == GRAD_PARAMS && wd <= GRAD_TOL && wg <= GRAD_TOL,
        format!(
            "{} D-loss and {} G+Q-loss entries, max rel err {wd:.1e} / {wg:.1e} (tol {GRAD_TOL:.0e}), {} draws redrawn at a kink",
            d.entries.len(),
            g.entries.len(),
            d.kinks + g.kinks
        ),
    )
}

fn posterior_validity() -> Outcome {
    let spec = SynthSpec::new(POSTERIOR_IMAGES, &[(Factor::Perspective, 4), (Factor::ColorSystem, 4)], 606);
    let images: Vec<ImageRecord<f32>> = generate_synthetic::<f32>(&spec)
        .unwrap()
        .iter()
        .map(|r| apply(r, Mode::Mask).unwrap())
        .collect();
    let fresh = GanCheckpoint::<f32>::init(TrainConfig::default(), LatentSpec::default()).unwrap();
    let mut trained = GanCheckpoint::<f32>::init(
        TrainConfig {
            width: 8,
            seed: 6,
            ..TrainConfig::default()
        },
        LatentSpec::new(4, 2, 70).unwrap(),
    )
    .unwrap();
    trained.train_epoch(&images[..400]).unwrap();
    let mut worst = 0.0f64;
    for ck in [&fresh, &trained] {
        let out = classify(&images, ck).unwrap();
        if out.len() != POSTERIOR_IMAGES {
            return outcome(false, format!("{} assignments", out.len()));
        }
        for a in &out {
            if a.posterior.iter().any(|&p| !(p >= 0.0)) {
                return outcome(false, format!("negative posterior for {}", a.image_id));
            }
            let s: f64 = a.posterior.iter().map(|&p| p as f64).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    outcome(
        worst <= POSTERIOR_TOL,
        format!("{POSTERIOR_IMAGES} images x 2 checkpoints, max |sum - 1| {worst:.1e} (tol {POSTERIOR_TOL:.0e})"),
    )
}

/// One trained model per seed on the masked color corpus, shared by the
/// factor-recovery and effect-validation criteria.
struct RecoveryRun {
    seed: u64,
    labels: Vec<usize>,
    purity: f64,
    nmi: f64,
}

struct Recovery {
    masked: Vec<ImageRecord<f32>>,
    runs: Vec<RecoveryRun>,
}

fn recovery() -> Recovery {
    let spec = SynthSpec::new(RECOVERY_IMAGES, &[(Factor::ColorSystem, RECOVERY_K)], RECOVERY_CORPUS_SEED);
    let masked: Vec<ImageRecord<f32>> = generate_synthetic::<f32>(&spec)
        .unwrap()
        .iter()
        .map(|r| apply(r, Mode::Mask).unwrap())
        .collect();
    let truth = truth_labels(&masked, "color_system").unwrap();
    let latent = LatentSpec::new(RECOVERY_K, 2, 70).unwrap();
    let mut runs = Vec::new();
    for seed in RECOVERY_SEEDS {
        let cfg = TrainConfig {
            seed,
            epochs: RECOVERY_EPOCHS,
            width: RECOVERY_WIDTH,
            ..TrainConfig::default()
        };
        let start = Instant::now();
        let mut ck = GanCheckpoint::<f32>::init(cfg, latent).unwrap();
        for _ in 0..RECOVERY_EPOCHS {
            ck.train_epoch(&masked).unwrap();
        }
        let labels: Vec<usize> = classify(&masked, &ck).unwrap().iter().map(|a| a.category).collect();
        let run = RecoveryRun {
            seed,
            purity: purity(&labels, &truth).unwrap(),
            nmi: nmi(&labels, &truth).unwrap(),
            labels,
        };
        eprintln!(
            "  seed {seed}: purity {:.3}, NMI {:.3} ({:.0}s)",
            run.purity,
            run.nmi,
            start.elapsed().as_secs_f64()
        );
        runs.push(run);
    }
    Recovery { masked, runs }
}

fn factor_recovery(r: &Recovery) -> Outcome {
    let best = r
        .runs
        .iter()
        .max_by(|a, b| (a.purity + a.nmi).total_cmp(&(b.purity + b.nmi)))
        .unwrap();
    let pass = r.runs.iter().any(|x| x.purity >= MIN_PURITY && x.nmi >= MIN_NMI);
    let all: Vec<String> = r
        .runs
        .iter()
        .map(|x| format!("s{} {:.3}/{:.3}", x.seed, x.purity, x.nmi))
        .collect();
    outcome(
        pass,
        format!(
            "best seed {} purity {:.3} NMI {:.3} (need {MIN_PURITY}/{MIN_NMI}); purity/NMI per seed: {}",
            best.seed,
            best.purity,
            best.nmi,
            all.join(", ")
        ),
    )
}

fn effect_ordering(r: &Recovery) -> Outcome {
    let cfg = ClassifierConfig::default();
    let score = |labels: &[usize]| match effect_validation(&r.masked, labels, &cfg, EFFECT_SEED) {
        Ok(a) => a,
        // A class too small to split cannot be validated; it scores zero.
        Err(infocluster::Error::DegenerateSplit(_)) => 0.0,
        Err(e) => panic!("{e}"),
    };
    let info: Vec<f64> = r.runs.iter().map(|x| score(&x.labels)).collect();
    let vectors = flatten_images(&r.masked).unwrap();
    let km: Vec<f64> = RECOVERY_SEEDS
        .iter()
        .map(|&s| score(&kmeans(&vectors, RECOVERY_K, s, 300, 1e-6).unwrap().labels))
        .collect();
    let best = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (bi, bk) = (best(&info), best(&km));
    outcome(
        bi - bk >= MIN_EFFECT_MARGIN,
        format!(
            "InfoGAN best {bi:.3} {info:.3?} vs K-means best {bk:.3} {km:.3?}, margin {:.3} (need {MIN_EFFECT_MARGIN})",
            bi - bk
        ),
    )
}

fn determinism() -> Outcome {
    let run = || -> Vec<Vec<u8>> {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::new(60, &[(Factor::Perspective, 4), (Factor::ColorSystem, 3)], 909);
        let records = generate_synthetic::<f32>(&spec).unwrap();
        let mut blobs: Vec<Vec<u8>> = vec![records.iter().flat_map(|r| r.pixels.iter().flat_map(|v| v.to_le_bytes())).collect()];
        for mode in [Mode::Mask, Mode::Interp, Mode::Rf] {
            let out: Vec<ImageRecord<f32>> = records.iter().map(|r| apply(r, mode).unwrap()).collect();
            blobs.push(out.iter().flat_map(|r| r.pixels.iter().flat_map(|v| v.to_le_bytes())).collect());
        }
        let masked: Vec<ImageRecord<f32>> = records.iter().map(|r| apply(r, Mode::Mask).unwrap()).collect();
        let km = kmeans(&flatten_images(&masked).unwrap(), 4, 9, 300, 1e-6).unwrap();
        blobs.push(km.labels.iter().flat_map(|l| (*l as u64).to_le_bytes()).collect());
        blobs.push(km.centroids.iter().flatten().flat_map(|v| v.to_le_bytes()).collect());
        let sil = silhouette(&flatten_images(&masked).unwrap(), &km.labels).unwrap();
        blobs.push(sil.to_le_bytes().to_vec());
        let assignments = hard_assignments(&masked, &km.labels, 4);
        let csv = dir.path().join("a.csv");
        let png = dir.path().join("m.png");
        export_assignments(&assignments, 0, &csv).unwrap();
        export_cluster_montage(&masked, &assignments, 5, &png).unwrap();
        blobs.push(std::fs::read(csv).unwrap());
        blobs.push(std::fs::read(png).unwrap());
        blobs
    };
    let (a, b) = (run(), run());
    let names = ["synth", "mask", "interp", "rf", "kmeans labels", "kmeans centroids", "silhouette", "assignments csv", "montage"];
    let differing: Vec<&str> = names.iter().zip(a.iter().zip(&b)).filter(|(_, (x, y))| x != y).map(|(n, _)| *n).collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts bit-identical across two runs", names.len())
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

fn main() {
    let selected: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let everything = std::env::var("INFOCLUSTER_ACCEPT_ALL").is_ok_and(|v| v == "1");
    let wants = |id: usize| selected.contains(&id) || (selected.is_empty() && (everything || !LONG.contains(&id)));
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        if wants(id) {
            let o = f();
            println!("{} criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((id, name, o));
        }
    };
    record(1, "preprocessing invariants", &preprocessing_invariants);
    record(2, "assignment optimality", &assignment_optimality);
    record(3, "silhouette oracle", &silhouette_matches_oracle);
    record(4, "lambda=0 reduction", &lambda_zero_reduction);
    record(5, "gradient check", &gradient_check);
    record(6, "posterior validity", &posterior_validity);
    if wants(7) || wants(8) {
        let r = recovery();
        record(7, "factor recovery", &|| factor_recovery(&r));
        record(8, "InfoGAN beats K-means in effect validation", &|| effect_ordering(&r));
    }
    record(9, "determinism", &determinism);
    for id in LONG.iter().filter(|&&id| !wants(id)) {
        if selected.is_empty() {
            println!("SKIP criterion {id}: long-running, select it explicitly or set INFOCLUSTER_ACCEPT_ALL=1");
        }
    }
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
