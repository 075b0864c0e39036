//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p geostack --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use geostack::store::{self, StackManifest, StackMode};
use geostack_core::evaluation::{accuracy, permutation_test, predictions, run_cil, run_mda, CilSchedule};
use geostack_core::geometry::{
    commutator_deviation, compose, fold, orthogonality_error, quasi_additive_approx, spectral_norm,
    symmetric_part_identity_check, LayerMeta, SPECTRAL_MAX_ITERS, SPECTRAL_TOL,
};
use geostack_core::rng::{seeded, standard_normal, SeededRng};
use geostack_core::synthesis::{
    generate_domain, lambda_sweep, stress_test, AnchorMode, StressGrid, SyntheticDomainSpec,
};
use geostack_core::training::{coa_gradient, coa_loss, train_geolayer};
use geostack_core::{EmbeddingDataset, GeoLayer, GeoStack, Matrix, TrainConfig, UpperTriangularMatrix};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian_delta(rng: &mut SeededRng, d: usize, scale: f64) -> UpperTriangularMatrix {
    let mut m = UpperTriangularMatrix::zeros(d).unwrap();
    for (i, j) in UpperTriangularMatrix::upper_indices(d) {
        m.set(i, j, scale * standard_normal(rng)).unwrap();
    }
    m
}

fn layer(w: UpperTriangularMatrix, id: &str) -> GeoLayer {
    GeoLayer::new(w, LayerMeta::untrained(id)).unwrap()
}

/// The calibrated domain family used by every training criterion.
fn domain(seed: u64, shift: f64, id: &str) -> EmbeddingDataset {
    let spec = SyntheticDomainSpec::new(64, 40, 50, 12.0, seed)
        .with_shift(shift)
        .with_coherence(0.9)
        .with_domain_id(id);
    generate_domain(&spec).unwrap()
}

fn zero_shot(data: &EmbeddingDataset) -> f64 {
    accuracy(data, &UpperTriangularMatrix::identity(data.dim()).unwrap()).unwrap()
}

fn pts(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn algebra() -> Outcome {
    let mut rng = seeded(1);
    let mut worst_fold = 0.0f64;
    let mut worst_identity = 0.0f64;
    let mut lower_nonzero = 0usize;
    for t in 0..1000 {
        let d = 1 + t % 64;
        let delta = gaussian_delta(&mut rng, d, 0.3);
        let (lhs, rhs) = symmetric_part_identity_check(&delta);
        worst_identity = worst_identity.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
        if t % 10 == 0 {
            let k = 1 + t % 4;
            let layers: Vec<GeoLayer> = (0..k)
                .map(|_| layer(gaussian_delta(&mut rng, d, 0.05).add_identity(), "a"))
                .collect();
            let stack = GeoStack::from_layers(layers).unwrap();
            let w = compose(&stack).unwrap().to_matrix();
            lower_nonzero += (0..d)
                .flat_map(|i| (0..i).map(move |j| (i, j)))
                .filter(|&(i, j)| w.get(i, j) != 0.0)
                .count();
            let p = Matrix::from_vec(3, d, (0..3 * d).map(|_| standard_normal(&mut rng)).collect()).unwrap();
            let folded = fold(&p, &stack).unwrap();
            let mut seq = p.clone();
            for l in stack.layers() {
                seq = seq.mul_upper(l.weight()).unwrap();
            }
            for (x, y) in folded.as_slice().iter().zip(seq.as_slice()) {
                worst_fold = worst_fold.max((x - y).abs());
            }
        }
    }
    let empty =
        compose(&GeoStack::empty(16).unwrap()).unwrap() == UpperTriangularMatrix::identity(16).unwrap();
    check(
        lower_nonzero == 0 && empty && worst_fold <= 1e-10 && worst_identity <= 1e-12,
        format!(
            "lower-triangle nonzeros {lower_nonzero}, empty stack = I: {empty}, fold gap {worst_fold:.1e}, identity rel err {worst_identity:.1e}"
        ),
    )
}

fn perturbation_bounds() -> Outcome {
    let mut rng = seeded(2);
    let (mut qa, mut comm, mut spec) = (0usize, 0usize, 0usize);
    for t in 0..1000 {
        let d = 1 + t % 32;
        let scale = 0.5 / (1 + t % 7) as f64;
        let a = gaussian_delta(&mut rng, d, scale);
        let b = gaussian_delta(&mut rng, d, scale);
        let bound = a.frobenius_norm() * b.frobenius_norm();
        let (la, lb) = (layer(a.add_identity(), "a"), layer(b.add_identity(), "b"));
        let stack = GeoStack::from_layers(vec![la.clone(), lb.clone()]).unwrap();
        // The deviations are differences of O(1) products, so they carry absolute rounding error.
        let slack = 1e-13 * d as f64;
        qa += usize::from(quasi_additive_approx(&stack).unwrap().1 > bound + slack);
        comm += usize::from(commutator_deviation(&la, &lb).unwrap() > 2.0 * bound + slack);
        let s = spectral_norm(&a.to_matrix(), SPECTRAL_TOL, SPECTRAL_MAX_ITERS).unwrap();
        spec += usize::from(s > a.frobenius_norm() * (1.0 + 1e-12));
    }
    // Cubic remainder on Gaussian perturbations with d in 8..=64 and ‖Δ‖ ≤ 0.1.
    let mut cubic = 0usize;
    let mut worst_ratio = 0.0f64;
    for t in 0..1000 {
        let d = 8 + t % 57;
        let mut delta = gaussian_delta(&mut rng, d, 1.0);
        let target = 0.1 * (1 + t % 10) as f64 / 10.0;
        delta = delta.scale(target / delta.frobenius_norm());
        let raw = orthogonality_error(&delta.add_identity()).raw;
        let (sym, _) = symmetric_part_identity_check(&delta);
        let n = delta.frobenius_norm();
        let ratio = (raw - sym).abs() / n.powi(3);
        worst_ratio = worst_ratio.max(ratio);
        cubic += usize::from(ratio > 3.0);
    }
    check(
        qa + comm + spec + cubic == 0,
        format!(
            "violations: quasi-additive {qa}, commutator {comm}, spectral {spec}, cubic {cubic} (worst remainder {worst_ratio:.2}·‖Δ‖³)"
        ),
    )
}

fn gradient() -> Outcome {
    const STEP: f64 = 1e-5;
    let mut rng = seeded(3);
    let mut worst = 0.0f64;
    for d in [4, 8, 16] {
        for lambda in [0.0, 0.5, 0.95, 1.0] {
            for t in 0..20 {
                let classes = 2 + t % 3;
                let n = 6;
                let data = EmbeddingDataset::new(
                    d,
                    (0..n * d).map(|_| standard_normal(&mut rng)).collect(),
                    (0..n).map(|i| (i % classes) as u32).collect(),
                    (0..classes * d).map(|_| standard_normal(&mut rng)).collect(),
                    (0..classes).map(|c| format!("c{c}")).collect(),
                    "fd",
                    false,
                )
                .unwrap();
                let w = gaussian_delta(&mut rng, d, 0.1).add_identity();
                let cfg = TrainConfig::default().with_lambda(lambda);
                let g = coa_gradient(&w, &data, &cfg).unwrap();
                let scale = g.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
                let loss = |m: &UpperTriangularMatrix| coa_loss(m, &data, &cfg).unwrap().total;
                for (i, j) in UpperTriangularMatrix::upper_indices(d) {
                    let (mut plus, mut minus) = (w.clone(), w.clone());
                    plus.set(i, j, w.get(i, j) + STEP).unwrap();
                    minus.set(i, j, w.get(i, j) - STEP).unwrap();
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
                    worst = worst.max((g.get(i, j) - fd).abs() / scale);
                }
            }
        }
    }
    let data = domain(1, 0.5, "g");
    let cfg = TrainConfig::default().with_lambda(1.0);
    let g = coa_gradient(&UpperTriangularMatrix::identity(64).unwrap(), &data, &cfg).unwrap();
    let zero = g.as_slice().iter().all(|&v| v == 0.0);
    check(
        worst <= 1e-4 && zero,
        format!("max relative error {worst:.2e}, λ=1 gradient at I exactly zero: {zero}"),
    )
}

fn endpoints() -> Outcome {
    let data = domain(7, 0.5, "d7");
    let zs = zero_shot(&data);
    let cfg = TrainConfig::default();
    let pinned = train_geolayer(&data, &cfg.with_lambda(1.0)).unwrap().layer;
    let tied = train_geolayer(&data, &cfg.with_lambda(0.95)).unwrap().layer;
    let free = train_geolayer(&data, &cfg.with_lambda(0.0)).unwrap().layer;
    let identity = pinned.weight() == &UpperTriangularMatrix::identity(64).unwrap();
    let gain = accuracy(&data, tied.weight()).unwrap() - zs;
    let (s95, s0) = (tied.normalized_oe(), free.normalized_oe());
    check(
        identity && (0.6..=0.8).contains(&zs) && gain >= 0.03 && s95 <= 0.015 && s0 > s95,
        format!(
            "λ=1 stays I: {identity}; zero-shot {}, λ=0.95 gain {} pts at S {s95:.4}; λ=0 S {s0:.4}",
            pts(zs),
            pts(gain)
        ),
    )
}

fn mda() -> Outcome {
    let domains = vec![domain(7, 0.5, "a"), domain(107, 0.5, "b")];
    let cfg = TrainConfig::default();
    let run = |lambda: f64| {
        let layers: Vec<GeoLayer> = domains
            .iter()
            .map(|d| train_geolayer(d, &cfg.with_lambda(lambda)).unwrap().layer)
            .collect();
        run_mda(&domains, &layers, &[0, 1]).unwrap()
    };
    let (tied, free) = (run(0.95), run(0.0));
    let worst_drop = |r: &geostack_core::evaluation::StabilityReport| {
        r.domains
            .iter()
            .map(|x| x.solo_accuracy - x.stacked_accuracy)
            .fold(f64::MIN, f64::max)
    };
    let within = tied
        .domains
        .iter()
        .all(|x| (x.solo_accuracy - x.stacked_accuracy).abs() <= 0.05);
    let above_zs = tied.mean_stacked_accuracy() >= tied.mean_zero_shot_accuracy();
    let (d95, d0) = (worst_drop(&tied), worst_drop(&free));
    check(
        within && above_zs && d0 > d95,
        format!(
            "λ=0.95 stacked mean {} vs zero-shot {}, worst drop {} pts; λ=0 worst drop {} pts",
            pts(tied.mean_stacked_accuracy()),
            pts(tied.mean_zero_shot_accuracy()),
            pts(d95),
            pts(d0)
        ),
    )
}

/// Least-squares slope of `ys` against their index.
fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - mx) * (y - my))
        .sum();
    let den: f64 = (0..ys.len()).map(|i| (i as f64 - mx).powi(2)).sum();
    num / den
}

fn cil() -> Outcome {
    let spec = SyntheticDomainSpec::new(64, 100, 50, 12.0, 5)
        .with_shift(0.5)
        .with_coherence(0.9)
        .with_anchors(AnchorMode::RandomUnit);
    let data = generate_domain(&spec).unwrap();
    let cfg = TrainConfig::default();
    let curves = |tasks: usize, lambda: f64| {
        let schedule = CilSchedule::contiguous(100, tasks, cfg.shots, 3).unwrap();
        run_cil(&data, &schedule, &cfg.with_lambda(lambda)).unwrap()
    };
    let (t95, t0) = (curves(4, 0.95), curves(4, 0.0));
    let (l95, l0) = (curves(10, 0.95), curves(10, 0.0));
    let (r95, r0) = (&l95.task0_retention, &l0.task0_retention);
    let trend = slope(r95) < 0.0 && slope(r0) < 0.0;
    let dominates = r95.last() >= r0.last();
    check(
        t95.retention_decay().abs() < t0.retention_decay().abs() && trend && dominates,
        format!(
            "4 tasks decay λ=0.95 {} vs λ=0 {} pts; 10 tasks slopes {:.4}/{:.4}, final retention {} vs {}",
            pts(t95.retention_decay()),
            pts(t0.retention_decay()),
            slope(r95),
            slope(r0),
            pts(*r95.last().unwrap()),
            pts(*r0.last().unwrap())
        ),
    )
}

fn abelian() -> Outcome {
    let domains: Vec<EmbeddingDataset> = (0..4).map(|i| domain(50 + i, 0.5, &format!("d{i}"))).collect();
    let cfg = TrainConfig::default().with_lambda(0.95);
    let layers: Vec<GeoLayer> = domains
        .iter()
        .map(|d| train_geolayer(d, &cfg).unwrap().layer)
        .collect();
    let stats = permutation_test(&domains, &layers, 0, 0).unwrap();
    let worst = stats.iter().map(|s| s.std).fold(0.0f64, f64::max);
    let all = stats.iter().all(|s| s.evaluations == 24);
    check(
        all && worst <= 0.01,
        format!(
            "24 orderings per domain: {all}; worst accuracy std {} pts",
            pts(worst)
        ),
    )
}

fn stress() -> Outcome {
    let data = domain(9, 0.5, "s");
    let zs = zero_shot(&data);
    let chance = 1.0 / data.n_classes() as f64;
    let gammas = vec![1e-5, 0.005, 0.01, 0.015, 0.03, 0.06, 0.1, 0.5, 1.7];
    let records = stress_test(&data, &StressGrid::new(gammas, 10, 1).unwrap()).unwrap();
    let at = |g: f64| records.iter().find(|r| r.gamma == g).unwrap().mean_accuracy;
    let near_baseline = (at(1e-5) - zs).abs() <= 0.005;
    let zones = at(0.01) >= at(0.03) && at(0.03) >= at(0.1);
    let collapsed = at(1.7) <= (chance + 0.10).max(zs);
    check(
        near_baseline && zones && collapsed,
        format!(
            "baseline {}, γ=1e-5 {}, zones 0.01/0.03/0.1: {}/{}/{}, γ=1.7 {} (chance {})",
            pts(zs),
            pts(at(1e-5)),
            pts(at(0.01)),
            pts(at(0.03)),
            pts(at(0.1)),
            pts(at(1.7)),
            pts(chance)
        ),
    )
}

fn sweep() -> Outcome {
    let lambdas = [0.5, 0.7, 0.9, 0.95, 0.99];
    let cfg = TrainConfig::default();
    let spread = |records: &[geostack_core::synthesis::SweepRecord]| {
        let a = records.iter().map(|r| r.accuracy);
        a.clone().fold(f64::MIN, f64::max) - a.fold(f64::MAX, f64::min)
    };
    let records = lambda_sweep(&domain(7, 0.4, "w"), &lambdas, &cfg).unwrap();
    let monotone = records.windows(2).all(|w| w[1].final_oe <= w[0].final_oe);
    let s = spread(&records);
    let reference = spread(&lambda_sweep(&domain(7, 0.5, "w"), &lambdas, &cfg).unwrap());
    let oes: Vec<String> = records.iter().map(|r| format!("{:.4}", r.final_oe)).collect();
    check(
        monotone && s <= 0.05,
        format!(
            "OE [{}] non-increasing: {monotone}; spread {} pts (endpoint domain: {} pts)",
            oes.join(", "),
            pts(s),
            pts(reference)
        ),
    )
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticDomainSpec::new(16, 6, 10, 4.0, 3)
        .with_shift(0.5)
        .with_domain_id("p");
    let data = generate_domain(&spec).unwrap();
    let cfg = TrainConfig::default()
        .with_epochs(3)
        .with_lambda(0.0)
        .with_learning_rate(1e-2);
    let layers: Vec<GeoLayer> = (0..3)
        .map(|s| {
            let l = train_geolayer(&data, &cfg.with_seed(s)).unwrap().layer;
            let meta = LayerMeta {
                domain_id: format!("l{s}"),
                ..l.meta().clone()
            };
            GeoLayer::new(l.weight().clone(), meta).unwrap()
        })
        .collect();

    let mut problems = Vec::new();
    let data_path = dir.path().join("d.gsem");
    store::save_dataset(&data_path, &data).unwrap();
    if store::load_dataset(&data_path).unwrap() != data {
        problems.push("dataset round trip".to_string());
    }
    let mut files = Vec::new();
    for (k, l) in layers.iter().enumerate() {
        let path = dir.path().join(format!("l{k}.gsly"));
        store::save_layer(&path, l).unwrap();
        if &store::load_layer(&path).unwrap() != l {
            problems.push(format!("layer {k} round trip"));
        }
        files.push(path);
    }
    let p = Matrix::from_vec(16, 16, {
        let mut rng = seeded(4);
        (0..256).map(|_| standard_normal(&mut rng)).collect()
    })
    .unwrap();
    let p_path = dir.path().join("p.gspj");
    store::save_projection(&p_path, &p).unwrap();
    if store::load_projection(&p_path).unwrap() != p {
        problems.push("projection round trip".into());
    }

    // Saved stack, folded into the projection, against sequential in-memory evaluation.
    let manifest_path = dir.path().join("stack.json");
    let manifest = StackManifest::for_files(16, &files, StackMode::Product).unwrap();
    store::save_manifest(&manifest_path, &manifest).unwrap();
    let (_, loaded) = store::load_manifest(&manifest_path).unwrap();
    let folded = fold(&store::load_projection(&p_path).unwrap(), &loaded).unwrap();
    let folded_rows: Vec<f64> = data.rows().flat_map(|h| folded.apply_row(h).unwrap()).collect();
    let sequential_rows: Vec<f64> = data
        .rows()
        .flat_map(|h| {
            let mut x = p.apply_row(h).unwrap();
            for l in &layers {
                x = l.weight().apply_row_vec(&x);
            }
            x
        })
        .collect();
    let relabel = |rows: Vec<f64>| {
        EmbeddingDataset::new(
            16,
            rows,
            data.labels().to_vec(),
            data.anchors().to_vec(),
            data.class_names().to_vec(),
            "p",
            true,
        )
        .unwrap()
    };
    let id = UpperTriangularMatrix::identity(16).unwrap();
    let a = predictions(&relabel(folded_rows), &id).unwrap();
    let b = predictions(&relabel(sequential_rows), &id).unwrap();
    if a != b {
        problems.push(format!(
            "{} folded decisions differ",
            a.iter().zip(&b).filter(|(x, y)| x != y).count()
        ));
    }

    // Every corruption mode maps to its typed error.
    let ds = store::encode_dataset(&data).unwrap();
    let ly = store::encode_layer(&layers[0]).unwrap();
    let mut cases: Vec<(&str, &str, Result<(), store::StoreError>)> = Vec::new();
    let dataset = |b: Vec<u8>| store::decode_dataset(&b).map(drop);
    let layer_of = |b: Vec<u8>| store::decode_layer(&b).map(drop);
    let patch = |src: &[u8], at: usize, with: &[u8]| {
        let mut b = src.to_vec();
        b[at..at + with.len()].copy_from_slice(with);
        b
    };
    cases.push(("bad magic", "bad-magic", dataset(patch(&ds, 0, b"NOPE"))));
    cases.push((
        "wrong version",
        "version-mismatch",
        layer_of(patch(&ly, 4, &7u32.to_le_bytes())),
    ));
    cases.push((
        "truncated",
        "truncated-payload",
        dataset(ds[..ds.len() - 3].to_vec()),
    ));
    cases.push((
        "trailing bytes",
        "trailing-bytes",
        layer_of([ly.as_slice(), &[0]].concat()),
    ));
    cases.push((
        "NaN feature",
        "non-finite",
        dataset(patch(&ds, 28, &f64::NAN.to_le_bytes())),
    ));
    cases.push((
        "unknown flags",
        "invalid-header",
        dataset(patch(&ds, 24, &6u32.to_le_bytes())),
    ));
    cases.push((
        "tampered weight",
        "oe-mismatch",
        layer_of(patch(&ly, 12 + 8, &0.75f64.to_le_bytes())),
    ));
    let json_at = 12 + 136 * 8 + 4;
    cases.push((
        "bad metadata",
        "invalid-json",
        layer_of(patch(&ly, json_at, b"#")),
    ));
    cases.push((
        "bad utf-8",
        "invalid-utf8",
        layer_of(patch(&ly, json_at, &[0xff])),
    ));
    let mut tampered = std::fs::read(&files[1]).unwrap();
    tampered.push(b' ');
    std::fs::write(&files[1], tampered).unwrap();
    cases.push((
        "tampered layer file",
        "digest-mismatch",
        store::load_manifest(&manifest_path).map(drop),
    ));
    for (name, expected, got) in cases {
        match got {
            Err(e) if e.code() == expected => {}
            Err(e) => problems.push(format!("{name}: got {} not {expected}", e.code())),
            Ok(()) => problems.push(format!("{name}: accepted")),
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "round trips bit-exact, 10 corruption modes typed, folded argmax equals sequential".into()
        } else {
            problems.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("algebraic exactness", algebra),
        ("perturbation bounds", perturbation_bounds),
        ("gradient correctness", gradient),
        ("training endpoints", endpoints),
        ("multi-domain stability", mda),
        ("class-incremental retention", cil),
        ("order independence", abelian),
        ("stress zones", stress),
        ("lambda sweep", sweep),
        ("persistence", persistence),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2} {name}: {detail} ({secs:.1}s)", k + 1);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
