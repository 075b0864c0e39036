use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use geostack_core::evaluation::{
    accuracy, margin_records, per_class_accuracy, permutation_test, run_cil_with, CilSchedule,
    CompositionMode,
};
use geostack_core::geometry::{orthogonality_error, pairwise_commutators, quasi_additive_approx};
use geostack_core::synthesis::{
    generate_domain, lambda_sweep, stress_test, AnchorMode, StressGrid, SyntheticDomainSpec,
};
use geostack_core::training::{coa_loss, train_geolayer};
use geostack_core::{EmbeddingDataset, GeoStack, UpperTriangularMatrix};
use serde::Serialize;

use super::args::*;
use super::CliError;
use crate::store::{self, ReportFormat, StackManifest, StackMode};

type Out = Result<String, CliError>;

pub fn run(cli: Cli) -> Out {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Stack(a) => stack(a),
        Command::Eval(a) => eval(a),
        Command::Cil(a) => cil(a),
        Command::Permute(a) => permute(a),
        Command::Stress(a) => stress(a),
        Command::LambdaSweep(a) => sweep(a),
    }
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<(), CliError> {
    store::write_report(rows, path, ReportFormat::from_path(path))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn mode_of(m: &MergeOpts) -> StackMode {
    match m.mode {
        ModeArg::Product => StackMode::Product,
        ModeArg::TaskArithmetic => StackMode::TaskArithmetic { alpha: m.alpha },
    }
}

fn gen_data(a: GenDataArgs) -> Out {
    let anchors = if a.orthonormal || a.anchors == AnchorArg::Orthonormal {
        AnchorMode::Orthonormal
    } else {
        AnchorMode::RandomUnit
    };
    let mut spec = SyntheticDomainSpec::new(a.dim, a.classes, a.per_class, a.kappa, a.seed)
        .with_shift(a.shift)
        .with_coherence(a.coherence)
        .with_anchors(anchors);
    if let Some(id) = a.domain_id {
        spec = spec.with_domain_id(id);
    }
    let data = generate_domain(&spec)?;
    store::save_dataset(&a.out, &data)?;
    let zs = accuracy(&data, &UpperTriangularMatrix::identity(data.dim())?)?;
    Ok(format!(
        "wrote {} ({} samples, {} classes, dim {})\nzero-shot accuracy {zs:.4}\n",
        a.out.display(),
        data.len(),
        data.n_classes(),
        data.dim()
    ))
}

fn train(a: TrainArgs) -> Out {
    let data = store::load_dataset(&a.data)?;
    let cfg = a.train.config();
    let start = Instant::now();
    let mut report = train_geolayer(&data, &cfg)?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let layer = &report.layer;
    let (align, ortho) = match report.epochs.last() {
        Some(e) => (e.align_loss, e.ortho_loss),
        None => {
            let l = coa_loss(layer.weight(), &data, &cfg)?;
            (l.align, l.ortho)
        }
    };
    if !(align.is_finite() && ortho.is_finite()) {
        return Err(geostack_core::GeoError::NonFinite("final loss".into()).into());
    }
    store::save_layer(&a.out, layer)?;
    if let Some(h) = &a.history {
        write_rows(&report.epochs, h)?;
    }
    let acc = accuracy(&data, layer.weight())?;
    Ok(format!(
        "wrote {} ({} epochs, {:.4} s)\nalign loss {align:.4}\northo loss {ortho:.4}\nraw OE {:.4}\nnormalized OE {:.4}\naccuracy {acc:.4}\n",
        a.out.display(),
        report.epochs.len(),
        report.wall_time_secs,
        layer.raw_oe(),
        layer.normalized_oe(),
    ))
}

/// `target` as seen from `dir`: a plain relative path when it lies inside
/// `dir`, otherwise absolute.
fn relative_to(dir: &Path, target: &Path) -> Result<PathBuf, CliError> {
    let io = |p: &Path, e| {
        CliError::Store(store::StoreError::Io {
            path: p.to_path_buf(),
            source: e,
        })
    };
    let target = target.canonicalize().map_err(|e| io(target, e))?;
    let dir = dir.canonicalize().map_err(|e| io(dir, e))?;
    Ok(target.strip_prefix(&dir).map(Path::to_path_buf).unwrap_or(target))
}

fn stack(a: StackArgs) -> Out {
    let layers = a
        .layers
        .iter()
        .map(store::load_layer)
        .collect::<Result<Vec<_>, _>>()?;
    let stack = GeoStack::from_layers(layers)?;
    let mode = mode_of(&a.merge);
    let composite = CompositionMode::from(mode).merge(&stack)?;
    let oe = orthogonality_error(&composite);

    let manifest_dir = match a.out_manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut manifest = StackManifest::for_files(stack.dim(), &a.layers, mode)?;
    for entry in &mut manifest.layers {
        entry.path = relative_to(&manifest_dir, &entry.path)?;
    }
    let mut text = String::new();
    if let (Some(p_path), Some(out_proj)) = (&a.fold_projection, &a.out_proj) {
        let p = store::load_projection(p_path)?;
        if p.cols() != stack.dim() {
            return Err(geostack_core::GeoError::DimensionMismatch {
                expected: stack.dim(),
                found: p.cols(),
            }
            .into());
        }
        let folded = p.mul_upper(&composite)?;
        store::save_projection(out_proj, &folded)?;
        manifest.folded_projection = Some(relative_to(&manifest_dir, out_proj)?);
        writeln!(text, "wrote folded projection {}", out_proj.display()).ok();
    }
    store::save_manifest(&a.out_manifest, &manifest)?;

    writeln!(
        text,
        "wrote {} ({} layers)",
        a.out_manifest.display(),
        stack.len()
    )
    .ok();
    writeln!(text, "composite raw OE {:.4}", oe.raw).ok();
    writeln!(text, "composite normalized OE {:.4}", oe.normalized).ok();
    writeln!(
        text,
        "quasi-additive deviation {:.4}",
        quasi_additive_approx(&stack)?.1
    )
    .ok();
    for (i, j, dev) in pairwise_commutators(&stack)? {
        writeln!(
            text,
            "commutator {} {}: {dev:.4}",
            stack.layers()[i].domain_id(),
            stack.layers()[j].domain_id()
        )
        .ok();
    }
    Ok(text)
}

#[derive(Serialize)]
struct ClassRow<'a> {
    class: usize,
    name: &'a str,
    samples: usize,
    accuracy: f64,
}

fn operator(a: &EvalArgs, data: &EmbeddingDataset) -> Result<UpperTriangularMatrix, CliError> {
    if let Some(m) = &a.manifest {
        let (manifest, stack) = store::load_manifest(m)?;
        return Ok(CompositionMode::from(manifest.mode).merge(&stack)?);
    }
    if let Some(l) = &a.layer {
        return Ok(store::load_layer(l)?.weight().clone());
    }
    Ok(UpperTriangularMatrix::identity(data.dim())?)
}

fn eval(a: EvalArgs) -> Out {
    let data = store::load_dataset(&a.data)?;
    let w = operator(&a, &data)?;
    if w.dim() != data.dim() {
        return Err(geostack_core::GeoError::DimensionMismatch {
            expected: data.dim(),
            found: w.dim(),
        }
        .into());
    }
    let mut text = format!("accuracy {:.4}\n", accuracy(&data, &w)?);
    if a.per_class {
        let counts = data
            .labels()
            .iter()
            .fold(vec![0usize; data.n_classes()], |mut c, &l| {
                c[l as usize] += 1;
                c
            });
        writeln!(text, "class\tname\tsamples\taccuracy").ok();
        for (c, acc) in per_class_accuracy(&data, &w)?.into_iter().enumerate() {
            let row = ClassRow {
                class: c,
                name: &data.class_names()[c],
                samples: counts[c],
                accuracy: acc.unwrap_or(0.0),
            };
            match acc {
                Some(_) => writeln!(
                    text,
                    "{}\t{}\t{}\t{:.4}",
                    row.class, row.name, row.samples, row.accuracy
                ),
                None => writeln!(text, "{}\t{}\t0\t-", row.class, row.name),
            }
            .ok();
        }
    }
    if let Some(path) = &a.margins {
        write_rows(&margin_records(&data, &w)?, path)?;
    }
    Ok(text)
}

#[derive(Serialize)]
struct CilRow {
    task: usize,
    classes: usize,
    global_accuracy: f64,
    task0_retention: f64,
    layer_normalized_oe: f64,
    composite_normalized_oe: f64,
}

fn cil(a: CilArgs) -> Out {
    let data = store::load_dataset(&a.data)?;
    let cfg = a.train.config();
    let schedule = match a.shuffle_classes {
        Some(s) => CilSchedule::shuffled(data.n_classes(), a.tasks, cfg.shots, cfg.seed, s)?,
        None => CilSchedule::contiguous(data.n_classes(), a.tasks, cfg.shots, cfg.seed)?,
    };
    let curves = run_cil_with(&data, &schedule, &cfg, mode_of(&a.merge).into())?;
    let rows: Vec<CilRow> = (0..schedule.n_tasks())
        .map(|t| CilRow {
            task: t,
            classes: schedule.tasks()[t].len(),
            global_accuracy: curves.global_accuracy[t],
            task0_retention: curves.task0_retention[t],
            layer_normalized_oe: curves.layer_normalized_oe[t],
            composite_normalized_oe: curves.composite_normalized_oe[t],
        })
        .collect();
    write_rows(&rows, &a.out)?;
    let mut text = String::from("task\tclasses\tglobal\tretention\tlayer S\tcomposite S\n");
    for r in &rows {
        writeln!(
            text,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.task,
            r.classes,
            r.global_accuracy,
            r.task0_retention,
            r.layer_normalized_oe,
            r.composite_normalized_oe
        )
        .ok();
    }
    writeln!(text, "retention decay {:.4}", curves.retention_decay()).ok();
    Ok(text)
}

fn permute(a: PermuteArgs) -> Out {
    if a.data_list.len() != a.layer_list.len() {
        return Err(geostack_core::GeoError::InvalidInput(format!(
            "{} datasets but {} layers",
            a.data_list.len(),
            a.layer_list.len()
        ))
        .into());
    }
    let domains = a
        .data_list
        .iter()
        .map(store::load_dataset)
        .collect::<Result<Vec<_>, _>>()?;
    let layers = a
        .layer_list
        .iter()
        .map(store::load_layer)
        .collect::<Result<Vec<_>, _>>()?;
    let stats = permutation_test(&domains, &layers, a.k, a.seed)?;
    write_rows(&stats, &a.out)?;
    let mut text = String::from("domain\tmean\tstd\trange\torderings\n");
    for s in &stats {
        writeln!(
            text,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}",
            s.domain_id, s.mean, s.std, s.range, s.evaluations
        )
        .ok();
    }
    Ok(text)
}

fn stress(a: StressArgs) -> Out {
    let data = store::load_dataset(&a.data)?;
    let gammas = a.gammas.unwrap_or_else(StressGrid::default_gammas);
    let records = stress_test(&data, &StressGrid::new(gammas, a.trials, a.seed)?)?;
    write_rows(&records, &a.out)?;
    let mut text = String::from("gamma\tmean\tstd\tzone\n");
    for r in &records {
        writeln!(
            text,
            "{:.4}\t{:.4}\t{:.4}\t{}",
            r.gamma,
            r.mean_accuracy,
            r.std,
            r.zone.as_str()
        )
        .ok();
    }
    Ok(text)
}

fn sweep(a: SweepArgs) -> Out {
    let data = store::load_dataset(&a.data)?;
    let records = lambda_sweep(&data, &a.lambdas, &a.train.config())?;
    write_rows(&records, &a.out)?;
    let mut text = String::from("lambda\tnormalized OE\taccuracy\n");
    for r in &records {
        writeln!(text, "{:.4}\t{:.4}\t{:.4}", r.lambda, r.final_oe, r.accuracy).ok();
    }
    Ok(text)
}
