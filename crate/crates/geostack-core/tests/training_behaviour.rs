use geostack_core::evaluation::accuracy;
use geostack_core::synthesis::{generate_domain, SyntheticDomainSpec};
use geostack_core::training::train_geolayer;
use geostack_core::{TrainConfig, UpperTriangularMatrix};

fn domain() -> geostack_core::EmbeddingDataset {
    generate_domain(
        &SyntheticDomainSpec::new(16, 6, 30, 6.0, 3)
            .with_shift(0.8)
            .with_coherence(0.5),
    )
    .unwrap()
}

#[test]
fn same_seed_same_weights() {
    let data = domain();
    let cfg = TrainConfig::default().with_epochs(5).with_seed(9);
    let a = train_geolayer(&data, &cfg).unwrap();
    let b = train_geolayer(&data, &cfg).unwrap();
    assert_eq!(a.layer.weight(), b.layer.weight());
    assert_eq!(a.epochs, b.epochs);
    let c = train_geolayer(&data, &cfg.with_seed(10)).unwrap();
    assert_ne!(a.layer.weight(), c.layer.weight());
}

#[test]
fn pure_orthogonality_keeps_identity() {
    let data = domain();
    let report = train_geolayer(&data, &TrainConfig::default().with_lambda(1.0).with_epochs(10)).unwrap();
    assert_eq!(
        report.layer.weight(),
        &UpperTriangularMatrix::identity(16).unwrap()
    );
    assert_eq!(report.layer.raw_oe(), 0.0);
}

#[test]
fn alignment_only_drifts_further_than_regularized() {
    let data = domain();
    let cfg = TrainConfig::default().with_learning_rate(1e-3).with_epochs(20);
    let free = train_geolayer(&data, &cfg.with_lambda(0.0)).unwrap();
    let tied = train_geolayer(&data, &cfg.with_lambda(0.95)).unwrap();
    assert!(free.layer.normalized_oe() > tied.layer.normalized_oe());
    let zs = accuracy(&data, &UpperTriangularMatrix::identity(16).unwrap()).unwrap();
    assert!(accuracy(&data, free.layer.weight()).unwrap() >= zs);
}

#[test]
fn epoch_records_are_consistent() {
    let data = domain();
    let report = train_geolayer(&data, &TrainConfig::default().with_epochs(4)).unwrap();
    assert_eq!(report.epochs.len(), 4);
    assert_eq!(report.layer.meta().epochs_trained, 4);
    let last = report.epochs.last().unwrap();
    assert_eq!(last.raw_oe, report.layer.raw_oe());
    assert!(report.epochs.iter().all(|e| e.coa_loss.is_finite()));
}
