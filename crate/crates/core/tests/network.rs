use proptest::prelude::*;
use tropmorph::data::{gaussian_blobs, Dataset};
use tropmorph::morphonet::{LayerSpec, MorphNetwork, TrainConfig};
use tropmorph::pruning::{prune, prune_sweep, retained_count, top_units, unit_scores, STANDARD_SWEEP};

fn blobs(seed: u64) -> Dataset {
    let centers = vec![vec![0.0, 0.0, 0.0], vec![3.0, 0.0, 1.0], vec![0.0, 3.0, 2.0]];
    gaussian_blobs(&centers, 0.5, 40, seed).unwrap()
}

#[test]
fn every_layer_kind_learns_separable_blobs() {
    let ds = blobs(1);
    let specs = [
        LayerSpec::Dilation(8),
        LayerSpec::Erosion(8),
        LayerSpec::Mixed(8),
        LayerSpec::SoftDilation { width: 8, beta: 5.0 },
        LayerSpec::SoftErosion { width: 8, beta: 5.0 },
        LayerSpec::Relu(8),
    ];
    for spec in specs {
        let mut net = MorphNetwork::new(3, &[spec, LayerSpec::Linear(3)], 3, 0).unwrap();
        let mut cfg = TrainConfig::adam(150, 0);
        cfg.batch_size = 16;
        let history = net.train(&ds, &cfg).unwrap();
        assert_eq!(history.len(), 150);
        assert!(history.last().unwrap().loss < history[0].loss, "{spec}");
        // A hard morphological unit passes gradient to one input per
        // sample, so those layers learn more slowly.
        let floor = match spec {
            LayerSpec::Dilation(_) | LayerSpec::Erosion(_) | LayerSpec::Mixed(_) => 0.8,
            _ => 0.9,
        };
        let acc = net.evaluate(&ds).unwrap();
        assert!(acc >= floor, "{spec}: accuracy {acc}");
    }
}

#[test]
fn training_is_reproducible() {
    let ds = blobs(2);
    let run = || {
        let mut net = MorphNetwork::new(3, &[LayerSpec::Mixed(6), LayerSpec::Linear(3)], 3, 4).unwrap();
        net.train(&ds, &TrainConfig::sgd(5, 9)).unwrap();
        net
    };
    assert_eq!(run(), run());
}

#[test]
fn full_retention_changes_nothing() {
    let ds = blobs(3);
    let mut net = MorphNetwork::new(3, &[LayerSpec::Relu(10), LayerSpec::Linear(3)], 3, 1).unwrap();
    net.train(&ds, &TrainConfig::adam(5, 1)).unwrap();
    let report = prune_sweep(&net, &ds, &STANDARD_SWEEP, "relu", "adam").unwrap();
    assert_eq!(report.accuracy_at(100.0), Some(net.evaluate(&ds).unwrap()));
    let ps: Vec<f64> = report.rows.iter().map(|r| r.p).collect();
    assert_eq!(ps, STANDARD_SWEEP.to_vec());
    assert!(prune(&net, 0.0).is_err() && prune(&net, 101.0).is_err());
}

#[test]
fn retention_counts() {
    assert_eq!(retained_count(400, 1.0), 4);
    assert_eq!(retained_count(64, 5.0), 4);
    assert_eq!(retained_count(10, 1.0), 1);
    assert_eq!(retained_count(10, 100.0), 10);
}

#[test]
fn pruned_units_do_not_influence_the_output() {
    for spec in [LayerSpec::Dilation(6), LayerSpec::Mixed(6), LayerSpec::Relu(6)] {
        let net = MorphNetwork::new(3, &[spec, LayerSpec::Linear(3)], 3, 7).unwrap();
        let pruned = prune(&net, 50.0).unwrap();
        let dropped: Vec<usize> = (0..6).filter(|&u| !pruned.mask(0)[u]).collect();
        // Mixed layers keep the top units of each half separately.
        let expected = match spec {
            LayerSpec::Mixed(_) => 2,
            _ => 3,
        };
        assert_eq!(dropped.len(), expected, "{spec}");
        let mut perturbed = pruned.clone();
        let rows_per_block = perturbed.blocks(0)[0].rows();
        for &u in &dropped {
            let (block, row) = match spec {
                LayerSpec::Mixed(_) => (u / rows_per_block, u % rows_per_block),
                _ => (0, u),
            };
            perturbed.blocks_mut(0)[block]
                .row_mut(row)
                .iter_mut()
                .for_each(|v| *v += 0.123);
        }
        let x = [0.3, -1.0, 2.0];
        assert_eq!(
            pruned.forward_sample(&x).unwrap(),
            perturbed.forward_sample(&x).unwrap(),
            "{spec}"
        );
        assert_ne!(net.forward_sample(&x).unwrap(), {
            let mut p = net.clone();
            p.blocks_mut(0)[0].row_mut(0).iter_mut().for_each(|v| *v += 5.0);
            p.forward_sample(&x).unwrap()
        });
    }
}

#[test]
fn checkpoints_keep_masks() {
    let net = MorphNetwork::new(
        3,
        &[LayerSpec::Mixed(8), LayerSpec::Relu(4), LayerSpec::Linear(3)],
        3,
        2,
    )
    .unwrap();
    let pruned = prune(&net, 25.0).unwrap();
    let bytes = pruned.to_bytes();
    assert_eq!(MorphNetwork::from_bytes(&bytes).unwrap(), pruned);
    assert!(MorphNetwork::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn masks_keep_the_highest_scores(seed in 0u64..1000, p in 1.0f64..=100.0) {
        let net = MorphNetwork::new(3, &[LayerSpec::Relu(12), LayerSpec::Linear(3)], 3, seed).unwrap();
        let scores = unit_scores(&net, 0).unwrap();
        let keep = prune(&net, p).unwrap().mask(0).to_vec();
        prop_assert_eq!(keep.iter().filter(|&&k| k).count(), retained_count(12, p));
        let kept_min = scores.iter().zip(&keep).filter(|(_, &k)| k).map(|(s, _)| *s).fold(f64::INFINITY, f64::min);
        let dropped_max = scores.iter().zip(&keep).filter(|(_, &k)| !k).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(kept_min >= dropped_max);
    }

    #[test]
    fn masks_depend_only_on_parameters(seed in 0u64..1000, p in 1.0f64..=100.0, q in 1.0f64..=100.0) {
        let net = MorphNetwork::new(3, &[LayerSpec::Mixed(10), LayerSpec::Linear(3)], 3, seed).unwrap();
        let direct = prune(&net, q).unwrap();
        let chained = prune(&prune(&net, p).unwrap(), q).unwrap();
        prop_assert_eq!(direct.mask(0), chained.mask(0));
    }

    #[test]
    fn top_units_breaks_ties_by_index(n in 1usize..30, p in 1.0f64..=100.0) {
        let keep = top_units(&vec![1.0; n], p);
        let k = retained_count(n, p);
        prop_assert!(keep[..k].iter().all(|&b| b) && keep[k..].iter().all(|&b| !b));
    }
}
