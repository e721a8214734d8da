use proptest::prelude::*;
use tropmorph::data::{
    bootstrap_indices, dataset_from_idx, load_idx, load_mnist_dir, parse_idx_images, parse_idx_labels,
    stratified_subset, train_test_split, write_idx_images, write_idx_labels, Dataset, IdxImages,
};

fn labelled(n: usize, classes: usize) -> Dataset {
    let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % classes).collect();
    let features = (0..n).map(|i| i as f64).collect();
    Dataset::new("t", 1, features, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idx_round_trip(count in 0usize..6, rows in 1usize..5, cols in 1usize..5, seed in any::<u8>()) {
        let pixels: Vec<u8> = (0..count * rows * cols).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let images = IdxImages { count, rows, cols, pixels };
        let mut buf = Vec::new();
        write_idx_images(&mut buf, &images).unwrap();
        prop_assert_eq!(parse_idx_images(&buf).unwrap(), images.clone());
        let labels: Vec<u8> = (0..count as u8).map(|l| l % 10).collect();
        let mut lb = Vec::new();
        write_idx_labels(&mut lb, &labels).unwrap();
        prop_assert_eq!(parse_idx_labels(&lb).unwrap(), labels.clone());
        if count > 0 {
            let ds = dataset_from_idx("x", &images, &labels).unwrap();
            prop_assert!(ds.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn idx_parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = parse_idx_images(&bytes);
        let _ = parse_idx_labels(&bytes);
    }

    #[test]
    fn stratified_subset_keeps_proportions(total in 1usize..120, seed in any::<u64>()) {
        let ds = labelled(120, 4);
        let sub = stratified_subset(&ds, total, seed).unwrap();
        prop_assert_eq!(sub.len(), total);
        let full = ds.class_counts();
        for (c, &k) in sub.class_counts().iter().enumerate() {
            let quota = total as f64 * full[c] as f64 / 120.0;
            prop_assert!((k as f64 - quota).abs() < 1.0 + 1e-9, "class {} got {} for quota {}", c, k, quota);
        }
        // Rows come from the source, without repetition.
        let mut xs: Vec<f64> = sub.features().to_vec();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        prop_assert_eq!(xs.len(), total);
        prop_assert_eq!(stratified_subset(&ds, total, seed).unwrap(), sub);
    }

    #[test]
    fn bootstrap_draws_per_class(fraction in 0.01f64..=1.0, seed in any::<u64>()) {
        let ds = labelled(90, 3);
        let idx = bootstrap_indices(&ds, fraction, seed).unwrap();
        for (c, members) in ds.class_indices().iter().enumerate() {
            let drawn = idx.iter().filter(|&&i| ds.labels()[i] == c).count();
            let expected = ((fraction * members.len() as f64).round() as usize).max(1);
            prop_assert_eq!(drawn, expected);
        }
    }

    #[test]
    fn split_partitions(frac in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = labelled(50, 2);
        let (a, b) = train_test_split(&ds, frac, seed).unwrap();
        prop_assert_eq!(a.len() + b.len(), 50);
        let mut all: Vec<f64> = a.features().iter().chain(b.features()).copied().collect();
        all.sort_by(f64::total_cmp);
        prop_assert_eq!(all, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }
}

#[test]
fn loads_an_mnist_layout_directory() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, count: usize| {
        let images = IdxImages {
            count,
            rows: 2,
            cols: 2,
            pixels: (0..count * 4).map(|i| i as u8).collect(),
        };
        let labels: Vec<u8> = (0..count as u8).map(|l| l % 3).collect();
        let mut f = std::fs::File::create(dir.path().join(format!("{name}-images-idx3-ubyte"))).unwrap();
        write_idx_images(&mut f, &images).unwrap();
        let mut f = std::fs::File::create(dir.path().join(format!("{name}-labels-idx1-ubyte"))).unwrap();
        write_idx_labels(&mut f, &labels).unwrap();
    };
    write("train", 6);
    write("t10k", 2);
    let (train, test) = load_mnist_dir(dir.path()).unwrap();
    assert_eq!((train.len(), test.len(), train.dim()), (6, 2, 4));
    assert_eq!(train.classes(), test.classes());
    assert_eq!(train.row(1), &[4.0 / 255.0, 5.0 / 255.0, 6.0 / 255.0, 7.0 / 255.0]);

    let missing = dir.path().join("nope");
    assert!(load_idx(&missing, &missing).is_err());
}
