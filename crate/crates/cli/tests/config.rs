use proptest::prelude::*;
use tropmorph_cli::config::parse_seeds;
use tropmorph_cli::{ExperimentConfig, ExperimentKind};

#[test]
fn readme_config_parses() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```toml\n").expect("README has a toml block") + 8;
    let len = readme[start..].find("```").unwrap();
    let cfg = ExperimentConfig::parse(&readme[start..start + len]).unwrap();
    assert_eq!(cfg.kind, ExperimentKind::PruneSweep);
    assert_eq!(cfg.prune.p.len(), 9);
    assert_eq!(cfg.dense.models.len(), 2);
}

#[test]
fn k_means_centers_parse() {
    let cfg = ExperimentConfig::parse(
        "kind = \"dep-multiclass\"\nseeds = [0]\n[dep]\ncenters = { kind = \"k-means\", per_class = 5, iterations = 20 }\n",
    )
    .unwrap();
    assert_eq!(
        cfg.dep.centers,
        tropmorph::dep::Centers::KMeans {
            per_class: 5,
            iterations: 20
        }
    );
}

#[test]
fn huge_seed_ranges_are_rejected() {
    assert!(parse_seeds("666666666-6696666666666666").is_err());
    assert!(parse_seeds("0-99999").is_ok());
    assert!(parse_seeds("0-100000").is_err());
    assert!(parse_seeds("5,0-99998").is_ok());
    assert!(parse_seeds("5,0-99999").is_err());
}

proptest! {
    #[test]
    fn seed_lists_round_trip(seeds in proptest::collection::vec(0u64..1_000_000, 1..20)) {
        let text: Vec<String> = seeds.iter().map(u64::to_string).collect();
        prop_assert_eq!(parse_seeds(&text.join(", ")).unwrap(), seeds);
    }

    #[test]
    fn seed_ranges_expand(a in 0u64..1000, len in 0u64..50) {
        let got = parse_seeds(&format!("{a}-{}", a + len)).unwrap();
        prop_assert_eq!(got, (a..=a + len).collect::<Vec<_>>());
    }

    #[test]
    fn canonical_form_is_a_fixed_point(seeds in proptest::collection::vec(0u64..100, 1..5), epochs in 1usize..500) {
        let text = format!("kind = \"monotone\"\nseeds = {seeds:?}\n[monotone]\nepochs = {epochs}\n");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let again = ExperimentConfig::parse(&cfg.canonical()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.canonical(), cfg.canonical());
    }
}
