mod common;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reweigh::balancer::{compute_weights, trim, BalanceConfig};
use reweigh::data::{derive_property_sets, Group, PropertyFamilies};

#[test]
fn gap_sized_instance_solves_quickly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2019);
    let ds = common::synthetic_gap(&mut rng, 1000, 22);
    for (family, label) in [
        (PropertyFamilies::ALL, "names+distance"),
        (PropertyFamilies::NAMES, "names"),
        (PropertyFamilies::DISTANCE, "distance"),
    ] {
        let props = derive_property_sets(&ds, family);
        let start = Instant::now();
        let w = compute_weights(&ds, &props, &BalanceConfig::default()).unwrap();
        let elapsed = start.elapsed();
        println!(
            "{label}: {} examples, {} classes, {} iterations, objective {:.4}, {:?}",
            w.entries.len(),
            w.classes,
            w.iterations,
            w.objective,
            elapsed
        );
        assert!(elapsed.as_secs() < 60);
        let half = w.total_mass / 2.0;
        for g in Group::ALL {
            assert!((w.group_sum(g) - half).abs() < 1e-6);
        }
    }
    let trimmed = trim(&ds, 15, 4);
    let props = derive_property_sets(&trimmed, PropertyFamilies::ALL);
    let w = compute_weights(&trimmed, &props, &BalanceConfig::default()).unwrap();
    println!("trimmed: {} examples, {} classes", w.entries.len(), w.classes);
}
