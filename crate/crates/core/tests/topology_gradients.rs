//! Whole-network gradient checks at reduced width.

use std::time::Instant;

use asc_core::topology::{build, check_model_gradients, BuildOptions, Topology};

fn check(topology: Topology, seeds: std::ops::Range<u64>, width_divisor: usize) {
    let spec = build(topology, &BuildOptions { width_divisor, ..Default::default() }).unwrap();
    // The x-vector's dense batch norms see one row per segment; a single
    // segment would normalize them to constants.
    let batch = if topology == Topology::XVector { 2 } else { 1 };
    for seed in seeds {
        let start = Instant::now();
        let checks = check_model_gradients(&spec, seed, batch, 16, 20, 1e-7).unwrap();
        let worst = checks.iter().max_by(|a, b| a.rel_error().total_cmp(&b.rel_error())).unwrap();
        eprintln!("{topology} seed {seed}: worst {} {:e} ({:.1?})", worst.name, worst.rel_error(), start.elapsed());
        for c in &checks {
            assert!(c.scale > 0.0, "{topology} seed {seed} {}: zero gradient", c.name);
            assert!(c.rel_error() < 1e-4, "{topology} seed {seed} {}: {:e}", c.name, c.rel_error());
        }
    }
}

#[test]
fn vgg_quarter_width() {
    check(Topology::Vgg, 0..1, 4);
}

#[test]
fn lcnn_quarter_width() {
    check(Topology::Lcnn, 0..1, 4);
}

#[test]
fn xvector_quarter_width() {
    check(Topology::XVector, 0..1, 4);
}

#[test]
#[ignore = "full-width VGG takes several minutes"]
fn vgg_full_width() {
    check(Topology::Vgg, 0..1, 1);
}
