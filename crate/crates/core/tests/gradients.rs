//! Reverse-mode gradients of every graph op, and of the full adapter loss,
//! against central finite differences.

mod common;

use common::gradcheck::{ib_loss_error, op_error, OPS, SEEDS, TOLERANCE};

#[test]
fn every_op_matches_finite_differences() {
    for op in OPS {
        let worst = (0..SEEDS).map(|seed| op_error(op, seed)).fold(0.0, f64::max);
        assert!(worst < TOLERANCE, "{op}: max relative error {worst:e}");
    }
}

#[test]
fn ib_loss_matches_finite_differences() {
    for seed in 0..SEEDS {
        let worst = ib_loss_error(seed);
        assert!(worst < TOLERANCE, "seed {seed}: max relative error {worst:e}");
    }
}
