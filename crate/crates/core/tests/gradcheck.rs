mod common;

use common::{gradient_suite, SEEDS_PER_OP};

#[test]
fn every_op_matches_central_differences() {
    let stats = gradient_suite();
    let mut bad = Vec::new();
    for s in &stats {
        println!("{:<26} n={:<5} max={:.2e} median={:.2e}", s.op, s.checked, s.max_rel, s.median_rel);
        if !(s.max_rel <= 1e-2 && s.median_rel <= 1e-4) {
            bad.push(s.op);
        }
    }
    assert!(stats.iter().all(|s| s.checked as u64 >= SEEDS_PER_OP));
    assert!(bad.is_empty(), "failing ops: {bad:?}");
}
