mod common;

use common::gradcheck;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..5 {
        let r = gradcheck::check(seed);
        println!("seed {seed}: {} params, max rel err {:.3e} at {}", r.checked, r.max_rel, r.worst);
        assert!(r.max_rel < 1e-4, "seed {seed}: {}", r.worst);
    }
}
