use std::sync::Arc;

use approx::assert_relative_eq;
use growcoag::kernels::log_sample_grid;
use growcoag::{KernelFamily, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn families() -> Vec<KernelSpec> {
    vec![
        KernelSpec::smoluchowski(),
        KernelSpec::stirred_froth(0.4).unwrap(),
        KernelSpec::granulation(0.5, 0.2, 0.3).unwrap(),
        KernelSpec::constant(2.0, 0.25).unwrap(),
    ]
}

// written out independently of the library's regime split
fn envelope_oracle(beta: f64, k: f64, v1: f64, v2: f64) -> f64 {
    match (v1 <= 1.0, v2 <= 1.0) {
        (true, true) => k * v1.powf(-beta) * v2.powf(-beta),
        (true, false) => k * v2 / v1.powf(beta),
        (false, true) => k * v1 / v2.powf(beta),
        (false, false) => k * v1 + k * v2,
    }
}

#[test]
fn kernels_are_symmetric_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for spec in families() {
        for _ in 0..10_000 {
            let a = 10f64.powf(rng.random_range(-6.0..6.0));
            let b = 10f64.powf(rng.random_range(-6.0..6.0));
            let (x, y) = (spec.evaluate(a, b).unwrap(), spec.evaluate(b, a).unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{:?} at ({a}, {b})", spec.family);
        }
    }
}

#[test]
fn evaluate_rejects_nonpositive_volumes() {
    let k = KernelSpec::smoluchowski();
    assert!(k.evaluate(0.0, 1.0).is_err());
    assert!(k.evaluate(1.0, -2.0).is_err());
    assert!(k.truncate(1).is_err());
}

#[test]
fn truncated_supremum_grows_with_n() {
    for spec in families() {
        let sups: Vec<f64> = [2, 4, 8, 16, 32, 64].iter().map(|&n| spec.sup_truncated(n)).collect();
        assert!(sups.windows(2).all(|w| w[1] >= w[0]), "{:?}: {sups:?}", spec.family);
    }
}

#[test]
fn truncated_supremum_matches_brute_force() {
    for spec in families() {
        for n in [2u32, 5, 20] {
            let lo = 1.0 / n as f64;
            let hi = n as f64;
            // dense interior lattice approaches the supremum from below
            let brute = log_sample_grid(401, lo * (1.0 + 1e-9), hi * (1.0 - 1e-9))
                .into_iter()
                .map(|(a, b)| spec.rate(a, b))
                .fold(0.0, f64::max);
            assert_relative_eq!(spec.sup_truncated(n), brute, max_relative = 1e-6);
        }
    }
}

#[test]
fn smoluchowski_supremum_at_two() {
    let s = 2f64.cbrt();
    let corner = (1.0 / s + s) * (1.0 / s + s);
    assert_relative_eq!(KernelSpec::smoluchowski().sup_truncated(2), corner, max_relative = 1e-14);
    assert_relative_eq!(KernelSpec::smoluchowski().sup_truncated(2), 4.217_361_576_915_636, max_relative = 1e-14);
}

#[test]
fn documented_envelopes_hold() {
    let samples = log_sample_grid(50, 1e-4, 1e4);
    for spec in families() {
        let report = spec.verify_envelope(&samples);
        let oracle = samples
            .iter()
            .map(|&(a, b)| spec.rate(a, b) / envelope_oracle(spec.beta, spec.k_env, a, b))
            .fold(0.0, f64::max);
        assert!(report.ok, "{report:?}");
        assert_relative_eq!(report.worst_ratio, oracle, max_relative = 1e-12);
    }
}

#[test]
fn envelope_violation_is_reported_with_witness() {
    let spec = KernelSpec::new(KernelFamily::Constant { kappa: 3.0 }, 0.3, 1.0).unwrap();
    let samples = log_sample_grid(50, 1e-4, 1e4);
    let report = spec.verify_envelope(&samples);
    let (oracle, at) = samples
        .iter()
        .map(|&(a, b)| (3.0 / envelope_oracle(0.3, 1.0, a, b), (a, b)))
        .fold((0.0, (0.0, 0.0)), |best, cur| if cur.0 > best.0 { cur } else { best });
    assert!(!report.ok);
    assert_relative_eq!(report.worst_ratio, oracle, max_relative = 1e-12);
    assert_relative_eq!(report.witness.0, at.0, max_relative = 1e-12);
    assert_relative_eq!(report.witness.1, at.1, max_relative = 1e-12);
    // the lattice skips (1,1), where the exact ratio 3 is attained
    assert!(report.worst_ratio > 2.5 && report.worst_ratio < 3.0, "{}", report.worst_ratio);
}

#[test]
fn truncated_kernel_vanishes_outside_square() {
    let t = KernelSpec::smoluchowski().truncate(4).unwrap();
    assert_eq!(t.evaluate(0.2, 1.0), 0.0);
    assert_eq!(t.evaluate(1.0, 5.0), 0.0);
    assert!(t.evaluate(0.3, 3.0) > 0.0);
    assert!(!t.is_zero());
    assert!(KernelSpec::constant(0.0, 0.2).unwrap().truncate(4).unwrap().is_zero());
}

#[test]
fn user_kernel_supremum_is_searched() {
    let bump: growcoag::kernels::RateFn = Arc::new(|a: f64, b: f64| (-(a.ln() - 0.5).powi(2) - b.ln().powi(2)).exp());
    let spec = KernelSpec::user(bump, 0.2, 1.0).unwrap();
    assert_relative_eq!(spec.sup_truncated(10), 1.0, max_relative = 1e-6);
    assert!(spec.descriptor().is_none());
    assert!(KernelSpec::smoluchowski().descriptor().is_some());
}
