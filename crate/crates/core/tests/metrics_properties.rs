use evoesn::metrics::{
    absolute_error_trace, mean, mse, nmse, nmse_with_variance, nrmse_at_step, nrmse_over_horizon, variance,
    VarianceConvention,
};
use num::{BigRational, ToPrimitive};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap()
}

/// `(sum (t - p)^2 / n) / var(t)` with population variance, exactly.
fn exact_nmse(t: &[f64], p: &[f64]) -> f64 {
    let n = BigRational::from_integer(t.len().into());
    let ts: Vec<BigRational> = t.iter().map(|&v| exact(v)).collect();
    let m = ts.iter().cloned().sum::<BigRational>() / &n;
    let var = ts.iter().map(|v| (v - &m) * (v - &m)).sum::<BigRational>() / &n;
    let mse = ts
        .iter()
        .zip(p)
        .map(|(a, &b)| {
            let d = a - exact(b);
            &d * &d
        })
        .sum::<BigRational>()
        / &n;
    (mse / var).to_f64().unwrap()
}

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

fn non_degenerate(t: &[f64]) -> bool {
    variance(t, VarianceConvention::Population) > 1e-6
}

proptest! {
    #[test]
    fn nrmse_squared_is_nmse((t, p) in paired()) {
        prop_assume!(non_degenerate(&t));
        let v = variance(&t, VarianceConvention::Population);
        let r = nrmse_over_horizon(&t, &p, t.len(), v).unwrap();
        let n = nmse(&t, &p).unwrap();
        prop_assert!((r * r - n).abs() <= 1e-12 * n.max(1.0));
    }

    #[test]
    fn affine_invariance((t, p) in paired(), a in 0.1f64..10.0, neg in any::<bool>(), b in -100.0f64..100.0) {
        prop_assume!(non_degenerate(&t));
        let a = if neg { -a } else { a };
        let ta: Vec<f64> = t.iter().map(|x| a * x + b).collect();
        let pa: Vec<f64> = p.iter().map(|x| a * x + b).collect();
        let n0 = nmse(&t, &p).unwrap();
        let n1 = nmse(&ta, &pa).unwrap();
        prop_assert!((n0 - n1).abs() <= 1e-9 * n0.max(1.0));
        let v0 = variance(&t, VarianceConvention::Population);
        let v1 = variance(&ta, VarianceConvention::Population);
        let h = t.len();
        let r0 = nrmse_over_horizon(&t, &p, h, v0).unwrap();
        let r1 = nrmse_over_horizon(&ta, &pa, h, v1).unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-9 * r0.max(1.0));
        let s0 = nrmse_at_step(&[(&t, &p)], h, v0).unwrap();
        let s1 = nrmse_at_step(&[(&ta, &pa)], h, v1).unwrap();
        prop_assert!((s0 - s1).abs() <= 1e-9 * s0.max(1.0));
    }

    #[test]
    fn paired_shuffle_leaves_nmse((t, p) in paired(), seed in any::<u64>()) {
        prop_assume!(non_degenerate(&t));
        let mut idx: Vec<usize> = (0..t.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let ts: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let ps: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let a = nmse(&t, &p).unwrap();
        let b = nmse(&ts, &ps).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        let mut tr = absolute_error_trace(&t, &p).unwrap();
        let mut trs = absolute_error_trace(&ts, &ps).unwrap();
        tr.sort_by(f64::total_cmp);
        trs.sort_by(f64::total_cmp);
        prop_assert_eq!(tr, trs);
    }

    #[test]
    fn trace_matches_residuals((t, p) in paired()) {
        let tr = absolute_error_trace(&t, &p).unwrap();
        let m: f64 = tr.iter().map(|e| e * e).sum::<f64>() / t.len() as f64;
        prop_assert!((m - mse(&t, &p).unwrap()).abs() <= 1e-12 * m.max(1.0));
    }
}

#[test]
fn twenty_point_instances_match_exact_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..50 {
        let t: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p: Vec<f64> = t.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let oracle = exact_nmse(&t, &p);
        let got = nmse(&t, &p).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle, "{got} vs {oracle}");
        let v = variance(&t, VarianceConvention::Population);
        let r = nrmse_over_horizon(&t, &p, 20, v).unwrap();
        assert!((r - oracle.sqrt()).abs() <= 1e-12 * oracle.sqrt());
    }
}

#[test]
fn step_metric_over_runs() {
    // two runs, residual at step 3 is 1 and 3 -> mean square 5
    let t1 = [0.0, 0.0, 1.0];
    let p1 = [9.0, 9.0, 0.0];
    let t2 = [0.0, 0.0, 3.0];
    let p2 = [0.0, 0.0, 0.0];
    let r = nrmse_at_step(&[(&t1, &p1), (&t2, &p2)], 3, 5.0).unwrap();
    assert!((r - 1.0).abs() < 1e-15);
}

#[test]
fn nmse_with_explicit_variance() {
    let t = [1.0, 3.0];
    let p = [2.0, 2.0];
    assert!((nmse_with_variance(&t, &p, 0.5).unwrap() - 2.0).abs() < 1e-15);
    assert!((mean(&t) - 2.0).abs() < 1e-15);
}
