use bates_hybrid::analytics::{price_cf_bates, CfQuadratureConfig};
use bates_hybrid::htfd::{price_htfd, HtfdMode};
use bates_hybrid::lattice::BivariateLattice;
use bates_hybrid::mc::{price_american_ls, price_european_mc, simulate_batch, McConfig};
use bates_hybrid::model::{Exercise, ModelParams, OptionSpec, Payoff};

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[test]
fn replay_is_bitwise_identical() {
    let p = ModelParams::bates_hull_white_reference(-0.5, -0.5);
    let lat = BivariateLattice::build(&p, 20, 0.5).unwrap();
    let cfg = McConfig::new(3000, 20, 42).with_exercise_dates(4);
    let a = simulate_batch(&p, &lat, &cfg).unwrap();
    let b = simulate_batch(&p, &lat, &cfg).unwrap();
    assert_eq!(a, b);
    let other = simulate_batch(&p, &lat, &McConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a, other);

    let spec = OptionSpec::european_call(100.0, 0.5);
    let cfg = McConfig::new(10_000, 20, 7);
    let e1 = price_european_mc(&p, &spec, &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let e2 = pool.install(|| price_european_mc(&p, &spec, &cfg).unwrap());
    assert_eq!(e1.price.to_bits(), e2.price.to_bits());
    assert_eq!(e1.ci_halfwidth.to_bits(), e2.ci_halfwidth.to_bits());
}

#[test]
fn gaussian_increments_without_jumps_or_correlation() {
    // Positivity of kappa_v and sigma_v is enforced, so "frozen" variance is
    // approximated by tiny values.
    let mut p = ModelParams::bates_reference(0.0);
    p.lambda = 0.0;
    p.kappa_v = 1e-10;
    p.sigma_v = 1e-10;
    let n_steps = 10;
    let t = 0.5;
    let h = t / n_steps as f64;
    let lat = BivariateLattice::build(&p, n_steps, t).unwrap();
    let n = 100_000;
    let b = simulate_batch(&p, &lat, &McConfig::new(n, n_steps, 11).with_exercise_dates(n_steps)).unwrap();
    let v = p.v0;
    let mu = (p.r0 - p.eta - 0.5 * v) * h;
    let var = v * h;
    for r in [1, 5, n_steps] {
        let incr: Vec<f64> = (0..n).map(|path| b.y(path, r) - b.y(path, r - 1)).collect();
        let (m, s2) = mean_var(&incr);
        let se_mean = (var / n as f64).sqrt();
        let se_var = var * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((m - mu).abs() < 4.0 * se_mean, "step {r}: mean {m} vs {mu}");
        assert!((s2 - var).abs() < 4.0 * se_var, "step {r}: var {s2} vs {var}");
    }
}

#[test]
fn jump_count_matches_poisson_mean() {
    let p = ModelParams::bates_reference(-0.5);
    let lat = BivariateLattice::build(&p, 100, 0.5).unwrap();
    let n = 20_000;
    let b = simulate_batch(&p, &lat, &McConfig::new(n, 100, 3)).unwrap();
    let counts: Vec<f64> = (0..n).map(|path| b.jump_count(path) as f64).collect();
    let (m, _) = mean_var(&counts);
    let lt = p.lambda * 0.5;
    assert!((m - lt).abs() < 3.0 * (lt / n as f64).sqrt(), "{m} vs {lt}");
}

#[test]
fn deterministic_rate_discount_is_exact() {
    let p = ModelParams::bates_reference(-0.5);
    let lat = BivariateLattice::build(&p, 100, 0.5).unwrap();
    let b = simulate_batch(&p, &lat, &McConfig::new(500, 100, 1).with_exercise_dates(20)).unwrap();
    let exact = (-p.r0 * 0.5f64).exp();
    for path in 0..500 {
        let d = b.discount(path, b.n_records() - 1);
        assert!((d - exact).abs() <= 4.0 * f64::EPSILON * exact, "{d} vs {exact}");
    }
}

#[test]
fn degenerate_variance_gives_the_deterministic_price() {
    let mut p = ModelParams::bates_reference(0.0);
    p.lambda = 0.0;
    p.v0 = 1e-16;
    p.theta_v = 1e-16;
    p.sigma_v = 1e-16;
    let spec = OptionSpec::european_call(90.0, 0.5);
    let e = price_european_mc(&p, &spec, &McConfig::new(1000, 50, 9)).unwrap();
    let exact = (-p.r0 * 0.5f64).exp() * (100.0 * ((p.r0 - p.eta) * 0.5f64).exp() - 90.0);
    assert!((e.price - exact).abs() < 1e-6, "{} vs {exact}", e.price);
    assert!(e.ci_halfwidth < 1e-5);
}

#[test]
fn single_exercise_date_is_the_european_estimator() {
    let p = ModelParams::bates_reference(-0.5);
    let cfg = McConfig::new(20_000, 50, 5);
    let eu = price_european_mc(&p, &OptionSpec::european_call(100.0, 0.5), &cfg).unwrap();
    let am = price_american_ls(&p, &OptionSpec::american_call(100.0, 0.5), &cfg.with_exercise_dates(1)).unwrap();
    assert!((eu.price - am.price).abs() <= 1e-12 * eu.price);
    assert!((eu.ci_halfwidth - am.ci_halfwidth).abs() <= 1e-12);
}

#[test]
fn no_early_exercise_premium_without_dividends() {
    let mut p = ModelParams::bates_reference(-0.5);
    p.eta = 0.0;
    p.lambda = 0.0;
    let cfg = McConfig::new(50_000, 50, 21);
    let eu = price_european_mc(&p, &OptionSpec::european_call(100.0, 0.5), &cfg).unwrap();
    let am = price_american_ls(&p, &OptionSpec::american_call(100.0, 0.5), &cfg.with_exercise_dates(10)).unwrap();
    assert!((am.price - eu.price).abs() <= eu.ci_halfwidth, "{} vs {} +- {}", am.price, eu.price, eu.ci_halfwidth);
}

#[test]
fn ls_is_not_above_the_lattice_price() {
    let p = ModelParams::bates_reference(-0.5);
    let spec = OptionSpec::american_call(100.0, 0.5);
    for s0 in [80.0, 90.0, 100.0, 110.0, 120.0] {
        let q = p.with_spot(s0);
        let ls = price_american_ls(&q, &spec, &McConfig::new(50_000, 100, 17).with_exercise_dates(20)).unwrap();
        let htfd = price_htfd(&q, &spec, 100, 0.0025, HtfdMode::StandardBates).unwrap().price;
        assert!(ls.price <= htfd + 2.0 * ls.ci_halfwidth, "S0={s0}: {} > {htfd} + 2*{}", ls.price, ls.ci_halfwidth);
    }
}

#[test]
fn put_call_parity_against_the_cf_call() {
    let p = ModelParams::bates_reference(-0.5);
    let call = price_cf_bates(&p, &OptionSpec::european_call(100.0, 0.5), &CfQuadratureConfig::default()).unwrap();
    let put_spec = OptionSpec::new(100.0, 0.5, Exercise::European, Payoff::Put).unwrap();
    let put = price_european_mc(&p, &put_spec, &McConfig::new(100_000, 100, 8)).unwrap();
    let parity = 100.0 * (-p.eta * 0.5f64).exp() - 100.0 * (-p.r0 * 0.5f64).exp();
    let gap = call - put.price - parity;
    assert!(gap.abs() <= 2.0 * put.ci_halfwidth, "gap {gap} vs ci {}", put.ci_halfwidth);
}
