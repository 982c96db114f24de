//! Hybrid Monte Carlo: `(V, X)` follow the lattice chains, the log-price
//! follows an Euler-type recursion driven by one extra Gaussian and a
//! compound Poisson jump term.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path index),
//! so results do not depend on how paths are scheduled over threads. Gaussian
//! variates use the ziggurat sampler of `rand_distr`; jump counts use
//! inversion of the Poisson distribution function.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{PricingError, Result};
use crate::lattice::{build_v_tree, build_x_tree, BivariateLattice, TreeGrid1D};
use crate::model::{drift_reduced, rate_curve, rho3, Exercise, ModelParams, OptionSpec, RateCurve};

/// Paths per block in the reductions. Block sums are combined in block order,
/// which keeps every estimate bitwise reproducible.
const BLOCK: usize = 4096;

/// Ridge added to the normalised normal equations of the regression.
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Number of exercise dates for Longstaff-Schwartz, spaced evenly with
    /// the last one at maturity. Must divide `n_steps`.
    pub exercise_dates: usize,
    /// Total degree of the polynomial regression basis.
    pub basis_degree: usize,
}

impl McConfig {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        McConfig {
            n_paths,
            n_steps,
            seed,
            exercise_dates: 1,
            basis_degree: 2,
        }
    }

    pub fn with_exercise_dates(mut self, dates: usize) -> Self {
        self.exercise_dates = dates;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(PricingError::config("n_paths", "must be >= 2"));
        }
        if self.n_steps == 0 {
            return Err(PricingError::config("n_steps", "must be >= 1"));
        }
        if self.exercise_dates == 0 || self.n_steps % self.exercise_dates != 0 {
            return Err(PricingError::config(
                "exercise_dates",
                format!("must be a positive divisor of n_steps = {}", self.n_steps),
            ));
        }
        if self.basis_degree == 0 || self.basis_degree > 4 {
            return Err(PricingError::config("basis_degree", "must lie in 1..=4"));
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        self.n_steps / self.exercise_dates
    }
}

/// A Monte Carlo estimate with the half-width of its 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    pub ci_halfwidth: f64,
}

/// Simulated paths recorded every `stride` steps, at steps
/// `0, stride, 2 stride, ..., n_steps`.
///
/// Storage is path-major: entry `(p, r)` sits at `p * n_records + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct McBatch {
    n_paths: usize,
    stride: usize,
    n_records: usize,
    h: f64,
    y: Vec<f64>,
    v_index: Vec<u32>,
    x_index: Vec<u32>,
    /// `sum_{m < n} (sigma_r X_m + phi(m h)) h` up to the recorded step.
    rate_integral: Vec<f64>,
    /// Sum of log-jumps since the previous record.
    jumps: Vec<f64>,
    /// Total number of jumps on each path.
    jump_counts: Vec<u32>,
}

impl McBatch {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Time step of record `r`.
    pub fn step_of(&self, r: usize) -> usize {
        r * self.stride
    }

    fn at(&self, p: usize, r: usize) -> usize {
        p * self.n_records + r
    }

    pub fn y(&self, p: usize, r: usize) -> f64 {
        self.y[self.at(p, r)]
    }

    pub fn v_index(&self, p: usize, r: usize) -> usize {
        self.v_index[self.at(p, r)] as usize
    }

    pub fn x_index(&self, p: usize, r: usize) -> usize {
        self.x_index[self.at(p, r)] as usize
    }

    pub fn rate_integral(&self, p: usize, r: usize) -> f64 {
        self.rate_integral[self.at(p, r)]
    }

    /// `exp(-rate_integral)`.
    pub fn discount(&self, p: usize, r: usize) -> f64 {
        (-self.rate_integral(p, r)).exp()
    }

    pub fn jump_sum(&self, p: usize, r: usize) -> f64 {
        self.jumps[self.at(p, r)]
    }

    pub fn jump_count(&self, p: usize) -> usize {
        self.jump_counts[p] as usize
    }
}

/// State of one path at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PathState {
    y: f64,
    k: usize,
    j: usize,
    rate_integral: f64,
    jumps: f64,
    jump_count: u32,
}

/// Everything a path needs, shared by all paths.
struct Simulator<'a> {
    params: &'a ModelParams,
    curve: RateCurve,
    v_tree: &'a TreeGrid1D,
    x_tree: Option<&'a TreeGrid1D>,
    n_steps: usize,
    h: f64,
    rho3: f64,
    jump_rate: f64,
    seed: u64,
}

impl<'a> Simulator<'a> {
    fn new(params: &'a ModelParams, v_tree: &'a TreeGrid1D, x_tree: Option<&'a TreeGrid1D>, seed: u64) -> Result<Self> {
        let h = v_tree.h();
        Ok(Simulator {
            curve: rate_curve(params),
            rho3: rho3(params)?,
            jump_rate: params.lambda * h,
            n_steps: v_tree.n_steps(),
            params,
            v_tree,
            x_tree,
            h,
            seed,
        })
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }

    fn jump_count(&self, rng: &mut ChaCha8Rng) -> u32 {
        if self.jump_rate == 0.0 {
            return 0;
        }
        if self.jump_rate >= 10.0 {
            let d = Poisson::new(self.jump_rate).expect("positive rate");
            return d.sample(rng) as u32;
        }
        let u: f64 = rng.random();
        let mut k = 0u32;
        let mut p = (-self.jump_rate).exp();
        let mut cdf = p;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= self.jump_rate / k as f64;
            cdf += p;
        }
        k
    }

    /// Advances `s` from step `n` to `n + 1`.
    fn step(&self, s: &mut PathState, n: usize, rng: &mut ChaCha8Rng) {
        let p = self.params;
        let h = self.h;
        let v = self.v_tree.value(n, s.k);
        let x = self.x_tree.map_or(0.0, |t| t.value(n, s.j));
        let t = n as f64 * h;
        s.rate_integral += (p.sigma_r * x + self.curve.phi(t)) * h;

        let uv: f64 = rng.random();
        let [(ku, pu), (kd, _)] = self.v_tree.branches(n, s.k);
        let k_next = if uv < pu { ku } else { kd };
        let (j_next, dx) = match self.x_tree {
            Some(tree) => {
                let ux: f64 = rng.random();
                let [(ju, qu), (jd, _)] = tree.branches(n, s.j);
                let j_next = if ux < qu { ju } else { jd };
                (j_next, tree.value(n + 1, j_next) - x)
            }
            None => (0, 0.0),
        };
        let dv = self.v_tree.value(n + 1, k_next) - v;
        let z: f64 = rng.sample(StandardNormal);
        let count = self.jump_count(rng);
        let jump = if count > 0 {
            let zj: f64 = rng.sample(StandardNormal);
            let c = count as f64;
            c * p.jump_mean() + p.delta * c.sqrt() * zj
        } else {
            0.0
        };
        let sqrt_v = v.max(0.0).sqrt();
        s.y += drift_reduced(p, &self.curve, v, x, t) * h
            + self.rho3 * (h * v.max(0.0)).sqrt() * z
            + p.rho1 / p.sigma_v * dv
            + p.rho2 * sqrt_v * dx
            + jump;
        s.jumps += jump;
        s.jump_count += count;
        s.k = k_next;
        s.j = j_next;
    }

    fn start(&self) -> PathState {
        PathState {
            y: self.params.s0.ln(),
            k: 0,
            j: 0,
            rate_integral: 0.0,
            jumps: 0.0,
            jump_count: 0,
        }
    }

    /// Terminal state of path `path`.
    fn terminal(&self, path: usize) -> PathState {
        let mut rng = self.rng(path);
        let mut s = self.start();
        for n in 0..self.n_steps {
            self.step(&mut s, n, &mut rng);
        }
        s
    }
}

fn sim_trees(params: &ModelParams, n_steps: usize, maturity: f64) -> Result<(TreeGrid1D, Option<TreeGrid1D>)> {
    let v_tree = build_v_tree(params, n_steps, maturity)?;
    let x_tree = if params.is_standard_bates() {
        None
    } else {
        Some(build_x_tree(params, n_steps, maturity)?)
    };
    Ok((v_tree, x_tree))
}

/// Simulates `cfg.n_paths` paths on `lattice`, recording every
/// `n_steps / exercise_dates` steps.
///
/// Under standard Bates (`sigma_r = 0`) the rate factor does not enter the
/// log-price and its chain is not simulated; the recorded `X` index stays 0.
pub fn simulate_batch(params: &ModelParams, lattice: &BivariateLattice, cfg: &McConfig) -> Result<McBatch> {
    params.validate()?;
    cfg.validate()?;
    if lattice.n_steps() != cfg.n_steps {
        return Err(PricingError::config(
            "n_steps",
            format!("lattice has {} steps, config asks for {}", lattice.n_steps(), cfg.n_steps),
        ));
    }
    let x_tree = (!params.is_standard_bates()).then_some(&lattice.x_tree);
    let sim = Simulator::new(params, &lattice.v_tree, x_tree, cfg.seed)?;
    let stride = cfg.stride();
    let n_records = cfg.exercise_dates + 1;
    let total = cfg.n_paths * n_records;
    let mut batch = McBatch {
        n_paths: cfg.n_paths,
        stride,
        n_records,
        h: lattice.h(),
        y: vec![0.0; total],
        v_index: vec![0; total],
        x_index: vec![0; total],
        rate_integral: vec![0.0; total],
        jumps: vec![0.0; total],
        jump_counts: vec![0; cfg.n_paths],
    };
    let records: Vec<(Vec<PathState>, u32)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = sim.rng(path);
            let mut s = sim.start();
            let mut out = Vec::with_capacity(n_records);
            out.push(s);
            for n in 0..cfg.n_steps {
                sim.step(&mut s, n, &mut rng);
                if (n + 1) % stride == 0 {
                    out.push(s);
                    s.jumps = 0.0;
                }
            }
            (out, s.jump_count)
        })
        .collect();
    for (p, (states, count)) in records.into_iter().enumerate() {
        batch.jump_counts[p] = count;
        for (r, s) in states.into_iter().enumerate() {
            let i = p * n_records + r;
            batch.y[i] = s.y;
            batch.v_index[i] = s.k as u32;
            batch.x_index[i] = s.j as u32;
            batch.rate_integral[i] = s.rate_integral;
            batch.jumps[i] = s.jumps;
        }
    }
    Ok(batch)
}

/// Mean and 95% half-width from per-block `(sum, sum of squares)`.
fn estimate(blocks: &[(f64, f64)], n: usize) -> McEstimate {
    let (sum, sq) = blocks.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    McEstimate {
        price: mean,
        ci_halfwidth: 1.96 * (var / nf).sqrt(),
    }
}

fn block_sums(n: usize, f: impl Fn(usize) -> f64 + Sync) -> Vec<(f64, f64)> {
    (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            (b * BLOCK..((b + 1) * BLOCK).min(n)).fold((0.0, 0.0), |(s, q), p| {
                let x = f(p);
                (s + x, q + x * x)
            })
        })
        .collect()
}

fn check_spec(params: &ModelParams, spec: &OptionSpec, cfg: &McConfig, exercise: Exercise) -> Result<()> {
    params.validate()?;
    spec.validate()?;
    cfg.validate()?;
    if spec.exercise != exercise {
        return Err(PricingError::domain("exercise", format!("this estimator needs {exercise:?} exercise")));
    }
    Ok(())
}

/// European price: the average of `exp(-sum (sigma_r X_n + phi(nh)) h) Psi(Y_N)`.
///
/// Paths are generated and reduced on the fly.
pub fn price_european_mc(params: &ModelParams, spec: &OptionSpec, cfg: &McConfig) -> Result<McEstimate> {
    check_spec(params, spec, cfg, Exercise::European)?;
    let (v_tree, x_tree) = sim_trees(params, cfg.n_steps, spec.maturity)?;
    let sim = Simulator::new(params, &v_tree, x_tree.as_ref(), cfg.seed)?;
    let blocks = block_sums(cfg.n_paths, |p| {
        let s = sim.terminal(p);
        (-s.rate_integral).exp() * spec.payoff_log(s.y)
    });
    Ok(estimate(&blocks, cfg.n_paths))
}

/// Monomials of total degree `<= degree` in `vars`, constant first.
fn monomials(vars: &[f64], degree: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    // Terms of the previous degree, tagged by the smallest variable index
    // they may still be multiplied with to avoid duplicates.
    let mut prev: Vec<(usize, usize)> = vec![(0, 0)];
    for _ in 0..degree {
        let mut next = Vec::new();
        for &(term, first) in &prev {
            for (vi, &x) in vars.iter().enumerate().skip(first) {
                next.push((out.len(), vi));
                out.push(out[term] * x);
            }
        }
        prev = next;
    }
}

/// Number of monomials of total degree `<= d` in `n` variables.
fn basis_size(n: usize, d: usize) -> usize {
    let mut c = 1usize;
    for i in 1..=n {
        c = c * (d + i) / i;
    }
    c
}

/// Least-squares fit of `y` on the rows of `x` by the normal equations with
/// a small ridge. Returns `None` when the factorization fails.
fn regress(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let n = x.nrows() as f64;
    let mut gram = x.transpose() * x / n;
    for i in 0..gram.nrows() {
        gram[(i, i)] += RIDGE;
    }
    let rhs = x.transpose() * y / n;
    gram.cholesky().map(|c| c.solve(&rhs))
}

/// American price by Longstaff-Schwartz regression on in-the-money paths at
/// each exercise date.
///
/// The basis holds monomials of total degree `basis_degree` in `S/K` and
/// `V/theta_v`, and also in `X` when the rate is stochastic. With fewer
/// in-the-money paths than basis functions the continuation value at that
/// date is the mean discounted future cash flow of those paths.
pub fn price_american_ls(params: &ModelParams, spec: &OptionSpec, cfg: &McConfig) -> Result<McEstimate> {
    check_spec(params, spec, cfg, Exercise::American)?;
    let lattice = BivariateLattice::build(params, cfg.n_steps, spec.maturity)?;
    let batch = simulate_batch(params, &lattice, cfg)?;
    let stochastic_rate = !params.is_standard_bates();
    let n_vars = if stochastic_rate { 3 } else { 2 };
    let n_basis = basis_size(n_vars, cfg.basis_degree);
    let last = batch.n_records() - 1;
    let n_paths = batch.n_paths();

    // Cash flow of each path discounted to time 0.
    let mut cash: Vec<f64> = (0..n_paths)
        .map(|p| batch.discount(p, last) * spec.payoff_log(batch.y(p, last)))
        .collect();

    let mut features = Vec::with_capacity(n_basis);
    for r in (1..last).rev() {
        let n = batch.step_of(r);
        let itm: Vec<usize> = (0..n_paths)
            .filter(|&p| spec.payoff_log(batch.y(p, r)) > 0.0)
            .collect();
        if itm.is_empty() {
            continue;
        }
        // Future cash flows discounted to the current date.
        let cont: Vec<f64> = itm.iter().map(|&p| cash[p] / batch.discount(p, r)).collect();
        let fitted: Vec<f64> = if itm.len() < n_basis {
            vec![cont.iter().sum::<f64>() / cont.len() as f64; itm.len()]
        } else {
            let mut x = DMatrix::zeros(itm.len(), n_basis);
            for (row, &p) in itm.iter().enumerate() {
                let s = batch.y(p, r).exp() / spec.strike;
                let w = lattice.v_tree.value(n, batch.v_index(p, r)) / params.theta_v;
                let xr = lattice.x_tree.value(n, batch.x_index(p, r));
                let vars = [s, w, xr];
                monomials(&vars[..n_vars], cfg.basis_degree, &mut features);
                for (c, f) in features.iter().enumerate() {
                    x[(row, c)] = *f;
                }
            }
            let yv = DVector::from_column_slice(&cont);
            match regress(&x, &yv) {
                Some(beta) => (&x * beta).iter().copied().collect(),
                None => vec![cont.iter().sum::<f64>() / cont.len() as f64; itm.len()],
            }
        };
        for (&p, c) in itm.iter().zip(fitted) {
            let exercise = spec.payoff_log(batch.y(p, r));
            if exercise > c {
                cash[p] = batch.discount(p, r) * exercise;
            }
        }
    }
    let blocks = block_sums(n_paths, |p| cash[p]);
    let mut est = estimate(&blocks, n_paths);
    est.price = est.price.max(spec.payoff_spot(params.s0));
    Ok(est)
}
