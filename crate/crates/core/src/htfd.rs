//! Hybrid tree/finite-difference pricer.
//!
//! Backward induction runs on the bivariate `(V, X)` lattice. At each node the
//! log-price direction is advanced one step by the IMEX PIDE solver, after the
//! four successor slices are shifted to absorb the correlation with `V` and
//! `X` and averaged with the branch probabilities.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{PricingError, Result};
use crate::lattice::{build_v_tree, build_x_tree, TreeGrid1D};
use crate::model::{drift_reduced, rate_curve, rho3, Exercise, ModelParams, OptionSpec, RateCurve};
use crate::pide::{
    assemble_a, build_grid, interpolate_shift_cubic_into, interpolate_shift_into, solve_into, ExteriorTails, GridConfig,
    JumpOperator, JumpScratch, PideGrid,
};

/// Whether the rate factor is part of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtfdMode {
    /// Deterministic rate `r0`; the `X` dimension is collapsed.
    StandardBates,
    BatesHullWhite,
}

/// Boundary data used outside the log-price grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Payoff,
    Zero,
}

/// Interpolation used to evaluate successor slices at the shifted points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShiftInterpolation {
    /// Piecewise linear: monotone and a sup-norm contraction, but each step
    /// adds a numerical variance of up to `dy^2 / 4`.
    #[default]
    Linear,
    /// Four-point Lagrange: no accumulated smoothing, not monotone.
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtfdConfig {
    pub n_steps: usize,
    pub grid: GridConfig,
    pub mode: HtfdMode,
    pub boundary: Boundary,
    /// Optional threshold `L`: the rate-factor term of the discount is
    /// dropped at nodes with `x <= -L`.
    pub discount_threshold: Option<f64>,
    pub interpolation: ShiftInterpolation,
}

impl HtfdConfig {
    pub fn new(n_steps: usize, dy: f64, mode: HtfdMode) -> Self {
        HtfdConfig {
            n_steps,
            grid: GridConfig::with_dy(dy),
            mode,
            boundary: Boundary::Payoff,
            discount_threshold: None,
            interpolation: ShiftInterpolation::Linear,
        }
    }
}

/// Option values at one time step over `(i, k, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceCube {
    n: usize,
    h: f64,
    len: usize,
    nk: usize,
    nj: usize,
    values: Vec<f64>,
}

impl PriceCube {
    fn zeros(n: usize, h: f64, len: usize, nk: usize, nj: usize) -> Self {
        PriceCube {
            n,
            h,
            len,
            nk,
            nj,
            values: vec![0.0; len * nk * nj],
        }
    }

    pub fn step(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of log-price points `2M + 1`.
    pub fn grid_len(&self) -> usize {
        self.len
    }

    pub fn v_nodes(&self) -> usize {
        self.nk
    }

    pub fn x_nodes(&self) -> usize {
        self.nj
    }

    /// The log-price slice at lattice node `(k, j)`.
    pub fn slice(&self, k: usize, j: usize) -> &[f64] {
        let o = (k * self.nj + j) * self.len;
        &self.values[o..o + self.len]
    }

    pub fn get(&self, i: usize, k: usize, j: usize) -> f64 {
        self.slice(k, j)[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Counters collected during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HtfdDiagnostics {
    /// Continuation values below zero before the exercise comparison.
    pub negative_entries: usize,
    /// Lattice transitions whose probabilities had to be clamped.
    pub clamped_transitions: usize,
}

#[derive(Debug, Clone)]
pub struct HtfdResult {
    pub price: f64,
    pub cube: PriceCube,
    pub diagnostics: HtfdDiagnostics,
}

/// `exp(-(sigma_r x 1{x > -L} + phi(t)) h)`. Without a threshold the rate
/// factor always contributes.
pub fn discount_factor(
    params: &ModelParams,
    curve: &RateCurve,
    x: f64,
    t: f64,
    h: f64,
    threshold: Option<f64>,
) -> f64 {
    let rate_term = match threshold {
        Some(l) if x <= -l => 0.0,
        _ => params.sigma_r * x,
    };
    (-(rate_term + curve.phi(t)) * h).exp()
}

/// Terminal cube: the payoff in every lattice column.
pub fn terminal_condition(grid: &PideGrid, nk: usize, nj: usize, spec: &OptionSpec, h: f64, n: usize) -> PriceCube {
    let mut cube = PriceCube::zeros(n, h, grid.len(), nk, nj);
    let payoff: Vec<f64> = grid.points().iter().map(|&y| spec.payoff_log(y)).collect();
    for col in cube.values.chunks_mut(grid.len()) {
        col.copy_from_slice(&payoff);
    }
    cube
}

/// State shared by all backward steps of one pricing run.
pub struct HtfdEngine {
    params: ModelParams,
    spec: OptionSpec,
    config: HtfdConfig,
    curve: RateCurve,
    rho3: f64,
    h: f64,
    grid: PideGrid,
    v_tree: TreeGrid1D,
    x_tree: Option<TreeGrid1D>,
    jumps: JumpOperator,
    tails: ExteriorTails,
    b_lo: f64,
    b_hi: f64,
    obstacle: Vec<f64>,
}

struct Workspace {
    jump: JumpScratch,
    g: [Vec<f64>; 2],
    bg: [Vec<f64>; 2],
    shifted: Vec<f64>,
    thomas: Vec<f64>,
}

impl HtfdEngine {
    pub fn new(params: &ModelParams, spec: &OptionSpec, config: &HtfdConfig) -> Result<Self> {
        params.validate()?;
        spec.validate()?;
        if config.n_steps == 0 {
            return Err(PricingError::config("n_steps", "must be >= 1"));
        }
        let params = match config.mode {
            HtfdMode::StandardBates => params.standard_bates(),
            HtfdMode::BatesHullWhite => *params,
        };
        if let Some(l) = config.discount_threshold {
            if !(l > 0.0) {
                return Err(PricingError::domain("discount_threshold", "must be > 0"));
            }
        }
        let n = config.n_steps;
        let v_tree = build_v_tree(&params, n, spec.maturity)?;
        let x_tree = match config.mode {
            HtfdMode::StandardBates => None,
            HtfdMode::BatesHullWhite => Some(build_x_tree(&params, n, spec.maturity)?),
        };
        let grid = build_grid(&params, &config.grid)?;
        let jumps = JumpOperator::new(&grid);
        let h = v_tree.h();
        let m = grid.m() as isize;
        let (tails, b_lo, b_hi) = match config.boundary {
            Boundary::Payoff => (
                ExteriorTails::new(&grid, |y| spec.payoff_log(y), h),
                spec.payoff_log(grid.y(-m - 1)),
                spec.payoff_log(grid.y(m + 1)),
            ),
            Boundary::Zero => (ExteriorTails::new(&grid, |_| 0.0, h), 0.0, 0.0),
        };
        let obstacle = grid.points().iter().map(|&y| spec.obstacle_log(y)).collect();
        Ok(HtfdEngine {
            curve: rate_curve(&params),
            rho3: rho3(&params)?,
            params,
            spec: *spec,
            config: *config,
            h,
            grid,
            v_tree,
            x_tree,
            jumps,
            tails,
            b_lo,
            b_hi,
            obstacle,
        })
    }

    pub fn grid(&self) -> &PideGrid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn curve(&self) -> &RateCurve {
        &self.curve
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps
    }

    pub fn v_tree(&self) -> &TreeGrid1D {
        &self.v_tree
    }

    pub fn x_tree(&self) -> Option<&TreeGrid1D> {
        self.x_tree.as_ref()
    }

    fn x_nodes(&self, n: usize) -> usize {
        if self.x_tree.is_some() {
            n + 1
        } else {
            1
        }
    }

    fn x_value(&self, n: usize, j: usize) -> f64 {
        self.x_tree.as_ref().map_or(0.0, |t| t.value(n, j))
    }

    fn x_branches(&self, n: usize, j: usize) -> [(usize, f64); 2] {
        self.x_tree.as_ref().map_or([(0, 1.0), (0, 0.0)], |t| t.branches(n, j))
    }

    pub fn terminal(&self) -> PriceCube {
        let n = self.config.n_steps;
        terminal_condition(&self.grid, n + 1, self.x_nodes(n), &self.spec, self.h, n)
    }

    fn workspace(&self) -> Workspace {
        let len = self.grid.len();
        Workspace {
            jump: self.jumps.scratch(),
            g: [vec![0.0; len], vec![0.0; len]],
            bg: [vec![0.0; len], vec![0.0; len]],
            shifted: vec![0.0; len],
            thomas: vec![0.0; len],
        }
    }

    /// Probability-weighted average of the shifted successor slices of
    /// `(n, k, j)`.
    fn combine(&self, next: &PriceCube, n: usize, k: usize, j: usize, g: &mut [f64], shifted: &mut [f64]) {
        let p = &self.params;
        let v = self.v_tree.value(n, k);
        let x = self.x_value(n, j);
        let sqrt_v = v.sqrt();
        g.iter_mut().for_each(|z| *z = 0.0);
        for (ka, pa) in self.v_tree.branches(n, k) {
            if pa == 0.0 {
                continue;
            }
            let dv = self.v_tree.value(n + 1, ka) - v;
            for (jb, pb) in self.x_branches(n, j) {
                let prob = pa * pb;
                if prob == 0.0 {
                    continue;
                }
                let dx = self.x_value(n + 1, jb) - x;
                let zeta = p.rho1 / p.sigma_v * dv + p.rho2 * sqrt_v * dx;
                let src = next.slice(ka, jb);
                match self.config.interpolation {
                    ShiftInterpolation::Linear => interpolate_shift_into(src, self.grid.dy(), zeta, shifted),
                    ShiftInterpolation::Cubic => interpolate_shift_cubic_into(src, self.grid.dy(), zeta, shifted),
                }
                for (a, s) in g.iter_mut().zip(shifted.iter()) {
                    *a += prob * s;
                }
            }
        }
    }

    /// Solves the PIDE step at `(n, k, j)` from `rhs = B g`, writing the node
    /// values into `out`. Returns the number of negative continuation values.
    fn finish_node(&self, n: usize, k: usize, j: usize, rhs: &mut [f64], out: &mut [f64], thomas: &mut [f64]) -> Result<usize> {
        let v = self.v_tree.value(n, k);
        let x = self.x_value(n, j);
        let t = n as f64 * self.h;
        let mu = drift_reduced(&self.params, &self.curve, v, x, t);
        let a = assemble_a(&self.grid, mu, v, self.rho3, self.h)?;
        self.tails.add_to(rhs, a.alpha, a.beta, self.b_lo, self.b_hi);
        solve_into(&a, rhs, out, thomas)?;
        let disc = discount_factor(&self.params, &self.curve, x, t, self.h, self.config.discount_threshold);
        let american = self.spec.exercise == Exercise::American;
        let mut negative = 0;
        for (o, ob) in out.iter_mut().zip(&self.obstacle) {
            let cont = disc * *o;
            if cont < 0.0 {
                negative += 1;
            }
            *o = if american { cont.max(*ob) } else { cont };
        }
        Ok(negative)
    }

    /// One backward step from the cube at `n + 1` to the cube at `n`.
    pub fn backward_step(&self, next: &PriceCube, n: usize) -> Result<(PriceCube, usize)> {
        if next.n != n + 1 || n >= self.config.n_steps {
            return Err(PricingError::IndexOutOfRange(format!(
                "backward step {n} from cube at step {}",
                next.n
            )));
        }
        let len = self.grid.len();
        let nj = self.x_nodes(n);
        let mut cube = PriceCube::zeros(n, self.h, len, n + 1, nj);
        let negative = AtomicUsize::new(0);
        cube.values
            .par_chunks_mut(2 * len)
            .enumerate()
            .try_for_each_init(
                || self.workspace(),
                |ws, (c, chunk)| -> Result<()> {
                    let nodes = chunk.len() / len;
                    let idx = |q: usize| ((2 * c + q) / nj, (2 * c + q) % nj);
                    let Workspace { jump, g, bg, shifted, thomas } = ws;
                    for q in 0..nodes {
                        let (k, j) = idx(q);
                        self.combine(next, n, k, j, &mut g[q], shifted);
                    }
                    let [g0, g1] = g;
                    let [b0, b1] = bg;
                    if nodes == 2 {
                        self.jumps.apply_pair(g0, g1, self.h, b0, b1, jump);
                    } else {
                        self.jumps.apply(g0, self.h, b0, jump);
                    }
                    let mut neg = 0;
                    for (q, (out, rhs)) in chunk.chunks_mut(len).zip([b0, b1]).enumerate() {
                        let (k, j) = idx(q);
                        neg += self.finish_node(n, k, j, rhs, out, thomas)?;
                    }
                    negative.fetch_add(neg, Ordering::Relaxed);
                    Ok(())
                },
            )?;
        Ok((cube, negative.into_inner()))
    }

    /// Full backward induction; returns the time-0 cube.
    pub fn run(&self) -> Result<HtfdResult> {
        let mut cube = self.terminal();
        let mut negative = 0;
        for n in (0..self.config.n_steps).rev() {
            let (c, neg) = self.backward_step(&cube, n)?;
            cube = c;
            negative += neg;
        }
        let price = cube.get(self.grid.m(), 0, 0);
        let clamped = self.v_tree.clamped_count() + self.x_tree.as_ref().map_or(0, |t| t.clamped_count());
        Ok(HtfdResult {
            price,
            cube,
            diagnostics: HtfdDiagnostics {
                negative_entries: negative,
                clamped_transitions: clamped,
            },
        })
    }
}

/// Prices `spec` with `n_steps` time steps and log-price step `dy`.
pub fn price_htfd(
    params: &ModelParams,
    spec: &OptionSpec,
    n_steps: usize,
    dy: f64,
    mode: HtfdMode,
) -> Result<HtfdResult> {
    HtfdEngine::new(params, spec, &HtfdConfig::new(n_steps, dy, mode))?.run()
}
