//! One-step solver for the local 1-D PIDE in the log-price direction.
//!
//! With `(v, x)` frozen at a lattice node the log-price solves a constant
//! coefficient jump-diffusion PIDE over one time step. It is discretized by
//! an IMEX scheme on the uniform grid `y_i = y0 + i dy`, `i = -M..M`:
//! centred differences are implicit (a tridiagonal matrix `A`), the jump
//! integral is explicit (the matrix `B`, applied by FFT convolution) and the
//! boundary vector `d` carries the exterior values. One step solves
//! `A u^n = B u^{n+1} + d`.

mod interp;
mod jumps;
mod tridiag;

pub use interp::{interpolate_shift, interpolate_shift_cubic};
pub use jumps::{apply_b, apply_b_direct, boundary_vector, ExteriorTails, JumpOperator, JumpScratch};
pub(crate) use interp::{interpolate_shift_cubic_into, interpolate_shift_into};
pub(crate) use tridiag::solve_into;
pub use tridiag::{assemble_a, solve_step, TridiagonalSystem};

use crate::error::{PricingError, Result};
use crate::model::{levy_density, ModelParams};

/// Discretization controls for the log-price grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub dy: f64,
    /// Required extent below `ln S0`.
    pub lower_span: f64,
    /// Required extent above `ln S0`.
    pub upper_span: f64,
    /// Allowed relative defect `|dy sum nu - lambda| / lambda` of the
    /// truncated jump mass.
    pub mass_tolerance: f64,
    /// Upper bound on the number of grid points `2M + 1`.
    pub max_points: usize,
}

impl GridConfig {
    /// Localization interval `[ln S0 - 1.59, ln S0 + 1.93]`, suitable for the
    /// short-maturity reference parameters.
    pub fn with_dy(dy: f64) -> Self {
        GridConfig {
            dy,
            lower_span: 1.59,
            upper_span: 1.93,
            mass_tolerance: 1e-4,
            max_points: 1 << 20,
        }
    }
}

/// The log-price mesh together with the sampled Levy density.
#[derive(Debug, Clone)]
pub struct PideGrid {
    y0: f64,
    dy: f64,
    m: usize,
    r: usize,
    nu: Vec<f64>,
    nu_sum: f64,
}

impl PideGrid {
    /// Grid centre, `ln S0`.
    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    /// Half-width `M`: indices run over `-M..=M`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Jump truncation radius `R` in grid units.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        2 * self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `nu(l dy)` for `l = -R..=R`, stored at offset `l + R`.
    pub fn nu_samples(&self) -> &[f64] {
        &self.nu
    }

    pub fn nu(&self, l: isize) -> f64 {
        self.nu[(l + self.r as isize) as usize]
    }

    /// `Lambda = sum_l nu(xi_l)`.
    pub fn nu_sum(&self) -> f64 {
        self.nu_sum
    }

    /// `y_i` for a signed grid index.
    pub fn y(&self, i: isize) -> f64 {
        self.y0 + i as f64 * self.dy
    }

    /// Log-price at array position `p` (`p = i + M`).
    pub fn y_at(&self, p: usize) -> f64 {
        self.y(p as isize - self.m as isize)
    }

    /// All grid points in array order.
    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|p| self.y_at(p)).collect()
    }

    /// Builds a grid with an explicit half-width and truncation radius,
    /// sampling the Levy density of `params`.
    pub fn with_sizes(params: &ModelParams, y0: f64, dy: f64, m: usize, r: usize) -> Result<Self> {
        if !(dy > 0.0) {
            return Err(PricingError::domain("dy", "must be > 0"));
        }
        if m == 0 || r >= m {
            return Err(PricingError::config(
                "grid",
                format!("need M > R, got M = {m}, R = {r}"),
            ));
        }
        let nu: Vec<f64> = (-(r as isize)..=r as isize)
            .map(|l| levy_density(params, l as f64 * dy))
            .collect();
        let nu_sum = nu.iter().sum();
        Ok(PideGrid {
            y0,
            dy,
            m,
            r,
            nu,
            nu_sum,
        })
    }
}

/// Builds the grid centred at `ln S0`, with `M` derived from the
/// localization spans and `R` the smallest radius whose truncated jump mass
/// `dy sum nu(xi_l)` is within tolerance of `lambda`.
pub fn build_grid(params: &ModelParams, config: &GridConfig) -> Result<PideGrid> {
    let dy = config.dy;
    if !(dy > 0.0 && dy.is_finite()) {
        return Err(PricingError::config("dy", "must be a positive number"));
    }
    let span = config.lower_span.max(config.upper_span);
    if !(span > 0.0) {
        return Err(PricingError::config("span", "localization spans must be positive"));
    }
    let m = (span / dy - 1e-9).ceil() as usize;
    if 2 * m + 1 > config.max_points {
        return Err(PricingError::config(
            "dy",
            format!(
                "grid of {} points exceeds the cap of {}",
                2 * m + 1,
                config.max_points
            ),
        ));
    }
    let r = truncation_radius(params, dy, config.mass_tolerance, m)?;
    PideGrid::with_sizes(params, params.s0.ln(), dy, m, r)
}

fn truncation_radius(params: &ModelParams, dy: f64, tolerance: f64, m: usize) -> Result<usize> {
    let lambda = params.lambda;
    if lambda == 0.0 {
        return Ok(0);
    }
    let mut mass = levy_density(params, 0.0) * dy;
    for r in 0..m {
        if r > 0 {
            let x = r as f64 * dy;
            mass += (levy_density(params, x) + levy_density(params, -x)) * dy;
        }
        if (mass - lambda).abs() <= tolerance * lambda {
            return Ok(r);
        }
    }
    Err(PricingError::config(
        "grid",
        format!("no truncation radius below M = {m} captures the jump mass to {tolerance:e}"),
    ))
}
