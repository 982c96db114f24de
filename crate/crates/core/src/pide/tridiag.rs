use crate::error::{PricingError, Result};

use super::PideGrid;

/// The constant-coefficient tridiagonal matrix `A` of the implicit part.
///
/// Rows are `[alpha - beta, 1 + 2 beta, -(alpha + beta)]` with
/// `alpha = h mu / (2 dy)` and `beta = h rho3^2 v / (2 dy^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TridiagonalSystem {
    pub alpha: f64,
    pub beta: f64,
    pub size: usize,
}

impl TridiagonalSystem {
    pub fn new(alpha: f64, beta: f64, size: usize) -> Result<Self> {
        if beta < 0.0 {
            return Err(PricingError::domain("beta", "must be >= 0"));
        }
        // alpha = beta = 0 is the identity and is fine.
        if beta > 0.0 && beta == alpha.abs() {
            return Err(PricingError::SingularSystem { beta });
        }
        Ok(TridiagonalSystem { alpha, beta, size })
    }

    pub fn sub(&self) -> f64 {
        self.alpha - self.beta
    }

    pub fn diag(&self) -> f64 {
        1.0 + 2.0 * self.beta
    }

    pub fn sup(&self) -> f64 {
        -(self.alpha + self.beta)
    }

    /// `A u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let (a, b, c) = (self.sub(), self.diag(), self.sup());
        (0..n)
            .map(|i| {
                let mut s = b * u[i];
                if i > 0 {
                    s += a * u[i - 1];
                }
                if i + 1 < n {
                    s += c * u[i + 1];
                }
                s
            })
            .collect()
    }
}

/// Assembles `A` for drift `mu`, variance `v` and time step `h`.
pub fn assemble_a(grid: &PideGrid, mu: f64, v: f64, rho3: f64, h: f64) -> Result<TridiagonalSystem> {
    if v < 0.0 {
        return Err(PricingError::domain("v", "variance must be >= 0"));
    }
    if !(h > 0.0) {
        return Err(PricingError::domain("h", "time step must be > 0"));
    }
    let dy = grid.dy();
    let alpha = h * mu / (2.0 * dy);
    let beta = h * rho3 * rho3 * v / (2.0 * dy * dy);
    TridiagonalSystem::new(alpha, beta, grid.len())
}

/// Solves `A u = rhs` by the Thomas algorithm in `O(M)`.
pub fn solve_step(system: &TridiagonalSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; rhs.len()];
    let mut scratch = vec![0.0; rhs.len()];
    solve_into(system, rhs, &mut out, &mut scratch)?;
    Ok(out)
}

pub(crate) fn solve_into(
    system: &TridiagonalSystem,
    rhs: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let n = rhs.len();
    if n == 0 {
        return Ok(());
    }
    let (a, b, c) = (system.sub(), system.diag(), system.sup());
    if a == 0.0 && c == 0.0 {
        let inv = 1.0 / b;
        for (o, r) in out.iter_mut().zip(rhs) {
            *o = r * inv;
        }
        return Ok(());
    }
    let check = |row: usize, pivot: f64| {
        if !pivot.is_finite() || pivot.abs() < 1e-300 {
            Err(PricingError::NumericalBreakdown { row, pivot })
        } else {
            Ok(())
        }
    };
    check(0, b)?;
    scratch[0] = c / b;
    out[0] = rhs[0] / b;
    for i in 1..n {
        let pivot = b - a * scratch[i - 1];
        check(i, pivot)?;
        let inv = 1.0 / pivot;
        scratch[i] = c * inv;
        out[i] = (rhs[i] - a * out[i - 1]) * inv;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
    Ok(())
}
