use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::PideGrid;

/// Applies the explicit jump matrix `B` by FFT convolution with the sampled
/// Levy kernel.
///
/// The kernel spectrum is computed once per grid; callers keep one
/// [`JumpScratch`] per worker thread.
#[derive(Clone)]
pub struct JumpOperator {
    len: usize,
    r: usize,
    dy: f64,
    nu_sum: f64,
    n_fft: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex<f64>>,
}

/// Per-worker buffers for [`JumpOperator`].
pub struct JumpScratch {
    buf: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
}

impl std::fmt::Debug for JumpOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JumpOperator")
            .field("len", &self.len)
            .field("r", &self.r)
            .field("n_fft", &self.n_fft)
            .finish()
    }
}

impl JumpOperator {
    pub fn new(grid: &PideGrid) -> Self {
        let len = grid.len();
        let r = grid.r();
        let n_fft = (2 * len).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_fft);
        let inverse = planner.plan_fft_inverse(n_fft);
        // Reversed kernel w_t = nu(R - t): the correlation sum_l nu_l g_{p+l}
        // becomes entry p + R of the linear convolution g * w.
        let mut spectrum = vec![Complex::new(0.0, 0.0); n_fft];
        for (t, slot) in spectrum.iter_mut().take(2 * r + 1).enumerate() {
            *slot = Complex::new(grid.nu_samples()[2 * r - t], 0.0);
        }
        let mut work = vec![Complex::new(0.0, 0.0); forward.get_inplace_scratch_len()];
        forward.process_with_scratch(&mut spectrum, &mut work);
        let scale = 1.0 / n_fft as f64;
        for z in &mut spectrum {
            *z *= scale;
        }
        JumpOperator {
            len,
            r,
            dy: grid.dy(),
            nu_sum: grid.nu_sum(),
            n_fft,
            forward,
            inverse,
            spectrum,
        }
    }

    pub fn scratch(&self) -> JumpScratch {
        let n = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        JumpScratch {
            buf: vec![Complex::new(0.0, 0.0); self.n_fft],
            fft: vec![Complex::new(0.0, 0.0); n],
        }
    }

    pub fn has_jumps(&self) -> bool {
        self.nu_sum != 0.0
    }

    /// `out = B f`.
    pub fn apply(&self, f: &[f64], h: f64, out: &mut [f64], scratch: &mut JumpScratch) {
        assert_eq!(f.len(), self.len);
        if !self.has_jumps() {
            out.copy_from_slice(f);
            return;
        }
        self.convolve(f, None, scratch);
        let c = h * self.dy;
        for (p, o) in out.iter_mut().enumerate() {
            let conv = scratch.buf[p + self.r].re;
            *o = f[p] + c * (conv - self.nu_sum * f[p]);
        }
    }

    /// Applies `B` to two slices with a single complex transform, packing
    /// them into the real and imaginary parts.
    pub fn apply_pair(
        &self,
        f: &[f64],
        g: &[f64],
        h: f64,
        out_f: &mut [f64],
        out_g: &mut [f64],
        scratch: &mut JumpScratch,
    ) {
        assert_eq!(f.len(), self.len);
        assert_eq!(g.len(), self.len);
        if !self.has_jumps() {
            out_f.copy_from_slice(f);
            out_g.copy_from_slice(g);
            return;
        }
        self.convolve(f, Some(g), scratch);
        let c = h * self.dy;
        for p in 0..self.len {
            let conv = scratch.buf[p + self.r];
            out_f[p] = f[p] + c * (conv.re - self.nu_sum * f[p]);
            out_g[p] = g[p] + c * (conv.im - self.nu_sum * g[p]);
        }
    }

    fn convolve(&self, f: &[f64], g: Option<&[f64]>, scratch: &mut JumpScratch) {
        let buf = &mut scratch.buf;
        match g {
            Some(g) => {
                for (p, z) in buf.iter_mut().take(self.len).enumerate() {
                    *z = Complex::new(f[p], g[p]);
                }
            }
            None => {
                for (p, z) in buf.iter_mut().take(self.len).enumerate() {
                    *z = Complex::new(f[p], 0.0);
                }
            }
        }
        for z in &mut buf[self.len..] {
            *z = Complex::new(0.0, 0.0);
        }
        self.forward.process_with_scratch(buf, &mut scratch.fft);
        for (z, w) in buf.iter_mut().zip(&self.spectrum) {
            *z *= w;
        }
        self.inverse.process_with_scratch(buf, &mut scratch.fft);
    }
}

/// `B f` for a single slice.
pub fn apply_b(grid: &PideGrid, f: &[f64], h: f64) -> Vec<f64> {
    let op = JumpOperator::new(grid);
    let mut scratch = op.scratch();
    let mut out = vec![0.0; f.len()];
    op.apply(f, h, &mut out, &mut scratch);
    out
}

/// `B f` by the direct `O(M R)` double loop.
pub fn apply_b_direct(grid: &PideGrid, f: &[f64], h: f64) -> Vec<f64> {
    let m = grid.m() as isize;
    let r = grid.r() as isize;
    let c = h * grid.dy();
    (0..f.len())
        .map(|p| {
            let i = p as isize - m;
            let mut conv = 0.0;
            for l in -r..=r {
                let t = i + l;
                if t.abs() <= m {
                    conv += grid.nu(l) * f[(t + m) as usize];
                }
            }
            f[p] + c * (conv - grid.nu_sum() * f[p])
        })
        .collect()
}

/// The jump part of the boundary vector, `h dy sum nu_l b(y_{i+l})` over the
/// exterior indices `|i + l| > M`.
///
/// Nonzero only within `R` rows of either edge.
#[derive(Debug, Clone)]
pub struct ExteriorTails {
    values: Vec<f64>,
}

impl ExteriorTails {
    pub fn new(grid: &PideGrid, b: impl Fn(f64) -> f64, h: f64) -> Self {
        let m = grid.m() as isize;
        let r = grid.r() as isize;
        let c = h * grid.dy();
        let mut values = vec![0.0; grid.len()];
        // Exterior boundary values b(y_{+-(M + s)}), s = 1..=R.
        let upper: Vec<f64> = (1..=r).map(|s| b(grid.y(m + s))).collect();
        let lower: Vec<f64> = (1..=r).map(|s| b(grid.y(-m - s))).collect();
        for d in 0..r {
            // Row M - d sees exterior points M + s for l = d + s, s >= 1.
            let mut up = 0.0;
            let mut lo = 0.0;
            for s in 1..=(r - d) {
                up += grid.nu(d + s) * upper[(s - 1) as usize];
                lo += grid.nu(-d - s) * lower[(s - 1) as usize];
            }
            values[(2 * m - d) as usize] += c * up;
            values[d as usize] += c * lo;
        }
        ExteriorTails { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `rhs += d`, with the Dirichlet terms `(beta - alpha) b_lo` and
    /// `(beta + alpha) b_hi` at the first and last rows.
    pub fn add_to(&self, rhs: &mut [f64], alpha: f64, beta: f64, b_lo: f64, b_hi: f64) {
        for (x, t) in rhs.iter_mut().zip(&self.values) {
            *x += t;
        }
        let last = rhs.len() - 1;
        rhs[0] += (beta - alpha) * b_lo;
        rhs[last] += (beta + alpha) * b_hi;
    }
}

/// The boundary vector `d` at step `n` for boundary data `b(t, y)`: the
/// Dirichlet terms use time `n h` and the jump tails time `(n + 1) h`.
pub fn boundary_vector(
    grid: &PideGrid,
    b: impl Fn(f64, f64) -> f64,
    n: usize,
    alpha: f64,
    beta: f64,
    h: f64,
) -> Vec<f64> {
    let t_now = n as f64 * h;
    let t_next = (n + 1) as f64 * h;
    let tails = ExteriorTails::new(grid, |y| b(t_next, y), h);
    let m = grid.m() as isize;
    let mut d = vec![0.0; grid.len()];
    tails.add_to(
        &mut d,
        alpha,
        beta,
        b(t_now, grid.y(-m - 1)),
        b(t_now, grid.y(m + 1)),
    );
    d
}
