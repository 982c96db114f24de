/// Values of `slice` at the shifted points `y_i + zeta`, by linear
/// interpolation between grid values.
///
/// Points left of the first node take the first value and points right of the
/// last node take the last value.
pub fn interpolate_shift(slice: &[f64], dy: f64, zeta: f64) -> Vec<f64> {
    let mut out = vec![0.0; slice.len()];
    interpolate_shift_into(slice, dy, zeta, &mut out);
    out
}

pub(crate) fn interpolate_shift_into(slice: &[f64], dy: f64, zeta: f64, out: &mut [f64]) {
    let n = slice.len();
    debug_assert_eq!(out.len(), n);
    if n == 0 {
        return;
    }
    let s = zeta / dy;
    let fl = s.floor();
    let q = s - fl;
    let last = n - 1;
    if q == 0.0 || fl.abs() >= n as f64 {
        let shift = fl.clamp(-(n as f64), n as f64) as isize;
        for (p, o) in out.iter_mut().enumerate() {
            let idx = (p as isize + shift).clamp(0, last as isize);
            *o = slice[idx as usize];
        }
        return;
    }
    let shift = fl as isize;
    for (p, o) in out.iter_mut().enumerate() {
        let a = p as isize + shift;
        *o = if a < 0 {
            slice[0]
        } else if a as usize >= last {
            slice[last]
        } else {
            let a = a as usize;
            (1.0 - q) * slice[a] + q * slice[a + 1]
        };
    }
}

/// Four-point Lagrange interpolation at the shifted points, falling back to
/// linear interpolation in the outermost cells and clamping outside the grid.
///
/// Unlike [`interpolate_shift`] this is not a sup-norm contraction, but its
/// error is `O(dy^4)` instead of `O(dy^2)`, so repeated shifts do not add
/// artificial diffusion.
pub fn interpolate_shift_cubic(slice: &[f64], dy: f64, zeta: f64) -> Vec<f64> {
    let mut out = vec![0.0; slice.len()];
    interpolate_shift_cubic_into(slice, dy, zeta, &mut out);
    out
}

pub(crate) fn interpolate_shift_cubic_into(slice: &[f64], dy: f64, zeta: f64, out: &mut [f64]) {
    let n = slice.len();
    let s = zeta / dy;
    let fl = s.floor();
    let q = s - fl;
    if n < 4 || q == 0.0 || fl.abs() >= n as f64 {
        interpolate_shift_into(slice, dy, zeta, out);
        return;
    }
    let w = [
        -q * (q - 1.0) * (q - 2.0) / 6.0,
        (q + 1.0) * (q - 1.0) * (q - 2.0) / 2.0,
        -(q + 1.0) * q * (q - 2.0) / 2.0,
        (q + 1.0) * q * (q - 1.0) / 6.0,
    ];
    let last = n - 1;
    let shift = fl as isize;
    for (p, o) in out.iter_mut().enumerate() {
        let a = p as isize + shift;
        *o = if a < 0 {
            slice[0]
        } else if a as usize >= last {
            slice[last]
        } else {
            let a = a as usize;
            if a >= 1 && a + 2 <= last {
                w[0] * slice[a - 1] + w[1] * slice[a] + w[2] * slice[a + 1] + w[3] * slice[a + 2]
            } else {
                (1.0 - q) * slice[a] + q * slice[a + 1]
            }
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shift_is_identity() {
        let f: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        assert_eq!(interpolate_shift(&f, 0.01, 0.0), f);
    }

    #[test]
    fn node_shift_moves_by_one_index() {
        let f: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
        let out = interpolate_shift(&f, 0.01, 0.01);
        for p in 0..8 {
            assert!((out[p] - f[p + 1]).abs() < 1e-12);
        }
        assert_eq!(out[8], f[8]);
        let back = interpolate_shift(&f, 0.01, -0.01);
        assert_eq!(back[0], f[0]);
        for p in 1..9 {
            assert!((back[p] - f[p - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_slice_is_reproduced() {
        let m = 20isize;
        let f: Vec<f64> = (-m..=m).map(|i| 2.0 * i as f64).collect();
        let out = interpolate_shift(&f, 0.01, 0.4 * 0.01);
        for p in 0..(2 * m) as usize {
            let i = p as isize - m;
            assert!((out[p] - (2.0 * i as f64 + 0.8)).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_shift_clamps() {
        let f = vec![1.0, 2.0, 3.0];
        assert_eq!(interpolate_shift(&f, 0.1, 50.0), vec![3.0; 3]);
        assert_eq!(interpolate_shift(&f, 0.1, -50.0), vec![1.0; 3]);
        assert_eq!(interpolate_shift(&f, 0.1, 1e300), vec![3.0; 3]);
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let m = 30isize;
        let f: Vec<f64> = (-m..=m).map(|i| (i as f64 * 0.1).powi(3) - i as f64).collect();
        let out = interpolate_shift_cubic(&f, 0.01, 0.0137);
        for p in 2..(2 * m as usize - 4) {
            let x = p as f64 - m as f64 + 1.37;
            assert!((out[p] - ((x * 0.1).powi(3) - x)).abs() < 1e-10);
        }
        assert_eq!(interpolate_shift_cubic(&f, 0.01, 0.0), f);
    }
}
