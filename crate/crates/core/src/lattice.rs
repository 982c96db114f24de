//! Recombining binomial trees for the CIR variance and the OU rate factor.
//!
//! Both trees use the multiple-jumps construction: from node `(n, k)` the
//! chain moves to the closest nodes at step `n + 1` that bracket the
//! one-step conditional mean `value + drift(value) h`, and the up
//! probability matches that mean (clamped to `[0, 1]`).

use crate::error::{PricingError, Result};
use crate::model::ModelParams;

/// A recombining binomial tree with precomputed transitions.
#[derive(Debug, Clone)]
pub struct TreeGrid1D {
    n_steps: usize,
    h: f64,
    nodes: Vec<Vec<f64>>,
    up_index: Vec<Vec<usize>>,
    down_index: Vec<Vec<usize>>,
    prob_up: Vec<Vec<f64>>,
    clamped: usize,
}

impl TreeGrid1D {
    /// Builds a tree from a node formula and a drift. `node(n, k)` must be
    /// nondecreasing in `k`.
    fn build(
        n_steps: usize,
        h: f64,
        node: impl Fn(usize, usize) -> f64,
        drift: impl Fn(f64) -> f64,
    ) -> Self {
        let nodes: Vec<Vec<f64>> = (0..=n_steps)
            .map(|n| (0..=n).map(|k| node(n, k)).collect())
            .collect();
        let mut up_index = Vec::with_capacity(n_steps);
        let mut down_index = Vec::with_capacity(n_steps);
        let mut prob_up = Vec::with_capacity(n_steps);
        let mut clamped = 0;
        for n in 0..n_steps {
            let next = &nodes[n + 1];
            let mut ups = Vec::with_capacity(n + 1);
            let mut downs = Vec::with_capacity(n + 1);
            let mut probs = Vec::with_capacity(n + 1);
            for (k, &value) in nodes[n].iter().enumerate() {
                let target = value + drift(value) * h;
                let ku = (k + 1..=n + 1)
                    .find(|&kk| target <= next[kk])
                    .unwrap_or(n + 1);
                let kd = (0..=k).rev().find(|&kk| target >= next[kk]).unwrap_or(0);
                let spread = next[ku] - next[kd];
                let raw = if spread > 0.0 {
                    (target - next[kd]) / spread
                } else if target >= next[ku] {
                    1.0
                } else {
                    0.0
                };
                if raw < 0.0 || raw > 1.0 {
                    clamped += 1;
                }
                ups.push(ku);
                downs.push(kd);
                probs.push(raw.clamp(0.0, 1.0));
            }
            up_index.push(ups);
            down_index.push(downs);
            prob_up.push(probs);
        }
        TreeGrid1D {
            n_steps,
            h,
            nodes,
            up_index,
            down_index,
            prob_up,
            clamped,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Node values at step `n` (length `n + 1`).
    pub fn nodes(&self, n: usize) -> &[f64] {
        &self.nodes[n]
    }

    pub fn value(&self, n: usize, k: usize) -> f64 {
        self.nodes[n][k]
    }

    pub fn up_index(&self, n: usize, k: usize) -> usize {
        self.up_index[n][k]
    }

    pub fn down_index(&self, n: usize, k: usize) -> usize {
        self.down_index[n][k]
    }

    pub fn prob_up(&self, n: usize, k: usize) -> f64 {
        self.prob_up[n][k]
    }

    /// Number of transitions whose raw up-probability left `[0, 1]`.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    /// The two branches `(target index, probability)` leaving `(n, k)`,
    /// up first.
    pub fn branches(&self, n: usize, k: usize) -> [(usize, f64); 2] {
        let p = self.prob_up[n][k];
        [
            (self.up_index[n][k], p),
            (self.down_index[n][k], 1.0 - p),
        ]
    }

    fn check(&self, n: usize, k: usize) -> Result<()> {
        if n >= self.n_steps || k > n {
            return Err(PricingError::IndexOutOfRange(format!(
                "node (n={n}, k={k}) with N={}",
                self.n_steps
            )));
        }
        Ok(())
    }
}

fn time_step(n_steps: usize, maturity: f64) -> Result<f64> {
    if n_steps == 0 {
        return Err(PricingError::domain("n_steps", "must be >= 1"));
    }
    if !(maturity > 0.0) {
        return Err(PricingError::domain("maturity", "must be > 0"));
    }
    Ok(maturity / n_steps as f64)
}

/// CIR tree: `v(n,k) = (sqrt(V0) + sigma_v/2 (2k - n) sqrt(h))^2`, floored at zero
/// where the bracket is nonpositive.
pub fn build_v_tree(params: &ModelParams, n_steps: usize, maturity: f64) -> Result<TreeGrid1D> {
    let h = time_step(n_steps, maturity)?;
    let sqrt_v0 = params.v0.sqrt();
    let half_sigma_sqrt_h = 0.5 * params.sigma_v * h.sqrt();
    let node = |n: usize, k: usize| {
        let root = sqrt_v0 + half_sigma_sqrt_h * (2.0 * k as f64 - n as f64);
        if root > 0.0 {
            root * root
        } else {
            0.0
        }
    };
    let mut tree = TreeGrid1D::build(n_steps, h, node, |v| params.drift_v(v));
    tree.nodes[0][0] = params.v0;
    Ok(tree)
}

/// OU tree: `x(n,j) = (2j - n) sqrt(h)` with drift `-kappa_r x`.
pub fn build_x_tree(params: &ModelParams, n_steps: usize, maturity: f64) -> Result<TreeGrid1D> {
    let h = time_step(n_steps, maturity)?;
    let sqrt_h = h.sqrt();
    let node = |n: usize, j: usize| (2.0 * j as f64 - n as f64) * sqrt_h;
    Ok(TreeGrid1D::build(n_steps, h, node, |x| params.drift_x(x)))
}

/// The product lattice of the variance and rate-factor trees. The two
/// Brownian drivers are independent, so joint probabilities factorize.
#[derive(Debug, Clone)]
pub struct BivariateLattice {
    pub v_tree: TreeGrid1D,
    pub x_tree: TreeGrid1D,
}

/// One of the four joint branches out of a lattice node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointBranch {
    pub k: usize,
    pub j: usize,
    pub prob: f64,
}

impl BivariateLattice {
    pub fn build(params: &ModelParams, n_steps: usize, maturity: f64) -> Result<Self> {
        Ok(BivariateLattice {
            v_tree: build_v_tree(params, n_steps, maturity)?,
            x_tree: build_x_tree(params, n_steps, maturity)?,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.v_tree.n_steps
    }

    pub fn h(&self) -> f64 {
        self.v_tree.h
    }

    /// The four joint transitions out of `(n, k, j)` in the order
    /// `uu, ud, du, dd`.
    pub fn branches(&self, n: usize, k: usize, j: usize) -> [JointBranch; 4] {
        let [(ku, pu), (kd, pd)] = self.v_tree.branches(n, k);
        let [(ju, qu), (jd, qd)] = self.x_tree.branches(n, j);
        [
            JointBranch { k: ku, j: ju, prob: pu * qu },
            JointBranch { k: ku, j: jd, prob: pu * qd },
            JointBranch { k: kd, j: ju, prob: pd * qu },
            JointBranch { k: kd, j: jd, prob: pd * qd },
        ]
    }
}

/// Joint probabilities `(p_uu, p_ud, p_du, p_dd)` at `(n, k, j)`.
pub fn joint_probs(lattice: &BivariateLattice, n: usize, k: usize, j: usize) -> Result<[f64; 4]> {
    lattice.v_tree.check(n, k)?;
    lattice.x_tree.check(n, j)?;
    let b = lattice.branches(n, k, j);
    Ok([b[0].prob, b[1].prob, b[2].prob, b[3].prob])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table1() -> ModelParams {
        ModelParams::bates_reference(-0.5)
    }

    #[test]
    fn v_tree_first_nodes() {
        let t = build_v_tree(&table1(), 50, 0.5).unwrap();
        assert_eq!(t.value(0, 0), 0.04);
        assert_abs_diff_eq!(t.value(1, 1), 0.0484, epsilon = 1e-15);
        assert_abs_diff_eq!(t.value(1, 0), 0.0324, epsilon = 1e-15);
        assert_eq!(t.up_index(0, 0), 1);
        assert_eq!(t.down_index(0, 0), 0);
        assert_abs_diff_eq!(t.prob_up(0, 0), 0.475, epsilon = 1e-12);
    }

    #[test]
    fn x_tree_first_nodes() {
        let mut p = table1();
        p.kappa_r = 1.0;
        let t = build_x_tree(&p, 50, 0.5).unwrap();
        assert_eq!(t.value(0, 0), 0.0);
        assert_abs_diff_eq!(t.value(1, 1), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(t.value(1, 0), -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(t.prob_up(0, 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn joint_probability_examples() {
        let mut p = table1();
        p.kappa_r = 1.0;
        let lat = BivariateLattice::build(&p, 50, 0.5).unwrap();
        let q = joint_probs(&lat, 0, 0, 0).unwrap();
        let expected = [0.2375, 0.2375, 0.2625, 0.2625];
        for (a, b) in q.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(joint_probs(&lat, 50, 0, 0).is_err());
        assert!(joint_probs(&lat, 3, 4, 0).is_err());
        assert!(joint_probs(&lat, 3, 0, 4).is_err());
    }

    #[test]
    fn degenerate_branch_puts_all_mass_up() {
        // A pure time step where every target overshoots the top node.
        let t = TreeGrid1D::build(2, 1.0, |_, k| k as f64, |_| 10.0);
        assert_eq!(t.prob_up(0, 0), 1.0);
        assert_eq!(t.up_index(0, 0), 1);
        assert!(t.clamped_count() > 0);
    }

    #[test]
    fn joint_probs_sum_to_one_everywhere() {
        let mut p = table1();
        p.kappa_r = 1.0;
        let lat = BivariateLattice::build(&p, 50, 0.5).unwrap();
        for n in 0..50 {
            for k in 0..=n {
                for j in 0..=n {
                    let q = joint_probs(&lat, n, k, j).unwrap();
                    assert!(q.iter().all(|&x| (0.0..=1.0).contains(&x)));
                    assert_abs_diff_eq!(q.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn indices_bracket_and_drift_is_matched() {
        for (sigma_v, maturity) in [(0.4, 0.5), (0.7, 5.0)] {
            let mut p = table1();
            p.sigma_v = sigma_v;
            p.kappa_r = 1.0;
            let n_steps = 100;
            let v = build_v_tree(&p, n_steps, maturity).unwrap();
            let x = build_x_tree(&p, n_steps, maturity).unwrap();
            for (tree, drift) in [
                (&v, &(|s: f64| p.drift_v(s)) as &dyn Fn(f64) -> f64),
                (&x, &|s: f64| p.drift_x(s)),
            ] {
                let h = tree.h();
                for n in 0..n_steps {
                    for k in 0..=n {
                        let (ku, kd) = (tree.up_index(n, k), tree.down_index(n, k));
                        assert!(kd <= k && k < ku && ku <= n + 1);
                        let pu = tree.prob_up(n, k);
                        assert!((0.0..=1.0).contains(&pu));
                        if pu > 0.0 && pu < 1.0 {
                            let value = tree.value(n, k);
                            let mean = pu * tree.value(n + 1, ku) + (1.0 - pu) * tree.value(n + 1, kd);
                            assert_abs_diff_eq!(mean, value + drift(value) * h, epsilon = 1e-13);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nodes_are_monotone() {
        let mut p = table1();
        p.sigma_v = 0.7;
        let v = build_v_tree(&p, 100, 5.0).unwrap();
        let x = build_x_tree(&p, 100, 5.0).unwrap();
        for n in 0..=100 {
            assert!(v.nodes(n).windows(2).all(|w| w[0] <= w[1]));
            assert!(x.nodes(n).windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn feller_violation_produces_zero_nodes() {
        let mut p = table1();
        p.sigma_v = 0.7;
        assert!(2.0 * p.kappa_v * p.theta_v < p.sigma_v * p.sigma_v);
        let v = build_v_tree(&p, 100, 5.0).unwrap();
        let zeros = (0..=100).map(|n| v.nodes(n).iter().filter(|&&x| x == 0.0).count()).sum::<usize>();
        assert!(zeros > 0);
        // From zero the chain still moves up: the CIR drift is positive there.
        for n in 0..100 {
            for k in 0..=n {
                if v.value(n, k) == 0.0 {
                    assert!(v.prob_up(n, k) > 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_zero_steps() {
        assert!(build_v_tree(&table1(), 0, 0.5).is_err());
        assert!(build_x_tree(&table1(), 10, 0.0).is_err());
    }
}
