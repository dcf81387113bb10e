use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::prob::{kl_divergence, tv_distance, LogProbVector};

/// Rows of a Markov kernel must sum to one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Residual at which power iteration stops.
pub const POWER_ITERATION_TOL: f64 = 1e-13;

/// A row-stochastic matrix over an enumerated state space, tagged with a
/// description of the model that induced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    rows: Vec<Vec<f64>>,
    pub tag: String,
}

impl KernelMatrix {
    pub fn new(rows: Vec<Vec<f64>>, tag: impl Into<String>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(contract("kernel needs at least one state"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(contract("kernel must be square"));
            }
            if r.iter().any(|v| !(*v >= -1e-15) || !v.is_finite()) {
                return Err(contract(format!("kernel row {i} has a negative or non-finite entry")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(contract(format!("kernel row {i} sums to {s}")));
            }
        }
        Ok(Self {
            rows,
            tag: tag.into(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        Self {
            rows,
            tag: "identity".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &KernelMatrix) -> Result<Self> {
        if self.len() != next.len() {
            return Err(contract("composed kernels differ in size"));
        }
        let n = self.len();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| self.rows[i][k] * next.rows[k][j]).sum())
                    .collect()
            })
            .collect();
        Self::new(rows, format!("{} ; {}", self.tag, next.tag))
    }

    /// One step of the chain: `rho' = rho T`.
    pub fn step(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (i, r) in self.rows.iter().enumerate() {
            if rho[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[j] += rho[i] * r[j];
            }
        }
        out
    }
}

/// Stationary distribution by power iteration from the uniform start.
///
/// Stops once `max |rho T - rho| < POWER_ITERATION_TOL`; gives up after
/// `max_iter` steps. For periodic chains the lazy kernel `(I + T) / 2` is
/// iterated, which has the same fixed points.
pub fn stationary_power(kernel: &KernelMatrix, max_iter: usize) -> Result<Vec<f64>> {
    let n = kernel.len();
    let mut rho = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let next = kernel.step(&rho);
        let residual = next
            .iter()
            .zip(&rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual < POWER_ITERATION_TOL {
            return Ok(next);
        }
        rho = rho.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
    }
    Err(Error::Property(format!(
        "power iteration did not reach residual {POWER_ITERATION_TOL} in {max_iter} steps"
    )))
}

/// Stationary distribution by solving `pi (T - I) = 0`, `sum pi = 1` directly.
pub fn stationary_solve(kernel: &KernelMatrix) -> Result<Vec<f64>> {
    let n = kernel.len();
    // rows of A are the equations: (T^T - I) pi = 0 with the last replaced
    // by the normalization constraint
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = kernel.rows[j][i] - f64::from(u8::from(i == j));
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Property("stationary system is singular".into()))?;
    Ok(pi.iter().copied().collect())
}

/// Result of comparing a kernel's fixed point with a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryCheck {
    pub power: Vec<f64>,
    pub solve: Vec<f64>,
    /// TV between the two extraction methods.
    pub method_gap: f64,
    /// TV between the power-iteration fixed point and the target.
    pub tv_to_target: f64,
}

pub fn check_stationary(kernel: &KernelMatrix, target: &LogProbVector) -> Result<StationaryCheck> {
    if kernel.len() != target.len() {
        return Err(contract("kernel and target differ in size"));
    }
    let power = stationary_power(kernel, 1_000_000)?;
    let solve = stationary_solve(kernel)?;
    let method_gap = tv_distance(&power, &solve);
    let tv_to_target = tv_distance(&power, &target.probs());
    Ok(StationaryCheck {
        power,
        solve,
        method_gap,
        tv_to_target,
    })
}

/// `max_ij |pi_i T_ij - pi_j T_ji|`.
pub fn check_detailed_balance(kernel: &KernelMatrix, target: &LogProbVector) -> Result<f64> {
    if kernel.len() != target.len() {
        return Err(contract("kernel and target differ in size"));
    }
    let pi = target.probs();
    let n = kernel.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let v = (pi[i] * kernel.rows[i][j] - pi[j] * kernel.rows[j][i]).abs();
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

/// Per-step tolerance for the monotonicity check of [`kl_trajectory`].
pub const KL_MONOTONE_TOL: f64 = 1e-12;

/// `KL(rho_t || pi)` for `t = 0..=n_steps`.
///
/// Fails with a property error if any step increases the divergence by more
/// than [`KL_MONOTONE_TOL`].
pub fn kl_trajectory(
    kernel: &KernelMatrix,
    target: &LogProbVector,
    start: &LogProbVector,
    n_steps: usize,
) -> Result<Vec<f64>> {
    if kernel.len() != target.len() || start.len() != target.len() {
        return Err(contract("kernel, target and start differ in size"));
    }
    let mut rho = start.probs();
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(kl_divergence(start, target)?);
    for t in 1..=n_steps {
        rho = kernel.step(&rho);
        let kl = kl_divergence(&LogProbVector::from_probs(&rho)?, target)?;
        let prev = out[t - 1];
        if kl > prev + KL_MONOTONE_TOL {
            return Err(Error::Property(format!(
                "KL increased from {prev} to {kl} at step {t}"
            )));
        }
        out.push(kl);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(p: f64, q: f64) -> KernelMatrix {
        KernelMatrix::new(vec![vec![1.0 - p, p], vec![q, 1.0 - q]], "two-state").unwrap()
    }

    #[test]
    fn identity_balances_any_target() {
        let t = LogProbVector::from_probs(&[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(check_detailed_balance(&KernelMatrix::identity(3), &t).unwrap(), 0.0);
    }

    #[test]
    fn two_state_chain_has_closed_form_fixed_point() {
        let k = two_state(0.3, 0.1);
        // pi = (q, p) / (p + q)
        let target = LogProbVector::from_probs(&[0.25, 0.75]).unwrap();
        let c = check_stationary(&k, &target).unwrap();
        assert!(c.tv_to_target < 1e-12, "{c:?}");
        assert!(c.method_gap < 1e-12);
        assert!(check_detailed_balance(&k, &target).unwrap() < 1e-15);
    }

    #[test]
    fn periodic_chain_still_converges() {
        let k = two_state(1.0, 1.0);
        let p = stationary_power(&k, 1000).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-13);
    }

    #[test]
    fn rows_must_be_stochastic() {
        assert!(KernelMatrix::new(vec![vec![0.5, 0.4], vec![0.0, 1.0]], "bad").is_err());
    }

    #[test]
    fn kl_trajectory_examples() {
        let k = two_state(0.3, 0.1);
        let target = LogProbVector::from_probs(&[0.25, 0.75]).unwrap();
        let at_target = kl_trajectory(&k, &target, &target, 5).unwrap();
        assert!(at_target.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(kl_trajectory(&k, &target, &target, 0).unwrap().len(), 1);
        let one_hot = LogProbVector::one_hot(2, 0);
        let kl = kl_trajectory(&k, &target, &one_hot, 30).unwrap();
        assert!(kl.windows(2).take(20).all(|w| w[1] < w[0]));
    }

    #[test]
    fn kl_increase_is_reported() {
        // a kernel that does not preserve the target can push rho away from it
        let k = KernelMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]], "absorbing").unwrap();
        let target = LogProbVector::from_probs(&[0.5, 0.5]).unwrap();
        let err = kl_trajectory(&k, &target, &target, 1).unwrap_err();
        assert!(matches!(err, Error::Property(_)));
    }
}
