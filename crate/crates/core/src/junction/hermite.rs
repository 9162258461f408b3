//! Normalized Hermite functions and Gauss–Hermite quadrature for large orders.
//!
//! Hermite functions `h_k(x) = H_k(x) e^{-x²/2} / sqrt(2^k k! √π)` are evaluated
//! with the three-term recurrence carried as a mantissa plus a natural-log
//! exponent, so orders in the thousands neither overflow nor lose the small
//! values at large |x|.

use nalgebra::DMatrix;

const RESCALE_THRESHOLD: f64 = 1e150;
const RESCALE_FACTOR: f64 = 1e-150;
const LN_RESCALE: f64 = 345.387_763_949_107; // 150 ln 10

/// Hermite functions `h_0..h_{count-1}` at `x` as (mantissa, log-scale) pairs:
/// `h_k(x) = mantissa[k] * exp(log_scale[k])`.
pub(crate) fn scaled_hermite_functions(x: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mant = Vec::with_capacity(count);
    let mut logs = Vec::with_capacity(count);
    if count == 0 {
        return (mant, logs);
    }
    let mut log_scale = -0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    mant.push(cur);
    logs.push(log_scale);
    for k in 1..count {
        let kf = k as f64;
        let next = x * (2.0 / kf).sqrt() * cur - ((kf - 1.0) / kf).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_THRESHOLD {
            cur *= RESCALE_FACTOR;
            prev *= RESCALE_FACTOR;
            log_scale += LN_RESCALE;
        }
        mant.push(cur);
        logs.push(log_scale);
    }
    (mant, logs)
}

/// Hermite functions `h_0..h_{count-1}` at `x`; values below the f64 range are 0.
pub fn hermite_functions(x: f64, count: usize) -> Vec<f64> {
    let (mant, logs) = scaled_hermite_functions(x, count);
    mant.iter().zip(&logs).map(|(m, l)| m * l.exp()).collect()
}

/// Last two Hermite mantissas at `x` sharing one scale, for Newton polishing.
fn top_pair(x: f64, n: usize) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    for k in 1..n + 1 {
        let kf = k as f64;
        let next = x * (2.0 / kf).sqrt() * cur - ((kf - 1.0) / kf).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_THRESHOLD {
            cur *= RESCALE_FACTOR;
            prev *= RESCALE_FACTOR;
        }
    }
    // (h_n, h_{n-1}) up to a common positive factor
    (cur, prev)
}

/// Eigenvalues of a symmetric tridiagonal matrix (implicit QL, no vectors).
fn tridiagonal_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(offdiag);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 200, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

/// Gauss–Hermite rule for the weight `e^{-x²}` with `n` nodes.
///
/// Weights are never formed directly (they underflow for large n); the rule
/// is exposed through [`GaussHermite::weighted_functions`], i.e. Hermite
/// functions multiplied by `sqrt(w_i e^{x_i²})`, so that
/// `∫ h_j h_k f dx ≈ Σ_i q_ij q_ik f(x_i)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        if n == 1 {
            return GaussHermite { nodes: vec![0.0] };
        }
        let diag = vec![0.0; n];
        let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
        let mut nodes = tridiagonal_eigenvalues(&diag, &off);
        let scale = (2.0 * n as f64).sqrt();
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (hn, hn1) = top_pair(*x, n);
                let deriv = scale * hn1 - *x * hn;
                if deriv == 0.0 {
                    break;
                }
                let dx = hn / deriv;
                *x -= dx;
                if dx.abs() < 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
        }
        // the rule is symmetric; enforce it exactly
        for i in 0..n / 2 {
            let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            nodes[i] = -a;
            nodes[n - 1 - i] = a;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussHermite { nodes }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Matrix `q[i, k] = h_k(x_i) * sqrt(w_i e^{x_i²})` for k < `count`.
    pub fn weighted_functions(&self, count: usize) -> DMatrix<f64> {
        let n = self.nodes.len();
        let sqrt_n = (n as f64).sqrt();
        let mut q = DMatrix::zeros(n, count);
        for (i, &x) in self.nodes.iter().enumerate() {
            // h_{n-1} fixes the weight: w_i e^{x_i²} = 1 / (n h_{n-1}(x_i)²)
            let len = count.max(n);
            let (mant, logs) = scaled_hermite_functions(x, len);
            let ref_m = mant[n - 1].abs() * sqrt_n;
            let ref_l = logs[n - 1];
            for k in 0..count {
                q[(i, k)] = mant[k] / ref_m * (logs[k] - ref_l).exp();
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_order_values() {
        let x = 0.7;
        let h = hermite_functions(x, 3);
        let g = (-x * x / 2.0_f64).exp() * std::f64::consts::PI.powf(-0.25);
        assert_relative_eq!(h[0], g, max_relative = 1e-14);
        assert_relative_eq!(h[1], g * 2.0_f64.sqrt() * x, max_relative = 1e-14);
        assert_relative_eq!(h[2], g * (2.0 * x * x - 1.0) / 2.0_f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn small_rule_matches_tabulated_nodes() {
        // classical 3-point rule: 0, ±sqrt(3/2)
        let gh = GaussHermite::new(3);
        assert_relative_eq!(gh.nodes()[2], 1.5_f64.sqrt(), max_relative = 1e-14);
        assert!(gh.nodes()[1].abs() < 1e-15);
    }

    #[test]
    fn weighted_functions_are_orthonormal_for_large_rules() {
        for &n in &[40usize, 400, 1200] {
            let gh = GaussHermite::new(n);
            let count = n / 2;
            let q = gh.weighted_functions(count);
            let gram = q.transpose() * &q;
            let mut worst: f64 = 0.0;
            for j in 0..count {
                for k in 0..count {
                    let target = if j == k { 1.0 } else { 0.0 };
                    worst = worst.max((gram[(j, k)] - target).abs());
                }
            }
            assert!(worst < 1e-10, "n={n} worst={worst}");
        }
    }

    #[test]
    fn quadrature_integrates_polynomial_moments() {
        // ∫ h_0² x² dx = 1/2
        let gh = GaussHermite::new(20);
        let q = gh.weighted_functions(1);
        let m2: f64 = (0..gh.len()).map(|i| q[(i, 0)].powi(2) * gh.nodes()[i].powi(2)).sum();
        assert_relative_eq!(m2, 0.5, max_relative = 1e-13);
    }
}
