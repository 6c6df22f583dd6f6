//! Small dense/banded kernels: pivoted tridiagonal LU and restarted GMRES.

use crate::sum;

/// LU factorization of a tridiagonal matrix with partial pivoting
/// (row interchanges introduce a second superdiagonal).
#[derive(Debug, Clone)]
pub struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swap: Vec<bool>,
}

impl TridiagLu {
    /// `lower[i]` couples rows `i+1, i`; `upper[i]` couples rows `i, i+1`.
    /// Returns `None` when a pivot vanishes.
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Option<Self> {
        let n = diag.len();
        assert!(n >= 1 && lower.len() + 1 == n && upper.len() + 1 == n);
        let mut dl = lower.to_vec();
        let mut d = diag.to_vec();
        let mut du = upper.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swap = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swap[i] = true;
            }
        }
        if d.iter().any(|&x| x == 0.0 || !x.is_finite()) {
            return None;
        }
        Some(Self { dl, d, du, du2, swap })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        debug_assert_eq!(b.len(), n);
        for i in 0..n - 1 {
            if self.swap[i] {
                let temp = b[i] - self.dl[i] * b[i + 1];
                b[i] = b[i + 1];
                b[i + 1] = temp;
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Restarted, right-preconditioned GMRES for `A x = b` in the inner product
/// `<x, y> = sum_k x_k y_k / metric_k`. `x` holds the initial guess on entry.
#[allow(clippy::too_many_arguments)]
pub fn gmres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precondition: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    metric: &[f64],
    rel_tol: f64,
    restart: usize,
    max_iters: usize,
) -> GmresOutcome {
    let ip = |a: &[f64], c: &[f64]| sum::sum(a.iter().zip(c).zip(metric).map(|((p, q), m)| p * q / m));
    let norm = |a: &[f64]| ip(a, a).sqrt();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresOutcome { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut total = 0;
    let mut rel;
    while total < max_iters {
        let ax = apply(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= rel_tol {
            return GmresOutcome { iterations: total, relative_residual: rel, converged: true };
        }
        let m = restart.min(max_iters - total);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let zk = precondition(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            for pass in 0..2 {
                for i in 0..=k {
                    let c = ip(&w, &v[i]);
                    if pass == 0 {
                        h[i][k] = c;
                    } else {
                        h[i][k] += c;
                    }
                    w.iter_mut().zip(&v[i]).for_each(|(wj, vj)| *wj -= c * vj);
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            rel = g[k + 1].abs() / b_norm;
            if rel <= rel_tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            x.iter_mut().zip(&z[i]).for_each(|(xj, zj)| *xj += yi * zj);
        }
        if k_used == 0 {
            break;
        }
    }
    let ax = apply(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    rel = norm(&r) / b_norm;
    GmresOutcome { iterations: total, relative_residual: rel, converged: rel <= rel_tol * 10.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_tridiag(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
        let n = diag.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn pivoted_tridiagonal_solves_indefinite_systems() {
        // Zero leading diagonal forces a row interchange.
        let lower = [3.0, -1.0, 2.0, 0.5];
        let diag = [0.0, 1.0, -4.0, 0.1, 2.0];
        let upper = [1.0, 2.0, 0.0, -3.0];
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.5];
        let mut b = dense_tridiag(&lower, &diag, &upper, &x_true);
        let lu = TridiagLu::factor(&lower, &diag, &upper).unwrap();
        lu.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn singular_tridiagonal_is_reported() {
        assert!(TridiagLu::factor(&[1.0], &[1.0, 1.0], &[1.0]).is_none());
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 40;
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut s = (3.0 + i as f64 * 0.1) * x[i];
                    if i > 0 {
                        s -= 1.2 * x[i - 1];
                    }
                    if i + 1 < n {
                        s -= 0.7 * x[i + 1];
                    }
                    s
                })
                .collect()
        };
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = apply(&x_true);
        let mut x = vec![0.0; n];
        let metric = vec![1.0; n];
        let out = gmres(&apply, &|v: &[f64]| v.to_vec(), &b, &mut x, &metric, 1e-12, 10, 400);
        assert!(out.converged);
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-9);
        }
    }
}
