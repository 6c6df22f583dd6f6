//! Smallest generalized eigenvalues of `H v = lambda (A + M) v` on the
//! G-invariant subspace, by Lanczos on `(A + M)^{-1} H` in the G inner
//! product with full reorthogonalization and locking.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Workspace;
use crate::curvature::SymmetryGroup;
use crate::energy::{hessian_apply, hessian_reaction, PerturbedCoeffs};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::sum;

const MAX_KRYLOV: usize = 200;
const SEED: u64 = 0x5eed0f4d15c;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorseReport {
    /// Number of eigenvalues below `-tol_eig`.
    pub index: usize,
    /// Smallest generalized eigenvalues in increasing order; the sign of each
    /// matches the second variation on its eigenvector.
    pub eigenvalues: Vec<f64>,
    /// Disk mean of each eigenvector, normalized to unit G-norm.
    pub eigenvector_means: Vec<f64>,
    pub tol_eig: f64,
    #[serde(skip)]
    pub eigenvectors: Vec<ScalarField>,
}

/// G-symmetric Morse index at `u`. At least `n_eigs` eigenvalues are
/// computed, and more while they stay negative, so `index` is complete.
pub fn morse_index_g(u: &ScalarField, c: &PerturbedCoeffs, group: SymmetryGroup, n_eigs: usize) -> Result<MorseReport> {
    if n_eigs < 3 {
        return Err(Error::InvalidOptions(format!("n_eigs must be at least 3, got {n_eigs}")));
    }
    c.grid().require_same(&u.grid())?;
    if !u.is_finite() {
        return Err(Error::NonFinite("Morse base point".into()));
    }
    let ws = Workspace::new(c, group)?;
    let grid = ws.grid();
    let dim = group.invariant_dimension(grid);
    let reaction = hessian_reaction(u, c);
    let op = |v: &[f64]| {
        let mut out = ws.gram.solve(&hessian_apply(&ws.stencil, &reaction, v));
        ws.project(&mut out);
        out
    };
    let gram_apply = |v: &[f64]| {
        let mut out = ws.stencil.apply(v);
        let nt = grid.n_theta();
        for (idx, o) in out.iter_mut().enumerate() {
            *o += ws.stencil.weights()[idx / nt] * v[idx];
        }
        out
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    // Locked eigenpairs as (value, vector, G vector).
    let mut locked: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut scale: f64 = 0.0;
    while locked.len() < dim {
        let m = MAX_KRYLOV.min(dim - locked.len());
        let (theta, y, spread) = smallest_pair(&op, &gram_apply, &|v: &mut [f64]| ws.project(v), &locked, grid.len(), m, &mut rng)?;
        scale = scale.max(spread);
        let gy = gram_apply(&y);
        locked.push((theta, y, gy));
        let tol = 1e-8 * scale;
        if locked.len() >= n_eigs && theta >= -tol {
            break;
        }
    }
    let tol_eig = 1e-8 * scale;
    locked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let eigenvalues: Vec<f64> = locked.iter().map(|l| l.0).collect();
    let index = eigenvalues.iter().filter(|&&l| l < -tol_eig).count();
    let weights = grid.ring_weights();
    let nt = grid.n_theta();
    let eigenvector_means = locked
        .iter()
        .map(|(_, v, _)| sum::sum(v.iter().enumerate().map(|(idx, x)| weights[idx / nt] * x)) / std::f64::consts::PI)
        .collect();
    let eigenvectors = locked.into_iter().map(|(_, v, _)| ScalarField::from_vec(grid, v).expect("same grid")).collect();
    Ok(MorseReport { index, eigenvalues, eigenvector_means, tol_eig, eigenvectors })
}

/// Removes the G-components along `basis` (paired with their G images) twice.
fn orthogonalize<'a>(z: &mut [f64], basis: impl Iterator<Item = (&'a [f64], &'a [f64])> + Clone) {
    for _ in 0..2 {
        for (q, gq) in basis.clone() {
            let coef = sum::dot(gq, z);
            z.iter_mut().zip(q).for_each(|(a, b)| *a -= coef * b);
        }
    }
}

/// Lanczos run for the smallest eigenpair orthogonal to `locked`.
/// Returns the Ritz value, its vector and the spread of the Ritz values.
#[allow(clippy::too_many_arguments)]
fn smallest_pair(
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    gram_apply: &dyn Fn(&[f64]) -> Vec<f64>,
    project: &dyn Fn(&mut [f64]),
    locked: &[(f64, Vec<f64>, Vec<f64>)],
    n: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>, f64)> {
    let locked_basis = || locked.iter().map(|(_, v, g)| (v.as_slice(), g.as_slice()));
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    project(&mut q);
    orthogonalize(&mut q, locked_basis());
    let norm = sum::dot(&q, &gram_apply(&q)).sqrt();
    if !(norm > 0.0) {
        return Err(Error::EigSolverFailure("start vector vanished after projection".into()));
    }
    q.iter_mut().for_each(|x| *x /= norm);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut gbasis: Vec<Vec<f64>> = vec![gram_apply(&basis[0])];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut k = 0;
    loop {
        let mut z = op(&basis[k]);
        let a = sum::dot(&gbasis[k], &z);
        orthogonalize(&mut z, basis.iter().rev().zip(gbasis.iter().rev()).map(|(v, g)| (v.as_slice(), g.as_slice())));
        orthogonalize(&mut z, locked_basis());
        alpha.push(a);
        let gz = gram_apply(&z);
        let b = sum::dot(&z, &gz).max(0.0).sqrt();
        let size = alpha.len();
        let check = size == m || b <= 1e-13 * alpha.iter().fold(1.0f64, |s, x| s.max(x.abs())) || size.is_multiple_of(10);
        if check {
            let t = tridiagonal(&alpha, &beta);
            let eig = SymmetricEigen::new(t);
            let (imin, theta) = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            let spread = eig.eigenvalues.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            let s = eig.eigenvectors.column(imin);
            let resid = (b * s[size - 1]).abs();
            if resid <= 1e-9 * spread.max(1.0) || size == m || b <= 1e-13 * spread.max(1.0) {
                if size == m && resid > 1e-6 * spread.max(1.0) {
                    return Err(Error::EigSolverFailure(format!("Ritz residual {resid:.3e} after {size} Lanczos steps")));
                }
                let mut y = vec![0.0; n];
                for (c, v) in s.iter().zip(&basis) {
                    y.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
                }
                project(&mut y);
                orthogonalize(&mut y, locked_basis());
                let norm = sum::dot(&y, &gram_apply(&y)).sqrt();
                y.iter_mut().for_each(|x| *x /= norm);
                return Ok((theta, y, spread));
            }
        }
        z.iter_mut().for_each(|x| *x /= b);
        gbasis.push(gz.iter().map(|x| x / b).collect());
        basis.push(z);
        beta.push(b);
        k += 1;
    }
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let n = alpha.len();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alpha[i];
        if i + 1 < n {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}
