//! Iterative solvers in the weighted inner product `⟨f, g⟩_m = Σ f g m`,
//! plus thin wrappers around nalgebra for the dense paths.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numeric;

pub fn dot_m(f: &[f64], g: &[f64], m: &[f64]) -> f64 {
    numeric::compensated_sum(f.iter().zip(g).zip(m).map(|((a, b), w)| a * b * w))
}

pub fn norm_m(f: &[f64], m: &[f64]) -> f64 {
    dot_m(f, f, m).sqrt()
}

/// Conjugate gradients for an operator self-adjoint and positive definite in `⟨·,·⟩_m`.
///
/// Returns the solution and the iteration count; stops when the residual
/// norm drops below `tol·‖b‖_m`.
pub fn conjugate_gradient<A>(apply: A, b: &[f64], m: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)>
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm_m(b, m);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot_m(&r, &r, m);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot_m(&p, &ap, m);
        if pap <= 0.0 {
            return Err(Error::Precondition(
                "operator is not positive definite".into(),
            ));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot_m(&r, &r, m);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::NoConvergence("conjugate gradient", max_iter))
}

/// Extreme eigenvalues of an operator self-adjoint in `⟨·,·⟩_m`.
#[derive(Clone, Debug)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    /// Eigenvector for `max`, normalised in `L²(m)`.
    pub top: Vec<f64>,
    pub iterations: usize,
}

impl Extremes {
    pub fn spectral_radius(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

/// Lanczos with full reorthogonalisation. Converged when the residual bound of
/// both extreme Ritz values is below `tol`.
pub fn lanczos<A>(apply: A, m: &[f64], tol: f64, max_iter: usize, seed: u64) -> Result<Extremes>
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n = m.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    let mut rng = numeric::rng(seed, 0x6c616e);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.5).collect();
    let qn = norm_m(&q, m);
    q.iter_mut().for_each(|v| *v /= qn);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let limit = max_iter.min(n);
    for k in 0..limit {
        let mut w = apply(&basis[k]);
        let a = dot_m(&w, &basis[k], m);
        alphas.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = dot_m(&w, v, m);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
        }
        let b = norm_m(&w, m);
        let dim = alphas.len();
        let t = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imin, imax) = argminmax(eig.eigenvalues.as_slice());
        let res_min = (b * eig.eigenvectors[(dim - 1, imin)]).abs();
        let res_max = (b * eig.eigenvectors[(dim - 1, imax)]).abs();
        let exhausted = b <= 1e-14 || dim == n;
        if (res_min < tol && res_max < tol && dim >= 2) || exhausted {
            let mut top = vec![0.0; n];
            for (j, v) in basis.iter().enumerate() {
                let c = eig.eigenvectors[(j, imax)];
                top.iter_mut().zip(v).for_each(|(t, vi)| *t += c * vi);
            }
            let tn = norm_m(&top, m);
            if tn > 0.0 {
                top.iter_mut().for_each(|v| *v /= tn);
            }
            return Ok(Extremes {
                min: eig.eigenvalues[imin],
                max: eig.eigenvalues[imax],
                top,
                iterations: dim,
            });
        }
        betas.push(b);
        basis.push(w.into_iter().map(|v| v / b).collect());
    }
    Err(Error::NoConvergence("Lanczos", max_iter))
}

fn argminmax(v: &[f64]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for i in 1..v.len() {
        if v[i] < v[lo] {
            lo = i;
        }
        if v[i] > v[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// Eigen-decomposition of a dense symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest generalised eigenpair of `A v = λ B v` for symmetric `A` and
/// symmetric positive definite `B`.
pub fn generalized_top(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Precondition("gradient form is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("singular Cholesky factor".into()))?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let (values, vectors) = sym_eigen(c);
    let n = values.len();
    let y = vectors.column(n - 1).into_owned();
    let v = linv.transpose() * y;
    Ok((values[n - 1], v))
}
