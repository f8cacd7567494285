//! Matrix-free Krylov routines on flat `f64` vectors.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LabError, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct TopEigen {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Largest eigenpair of a symmetric positive semidefinite operator by Lanczos
/// with full reorthogonalization.
pub fn lanczos_top(apply: impl Fn(&[f64]) -> Vec<f64>, start: &[f64], max_steps: usize, tol: f64) -> Result<TopEigen> {
    let n = start.len();
    let s = norm(start);
    if !(s > 0.0) {
        return Err(LabError::Degenerate("zero Lanczos start vector".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / s).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = f64::NAN;
    let steps = max_steps.min(n).max(1);
    for k in 0..steps {
        let mut w = apply(&basis[k]);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = norm(&w);
        let (theta, y) = tridiagonal_top(&alpha, &beta);
        let converged = (theta - last).abs() <= tol * theta.abs() && k >= 3;
        let breakdown = b <= 1e-14 * theta.abs().max(1e-300);
        if converged || breakdown || k + 1 == steps {
            let mut v = vec![0.0; n];
            for (q, c) in basis.iter().zip(&y) {
                v.iter_mut().zip(q).for_each(|(x, qi)| *x += c * qi);
            }
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            let av = apply(&v);
            let residual = av.iter().zip(&v).map(|(a, x)| (a - theta * x).powi(2)).sum::<f64>().sqrt();
            return Ok(TopEigen { value: theta, vector: v, residual, iterations: k + 1 });
        }
        last = theta;
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    unreachable!("loop returns on its final step")
}

fn tridiagonal_top(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (val, eig.eigenvectors.column(idx).iter().copied().collect())
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Restarted GMRES for `M x = b` where `apply` already includes any
/// preconditioner. Stops when `‖b - M x‖ ≤ tol ‖b‖`.
pub fn gmres(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], restart: usize, max_iter: usize, tol: f64) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresOutcome { x, residual: 0.0, iterations: 0, converged: true };
    }
    let mut total = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= tol * bnorm || total >= max_iter {
            return GmresOutcome { x, residual: beta / bnorm, iterations: total, converged: beta <= tol * bnorm };
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|t| t / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && total < max_iter {
            let mut w = apply(&v[k]);
            let mut col = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let c = dot(&w, vi);
                col[i] = c;
                w.iter_mut().zip(vi).for_each(|(x, y)| *x -= c * y);
            }
            let wn = norm(&w);
            col[k + 1] = wn;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let rr = col[k].hypot(col[k + 1]);
            let (c, s) = if rr == 0.0 { (1.0, 0.0) } else { (col[k] / rr, col[k + 1] / rr) };
            cs.push(c);
            sn.push(s);
            col[k] = rr;
            col[k + 1] = 0.0;
            g.push(-s * g[k]);
            g[k] *= c;
            h.push(col);
            total += 1;
            k += 1;
            if g[k].abs() <= tol * bnorm || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|t| t / wn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&v[j]).for_each(|(xi, vi)| *xi += yj * vi);
        }
    }
}
