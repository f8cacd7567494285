//! The coupling threshold `ν̄`: the infimum over `φ ≠ 0` of
//! `‖φ‖²_{λ1} / (2 ∫ h φ² z_μ^{λ2})`.
//!
//! In Emden–Fowler form this is the smallest eigenvalue of the pencil
//! `A φ = θ B φ` with `A = -d²/ds² + Λ_N - λ1` and `B = 2 h(e^s) e^{(6-N)s/2} z`.
//! The largest eigenvalue of `B^{1/2} A^{-1} B^{1/2}` is `1/ν̄`.

use serde::{Deserialize, Serialize};

use super::linalg::lanczos_top;
use crate::ef_grid::Field;
use crate::error::{LabError, Result};
use crate::functional::{Problem, Slot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuBarResult {
    pub nu_bar: f64,
    /// Minimizer of the quotient, positive and of unit `‖·‖_{λ1}` norm.
    pub eigenvector: Field,
    pub mu: f64,
    /// Quotient re-evaluated at the returned eigenvector.
    pub rayleigh_check: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Diagonal of `B` on the grid: `2 h(e^s) e^{(6-N)s/2} z_μ^{λ2}(s)`.
pub fn pencil_weight(problem: &Problem, mu: f64) -> Vec<f64> {
    let z = problem.profile_field(Slot::V, mu);
    problem.coupling_weight().iter().zip(z.iter()).map(|(c, z)| 2.0 * c * z).collect()
}

/// `‖φ‖²_{λ1} / (2 ∫ h φ² z_μ^{λ2})`; infinite when the denominator vanishes.
pub fn rayleigh_quotient(problem: &Problem, phi: &[f64], mu: f64) -> f64 {
    let grid = problem.grid();
    let b = pencil_weight(problem, mu);
    let num = grid.h1_norm_sq(phi, problem.spec().lam1);
    let den = grid.sphere_area() * grid.integrate(&b.iter().zip(phi).map(|(b, f)| b * f * f).collect::<Vec<_>>());
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

pub fn nu_bar(problem: &Problem, mu: f64) -> Result<NuBarResult> {
    if !(mu > 0.0) {
        return Err(LabError::param("mu", format!("must be positive, got {mu}")));
    }
    let b = pencil_weight(problem, mu);
    let peak = b.iter().cloned().fold(0.0, f64::max);
    if !(peak > 1e-200) || !peak.is_finite() {
        return Err(LabError::Degenerate(format!("coupling weight against z_μ is negligible on the grid (max {peak:.3e})")));
    }
    let root: Vec<f64> = b.iter().map(|x| x.max(0.0).sqrt()).collect();
    let apply = |x: &[f64]| {
        let y: Vec<f64> = root.iter().zip(x).map(|(r, x)| r * x).collect();
        let s = problem.solve_a(Slot::U, &y);
        root.iter().zip(&s).map(|(r, s)| r * s).collect::<Vec<f64>>()
    };
    let top = lanczos_top(apply, &root, 400, 1e-15)?;
    if !(top.value > 0.0) {
        return Err(LabError::Degenerate("pencil has no positive eigenvalue".into()));
    }
    let y: Vec<f64> = root.iter().zip(&top.vector).map(|(r, v)| r * v).collect();
    let mut phi = problem.solve_a(Slot::U, &y);
    let grid = problem.grid();
    let sign = if grid.integrate(&phi) < 0.0 { -1.0 } else { 1.0 };
    let scale = sign / grid.h1_norm_sq(&phi, problem.spec().lam1).sqrt();
    phi.iter_mut().for_each(|x| *x *= scale);
    let nu_bar = 1.0 / top.value;
    let rayleigh_check = rayleigh_quotient(problem, &phi, mu);
    Ok(NuBarResult {
        nu_bar,
        eigenvector: Field::from_vec(phi),
        mu,
        rayleigh_check,
        iterations: top.iterations,
        residual: top.residual / top.value,
    })
}
