//! Newton polish of critical points with a GMRES inner solve preconditioned
//! by the Riesz map `A^{-1}`.

use super::linalg::{gmres, norm};
use crate::ef_grid::{Field, StatePair};
use crate::functional::{Problem, Variant};

fn flatten(s: &StatePair) -> Vec<f64> {
    s.wu.iter().chain(s.wv.iter()).copied().collect()
}

fn unflatten(x: &[f64]) -> StatePair {
    let n = x.len() / 2;
    StatePair { wu: Field::from_vec(x[..n].to_vec()), wv: Field::from_vec(x[n..].to_vec()) }
}

/// Newton iteration on `J'(w) = 0` for `variant` from `start`. Returns the
/// final state and the number of accepted steps.
pub fn newton_polish(problem: &Problem, start: &StatePair, variant: Variant, max_steps: usize) -> (StatePair, usize) {
    let mut x = start.clone();
    let merit = |s: &StatePair| problem.dual_norm(&problem.gradient(s, variant));
    let mut m = merit(&x);
    let scale = 1.0 + problem.d_norm_sq(&x).sqrt();
    let mut steps = 0;
    while steps < max_steps && m > 1e-12 * scale {
        let g = problem.gradient(&x, variant);
        let rhs: Vec<f64> = flatten(&problem.riesz(&g)).iter().map(|v| -v).collect();
        let base = x.clone();
        let op = |d: &[f64]| flatten(&problem.riesz(&problem.hessian_apply(&base, &unflatten(d), variant)));
        let forcing = (m / scale).clamp(1e-12, 1e-4);
        let sol = gmres(op, &rhs, 80, 800, forcing);
        if !sol.x.iter().all(|v| v.is_finite()) || norm(&sol.x) == 0.0 {
            break;
        }
        let delta = unflatten(&sol.x);
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha > 1e-6 {
            let trial = x.axpy(alpha, &delta);
            let mt = merit(&trial);
            if mt < m {
                x = trial;
                m = mt;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
        steps += 1;
    }
    (x, steps)
}
