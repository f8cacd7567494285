//! Minimization of `J_ν` on the Nehari manifold by Sobolev-gradient descent
//! with Armijo backtracking and radial retraction.

use serde::{Deserialize, Serialize};

use super::newton::newton_polish;
use crate::ef_grid::StatePair;
use crate::error::{LabError, Result};
use crate::functional::{NehariReport, Problem, Slot, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "state")]
pub enum GroundInit {
    /// `(½ z^{λ1}, ½ z^{λ2})`.
    Balanced,
    /// Balanced start plus one start near each semi-trivial profile; the
    /// lowest converged energy wins.
    MultiStart,
    Custom(StatePair),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateResult {
    pub state: StatePair,
    pub energy: f64,
    pub tangent_grad_norm: f64,
    /// `(∫|u|^{2*}, ∫|v|^{2*})`.
    pub masses: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
    pub start: String,
    pub report: NehariReport,
    /// Energy after every accepted step.
    pub history: Vec<f64>,
}

fn starts(problem: &Problem, init: &GroundInit) -> Vec<(String, StatePair)> {
    let z1 = problem.profile_field(Slot::U, 1.0);
    let z2 = problem.profile_field(Slot::V, 1.0);
    let pair = |a: f64, b: f64| StatePair { wu: z1.scaled(a), wv: z2.scaled(b) };
    match init {
        GroundInit::Balanced => vec![("balanced".into(), pair(0.5, 0.5))],
        GroundInit::MultiStart => vec![
            ("balanced".into(), pair(0.5, 0.5)),
            ("near_u".into(), pair(1.0, 0.1)),
            ("near_v".into(), pair(0.1, 1.0)),
        ],
        GroundInit::Custom(s) => vec![("custom".into(), s.clone())],
    }
}

/// Iterations over which a stall is detected.
const STALL_WINDOW: usize = 50;
/// Relative energy decrease per window below which descent counts as stalled.
const STALL_DROP: f64 = 1e-6;
const NEWTON_STEPS: usize = 40;
/// Translation searches allowed per descent.
const MAX_SHIFT_ROUNDS: usize = 40;

/// Best whole-state translation `w(· - δ)`.
///
/// Away from the coupling weight the energy is invariant under translation
/// in `s`, so at weak coupling the minimizer sits at the bottom of a very
/// shallow valley along this direction. Bracketing by doubling and a golden
/// section in `δ` cross it in a few dozen energy evaluations where gradient
/// steps crawl.
fn translation_search(problem: &Problem, w: &StatePair, energy: f64, variant: Variant) -> Option<(StatePair, NehariReport, f64)> {
    let grid = problem.grid();
    let eval = |delta: f64| -> f64 {
        problem
            .nehari_project(&grid.translate_pair(w, delta), variant)
            .map(|(s, _)| problem.energy_variant(&s, variant))
            .unwrap_or(f64::INFINITY)
    };
    let h = grid.step();
    let limit = 0.25 * (grid.s_max() - grid.s_min());
    let (fp, fm) = (eval(h), eval(-h));
    let (mut a, mut b) = if fp < energy || fm < energy {
        let dir = if fp <= fm { 1.0 } else { -1.0 };
        // Bracket the minimum along the improving direction by doubling.
        let (mut lo, mut mid, mut f_mid) = (0.0, dir * h, fp.min(fm));
        let mut step = h;
        let hi = loop {
            step *= 2.0;
            let next = mid + dir * step;
            if next.abs() > limit {
                break next;
            }
            let f = eval(next);
            if f >= f_mid {
                break next;
            }
            lo = mid;
            mid = next;
            f_mid = f;
        };
        if lo < hi {
            (lo, hi)
        } else {
            (hi, lo)
        }
    } else {
        // The minimum, if any, lies within one cell.
        (-h, h)
    };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    while (b - a) > 1e-6 * h {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval(d);
        }
    }
    let delta = if fc < fd { c } else { d };
    let (s, rep) = problem.nehari_project(&grid.translate_pair(w, delta), variant).ok()?;
    let e = problem.energy_variant(&s, variant);
    (e < energy).then_some((s, rep, e))
}

/// Projected descent from one start. Returns the best state reached, flagged
/// as not converged when the iteration cap or step floor is hit first.
///
/// Descent that stalls (typically creeping along a nearly flat dilation
/// direction at weak coupling) is finished by Newton's method on `J' = 0`;
/// the Newton result is kept only if it reaches the gradient tolerance
/// without raising the energy.
pub fn descend(problem: &Problem, start: &StatePair, variant: Variant, max_iter: usize) -> Result<GroundStateResult> {
    let tol = problem.tol().gradient;
    let (mut w, mut report) = problem.nehari_project(start, variant)?;
    let mut energy = problem.energy_variant(&w, variant);
    let mut history = vec![energy];
    let mut tau = 1.0;
    let mut iterations = 0;
    let mut gnorm;
    let mut converged = false;
    let mut shift_rounds = 0;
    // Stalls are judged only on steps since the last translation.
    let mut window_start = 0;
    loop {
        let g = problem.tangent_gradient(&w, variant);
        gnorm = problem.d_norm_sq(&g).max(0.0).sqrt();
        if gnorm < tol {
            converged = true;
            break;
        }
        let k = history.len();
        let stalled = k > window_start + STALL_WINDOW && history[k - 1 - STALL_WINDOW] - energy < STALL_DROP * energy.abs();
        if stalled && shift_rounds < MAX_SHIFT_ROUNDS {
            shift_rounds += 1;
            if let Some((s, rep, e)) = translation_search(problem, &w, energy, variant) {
                w = s;
                report = rep;
                energy = e;
                history.push(energy);
                window_start = history.len() - 1;
                continue;
            }
        }
        if iterations >= max_iter || stalled {
            break;
        }
        let mut accepted = false;
        while tau > 1e-14 {
            if let Ok((trial, rep)) = problem.nehari_project(&w.axpy(-tau, &g), variant) {
                let e = problem.energy_variant(&trial, variant);
                let slack = 64.0 * f64::EPSILON * energy.abs();
                if e <= energy - 1e-4 * tau * gnorm * gnorm + slack {
                    w = trial;
                    report = rep;
                    energy = e;
                    accepted = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(energy);
        iterations += 1;
        tau = (tau * 1.5).min(1.0);
        if report.norm_sq < 1e-12 {
            return Err(LabError::NoConvergence("descent collapsed towards the origin".into()));
        }
    }
    if !converged {
        let (polished, _) = newton_polish(problem, &w, variant, NEWTON_STEPS);
        if let Ok((p, rep)) = problem.nehari_project(&polished, variant) {
            let e = problem.energy_variant(&p, variant);
            let g = problem.tangent_gradient_norm(&p, variant);
            if g < tol && e <= energy + 1e-9 * energy.abs() && rep.norm_sq > 1e-12 {
                w = p;
                report = rep;
                energy = e;
                gnorm = g;
                converged = true;
                history.push(energy);
            }
        }
    }
    let masses = problem.masses(&w);
    Ok(GroundStateResult {
        state: w,
        energy,
        tangent_grad_norm: gnorm,
        masses,
        iterations,
        converged,
        start: "custom".into(),
        report,
        history,
    })
}

/// Ground state of `J_ν`: descent from each start, then `(|u|, |v|)`
/// re-projected and polished so the returned pair is nonnegative.
pub fn ground_state(problem: &Problem, init: &GroundInit) -> Result<GroundStateResult> {
    let max_iter = problem.tol().max_iter;
    let mut best: Option<GroundStateResult> = None;
    let mut last_err = None;
    for (label, start) in starts(problem, init) {
        let run = descend(problem, &start, Variant::Full, max_iter).and_then(|first| {
            let mut polished = descend(problem, &first.state.abs(), Variant::Full, max_iter)?;
            let mut history = first.history;
            history.extend(polished.history.iter().skip(1));
            polished.history = history;
            polished.iterations += first.iterations;
            Ok(polished)
        });
        match run {
            Ok(mut r) => {
                r.start = label;
                let better = match &best {
                    None => true,
                    Some(b) => (r.converged && !b.converged) || (r.converged == b.converged && r.energy < b.energy),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| LabError::NoConvergence("no start produced a state".into())))
}

