//! Mountain-pass critical point of `J⁺_ν` on `N⁺_ν` between `(z^{λ1}, 0)` and
//! `(0, z^{λ2})`.
//!
//! The path `t ↦ (√(1-t) z^{λ1}, √t z^{λ2})` is projected onto `N⁺_ν`, relaxed
//! by a string method (descent of every interior node orthogonal to the path,
//! followed by equal-arclength reparametrization) and the highest node is
//! polished by Newton's method with a GMRES inner solve preconditioned by
//! `A^{-1}`.

use serde::{Deserialize, Serialize};

use super::newton::newton_polish;
use crate::ef_grid::StatePair;
use crate::error::{LabError, Result};
use crate::functional::{Problem, Slot, Variant};

const V: Variant = Variant::Positive;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpOptions {
    pub nodes: usize,
    pub max_sweeps: usize,
    /// Descent step of the string nodes in the D metric.
    pub step: f64,
    /// Relative change of the path maximum below which sweeps stop.
    pub sweep_tol: f64,
    pub newton_iterations: usize,
}

impl Default for MpOptions {
    fn default() -> Self {
        Self { nodes: 33, max_sweeps: 60, step: 0.25, sweep_tol: 1e-6, newton_iterations: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MPResult {
    pub path: Vec<StatePair>,
    pub path_energies: Vec<f64>,
    pub c_mp: f64,
    pub argmax_index: usize,
    pub critical_state: StatePair,
    /// `((1/N) S^{N/2}(λ1), (1/N)(S^{N/2}(λ1) + S^{N/2}(λ2)))`.
    pub bracket: (f64, f64),
    pub inside_bracket: bool,
    /// Largest energy on the projected initial path.
    pub initial_max: f64,
    /// Value at `t = 1/2` of the bound function `g`.
    pub g_half: f64,
    pub tangent_grad_norm: f64,
    /// Largest negative part of the critical state.
    pub negative_sup: f64,
    pub masses: (f64, f64),
    /// Path maximum after each sweep.
    pub sweep_max: Vec<f64>,
    /// Running minimum of `sweep_max`: each entry bounds `c_MP` from above.
    pub upper_bounds: Vec<f64>,
    pub newton_steps: usize,
    pub converged: bool,
}

fn d_distance(problem: &Problem, a: &StatePair, b: &StatePair) -> f64 {
    problem.d_norm_sq(&a.axpy(-1.0, b)).max(0.0).sqrt()
}

/// Initial path nodes, already projected onto `N⁺_ν`.
pub fn initial_path(problem: &Problem, nodes: usize) -> Result<Vec<StatePair>> {
    if nodes < 3 {
        return Err(LabError::param("nodes", format!("need at least 3 path nodes, got {nodes}")));
    }
    let z1 = problem.profile_field(Slot::U, 1.0);
    let z2 = problem.profile_field(Slot::V, 1.0);
    (0..nodes)
        .map(|k| {
            let t = k as f64 / (nodes - 1) as f64;
            let raw = StatePair { wu: z1.scaled((1.0 - t).sqrt()), wv: z2.scaled(t.sqrt()) };
            problem.nehari_project(&raw, V).map(|(s, _)| s)
        })
        .collect()
}

fn reparametrize(problem: &Problem, path: &[StatePair]) -> Result<Vec<StatePair>> {
    let k = path.len();
    let mut arc = vec![0.0];
    for w in path.windows(2) {
        arc.push(arc.last().unwrap() + d_distance(problem, &w[0], &w[1]));
    }
    let total = *arc.last().unwrap();
    let mut out = Vec::with_capacity(k);
    out.push(path[0].clone());
    let mut seg = 0;
    for j in 1..k - 1 {
        let target = total * j as f64 / (k - 1) as f64;
        while seg + 1 < k - 1 && arc[seg + 1] < target {
            seg += 1;
        }
        let len = arc[seg + 1] - arc[seg];
        let frac = if len > 0.0 { (target - arc[seg]) / len } else { 0.0 };
        let mixed = path[seg].scaled(1.0 - frac).axpy(frac, &path[seg + 1]);
        out.push(problem.nehari_project(&mixed, V)?.0);
    }
    out.push(path[k - 1].clone());
    Ok(out)
}

fn path_max(energies: &[f64]) -> (usize, f64) {
    energies.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc })
}

/// Highest energy on the two projected segments adjacent to node `i`,
/// sampled at `REFINE` points each.
fn refined_peak(problem: &Problem, path: &[StatePair], i: usize) -> (f64, StatePair) {
    const REFINE: usize = 8;
    let mut best = (problem.energy_positive(&path[i]), path[i].clone());
    for j in [i - 1, i + 1] {
        for k in 1..REFINE {
            let f = k as f64 / REFINE as f64;
            let mixed = path[i].scaled(1.0 - f).axpy(f, &path[j]);
            if let Ok((s, _)) = problem.nehari_project(&mixed, V) {
                let e = problem.energy_positive(&s);
                if e > best.0 {
                    best = (e, s);
                }
            }
        }
    }
    best
}

pub fn mountain_pass(problem: &Problem, opts: &MpOptions) -> Result<MPResult> {
    let levels = problem.levels().clone();
    let bracket = (levels.level1, levels.sum_level);
    let mut path = initial_path(problem, opts.nodes)?;
    let energies = |p: &[StatePair]| p.iter().map(|s| problem.energy_positive(s)).collect::<Vec<f64>>();
    let peak_of = |p: &[StatePair]| {
        let (i, e) = path_max(&energies(p));
        if i == 0 || i == p.len() - 1 {
            (i, e, p[i].clone())
        } else {
            let (e, s) = refined_peak(problem, p, i);
            (i, e, s)
        }
    };

    let mut sweep_max = Vec::new();
    let mut upper_bounds = Vec::new();
    let (_, mut best, mut best_peak) = peak_of(&path);
    let initial_max = best;
    let mut prev = best;
    let mut best_path = path.clone();
    for _ in 0..opts.max_sweeps {
        let mut next = path.clone();
        for i in 1..path.len() - 1 {
            let g = problem.tangent_gradient(&path[i], V);
            let chord = path[i + 1].axpy(-1.0, &path[i - 1]);
            let cn = problem.d_norm_sq(&chord);
            let perp = if cn > 0.0 { g.axpy(-problem.d_inner(&g, &chord) / cn, &chord) } else { g };
            if let Ok((moved, _)) = problem.nehari_project(&path[i].axpy(-opts.step, &perp), V) {
                next[i] = moved;
            }
        }
        path = reparametrize(problem, &next)?;
        let (_, m, top) = peak_of(&path);
        sweep_max.push(m);
        if m < best {
            best = m;
            best_peak = top;
            best_path = path.clone();
        }
        upper_bounds.push(best);
        let settled = (prev - m).abs() <= opts.sweep_tol * m.abs();
        prev = m;
        if settled {
            break;
        }
    }
    let path = best_path;
    let path_energies = energies(&path);
    let (argmax_index, _) = path_max(&path_energies);
    if argmax_index == 0 || argmax_index == path.len() - 1 {
        return Err(LabError::NoConvergence(format!(
            "path maximum collapsed onto endpoint {argmax_index}; no mountain-pass geometry at this resolution"
        )));
    }

    let (polished, newton_steps) = newton_polish(problem, &best_peak, V, opts.newton_iterations);
    let (critical_state, _) = problem.nehari_project(&polished, V)?;
    let c_mp = problem.energy_positive(&critical_state);
    let tangent_grad_norm = problem.tangent_gradient_norm(&critical_state, V);
    let masses = problem.masses(&critical_state);
    let negative_sup = critical_state.negative_sup();
    let converged = tangent_grad_norm < 1e-5 && masses.0 > 0.0 && masses.1 > 0.0;
    Ok(MPResult {
        path,
        path_energies,
        c_mp,
        argmax_index,
        critical_state,
        bracket,
        inside_bracket: c_mp > bracket.0 && c_mp < bracket.1,
        initial_max,
        g_half: levels.sum_level,
        tangent_grad_norm,
        negative_sup,
        masses,
        sweep_max,
        upper_bounds,
        newton_steps,
        converged,
    })
}
