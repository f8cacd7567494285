//! Which existence regime a parameter set falls into, with the solver
//! evidence for each applicable one.

use serde::{Deserialize, Serialize};

use super::ground::{ground_state, GroundInit, GroundStateResult};
use super::mountain::{mountain_pass, MpOptions};
use super::nubar::nu_bar;
use crate::closed_forms::{ConditionReport, LevelSet};
use crate::error::Result;
use crate::functional::Problem;

/// Component masses below this count as vanishing for the weak-coupling
/// prediction; above [`MASS_FLOOR`] as present.
pub const MASS_EPS: f64 = 1e-6;
pub const MASS_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `ν > ν̄`: a positive ground state below both semi-trivial levels.
    StrongCoupling,
    /// `λ1 ≥ λ2`, `ν > 0`: a positive ground state below `J(z^{λ1}, 0)`.
    OrderedHardy,
    /// `λ2 > λ1`, small `ν`: `(0, z^{λ2})` is a ground state.
    WeakCoupling,
    /// `λ2 > λ1` with separability: a mountain-pass bound state.
    MountainPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeOutcome {
    pub regime: Regime,
    pub applicable: bool,
    pub note: String,
    /// Energy produced by the solver for this regime.
    pub energy: Option<f64>,
    /// Level the prediction compares against.
    pub reference: Option<f64>,
    pub masses: Option<(f64, f64)>,
    /// Whether the predicted conclusion holds at this `ν`.
    pub prediction_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MountainSummary {
    pub c_mp: f64,
    pub bracket: (f64, f64),
    pub initial_max: f64,
    pub g_half: f64,
    pub tangent_grad_norm: f64,
    pub negative_sup: f64,
    pub masses: (f64, f64),
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub nu: f64,
    pub nu_bar: f64,
    pub levels: LevelSet,
    pub conditions: ConditionReport,
    /// `N ≤ 5`, or `N = 6` with a weight satisfying (H).
    pub admissible: bool,
    pub outcomes: Vec<RegimeOutcome>,
    pub ground_energy: Option<f64>,
    pub ground_masses: Option<(f64, f64)>,
    pub mountain: Option<MountainSummary>,
}

impl RegimeReport {
    pub fn applicable(&self) -> Vec<Regime> {
        self.outcomes.iter().filter(|o| o.applicable).map(|o| o.regime).collect()
    }

    pub fn outcome(&self, regime: Regime) -> &RegimeOutcome {
        self.outcomes.iter().find(|o| o.regime == regime).expect("every regime is reported")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeOptions {
    pub run_mountain: bool,
    pub mountain: MpOptions,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        Self { run_mountain: true, mountain: MpOptions::default() }
    }
}

fn outcome(regime: Regime, applicable: bool, note: impl Into<String>) -> RegimeOutcome {
    RegimeOutcome { regime, applicable, note: note.into(), energy: None, reference: None, masses: None, prediction_holds: None }
}

pub fn regime_report(problem: &Problem, opts: &RegimeOptions) -> Result<RegimeReport> {
    let spec = problem.spec();
    let levels = problem.levels().clone();
    let conditions = problem.conditions();
    let admissible = spec.dim.get() <= 5 || conditions.hypothesis_h == Some(true);
    let nb = nu_bar(problem, spec.mu)?;
    let nu = spec.nu;
    let (lam1, lam2) = (spec.lam1, spec.lam2);
    let min_level = levels.min_level();

    let gate = |ok: bool, why: &str| {
        if !admissible {
            (false, "dimension six needs a weight vanishing at 0 and infinity".to_string())
        } else if ok {
            (true, "hypotheses hold".to_string())
        } else {
            (false, why.to_string())
        }
    };
    let (a1, n1) = gate(nu > nb.nu_bar, "nu does not exceed nu_bar");
    let (a2, n2) = gate(lam1 >= lam2 && nu > 0.0, "needs lambda1 >= lambda2 and nu > 0");
    let (a3, n3) = gate(lam2 > lam1, "lambda2 <= lambda1");
    let (a4, n4) = gate(lam2 > lam1 && conditions.separability, "needs lambda2 > lambda1 and separability");
    let mut outcomes = vec![
        outcome(Regime::StrongCoupling, a1, n1),
        outcome(Regime::OrderedHardy, a2, n2),
        outcome(Regime::WeakCoupling, a3, format!("{n3}; smallness of nu is not quantified, conclusion checked at nu = {nu}")),
        outcome(Regime::MountainPass, a4, n4),
    ];

    let mut ground: Option<GroundStateResult> = None;
    if a1 || a2 || a3 {
        ground = Some(ground_state(problem, &GroundInit::MultiStart)?);
    }
    if let Some(g) = &ground {
        let (mu_, mv) = g.masses;
        for o in outcomes.iter_mut().filter(|o| o.applicable) {
            let (reference, holds) = match o.regime {
                Regime::StrongCoupling => (min_level, g.energy < min_level && mu_ > MASS_FLOOR && mv > MASS_FLOOR),
                // Both components are positive, though `v = O(ν)` at weak coupling.
                Regime::OrderedHardy => (levels.level1, g.energy < levels.level1 && mu_ > 0.0 && mv > 0.0),
                Regime::WeakCoupling => {
                    (levels.level2, ((g.energy - levels.level2) / levels.level2).abs() < 1e-6 && mu_ < MASS_EPS)
                }
                Regime::MountainPass => continue,
            };
            o.energy = Some(g.energy);
            o.reference = Some(reference);
            o.masses = Some(g.masses);
            o.prediction_holds = Some(holds && g.converged);
        }
    }

    let mut mountain = None;
    if a4 && opts.run_mountain {
        let o = outcomes.iter_mut().find(|o| o.regime == Regime::MountainPass).expect("listed above");
        match mountain_pass(problem, &opts.mountain) {
            Ok(mp) => {
                o.energy = Some(mp.c_mp);
                o.reference = Some(mp.bracket.1);
                o.masses = Some(mp.masses);
                o.prediction_holds = Some(mp.converged && mp.inside_bracket);
                mountain = Some(MountainSummary {
                    c_mp: mp.c_mp,
                    bracket: mp.bracket,
                    initial_max: mp.initial_max,
                    g_half: mp.g_half,
                    tangent_grad_norm: mp.tangent_grad_norm,
                    negative_sup: mp.negative_sup,
                    masses: mp.masses,
                    converged: mp.converged,
                });
            }
            Err(e) => {
                o.note = format!("mountain-pass solver failed: {e}");
                o.prediction_holds = Some(false);
            }
        }
    }

    Ok(RegimeReport {
        nu,
        nu_bar: nb.nu_bar,
        levels,
        conditions,
        admissible,
        outcomes,
        ground_energy: ground.as_ref().map(|g| g.energy),
        ground_masses: ground.as_ref().map(|g| g.masses),
        mountain,
    })
}
