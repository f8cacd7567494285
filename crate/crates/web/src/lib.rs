//! WebAssembly bindings for the static demo page.
//!
//! Each operation returns a JSON string so the page can plot it directly.
//! The plain functions are ordinary Rust and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use nehari_core::closed_forms::profile_params;
use nehari_core::solvers::{classify_semitrivial, mountain_pass, nu_bar, MpOptions};
use nehari_core::{Dimension, GridSettings, LabError, Problem, ProblemSpec, Result, Slot, StatePair, Variant};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest number of samples sent back per curve.
const MAX_SAMPLES: usize = 600;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn curve(x: &[f64], y: &[f64]) -> Curve {
    let stride = x.len().div_ceil(MAX_SAMPLES).max(1);
    Curve { x: x.iter().step_by(stride).copied().collect(), y: y.iter().step_by(stride).copied().collect() }
}

fn problem(n: i64, f1: f64, f2: f64, points: usize) -> Result<Problem> {
    let dim = Dimension::new(n)?;
    let cap = dim.hardy_constant();
    ProblemSpec::new(dim, f1 * cap, f2 * cap, 0.0).with_grid(GridSettings { points, ..GridSettings::default() }).build()
}

#[derive(Debug, Serialize)]
pub struct ProfileView {
    pub n: i64,
    pub lambda: f64,
    pub hardy_constant: f64,
    pub s_lambda: f64,
    pub level: f64,
    /// Emden–Fowler profile `w(s)`.
    pub ef: Curve,
    /// Radial profile `u(r)` for `r ≤ 8`.
    pub radial: Curve,
}

/// Terracini profile `z_μ^λ` with `λ = fraction · Λ_N`.
pub fn profile_view(n: i64, fraction: f64, mu: f64, points: usize) -> Result<ProfileView> {
    let dim = Dimension::new(n)?;
    let cap = dim.hardy_constant();
    let lam = fraction * cap;
    let params = profile_params(dim, lam)?;
    let grid = GridSettings { points, ..GridSettings::default() }.fitted(params.kappa)?.build(dim)?;
    let w = grid.field_from_fn(|s| params.ef_value(s, mu));
    let (radii, u) = grid.to_physical(&w);
    let keep: Vec<usize> = (0..radii.len()).filter(|&j| radii[j] > 1e-3 && radii[j] <= 8.0).collect();
    let r: Vec<f64> = keep.iter().map(|&j| radii[j]).collect();
    let u: Vec<f64> = keep.iter().map(|&j| u[j]).collect();
    let pb = problem(n, fraction, fraction, points)?;
    let levels = pb.levels();
    Ok(ProfileView {
        n,
        lambda: lam,
        hardy_constant: cap,
        s_lambda: levels.s_lambda1,
        level: levels.level1,
        ef: curve(grid.nodes(), &w),
        radial: curve(&r, &u),
    })
}

#[derive(Debug, Serialize)]
pub struct ThresholdView {
    pub nu_bar: f64,
    pub nu: f64,
    pub character: String,
    /// Normalized second variation at `(0, z^{λ2})` along `(φ_ν̄, 0)` against `ν/ν̄`.
    pub second_variation: Curve,
    pub eigenvector: Curve,
    pub profile: Curve,
    /// `J(t (z^{λ1}, z^{λ2})/2)` along the fiber through the balanced state.
    pub fiber: Curve,
}

/// The threshold `ν̄` and the character of the semi-trivial pair at `ν = ratio · ν̄`.
pub fn threshold_view(n: i64, f1: f64, f2: f64, ratio: f64, points: usize) -> Result<ThresholdView> {
    let base = problem(n, f1, f2, points)?;
    let nb = nu_bar(&base, 1.0)?;
    let pb = base.with_nu(ratio * nb.nu_bar)?;
    let class = classify_semitrivial(&pb, 1.0, 0)?;
    let phi = StatePair { wu: nb.eigenvector.clone(), wv: base.grid().zeros() };
    let ratios: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
    let q: Vec<f64> = ratios
        .iter()
        .map(|r| {
            let p = base.with_nu(r * nb.nu_bar)?;
            Ok(p.second_variation_semitrivial(&phi, 1.0) / p.d_norm_sq(&phi))
        })
        .collect::<Result<_>>()?;
    let balanced =
        StatePair { wu: base.profile_field(Slot::U, 1.0).scaled(0.5), wv: base.profile_field(Slot::V, 1.0).scaled(0.5) };
    let ts: Vec<f64> = (0..=80).map(|k| k as f64 * 0.05).collect();
    let fiber: Vec<f64> = ts.iter().map(|&t| pb.energy_variant(&balanced.scaled(t), Variant::Full)).collect();
    let z = base.profile_field(Slot::V, 1.0);
    let character = serde_json::to_value(class.character).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    Ok(ThresholdView {
        nu_bar: nb.nu_bar,
        nu: pb.nu(),
        character,
        second_variation: curve(&ratios, &q),
        eigenvector: curve(base.grid().nodes(), &nb.eigenvector),
        profile: curve(base.grid().nodes(), &z),
        fiber: curve(&ts, &fiber),
    })
}

#[derive(Debug, Serialize)]
pub struct MountainView {
    pub c_mp: f64,
    pub bracket: (f64, f64),
    pub inside_bracket: bool,
    pub separable: bool,
    pub level1: f64,
    pub level2: f64,
    /// Energy along the final path against the node index.
    pub path: Curve,
    /// Running upper bound on `c_MP` after each sweep.
    pub upper_bounds: Vec<f64>,
    pub critical_u: Curve,
    pub critical_v: Curve,
    pub tangent_grad_norm: f64,
}

/// Mountain-pass path between the semi-trivial profiles on a coarse grid.
pub fn mountain_view(n: i64, f1: f64, f2: f64, ratio: f64, points: usize, nodes: usize) -> Result<MountainView> {
    let base = problem(n, f1, f2, points)?;
    let separable = base.conditions().separability;
    let nb = nu_bar(&base, 1.0)?;
    let pb = base.with_nu(ratio * nb.nu_bar)?;
    let mp = mountain_pass(&pb, &MpOptions { nodes, ..MpOptions::default() })?;
    let index: Vec<f64> = (0..mp.path_energies.len()).map(|k| k as f64).collect();
    let s = pb.grid().nodes();
    Ok(MountainView {
        c_mp: mp.c_mp,
        bracket: mp.bracket,
        inside_bracket: mp.inside_bracket,
        separable,
        level1: pb.levels().level1,
        level2: pb.levels().level2,
        path: curve(&index, &mp.path_energies),
        upper_bounds: mp.upper_bounds.clone(),
        critical_u: curve(s, &mp.critical_state.wu),
        critical_v: curve(s, &mp.critical_state.wv),
        tangent_grad_norm: mp.tangent_grad_norm,
    })
}

fn to_json<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| LabError::Degenerate(e.to_string())))
        .map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn profile(n: i32, fraction: f64, mu: f64, points: usize) -> std::result::Result<String, JsError> {
    to_json(profile_view(n.into(), fraction, mu, points))
}

#[wasm_bindgen]
pub fn threshold(n: i32, f1: f64, f2: f64, ratio: f64, points: usize) -> std::result::Result<String, JsError> {
    to_json(threshold_view(n.into(), f1, f2, ratio, points))
}

#[wasm_bindgen]
pub fn mountain(n: i32, f1: f64, f2: f64, ratio: f64, points: usize, nodes: usize) -> std::result::Result<String, JsError> {
    to_json(mountain_view(n.into(), f1, f2, ratio, points, nodes))
}
