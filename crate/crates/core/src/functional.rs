//! The energy `J_ν`, its positive-part variant `J⁺_ν`, their gradients and
//! Hessians, and the Nehari constraint.
//!
//! All quantities are evaluated in Emden–Fowler form on the grid owned by a
//! [`Problem`]. Gradients are co-fields for the quadrature inner product
//! `⟨a, b⟩ = ω_{N-1} ∫ a b ds`; their Riesz representatives in the product
//! norm `‖(u,v)‖_D² = ‖u‖²_{λ1} + ‖v‖²_{λ2}` are obtained by one spectral solve
//! per component.

use serde::{Deserialize, Serialize};

use crate::closed_forms::{conditions, levels, profile_params, sobolev_best, Dimension, LevelSet, ProfileParams};
use crate::ef_grid::{EfGrid, Field, GridSettings, StatePair, WeightSpec};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// `u⁺ = max(u, 0)` in the critical terms and `(u⁺)² v` in the coupling.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Nehari constraint: `|Ψ| ≤ psi_rel (1 + ‖state‖²)`.
    pub psi_rel: f64,
    /// Relative agreement of algebraically identical quantities.
    pub identity_rel: f64,
    /// Stopping threshold on the tangent gradient norm of iterative solvers.
    pub gradient: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { psi_rel: 1e-10, identity_rel: 1e-9, gradient: 1e-7, max_iter: 20_000 }
    }
}

/// Parameters of one instance of the coupled system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dim: Dimension,
    pub lam1: f64,
    pub lam2: f64,
    pub nu: f64,
    pub weight: WeightSpec,
    pub grid: GridSettings,
    /// Concentration parameter of the reference profiles (`z_μ^λ`).
    pub mu: f64,
    pub tol: Tolerances,
}

impl ProblemSpec {
    /// Defaults: the dimension's standard weight, the `[-40, 40] × 4001` grid
    /// (widened automatically for slow decay), `μ = 1`.
    pub fn new(dim: Dimension, lam1: f64, lam2: f64, nu: f64) -> Self {
        Self {
            dim,
            lam1,
            lam2,
            nu,
            weight: WeightSpec::default_for(dim),
            grid: GridSettings::default(),
            mu: 1.0,
            tol: Tolerances::default(),
        }
    }

    pub fn with_weight(mut self, weight: WeightSpec) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_grid(mut self, grid: GridSettings) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cap = self.dim.hardy_constant();
        for (name, lam) in [("lambda1", self.lam1), ("lambda2", self.lam2)] {
            if !(lam > 0.0 && lam < cap) {
                return Err(LabError::param(
                    if name == "lambda1" { "lambda1" } else { "lambda2" },
                    format!("need 0 < {name} < Λ_N = {cap}, got {lam}"),
                ));
            }
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(LabError::param("nu", format!("must be finite and >= 0, got {}", self.nu)));
        }
        if !(self.mu > 0.0) {
            return Err(LabError::param("mu", format!("must be positive, got {}", self.mu)));
        }
        self.weight.validate()
    }

    /// N = 6 runs need (H); other dimensions are never flagged.
    pub fn weight_flagged(&self) -> bool {
        self.dim.get() == 6 && !self.weight.satisfies_h()
    }

    pub fn build(&self) -> Result<Problem> {
        Problem::new(self.clone())
    }
}

/// A validated problem with its grid, weights and reference levels.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    grid: EfGrid,
    coupling_weight: Vec<f64>,
    profiles: [ProfileParams; 2],
    levels: LevelSet,
}

/// Component slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    U,
    V,
}

/// The scalar pieces every energy-like quantity is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terms {
    /// `‖u‖²_{λ1}`.
    pub norm_u: f64,
    /// `‖v‖²_{λ2}`.
    pub norm_v: f64,
    /// `∫ |u|^{2*}` (or `(u⁺)^{2*}`).
    pub crit_u: f64,
    pub crit_v: f64,
    /// `∫ h u² v` (or `(u⁺)² v`).
    pub coupling: f64,
}

impl Terms {
    pub fn norm_sq(&self) -> f64 {
        self.norm_u + self.norm_v
    }

    pub fn crit(&self) -> f64 {
        self.crit_u + self.crit_v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariReport {
    /// Projection scale (1 for states already on the manifold).
    pub t: f64,
    /// Constraint residual `Ψ` at the returned state.
    pub psi: f64,
    /// `(1/N) ∫(|u|^{2*} + |v|^{2*}) + (ν/2) ∫ h u² v`.
    pub energy_a: f64,
    /// `(1/6) ‖(u,v)‖² + (6-N)/(6N) ∫(|u|^{2*} + |v|^{2*})`.
    pub energy_b: f64,
    pub norm_sq: f64,
}

impl NehariReport {
    /// Lower bound `‖(u,v)‖²/6` on the restricted energy.
    pub fn rho_bound(&self) -> f64 {
        self.norm_sq / 6.0
    }
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim;
        let profiles = [profile_params(dim, spec.lam1)?, profile_params(dim, spec.lam2)?];
        let slowest = profiles[0].kappa.min(profiles[1].kappa);
        let settings = spec.grid.fitted(slowest)?;
        let grid = settings.build(dim)?;
        let sobolev = sobolev_best(dim, &grid)?;
        let levels = levels(dim, spec.lam1, spec.lam2, sobolev)?;
        let coupling_weight = grid.coupling_weight(&spec.weight);
        Ok(Self { spec, grid, coupling_weight, profiles, levels })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &EfGrid {
        &self.grid
    }

    pub fn dim(&self) -> Dimension {
        self.spec.dim
    }

    pub fn nu(&self) -> f64 {
        self.spec.nu
    }

    pub fn tol(&self) -> &Tolerances {
        &self.spec.tol
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    pub fn profile(&self, slot: Slot) -> &ProfileParams {
        match slot {
            Slot::U => &self.profiles[0],
            Slot::V => &self.profiles[1],
        }
    }

    pub fn coupling_weight(&self) -> &[f64] {
        &self.coupling_weight
    }

    /// Same problem at a different coupling strength (grid and levels reused).
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(LabError::param("nu", format!("must be finite and >= 0, got {nu}")));
        }
        let mut out = self.clone();
        out.spec.nu = nu;
        Ok(out)
    }

    pub fn conditions(&self) -> crate::closed_forms::ConditionReport {
        conditions(self.spec.dim, self.spec.lam1, self.spec.lam2, &self.spec.weight)
            .expect("validated at construction")
    }

    fn shift(&self, slot: Slot) -> f64 {
        let k = self.profile(slot).kappa;
        k * k
    }

    fn p(&self) -> f64 {
        self.spec.dim.critical_exponent()
    }

    fn omega(&self) -> f64 {
        self.grid.sphere_area()
    }

    /// `z_μ^{λ_i}` sampled on the grid.
    pub fn profile_field(&self, slot: Slot, mu: f64) -> Field {
        let params = *self.profile(slot);
        self.grid.field_from_fn(|s| params.ef_value(s, mu))
    }

    /// `(z_μ^{λ1}, 0)` or `(0, z_μ^{λ2})`.
    pub fn semitrivial(&self, slot: Slot, mu: f64) -> StatePair {
        let z = self.profile_field(slot, mu);
        match slot {
            Slot::U => StatePair { wu: z, wv: self.grid.zeros() },
            Slot::V => StatePair { wu: self.grid.zeros(), wv: z },
        }
    }

    /// `A_i w = (-d²/ds² + Λ_N - λ_i) w`.
    pub fn apply_a(&self, slot: Slot, w: &[f64]) -> Vec<f64> {
        self.grid.apply_shifted(w, self.shift(slot))
    }

    /// `A_i^{-1} w`.
    pub fn solve_a(&self, slot: Slot, w: &[f64]) -> Vec<f64> {
        self.grid.solve_shifted(w, self.shift(slot))
    }

    /// `ω ∫ a b` summed over both slots.
    pub fn l2_inner(&self, a: &StatePair, b: &StatePair) -> f64 {
        self.omega() * (self.grid.dot(&a.wu, &b.wu) + self.grid.dot(&a.wv, &b.wv))
    }

    /// Inner product of the product space D.
    pub fn d_inner(&self, a: &StatePair, b: &StatePair) -> f64 {
        let au = self.apply_a(Slot::U, &b.wu);
        let av = self.apply_a(Slot::V, &b.wv);
        self.omega() * (self.grid.dot(&a.wu, &au) + self.grid.dot(&a.wv, &av))
    }

    pub fn d_norm_sq(&self, a: &StatePair) -> f64 {
        self.d_inner(a, a)
    }

    /// Riesz representative in D of an L² co-field.
    pub fn riesz(&self, g: &StatePair) -> StatePair {
        StatePair {
            wu: Field::from_vec(self.solve_a(Slot::U, &g.wu)),
            wv: Field::from_vec(self.solve_a(Slot::V, &g.wv)),
        }
    }

    /// Dual norm `‖g‖_{D*}` of a co-field.
    pub fn dual_norm(&self, g: &StatePair) -> f64 {
        self.l2_inner(g, &self.riesz(g)).max(0.0).sqrt()
    }

    fn check_state(&self, state: &StatePair) -> Result<()> {
        let n = self.grid.len();
        for f in [&state.wu, &state.wv] {
            if f.len() != n {
                return Err(LabError::LengthMismatch { expected: n, got: f.len() });
            }
        }
        Ok(())
    }

    pub fn terms(&self, state: &StatePair, variant: Variant) -> Terms {
        let g = &self.grid;
        let p = self.p();
        let omega = self.omega();
        let norm_u = g.h1_norm_sq(&state.wu, self.spec.lam1);
        let norm_v = g.h1_norm_sq(&state.wv, self.spec.lam2);
        let pos = |x: f64| match variant {
            Variant::Full => x.abs(),
            Variant::Positive => x.max(0.0),
        };
        let crit = |w: &Field| omega * g.integrate(&w.iter().map(|&x| pos(x).powf(p)).collect::<Vec<_>>());
        let coupling_vals: Vec<f64> = self
            .coupling_weight
            .iter()
            .zip(state.wu.iter().zip(state.wv.iter()))
            .map(|(c, (&u, &v))| {
                let u = if variant == Variant::Positive { u.max(0.0) } else { u };
                c * u * u * v
            })
            .collect();
        Terms {
            norm_u,
            norm_v,
            crit_u: crit(&state.wu),
            crit_v: crit(&state.wv),
            coupling: omega * g.integrate(&coupling_vals),
        }
    }

    fn energy_from(&self, t: &Terms) -> f64 {
        0.5 * t.norm_sq() - t.crit() / self.p() - self.spec.nu * t.coupling
    }

    /// `J_ν(u, v)`.
    pub fn energy(&self, state: &StatePair) -> f64 {
        self.energy_from(&self.terms(state, Variant::Full))
    }

    /// `J⁺_ν(u, v)`.
    pub fn energy_positive(&self, state: &StatePair) -> f64 {
        self.energy_from(&self.terms(state, Variant::Positive))
    }

    pub fn energy_variant(&self, state: &StatePair, variant: Variant) -> f64 {
        self.energy_from(&self.terms(state, variant))
    }

    /// `J_1(u) = J_ν(u, 0)` and `J_2(v) = J_ν(0, v)`.
    pub fn decoupled_energy(&self, slot: Slot, w: &Field) -> f64 {
        let (lam, n) = match slot {
            Slot::U => (self.spec.lam1, self.grid.h1_norm_sq(w, self.spec.lam1)),
            Slot::V => (self.spec.lam2, self.grid.h1_norm_sq(w, self.spec.lam2)),
        };
        let _ = lam;
        0.5 * n - self.grid.lp_norm(w, self.p()) / self.p()
    }

    /// Nonlinear part of the gradient: `(f_u, f_v)` with `J' = A w - f`.
    fn nonlinearity(&self, state: &StatePair, variant: Variant) -> (Vec<f64>, Vec<f64>) {
        let p = self.p();
        let nu = self.spec.nu;
        let n = self.grid.len();
        let mut fu = vec![0.0; n];
        let mut fv = vec![0.0; n];
        for j in 1..n - 1 {
            let (u, v, c) = (state.wu[j], state.wv[j], self.coupling_weight[j]);
            match variant {
                Variant::Full => {
                    fu[j] = u.abs().powf(p - 2.0) * u + 2.0 * nu * c * u * v;
                    fv[j] = v.abs().powf(p - 2.0) * v + nu * c * u * u;
                }
                Variant::Positive => {
                    let (up, vp) = (u.max(0.0), v.max(0.0));
                    fu[j] = up.powf(p - 1.0) + 2.0 * nu * c * up * v;
                    fv[j] = vp.powf(p - 1.0) + nu * c * up * up;
                }
            }
        }
        (fu, fv)
    }

    /// Discrete Fréchet derivative as an L² co-field. Zero co-field means the
    /// state is a discrete bound state.
    pub fn gradient(&self, state: &StatePair, variant: Variant) -> StatePair {
        let (fu, fv) = self.nonlinearity(state, variant);
        let au = self.apply_a(Slot::U, &state.wu);
        let av = self.apply_a(Slot::V, &state.wv);
        StatePair {
            wu: Field::from_vec(au.iter().zip(&fu).map(|(a, f)| a - f).collect()),
            wv: Field::from_vec(av.iter().zip(&fv).map(|(a, f)| a - f).collect()),
        }
    }

    /// `⟨J'(w), d⟩`.
    pub fn directional_derivative(&self, state: &StatePair, d: &StatePair, variant: Variant) -> f64 {
        self.l2_inner(&self.gradient(state, variant), d)
    }

    /// Action of the Hessian `J''(w)` on `phi`, as an L² co-field.
    pub fn hessian_apply(&self, state: &StatePair, phi: &StatePair, variant: Variant) -> StatePair {
        let p = self.p();
        let nu = self.spec.nu;
        let n = self.grid.len();
        let mut hu = self.apply_a(Slot::U, &phi.wu);
        let mut hv = self.apply_a(Slot::V, &phi.wv);
        for j in 1..n - 1 {
            let (u, v, c) = (state.wu[j], state.wv[j], self.coupling_weight[j]);
            let (p1, p2) = (phi.wu[j], phi.wv[j]);
            match variant {
                Variant::Full => {
                    hu[j] -= (p - 1.0) * u.abs().powf(p - 2.0) * p1 + 2.0 * nu * c * (v * p1 + u * p2);
                    hv[j] -= (p - 1.0) * v.abs().powf(p - 2.0) * p2 + 2.0 * nu * c * u * p1;
                }
                Variant::Positive => {
                    let (up, vp) = (u.max(0.0), v.max(0.0));
                    let ind = if u > 0.0 { 1.0 } else { 0.0 };
                    hu[j] -= (p - 1.0) * up.powf(p - 2.0) * p1 + 2.0 * nu * c * (ind * v * p1 + up * p2);
                    hv[j] -= (p - 1.0) * vp.powf(p - 2.0) * p2 + 2.0 * nu * c * up * p1;
                }
            }
        }
        StatePair { wu: Field::from_vec(hu), wv: Field::from_vec(hv) }
    }

    /// `J''(w)[phi, phi]`.
    pub fn second_variation(&self, state: &StatePair, phi: &StatePair, variant: Variant) -> f64 {
        self.l2_inner(&self.hessian_apply(state, phi, variant), phi)
    }

    /// `Ψ(w) = ⟨J'(w), w⟩ = ‖w‖² - ∫(|u|^{2*} + |v|^{2*}) - 3ν ∫ h u² v`.
    pub fn psi(&self, state: &StatePair, variant: Variant) -> f64 {
        let t = self.terms(state, variant);
        t.norm_sq() - t.crit() - 3.0 * self.spec.nu * t.coupling
    }

    /// L² gradient of `Ψ`, the normal of the Nehari manifold.
    pub fn psi_gradient(&self, state: &StatePair, variant: Variant) -> StatePair {
        let p = self.p();
        let nu = self.spec.nu;
        let n = self.grid.len();
        let mut gu = self.apply_a(Slot::U, &state.wu);
        let mut gv = self.apply_a(Slot::V, &state.wv);
        for j in 0..n {
            gu[j] *= 2.0;
            gv[j] *= 2.0;
        }
        for j in 1..n - 1 {
            let (u, v, c) = (state.wu[j], state.wv[j], self.coupling_weight[j]);
            match variant {
                Variant::Full => {
                    gu[j] -= p * u.abs().powf(p - 2.0) * u + 6.0 * nu * c * u * v;
                    gv[j] -= p * v.abs().powf(p - 2.0) * v + 3.0 * nu * c * u * u;
                }
                Variant::Positive => {
                    let (up, vp) = (u.max(0.0), v.max(0.0));
                    gu[j] -= p * up.powf(p - 1.0) + 6.0 * nu * c * up * v;
                    gv[j] -= p * vp.powf(p - 1.0) + 3.0 * nu * c * up * up;
                }
            }
        }
        StatePair { wu: Field::from_vec(gu), wv: Field::from_vec(gv) }
    }

    /// `d²/dt² J(t w)` at `t = 1`.
    pub fn ray_curvature(&self, state: &StatePair, variant: Variant) -> f64 {
        let t = self.terms(state, variant);
        let p = self.p();
        t.norm_sq() - (p - 1.0) * t.crit() - 6.0 * self.spec.nu * t.coupling
    }

    fn psi_tolerance(&self, norm_sq: f64) -> f64 {
        self.spec.tol.psi_rel * (1.0 + norm_sq)
    }

    /// Scale `state` onto the Nehari manifold: the unique `t > 0` with
    /// `‖w‖² = t^{2*-2} P + 3ν t Q`.
    ///
    /// The map `t ↦ t^{2*-2} P + 3ν t Q` is convex for `2* ≥ 3`, so a positive
    /// root is unique whenever it exists; it fails to exist only when
    /// `P + 3νQ ≤ 0` in dimension six or when `P = 0` and `Q ≤ 0`.
    pub fn nehari_project(&self, state: &StatePair, variant: Variant) -> Result<(StatePair, NehariReport)> {
        self.check_state(state)?;
        let terms = self.terms(state, variant);
        let t = self.nehari_scale(&terms)?;
        let projected = state.scaled(t);
        let report = self.report_with_scale(&projected, variant, t);
        let tol = self.psi_tolerance(report.norm_sq);
        if !(report.psi.abs() <= tol) {
            return Err(LabError::NotProjectable(format!("residual {:.3e} after scaling by {t}", report.psi)));
        }
        Ok((projected, report))
    }

    /// Root of the fibering equation for precomputed terms.
    pub fn nehari_scale(&self, terms: &Terms) -> Result<f64> {
        let norm = terms.norm_sq();
        let big_p = terms.crit();
        let q3 = 3.0 * self.spec.nu * terms.coupling;
        let e = self.p() - 2.0;
        if !(norm > 0.0) {
            return Err(LabError::NotProjectable("state has zero norm".into()));
        }
        if q3 == 0.0 {
            if !(big_p > 0.0) {
                return Err(LabError::NotProjectable("no critical mass and no coupling".into()));
            }
            return Ok((norm / big_p).powf(1.0 / e));
        }
        let f = |t: f64| t.powf(e) * big_p + q3 * t - norm;
        let df = |t: f64| e * t.powf(e - 1.0) * big_p + q3;
        if (e - 1.0).abs() < 1e-14 {
            let slope = big_p + q3;
            if !(slope > 0.0) {
                return Err(LabError::NotProjectable(format!(
                    "critical mass {big_p:.3e} does not dominate the negative coupling {q3:.3e}"
                )));
            }
            return Ok(norm / slope);
        }
        if big_p <= 0.0 && q3 <= 0.0 {
            return Err(LabError::NotProjectable("fibering map never reaches the norm".into()));
        }
        let mut hi = if big_p > 0.0 { (norm / big_p).powf(1.0 / e) } else { norm / q3 };
        let mut grow = 0;
        while f(hi) <= 0.0 {
            hi *= 2.0;
            grow += 1;
            if grow > 400 {
                return Err(LabError::NotProjectable("could not bracket the Nehari scale".into()));
            }
        }
        let mut lo = 0.0;
        let mut t = hi;
        for _ in 0..200 {
            let ft = f(t);
            if ft > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if ft.abs() <= 1e-15 * norm || hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            let newton = t - ft / df(t);
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Ok(t)
    }

    fn report_with_scale(&self, state: &StatePair, variant: Variant, t: f64) -> NehariReport {
        let terms = self.terms(state, variant);
        let n = self.spec.dim.as_f64();
        NehariReport {
            t,
            psi: terms.norm_sq() - terms.crit() - 3.0 * self.spec.nu * terms.coupling,
            energy_a: terms.crit() / n + 0.5 * self.spec.nu * terms.coupling,
            energy_b: terms.norm_sq() / 6.0 + (6.0 - n) / (6.0 * n) * terms.crit(),
            norm_sq: terms.norm_sq(),
        }
    }

    /// Both closed forms of the energy restricted to the Nehari manifold.
    /// Rejects states whose constraint residual exceeds the tolerance.
    pub fn restricted_energy(&self, state: &StatePair, variant: Variant) -> Result<NehariReport> {
        self.check_state(state)?;
        let report = self.report_with_scale(state, variant, 1.0);
        let tol = self.psi_tolerance(report.norm_sq);
        if !(report.psi.abs() <= tol) || state.is_zero() {
            return Err(LabError::OffManifold { psi: report.psi, tol });
        }
        Ok(report)
    }

    /// Second variation of `J_ν` at the semi-trivial pair `(0, z_μ^{λ2})`:
    /// `‖φ1‖²_{λ1} + J_2''(z)[φ2]² - 2ν ∫ h φ1² z`.
    pub fn second_variation_semitrivial(&self, phi: &StatePair, mu: f64) -> f64 {
        let z = self.profile_field(Slot::V, mu);
        let p = self.p();
        let g = &self.grid;
        let omega = self.omega();
        let j2 = g.h1_norm_sq(&phi.wv, self.spec.lam2)
            - (p - 1.0) * omega * g.integrate(&z.iter().zip(phi.wv.iter()).map(|(z, f)| z.powf(p - 2.0) * f * f).collect::<Vec<_>>());
        let coupling = omega
            * g.integrate(
                &self.coupling_weight.iter().zip(z.iter().zip(phi.wu.iter())).map(|(c, (z, f))| c * f * f * z).collect::<Vec<_>>(),
            );
        g.h1_norm_sq(&phi.wu, self.spec.lam1) + j2 - 2.0 * self.spec.nu * coupling
    }

    /// `ω ∫ |u|^{2*}` and `ω ∫ |v|^{2*}`.
    pub fn masses(&self, state: &StatePair) -> (f64, f64) {
        let t = self.terms(state, Variant::Full);
        (t.crit_u, t.crit_v)
    }

    /// Riesz gradient projected onto the tangent space of the Nehari manifold
    /// (D-orthogonal complement of the Riesz representative of `Ψ'`).
    pub fn tangent_gradient(&self, state: &StatePair, variant: Variant) -> StatePair {
        let g = self.riesz(&self.gradient(state, variant));
        let n = self.riesz(&self.psi_gradient(state, variant));
        let nn = self.d_inner(&n, &n);
        if nn > 0.0 {
            g.axpy(-self.d_inner(&g, &n) / nn, &n)
        } else {
            g
        }
    }

    pub fn tangent_gradient_norm(&self, state: &StatePair, variant: Variant) -> f64 {
        let tg = self.tangent_gradient(state, variant);
        self.d_norm_sq(&tg).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ef_grid::WeightSpec;

    fn problem(n: i64, nu: f64) -> Problem {
        let d = Dimension::new(n).unwrap();
        let cap = d.hardy_constant();
        ProblemSpec::new(d, 0.3 * cap, 0.6 * cap, nu)
            .with_grid(GridSettings { s_min: -40.0, s_max: 40.0, points: 1601, auto_widen: true })
            .build()
            .unwrap()
    }

    fn bump_state(p: &Problem, a: f64, b: f64) -> StatePair {
        let g = p.grid();
        StatePair {
            wu: g.field_from_fn(|s| a * (-(s - 0.5) * (s - 0.5) / 3.0).exp()),
            wv: g.field_from_fn(|s| b * (-(s + 0.2) * (s + 0.2) / 5.0).exp()),
        }
    }

    #[test]
    fn zero_state() {
        let p = problem(4, 0.3);
        let z = StatePair::zeros(p.grid());
        assert_eq!(p.energy(&z), 0.0);
        let g = p.gradient(&z, Variant::Full);
        assert!(g.wu.sup_norm() == 0.0 && g.wv.sup_norm() == 0.0);
        assert!(matches!(p.nehari_project(&z, Variant::Full), Err(LabError::NotProjectable(_))));
        assert!(p.restricted_energy(&z, Variant::Full).is_err());
    }

    #[test]
    fn semitrivial_energies_match_levels() {
        for n in 3..=6 {
            let p = problem(n, 0.7);
            let l = p.levels();
            let e1 = p.energy(&p.semitrivial(Slot::U, 1.0));
            let e2 = p.energy(&p.semitrivial(Slot::V, 1.0));
            assert!((e1 - l.level1).abs() < 1e-8 * l.level1, "N={n}: {e1} vs {}", l.level1);
            assert!((e2 - l.level2).abs() < 1e-8 * l.level2);
            let psi = p.psi(&p.semitrivial(Slot::U, 1.0), Variant::Full);
            assert!(psi.abs() < 1e-8);
        }
    }

    #[test]
    fn terracini_is_a_discrete_critical_point_of_the_decoupled_energy() {
        let p = problem(4, 0.0);
        let g = p.gradient(&p.semitrivial(Slot::V, 1.0), Variant::Full);
        assert!(g.wv.sup_norm() < 1e-8, "{}", g.wv.sup_norm());
    }

    #[test]
    fn positive_variant_agrees_on_nonnegative_states() {
        let p = problem(5, 0.4);
        let s = bump_state(&p, 1.2, 0.8);
        assert_eq!(p.energy(&s), p.energy_positive(&s));

        let neg = StatePair { wu: s.wu.scaled(-1.0), wv: s.wv.clone() };
        let t = p.terms(&neg, Variant::Positive);
        assert_eq!(t.crit_u, 0.0);
        assert_eq!(t.coupling, 0.0);
    }

    #[test]
    fn positive_minus_full_is_the_negative_part_contribution() {
        let p = problem(4, 0.6);
        let g = p.grid();
        let s = StatePair {
            wu: g.field_from_fn(|x| (x * 0.9).sin() * (-x * x / 20.0).exp()),
            wv: g.field_from_fn(|x| (x * 0.4 + 0.3).cos() * (-x * x / 30.0).exp()),
        };
        let full = p.terms(&s, Variant::Full);
        let pos = p.terms(&s, Variant::Positive);
        let two_star = p.dim().critical_exponent();
        // J⁺ - J = (1/2*) ∫ (|u⁻|^{2*} + |v⁻|^{2*}) + ν ∫ h (u⁻)² v
        let neg_u = s.wu.iter().map(|&x| x.min(0.0)).collect::<Vec<_>>();
        let neg_crit = (full.crit() - pos.crit()) / two_star;
        let vals: Vec<f64> =
            p.coupling_weight().iter().zip(neg_u.iter().zip(s.wv.iter())).map(|(c, (u, v))| c * u * u * v).collect();
        let neg_coupling = g.sphere_area() * g.integrate(&vals);
        let diff = p.energy_positive(&s) - p.energy(&s);
        assert!((diff - (neg_crit + p.nu() * neg_coupling)).abs() < 1e-12 * (1.0 + diff.abs()));
    }

    #[test]
    fn unbounded_below_along_rays() {
        let p = problem(4, 0.5);
        let s = bump_state(&p, 1.0, 1.0);
        let mut last = p.energy(&s.scaled(0.1));
        let mut decreasing_from = None;
        for k in 2..200 {
            let e = p.energy(&s.scaled(k as f64 * 0.1));
            if e < last && decreasing_from.is_none() {
                decreasing_from = Some(k);
            }
            if decreasing_from.is_some() {
                assert!(e < last, "energy rose again at t = {}", k as f64 * 0.1);
            }
            last = e;
        }
        assert!(last < -1e3);
    }

    #[test]
    fn projection_closed_form_without_coupling() {
        let p = problem(4, 0.0);
        let t = p
            .nehari_scale(&Terms { norm_u: 1.0, norm_v: 1.0, crit_u: 10.0, crit_v: 6.0, coupling: 0.3 })
            .unwrap();
        assert!((t - (0.125f64).sqrt()).abs() < 1e-15);
        assert!((t - 0.353553).abs() < 1e-6);
    }

    #[test]
    fn projection_is_idempotent_and_satisfies_identities() {
        let p = problem(4, 0.3);
        let s = bump_state(&p, 0.7, 1.9);
        let (on, rep) = p.nehari_project(&s, Variant::Full).unwrap();
        assert!(rep.psi.abs() < 1e-10 * (1.0 + rep.norm_sq));
        assert!((rep.energy_a - rep.energy_b).abs() < 1e-9 * rep.energy_a);
        assert!((p.energy(&on) - rep.energy_a).abs() < 1e-9 * rep.energy_a);
        assert!(p.ray_curvature(&on, Variant::Full) < 0.0);
        assert!(rep.energy_a > rep.rho_bound());
        let (_, again) = p.nehari_project(&on, Variant::Full).unwrap();
        assert!((again.t - 1.0).abs() < 1e-12);
        // Doubling leaves the manifold on the negative side.
        assert!(p.psi(&on.scaled(2.0), Variant::Full) < 0.0);
        assert!(p.restricted_energy(&on.scaled(1.01), Variant::Full).is_err());
    }

    #[test]
    fn six_dimensional_negative_coupling_is_reported() {
        let d = Dimension::new(6).unwrap();
        let p = ProblemSpec::new(d, 1.0, 2.0, 50.0)
            .with_weight(WeightSpec::constant(1.0))
            .with_grid(GridSettings::new(-40.0, 40.0, 801))
            .build()
            .unwrap();
        let g = p.grid();
        let s = StatePair {
            wu: g.field_from_fn(|x| 2.0 / x.cosh()),
            wv: g.field_from_fn(|x| -0.05 / x.cosh()),
        };
        assert!(matches!(p.nehari_project(&s, Variant::Full), Err(LabError::NotProjectable(_))));
    }

    #[test]
    fn semitrivial_second_variation_matches_the_general_hessian() {
        let p = problem(4, 0.8);
        let base = p.semitrivial(Slot::V, 1.0);
        let phi = bump_state(&p, 0.3, -0.2);
        let a = p.second_variation_semitrivial(&phi, 1.0);
        let b = p.second_variation(&base, &phi, Variant::Full);
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        let off = p.with_nu(0.0).unwrap();
        let only_u = StatePair { wu: phi.wu.clone(), wv: p.grid().zeros() };
        let val = off.second_variation_semitrivial(&only_u, 1.0);
        assert!((val - p.grid().h1_norm_sq(&phi.wu, p.spec().lam1)).abs() < 1e-12 * val);
        // Along the state itself the form is negative.
        assert!(p.second_variation_semitrivial(&base, 1.0) < 0.0);
    }

    #[test]
    fn spec_validation() {
        let d = Dimension::new(4).unwrap();
        assert!(ProblemSpec::new(d, 0.0, 0.5, 0.1).validate().is_err());
        assert!(ProblemSpec::new(d, 0.5, 1.0, 0.1).validate().is_err());
        assert!(ProblemSpec::new(d, 0.5, 0.5, -0.1).validate().is_err());
        assert!(ProblemSpec::new(d, 0.5, 0.5, 0.1).validate().is_ok());
        let six = Dimension::new(6).unwrap();
        assert!(ProblemSpec::new(six, 1.0, 2.0, 0.1).with_weight(WeightSpec::constant(1.0)).weight_flagged());
        assert!(!ProblemSpec::new(six, 1.0, 2.0, 0.1).weight_flagged());
    }
}
