//! Exact constants, the Terracini family, Sobolev/Hardy levels and the
//! energy thresholds that separate the regimes of the coupled system.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::dual::Dual2;
use crate::ef_grid::{EfGrid, WeightSpec};
use crate::error::{LabError, Result};

/// Space dimension, restricted to `3 ≤ N ≤ 6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Dimension(u8);

impl Dimension {
    pub fn new(n: i64) -> Result<Self> {
        if (3..=6).contains(&n) {
            Ok(Self(n as u8))
        } else {
            Err(LabError::InvalidDimension(n))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// `(N-2)/2`.
    pub fn half_gap(self) -> f64 {
        (self.as_f64() - 2.0) / 2.0
    }

    /// `Λ_N = (N-2)^2 / 4`.
    pub fn hardy_constant(self) -> f64 {
        let h = self.half_gap();
        h * h
    }

    /// `2* = 2N / (N-2)`.
    pub fn critical_exponent(self) -> f64 {
        2.0 * self.as_f64() / (self.as_f64() - 2.0)
    }

    /// `ω_{N-1} = 2 π^{N/2} / Γ(N/2)`.
    pub fn sphere_area(self) -> f64 {
        let half = self.as_f64() / 2.0;
        2.0 * PI.powf(half) / gamma(half)
    }
}

impl TryFrom<i64> for Dimension {
    type Error = LabError;
    fn try_from(n: i64) -> Result<Self> {
        Self::new(n)
    }
}

impl From<Dimension> for i64 {
    fn from(d: Dimension) -> i64 {
        d.0 as i64
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalConstants {
    pub lambda_cap: f64,
    pub two_star: f64,
    pub sphere_area: f64,
}

pub fn constants(dim: Dimension) -> CriticalConstants {
    CriticalConstants {
        lambda_cap: dim.hardy_constant(),
        two_star: dim.critical_exponent(),
        sphere_area: dim.sphere_area(),
    }
}

fn check_lambda(dim: Dimension, lam: f64) -> Result<()> {
    let cap = dim.hardy_constant();
    if !(0.0..cap).contains(&lam) {
        return Err(LabError::param("lambda", format!("need 0 <= lambda < Λ_N = {cap}, got {lam}")));
    }
    Ok(())
}

/// Parameters of the Terracini profile `z_1^λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub dim: Dimension,
    pub lam: f64,
    /// Decay exponent `a_λ` at the origin.
    pub a: f64,
    /// `κ = sqrt(Λ_N - λ)`, the Emden–Fowler decay rate.
    pub kappa: f64,
    /// `[N (N-2-2a)^2 / (N-2)]^{(N-2)/4}`.
    pub amplitude: f64,
}

pub fn profile_params(dim: Dimension, lam: f64) -> Result<ProfileParams> {
    check_lambda(dim, lam)?;
    let n = dim.as_f64();
    let kappa = (dim.hardy_constant() - lam).sqrt();
    let a = dim.half_gap() - kappa;
    let base = n * (n - 2.0 - 2.0 * a).powi(2) / (n - 2.0);
    Ok(ProfileParams { dim, lam, a, kappa, amplitude: base.powf((n - 2.0) / 4.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    Radial,
    Ef,
}

impl ProfileParams {
    /// Rate `β = 2κ/(N-2)` of the sech form `w = A 2^{-(N-2)/2} sech^{(N-2)/2}(β (s - ln μ))`.
    pub fn sech_rate(&self) -> f64 {
        2.0 * self.kappa / (self.dim.as_f64() - 2.0)
    }

    /// Emden–Fowler profile of `z_μ^λ` at `s`.
    pub fn ef_value(&self, s: f64, mu: f64) -> f64 {
        let alpha = self.dim.half_gap();
        let x = (self.sech_rate() * (s - mu.ln())).abs();
        // ln sech(x) = ln 2 - x - ln(1 + e^{-2x})
        let log_sech = std::f64::consts::LN_2 - x - (-2.0 * x).exp().ln_1p();
        self.amplitude * (alpha * (log_sech - std::f64::consts::LN_2)).exp()
    }

    /// `z_μ^λ(r) = μ^{-(N-2)/2} z_1^λ(r/μ)`.
    pub fn radial_value(&self, r: f64, mu: f64) -> f64 {
        let alpha = self.dim.half_gap();
        let x = r / mu;
        let power = 2.0 - 4.0 * self.a / (self.dim.as_f64() - 2.0);
        mu.powf(-alpha) * self.amplitude / (x.powf(self.a) * (1.0 + x.powf(power)).powf(alpha))
    }

    /// Emden–Fowler residual `-w'' + κ² w - w^{2*-1}` of the profile, obtained
    /// by differentiating the radial closed form exactly with dual numbers.
    pub fn ef_residual(&self, s: f64, mu: f64) -> f64 {
        let n = self.dim.as_f64();
        let alpha = self.dim.half_gap();
        let sv = Dual2::variable(s);
        let x = (sv + (-mu.ln())).exp();
        let power = 2.0 - 4.0 * self.a / (n - 2.0);
        let z1 = Dual2::constant(self.amplitude) / (x.powf(self.a) * (x.powf(power) + 1.0).powf(alpha));
        let w = (sv.scale(alpha)).exp() * z1.scale(mu.powf(-alpha));
        let p = self.dim.critical_exponent();
        -w.d2 + self.kappa * self.kappa * w.v - w.v.abs().powf(p - 1.0)
    }
}

/// Terracini profile at `points`, either as `z_μ^λ(r)` or in Emden–Fowler form.
pub fn terracini_eval(params: &ProfileParams, mu: f64, points: &[f64], coordinate: Coordinate) -> Result<Vec<f64>> {
    if !(mu > 0.0) {
        return Err(LabError::param("mu", format!("must be positive, got {mu}")));
    }
    match coordinate {
        Coordinate::Radial => points
            .iter()
            .map(|&r| if r > 0.0 { Ok(params.radial_value(r, mu)) } else { Err(LabError::NonPositiveRadius(r)) })
            .collect(),
        Coordinate::Ef => Ok(points.iter().map(|&s| params.ef_value(s, mu)).collect()),
    }
}

/// `S(λ) = (1 - λ/Λ_N)^{(N-1)/N} S`.
pub fn s_lambda(dim: Dimension, lam: f64, sobolev: f64) -> Result<f64> {
    check_lambda(dim, lam)?;
    if !(sobolev > 0.0) {
        return Err(LabError::param("sobolev", "must be positive"));
    }
    let n = dim.as_f64();
    Ok((1.0 - lam / dim.hardy_constant()).powf((n - 1.0) / n) * sobolev)
}

/// Best Sobolev constant as the Rayleigh quotient of the `λ = 0` profile,
/// evaluated by quadrature on `grid`.
pub fn sobolev_best(dim: Dimension, grid: &EfGrid) -> Result<f64> {
    let params = profile_params(dim, 0.0)?;
    grid.check_decay(params.kappa)?;
    let w = grid.field_from_fn(|s| params.ef_value(s, 1.0));
    let p = dim.critical_exponent();
    Ok(grid.h1_norm_sq(&w, 0.0) / grid.lp_norm(&w, p).powf(2.0 / p))
}

/// Energy levels and Palais–Smale thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub sobolev: f64,
    pub s_lambda1: f64,
    pub s_lambda2: f64,
    /// `(1/N) S(λ_1)^{N/2}`, the energy of `(z^{λ1}, 0)`.
    pub level1: f64,
    /// `(1/N) S(λ_2)^{N/2}`, the energy of `(0, z^{λ2})`.
    pub level2: f64,
    pub sum_level: f64,
    /// Below this every level satisfies PS (subcritical dimensions).
    pub ps_lower: f64,
    pub ps_upper: f64,
    /// `ℓ/N S(λ_2)^{N/2}` for `ℓ = 1..=L`, the levels excluded from the window.
    pub ladder: Vec<f64>,
}

impl LevelSet {
    pub fn min_level(&self) -> f64 {
        self.level1.min(self.level2)
    }
}

pub fn levels(dim: Dimension, lam1: f64, lam2: f64, sobolev: f64) -> Result<LevelSet> {
    let n = dim.as_f64();
    let s1 = s_lambda(dim, lam1, sobolev)?;
    let s2 = s_lambda(dim, lam2, sobolev)?;
    let level1 = s1.powf(n / 2.0) / n;
    let level2 = s2.powf(n / 2.0) / n;
    let sum_level = level1 + level2;
    let mut ladder = Vec::new();
    let mut ell = 1.0;
    loop {
        let rung = ell * level2;
        ladder.push(rung);
        if rung > sum_level {
            break;
        }
        ell += 1.0;
    }
    Ok(LevelSet {
        sobolev,
        s_lambda1: s1,
        s_lambda2: s2,
        level1,
        level2,
        sum_level,
        ps_lower: level1.min(level2),
        ps_upper: sum_level,
        ladder,
    })
}

/// Which structural hypotheses hold for a parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `(Λ_N - λ_2)/(Λ_N - λ_1)`.
    pub separability_ratio: f64,
    /// `2^{-2/(N-1)}`.
    pub separability_threshold: f64,
    pub separability: bool,
    /// `S(λ1)^{N/2} + S(λ2)^{N/2} < S^{N/2}`.
    pub ps0: bool,
    /// Hypothesis (H); only meaningful for N = 6, `None` otherwise.
    pub hypothesis_h: Option<bool>,
}

pub fn conditions(dim: Dimension, lam1: f64, lam2: f64, h: &WeightSpec) -> Result<ConditionReport> {
    check_lambda(dim, lam1)?;
    check_lambda(dim, lam2)?;
    let n = dim.as_f64();
    let cap = dim.hardy_constant();
    let ratio = (cap - lam2) / (cap - lam1);
    let threshold = 2f64.powf(-2.0 / (n - 1.0));
    // S(λ)^{N/2} / S^{N/2} = (1 - λ/Λ)^{(N-1)/2}; the Sobolev constant cancels.
    let rel = |lam: f64| (1.0 - lam / cap).powf((n - 1.0) / 2.0);
    Ok(ConditionReport {
        separability_ratio: ratio,
        separability_threshold: threshold,
        separability: threshold < ratio,
        ps0: rel(lam1) + rel(lam2) < 1.0,
        hypothesis_h: (dim.get() == 6).then(|| h.satisfies_h()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaInf {
    pub inf_sigma: f64,
    /// `A^{N/2}`, the value at zero coupling.
    pub reference: f64,
    /// `inf Σ_ν > (1 - ε) A^{N/2}`.
    pub bound_holds: bool,
}

/// `inf Σ_ν` for `Σ_ν = {σ > 0 : A σ^{(N-2)/N} < σ + B ν σ^{(γ/2)(N-2)/N}}`.
///
/// Dividing by `σ^{(N-2)/N}`, membership reads `g(σ) > 0` with
/// `g(σ) = σ^{2/N} + Bν σ^{(γ/2 - 1)(N-2)/N} - A`, which is nondecreasing
/// for `γ ≥ 2`; the infimum is the root of `g` (or 0 when `g(0+) > 0`).
pub fn sigma_inf(a: f64, b: f64, gamma_exp: f64, nu: f64, dim: Dimension, epsilon: f64) -> Result<SigmaInf> {
    if !(a > 0.0 && b > 0.0) {
        return Err(LabError::param("A, B", "must be positive"));
    }
    if !(gamma_exp >= 2.0) {
        return Err(LabError::param("gamma", "must be at least 2"));
    }
    if !(nu >= 0.0) {
        return Err(LabError::param("nu", "must be non-negative"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(LabError::param("epsilon", "must lie in (0, 1)"));
    }
    let n = dim.as_f64();
    let q = (n - 2.0) / n;
    let reference = a.powf(n / 2.0);
    let coupling_exp = (gamma_exp / 2.0 - 1.0) * q;
    let g = |sigma: f64| sigma.powf(1.0 - q) + b * nu * sigma.powf(coupling_exp) - a;

    let inf_sigma = if nu == 0.0 {
        reference
    } else if coupling_exp == 0.0 && b * nu >= a {
        0.0
    } else {
        // g(reference) = Bν reference^{...} > 0 and g(0+) <= 0: bisect.
        let mut hi = reference;
        if !(g(hi) > 0.0) {
            return Err(LabError::Bracket(format!("g(A^(N/2)) = {} is not positive", g(hi))));
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * reference {
                break;
            }
        }
        hi
    };
    Ok(SigmaInf { inf_sigma, reference, bound_holds: inf_sigma > (1.0 - epsilon) * reference })
}
