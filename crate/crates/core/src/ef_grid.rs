//! Emden–Fowler reduction of radial functions on R^N.
//!
//! A radial `u(r)` is represented by `w(s) = r^{(N-2)/2} u(r)` with `s = ln r`.
//! In these variables the Hardy operator `-Δ - λ/|x|^2` becomes the constant
//! coefficient operator `-d²/ds² + (Λ_N - λ)` and every integral of the
//! variational setting turns into a one-dimensional integral over `s`
//! (times the sphere area `ω_{N-1}`).
//!
//! Fields are sampled on a uniform grid with homogeneous boundary values. The
//! second derivative is applied in the discrete sine basis of the window, so
//! the discrete Dirichlet form is exact for sine polynomials and spectrally
//! accurate for the exponentially decaying profiles we work with.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::closed_forms::Dimension;
use crate::error::{LabError, Result};

/// Required tail decay exponent for a window: profiles must fall below `e^-25`.
pub const REQUIRED_DECAY: f64 = 25.0;

/// Grid settings as they appear in scenarios and records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
    /// Widen the window (keeping the step) when a decay rate is too slow for it.
    #[serde(default = "default_true")]
    pub auto_widen: bool,
}

fn default_true() -> bool {
    true
}

impl Default for GridSettings {
    fn default() -> Self {
        Self { s_min: -40.0, s_max: 40.0, points: 4001, auto_widen: true }
    }
}

impl GridSettings {
    pub fn new(s_min: f64, s_max: f64, points: usize) -> Self {
        Self { s_min, s_max, points, auto_widen: false }
    }

    pub fn step(&self) -> f64 {
        (self.s_max - self.s_min) / (self.points as f64 - 1.0)
    }

    /// Settings that accommodate a profile decaying like `e^{-kappa |s|}`.
    ///
    /// Without `auto_widen` an insufficient window is an error.
    pub fn fitted(&self, kappa: f64) -> Result<GridSettings> {
        let reach = kappa * self.s_min.abs().min(self.s_max.abs());
        if self.s_min < 0.0 && self.s_max > 0.0 && reach >= REQUIRED_DECAY {
            return Ok(*self);
        }
        if !self.auto_widen {
            return Err(LabError::RefinementRequired { kappa, reach, required: REQUIRED_DECAY });
        }
        let step = self.step();
        let half = (REQUIRED_DECAY / kappa).max(self.s_min.abs()).max(self.s_max.abs());
        let cells = (2.0 * half / step).ceil() as usize;
        let half = cells as f64 * step / 2.0;
        Ok(GridSettings { s_min: -half, s_max: half, points: cells + 1, auto_widen: true })
    }

    pub fn build(&self, dim: Dimension) -> Result<EfGrid> {
        EfGrid::new(self.s_min, self.s_max, self.points, dim)
    }
}

/// Discrete sine transform (DST-I) on the interior nodes of a grid, with the
/// eigenvalues of `-d²/ds²` under homogeneous Dirichlet conditions.
struct SineSpectrum {
    interior: usize,
    fft: Arc<dyn Fft<f64>>,
    eigenvalues: Vec<f64>,
}

impl SineSpectrum {
    fn new(points: usize, length: f64) -> Self {
        let interior = points - 2;
        let fft = FftPlanner::new().plan_fft_forward(2 * (interior + 1));
        let eigenvalues = (1..=interior)
            .map(|k| {
                let q = PI * k as f64 / length;
                q * q
            })
            .collect();
        Self { interior, fft, eigenvalues }
    }

    /// Unnormalised DST-I: `X_k = Σ_j x_j sin(π j k / (n+1))`.
    fn dst(&self, x: &[f64]) -> Vec<f64> {
        let n = self.interior;
        let len = 2 * (n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (j, &v) in x.iter().enumerate() {
            buf[j + 1].re = v;
            buf[len - j - 1].re = -v;
        }
        self.fft.process(&mut buf);
        buf[1..=n].iter().map(|c| -0.5 * c.im).collect()
    }

    /// Band-limited translation by `cells` grid steps (any real number) of
    /// the odd periodic extension of `w`.
    fn translate(&self, w: &[f64], cells: f64) -> Vec<f64> {
        let n = self.interior;
        let len = 2 * (n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for j in 1..=n {
            buf[j].re = w[j];
            buf[len - j].re = -w[j];
        }
        self.fft.process(&mut buf);
        for (m, c) in buf.iter_mut().enumerate() {
            let freq = if 2 * m < len { m as f64 } else { m as f64 - len as f64 };
            let phase = -2.0 * PI * freq * cells / len as f64;
            *c *= if 2 * m == len { Complex64::new(phase.cos(), 0.0) } else { Complex64::from_polar(1.0, phase) };
        }
        // Inverse transform through conjugation with the forward plan.
        buf.iter_mut().for_each(|c| *c = c.conj());
        self.fft.process(&mut buf);
        let scale = 1.0 / len as f64;
        let mut out: Vec<f64> = buf[..=n + 1].iter().map(|c| c.re * scale).collect();
        out[0] = 0.0;
        out[n + 1] = 0.0;
        out
    }

    fn multiply(&self, w: &[f64], symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.interior;
        let mut coeffs = self.dst(&w[1..=n]);
        let norm = 2.0 / (n as f64 + 1.0);
        for (c, &ev) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= symbol(ev) * norm;
        }
        let inner = self.dst(&coeffs);
        let mut out = Vec::with_capacity(n + 2);
        out.push(0.0);
        out.extend(inner);
        out.push(0.0);
        out
    }
}

/// Uniform grid in the Emden–Fowler variable `s = ln r`.
#[derive(Clone)]
pub struct EfGrid {
    s_min: f64,
    s_max: f64,
    points: usize,
    step: f64,
    dim: Dimension,
    sphere_area: f64,
    nodes: Arc<Vec<f64>>,
    spectrum: Arc<SineSpectrum>,
}

impl std::fmt::Debug for EfGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EfGrid")
            .field("s_min", &self.s_min)
            .field("s_max", &self.s_max)
            .field("points", &self.points)
            .field("dim", &self.dim)
            .finish()
    }
}

/// `build_grid` with validation of the window and sample count.
pub fn build_grid(s_min: f64, s_max: f64, points: usize, dim: Dimension) -> Result<EfGrid> {
    EfGrid::new(s_min, s_max, points, dim)
}

impl EfGrid {
    pub fn new(s_min: f64, s_max: f64, points: usize, dim: Dimension) -> Result<Self> {
        if points < 3 {
            return Err(LabError::GridTooSmall(points));
        }
        if !(s_min.is_finite() && s_max.is_finite() && s_min < s_max) {
            return Err(LabError::param("grid window", format!("need s_min < s_max, got [{s_min}, {s_max}]")));
        }
        let step = (s_max - s_min) / (points as f64 - 1.0);
        let nodes = (0..points).map(|j| s_min + j as f64 * step).collect();
        Ok(Self {
            s_min,
            s_max,
            points,
            step,
            dim,
            sphere_area: dim.sphere_area(),
            nodes: Arc::new(nodes),
            spectrum: Arc::new(SineSpectrum::new(points, s_max - s_min)),
        })
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn settings(&self) -> GridSettings {
        GridSettings::new(self.s_min, self.s_max, self.points)
    }

    /// Fails with a refinement error when `e^{-kappa |s|}` is not below `e^-25`
    /// at both window edges.
    pub fn check_decay(&self, kappa: f64) -> Result<()> {
        let reach = kappa * self.s_min.abs().min(self.s_max.abs());
        if self.s_min < 0.0 && self.s_max > 0.0 && reach >= REQUIRED_DECAY {
            Ok(())
        } else {
            Err(LabError::RefinementRequired { kappa, reach, required: REQUIRED_DECAY })
        }
    }

    pub fn field_from_fn(&self, f: impl Fn(f64) -> f64) -> Field {
        let mut samples: Vec<f64> = self.nodes.iter().map(|&s| f(s)).collect();
        samples[0] = 0.0;
        samples[self.points - 1] = 0.0;
        Field { samples }
    }

    pub fn zeros(&self) -> Field {
        Field { samples: vec![0.0; self.points] }
    }

    pub fn field(&self, samples: Vec<f64>) -> Result<Field> {
        if samples.len() != self.points {
            return Err(LabError::LengthMismatch { expected: self.points, got: samples.len() });
        }
        let mut f = Field { samples };
        f.samples[0] = 0.0;
        let last = self.points - 1;
        f.samples[last] = 0.0;
        Ok(f)
    }

    /// Trapezoidal rule over the whole window (no sphere factor).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let n = values.len();
        let inner: f64 = values.iter().sum();
        self.step * (inner - 0.5 * (values[0] + values[n - 1]))
    }

    /// Trapezoidal rule for `f(s_j)` evaluated on the nodes.
    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self.nodes.iter().map(|&s| f(s)).collect();
        self.integrate(&vals)
    }

    /// Quadrature inner product `∫ a b ds` (no sphere factor).
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        self.step * (s - 0.5 * (a[0] * b[0] + a[self.points - 1] * b[self.points - 1]))
    }

    /// `-w''` in the sine basis of the window.
    pub fn neg_laplacian(&self, w: &[f64]) -> Vec<f64> {
        self.spectrum.multiply(w, |ev| ev)
    }

    /// `(-d²/ds² + c)^{-1} w`, for `c > 0`.
    pub fn solve_shifted(&self, w: &[f64], c: f64) -> Vec<f64> {
        self.spectrum.multiply(w, |ev| 1.0 / (ev + c))
    }

    /// `(-d²/ds² + c) w`.
    pub fn apply_shifted(&self, w: &[f64], c: f64) -> Vec<f64> {
        self.spectrum.multiply(w, |ev| ev + c)
    }

    /// `w(s - delta)` by band-limited interpolation; exact for sine
    /// polynomials of the window and spectrally accurate for decayed fields.
    pub fn translate(&self, w: &[f64], delta: f64) -> Field {
        Field { samples: self.spectrum.translate(w, delta / self.step) }
    }

    /// Both components translated by `delta`.
    pub fn translate_pair(&self, state: &StatePair, delta: f64) -> StatePair {
        StatePair { wu: self.translate(&state.wu, delta), wv: self.translate(&state.wv, delta) }
    }

    /// Eigenvalues of the discrete `-d²/ds²` (interior modes, ascending).
    pub fn laplacian_eigenvalues(&self) -> &[f64] {
        &self.spectrum.eigenvalues
    }

    /// `∫ w'^2 ds` for the discrete operator (no sphere factor).
    pub fn dirichlet_form(&self, w: &[f64]) -> f64 {
        let lw = self.neg_laplacian(w);
        self.dot(w, &lw)
    }

    /// `r = e^s` at every node and `u = r^{-(N-2)/2} w`.
    pub fn to_physical(&self, w: &Field) -> (Vec<f64>, Vec<f64>) {
        let half = self.dim.half_gap();
        let radii: Vec<f64> = self.nodes.iter().map(|s| s.exp()).collect();
        let u = self.nodes.iter().zip(w.iter()).map(|(s, v)| (-half * s).exp() * v).collect();
        (radii, u)
    }

    /// Inverse of [`to_physical`](Self::to_physical): `u` sampled at the radii
    /// `r_j = e^{s_j}` back to `w`.
    pub fn from_physical(&self, radii: &[f64], u: &[f64]) -> Result<Field> {
        if radii.len() != self.points || u.len() != self.points {
            return Err(LabError::LengthMismatch { expected: self.points, got: radii.len().min(u.len()) });
        }
        if let Some(&r) = radii.iter().find(|&&r| !(r > 0.0)) {
            return Err(LabError::NonPositiveRadius(r));
        }
        let half = self.dim.half_gap();
        let samples = radii.iter().zip(u).map(|(r, v)| r.powf(half) * v).collect();
        Ok(Field { samples })
    }

    /// `||u||_λ^2 = ω ∫ (w'^2 + (Λ_N - λ) w^2) ds`.
    pub fn h1_norm_sq(&self, w: &[f64], lam: f64) -> f64 {
        let gap = self.dim.hardy_constant() - lam;
        self.sphere_area * (self.dirichlet_form(w) + gap * self.dot(w, w))
    }

    /// `ω ∫ |w|^p ds` times the Emden–Fowler weight `e^{s (N - p (N-2)/2)}`,
    /// which is identically one for the critical exponent.
    pub fn lp_norm(&self, w: &[f64], p: f64) -> f64 {
        let n = self.dim.as_f64();
        let rate = n - p * (n - 2.0) / 2.0;
        let vals: Vec<f64> = if rate.abs() < 1e-14 {
            w.iter().map(|v| v.abs().powf(p)).collect()
        } else {
            self.nodes.iter().zip(w).map(|(s, v)| (rate * s).exp() * v.abs().powf(p)).collect()
        };
        self.sphere_area * self.integrate(&vals)
    }

    /// `h(e^s) e^{(6-N)s/2}` at every node: the Emden–Fowler weight of `∫ h u^2 v dx`.
    pub fn coupling_weight(&self, h: &WeightSpec) -> Vec<f64> {
        let rate = (6.0 - self.dim.as_f64()) / 2.0;
        self.nodes.iter().map(|&s| h.eval_ef(s) * (rate * s).exp()).collect()
    }

    /// `∫ h(x) u^2 v dx` in Emden–Fowler form.
    pub fn coupling_integral(&self, state: &StatePair, h: &WeightSpec) -> f64 {
        let weight = self.coupling_weight(h);
        let vals: Vec<f64> =
            weight.iter().zip(state.wu.iter().zip(state.wv.iter())).map(|(c, (u, v))| c * u * u * v).collect();
        self.sphere_area * self.integrate(&vals)
    }

    /// Profile CSV: `s,r,w_u,w_v,u,v`, one row per node.
    pub fn write_profile_csv<W: Write>(&self, state: &StatePair, out: &mut W) -> std::io::Result<()> {
        let half = self.dim.half_gap();
        writeln!(out, "s,r,w_u,w_v,u,v")?;
        for (j, &s) in self.nodes.iter().enumerate() {
            let r = s.exp();
            let scale = (-half * s).exp();
            let (wu, wv) = (state.wu[j], state.wv[j]);
            writeln!(out, "{s:.10e},{r:.10e},{wu:.15e},{wv:.15e},{:.15e},{:.15e}", scale * wu, scale * wv)?;
        }
        Ok(())
    }
}

/// Samples of one Emden–Fowler profile on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    samples: Vec<f64>,
}

impl Field {
    /// Wrap raw samples. Use [`EfGrid::field`] to check the length.
    pub fn from_vec(samples: Vec<f64>) -> Field {
        Field { samples }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.samples
    }

    pub fn scaled(&self, t: f64) -> Field {
        Field { samples: self.samples.iter().map(|v| t * v).collect() }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &[f64]) -> Field {
        Field { samples: self.samples.iter().zip(other).map(|(x, y)| x + a * y).collect() }
    }

    pub fn positive_part(&self) -> Field {
        Field { samples: self.samples.iter().map(|v| v.max(0.0)).collect() }
    }

    pub fn abs(&self) -> Field {
        Field { samples: self.samples.iter().map(|v| v.abs()).collect() }
    }

    /// Largest magnitude of the negative part.
    pub fn negative_sup(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(-v))
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Shift samples by `k` nodes (positive `k` moves the profile to larger
    /// `s`), filling with zeros.
    pub fn shifted(&self, k: isize) -> Field {
        let n = self.samples.len() as isize;
        let samples = (0..n)
            .map(|j| {
                let src = j - k;
                if src <= 0 || src >= n - 1 {
                    0.0
                } else {
                    self.samples[src as usize]
                }
            })
            .collect();
        Field { samples }
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.samples
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }
}

/// A pair `(u, v)` in Emden–Fowler form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePair {
    pub wu: Field,
    pub wv: Field,
}

impl StatePair {
    pub fn new(wu: Field, wv: Field) -> Result<Self> {
        if wu.len() != wv.len() {
            return Err(LabError::LengthMismatch { expected: wu.len(), got: wv.len() });
        }
        Ok(Self { wu, wv })
    }

    pub fn zeros(grid: &EfGrid) -> Self {
        Self { wu: grid.zeros(), wv: grid.zeros() }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { wu: self.wu.scaled(t), wv: self.wv.scaled(t) }
    }

    pub fn axpy(&self, a: f64, d: &StatePair) -> Self {
        Self { wu: self.wu.axpy(a, &d.wu), wv: self.wv.axpy(a, &d.wv) }
    }

    pub fn abs(&self) -> Self {
        Self { wu: self.wu.abs(), wv: self.wv.abs() }
    }

    pub fn shifted(&self, k: isize) -> Self {
        Self { wu: self.wu.shifted(k), wv: self.wv.shifted(k) }
    }

    pub fn negative_sup(&self) -> f64 {
        self.wu.negative_sup().max(self.wv.negative_sup())
    }

    pub fn is_zero(&self) -> bool {
        self.wu.iter().chain(self.wv.iter()).all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// `h ≡ c`; params `[c]`.
    Constant,
    /// `h(e^s) = c sech^k(s - s0)`; params `[c, k, s0]`.
    EfSech,
    /// Piecewise-linear in `s`; params `[s_0, h_0, s_1, h_1, ...]` with
    /// increasing `s_i`, constant extension beyond the ends.
    Table,
}

/// The coupling weight `h`, described in the Emden–Fowler variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub params: Vec<f64>,
}

impl WeightSpec {
    pub fn constant(c: f64) -> Self {
        Self { kind: WeightKind::Constant, params: vec![c] }
    }

    pub fn ef_sech(c: f64, k: f64, s0: f64) -> Self {
        Self { kind: WeightKind::EfSech, params: vec![c, k, s0] }
    }

    /// `sech^{(8-N)/2}(s)`: the exponent exceeds `(6-N)/2`, so the coupling
    /// weight `h e^{(6-N)s/2}` vanishes at both ends of the line; for N = 6 it
    /// is `sech(s)`, which satisfies (H).
    pub fn default_for(dim: Dimension) -> Self {
        Self::ef_sech(1.0, (8.0 - dim.as_f64()) / 2.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(LabError::param("weight", reason.to_string()));
        match self.kind {
            WeightKind::Constant => {
                if self.params.len() != 1 || !(self.params[0] >= 0.0) || !self.params[0].is_finite() {
                    return bad("constant weight takes one finite value c >= 0");
                }
            }
            WeightKind::EfSech => {
                if self.params.len() != 3 || !(self.params[0] > 0.0) || !(self.params[1] > 0.0) {
                    return bad("ef_sech weight takes [c, k, s0] with c, k > 0");
                }
            }
            WeightKind::Table => {
                let p = &self.params;
                if p.len() < 4 || !p.len().is_multiple_of(2) {
                    return bad("table weight takes an even list [s_0, h_0, s_1, h_1, ...] of at least two knots");
                }
                if p.chunks(2).any(|c| !(c[1] >= 0.0) || !c[1].is_finite()) {
                    return bad("table values must be finite and non-negative");
                }
                if p.chunks(2).zip(p.chunks(2).skip(1)).any(|(a, b)| !(b[0] > a[0])) {
                    return bad("table abscissae must increase");
                }
            }
        }
        Ok(())
    }

    /// `h(e^s)`.
    pub fn eval_ef(&self, s: f64) -> f64 {
        match self.kind {
            WeightKind::Constant => self.params[0],
            WeightKind::EfSech => {
                let (c, k, s0) = (self.params[0], self.params[1], self.params[2]);
                let x = (s - s0).abs();
                // sech(x) = 2 e^{-x} / (1 + e^{-2x})
                let log_sech = std::f64::consts::LN_2 - x - (-2.0 * x).exp().ln_1p();
                c * (k * log_sech).exp()
            }
            WeightKind::Table => {
                let p = &self.params;
                let knots = p.len() / 2;
                if s <= p[0] {
                    return p[1];
                }
                if s >= p[2 * (knots - 1)] {
                    return p[2 * knots - 1];
                }
                for i in 0..knots - 1 {
                    let (s0, h0, s1, h1) = (p[2 * i], p[2 * i + 1], p[2 * i + 2], p[2 * i + 3]);
                    if s <= s1 {
                        return h0 + (h1 - h0) * (s - s0) / (s1 - s0);
                    }
                }
                p[2 * knots - 1]
            }
        }
    }

    /// Whether the weight is constant in `s` (then the coupling is autonomous
    /// exactly when N = 6).
    pub fn is_constant(&self) -> bool {
        self.kind == WeightKind::Constant
    }

    /// Hypothesis (H): bounded, continuous near 0 and ∞, `h(0) = h(∞) = 0`.
    pub fn satisfies_h(&self) -> bool {
        match self.kind {
            WeightKind::Constant => self.params[0] == 0.0,
            WeightKind::EfSech => true,
            WeightKind::Table => {
                let p = &self.params;
                p[1] == 0.0 && p[p.len() - 1] == 0.0
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self.kind {
            WeightKind::Constant => self.params[0],
            WeightKind::EfSech => self.params[0],
            WeightKind::Table => self.params.chunks(2).fold(0.0, |m, c| m.max(c[1])),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        match self.kind {
            WeightKind::Constant | WeightKind::EfSech => out.params[0] *= factor,
            WeightKind::Table => out.params.chunks_mut(2).for_each(|c| c[1] *= factor),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dim(n: i64) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn default_grid_step() {
        let g = build_grid(-40.0, 40.0, 8001, dim(4)).unwrap();
        assert!((g.step() - 0.01).abs() < 1e-15);
        assert!(matches!(build_grid(0.0, 1.0, 2, dim(4)), Err(LabError::GridTooSmall(2))));
        assert!(build_grid(1.0, 0.0, 10, dim(4)).is_err());
    }

    #[test]
    fn translation_is_band_limited_shift() {
        let g = build_grid(-20.0, 20.0, 801, dim(4)).unwrap();
        let w = g.field_from_fn(|s| (-(s - 1.0) * (s - 1.0)).exp());
        let moved = g.translate(&w, 0.37);
        let exact = g.field_from_fn(|s| (-(s - 1.37) * (s - 1.37)).exp());
        assert!(moved.iter().zip(exact.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let whole = g.translate(&w, 3.0 * g.step());
        assert!(whole.iter().zip(w.shifted(3).iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn quadrature_basics() {
        let g = build_grid(0.0, 1.0, 11, dim(3)).unwrap();
        assert!((g.integrate(&[1.0; 11]) - 1.0).abs() < 1e-15);

        let g = build_grid(-40.0, 40.0, 4001, dim(4)).unwrap();
        let sech2 = g.integrate_fn(|s| 1.0 / s.cosh().powi(2));
        assert!((sech2 - 2.0).abs() < 1e-12, "{sech2}");
    }

    #[test]
    fn sine_laplacian_matches_second_derivative() {
        let g = build_grid(-30.0, 30.0, 1201, dim(4)).unwrap();
        let w = g.field_from_fn(|s| (-s * s / 4.0).exp());
        let lw = g.neg_laplacian(&w);
        for (j, &s) in g.nodes().iter().enumerate() {
            let exact = -(s * s / 4.0 - 0.5) * (-s * s / 4.0).exp();
            assert!((lw[j] - exact).abs() < 1e-11, "s={s}: {} vs {exact}", lw[j]);
        }
        let back = g.solve_shifted(&g.apply_shifted(&w, 0.3), 0.3);
        let err = back.iter().zip(w.iter()).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-13);
    }

    #[test]
    fn physical_roundtrip() {
        let g = build_grid(-10.0, 10.0, 401, dim(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = g.field((0..401).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (r, u) = g.to_physical(&w);
        let back = g.from_physical(&r, &u).unwrap();
        let err = back.iter().zip(w.iter()).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs() / b.abs().max(1.0)));
        assert!(err < 1e-13);

        let zero = g.zeros();
        let (_, u0) = g.to_physical(&zero);
        assert!(u0.iter().all(|&v| v == 0.0));

        let mut bad = r.clone();
        bad[3] = 0.0;
        assert!(matches!(g.from_physical(&bad, &u), Err(LabError::NonPositiveRadius(_))));
    }

    #[test]
    fn norms_of_zero_vanish() {
        let g = build_grid(-10.0, 10.0, 101, dim(4)).unwrap();
        let z = g.zeros();
        assert_eq!(g.h1_norm_sq(&z, 0.3), 0.0);
        assert_eq!(g.lp_norm(&z, 4.0), 0.0);
        let s = StatePair { wu: g.field_from_fn(|s| (-s * s).exp()), wv: z };
        assert_eq!(g.coupling_integral(&s, &WeightSpec::constant(1.0)), 0.0);
    }

    #[test]
    fn critical_coupling_weight_is_flat_in_six_dimensions() {
        let g = build_grid(-10.0, 10.0, 101, dim(6)).unwrap();
        let w = g.coupling_weight(&WeightSpec::constant(1.0));
        assert!(w.iter().all(|&c| (c - 1.0).abs() < 1e-15));
    }

    #[test]
    fn coupling_integral_in_both_coordinates() {
        // N = 4, h ≡ 1, w_u = w_v = sech(s); compare with ∫ u^2 v r^3 dr in r.
        let g = build_grid(-40.0, 40.0, 8001, dim(4)).unwrap();
        let w = g.field_from_fn(|s| 1.0 / s.cosh());
        let state = StatePair { wu: w.clone(), wv: w };
        let ef = g.coupling_integral(&state, &WeightSpec::constant(1.0));

        // u(r) = r^{-1} sech(ln r) = 2 / (r^2 + 1), integrate in t with r = t / (1 - t).
        let u = |r: f64| 2.0 / (r * r + 1.0);
        let panels = 200_000;
        let mut radial = 0.0;
        for i in 0..panels {
            for (node, wt) in [(-1.0 / 3f64.sqrt(), 1.0), (1.0 / 3f64.sqrt(), 1.0)] {
                let t = (i as f64 + 0.5 + 0.5 * node) / panels as f64;
                let r = t / (1.0 - t);
                let jac = 1.0 / ((1.0 - t) * (1.0 - t));
                radial += wt * 0.5 / panels as f64 * u(r).powi(3) * r.powi(3) * jac;
            }
        }
        radial *= dim(4).sphere_area();
        assert!((ef - radial).abs() < 1e-9 * radial, "{ef} vs {radial}");
    }

    #[test]
    fn hardy_gap_vanishes_at_the_critical_constant() {
        let g = build_grid(-20.0, 20.0, 801, dim(5)).unwrap();
        let w = g.field_from_fn(|s| (-(s * s)).exp() * s);
        let lam_cap = dim(5).hardy_constant();
        let only_gradient = g.sphere_area() * g.dirichlet_form(&w);
        assert!((g.h1_norm_sq(&w, lam_cap) - only_gradient).abs() < 1e-14);
    }

    #[test]
    fn shift_preserves_norms_for_constant_weight() {
        let g = build_grid(-30.0, 30.0, 1201, dim(6)).unwrap();
        let wu = g.field_from_fn(|s| 1.0 / s.cosh());
        let wv = g.field_from_fn(|s| 0.5 / (0.7 * s).cosh());
        let state = StatePair { wu, wv };
        let moved = state.shifted(37);
        let h = WeightSpec::constant(1.0);
        for (a, b) in [
            (g.h1_norm_sq(&state.wu, 1.0), g.h1_norm_sq(&moved.wu, 1.0)),
            (g.lp_norm(&state.wv, 3.0), g.lp_norm(&moved.wv, 3.0)),
            (g.coupling_integral(&state, &h), g.coupling_integral(&moved, &h)),
        ] {
            assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn weight_hypothesis() {
        assert!(!WeightSpec::constant(1.0).satisfies_h());
        assert!(WeightSpec::ef_sech(1.0, 1.0, 0.0).satisfies_h());
        assert!(WeightSpec { kind: WeightKind::Table, params: vec![-1.0, 0.0, 0.0, 2.0, 1.0, 0.0] }.satisfies_h());
        let t = WeightSpec { kind: WeightKind::Table, params: vec![-1.0, 0.0, 1.0, 2.0] };
        assert!((t.eval_ef(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(t.eval_ef(5.0), 2.0);
        let s = WeightSpec::ef_sech(2.0, 1.5, 0.0);
        assert!((s.eval_ef(0.8) - 2.0 / 0.8f64.cosh().powf(1.5)).abs() < 1e-14);
        assert!(s.eval_ef(800.0) >= 0.0);
    }

    #[test]
    fn grid_fitting() {
        let base = GridSettings::default();
        assert_eq!(base.fitted(1.0).unwrap(), base);
        let wide = base.fitted(0.25).unwrap();
        assert!(wide.s_max >= 100.0 - 1e-9);
        assert!((wide.step() - base.step()).abs() < 1e-12);
        let pinned = GridSettings::new(-40.0, 40.0, 4001);
        assert!(matches!(pinned.fitted(0.5), Err(LabError::RefinementRequired { .. })));
    }
}
