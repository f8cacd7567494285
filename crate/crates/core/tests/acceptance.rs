//! Acceptance criteria at desk scale, each against an oracle computed here
//! from closed forms or brute force rather than from the library's own
//! formulas. Runs without the test harness so the per-criterion lines are
//! always shown; the process exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nehari_core::closed_forms::{profile_params, sigma_inf};
use nehari_core::solvers::{classify_semitrivial, ground_state, mountain_pass, nu_bar, Character, GroundInit, MpOptions};
use nehari_core::{Dimension, EfGrid, Field, GridSettings, Problem, ProblemSpec, StatePair, Variant, WeightSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIMS: [i64; 4] = [3, 4, 5, 6];
const FRACTIONS: [f64; 3] = [0.1, 0.5, 0.9];

// Closed-form oracles.

/// `Γ(n/2)` by the recursion from `Γ(1/2) = √π` and `Γ(1) = 1`.
fn gamma_half(n: u32) -> f64 {
    match n {
        1 => PI.sqrt(),
        2 => 1.0,
        _ => (n as f64 / 2.0 - 1.0) * gamma_half(n - 2),
    }
}

fn hardy(n: f64) -> f64 {
    (n - 2.0) * (n - 2.0) / 4.0
}

fn sphere(n: f64) -> f64 {
    2.0 * PI.powf(n / 2.0) / gamma_half(n as u32)
}

/// Talenti constant `S = πN(N-2)(Γ(N/2)/Γ(N))^{2/N}`.
fn sobolev(n: f64) -> f64 {
    PI * n * (n - 2.0) * (gamma_half(n as u32) / gamma_half(2 * n as u32)).powf(2.0 / n)
}

fn s_lambda(n: f64, lam: f64) -> f64 {
    (1.0 - lam / hardy(n)).powf((n - 1.0) / n) * sobolev(n)
}

/// `(1/N) S(λ)^{N/2}`.
fn level(n: f64, lam: f64) -> f64 {
    s_lambda(n, lam).powf(n / 2.0) / n
}

/// Emden–Fowler Terracini profile at `μ = 1`: `C sech^α(β s)` with
/// `α = (N-2)/2`, `κ² = Λ_N - λ`, `β = κ/α`, `C = (N κ²/(N-2))^{α/2}`.
struct Sech {
    alpha: f64,
    beta: f64,
    c: f64,
    kappa2: f64,
    p: f64,
}

impl Sech {
    fn new(n: f64, lam: f64) -> Self {
        let kappa2 = hardy(n) - lam;
        let alpha = (n - 2.0) / 2.0;
        Self { alpha, beta: kappa2.sqrt() / alpha, c: (n * kappa2 / (n - 2.0)).powf(alpha / 2.0), kappa2, p: 2.0 * n / (n - 2.0) }
    }

    fn value(&self, s: f64) -> f64 {
        self.c / (self.beta * s).cosh().powf(self.alpha)
    }

    /// `-w'' + κ² w - w^{p-1}` with `w''` differentiated by hand:
    /// `f'' = αβ² f (α - (α+1) sech²)` for `f = sech^α(βs)`.
    fn residual(&self, s: f64) -> f64 {
        let w = self.value(s);
        let sech2 = 1.0 / (self.beta * s).cosh().powi(2);
        let w2 = self.alpha * self.beta * self.beta * w * (self.alpha - (self.alpha + 1.0) * sech2);
        -w2 + self.kappa2 * w - w.powf(self.p - 1.0)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn dim(n: i64) -> Dimension {
    Dimension::new(n).unwrap()
}

fn desk(points: usize) -> GridSettings {
    GridSettings { points, ..GridSettings::default() }
}

fn problem(n: i64, f1: f64, f2: f64, nu: f64) -> Problem {
    let cap = hardy(n as f64);
    ProblemSpec::new(dim(n), f1 * cap, f2 * cap, nu).build().unwrap()
}

fn random_field(grid: &EfGrid, rng: &mut ChaCha8Rng, spread: f64) -> Field {
    let terms: Vec<(f64, f64, f64)> =
        (0..4).map(|_| (rng.random_range(-1.0..2.0), rng.random_range(-spread..spread), rng.random_range(0.5..3.0))).collect();
    grid.field_from_fn(|s| terms.iter().map(|(a, c, w)| a * (-(s - c) * (s - c) / (w * w)).exp()).sum())
}

fn random_state(p: &Problem, rng: &mut ChaCha8Rng) -> StatePair {
    StatePair { wu: random_field(p.grid(), rng, 4.0), wv: random_field(p.grid(), rng, 4.0) }
}

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// Criteria.

fn terracini_residual() -> Verdict {
    let grid = desk(8001);
    let (mut worst_res, mut worst_shape, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64);
    for n in DIMS {
        let nf = n as f64;
        for f in FRACTIONS {
            let lam = f * hardy(nf);
            let params = profile_params(dim(n), lam).unwrap();
            let oracle = Sech::new(nf, lam);
            for k in 0..grid.points {
                let s = grid.s_min + k as f64 * grid.step();
                worst_res = worst_res.max(params.ef_residual(s, 1.0).abs());
                let v = oracle.value(s);
                if v > 1e-250 {
                    worst_shape = worst_shape.max(rel(params.ef_value(s, 1.0), v));
                }
                worst_oracle = worst_oracle.max(oracle.residual(s).abs());
            }
        }
    }
    verdict(
        worst_res < 1e-8 && worst_shape < 1e-12 && worst_oracle < 1e-8,
        format!("max residual {worst_res:.2e}, profile vs sech form {worst_shape:.2e}, oracle residual {worst_oracle:.2e}"),
    )
}

fn norm_identity() -> Verdict {
    let (mut worst_lib, mut worst_oracle) = (0.0f64, 0.0f64);
    for n in DIMS {
        let nf = n as f64;
        for f in FRACTIONS {
            let lam = f * hardy(nf);
            let params = profile_params(dim(n), lam).unwrap();
            let grid = desk(4001).fitted(params.kappa).and_then(|g| g.build(dim(n))).unwrap();
            let p = 2.0 * nf / (nf - 2.0);
            let target = s_lambda(nf, lam).powf(nf / 2.0);
            let w = grid.field_from_fn(|s| params.ef_value(s, 1.0));
            worst_lib = worst_lib.max(rel(grid.lp_norm(&w, p), target));
            // Plain trapezoid of the sech form on the same nodes.
            let oracle = Sech::new(nf, lam);
            let h = grid.step();
            let sum: f64 = grid.nodes().iter().map(|&s| oracle.value(s).powf(p)).sum();
            let ends = oracle.value(grid.s_min()).powf(p) + oracle.value(grid.s_max()).powf(p);
            worst_oracle = worst_oracle.max(rel(sphere(nf) * h * (sum - 0.5 * ends), target));
        }
    }
    verdict(worst_lib < 1e-6 && worst_oracle < 1e-6, format!("library {worst_lib:.2e}, independent trapezoid {worst_oracle:.2e}"))
}

fn energy_levels() -> Verdict {
    let mut worst = 0.0f64;
    for n in DIMS {
        let nf = n as f64;
        let pb = problem(n, 0.1, 0.5, 0.0);
        for mu in [0.5, 1.0, 2.0] {
            let (l1, l2) = (pb.spec().lam1, pb.spec().lam2);
            worst = worst.max(rel(pb.energy(&pb.semitrivial(nehari_core::Slot::U, mu)), level(nf, l1)));
            worst = worst.max(rel(pb.energy(&pb.semitrivial(nehari_core::Slot::V, mu)), level(nf, l2)));
        }
    }
    verdict(worst < 1e-6, format!("max relative error {worst:.2e} over N, slot and μ"))
}

fn gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for n in DIMS {
        let pb = problem(n, 0.3, 0.6, 0.7);
        for _ in 0..20 {
            let w = random_state(&pb, &mut rng);
            let d = random_state(&pb, &mut rng);
            for variant in [Variant::Full, Variant::Positive] {
                let eps = 1e-5;
                let e = |t: f64| pb.energy_variant(&w.axpy(t, &d), variant);
                let fd = (8.0 * (e(eps) - e(-eps)) - (e(2.0 * eps) - e(-2.0 * eps))) / (12.0 * eps);
                let exact = pb.directional_derivative(&w, &d, variant);
                worst = worst.max((fd - exact).abs() / exact.abs().max(1e-3));
            }
        }
    }
    verdict(worst < 1e-6, format!("max relative gap to finite differences {worst:.2e}"))
}

fn nehari() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut psi, mut formulas, mut energy, mut curv) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for n in DIMS {
        let pb = problem(n, 0.3, 0.6, 0.7);
        for _ in 0..20 {
            let (w, report) = pb.nehari_project(&random_state(&pb, &mut rng), Variant::Full).unwrap();
            let norm = pb.d_norm_sq(&w);
            // Ψ(w) = ⟨J'(w), w⟩, evaluated as a directional derivative.
            psi = psi.max(pb.directional_derivative(&w, &w, Variant::Full).abs() / (1.0 + norm));
            formulas = formulas.max(rel(report.energy_a, report.energy_b));
            energy = energy.max(rel(pb.energy(&w), report.energy_a));
            // d²/dt² J(t w) at t = 1 by central differences.
            let h = 1e-3;
            let j = |t: f64| pb.energy(&w.scaled(t));
            curv = curv.max((j(1.0 + h) - 2.0 * j(1.0) + j(1.0 - h)) / (h * h) / norm);
        }
    }
    verdict(
        psi < 1e-10 && formulas < 1e-9 && energy < 1e-9 && curv < 0.0,
        format!("|Ψ|/(1+‖w‖²) {psi:.2e}, formula gap {formulas:.2e}, energy gap {energy:.2e}, max curvature/‖w‖² {curv:.3}"),
    )
}

fn decoupled_ground() -> Verdict {
    let mut worst = 0.0f64;
    for (n, f1, f2) in [(4, 0.3, 0.6), (5, 0.6, 0.3)] {
        let pb = problem(n, f1, f2, 0.0);
        let nf = n as f64;
        let expected = level(nf, pb.spec().lam1).min(level(nf, pb.spec().lam2));
        let g = ground_state(&pb, &GroundInit::MultiStart).unwrap();
        worst = worst.max(rel(g.energy, expected));
    }
    verdict(worst < 1e-4, format!("max relative error {worst:.2e} at N=4 and N=5"))
}

/// `ν̄` from a dense pencil assembled directly from the sine basis:
/// `A = (2/(n+1)) S diag((πk/L)²) S + (Λ - λ1)` and
/// `B = diag(2 e^{(6-N)s/2} z^{λ2}(s))`, with `1/ν̄` the top eigenvalue of
/// `B^{1/2} A^{-1} B^{1/2}`.
fn dense_nu_bar(n: f64, lam1: f64, lam2: f64, grid: &GridSettings) -> f64 {
    let m = grid.points - 2;
    let len = grid.s_max - grid.s_min;
    let sine = DMatrix::from_fn(m, m, |j, k| (PI * ((j + 1) * (k + 1)) as f64 / (m + 1) as f64).sin());
    let eig = DVector::from_fn(m, |k, _| (PI * (k + 1) as f64 / len).powi(2));
    let lap = &sine * DMatrix::from_diagonal(&eig) * &sine * (2.0 / (m + 1) as f64);
    let a = lap + DMatrix::identity(m, m) * (hardy(n) - lam1);
    let a = (&a + a.transpose()) * 0.5;
    let z = Sech::new(n, lam2);
    let root = DVector::from_fn(m, |j, _| {
        let s = grid.s_min + (j + 1) as f64 * grid.step();
        (2.0 * ((6.0 - n) / 2.0 * s).exp() * z.value(s)).sqrt()
    });
    let inv = a.cholesky().expect("A is positive definite").inverse();
    let rb = DMatrix::from_diagonal(&root);
    let op = &rb * inv * &rb;
    1.0 / SymmetricEigen::new((&op + op.transpose()) * 0.5).eigenvalues.max()
}

fn nu_bar_transition() -> Verdict {
    let (lam1, lam2) = (0.3, 0.6);
    let pb = ProblemSpec::new(dim(4), lam1, lam2, 0.0).with_weight(WeightSpec::constant(1.0)).build().unwrap();
    let nb = nu_bar(&pb, 1.0).unwrap();
    let oracle = dense_nu_bar(4.0, lam1, lam2, &GridSettings { points: 401, ..pb.grid().settings() });
    let gap = rel(nb.nu_bar, oracle);
    let below = classify_semitrivial(&pb.with_nu(0.9 * nb.nu_bar).unwrap(), 1.0, 7).unwrap();
    let above_pb = pb.with_nu(1.1 * nb.nu_bar).unwrap();
    let above = classify_semitrivial(&above_pb, 1.0, 7).unwrap();
    // Certify the negative direction (φ_ν̄, 0) with a second variation
    // assembled here: ‖φ‖²_{λ1} - 2ν ω ∫ e^{s} z φ².
    let grid = pb.grid();
    let z = Sech::new(4.0, lam2);
    let phi = &nb.eigenvector;
    let weighted: Vec<f64> = grid.nodes().iter().zip(phi.iter()).map(|(&s, f)| s.exp() * z.value(s) * f * f).collect();
    let q = grid.h1_norm_sq(phi, lam1) - 2.0 * above_pb.nu() * sphere(4.0) * grid.integrate(&weighted);
    verdict(
        gap < 1e-3 && below.character == Character::Minimum && above.character == Character::Saddle && q < 0.0 && above.negative_direction < 0.0,
        format!(
            "ν̄ {:.6e} vs dense oracle {oracle:.6e} (rel {gap:.2e}); 0.9ν̄ {:?}; 1.1ν̄ {:?} with J''[(φ,0)] = {q:.3e}",
            nb.nu_bar, below.character, above.character
        ),
    )
}

fn strong_coupling() -> Verdict {
    let base = problem(4, 0.3, 0.6, 0.0);
    let nb = nu_bar(&base, 1.0).unwrap().nu_bar;
    let pb = base.with_nu(2.0 * nb).unwrap();
    let g = ground_state(&pb, &GroundInit::MultiStart).unwrap();
    let floor = level(4.0, 0.3).min(level(4.0, 0.6));
    let margin = floor - g.energy;
    let (mu, mv) = g.masses;
    verdict(
        margin > 0.0 && mu > 1e-3 && mv > 1e-3 && g.converged,
        format!("energy {:.8} below {floor:.8} by {margin:.3e}; masses ({mu:.3e}, {mv:.3e})", g.energy),
    )
}

fn weak_coupling() -> Verdict {
    let base = problem(4, 0.3, 0.6, 0.0);
    let nb = nu_bar(&base, 1.0).unwrap().nu_bar;
    let pb = base.with_nu(0.01 * nb).unwrap();
    let g = ground_state(&pb, &GroundInit::MultiStart).unwrap();
    let target = level(4.0, 0.6);
    let gap = rel(g.energy, target);
    verdict(gap < 1e-6 && g.masses.0 < 1e-6, format!("energy rel gap {gap:.2e} to (1/N)S^(N/2)(λ2); u mass {:.2e}", g.masses.0))
}

fn mountain() -> Verdict {
    let (lam1, lam2) = (0.5, 0.6);
    // Separability 2^{-2/(N-1)} < (Λ - λ2)/(Λ - λ1).
    let separable = 2f64.powf(-2.0 / 3.0) < (1.0 - lam2) / (1.0 - lam1);
    let base = problem(4, lam1, lam2, 0.0);
    let nb = nu_bar(&base, 1.0).unwrap().nu_bar;
    let pb = base.with_nu(0.1 * nb).unwrap();
    let mp = mountain_pass(&pb, &MpOptions::default()).unwrap();
    let (lo, hi) = (level(4.0, lam1), level(4.0, lam1) + level(4.0, lam2));
    let inside = lo < mp.c_mp && mp.c_mp < hi;
    let state_energy = rel(pb.energy_positive(&mp.critical_state), mp.c_mp);
    let negative = mp.critical_state.wu.iter().chain(mp.critical_state.wv.iter()).fold(0.0f64, |m, &x| m.max(-x)) + 0.0;
    let tg = pb.tangent_gradient_norm(&mp.critical_state, Variant::Positive);
    verdict(
        separable && inside && mp.initial_max <= mp.g_half && tg < 1e-5 && negative < 1e-10 && state_energy < 1e-9,
        format!(
            "c_MP {:.8} in ({lo:.8}, {hi:.8}); initial max {:.6} vs g(1/2) {:.6}; tangent gradient {tg:.2e}; negative part {negative:.1e}",
            mp.c_mp, mp.initial_max, mp.g_half
        ),
    )
}

/// Brute infimum of `Σ_ν = {σ > 0 : A σ^q < σ + Bν σ^{(γ/2) q}}`, `q = (N-2)/N`,
/// on a geometric scan of `[hi·1e-8, hi]`.
fn scan_inf(a: f64, b: f64, gamma: f64, nu: f64, n: f64, hi: f64) -> f64 {
    let q = (n - 2.0) / n;
    let lo = hi * 1e-8;
    let steps = 40000;
    (0..=steps)
        .map(|k| lo * (hi / lo).powf(k as f64 / steps as f64))
        .find(|&s| a * s.powf(q) < s + b * nu * s.powf(gamma / 2.0 * q))
        .unwrap_or(hi)
}

fn sigma_scans() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eps = 0.1;
    let mut lines = Vec::new();
    let mut pass = true;
    for k in 0..5 {
        let n = [3.0, 4.0, 5.0, 6.0, 4.0][k];
        let (a, b, gamma): (f64, f64, f64) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0), rng.random_range(2.0..4.0));
        let reference = a.powf(n / 2.0);
        let hi = 2.0 * reference;
        let zero = rel(scan_inf(a, b, gamma, 0.0, n, hi), reference);
        let nus: Vec<f64> = (1..=400).map(|j| j as f64 * 0.005).collect();
        let threshold = nus.iter().copied().find(|&nu| scan_inf(a, b, gamma, nu, n, hi) <= (1.0 - eps) * reference);
        let Some(threshold) = threshold else {
            pass = false;
            lines.push(format!("no threshold found for A={a:.3}"));
            continue;
        };
        let below: Vec<f64> = nus.iter().copied().filter(|&nu| nu < threshold).collect();
        let brute_ok = below.iter().all(|&nu| scan_inf(a, b, gamma, nu, n, hi) > (1.0 - eps) * reference);
        let library_ok = below.iter().all(|&nu| {
            let s = sigma_inf(a, b, gamma, nu, dim(n as i64), eps).unwrap();
            s.bound_holds && rel(s.inf_sigma, scan_inf(a, b, gamma, nu, n, hi)) < 1e-3
        }) && sigma_inf(a, b, gamma, 0.0, dim(n as i64), eps).unwrap().inf_sigma == reference;
        pass &= zero < 1e-3 && brute_ok && library_ok && !below.is_empty();
        lines.push(format!("threshold {threshold:.3}"));
    }
    verdict(pass, format!("5 triples, scan-found thresholds [{}]", lines.join(", ")))
}

fn hardy_inequality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..50 {
        let n = DIMS[k % 4];
        let grid = desk(4001).build(dim(n)).unwrap();
        let w = random_field(&grid, &mut rng, 10.0);
        let cap = hardy(n as f64);
        let lam = rng.random_range(0.0..cap);
        let lhs = grid.h1_norm_sq(&w, lam);
        let rhs = (1.0 - lam / cap) * grid.h1_norm_sq(&w, 0.0);
        worst = worst.max((rhs - lhs) / rhs);
    }
    verdict(worst <= 1e-14, format!("largest (rhs - lhs)/rhs over 50 fields {worst:.2e}"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("terracini residual", terracini_residual),
        ("norm identity", norm_identity),
        ("energy levels", energy_levels),
        ("gradient correctness", gradients),
        ("nehari projection", nehari),
        ("decoupled ground state", decoupled_ground),
        ("coupling threshold transition", nu_bar_transition),
        ("strong coupling regime", strong_coupling),
        ("weak coupling regime", weak_coupling),
        ("mountain pass bracket", mountain),
        ("sigma infimum scans", sigma_scans),
        ("hardy inequality", hardy_inequality),
    ];
    let results: Vec<(usize, &str, Verdict, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = criteria
            .iter()
            .enumerate()
            .map(|(k, (name, check))| {
                scope.spawn(move || {
                    let t = Instant::now();
                    let v = check();
                    (k + 1, *name, v, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    for (k, name, v, secs) in &results {
        println!("criterion {k}: {} {name}: {} ({secs:.1}s)", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria pass", results.len());
}
