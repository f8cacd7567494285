//! Structural invariants: projection, symmetry, monotonicity and
//! reproducibility of batch output.

use nehari_core::emit::to_jsonlines;
use nehari_core::solvers::{ground_state, mountain_pass, nu_bar, GroundInit, MpOptions};
use nehari_core::{run_scenario, Dimension, GridSettings, Problem, ProblemSpec, Scenario, Slot, StatePair, Variant};
use proptest::prelude::*;

fn problem(n: i64, f1: f64, f2: f64, nu: f64, points: usize) -> Problem {
    let d = Dimension::new(n).unwrap();
    let cap = d.hardy_constant();
    ProblemSpec::new(d, f1 * cap, f2 * cap, nu).with_grid(GridSettings { points, ..GridSettings::default() }).build().unwrap()
}

fn bump_state(p: &Problem, a: (f64, f64, f64), b: (f64, f64, f64)) -> StatePair {
    let g = p.grid();
    let bump = |(amp, c, w): (f64, f64, f64)| g.field_from_fn(move |s| amp * (-(s - c) * (s - c) / (w * w)).exp());
    StatePair { wu: bump(a), wv: bump(b) }
}

fn bump() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.1f64..2.0, -4.0f64..4.0, 0.5f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_lands_on_the_manifold(n in 3i64..=6, a in bump(), b in bump(), nu in 0.0f64..2.0) {
        let p = problem(n, 0.3, 0.6, nu, 1001);
        let (w, report) = p.nehari_project(&bump_state(&p, a, b), Variant::Full).unwrap();
        prop_assert!(report.psi.abs() <= 1e-10 * (1.0 + report.norm_sq));
        // The projection is idempotent.
        let (_, again) = p.nehari_project(&w, Variant::Full).unwrap();
        prop_assert!((again.t - 1.0).abs() < 1e-9);
        prop_assert!(p.ray_curvature(&w, Variant::Full) < 0.0);
    }

    #[test]
    fn decoupled_energy_is_translation_invariant(n in 3i64..=6, a in bump(), b in bump(), shift in -20isize..20) {
        let p = problem(n, 0.3, 0.6, 0.0, 1001);
        let w = bump_state(&p, a, b);
        let e0 = p.energy(&w);
        let e1 = p.energy(&w.shifted(shift));
        prop_assert!((e0 - e1).abs() <= 1e-10 * e0.abs().max(1.0));
    }

    #[test]
    fn energy_is_even_in_the_first_component(n in 3i64..=6, a in bump(), b in bump(), nu in 0.0f64..2.0) {
        let p = problem(n, 0.3, 0.6, nu, 1001);
        let w = bump_state(&p, a, b);
        let flipped = StatePair { wu: w.wu.scaled(-1.0), wv: w.wv.clone() };
        prop_assert!((p.energy(&w) - p.energy(&flipped)).abs() <= 1e-12 * p.energy(&w).abs().max(1.0));
    }

    #[test]
    fn semitrivial_energy_does_not_depend_on_mu(n in 3i64..=6, log_mu in -2.0f64..2.0) {
        let p = problem(n, 0.3, 0.6, 0.5, 2001);
        let e = p.energy(&p.semitrivial(Slot::V, log_mu.exp()));
        prop_assert!((e - p.levels().level2).abs() < 1e-8 * p.levels().level2);
    }
}

#[test]
fn descent_history_is_nonincreasing() {
    let p = problem(4, 0.3, 0.6, 0.0, 2001);
    let nb = nu_bar(&p, 1.0).unwrap().nu_bar;
    for ratio in [0.5, 2.0] {
        let g = ground_state(&p.with_nu(ratio * nb).unwrap(), &GroundInit::Balanced).unwrap();
        assert!(g.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "ratio {ratio}");
    }
}

#[test]
fn ground_level_is_nonincreasing_in_coupling() {
    let p = problem(4, 0.3, 0.6, 0.0, 2001);
    let nb = nu_bar(&p, 1.0).unwrap().nu_bar;
    let energies: Vec<f64> = [0.0, 0.5, 1.5, 2.0, 4.0]
        .iter()
        .map(|r| ground_state(&p.with_nu(r * nb).unwrap(), &GroundInit::MultiStart).unwrap().energy)
        .collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{energies:?}");
    assert!(energies[4] < energies[0]);
}

#[test]
fn mountain_pass_upper_bounds_decrease() {
    let p = problem(4, 0.5, 0.6, 0.0, 1001);
    let nb = nu_bar(&p, 1.0).unwrap().nu_bar;
    let mp = mountain_pass(&p.with_nu(0.1 * nb).unwrap(), &MpOptions { nodes: 17, ..MpOptions::default() }).unwrap();
    assert!(mp.upper_bounds.windows(2).all(|w| w[1] <= w[0]));
    assert!(mp.c_mp <= *mp.upper_bounds.last().unwrap() + 1e-9);
    assert!(mp.initial_max >= *mp.upper_bounds.last().unwrap() - 1e-9);
}

#[test]
fn batch_output_is_byte_identical_and_ordered() {
    let text = r#"
        id = "batch"
        command = "sweep"
        N = 4
        lambda1 = 0.3
        lambda2 = 0.6
        grid.points = 1001
        sweep.param = "nu_over_nubar"
        sweep.values = [2.0, 0.5, 1.5]
        sweep.command = "ground"
    "#;
    let scenario = Scenario::parse(text).unwrap();
    let (a, _) = run_scenario(&scenario).unwrap();
    let (b, _) = run_scenario(&scenario).unwrap();
    assert_eq!(to_jsonlines(&a), to_jsonlines(&b));
    let ids: Vec<&str> = a.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["batch.000", "batch.001", "batch.002"]);
    assert!(a.iter().all(|r| r.command == nehari_core::Command::Ground));
}

#[test]
fn shipped_scenarios_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path).unwrap();
            let scenario = Scenario::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            scenario.expand().unwrap();
            count += 1;
        }
    }
    assert!(count >= 10);
}
