//! Character of the semi-trivial pair `(0, z_μ^{λ2})` on the Nehari manifold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nubar::{nu_bar, NuBarResult};
use crate::ef_grid::{Field, StatePair};
use crate::error::Result;
use crate::functional::{Problem, Slot, Variant};

/// Relative distance `|ν/ν̄ - 1|` below which no verdict is given.
pub const INDETERMINATE_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Character {
    Minimum,
    Saddle,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub character: Character,
    pub nu: f64,
    pub nu_bar: f64,
    /// `ν/ν̄ - 1`.
    pub margin: f64,
    /// Smallest `J''[φ]² / ‖φ‖²_D` over the sampled tangent directions.
    pub min_sampled: f64,
    pub samples: usize,
    /// Normalized second variation along `(φ_ν̄, 0)`.
    pub negative_direction: f64,
    /// Normalized second variation along a tangent direction `(0, φ2)`.
    pub positive_direction: f64,
}

fn profile_derivative(problem: &Problem, mu: f64) -> Field {
    let params = *problem.profile(Slot::V);
    let d = 1e-3;
    problem.grid().field_from_fn(|s| {
        let f = |x: f64| params.ef_value(x, mu);
        (8.0 * (f(s + d) - f(s - d)) - (f(s + 2.0 * d) - f(s - 2.0 * d))) / (12.0 * d)
    })
}

/// Project `phi` onto the tangent space at `(0, z)` and remove the
/// translation mode `z'`, along which the decoupled second variation
/// vanishes identically.
fn tangent_part(problem: &Problem, base: &StatePair, zprime: &Field, phi: &StatePair) -> StatePair {
    let normal = problem.psi_gradient(base, Variant::Full);
    let nn = problem.l2_inner(&normal, &normal);
    let mut out = phi.axpy(-problem.l2_inner(&normal, phi) / nn, &normal);
    let g = problem.grid();
    let c = g.dot(&out.wv, zprime) / g.dot(zprime, zprime);
    out.wv = out.wv.axpy(-c, zprime);
    out
}

fn random_bump(problem: &Problem, rng: &mut ChaCha8Rng, center: f64) -> Field {
    let terms: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(-1.0..1.0), center + rng.random_range(-6.0..6.0), rng.random_range(0.5..3.0)))
        .collect();
    problem.grid().field_from_fn(|s| terms.iter().map(|(a, c, w)| a * (-(s - c) * (s - c) / (w * w)).exp()).sum())
}

pub fn normalized_second_variation(problem: &Problem, phi: &StatePair, mu: f64) -> f64 {
    problem.second_variation_semitrivial(phi, mu) / problem.d_norm_sq(phi)
}

pub fn classify_semitrivial(problem: &Problem, mu: f64, seed: u64) -> Result<Classification> {
    let nb = nu_bar(problem, mu)?;
    classify_with(problem, mu, seed, &nb)
}

pub fn classify_with(problem: &Problem, mu: f64, seed: u64, nb: &NuBarResult) -> Result<Classification> {
    let nu = problem.nu();
    let margin = nu / nb.nu_bar - 1.0;
    let base = problem.semitrivial(Slot::V, mu);
    let zprime = profile_derivative(problem, mu);
    let grid = problem.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = mu.ln();

    let eig = StatePair { wu: nb.eigenvector.clone(), wv: grid.zeros() };
    let even = StatePair { wu: grid.zeros(), wv: grid.field_from_fn(|s| (-(s - center) * (s - center) / 4.0).exp()) };
    let mut directions = vec![eig.clone(), tangent_part(problem, &base, &zprime, &even)];
    for k in 0..22 {
        let phi = StatePair { wu: random_bump(problem, &mut rng, center), wv: random_bump(problem, &mut rng, center) };
        let phi = if k % 3 == 0 { StatePair { wu: phi.wu.axpy(1.0, &nb.eigenvector), wv: phi.wv } } else { phi };
        directions.push(tangent_part(problem, &base, &zprime, &phi));
    }
    let values: Vec<f64> = directions.iter().map(|d| normalized_second_variation(problem, d, mu)).collect();
    let min_sampled = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let negative_direction = values[0];
    let positive_direction = values[1];

    let certified = 1e-10;
    let character = if margin.abs() < INDETERMINATE_BAND {
        Character::Indeterminate
    } else if margin < 0.0 {
        if min_sampled > certified {
            Character::Minimum
        } else {
            Character::Indeterminate
        }
    } else if negative_direction < -certified && positive_direction > certified {
        Character::Saddle
    } else {
        Character::Indeterminate
    };
    Ok(Classification {
        character,
        nu,
        nu_bar: nb.nu_bar,
        margin,
        min_sampled,
        samples: directions.len(),
        negative_direction,
        positive_direction,
    })
}
