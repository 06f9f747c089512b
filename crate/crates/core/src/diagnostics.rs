//! Observables tracked during a run: energies, the energy bound, surface stretch and
//! per-vertex energy densities.

use std::fmt::Write as _;

use crate::integrator::State;
use crate::mesh::{deformed_area, Mesh};
use crate::operator::{BondSet, Density};
use crate::Vec3;

/// One row of the diagnostics time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    pub e_kin: f64,
    pub e_pot: f64,
    pub e_total: f64,
    /// Upper bound on `e_total` implied by the initial energy and the work of the load.
    pub dissipation_bound: f64,
    pub delta_s: f64,
    /// Corrector passes used by the step that produced this record (0 at t = 0).
    pub iterations: usize,
    pub residual: f64,
}

pub const CSV_HEADER: &str = "t,e_kin,e_pot,e_total,bound,delta_s,iterations,residual";

impl EnergyRecord {
    /// CSV row with 17 significant digits per float.
    pub fn csv_row(&self) -> String {
        let mut s = String::with_capacity(200);
        for x in [self.t, self.e_kin, self.e_pot, self.e_total, self.dissipation_bound, self.delta_s] {
            write!(s, "{x:.16e},").unwrap();
        }
        write!(s, "{},{:.16e}", self.iterations, self.residual).unwrap();
        s
    }

    /// Parses a row produced by [`EnergyRecord::csv_row`].
    pub fn from_csv_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return None;
        }
        let num = |k: usize| f[k].parse::<f64>().ok();
        Some(EnergyRecord {
            t: num(0)?,
            e_kin: num(1)?,
            e_pot: num(2)?,
            e_total: num(3)?,
            dissipation_bound: num(4)?,
            delta_s: num(5)?,
            iterations: f[6].parse().ok()?,
            residual: num(7)?,
        })
    }
}

/// Per-vertex energy densities (energy per unit area).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub e_kin_density: Vec<f64>,
    pub e_pot_density: Vec<f64>,
}

/// `(ρ_i / 2) |v_i|^2` per vertex.
pub fn kinetic_densities(v: &[Vec3], rho: &Density) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(i, vi)| 0.5 * rho.at(i) * vi.norm_squared())
        .collect()
}

/// `Σ_i ΔA_i x_i`, summed in vertex order.
pub fn area_integral(density: &[f64], areas: &[f64]) -> f64 {
    density.iter().zip(areas).map(|(e, a)| e * a).sum()
}

/// `Σ_i (ρ_i / 2) |v_i|^2 ΔA_i`.
pub fn kinetic_energy(v: &[Vec3], areas: &[f64], rho: &Density) -> f64 {
    area_integral(&kinetic_densities(v, rho), areas)
}

/// Kinetic and potential densities of a state. Their area integrals are exactly the
/// scalar energies reported by [`kinetic_energy`] and [`BondSet::potential_energy`].
pub fn energy_densities(state: &State, bonds: &BondSet<'_>, rho: &Density) -> DensityField {
    DensityField {
        e_kin_density: kinetic_densities(&state.v, rho),
        e_pot_density: bonds.energy_densities(&state.u),
    }
}

/// Relative change of the total surface area, `(S(u) - S(0)) / S(0)`.
pub fn surface_stretch(mesh: &Mesh, u: &[Vec3]) -> f64 {
    let s0 = mesh.total_area();
    (deformed_area(mesh, u) - s0) / s0
}

/// Running form of the energy bound `(√E0 + (1/√(2ρ)) ∫ ||b||_L2 dt)^2`, with the time
/// integral accumulated by the trapezoidal rule.
#[derive(Debug, Clone)]
pub struct DissipationBound {
    e0: f64,
    sqrt_e0: f64,
    prefactor: f64,
    integral: f64,
    last_norm: f64,
}

impl DissipationBound {
    /// `rho_ref` is the uniform density, or the minimum density when it varies.
    pub fn new(e0: f64, rho_ref: f64, initial_load_norm: f64) -> Self {
        DissipationBound {
            e0,
            sqrt_e0: e0.max(0.0).sqrt(),
            prefactor: 1.0 / (2.0 * rho_ref).sqrt(),
            integral: 0.0,
            last_norm: initial_load_norm,
        }
    }

    /// Advances the integral over a step of length `dt` ending with load norm `norm`.
    pub fn advance(&mut self, dt: f64, norm: f64) {
        self.integral += 0.5 * dt * (self.last_norm + norm);
        self.last_norm = norm;
    }

    pub fn value(&self) -> f64 {
        if self.integral == 0.0 {
            return self.e0;
        }
        let r = self.sqrt_e0 + self.prefactor * self.integral;
        r * r
    }
}

/// Energy bound at the end of a sampled load history of `(t, ||b(t)||)` pairs.
pub fn dissipation_bound(e0: f64, b_history: &[(f64, f64)], rho_ref: f64) -> f64 {
    let first = b_history.first().map_or(0.0, |&(_, n)| n);
    let mut bound = DissipationBound::new(e0, rho_ref, first);
    for w in b_history.windows(2) {
        bound.advance(w[1].0 - w[0].0, w[1].1);
    }
    bound.value()
}
