//! Nonlocal power-law force and stored energy on a horizon table.
//!
//! For a bond (i, j) with relative displacement `du = u_j - u_i` and reference graph
//! distance `d`, the pair force is `κ |du|^(p-2) du / d^(2 + αp)`. The force on vertex
//! `i` sums `k_ij · pair · ΔA_j` over its horizon neighbors, and the stored energy
//! `(κ / 2p) Σ_i Σ_j k_ij |du|^p / d^(2+αp) ΔA_j ΔA_i` is its potential:
//! `ΔA_i K_i = -∂E/∂u_i`.
//!
//! Inner sums run in ascending neighbor order so results are bit-reproducible whether
//! or not the outer loop over vertices is parallel.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::GeodesicTable;
use crate::Vec3;

/// Pairwise elastic modulus k_ij.
#[derive(Debug, Clone, PartialEq)]
pub enum PairModulus {
    Uniform(f64),
    /// Per-bond values keyed by `(min(i, j), max(i, j))`; bonds not listed use `default`.
    PerPair {
        default: f64,
        overrides: HashMap<(usize, usize), f64>,
    },
}

impl PairModulus {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        match self {
            PairModulus::Uniform(k) => *k,
            PairModulus::PerPair { default, overrides } => {
                *overrides.get(&(i.min(j), i.max(j))).unwrap_or(default)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |k: f64| k > 0.0 && k.is_finite();
        match self {
            PairModulus::Uniform(k) if !ok(*k) => Err(Error::param("k_pair", format!("must be positive, got {k}"))),
            PairModulus::PerPair { default, overrides } => {
                if !ok(*default) {
                    return Err(Error::param("k_pair", format!("default must be positive, got {default}")));
                }
                match overrides.iter().find(|(_, &k)| !ok(k)) {
                    Some(((i, j), k)) => Err(Error::param("k_pair", format!("bond ({i}, {j}) has modulus {k}"))),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

/// Mass density ρ_i.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Uniform(f64),
    PerVertex(Vec<f64>),
}

impl Density {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Density::Uniform(r) => *r,
            Density::PerVertex(r) => r[i],
        }
    }

    /// The uniform value, or the smallest per-vertex value.
    pub fn reference(&self) -> f64 {
        match self {
            Density::Uniform(r) => *r,
            Density::PerVertex(r) => r.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Constitutive parameters of the power-law kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    /// Nonlinearity exponent, p ≥ 2.
    pub p: f64,
    /// Nonlocality exponent, 0 < α < 1.
    pub alpha: f64,
    /// Elastic constant κ > 0.
    pub kappa: f64,
    /// Horizon δ > 0.
    pub delta: f64,
    pub rho: Density,
    pub k_pair: PairModulus,
}

impl KernelParams {
    /// Uniform-density, uniform-modulus parameters (ρ = 1, k = 1).
    pub fn new(p: f64, alpha: f64, kappa: f64, delta: f64) -> Self {
        KernelParams {
            p,
            alpha,
            kappa,
            delta,
            rho: Density::Uniform(1.0),
            k_pair: PairModulus::Uniform(1.0),
        }
    }

    /// Checks parameter ranges; `nv` is the vertex count a per-vertex density must match.
    pub fn validate(&self, nv: usize) -> Result<()> {
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("must satisfy p >= 2, got {}", self.p)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::param("kappa", format!("must be positive, got {}", self.kappa)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::param("delta", format!("must be positive, got {}", self.delta)));
        }
        match &self.rho {
            Density::Uniform(r) if !(*r > 0.0 && r.is_finite()) => {
                return Err(Error::param("rho", format!("must be positive, got {r}")));
            }
            Density::PerVertex(r) => {
                if r.len() != nv {
                    return Err(Error::param("rho", format!("expected {nv} values, got {}", r.len())));
                }
                if let Some((i, v)) = r.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::param("rho", format!("vertex {i} has density {v}")));
                }
            }
            _ => {}
        }
        self.k_pair.validate()
    }

    /// Exponent of the distance in the kernel denominator, 2 + αp.
    pub fn distance_exponent(&self) -> f64 {
        2.0 + self.alpha * self.p
    }
}

/// |du|^(p-2), with integer fast paths. Caller guarantees du ≠ 0.
#[inline]
fn magnitude_factor(du: &Vec3, p: f64) -> f64 {
    let sq = du.norm_squared();
    if p == 2.0 {
        1.0
    } else if p == 3.0 {
        sq.sqrt()
    } else if p == 4.0 {
        sq
    } else if p == 5.0 {
        sq * sq.sqrt()
    } else {
        sq.sqrt().powf(p - 2.0)
    }
}

/// |du|^p, with integer fast paths.
#[inline]
fn magnitude_power(du: &Vec3, p: f64) -> f64 {
    let sq = du.norm_squared();
    if p == 2.0 {
        sq
    } else if p == 3.0 {
        sq * sq.sqrt()
    } else if p == 4.0 {
        sq * sq
    } else if p == 5.0 {
        sq * sq * sq.sqrt()
    } else {
        sq.sqrt().powf(p)
    }
}

#[inline]
fn kernel_with_denominator(du: &Vec3, denominator: f64, kappa: f64, p: f64) -> Vec3 {
    if *du == Vec3::zeros() {
        return Vec3::zeros();
    }
    du * (kappa * magnitude_factor(du, p) / denominator)
}

/// Pair force `κ |du|^(p-2) du / d^(2+αp)` for `du = u_j - u_i`; zero when `du = 0`.
pub fn pair_kernel(du: &Vec3, d: f64, params: &KernelParams) -> Result<Vec3> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("pair distance must be positive, got {d}")));
    }
    Ok(kernel_with_denominator(du, d.powf(params.distance_exponent()), params.kappa, params.p))
}

/// General real-power evaluation of the pair force, bypassing the integer fast paths.
pub fn pair_kernel_general(du: &Vec3, d: f64, params: &KernelParams) -> Result<Vec3> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("pair distance must be positive, got {d}")));
    }
    if *du == Vec3::zeros() {
        return Ok(Vec3::zeros());
    }
    let factor = du.norm().powf(params.p - 2.0);
    Ok(du * (params.kappa * factor / d.powf(params.distance_exponent())))
}

/// Per-bond constants aligned with the entries of a [`GeodesicTable`].
///
/// Holds `d^(2+αp)` and `k_ij · ΔA_j` for every stored (i, j), so repeated force and
/// energy evaluations skip the `powf` and modulus lookups. Results are bit-identical to
/// [`assemble_force`] and [`potential_energy`].
#[derive(Debug, Clone)]
pub struct BondSet<'a> {
    table: &'a GeodesicTable,
    areas: &'a [f64],
    kappa: f64,
    p: f64,
    denominators: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> BondSet<'a> {
    pub fn new(table: &'a GeodesicTable, areas: &'a [f64], params: &KernelParams) -> Result<Self> {
        check_inputs(table, areas, params)?;
        let exponent = params.distance_exponent();
        let mut denominators = Vec::with_capacity(table.num_entries());
        let mut weights = Vec::with_capacity(table.num_entries());
        for i in 0..table.num_vertices() {
            let (idx, dist) = table.neighbors(i);
            for (&j, &d) in idx.iter().zip(dist) {
                if !(d > 0.0) {
                    return Err(Error::Domain(format!("bond ({i}, {j}) has distance {d}")));
                }
                denominators.push(d.powf(exponent));
                weights.push(params.k_pair.value(i, j) * areas[j]);
            }
        }
        Ok(BondSet {
            table,
            areas,
            kappa: params.kappa,
            p: params.p,
            denominators,
            weights,
        })
    }

    pub fn table(&self) -> &GeodesicTable {
        self.table
    }

    pub fn areas(&self) -> &[f64] {
        self.areas
    }

    fn force_at(&self, i: usize, u: &[Vec3]) -> Vec3 {
        let (idx, _) = self.table.neighbors(i);
        let base = self.table.row_offset(i);
        let mut acc = Vec3::zeros();
        for (k, &j) in idx.iter().enumerate() {
            let du = u[j] - u[i];
            acc += kernel_with_denominator(&du, self.denominators[base + k], self.kappa, self.p) * self.weights[base + k];
        }
        acc
    }

    fn energy_density_at(&self, i: usize, u: &[Vec3]) -> f64 {
        let (idx, _) = self.table.neighbors(i);
        let base = self.table.row_offset(i);
        let mut acc = 0.0;
        for (k, &j) in idx.iter().enumerate() {
            let du = u[j] - u[i];
            acc += magnitude_power(&du, self.p) / self.denominators[base + k] * self.weights[base + k];
        }
        acc * (self.kappa / (2.0 * self.p))
    }

    /// K_i for every vertex.
    pub fn forces(&self, u: &[Vec3]) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); u.len()];
        self.forces_into(u, &mut out);
        out
    }

    /// K_i for every vertex, written into `out`.
    pub fn forces_into(&self, u: &[Vec3], out: &mut [Vec3]) {
        assert_eq!(u.len(), self.table.num_vertices());
        out.par_iter_mut()
            .enumerate()
            .for_each(|(i, k)| *k = self.force_at(i, u));
    }

    /// Per-vertex potential energy density (energy per unit area).
    pub fn energy_densities(&self, u: &[Vec3]) -> Vec<f64> {
        assert_eq!(u.len(), self.table.num_vertices());
        (0..u.len())
            .into_par_iter()
            .map(|i| self.energy_density_at(i, u))
            .collect()
    }

    /// Total stored energy, `Σ_i ΔA_i e_i` summed in vertex order.
    pub fn potential_energy(&self, u: &[Vec3]) -> f64 {
        self.energy_densities(u)
            .iter()
            .zip(self.areas)
            .map(|(e, a)| e * a)
            .sum()
    }
}

fn check_inputs(table: &GeodesicTable, areas: &[f64], params: &KernelParams) -> Result<()> {
    params.validate(table.num_vertices())?;
    if areas.len() != table.num_vertices() {
        return Err(Error::Domain(format!(
            "area list has {} entries for {} vertices",
            areas.len(),
            table.num_vertices()
        )));
    }
    if table.horizon().to_bits() != params.delta.to_bits() {
        return Err(Error::Domain(format!(
            "table horizon {} differs from kernel horizon {}",
            table.horizon(),
            params.delta
        )));
    }
    Ok(())
}

/// K_i = Σ_j k_ij · pair_kernel(u_j − u_i, d_ij) · ΔA_j for every vertex.
pub fn assemble_force(u: &[Vec3], table: &GeodesicTable, areas: &[f64], params: &KernelParams) -> Result<Vec<Vec3>> {
    check_u(u, table)?;
    Ok(BondSet::new(table, areas, params)?.forces(u))
}

/// Discrete stored energy, counting every ordered pair once.
pub fn potential_energy(u: &[Vec3], table: &GeodesicTable, areas: &[f64], params: &KernelParams) -> Result<f64> {
    check_u(u, table)?;
    Ok(BondSet::new(table, areas, params)?.potential_energy(u))
}

fn check_u(u: &[Vec3], table: &GeodesicTable) -> Result<()> {
    if u.len() != table.num_vertices() {
        return Err(Error::Domain(format!(
            "displacement has {} entries for {} vertices",
            u.len(),
            table.num_vertices()
        )));
    }
    if let Some(v) = u.iter().position(|x| !x.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite { vertex: v });
    }
    Ok(())
}

/// Right-hand side `(K_i + b_i) / ρ_i` of the semi-discrete equations of motion.
#[derive(Debug, Clone)]
pub struct PeridynamicForces<'a> {
    bonds: BondSet<'a>,
    rho: Density,
    body_force: Option<Vec<Vec3>>,
}

impl<'a> PeridynamicForces<'a> {
    pub fn new(table: &'a GeodesicTable, areas: &'a [f64], params: &KernelParams) -> Result<Self> {
        Ok(PeridynamicForces {
            bonds: BondSet::new(table, areas, params)?,
            rho: params.rho.clone(),
            body_force: None,
        })
    }

    /// Adds a time-independent body force density b_i.
    pub fn with_body_force(mut self, b: Vec<Vec3>) -> Result<Self> {
        if b.len() != self.bonds.table().num_vertices() {
            return Err(Error::Domain(format!(
                "body force has {} entries for {} vertices",
                b.len(),
                self.bonds.table().num_vertices()
            )));
        }
        self.body_force = Some(b);
        Ok(self)
    }

    pub fn bonds(&self) -> &BondSet<'a> {
        &self.bonds
    }

    pub fn body_force(&self) -> Option<&[Vec3]> {
        self.body_force.as_deref()
    }
}

impl crate::integrator::AccelerationField for PeridynamicForces<'_> {
    fn acceleration(&self, u: &[Vec3], _t: f64, out: &mut [Vec3]) -> Result<()> {
        self.bonds.forces_into(u, out);
        for (i, a) in out.iter_mut().enumerate() {
            if let Some(b) = &self.body_force {
                *a += b[i];
            }
            *a /= self.rho.at(i);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::{build_geodesic_table, MeshGraph};

    fn two_vertex_table(d: f64, delta: f64) -> GeodesicTable {
        let g = MeshGraph::from_adjacency(vec![vec![(1, d)], vec![(0, d)]]).unwrap();
        build_geodesic_table(&g, delta).unwrap()
    }

    #[test]
    fn kernel_zero_displacement() {
        for p in [2.0, 2.5, 3.0, 5.0] {
            let params = KernelParams::new(p, 0.5, 1.0, 1.0);
            assert_eq!(pair_kernel(&Vec3::zeros(), 0.3, &params).unwrap(), Vec3::zeros());
        }
    }

    #[test]
    fn kernel_hand_values() {
        for alpha in [0.0001, 0.3, 0.999] {
            let params = KernelParams::new(3.0, alpha, 1.0, 2.0);
            let f = pair_kernel(&Vec3::new(0.0, 2.0, 0.0), 1.0, &params).unwrap();
            assert_eq!(f, Vec3::new(0.0, 4.0, 0.0));
        }
        let params = KernelParams::new(2.0, 0.5, 1.0, 1.0);
        let f = pair_kernel(&Vec3::new(1.0, 0.0, 0.0), 0.5, &params).unwrap();
        assert!((f - Vec3::new(8.0, 0.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn kernel_rejects_non_positive_distance() {
        let params = KernelParams::new(2.0, 0.5, 1.0, 1.0);
        assert!(matches!(pair_kernel(&Vec3::x(), 0.0, &params), Err(Error::Domain(_))));
        assert!(pair_kernel(&Vec3::x(), -1.0, &params).is_err());
    }

    #[test]
    fn fast_paths_agree_with_general_power() {
        let du = Vec3::new(0.37, -1.21, 0.05);
        for p in [2.0, 3.0, 4.0, 5.0] {
            let params = KernelParams::new(p, 0.7, 1.3, 1.0);
            let fast = pair_kernel(&du, 0.42, &params).unwrap();
            let general = pair_kernel_general(&du, 0.42, &params).unwrap();
            assert!((fast - general).norm() <= 1e-14 * general.norm(), "p = {p}");
            let e_fast = magnitude_power(&du, p);
            let e_general = du.norm().powf(p);
            assert!((e_fast - e_general).abs() <= 1e-14 * e_general);
        }
    }

    #[test]
    fn two_vertex_force_and_energy() {
        let table = two_vertex_table(1.0, 1.5);
        let mut params = KernelParams::new(2.0, 0.5, 1.0, 1.5);
        params.k_pair = PairModulus::Uniform(1.0);
        let areas = [1.0, 1.0];
        let u = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let k = assemble_force(&u, &table, &areas, &params).unwrap();
        assert_eq!(k, vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)]);
        let e = potential_energy(&u, &table, &areas, &params).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        let dens = BondSet::new(&table, &areas, &params).unwrap().energy_densities(&u);
        assert_eq!(dens, vec![0.25, 0.25]);
    }

    #[test]
    fn constant_displacement_is_equilibrium() {
        let m = crate::mesh::generate_icosphere(1, 1.0).unwrap();
        let table = build_geodesic_table(&MeshGraph::from_mesh(&m), 0.8).unwrap();
        let params = KernelParams::new(3.0, 0.5, 1.0, 0.8);
        for c in [Vec3::zeros(), Vec3::new(0.3, -2.0, 7.5)] {
            let u = vec![c; m.num_vertices()];
            let k = assemble_force(&u, &table, m.vertex_areas(), &params).unwrap();
            assert!(k.iter().all(|f| *f == Vec3::zeros()));
            assert_eq!(potential_energy(&u, &table, m.vertex_areas(), &params).unwrap(), 0.0);
        }
    }

    #[test]
    fn per_pair_modulus_scales_bond() {
        let table = two_vertex_table(1.0, 1.5);
        let mut params = KernelParams::new(2.0, 0.5, 1.0, 1.5);
        params.k_pair = PairModulus::PerPair {
            default: 1.0,
            overrides: HashMap::from([((0, 1), 3.0)]),
        };
        let u = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let k = assemble_force(&u, &table, &[1.0, 1.0], &params).unwrap();
        assert_eq!(k[0], Vec3::new(3.0, 0.0, 0.0));
        assert!((potential_energy(&u, &table, &[1.0, 1.0], &params).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn parameter_validation() {
        assert!(KernelParams::new(2.0, 0.5, 1.0, 0.5).validate(1).is_ok());
        for bad in [
            KernelParams::new(1.5, 0.5, 1.0, 0.5),
            KernelParams::new(2.0, 0.0, 1.0, 0.5),
            KernelParams::new(2.0, 1.0, 1.0, 0.5),
            KernelParams::new(2.0, 0.5, 0.0, 0.5),
            KernelParams::new(2.0, 0.5, 1.0, -0.5),
        ] {
            assert!(matches!(bad.validate(1), Err(Error::InvalidParameter { .. })));
        }
        let mut p = KernelParams::new(2.0, 0.5, 1.0, 0.5);
        p.rho = Density::PerVertex(vec![1.0, 0.0]);
        assert!(p.validate(2).is_err());
        p.rho = Density::PerVertex(vec![1.0]);
        assert!(p.validate(2).is_err());
        p.rho = Density::Uniform(1.0);
        p.k_pair = PairModulus::Uniform(-1.0);
        assert!(p.validate(2).is_err());
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let table = two_vertex_table(1.0, 1.5);
        let params = KernelParams::new(2.0, 0.5, 1.0, 1.0);
        let u = [Vec3::zeros(); 2];
        assert!(assemble_force(&u, &table, &[1.0, 1.0], &params).is_err());
    }

    #[test]
    fn body_force_and_density_enter_acceleration() {
        use crate::integrator::AccelerationField;
        let table = two_vertex_table(1.0, 1.5);
        let mut params = KernelParams::new(2.0, 0.5, 1.0, 1.5);
        params.rho = Density::PerVertex(vec![2.0, 4.0]);
        let areas = [1.0, 1.0];
        let model = PeridynamicForces::new(&table, &areas, &params)
            .unwrap()
            .with_body_force(vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)])
            .unwrap();
        let u = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let mut a = [Vec3::zeros(); 2];
        model.acceleration(&u, 0.0, &mut a).unwrap();
        assert_eq!(a[0], Vec3::new(0.5, 0.0, 0.5));
        assert_eq!(a[1], Vec3::new(-0.25, 0.0, -0.25));
    }
}
