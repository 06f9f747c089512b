//! Experiment driver: builds the mesh and horizon table, sets up initial conditions and
//! loads, runs the time loop and writes diagnostics, snapshots and a run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{ConfigMap, ExperimentConfig, ExperimentKind, MeshSource};
use crate::diagnostics::{self, DissipationBound, EnergyRecord, CSV_HEADER};
use crate::error::{Error, Result};
use crate::geodesic::{self, GeodesicTable, MeshGraph};
use crate::integrator::{self, State};
use crate::mesh::{self, Mesh};
use crate::operator::PeridynamicForces;
use crate::vtk;
use crate::Vec3;

pub const CSV_FILE: &str = "diagnostics.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    /// The corrector failed to converge while computing step `step`.
    NonConvergence { step: usize },
    /// A non-finite value appeared while computing step `step`.
    NanDetected { step: usize },
}

impl Termination {
    pub fn describe(&self) -> String {
        match self {
            Termination::Completed => "completed".into(),
            Termination::NonConvergence { step } => format!("non_convergence at step {step}"),
            Termination::NanDetected { step } => format!("nan_detected at step {step}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<EnergyRecord>,
    pub snapshots: Vec<PathBuf>,
    pub termination: Termination,
    /// Loaded vertices at the (north, south) pole for uniaxial runs.
    pub loaded_vertices: Option<(usize, usize)>,
    pub num_vertices: usize,
    /// Number of bonds (unordered interacting pairs).
    pub num_bonds: usize,
    pub steps_taken: usize,
    pub wall_seconds: f64,
}

impl RunResult {
    pub fn max_iterations(&self) -> usize {
        self.records.iter().map(|r| r.iterations).max().unwrap_or(0)
    }
}

/// Uniform samples from the solid ball of radius `magnitude`, one per vertex.
///
/// Uses ChaCha20 seeded from a 64-bit seed; each component is drawn as
/// `2 · (next_u64 >> 11) · 2^-53 − 1` and points outside the unit ball are rejected, so
/// the field is identical on every platform.
pub fn init_random_velocity(mesh: &Mesh, magnitude: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut unit = || 2.0 * ((rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)) - 1.0;
    (0..mesh.num_vertices())
        .map(|_| loop {
            let p = Vec3::new(unit(), unit(), unit());
            if p.norm_squared() <= 1.0 {
                break p * magnitude;
            }
        })
        .collect()
}

/// Constant body force along z applied near the two poles.
#[derive(Debug, Clone, PartialEq)]
pub struct UniaxialLoad {
    pub forces: Vec<Vec3>,
    pub north_count: usize,
    pub south_count: usize,
}

/// Mean distance of the vertices from the origin; the sphere radius for icospheres.
pub fn mean_radius(mesh: &Mesh) -> f64 {
    mesh.positions().iter().map(|x| x.norm()).sum::<f64>() / mesh.num_vertices() as f64
}

/// `+magnitude ẑ` on vertices within `tolerance` of `(0, 0, R)`, `-magnitude ẑ` within
/// `tolerance` of `(0, 0, -R)`, zero elsewhere. A vertex close to both poles goes to the
/// nearer one and gets no load on an exact tie. The selection is purely geometric.
pub fn init_uniaxial_load(mesh: &Mesh, magnitude: f64, tolerance: f64) -> Result<UniaxialLoad> {
    if !(magnitude >= 0.0) {
        return Err(Error::param("load", format!("must be non-negative, got {magnitude}")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::param("load_tolerance", format!("must be positive, got {tolerance}")));
    }
    let r = mean_radius(mesh);
    let north = Vec3::new(0.0, 0.0, r);
    let south = Vec3::new(0.0, 0.0, -r);
    let (mut north_count, mut south_count) = (0, 0);
    let forces = mesh
        .positions()
        .iter()
        .map(|x| {
            let dn = (x - north).norm();
            let ds = (x - south).norm();
            let near_n = dn <= tolerance;
            let near_s = ds <= tolerance;
            if near_n && (!near_s || dn < ds) {
                north_count += 1;
                Vec3::new(0.0, 0.0, magnitude)
            } else if near_s && (!near_n || ds < dn) {
                south_count += 1;
                Vec3::new(0.0, 0.0, -magnitude)
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    if north_count == 0 || south_count == 0 {
        return Err(Error::param(
            "load_tolerance",
            format!(
                "selects {north_count} vertices near the north pole and {south_count} near the south pole; both must be non-empty"
            ),
        ));
    }
    Ok(UniaxialLoad {
        forces,
        north_count,
        south_count,
    })
}

pub fn build_mesh(source: &MeshSource) -> Result<Mesh> {
    match source {
        MeshSource::Off(path) => mesh::load_off(path),
        MeshSource::Icosphere { level, radius } => mesh::generate_icosphere(*level, *radius),
    }
}

/// Builds the horizon table, or reuses a cache file that matches the mesh and horizon.
pub fn build_table(mesh: &Mesh, delta: f64, cache: Option<&Path>) -> Result<GeodesicTable> {
    let hash = mesh.content_hash();
    if let Some(path) = cache {
        if path.exists() {
            match geodesic::read_table_cache(path, &hash, delta) {
                Ok(table) => {
                    log::info!("reusing geodesic table from {}", path.display());
                    return Ok(table);
                }
                Err(e) => log::warn!("ignoring geodesic cache {}: {e}", path.display()),
            }
        }
    }
    let table = geodesic::build_geodesic_table(&MeshGraph::from_mesh(mesh), delta)?;
    if let Some(path) = cache {
        geodesic::write_table_cache(&table, &hash, path)?;
    }
    Ok(table)
}

/// Runs an experiment end to end.
pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    let mesh = build_mesh(&config.mesh)?;
    let table = build_table(&mesh, config.params.delta, config.table_cache.as_deref())?;
    run_prepared(config, &mesh, &table)
}

struct Outputs {
    dir: PathBuf,
    csv: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CSV_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut csv = BufWriter::new(file);
        writeln!(csv, "{CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(Outputs { dir: dir.to_path_buf(), csv })
    }

    fn record(&mut self, r: &EnergyRecord) -> Result<()> {
        writeln!(self.csv, "{}", r.csv_row()).map_err(|e| Error::io(self.dir.join(CSV_FILE), e))
    }
}

/// Runs an experiment on an already built mesh and table.
pub fn run_prepared(config: &ExperimentConfig, mesh: &Mesh, table: &GeodesicTable) -> Result<RunResult> {
    config.validate()?;
    config.integrator.validate()?;
    let params = &config.params;
    params.validate(mesh.num_vertices())?;
    if table.num_vertices() != mesh.num_vertices() {
        return Err(Error::Domain("geodesic table does not match the mesh".into()));
    }
    let started = Instant::now();
    let nv = mesh.num_vertices();
    let areas = mesh.vertex_areas();

    let mut state = State::at_rest(nv);
    let mut body_force: Option<Vec<Vec3>> = None;
    let mut loaded_vertices = None;
    match config.experiment {
        ExperimentKind::RandomVelocity => {
            state.v = init_random_velocity(mesh, config.v0_magnitude, config.rng_seed);
        }
        ExperimentKind::UniaxialLoad => {
            let load = init_uniaxial_load(mesh, config.load_magnitude, config.load_axis_tolerance)?;
            loaded_vertices = Some((load.north_count, load.south_count));
            body_force = Some(load.forces);
        }
        ExperimentKind::Custom => {
            let c = &config.custom;
            state.u = mesh.positions().iter().map(|x| x * c.u0_radial).collect();
            state.v = vec![c.v0_vector; nv];
            if c.body_force != Vec3::zeros() {
                body_force = Some(vec![c.body_force; nv]);
            }
        }
    }

    let load_norm = body_force
        .as_deref()
        .map_or(0.0, |b| integrator::weighted_l2_norm(b, areas));
    let mut model = PeridynamicForces::new(table, areas, params)?;
    if let Some(b) = body_force {
        model = model.with_body_force(b)?;
    }

    let mut outputs = match &config.out_dir {
        Some(dir) => Some(Outputs::create(dir)?),
        None => None,
    };
    let mut snapshots = Vec::new();
    let mut records = Vec::new();

    let observe = |state: &State, bound: &DissipationBound, iterations: usize, residual: f64| -> EnergyRecord {
        let e_kin = diagnostics::kinetic_energy(&state.v, areas, &params.rho);
        let e_pot = model.bonds().potential_energy(&state.u);
        EnergyRecord {
            t: state.t,
            e_kin,
            e_pot,
            e_total: e_kin + e_pot,
            dissipation_bound: bound.value(),
            delta_s: diagnostics::surface_stretch(mesh, &state.u),
            iterations,
            residual,
        }
    };

    let snapshot = |state: &State, step: usize, snapshots: &mut Vec<PathBuf>| -> Result<()> {
        if let Some(dir) = &config.out_dir {
            let path = dir.join(format!("snapshot_{step:06}.vtk"));
            let dens = diagnostics::energy_densities(state, model.bonds(), &params.rho);
            vtk::write_snapshot(&path, mesh, &state.u, &state.v, &dens, &format!("t = {:?}", state.t))?;
            snapshots.push(path);
        }
        Ok(())
    };

    let mut termination = Termination::Completed;
    let mut steps_taken = 0;

    match integrator::initial_acceleration(&state.u, &model) {
        Ok(a) => state.a = a,
        Err(Error::NonFinite { .. }) => termination = Termination::NanDetected { step: 0 },
        Err(e) => return Err(e),
    }

    let e0 = diagnostics::kinetic_energy(&state.v, areas, &params.rho) + model.bonds().potential_energy(&state.u);
    let mut bound = DissipationBound::new(e0, params.rho.reference(), load_norm);
    let first = observe(&state, &bound, 0, 0.0);
    if let Some(out) = outputs.as_mut() {
        out.record(&first)?;
    }
    records.push(first);
    if config.snapshot_every > 0 {
        snapshot(&state, 0, &mut snapshots)?;
    }

    let n_steps = config.num_steps();
    let dt = config.integrator.dt;
    if termination == Termination::Completed {
        for n in 1..=n_steps {
            let (mut next, report) = match integrator::step(&state, &model, &config.integrator, areas) {
                Ok(ok) => ok,
                Err(Error::NonFinite { .. }) => {
                    termination = Termination::NanDetected { step: n };
                    break;
                }
                Err(Error::NonConvergence { iterations, residual }) => {
                    log::warn!("step {n}: corrector stalled after {iterations} iterations (residual {residual:e})");
                    termination = Termination::NonConvergence { step: n };
                    break;
                }
                Err(e) => return Err(e),
            };
            next.t = n as f64 * dt;
            state = next;
            steps_taken = n;
            bound.advance(dt, load_norm);

            if n % config.record_every == 0 || n == n_steps {
                let rec = observe(&state, &bound, report.iterations, report.final_residual);
                if !(rec.e_total.is_finite() && rec.delta_s.is_finite()) {
                    termination = Termination::NanDetected { step: n };
                    break;
                }
                if let Some(out) = outputs.as_mut() {
                    out.record(&rec)?;
                }
                records.push(rec);
            }
            if config.snapshot_every > 0 && n % config.snapshot_every == 0 {
                snapshot(&state, n, &mut snapshots)?;
            }
        }
    }

    if let Some(mut out) = outputs {
        out.csv.flush().map_err(|e| Error::io(out.dir.join(CSV_FILE), e))?;
        let mut manifest = String::new();
        manifest.push_str("# resolved configuration\n");
        manifest.push_str(&config.to_text());
        manifest.push_str(&format!(
            "# vertices: {nv}\n# bonds: {}\n# steps: {steps_taken} of {n_steps}\n# termination: {}\n",
            table.num_entries() / 2,
            termination.describe()
        ));
        if let Some((north, south)) = loaded_vertices {
            manifest.push_str(&format!("# loaded vertices: {north} north, {south} south\n"));
        }
        let path = out.dir.join(MANIFEST_FILE);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    }

    Ok(RunResult {
        records,
        snapshots,
        termination,
        loaded_vertices,
        num_vertices: nv,
        num_bonds: table.num_entries() / 2,
        steps_taken,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Parses `key=v1,v2,...` into a key and its values.
pub fn parse_vary(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::param(spec, "expected `key=v1,v2,...`"))?;
    let key = key.trim();
    ConfigMap::check_key(key)?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::param(key, "no sweep values given"));
    }
    Ok((key.to_string(), values))
}

/// Cartesian product of the sweep axes applied to `base`. Each variant is named
/// `key1=v1_key2=v2...` in axis order.
pub fn sweep_variants(base: &ConfigMap, axes: &[(String, Vec<String>)]) -> Vec<(String, ConfigMap)> {
    let mut variants = vec![(String::new(), base.clone())];
    for (key, values) in axes {
        let mut next = Vec::with_capacity(variants.len() * values.len());
        for (name, map) in &variants {
            for v in values {
                let mut m = map.clone();
                m.set(key, v);
                let label = if name.is_empty() {
                    format!("{key}={v}")
                } else {
                    format!("{name}_{key}={v}")
                };
                next.push((label, m));
            }
        }
        variants = next;
    }
    variants
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_velocity_zero_magnitude() {
        let m = mesh::generate_icosphere(1, 1.0).unwrap();
        assert!(init_random_velocity(&m, 0.0, 7).iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn random_velocity_is_deterministic_and_bounded() {
        let m = mesh::generate_icosphere(3, 1.0).unwrap();
        let a = init_random_velocity(&m, 0.1, 2024);
        let b = init_random_velocity(&m, 0.1, 2024);
        assert_eq!(a, b);
        assert_ne!(a, init_random_velocity(&m, 0.1, 2025));
        assert!(a.iter().all(|v| v.norm() <= 0.1));
        let mean = a.iter().map(|v| v.norm()).sum::<f64>() / a.len() as f64;
        assert!((0.060..=0.090).contains(&mean), "mean |v| = {mean}");
    }

    #[test]
    fn uniaxial_load_poles() {
        let ico = mesh::generate_icosphere(0, 1.0).unwrap();
        let load = init_uniaxial_load(&ico, 0.01, 0.05).unwrap();
        assert_eq!((load.north_count, load.south_count), (1, 1));
        assert_eq!(load.forces[0], Vec3::new(0.0, 0.0, 0.01));
        assert_eq!(load.forces[11], Vec3::new(0.0, 0.0, -0.01));
        let zero = init_uniaxial_load(&ico, 0.0, 0.05).unwrap();
        assert!(zero.forces.iter().all(|b| *b == Vec3::zeros()));
    }

    #[test]
    fn uniaxial_load_requires_both_poles() {
        let m = mesh::generate_icosphere(1, 1.0).unwrap();
        let off_pole = m.translated(Vec3::new(0.3, 0.0, 0.0)).unwrap();
        assert!(matches!(
            init_uniaxial_load(&off_pole, 0.01, 0.05),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn uniaxial_load_covering_everything_has_zero_net_force() {
        let m = mesh::generate_icosphere(3, 1.0).unwrap();
        let load = init_uniaxial_load(&m, 1.0, 2.5).unwrap();
        let net: Vec3 = load
            .forces
            .iter()
            .zip(m.vertex_areas())
            .map(|(b, a)| b * *a)
            .sum();
        assert!(net.norm() < 1e-10, "net = {net:?}");
    }

    #[test]
    fn uniaxial_selection_ignores_vertex_order() {
        let m = mesh::generate_icosphere(2, 1.0).unwrap();
        let nv = m.num_vertices();
        let perm: Vec<usize> = (0..nv).map(|i| (i * 37 + 11) % nv).collect();
        let mut positions = vec![Vec3::zeros(); nv];
        for (old, &new) in perm.iter().enumerate() {
            positions[new] = m.positions()[old];
        }
        let triangles = m.triangles().iter().map(|t| [perm[t[0]], perm[t[1]], perm[t[2]]]).collect();
        let shuffled = Mesh::new(positions, triangles).unwrap();
        let a = init_uniaxial_load(&m, 1.0, 0.3).unwrap();
        let b = init_uniaxial_load(&shuffled, 1.0, 0.3).unwrap();
        assert_eq!((a.north_count, a.south_count), (b.north_count, b.south_count));
        for (old, &new) in perm.iter().enumerate() {
            assert_eq!(a.forces[old], b.forces[new]);
        }
    }

    #[test]
    fn sweep_axes_form_cartesian_product() {
        let base = ConfigMap::parse("experiment = random_velocity\np = 2\nalpha = 0.5\n").unwrap();
        let axes = vec![
            parse_vary("p=2,3").unwrap(),
            parse_vary("alpha=0.1, 0.9").unwrap(),
        ];
        let variants = sweep_variants(&base, &axes);
        let names: Vec<&str> = variants.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["p=2_alpha=0.1", "p=2_alpha=0.9", "p=3_alpha=0.1", "p=3_alpha=0.9"]);
        let cfg = ExperimentConfig::from_map(&variants[3].1).unwrap();
        assert_eq!((cfg.params.p, cfg.params.alpha), (3.0, 0.9));
        assert!(parse_vary("nonsense=1").is_err());
        assert!(parse_vary("p").is_err());
        assert!(parse_vary("p=").is_err());
    }
}
