//! Experiment configuration: flat `key = value` files with `#` comments.
//!
//! ```text
//! experiment = random_velocity   # random_velocity | uniaxial_load | custom
//! p = 2
//! alpha = 0.5
//! icosphere_level = 3
//! v0 = 0.1
//! seed = 42
//! ```
//!
//! Unset keys take the defaults listed in [`KEYS`]. Vectors and per-vertex arrays are
//! comma-separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::integrator::{IntegratorConfig, PredictorMode};
use crate::operator::{Density, KernelParams, PairModulus};
use crate::Vec3;

/// Every recognized key with its default (empty when the key is required or unset).
pub const KEYS: &[(&str, &str)] = &[
    ("experiment", ""),
    ("p", ""),
    ("alpha", ""),
    ("kappa", "1"),
    ("delta", "0.5"),
    ("rho", "1"),
    ("k_pair", "1"),
    ("mesh", ""),
    ("icosphere_level", "3"),
    ("radius", "1"),
    ("dt", "0.001"),
    ("beta", "0.25"),
    ("gamma", "0.5"),
    ("eps", "1e-7"),
    ("max_iters", "50"),
    ("predictor", "standard"),
    ("t_end", ""),
    ("v0", "0.1"),
    ("load", "0.001"),
    ("load_tolerance", "0.05"),
    ("u0_radial", "0"),
    ("v0_vector", "0,0,0"),
    ("body_force", "0,0,0"),
    ("seed", "1"),
    ("out_dir", ""),
    ("snapshot_every", "250"),
    ("record_every", "1"),
    ("table_cache", ""),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    RandomVelocity,
    UniaxialLoad,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RandomVelocity => "random_velocity",
            ExperimentKind::UniaxialLoad => "uniaxial_load",
            ExperimentKind::Custom => "custom",
        }
    }

    fn default_t_end(self) -> f64 {
        match self {
            ExperimentKind::UniaxialLoad => 10.0,
            _ => 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Off(PathBuf),
    Icosphere { level: u32, radius: f64 },
}

/// Initial conditions and load for [`ExperimentKind::Custom`] runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CustomSetup {
    /// Initial displacement `u_i = s · x_i`.
    pub u0_radial: f64,
    /// Uniform initial velocity.
    pub v0_vector: Vec3,
    /// Uniform constant body force density.
    pub body_force: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub mesh: MeshSource,
    pub params: KernelParams,
    pub integrator: IntegratorConfig,
    pub t_end: f64,
    pub v0_magnitude: f64,
    pub load_magnitude: f64,
    pub load_axis_tolerance: f64,
    pub custom: CustomSetup,
    pub rng_seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Steps between VTK snapshots; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Steps between diagnostics records.
    pub record_every: usize,
    pub table_cache: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Baseline random-velocity configuration on the level-3 unit icosphere.
    pub fn random_velocity(p: f64, alpha: f64, v0: f64) -> Self {
        let mut map = ConfigMap::default();
        map.set("experiment", "random_velocity");
        map.set("p", &format!("{p:?}"));
        map.set("alpha", &format!("{alpha:?}"));
        map.set("v0", &format!("{v0:?}"));
        ExperimentConfig::from_map(&map).expect("baseline configuration is valid")
    }

    /// Baseline uniaxial-load configuration on the level-3 unit icosphere.
    pub fn uniaxial_load(p: f64, alpha: f64, load: f64) -> Self {
        let mut map = ConfigMap::default();
        map.set("experiment", "uniaxial_load");
        map.set("p", &format!("{p:?}"));
        map.set("alpha", &format!("{alpha:?}"));
        map.set("load", &format!("{load:?}"));
        ExperimentConfig::from_map(&map).expect("baseline configuration is valid")
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let experiment = match map.required("experiment")? {
            "random_velocity" => ExperimentKind::RandomVelocity,
            "uniaxial_load" => ExperimentKind::UniaxialLoad,
            "custom" => ExperimentKind::Custom,
            other => {
                return Err(Error::param(
                    "experiment",
                    format!("unknown kind `{other}` (expected random_velocity, uniaxial_load or custom)"),
                ))
            }
        };

        let mesh = match map.get("mesh") {
            Some(path) => MeshSource::Off(PathBuf::from(path)),
            None => MeshSource::Icosphere {
                level: map.typed("icosphere_level")?,
                radius: map.typed("radius")?,
            },
        };

        let rho_values: Vec<f64> = map.parse_list("rho")?;
        let rho = match rho_values.as_slice() {
            [r] => Density::Uniform(*r),
            _ => Density::PerVertex(rho_values),
        };
        let params = KernelParams {
            p: map.typed("p")?,
            alpha: map.typed("alpha")?,
            kappa: map.typed("kappa")?,
            delta: map.typed("delta")?,
            rho,
            k_pair: PairModulus::Uniform(map.typed("k_pair")?),
        };
        let nv_hint = match &params.rho {
            Density::PerVertex(r) => r.len(),
            Density::Uniform(_) => 1,
        };
        params.validate(nv_hint)?;

        let predictor = match map.value("predictor") {
            "standard" => PredictorMode::Standard,
            "one_plus_gamma" => PredictorMode::OnePlusGamma,
            other => {
                return Err(Error::param(
                    "predictor",
                    format!("unknown mode `{other}` (expected standard or one_plus_gamma)"),
                ))
            }
        };
        let integrator = IntegratorConfig {
            dt: map.typed("dt")?,
            beta: map.typed("beta")?,
            gamma: map.typed("gamma")?,
            eps: map.typed("eps")?,
            max_iters: map.typed("max_iters")?,
            predictor,
        };
        integrator.validate()?;

        let t_end = match map.get("t_end") {
            Some(_) => map.typed("t_end")?,
            None => experiment.default_t_end(),
        };
        let cfg = ExperimentConfig {
            experiment,
            mesh,
            params,
            integrator,
            t_end,
            v0_magnitude: map.typed("v0")?,
            load_magnitude: map.typed("load")?,
            load_axis_tolerance: map.typed("load_tolerance")?,
            custom: CustomSetup {
                u0_radial: map.typed("u0_radial")?,
                v0_vector: map.parse_vec3("v0_vector")?,
                body_force: map.parse_vec3("body_force")?,
            },
            rng_seed: map.typed("seed")?,
            out_dir: map.get("out_dir").map(PathBuf::from),
            snapshot_every: map.typed("snapshot_every")?,
            record_every: map.typed("record_every")?,
            table_cache: map.get("table_cache").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", format!("must be positive, got {}", self.t_end)));
        }
        if !(self.v0_magnitude >= 0.0 && self.v0_magnitude.is_finite()) {
            return Err(Error::param("v0", format!("must be non-negative, got {}", self.v0_magnitude)));
        }
        if self.experiment == ExperimentKind::UniaxialLoad {
            if !(self.load_magnitude >= 0.0 && self.load_magnitude.is_finite()) {
                return Err(Error::param("load", format!("must be non-negative, got {}", self.load_magnitude)));
            }
            if !(self.load_axis_tolerance > 0.0) {
                return Err(Error::param(
                    "load_tolerance",
                    format!("must be positive, got {}", self.load_axis_tolerance),
                ));
            }
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        if let MeshSource::Icosphere { level, radius } = self.mesh {
            if level > crate::mesh::MAX_SUBDIVISIONS {
                return Err(Error::param(
                    "icosphere_level",
                    format!("must be at most {}", crate::mesh::MAX_SUBDIVISIONS),
                ));
            }
            if !(radius > 0.0) {
                return Err(Error::param("radius", format!("must be positive, got {radius}")));
            }
        }
        Ok(())
    }

    /// Number of time steps needed to reach `t_end`.
    pub fn num_steps(&self) -> usize {
        (self.t_end / self.integrator.dt).round() as usize
    }

    /// Fully resolved configuration in the file format; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            writeln!(s, "{k} = {v}").unwrap();
        };
        kv("experiment", self.experiment.name().to_string());
        match &self.mesh {
            MeshSource::Off(path) => kv("mesh", path.display().to_string()),
            MeshSource::Icosphere { level, radius } => {
                kv("icosphere_level", level.to_string());
                kv("radius", format!("{radius:?}"));
            }
        }
        let p = &self.params;
        kv("p", format!("{:?}", p.p));
        kv("alpha", format!("{:?}", p.alpha));
        kv("kappa", format!("{:?}", p.kappa));
        kv("delta", format!("{:?}", p.delta));
        kv(
            "rho",
            match &p.rho {
                Density::Uniform(r) => format!("{r:?}"),
                Density::PerVertex(r) => r.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","),
            },
        );
        if let PairModulus::Uniform(k) = p.k_pair {
            kv("k_pair", format!("{k:?}"));
        }
        let it = &self.integrator;
        kv("dt", format!("{:?}", it.dt));
        kv("beta", format!("{:?}", it.beta));
        kv("gamma", format!("{:?}", it.gamma));
        kv("eps", format!("{:?}", it.eps));
        kv("max_iters", it.max_iters.to_string());
        kv(
            "predictor",
            match it.predictor {
                PredictorMode::Standard => "standard",
                PredictorMode::OnePlusGamma => "one_plus_gamma",
            }
            .to_string(),
        );
        kv("t_end", format!("{:?}", self.t_end));
        kv("v0", format!("{:?}", self.v0_magnitude));
        kv("load", format!("{:?}", self.load_magnitude));
        kv("load_tolerance", format!("{:?}", self.load_axis_tolerance));
        let c = &self.custom;
        kv("u0_radial", format!("{:?}", c.u0_radial));
        kv("v0_vector", format!("{:?},{:?},{:?}", c.v0_vector.x, c.v0_vector.y, c.v0_vector.z));
        kv("body_force", format!("{:?},{:?},{:?}", c.body_force.x, c.body_force.y, c.body_force.z));
        kv("seed", self.rng_seed.to_string());
        if let Some(dir) = &self.out_dir {
            kv("out_dir", dir.display().to_string());
        }
        kv("snapshot_every", self.snapshot_every.to_string());
        kv("record_every", self.record_every.to_string());
        if let Some(cache) = &self.table_cache {
            kv("table_cache", cache.display().to_string());
        }
        s
    }
}

/// Raw key/value pairs of a configuration file, before defaults and validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::param(key, format!("unknown key (line {})", n + 1)));
            }
            if map.values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::param(key, format!("duplicate key (line {})", n + 1)));
            }
        }
        Ok(map)
    }

    /// Sets or replaces a key; used for command-line overrides and sweeps.
    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn check_key(key: &str) -> Result<()> {
        if KEYS.iter().any(|(k, _)| *k == key) {
            Ok(())
        } else {
            Err(Error::param(key, "unknown key"))
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn value(&self, key: &str) -> &str {
        self.get(key).unwrap_or_else(|| {
            KEYS.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .unwrap_or("")
        })
    }

    fn required(&self, key: &str) -> Result<&str> {
        match self.value(key) {
            "" => Err(Error::param(key, "required key is missing")),
            v => Ok(v),
        }
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.required(key)?;
        v.parse().map_err(|_| Error::param(key, format!("cannot parse `{v}`")))
    }

    fn parse_list(&self, key: &str) -> Result<Vec<f64>> {
        self.required(key)?
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse().map_err(|_| Error::param(key, format!("cannot parse `{t}`")))
            })
            .collect()
    }

    fn parse_vec3(&self, key: &str) -> Result<Vec3> {
        match self.parse_list(key)?.as_slice() {
            [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
            other => Err(Error::param(key, format!("expected 3 components, got {}", other.len()))),
        }
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_map(&ConfigMap::parse(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_text(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_map(&ConfigMap::parse(text)?)
    }

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = parse_text("experiment = random_velocity\np = 2\nalpha = 0.5\n").unwrap();
        assert_eq!(cfg.integrator.dt, 1e-3);
        assert_eq!(cfg.integrator.beta, 0.25);
        assert_eq!(cfg.integrator.gamma, 0.5);
        assert_eq!(cfg.integrator.eps, 1e-7);
        assert_eq!(cfg.params.delta, 0.5);
        assert_eq!(cfg.params.kappa, 1.0);
        assert_eq!(cfg.params.rho, Density::Uniform(1.0));
        assert_eq!(cfg.params.k_pair, PairModulus::Uniform(1.0));
        assert_eq!(cfg.mesh, MeshSource::Icosphere { level: 3, radius: 1.0 });
        assert_eq!(cfg.t_end, 3.0);
        assert_eq!(cfg.snapshot_every, 250);
        let uni = parse_text("experiment = uniaxial_load\np = 2\nalpha = 0.5\n").unwrap();
        assert_eq!(uni.t_end, 10.0);
        assert_eq!(uni.load_axis_tolerance, 0.05);
    }

    #[test]
    fn invalid_exponents_name_the_key() {
        let err = parse_text("experiment = custom\np = 1.5\nalpha = 0.5\n").unwrap_err();
        assert!(matches!(&err, Error::InvalidParameter { key, .. } if key == "p"), "{err}");
        let err = parse_text("experiment = custom\np = 2\nalpha = 0\n").unwrap_err();
        assert!(matches!(&err, Error::InvalidParameter { key, .. } if key == "alpha"), "{err}");
    }

    #[test]
    fn malformed_input_rejected() {
        assert!(matches!(parse_text("experiment random\n"), Err(Error::Parse { line: 1, .. })));
        let err = parse_text("experiment = custom\np = 2\nalpha = 0.5\nfoo = 1\n").unwrap_err();
        assert!(matches!(&err, Error::InvalidParameter { key, .. } if key == "foo"));
        let err = parse_text("experiment = custom\np = 2\np = 3\nalpha = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let err = parse_text("p = 2\nalpha = 0.5\n").unwrap_err();
        assert!(matches!(&err, Error::InvalidParameter { key, .. } if key == "experiment"));
        let err = parse_text("experiment = custom\np = 2\nalpha = 0.5\ndt = fast\n").unwrap_err();
        assert!(matches!(&err, Error::InvalidParameter { key, .. } if key == "dt"));
        let err = parse_text("experiment = custom\np = 2\nalpha = 0.5\nbody_force = 1,2\n").unwrap_err();
        assert!(matches!(&err, Error::InvalidParameter { key, .. } if key == "body_force"));
        let err = parse_text("experiment = custom\np = 2\nalpha = 0.5\nt_end = -1\n").unwrap_err();
        assert!(matches!(&err, Error::InvalidParameter { key, .. } if key == "t_end"));
    }

    #[test]
    fn resolved_text_round_trips() {
        let text = "
# comment line
experiment = custom   # trailing comment
p = 3
alpha = 0.25
rho = 1.5
mesh = meshes/ball.off
predictor = one_plus_gamma
u0_radial = 0.01
v0_vector = 0.1, 0, -0.2
body_force = 0,0,0.5
seed = 12345678901234
t_end = 0.5
";
        let cfg = parse_text(text).unwrap();
        assert_eq!(cfg.integrator.predictor, PredictorMode::OnePlusGamma);
        assert_eq!(cfg.custom.v0_vector, Vec3::new(0.1, 0.0, -0.2));
        assert_eq!(cfg.mesh, MeshSource::Off("meshes/ball.off".into()));
        let again = parse_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn per_vertex_density_list() {
        let cfg = parse_text("experiment = custom\np = 2\nalpha = 0.5\nrho = 1, 2, 3\n").unwrap();
        assert_eq!(cfg.params.rho, Density::PerVertex(vec![1.0, 2.0, 3.0]));
        assert!(parse_text("experiment = custom\np = 2\nalpha = 0.5\nrho = 1, -2\n").is_err());
    }
}
