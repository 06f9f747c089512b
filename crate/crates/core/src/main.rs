use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode};

use clap::{Args, Parser, Subcommand};

use pdmanifold::config::{ConfigMap, ExperimentConfig};
use pdmanifold::geodesic::{self, MeshGraph};
use pdmanifold::harness::{self, RunResult, Termination};
use pdmanifold::mesh::{self, Mesh};
use pdmanifold::{Error, Result};

#[derive(Parser)]
#[command(name = "pdmanifold", version, about = "Peridynamic evolution on closed triangulated surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    #[command(flatten)]
    overrides: Overrides,

    /// Worker threads for table construction and force assembly (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Override the random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for diagnostics.csv, snapshots and manifest.txt.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Steps between VTK snapshots (0 disables them).
    #[arg(long, global = true)]
    snapshots: Option<usize>,

    /// Use the (1 + γ) velocity predictor instead of (1 − γ).
    #[arg(long, global = true)]
    one_plus_gamma_predictor: bool,

    /// Geodesic table cache file to reuse or create.
    #[arg(long, global = true)]
    table_cache: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, map: &mut ConfigMap) {
        if let Some(seed) = self.seed {
            map.set("seed", &seed.to_string());
        }
        if let Some(dir) = &self.out_dir {
            map.set("out_dir", &dir.display().to_string());
        }
        if let Some(n) = self.snapshots {
            map.set("snapshot_every", &n.to_string());
        }
        if self.one_plus_gamma_predictor {
            map.set("predictor", "one_plus_gamma");
        }
        if let Some(cache) = &self.table_cache {
            map.set("table_cache", &cache.display().to_string());
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment described by a configuration file.
    Run { config: PathBuf },
    /// Run the Cartesian product of one or more parameter axes.
    Sweep {
        config: PathBuf,
        /// Sweep axis `key=v1,v2,...`; repeat for several axes.
        #[arg(long, required = true)]
        vary: Vec<String>,
        /// Run up to this many variants in parallel child processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Build the horizon table for a mesh and write it to a cache file.
    GeodesicTable {
        /// OFF file, or `icosphere:LEVEL[:RADIUS]`.
        mesh: String,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print mesh statistics.
    MeshInfo {
        /// OFF file, or `icosphere:LEVEL[:RADIUS]`.
        mesh: String,
        /// Also report horizon neighborhood sizes for this horizon.
        #[arg(long)]
        delta: Option<f64>,
    },
}

fn load_mesh_arg(arg: &str) -> Result<Mesh> {
    if let Some(rest) = arg.strip_prefix("icosphere:") {
        let mut parts = rest.split(':');
        let level = parts
            .next()
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| Error::param("mesh", format!("bad icosphere level in `{arg}`")))?;
        let radius = match parts.next() {
            Some(r) => r
                .parse()
                .map_err(|_| Error::param("mesh", format!("bad icosphere radius in `{arg}`")))?,
            None => 1.0,
        };
        mesh::generate_icosphere(level, radius)
    } else {
        mesh::load_off(arg)
    }
}

fn read_map(path: &Path) -> Result<ConfigMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    ConfigMap::parse(&text)
}

fn summarize(label: &str, result: &RunResult) {
    let last = result.records.last();
    println!(
        "{label}: {} | steps {} | max iterations {} | E_total {:.6e} | dS {:.6e} | {:.2}s",
        result.termination.describe(),
        result.steps_taken,
        result.max_iterations(),
        last.map_or(f64::NAN, |r| r.e_total),
        last.map_or(f64::NAN, |r| r.delta_s),
        result.wall_seconds
    );
}

fn cmd_run(config: &Path, overrides: &Overrides) -> Result<bool> {
    let mut map = read_map(config)?;
    overrides.apply(&mut map);
    let cfg = ExperimentConfig::from_map(&map)?;
    let result = harness::run(&cfg)?;
    summarize(&config.display().to_string(), &result);
    Ok(result.termination == Termination::Completed)
}

fn cmd_sweep(config: &Path, vary: &[String], jobs: usize, overrides: &Overrides, threads: Option<usize>) -> Result<bool> {
    let mut base = read_map(config)?;
    overrides.apply(&mut base);
    let axes = vary.iter().map(|v| harness::parse_vary(v)).collect::<Result<Vec<_>>>()?;
    let root = overrides.out_dir.clone().unwrap_or_else(|| PathBuf::from("sweep"));
    let variants = harness::sweep_variants(&base, &axes);

    // Validate everything before running anything.
    let mut prepared = Vec::with_capacity(variants.len());
    for (name, mut map) in variants {
        let dir = root.join(&name);
        map.set("out_dir", &dir.display().to_string());
        let cfg = ExperimentConfig::from_map(&map)?;
        prepared.push((name, dir, cfg));
    }

    let mut all_completed = true;
    if jobs <= 1 {
        for (name, _, cfg) in &prepared {
            let result = harness::run(cfg)?;
            summarize(name, &result);
            all_completed &= result.termination == Termination::Completed;
        }
        return Ok(all_completed);
    }

    let exe = std::env::current_exe().map_err(|e| Error::Io {
        path: PathBuf::from("current executable"),
        source: e,
    })?;
    let mut running: Vec<(String, Child)> = Vec::new();
    let wait_one = |running: &mut Vec<(String, Child)>| -> Result<bool> {
        let (name, mut child) = running.remove(0);
        let status = child.wait().map_err(|e| Error::Io {
            path: PathBuf::from(&name),
            source: e,
        })?;
        Ok(status.success())
    };
    for (name, dir, cfg) in &prepared {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let cfg_path = dir.join("config.txt");
        std::fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::Io {
            path: cfg_path.clone(),
            source: e,
        })?;
        if running.len() >= jobs {
            all_completed &= wait_one(&mut running)?;
        }
        let mut cmd = Command::new(&exe);
        cmd.arg("--threads").arg(threads.unwrap_or(1).to_string());
        cmd.arg("run").arg(&cfg_path);
        let child = cmd.spawn().map_err(|e| Error::Io {
            path: exe.clone(),
            source: e,
        })?;
        running.push((name.clone(), child));
    }
    while !running.is_empty() {
        all_completed &= wait_one(&mut running)?;
    }
    Ok(all_completed)
}

fn cmd_geodesic_table(mesh_arg: &str, delta: f64, out: &Path) -> Result<()> {
    let mesh = load_mesh_arg(mesh_arg)?;
    let table = geodesic::build_geodesic_table(&MeshGraph::from_mesh(&mesh), delta)?;
    geodesic::write_table_cache(&table, &mesh.content_hash(), out)?;
    println!(
        "wrote {} bonds for {} vertices (horizon {delta}) to {}",
        table.num_entries() / 2,
        mesh.num_vertices(),
        out.display()
    );
    Ok(())
}

fn cmd_mesh_info(mesh_arg: &str, delta: Option<f64>) -> Result<()> {
    let mesh = load_mesh_arg(mesh_arg)?;
    let (lo, hi) = mesh.edge_length_range();
    println!("vertices:  {}", mesh.num_vertices());
    println!("edges:     {}", mesh.num_edges());
    println!("triangles: {}", mesh.num_triangles());
    println!("euler:     {}", mesh.euler_characteristic());
    println!("area:      {:.12}", mesh.total_area());
    println!("edge len:  {lo:.6} .. {hi:.6}");
    println!("radius:    {:.12}", harness::mean_radius(&mesh));
    if let Some(delta) = delta {
        let table = geodesic::build_geodesic_table(&MeshGraph::from_mesh(&mesh), delta)?;
        let counts: Vec<usize> = (0..mesh.num_vertices()).map(|i| table.neighbor_count(i)).collect();
        let min = counts.iter().min().copied().unwrap_or(0);
        let max = counts.iter().max().copied().unwrap_or(0);
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        println!("horizon {delta}: {} bonds, neighbors min {min} mean {mean:.2} max {max}", table.num_entries() / 2);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match &cli.command {
        Cmd::Run { config } => cmd_run(config, &cli.overrides),
        Cmd::Sweep { config, vary, jobs } => cmd_sweep(config, vary, *jobs, &cli.overrides, cli.threads),
        Cmd::GeodesicTable { mesh, delta, out } => cmd_geodesic_table(mesh, *delta, out).map(|_| true),
        Cmd::MeshInfo { mesh, delta } => cmd_mesh_info(mesh, *delta).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        // Runs that stop early are reported but are not usage errors.
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
