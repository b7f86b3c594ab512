//! The `levystab` command line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::bsde::{martingale_residual, picard_bsde, BsdeConfig};
use crate::density::{invert_density, DensityConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::fk_solver::{solve_fixed_point, Problem};
use crate::grid::Lattice;
use crate::lab::catalog::{catalog_by_name, CatalogName};
use crate::lab::config::ExperimentConfig;
use crate::lab::stability::{run_stability, symbol_gates};
use crate::sampling::CoupledDriver;
use crate::sde::euler_paths;
use crate::symbols::SymbolSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_GATE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "levystab", version, about = "Stability experiments for semilinear equations driven by Lévy-type operators")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Built-in experiment name (see `catalog-list`).
    #[arg(long)]
    pub catalog: Option<String>,
    /// TOML experiment file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.catalog, &self.config) {
            (Some(name), _) => catalog_by_name(name),
            (_, Some(path)) => ExperimentConfig::load(path),
            _ => Err(Error::Config("either --catalog or --config is required".into())),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition density of a stable or relativistic stable process, written as CSV.
    Density {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Relativistic mass; omit for the stable family.
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 10.0)]
        half_width: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Frequency cutoff R of the inversion quadrature.
        #[arg(long)]
        cutoff: Option<f64>,
        /// Quadrature nodes per axis.
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Symbol convergence, Hartman–Wintner and domination gates of an experiment, as JSON.
    SymbolCheck {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solves one member (or the limit) of an experiment and writes the grid function as CSV.
    Solve {
        #[command(flatten)]
        source: Source,
        /// Sequence member; omit for the limit problem.
        #[arg(long)]
        member: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Path-level solver for the limit problem, compared against the lattice solver.
    BsdeDemo {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 4000)]
        paths: usize,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        /// Starting point (first coordinate; the others are zero).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs a stability sweep and writes the JSON report.
    Stability {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Exit with status 1 when any trend verdict is violated.
        #[arg(long)]
        strict: bool,
    },
    /// Lists the built-in experiments.
    CatalogList,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidSpec(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_GATE,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn provenance(hash: &str, seed: u64) -> Vec<String> {
    vec![format!("config_hash {hash}"), format!("master_seed {seed}")]
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let threads = cli.threads;
    let run = move || dispatch(cli.command);
    let result = match threads {
        Some(n) => exec::with_threads(n, run),
        None => run(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Density { alpha, t, mass, dim, half_width, step, cutoff, nodes, out } => {
            let spec = match mass {
                Some(m) => SymbolSpec::relativistic(alpha, m, dim)?,
                None => SymbolSpec::stable(alpha, dim)?,
            };
            let lattice = Lattice::symmetric(dim, half_width, step)?;
            let base = DensityConfig::for_dim(dim);
            let cfg = base.with_resolution(cutoff.unwrap_or(base.cutoff), nodes.unwrap_or(base.nodes));
            let grid = invert_density(&spec, t, &lattice, &cfg)?;
            let args = json!({
                "alpha": alpha, "t": t, "mass": mass, "dim": dim, "half_width": half_width, "step": step,
                "cutoff": cfg.cutoff, "nodes": cfg.nodes,
            });
            let hash = hex::encode(Sha256::digest(args.to_string().as_bytes()));
            let mut comments = provenance(&hash, 0);
            comments.push(format!("mass {:e}", grid.mass()));
            grid.write_csv(create(&out)?, &comments)?;
            Ok(EXIT_OK)
        }
        Command::SymbolCheck { source, out } => {
            let cfg = source.load()?;
            let gates = symbol_gates(&cfg)?;
            let doc = json!({"config_hash": cfg.hash(), "master_seed": cfg.seed, "gates": gates});
            let text = serde_json::to_string_pretty(&doc).expect("gates serialize");
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => println!("{text}"),
            }
            Ok(EXIT_OK)
        }
        Command::Solve { source, member, out } => {
            let cfg = source.load()?;
            if member.is_some_and(|n| n == 0 || n > cfg.members) {
                return Err(Error::Config(format!("member must lie in 1..={}", cfg.members)));
            }
            let problem = Problem::new(cfg.operator(member)?, cfg.phi.clone(), cfg.t_end, cfg.lattice.build()?)?;
            let sol = solve_fixed_point(&problem, &cfg.nonlinearity, &cfg.solver_config())?;
            let mut comments = provenance(&cfg.hash(), cfg.seed);
            comments.push(format!("member {}", member.map_or("limit".to_string(), |n| n.to_string())));
            comments.push(format!("iterations {}", sol.report.iterations));
            sol.u.write_csv(create(&out)?, &comments)?;
            Ok(EXIT_OK)
        }
        Command::BsdeDemo { source, paths, steps, x, out } => {
            let cfg = source.load()?;
            if steps == 0 || paths < 2 {
                return Err(Error::Config("need at least one step and two paths".into()));
            }
            let op = cfg.operator(None)?;
            let mut x0 = vec![0.0; cfg.lattice.dim];
            x0[0] = x;
            let bundle =
                euler_paths(&op, 0.0, &x0, cfg.t_end, cfg.t_end / steps as f64, paths, &CoupledDriver::new(cfg.seed))?;
            let phi = |y: &[f64]| cfg.phi.eval(cfg.t_end, y);
            let sol = picard_bsde(&bundle, &phi, &cfg.nonlinearity, &BsdeConfig::default())?;
            let (_, diag) = martingale_residual(&sol, &bundle, &cfg.nonlinearity)?;
            let problem = Problem::new(op, cfg.phi.clone(), cfg.t_end, cfg.lattice.build()?)?;
            let u = solve_fixed_point(&problem, &cfg.nonlinearity, &cfg.solver_config())?;
            let u0 = u.eval(0.0, &x0);
            let band = 3.0 * sol.combined_error().hypot(u.std_err_at(0.0, &x0).unwrap_or(0.0));
            let agree = (sol.y0() - u0).abs() <= band;
            let mut comments = provenance(&cfg.hash(), cfg.seed);
            comments.push(format!("y0 {:e} lattice {:e} band {:e}", sol.y0(), u0, band));
            sol.write_csv(create(&out)?, Some(&diag), &comments)?;
            println!(
                "{}",
                json!({
                    "config_hash": cfg.hash(),
                    "master_seed": cfg.seed,
                    "y0": sol.y0(),
                    "lattice_value": u0,
                    "band": band,
                    "agree": agree,
                    "martingale_pass": diag.pass,
                })
            );
            Ok(if agree && diag.pass { EXIT_OK } else { EXIT_GATE })
        }
        Command::Stability { source, seed, out, strict } => {
            let mut cfg = source.load()?;
            if let Some(s) = seed {
                cfg.seed = s;
                if let Some(mc) = cfg.solver.mc.as_mut() {
                    mc.seed = s;
                }
            }
            let report = run_stability(&cfg)?;
            let mut w = create(&out)?;
            w.write_all(report.to_json().as_bytes())?;
            w.flush()?;
            for (name, v) in report.verdicts() {
                println!("{name}: {v:?}");
            }
            println!("pass: {}", report.pass);
            Ok(if strict && !report.pass { EXIT_GATE } else { EXIT_OK })
        }
        Command::CatalogList => {
            for name in CatalogName::ALL {
                println!("{:<20} {}", name.as_str(), name.describe());
            }
            Ok(EXIT_OK)
        }
    }
}
