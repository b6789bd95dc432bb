use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use olm_core::experiments::{self, condition_csv, infsup_csv, write_atomic, ExactCase, ExperimentConfig, DEFAULT_L_SWEEP};

#[derive(Parser, Debug)]
#[command(name = "olm-stokes", version, about = "Stokes flow on overlapping meshes with Nitsche coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Manufactured-solution convergence study, writes convergence.csv
    Convergence,
    /// Condition numbers over the l sweep, writes condition.csv
    Condition,
    /// Numerical inf-sup constants over the l sweep, writes infsup.csv
    Infsup,
    /// Single solve, writes background.vtk and overlapping.vtk
    Solve,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Case {
    Manufactured,
    Patch,
    Zero,
}

impl From<Case> for ExactCase {
    fn from(c: Case) -> Self {
        match c {
            Case::Manufactured => ExactCase::Manufactured,
            Case::Patch => ExactCase::Patch,
            Case::Zero => ExactCase::Zero,
        }
    }
}

#[derive(clap::Args, Debug)]
struct Options {
    /// Finest refinement level of the convergence study (levels 0..=K)
    #[arg(long, global = true, default_value_t = 4, value_name = "K")]
    levels: usize,
    /// Background cells per side
    #[arg(long, global = true, default_value_t = 5, value_name = "N")]
    n: usize,
    /// Overlapping cells per side
    #[arg(long, global = true, default_value_t = 3, value_name = "M")]
    m: usize,
    /// Inner box [l, 1-l]^2 parameters, comma separated
    #[arg(long, global = true, value_delimiter = ',', value_name = "v1,v2,...")]
    l: Vec<f64>,
    /// Rotation of the overlapping mesh in radians
    #[arg(long, global = true, default_value_t = 0.35, allow_hyphen_values = true)]
    angle: f64,
    /// Nitsche penalty
    #[arg(long, global = true, default_value_t = 10.0)]
    gamma: f64,
    /// Least-squares stabilization weight
    #[arg(long, global = true, default_value_t = 0.05)]
    delta: f64,
    /// Sign of the least-squares pressure term (1 or -1)
    #[arg(long, global = true, default_value_t = 1.0, allow_hyphen_values = true)]
    beta: f64,
    /// Drop the overlap stabilization (convergence and solve; condition and
    /// infsup always report both variants)
    #[arg(long, global = true)]
    no_sh: bool,
    /// Output directory
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,
    /// Seed for randomized self-checks
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write assembled matrices in Matrix Market format
    #[arg(long, global = true)]
    dump_matrix: bool,
    /// Write overlap pieces and interface segments as CSV
    #[arg(long, global = true)]
    dump_geometry: bool,
    /// Exact solution for convergence and solve
    #[arg(long, global = true, value_enum, default_value_t = Case::Manufactured)]
    case: Case,
    /// Also compute the condition number in solve
    #[arg(long, global = true)]
    kappa: bool,
    /// Worker threads (0 uses all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

impl Options {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            levels: self.levels,
            n: self.n,
            m: self.m,
            l: if self.l.is_empty() { DEFAULT_L_SWEEP.to_vec() } else { self.l.clone() },
            angle: self.angle,
            gamma: self.gamma,
            delta: self.delta,
            beta: self.beta,
            with_sh: !self.no_sh,
            seed: self.seed,
            output_dir: Some(self.out.clone()),
            dump_matrix: self.dump_matrix,
            dump_geometry: self.dump_geometry,
        }
    }
}

fn run(command: Command, opts: &Options) -> Result<()> {
    let config = opts.config();
    config.validate()?;
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    match command {
        Command::Convergence => {
            let study = experiments::run_convergence(&config, opts.case.into())?;
            let path = opts.out.join("convergence.csv");
            write_atomic(&path, study.to_csv().as_bytes())?;
            for r in &study.reports {
                println!("level {} h={:.4} dofs={} |u-uh|_1={:.3e} |p-ph|={:.3e}", r.level, r.h_max, r.n_dofs, r.err_u_h1, r.err_p_l2);
            }
            println!("slope_u_h1={:.3} slope_p_l2={:.3}", study.slope_u_h1, study.slope_p_l2);
            println!("wrote {}", path.display());
        }
        Command::Condition => {
            if opts.no_sh {
                log::warn!("--no-sh has no effect on condition: both variants are reported");
            }
            let recs = experiments::run_condition(&config)?;
            let path = opts.out.join("condition.csv");
            write_atomic(&path, condition_csv(&recs).as_bytes())?;
            for r in &recs {
                println!("l={} with_sh={} kappa={:.4e} kappa_h2={:.2}", r.l, r.with_sh, r.kappa, r.kappa_h2);
            }
            println!("wrote {}", path.display());
        }
        Command::Infsup => {
            if opts.no_sh {
                log::warn!("--no-sh has no effect on infsup: both variants are reported");
            }
            let recs = experiments::run_infsup(&config)?;
            let path = opts.out.join("infsup.csv");
            write_atomic(&path, infsup_csv(&recs).as_bytes())?;
            for r in &recs {
                println!("l={} with_sh={} c={:.4e}", r.l, r.with_sh, r.c_infsup);
            }
            println!("wrote {}", path.display());
        }
        Command::Solve => {
            let rep = experiments::run_solve(&config, opts.case.into(), opts.kappa)?;
            println!("dofs={} residual={:.3e}", rep.n_dofs, rep.residual);
            if let Some(k) = rep.kappa {
                println!("kappa={k:.4e}");
            }
            if rep.misoriented_normals > 0 {
                bail!("{} interface normals failed the orientation check", rep.misoriented_normals);
            }
            for f in &rep.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.opts.threads > 0 {
        olm_core::par::with_threads(cli.opts.threads, || run(cli.command, &cli.opts))
    } else {
        run(cli.command, &cli.opts)
    }
}
