mod io;
mod kernel;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lmfmm::fmm::{convolve_with_stats, direct_sum, relative_l2, ConvolveJob};
use lmfmm::sommerfeld::{eval_kernel, EvalRequest};
use lmfmm::validation::run_property_suite;

use kernel::{KernelArgs, KernelDefaults};

/// Failure classes, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable input or inadmissible geometry (exit 2).
    Usage(String),
    /// The numerics failed (exit 3).
    Numerical(String),
}

impl From<lmfmm::Error> for CliError {
    fn from(e: lmfmm::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "lmfmm", version, about = "Layered-media Helmholtz Green's functions and FMM summation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one kernel value and print its real and imaginary parts
    EvalGreen {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Target x
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// Target y
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        /// Source x
        #[arg(long, allow_hyphen_values = true)]
        x0: f64,
        /// Source y
        #[arg(long, allow_hyphen_values = true)]
        y0: f64,
        /// Relative quadrature tolerance
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Sum the kernel over a source file at every target by the FMM
    Convolve {
        #[command(flatten)]
        kernel: KernelArgs,
        /// CSV with header x,y,q_re,q_im
        #[arg(long)]
        sources: PathBuf,
        /// CSV with header x,y
        #[arg(long)]
        targets: PathBuf,
        /// Output CSV with header x,y,phi_re,phi_im
        #[arg(long)]
        out: PathBuf,
        /// Requested relative l2 accuracy
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Expansion order at every level instead of the estimate
        #[arg(long)]
        order: Option<usize>,
        /// Most particles in a leaf box
        #[arg(long, default_value_t = 30)]
        max_leaf: usize,
        /// Worker threads (default: all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// Bound on the M2L matrix cache in MiB
        #[arg(long)]
        m2l_cache_mb: Option<usize>,
        /// Compare against direct summation on a subsample of at most this many targets
        #[arg(long, num_args = 0..=1, default_missing_value = "500")]
        check: Option<usize>,
    },
    /// Quadrature convergence of the impedance tail representations (CSV: representation,n,abs_error)
    QuadStudy(study::QuadArgs),
    /// Decay of multipole or local expansion terms (CSV: p,term,ratio,propagating,evanescent)
    ExpansionStudy(study::ExpansionArgs),
    /// Run the property suite and print one line per property
    Validate {
        /// Randomness seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::EvalGreen { kernel, x, y, x0, y0, tol } => {
            let k = kernel.resolve(KernelDefaults::default())?;
            let v = eval_kernel(&EvalRequest { spec: k.spec, x: [x, y], x0: [x0, y0], tol })?;
            println!("{} {}", io::num(v.re), io::num(v.im));
            Ok(())
        }
        Command::Convolve { kernel, sources, targets, out, tol, order, max_leaf, threads, m2l_cache_mb, check } => {
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            }
            if max_leaf == 0 {
                return Err(CliError::Usage("--max-leaf must be at least 1".into()));
            }
            let k = kernel.resolve(KernelDefaults::default())?;
            let src = io::read_sources(&sources)?;
            let tgt = io::read_targets(&targets)?;
            if src.is_empty() {
                return Err(CliError::Usage(format!("{}: no sources", sources.display())));
            }
            if tgt.is_empty() {
                return Err(CliError::Usage(format!("{}: no targets", targets.display())));
            }
            let mut job = ConvolveJob::new(k.spec, src, tgt, tol);
            job.max_leaf = max_leaf;
            job.order = order;
            job.m2l_cache_bytes = m2l_cache_mb.map(|m| m << 20);
            let start = std::time::Instant::now();
            let (phi, stats) = convolve_with_stats(&job)?;
            eprintln!(
                "fmm: {} sources, {} targets, {:.3} s, {} M2L translations, {} M2L matrices, {} direct pairs",
                job.sources.len(),
                job.targets.len(),
                start.elapsed().as_secs_f64(),
                stats.m2l_translations,
                stats.m2l_matrices,
                stats.direct_pairs
            );
            io::write_potentials(&out, &job.targets, &phi)?;
            if let Some(m) = check {
                let m = m.clamp(1, job.targets.len());
                let stride = job.targets.len() as f64 / m as f64;
                let pick: Vec<usize> = (0..m).map(|i| (i as f64 * stride) as usize).collect();
                let sub = ConvolveJob { targets: pick.iter().map(|&i| job.targets[i]).collect(), ..job.clone() };
                let reference = direct_sum(&sub)?;
                let approx: Vec<_> = pick.iter().map(|&i| phi[i]).collect();
                println!("check: {} targets, relative l2 error {:e}", m, relative_l2(&approx, &reference));
            }
            Ok(())
        }
        Command::QuadStudy(args) => study::quad_study(&args),
        Command::ExpansionStudy(args) => study::expansion_study(&args),
        Command::Validate { seed } => {
            let report = run_property_suite(seed);
            print!("{report}");
            if report.all_passed() {
                Ok(())
            } else {
                Err(CliError::Numerical(format!("{} properties failed", report.failures().count())))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
