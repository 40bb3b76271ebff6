mod commands;
mod input;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use orbit_core::OrbitError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Invalid user input detected by the front end (exit code 2).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// A verification ran to completion but the checked property failed (exit code 2).
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

#[derive(Parser)]
#[command(name = "orbit", version, about = "Numerical toolkit for nilpotent orbits of real semisimple Lie algebras")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Numerical tolerance for input validation and criticality tests.
    #[arg(long, global = true, env = "ORBIT_TOL", default_value_t = 1e-9)]
    pub tol: f64,
    /// Seed for every random draw; reports record it.
    #[arg(long = "seed-rng", global = true, default_value_t = 0)]
    pub seed_rng: u64,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output path (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Create, inspect or validate algebra files.
    Algebra {
        #[command(subcommand)]
        action: AlgebraCmd,
    },
    /// Descend from a nilpotent element to a critical point of |m|^2.
    Core(CoreArgs),
    /// Integrate one of the flows and write a table.
    Flow {
        #[command(subcommand)]
        kind: FlowCmd,
    },
    /// Build the asymptotic series of an instanton and report its residual order.
    Expand(ExpandArgs),
    /// Map a nilpotent orbit to its partner orbit.
    Sekiguchi(SekiguchiArgs),
    /// Randomized verification sweeps.
    Verify {
        #[command(subcommand)]
        check: VerifyCmd,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Sl,
    Su,
    So,
}

#[derive(Subcommand)]
pub enum AlgebraCmd {
    /// Write a built-in algebra as JSON.
    Init {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// n for sl(n, R).
        #[arg(long)]
        n: Option<usize>,
        /// p for su(p, q) and so(p, q).
        #[arg(long)]
        p: Option<usize>,
        /// q for su(p, q) and so(p, q).
        #[arg(long)]
        q: Option<usize>,
        /// Multiplier applied to the Killing form.
        #[arg(long, default_value_t = 1.0)]
        killing_scale: f64,
    },
    /// Print dimensions and the signature of the Killing form on k and p.
    Inspect(AlgebraRef),
    /// Run all structural invariants; exits 2 on failure.
    Check(AlgebraRef),
}

#[derive(Args, Clone)]
pub struct AlgebraRef {
    /// Algebra JSON file or built-in name (sl<n>, su<p>,<q>, so<p>,<q>).
    #[arg(long)]
    pub algebra: String,
}

#[derive(Args, Clone)]
pub struct ElementRef {
    #[command(flatten)]
    pub algebra: AlgebraRef,
    /// Element JSON file or inline terms such as "h=0.5; e=i".
    #[arg(long, visible_alias = "seed")]
    pub element: String,
    /// Use the Killing form as given instead of normalizing it for the orbit.
    #[arg(long)]
    pub keep_scale: bool,
}

#[derive(Args)]
pub struct CoreArgs {
    #[command(flatten)]
    pub target: ElementRef,
    /// Trajectory CSV path (defaults to the --out path with a .csv extension).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct Range {
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t1: f64,
    /// Number of evenly spaced output times (0 = every accepted step where applicable).
    #[arg(long, default_value_t = 11)]
    pub samples: usize,
}

#[derive(Subcommand)]
pub enum FlowCmd {
    /// Instanton ODE from the morphism of a real nilpotent element, or from --hom.
    Instanton {
        #[command(flatten)]
        target: ElementRef,
        #[command(flatten)]
        range: Range,
        /// Initial morphism JSON with fields e, f, h (overrides the element's morphism).
        #[arg(long)]
        hom: Option<PathBuf>,
    },
    /// Gradient flow of |m|^2 on the unit sphere of the orbit.
    Gradient {
        #[command(flatten)]
        target: ElementRef,
    },
    /// Deformation f_t(z) = Ad(exp(t Re z)) z.
    Deform {
        #[command(flatten)]
        target: ElementRef,
        #[command(flatten)]
        range: Range,
        /// Treat the element as a real nilpotent and follow the convergence
        /// probe family through its partner.
        #[arg(long)]
        probe: bool,
    },
}

#[derive(Args)]
pub struct ExpandArgs {
    #[command(flatten)]
    pub target: ElementRef,
    /// Truncation order K.
    #[arg(long, default_value_t = 8)]
    pub order: usize,
    /// Coordinates of the free data along the normal basis (comma separated).
    #[arg(long)]
    pub coords: Option<String>,
    /// Start of the residual-slope window.
    #[arg(long, default_value_t = 1e2)]
    pub t0: f64,
    /// End of the residual-slope window.
    #[arg(long, default_value_t = 1e4)]
    pub t1: f64,
    /// Points in the residual-slope window.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    /// Also evaluate the converged series at t = 1.
    #[arg(long)]
    pub fmap: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    Auto,
    PToGr,
    GrToP,
}

#[derive(Args)]
pub struct SekiguchiArgs {
    #[command(flatten)]
    pub target: ElementRef,
    #[arg(long, value_enum, default_value_t = DirectionArg::Auto)]
    pub direction: DirectionArg,
}

#[derive(Subcommand)]
pub enum VerifyCmd {
    /// Sweep the flow bound |m1(t)|^2 + |m3(t)|^2 >= |m(0)|^2 over random orbit points.
    FlowBound {
        #[command(flatten)]
        algebra: AlgebraRef,
        /// Real nilpotent elements whose orbits are sampled (repeatable).
        #[arg(long)]
        element: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Largest flow time.
        #[arg(long, default_value_t = 50.0)]
        t1: f64,
        /// Size of the random compact group elements.
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
    },
    /// Check the Chebyshev step on random symmetric mass vectors.
    Chebyshev {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Largest exponent l.
        #[arg(long, default_value_t = 6)]
        max_l: usize,
    },
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<CheckFailed>() {
            return (2, "validation");
        }
        if let Some(e) = cause.downcast_ref::<OrbitError>() {
            return if e.is_numerical() { (3, "numerical") } else { (2, "validation") };
        }
        if cause.is::<std::io::Error>() {
            return (1, "io");
        }
        if let Some(e) = cause.downcast_ref::<csv::Error>() {
            if e.is_io_error() {
                return (1, "io");
            }
        }
        if let Some(e) = cause.downcast_ref::<serde_json::Error>() {
            return if e.is_io() { (1, "io") } else { (2, "validation") };
        }
    }
    (2, "validation")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code(&err);
            let msg = serde_json::json!({
                "tool": "orbit",
                "version": output::VERSION,
                "error": { "code": code, "kind": kind, "message": format!("{err:#}") },
            });
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
