//! `delaypred`: robustness table, bounds, certification and simulation from the command line.
//!
//! Exit codes: 0 success or pass, 1 certification failure or divergence, 2 usage or
//! configuration error.

mod scenario;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delaypred_core::backstepping::nominal_predictor_feedback;
use delaypred_core::redesign::{
    certify_with, max_certified_a, scalar_certify, scalar_max_a, scalar_redesign_feedback, CertificationOptions,
    FeedbackLaw, RedesignSetup, ScalarLaw, SigmaChoice,
};
use delaypred_core::robustness::{sufficient_bound, table1, RobustnessBound};
use delaypred_core::simulation::{decay_rate, simulate, Monitor};
use serde_json::json;

use scenario::{Feedback, Scenario};

const SCALAR_GRID: usize = 100_000;

#[derive(Parser)]
#[command(name = "delaypred", version, about = "Predictor feedback analysis for systems with input delay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Necessary and sufficient uncertainty bounds for r in {0..10, 15, 20} as CSV.
    Table1 {
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Bounds for a single delay.
    Bound {
        #[arg(long, allow_hyphen_values = true)]
        r: i64,
    },
    /// Certify the scenario's feedback at one uncertainty level or search for the largest one.
    Certify {
        scenario: PathBuf,
        /// Uncertainty level; defaults to the plant's `a`.
        #[arg(long, conflicts_with = "search")]
        a: Option<f64>,
        /// Upper end of the bisection for the largest certified level.
        #[arg(long)]
        search: Option<f64>,
    },
    /// Simulate the scenario and write the trajectory as CSV.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Failure that maps to an exit code.
struct Exit(u8, String);

impl Exit {
    fn usage(msg: impl Into<String>) -> Self {
        Exit(2, msg.into())
    }
}

type CmdResult = Result<u8, Exit>;

fn configure_threads() -> Result<(), Exit> {
    let Ok(value) = std::env::var("DELAYPRED_THREADS") else {
        return Ok(());
    };
    let n: usize =
        value.trim().parse().map_err(|_| Exit::usage(format!("DELAYPRED_THREADS: not a thread count: {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Exit::usage(format!("DELAYPRED_THREADS: {e}")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn write_table(rows: &[RobustnessBound], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "r,necessary,sufficient,c_star")?;
    for b in rows {
        writeln!(w, "{},{:.6},{:.6},{}", b.r, b.necessary, b.sufficient, fmt_opt(b.c_star))?;
    }
    w.flush()
}

fn cmd_table1(output: Option<&Path>) -> CmdResult {
    let rows = table1().map_err(|e| Exit(1, e.to_string()))?;
    let res = match output {
        Some(path) => File::create(path)
            .and_then(|f| write_table(&rows, BufWriter::new(f)))
            .map_err(|e| Exit::usage(format!("{}: {e}", path.display()))),
        None => write_table(&rows, io::stdout().lock()).map_err(|e| Exit::usage(e.to_string())),
    };
    res.map(|_| 0)
}

fn cmd_bound(r: i64) -> CmdResult {
    let r = usize::try_from(r).map_err(|_| Exit::usage(format!("--r must be >= 0, got {r}")))?;
    let b = sufficient_bound(r).map_err(|e| Exit(1, e.to_string()))?;
    let c_star = b.c_star.map(|c| format!("{c:.6}")).unwrap_or_else(|| "none".into());
    println!("necessary={:.6} sufficient={:.6} c_star={c_star}", b.necessary, b.sufficient);
    Ok(0)
}

fn load(path: &Path) -> Result<Scenario, Exit> {
    scenario::load(path).map_err(|e| Exit::usage(format!("invalid scenario: {e}")))
}

fn print_json(value: &impl serde::Serialize) {
    let _ = writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn redesign_setup(sc: &Scenario) -> Result<RedesignSetup, Exit> {
    RedesignSetup::new(sc.plant.clone(), sc.stab.clone(), sc.cert).map_err(|e| Exit::usage(e.to_string()))
}

fn cmd_certify(path: &Path, a: Option<f64>, search: Option<f64>) -> CmdResult {
    let sc = load(path)?;
    for (name, v) in [("--a", a), ("--search", search)] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Exit::usage(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
    }
    let a = a.unwrap_or(sc.plant.bound());
    if let Feedback::ScalarRedesign { q } = sc.feedback {
        if let Some(hi) = search {
            let best = scalar_max_a(ScalarLaw::Redesign, q, SCALAR_GRID, hi, 1e-6).map_err(|e| Exit::usage(e.to_string()))?;
            println!("largest_certified_a={best:.6}");
            return Ok(if best > 0.0 { 0 } else { 1 });
        }
        let rep = scalar_certify(a, q, SCALAR_GRID).map_err(|e| Exit::usage(e.to_string()))?;
        print_json(&json!({ "a": a, "q": q, "law": "scalar_redesign", "report": rep }));
        return Ok(if rep.pass { 0 } else { 1 });
    }
    let opts = CertificationOptions {
        law: match sc.feedback {
            Feedback::Nominal => FeedbackLaw::NominalPredictor,
            _ => FeedbackLaw::Redesigned,
        },
        sigma: if sc.auto_sigma { SigmaChoice::Auto } else { SigmaChoice::Certificate },
        ..Default::default()
    };
    let setup = redesign_setup(&sc)?;
    if let Some(hi) = search {
        return match max_certified_a(&setup, hi, &opts) {
            Ok(found) => {
                print_json(&found.report);
                println!("largest_certified_a={:.6}", found.a);
                Ok(0)
            }
            Err(e) => {
                eprintln!("{e}");
                Ok(1)
            }
        };
    }
    let rep = certify_with(&setup, a, &opts).map_err(|e| Exit::usage(e.to_string()))?;
    print_json(&rep);
    Ok(if rep.pass { 0 } else { 1 })
}

fn cmd_simulate(path: &Path, output: &Path) -> CmdResult {
    let sc = load(path)?;
    let Some(sim) = &sc.simulation else {
        return Err(Exit::usage("invalid scenario: simulation block is required"));
    };
    let a = sc.plant.bound();
    let setup = match sc.feedback {
        Feedback::Redesigned => Some(redesign_setup(&sc)?),
        _ => None,
    };
    let monitor = match &setup {
        Some(s) => Monitor::redesign(s),
        None => Monitor::lyapunov(&sc.stab, &sc.cert),
    };
    let run = |policy: &dyn Fn(&delaypred_core::model::ExtendedState) -> f64| {
        simulate(&sc.plant, policy, sim.strategy, &sim.z0, sim.steps, monitor)
    };
    let traj = match (sc.feedback, &setup) {
        (Feedback::Redesigned, Some(s)) => run(&|z| s.redesigned_feedback(z, a).unwrap_or(f64::NAN)),
        (Feedback::ScalarRedesign { q }, _) => run(&|z| scalar_redesign_feedback(z.x[0], z.y[0], a, q)),
        _ => run(&|z| nominal_predictor_feedback(&sc.plant, &sc.stab, z)),
    }
    .map_err(|e| Exit::usage(e.to_string()))?;
    File::create(output)
        .and_then(|f| {
            let mut w = BufWriter::new(f);
            traj.write_csv(&mut w)?;
            w.flush()
        })
        .map_err(|e| Exit::usage(format!("{}: {e}", output.display())))?;
    let rate = decay_rate(&traj).map_err(|e| Exit(1, e.to_string()))?;
    println!("decay_rate={rate:?} diverged={}", traj.diverged);
    Ok(if traj.diverged { 1 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = configure_threads().and_then(|_| match &cli.command {
        Command::Table1 { output } => cmd_table1(output.as_deref()),
        Command::Bound { r } => cmd_bound(*r),
        Command::Certify { scenario, a, search } => cmd_certify(scenario, *a, *search),
        Command::Simulate { scenario, output } => cmd_simulate(scenario, output),
    });
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
