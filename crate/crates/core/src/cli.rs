//! Command-line front end for the `privperturb` binary.
//!
//! Four subcommands share one binary: `check`, `design`, `simulate` and
//! `oracle`. Every numeric parameter resolves in the order command-line flag,
//! then the `--config` JSON file, then the built-in default.
//!
//! Exit codes: 0 on success, 2 for bad input, 3 when a solver fails and 4
//! when the requested protection cannot be reached.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::design_l0::{self, write_sweep_csv, DesignResult, L0DesignConfig};
use crate::design_l2::{self, tune_rho, write_tune_csv, z_star, L2DesignConfig};
use crate::error::{Error, Result};
use crate::hvac::{closed_loop_sim, dp_baseline, DpParams, Scenario, SimReport};
use crate::io::{self, load_perturbation, load_system, save_perturbation, write_atomic};
use crate::linalg::{Matrix, Tolerance};
use crate::model::{LinearSystem, Perturbation, ReleaseMap};
use crate::oracles;
use crate::privacy::{check_full_row_rank_everywhere, TargetSpec};

/// Success, including a `check` whose verdict is negative.
pub const EXIT_OK: i32 = 0;
/// Malformed input, bad arguments or mismatched dimensions.
pub const EXIT_INPUT: i32 = 2;
/// A numerical solver did not finish.
pub const EXIT_SOLVER: i32 = 3;
/// The design ran but the requested protection was not reached.
pub const EXIT_NOT_ACHIEVED: i32 = 4;

/// Default `c` grid of the ℓ0 sweep.
pub const DEFAULT_C_GRID: [f64; 5] = [0.5, 0.8, 1.0, 2.0, 3.0];

/// Environment variable holding the log filter, e.g. `info` or `debug`.
pub const LOG_ENV: &str = "PRIVPERTURB_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "privperturb",
    version,
    about = "Design input-output perturbations that hide initial states and inputs of linear systems"
)]
pub struct Cli {
    /// JSON file with defaults for any numeric option.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Relative singular-value cutoff used for rank decisions.
    #[arg(long, global = true)]
    pub rank_tol: Option<f64>,

    /// Magnitude below which an entry counts as zero.
    #[arg(long, global = true)]
    pub zero_tol: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report the full-row-rank verdict, invariant zeros and what the
    /// unperturbed system already protects.
    Check(CheckArgs),
    /// Design a perturbation and write it with its diagnostics.
    Design(DesignArgs),
    /// Run the HVAC closed loop with a perturbation and compare released outputs.
    Simulate(SimulateArgs),
    /// Brute-force reference computations.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// System JSON file.
    #[arg(long)]
    pub system: PathBuf,
    /// One-based targets such as "x0:1,7;u:6". Defaults to every state and
    /// every exogenous input.
    #[arg(long)]
    pub targets: Option<String>,
    /// Seed for every random draw in the command.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Sparse design through the ℓ0 relaxation, swept over `c`.
    L0,
    /// Analytic minimum-norm construction.
    L2,
    /// ℓ2 design through its semidefinite relaxation.
    L2Sdp,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// System JSON file.
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// One-based targets such as "x0:1,7;u:6"; defaults to every state and exogenous input.
    #[arg(long)]
    pub targets: Option<String>,
    /// Rank target for `l2`: an integer or "auto" to search downwards.
    #[arg(long)]
    pub rho: Option<String>,
    /// Comma-separated ascending `c` values for `l0`.
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    /// Nuclear-norm weight for `l2-sdp`.
    #[arg(long)]
    pub c: Option<f64>,
    /// Margin of the controllability-preserving constraint.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Seed for every random draw in the command.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Threads used by the `l0` sweep.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory for the written artifacts (default `out`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// System JSON file.
    #[arg(long)]
    pub system: PathBuf,
    /// Perturbation JSON file as written by `design`.
    #[arg(long)]
    pub k_file: PathBuf,
    /// Number of simulated steps after the initial sample.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Seed for every random draw in the command.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Temperature the controller regulates every zone to.
    #[arg(long)]
    pub setpoint: Option<f64>,
    /// Also run the Gaussian-noise baseline with this privacy budget.
    #[arg(long)]
    pub dp_eps: Option<f64>,
    /// Failure probability of the noise baseline.
    #[arg(long)]
    pub dp_delta: Option<f64>,
    /// Output sensitivity assumed by the noise baseline.
    #[arg(long)]
    pub sensitivity: Option<f64>,
    /// Directory for the written artifacts (default `out`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Sparsest nonzero kernel vector by exhaustive search.
    Nvp {
        /// Matrix JSON file (nested row-major arrays).
        #[arg(long)]
        matrix: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diagonal rank-reducing perturbation built from the sparsest kernel vector.
    Claim1 {
        /// JSON file holding the matrix as nested row arrays.
        #[arg(long)]
        matrix: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid minimiser of the pencil's Frobenius norm next to the closed form.
    ZGrid {
        /// System JSON file.
        #[arg(long)]
        system: PathBuf,
        /// Lower end of the grid.
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        /// Upper end of the grid.
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        /// Grid spacing.
        #[arg(long)]
        step: Option<f64>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Defaults read from `--config`. Any field may be omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub targets: Option<String>,
    pub seed: Option<u64>,
    pub rank_tol: Option<f64>,
    pub zero_tol: Option<f64>,
    /// Integer or "auto".
    pub rho: Option<String>,
    pub c_grid: Option<Vec<f64>>,
    pub c: Option<f64>,
    pub eps: Option<f64>,
    pub jobs: Option<usize>,
    pub horizon: Option<usize>,
    pub setpoint: Option<f64>,
    pub dp_eps: Option<f64>,
    pub dp_delta: Option<f64>,
    pub sensitivity: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg)
    }
}

/// Result of a command: the exit code and the JSON summary printed on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Solver(_)
        | Error::SvdNotConverged
        | Error::EigenNotConverged { .. }
        | Error::QzNotConverged { .. } => EXIT_SOLVER,
        Error::InfeasibleRank { .. } => EXIT_NOT_ACHIEVED,
        _ => EXIT_INPUT,
    }
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    init_logging();
    match execute(&cli) {
        Ok(out) => {
            match io::to_json_string(&out.report) {
                Ok(s) => print!("{s}"),
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code(&e);
                }
            }
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    // A second initialisation (e.g. from tests) is harmless.
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Run a parsed command without printing anything.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let defaults = Tolerance::default();
    let tol = Tolerance::new(
        cli.rank_tol.or(cfg.rank_tol).unwrap_or(defaults.rank_tol),
        cli.zero_tol.or(cfg.zero_tol).unwrap_or(defaults.zero_tol),
    )?;
    match &cli.command {
        Command::Check(a) => cmd_check(a, &cfg, &tol),
        Command::Design(a) => cmd_design(a, &cfg, &tol),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Oracle(o) => cmd_oracle(o, &tol),
    }
}

fn resolve_targets(
    flag: &Option<String>,
    cfg: &RunConfig,
    sys: &LinearSystem,
) -> Result<TargetSpec> {
    let targets = match flag.as_ref().or(cfg.targets.as_ref()) {
        Some(text) => text.parse::<TargetSpec>()?,
        // Control inputs are known to whoever receives the data, so they are
        // not protected by default.
        None => TargetSpec::new((0..sys.n()).collect(), sys.exogenous_indices()),
    };
    targets.validate(sys.n(), sys.p())?;
    Ok(targets)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write_atomic(path, io::to_json_string(value)?.as_bytes())
}

fn system_summary(sys: &LinearSystem, rel: &ReleaseMap) -> Value {
    json!({
        "n": sys.n(),
        "p": sys.p(),
        "q": sys.q(),
        "l": rel.l(),
        "control_inputs": sys.control_indices().iter().map(|j| j + 1).collect::<Vec<_>>(),
    })
}

/// `check`: full-row-rank verdict on the exogenous part and the protection
/// the unperturbed system already gives.
pub fn cmd_check(args: &CheckArgs, cfg: &RunConfig, tol: &Tolerance) -> Result<Outcome> {
    let (sys, rel) = load_system(&args.system)?;
    let targets = resolve_targets(&args.targets, cfg, &sys)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let view = sys.exogenous_part();
    let row_rank = match check_full_row_rank_everywhere(&view, tol, seed) {
        Ok(r) => json!({
            "holds": r.holds,
            "probe_rank": r.probe_rank,
            "required_rank": view.n() + view.q(),
            "invariant_zeros": r.invariant_zeros.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        }),
        Err(Error::StructuralViolation(msg)) => json!({
            "holds": false,
            "structural_violation": msg,
        }),
        Err(e) => return Err(e),
    };
    let z = z_star(&sys.a);
    let zero = Perturbation::zeros(sys.n(), sys.p(), rel.l());
    let baseline = design_l0::evaluate(&sys, &rel, zero, z, &targets, tol, seed)?;
    let report = json!({
        "system": system_summary(&sys, &rel),
        "targets": targets.to_string(),
        "full_row_rank": row_rank,
        "controllable": baseline.controllability.controllable,
        "baseline_protection": baseline.protection.to_json(),
    });
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(Outcome {
        code: EXIT_OK,
        report,
    })
}

/// JSON view of a design without the matrix itself.
pub fn design_summary(res: &DesignResult) -> Value {
    json!({
        "z": res.z,
        "rho": res.rho,
        "pencil_rank": res.pencil_rank,
        "rank_target_met": res.rank_target_met,
        "upper_bound": res.upper_bound,
        "objective": res.objective,
        "protection": res.protection.to_json(),
        "controllability": res.controllability,
        "certificate": res.certificate,
        "solver": res.solver,
        "seconds": res.seconds,
    })
}

enum RhoChoice {
    Auto,
    Fixed(usize),
}

fn parse_rho(text: Option<&String>) -> Result<RhoChoice> {
    match text.map(|s| s.trim()) {
        None | Some("auto") => Ok(RhoChoice::Auto),
        Some(s) => s
            .parse()
            .map(RhoChoice::Fixed)
            .map_err(|_| Error::InvalidArgument(format!("rho must be an integer or \"auto\", got '{s}'"))),
    }
}

/// `design`: writes `K.json`, `design.json` and the sweep or tuning CSV.
pub fn cmd_design(args: &DesignArgs, cfg: &RunConfig, tol: &Tolerance) -> Result<Outcome> {
    let (sys, rel) = load_system(&args.system)?;
    let targets = resolve_targets(&args.targets, cfg, &sys)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let eps = args.eps.or(cfg.eps).unwrap_or(0.1);
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let rho_text = args.rho.as_ref().or(cfg.rho.as_ref());

    let (res, mut report) = match args.mode {
        Mode::L0 => {
            let grid = args
                .c_grid
                .clone()
                .or_else(|| cfg.c_grid.clone())
                .unwrap_or_else(|| DEFAULT_C_GRID.to_vec());
            let jobs = args.jobs.or(cfg.jobs).unwrap_or(1);
            let base = L0DesignConfig {
                eps,
                tol: *tol,
                ..Default::default()
            };
            let runs = design_l0::sweep_c_designs(&sys, &rel, &targets, &grid, &base, seed, jobs)?;
            let rows: Vec<_> = runs.iter().map(|(r, _)| r.clone()).collect();
            let mut csv = Vec::new();
            write_sweep_csv(&rows, &mut csv)?;
            write_atomic(&out_dir.join("sweep.csv"), &csv)?;
            // Recommend the smallest c that protects every target and keeps
            // the pair controllable; otherwise the best coverage seen.
            let designs: Vec<&DesignResult> = runs.iter().filter_map(|(_, d)| d.as_ref()).collect();
            let pick = designs
                .iter()
                .position(|d| d.protection.all_protected && d.controllability.controllable)
                .or_else(|| {
                    (0..designs.len()).max_by_key(|&i| designs[i].protection.certified_count())
                });
            let Some(i) = pick else {
                return Err(Error::Solver(format!(
                    "every design of the sweep failed: {}",
                    rows.iter().filter_map(|r| r.error.clone()).collect::<Vec<_>>().join("; ")
                )));
            };
            let chosen = designs[i].clone();
            let c = runs.iter().find(|(_, d)| d.as_ref() == Some(&chosen)).map(|(r, _)| r.c);
            let report = json!({ "mode": "l0", "eps": eps, "c_grid": grid, "recommended_c": c });
            (chosen, report)
        }
        Mode::L2 => match parse_rho(rho_text)? {
            RhoChoice::Auto => {
                let tuned = tune_rho(&sys, &rel, &targets, tol)?;
                let mut csv = Vec::new();
                write_tune_csv(&tuned.history, &mut csv)?;
                write_atomic(&out_dir.join("tune.csv"), &csv)?;
                let report = json!({
                    "mode": "l2",
                    "rho_final": tuned.rho_final,
                    "stop": tuned.stop,
                    "not_achievable": tuned.not_achievable,
                });
                (tuned.result, report)
            }
            RhoChoice::Fixed(rho) => {
                let res = design_l2::algorithm1(&sys, &rel, &targets, rho, tol)?;
                (res, json!({ "mode": "l2" }))
            }
        },
        Mode::L2Sdp => {
            let rho = match parse_rho(rho_text)? {
                RhoChoice::Fixed(r) => r,
                RhoChoice::Auto => sys.n() + sys.q(),
            };
            let mut l2cfg = L2DesignConfig::new(rho);
            l2cfg.use_sdp_variant = true;
            l2cfg.eps = eps;
            l2cfg.c = args.c.or(cfg.c).unwrap_or(1.0);
            let res = design_l2::design(&sys, &rel, &targets, &l2cfg, seed)?;
            (res, json!({ "mode": "l2-sdp", "c": l2cfg.c, "eps": eps }))
        }
    };

    save_perturbation(&out_dir.join("K.json"), &res.k)?;
    let achieved = res.protection.all_protected;
    report["targets"] = Value::from(targets.to_string());
    report["system"] = system_summary(&sys, &rel);
    report["design"] = design_summary(&res);
    report["achieved"] = Value::from(achieved);
    write_json(&out_dir.join("design.json"), &report)?;
    Ok(Outcome {
        code: if achieved { EXIT_OK } else { EXIT_NOT_ACHIEVED },
        report,
    })
}

fn sim_summary(r: &SimReport, burn_in: usize) -> Value {
    let window = (r.disutility_series.len() / 4).max(1);
    json!({
        "mechanism": r.mechanism,
        "steady_state_disutility": r.steady_state_disutility(window),
        "max_relative_after_burn_in": r.max_relative_from(burn_in),
        "burn_in": burn_in,
    })
}

fn write_sim_csv(path: &Path, r: &SimReport) -> Result<()> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    write_atomic(path, &buf)
}

/// `simulate`: writes `iop.csv`, optionally `dp.csv`, and `simulation.json`.
pub fn cmd_simulate(args: &SimulateArgs, cfg: &RunConfig) -> Result<Outcome> {
    let (sys, rel) = load_system(&args.system)?;
    let k = load_perturbation(&args.k_file)?;
    k.check_dims(&sys, &rel)?;
    let defaults = Scenario::default();
    let scenario = Scenario {
        setpoint: args.setpoint.or(cfg.setpoint).unwrap_or(defaults.setpoint),
        horizon: args.horizon.or(cfg.horizon).unwrap_or(defaults.horizon),
        seed: args.seed.or(cfg.seed).unwrap_or(defaults.seed),
        ..defaults
    };
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let burn_in = 10.min(scenario.horizon);

    let iop = closed_loop_sim(&sys, &rel, &k, &scenario)?;
    write_sim_csv(&out_dir.join("iop.csv"), &iop)?;
    let mut report = json!({
        "system": system_summary(&sys, &rel),
        "scenario": scenario,
        "iop": sim_summary(&iop, burn_in),
    });
    if let Some(epsilon) = args.dp_eps.or(cfg.dp_eps) {
        let base = DpParams::default();
        let dp = DpParams {
            epsilon,
            delta: args.dp_delta.or(cfg.dp_delta).unwrap_or(base.delta),
            sensitivity: args.sensitivity.or(cfg.sensitivity).unwrap_or(base.sensitivity),
        };
        let noisy = dp_baseline(&sys, &rel, &dp, &scenario)?;
        write_sim_csv(&out_dir.join("dp.csv"), &noisy)?;
        report["dp"] = sim_summary(&noisy, burn_in);
        report["dp"]["sigma"] = Value::from(dp.sigma()?);
        report["dp"]["params"] = serde_json::to_value(dp)?;
    }
    write_json(&out_dir.join("simulation.json"), &report)?;
    Ok(Outcome {
        code: EXIT_OK,
        report,
    })
}

/// Read a matrix stored as nested row-major arrays.
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(&io::read_text(path)?)?;
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension(format!(
            "{} must hold a nonempty rectangular array of rows",
            path.display()
        )));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// `oracle`: brute-force references, printed and optionally written.
pub fn cmd_oracle(cmd: &OracleCommand, tol: &Tolerance) -> Result<Outcome> {
    let (report, out) = match cmd {
        OracleCommand::Nvp { matrix, out } => {
            let m = load_matrix(matrix)?;
            let r = oracles::sparsest_null_vector(&m, tol)?;
            let report = json!({
                "sparsity": r.sparsity,
                "support": r.support.iter().map(|j| j + 1).collect::<Vec<_>>(),
                "v_star": r.v_star.iter().collect::<Vec<_>>(),
                "subsets_examined": r.subsets_examined,
            });
            (report, out)
        }
        OracleCommand::Claim1 { matrix, out } => {
            let m = load_matrix(matrix)?;
            let r = oracles::claim1_check(&m, tol)?;
            let report = json!({
                "holds": r.holds,
                "nvp_sparsity": r.nvp_sparsity,
                "k_nonzeros": r.k_nonzeros,
                "stacked_rank": r.stacked_rank,
                "columns": m.ncols(),
            });
            (report, out)
        }
        OracleCommand::ZGrid {
            system,
            lo,
            hi,
            step,
            out,
        } => {
            let (sys, _) = load_system(system)?;
            let closed = z_star(&sys.a);
            let lo = lo.unwrap_or(closed - 10.0);
            let hi = hi.unwrap_or(closed + 10.0);
            let step = step.unwrap_or(1e-3);
            let grid = oracles::grid_min_frobenius(&sys, lo, hi, step)?;
            let report = json!({
                "z_grid": grid,
                "z_closed_form": closed,
                "difference": (grid - closed).abs(),
                "step": step,
            });
            (report, out)
        }
    };
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(Outcome {
        code: EXIT_OK,
        report,
    })
}
