mod manifest;
mod svg;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use scenario_jsr::blackbox::{observe_many, SampleSet, SwitchedSystem};
use scenario_jsr::certifier::{self, CertConfig, CertStatus, ValidationConfig};
use scenario_jsr::consensus::{self, NetworkConfig};
use scenario_jsr::qlp::{self, QlpInstance, Search, SolveOptions, SolveStatus};
use scenario_jsr::rng::stream;
use scenario_jsr::scenario::phi;

use manifest::{now_ms, sidecar, RunManifest};

const EXIT_ERROR: u8 = 1;
const EXIT_BOUND_UNDEFINED: u8 = 2;
const EXIT_UNCERTAIN: u8 = 3;
const EXIT_PRECONDITION: u8 = 4;
const EXIT_CONFIG: u8 = 5;

/// Data-driven stability certificates for switched linear systems.
#[derive(Parser, Debug)]
#[command(name = "scenario-jsr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Upper-bound the joint spectral radius from sampled transitions.
    Certify(CertifyArgs),
    /// Run the hidden-network consensus sweep.
    ConsensusDemo(DemoArgs),
    /// Solve a quasi-linear program given as JSON.
    QlpSolve(QlpArgs),
    /// Tabulate the scenario tail phi(eps, k, N).
    BetaTable(BetaArgs),
    /// Monte Carlo check of the certificate against a known system.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct CertifyArgs {
    /// Observations CSV (`# n=<n>` header, rows `x,y`).
    #[arg(long, conflicts_with = "simulate", required_unless_present = "simulate")]
    obs: Option<PathBuf>,
    /// System JSON to sample from instead of reading observations.
    #[arg(long, requires = "samples")]
    simulate: Option<PathBuf>,
    /// Number of simulated observations.
    #[arg(long)]
    samples: Option<usize>,
    /// Number of modes `m`; read from the system file when simulating.
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    /// Frobenius cap on P (default 10 n).
    #[arg(long = "cap-C")]
    cap_c: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Assert that no mode admits A^T P A = gamma^2 P with P positive definite.
    #[arg(long)]
    assume_no_barabanov: bool,
    /// Certificate JSON path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also save the simulated observations as CSV.
    #[arg(long, requires = "simulate")]
    write_obs: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// Number of nodes.
    #[arg(long)]
    n: Option<usize>,
    /// Number of modes.
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Product depth of the white-box bracket.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    p_edge: Option<f64>,
    /// Use identity modes.
    #[arg(long)]
    identity: bool,
    /// Frobenius cap on P (default n - 1).
    #[arg(long = "cap-C")]
    cap_c: Option<f64>,
    #[arg(long, default_value = "consensus-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct QlpArgs {
    /// Problem JSON.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    tol_lambda: Option<f64>,
    #[arg(long, default_value_t = qlp::DEFAULT_TOL_FEAS)]
    tol_feas: f64,
    #[arg(long, default_value_t = qlp::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Known feasible upper end of the lambda bracket.
    #[arg(long)]
    lambda_hi: Option<f64>,
    /// Bisect on sqrt(lambda).
    #[arg(long)]
    sqrt_search: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BetaArgs {
    #[arg(long, value_delimiter = ',', default_value = "2")]
    k: Vec<u64>,
    #[arg(long = "N", value_delimiter = ',', default_value = "50")]
    samples: Vec<u64>,
    /// Explicit eps values; overrides the linear grid.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.01)]
    eps_min: f64,
    #[arg(long, default_value_t = 0.5)]
    eps_max: f64,
    #[arg(long, default_value_t = 50)]
    eps_count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// System JSON.
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Fresh samples per violation estimate.
    #[arg(long, default_value_t = 2000)]
    fresh: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long = "cap-C")]
    cap_c: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<scenario_jsr::Error>() {
        Some(scenario_jsr::Error::Precondition(_) | scenario_jsr::Error::Barabanov { .. }) => EXIT_PRECONDITION,
        Some(scenario_jsr::Error::Config(_)) => EXIT_CONFIG,
        _ => EXIT_ERROR,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SCENARIO_JSR_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| scenario_jsr::Error::Config(format!("SCENARIO_JSR_THREADS must be a count, got `{raw}`")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

/// Writes `text` to `out` with a manifest beside it, or to stdout.
fn emit(out: Option<&Path>, text: &str, manifest: impl FnOnce() -> RunManifest) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            manifest().write(&sidecar(path))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_system(path: &Path) -> Result<SwitchedSystem> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SwitchedSystem::from_json(&text)?)
}

fn certify(args: CertifyArgs) -> Result<u8> {
    let started = now_ms();
    if !args.assume_no_barabanov {
        return Err(scenario_jsr::Error::Precondition(
            "the bound is only valid when no mode satisfies A^T P A = gamma^2 P for a positive definite P; \
             pass --assume-no-barabanov to assert this"
                .into(),
        )
        .into());
    }
    let (obs, m) = match (&args.obs, &args.simulate) {
        (Some(path), _) => {
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let obs = SampleSet::read_csv(BufReader::new(file))?;
            let m = args.modes.ok_or_else(|| anyhow!("--modes is required with --obs"))?;
            (obs, m)
        }
        (None, Some(path)) => {
            let sys = read_system(path)?;
            let samples = args.samples.expect("clap enforces --samples");
            let obs = observe_many(&sys, samples, &mut stream(args.seed, 0));
            if let Some(save) = &args.write_obs {
                let file = fs::File::create(save).with_context(|| format!("creating {}", save.display()))?;
                obs.write_csv(std::io::BufWriter::new(file))?;
            }
            (obs, args.modes.unwrap_or(sys.m()))
        }
        (None, None) => bail!("either --obs or --simulate is required"),
    };
    let cfg = CertConfig { cap_c: args.cap_c, ..CertConfig::with_beta(args.beta) };
    let mut cert = certifier::certify(&obs, m, &cfg)?;
    if args.simulate.is_some() {
        cert.seed = Some(args.seed);
    }
    let text = cert.to_json()? + "\n";
    let config = json!({
        "obs": args.obs, "simulate": args.simulate, "samples": args.samples, "modes": m,
        "beta": args.beta, "cap_C": cfg.cap_for(obs.n())?,
    });
    emit(args.out.as_deref(), &text, || RunManifest::new("certify", config, cert.seed, started))?;
    eprintln!(
        "gamma* = {:.6}, kappa = {:.4}, bound = {}, status = {:?}",
        cert.gamma_star,
        cert.kappa,
        cert.bound_this_paper.map_or("undefined".to_string(), |b| format!("{b:.6}")),
        cert.status
    );
    Ok(match cert.status {
        CertStatus::Certified => 0,
        CertStatus::BoundUndefined => {
            if let Some(n) = cert.suggested_min_samples {
                eprintln!("bound undefined at this kappa; about N = {n} samples would define it");
            }
            EXIT_BOUND_UNDEFINED
        }
        CertStatus::FeasibilityUncertain => EXIT_UNCERTAIN,
    })
}

fn consensus_demo(args: DemoArgs) -> Result<u8> {
    let started = now_ms();
    let defaults = NetworkConfig::default();
    let cfg = NetworkConfig {
        n: args.n.unwrap_or(defaults.n),
        m: args.modes.unwrap_or(defaults.m),
        beta: args.beta.unwrap_or(defaults.beta),
        n_grid: args.n_grid.unwrap_or(defaults.n_grid),
        seed: args.seed.unwrap_or(defaults.seed),
        depth: args.depth.unwrap_or(defaults.depth),
        p_edge: args.p_edge.unwrap_or(defaults.p_edge),
        identity: args.identity,
        cap_c: args.cap_c,
    };
    let sweep = consensus::consensus_sweep(&cfg)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let csv = args.out_dir.join("sweep.csv");
    fs::write(&csv, consensus::sweep_csv(&sweep.rows)).with_context(|| format!("writing {}", csv.display()))?;
    let chart = args.out_dir.join("sweep.svg");
    fs::write(&chart, svg::sweep_chart(&sweep.rows)).with_context(|| format!("writing {}", chart.display()))?;
    let config = json!({ "network": cfg, "system_redraws": sweep.redraws });
    RunManifest::new("consensus-demo", config, Some(cfg.seed), started).write(&sidecar(&csv))?;
    for r in &sweep.rows {
        eprintln!("N = {:>6}  bound1 = {:?}  bound2 = {:?}  status = {:?}", r.samples, r.bound1, r.bound2, r.status);
    }
    Ok(0)
}

fn qlp_solve(args: QlpArgs) -> Result<u8> {
    let started = now_ms();
    let text = fs::read_to_string(&args.problem).with_context(|| format!("reading {}", args.problem.display()))?;
    let inst = QlpInstance::from_json(&text)?;
    let opts = SolveOptions {
        tol_lambda: args.tol_lambda,
        tol_feas: args.tol_feas,
        max_iter: args.max_iter,
        lambda_hi: args.lambda_hi,
        search: if args.sqrt_search { Search::SqrtLambda } else { Search::Lambda },
    };
    let sol = qlp::solve(&inst, &opts)?;
    let out = serde_json::to_string_pretty(&sol)? + "\n";
    let config = json!({ "problem": args.problem, "options": opts });
    emit(args.out.as_deref(), &out, || RunManifest::new("qlp-solve", config, None, started))?;
    Ok(if sol.status == SolveStatus::Optimal { 0 } else { EXIT_UNCERTAIN })
}

fn beta_table(args: BetaArgs) -> Result<u8> {
    let started = now_ms();
    let grid = match &args.eps {
        Some(list) => list.clone(),
        None => {
            if args.eps_count == 0 || !(args.eps_min < args.eps_max) {
                bail!("eps grid needs eps-count >= 1 and eps-min < eps-max");
            }
            let step = if args.eps_count > 1 { (args.eps_max - args.eps_min) / (args.eps_count - 1) as f64 } else { 0.0 };
            (0..args.eps_count).map(|i| args.eps_min + step * i as f64).collect()
        }
    };
    let mut csv = String::from("eps,k,N,phi\n");
    for &k in &args.k {
        for &n in &args.samples {
            for &eps in &grid {
                csv.push_str(&format!("{eps:.16e},{k},{n},{:.16e}\n", phi(eps, k, n)?));
            }
        }
    }
    let config = json!({ "k": args.k, "N": args.samples, "eps": grid });
    emit(args.out.as_deref(), &csv, || RunManifest::new("beta-table", config, None, started))?;
    Ok(0)
}

fn validate(args: ValidateArgs) -> Result<u8> {
    let started = now_ms();
    let sys = read_system(&args.system)?;
    let cfg = CertConfig { cap_c: args.cap_c, ..CertConfig::with_beta(args.beta) };
    let vcfg = ValidationConfig {
        samples: args.samples,
        trials: args.trials,
        fresh: args.fresh,
        depth: args.depth,
        seed: args.seed,
    };
    let report = certifier::validate_certificate_montecarlo(&sys, &cfg, &vcfg)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    let config = json!({ "system": args.system, "beta": args.beta, "cap_C": args.cap_c, "validation": vcfg });
    emit(args.out.as_deref(), &text, || RunManifest::new("validate", config, Some(args.seed), started))?;
    eprintln!(
        "bound failures {:.3}, violation frequency {:.3} (threshold {:.3})",
        report.bound_failure_freq, report.violation_freq, report.threshold
    );
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Certify(a) => certify(a),
        Command::ConsensusDemo(a) => consensus_demo(a),
        Command::QlpSolve(a) => qlp_solve(a),
        Command::BetaTable(a) => beta_table(a),
        Command::Validate(a) => validate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
