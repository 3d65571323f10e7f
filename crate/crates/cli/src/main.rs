use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use binsurv::copsim::{empirical_sizes, load_grid, size_grid, sizes_tsv, Scenario, SizeReport};
use binsurv::lstat::{sigma_b2_hat, u_binary, upper_tail};
use binsurv::{
    parse_csv, CovarianceForm, Error, Fitted, StepFunction, Strictness, StudyConfig, TrialDataset,
    WeightSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "binsurv",
    version,
    about = "Two-sample tests combining a binary endpoint with a weighted Kaplan-Meier survival endpoint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Combined standardized statistic
    Lstats(Analysis),
    /// Binary endpoint alone: difference in proportions
    Bintest(Analysis),
    /// Survival endpoint alone: weighted integrated Kaplan-Meier difference
    Survtest(Analysis),
    /// Covariance and correlation of the binary and survival scores
    Cov(Analysis),
    /// Kaplan-Meier curves as TSV
    Kmdump(Analysis),
    /// Monte Carlo rejection rates over a scenario grid
    Simulate(Simulate),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Args)]
struct Analysis {
    /// CSV with columns time,status,binary,treat
    input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    tau0: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    taub: f64,
    /// Exponent of the pooled survival estimate in the weight
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Exponent of one minus the pooled survival estimate
    #[arg(long, default_value_t = 0.0)]
    gam: f64,
    /// Exponent of the pooled censoring estimate
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Weight of the binary endpoint
    #[arg(long, default_value_t = 0.5)]
    wb: f64,
    /// Weight of the survival endpoint
    #[arg(long, default_value_t = 0.5)]
    ws: f64,
    /// Variance estimator: pooled or unpooled
    #[arg(long = "var-est", default_value = "pooled")]
    var_est: String,
    /// Kernel bandwidth for the joint hazard (default (taub - tau0) / 8)
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Two-level weight: a before taub and 1 - a after
    #[arg(long = "piecewise-a")]
    piecewise_a: Option<f64>,
    /// Use the variance-stabilizing censoring weight instead of G^eta
    #[arg(long)]
    vc: bool,
    /// Report estimates exhausted before tau instead of refusing them
    #[arg(long)]
    lenient: bool,
    /// Covariance estimator: kernel or risk-set
    #[arg(long = "cov-form", default_value = "kernel")]
    cov_form: String,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct Simulate {
    /// JSON array of scenarios
    #[arg(long, conflicts_with = "builtin_grid")]
    grid: Option<PathBuf>,
    /// Use the built-in type-I-error grid
    #[arg(long = "builtin-grid")]
    builtin_grid: bool,
    /// Subjects per arm for the built-in grid
    #[arg(long = "n-per-arm", default_value_t = 500)]
    n_per_arm: usize,
    /// Cross every built-in cell with every weight combination
    #[arg(long = "all-weights")]
    all_weights: bool,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Base seed; cell k uses seed + k
    #[arg(long)]
    seed: Option<u64>,
    /// Write results here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

enum Failure {
    Usage(String),
    Assumption(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            e if e.is_assumption_violation() => Failure::Assumption(e.to_string()),
            Error::TooManyExclusions { .. } => Failure::Assumption(e.to_string()),
            Error::Schema(_)
            | Error::Row { .. }
            | Error::InvalidInput(_)
            | Error::Config(_)
            | Error::Unsupported(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Io(_) => Failure::Usage(e.to_string()),
            e => Failure::Internal(e.to_string()),
        }
    }
}

type Outcome = Result<String, Failure>;

impl Analysis {
    fn config(&self) -> Result<StudyConfig, Error> {
        let cfg = StudyConfig {
            tau0: self.tau0,
            tau_b: self.taub,
            tau: self.tau,
            omega_b: self.wb,
            omega_s: self.ws,
            weights: WeightSpec {
                eta: self.eta,
                rho: self.rho,
                gamma: self.gam,
                piecewise_a: self.piecewise_a,
                use_vc: self.vc,
            },
            variance_mode: self.var_est.parse()?,
            bandwidth: self.bandwidth,
            covariance: self.cov_form.parse::<CovarianceForm>()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn strictness(&self) -> Strictness {
        if self.lenient {
            Strictness::Computable
        } else {
            Strictness::Assumptions
        }
    }

    fn load(&self) -> Result<(TrialDataset, StudyConfig), Error> {
        let cfg = self.config()?;
        let text = fs::read_to_string(&self.input)?;
        Ok((parse_csv(&text)?, cfg))
    }
}

/// Fits and refuses data failing a blocking assumption check.
fn checked_fit<'a>(
    ds: &'a TrialDataset,
    cfg: &'a StudyConfig,
    strictness: Strictness,
) -> Result<Fitted<'a>, Failure> {
    let fit = Fitted::with_strictness(ds, cfg, strictness)?;
    let report = fit.validation(strictness);
    if report.is_blocking() {
        return Err(Error::Assumption(Box::new(report)).into());
    }
    Ok(fit)
}

fn render(value: Value, format: Format) -> String {
    match format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&value).expect("json")),
        Format::Tsv => {
            let mut rows = Vec::new();
            flatten("", &value, &mut rows);
            let mut out = String::from("key\tvalue\n");
            for (k, v) in rows {
                out.push_str(&format!("{k}\t{v}\n"));
            }
            out
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn run_lstats(a: &Analysis) -> Outcome {
    let (ds, cfg) = a.load()?;
    let fit = checked_fit(&ds, &cfg, a.strictness())?;
    let report = fit.report(cfg.variance_mode)?;
    let value = serde_json::to_value(&report).map_err(Error::from)?;
    Ok(render(value, a.format))
}

fn run_bintest(a: &Analysis) -> Outcome {
    let (ds, cfg) = a.load()?;
    let (u_b, p0, p1) = u_binary(&ds);
    let sigma = sigma_b2_hat(&ds, cfg.variance_mode)?.sqrt();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateVariance("binary variance estimate is zero".into()).into());
    }
    let z = u_b / sigma;
    Ok(render(
        json!({
            "u_b": u_b,
            "sigma_b_hat": sigma,
            "z": z,
            "p_value": upper_tail(z),
            "p_hat": [p0, p1],
            "variance_mode": cfg.variance_mode,
        }),
        a.format,
    ))
}

fn run_survtest(a: &Analysis) -> Outcome {
    let (ds, cfg) = a.load()?;
    let fit = checked_fit(&ds, &cfg, a.strictness())?;
    let u_s = fit.u_survival();
    let sigma = fit.sigma_s2(cfg.variance_mode)?.sqrt();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateVariance("survival variance estimate is zero".into()).into());
    }
    let z = u_s / sigma;
    Ok(render(
        json!({
            "u_s": u_s,
            "sigma_s_hat": sigma,
            "z": z,
            "p_value": upper_tail(z),
            "variance_mode": cfg.variance_mode,
        }),
        a.format,
    ))
}

fn run_cov(a: &Analysis) -> Outcome {
    let (ds, cfg) = a.load()?;
    let fit = checked_fit(&ds, &cfg, a.strictness())?;
    let mode = cfg.variance_mode;
    let sigma_b = fit.sigma_b2(mode)?.sqrt();
    let sigma_s = fit.sigma_s2(mode)?.sqrt();
    let sigma_bs = fit.sigma_bs(mode)?;
    let rho = if sigma_b > 0.0 && sigma_s > 0.0 {
        (sigma_bs / (sigma_b * sigma_s)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok(render(
        json!({
            "sigma_b_hat": sigma_b,
            "sigma_s_hat": sigma_s,
            "sigma_bs_hat": sigma_bs,
            "rho_hat": rho,
            "variance_mode": mode,
            "covariance": cfg.covariance,
        }),
        a.format,
    ))
}

fn run_kmdump(a: &Analysis) -> Outcome {
    let (ds, cfg) = a.load()?;
    let fit = Fitted::with_strictness(&ds, &cfg, Strictness::Computable)?;
    let c = fit.curves();
    let mut curves: Vec<(String, &StepFunction)> = Vec::new();
    for i in 0..2 {
        curves.push((format!("survival_{i}"), &c.survival[i]));
        curves.push((format!("censoring_{i}"), &c.censoring[i]));
        if let Some(s) = &c.responder_survival[i] {
            curves.push((format!("responder_survival_{i}"), s));
        }
    }
    curves.push(("pooled_survival".into(), &c.pooled_survival));
    curves.push(("pooled_censoring".into(), &c.pooled_censoring));
    let mut out = String::from("curve\ttime\tvalue\n");
    for (name, f) in curves {
        out.push_str(&format!("{name}\t0\t{}\n", f.initial_value()));
        for (t, v) in f.breakpoints().iter().zip(f.values()) {
            out.push_str(&format!("{name}\t{t}\t{v}\n"));
        }
    }
    Ok(out)
}

fn run_simulate(s: &Simulate) -> Outcome {
    if s.reps == 0 {
        return Err(Failure::Usage("--reps must be positive".into()));
    }
    if !(s.alpha > 0.0 && s.alpha <= 1.0) {
        return Err(Failure::Usage(format!(
            "--alpha must lie in (0, 1], got {}",
            s.alpha
        )));
    }
    let mut grid: Vec<Scenario> = match (&s.grid, s.builtin_grid) {
        (Some(path), _) => load_grid(&fs::read_to_string(path).map_err(Error::from)?)?,
        (None, true) => size_grid(s.n_per_arm, s.seed.unwrap_or(0), s.all_weights),
        (None, false) => {
            return Err(Failure::Usage(
                "give --grid <file> or --builtin-grid".into(),
            ))
        }
    };
    if let Some(seed) = s.seed {
        for (k, sc) in grid.iter_mut().enumerate() {
            sc.seed = seed.wrapping_add(k as u64);
        }
    }
    if let Some(n) = s.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let reports: Vec<SizeReport> = grid
        .iter()
        .map(|sc| {
            log::info!("simulating {}", sc.label());
            empirical_sizes(sc, s.reps, s.alpha)
        })
        .collect::<Result<_, _>>()?;
    let out = match s.format {
        Format::Tsv => sizes_tsv(&reports),
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&reports).map_err(Error::from)?
        ),
    };
    match &s.output {
        Some(path) => {
            fs::write(path, out).map_err(Error::from)?;
            Ok(String::new())
        }
        None => Ok(out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = std::panic::catch_unwind(|| match &cli.command {
        Command::Lstats(a) => run_lstats(a),
        Command::Bintest(a) => run_bintest(a),
        Command::Survtest(a) => run_survtest(a),
        Command::Cov(a) => run_cov(a),
        Command::Kmdump(a) => run_kmdump(a),
        Command::Simulate(s) => run_simulate(s),
    })
    .unwrap_or_else(|_| Err(Failure::Internal("unexpected panic".into())));
    match outcome {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(text.as_bytes()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Assumption(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
