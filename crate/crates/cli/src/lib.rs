//! Command-line front end: argument parsing, dispatch and output records.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use wor_core::asymptotics::{Mode, Regime, RegimeSpec, Significance};
use wor_core::detection::{
    detect_prob, detect_threshold, optimal_lambda_detection, required_gap, DetectionSetting,
};
use wor_core::exact::{delta_z_schedule, ucl_exact, ucl_iid_exact, ucl_sandwich, TestDesign};
use wor_core::figures::{self, round_sig, Dataset};
use wor_core::oracle::{
    simulate_protocol, simulate_protocol_parallel, ucl_oracle_lp, Sampler, Truth,
};
use wor_core::planners::{
    max_failures_exact, min_n_constant_exact, min_n_iid_constant_exact, min_n_iid_linear_exact,
    min_n_linear_exact, plan_asymptotics, PlanQuery,
};
use wor_core::special::std_normal_cdf;
use wor_core::verify::{run_all, VerifyGrid};

pub const OUT_DIR_ENV: &str = "WOR_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wor", version, about = "Confidence limits for randomized tests under sampling without replacement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Upper confidence limit for a single design.
    Ucl(UclArgs),
    /// Smallest sample size meeting a target limit.
    Plan(PlanArgs),
    /// Largest failure budget meeting a target limit at a fixed sample size.
    MaxFailures(MaxFailuresArgs),
    /// Limiting detection probability.
    Detect(DetectArgs),
    /// Monte Carlo run of the sampling protocol.
    Simulate(SimulateArgs),
    /// Oracle-equivalence and invariant suites.
    Verify(VerifyArgs),
    /// Plot-ready datasets.
    Curve(CurveArgs),
}

#[derive(Debug, Args)]
pub struct UclArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long, required_unless_present = "iid")]
    pub l: Option<u64>,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, required_unless_present = "iid")]
    pub lambda: Option<f64>,
    /// Also report the iid benchmark with this many failures.
    #[arg(long, value_name = "K")]
    pub iid: Option<u64>,
    /// Also report the analytic brackets of the complement.
    #[arg(long)]
    pub bounds: bool,
    /// Also report the brute-force oracle value.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Linear,
    Constant,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeArg,
    /// Failure fraction for the linear regime.
    #[arg(long, required_if_eq("regime", "linear"))]
    pub s: Option<f64>,
    /// Failure count for the constant regime.
    #[arg(long, required_if_eq("regime", "constant"))]
    pub k0: Option<u64>,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, required_unless_present_any = ["iid", "optimal"])]
    pub lambda: Option<f64>,
    /// Plan for the iid benchmark.
    #[arg(long, conflicts_with = "lambda")]
    pub iid: bool,
    /// Leading-order formula instead of the exact search.
    #[arg(long)]
    pub asymptotic: bool,
    /// Use the small-delta formula (with --asymptotic).
    #[arg(long, requires = "asymptotic")]
    pub small_delta: bool,
    /// Minimise over lambda (linear regime, with --asymptotic).
    #[arg(long, requires = "asymptotic", conflicts_with_all = ["lambda", "iid"])]
    pub optimal: bool,
}

#[derive(Debug, Args)]
pub struct MaxFailuresArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, required_unless_present = "iid")]
    pub lambda: Option<f64>,
    #[arg(long, conflicts_with = "lambda")]
    pub iid: bool,
    /// Also report the large-n formula.
    #[arg(long)]
    pub asymptotic: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub theta0: f64,
    /// The drift difference `e - t`.
    #[arg(long)]
    pub gap: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, required_unless_present = "optimal")]
    pub lambda: Option<f64>,
    /// Use the detection-maximising lambda.
    #[arg(long, conflicts_with = "lambda")]
    pub optimal: bool,
    /// Also report the gap needed for this detection probability.
    #[arg(long)]
    pub p0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `vertex:Z` or `iid:THETA`.
    #[arg(long, value_parser = parse_truth)]
    pub truth: Truth,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub l: u64,
    /// Also report the exact limit at this level.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
    /// Split the trials over this many seeded streams.
    #[arg(long)]
    pub workers: Option<u64>,
    /// Draw every variable instead of the sufficient counts.
    #[arg(long, conflicts_with = "workers")]
    pub explicit: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Sets every sample-size grid at once.
    #[arg(long)]
    pub max_n: Option<u64>,
    #[arg(long, default_value_t = 40)]
    pub oracle_max_n: u64,
    #[arg(long, default_value_t = 50)]
    pub schedule_max_n: u64,
    #[arg(long, default_value_t = 60)]
    pub monotone_max_n: u64,
    #[arg(long, default_value_t = 200)]
    pub tail_max_z: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureArg {
    ConstUcl,
    LinearUcl,
    OptLambda,
    DetectProb,
}

impl FigureArg {
    pub fn name(self) -> &'static str {
        match self {
            Self::ConstUcl => "const-ucl",
            Self::LinearUcl => "linear-ucl",
            Self::OptLambda => "opt-lambda",
            Self::DetectProb => "detect-prob",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, value_enum)]
    pub figure: FigureArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; defaults to `$WOR_OUT_DIR/<figure>.<format>` when that
    /// variable is set, standard output otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k0: Option<u64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub n_max: Option<u64>,
    #[arg(long)]
    pub n_step: Option<u64>,
    #[arg(long)]
    pub lambda_grid: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    #[arg(long)]
    pub theta0: Option<f64>,
    #[arg(long)]
    pub gap_max: Option<f64>,
    #[arg(long)]
    pub gap_step: Option<f64>,
}

fn parse_truth(raw: &str) -> Result<Truth, String> {
    let (kind, value) = raw
        .split_once(':')
        .ok_or_else(|| format!("truth `{raw}` must be vertex:Z or iid:THETA"))?;
    match kind {
        "vertex" => value.parse().map(Truth::Vertex).map_err(|e| format!("vertex count: {e}")),
        "iid" => value.parse().map(Truth::Iid).map_err(|e| format!("iid probability: {e}")),
        _ => Err(format!("unknown truth kind `{kind}`")),
    }
}

/// Standard output and exit code of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub stdout: String,
    pub code: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<wor_core::Error> for UsageError {
    fn from(e: wor_core::Error) -> Self {
        Self(e.to_string())
    }
}

type CmdResult<T> = Result<T, UsageError>;

/// Rounds every non-integer number to 12 significant digits.
pub fn round_floats(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            json!(round_sig(n.as_f64().expect("f64 number")))
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect())
        }
        other => other,
    }
}

fn record(command: &str, params: Value, result: Value) -> String {
    let mut map = Map::new();
    map.insert("command".into(), json!(command));
    map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    map.insert("params".into(), params);
    map.insert("result".into(), result);
    let mut line = serde_json::to_string(&round_floats(Value::Object(map))).expect("json");
    line.push('\n');
    line
}

fn ok(stdout: String) -> Output {
    Output { stdout, code: EXIT_OK }
}

fn mode_for(lambda: Option<f64>, iid: bool) -> (Mode, f64) {
    match (iid, lambda) {
        (true, _) => (Mode::Iid, 0.0),
        (false, Some(0.0)) => (Mode::Deterministic, 0.0),
        (false, Some(l)) => (Mode::Randomized, l),
        (false, None) => (Mode::Randomized, f64::NAN),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("serializable")
}

pub fn run(cli: Cli) -> Result<Output, UsageError> {
    match cli.command {
        Command::Ucl(a) => cmd_ucl(a),
        Command::Plan(a) => cmd_plan(a),
        Command::MaxFailures(a) => cmd_max_failures(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Curve(a) => cmd_curve(a),
    }
}

fn cmd_ucl(a: UclArgs) -> CmdResult<Output> {
    let mut result = Map::new();
    if let (Some(l), Some(lambda)) = (a.l, a.lambda) {
        let design = TestDesign::new(a.n, l, a.delta, lambda)?;
        let bound = ucl_exact(&design);
        result.insert("epsilon_bar".into(), json!(bound.epsilon_bar));
        result.insert("method".into(), to_json(&bound.method));
        result.insert("z_hat".into(), json!(bound.z_hat));
        if a.bounds {
            result.insert("sandwich".into(), to_json(&ucl_sandwich(&design)?));
        }
        if a.oracle {
            result.insert("oracle".into(), json!(ucl_oracle_lp(&design)?.epsilon_bar));
        }
    } else if a.bounds || a.oracle {
        return Err(UsageError("--bounds and --oracle need --l and --lambda".into()));
    }
    if let Some(k) = a.iid {
        result.insert("iid".into(), json!(ucl_iid_exact(k, a.n, a.delta)?.epsilon_bar));
    }
    let params = json!({"n": a.n, "l": a.l, "delta": a.delta, "lambda": a.lambda, "iid": a.iid});
    Ok(ok(record("ucl", params, Value::Object(result))))
}

fn cmd_plan(a: PlanArgs) -> CmdResult<Output> {
    let (mode, lambda) = mode_for(a.lambda, a.iid);
    let params = json!({
        "regime": format!("{:?}", a.regime).to_lowercase(),
        "s": a.s, "k0": a.k0, "eps": a.eps, "delta": a.delta, "lambda": a.lambda,
        "iid": a.iid, "asymptotic": a.asymptotic, "small_delta": a.small_delta,
        "optimal": a.optimal,
    });
    let regime = match a.regime {
        RegimeArg::Linear => Regime::Linear { s: a.s.expect("clap requires s") },
        RegimeArg::Constant => Regime::Constant { k0: a.k0.expect("clap requires k0") },
    };
    if a.optimal && a.regime != RegimeArg::Linear {
        return Err(UsageError("--optimal applies to the linear regime".into()));
    }
    let spec = RegimeSpec::new(regime, Significance::Fixed(a.delta))?;
    let result = if a.asymptotic {
        let (eps, delta) = (a.eps, a.delta);
        let query = match (regime, a.small_delta, a.optimal) {
            (Regime::Linear { s }, _, true) => PlanQuery::LinearSmallEpsOptimal { s, eps, delta },
            (Regime::Linear { s }, false, false) => PlanQuery::LinearSmallEps { mode, lambda, s, eps, delta },
            (Regime::Linear { s }, true, false) => PlanQuery::LinearSmallDelta { mode, lambda, s, eps, delta },
            (Regime::Constant { k0 }, false, _) => PlanQuery::ConstantSmallEps { mode, lambda, k0, eps, delta },
            (Regime::Constant { k0 }, true, _) => PlanQuery::ConstantSmallDelta { mode, lambda, k0, eps, delta },
        };
        json!({"n": plan_asymptotics(query)?, "method": "asymptotic"})
    } else {
        let plan = match (regime, mode) {
            (Regime::Linear { s }, Mode::Iid) => min_n_iid_linear_exact(s, a.eps, a.delta)?,
            (Regime::Linear { s }, _) => min_n_linear_exact(s, a.eps, a.delta, lambda)?,
            (Regime::Constant { k0 }, Mode::Iid) => min_n_iid_constant_exact(k0, a.eps, a.delta)?,
            (Regime::Constant { .. }, _) => {
                let l = spec.budget(0, lambda, mode);
                min_n_constant_exact(l, a.eps, a.delta, lambda)?
            }
        };
        json!({
            "n": plan.value,
            "method": to_json(&plan.method),
            "certificate": plan.certificate.map(|(at, before)| json!({"at_n": at, "at_n_minus_1": before})),
        })
    };
    Ok(ok(record("plan", params, result)))
}

fn cmd_max_failures(a: MaxFailuresArgs) -> CmdResult<Output> {
    let (mode, lambda) = mode_for(a.lambda, a.iid);
    let params = json!({
        "n": a.n, "eps": a.eps, "delta": a.delta, "lambda": a.lambda,
        "iid": a.iid, "asymptotic": a.asymptotic,
    });
    let plan = max_failures_exact(a.n, a.eps, a.delta, lambda, mode)?;
    let mut result = json!({
        "l": plan.map(|p| p.value),
        "method": "exact-search",
        "certificate": plan.and_then(|p| p.certificate).map(|(at, next)| json!({"at_l": at, "at_l_plus_1": next})),
    });
    if a.asymptotic {
        let q = PlanQuery::MaxFailures { mode, lambda, n: a.n, eps: a.eps, delta: a.delta };
        result["asymptotic"] = json!(plan_asymptotics(q)?);
    }
    Ok(ok(record("max-failures", params, result)))
}

fn cmd_detect(a: DetectArgs) -> CmdResult<Output> {
    let params = json!({
        "theta0": a.theta0, "gap": a.gap, "delta": a.delta,
        "lambda": a.lambda, "optimal": a.optimal, "p0": a.p0,
    });
    let base = DetectionSetting::new(a.theta0, a.gap, 0.0, a.delta, 0.0)?;
    let iid = detect_prob(&base, Mode::Iid);
    let (lambda, threshold) = if a.optimal {
        let opt = optimal_lambda_detection(a.theta0, a.gap, a.delta)?;
        (opt.lambda, opt.kappa)
    } else {
        let lambda = a.lambda.expect("clap requires lambda");
        let setting = DetectionSetting::new(a.theta0, a.gap, 0.0, a.delta, lambda)?;
        let mode = if lambda == 0.0 { Mode::Deterministic } else { Mode::Randomized };
        (lambda, detect_threshold(&setting, mode))
    };
    let mut result = json!({
        "lambda": lambda,
        "threshold": threshold.is_finite().then_some(threshold),
        "probability": std_normal_cdf(threshold),
        "iid_probability": iid,
    });
    if let Some(p0) = a.p0 {
        if lambda > 0.0 && lambda < 1.0 {
            result["required_gap"] = json!(required_gap(a.theta0, a.delta, lambda, p0)?);
        } else {
            return Err(UsageError("--p0 needs lambda in (0, 1)".into()));
        }
    }
    Ok(ok(record("detect", params, result)))
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult<Output> {
    let truth_tag = match a.truth {
        Truth::Vertex(z) => format!("vertex:{z}"),
        Truth::Iid(theta) => format!("iid:{}", figures::format_sig(theta)),
    };
    let params = json!({
        "truth": truth_tag, "n": a.n, "l": a.l, "delta": a.delta, "lambda": a.lambda,
        "trials": a.trials, "seed": a.seed, "workers": a.workers, "explicit": a.explicit,
    });
    // The level does not enter the protocol; it only selects the reported limit.
    let design = TestDesign::new(a.n, a.l, a.delta.unwrap_or(0.5), a.lambda)?;
    let outcome = match a.workers {
        Some(w) => simulate_protocol_parallel(a.truth, &design, a.trials, a.seed, w)?,
        None => {
            let sampler = if a.explicit { Sampler::Explicit } else { Sampler::Sufficient };
            simulate_protocol(a.truth, &design, a.trials, a.seed, sampler)?
        }
    };
    let mut result = to_json(&outcome);
    if let (Truth::Vertex(z), 0) = (a.truth, a.l) {
        if a.lambda > 0.0 && a.lambda < 1.0 {
            let (level, limit) = delta_z_schedule(a.n, a.lambda, z)?;
            result["vertex_acceptance"] = json!(level);
            result["vertex_limit"] = json!(limit);
        }
    }
    if a.delta.is_some() {
        result["epsilon_bar"] = json!(ucl_exact(&design).epsilon_bar);
    }
    Ok(ok(record("simulate", params, result)))
}

fn cmd_verify(a: VerifyArgs) -> CmdResult<Output> {
    let grid = match a.max_n {
        Some(n) => VerifyGrid {
            oracle_max_n: n,
            schedule_max_n: n,
            monotone_max_n: n,
            tail_max_z: a.tail_max_z,
        },
        None => VerifyGrid {
            oracle_max_n: a.oracle_max_n,
            schedule_max_n: a.schedule_max_n,
            monotone_max_n: a.monotone_max_n,
            tail_max_z: a.tail_max_z,
        },
    };
    let reports = run_all(&grid);
    let passed = reports.iter().all(|r| r.passed());
    let result = json!({"passed": passed, "suites": to_json(&reports)});
    Ok(Output {
        stdout: record("verify", to_json(&grid), result),
        code: if passed { EXIT_OK } else { EXIT_VERIFY_FAILED },
    })
}

fn build_dataset(a: &CurveArgs) -> CmdResult<Dataset> {
    let data = match a.figure {
        FigureArg::ConstUcl => {
            let d = figures::ConstUclParams::default();
            figures::const_ucl(&figures::ConstUclParams {
                k0: a.k0.unwrap_or(d.k0),
                delta: a.delta.unwrap_or(d.delta),
                lambdas: a.lambdas.clone().unwrap_or(d.lambdas),
                n_max: a.n_max.unwrap_or(d.n_max),
                n_step: a.n_step.unwrap_or(d.n_step),
            })?
        }
        FigureArg::LinearUcl => {
            let d = figures::LinearUclParams::default();
            figures::linear_ucl(&figures::LinearUclParams {
                s: a.s.unwrap_or(d.s),
                delta: a.delta.unwrap_or(d.delta),
                lambdas: a.lambdas.clone().unwrap_or(d.lambdas),
                n_max: a.n_max.unwrap_or(d.n_max),
                n_step: a.n_step.unwrap_or(d.n_step),
                lambda_grid: a.lambda_grid.unwrap_or(d.lambda_grid),
            })?
        }
        FigureArg::OptLambda => {
            let d = figures::OptLambdaParams::default();
            figures::opt_lambda(&figures::OptLambdaParams {
                thetas: a.thetas.clone().unwrap_or(d.thetas),
                delta: a.delta.unwrap_or(d.delta),
                gap_max: a.gap_max.unwrap_or(d.gap_max),
                gap_step: a.gap_step.unwrap_or(d.gap_step),
            })?
        }
        FigureArg::DetectProb => {
            let d = figures::DetectProbParams::default();
            figures::detect_prob_curve(&figures::DetectProbParams {
                theta0: a.theta0.unwrap_or(d.theta0),
                delta: a.delta.unwrap_or(d.delta),
                lambdas: a.lambdas.clone().unwrap_or(d.lambdas),
                gap_max: a.gap_max.unwrap_or(d.gap_max),
                gap_step: a.gap_step.unwrap_or(d.gap_step),
            })?
        }
    };
    Ok(data)
}

/// Renders a dataset in the requested format.
pub fn render_dataset(data: &Dataset, format: Format) -> String {
    match format {
        Format::Csv => data.to_csv(),
        Format::Json => {
            let mut line = serde_json::to_string(&round_floats(to_json(data))).expect("json");
            line.push('\n');
            line
        }
    }
}

fn cmd_curve(a: CurveArgs) -> CmdResult<Output> {
    let data = build_dataset(&a)?;
    let body = render_dataset(&data, a.format);
    let ext = match a.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let target = a.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV).map(|dir| PathBuf::from(dir).join(format!("{}.{ext}", a.figure.name())))
    });
    match target {
        None => Ok(ok(body)),
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .map_err(|e| UsageError(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(&path, &body).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            let params = json!({"figure": a.figure.name(), "format": ext});
            let result = json!({
                "path": path.display().to_string(),
                "rows": data.rows.len(),
                "columns": data.columns,
            });
            Ok(ok(record("curve", params, result)))
        }
    }
}
