mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use relrobust::absolute::{solve_absolute, worst_case_objective};
use relrobust::ellipsoidal::{bracket_from, evaluate_max_regret_sampled, solve_arrp, DEFAULT_SAMPLE_COUNT};
use relrobust::market::{estimate_params, FeasibleSet, MarketParams, ReturnsSample};
use relrobust::mvo::{efficient_frontier, solve_variant, MvoVariant};
use relrobust::scenarios::{
    evaluate_set_regret, scenario_regrets, solve_relative, Adversary, ScenarioOptions, Witness,
};
use relrobust::uncertainty::UncertaintySet;
use relrobust::{Error, Result};
use serde_json::{json, Value};

use config::{Mode, RunConfig, VariantName};
use output::{csv, emit, fmt_num, to_json, weight_table};

/// Feasibility slack accepted when reloading a solution rounded to 12 digits.
const SOLUTION_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "relrobust",
    version,
    about = "Classical, absolute-robust and minimum-regret portfolios"
)]
struct Cli {
    /// Worker threads for parallel inner solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate mean and covariance from a CSV of returns.
    Estimate {
        returns: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        shrinkage: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one model in one mode.
    Solve(Common),
    /// Trace the minimum-variance frontier over a grid of target returns.
    Frontier {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ascending target returns.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
    },
    /// Maximum regret of a given portfolio over the uncertainty set.
    RegretEval {
        #[command(flatten)]
        common: Common,
        /// Comma-separated portfolio weights.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "solution")]
        x: Option<Vec<f64>>,
        /// Output of a previous `solve` run to take the portfolio from.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Solve in all three modes and cross-evaluate the solutions.
    Compare(Common),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AdversaryArg {
    Omniscient,
    Fortuitous,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    variant: Option<VariantName>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rf: Option<f64>,
    #[arg(long, value_enum)]
    adversary: Option<AdversaryArg>,
    /// Sample count for ellipsoid brackets and polytope hull checks.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(self.config.as_deref())?;
        c.mode = self.mode.or(c.mode);
        c.variant = self.variant.or(c.variant);
        c.lambda = self.lambda.or(c.lambda);
        c.rho = self.rho.or(c.rho);
        c.sigma2 = self.sigma2.or(c.sigma2);
        c.rf = self.rf.or(c.rf);
        c.samples = self.samples.or(c.samples);
        c.seed = self.seed.or(c.seed);
        if let Some(a) = self.adversary {
            c.adversary = Some(match a {
                AdversaryArg::Omniscient => Adversary::Omniscient,
                AdversaryArg::Fortuitous => Adversary::Fortuitous,
            });
        }
        Ok(c)
    }
}

/// Everything a command needs after loading the configuration.
struct Problem {
    cfg: RunConfig,
    u: Option<UncertaintySet>,
    params: MarketParams,
    x_set: FeasibleSet,
    labels: Vec<String>,
}

impl Problem {
    fn load(common: &Common) -> Result<Self> {
        let cfg = common.config()?;
        let u = cfg.uncertainty()?;
        let params = cfg.params(u.as_ref())?;
        if let Some(u) = &u {
            if u.n() != params.n() {
                return Err(Error::InvalidInput(format!(
                    "uncertainty set has {} assets, market has {}",
                    u.n(),
                    params.n()
                )));
            }
        }
        let x_set = cfg.feasible_set(params.n())?;
        let labels = match &cfg.returns {
            Some(path) => Some(ReturnsSample::from_csv_path(cfg.base.join(path))?.labels),
            None => None,
        }
        .filter(|l| l.len() == params.n())
        .unwrap_or_else(|| (1..=params.n()).map(|i| format!("asset{i}")).collect());
        Ok(Self {
            cfg,
            u,
            params,
            x_set,
            labels,
        })
    }

    fn uncertainty(&self) -> Result<&UncertaintySet> {
        self.u
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("this mode needs an uncertainty set".into()))
    }

    fn samples(&self) -> usize {
        self.cfg.samples.unwrap_or(DEFAULT_SAMPLE_COUNT)
    }

    fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(0)
    }

    fn scenario_options(&self) -> ScenarioOptions {
        ScenarioOptions {
            hull_samples: self.cfg.samples.unwrap_or(ScenarioOptions::default().hull_samples),
            seed: self.seed(),
        }
    }

    fn adversary(&self) -> Adversary {
        self.cfg.adversary.unwrap_or_default()
    }

    /// Maximum regret of `x` over the set, sampled for the ellipsoid.
    fn max_regret(&self, x: &DVector<f64>, v: MvoVariant) -> Result<(f64, Witness)> {
        match self.uncertainty()? {
            UncertaintySet::EllipsoidalMu(e) => {
                let (r, mu) = evaluate_max_regret_sampled(x, e, v, &self.x_set, self.samples(), self.seed())?;
                Ok((r, Witness::Point(mu.iter().copied().collect())))
            }
            u => evaluate_set_regret(x, u, v, &self.x_set, self.adversary(), &self.scenario_options()),
        }
    }

    /// Solution of `mode` as `(x, JSON body)`.
    fn solve(&self, mode: Mode, v: MvoVariant) -> Result<(DVector<f64>, Value)> {
        match mode {
            Mode::Classical => {
                let s = solve_variant(&self.params, &self.x_set, v)?;
                Ok((s.x.clone(), to_value(&s)?))
            }
            Mode::Absolute => {
                let s = solve_absolute(self.uncertainty()?, &self.x_set, v)?;
                Ok((s.x.clone(), to_value(&s)?))
            }
            Mode::Relative => match self.uncertainty()? {
                UncertaintySet::EllipsoidalMu(e) => {
                    let MvoVariant::RiskAdjusted(lambda) = v else {
                        return Err(Error::Unsupported(
                            "ellipsoidal minimum-regret models are available for risk-adjusted only".into(),
                        ));
                    };
                    let inner = solve_arrp(e, &self.x_set, lambda)?;
                    let bracket = bracket_from(&inner, e, &self.x_set, lambda, self.samples(), self.seed())?;
                    let (sampled, witness) = self.max_regret(&inner.x, v)?;
                    let body = json!({
                        "x": inner.x.as_slice(),
                        "gamma": inner.gamma,
                        "witness": witness,
                        "sampled_max_regret": sampled,
                        "bracket": { "lower": bracket.lower, "upper": bracket.upper },
                        "bracket_report": bracket,
                        "certificate": inner.certificate,
                        "timings": { "solve_seconds": inner.solve_seconds },
                    });
                    Ok((inner.x, body))
                }
                u => {
                    let c = solve_relative(u, &self.x_set, v, self.adversary(), &self.scenario_options())?;
                    Ok((c.x.clone(), to_value(&c)?))
                }
            },
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Portfolio from a previous `solve` output, checked against the feasible set.
fn load_solution(path: &std::path::Path, x_set: &FeasibleSet) -> Result<DVector<f64>> {
    let doc: Value = config::read_json(path)?;
    let x: Vec<f64> = doc
        .get("x")
        .and_then(|x| serde_json::from_value(x.clone()).ok())
        .ok_or_else(|| Error::InvalidInput(format!("{}: no weight vector \"x\"", path.display())))?;
    let x = DVector::from_vec(x);
    if x.len() != x_set.n() {
        return Err(Error::InvalidInput(format!(
            "{}: {} weights, feasible set has {} assets",
            path.display(),
            x.len(),
            x_set.n()
        )));
    }
    let viol = x_set.violation(&x);
    if viol > SOLUTION_TOL {
        return Err(Error::InvalidInput(format!(
            "{}: portfolio violates the feasible set by {viol:e}",
            path.display()
        )));
    }
    Ok(x)
}

fn cmd_estimate(returns: &PathBuf, shrinkage: f64, out: Option<&std::path::Path>) -> Result<()> {
    let sample = ReturnsSample::from_csv_path(returns)?;
    let p = estimate_params(&sample, shrinkage)?;
    emit(&to_json(&p)?, out)
}

fn cmd_solve(common: &Common) -> Result<()> {
    let pb = Problem::load(common)?;
    let v = pb.cfg.variant()?;
    let mode = pb.cfg.mode.unwrap_or(Mode::Classical);
    let (x, body) = pb.solve(mode, v)?;
    let mut doc = json!({ "mode": mode.name(), "variant": v });
    if mode == Mode::Relative && !matches!(pb.u, Some(UncertaintySet::EllipsoidalMu(_))) {
        doc["adversary"] = json!(pb.adversary());
    }
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    emit(&to_json(&doc)?, common.out.as_deref())?;
    if common.out.is_some() {
        print!("{}", weight_table(&pb.labels, x.as_slice()));
    }
    Ok(())
}

fn cmd_frontier(common: &Common, grid: Option<Vec<f64>>) -> Result<()> {
    let pb = Problem::load(common)?;
    let grid = grid
        .or_else(|| pb.cfg.rho_grid.clone())
        .ok_or_else(|| Error::InvalidInput("frontier needs --grid or rho_grid".into()))?;
    let points = efficient_frontier(&pb.params, &pb.x_set, &grid)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                fmt_num(p.rho),
                fmt_num(p.risk),
                fmt_num(p.ret),
                format!("{:?}", p.status).to_lowercase(),
            ]
        })
        .collect();
    emit(&csv(&["rho", "risk", "return", "status"], &rows), common.out.as_deref())
}

fn cmd_regret_eval(common: &Common, x: Option<Vec<f64>>, solution: Option<&std::path::Path>) -> Result<()> {
    let pb = Problem::load(common)?;
    let v = pb.cfg.variant()?;
    let from_file = solution.map(|p| load_solution(p, &pb.x_set)).transpose()?;
    let x = x
        .map(DVector::from_vec)
        .or(from_file)
        .or_else(|| pb.cfg.portfolio())
        .ok_or_else(|| Error::InvalidInput("regret-eval needs --x or portfolio".into()))?;
    if x.len() != pb.params.n() {
        return Err(Error::InvalidInput(format!(
            "portfolio has {} weights, market has {}",
            x.len(),
            pb.params.n()
        )));
    }
    let u = pb.uncertainty()?;
    let (max_regret, witness) = pb.max_regret(&x, v)?;
    let mut doc = json!({
        "variant": v,
        "x": x.as_slice(),
        "max_regret": max_regret,
        "witness": witness,
        "worst_case_objective": worst_case_objective(u, v, &x),
        "feasibility_violation": pb.x_set.violation(&x),
    });
    if u.scenarios().is_some() {
        doc["scenario_regrets"] = json!(scenario_regrets(&x, u, v, &pb.x_set, pb.adversary())?);
    }
    emit(&to_json(&doc)?, common.out.as_deref())
}

fn status_name(e: &Error) -> &'static str {
    match e {
        Error::Infeasible | Error::ScenarioInfeasible(_) => "infeasible",
        Error::Unbounded => "unbounded",
        Error::NotCertified => "not_certified",
        Error::NotRationalToInvest => "not_rational_to_invest",
        Error::SolverFailure(_) => "solver_failure",
        Error::Unsupported(_) => "unsupported",
        _ => "error",
    }
}

fn cmd_compare(common: &Common) -> Result<()> {
    let pb = Problem::load(common)?;
    let v = pb.cfg.variant()?;
    let u = pb.uncertainty()?;
    let n = pb.params.n();
    let mut header: Vec<String> = [
        "mode",
        "status",
        "max_regret",
        "worst_case_objective",
        "nominal_objective",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(pb.labels.iter().cloned());
    let mut rows = Vec::new();
    for mode in [Mode::Classical, Mode::Absolute, Mode::Relative] {
        let row = pb.solve(mode, v).and_then(|(x, _)| {
            let (r, _) = pb.max_regret(&x, v)?;
            let mut row = vec![
                mode.name().to_string(),
                "optimal".to_string(),
                fmt_num(r),
                fmt_num(worst_case_objective(u, v, &x)),
                fmt_num(v.objective(&pb.params, &x)),
            ];
            row.extend(x.iter().map(|w| fmt_num(*w)));
            Ok(row)
        });
        rows.push(row.unwrap_or_else(|e| {
            let mut row = vec![mode.name().to_string(), status_name(&e).to_string()];
            row.extend(std::iter::repeat_n(String::new(), 3 + n));
            row
        }));
    }
    emit(&csv(&header, &rows), common.out.as_deref())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible | Error::ScenarioInfeasible(_) => 2,
        Error::Unbounded => 3,
        Error::NotCertified | Error::NotRationalToInvest | Error::NonpositiveValueFunction(_) => 4,
        Error::SolverFailure(_) => 6,
        _ => 5,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 5 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(5);
        }
    }
    let result = match &cli.command {
        Command::Estimate {
            returns,
            shrinkage,
            out,
        } => cmd_estimate(returns, *shrinkage, out.as_deref()),
        Command::Solve(c) => cmd_solve(c),
        Command::Frontier { common, grid } => cmd_frontier(common, grid.clone()),
        Command::RegretEval { common, x, solution } => cmd_regret_eval(common, x.clone(), solution.as_deref()),
        Command::Compare(c) => cmd_compare(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
