//! `svarma`: fit, simulate, evaluate and convert scalar-MA VARMA models.
//!
//! Exit codes: 0 on success, 1 on error or a fit that did not converge,
//! 2 when the fitted MA polynomial sits on the invertibility boundary.

mod data;
mod document;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use svarma::calibrate::OrderCandidate;
use svarma::{
    conditional_loglik, fit, matrix_to_scalar, profile_loglik, select_order, simulate_varma, value_and_gradient,
    FitOptions, LikelihoodReport, NoiseConfig, RegressorSet, SampleMatrix, ThetaPoly,
};

use document::{MatrixModelDocument, ModelDocument, Num, OrderSearch};

#[derive(Parser)]
#[command(name = "svarma", version, about = "Exact likelihood VARMA models with scalar MA coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV sample by multi-start maximum likelihood.
    Fit(FitArgs),
    /// Simulate a CSV sample from a model document.
    Simulate(SimulateArgs),
    /// Evaluate the likelihood of a model on a CSV sample (JSON on stdout).
    Eval(EvalArgs),
    /// Convert a matrix-MA model to its scalar-MA equivalent.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct FitArgs {
    data: PathBuf,
    /// Autoregressive order.
    #[arg(long, required_unless_present = "mcmillan", conflicts_with = "mcmillan")]
    p: Option<usize>,
    /// Moving-average order.
    #[arg(long, required_unless_present = "mcmillan", conflicts_with = "mcmillan")]
    q: Option<usize>,
    /// Scan every p, q <= m and keep the smallest BIC.
    #[arg(long, value_name = "M", conflicts_with = "seeds")]
    mcmillan: Option<usize>,
    /// Drop the intercept.
    #[arg(long)]
    no_const: bool,
    #[arg(long, default_value_t = 0, value_name = "D")]
    trend_degree: usize,
    /// Seasonal period (adds period - 1 dummies).
    #[arg(long, value_name = "S")]
    seasonal: Option<usize>,
    /// Starting points, one per line as comma-separated theta_1..theta_q.
    #[arg(long, value_name = "FILE")]
    seeds: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    #[arg(short, long, value_name = "MODEL.json")]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    model: PathBuf,
    /// Effective sample size; T + p rows are written.
    #[arg(long = "T", value_name = "T")]
    t: usize,
    #[arg(long)]
    seed: u64,
    /// Output CSV (stdout when omitted).
    #[arg(short, long, value_name = "DATA.csv")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    model: PathBuf,
    data: PathBuf,
    /// Also report the gradient of the profile likelihood.
    #[arg(long)]
    gradient: bool,
    /// Ignore this many leading rows (e.g. `order_search.skipped_rows` of a
    /// scanned fit).
    #[arg(long, default_value_t = 0, value_name = "N")]
    skip: usize,
}

#[derive(Args)]
struct ConvertArgs {
    model: PathBuf,
    /// Output document (stdout when omitted).
    #[arg(short, long, value_name = "MODEL.json")]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Eval(a) => cmd_eval(a).map(|_| ExitCode::SUCCESS),
        Command::Convert(a) => cmd_convert(a).map(|_| ExitCode::SUCCESS),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_fit(a: FitArgs) -> Result<ExitCode> {
    let values = data::read_matrix(&a.data)?;
    let regs = RegressorSet {
        constant: !a.no_const,
        trend_degree: a.trend_degree,
        seasonal_period: a.seasonal,
        ridge: false,
    };
    if a.seasonal.is_some_and(|s| s < 2) {
        bail!("--seasonal needs a period of at least 2");
    }
    let mut options = FitOptions { threads: a.threads, ..FitOptions::default() };

    let (fitted, p, search) = if let Some(m) = a.mcmillan {
        let chosen = select_order(&values, m, &regs, &options)?;
        let search = OrderSearch {
            bound: m,
            skipped_rows: m - chosen.p,
            candidates: chosen.candidates.iter().map(candidate).collect(),
        };
        (chosen.fit, chosen.p, Some(search))
    } else {
        let (p, q) = (a.p.unwrap_or(0), a.q.unwrap_or(0));
        if let Some(path) = &a.seeds {
            let seeds = data::read_seeds(path, q)?;
            options.seeds = Some(seeds.iter().map(|s| ThetaPoly::from_tail(s)).collect::<svarma::Result<_>>()?);
        }
        let xhat = SampleMatrix::new(values, p)?;
        (fit(&xhat, p, q, &regs, &options)?, p, None)
    };

    let mut doc = ModelDocument::from_fit(&fitted, p, &regs);
    doc.order_search = search;
    std::fs::write(&a.output, doc.to_json()?).with_context(|| format!("writing {}", a.output.display()))?;

    if fitted.boundary_flag {
        eprintln!("warning: the fitted MA polynomial has a root on the unit circle");
        return Ok(ExitCode::from(2));
    }
    if !fitted.converged {
        eprintln!("error: the optimizer did not converge; the best point found was written");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn candidate(c: &OrderCandidate) -> document::Candidate {
    document::Candidate {
        p: c.p,
        q: c.q,
        loglik: Num(c.loglik),
        aic: Num(c.aic),
        bic: Num(c.bic),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let doc = ModelDocument::read(&a.model)?;
    let spec = doc.spec()?;
    let sample = simulate_varma(&spec, a.t, &NoiseConfig::new(a.seed))?;
    match &a.output {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            data::write_matrix(std::io::BufWriter::new(file), sample.values())
        }
        None => data::write_matrix(std::io::stdout().lock(), sample.values()),
    }
}

#[derive(Serialize)]
struct Terms {
    loglik: Num,
    term_const: Num,
    term_omega: Num,
    term_kbar: Num,
    term_trace: Num,
}

impl From<&LikelihoodReport> for Terms {
    fn from(r: &LikelihoodReport) -> Self {
        Self {
            loglik: Num(r.loglik),
            term_const: Num(r.term_const),
            term_omega: Num(r.term_omega),
            term_kbar: Num(r.term_kbar),
            term_trace: Num(r.term_trace),
        }
    }
}

#[derive(Serialize)]
struct GradientOut {
    grad: Vec<Num>,
    omega_part: Vec<Num>,
    kbar_part: Vec<Num>,
    max_abs: Num,
}

#[derive(Serialize)]
struct EvalReport {
    t: usize,
    k: usize,
    p: usize,
    q: usize,
    /// Likelihood at the document's theta with mu, Phi and Omega profiled out.
    profile: Terms,
    /// Likelihood at every parameter as stored in the document.
    conditional: Option<Terms>,
    gradient: Option<GradientOut>,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let doc = ModelDocument::read(&a.model)?;
    let spec = doc.spec()?;
    let values = data::read_matrix(&a.data)?;
    if values.ncols() != doc.k {
        bail!("model has k = {} but the data has {} columns", doc.k, values.ncols());
    }
    if a.skip >= values.nrows() {
        bail!("--skip {} leaves no rows", a.skip);
    }
    let values = values.rows(a.skip, values.nrows() - a.skip).into_owned();
    let xhat = SampleMatrix::new(values, doc.p)?;
    let regs = doc.regressors.to_set();

    let (profile, gradient) = if a.gradient {
        let (report, g) = value_and_gradient(spec.theta(), &xhat, &regs)?;
        let nums = |v: &nalgebra::DVector<f64>| v.iter().copied().map(Num).collect();
        let gradient = GradientOut {
            grad: nums(&g.grad),
            omega_part: nums(&g.omega_part),
            kbar_part: nums(&g.kbar_part),
            max_abs: Num(if g.grad.is_empty() { 0.0 } else { g.grad.amax() }),
        };
        (report, Some(gradient))
    } else {
        (profile_loglik(spec.theta(), &xhat, &regs)?, None)
    };
    // A singular Omega (e.g. a noise-free simulation model) has no density.
    let conditional = conditional_loglik(&spec, &xhat, &regs).ok();

    let report = EvalReport {
        t: xhat.t(),
        k: doc.k,
        p: doc.p,
        q: doc.q,
        profile: (&profile).into(),
        conditional: conditional.as_ref().map(Terms::from),
        gradient,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> Result<()> {
    let source = MatrixModelDocument::read(&a.model)?;
    let model = source.model()?;
    let form = matrix_to_scalar(&model)?;
    let doc = ModelDocument::from_scalar_form(&form, source.phi.len(), source.theta.len());
    write_output(a.output.as_deref(), &doc.to_json()?)
}
