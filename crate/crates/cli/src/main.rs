//! `cvxnn`: convex training of two-layer ReLU networks from the command line.
//!
//! Data files hold one sample per row (rows are samples, columns features);
//! label files hold one value per row. An optional header row is detected
//! automatically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvxnn::arrangements::{enumerate_exact, sample_patterns, ArrangementReport};
use cvxnn::baseline::{train_sgd, TrainConfig};
use cvxnn::formats::{load_model, save_model, write_json, PatternSetFile, SolutionFile};
use cvxnn::io::{make_autoregressive, read_data, read_labels, read_series, write_csv, ingest_csv};
use cvxnn::reconstruct::reconstruct_net;
use cvxnn::solver::{GroupLassoProblem, GroupLassoSolution, SolveOptions, DEFAULT_MAX_ITER};
use cvxnn::synth::{synthetic_ecg, EcgConfig};
use cvxnn::univariate::solve_univariate;
use cvxnn::wedge::train_wedge_lasso;
use cvxnn::{
    Activation, ActivationPattern, DataMatrix, Error, Labels, PatternSet,
    RegularizationConvention, Result, TwoLayerNet, WeightNorm,
};
use nalgebra::DVector;

#[derive(Parser)]
#[command(name = "cvxnn", version, about = "Convex training of two-layer ReLU networks")]
#[command(after_help = "Data CSVs are rows-are-samples; they are transposed internally to d x n.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate or sample activation patterns.
    Arrangements(ArrangementsArgs),
    /// Solve the convex program and write the reconstructed network.
    Train(TrainArgs),
    /// Train the network directly by gradient descent.
    TrainSgd(TrainSgdArgs),
    /// One-dimensional inputs through the explicit Lasso dictionary.
    #[command(name = "train-1d")]
    Train1d(Train1dArgs),
    /// Lasso over the wedge-product dictionary.
    Wedge(WedgeArgs),
    /// Write model predictions for a data file.
    Predict(PredictArgs),
    /// Print the mean squared error of a model.
    Eval(EvalArgs),
    /// Solve along a sequence of regularization strengths.
    Path(PathArgs),
    /// Print the duality gap of a model; exits 0 iff it is within tolerance.
    Certify(CertifyArgs),
    /// Autoregressive features from a single-column series.
    Ar(ArArgs),
    /// Write a synthetic ECG-like series.
    #[command(name = "synth-ecg")]
    SynthEcg(SynthEcgArgs),
}

#[derive(Args, Clone)]
struct PatternArgs {
    /// Enumerate every pattern (d = 2, or n <= 16).
    #[arg(long, conflicts_with = "samples")]
    exact: bool,
    /// Number of random directions; default min(5000, 10 n d).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ArrangementsArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    patterns: PatternArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    beta: f64,
    #[command(flatten)]
    patterns: PatternArgs,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Append a constant feature; the bias is then regularized with the weights.
    #[arg(long)]
    bias: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write the nonzero group variables.
    #[arg(long)]
    solution_out: Option<PathBuf>,
    /// Exit with status 1 unless the duality gap meets the tolerance.
    #[arg(long)]
    certify: bool,
}

#[derive(Args)]
struct TrainSgdArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    lr: f64,
    #[arg(long)]
    epochs: usize,
    /// Mini-batch size; full batch when absent.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight decay is `beta / 2`.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long)]
    momentum: Option<f64>,
    /// Unregularized bias per neuron.
    #[arg(long)]
    bias: bool,
    /// Append a constant feature; the bias is then regularized with the weights.
    #[arg(long, conflicts_with = "bias")]
    lifted_bias: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch objective of the best restart.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Abs,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Abs => Activation::Abs,
        }
    }
}

#[derive(Args)]
struct Train1dArgs {
    /// Two columns `x,y`, or one column of inputs with `--labels`.
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    activation: ActivationArg,
    /// Fit an unpenalized constant.
    #[arg(long)]
    intercept: bool,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WedgeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    p: u32,
    #[arg(long)]
    bias: bool,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Args)]
struct PathArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Comma-separated; solved from largest to smallest.
    #[arg(long, value_delimiter = ',', required = true)]
    betas: Vec<f64>,
    #[command(flatten)]
    patterns: PatternArgs,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    bias: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    beta: f64,
    /// Patterns for the dual; exact when feasible unless `--samples` is given.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct ArArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    lags: usize,
    #[arg(long)]
    split: f64,
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args)]
struct SynthEcgArgs {
    #[arg(long, default_value_t = 2400)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

fn default_budget(x: &DataMatrix) -> usize {
    (10 * x.n() * x.d()).min(5000)
}

fn patterns_for(x: &DataMatrix, args: &PatternArgs) -> Result<ArrangementReport> {
    if args.exact {
        return enumerate_exact(x);
    }
    let count = args.samples.unwrap_or_else(|| default_budget(x));
    sample_patterns(x, count, args.seed)
}

fn describe(rep: &ArrangementReport) {
    println!("method: {}", rep.method);
    if let Some(seed) = rep.seed {
        println!("seed: {seed}");
        println!("samples: {}", rep.samples_drawn);
    }
    println!("patterns: {}", rep.patterns.len());
}

fn load_xy(data: &Path, labels: &Path) -> Result<(DataMatrix, Labels)> {
    let x = read_data(data)?;
    let y = read_labels(labels, None)?;
    y.check_paired(&x)?;
    Ok((x, y))
}

fn column_rows(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|&t| vec![t]).collect()
}

fn arrangements(a: ArrangementsArgs) -> Result<ExitCode> {
    let x = read_data(&a.data)?;
    let rep = patterns_for(&x, &a.patterns)?;
    describe(&rep);
    write_json(&a.out, &PatternSetFile::from_set(&rep.patterns))?;
    Ok(ExitCode::SUCCESS)
}

fn print_solution(sol: &GroupLassoSolution) {
    println!("objective: {}", sol.objective);
    println!("duality_gap: {:e}", sol.gap);
    println!("certified: {}", sol.certified);
    println!("active_groups: {}", sol.active_groups);
    println!("iterations: {}", sol.iterations);
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let (x, y) = load_xy(&a.data, &a.labels)?;
    let xs = if a.bias { x.with_ones_row() } else { x.clone() };
    let rep = patterns_for(&xs, &a.patterns)?;
    describe(&rep);
    let problem = GroupLassoProblem::new(xs, y.clone(), a.beta, rep.patterns.clone())?;
    let opts = SolveOptions {
        tol: a.tol,
        max_iter: a.max_iter,
    };
    let sol = problem.solve(&opts)?;
    print_solution(&sol);
    let recon = reconstruct_net(&sol, &problem, &RegularizationConvention::from_beta(a.beta))?;
    let mut net = recon.net;
    net.meta.seed = rep.seed;
    net.meta.bias_lifted = a.bias;
    println!("width: {}", net.width());
    println!("train_mse: {}", y.mse(&net.predict(&x)?)?);
    save_model(&a.out, &net)?;
    if let Some(path) = &a.solution_out {
        write_json(path, &SolutionFile::from_solution(&sol, &rep.patterns))?;
    }
    Ok(if a.certify && !sol.certified {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn train_sgd_cmd(a: TrainSgdArgs) -> Result<ExitCode> {
    let (x, y) = load_xy(&a.data, &a.labels)?;
    let xs = if a.lifted_bias { x.with_ones_row() } else { x.clone() };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        restarts: a.restarts,
        seed: a.seed,
        weight_decay: a.beta / 2.0,
        momentum: a.momentum,
        bias: a.bias,
        ..TrainConfig::default()
    };
    println!("seed: {}", a.seed);
    let rep = train_sgd(&xs, &y, a.width, &cfg)?;
    println!("objective: {}", rep.objective);
    println!("diverged_restarts: {}", rep.diverged.len());
    let mut net = rep.net;
    net.meta.bias_lifted = a.lifted_bias;
    println!("train_mse: {}", y.mse(&net.predict(&x)?)?);
    save_model(&a.out, &net)?;
    if let Some(path) = &a.trace_out {
        let rows: Vec<Vec<f64>> =
            rep.trace.iter().enumerate().map(|(e, &v)| vec![e as f64, v]).collect();
        write_csv(path, Some(&["epoch", "objective"]), &rows)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn train_1d(a: Train1dArgs) -> Result<ExitCode> {
    let (xs, y) = match &a.labels {
        Some(lp) => (read_series(&a.series)?, read_labels(lp, None)?),
        None => {
            let table = ingest_csv(&a.series)?;
            if table.width() != 2 {
                return Err(Error::invalid(format!(
                    "{} must hold two columns x,y (or pass --labels)",
                    a.series.display()
                )));
            }
            (table.column(0)?, Labels::new(table.column(1)?)?)
        }
    };
    let fit = solve_univariate(
        &xs,
        &y,
        a.beta,
        a.activation.into(),
        a.intercept,
        &SolveOptions::with_tol(a.tol),
    )?;
    println!("objective: {}", fit.lasso.objective);
    println!("duality_gap: {:e}", fit.lasso.gap);
    println!("certified: {}", fit.lasso.certified);
    println!("intercept: {}", fit.lasso.intercept);
    println!("width: {}", fit.net.width());
    if let Some(out) = &a.out {
        save_model(out, &fit.net)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn wedge(a: WedgeArgs) -> Result<ExitCode> {
    let (x, y) = load_xy(&a.data, &a.labels)?;
    let fit = train_wedge_lasso(
        &x,
        &y,
        a.beta,
        WeightNorm::from_p(a.p)?,
        a.bias,
        &SolveOptions::with_tol(a.tol),
    )?;
    println!("columns: {}", fit.dictionary.columns.len());
    println!("dropped: {}", fit.dictionary.dropped.len());
    println!("objective: {}", fit.lasso.objective);
    println!("duality_gap: {:e}", fit.lasso.gap);
    println!("width: {}", fit.net.width());
    if let Some(out) = &a.out {
        save_model(out, &fit.net)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn predict(a: PredictArgs) -> Result<ExitCode> {
    let net = load_model(&a.model)?;
    let x = read_data(&a.data)?;
    let pred = net.predict(&x)?;
    write_csv(&a.out, Some(&["yhat"]), &column_rows(pred.as_slice()))?;
    Ok(ExitCode::SUCCESS)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let net = load_model(&a.model)?;
    let (x, y) = load_xy(&a.data, &a.labels)?;
    println!("mse: {}", y.mse(&net.predict(&x)?)?);
    Ok(ExitCode::SUCCESS)
}

fn path(a: PathArgs) -> Result<ExitCode> {
    let (x, y) = load_xy(&a.data, &a.labels)?;
    let xs = if a.bias { x.with_ones_row() } else { x.clone() };
    let rep = patterns_for(&xs, &a.patterns)?;
    describe(&rep);
    let mut betas = a.betas.clone();
    betas.sort_by(|p, q| q.total_cmp(p));
    let opts = SolveOptions {
        tol: a.tol,
        max_iter: a.max_iter,
    };
    let results = cvxnn::solver::reg_path(&xs, &y, &rep.patterns, &betas, &opts)?;
    let base = GroupLassoProblem::new(xs, y.clone(), betas[0], rep.patterns.clone())?;
    let mut rows = Vec::new();
    for (beta, res) in betas.iter().zip(results) {
        match res {
            Ok(sol) => {
                let fit = base.fitted(&sol.u, &sol.v)?;
                let mse = (fit - y.vector()).norm_squared() / y.len() as f64;
                rows.push(vec![*beta, sol.objective, sol.gap, sol.active_groups as f64, mse]);
            }
            Err(e) => {
                eprintln!("beta {beta}: {e}");
                rows.push(vec![*beta, f64::NAN, f64::NAN, f64::NAN, f64::NAN]);
            }
        }
    }
    write_csv(
        &a.out,
        Some(&["beta", "objective", "gap", "active_groups", "train_mse"]),
        &rows,
    )?;
    println!("points: {}", rows.len());
    Ok(ExitCode::SUCCESS)
}

/// Group variables representing `net` exactly: each neuron `j` contributes
/// `|alpha_j| w_j` to the group of its realized pattern.
fn convex_candidate(
    net: &TwoLayerNet,
    x: &DataMatrix,
) -> Result<BTreeMap<ActivationPattern, [DVector<f64>; 2]>> {
    let mut groups: BTreeMap<ActivationPattern, [DVector<f64>; 2]> = BTreeMap::new();
    for j in 0..net.width() {
        let w = net.weights().column(j).into_owned();
        let a = net.alpha()[j];
        let h = cvxnn::arrangements::pattern_of(x, w.as_slice())?;
        if h.is_zero() || a == 0.0 || w.norm() == 0.0 {
            continue;
        }
        let entry = groups
            .entry(h)
            .or_insert_with(|| [DVector::zeros(x.d()), DVector::zeros(x.d())]);
        entry[usize::from(a < 0.0)] += w * a.abs();
    }
    Ok(groups)
}

fn certify(a: CertifyArgs) -> Result<ExitCode> {
    let net = load_model(&a.model)?;
    if net.bias().is_some() || net.offset != 0.0 {
        return Err(Error::invalid(
            "certify needs a model without unregularized biases or offset",
        ));
    }
    if net.activation != Activation::Relu {
        return Err(Error::invalid("certify supports ReLU models only"));
    }
    let (x, y) = load_xy(&a.data, &a.labels)?;
    let xs = if net.meta.bias_lifted { x.with_ones_row() } else { x };
    let rep = match a.samples {
        Some(count) => sample_patterns(&xs, count, a.seed)?,
        None => match enumerate_exact(&xs) {
            Ok(rep) => rep,
            Err(Error::ScaleExceeded(_)) => sample_patterns(&xs, default_budget(&xs), a.seed)?,
            Err(e) => return Err(e),
        },
    };
    describe(&rep);
    let candidate = convex_candidate(&net, &xs)?;
    let patterns = rep
        .patterns
        .union(&PatternSet::new(xs.n(), candidate.keys().cloned())?)?;
    let problem = GroupLassoProblem::new(xs.clone(), y.clone(), a.beta, patterns.clone())?;
    let zero = DVector::zeros(xs.d());
    let (mut u, mut v) = (vec![zero.clone(); patterns.len()], vec![zero; patterns.len()]);
    for (h, [pu, pv]) in &candidate {
        let g = patterns.position(h).expect("candidate patterns are included");
        u[g] = pu.clone();
        v[g] = pv.clone();
    }
    let convex_obj = problem.objective(&u, &v)?;
    let sol = GroupLassoSolution {
        beta: a.beta,
        u,
        v,
        objective: convex_obj,
        gap: f64::NAN,
        iterations: 0,
        active_groups: candidate.len(),
        certified: false,
    };
    // the network objective bounds its convex representative from above
    let net_obj = net.objective(&xs, &y, &RegularizationConvention::from_beta(a.beta))?;
    let gap = problem.certify(&sol)? + (net_obj - convex_obj).max(0.0);
    let ok = gap <= a.tol * (1.0 + net_obj.abs());
    println!("objective: {net_obj}");
    println!("duality_gap: {gap:e}");
    println!("certified: {ok}");
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn ar(a: ArArgs) -> Result<ExitCode> {
    let series = read_series(&a.series)?;
    let sp = make_autoregressive(&series, a.lags, a.split)?;
    let header: Vec<String> = (1..=a.lags).map(|l| format!("lag{l}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let file = |suffix: &str| PathBuf::from(format!("{}_{suffix}.csv", a.out_prefix));
    write_csv(&file("x_train"), Some(&header), &sp.x_train.to_samples())?;
    write_csv(&file("y_train"), Some(&["y"]), &column_rows(sp.y_train.as_slice()))?;
    write_csv(&file("x_test"), Some(&header), &sp.x_test.to_samples())?;
    write_csv(&file("y_test"), Some(&["y"]), &column_rows(sp.y_test.as_slice()))?;
    println!("train: {}", sp.x_train.n());
    println!("test: {}", sp.x_test.n());
    Ok(ExitCode::SUCCESS)
}

fn synth_ecg(a: SynthEcgArgs) -> Result<ExitCode> {
    let cfg = EcgConfig {
        len: a.len,
        seed: a.seed,
        noise: a.noise,
        ..EcgConfig::default()
    };
    println!("seed: {}", a.seed);
    write_csv(&a.out, Some(&["v"]), &column_rows(&synthetic_ecg(&cfg)))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Arrangements(a) => arrangements(a),
        Command::Train(a) => train(a),
        Command::TrainSgd(a) => train_sgd_cmd(a),
        Command::Train1d(a) => train_1d(a),
        Command::Wedge(a) => wedge(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Path(a) => path(a),
        Command::Certify(a) => certify(a),
        Command::Ar(a) => ar(a),
        Command::SynthEcg(a) => synth_ecg(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
