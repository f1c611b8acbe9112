use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use markov_mix::em::{em_fit, refine, EmConfig, EmInit};
use markov_mix::eval::{recovery_error, trail_error};
use markov_mix::experiment::{
    default_lambdas, degenerate_sweep, rows_csv, run_experiment, summarize, summary_csv, sweep_csv, ExperimentSpec,
    Method, Scenario,
};
use markov_mix::io::{
    detect_kind, distribution_from_text, format_distribution, format_trails, generate_mixture, mixture_from_json,
    mixture_to_json, slice_sequences, GeneratorSpec, InputKind, SliceMode,
};
use markov_mix::model::{exact_trail_distribution, sample_trails, Mixture, TrailDistribution};
use markov_mix::params::{estimate_r, spectrum_summary};
use markov_mix::spectral::{ca_svd, gkv_svd, Mode, RecoveryOptions};
use markov_mix::{Error, Result};

const THREADS_VAR: &str = "MARKOV_MIX_THREADS";

/// Learn mixtures of Markov chains from 3-trail distributions.
#[derive(Parser)]
#[command(name = "markov-mix", version)]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random mixture with a given number of connected components.
    Generate(GenerateArgs),
    /// Sample trails from a mixture file.
    Sample(SampleArgs),
    /// Cut sequences or a feature table into 3-trails.
    Slice(SliceArgs),
    /// Learn a mixture from a distribution, trail or mixture file.
    Recover(RecoverArgs),
    /// Estimate the number of chains or of connected components.
    Estimate(EstimateArgs),
    /// Compare two mixtures or two distributions.
    Evaluate(EvaluateArgs),
    /// Run an experiment grid described by a JSON file.
    Experiment(ExperimentArgs),
    /// Spectra along the sweep that pulls chains together.
    Degenerate(DegenerateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long = "L")]
    l: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Resample until the recoverability conditions hold.
    #[arg(long)]
    recoverable: bool,
    #[arg(long, default_value_t = 2)]
    min_component_size: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Mixture file, or `-` for stdin.
    input: PathBuf,
    #[arg(long)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    length: usize,
    /// Write the empirical distribution instead of the trails.
    #[arg(long)]
    distribution: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SliceKind {
    Window3,
    Cooccurrence,
}

#[derive(Args)]
struct SliceArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value = "window3")]
    mode: SliceKind,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Noisy,
}

#[derive(Args)]
struct RecoverArgs {
    /// Distribution, trail or mixture file, or `-` for stdin.
    input: PathBuf,
    #[arg(long, default_value = "ca-svd")]
    method: Method,
    #[arg(long = "L")]
    l: usize,
    /// Number of connected components, or `auto`.
    #[arg(long, default_value = "auto")]
    r: String,
    /// Number of states when the input does not say.
    #[arg(long)]
    states: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    companion_threshold: Option<f64>,
    /// Turn hypothesis violations into warnings.
    #[arg(long)]
    lenient: bool,
    #[arg(long, default_value_t = 100)]
    em_iters: usize,
    #[arg(long, default_value_t = 5)]
    refine_iters: usize,
    /// Write the learned mixture here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the EM log-likelihood trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    #[value(name = "L")]
    L,
    #[value(name = "r")]
    R,
}

#[derive(Args)]
struct EstimateArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    what: What,
    /// Number of chains, needed for `--what r`.
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long)]
    states: Option<usize>,
    /// Write the averaged spectrum as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    truth: PathBuf,
    learned: PathBuf,
    #[arg(long)]
    states: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    spec: PathBuf,
    /// Overrides the output path of the spec; stdout when neither is set.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write per-cell quartiles as CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct DegenerateArgs {
    #[arg(long, default_value = "1")]
    scenario: Scenario,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long = "L", default_value_t = 5)]
    l: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
    seeds: Vec<u64>,
    /// Comma-separated values in [0, 1]; defaults to 0, 0.1, ..., 1.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn stdout(text: &str) -> Result<()> {
    match io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => stdout(text),
    }
}

fn print_json(v: &impl Serialize) -> Result<()> {
    stdout(&(serde_json::to_string_pretty(v)? + "\n"))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn generate(a: GenerateArgs, json_out: bool) -> Result<()> {
    let spec = GeneratorSpec {
        n: a.n,
        l: a.l,
        r: a.r,
        seed: a.seed,
        ensure_recoverable: a.recoverable,
        min_component_size: a.min_component_size,
    };
    let m: Mixture<f64> = generate_mixture(&spec)?;
    let text = mixture_to_json(&m)? + "\n";
    match (&a.output, json_out) {
        (Some(p), true) => {
            fs::write(p, &text)?;
            print_json(&json!({ "output": p, "n": a.n, "L": a.l, "r": a.r, "seed": a.seed }))
        }
        (p, _) => emit(p.as_deref(), &text),
    }
}

fn sample(a: SampleArgs, json_out: bool) -> Result<()> {
    let m: Mixture<f64> = mixture_from_json(&read_input(&a.input)?)?;
    let trails = sample_trails(&m, a.count, a.seed, a.length)?;
    let text = if a.distribution {
        format_distribution(&trails.to_distribution::<f64>()?)
    } else {
        format_trails(&trails)
    };
    emit(a.output.as_deref(), &text)?;
    if json_out && a.output.is_some() {
        print_json(&json!({ "count": a.count, "seed": a.seed, "length": a.length }))?;
    }
    Ok(())
}

fn slice(a: SliceArgs, json_out: bool) -> Result<()> {
    let mode = match a.mode {
        SliceKind::Window3 => SliceMode::Window3,
        SliceKind::Cooccurrence => SliceMode::Cooccurrence,
    };
    let s = slice_sequences::<f64>(&a.input, mode)?;
    warn_all(&s.warnings);
    emit(a.output.as_deref(), &format_distribution(&s.distribution))?;
    if json_out && a.output.is_some() {
        print_json(&json!({ "trails": s.trails, "warnings": s.warnings }))?;
    }
    Ok(())
}

fn load_distribution(path: &Path, states: Option<usize>) -> Result<TrailDistribution<f64>> {
    distribution_from_text(&read_input(path)?, states)
}

fn recover(a: RecoverArgs, json_out: bool) -> Result<()> {
    let dist = load_distribution(&a.input, a.states)?;
    let r = match a.r.as_str() {
        "auto" => None,
        s => Some(
            s.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("--r must be 'auto' or a positive integer, got '{s}'")))?,
        ),
    };
    let opts = RecoveryOptions {
        mode: a.mode.map(|m| match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Noisy => Mode::Noisy,
        }),
        strict: a.lenient.then_some(false),
        repetitions: a.repetitions,
        seed: a.seed,
        companion_threshold: a.companion_threshold,
        ..Default::default()
    };
    let (mixture, report, warnings, trace): (Mixture<f64>, Value, Vec<String>, Option<String>) = match a.method {
        Method::CaSvd | Method::GkvSvd => {
            let rep = if a.method == Method::CaSvd {
                ca_svd(&dist, a.l, r, &opts)?
            } else {
                gkv_svd(&dist, a.l, &opts)?
            };
            let v = serde_json::to_value(rep.to_file())?;
            (rep.mixture, v, rep.warnings, None)
        }
        Method::Em => {
            let cfg = EmConfig {
                max_iters: a.em_iters,
                init: EmInit::Random(a.seed),
                ..Default::default()
            };
            let fit = em_fit(&dist, a.l, &cfg)?;
            let v = json!({
                "mixture": fit.mixture.to_file(),
                "iterations": fit.iterations,
                "loglik_trace": fit.loglik_trace,
                "warnings": fit.warnings,
            });
            (fit.mixture.clone(), v, fit.warnings.clone(), Some(fit.trace_csv()))
        }
        Method::CaSvdEm => {
            let rep = ca_svd(&dist, a.l, r, &opts)?;
            let fit = refine(&dist, &rep.mixture, a.refine_iters)?;
            let mut warnings = rep.warnings.clone();
            warnings.extend(fit.warnings.iter().cloned());
            let v = json!({
                "mixture": fit.mixture.to_file(),
                "spectral": rep.to_file(),
                "iterations": fit.iterations,
                "loglik_trace": fit.loglik_trace,
                "warnings": warnings,
            });
            (fit.mixture.clone(), v, warnings, Some(fit.trace_csv()))
        }
    };
    warn_all(&warnings);
    if let Some(p) = &a.report {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if let (Some(p), Some(t)) = (&a.trace, &trace) {
        fs::write(p, t)?;
    }
    let mixture_text = mixture_to_json(&mixture)? + "\n";
    if json_out {
        if let Some(p) = &a.output {
            fs::write(p, &mixture_text)?;
        }
        print_json(&report)
    } else {
        emit(a.output.as_deref(), &mixture_text)
    }
}

fn estimate(a: EstimateArgs, json_out: bool) -> Result<()> {
    let dist = load_distribution(&a.input, a.states)?;
    match a.what {
        What::L => {
            let s = spectrum_summary(&dist)?;
            if let Some(p) = &a.csv {
                fs::write(p, s.to_csv())?;
            }
            if json_out {
                print_json(&s)
            } else {
                stdout(&format!("L = {}\n", s.chosen_l))
            }
        }
        What::R => {
            let l = a.l.ok_or_else(|| Error::InvalidArgument("--what r needs --L".into()))?;
            let e = estimate_r(&dist, l)?;
            warn_all(&e.warnings);
            if json_out {
                print_json(&e)
            } else {
                stdout(&format!("r = {}\n", e.r_hat))
            }
        }
    }
}

fn evaluate(a: EvaluateArgs, json_out: bool) -> Result<()> {
    let ta = read_input(&a.truth)?;
    let tb = read_input(&a.learned)?;
    let out = if detect_kind(&ta) == InputKind::Mixture && detect_kind(&tb) == InputKind::Mixture {
        let ma: Mixture<f64> = mixture_from_json(&ta)?;
        let mb: Mixture<f64> = mixture_from_json(&tb)?;
        let re = recovery_error(&ma, &mb)?;
        let te = trail_error(&exact_trail_distribution(&ma), &exact_trail_distribution(&mb))?;
        json!({
            "recovery_error": re.value,
            "start_tv": re.start_tv,
            "matching": re.matching,
            "trail_error": te,
        })
    } else {
        let da: TrailDistribution<f64> = distribution_from_text(&ta, a.states)?;
        let db: TrailDistribution<f64> = distribution_from_text(&tb, a.states)?;
        json!({ "trail_error": trail_error(&da, &db)? })
    };
    if json_out {
        return print_json(&out);
    }
    let mut text = String::new();
    for key in ["recovery_error", "start_tv", "trail_error"] {
        if let Some(v) = out.get(key) {
            text.push_str(&format!("{key} {:.16e}\n", v.as_f64().unwrap_or(f64::NAN)));
        }
    }
    stdout(&text)
}

fn experiment(a: ExperimentArgs, json_out: bool) -> Result<()> {
    let spec: ExperimentSpec = serde_json::from_str(&read_input(&a.spec)?)?;
    let rows = run_experiment(&spec)?;
    for row in &rows {
        if let Some(e) = &row.error {
            eprintln!(
                "warning: {} n={} L={} r={} samples={} seed={}: {e}",
                row.method, row.cell.n, row.cell.l, row.cell.r, row.cell.samples, row.cell.seed
            );
        }
    }
    let summary = summarize(&rows);
    if let Some(p) = &a.summary {
        fs::write(p, summary_csv(&summary))?;
    }
    let out = a.output.or(spec.output.clone());
    let csv = rows_csv(&rows)?;
    if json_out {
        if let Some(p) = &out {
            fs::write(p, &csv)?;
        }
        print_json(&json!({ "rows": rows, "summary": summary }))
    } else {
        emit(out.as_deref(), &csv)
    }
}

fn degenerate(a: DegenerateArgs, json_out: bool) -> Result<()> {
    let lambdas = if a.lambda.is_empty() {
        default_lambdas()
    } else {
        a.lambda
    };
    let points = degenerate_sweep(a.n, a.l, a.scenario, &a.seeds, &lambdas)?;
    let csv = sweep_csv(&points);
    if json_out {
        if let Some(p) = &a.output {
            fs::write(p, &csv)?;
        }
        let brief: Vec<Value> = points
            .iter()
            .map(|p| json!({ "seed": p.seed, "lambda": p.lambda, "chosen_L": p.summary.chosen_l, "sigma_bar": p.summary.sigma_bar }))
            .collect();
        print_json(&json!({ "scenario": a.scenario.to_string(), "points": brief }))
    } else {
        emit(a.output.as_deref(), &csv)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let k: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{THREADS_VAR} must be a positive integer, got '{v}'")))?;
    if k == 0 {
        return Err(Error::InvalidArgument(format!("{THREADS_VAR} must be positive")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_out = cli.json;
    let result = configure_threads().and_then(|_| match cli.cmd {
        Command::Generate(a) => generate(a, json_out),
        Command::Sample(a) => sample(a, json_out),
        Command::Slice(a) => slice(a, json_out),
        Command::Recover(a) => recover(a, json_out),
        Command::Estimate(a) => estimate(a, json_out),
        Command::Evaluate(a) => evaluate(a, json_out),
        Command::Experiment(a) => experiment(a, json_out),
        Command::Degenerate(a) => degenerate(a, json_out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if json_out {
                let _ = stdout(&format!("{}\n", json!({ "error": e.to_string() })));
            }
            ExitCode::FAILURE
        }
    }
}
