//! `pigat` command line: synthesise data, train, evaluate, check gradients and run ablations.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pigat::checkpoint::Checkpoint;
use pigat::eval::{evaluate_test, format_table, run_ablation_with, AblationMatrix, EvalReport, LONGTAIL_THRESHOLDS};
use pigat::model::{gradcheck_seeds, GradcheckOptions};
use pigat::pipeline::{
    degree_summary, generate_synthetic, infer_schema, ingest, ingest_raw, read_interactions, train_with, Prepared,
    SignalKind, SynthSpec,
};
use pigat::{Error, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "pigat", version, about = "Graph-attention recommender over time-ordered interactions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic interactions file plus a `.latents` ground-truth file.
    Synth {
        /// Generator spec, `key = value` per line.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the generator spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes model.ckpt, metrics.tsv, resolved_config.txt and schema.txt.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score the test split of a data file with a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Compare analytic and numeric gradients of a tiny model with the config's switches.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Train every configuration of a matrix for every seed and tabulate test AUCs.
    Ablate {
        #[arg(long)]
        matrix: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Results table (TSV).
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Interactions file: `timestamp<TAB>user_fields<TAB>item_fields<TAB>signal`.
    #[arg(long)]
    data: PathBuf,
    /// How to turn the signal column into labels.
    #[arg(long, value_enum, default_value_t = Signal::Auto)]
    signal: Signal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Signal {
    Auto,
    Binary,
    Rating,
}

impl From<Signal> for SignalKind {
    fn from(s: Signal) -> Self {
        match s {
            Signal::Auto => SignalKind::Auto,
            Signal::Binary => SignalKind::Binary,
            Signal::Rating => SignalKind::Rating,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::NonFinite { .. } | Error::Domain(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 1, message }
}

/// Reads a config-like input; a missing file is a usage error rather than a data error.
fn read_setup(path: &Path, what: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {what} {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure {
        code: 2,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth { spec, out, seed } => synth(&spec, &out, seed),
        Command::Train { config, data, out, seed } => train(&config, &data, &out, seed),
        Command::Eval { checkpoint, data } => eval(&checkpoint, &data),
        Command::Gradcheck { config, seeds } => gradcheck(&config, seeds),
        Command::Ablate { matrix, data, out } => ablate(&matrix, &data, &out),
    }
}

fn synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut spec = SynthSpec::parse(&read_setup(spec_path, "spec")?)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = generate_synthetic(&spec)?;
    write(out, &data.to_interactions_text())?;
    let mut latents = out.as_os_str().to_owned();
    latents.push(".latents");
    write(Path::new(&latents), &data.latents_text())?;
    print!("events\t{}\npositive_rate\t{:.4}\n", data.events.len(), data.positive_rate());
    print!("{}", degree_summary(&data.item_degrees(), &LONGTAIL_THRESHOLDS).to_text());
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig, Failure> {
    let mut config = TrainConfig::parse(&read_setup(path, "config")?)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn train(config_path: &Path, data: &DataArgs, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let config = load_config(config_path, seed)?;
    let dataset = ingest(&data.data, None, (config.embed_user, config.embed_item), data.signal.into())?;
    let prepared = Prepared::new(dataset, &config)?;
    std::fs::create_dir_all(out).map_err(|e| Failure {
        code: 2,
        message: format!("cannot create {}: {e}", out.display()),
    })?;
    let outcome = train_with(&config, &prepared, |m| eprintln!("{m}"))?;
    let metrics = outcome.metrics_text();
    let checkpoint = Checkpoint::new(config.clone(), prepared.schema().clone(), outcome.best);
    write(&out.join("model.ckpt"), &checkpoint.to_text())?;
    write(&out.join("metrics.tsv"), &metrics)?;
    write(&out.join("resolved_config.txt"), &config.to_text())?;
    write(&out.join("schema.txt"), &prepared.schema().to_text())?;
    println!("best_epoch\t{}", outcome.best_epoch);
    println!("checkpoint\t{}", out.join("model.ckpt").display());
    Ok(())
}

fn eval(checkpoint_path: &Path, data: &DataArgs) -> Result<(), Failure> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let raw = read_interactions(&data.data)?;
    let layout = infer_schema(&raw, checkpoint.schema.user_width, checkpoint.schema.item_width)?;
    checkpoint.check_layout(&layout)?;
    let dataset = ingest_raw(raw, checkpoint.schema.clone(), data.signal.into())?;
    let prepared = Prepared::new(dataset, &checkpoint.config)?;
    let report: EvalReport = evaluate_test(&checkpoint.params, &prepared)?;
    print!("{}", report.to_text());
    for (k, v, n) in &report.slices {
        if v.value().is_none() {
            eprintln!("note: AUC over items with at most {k} training interactions is undefined ({n} instances, one class)");
        }
    }
    if report.auc.value().is_none() {
        eprintln!("note: the test split holds a single class; AUC is undefined");
    }
    Ok(())
}

fn gradcheck(config_path: &Path, seeds: u64) -> Result<(), Failure> {
    if seeds == 0 {
        return Err(usage("--seeds must be positive".into()));
    }
    let config = load_config(config_path, None)?;
    let opts = GradcheckOptions::default();
    let report = gradcheck_seeds(&config.model_config(), 0..seeds, &opts)?;
    println!("group\tmax_rel_error");
    for (group, rel) in report.groups() {
        println!("{group}\t{rel:.3e}");
    }
    println!(
        "checked\t{}\nskipped_at_kinks\t{}\nmax_rel_error\t{:.3e}\ntolerance\t{:.0e}",
        report.checked(),
        report.skipped(),
        report.max_rel(),
        report.tolerance
    );
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Failure {
            code: 3,
            message: format!("gradient check failed: max relative error {:.3e}", report.max_rel()),
        })
    }
}

fn ablate(matrix_path: &Path, data: &DataArgs, out: &Path) -> Result<(), Failure> {
    let matrix = AblationMatrix::parse(&read_setup(matrix_path, "matrix")?)?;
    let raw = read_interactions(&data.data)?;
    let schema = infer_schema(&raw, 1, 1)?;
    let dataset = ingest_raw(raw, schema, data.signal.into())?;
    let results = run_ablation_with(&matrix, &dataset, |r| match (&r.error, r.test_auc) {
        (Some(e), _) => eprintln!("{} seed {}: error: {e}", r.name, r.seed),
        (None, Some(auc)) => eprintln!("{} seed {}: test auc {auc:.6} ({:.1}s)", r.name, r.seed, r.wall_secs),
        (None, None) => eprintln!("{} seed {}: test auc n/a", r.name, r.seed),
    });
    let table = format_table(&results);
    write(out, &table)?;
    print!("{table}");
    Ok(())
}
