//! `sme-risk` command line: run the experiment, synthesise data, or explain
//! a saved model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sme_risk::dataset::{apply_log_transform, load_csv, synthesize_firms, write_csv, ClassMoments, LabelMechanism};
use sme_risk::interpret::{ale_bootstrap, ale_curve};
use sme_risk::models::{ModelDocument, ModelFamily};
use sme_risk::pipeline::{ale_svg, emit_outputs, run_experiment, DataSource, ExperimentConfig, PipelineError};

#[derive(Parser)]
#[command(
    name = "sme-risk",
    version,
    about = "SME default prediction with model-agnostic interpretation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment and write report, metrics and plots.
    Run {
        /// JSON experiment config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of lr,probit,gev,gbt,fann.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelFamily>>,
        /// Use synthetic data even if the config names a CSV file.
        #[arg(long)]
        synthetic: bool,
    },
    /// Write a synthetic firm sample as CSV.
    Synth {
        /// Class-moment JSON; the built-in Italian SME moments when omitted.
        #[arg(long)]
        moments: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// ALE curve of one feature for a saved model on a CSV sample.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        feature: String,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        /// Bootstrap replicates for the band; 0 for none.
        #[arg(long, default_value_t = 100)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the panel as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl ToString) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

fn data_error(message: impl ToString) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(data_error(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn run(
    config: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    models: Option<Vec<ModelFamily>>,
    synthetic: bool,
) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = models {
        cfg.models = m;
    }
    if synthetic && matches!(cfg.data, DataSource::Csv { .. }) {
        cfg.data = DataSource::default();
    }
    cfg.output_dir = Some(out.clone());
    cfg.validate()?;

    let report = run_experiment(&cfg)?;
    for m in &report.models {
        eprintln!(
            "{:<7} sens {:.3}  spec {:.3}  H {:.3}  AUC {:.3}",
            m.family.key(),
            m.test.sensitivity,
            m.test.specificity,
            m.test.h_measure,
            m.test.auc
        );
    }
    let manifest = emit_outputs(&report, &out)?;
    let listing: String = manifest
        .files
        .iter()
        .map(|f| format!("{}  {}\n", f.sha256, f.path))
        .collect();
    print_stdout(&listing)
}

fn synth(moments: Option<PathBuf>, n: usize, out: PathBuf, seed: u64) -> Result<(), Failure> {
    let m = match moments {
        Some(p) => ClassMoments::from_path(p).map_err(config_error)?,
        None => ClassMoments::italian_smes(),
    };
    let d = synthesize_firms(&m, n, seed, &LabelMechanism::default()).map_err(config_error)?;
    write_csv(&d, &out).map_err(data_error)?;
    eprintln!(
        "wrote {} firms ({} defaults) to {}",
        d.n(),
        d.positives(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn explain(
    model: PathBuf,
    data: PathBuf,
    feature: String,
    bins: usize,
    bootstrap: usize,
    seed: u64,
    svg: Option<PathBuf>,
) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&model).map_err(|e| config_error(format!("{}: {e}", model.display())))?;
    let doc = ModelDocument::from_json(&text).map_err(config_error)?;
    let loaded = load_csv(&data, &doc.feature_names).map_err(data_error)?;
    let d = apply_log_transform(&loaded.dataset, &doc.log_transformed).map_err(data_error)?;
    let j = d.feature_index(&feature).map_err(config_error)?;
    let curve = if bootstrap > 0 {
        ale_bootstrap(&doc.model, &d, j, bins, bootstrap, (0.05, 0.95), seed)
    } else {
        ale_curve(&doc.model, &d, j, bins)
    }
    .map_err(|source| PipelineError::Interpret {
        family: doc.family,
        source,
    })?;
    if let Some(path) = svg {
        std::fs::write(&path, ale_svg(&curve, doc.family.label()))
            .map_err(|e| data_error(format!("{}: {e}", path.display())))?;
    }
    let json = serde_json::to_string_pretty(&curve.points()).map_err(data_error)?;
    print_stdout(&format!("{json}\n"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            models,
            synthetic,
        } => run(config, out, seed, models, synthetic),
        Command::Synth { moments, n, out, seed } => synth(moments, n, out, seed),
        Command::Explain {
            model,
            data,
            feature,
            bins,
            bootstrap,
            seed,
            svg,
        } => explain(model, data, feature, bins, bootstrap, seed, svg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
