use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dca_csi::channel_gen::ChannelDataset;
use dca_csi::config::RunConfig;
use dca_csi::eval::NmseResult;
use dca_csi::scenet::Scenet;
use dca_csi::{run, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DIVERGED: u8 = 4;
const EXIT_CHECK_FAILED: u8 = 5;

/// Gradient checks pass at or below this relative error.
const GRADCHECK_TOL: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "dca-csi",
    version,
    about = "Divide-and-conquer multi-rate CSI feedback",
    after_help = "Exit status: 0 ok, 2 configuration error, 3 I/O or file format error, \
                  4 numerical divergence, 5 gradient check above tolerance."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides one config key, e.g. `--set k=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a pilot-subcarrier channel dataset.
    Gen {
        #[command(flatten)]
        common: Common,
        /// indoor | outdoor (overrides `scenario`).
        #[arg(long)]
        scenario: Option<String>,
        /// Number of channels (overrides `count`).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes best.ckpt, last.ckpt, config.txt and report.csv into --out.
    #[command(long_about = "Train a model on the training split of --data, selecting the best \
        checkpoint on the validation split.\n\nreport.csv: a `# config <hash>` line, then \
        columns epoch,loss,nmse_cr2,nmse_cr4,... where loss is the mean weighted training \
        criterion of the epoch and nmse_crN the validation NMSE in dB at compression ratio N.")]
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Epoch count (overrides `epochs`).
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from --out/last.ckpt.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on every sample of a dataset.
    #[command(long_about = "Score a checkpoint on every sample of --data at every rate. The \
        checkpoint must match the architecture the config describes.\n\nCSV: a `# config <hash>` \
        line, then columns scenario,n_a,k,samples,compression_ratio,nmse_linear,nmse_db. NMSE is \
        the mean per-sample normalized squared error over the pilot subcarriers; dB values are \
        floored at -100.")]
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beam cross-correlation and delay-lag correlation of a dataset.
    #[command(long_about = "Beam cross-correlation and per-antenna delay-lag correlation of \
        --data.\n\nCSV: a `# config <hash>` line, then columns kind,row,col,value. kind=beam rows \
        hold |correlation| between beams row and col of the 2-D DFT beam set; kind=delay rows \
        hold the correlation of antenna `row` at tap lag `col`.")]
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter and FLOP counts of the encoder and each decoder.
    #[command(long_about = "Parameter and FLOP counts of the encoder (shared block counted once \
        for parameters, once per stage for FLOPs) and of each decoder.\n\nCSV: a `# config \
        <hash>` line, then columns part,compression_ratio,params,flops.")]
    Count {
        #[command(flatten)]
        common: Common,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients of the whole model against central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Format(_) => EXIT_IO,
            Error::Diverged { .. } | Error::NonFinite(_) => EXIT_DIVERGED,
            Error::Config(_) | Error::ArchMismatch { .. } | Error::Shape(_) | Error::Degenerate(_) => {
                EXIT_CONFIG
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::from(Error::Config(format!("--set {kv:?}: expected KEY=VALUE"))))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_dataset(path: &Path) -> Result<ChannelDataset, Failure> {
    if !path.exists() {
        return Err(io_failure(path, std::io::ErrorKind::NotFound.into()));
    }
    Ok(ChannelDataset::load(path)?)
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn cmd_gen(mut cfg: RunConfig, scenario: Option<String>, count: Option<usize>, out: &Path) -> CmdResult {
    if let Some(s) = scenario {
        cfg.set("scenario", &s)?;
    }
    if let Some(c) = count {
        cfg.count = c;
    }
    cfg.validate()?;
    let ds = run::generate(&cfg)?;
    ds.save(out)?;
    println!(
        "config {}: {} {} channels ({}x{} pilot CSI) -> {}",
        cfg.short_hash(),
        ds.len(),
        cfg.scenario.name(),
        ds.n_a,
        ds.width,
        out.display()
    );
    Ok(())
}

fn cmd_train(mut cfg: RunConfig, data: &Path, out: &Path, epochs: Option<usize>, resume: bool) -> CmdResult {
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let ds = load_dataset(data)?;
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let outcome = run::train(&cfg, &ds, Some(out), resume)?;
    let r = &outcome.report;
    match (r.best_epoch, r.records.last()) {
        (Some(best), Some(last)) => println!(
            "config {}: {} epochs in {:.1}s, best epoch {best} (val loss {:.4e}), last val NMSE {:?} dB",
            cfg.short_hash(),
            r.records.len(),
            r.wall_time.as_secs_f64(),
            r.best_val_loss,
            last.val_nmse_db.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
        _ => println!("config {}: nothing to train", cfg.short_hash()),
    }
    Ok(())
}

fn nmse_csv(hash: &str, result: &NmseResult) -> String {
    format!("# config {hash}\n{}\n{}", NmseResult::CSV_HEADER, result.csv_rows())
}

fn cmd_eval(cfg: RunConfig, model: &Path, data: &Path, out: &Path) -> CmdResult {
    cfg.validate()?;
    if !model.exists() {
        return Err(io_failure(model, std::io::ErrorKind::NotFound.into()));
    }
    let ds = load_dataset(data)?;
    let result = run::evaluate_checkpoint(&cfg, model, &ds)?;
    write_file(out, &nmse_csv(&cfg.short_hash(), &result))?;
    for r in &result.rates {
        println!("CR {:>2}: NMSE {:.3} dB", r.compression_ratio, r.db);
    }
    Ok(())
}

fn cmd_analyze(cfg: RunConfig, data: &Path, out: &Path) -> CmdResult {
    cfg.validate()?;
    let ds = load_dataset(data)?;
    let report = run::analyze(&cfg, &ds)?;
    write_file(out, &format!("# config {}\n{}", cfg.short_hash(), report.to_csv()))?;
    let (min, mean) = report.curve_similarity();
    println!(
        "mean off-diagonal beam correlation {:.4}; delay-lag curve cosine similarity min {min:.4}, mean {mean:.4}",
        report.mean_off_diagonal()
    );
    Ok(())
}

fn cmd_count(cfg: RunConfig, out: Option<&Path>) -> CmdResult {
    cfg.validate()?;
    let model = Scenet::new(cfg.scenet_config())?;
    let enc = model.encoder_complexity()?;
    let mut csv = format!("# config {}\npart,compression_ratio,params,flops\n", cfg.short_hash());
    csv.push_str(&format!("encoder,,{},{}\n", enc.params, enc.flops));
    for rate in 1..=cfg.stages {
        let d = model.decoder_complexity(rate)?;
        csv.push_str(&format!(
            "decoder,{},{},{}\n",
            cfg.scenet_config().compression_ratio(rate),
            d.params,
            d.flops
        ));
    }
    print!("{csv}");
    println!("# total parameters {}", model.num_params());
    if let Some(path) = out {
        write_file(path, &csv)?;
    }
    Ok(())
}

fn cmd_gradcheck(cfg: RunConfig) -> CmdResult {
    let r = run::gradcheck(&cfg)?;
    println!(
        "config {}: max relative error {:.3e} over {} parameters ({} skipped at kinks)",
        cfg.short_hash(),
        r.max_rel_error,
        r.checked,
        r.skipped_kinks
    );
    if r.max_rel_error <= GRADCHECK_TOL {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_CHECK_FAILED,
            message: format!("gradient check above tolerance {GRADCHECK_TOL:e}"),
        })
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Gen {
            common,
            scenario,
            count,
            out,
        } => cmd_gen(load_config(&common)?, scenario, count, &out),
        Command::Train {
            common,
            data,
            out,
            epochs,
            resume,
        } => cmd_train(load_config(&common)?, &data, &out, epochs, resume),
        Command::Eval {
            common,
            model,
            data,
            out,
        } => cmd_eval(load_config(&common)?, &model, &data, &out),
        Command::Analyze { common, data, out } => cmd_analyze(load_config(&common)?, &data, &out),
        Command::Count { common, out } => cmd_count(load_config(&common)?, out.as_deref()),
        Command::Gradcheck { common } => cmd_gradcheck(load_config(&common)?),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
