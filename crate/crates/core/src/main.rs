use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::{Duration, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use rayon::prelude::*;

use bearing_monitor::anomaly::{accuracy_csv, accuracy_vs_k, calibrate_k, KGrid};
use bearing_monitor::autoencoder::{load_encoder, DecoderActivation, TrainConfig};
use bearing_monitor::dataset::{
    make_loo_folds, synth_bearing, write_snapshot, BearingId, DatasetManifest, RawSnapshot,
    SyntheticConfig, TIMESTAMP_FORMAT,
};
use bearing_monitor::harness::{
    emit_features, emit_report, emit_timings, load_checkpoint, read_bearing_stats, run_fold,
    serve_tcp, stream_ingest, Corpus, FeatureExtractor, FeatureMode, MonitorSession, OselmConfig,
    PipelineConfig, ReportFormat, RunReport, StreamOptions, SyntheticCorpusConfig,
};
use bearing_monitor::oselm::{UpdateRule, DEFAULT_C, DEFAULT_HIDDEN};

#[derive(Parser)]
#[command(
    name = "bearing-monitor",
    version,
    about = "Online one-class bearing fault detection"
)]
struct Cli {
    /// Log progress to stderr (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all twelve leave-one-out folds and write reports.
    RunAll(RunArgs),
    /// Run a single fold.
    RunFold {
        /// Held-out bearing, e.g. `1.3` or `D1B3`.
        #[arg(long)]
        test: BearingId,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a synthetic bearing life.
    Synth(SynthArgs),
    /// Monitor a live stream of raw snapshots, one per line.
    Stream(StreamArgs),
    /// Accuracy-vs-K sweep over a `bearing_stats.csv` from an earlier run.
    SweepK {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long, default_value = "0.5:100:0.5")]
        k_grid: KGrid,
        /// Output CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "auto")]
    mode: FeatureMode,
    /// Root containing `1st_test`, `2nd_test`, `3rd_test`.
    #[arg(long, env = "BEARING_MONITOR_DATA", conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Manifest overriding dataset roots, channel counts and ground truth.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Use the built-in twelve-bearing synthetic corpus instead of IMS data.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = SyntheticCorpusConfig::default().n_snapshots)]
    synth_snapshots: usize,
    #[arg(long, default_value_t = SyntheticCorpusConfig::default().snapshot_len)]
    synth_samples: usize,
    #[arg(long, default_value_t = SyntheticCorpusConfig::default().seed)]
    synth_seed: u64,
    #[arg(long, default_value_t = SyntheticCorpusConfig::default().noise_sigma)]
    synth_noise_sigma: f64,
    /// Impact amplitude at onset, in noise sigmas.
    #[arg(long, default_value_t = SyntheticCorpusConfig::default().impulse_sigmas)]
    synth_impulse_sigmas: f64,
    /// Impact amplitude growth per snapshot, in noise sigmas.
    #[arg(long, default_value_t = SyntheticCorpusConfig::default().growth_sigmas)]
    synth_growth_sigmas: f64,
    #[arg(long)]
    out: PathBuf,
    /// Master seed; every other seed is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed threshold multiplier instead of per-fold calibration.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long, default_value = "0.5:100:0.5")]
    k_grid: KGrid,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, value_enum, default_value = "sherman-morrison")]
    update_rule: UpdateRule,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, value_enum, default_value = "relu")]
    decoder_activation: DecoderActivation,
    #[arg(long, value_enum, default_value = "all")]
    format: ReportFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthFormat {
    /// One single-channel snapshot file per timestamp, in a directory.
    Ims,
    /// One snapshot per line, ready for `stream --stdin`.
    Stream,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    snapshots: usize,
    /// First snapshot with impacts; healthy throughout if omitted.
    #[arg(long)]
    fault_onset: Option<usize>,
    /// Directory (ims) or file (stream, `-` for stdout).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20480)]
    samples: usize,
    #[arg(long, default_value_t = 0.5)]
    noise_sigma: f64,
    /// Impact amplitude at onset; defaults to 3 noise sigmas.
    #[arg(long)]
    impulse_amplitude: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    impulse_growth: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "stream")]
    format: SynthFormat,
}

#[derive(Args)]
struct StreamArgs {
    /// Encoder model file from a run (`models/encoder_<id>.bin`).
    #[arg(long, conflicts_with = "handcrafted", required_unless_present_any = ["handcrafted", "resume"])]
    encoder: Option<PathBuf>,
    /// Use the five handcrafted features instead of an encoder.
    #[arg(long)]
    handcrafted: bool,
    /// Read frames from standard input.
    #[arg(long, conflicts_with = "listen")]
    stdin: bool,
    /// Serve TCP connections on this address, one session each.
    #[arg(long)]
    listen: Option<String>,
    #[arg(long, required_unless_present = "resume")]
    k: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, value_enum, default_value = "sherman-morrison")]
    update_rule: UpdateRule,
    /// Seed of the OS-ELM random layer.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reject frames that do not hold exactly this many values.
    #[arg(long)]
    samples: Option<usize>,
    /// Write session state here when the input ends or disconnects.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Continue from a checkpoint instead of a fresh model.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::RunAll(args) => run(&args, None),
        Command::RunFold { test, run: args } => run(&args, Some(test)),
        Command::Synth(args) => synth(&args).map(|_| ExitCode::SUCCESS),
        Command::Stream(args) => stream(&args).map(|_| ExitCode::SUCCESS),
        Command::SweepK { stats, k_grid, out } => {
            sweep_k(&stats, &k_grid, out.as_deref()).map(|_| ExitCode::SUCCESS)
        }
    }
}

fn pipeline_config(args: &RunArgs) -> PipelineConfig {
    PipelineConfig {
        ae: TrainConfig {
            batch_size: args.batch_size,
            learning_rate: args.lr,
            decoder_activation: args.decoder_activation,
            ..TrainConfig::default()
        },
        oselm: OselmConfig {
            hidden: args.hidden,
            c: args.c,
            update_rule: args.update_rule,
        },
        k_grid: args.k_grid.clone(),
        fixed_k: args.k,
        ..PipelineConfig::new(args.mode, args.seed)
    }
}

fn load_corpus(args: &RunArgs) -> anyhow::Result<Corpus> {
    if args.synthetic {
        let cfg = SyntheticCorpusConfig {
            n_snapshots: args.synth_snapshots,
            snapshot_len: args.synth_samples,
            seed: args.synth_seed,
            noise_sigma: args.synth_noise_sigma,
            impulse_sigmas: args.synth_impulse_sigmas,
            growth_sigmas: args.synth_growth_sigmas,
            ..SyntheticCorpusConfig::default()
        };
        return Ok(Corpus::synthetic(&cfg)?);
    }
    let Some(root) = &args.data else {
        bail!("no data: pass --data <root>, set BEARING_MONITOR_DATA, or use --synthetic");
    };
    let manifest = match &args.manifest {
        Some(p) => DatasetManifest::load(p)?,
        None => DatasetManifest::ims(),
    };
    Corpus::load_ims(root, &manifest).with_context(|| format!("loading {}", root.display()))
}

fn run(args: &RunArgs, only: Option<BearingId>) -> anyhow::Result<ExitCode> {
    let config = pipeline_config(args);
    config.validate()?;
    let corpus = load_corpus(args)?;
    info!(
        "corpus: {:?}",
        corpus
            .bearings
            .iter()
            .map(|b| (b.id.to_string(), b.len()))
            .collect::<Vec<_>>()
    );
    let mut folds = make_loo_folds(&corpus.manifest())?;
    if let Some(id) = only {
        folds.retain(|f| f.test == id);
    }
    let results: Vec<_> = folds
        .par_iter()
        .map(|f| run_fold(f, &corpus, &config))
        .collect();
    let mut done = Vec::new();
    let mut failed = 0;
    for r in results {
        match r {
            Ok(f) => done.push(f),
            Err(e) => {
                error!("{e}");
                eprintln!("error: {e}");
                failed += 1;
            }
        }
    }
    let report = RunReport::from_folds(&config, done);
    emit_report(&report, &args.out, args.format)?;
    emit_timings(&report.folds, &args.out)?;
    if args.format != ReportFormat::Json {
        emit_features(&corpus, &args.out)?;
    }
    for f in &report.folds {
        println!(
            "{}\t{}\tK={}\tT={:.6e}\tmax={:.6e}\tconv={}\t{}",
            f.test,
            f.verdict.state,
            f.k,
            f.verdict.threshold,
            f.verdict.max_deviation,
            f.convergence_length,
            if f.correct { "ok" } else { "WRONG" }
        );
    }
    println!(
        "accuracy {}/{} ({:?} mode)",
        report.correct,
        report.folds.len(),
        config.feature_mode
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = SyntheticConfig::healthy(args.snapshots, args.noise_sigma, args.seed)
        .with_snapshot_len(args.samples);
    if let Some(onset) = args.fault_onset {
        let amp = args.impulse_amplitude.unwrap_or(3.0 * args.noise_sigma);
        cfg = cfg.with_fault(onset, amp, args.impulse_growth);
    }
    let series = synth_bearing(&cfg)?;
    match args.format {
        SynthFormat::Stream => {
            let sink: Box<dyn Write> = if args.out == Path::new("-") {
                Box::new(io::stdout().lock())
            } else {
                Box::new(
                    std::fs::File::create(&args.out)
                        .with_context(|| args.out.display().to_string())?,
                )
            };
            let mut w = BufWriter::new(sink);
            for s in &series {
                let line: Vec<String> = s.iter().map(f64::to_string).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            w.flush()?;
        }
        SynthFormat::Ims => {
            std::fs::create_dir_all(&args.out).with_context(|| args.out.display().to_string())?;
            let start = NaiveDate::from_ymd_opt(2004, 2, 12)
                .and_then(|d| d.and_hms_opt(10, 32, 39))
                .expect("valid start time");
            for (i, s) in series.into_iter().enumerate() {
                let ts = start + Duration::minutes(10 * i as i64);
                let snap = RawSnapshot::new(ts, 1, s)?;
                let path = args.out.join(ts.format(TIMESTAMP_FORMAT).to_string());
                std::fs::write(&path, write_snapshot(&snap))
                    .with_context(|| path.display().to_string())?;
            }
        }
    }
    Ok(())
}

fn stream(args: &StreamArgs) -> anyhow::Result<()> {
    let extractor = if args.handcrafted {
        FeatureExtractor::Handcrafted
    } else if let Some(p) = &args.encoder {
        FeatureExtractor::Auto(load_encoder(p)?)
    } else {
        bail!("--resume needs --encoder or --handcrafted to rebuild the feature stage");
    };
    let opts = StreamOptions {
        expected_len: args.samples,
        checkpoint: args.checkpoint.clone(),
    };
    let oselm = OselmConfig {
        hidden: args.hidden,
        c: args.c,
        update_rule: args.update_rule,
    };
    let n_in = extractor.n_in();
    let (seed, k, resume) = (args.seed, args.k, args.resume.clone());
    let new_session = move || -> bearing_monitor::Result<MonitorSession> {
        match &resume {
            Some(p) => load_checkpoint(p),
            None => MonitorSession::new(oselm.build(n_in, seed)?, k),
        }
    };
    if let Some(addr) = &args.listen {
        serve_tcp(addr.as_str(), extractor, new_session, opts)?;
        return Ok(());
    }
    if !args.stdin {
        bail!("pass --stdin or --listen <addr:port>");
    }
    let mut session = new_session()?;
    if session.model().n_in() != n_in {
        bail!(
            "checkpoint expects {} features, extractor gives {n_in}",
            session.model().n_in()
        );
    }
    let stdout = io::stdout();
    let summary = stream_ingest(
        io::stdin().lock(),
        BufWriter::new(stdout.lock()),
        &extractor,
        &mut session,
        &opts,
    )?;
    eprintln!(
        "frames {} malformed {} flagged {}{}",
        summary.frames,
        summary.malformed,
        summary.flagged,
        if summary.disconnected {
            " (disconnected)"
        } else {
            ""
        }
    );
    Ok(())
}

fn sweep_k(stats: &Path, grid: &KGrid, out: Option<&Path>) -> anyhow::Result<()> {
    let named = read_bearing_stats(stats)?;
    let points: Vec<_> = named.iter().map(|(_, p)| *p).collect();
    let csv = accuracy_csv(&accuracy_vs_k(&points, grid));
    match out {
        Some(p) => std::fs::write(p, &csv).with_context(|| p.display().to_string())?,
        None => print!("{csv}"),
    }
    let cal = calibrate_k(&points, grid)?;
    eprintln!(
        "best K {} (accuracy {}%, plateau {}..{})",
        cal.k, cal.accuracy, cal.plateau.0, cal.plateau.1
    );
    Ok(())
}
