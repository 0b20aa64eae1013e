//! Command-line front end: `train`, `eval`, `sweep`, `synth`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
//! 3 data or checkpoint error, 4 numeric failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, TrainConfig};
use crate::data::{build_domains, split_leave_one_out, split_single_source, DataError, DatasetKind, Protocol, Split};
use crate::fourier::{self, fftshift, HalfAmplitude, HalfSpectrum, Spectrum};
use crate::generator::{generate_amplitude, post_mixup, GeneratorKind, TargetNoise};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;
use crate::trainer::{evaluate, train_with, EvalReport, IterLog, TrainError};

/// First line of every metrics CSV.
pub const METRICS_VERSION: &str = "# agfa-metrics v1";
pub const METRICS_HEADER: &str = "iter,elbo,nll,kl,smcd,val_loss,swad_phase,t_s,t_e,l_bar_val,disc,gen_smcd";

/// File suffixes of one synthesis panel, in column order.
pub const SYNTH_SUFFIXES: [&str; 7] = [
    "1_original",
    "2_phase",
    "3_amplitude",
    "4_gen_amplitude",
    "5_mix_amplitude",
    "6_recon_nomix",
    "7_recon_mix",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training failed: {0}")]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Checkpoint(_) => 3,
            CliError::Train(TrainError::EmptyDomain(_)) => 3,
            CliError::Train(TrainError::Setup(_)) => 2,
            CliError::Train(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Parser, Debug)]
#[command(name = "agfa", version, about = "Adversarial Fourier-amplitude domain generalisation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML config file; defaults are used for anything it omits.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `--set swad.n_s=2` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        Ok(TrainConfig::load_with_overrides(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model and evaluate it on the target domain(s).
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Print the final report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a checkpoint on every domain of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// glyph, rotated_mnist or colored_mnist; defaults to the training one.
        #[arg(long)]
        dataset: Option<String>,
        /// Which part of the data to score.
        #[arg(long, value_enum, default_value_t = EvalSplit::All)]
        split: EvalSplit,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Train once per value of `eta` or `alpha_mix` and tabulate accuracies.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Target domains to hold out in turn; all domains when omitted.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<usize>,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
        /// Run the values on parallel threads, one output directory each.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        json: bool,
    },
    /// Write amplitude/phase/reconstruction panels for source samples.
    Synth {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value = "runs/synth")]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { cfg, out, json } => {
            let cfg = cfg.resolve()?;
            let report = cmd_train(&cfg, &out, !json)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
            } else {
                print!("{}", format_table(&report.targets, "target"));
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            dataset,
            split,
            overrides,
            json,
        } => {
            let report = cmd_eval(&checkpoint, dataset.as_deref(), split, &overrides)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
            } else {
                print!("{}", format_table(&report.domains, "domain"));
            }
            Ok(())
        }
        Command::Sweep {
            cfg,
            param,
            values,
            targets,
            out,
            parallel,
            json,
        } => {
            let cfg = cfg.resolve()?;
            let table = cmd_sweep(&cfg, &param, &values, &targets, &out, parallel)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table).expect("table serialises"));
            } else {
                print!("{}", table.to_csv());
            }
            Ok(())
        }
        Command::Synth {
            checkpoint,
            n,
            out,
            overrides,
        } => {
            let files = cmd_synth(&checkpoint, n, &out, &overrides)?;
            println!("wrote {} files to {}", files.len(), out.display());
            Ok(())
        }
    }
}

/// Written to `manifest.json` before training starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub build: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub out_dir: String,
    /// The resolved config with every default materialised.
    pub config: String,
}

pub fn build_id() -> String {
    option_env!("AGFA_BUILD_ID").map_or_else(|| format!("agfa-{}", env!("CARGO_PKG_VERSION")), str::to_string)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Final report of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: String,
    pub seed: u64,
    pub iterations: usize,
    pub swad: Option<crate::trainer::SwadSummary>,
    pub targets: Vec<EvalReport>,
    pub mean_target_accuracy: f64,
}

pub fn make_split(cfg: &TrainConfig) -> Result<Split> {
    let domains = build_domains(&cfg.data, cfg.seed)?;
    let split = match cfg.data.protocol {
        Protocol::LeaveOneOut => split_leave_one_out(&domains, cfg.data.domain, cfg.data.val_frac, cfg.seed)?,
        Protocol::SingleSource => split_single_source(&domains, cfg.data.domain, cfg.data.val_frac, cfg.seed)?,
    };
    Ok(split)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// One metrics row: window means over the iterations since the previous
/// row, plus the validation and SWAD state at `last`.
pub fn metrics_row(window: &[IterLog]) -> String {
    let last = window.last().expect("non-empty window");
    let m = |f: fn(&IterLog) -> f64| mean(window.iter().map(f));
    let gen = mean(window.iter().filter_map(|l| l.gen_smcd));
    let opt_usize = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        last.iter,
        m(|l| l.elbo),
        m(|l| l.nll),
        m(|l| l.kl),
        m(|l| l.smcd),
        fmt_opt(last.val_loss),
        last.phase.as_str(),
        opt_usize(last.t_s),
        opt_usize(last.t_e),
        fmt_opt(last.l_bar),
        m(|l| l.disc),
        gen,
    )
}

/// Trains with `cfg`, writing `manifest.json`, `config.toml`,
/// `metrics.csv`, `model.ckpt` and `results.json` under `out`.
pub fn cmd_train(cfg: &TrainConfig, out: &Path, progress: bool) -> Result<TrainReport> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let config = cfg.to_toml();
    let mut manifest = RunManifest {
        build: build_id(),
        seed: cfg.seed,
        started_unix: unix_now(),
        finished_unix: None,
        out_dir: out.display().to_string(),
        config: config.clone(),
    };
    let manifest_path = out.join("manifest.json");
    write_file(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serialises"))?;
    write_file(&out.join("config.toml"), &config)?;

    let split = make_split(cfg)?;
    let metrics_path = out.join("metrics.csv");
    let mut csv = format!("{METRICS_VERSION}\n{METRICS_HEADER}\n");
    let mut window: Vec<IterLog> = Vec::new();
    let trained = train_with(cfg, &split, |log| {
        window.push(log.clone());
        if log.val_loss.is_some() {
            let row = metrics_row(&window);
            if progress {
                eprintln!("{row}");
            }
            csv.push_str(&row);
            csv.push('\n');
            window.clear();
        }
    })?;
    if !window.is_empty() {
        csv.push_str(&metrics_row(&window));
        csv.push('\n');
    }
    write_file(&metrics_path, &csv)?;
    Checkpoint::from_trained(cfg, &trained).save(&out.join("model.ckpt"))?;

    let mut rng = stream(cfg.seed, Stream::Eval);
    let targets = split
        .targets
        .iter()
        .map(|d| evaluate(&trained.model, d, cfg.eval_pairs, &mut rng))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let report = TrainReport {
        method: cfg.method.as_str().to_string(),
        seed: cfg.seed,
        iterations: trained.iterations,
        swad: trained.swad.clone(),
        mean_target_accuracy: mean(targets.iter().map(|t| t.accuracy)),
        targets,
    };
    write_file(&out.join("results.json"), serde_json::to_string_pretty(&report).expect("report serialises"))?;
    manifest.finished_unix = Some(unix_now());
    write_file(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serialises"))?;
    Ok(report)
}

fn format_table(rows: &[EvalReport], label: &str) -> String {
    let mut s = format!("{label:<16} {:>8} {:>10} {:>8}\n", "n", "accuracy", "disc");
    for r in rows {
        let _ = writeln!(s, "{:<16} {:>8} {:>10.4} {:>8.4}", r.domain, r.count, r.accuracy, r.discrepancy);
    }
    let _ = writeln!(s, "{:<16} {:>8} {:>10.4}", "mean", "", mean(rows.iter().map(|r| r.accuracy)));
    s
}

/// Subset of the data scored by `eval`. `train`, `val` and `target` rebuild
/// the training run's split from its config and seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    /// Every domain, all samples.
    All,
    Train,
    Val,
    Target,
}

/// Output of `eval --json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub checkpoint: String,
    pub dataset: String,
    pub split: EvalSplit,
    /// Index of the held-out (leave-one-out) or source (single-source)
    /// domain of the training run.
    pub protocol_domain: usize,
    pub domains: Vec<EvalReport>,
    pub mean_accuracy: f64,
}

fn parse_dataset(name: &str) -> Result<DatasetKind> {
    match name {
        "glyph" => Ok(DatasetKind::Glyph),
        "rotated_mnist" => Ok(DatasetKind::RotatedMnist),
        "colored_mnist" => Ok(DatasetKind::ColoredMnist),
        other => Err(CliError::Usage(format!(
            "unknown dataset `{other}` (expected glyph, rotated_mnist or colored_mnist)"
        ))),
    }
}

/// Evaluates a checkpoint on every domain of `dataset` (built with the
/// checkpoint's data settings and seed).
pub fn cmd_eval(
    checkpoint: &Path,
    dataset: Option<&str>,
    split: EvalSplit,
    overrides: &[String],
) -> Result<EvalOutput> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg = ck.config.clone();
    if let Some(name) = dataset {
        cfg.data.dataset = parse_dataset(name)?;
    }
    if !overrides.is_empty() {
        let mut table: toml::Table = cfg.to_toml().parse().expect("echo parses");
        for o in overrides {
            crate::config::apply_override(&mut table, o)?;
        }
        cfg = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
    }
    let domains = match split {
        EvalSplit::All => build_domains(&cfg.data, cfg.seed)?,
        EvalSplit::Train => make_split(&cfg)?.train,
        EvalSplit::Val => make_split(&cfg)?.val,
        EvalSplit::Target => make_split(&cfg)?.targets,
    };
    if let Some(d) = domains.first() {
        if d.shape() != ck.model.shape || d.class_count != ck.model.head.classes() {
            return Err(CliError::Data(DataError::Invalid(format!(
                "dataset images {:?}/{} classes do not match the checkpoint {:?}/{}",
                d.shape(),
                d.class_count,
                ck.model.shape,
                ck.model.head.classes()
            ))));
        }
    }
    let mut rng = stream(cfg.seed, Stream::Eval);
    let reports = domains
        .iter()
        .map(|d| evaluate(&ck.model, d, cfg.eval_pairs, &mut rng))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(EvalOutput {
        checkpoint: checkpoint.display().to_string(),
        dataset: cfg.data.dataset.as_str().to_string(),
        split,
        protocol_domain: cfg.data.domain,
        mean_accuracy: mean(reports.iter().map(|r| r.accuracy)),
        domains: reports,
    })
}

/// Sensitivity table: one row per value, one accuracy column per target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: String,
    pub domains: Vec<String>,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub accuracies: Vec<f64>,
    pub mean: f64,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},mean\n", self.param, self.domains.join(","));
        for r in &self.rows {
            let accs: Vec<String> = r.accuracies.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(s, "{},{},{}", r.value, accs.join(","), r.mean);
        }
        s
    }
}

pub const SWEEP_PARAMS: [&str; 2] = ["eta", "alpha_mix"];

/// Runs leave-one-out training for every value × target and writes
/// `sweep.csv` under `out` (runs in `out/<param>=<value>/target<k>/`).
pub fn cmd_sweep(
    base: &TrainConfig,
    param: &str,
    values: &[f64],
    targets: &[usize],
    out: &Path,
    parallel: bool,
) -> Result<SweepTable> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(CliError::Usage(format!("sweep parameter must be eta or alpha_mix, got `{param}`")));
    }
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    let targets: Vec<usize> = if targets.is_empty() {
        (0..base.data.domain_count()).collect()
    } else {
        targets.to_vec()
    };
    let configs = values
        .iter()
        .map(|&v| {
            targets
                .iter()
                .map(|&t| {
                    let mut c = base.clone();
                    match param {
                        "eta" => c.eta = v,
                        _ => c.alpha_mix = v,
                    }
                    c.data.domain = t;
                    c.data.protocol = Protocol::LeaveOneOut;
                    c.validate()?;
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let run_value = |i: usize| -> Result<Vec<EvalReport>> {
        configs[i]
            .iter()
            .map(|c| {
                let dir = out.join(format!("{param}={}", values[i])).join(format!("target{}", c.data.domain));
                let r = cmd_train(c, &dir, false)?;
                Ok(r.targets.into_iter().next().expect("one held-out domain"))
            })
            .collect()
    };
    let results: Vec<Result<Vec<EvalReport>>> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..values.len()).map(|i| s.spawn(move || run_value(i))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        })
    } else {
        (0..values.len()).map(run_value).collect()
    };
    let mut rows = Vec::new();
    let mut domains = Vec::new();
    for (value, res) in values.iter().zip(results) {
        let reports = res?;
        domains = reports.iter().map(|r| r.domain.clone()).collect();
        let accuracies: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
        rows.push(SweepRow {
            value: *value,
            mean: mean(accuracies.iter().copied()),
            accuracies,
        });
    }
    let table = SweepTable {
        param: param.to_string(),
        domains,
        rows,
    };
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join("sweep.csv"), table.to_csv())?;
    Ok(table)
}

/// 8-bit quantisation of `[0, 1]` values.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PGM (one channel) or PPM (two or three channels; a missing blue
/// channel is written as zero).
pub fn encode_netpbm(pixels: &[f64], h: usize, w: usize, ch: usize) -> Vec<u8> {
    let magic = if ch == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    for p in pixels.chunks(ch) {
        if ch == 1 {
            out.push(quantize(p[0]));
        } else {
            out.extend((0..3).map(|c| p.get(c).map_or(0, |&v| quantize(v))));
        }
    }
    out
}

/// Centred log-amplitude view scaled to `[0, 1]` per image.
fn amplitude_view(full: &[f64], h: usize, w: usize, ch: usize) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; plane * ch];
    let logs: Vec<f64> = full.iter().map(|a| a.ln_1p()).collect();
    let max = logs.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for c in 0..ch {
        let shifted = fftshift(&logs[c * plane..(c + 1) * plane], h, w);
        for (p, v) in shifted.iter().enumerate() {
            out[p * ch + c] = v / max;
        }
    }
    out
}

fn phase_view(phase: &[f64], h: usize, w: usize, ch: usize) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; plane * ch];
    for c in 0..ch {
        let shifted = fftshift(&phase[c * plane..(c + 1) * plane], h, w);
        for (p, v) in shifted.iter().enumerate() {
            out[p * ch + c] = (v + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
        }
    }
    out
}

/// Writes the seven-image panel for the first `n` source training samples.
/// Returns the written paths.
pub fn cmd_synth(checkpoint: &Path, n: usize, out: &Path, overrides: &[String]) -> Result<Vec<PathBuf>> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut table: toml::Table = ck.config.to_toml().parse().expect("echo parses");
    for o in overrides {
        crate::config::apply_override(&mut table, o)?;
    }
    let cfg: TrainConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    cfg.validate()?;
    let gen = match &ck.generator {
        Some(g) if g.kind() == GeneratorKind::Amplitude => g,
        _ => return Err(CliError::Usage("synth needs a checkpoint with an amplitude generator".into())),
    };
    let split = make_split(&cfg)?;
    let source = split.train.first().ok_or_else(|| DataError::Invalid("no source domain".into()))?;
    let n = n.min(source.len());
    let s = ck.model.shape;
    let (h, w, ch) = (s.height, s.width, s.channels);
    let half = HalfSpectrum::new(h, w);
    let noise = TargetNoise::draw(
        n,
        cfg.alpha_mix,
        &mut stream(cfg.seed, Stream::GenNoise),
        &mut stream(cfg.seed, Stream::Mixup),
    )
    .map_err(TrainError::from)?;
    let generated = generate_amplitude(gen, &noise.eps).map_err(TrainError::from)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut files = Vec::new();
    for i in 0..n {
        let image = Tensor::new(vec![h, w, ch], source.image(i).to_vec()).expect("image shape");
        let spec = fourier::dft2(&image).map_err(TrainError::from)?;
        let a_src = half.full_to_half(&spec.amplitude, ch).map_err(TrainError::from)?;
        let a_mix = post_mixup(&generated[i], &a_src, cfg.alpha_mix, noise.lam[i]).map_err(TrainError::from)?;
        let recon = |a: &HalfAmplitude| -> Result<Vec<f64>> {
            let full = half.half_to_full(a).map_err(TrainError::from)?;
            let spec = Spectrum {
                amplitude: full,
                ..spec.clone()
            };
            Ok(fourier::idft2_real(&spec).map_err(TrainError::from)?.into_data())
        };
        let gen_full = half.half_to_full(&generated[i]).map_err(TrainError::from)?;
        let mix_full = half.half_to_full(&a_mix).map_err(TrainError::from)?;
        let views: [Vec<f64>; 7] = [
            source.image(i).to_vec(),
            phase_view(&spec.phase, h, w, ch),
            amplitude_view(&spec.amplitude, h, w, ch),
            amplitude_view(&gen_full, h, w, ch),
            amplitude_view(&mix_full, h, w, ch),
            recon(&generated[i])?,
            recon(&a_mix)?,
        ];
        let ext = if ch == 1 { "pgm" } else { "ppm" };
        for (suffix, view) in SYNTH_SUFFIXES.iter().zip(&views) {
            let path = out.join(format!("sample{i:03}_{suffix}.{ext}"));
            write_file(&path, encode_netpbm(view, h, w, ch))?;
            files.push(path);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swad::Phase;

    #[test]
    fn netpbm_headers_and_quantisation() {
        let pgm = encode_netpbm(&[0.0, 0.5, 1.0, 2.0], 2, 2, 1);
        assert_eq!(&pgm[..11], b"P5\n2 2\n255\n");
        assert_eq!(&pgm[11..], &[0, 128, 255, 255]);
        let ppm = encode_netpbm(&[1.0, 0.0, 0.0, 1.0], 1, 2, 2);
        assert_eq!(&ppm[..11], b"P6\n2 1\n255\n");
        assert_eq!(&ppm[11..], &[255, 0, 0, 0, 255, 0]);
    }

    #[test]
    fn amplitude_view_puts_dc_in_centre() {
        let mut full = vec![0.0; 16];
        full[0] = 10.0;
        let v = amplitude_view(&full, 4, 4, 1);
        assert_eq!(v[2 * 4 + 2], 1.0);
        assert_eq!(v.iter().filter(|&&x| x > 0.0).count(), 1);
    }

    #[test]
    fn sweep_rejects_bad_arguments() {
        let cfg = TrainConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let e = cmd_sweep(&cfg, "lr", &[0.1], &[], dir.path(), false).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = cmd_sweep(&cfg, "eta", &[], &[], dir.path(), false).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::Data(DataError::Invalid(String::new())).exit_code(), 3);
        assert_eq!(
            CliError::Train(TrainError::NonFinite { iter: 1, what: "x" }).exit_code(),
            4
        );
        assert_eq!(run_from(["agfa", "train", "--config", "/no/such.toml"]), 2);
        assert_eq!(run_from(["agfa", "bogus"]), 2);
    }

    #[test]
    fn metrics_row_format() {
        let log = |iter, val: Option<f64>| IterLog {
            iter,
            elbo: -1.0,
            nll: 0.5,
            kl: 2.0,
            smcd: f64::NAN,
            disc: 0.25,
            gen_smcd: None,
            val_loss: val,
            phase: Phase::Searching,
            t_s: None,
            t_e: None,
            l_bar: None,
        };
        let row = metrics_row(&[log(1, None), log(2, Some(0.75))]);
        assert_eq!(row, "2,-1,0.5,2,NaN,0.75,searching,,,,0.25,NaN");
        assert_eq!(METRICS_HEADER.split(',').count(), row.split(',').count());
    }
}
