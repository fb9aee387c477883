//! `min2net` command line: dataset synthesis, preprocessing of raw recordings, cross-validated
//! experiments and latent export.
//!
//! Exit codes: 0 success, 1 I/O or corrupt files, 2 invalid arguments or configuration.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use min2net::dataio::{self, AugmentKind, SynthSpec};
use min2net::harness::{self, ExperimentConfig, Scheme, TestSessionFilter};
use min2net::preproc::{self, PipelineSpec, RestWindow, Window};
use min2net::{Error, Network};

use config::{read_toml, resolve_seed, ResolvedRun, RunFile};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config values or data that cannot satisfy the request.
    Usage(String),
    /// Unreadable, unwritable or corrupt files.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Integrity { .. } | Error::Version { .. } | Error::Json { .. } => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "min2net", version, about = "Motor-imagery EEG decoding with a multi-task autoencoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic motor-imagery dataset.
    Synth(SynthArgs),
    /// Filter, resample and epoch raw recordings into a dataset.
    Preprocess(PreprocessArgs),
    /// Run a cross-validated experiment.
    Run(RunArgs),
    /// Write the latent vector of every trial to CSV.
    ExportLatents(ExportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// TOML file with the generator settings.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides MIN2NET_SEED and the seed in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset name stored in the manifest.
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Raw recording directory (manifest.json plus .mirw files).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Pass band in Hz, LOW:HIGH.
    #[arg(long, default_value = "8:30")]
    pub band: String,
    /// Butterworth order.
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Output sampling rate in Hz.
    #[arg(long, default_value_t = 100.0)]
    pub fs: f64,
    /// Trial window in seconds after each cue, START:END.
    #[arg(long, default_value = "0:4")]
    pub window: String,
    /// File listing the channels to keep, one per line (default: all).
    #[arg(long)]
    pub channels: Option<PathBuf>,
    /// Event code to class mapping, CODE:NAME,... (default: the manifest's event classes).
    #[arg(long)]
    pub classes: Option<String>,
    /// Also cut a rest trial from this window after every cue, START:END.
    #[arg(long)]
    pub rest_window: Option<String>,
    /// Keep a random half of the rest trials.
    #[arg(long, default_value_t = false)]
    pub balance_rest: bool,
    /// Standardize every trial and channel to zero mean, unit variance.
    #[arg(long, default_value_t = false)]
    pub standardize: bool,
    /// Seed for rest balancing; overrides MIN2NET_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Dataset directory; overrides `data` in the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// dependent or independent; overrides `scheme` in the config.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated transforms: jitter, scale, magwarp, timewarp, permute.
    #[arg(long)]
    pub augment: Option<String>,
    /// Folds trained concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Test session per subject: auto, online or offline<N>.
    #[arg(long)]
    pub test_session: Option<TestSessionFilter>,
    /// Overrides MIN2NET_SEED and the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Checkpoint written by `run`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

fn pair(flag: &'static str, s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--{flag} `{s}` is not of the form A:B"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn to_toml<T: serde::Serialize>(v: &T) -> String {
    toml::to_string(v).expect("resolved configuration serializes")
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut spec: SynthSpec = read_toml(&a.spec)?;
    spec.seed = resolve_seed(a.seed, Some(spec.seed))?;
    let ds = dataio::synth_generate(&spec)?;
    create_dir(&a.out)?;
    let m = dataio::write_dataset(&ds, &a.out, &a.name)?;
    write_text(&a.out.join("resolved_config.toml"), &to_toml(&spec))?;
    println!(
        "{}: {} subjects, {} trials, {} channels × {} samples @ {} Hz, classes {:?}",
        m.dataset,
        m.subjects.len(),
        m.total_trials(),
        m.n_channels,
        m.n_samples,
        m.fs,
        m.class_names
    );
    Ok(())
}

fn parse_classes(s: &str) -> Result<Vec<(i32, String)>, CliError> {
    s.split(',')
        .map(|item| {
            let (code, name) = item
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("--classes entry `{item}` is not CODE:NAME")))?;
            let code = code
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--classes code `{code}` is not an integer")))?;
            Ok((code, name.trim().to_string()))
        })
        .collect()
}

fn read_channel_list(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = text
        .split(|c: char| c == '\n' || c == ',')
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.starts_with('#'))
        .map(String::from)
        .collect();
    if names.is_empty() {
        return Err(CliError::Usage(format!("{} lists no channels", path.display())));
    }
    Ok(names)
}

#[derive(serde::Serialize)]
struct ResolvedPreprocess<'a> {
    input: &'a Path,
    seed: u64,
    balance_rest: bool,
    order: usize,
    low_hz: f64,
    high_hz: f64,
    target_fs: f64,
    window: Window,
    standardize: bool,
    channels: &'a Option<Vec<String>>,
    class_names: &'a [String],
    /// TOML keys must be strings, so event codes are written as text.
    class_map: BTreeMap<String, usize>,
    rest: Option<RestWindow>,
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<(), CliError> {
    let (low, high) = pair("band", &a.band)?;
    let (w0, w1) = pair("window", &a.window)?;
    let seed = resolve_seed(a.seed, None)?;
    let manifest = dataio::read_raw_manifest(&a.input)?;
    let classes: Vec<(i32, String)> = match &a.classes {
        Some(s) => parse_classes(s)?,
        None => manifest.event_classes.iter().map(|c| (c.code, c.name.clone())).collect(),
    };
    if classes.is_empty() {
        return Err(CliError::Usage(
            "no event classes: pass --classes or list event_classes in the raw manifest".into(),
        ));
    }
    let mut class_names: Vec<String> = Vec::new();
    let mut class_map = BTreeMap::new();
    for (code, name) in classes {
        let label = match class_names.iter().position(|n| *n == name) {
            Some(l) => l,
            None => {
                class_names.push(name);
                class_names.len() - 1
            }
        };
        class_map.insert(code, label);
    }
    let rest = match &a.rest_window {
        Some(s) => {
            let (r0, r1) = pair("rest-window", s)?;
            class_names.push("rest".into());
            Some(RestWindow {
                window: Window::new(r0, r1),
                label: class_names.len() - 1,
            })
        }
        None => None,
    };
    if a.balance_rest && rest.is_none() {
        return Err(CliError::Usage("--balance-rest needs --rest-window".into()));
    }
    let spec = PipelineSpec {
        order: a.order,
        low_hz: low,
        high_hz: high,
        target_fs: a.fs,
        channels: a.channels.as_deref().map(read_channel_list).transpose()?,
        window: Window::new(w0, w1),
        class_map,
        class_names,
        rest,
        standardize: a.standardize,
    };
    spec.validate()?;
    if manifest.recordings.is_empty() {
        return Err(CliError::Usage(format!("{} lists no recordings", a.input.display())));
    }
    let mut all: Option<dataio::EpochedDataset> = None;
    for entry in &manifest.recordings {
        let rec = dataio::read_raw_entry(&a.input, entry)?;
        let ds = preproc::preprocess_pipeline(&rec, &spec)?;
        log::info!("subject {} {}: {} trials", entry.subject, entry.session, ds.len());
        match &mut all {
            Some(acc) => acc.extend(&ds)?,
            None => all = Some(ds),
        }
    }
    let mut ds = all.expect("at least one recording");
    if let Some(r) = &spec.rest {
        if a.balance_rest {
            ds = dataio::balance_rest(&ds, r.label, seed)?;
        }
    }
    create_dir(&a.out)?;
    let m = dataio::write_dataset(&ds, &a.out, &manifest.dataset)?;
    let resolved = ResolvedPreprocess {
        input: &a.input,
        seed,
        balance_rest: a.balance_rest,
        order: spec.order,
        low_hz: spec.low_hz,
        high_hz: spec.high_hz,
        target_fs: spec.target_fs,
        window: spec.window,
        standardize: spec.standardize,
        channels: &spec.channels,
        class_names: &spec.class_names,
        class_map: spec.class_map.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        rest: spec.rest,
    };
    write_text(&a.out.join("resolved_config.toml"), &to_toml(&resolved))?;
    println!(
        "{}: {} subjects, {} trials, {} channels × {} samples @ {} Hz",
        m.dataset,
        m.subjects.len(),
        m.total_trials(),
        m.n_channels,
        m.n_samples,
        m.fs
    );
    Ok(())
}

pub fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    let file: RunFile = match &a.config {
        Some(p) => read_toml(p)?,
        None => RunFile::default(),
    };
    let seed = resolve_seed(a.seed, file.seed)?;
    let scheme = a
        .scheme
        .or(file.scheme)
        .ok_or_else(|| CliError::Usage("no scheme: pass --scheme or set `scheme` in the config".into()))?;
    let data = a
        .data
        .clone()
        .or(file.data.clone())
        .ok_or_else(|| CliError::Usage("no dataset: pass --data or set `data` in the config".into()))?;
    let out = a
        .out
        .clone()
        .or(file.out.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set `out` in the config".into()))?;
    let mut augment = file.augment.clone();
    if let Some(list) = &a.augment {
        augment.kinds = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse::<AugmentKind>)
            .collect::<Result<_, _>>()?;
    }
    let ds = dataio::read_dataset(&data)?;
    if ds.is_empty() {
        return Err(CliError::Usage(format!("{} holds no trials", data.display())));
    }
    let model = file.model.resolve(ds.n_channels(), ds.n_samples(), ds.n_classes());
    let mut train = file.train.clone();
    train.seed = seed;
    let exp = ExperimentConfig {
        scheme,
        test_session: a.test_session.or(file.test_session).unwrap_or(TestSessionFilter::Auto),
        inner_folds: file.inner_folds.unwrap_or(5),
        jobs: a.jobs.or(file.jobs).unwrap_or(1),
        augment: augment.clone(),
        save_checkpoints: file.save_checkpoints.unwrap_or(true),
        seed,
    };
    model.validate()?;
    train.validate()?;
    // reject impossible protocols before creating anything
    harness::plan_folds(&ds, &exp)?;
    create_dir(&out)?;
    let resolved = ResolvedRun {
        seed,
        scheme,
        test_session: exp.test_session,
        inner_folds: exp.inner_folds,
        jobs: exp.jobs,
        save_checkpoints: exp.save_checkpoints,
        data: data.clone(),
        out: out.clone(),
        model: model.clone(),
        train: train.clone(),
        augment,
    };
    let text = to_toml(&resolved);
    log::info!("resolved configuration:\n{text}");
    write_text(&out.join("resolved_config.toml"), &text)?;
    let started = std::time::Instant::now();
    let result = harness::run_experiment(&ds, &model, &train, &exp, Some(&out))?;
    log::info!("finished in {:.1}s", started.elapsed().as_secs_f64());
    println!("scheme {scheme}: {} evaluations, {} failed", result.rows.len(), result.failures());
    println!("{:<14} {:>18} {:>18}", "", "accuracy", "macro-F1");
    for (name, s) in [("over folds", &result.over_folds), ("over subjects", &result.over_subjects)] {
        println!(
            "{:<14} {:>8.2} ± {:<7.2} {:>8.2} ± {:<7.2}",
            name,
            100.0 * s.accuracy_mean,
            100.0 * s.accuracy_sd,
            100.0 * s.macro_f1_mean,
            100.0 * s.macro_f1_sd
        );
    }
    Ok(())
}

pub fn cmd_export_latents(a: &ExportArgs) -> Result<(), CliError> {
    let net: Network = min2net::model::checkpoint_load(&a.checkpoint)?;
    let ds = dataio::read_dataset(&a.data)?;
    let n = harness::export_latents(&net, &ds, &a.out)?;
    println!("wrote {n} rows to {}", a.out.display());
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Run(a) => cmd_run(a),
        Command::ExportLatents(a) => cmd_export_latents(a),
    }
}
