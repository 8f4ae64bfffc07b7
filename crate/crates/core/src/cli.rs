//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.
//!
//! Augmentation sample `k` always draws from `rng::stream(seed, k)`, so a
//! sample can be regenerated alone with `--start k --n 1`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::augment_geom::{GeomParams, IntensityJitterParams};
use crate::config::PipelineConfig;
use crate::error::Error;
use crate::metrics::evaluate;
use crate::rng;
use crate::source_match::{apply_sm, fit_source_histogram, IntensityHistogram, SMConfig};
use crate::src_augment::augment_sample_traced;
use crate::volume::{
    load_labels, load_volume, make_phantom, normalize_ct, normalize_mr, preclip_ct, preclip_mr, save_labels,
    save_volume, Dtype, Modality, PhantomSpec, SvolHeader, Volume,
};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "volaug", version, about = "Volumetric augmentation, source matching and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for stochastic commands; overrides the config file
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pipeline configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config file's modality
    #[arg(long, global = true)]
    pub modality: Option<Modality>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom image and label map from a JSON spec
    Synth {
        spec: PathBuf,
        /// writes <prefix>_image.svol.json and <prefix>_labels.svol.json
        out_prefix: PathBuf,
    },
    /// Write augmented copies of an image/label pair
    Augment {
        image: PathBuf,
        labels: PathBuf,
        /// writes <prefix>_<k>_image.svol.json, _labels.svol.json and _meta.json
        out_prefix: PathBuf,
        /// number of samples
        #[arg(long, default_value_t = 1)]
        n: u64,
        /// index of the first sample
        #[arg(long, default_value_t = 0)]
        start: u64,
        /// apply the modality normalisation before augmenting
        #[arg(long)]
        normalize: bool,
    },
    /// Fit the average source cumulative histogram
    FitHist {
        /// text file with one volume header path per line
        list: PathBuf,
        out: PathBuf,
    },
    /// Map a volume onto a fitted source histogram
    Match {
        volume: PathBuf,
        histogram: PathBuf,
        out: PathBuf,
        /// apply the modality normalisation to the matched volume
        #[arg(long)]
        normalize: bool,
    },
    /// Dice, ASSD and HD95 of a prediction against ground truth
    Evaluate { pred: PathBuf, gt: PathBuf, out: PathBuf },
    /// Print an SVOL header or histogram summary
    Inspect { path: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command, reports errors on
/// stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.global.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| dispatch(&cli))
        }
        None => dispatch(&cli),
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Synth { spec, out_prefix } => cmd_synth(g, spec, out_prefix),
        Command::Augment {
            image,
            labels,
            out_prefix,
            n,
            start,
            normalize,
        } => cmd_augment(g, image, labels, out_prefix, *start, *n, *normalize),
        Command::FitHist { list, out } => cmd_fit_hist(g, list, out),
        Command::Match {
            volume,
            histogram,
            out,
            normalize,
        } => cmd_match(g, volume, histogram, out, *normalize),
        Command::Evaluate { pred, gt, out } => cmd_evaluate(pred, gt, out),
        Command::Inspect { path } => cmd_inspect(path),
    }
}

fn load_config(g: &GlobalArgs) -> CliResult<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = g.modality {
        cfg.modality = m;
    }
    if let Some(s) = g.seed {
        cfg.seed = Some(s);
    }
    Ok(cfg)
}

/// `<prefix><suffix>`, creating the prefix's directory if needed.
fn output_path(prefix: &Path, suffix: &str) -> CliResult<PathBuf> {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    let path = PathBuf::from(name);
    ensure_parent(&path)?;
    Ok(path)
}

fn ensure_parent(path: &Path) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn cmd_synth(g: &GlobalArgs, spec_path: &Path, prefix: &Path) -> CliResult {
    let text = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let mut spec: PhantomSpec =
        serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(format!("{}: {e}", spec_path.display())))?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let (image, labels) = make_phantom(&spec)?;
    save_volume(&image, output_path(prefix, "_image.svol.json")?)?;
    save_labels(&labels, output_path(prefix, "_labels.svol.json")?)?;
    Ok(())
}

#[derive(Serialize)]
struct SampleMeta<'a> {
    seed: u64,
    sample: u64,
    modality: Modality,
    geometry: &'a GeomParams,
    jitter: IntensityJitterParams,
    alpha: Option<f64>,
    post_cda_norm: f64,
    output_norm: f64,
}

fn normalize(vol: &Volume, modality: Modality) -> CliResult<Volume> {
    Ok(match modality {
        Modality::Ct => normalize_ct(vol),
        Modality::Mr => normalize_mr(vol)?,
    })
}

fn cmd_augment(
    g: &GlobalArgs,
    image: &Path,
    labels: &Path,
    prefix: &Path,
    start: u64,
    n: u64,
    normalize_input: bool,
) -> CliResult {
    let cfg = load_config(g)?;
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::Usage("augment needs a seed (--seed or `seed` in the config)".into()))?;
    let end = start
        .checked_add(n)
        .ok_or_else(|| CliError::Usage("--start + --n overflows".into()))?;
    let aug = cfg.augment();
    aug.validate()?;
    let mut img = load_volume(image)?;
    let lab = load_labels(labels)?;
    if img.dims() != lab.dims() {
        return Err(Error::DimMismatch {
            left: img.dims(),
            right: lab.dims(),
        }
        .into());
    }
    if normalize_input {
        img = normalize(&img, cfg.modality)?;
    }
    (start..end).into_par_iter().try_for_each(|k| -> CliResult {
        let t = augment_sample_traced(&img, &lab, &mut rng::stream(seed, k), &aug)?;
        save_volume(&t.image, output_path(prefix, &format!("_{k}_image.svol.json"))?)?;
        save_labels(&t.labels, output_path(prefix, &format!("_{k}_labels.svol.json"))?)?;
        let meta = SampleMeta {
            seed,
            sample: k,
            modality: cfg.modality,
            geometry: &t.geometry,
            jitter: t.jitter,
            alpha: t.alpha,
            post_cda_norm: t.post_cda.frobenius_norm(),
            output_norm: t.image.frobenius_norm(),
        };
        write_json(&output_path(prefix, &format!("_{k}_meta.json"))?, &meta)
    })
}

fn preclip(vol: &Volume, modality: Modality) -> CliResult<Volume> {
    Ok(match modality {
        Modality::Ct => preclip_ct(vol),
        Modality::Mr => preclip_mr(vol)?,
    })
}

/// Non-empty, non-comment lines; relative paths are taken from the list's
/// directory.
fn read_list(list: &Path) -> CliResult<Vec<PathBuf>> {
    let text = fs::read_to_string(list).map_err(|e| Error::io(list, e))?;
    let base = list.parent().unwrap_or(Path::new(""));
    let paths: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    if paths.is_empty() {
        return Err(Error::Empty("volume list").into());
    }
    Ok(paths)
}

fn cmd_fit_hist(g: &GlobalArgs, list: &Path, out: &Path) -> CliResult {
    let cfg = load_config(g)?;
    let sm = cfg.sm();
    let volumes = read_list(list)?
        .par_iter()
        .map(|p| preclip(&load_volume(p)?, cfg.modality))
        .collect::<CliResult<Vec<_>>>()?;
    let hist = fit_source_histogram(&volumes, &sm)?;
    ensure_parent(out)?;
    hist.save(out)?;
    Ok(())
}

/// The histogram's own settings unless the caller chose a modality or config,
/// in which case they have to agree.
fn match_config(g: &GlobalArgs, hist: &IntensityHistogram) -> CliResult<SMConfig> {
    if g.modality.is_none() && g.config.is_none() {
        return Ok(hist.config());
    }
    let want = load_config(g)?.sm();
    if want != hist.config() {
        return Err(Error::ConfigMismatch(format!(
            "histogram was fitted with {:?}, the command asks for {want:?}",
            hist.config()
        ))
        .into());
    }
    Ok(want)
}

fn cmd_match(g: &GlobalArgs, volume: &Path, histogram: &Path, out: &Path, normalize_output: bool) -> CliResult {
    let hist = IntensityHistogram::load(histogram)?;
    let sm = match_config(g, &hist)?;
    let vol = preclip(&load_volume(volume)?, sm.modality)?;
    let mut matched = apply_sm(&vol, &hist, &sm)?;
    if normalize_output {
        matched = normalize(&matched, sm.modality)?;
    }
    ensure_parent(out)?;
    save_volume(&matched, out)?;
    Ok(())
}

fn cmd_evaluate(pred: &Path, gt: &Path, out: &Path) -> CliResult {
    let report = evaluate(&load_labels(pred)?, &load_labels(gt)?)?;
    for l in report.undefined_labels() {
        eprintln!("warning: label {l} is missing from one of the maps; surface distances reported as null");
    }
    ensure_parent(out)?;
    report.save(out)?;
    Ok(())
}

fn cmd_inspect(path: &Path) -> CliResult {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(h) = serde_json::from_str::<SvolHeader>(&text) {
        println!("svol {}", path.display());
        println!("  dims       {:?}", h.dims);
        println!("  spacing_mm {:?}", h.spacing_mm);
        println!("  dtype      {}", h.dtype);
        println!("  byte_order {}", h.byte_order);
        println!("  data       {}", h.data);
        match h.dtype()? {
            Dtype::F32 => {
                let v = load_volume(path)?;
                let (lo, hi) = v.min_max();
                println!("  range      [{lo}, {hi}]");
                println!("  norm       {}", v.frobenius_norm());
            }
            Dtype::U16 => {
                let l = load_labels(path)?;
                println!("  labels     {:?}", l.label_set());
            }
        }
        return Ok(());
    }
    let h = IntensityHistogram::load(path)?;
    let median = h.cumulative().iter().position(|&p| p >= 0.5).unwrap_or(h.n_bins() - 1);
    println!("histogram {}", path.display());
    println!("  modality   {}", h.modality());
    println!("  n_bins     {}", h.n_bins());
    println!("  range      {:?}", h.range());
    println!("  median bin {median} (centre {})", h.config().bin_center(median));
    Ok(())
}
