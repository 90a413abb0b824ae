//! Command-line front end.
//!
//! Settings are layered: built-in defaults, then a TOML config file
//! (`--config`), then command-line flags. Every CSV starts with `#` lines
//! naming its schema and echoing the effective configuration as JSON.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, MIN_N1_HZ};
use crate::error::{Error, Result};
use crate::experiments::{self, ErrorReport, FeatureOverlap, Protocol, SWEEP_TEST_SIZE};
use crate::io::write_atomic;
use crate::notch::{ExtractionParams, NotchFeatures, WindowKind};
use crate::predict::{Activation, ModelKind, ModelSpec};
use crate::synth::{self, GenerativeSpec, MappingKind};

pub const RUNS_SCHEMA: &str = "pinnanotch-runs v1";
pub const SUMMARY_SCHEMA: &str = "pinnanotch-summary v1";
pub const CURVE_SCHEMA: &str = "pinnanotch-curve v1";
pub const TABLE_SCHEMA: &str = "pinnanotch-table v1";
pub const OVERLAP_SCHEMA: &str = "pinnanotch-overlap v1";
pub const EXTRACTION_SCHEMA: &str = "pinnanotch-extraction v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub path: PathBuf,
    /// MLP width for this dataset; falls back to `model.hidden_units`.
    #[serde(default)]
    pub hidden_units: Option<usize>,
}

/// Mixing pair, by dataset name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixEntry {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub datasets: Vec<DatasetEntry>,
    pub extraction: ExtractionParams,
    pub model: ModelSpec,
    pub protocol: Protocol,
    pub output_dir: PathBuf,
    pub base_seed: u64,
    pub n_runs: usize,
    pub sizes: Vec<usize>,
    pub test_size: usize,
    pub mixes: Vec<MixEntry>,
    pub min_n1_hz: f64,
    pub require_prominent: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            extraction: ExtractionParams::default(),
            model: ModelSpec::default(),
            protocol: Protocol::default(),
            output_dir: PathBuf::from("out"),
            base_seed: 0,
            n_runs: 9,
            sizes: vec![50, 100, 150],
            test_size: SWEEP_TEST_SIZE,
            mixes: Vec::new(),
            min_n1_hz: MIN_N1_HZ,
            require_prominent: true,
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; relative dataset paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.datasets {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.datasets {
            if !d.path.exists() {
                return Err(Error::Config(format!("dataset {} does not exist", d.path.display())));
            }
        }
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn require_datasets(&self, n: usize, what: &str) -> Result<()> {
        if self.datasets.len() < n {
            return Err(Error::Config(format!(
                "{what} needs at least {n} dataset(s), got {}",
                self.datasets.len()
            )));
        }
        Ok(())
    }

    fn spec_for(&self, entry: &DatasetEntry) -> ModelSpec {
        match (self.model.kind, entry.hidden_units) {
            (ModelKind::Mlp, Some(h)) => ModelSpec {
                hidden_units: h,
                ..self.model
            },
            _ => self.model,
        }
    }

    fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Parses a lowercase enum value the same way the config file does.
fn enum_arg<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "pinnanotch", version, about = "Pinna notch (N1) extraction and prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract N1 labels from a dataset's HRIRs and write labeled and filtered manifests.
    Extract(ExtractArgs),
    /// Generate a synthetic dataset with known N1.
    Synth(SynthArgs),
    /// Run one evaluation protocol.
    Run(RunArgs),
    /// Naive, linear and neural errors on every dataset, plus configured mixes.
    Table1(RunArgs),
    /// Per-feature distribution overlap between two datasets.
    Overlap(OverlapArgs),
}

#[derive(Debug, Args)]
struct ExtractionFlags {
    #[arg(long)]
    window_ms: Option<f64>,
    #[arg(long, value_parser = enum_arg::<WindowKind>)]
    window_kind: Option<WindowKind>,
    #[arg(long)]
    fft_size: Option<usize>,
    #[arg(long)]
    prominence_db: Option<f64>,
    #[arg(long)]
    search_max_hz: Option<f64>,
}

impl ExtractionFlags {
    fn apply(&self, p: &mut ExtractionParams) {
        if let Some(v) = self.window_ms {
            p.window_length_ms = v;
        }
        if let Some(v) = self.window_kind {
            p.window_kind = v;
        }
        if let Some(v) = self.fft_size {
            p.fft_size = v;
        }
        if let Some(v) = self.prominence_db {
            p.prominence_db = v;
        }
        if let Some(v) = self.search_max_hz {
            p.search_max_hz = v;
        }
    }
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    min_n1_hz: Option<f64>,
    /// Keep records whose notch misses the prominence threshold.
    #[arg(long)]
    keep_non_prominent: bool,
    #[command(flatten)]
    extraction: ExtractionFlags,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for the manifest.
    #[arg(long)]
    out: PathBuf,
    /// TOML generative spec.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long = "n")]
    n_examples: Option<usize>,
    #[arg(long, value_parser = enum_arg::<MappingKind>)]
    mapping: Option<MappingKind>,
    #[arg(long)]
    noise_std_hz: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mapping_seed: Option<u64>,
    #[arg(long)]
    gain: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest; repeatable. Replaces the config's dataset list.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    #[arg(long, value_parser = enum_arg::<Protocol>)]
    protocol: Option<Protocol>,
    #[arg(long, value_parser = enum_arg::<ModelKind>)]
    model: Option<ModelKind>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long, value_parser = enum_arg::<Activation>)]
    activation: Option<Activation>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training sizes for the sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    test_size: Option<usize>,
    /// SOURCE:TARGET dataset names; repeatable. Replaces the config's mixes.
    #[arg(long = "mix")]
    mixes: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.datasets.is_empty() {
            c.datasets = self
                .datasets
                .iter()
                .map(|p| DatasetEntry {
                    path: p.clone(),
                    hidden_units: None,
                })
                .collect();
        }
        if let Some(v) = self.protocol {
            c.protocol = v;
        }
        let m = &mut c.model;
        if let Some(v) = self.model {
            m.kind = v;
        }
        if let Some(v) = self.hidden_units {
            m.hidden_units = v;
        }
        if let Some(v) = self.activation {
            m.activation = v;
        }
        if let Some(v) = self.learning_rate {
            m.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            m.batch_size = v;
        }
        if let Some(v) = self.max_epochs {
            m.max_epochs = v;
        }
        if let Some(v) = self.patience {
            m.patience = v;
        }
        if let Some(v) = self.ridge {
            m.ridge = v;
        }
        if let Some(v) = self.n_runs {
            c.n_runs = v;
        }
        if let Some(v) = self.base_seed {
            c.base_seed = v;
        }
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        if let Some(v) = &self.sizes {
            c.sizes = v.clone();
        }
        if let Some(v) = self.test_size {
            c.test_size = v;
        }
        if !self.mixes.is_empty() {
            c.mixes = self
                .mixes
                .iter()
                .map(|s| {
                    s.split_once(':')
                        .map(|(a, b)| MixEntry {
                            source: a.to_string(),
                            target: b.to_string(),
                        })
                        .ok_or_else(|| Error::Config(format!("--mix {s}: expected SOURCE:TARGET")))
                })
                .collect::<Result<_>>()?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct OverlapArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Extract(a) => cmd_extract(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Run(a) => a.resolve().and_then(|c| cmd_run(&c)),
        Command::Table1(a) => a.resolve().and_then(|c| cmd_table1(&c)),
        Command::Overlap(a) => cmd_overlap(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// CSV bytes: `# schema`, `# key: value` comment lines, header, rows.
fn csv_bytes(schema: &str, comments: &[(&str, String)], header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut head = format!("# schema: {schema}\n");
    for (k, v) in comments {
        let _ = writeln!(head, "# {k}: {v}");
    }
    let mut w = csv::Writer::from_writer(head.into_bytes());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Labels every record, then applies the N1 threshold and prominence filter.
pub fn cmd_extract_config(
    manifest: &Path,
    out: &Path,
    params: &ExtractionParams,
    min_n1_hz: f64,
    require_prominent: bool,
) -> Result<(usize, usize)> {
    let d = dataset::merge_ears(&dataset::load_manifest(manifest)?);
    params.validate(d.sample_rate_hz)?;
    let (labeled, features) = d.extract_labels(params)?;
    let filtered = dataset::filter_records(&labeled, min_n1_hz, require_prominent)?;
    dataset::save_manifest(&labeled, &out.join("labeled"))?;
    dataset::save_manifest(&filtered, &out.join("filtered"))?;

    let kept: std::collections::HashSet<(&str, dataset::Ear)> =
        filtered.records.iter().map(|r| r.key()).collect();
    let rows: Vec<Vec<String>> = labeled
        .records
        .iter()
        .zip(&features)
        .map(|(r, f)| {
            let f: Option<&NotchFeatures> = f.as_ref();
            let n1 = f.and_then(|f| f.n1.as_ref());
            vec![
                r.subject_id.clone(),
                r.ear.to_string(),
                opt_num(f.map(|f| f.p1_hz)),
                opt_num(f.map(|f| f.p1_db)),
                opt_num(r.n1_label_hz),
                opt_num(n1.map(|n| n.db)),
                opt_num(n1.map(|n| n.depth_db)),
                r.prominent.map(|p| p.to_string()).unwrap_or_default(),
                kept.contains(&r.key()).to_string(),
            ]
        })
        .collect();
    let echo = serde_json::json!({
        "dataset": manifest,
        "extraction": params,
        "min_n1_hz": min_n1_hz,
        "require_prominent": require_prominent,
    });
    let bytes = csv_bytes(
        EXTRACTION_SCHEMA,
        &[("config", echo.to_string())],
        &[
            "subject_id", "ear", "p1_hz", "p1_db", "n1_hz", "n1_db", "n1_depth_db", "prominent",
            "retained",
        ],
        &rows,
    );
    write_atomic(&out.join("extraction.csv"), &bytes)?;
    Ok((labeled.len(), filtered.len()))
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    a.extraction.apply(&mut cfg.extraction);
    if let Some(v) = a.min_n1_hz {
        cfg.min_n1_hz = v;
    }
    if a.keep_non_prominent {
        cfg.require_prominent = false;
    }
    let (total, kept) =
        cmd_extract_config(&a.dataset, &a.out, &cfg.extraction, cfg.min_n1_hz, cfg.require_prominent)?;
    println!(
        "{}: {total} records, {kept} retained, {} removed",
        a.dataset.display(),
        total - kept
    );
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<GenerativeSpec>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => GenerativeSpec::default(),
    };
    if let Some(v) = &a.name {
        spec.name = v.clone();
    }
    if let Some(v) = a.n_examples {
        spec.n_examples = v;
    }
    if let Some(v) = a.mapping {
        spec.mapping = v;
    }
    if let Some(v) = a.noise_std_hz {
        spec.noise_std_hz = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.mapping_seed {
        spec.mapping_seed = v;
    }
    if let Some(v) = a.gain {
        spec.reflection_gain = v;
    }
    let d = synth::synth_dataset(&spec)?;
    let path = dataset::save_manifest(&d, &a.out)?;
    println!("{}: {} records (seed {})", path.display(), d.len(), spec.seed);
    Ok(())
}

fn load_all(cfg: &RunConfig) -> Result<Vec<Dataset>> {
    cfg.datasets
        .iter()
        .map(|e| dataset::load_manifest(&e.path))
        .collect()
}

fn find<'a>(names: &'a [Dataset], name: &str) -> Result<&'a Dataset> {
    names
        .iter()
        .find(|d| d.name == name)
        .ok_or_else(|| Error::Config(format!("mix refers to unknown dataset {name}")))
}

/// Resolves mix pairs; without configured mixes, the first dataset mixes into the second.
fn mix_pairs<'a>(cfg: &RunConfig, data: &'a [Dataset]) -> Result<Vec<(&'a Dataset, &'a Dataset, usize)>> {
    let index = |d: &Dataset| data.iter().position(|x| std::ptr::eq(x, d)).expect("member");
    if cfg.mixes.is_empty() {
        cfg.require_datasets(2, "protocol mix")?;
        return Ok(vec![(&data[0], &data[1], 1)]);
    }
    cfg.mixes
        .iter()
        .map(|m| {
            let (s, t) = (find(data, &m.source)?, find(data, &m.target)?);
            Ok((s, t, index(t)))
        })
        .collect()
}

fn run_rows(reports: &[(Option<usize>, ErrorReport)]) -> Vec<Vec<String>> {
    reports
        .iter()
        .flat_map(|(size, rep)| {
            rep.runs.iter().map(move |r| {
                vec![
                    rep.dataset.clone(),
                    rep.model.clone(),
                    rep.protocol.to_string(),
                    size.map(|s| s.to_string()).unwrap_or_default(),
                    r.seed.to_string(),
                    r.train_size.to_string(),
                    r.n_test.to_string(),
                    num(r.rms_hz),
                    num(r.rms_octave),
                ]
            })
        })
        .collect()
}

const RUN_HEADER: [&str; 9] = [
    "dataset", "model", "protocol", "size", "seed", "train_size", "n_test", "rms_hz", "rms_octave",
];

fn summary_rows(reports: &[(Option<usize>, ErrorReport)]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|(size, rep)| {
            vec![
                rep.dataset.clone(),
                rep.model.clone(),
                rep.protocol.to_string(),
                size.map(|s| s.to_string()).unwrap_or_default(),
                rep.runs.len().to_string(),
                rep.n_test.to_string(),
                num(rep.rms_hz),
                num(rep.rms_octave),
                rep.jnd().to_string(),
                rep.note.unwrap_or("").to_string(),
            ]
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 10] = [
    "dataset", "model", "protocol", "size", "n_runs", "n_test", "rms_hz", "rms_octave", "jnd",
    "note",
];

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn curve_rows(reports: &[(Option<usize>, ErrorReport)]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|(size, rep)| {
            let mut hz: Vec<f64> = rep.runs.iter().map(|r| r.rms_hz).collect();
            vec![
                rep.dataset.clone(),
                size.map(|s| s.to_string()).unwrap_or_default(),
                num(rep.rms_hz),
                num(median(&mut hz)),
                num(rep.rms_octave),
                rep.jnd().to_string(),
            ]
        })
        .collect()
}

fn overlap_rows(rows: &[FeatureOverlap]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|f| {
            vec![
                f.feature.to_string(),
                num(f.coefficient),
                f.bins.to_string(),
                num(f.bin_width),
                f.a.n.to_string(),
                num(f.a.min),
                num(f.a.max),
                num(f.a.mean),
                f.b.n.to_string(),
                num(f.b.min),
                num(f.b.max),
                num(f.b.mean),
            ]
        })
        .collect()
}

const OVERLAP_HEADER: [&str; 12] = [
    "feature", "coefficient", "bins", "bin_width", "a_n", "a_min", "a_max", "a_mean", "b_n",
    "b_min", "b_max", "b_mean",
];

fn write_overlap(a: &Dataset, b: &Dataset, out: &Path, echo: String) -> Result<()> {
    let rows = experiments::feature_overlap_report(a, b)?;
    let bytes = csv_bytes(
        OVERLAP_SCHEMA,
        &[("config", echo), ("a", a.name.clone()), ("b", b.name.clone())],
        &OVERLAP_HEADER,
        &overlap_rows(&rows),
    );
    write_atomic(out, &bytes)
}

/// Executes `cfg.protocol` and writes `runs.csv` and `summary.csv` (plus
/// `curve.csv` for sweeps, `overlap.csv` for overlap) under `output_dir`.
pub fn cmd_run(cfg: &RunConfig) -> Result<()> {
    let data = load_all(cfg)?;
    let out = &cfg.output_dir;
    let echo = cfg.echo();
    let comments = || vec![("config", echo.clone()), ("base_seed", cfg.base_seed.to_string())];

    if cfg.protocol == Protocol::Overlap {
        cfg.require_datasets(2, "protocol overlap")?;
        write_overlap(&data[0], &data[1], &out.join("overlap.csv"), echo.clone())?;
        println!("wrote {}", out.join("overlap.csv").display());
        return Ok(());
    }
    cfg.require_datasets(1, "run")?;

    let mut reports: Vec<(Option<usize>, ErrorReport)> = Vec::new();
    match cfg.protocol {
        Protocol::Single | Protocol::Repeated => {
            let n = if cfg.protocol == Protocol::Single { 1 } else { cfg.n_runs };
            for (d, e) in data.iter().zip(&cfg.datasets) {
                let mut r = experiments::run_repeated(d, &cfg.spec_for(e), n, cfg.base_seed)?;
                r.protocol = cfg.protocol;
                reports.push((None, r));
            }
        }
        Protocol::Sweep => {
            for (d, e) in data.iter().zip(&cfg.datasets) {
                let sweep = experiments::size_sweep(
                    d,
                    &cfg.sizes,
                    cfg.test_size,
                    &cfg.spec_for(e),
                    cfg.n_runs,
                    cfg.base_seed,
                )?;
                reports.extend(sweep.into_iter().map(|(s, r)| (Some(s), r)));
            }
        }
        Protocol::Loo => {
            for (d, e) in data.iter().zip(&cfg.datasets) {
                let r = experiments::leave_one_out(d, &cfg.spec_for(e), cfg.base_seed)?;
                reports.push((Some(d.len() - 1), r));
            }
        }
        Protocol::Mix => {
            for (s, t, ti) in mix_pairs(cfg, &data)? {
                let spec = cfg.spec_for(&cfg.datasets[ti]);
                let r = experiments::domain_mix(s, t, &spec, cfg.n_runs, cfg.base_seed)?;
                reports.push((None, r));
            }
        }
        Protocol::Overlap => unreachable!("handled above"),
    }

    write_atomic(
        &out.join("runs.csv"),
        &csv_bytes(RUNS_SCHEMA, &comments(), &RUN_HEADER, &run_rows(&reports)),
    )?;
    write_atomic(
        &out.join("summary.csv"),
        &csv_bytes(SUMMARY_SCHEMA, &comments(), &SUMMARY_HEADER, &summary_rows(&reports)),
    )?;
    if cfg.protocol == Protocol::Sweep {
        write_atomic(
            &out.join("curve.csv"),
            &csv_bytes(
                CURVE_SCHEMA,
                &comments(),
                &["dataset", "size", "mean_rms_hz", "median_rms_hz", "mean_rms_octave", "jnd"],
                &curve_rows(&reports),
            ),
        )?;
    }
    for (size, r) in &reports {
        println!(
            "{} {} {}{}: {:.1} Hz, {:.3} oct ({}, {} runs)",
            r.dataset,
            r.model,
            r.protocol,
            size.map(|s| format!(" size={s}")).unwrap_or_default(),
            r.rms_hz,
            r.rms_octave,
            r.jnd(),
            r.runs.len()
        );
    }
    Ok(())
}

/// Table rows: one per method, a (Hz, octave) column pair per dataset.
pub struct Table {
    pub datasets: Vec<String>,
    pub rows: Vec<(String, Vec<Option<ErrorReport>>)>,
}

pub fn table1(cfg: &RunConfig, data: &[Dataset]) -> Result<Table> {
    cfg.require_datasets(1, "table1")?;
    let k = data.len();
    let mut rows: Vec<(String, Vec<Option<ErrorReport>>)> = Vec::new();
    let methods = [
        ("naive", ModelKind::Naive),
        ("linear", ModelKind::Linear),
        ("neural", ModelKind::Mlp),
    ];
    for (label, kind) in methods {
        let mut cells = Vec::with_capacity(k);
        for (d, e) in data.iter().zip(&cfg.datasets) {
            let spec = ModelSpec {
                kind,
                ..cfg.spec_for(e)
            };
            cells.push(Some(experiments::run_repeated(d, &spec, cfg.n_runs, cfg.base_seed)?));
        }
        rows.push((label.to_string(), cells));
    }
    if !cfg.mixes.is_empty() {
        for (s, t, ti) in mix_pairs(cfg, data)? {
            let spec = ModelSpec {
                kind: ModelKind::Mlp,
                ..cfg.spec_for(&cfg.datasets[ti])
            };
            let mut cells = vec![None; k];
            cells[ti] = Some(experiments::domain_mix(s, t, &spec, cfg.n_runs, cfg.base_seed)?);
            rows.push((format!("domain mixing ({})", s.name), cells));
        }
    }
    Ok(Table {
        datasets: data.iter().map(|d| d.name.clone()).collect(),
        rows,
    })
}

/// Writes `table1.csv` and `table1_runs.csv` under `output_dir`.
pub fn cmd_table1(cfg: &RunConfig) -> Result<()> {
    let data = load_all(cfg)?;
    let t = table1(cfg, &data)?;
    let mut header = vec!["method".to_string()];
    for name in &t.datasets {
        header.push(format!("{name}_rms_hz"));
        header.push(format!("{name}_octave"));
    }
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|(label, cells)| {
            let mut row = vec![label.clone()];
            for c in cells {
                row.push(c.as_ref().map(|r| num(r.rms_hz)).unwrap_or_default());
                row.push(c.as_ref().map(|r| num(r.rms_octave)).unwrap_or_default());
            }
            row
        })
        .collect();
    let comments = vec![("config", cfg.echo()), ("base_seed", cfg.base_seed.to_string())];
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let out = &cfg.output_dir;
    write_atomic(&out.join("table1.csv"), &csv_bytes(TABLE_SCHEMA, &comments, &header_refs, &rows))?;
    let all: Vec<(Option<usize>, ErrorReport)> = t
        .rows
        .iter()
        .flat_map(|(_, cells)| cells.iter().flatten().map(|r| (None, r.clone())))
        .collect();
    write_atomic(
        &out.join("table1_runs.csv"),
        &csv_bytes(RUNS_SCHEMA, &comments, &RUN_HEADER, &run_rows(&all)),
    )?;

    let width = t.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(6).max(6);
    print!("{:width$}", "method");
    for name in &t.datasets {
        print!("  {:>22}", name);
    }
    println!();
    for (label, cells) in &t.rows {
        print!("{label:width$}");
        for c in cells {
            match c {
                Some(r) => print!("  {:>9.1} Hz {:>6.3} oct", r.rms_hz, r.rms_octave),
                None => print!("  {:>22}", "-"),
            }
        }
        println!();
    }
    Ok(())
}

fn cmd_overlap(a: &OverlapArgs) -> Result<()> {
    let (da, db) = (dataset::load_manifest(&a.a)?, dataset::load_manifest(&a.b)?);
    let echo = serde_json::json!({ "a": a.a, "b": a.b }).to_string();
    write_overlap(&da, &db, &a.out, echo)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_flags_override_config_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.json");
        std::fs::write(&data, "{}").unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(
            &cfg,
            "n_runs = 3\nbase_seed = 7\n[[datasets]]\npath = \"d.json\"\nhidden_units = 20\n[model]\nkind = \"linear\"\nridge = 0.5\n",
        )
        .unwrap();
        let Cli {
            command: Command::Run(args),
        } = Cli::try_parse_from([
            "pinnanotch",
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--base-seed",
            "11",
            "--model",
            "mlp",
        ])
        .unwrap()
        else {
            panic!()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.n_runs, 3);
        assert_eq!(c.base_seed, 11);
        assert_eq!(c.model.kind, ModelKind::Mlp);
        assert_eq!(c.model.ridge, 0.5);
        assert_eq!(c.model.patience, ModelSpec::default().patience);
        assert_eq!(c.datasets[0].path, data);
        assert_eq!(c.spec_for(&c.datasets[0]).hidden_units, 20);
    }

    #[test]
    fn unknown_config_key_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "n_rums = 3\n").unwrap();
        let err = RunConfig::load(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn csv_starts_with_schema_and_config_lines() {
        let b = csv_bytes("s v1", &[("config", "{\"a\":1}".into())], &["x", "y"], &[vec!["1".into(), "a,b".into()]]);
        let text = String::from_utf8(b).unwrap();
        assert_eq!(text, "# schema: s v1\n# config: {\"a\":1}\nx,y\n1,\"a,b\"\n");
    }

    #[test]
    fn enum_args_use_config_spelling() {
        assert_eq!(enum_arg::<Protocol>("loo").unwrap(), Protocol::Loo);
        assert_eq!(enum_arg::<WindowKind>("blackman_harris_4term").unwrap(), WindowKind::BlackmanHarris4Term);
        assert!(enum_arg::<ModelKind>("svm").is_err());
    }
}
