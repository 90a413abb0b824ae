//! Evaluation protocols: subject-level splits, repeated runs, training-size
//! sweeps, leave-one-out, domain mixing and feature-distribution overlap.
//!
//! Every protocol is a pure function of (dataset, spec, seed). Runs execute in
//! parallel and are reduced in seed/index order, so results do not depend on
//! scheduling.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anthro::{AnthroVector, FEATURE_NAMES, NUM_FEATURES};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::predict::{self, ModelKind, ModelSpec};

/// Just-noticeable difference for N1 frequency, in octaves (lower, upper).
pub const JND_OCTAVE_RANGE: (f64, f64) = (0.1, 0.2);

/// Default fixed test-set size of the training-size sweep.
pub const SWEEP_TEST_SIZE: usize = 25;

/// Sweep validation size as a fraction of the training size.
pub const SWEEP_VALIDATION_FRACTION: f64 = 0.25;

/// Share of the leave-one-out training portion held out for MLP validation.
pub const LOO_VALIDATION_FRACTION: f64 = 0.2;

pub const LOO_NOTE: &str = "leave-one-out; not directly comparable to sweep points";

/// Where an octave error falls relative to [`JND_OCTAVE_RANGE`].
pub fn jnd_annotation(rms_octave: f64) -> &'static str {
    if rms_octave < JND_OCTAVE_RANGE.0 {
        "below_jnd"
    } else if rms_octave <= JND_OCTAVE_RANGE.1 {
        "within_jnd"
    } else {
        "above_jnd"
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Single,
    #[default]
    Repeated,
    Sweep,
    Loo,
    Mix,
    Overlap,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Single => "single",
            Protocol::Repeated => "repeated",
            Protocol::Sweep => "sweep",
            Protocol::Loo => "loo",
            Protocol::Mix => "mix",
            Protocol::Overlap => "overlap",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ratios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Self {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl Ratios {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || parts.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split ratios {parts:?} must be in [0, 1] and sum to at most 1"
            )));
        }
        Ok(())
    }
}

/// Disjoint, sorted record indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn floor_part(n: usize, ratio: f64) -> usize {
    (n as f64 * ratio + 1e-9).floor() as usize
}

/// Record indices grouped by subject, in order of first appearance.
fn subject_groups(d: &Dataset) -> Vec<Vec<usize>> {
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in d.records.iter().enumerate() {
        let g = *slot.entry(r.subject_id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

fn shuffled_groups(n_groups: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Takes whole groups in `order` up to `target` indices. Groups that would
/// overshoot are skipped; a pass that ends short adds the first skipped group,
/// so the result exceeds `target` by less than one group.
fn fill(groups: &[Vec<usize>], order: &[usize], taken: &mut [bool], target: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if target == 0 {
        return out;
    }
    let mut first_skipped = None;
    for &g in order {
        if taken[g] {
            continue;
        }
        if out.len() + groups[g].len() <= target {
            taken[g] = true;
            out.extend_from_slice(&groups[g]);
            if out.len() == target {
                break;
            }
        } else if first_skipped.is_none() {
            first_skipped = Some(g);
        }
    }
    if out.len() < target {
        if let Some(g) = first_skipped {
            taken[g] = true;
            out.extend_from_slice(&groups[g]);
        }
    }
    out.sort_unstable();
    out
}

fn untaken(groups: &[Vec<usize>], taken: &[bool]) -> Vec<usize> {
    let mut out: Vec<usize> = groups
        .iter()
        .zip(taken)
        .filter(|(_, t)| !**t)
        .flat_map(|(g, _)| g.iter().copied())
        .collect();
    out.sort_unstable();
    out
}

/// Seeded subject-level split. Test and validation sizes are floored, the
/// remainder goes to train; a subject's records never straddle two parts.
pub fn make_split(d: &Dataset, ratios: Ratios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let n = d.len();
    let groups = subject_groups(d);
    let order = shuffled_groups(groups.len(), seed);
    let mut taken = vec![false; groups.len()];
    let (n_test, n_val) = (floor_part(n, ratios.test), floor_part(n, ratios.validation));
    let test = fill(&groups, &order, &mut taken, n_test);
    // Overshoot in test is taken back from validation so train stays within one.
    let val_target = (n_test + n_val).saturating_sub(test.len());
    let validation = fill(&groups, &order, &mut taken, val_target);
    let train = untaken(&groups, &taken);
    let empty = [
        (ratios.train, train.is_empty(), "train"),
        (ratios.validation, validation.is_empty(), "validation"),
        (ratios.test, test.is_empty(), "test"),
    ]
    .into_iter()
    .find(|(r, e, _)| *r > 0.0 && *e);
    if let Some((_, _, part)) = empty {
        return Err(Error::DatasetTooSmall(format!(
            "{} records leave the {part} part empty",
            n
        )));
    }
    Ok(Split {
        train,
        validation,
        test,
    })
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("error metric over zero predictions".into()));
    }
    Ok(())
}

pub fn rms_hz(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// RMS of log2(pred / truth).
pub fn rms_octave(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let mut ss = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        for v in [p, t] {
            if !(v > 0.0) {
                return Err(Error::NonPositiveFrequency(v));
            }
        }
        let o = (p / t).log2();
        ss += o * o;
    }
    Ok((ss / pred.len() as f64).sqrt())
}

/// One train/evaluate cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunResult {
    pub seed: u64,
    /// Examples the model was fitted on (validation excluded).
    pub train_size: usize,
    pub n_test: usize,
    pub rms_hz: f64,
    pub rms_octave: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub dataset: String,
    pub protocol: Protocol,
    pub model: String,
    pub spec: ModelSpec,
    /// Arithmetic mean of the per-run values.
    pub rms_hz: f64,
    pub rms_octave: f64,
    /// Test predictions per run, averaged and rounded.
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    pub note: Option<&'static str>,
}

impl ErrorReport {
    fn from_runs(dataset: &str, protocol: Protocol, spec: &ModelSpec, runs: Vec<RunResult>) -> Self {
        let k = runs.len() as f64;
        Self {
            dataset: dataset.to_string(),
            protocol,
            model: spec.summary(),
            spec: *spec,
            rms_hz: runs.iter().map(|r| r.rms_hz).sum::<f64>() / k,
            rms_octave: runs.iter().map(|r| r.rms_octave).sum::<f64>() / k,
            n_test: (runs.iter().map(|r| r.n_test).sum::<usize>() as f64 / k).round() as usize,
            seeds: runs.iter().map(|r| r.seed).collect(),
            runs,
            note: None,
        }
    }

    pub fn jnd(&self) -> &'static str {
        jnd_annotation(self.rms_octave)
    }
}

/// Which part of a split an index was handed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Access {
    /// Training examples; the normalizer is fitted on exactly these.
    Fit,
    Validate,
    Evaluate,
}

/// Instrumentation hook: sees every index set a protocol hands to a model.
pub trait AccessObserver: Sync {
    fn record(&self, seed: u64, access: Access, indices: &[usize]);
}

impl AccessObserver for () {
    fn record(&self, _: u64, _: Access, _: &[usize]) {}
}

type Examples = [(AnthroVector, f64)];

fn gather(
    ex: &Examples,
    idx: &[usize],
    seed: u64,
    access: Access,
    obs: &dyn AccessObserver,
) -> Vec<(AnthroVector, f64)> {
    obs.record(seed, access, idx);
    idx.iter().map(|&i| ex[i]).collect()
}

fn fit_and_score(
    spec: &ModelSpec,
    seed: u64,
    train: &Examples,
    val: &Examples,
    test: &Examples,
) -> Result<RunResult> {
    let model = predict::train(&spec.with_seed(seed), train, val)?;
    let (pred, truth): (Vec<f64>, Vec<f64>) = test.iter().map(|(v, t)| (model.predict(v), *t)).unzip();
    Ok(RunResult {
        seed,
        train_size: train.len(),
        n_test: test.len(),
        rms_hz: rms_hz(&pred, &truth)?,
        rms_octave: rms_octave(&pred, &truth)?,
    })
}

fn seeds(base_seed: u64, n_runs: usize) -> Result<Vec<u64>> {
    if n_runs == 0 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    Ok((0..n_runs as u64).map(|i| base_seed.wrapping_add(i)).collect())
}

/// Keeps seed order; the first failure (by seed order) aborts the batch.
fn collect_runs(results: Vec<(u64, Result<RunResult>)>) -> Result<Vec<RunResult>> {
    results
        .into_iter()
        .map(|(seed, r)| {
            r.map_err(|e| Error::RunFailed {
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

fn repeated_run(
    d: &Dataset,
    ex: &Examples,
    spec: &ModelSpec,
    seed: u64,
    obs: &dyn AccessObserver,
) -> Result<RunResult> {
    let split = make_split(d, Ratios::default(), seed)?;
    let train = gather(ex, &split.train, seed, Access::Fit, obs);
    let val = gather(ex, &split.validation, seed, Access::Validate, obs);
    let test = gather(ex, &split.test, seed, Access::Evaluate, obs);
    fit_and_score(spec, seed, &train, &val, &test)
}

/// One 60/20/20 split, one model; the seed drives both.
pub fn run_single(d: &Dataset, spec: &ModelSpec, seed: u64) -> Result<RunResult> {
    spec.validate()?;
    repeated_run(d, &d.examples()?, spec, seed, &())
}

pub fn run_repeated(d: &Dataset, spec: &ModelSpec, n_runs: usize, base_seed: u64) -> Result<ErrorReport> {
    run_repeated_observed(d, spec, n_runs, base_seed, &())
}

pub fn run_repeated_observed(
    d: &Dataset,
    spec: &ModelSpec,
    n_runs: usize,
    base_seed: u64,
    obs: &dyn AccessObserver,
) -> Result<ErrorReport> {
    spec.validate()?;
    let ex = d.examples()?;
    let results = seeds(base_seed, n_runs)?
        .into_par_iter()
        .map(|seed| (seed, repeated_run(d, &ex, spec, seed, obs)))
        .collect();
    let runs = collect_runs(results)?;
    Ok(ErrorReport::from_runs(&d.name, Protocol::Repeated, spec, runs))
}

/// Errors unless every size leaves room for the test set.
pub fn check_sweep_sizes(n: usize, train_sizes: &[usize], test_size: usize) -> Result<()> {
    if train_sizes.is_empty() || test_size == 0 || train_sizes.contains(&0) {
        return Err(Error::InfeasibleSizes(
            "need at least one nonzero train size and a nonzero test size".into(),
        ));
    }
    let max = *train_sizes.iter().max().expect("nonempty");
    if max + test_size > n {
        return Err(Error::InfeasibleSizes(format!(
            "train size {max} + test size {test_size} exceeds {n} examples"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_run(
    groups: &[Vec<usize>],
    ex: &Examples,
    spec: &ModelSpec,
    size: usize,
    test_size: usize,
    seed: u64,
    obs: &dyn AccessObserver,
) -> Result<RunResult> {
    let order = shuffled_groups(groups.len(), seed);
    let mut taken = vec![false; groups.len()];
    let test_idx = fill(groups, &order, &mut taken, test_size);
    let train_idx = fill(groups, &order, &mut taken, size);
    let val_idx = if spec.kind == ModelKind::Mlp {
        let rest: Vec<usize> = order.iter().rev().copied().collect();
        let want = floor_part(size, SWEEP_VALIDATION_FRACTION).max(1);
        fill(groups, &rest, &mut taken, want)
    } else {
        Vec::new()
    };
    let train = gather(ex, &train_idx, seed, Access::Fit, obs);
    let val = gather(ex, &val_idx, seed, Access::Validate, obs);
    let test = gather(ex, &test_idx, seed, Access::Evaluate, obs);
    fit_and_score(spec, seed, &train, &val, &test)
}

/// Per seed, one fixed test set and one train set per requested size.
/// MLP validation comes from outside both, at a quarter of the train size
/// (capped by what is left).
pub fn size_sweep(
    d: &Dataset,
    train_sizes: &[usize],
    test_size: usize,
    spec: &ModelSpec,
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<(usize, ErrorReport)>> {
    size_sweep_observed(d, train_sizes, test_size, spec, n_runs, base_seed, &())
}

pub fn size_sweep_observed(
    d: &Dataset,
    train_sizes: &[usize],
    test_size: usize,
    spec: &ModelSpec,
    n_runs: usize,
    base_seed: u64,
    obs: &dyn AccessObserver,
) -> Result<Vec<(usize, ErrorReport)>> {
    spec.validate()?;
    check_sweep_sizes(d.len(), train_sizes, test_size)?;
    let ex = d.examples()?;
    let groups = subject_groups(d);
    let seeds = seeds(base_seed, n_runs)?;
    let tasks: Vec<(usize, u64)> = train_sizes
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let results: Vec<(u64, Result<RunResult>)> = tasks
        .par_iter()
        .map(|&(size, seed)| (seed, sweep_run(&groups, &ex, spec, size, test_size, seed, obs)))
        .collect();
    let runs = collect_runs(results)?;
    Ok(train_sizes
        .iter()
        .zip(runs.chunks(seeds.len()))
        .map(|(&size, chunk)| {
            (size, ErrorReport::from_runs(&d.name, Protocol::Sweep, spec, chunk.to_vec()))
        })
        .collect())
}

/// Each example predicted by a model trained on all others. For the MLP a
/// seeded fifth of the others is held out for validation.
pub fn leave_one_out(d: &Dataset, spec: &ModelSpec, seed: u64) -> Result<ErrorReport> {
    spec.validate()?;
    let ex = d.examples()?;
    let n = ex.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall(format!(
            "leave-one-out needs at least 2 examples, got {n}"
        )));
    }
    let preds: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<(AnthroVector, f64)> =
                ex.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, e)| *e).collect();
            let val = if spec.kind == ModelKind::Mlp {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                others.shuffle(&mut rng);
                let k = floor_part(n - 1, LOO_VALIDATION_FRACTION).max(1);
                others.split_off(n - 1 - k)
            } else {
                Vec::new()
            };
            let model = predict::train(&spec.with_seed(seed), &others, &val)?;
            Ok(model.predict(&ex[i].0))
        })
        .collect();
    let pred = preds.into_iter().collect::<Result<Vec<f64>>>()?;
    let truth: Vec<f64> = ex.iter().map(|(_, t)| *t).collect();
    let run = RunResult {
        seed,
        train_size: n - 1,
        n_test: n,
        rms_hz: rms_hz(&pred, &truth)?,
        rms_octave: rms_octave(&pred, &truth)?,
    };
    let mut report = ErrorReport::from_runs(&d.name, Protocol::Loo, spec, vec![run]);
    report.note = Some(LOO_NOTE);
    Ok(report)
}

fn mix_examples(d: &Dataset, role: &str) -> Result<Vec<(AnthroVector, f64)>> {
    d.examples().map_err(|e| match e {
        Error::MissingAnthropometry { subject_id, ear } => Error::FeatureMismatch(format!(
            "{role} dataset {} has no anthropometry for {subject_id}/{ear}",
            d.name
        )),
        e => e,
    })
}

/// Source training pool plus the target training part twice; validation and
/// test from the target. The normalizer sees the mixed training set.
pub fn domain_mix(
    source: &Dataset,
    target: &Dataset,
    spec: &ModelSpec,
    n_runs: usize,
    base_seed: u64,
) -> Result<ErrorReport> {
    domain_mix_observed(source, target, spec, n_runs, base_seed, &())
}

/// `obs` sees target indices only.
pub fn domain_mix_observed(
    source: &Dataset,
    target: &Dataset,
    spec: &ModelSpec,
    n_runs: usize,
    base_seed: u64,
    obs: &dyn AccessObserver,
) -> Result<ErrorReport> {
    spec.validate()?;
    let src = mix_examples(source, "source")?;
    let tgt = mix_examples(target, "target")?;
    let run = |seed: u64| -> Result<RunResult> {
        let split = make_split(target, Ratios::default(), seed)?;
        let mut train = if source.is_empty() {
            Vec::new()
        } else {
            let pool = make_split(source, Ratios::default(), seed)?.train;
            pool.iter().map(|&i| src[i]).collect()
        };
        let target_train = gather(&tgt, &split.train, seed, Access::Fit, obs);
        train.extend_from_slice(&target_train);
        train.extend_from_slice(&target_train);
        let val = gather(&tgt, &split.validation, seed, Access::Validate, obs);
        let test = gather(&tgt, &split.test, seed, Access::Evaluate, obs);
        fit_and_score(spec, seed, &train, &val, &test)
    };
    let results = seeds(base_seed, n_runs)?
        .into_par_iter()
        .map(|seed| (seed, run(seed)))
        .collect();
    let runs = collect_runs(results)?;
    let name = format!("{}+{}", source.name, target.name);
    Ok(ErrorReport::from_runs(&name, Protocol::Mix, spec, runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    fn of(xs: &[f64]) -> Self {
        Self {
            n: xs.len(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureOverlap {
    pub feature: &'static str,
    /// Histogram intersection of the two normalized histograms, in [0, 1].
    pub coefficient: f64,
    pub bins: usize,
    pub bin_width: f64,
    pub a: Summary,
    pub b: Summary,
}

const MAX_OVERLAP_BINS: usize = 10_000;

/// Linear-interpolated quantile of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Normalized histogram intersection over shared bins whose width follows the
/// Freedman–Diaconis rule on the pooled sample (square-root rule when the
/// pooled IQR is zero). Returns `(coefficient, bins, bin_width)`.
pub fn histogram_overlap(a: &[f64], b: &[f64]) -> Result<(f64, usize, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("overlap needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("overlap samples must be finite".into()));
    }
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let (lo, hi) = (pooled[0], pooled[pooled.len() - 1]);
    let range = hi - lo;
    if range == 0.0 {
        return Ok((1.0, 1, 0.0));
    }
    let n = pooled.len() as f64;
    let iqr = quantile(&pooled, 0.75) - quantile(&pooled, 0.25);
    let fd = 2.0 * iqr / n.cbrt();
    let bins = if fd > 0.0 {
        (range / fd).ceil() as usize
    } else {
        n.sqrt().ceil() as usize
    }
    .clamp(1, MAX_OVERLAP_BINS);
    let width = range / bins as f64;
    let hist = |xs: &[f64]| {
        let mut h = vec![0u64; bins];
        for &x in xs {
            h[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let (na, nb) = (a.len() as u128, b.len() as u128);
    // Σ min(ca/na, cb/nb) over the common denominator na·nb, so a = b gives exactly 1.
    let shared: u128 = ha
        .iter()
        .zip(&hb)
        .map(|(&ca, &cb)| (ca as u128 * nb).min(cb as u128 * na))
        .sum();
    let c = shared as f64 / (na * nb) as f64;
    Ok((c.min(1.0), bins, width))
}

/// Per-feature overlap between two datasets' anthropometry.
pub fn feature_overlap_report(a: &Dataset, b: &Dataset) -> Result<Vec<FeatureOverlap>> {
    let columns = |d: &Dataset| -> Result<Vec<Vec<f64>>> {
        let mut cols = vec![Vec::with_capacity(d.len()); NUM_FEATURES];
        for r in &d.records {
            for (c, v) in cols.iter_mut().zip(r.require_anthro()?.to_array()) {
                c.push(v);
            }
        }
        Ok(cols)
    };
    let (ca, cb) = (columns(a)?, columns(b)?);
    FEATURE_NAMES
        .iter()
        .zip(ca.iter().zip(&cb))
        .map(|(&feature, (xa, xb))| {
            let (coefficient, bins, bin_width) = histogram_overlap(xa, xb)?;
            Ok(FeatureOverlap {
                feature,
                coefficient,
                bins,
                bin_width,
                a: Summary::of(xa),
                b: Summary::of(xb),
            })
        })
        .collect()
}
