//! Multi-realization benchmark runs, paired scheme comparison and export.
//!
//! An experiment simulates one noise-free stack, draws `realizations`
//! independent noisy copies of it and reconstructs each copy with every
//! requested scheme from the same constant start. Noise realization `r`
//! draws from stream `(seed, r)`, so adding realizations never changes
//! earlier ones. All reconstructions share one position-ordering stream,
//! which makes schemes that agree on their warmup agree bit for bit there.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::CostFunctional;
use crate::engine::{
    adapt_constraints, constant_initial_guess, run_scheme, AdapterConfig, GroundTruth, RuleVariant,
    SchemeSpec, DEFAULT_REFINEMENT, DEFAULT_WARMUP,
};
use crate::error::{Error, Result};
use crate::forward::{
    center_spectrum, effective_object, make_probe, raster_positions, simulate_dataset, synthesize_object, Dataset, Mode,
    ObjectKind, ProbeKind,
};
use crate::metrics::{illumination_mask, DEFAULT_MASK_THRESHOLD};
use crate::noise::{apply_noise, scale_to_budget, NoiseModel, PhotonBudget};

/// Photon budgets used in the reference figures: 10^3.5, 10^4, 10^5, 10^6.
pub const REFERENCE_BUDGETS: [f64; 4] = [3162.2776601683795, 1e4, 1e5, 1e6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub object: ObjectKind,
    pub object_width: usize,
    pub object_height: usize,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub phase_min: f64,
    pub phase_max: f64,
    pub window: usize,
    pub probe: ProbeKind,
    pub probe_radius: f64,
    pub scan_step: usize,
    pub scan_jitter: usize,
    pub oversampling: usize,
    pub noise: NoiseModel,
    pub photons: f64,
    pub schemes: Vec<u8>,
    pub warmup: usize,
    pub refinement: usize,
    pub adapter: bool,
    pub adapter_mu_c: f64,
    pub adapter_inner_sweeps: usize,
    pub adapter_outer_rounds: usize,
    pub adapter_warmup: usize,
    pub adapter_inner_functional: CostFunctional,
    pub adapter_inner_mu: f64,
    pub realizations: usize,
    pub seed: u64,
    pub mask_threshold: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adapter = AdapterConfig::default();
        Self {
            mode: Mode::RealSpace,
            object: ObjectKind::CheckerboardText,
            object_width: 64,
            object_height: 64,
            amplitude_min: 0.3,
            amplitude_max: 1.0,
            phase_min: -1.5,
            phase_max: 1.5,
            window: 32,
            probe: ProbeKind::Tophat,
            probe_radius: 8.0,
            scan_step: 8,
            scan_jitter: 1,
            oversampling: 1,
            noise: NoiseModel::Poisson,
            photons: 1e5,
            schemes: vec![1, 2],
            warmup: DEFAULT_WARMUP,
            refinement: DEFAULT_REFINEMENT,
            adapter: false,
            adapter_mu_c: adapter.mu_c,
            adapter_inner_sweeps: adapter.inner_sweeps,
            adapter_outer_rounds: adapter.outer_rounds,
            adapter_warmup: adapter.warmup_sweeps,
            adapter_inner_functional: CostFunctional::AMPLITUDE,
            adapter_inner_mu: adapter.inner_mu,
            realizations: 20,
            seed: 1,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn adapter_config(&self) -> AdapterConfig {
        AdapterConfig {
            mu_c: self.adapter_mu_c,
            inner_sweeps: self.adapter_inner_sweeps,
            outer_rounds: self.adapter_outer_rounds,
            inner_rule: RuleVariant::GradientDescent(self.adapter_inner_functional),
            inner_mu: self.adapter_inner_mu,
            warmup_sweeps: self.adapter_warmup,
        }
    }

    /// The run list in canonical order: schemes ascending, then the adapter.
    pub fn runs(&self) -> Vec<RunKey> {
        let mut ids = self.schemes.clone();
        ids.sort_unstable();
        ids.dedup();
        let mut runs: Vec<RunKey> = ids.into_iter().map(RunKey::Scheme).collect();
        if self.adapter {
            runs.push(RunKey::Adapter);
        }
        runs
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.object_width == 0 || self.object_height == 0 || self.window == 0 {
            return bad("object and window dimensions must be positive".into());
        }
        if self.oversampling == 0 {
            return bad("oversampling must be >= 1".into());
        }
        if self.realizations == 0 {
            return bad("realizations must be >= 1".into());
        }
        if self.schemes.is_empty() && !self.adapter {
            return bad("nothing to run: no schemes and adapter disabled".into());
        }
        for &id in &self.schemes {
            SchemeSpec::from_id(id, 0, 0).map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return bad(format!("mask_threshold must lie in (0, 1), got {}", self.mask_threshold));
        }
        PhotonBudget::new(self.photons).map_err(|e| Error::Config(e.to_string()))?;
        if self.adapter {
            self.adapter_config().validate()?;
        }
        // Geometry, probe and object checks run the real constructors.
        self.build_scene().map(|_| ()).map_err(|e| Error::Config(e.to_string()))
    }

    fn build_scene(&self) -> Result<Scene> {
        let dims = (self.object_width, self.object_height);
        let object = synthesize_object(
            self.object,
            dims,
            (self.amplitude_min, self.amplitude_max),
            (self.phase_min, self.phase_max),
            derive_seed(self.seed, STREAM_OBJECT, 0),
        )?;
        // A pupil scanned over an uncentred spectrum would never see the low frequencies.
        let object = match self.mode {
            Mode::RealSpace => object,
            Mode::FourierSpace => center_spectrum(&object),
        };
        let window = (self.window, self.window);
        let probe = make_probe(self.probe, self.probe_radius, window)?;
        let geometry = raster_positions(
            dims,
            window,
            self.scan_step,
            self.scan_jitter,
            derive_seed(self.seed, STREAM_SCAN, 0),
        )?;
        Ok(Scene { object, probe, geometry })
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        hex::encode(&digest[..8])
    }
}

struct Scene {
    object: crate::grid::ComplexGrid,
    probe: crate::grid::ComplexGrid,
    geometry: crate::forward::ScanGeometry,
}

const STREAM_OBJECT: u64 = 1;
const STREAM_SCAN: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_RECON: u64 = 4;

/// SplitMix64 finaliser over `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one reconstruction method in a record: a scheme id or the adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RunKey {
    Scheme(u8),
    Adapter,
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunKey::Scheme(id) => write!(f, "{id}"),
            RunKey::Adapter => f.write_str("adapter"),
        }
    }
}

impl FromStr for RunKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adapter" {
            return Ok(RunKey::Adapter);
        }
        s.parse::<u8>().map(RunKey::Scheme).map_err(|_| Error::UnknownScheme(s.to_string()))
    }
}

impl From<RunKey> for String {
    fn from(k: RunKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for RunKey {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed { final_error: f64, curve: Vec<(usize, f64)> },
    Failed { kind: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub run: RunKey,
    pub realization: usize,
    pub outcome: Outcome,
}

impl Cell {
    pub fn final_error(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Completed { final_error, .. } => Some(final_error),
            Outcome::Failed { .. } => None,
        }
    }
}

/// JSON has no NaN; statistics of a run with no completed cell are stored as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    #[serde(with = "nan_as_null")]
    pub median: f64,
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub std: f64,
    #[serde(with = "nan_as_null")]
    pub min: f64,
    #[serde(with = "nan_as_null")]
    pub max: f64,
    pub n: usize,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl Stats {
    /// Sample statistics (`n - 1` in the standard deviation). NaN when empty.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Stats { median: f64::NAN, mean: f64::NAN, std: f64::NAN, min: f64::NAN, max: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stats {
            median: median(values),
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n,
        }
    }

    fn same_as(&self, other: &Stats) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.n == other.n
            && eq(self.median, other.median)
            && eq(self.mean, other.mean)
            && eq(self.std, other.std)
            && eq(self.min, other.min)
            && eq(self.max, other.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: RunKey,
    pub rule: String,
    pub functional: String,
    pub mu: f64,
    pub stats: Stats,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub generator: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub realization_seeds: Vec<u64>,
    pub reconstruction_seed: u64,
    pub summaries: Vec<RunSummary>,
    /// Sorted by run, then realization.
    pub cells: Vec<Cell>,
}

impl ExperimentRecord {
    pub fn final_errors(&self, run: RunKey) -> Vec<(usize, f64)> {
        self.cells
            .iter()
            .filter(|c| c.run == run)
            .filter_map(|c| c.final_error().map(|e| (c.realization, e)))
            .collect()
    }

    pub fn summary(&self, run: RunKey) -> Option<&RunSummary> {
        self.summaries.iter().find(|s| s.run == run)
    }

    /// Checks that every stored summary matches one recomputed from the cells.
    pub fn verify(&self) -> Result<()> {
        let recomputed = summarize(&self.config, &self.cells);
        if recomputed.len() != self.summaries.len() {
            return Err(Error::Config("record summaries do not match its cells".into()));
        }
        for (a, b) in recomputed.iter().zip(&self.summaries) {
            if a.run != b.run || a.failures != b.failures || !a.stats.same_as(&b.stats) {
                return Err(Error::Config(format!("summary for run {} disagrees with its cells", b.run)));
            }
        }
        Ok(())
    }
}

fn describe(config: &ExperimentConfig, run: RunKey) -> (String, String, f64) {
    match run {
        RunKey::Scheme(id) => {
            let s = SchemeSpec::from_id(id, config.warmup, config.refinement).expect("validated id");
            (s.refinement_rule.name().to_string(), s.refinement_rule.functional_id(), s.mu)
        }
        RunKey::Adapter => {
            let a = config.adapter_config();
            (format!("adapter[{}]", a.inner_rule.name()), a.inner_rule.functional_id(), a.mu_c)
        }
    }
}

fn summarize(config: &ExperimentConfig, cells: &[Cell]) -> Vec<RunSummary> {
    config
        .runs()
        .into_iter()
        .map(|run| {
            let errors: Vec<f64> =
                cells.iter().filter(|c| c.run == run).filter_map(Cell::final_error).collect();
            let failures = cells.iter().filter(|c| c.run == run && c.final_error().is_none()).count();
            let (rule, functional, mu) = describe(config, run);
            RunSummary { run, rule, functional, mu, stats: Stats::from_values(&errors), failures }
        })
        .collect()
}

/// The noisy dataset and ground truth of realization `r`.
pub fn realization(config: &ExperimentConfig, r: usize) -> Result<(Dataset, GroundTruth)> {
    let prepared = Prepared::new(config)?;
    prepared.realization(r)
}

struct Prepared<'a> {
    config: &'a ExperimentConfig,
    scene: Scene,
    scaled: Vec<crate::grid::RealGrid>,
    truth: GroundTruth,
}

impl<'a> Prepared<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scene = config.build_scene()?;
        let clean = simulate_dataset(&scene.object, &scene.probe, &scene.geometry, config.mode, config.oversampling)?;
        let scaled = scale_to_budget(&clean, PhotonBudget::new(config.photons)?)?;
        let mask = illumination_mask(&scene.probe, &scene.geometry, config.mask_threshold)?;
        let truth = GroundTruth { object: effective_object(&scene.object, config.mode), mask };
        Ok(Self { config, scene, scaled, truth })
    }

    fn noise_seed(&self, r: usize) -> u64 {
        derive_seed(self.config.seed, STREAM_NOISE, r as u64)
    }

    fn realization(&self, r: usize) -> Result<(Dataset, GroundTruth)> {
        let patterns = apply_noise(self.config.noise, &self.scaled, self.noise_seed(r))?;
        let ds = Dataset::new(
            self.config.mode,
            self.scene.geometry.clone(),
            self.config.oversampling,
            patterns,
            self.scene.probe.clone(),
        )?;
        Ok((ds, self.truth.clone()))
    }
}

/// Runs one reconstruction method on one dataset.
pub fn reconstruct(
    config: &ExperimentConfig,
    run: RunKey,
    dataset: &Dataset,
    truth: Option<&GroundTruth>,
    seed: u64,
) -> Result<crate::engine::ReconstructionState> {
    let init = constant_initial_guess(dataset);
    match run {
        RunKey::Scheme(id) => {
            let scheme = SchemeSpec::from_id(id, config.warmup, config.refinement)?;
            run_scheme(&scheme, dataset, &init, truth, seed)
        }
        RunKey::Adapter => adapt_constraints(dataset, &config.adapter_config(), &init, truth, seed).map(|(s, _)| s),
    }
}

pub fn reconstruction_seed(config: &ExperimentConfig) -> u64 {
    derive_seed(config.seed, STREAM_RECON, 0)
}

/// Runs every (run, realization) cell. Cell failures are recorded, not propagated.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    let prepared = Prepared::new(config)?;
    let runs = config.runs();
    let recon_seed = reconstruction_seed(config);
    let mut by_run: BTreeMap<RunKey, Vec<Cell>> = BTreeMap::new();
    let mut realization_seeds = Vec::with_capacity(config.realizations);
    for r in 0..config.realizations {
        realization_seeds.push(prepared.noise_seed(r));
        let (dataset, truth) = prepared.realization(r)?;
        for &run in &runs {
            let outcome = match reconstruct(config, run, &dataset, Some(&truth), recon_seed) {
                Ok(state) => match state.final_error() {
                    Some(final_error) => Outcome::Completed { final_error, curve: state.error_log },
                    None => Outcome::Failed { kind: "empty".into(), message: "no sweeps were run".into() },
                },
                Err(e) => Outcome::Failed { kind: e.kind().into(), message: e.to_string() },
            };
            by_run.entry(run).or_default().push(Cell { run, realization: r, outcome });
        }
    }
    let cells: Vec<Cell> = by_run.into_values().flatten().collect();
    Ok(ExperimentRecord {
        generator: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
        config: config.clone(),
        config_hash: config.hash(),
        realization_seeds,
        reconstruction_seed: recon_seed,
        summaries: summarize(config, &cells),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: RunKey,
    pub candidate: RunKey,
    pub pairs: usize,
    /// Median of `candidate - baseline` over paired realizations.
    #[serde(with = "nan_as_null")]
    pub median_difference: f64,
    pub candidate_better: usize,
    pub baseline_better: usize,
    pub ties: usize,
    /// Two-sided exact sign test, ties dropped.
    pub p_value: f64,
}

/// Two-sided exact binomial sign test p-value for `k` successes out of `n`.
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let k = successes.min(n - successes);
    // Terms C(n, i) / 2^n built by recurrence; in log space once 2^-n underflows.
    let mut tail = 0.0;
    if n < 1000 {
        let mut term = 0.5f64.powi(n as i32);
        for i in 0..=k {
            if i > 0 {
                term *= (n - i + 1) as f64 / i as f64;
            }
            tail += term;
        }
    } else {
        let mut ln_term = -(n as f64) * std::f64::consts::LN_2;
        for i in 0..=k {
            if i > 0 {
                ln_term += ((n - i + 1) as f64).ln() - (i as f64).ln();
            }
            tail += ln_term.exp();
        }
    }
    (2.0 * tail).min(1.0)
}

pub fn compare_schemes(record: &ExperimentRecord, baseline: RunKey, candidate: RunKey) -> Result<Comparison> {
    let runs = record.config.runs();
    for key in [baseline, candidate] {
        if !runs.contains(&key) {
            return Err(Error::UnknownScheme(format!("{key} (not in this record)")));
        }
    }
    let base: BTreeMap<usize, f64> = record.final_errors(baseline).into_iter().collect();
    let diffs: Vec<f64> = record
        .final_errors(candidate)
        .into_iter()
        .filter_map(|(r, e)| base.get(&r).map(|b| e - b))
        .collect();
    let candidate_better = diffs.iter().filter(|&&d| d < 0.0).count();
    let baseline_better = diffs.iter().filter(|&&d| d > 0.0).count();
    let ties = diffs.len() - candidate_better - baseline_better;
    Ok(Comparison {
        baseline,
        candidate,
        pairs: diffs.len(),
        median_difference: if diffs.is_empty() { f64::NAN } else { median(&diffs) },
        candidate_better,
        baseline_better,
        ties,
        p_value: sign_test_p(candidate_better, candidate_better + baseline_better),
    })
}

/// One noisy realization with its ground truth, as written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationFile {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub realization: usize,
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

impl SimulationFile {
    pub fn generate(config: &ExperimentConfig, realization: usize) -> Result<Self> {
        let (dataset, truth) = self::realization(config, realization)?;
        Ok(Self { config: config.clone(), config_hash: config.hash(), realization, dataset, truth })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: Self = read_json(path)?;
        file.config.validate()?;
        let dims = file.dataset.geometry.object_dims();
        if file.truth.object.dims() != dims || file.truth.mask.dims() != dims {
            return Err(Error::Format { path: path.to_path_buf(), message: "truth does not match the scan".into() });
        }
        Ok(file)
    }
}

/// Result of a single reconstruction, as written by `reconstruct`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionFile {
    pub run: RunKey,
    pub seed: u64,
    pub sweeps: usize,
    pub final_error: Option<f64>,
    pub error_log: Vec<(usize, f64)>,
    pub object: crate::grid::ComplexGrid,
}

impl ReconstructionFile {
    pub fn run(sim: &SimulationFile, run: RunKey, seed: u64) -> Result<Self> {
        let state = reconstruct(&sim.config, run, &sim.dataset, Some(&sim.truth), seed)?;
        Ok(Self {
            run,
            seed,
            sweeps: state.iteration,
            final_error: state.final_error(),
            error_log: state.error_log,
            object: state.object,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format { path: path.to_path_buf(), message: e.to_string() }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const RECORD_FILE: &str = "record.json";

/// Writes `summary.csv`, `curves.csv` and `record.json` into `dir`.
pub fn export(record: &ExperimentRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = &record.config_hash;

    let summary_path = dir.join(SUMMARY_FILE);
    write_csv(
        &summary_path,
        &["id", "rule", "functional", "mu", "median", "mean", "std", "min", "max", "n", "failures", "config_hash"],
        record.summaries.iter().map(|s| {
            vec![
                s.run.to_string(),
                s.rule.clone(),
                s.functional.clone(),
                s.mu.to_string(),
                s.stats.median.to_string(),
                s.stats.mean.to_string(),
                s.stats.std.to_string(),
                s.stats.min.to_string(),
                s.stats.max.to_string(),
                s.stats.n.to_string(),
                s.failures.to_string(),
                hash.clone(),
            ]
        }),
    )?;

    let curves_path = dir.join(CURVES_FILE);
    write_csv(
        &curves_path,
        &["scheme", "realization", "iteration", "error", "config_hash"],
        record.cells.iter().flat_map(|c| {
            let curve: &[(usize, f64)] = match &c.outcome {
                Outcome::Completed { curve, .. } => curve,
                Outcome::Failed { .. } => &[],
            };
            curve.iter().map(move |(it, e)| {
                vec![c.run.to_string(), c.realization.to_string(), it.to_string(), e.to_string(), hash.clone()]
            })
        }),
    )?;

    let record_path = dir.join(RECORD_FILE);
    write_json(&record_path, record)?;
    Ok(vec![summary_path, curves_path, record_path])
}

/// Reads `record.json` and checks its summaries against its cells.
pub fn load_record(path: &Path) -> Result<ExperimentRecord> {
    let record: ExperimentRecord = read_json(path)?;
    record.verify()?;
    Ok(record)
}
