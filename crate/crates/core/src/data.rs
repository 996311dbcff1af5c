//! Synthetic dataset generation, train/test/fold partitioning and the dataset CSV format.
//!
//! Each sample draws a paraffinicity `alpha` and sets family totals
//! (wt%) as
//!
//! ```text
//! paraffinic (n- + iso-) = 40 + 35 alpha
//! aromatic               = 30 - 20 alpha
//! naphthenic             = 100 - paraffinic - aromatic
//! ```
//!
//! Inside each group the mass is split by a Dirichlet draw whose mean follows
//! a Gaussian profile over boiling point, so mid-range (C5 to C7) components
//! dominate as in a light straight-run naphtha. All randomness comes from
//! ChaCha8 with the dataset seed as key and the sample index as stream id,
//! so sample `i` is reproducible on its own.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::property::{normalize, Composition, ComponentLibrary, Family, WatsonKConfig, N_COMPONENTS};
use crate::sim::{simulate_curve, simulated_watson_k, DistillationCurve, SimError, SimulatorConfig, N_CURVE_POINTS};

/// Fraction of samples held out for testing.
pub const TEST_FRACTION: f64 = 0.2;
pub const N_FOLDS: usize = 5;
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: schema mismatch: {message}")]
    SchemaMismatch { line: usize, message: String },
    #[error("line {line}: invariant violation: {message}")]
    InvariantViolation { line: usize, message: String },
    #[error("need at least {MIN_SAMPLES} samples, found {0}")]
    TooFewSamples(usize),
    #[error("degenerate generator configuration: {0}")]
    DegenerateConfig(String),
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One (curve, composition, Watson K) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub composition: Composition,
    pub curve: DistillationCurve,
    pub watson_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

impl DatasetSplit {
    /// Training indices of every fold except `fold`.
    pub fn fold_train(&self, fold: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub paraffinicity_range: (f64, f64),
    /// Total Dirichlet concentration per group, indexed by [`Family::ALL`].
    /// The n- and iso-paraffin entries are summed because the two families
    /// share one paraffinic allocation.
    pub dirichlet_concentration: [f64; 4],
    pub noise_wt_pct: f64,
    pub profile_center_k: f64,
    pub profile_width_k: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_samples: 254,
            seed: 0,
            paraffinicity_range: (0.0, 1.0),
            dirichlet_concentration: [500.0, 500.0, 600.0, 600.0],
            noise_wt_pct: 0.0,
            profile_center_k: 350.0,
            profile_width_k: 45.0,
        }
    }
}

/// Family targets for a paraffinicity value: (paraffinic, naphthenic, aromatic).
pub fn family_targets(alpha: f64) -> (f64, f64, f64) {
    let paraffinic = 40.0 + 35.0 * alpha;
    let aromatic = 30.0 - 20.0 * alpha;
    (paraffinic, 100.0 - paraffinic - aromatic, aromatic)
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_samples < MIN_SAMPLES {
            return Err(DataError::InvalidConfig(format!(
                "n_samples = {} (minimum {MIN_SAMPLES})",
                self.n_samples
            )));
        }
        if self.dirichlet_concentration.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
            return Err(DataError::InvalidConfig("concentrations must be positive".into()));
        }
        if !(self.noise_wt_pct.is_finite() && self.noise_wt_pct >= 0.0) {
            return Err(DataError::InvalidConfig("noise must be non-negative".into()));
        }
        if !(self.profile_width_k.is_finite() && self.profile_width_k > 0.0) {
            return Err(DataError::InvalidConfig("profile width must be positive".into()));
        }
        let (lo, hi) = self.paraffinicity_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(DataError::DegenerateConfig(format!(
                "paraffinicity range ({lo}, {hi}) is empty"
            )));
        }
        for alpha in [lo, hi] {
            let (p, n, a) = family_targets(alpha);
            if p < 0.0 || n < 0.0 || a < 0.0 {
                return Err(DataError::DegenerateConfig(format!(
                    "alpha = {alpha} gives family totals ({p}, {n}, {a})"
                )));
            }
        }
        Ok(())
    }
}

/// A generated sample plus the paraffinicity it was drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub sample: Sample,
    pub paraffinicity: f64,
}

/// Sample-stream generator bound to a library and simulator.
pub struct Generator<'a> {
    cfg: &'a GeneratorConfig,
    lib: &'a ComponentLibrary,
    sim: &'a SimulatorConfig,
    kcfg: &'a WatsonKConfig,
    groups: Vec<(Vec<usize>, Vec<f64>)>,
}

impl<'a> Generator<'a> {
    pub fn new(
        cfg: &'a GeneratorConfig,
        lib: &'a ComponentLibrary,
        sim: &'a SimulatorConfig,
        kcfg: &'a WatsonKConfig,
    ) -> Result<Self, DataError> {
        cfg.validate()?;
        let profile = |i: usize| {
            let z = (lib.entries()[i].boiling_point_k - cfg.profile_center_k) / cfg.profile_width_k;
            (-0.5 * z * z).exp()
        };
        let conc = cfg.dirichlet_concentration;
        let mut paraffinic = lib.family_indices(Family::NParaffin);
        paraffinic.extend(lib.family_indices(Family::Isoparaffin));
        let groups = [
            (paraffinic, conc[0] + conc[1]),
            (lib.family_indices(Family::Naphthene), conc[2]),
            (lib.family_indices(Family::Aromatic), conc[3]),
        ]
        .into_iter()
        .map(|(idx, total)| {
            let w: Vec<f64> = idx.iter().map(|&i| profile(i)).collect();
            let sum: f64 = w.iter().sum();
            let alphas = w.iter().map(|x| total * x / sum).collect();
            (idx, alphas)
        })
        .collect();
        Ok(Self { cfg, lib, sim, kcfg, groups })
    }

    /// Composition before noise for sample `index`, with its paraffinicity.
    fn draw_composition(
        &self,
        rng: &mut ChaCha8Rng,
        fixed_alpha: Option<f64>,
    ) -> Result<(Vec<f64>, f64), DataError> {
        let (lo, hi) = self.cfg.paraffinicity_range;
        let drawn = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let alpha = fixed_alpha.unwrap_or(drawn);
        let (p, n, a) = family_targets(alpha);
        let mut raw = vec![0.0; N_COMPONENTS];
        for ((idx, alphas), total) in self.groups.iter().zip([p, n, a]) {
            let draws: Vec<f64> = alphas
                .iter()
                .map(|&shape| {
                    Gamma::new(shape, 1.0)
                        .map(|g| g.sample(rng))
                        .map_err(|e| DataError::InvalidConfig(e.to_string()))
                })
                .collect::<Result<_, _>>()?;
            let sum: f64 = draws.iter().sum();
            for (&i, d) in idx.iter().zip(draws) {
                raw[i] = total * d / sum;
            }
        }
        Ok((raw, alpha))
    }

    pub fn sample(&self, index: usize) -> Result<GeneratedSample, DataError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index as u64);
        let (mut raw, alpha) = self.draw_composition(&mut rng, None)?;
        if self.cfg.noise_wt_pct > 0.0 {
            let noise = Normal::new(0.0, self.cfg.noise_wt_pct)
                .map_err(|e| DataError::InvalidConfig(e.to_string()))?;
            for v in raw.iter_mut() {
                *v = (*v + noise.sample(&mut rng)).max(0.0);
            }
        }
        let composition = normalize(&raw).map_err(SimError::from)?;
        let sample = make_sample(composition, self.lib, self.sim, self.kcfg)?;
        Ok(GeneratedSample { sample, paraffinicity: alpha })
    }

    /// Noise-free composition for an explicit paraffinicity, using sample `index`'s stream.
    pub fn composition_at(&self, index: usize, alpha: f64) -> Result<Composition, DataError> {
        let (p, n, a) = family_targets(alpha);
        if !(p >= 0.0 && n >= 0.0 && a >= 0.0) {
            return Err(DataError::DegenerateConfig(format!("alpha = {alpha}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index as u64);
        let (raw, _) = self.draw_composition(&mut rng, Some(alpha))?;
        Ok(normalize(&raw).map_err(SimError::from)?)
    }

    pub fn generate(&self) -> Result<Vec<GeneratedSample>, DataError> {
        (0..self.cfg.n_samples)
            .into_par_iter()
            .map(|i| self.sample(i))
            .collect()
    }
}

/// Builds a sample whose curve and Watson K come from the simulator.
pub fn make_sample(
    composition: Composition,
    lib: &ComponentLibrary,
    sim: &SimulatorConfig,
    kcfg: &WatsonKConfig,
) -> Result<Sample, SimError> {
    let curve = simulate_curve(&composition, lib, sim)?;
    let watson_k = simulated_watson_k(&composition, lib, sim, kcfg)?.k;
    Ok(Sample { composition, curve, watson_k })
}

/// Generates the synthetic dataset with the default simulator settings.
pub fn generate(cfg: &GeneratorConfig, lib: &ComponentLibrary) -> Result<Vec<Sample>, DataError> {
    let sim = SimulatorConfig::default();
    let kcfg = WatsonKConfig::default();
    let gen = Generator::new(cfg, lib, &sim, &kcfg)?;
    Ok(gen.generate()?.into_iter().map(|g| g.sample).collect())
}

/// 80/20 train/test split with the training part cut into five folds.
pub fn split(samples: &[Sample], seed: u64) -> Result<DatasetSplit, DataError> {
    split_indices(samples.len(), seed)
}

pub fn split_indices(n: usize, seed: u64) -> Result<DatasetSplit, DataError> {
    if n < MIN_SAMPLES {
        return Err(DataError::TooFewSamples(n));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * TEST_FRACTION).round() as usize;
    let test_indices = perm[..n_test].to_vec();
    let train_indices = perm[n_test..].to_vec();
    let base = train_indices.len() / N_FOLDS;
    let extra = train_indices.len() % N_FOLDS;
    let mut folds = Vec::with_capacity(N_FOLDS);
    let mut start = 0;
    for f in 0..N_FOLDS {
        let len = base + usize::from(f < extra);
        folds.push(train_indices[start..start + len].to_vec());
        start += len;
    }
    Ok(DatasetSplit { train_indices, test_indices, folds })
}

fn dataset_header() -> String {
    let mut cols = vec!["sample_id".to_string()];
    cols.extend((1..=N_COMPONENTS).map(|i| format!("c_{i:02}")));
    cols.extend((1..=N_CURVE_POINTS).map(|j| format!("x_{j:02}")));
    cols.push("watson_k".into());
    cols.join(",")
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv_string(samples: &[Sample]) -> String {
    let mut out = dataset_header();
    out.push('\n');
    for (id, s) in samples.iter().enumerate() {
        out.push_str(&id.to_string());
        for v in s.composition.wt_pct().iter().chain(s.curve.temperatures_k()) {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        out.push(',');
        out.push_str(&fmt_num(s.watson_k));
        out.push('\n');
    }
    out
}

pub fn save(samples: &[Sample], path: &Path) -> Result<(), DataError> {
    fs::write(path, to_csv_string(samples)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn from_csv_str(text: &str, lib: &ComponentLibrary) -> Result<Vec<Sample>, DataError> {
    let n_comp = lib.len();
    let expected_cols = 1 + n_comp + N_CURVE_POINTS + 1;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let schema = |line: usize, message: String| DataError::SchemaMismatch { line, message };
    let violation = |line: usize, message: String| DataError::InvariantViolation { line, message };
    let Some((_, header)) = lines.next() else {
        return Err(schema(1, "empty dataset file".into()));
    };
    let header_cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if header_cols.len() != expected_cols {
        return Err(schema(
            1,
            format!("expected {expected_cols} columns, found {}", header_cols.len()),
        ));
    }
    if header.trim() != dataset_header() {
        return Err(schema(1, "unexpected column names".into()));
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != expected_cols {
            return Err(schema(
                line_no,
                format!("expected {expected_cols} columns, found {}", fields.len()),
            ));
        }
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| schema(line_no, format!("bad number `{s}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        let (comp, rest) = values.split_at(n_comp);
        let (curve, k) = rest.split_at(N_CURVE_POINTS);
        let composition =
            Composition::from_wt_pct(comp.to_vec()).map_err(|e| violation(line_no, e.to_string()))?;
        let curve = DistillationCurve::on_default_grid(curve.to_vec())
            .map_err(|e| violation(line_no, e.to_string()))?;
        let watson_k = k[0];
        if !(watson_k.is_finite() && watson_k > 0.0) {
            return Err(violation(line_no, format!("watson_k = {watson_k}")));
        }
        samples.push(Sample { composition, curve, watson_k });
    }
    Ok(samples)
}

pub fn load(path: &Path, lib: &ComponentLibrary) -> Result<Vec<Sample>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_csv_str(&text, lib)
}

/// Re-derives curve and Watson K through the simulator and compares.
pub fn check_sample(
    s: &Sample,
    lib: &ComponentLibrary,
    sim: &SimulatorConfig,
    kcfg: &WatsonKConfig,
) -> Result<(), SimError> {
    let fresh = make_sample(s.composition.clone(), lib, sim, kcfg)?;
    if fresh.curve != s.curve {
        return Err(SimError::InvalidCurve("curve differs from simulator output".into()));
    }
    if (fresh.watson_k - s.watson_k).abs() > 1e-9 {
        return Err(SimError::InvalidCurve(format!(
            "watson_k {} differs from simulated {}",
            s.watson_k, fresh.watson_k
        )));
    }
    Ok(())
}
