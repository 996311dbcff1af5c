//! Loss functions, the two-phase cross-training loop and 5-fold
//! cross-validation.
//!
//! Phase A updates the extractor and the composition head on
//! `lambda_comp * L_comp + lambda_res * L_res + lambda_sim * L_sim`. In guided
//! mode each phase-A step is followed by `watson_steps_per_cycle` phase-B
//! steps that update the extractor and the Watson head on `L_K`, each on a
//! fresh random mini-batch.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetSplit, Sample, N_FOLDS};
use crate::eval::{metrics, EvalError, MetricSet, MetricSummary, Scale};
use crate::model::{InputScaler, Model, ModelArchitecture};
use crate::nn::{adam_step, mse_loss, AdamConfig, NnError, ParamGroup, Tensor};
use crate::property::{ComponentLibrary, WatsonKConfig, N_COMPONENTS};
use crate::sim::{simulated_watson_k_raw, SimError, SimulatorConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite {term} loss in fold {fold}, epoch {epoch}")]
    NonFiniteLoss { term: &'static str, fold: usize, epoch: usize },
    #[error("split does not match the dataset: {0}")]
    InvalidSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Baseline,
    Guided,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::Guided => "guided",
        }
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "guided" => Ok(TrainMode::Guided),
            other => Err(format!("unknown mode `{other}` (expected baseline or guided)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Seeds parameter initialization and mini-batch order.
    pub seed: u64,
    /// Seeds the train/test/fold partition.
    pub split_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lambda_comp: f64,
    pub lambda_res: f64,
    pub lambda_sim: f64,
    pub watson_steps_per_cycle: usize,
    pub patience: usize,
    /// Sharpness (per wt%) of the softplus clamp applied before the simulator.
    pub softplus_sharpness: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Guided,
            seed: 0,
            split_seed: 0,
            epochs: 300,
            batch_size: 8,
            adam: AdamConfig::default(),
            lambda_comp: 0.1,
            lambda_res: 0.001,
            lambda_sim: 1.0,
            watson_steps_per_cycle: 2,
            patience: 30,
            softplus_sharpness: 20.0,
        }
    }
}

const CONFIG_KEYS: [&str; 15] = [
    "mode",
    "seed",
    "split_seed",
    "epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "lambda_comp",
    "lambda_res",
    "lambda_sim",
    "watson_steps_per_cycle",
    "patience",
    "softplus_sharpness",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        for (name, v) in [
            ("lambda_comp", self.lambda_comp),
            ("lambda_res", self.lambda_res),
            ("lambda_sim", self.lambda_sim),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.softplus_sharpness > 0.0 && self.softplus_sharpness.is_finite()) {
            return bad(format!("softplus_sharpness = {}", self.softplus_sharpness));
        }
        self.adam.validate()?;
        Ok(())
    }

    /// Surrogate loss weight actually applied; zero in baseline mode.
    pub fn effective_lambda_sim(&self) -> f64 {
        match self.mode {
            TrainMode::Baseline => 0.0,
            TrainMode::Guided => self.lambda_sim,
        }
    }

    pub fn with_mode(&self, mode: TrainMode) -> Self {
        Self { mode, ..self.clone() }
    }

    /// Parses the flat `key = value` format. Keys not present keep their
    /// defaults; `#` starts a comment; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| TrainError::Config { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if seen.contains(&key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            seen.push(key);
            fn num<T: FromStr>(v: &str, err: impl Fn(String) -> TrainError) -> Result<T, TrainError> {
                v.parse().map_err(|_| err(format!("cannot parse `{v}`")))
            }
            match key {
                "mode" => cfg.mode = value.parse().map_err(err)?,
                "seed" => cfg.seed = num(value, err)?,
                "split_seed" => cfg.split_seed = num(value, err)?,
                "epochs" => cfg.epochs = num(value, err)?,
                "batch_size" => cfg.batch_size = num(value, err)?,
                "learning_rate" => cfg.adam.learning_rate = num(value, err)?,
                "beta1" => cfg.adam.beta1 = num(value, err)?,
                "beta2" => cfg.adam.beta2 = num(value, err)?,
                "epsilon" => cfg.adam.epsilon = num(value, err)?,
                "lambda_comp" => cfg.lambda_comp = num(value, err)?,
                "lambda_res" => cfg.lambda_res = num(value, err)?,
                "lambda_sim" => cfg.lambda_sim = num(value, err)?,
                "watson_steps_per_cycle" => cfg.watson_steps_per_cycle = num(value, err)?,
                "patience" => cfg.patience = num(value, err)?,
                "softplus_sharpness" => cfg.softplus_sharpness = num(value, err)?,
                _ => unreachable!(),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes every field in the format read by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", self.adam.learning_rate);
        let _ = writeln!(s, "beta1 = {:?}", self.adam.beta1);
        let _ = writeln!(s, "beta2 = {:?}", self.adam.beta2);
        let _ = writeln!(s, "epsilon = {:?}", self.adam.epsilon);
        let _ = writeln!(s, "lambda_comp = {:?}", self.lambda_comp);
        let _ = writeln!(s, "lambda_res = {:?}", self.lambda_res);
        let _ = writeln!(s, "lambda_sim = {:?}", self.lambda_sim);
        let _ = writeln!(s, "watson_steps_per_cycle = {}", self.watson_steps_per_cycle);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "softplus_sharpness = {:?}", self.softplus_sharpness);
        s
    }
}

/// Simulator settings used inside `L_sim`.
#[derive(Debug, Clone, Default)]
pub struct SimContext {
    pub lib: ComponentLibrary,
    pub sim: SimulatorConfig,
    pub kcfg: WatsonKConfig,
}

/// `L_comp`: batch mean of the squared L2 composition error.
pub fn loss_comp(pred: &Tensor, truth: &Tensor) -> Result<(f64, Tensor), TrainError> {
    Ok(mse_loss(pred, truth)?)
}

fn expect_rows(pred: &Tensor, op: &'static str) -> Result<usize, TrainError> {
    match pred.shape() {
        [b, w] if *w == N_COMPONENTS && *b > 0 => Ok(*b),
        s => Err(NnError::ShapeMismatch { op, expected: vec![0, N_COMPONENTS], found: s.to_vec() }.into()),
    }
}

/// `L_res`: batch mean of `(100 - sum_j c_j)^2`.
pub fn loss_res(pred: &Tensor) -> Result<(f64, Tensor), TrainError> {
    let b = expect_rows(pred, "loss_res")?;
    let mut grad = Tensor::zeros(pred.shape());
    let mut total = 0.0;
    for (row, g) in pred.data().chunks_exact(N_COMPONENTS).zip(grad.data_mut().chunks_exact_mut(N_COMPONENTS)) {
        let r = 100.0 - row.iter().sum::<f64>();
        total += r * r;
        g.fill(-2.0 * r / b as f64);
    }
    Ok((total / b as f64, grad))
}

/// Smooth clamp at zero, `softplus(beta * x) / beta`, and its derivative.
pub fn soft_clamp(x: f64, beta: f64) -> (f64, f64) {
    let z = beta * x;
    let value = x.max(0.0) + (-z.abs()).exp().ln_1p() / beta;
    let slope = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
    (value, slope)
}

/// `L_sim`: batch mean of `(k - k_sim(C))^2` where each predicted row goes
/// through [`soft_clamp`], normalization and the simulator.
pub fn loss_sim(
    pred: &Tensor,
    truth_k: &[f64],
    ctx: &SimContext,
    sharpness: f64,
) -> Result<(f64, Tensor), TrainError> {
    let b = expect_rows(pred, "loss_sim")?;
    if truth_k.len() != b {
        return Err(NnError::ShapeMismatch { op: "loss_sim", expected: vec![b], found: vec![truth_k.len()] }.into());
    }
    let rows: Vec<Result<(f64, Vec<f64>), TrainError>> = pred
        .data()
        .par_chunks_exact(N_COMPONENTS)
        .zip(truth_k.par_iter())
        .map(|(row, &k)| {
            let (clamped, slopes): (Vec<f64>, Vec<f64>) = row.iter().map(|&x| soft_clamp(x, sharpness)).unzip();
            let s = simulated_watson_k_raw(&clamped, &ctx.lib, &ctx.sim, &ctx.kcfg)?;
            let d = s.k - k;
            let g = s
                .gradient
                .iter()
                .zip(&slopes)
                .map(|(gk, sl)| 2.0 * d * gk * sl / b as f64)
                .collect();
            Ok((d * d, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for r in rows {
        let (v, g) = r?;
        total += v;
        grad.extend(g);
    }
    Ok((total / b as f64, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// `L_K`: batch mean squared error of the Watson head, shape `(batch, 1)`.
pub fn loss_k(pred: &Tensor, truth: &Tensor) -> Result<(f64, Tensor), TrainError> {
    Ok(mse_loss(pred, truth)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub comp: f64,
    pub res: f64,
    /// Absent in baseline mode.
    pub sim: Option<f64>,
    pub total: f64,
}

/// Weighted prediction loss and its gradient with respect to the raw
/// composition output.
pub fn loss_pred(
    pred: &Tensor,
    truth: &Tensor,
    truth_k: &[f64],
    cfg: &TrainConfig,
    ctx: &SimContext,
) -> Result<(LossTerms, Tensor), TrainError> {
    let (comp, g_comp) = loss_comp(pred, truth)?;
    let (res, g_res) = loss_res(pred)?;
    let mut grad = g_comp.scale(cfg.lambda_comp);
    for (g, r) in grad.data_mut().iter_mut().zip(g_res.data()) {
        *g += cfg.lambda_res * r;
    }
    let mut total = cfg.lambda_comp * comp + cfg.lambda_res * res;
    let sim = match cfg.mode {
        TrainMode::Baseline => None,
        TrainMode::Guided => {
            let (v, g_sim) = loss_sim(pred, truth_k, ctx, cfg.softplus_sharpness)?;
            for (g, s) in grad.data_mut().iter_mut().zip(g_sim.data()) {
                *g += cfg.lambda_sim * s;
            }
            total += cfg.lambda_sim * v;
            Some(v)
        }
    };
    Ok((LossTerms { comp, res, sim, total }, grad))
}

/// Tensors for one mini-batch.
pub struct Batch {
    pub input: Tensor,
    pub composition: Tensor,
    pub watson_k: Vec<f64>,
}

impl Batch {
    pub fn new(model: &Model, samples: &[&Sample]) -> Result<Self, TrainError> {
        let curves: Vec<_> = samples.iter().map(|s| &s.curve).collect();
        let input = model.input_tensor(&curves)?;
        let comp: Vec<f64> = samples.iter().flat_map(|s| s.composition.wt_pct().iter().copied()).collect();
        let composition = Tensor::new(vec![samples.len(), N_COMPONENTS], comp)?;
        let watson_k = samples.iter().map(|s| s.watson_k).collect();
        Ok(Self { input, composition, watson_k })
    }

    pub fn k_tensor(&self) -> Result<Tensor, NnError> {
        Tensor::new(vec![self.watson_k.len(), 1], self.watson_k.clone())
    }
}

/// `loss_pred` on a batch without touching any gradient.
pub fn evaluate_loss_pred(model: &Model, batch: &Batch, cfg: &TrainConfig, ctx: &SimContext) -> Result<LossTerms, TrainError> {
    let trace = model.extract(&batch.input)?;
    let out = model.composition_forward(&trace.features)?;
    Ok(loss_pred(&out.output, &batch.composition, &batch.watson_k, cfg, ctx)?.0)
}

/// Accumulates the gradient of `loss_pred` into the extractor and
/// composition head without updating parameters.
pub fn composition_gradients(
    model: &mut Model,
    batch: &Batch,
    cfg: &TrainConfig,
    ctx: &SimContext,
) -> Result<LossTerms, TrainError> {
    let trace = model.extract(&batch.input)?;
    let head = model.composition_forward(&trace.features)?;
    let (terms, grad) = loss_pred(&head.output, &batch.composition, &batch.watson_k, cfg, ctx)?;
    let g_features = model.composition_backward(&head, &grad)?;
    model.extractor_backward(&trace, &g_features)?;
    Ok(terms)
}

/// Phase A: one Adam step on the extractor and composition head.
pub fn composition_step(
    model: &mut Model,
    batch: &Batch,
    cfg: &TrainConfig,
    ctx: &SimContext,
) -> Result<LossTerms, TrainError> {
    let terms = composition_gradients(model, batch, cfg, ctx)?;
    adam_step(&mut model.params, ParamGroup::Composition, &cfg.adam)?;
    adam_step(&mut model.params, ParamGroup::Extractor, &cfg.adam)?;
    Ok(terms)
}

/// Phase B: one Adam step on the extractor and Watson head.
pub fn watson_step(model: &mut Model, batch: &Batch, cfg: &TrainConfig) -> Result<f64, TrainError> {
    let trace = model.extract(&batch.input)?;
    let head = model.watson_forward(&trace.features)?;
    let (value, grad) = loss_k(&head.output, &batch.k_tensor()?)?;
    let g_features = model.watson_backward(&head, &grad)?;
    model.extractor_backward(&trace, &g_features)?;
    adam_step(&mut model.params, ParamGroup::Watson, &cfg.adam)?;
    adam_step(&mut model.params, ParamGroup::Extractor, &cfg.adam)?;
    Ok(value)
}

/// Per-epoch series for one fold. `l_sim` and `l_k` are absent in baseline mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub loss_pred: Vec<f64>,
    pub l_comp: Vec<f64>,
    pub l_res: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_sim: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_k: Option<Vec<f64>>,
    pub val_loss_pred: Vec<f64>,
}

impl LossHistory {
    fn new(mode: TrainMode) -> Self {
        let guided = mode == TrainMode::Guided;
        Self {
            l_sim: guided.then(Vec::new),
            l_k: guided.then(Vec::new),
            ..Self::default()
        }
    }

    pub fn epochs(&self) -> usize {
        self.loss_pred.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: LossHistory,
    pub validation: MetricSet,
    pub test: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub folds: Vec<FoldReport>,
    pub validation: MetricSummary,
    pub test: MetricSummary,
    /// Fold with the lowest best validation loss.
    pub best_fold: usize,
    /// Test metrics of the returned (best-fold) model.
    pub final_test: MetricSet,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

/// Result of training one fold.
pub struct FoldOutcome {
    pub model: Model,
    pub report: FoldReport,
}

fn fold_key(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn stream_rng(key: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Test-set composition predictions of a model, in wt%.
pub fn predict_rows(model: &Model, samples: &[&Sample]) -> Result<Vec<Vec<f64>>, TrainError> {
    let curves: Vec<_> = samples.iter().map(|s| &s.curve).collect();
    Ok(model.predict_composition_batch(&curves)?)
}

/// Pooled wt% metrics of a model on a set of samples.
pub fn evaluate(model: &Model, samples: &[&Sample]) -> Result<MetricSet, TrainError> {
    let truth: Vec<Vec<f64>> = samples.iter().map(|s| s.composition.wt_pct().to_vec()).collect();
    Ok(metrics(&truth, &predict_rows(model, samples)?, Scale::WtPct)?)
}

/// Model state before the first update of a fold: seeded initialization,
/// input scaler fitted on the training curves and output biases set to the
/// training means.
pub fn initial_model(arch: &ModelArchitecture, train: &[&Sample], seed: u64, fold: usize) -> Result<Model, TrainError> {
    let mut model = Model::new(arch.clone(), fold_key(seed, fold));
    model.scaler = InputScaler::fit(train.iter().map(|s| &s.curve), arch.input_len);
    let n = train.len() as f64;
    let comp_mean: Vec<f64> = (0..N_COMPONENTS)
        .map(|j| train.iter().map(|s| s.composition.wt_pct()[j]).sum::<f64>() / n)
        .collect();
    let k_mean = train.iter().map(|s| s.watson_k).sum::<f64>() / n;
    model.set_output_bias(&comp_mean, k_mean)?;
    Ok(model)
}

/// Trains one model with `train` samples, early-stopping on `val`.
pub fn train_fold(
    arch: &ModelArchitecture,
    samples: &[Sample],
    train: &[usize],
    val: &[usize],
    test: &[usize],
    fold: usize,
    cfg: &TrainConfig,
    ctx: &SimContext,
) -> Result<FoldOutcome, TrainError> {
    cfg.validate()?;
    let pick = |idx: &[usize]| -> Vec<&Sample> { idx.iter().map(|&i| &samples[i]).collect() };
    let (train_s, val_s, test_s) = (pick(train), pick(val), pick(test));
    if train_s.is_empty() || val_s.is_empty() {
        return Err(TrainError::InvalidSplit(format!("fold {fold} has an empty train or validation set")));
    }
    let key = fold_key(cfg.seed, fold);
    let mut model = initial_model(arch, &train_s, cfg.seed, fold)?;

    let mut order_rng = stream_rng(key, 10);
    let mut watson_rng = stream_rng(key, 11);
    let val_batch = Batch::new(&model, &val_s)?;
    let mut history = LossHistory::new(cfg.mode);
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut order: Vec<usize> = (0..train_s.len()).collect();
    let guided = cfg.mode == TrainMode::Guided;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let (mut lp, mut lc, mut lr, mut ls, mut lk) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for chunk in order.chunks(cfg.batch_size) {
            let batch_s: Vec<&Sample> = chunk.iter().map(|&i| train_s[i]).collect();
            let batch = Batch::new(&model, &batch_s)?;
            let terms = composition_step(&mut model, &batch, cfg, ctx)?;
            lp.push(terms.total);
            lc.push(terms.comp);
            lr.push(terms.res);
            ls.extend(terms.sim);
            if guided {
                for _ in 0..cfg.watson_steps_per_cycle {
                    let fresh: Vec<&Sample> = train_s.choose_multiple(&mut watson_rng, cfg.batch_size.min(train_s.len())).copied().collect();
                    let wb = Batch::new(&model, &fresh)?;
                    lk.push(watson_step(&mut model, &wb, cfg)?);
                }
            }
        }
        let finite = |term: &'static str, v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(TrainError::NonFiniteLoss { term, fold, epoch })
            }
        };
        history.loss_pred.push(finite("loss_pred", mean(&lp))?);
        history.l_comp.push(finite("L_comp", mean(&lc))?);
        history.l_res.push(finite("L_res", mean(&lr))?);
        if let Some(s) = history.l_sim.as_mut() {
            s.push(finite("L_sim", mean(&ls))?);
        }
        if let Some(k) = history.l_k.as_mut() {
            k.push(finite("L_K", if lk.is_empty() { 0.0 } else { mean(&lk) })?);
        }
        let val = finite("validation loss_pred", evaluate_loss_pred(&model, &val_batch, cfg, ctx)?.total)?;
        history.val_loss_pred.push(val);
        if val < best.0 {
            best = (val, epoch, model.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (best_val_loss, best_epoch, model) = best;
    let validation = evaluate(&model, &val_s)?;
    let test = if test_s.len() >= 2 { evaluate(&model, &test_s)? } else { validation };
    Ok(FoldOutcome {
        report: FoldReport { fold, epochs_run: history.epochs(), best_epoch, best_val_loss, history, validation, test },
        model,
    })
}

fn check_split(samples: &[Sample], split: &DatasetSplit) -> Result<(), TrainError> {
    let n = samples.len();
    if split.folds.len() != N_FOLDS {
        return Err(TrainError::InvalidSplit(format!("expected {N_FOLDS} folds, found {}", split.folds.len())));
    }
    let all = split.test_indices.iter().chain(split.folds.iter().flatten());
    let mut seen = vec![false; n];
    for &i in all {
        if i >= n || seen[i] {
            return Err(TrainError::InvalidSplit(format!("index {i} out of range or repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Trains one model per fold and aggregates validation and test metrics.
/// Returns the per-fold models in fold order with the report.
pub fn cross_validate(
    arch: &ModelArchitecture,
    samples: &[Sample],
    split: &DatasetSplit,
    cfg: &TrainConfig,
    ctx: &SimContext,
) -> Result<(Vec<Model>, TrainReport), TrainError> {
    check_split(samples, split)?;
    let start = Instant::now();
    let outcomes: Vec<FoldOutcome> = (0..split.folds.len())
        .into_par_iter()
        .map(|f| {
            train_fold(arch, samples, &split.fold_train(f), &split.folds[f], &split.test_indices, f, cfg, ctx)
        })
        .collect::<Result<_, _>>()?;
    let best_fold = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.report.best_val_loss.total_cmp(&b.1.report.best_val_loss))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let (models, folds): (Vec<Model>, Vec<FoldReport>) = outcomes.into_iter().map(|o| (o.model, o.report)).unzip();
    let val_sets: Vec<MetricSet> = folds.iter().map(|f| f.validation).collect();
    let test_sets: Vec<MetricSet> = folds.iter().map(|f| f.test).collect();
    let report = TrainReport {
        mode: cfg.mode,
        validation: MetricSummary::from_sets(&val_sets, Scale::WtPct),
        test: MetricSummary::from_sets(&test_sets, Scale::WtPct),
        final_test: folds[best_fold].test,
        best_fold,
        folds,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok((models, report))
}

/// Cross-validates and returns the best-validation fold's model.
pub fn train(
    arch: &ModelArchitecture,
    samples: &[Sample],
    split: &DatasetSplit,
    cfg: &TrainConfig,
    ctx: &SimContext,
) -> Result<(Model, TrainReport), TrainError> {
    let (mut models, report) = cross_validate(arch, samples, split, cfg, ctx)?;
    Ok((models.swap_remove(report.best_fold), report))
}

/// Checkpoint metadata written by the trainer. Wall-clock time is left out
/// so identical runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub report: TrainReport,
}

impl CheckpointMeta {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metadata serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::property::normalize;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn comp_loss_examples() {
        let truth = t(&[1, 25], normalize(&[1.0; 25]).unwrap().into_inner());
        assert_eq!(loss_comp(&truth, &truth).unwrap().0, 0.0);
        let mut p = truth.data().to_vec();
        p[0] += 10.0;
        p[7] -= 10.0;
        assert!((loss_comp(&t(&[1, 25], p), &truth).unwrap().0 - 200.0).abs() < 1e-12);
    }

    #[test]
    fn res_loss_examples() {
        let p = t(&[1, 25], vec![4.0; 25]);
        assert_eq!(loss_res(&p).unwrap().0, 0.0);
        let p = t(&[1, 25], vec![3.6; 25]);
        let (v, g) = loss_res(&p).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
        assert!(g.data().iter().all(|&x| x == g.data()[0]));
        assert!((g.data()[0] + 20.0).abs() < 1e-9);
        assert!(loss_res(&t(&[1, 3], vec![1.0; 3])).is_err());
    }

    #[test]
    fn k_loss_example() {
        let (v, _) = loss_k(&t(&[1, 1], vec![12.0]), &t(&[1, 1], vec![12.5])).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn soft_clamp_shape() {
        let (v, s) = soft_clamp(5.0, 20.0);
        assert!((v - 5.0).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
        let (v, s) = soft_clamp(-5.0, 20.0);
        assert!(v > 0.0 && v < 1e-40 && s < 1e-40);
        let (v, s) = soft_clamp(0.0, 20.0);
        assert!((v - 2f64.ln() / 20.0).abs() < 1e-15 && (s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = TrainConfig { mode: TrainMode::Baseline, epochs: 17, lambda_sim: 0.5, ..TrainConfig::default() };
        assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let parsed = TrainConfig::parse("# comment\n\nepochs = 5  # trailing\n").unwrap();
        assert_eq!(parsed.epochs, 5);
        assert!(matches!(TrainConfig::parse("bogus = 1"), Err(TrainError::Config { line: 1, .. })));
        assert!(matches!(TrainConfig::parse("epochs = 1\nepochs = 2"), Err(TrainError::Config { line: 2, .. })));
        assert!(matches!(TrainConfig::parse("epochs"), Err(TrainError::Config { .. })));
        assert!(matches!(TrainConfig::parse("lambda_res = -1"), Err(TrainError::InvalidConfig(_))));
        assert!(matches!(TrainConfig::parse("batch_size = 0"), Err(TrainError::InvalidConfig(_))));
        assert!(matches!(TrainConfig::parse("mode = fancy"), Err(TrainError::Config { .. })));
    }

    #[test]
    fn baseline_forces_zero_sim_weight() {
        let cfg = TrainConfig::default().with_mode(TrainMode::Baseline);
        assert_eq!(cfg.effective_lambda_sim(), 0.0);
        assert_eq!(TrainConfig::default().effective_lambda_sim(), 1.0);
    }
}
