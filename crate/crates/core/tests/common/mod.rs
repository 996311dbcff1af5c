//! Shared finite-difference oracles and fixtures for the integration tests.
#![allow(dead_code)]

use naphtha::data::{self, GeneratorConfig, Sample};
use naphtha::model::{Model, ModelArchitecture};
use naphtha::nn::{relu, relu_backward, residual_add, Conv1d, Dense, ParamGroup, ParamStore, Tensor};
use naphtha::property::{normalize, ComponentLibrary};
use naphtha::train::{loss_comp, loss_k, loss_pred, loss_res, loss_sim, SimContext, TrainConfig, TrainMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAYER_TOL: f64 = 1e-5;
pub const SIM_TOL: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative error with a small absolute floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    rel_err_floor(analytic, numeric, 1e-6)
}

pub fn rel_err_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference of `f` at `x[i]`.
pub fn central(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let x0 = x[i];
    x[i] = x0 + h;
    let up = f(x);
    x[i] = x0 - h;
    let down = f(x);
    x[i] = x0;
    (up - down) / (2.0 * h)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Inner product used to turn a tensor output into a scalar loss.
pub fn contract(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Outcome of one check family.
#[derive(Debug, Default, Clone)]
pub struct GradReport {
    pub cases: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl GradReport {
    fn record(&mut self, label: &str, case: usize, analytic: f64, numeric: f64, tol: f64) {
        self.record_floor(label, case, analytic, numeric, tol, 1e-6);
    }

    fn record_floor(&mut self, label: &str, case: usize, analytic: f64, numeric: f64, tol: f64, floor: f64) {
        let e = rel_err_floor(analytic, numeric, floor);
        self.worst = self.worst.max(e);
        if e > tol {
            self.failures.push(format!("{label} case {case}: analytic {analytic:e} vs numeric {numeric:e} (rel {e:e})"));
        }
    }

    pub fn merge(&mut self, other: GradReport) {
        self.cases += other.cases;
        self.worst = self.worst.max(other.worst);
        self.failures.extend(other.failures);
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks every parameter entry of `store` and every input entry against
/// central differences of the scalar `loss`.
fn check_store(
    report: &mut GradReport,
    label: &str,
    case: usize,
    store: &mut ParamStore,
    input: &mut Tensor,
    grad_input: &Tensor,
    tol: f64,
    loss: &dyn Fn(&ParamStore, &Tensor) -> f64,
) {
    let h = 1e-5;
    let analytic: Vec<Vec<f64>> = store.params().iter().map(|p| p.grad.data().to_vec()).collect();
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &g) in grads.iter().enumerate() {
            let orig = store.params()[pi].value.data()[j];
            store.params_mut()[pi].value.data_mut()[j] = orig + h;
            let up = loss(store, input);
            store.params_mut()[pi].value.data_mut()[j] = orig - h;
            let down = loss(store, input);
            store.params_mut()[pi].value.data_mut()[j] = orig;
            report.record(&format!("{label} param {}", store.params()[pi].name), case, g, (up - down) / (2.0 * h), tol);
        }
    }
    for j in 0..input.len() {
        let orig = input.data()[j];
        input.data_mut()[j] = orig + h;
        let up = loss(store, input);
        input.data_mut()[j] = orig - h;
        let down = loss(store, input);
        input.data_mut()[j] = orig;
        report.record(&format!("{label} input"), case, grad_input.data()[j], (up - down) / (2.0 * h), tol);
    }
}

pub fn dense_checks(cases: usize, seed: u64) -> GradReport {
    let mut r = rng(seed);
    let mut report = GradReport::default();
    for case in 0..cases {
        let (b, din, dout) = (r.random_range(1..4), r.random_range(1..9), r.random_range(1..9));
        let mut store = ParamStore::new();
        let layer = Dense::register(&mut store, &mut r, "d", ParamGroup::Extractor, din, dout);
        let bias = random_tensor(&mut r, &[dout], 1.0);
        *store.value_mut(layer.bias) = bias;
        let mut x = random_tensor(&mut r, &[b, din], 2.0);
        let w = random_tensor(&mut r, &[b, dout], 1.0);
        let gx = layer.backward(&mut store, &x, &w).unwrap();
        let loss = |s: &ParamStore, x: &Tensor| contract(&layer.forward(s, x).unwrap(), &w);
        check_store(&mut report, "dense", case, &mut store, &mut x, &gx, LAYER_TOL, &loss);
        report.cases += 1;
    }
    report
}

pub fn conv_checks(cases: usize, seed: u64) -> GradReport {
    let mut r = rng(seed);
    let mut report = GradReport::default();
    for case in 0..cases {
        let (b, cin, cout, len) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4), r.random_range(1..12));
        let mut store = ParamStore::new();
        let layer = Conv1d::register(&mut store, &mut r, "c", ParamGroup::Extractor, cin, cout);
        *store.value_mut(layer.bias) = random_tensor(&mut r, &[cout], 1.0);
        let mut x = random_tensor(&mut r, &[b, cin, len], 2.0);
        let w = random_tensor(&mut r, &[b, cout, len], 1.0);
        let gx = layer.backward(&mut store, &x, &w).unwrap();
        let loss = |s: &ParamStore, x: &Tensor| contract(&layer.forward(s, x).unwrap(), &w);
        check_store(&mut report, "conv1d", case, &mut store, &mut x, &gx, LAYER_TOL, &loss);
        report.cases += 1;
    }
    report
}

/// ReLU and the residual skip-add composed, with inputs kept off the kink.
pub fn activation_checks(cases: usize, seed: u64) -> GradReport {
    let mut r = rng(seed);
    let mut report = GradReport::default();
    for case in 0..cases {
        let n = r.random_range(1..20);
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = r.random_range(0.05..2.0);
                if r.random_bool(0.5) { v } else { -v }
            })
            .collect();
        let skip = random_tensor(&mut r, &[1, 1, n], 0.01);
        let w = random_tensor(&mut r, &[1, 1, n], 1.0);
        let xt = Tensor::new(vec![1, 1, n], x.clone()).unwrap();
        let g_sum = relu_backward(&residual_add(&xt, &skip).unwrap(), &w).unwrap();
        let f = |v: &[f64]| {
            let t = Tensor::new(vec![1, 1, n], v.to_vec()).unwrap();
            contract(&relu(&residual_add(&t, &skip).unwrap()), &w)
        };
        let mut xs = x.clone();
        for i in 0..n {
            let num = central(&mut xs, i, 1e-6, f);
            report.record("relu+residual", case, g_sum.data()[i], num, LAYER_TOL);
        }
        report.cases += 1;
    }
    report
}

/// A reduced architecture so every parameter can be perturbed.
pub fn small_architecture() -> ModelArchitecture {
    ModelArchitecture {
        input_len: 30,
        channels: 3,
        residual_blocks: 2,
        feature_dim: 6,
        composition_hidden: 5,
        n_components: 25,
        watson_hidden: 4,
    }
}

/// End-to-end backward pass through extractor and both heads.
pub fn model_checks(cases: usize, seed: u64) -> GradReport {
    let mut r = rng(seed);
    let mut report = GradReport::default();
    for case in 0..cases {
        let arch = small_architecture();
        let mut model = Model::new(arch.clone(), seed + case as u64);
        for p in model.params.params_mut() {
            if p.name.ends_with(".bias") {
                let n = p.value.len();
                for j in 0..n {
                    p.value.data_mut()[j] = 0.3 + 0.1 * ((case + j) % 3) as f64;
                }
            }
        }
        let b = r.random_range(1..3);
        let mut x = random_tensor(&mut r, &[b, 1, arch.input_len], 1.5);
        let wc = random_tensor(&mut r, &[b, arch.n_components], 1.0);
        let wk = random_tensor(&mut r, &[b, 1], 1.0);
        let tr = model.extract(&x).unwrap();
        let hc = model.composition_forward(&tr.features).unwrap();
        let hk = model.watson_forward(&tr.features).unwrap();
        let mut gf = model.composition_backward(&hc, &wc).unwrap();
        let gk = model.watson_backward(&hk, &wk).unwrap();
        for (a, b) in gf.data_mut().iter_mut().zip(gk.data()) {
            *a += b;
        }
        let gx = model.extractor_backward(&tr, &gf).unwrap();
        let probe = model.clone();
        let loss = |s: &ParamStore, x: &Tensor| {
            let mut m = probe.clone();
            m.params = s.clone();
            let tr = m.extract(x).unwrap();
            contract(&m.composition_forward(&tr.features).unwrap().output, &wc)
                + contract(&m.watson_forward(&tr.features).unwrap().output, &wk)
        };
        check_store(&mut report, "model", case, &mut model.params, &mut x, &gx, LAYER_TOL, &loss);
        report.cases += 1;
    }
    report
}

fn truth_batch(r: &mut impl Rng, b: usize) -> (Tensor, Vec<f64>) {
    let mut data = Vec::new();
    for _ in 0..b {
        let raw: Vec<f64> = (0..25).map(|_| r.random_range(0.1..5.0)).collect();
        data.extend(normalize(&raw).unwrap().into_inner());
    }
    let k = (0..b).map(|_| r.random_range(11.5..12.5)).collect();
    (Tensor::new(vec![b, 25], data).unwrap(), k)
}

fn pred_batch(r: &mut impl Rng, truth: &Tensor, spread: f64) -> Tensor {
    let data = truth.data().iter().map(|c| c + r.random_range(-spread..spread)).collect();
    Tensor::new(truth.shape().to_vec(), data).unwrap()
}

fn check_vector(
    report: &mut GradReport,
    label: &str,
    case: usize,
    x: &Tensor,
    grad: &Tensor,
    h: f64,
    tol: f64,
    f: impl Fn(&Tensor) -> f64,
) {
    // entries far below the vector's scale are compared against that scale
    let floor = grad.data().iter().fold(1e-6f64, |m, g| m.max(1e-3 * g.abs()));
    let mut v = x.data().to_vec();
    for i in 0..v.len() {
        let num = central(&mut v, i, h, |d| f(&Tensor::new(x.shape().to_vec(), d.to_vec()).unwrap()));
        report.record_floor(label, case, grad.data()[i], num, tol, floor);
    }
}

/// `L_comp`, `L_res`, `L_K` and the baseline `loss_pred`.
pub fn loss_checks(cases: usize, seed: u64) -> GradReport {
    let mut r = rng(seed);
    let mut report = GradReport::default();
    let ctx = SimContext::default();
    let baseline = TrainConfig { mode: TrainMode::Baseline, ..TrainConfig::default() };
    for case in 0..cases {
        let b = r.random_range(1..4);
        let (truth, k) = truth_batch(&mut r, b);
        let pred = pred_batch(&mut r, &truth, 3.0);
        let (_, g) = loss_comp(&pred, &truth).unwrap();
        check_vector(&mut report, "loss_comp", case, &pred, &g, 1e-5, LAYER_TOL, |p| loss_comp(p, &truth).unwrap().0);
        let (_, g) = loss_res(&pred).unwrap();
        check_vector(&mut report, "loss_res", case, &pred, &g, 1e-5, LAYER_TOL, |p| loss_res(p).unwrap().0);
        let kt = Tensor::new(vec![b, 1], k.clone()).unwrap();
        let kp = Tensor::new(vec![b, 1], k.iter().map(|v| v + r.random_range(-0.5..0.5)).collect()).unwrap();
        let (_, g) = loss_k(&kp, &kt).unwrap();
        check_vector(&mut report, "loss_k", case, &kp, &g, 1e-6, LAYER_TOL, |p| loss_k(p, &kt).unwrap().0);
        let (_, g) = loss_pred(&pred, &truth, &k, &baseline, &ctx).unwrap();
        check_vector(&mut report, "loss_pred baseline", case, &pred, &g, 1e-5, LAYER_TOL, |p| {
            loss_pred(p, &truth, &k, &baseline, &ctx).unwrap().0.total
        });
        report.cases += 4;
    }
    report
}

/// `L_sim` and the guided `loss_pred` through clamp, normalization and the
/// simulator. Some predicted entries are negative to exercise the clamp.
pub fn simulator_chain_checks(cases: usize, seed: u64) -> GradReport {
    let mut r = rng(seed);
    let mut report = GradReport::default();
    let ctx = SimContext::default();
    let guided = TrainConfig::default();
    for case in 0..cases {
        let b = r.random_range(1..3);
        let (truth, k) = truth_batch(&mut r, b);
        let pred = pred_batch(&mut r, &truth, 1.5);
        let beta = guided.softplus_sharpness;
        let (_, g) = loss_sim(&pred, &k, &ctx, beta).unwrap();
        check_vector(&mut report, "loss_sim", case, &pred, &g, 1e-4, SIM_TOL, |p| loss_sim(p, &k, &ctx, beta).unwrap().0);
        if case % 4 == 0 {
            let (_, g) = loss_pred(&pred, &truth, &k, &guided, &ctx).unwrap();
            check_vector(&mut report, "loss_pred guided", case, &pred, &g, 1e-4, SIM_TOL, |p| {
                loss_pred(p, &truth, &k, &guided, &ctx).unwrap().0.total
            });
            report.cases += 1;
        }
        report.cases += 1;
    }
    report
}

/// Small deterministic dataset from the default generator.
pub fn micro_dataset(n: usize, seed: u64) -> Vec<Sample> {
    let cfg = GeneratorConfig { n_samples: n, seed, ..GeneratorConfig::default() };
    data::generate(&cfg, &ComponentLibrary::default()).unwrap()
}
