//! Shared convolutional feature extractor with a composition head and a
//! Watson K head, plus the binary checkpoint format.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::{
    flatten, relu, relu_backward, residual_add, Conv1d, Dense, NnError, NnResult, ParamGroup,
    ParamStore, Tensor, CONV_KERNEL,
};
use crate::property::{normalize, Composition, N_COMPONENTS};
use crate::sim::{default_recovery_grid, DistillationCurve, N_CURVE_POINTS};

const CHECKPOINT_MAGIC: &[u8; 8] = b"NAPHCKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArchitecture {
    pub input_len: usize,
    pub channels: usize,
    pub residual_blocks: usize,
    pub feature_dim: usize,
    pub composition_hidden: usize,
    pub n_components: usize,
    pub watson_hidden: usize,
}

impl Default for ModelArchitecture {
    fn default() -> Self {
        Self {
            input_len: N_CURVE_POINTS,
            channels: 16,
            residual_blocks: 2,
            feature_dim: 64,
            composition_hidden: 64,
            n_components: N_COMPONENTS,
            watson_hidden: 32,
        }
    }
}

impl ModelArchitecture {
    /// Canonical text description; its hash is the checkpoint fingerprint.
    pub fn spec_text(&self) -> String {
        let c = self.channels;
        format!(
            "input: curve[{len}] standardized per point\n\
             extractor: conv1d(1->{c}, k{k}, same) relu; {blocks} x resblock[conv1d({c}->{c}, k{k}) relu conv1d({c}->{c}, k{k}) +skip relu]; flatten({flat}); dense({flat}->{f}) relu\n\
             composition: dense({f}->{ch}) relu; dense({ch}->{nc}) linear\n\
             watson: dense({f}->{wh}) relu; dense({wh}->1) linear\n",
            len = self.input_len,
            k = CONV_KERNEL,
            blocks = self.residual_blocks,
            flat = c * self.input_len,
            f = self.feature_dim,
            ch = self.composition_hidden,
            nc = self.n_components,
            wh = self.watson_hidden,
        )
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.spec_text().as_bytes()).into()
    }
}

/// Per-point standardization of the input curve.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputScaler {
    pub fn identity_like(len: usize) -> Self {
        Self { mean: vec![370.0; len], std: vec![50.0; len] }
    }

    pub fn fit<'a>(curves: impl IntoIterator<Item = &'a DistillationCurve>, len: usize) -> Self {
        let mut sum = vec![0.0; len];
        let mut sq = vec![0.0; len];
        let mut n = 0usize;
        for c in curves {
            for (j, t) in c.temperatures_k().iter().enumerate() {
                sum[j] += t;
                sq[j] += t * t;
            }
            n += 1;
        }
        if n == 0 {
            return Self::identity_like(len);
        }
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(1e-3))
            .collect();
        Self { mean, std }
    }
}

/// Activations retained by the extractor for its backward pass.
#[derive(Debug, Clone)]
pub struct ExtractorTrace {
    input: Tensor,
    stem_pre: Tensor,
    blocks: Vec<BlockTrace>,
    flat: Tensor,
    dense_pre: Tensor,
    pub features: Tensor,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    input: Tensor,
    pre1: Tensor,
    act1: Tensor,
    sum: Tensor,
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    input: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    pub output: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
struct Extractor {
    stem: Conv1d,
    blocks: Vec<(Conv1d, Conv1d)>,
    dense: Dense,
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    hidden: Dense,
    out: Dense,
}

impl Head {
    fn forward(&self, store: &ParamStore, features: &Tensor) -> NnResult<HeadTrace> {
        let hidden_pre = self.hidden.forward(store, features)?;
        let hidden = relu(&hidden_pre);
        let output = self.out.forward(store, &hidden)?;
        Ok(HeadTrace { input: features.clone(), hidden_pre, hidden, output })
    }

    fn backward(&self, store: &mut ParamStore, trace: &HeadTrace, grad_out: &Tensor) -> NnResult<Tensor> {
        let g = self.out.backward(store, &trace.hidden, grad_out)?;
        let g = relu_backward(&trace.hidden_pre, &g)?;
        self.hidden.backward(store, &trace.input, &g)
    }
}

/// The three networks f, e and w sharing one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: ModelArchitecture,
    pub params: ParamStore,
    pub scaler: InputScaler,
    extractor: Extractor,
    composition: Head,
    watson: Head,
}

impl Model {
    /// Fresh parameters with uniform He fan-in initialization and zero
    /// biases. Each group draws from its own ChaCha8 stream of `seed`.
    pub fn new(arch: ModelArchitecture, seed: u64) -> Self {
        let stream = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        };
        let mut params = ParamStore::new();
        let c = arch.channels;
        let g = ParamGroup::Extractor;
        let mut rng = stream(1);
        let stem = Conv1d::register(&mut params, &mut rng, "extractor.stem", g, 1, c);
        let blocks = (0..arch.residual_blocks)
            .map(|b| {
                (
                    Conv1d::register(&mut params, &mut rng, &format!("extractor.block{b}.conv1"), g, c, c),
                    Conv1d::register(&mut params, &mut rng, &format!("extractor.block{b}.conv2"), g, c, c),
                )
            })
            .collect();
        let dense = Dense::register(
            &mut params,
            &mut rng,
            "extractor.dense",
            g,
            c * arch.input_len,
            arch.feature_dim,
        );
        let g = ParamGroup::Composition;
        let mut rng = stream(2);
        let composition = Head {
            hidden: Dense::register(&mut params, &mut rng, "composition.hidden", g, arch.feature_dim, arch.composition_hidden),
            out: Dense::register(&mut params, &mut rng, "composition.out", g, arch.composition_hidden, arch.n_components),
        };
        let g = ParamGroup::Watson;
        let mut rng = stream(3);
        let watson = Head {
            hidden: Dense::register(&mut params, &mut rng, "watson.hidden", g, arch.feature_dim, arch.watson_hidden),
            out: Dense::register(&mut params, &mut rng, "watson.out", g, arch.watson_hidden, 1),
        };
        Self {
            scaler: InputScaler::identity_like(arch.input_len),
            arch,
            params,
            extractor: Extractor { stem, blocks, dense },
            composition,
            watson,
        }
    }

    pub fn architecture(&self) -> &ModelArchitecture {
        &self.arch
    }

    /// Sets the output biases of both heads, e.g. to training-set means.
    pub fn set_output_bias(&mut self, composition: &[f64], watson_k: f64) -> NnResult<()> {
        let b = self.params.value_mut(self.composition.out.bias);
        if b.len() != composition.len() {
            return Err(NnError::ShapeMismatch {
                op: "set_output_bias",
                expected: vec![b.len()],
                found: vec![composition.len()],
            });
        }
        b.data_mut().copy_from_slice(composition);
        self.params.value_mut(self.watson.out.bias).data_mut()[0] = watson_k;
        Ok(())
    }

    /// Standardized `(batch, 1, len)` input tensor.
    pub fn input_tensor(&self, curves: &[&DistillationCurve]) -> NnResult<Tensor> {
        let len = self.arch.input_len;
        let mut data = Vec::with_capacity(curves.len() * len);
        for c in curves {
            let t = c.temperatures_k();
            if t.len() != len {
                return Err(NnError::ShapeMismatch { op: "input", expected: vec![len], found: vec![t.len()] });
            }
            data.extend(
                t.iter()
                    .zip(self.scaler.mean.iter().zip(&self.scaler.std))
                    .map(|(x, (m, s))| (x - m) / s),
            );
        }
        Tensor::new(vec![curves.len(), 1, len], data)?.check_finite("input")
    }

    pub fn extract(&self, input: &Tensor) -> NnResult<ExtractorTrace> {
        let p = &self.params;
        let ex = &self.extractor;
        let stem_pre = ex.stem.forward(p, input)?;
        let mut h = relu(&stem_pre);
        let mut blocks = Vec::with_capacity(ex.blocks.len());
        for (c1, c2) in &ex.blocks {
            let pre1 = c1.forward(p, &h)?;
            let act1 = relu(&pre1);
            let pre2 = c2.forward(p, &act1)?;
            let sum = residual_add(&pre2, &h)?;
            let out = relu(&sum);
            blocks.push(BlockTrace { input: h, pre1, act1, sum });
            h = out;
        }
        let flat = flatten(h)?;
        let dense_pre = ex.dense.forward(p, &flat)?;
        let features = relu(&dense_pre);
        Ok(ExtractorTrace { input: input.clone(), stem_pre, blocks, flat, dense_pre, features })
    }

    /// Accumulates extractor gradients for an upstream feature gradient and
    /// returns the gradient with respect to the standardized input.
    pub fn extractor_backward(&mut self, trace: &ExtractorTrace, grad_features: &Tensor) -> NnResult<Tensor> {
        let ex = &self.extractor;
        let p = &mut self.params;
        let g = relu_backward(&trace.dense_pre, grad_features)?;
        let g = ex.dense.backward(p, &trace.flat, &g)?;
        let batch = trace.input.shape()[0];
        let mut g = g.reshape(&[batch, self.arch.channels, self.arch.input_len])?;
        for ((c1, c2), bt) in ex.blocks.iter().zip(&trace.blocks).rev() {
            let g_sum = relu_backward(&bt.sum, &g)?;
            let g_act1 = c2.backward(p, &bt.act1, &g_sum)?;
            let g_pre1 = relu_backward(&bt.pre1, &g_act1)?;
            let g_in = c1.backward(p, &bt.input, &g_pre1)?;
            g = residual_add(&g_in, &g_sum)?;
        }
        let g = relu_backward(&trace.stem_pre, &g)?;
        ex.stem.backward(p, &trace.input, &g)
    }

    pub fn composition_forward(&self, features: &Tensor) -> NnResult<HeadTrace> {
        self.composition.forward(&self.params, features)
    }

    pub fn watson_forward(&self, features: &Tensor) -> NnResult<HeadTrace> {
        self.watson.forward(&self.params, features)
    }

    /// Returns the gradient with respect to the features.
    pub fn composition_backward(&mut self, trace: &HeadTrace, grad_out: &Tensor) -> NnResult<Tensor> {
        self.composition.backward(&mut self.params, trace, grad_out)
    }

    pub fn watson_backward(&mut self, trace: &HeadTrace, grad_out: &Tensor) -> NnResult<Tensor> {
        self.watson.backward(&mut self.params, trace, grad_out)
    }

    /// Raw composition-head outputs `e(f(X))` (wt% scale, unconstrained).
    pub fn predict_composition_batch(&self, curves: &[&DistillationCurve]) -> NnResult<Vec<Vec<f64>>> {
        let x = self.input_tensor(curves)?;
        let tr = self.extract(&x)?;
        let out = self.composition_forward(&tr.features)?.output;
        Ok(out.data().chunks_exact(self.arch.n_components).map(<[f64]>::to_vec).collect())
    }

    pub fn predict_composition(&self, curve: &DistillationCurve) -> NnResult<Vec<f64>> {
        Ok(self.predict_composition_batch(&[curve])?.remove(0))
    }

    /// Watson K head output `w(f(X))`.
    pub fn predict_watson_k_batch(&self, curves: &[&DistillationCurve]) -> NnResult<Vec<f64>> {
        let x = self.input_tensor(curves)?;
        let tr = self.extract(&x)?;
        Ok(self.watson_forward(&tr.features)?.output.into_data())
    }

    pub fn predict_watson_k(&self, curve: &DistillationCurve) -> NnResult<f64> {
        Ok(self.predict_watson_k_batch(&[curve])?[0])
    }
}

/// Inference post-processing: clamp negative outputs at zero and rescale to
/// 100 wt%. Falls back to a uniform composition if every output is negative.
pub fn postprocess_composition(raw: &[f64]) -> Composition {
    let clamped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    normalize(&clamped).unwrap_or_else(|_| {
        normalize(&vec![1.0; raw.len()]).expect("uniform composition is valid")
    })
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("architecture fingerprint mismatch")]
    FingerprintMismatch,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    CorruptTensor(String),
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.shape().len() as u32);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CheckpointError::CorruptTensor(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(String, Tensor), CheckpointError> {
        let corrupt = CheckpointError::CorruptTensor;
        let name_len = self.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(self.take(name_len, "tensor name")?)
            .map_err(|_| corrupt("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = self.u32("tensor rank")? as usize;
        if rank == 0 || rank > 3 {
            return Err(corrupt(format!("tensor `{name}` has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u64("tensor dims")? as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| corrupt(format!("tensor `{name}` shape overflows")))?;
        let raw = self.take(count.checked_mul(8).ok_or_else(|| corrupt("size overflow".into()))?, &name)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let t = Tensor::new(dims, data).map_err(|e| corrupt(e.to_string()))?;
        Ok((name, t))
    }
}

/// Serializes parameters, scaler and optional Adam state. `meta` is an
/// opaque UTF-8 blob (the trainer stores a JSON config echo there).
pub fn checkpoint_bytes(model: &Model, meta: &str, include_optimizer: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    out.extend_from_slice(&model.arch.fingerprint());
    put_u32(&mut out, meta.len() as u32);
    out.extend_from_slice(meta.as_bytes());
    let params = model.params.params();
    put_u32(&mut out, (params.len() + 2) as u32);
    put_tensor(&mut out, "scaler.mean", &Tensor::new(vec![model.scaler.mean.len()], model.scaler.mean.clone()).unwrap());
    put_tensor(&mut out, "scaler.std", &Tensor::new(vec![model.scaler.std.len()], model.scaler.std.clone()).unwrap());
    for p in params {
        put_tensor(&mut out, &p.name, &p.value);
    }
    out.push(u8::from(include_optimizer));
    if include_optimizer {
        for g in ParamGroup::ALL {
            out.extend_from_slice(&model.params.step_count(g).to_le_bytes());
        }
        for p in params {
            put_tensor(&mut out, &format!("adam.m.{}", p.name), &p.first_moment);
            put_tensor(&mut out, &format!("adam.v.{}", p.name), &p.second_moment);
        }
    }
    out
}

pub fn model_from_bytes(bytes: &[u8], arch: &ModelArchitecture) -> Result<(Model, String), CheckpointError> {
    let corrupt = CheckpointError::CorruptTensor;
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    if r.take(32, "fingerprint")? != arch.fingerprint() {
        return Err(CheckpointError::FingerprintMismatch);
    }
    let meta_len = r.u32("meta length")? as usize;
    let meta = std::str::from_utf8(r.take(meta_len, "meta")?)
        .map_err(|_| corrupt("metadata is not UTF-8".into()))?
        .to_string();

    let mut model = Model::new(arch.clone(), 0);
    let n = r.u32("tensor count")? as usize;
    if n != model.params.params().len() + 2 {
        return Err(corrupt(format!("expected {} tensors, found {n}", model.params.params().len() + 2)));
    }
    let expect = |r: &mut Reader, name: &str, shape: &[usize]| -> Result<Tensor, CheckpointError> {
        let (found, t) = r.tensor()?;
        if found != name || t.shape() != shape {
            return Err(corrupt(format!(
                "expected `{name}` {shape:?}, found `{found}` {:?}",
                t.shape()
            )));
        }
        if t.data().iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("non-finite value in `{name}`")));
        }
        Ok(t)
    };
    let len = arch.input_len;
    model.scaler.mean = expect(&mut r, "scaler.mean", &[len])?.into_data();
    model.scaler.std = expect(&mut r, "scaler.std", &[len])?.into_data();
    let specs: Vec<(String, Vec<usize>)> = model
        .params
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.shape().to_vec()))
        .collect();
    for (p, (name, shape)) in model.params.params_mut().iter_mut().zip(&specs) {
        p.value = expect(&mut r, name, shape)?;
    }
    let flag = r.take(1, "optimizer flag")?[0];
    match flag {
        0 => {}
        1 => {
            for g in ParamGroup::ALL {
                let steps = r.u64("step counter")?;
                model.params.set_step_count(g, steps);
            }
            for (p, (name, shape)) in model.params.params_mut().iter_mut().zip(&specs) {
                p.first_moment = expect(&mut r, &format!("adam.m.{name}"), shape)?;
                p.second_moment = expect(&mut r, &format!("adam.v.{name}"), shape)?;
            }
        }
        other => return Err(corrupt(format!("bad optimizer flag {other}"))),
    }
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((model, meta))
}

pub fn save_checkpoint(model: &Model, meta: &str, include_optimizer: bool, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, checkpoint_bytes(model, meta, include_optimizer))
        .map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path, arch: &ModelArchitecture) -> Result<(Model, String), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    model_from_bytes(&bytes, arch)
}

/// Checks that a curve uses the recovery grid the model was built for.
pub fn check_default_grid(curve: &DistillationCurve) -> Result<(), NnError> {
    let grid = default_recovery_grid();
    if curve.recovery_fractions().len() != grid.len()
        || curve.recovery_fractions().iter().zip(&grid).any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(NnError::ShapeMismatch {
            op: "recovery grid",
            expected: vec![grid.len()],
            found: vec![curve.recovery_fractions().len()],
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(offset: f64) -> DistillationCurve {
        DistillationCurve::on_default_grid((0..30).map(|j| 300.0 + offset + 5.0 * j as f64).collect()).unwrap()
    }

    #[test]
    fn output_dimensions() {
        let m = Model::new(ModelArchitecture::default(), 0);
        let c = curve(0.0);
        assert_eq!(m.predict_composition(&c).unwrap().len(), 25);
        assert!(m.predict_watson_k(&c).unwrap().is_finite());
        let x = m.input_tensor(&[&c]).unwrap();
        assert_eq!(m.extract(&x).unwrap().features.shape(), &[1, 64]);
        let n = m.params.parameter_count();
        assert!(n > 30_000 && n < 60_000, "{n} parameters");
    }

    #[test]
    fn identical_curves_identical_predictions() {
        let m = Model::new(ModelArchitecture::default(), 3);
        let (a, b) = (curve(1.0), curve(1.0));
        let p = m.predict_composition_batch(&[&a, &b]).unwrap();
        assert_eq!(p[0], p[1]);
        let k = m.predict_watson_k_batch(&[&a, &b]).unwrap();
        assert_eq!(k[0].to_bits(), k[1].to_bits());
        assert_eq!(p[0], m.predict_composition(&a).unwrap());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = Model::new(ModelArchitecture::default(), 5);
        let b = Model::new(ModelArchitecture::default(), 5);
        let c = Model::new(ModelArchitecture::default(), 6);
        assert_eq!(a, b);
        assert_ne!(a.params.digest(ParamGroup::Extractor), c.params.digest(ParamGroup::Extractor));
    }

    #[test]
    fn shared_extractor_feeds_composition_head() {
        let mut m = Model::new(ModelArchitecture::default(), 1);
        let c = curve(2.0);
        let before = m.predict_composition(&c).unwrap();
        let id = m.params.id_of("extractor.dense.bias").unwrap();
        for v in m.params.value_mut(id).data_mut() {
            *v += 0.05;
        }
        assert_ne!(before, m.predict_composition(&c).unwrap());
    }

    #[test]
    fn postprocess_sums_to_100() {
        let mut raw = vec![4.0; 25];
        raw[0] = -3.0;
        let c = postprocess_composition(&raw);
        assert_eq!(c.wt_pct()[0], 0.0);
        assert!((c.wt_pct().iter().sum::<f64>() - 100.0).abs() < 1e-9);
        let c = postprocess_composition(&[-1.0; 25]);
        assert!((c.wt_pct()[3] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = Model::new(ModelArchitecture::default(), 2);
        m.scaler = InputScaler::fit([&curve(0.0), &curve(10.0)], 30);
        m.params.set_step_count(ParamGroup::Watson, 7);
        for with_opt in [false, true] {
            let bytes = checkpoint_bytes(&m, "{\"seed\":2}", with_opt);
            let (back, meta) = model_from_bytes(&bytes, &ModelArchitecture::default()).unwrap();
            assert_eq!(meta, "{\"seed\":2}");
            assert_eq!(back.scaler, m.scaler);
            assert_eq!(checkpoint_bytes(&back, &meta, with_opt), bytes);
            if with_opt {
                assert_eq!(back.params.step_count(ParamGroup::Watson), 7);
            }
        }
    }

    #[test]
    fn checkpoint_guards() {
        let m = Model::new(ModelArchitecture::default(), 2);
        let bytes = checkpoint_bytes(&m, "", true);
        let other = ModelArchitecture { channels: 8, ..Default::default() };
        assert!(matches!(model_from_bytes(&bytes, &other), Err(CheckpointError::FingerprintMismatch)));
        for cut in [10, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                model_from_bytes(&bytes[..cut], &ModelArchitecture::default()),
                Err(CheckpointError::CorruptTensor(_))
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            model_from_bytes(&extra, &ModelArchitecture::default()),
            Err(CheckpointError::CorruptTensor(_))
        ));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(model_from_bytes(&bad, &ModelArchitecture::default()).is_err());
    }
}
