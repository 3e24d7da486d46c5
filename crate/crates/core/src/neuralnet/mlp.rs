//! Two-hidden-layer tanh perceptron trained by scaled conjugate gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ScalingSpec;
use crate::error::{Error, Result};
use crate::model::{check_len, Regressor, Table};
use crate::rng;

/// Dense layer in persisted form: `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkRepr {
    layer_sizes: [usize; 4],
    layers: Vec<DenseLayer>,
}

/// `y = W3 tanh(W2 tanh(W1 x + b1) + b2) + b3`, parameters stored flat as
/// `[W1, b1, W2, b2, W3, b3]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetworkRepr", try_from = "NetworkRepr")]
pub struct MlpNetwork {
    sizes: [usize; 4],
    params: Vec<f64>,
}

impl From<MlpNetwork> for NetworkRepr {
    fn from(net: MlpNetwork) -> Self {
        let layers = (0..3)
            .map(|l| {
                let (w, b) = net.layer(l);
                DenseLayer {
                    inputs: net.sizes[l],
                    outputs: net.sizes[l + 1],
                    weights: w.to_vec(),
                    biases: b.to_vec(),
                }
            })
            .collect();
        NetworkRepr {
            layer_sizes: net.sizes,
            layers,
        }
    }
}

impl TryFrom<NetworkRepr> for MlpNetwork {
    type Error = Error;

    fn try_from(r: NetworkRepr) -> Result<Self> {
        if r.layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        check_len(3, r.layers.len())?;
        let mut params: Vec<f64> = Vec::new();
        for (l, layer) in r.layers.iter().enumerate() {
            let (i, o) = (r.layer_sizes[l], r.layer_sizes[l + 1]);
            check_len(i, layer.inputs)?;
            check_len(o, layer.outputs)?;
            let n = i.checked_mul(o).ok_or_else(|| Error::invalid("layer too large"))?;
            check_len(n, layer.weights.len())?;
            check_len(o, layer.biases.len())?;
            params.extend(&layer.weights);
            params.extend(&layer.biases);
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(MlpNetwork {
            sizes: r.layer_sizes,
            params,
        })
    }
}

fn param_count(sizes: &[usize; 4]) -> usize {
    (0..3).map(|l| sizes[l + 1] * (sizes[l] + 1)).sum()
}

fn offsets(sizes: &[usize; 4]) -> [usize; 4] {
    let mut o = [0; 4];
    for l in 0..3 {
        o[l + 1] = o[l] + sizes[l + 1] * (sizes[l] + 1);
    }
    o
}

impl MlpNetwork {
    /// Zero-initialized network.
    pub fn zeros(layer_sizes: [usize; 4]) -> Result<Self> {
        if layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("layer sizes must be positive: {layer_sizes:?}")));
        }
        Ok(MlpNetwork {
            sizes: layer_sizes,
            params: vec![0.0; param_count(&layer_sizes)],
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn random(layer_sizes: [usize; 4], seed: u64) -> Result<Self> {
        let mut net = MlpNetwork::zeros(layer_sizes)?;
        let mut r = rng::substream(seed, "init");
        let off = offsets(&layer_sizes);
        for l in 0..3 {
            let bound = 1.0 / (layer_sizes[l] as f64).sqrt();
            for v in &mut net.params[off[l]..off[l + 1]] {
                *v = r.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_params(layer_sizes: [usize; 4], params: Vec<f64>) -> Result<Self> {
        let net = MlpNetwork::zeros(layer_sizes)?;
        check_len(net.params.len(), params.len())?;
        Ok(MlpNetwork {
            sizes: layer_sizes,
            params,
        })
    }

    pub fn layer_sizes(&self) -> [usize; 4] {
        self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weights (row-major) and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = offsets(&self.sizes);
        let nw = self.sizes[l] * self.sizes[l + 1];
        let s = &self.params[off[l]..off[l + 1]];
        s.split_at(nw)
    }

    /// Output for one scaled input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.sizes[0], x.len())?;
        let mut ws = Workspace::new(&self.sizes);
        forward_into(&self.sizes, &self.params, x, &mut ws);
        Ok(ws.out.clone())
    }
}

struct Workspace {
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
}

impl Workspace {
    fn new(s: &[usize; 4]) -> Self {
        Workspace {
            h1: vec![0.0; s[1]],
            h2: vec![0.0; s[2]],
            out: vec![0.0; s[3]],
            d1: vec![0.0; s[1]],
            d2: vec![0.0; s[2]],
            d3: vec![0.0; s[3]],
        }
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * n..(j + 1) * n];
        *o = b[j] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

fn forward_into(s: &[usize; 4], p: &[f64], x: &[f64], ws: &mut Workspace) {
    let off = offsets(s);
    let split = |l: usize| p[off[l]..off[l + 1]].split_at(s[l] * s[l + 1]);
    let (w1, b1) = split(0);
    let (w2, b2) = split(1);
    let (w3, b3) = split(2);
    affine(w1, b1, x, &mut ws.h1);
    ws.h1.iter_mut().for_each(|v| *v = v.tanh());
    affine(w2, b2, &ws.h1, &mut ws.h2);
    ws.h2.iter_mut().for_each(|v| *v = v.tanh());
    affine(w3, b3, &ws.h2, &mut ws.out);
}

/// Sum of squared errors over `(inputs, targets)`; accumulates its gradient
/// into `grad` when given (which must be zeroed by the caller).
fn sse_grad(
    s: &[usize; 4],
    p: &[f64],
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let off = offsets(s);
    let mut ws = Workspace::new(s);
    let mut total = 0.0;
    let w2 = &p[off[1]..off[1] + s[1] * s[2]];
    let w3 = &p[off[2]..off[2] + s[2] * s[3]];
    for (x, t) in inputs.iter().zip(targets) {
        forward_into(s, p, x, &mut ws);
        for k in 0..s[3] {
            let e = ws.out[k] - t[k];
            total += e * e;
            ws.d3[k] = 2.0 * e;
        }
        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        for j in 0..s[2] {
            let back: f64 = (0..s[3]).map(|k| ws.d3[k] * w3[k * s[2] + j]).sum();
            ws.d2[j] = back * (1.0 - ws.h2[j] * ws.h2[j]);
        }
        for j in 0..s[1] {
            let back: f64 = (0..s[2]).map(|k| ws.d2[k] * w2[k * s[1] + j]).sum();
            ws.d1[j] = back * (1.0 - ws.h1[j] * ws.h1[j]);
        }
        let layers: [(&[f64], &[f64]); 3] = [(&ws.d1, x), (&ws.d2, &ws.h1), (&ws.d3, &ws.h2)];
        for (l, (delta, input)) in layers.into_iter().enumerate() {
            let (gw, gb) = g[off[l]..off[l + 1]].split_at_mut(s[l] * s[l + 1]);
            let n = input.len();
            for (j, &d) in delta.iter().enumerate() {
                gb[j] += d;
                for (gv, &a) in gw[j * n..(j + 1) * n].iter_mut().zip(input) {
                    *gv += d * a;
                }
            }
        }
    }
    total
}

/// SSE of `net` on a scaled batch and its gradient with respect to every
/// parameter, in the flat layout of [`MlpNetwork::params`].
pub fn mlp_gradient(net: &MlpNetwork, batch: &Table) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len(net.sizes[0], batch.n_inputs())?;
    check_len(net.sizes[3], batch.n_outputs())?;
    let mut g = vec![0.0; net.params.len()];
    let sse = sse_grad(&net.sizes, &net.params, &batch.inputs, &batch.targets, Some(&mut g));
    Ok((sse, g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpTrainConfig {
    pub max_epochs: usize,
    pub max_validation_failures: usize,
    pub min_gradient: f64,
    /// Step used for the directional second-derivative estimate.
    pub sigma: f64,
    /// Initial Levenberg-style scale parameter.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        MlpTrainConfig {
            max_epochs: 1000,
            max_validation_failures: 5,
            min_gradient: 1e-6,
            sigma: 5e-5,
            lambda: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    MinGradient,
    ValidationFailures,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_mse: f64,
    pub stop: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Objective<'a> {
    sizes: [usize; 4],
    data: &'a Table,
    scale: f64,
}

impl Objective<'_> {
    fn value(&self, p: &[f64]) -> f64 {
        sse_grad(&self.sizes, p, &self.data.inputs, &self.data.targets, None) * self.scale
    }

    fn value_grad(&self, p: &[f64], g: &mut Vec<f64>) -> f64 {
        g.clear();
        g.resize(p.len(), 0.0);
        let e = sse_grad(&self.sizes, p, &self.data.inputs, &self.data.targets, Some(g));
        g.iter_mut().for_each(|v| *v *= self.scale);
        e * self.scale
    }
}

/// Full-batch scaled conjugate gradient on the mean squared error of an
/// already scaled training table, with validation early stopping.
///
/// Returns the parameters of the epoch with the lowest validation error.
pub fn scg_train(
    net: MlpNetwork,
    train: &Table,
    validation: &Table,
    cfg: &MlpTrainConfig,
) -> Result<(MlpNetwork, TrainTrace)> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.max_validation_failures == 0 {
        return Err(Error::invalid("max_validation_failures must be >= 1"));
    }
    for t in [train, validation] {
        check_len(net.sizes[0], t.n_inputs())?;
        check_len(net.sizes[3], t.n_outputs())?;
    }
    let sizes = net.sizes;
    let obj = Objective {
        sizes,
        data: train,
        scale: 1.0 / (train.len() * sizes[3]) as f64,
    };
    let vobj = Objective {
        sizes,
        data: validation,
        scale: 1.0 / (validation.len() * sizes[3]) as f64,
    };

    let np = net.params.len();
    let mut w = net.params;
    let mut g = Vec::with_capacity(np);
    let mut e = obj.value_grad(&w, &mut g);
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut success = true;
    let mut lambda = cfg.lambda;
    let mut lambda_bar = 0.0;
    let mut delta = 0.0;
    let mut g_probe = Vec::with_capacity(np);
    let mut trial = vec![0.0; np];

    let mut best_w = w.clone();
    let mut best_v = vobj.value(&w);
    let mut best_epoch = 0;
    let mut fails = 0;
    let mut last_v = best_v;
    let mut records = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let gnorm = dot(&r, &r).sqrt();
        if gnorm < cfg.min_gradient {
            stop = StopReason::MinGradient;
            break;
        }
        let p2 = dot(&p, &p);
        if success {
            let sigma_k = cfg.sigma / p2.sqrt();
            for i in 0..np {
                trial[i] = w[i] + sigma_k * p[i];
            }
            obj.value_grad(&trial, &mut g_probe);
            delta = (0..np).map(|i| p[i] * (g_probe[i] - g[i])).sum::<f64>() / sigma_k;
        }
        delta += (lambda - lambda_bar) * p2;
        if delta <= 0.0 {
            lambda_bar = 2.0 * (lambda - delta / p2);
            delta = -delta + lambda * p2;
            lambda = lambda_bar;
        }
        let mu = dot(&p, &r);
        let alpha = mu / delta;
        for i in 0..np {
            trial[i] = w[i] + alpha * p[i];
        }
        let e_new = obj.value(&trial);
        if !alpha.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let comparison = if e_new.is_finite() {
            2.0 * delta * (e - e_new) / (mu * mu)
        } else {
            -1.0
        };

        if comparison >= 0.0 {
            std::mem::swap(&mut w, &mut trial);
            e = obj.value_grad(&w, &mut g);
            let r_new: Vec<f64> = g.iter().map(|v| -v).collect();
            lambda_bar = 0.0;
            success = true;
            if epoch % np == 0 {
                p.copy_from_slice(&r_new);
            } else {
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                for i in 0..np {
                    p[i] = r_new[i] + beta * p[i];
                }
            }
            r = r_new;
            if comparison >= 0.75 {
                lambda = (lambda / 4.0).max(1e-15);
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if comparison < 0.25 {
            lambda = (lambda + delta * (1.0 - comparison) / p2).min(1e100);
        }
        if !e.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }

        let v = if success { vobj.value(&w) } else { last_v };
        records.push(EpochRecord {
            epoch,
            train_mse: e,
            validation_mse: v,
            gradient_norm: dot(&r, &r).sqrt(),
        });
        if v < best_v {
            best_v = v;
            best_w.copy_from_slice(&w);
            best_epoch = epoch;
            fails = 0;
        } else if success {
            fails += 1;
        }
        last_v = v;
        if fails >= cfg.max_validation_failures {
            stop = StopReason::ValidationFailures;
            break;
        }
    }

    Ok((
        MlpNetwork {
            sizes,
            params: best_w,
        },
        TrainTrace {
            epochs: records,
            best_epoch,
            best_validation_mse: best_v,
            stop,
        },
    ))
}

/// A trained MLP together with the input and target scalers it was fitted with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpModel {
    pub network: MlpNetwork,
    pub input_scaling: ScalingSpec,
    pub target_scaling: ScalingSpec,
}

impl Regressor for MlpModel {
    fn n_inputs(&self) -> usize {
        self.network.sizes[0]
    }

    fn n_outputs(&self) -> usize {
        self.network.sizes[3]
    }

    fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = self.input_scaling.apply(input)?;
        let y = self.network.forward(&x)?;
        self.target_scaling.invert(&y)
    }
}

/// Scales raw tables to `[-1, 1]` using training ranges, initializes a
/// `n_in - h1 - h2 - n_out` network from `cfg.seed` and trains it.
pub fn mlp_train(
    train: &Table,
    validation: &Table,
    hidden: [usize; 2],
    cfg: &MlpTrainConfig,
) -> Result<(MlpModel, TrainTrace)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let input_scaling = ScalingSpec::fit(&train.inputs)?;
    let target_scaling = ScalingSpec::fit(&train.targets)?;
    let scale = |t: &Table| -> Result<Table> {
        Table::new(
            input_scaling.apply_rows(&t.inputs)?,
            target_scaling.apply_rows(&t.targets)?,
        )
    };
    let (tr, va) = (scale(train)?, scale(validation)?);
    let sizes = [train.n_inputs(), hidden[0], hidden[1], train.n_outputs()];
    let net = MlpNetwork::random(sizes, cfg.seed)?;
    let (network, trace) = scg_train(net, &tr, &va, cfg)?;
    Ok((
        MlpModel {
            network,
            input_scaling,
            target_scaling,
        },
        trace,
    ))
}
