//! Small differentiable classifiers with softmax cross-entropy loss.
//!
//! Parameters live in one flat [`ParamVector`], layer by layer; each layer
//! stores its weight matrix row-major (`out x in`) followed by its bias:
//!
//! * `Logreg`: `W [C x F]`, `b [C]`
//! * `Mlp`: `W1 [H x F]`, `b1 [H]`, `W2 [C x H]`, `b2 [C]` with `tanh` hidden units

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::vecmath::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logreg,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n_features: usize,
    pub n_classes: usize,
    /// Hidden width; ignored by `Logreg`.
    pub hidden: usize,
    pub init_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    /// Mean cross-entropy in nats.
    pub loss: f64,
    pub accuracy: f64,
}

/// One dense layer, unpacked from the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ModelSpec {
    pub fn logreg(n_features: usize, n_classes: usize, init_seed: u64) -> Self {
        Self {
            kind: ModelKind::Logreg,
            n_features,
            n_classes,
            hidden: 0,
            init_seed,
        }
    }

    pub fn mlp(n_features: usize, hidden: usize, n_classes: usize, init_seed: u64) -> Self {
        Self {
            kind: ModelKind::Mlp,
            n_features,
            n_classes,
            hidden,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("model needs at least two classes"));
        }
        if self.n_features == 0 {
            return Err(Error::invalid("model needs at least one feature"));
        }
        if self.kind == ModelKind::Mlp && self.hidden == 0 {
            return Err(Error::invalid("mlp hidden width must be at least 1"));
        }
        Ok(())
    }

    /// `(out, in)` shape of each layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            ModelKind::Logreg => vec![(self.n_classes, self.n_features)],
            ModelKind::Mlp => vec![
                (self.hidden, self.n_features),
                (self.n_classes, self.hidden),
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }

    pub fn unflatten(&self, params: &ParamVector) -> Result<Vec<Layer>> {
        self.check_params(params)?;
        let flat = params.as_slice();
        let mut at = 0;
        Ok(self
            .layer_shapes()
            .into_iter()
            .map(|(rows, cols)| {
                let weights = flat[at..at + rows * cols].to_vec();
                at += rows * cols;
                let bias = flat[at..at + rows].to_vec();
                at += rows;
                Layer {
                    rows,
                    cols,
                    weights,
                    bias,
                }
            })
            .collect())
    }

    pub fn flatten(&self, layers: &[Layer]) -> Result<ParamVector> {
        let shapes = self.layer_shapes();
        if layers.len() != shapes.len()
            || layers
                .iter()
                .zip(&shapes)
                .any(|(l, &(r, c))| l.rows != r || l.cols != c || l.weights.len() != r * c || l.bias.len() != r)
        {
            return Err(Error::invalid("layer shapes do not match model spec"));
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for l in layers {
            flat.extend_from_slice(&l.weights);
            flat.extend_from_slice(&l.bias);
        }
        ParamVector::new(flat)
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() == self.param_count() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: params.len(),
                right: self.param_count(),
            })
        }
    }
}

/// Gaussian weights with standard deviation `1/sqrt(fan_in)`, zero biases.
pub fn init_params(spec: &ModelSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = stream(spec.init_seed, Purpose::Init, 0, 0);
    let mut flat = Vec::with_capacity(spec.param_count());
    for (rows, cols) in spec.layer_shapes() {
        let std = 1.0 / (cols as f64).sqrt();
        flat.extend((0..rows * cols).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            std * z
        }));
        flat.extend(std::iter::repeat_n(0.0, rows));
    }
    ParamVector::new(flat)
}

/// `out = W x + b` for a row-major `W`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(cols).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// In-place softmax; returns `logsumexp` of the input.
fn softmax(logits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
    max + sum.ln()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

struct Forward {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl Forward {
    fn new(spec: &ModelSpec) -> Self {
        Self {
            hidden: vec![0.0; spec.hidden],
            logits: vec![0.0; spec.n_classes],
        }
    }

    /// Fills `logits` for one sample.
    fn run(&mut self, spec: &ModelSpec, p: &[f64], x: &[f64]) {
        let (f, c, h) = (spec.n_features, spec.n_classes, spec.hidden);
        match spec.kind {
            ModelKind::Logreg => affine(&p[..c * f], &p[c * f..c * f + c], x, &mut self.logits),
            ModelKind::Mlp => {
                let w2 = h * f + h;
                affine(&p[..h * f], &p[h * f..w2], x, &mut self.hidden);
                self.hidden.iter_mut().for_each(|v| *v = v.tanh());
                affine(&p[w2..w2 + c * h], &p[w2 + c * h..], &self.hidden, &mut self.logits);
            }
        }
    }
}

fn check_batch(spec: &ModelSpec, params: &ParamVector, n_features: usize, len: usize) -> Result<()> {
    spec.check_params(params)?;
    if n_features != spec.n_features {
        return Err(Error::DimensionMismatch {
            left: n_features,
            right: spec.n_features,
        });
    }
    if len == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

/// Mean cross-entropy over the batch and its exact gradient.
pub fn loss_and_grad(spec: &ModelSpec, params: &ParamVector, batch: Batch<'_>) -> Result<(f64, ParamVector)> {
    check_batch(spec, params, batch.n_features(), batch.len())?;
    let p = params.as_slice();
    let (f, c, h) = (spec.n_features, spec.n_classes, spec.hidden);
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; p.len()];
    let mut fwd = Forward::new(spec);
    let mut dhidden = vec![0.0; h];
    let mut total = 0.0;

    for (x, y) in batch.iter() {
        if y >= c {
            return Err(Error::invalid(format!("label {y} out of range for {c} classes")));
        }
        fwd.run(spec, p, x);
        let lse = {
            let logit_y = fwd.logits[y];
            let lse = softmax(&mut fwd.logits);
            lse - logit_y
        };
        total += lse;
        // fwd.logits now holds probabilities; turn them into dL/dlogit
        fwd.logits[y] -= 1.0;
        fwd.logits.iter_mut().for_each(|d| *d *= scale);
        let dlogits = &fwd.logits;

        match spec.kind {
            ModelKind::Logreg => {
                let (gw, gb) = grad.split_at_mut(c * f);
                for (k, &d) in dlogits.iter().enumerate() {
                    gw[k * f..(k + 1) * f]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(g, xi)| *g += d * xi);
                    gb[k] += d;
                }
            }
            ModelKind::Mlp => {
                let w2_at = h * f + h;
                let w2 = &p[w2_at..w2_at + c * h];
                let (g1, g2) = grad.split_at_mut(w2_at);
                let (gw2, gb2) = g2.split_at_mut(c * h);
                dhidden.iter_mut().for_each(|v| *v = 0.0);
                for (k, &d) in dlogits.iter().enumerate() {
                    let row = &w2[k * h..(k + 1) * h];
                    for i in 0..h {
                        gw2[k * h + i] += d * fwd.hidden[i];
                        dhidden[i] += d * row[i];
                    }
                    gb2[k] += d;
                }
                let (gw1, gb1) = g1.split_at_mut(h * f);
                for i in 0..h {
                    let a = fwd.hidden[i];
                    let dpre = dhidden[i] * (1.0 - a * a);
                    gw1[i * f..(i + 1) * f]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(g, xi)| *g += dpre * xi);
                    gb1[i] += dpre;
                }
            }
        }
    }

    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok((loss, ParamVector::new(grad).map_err(|_| Error::NonFinite("gradient"))?))
}

/// Mean cross-entropy only.
pub fn loss(spec: &ModelSpec, params: &ParamVector, batch: Batch<'_>) -> Result<f64> {
    check_batch(spec, params, batch.n_features(), batch.len())?;
    let p = params.as_slice();
    let mut fwd = Forward::new(spec);
    let mut total = 0.0;
    for (x, y) in batch.iter() {
        fwd.run(spec, p, x);
        let logit_y = fwd.logits[y];
        total += softmax(&mut fwd.logits) - logit_y;
    }
    let loss = total / batch.len() as f64;
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite("loss"))
    }
}

/// Predicted class per sample; ties go to the lowest class index.
pub fn predict(spec: &ModelSpec, params: &ParamVector, data: &Dataset) -> Result<Vec<usize>> {
    check_batch(spec, params, data.n_features(), data.n_samples())?;
    let mut fwd = Forward::new(spec);
    Ok(Batch::all(data)
        .iter()
        .map(|(x, _)| {
            fwd.run(spec, params.as_slice(), x);
            argmax(&fwd.logits)
        })
        .collect())
}

/// Full-dataset mean loss and accuracy.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, data: &Dataset) -> Result<LossReport> {
    check_batch(spec, params, data.n_features(), data.n_samples())?;
    let p = params.as_slice();
    let mut fwd = Forward::new(spec);
    let mut total = 0.0;
    let mut correct = 0usize;
    for (x, y) in Batch::all(data).iter() {
        fwd.run(spec, p, x);
        if argmax(&fwd.logits) == y {
            correct += 1;
        }
        let logit_y = fwd.logits[y];
        total += softmax(&mut fwd.logits) - logit_y;
    }
    let n = data.n_samples() as f64;
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("evaluation loss"));
    }
    Ok(LossReport {
        loss,
        accuracy: correct as f64 / n,
    })
}
