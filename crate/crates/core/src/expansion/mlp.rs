use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::similarity::{Example, FEATURE_WIDTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpHyper {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper {
            hidden: 100,
            epochs: 50,
            batch: 32,
            lr: 0.01,
            seed: 7,
        }
    }
}

impl MlpHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch == 0 {
            return Err(Error::Config("hidden and batch must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

/// A 10 → H → 1 perceptron with rectifier hidden units and a sigmoid
/// output. Parameters live in one flat vector: W1 (H×10, row-major), b1,
/// w2, b2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MlpModel<F: Scalar> {
    hidden: usize,
    params: Vec<F>,
    pub hyper: MlpHyper,
    /// Mean training loss before the first update.
    pub initial_loss: f64,
    /// Mean training loss after each epoch.
    pub loss_curve: Vec<f64>,
}

impl<F: Scalar> MlpModel<F> {
    pub fn zeros(hidden: usize) -> Self {
        MlpModel {
            hidden,
            params: vec![F::zero(); Self::param_count(hidden)],
            hyper: MlpHyper {
                hidden,
                ..MlpHyper::default()
            },
            initial_loss: f64::NAN,
            loss_curve: Vec::new(),
        }
    }

    /// Uniform Glorot initialization.
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(hidden);
        let a1 = (6.0 / (FEATURE_WIDTH + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        let (w1, w2) = (m.w1_range(), m.w2_range());
        for p in &mut m.params[w1] {
            *p = F::of(rng.random_range(-a1..a1));
        }
        for p in &mut m.params[w2] {
            *p = F::of(rng.random_range(-a2..a2));
        }
        m
    }

    pub fn param_count(hidden: usize) -> usize {
        hidden * FEATURE_WIDTH + hidden + hidden + 1
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * FEATURE_WIDTH
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * FEATURE_WIDTH;
        s..s + self.hidden
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * (FEATURE_WIDTH + 1);
        s..s + self.hidden
    }

    fn b2_index(&self) -> usize {
        self.params.len() - 1
    }

    /// Output logit and hidden pre-activations.
    fn forward(&self, x: &[F], pre: &mut [F]) -> F {
        let w1 = &self.params[self.w1_range()];
        let b1 = &self.params[self.b1_range()];
        let w2 = &self.params[self.w2_range()];
        let mut z = self.params[self.b2_index()];
        for j in 0..self.hidden {
            let row = &w1[j * FEATURE_WIDTH..(j + 1) * FEATURE_WIDTH];
            let mut a = b1[j];
            for k in 0..FEATURE_WIDTH {
                a += row[k] * x[k];
            }
            pre[j] = a;
            if a > F::zero() {
                z += w2[j] * a;
            }
        }
        z
    }

    /// Certainty in the open interval (0, 1).
    pub fn predict(&self, x: &[F]) -> Result<F> {
        if x.len() != FEATURE_WIDTH {
            return Err(Error::Shape {
                expected: FEATURE_WIDTH,
                actual: x.len(),
            });
        }
        let mut pre = vec![F::zero(); self.hidden];
        let p = sigmoid(self.forward(x, &mut pre));
        let eps = F::epsilon();
        Ok(p.max(eps).min(F::one() - eps))
    }

    /// Mean binary cross-entropy over `data`.
    pub fn loss(&self, data: &[(Vec<F>, F)]) -> F {
        let mut pre = vec![F::zero(); self.hidden];
        let mut sum = F::zero();
        for (x, y) in data {
            sum += bce_with_logit(self.forward(x, &mut pre), *y);
        }
        sum / F::of(data.len().max(1) as f64)
    }

    /// Gradient of [`Self::loss`] with respect to the flat parameters.
    pub fn gradient(&self, data: &[(Vec<F>, F)]) -> Vec<F> {
        let mut grad = vec![F::zero(); self.params.len()];
        let mut pre = vec![F::zero(); self.hidden];
        for (x, y) in data {
            self.accumulate(x, *y, &mut pre, &mut grad);
        }
        let n = F::of(data.len().max(1) as f64);
        for g in &mut grad {
            *g /= n;
        }
        grad
    }

    fn accumulate(&self, x: &[F], y: F, pre: &mut [F], grad: &mut [F]) {
        let z = self.forward(x, pre);
        let dz = sigmoid(z) - y;
        let (w1r, b1r, w2r, b2) = (self.w1_range(), self.b1_range(), self.w2_range(), self.b2_index());
        let w2 = &self.params[w2r.clone()];
        grad[b2] += dz;
        for j in 0..self.hidden {
            if pre[j] <= F::zero() {
                continue;
            }
            grad[w2r.start + j] += dz * pre[j];
            let dh = dz * w2[j];
            grad[b1r.start + j] += dh;
            let base = w1r.start + j * FEATURE_WIDTH;
            for k in 0..FEATURE_WIDTH {
                grad[base + k] += dh * x[k];
            }
        }
    }
}

fn bce_with_logit<F: Scalar>(z: F, y: F) -> F {
    // log(1 + e^z) - y z, written to avoid overflow
    z.max(F::zero()) - y * z + (-z.abs()).exp().ln_1p()
}

pub fn predict_certainty<F: Scalar>(mlp: &MlpModel<F>, features: &[F]) -> Result<F> {
    mlp.predict(features)
}

/// Mini-batch SGD on binary cross-entropy.
pub fn train_mlp<F: Scalar>(data: &[Example<F>], hyper: &MlpHyper) -> Result<MlpModel<F>> {
    hyper.validate()?;
    let pos = data.iter().filter(|e| e.label).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::DegenerateLabels);
    }
    let rows: Vec<(Vec<F>, F)> = data
        .iter()
        .map(|e| (e.features.values.to_vec(), if e.label { F::one() } else { F::zero() }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut model = MlpModel::init(hyper.hidden, &mut rng);
    model.hyper = hyper.clone();
    model.initial_loss = model.loss(&rows).as_f64();
    let lr = F::of(hyper.lr);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut grad = vec![F::zero(); model.params.len()];
    let mut pre = vec![F::zero(); hyper.hidden];
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch) {
            grad.fill(F::zero());
            for &i in batch {
                model.accumulate(&rows[i].0, rows[i].1, &mut pre, &mut grad);
            }
            let scale = lr / F::of(batch.len() as f64);
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= scale * *g;
            }
        }
        let loss = model.loss(&rows).as_f64();
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        model.loss_curve.push(loss);
    }
    Ok(model)
}
