//! Per-sample gradients for small dense models.
//!
//! Parameters live in one flat [`GradVector`]; gradients come back in the
//! same layout, which is what the scaling and noise machinery operate on.
//! Supported model kinds: linear regression, (binary or multinomial)
//! logistic regression, and fully connected MLPs with relu/tanh hidden
//! activations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::vector::GradVector;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }
}

/// Model architecture. Parameter layouts:
///
/// - `LinearRegression`: the weight vector itself (no bias), prediction w.x;
/// - `LogisticRegression` with 2 classes: one weight vector, p = sigmoid(w.x);
///   with K > 2 classes: K row-major weight rows, softmax over w_k.x;
/// - `Mlp`: per layer, weights row-major (out x in) then biases, layers
///   concatenated in order. `layer_sizes` includes the input width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression {
        input_dim: usize,
    },
    LogisticRegression {
        input_dim: usize,
        num_classes: usize,
    },
    Mlp {
        layer_sizes: Vec<usize>,
        activation: Activation,
    },
}

impl ModelKind {
    pub fn param_count(&self) -> usize {
        match self {
            ModelKind::LinearRegression { input_dim } => *input_dim,
            ModelKind::LogisticRegression {
                input_dim,
                num_classes,
            } => {
                if *num_classes == 2 {
                    *input_dim
                } else {
                    input_dim * num_classes
                }
            }
            ModelKind::Mlp { layer_sizes, .. } => layer_sizes
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelKind::LinearRegression { input_dim } => *input_dim,
            ModelKind::LogisticRegression { input_dim, .. } => *input_dim,
            ModelKind::Mlp { layer_sizes, .. } => layer_sizes[0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelKind::LinearRegression { input_dim } => {
                if *input_dim == 0 {
                    return Err(Error::InvalidArgument("input_dim must be positive".into()));
                }
            }
            ModelKind::LogisticRegression {
                input_dim,
                num_classes,
            } => {
                if *input_dim == 0 || *num_classes < 2 {
                    return Err(Error::InvalidArgument(
                        "logistic regression needs input_dim >= 1 and num_classes >= 2".into(),
                    ));
                }
            }
            ModelKind::Mlp { layer_sizes, .. } => {
                if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
                    return Err(Error::InvalidArgument(
                        "mlp needs at least [input, output] layer sizes, all positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Loss attached to a model's output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SquaredError,
    CrossEntropy,
}

/// A model: architecture plus its flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    kind: ModelKind,
    params: GradVector,
}

impl Model {
    pub fn new(kind: ModelKind, params: GradVector) -> Result<Self> {
        kind.validate()?;
        let expected = kind.param_count();
        if params.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.dim(),
            });
        }
        Ok(Model { kind, params })
    }

    pub fn zeros(kind: ModelKind) -> Result<Self> {
        let dim = kind.param_count();
        Model::new(kind, GradVector::zeros(dim))
    }

    /// Seeded initialization: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]
    /// per layer (for non-MLP kinds, fan_in is the input dimension).
    pub fn init_random(kind: ModelKind, rng: &mut impl Rng) -> Result<Self> {
        kind.validate()?;
        let params = match &kind {
            ModelKind::LinearRegression { input_dim }
            | ModelKind::LogisticRegression { input_dim, .. } => {
                let bound = 1.0 / (*input_dim as f64).sqrt();
                let n = kind.param_count();
                GradVector::new((0..n).map(|_| rng.random_range(-bound..bound)).collect())
            }
            ModelKind::Mlp { layer_sizes, .. } => {
                let mut values = Vec::with_capacity(kind.param_count());
                for w in layer_sizes.windows(2) {
                    let (fan_in, fan_out) = (w[0], w[1]);
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    for _ in 0..(fan_in * fan_out + fan_out) {
                        values.push(rng.random_range(-bound..bound));
                    }
                }
                GradVector::new(values)
            }
        };
        Model::new(kind, params)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn params(&self) -> &GradVector {
        &self.params
    }

    pub fn set_params(&mut self, params: GradVector) -> Result<()> {
        if params.dim() != self.params.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.params.dim(),
                got: params.dim(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn params_mut(&mut self) -> &mut GradVector {
        &mut self.params
    }

    /// Dimension check only: features are validated once at dataset
    /// construction and parameters whenever they are updated, so the
    /// per-sample hot path skips both finiteness scans.
    fn check_sample(&self, features: &[f64]) -> Result<()> {
        let want = self.kind.input_dim();
        if features.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: features.len(),
            });
        }
        Ok(())
    }

    /// Loss f(w, x, y) on one sample.
    pub fn loss(&self, loss: LossKind, features: &[f64], label: f64) -> Result<f64> {
        self.check_sample(features)?;
        let (value, _) = self.loss_and_grad(loss, features, label, false)?;
        Ok(value)
    }

    /// Mean loss over a dataset slice.
    pub fn mean_loss(&self, loss: LossKind, samples: &[(&[f64], f64)]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("mean_loss over empty sample list".into()));
        }
        let mut total = 0.0;
        for (x, y) in samples {
            total += self.loss(loss, x, *y)?;
        }
        Ok(total / samples.len() as f64)
    }

    fn loss_and_grad(
        &self,
        loss: LossKind,
        x: &[f64],
        y: f64,
        want_grad: bool,
    ) -> Result<(f64, Option<GradVector>)> {
        let w = self.params.values();
        match (&self.kind, loss) {
            (ModelKind::LinearRegression { .. }, LossKind::SquaredError) => {
                let pred: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                let resid = pred - y;
                let value = 0.5 * resid * resid;
                let grad = want_grad
                    .then(|| GradVector::new(x.iter().map(|&xi| resid * xi).collect()));
                Ok((value, grad))
            }
            (
                ModelKind::LogisticRegression { num_classes: 2, .. },
                LossKind::CrossEntropy,
            ) => {
                let yi = class_label(y, 2)?;
                let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                // log(1+e^z) - y*z, computed stably.
                let value = softplus(z) - yi as f64 * z;
                let p = sigmoid(z);
                let grad = want_grad
                    .then(|| GradVector::new(x.iter().map(|&xi| (p - yi as f64) * xi).collect()));
                Ok((value, grad))
            }
            (
                ModelKind::LogisticRegression {
                    input_dim,
                    num_classes,
                },
                LossKind::CrossEntropy,
            ) => {
                let k = *num_classes;
                let d = *input_dim;
                let yi = class_label(y, k)?;
                let mut logits = vec![0.0; k];
                for (c, logit) in logits.iter_mut().enumerate() {
                    *logit = w[c * d..(c + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum();
                }
                let (log_probs, _) = log_softmax(&logits);
                let value = -log_probs[yi];
                let grad = want_grad.then(|| {
                    let mut g = vec![0.0; k * d];
                    for c in 0..k {
                        let coeff = log_probs[c].exp() - if c == yi { 1.0 } else { 0.0 };
                        for (j, &xj) in x.iter().enumerate() {
                            g[c * d + j] = coeff * xj;
                        }
                    }
                    GradVector::new(g)
                });
                Ok((value, grad))
            }
            (
                ModelKind::Mlp {
                    layer_sizes,
                    activation,
                },
                _,
            ) => mlp_loss_and_grad(w, layer_sizes, *activation, loss, x, y, want_grad),
            _ => Err(Error::InvalidArgument(format!(
                "loss {loss:?} is not supported by model kind {:?}",
                self.kind
            ))),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Returns (log_probs, max_logit).
fn log_softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    (logits.iter().map(|&l| l - log_z).collect(), max)
}

fn class_label(y: f64, num_classes: usize) -> Result<usize> {
    let yi = y as usize;
    if y.fract() != 0.0 || y < 0.0 || yi >= num_classes {
        return Err(Error::InvalidArgument(format!(
            "label {y} is not a valid class index (num_classes = {num_classes})"
        )));
    }
    Ok(yi)
}

#[allow(clippy::too_many_arguments)]
fn mlp_loss_and_grad(
    w: &[f64],
    layer_sizes: &[usize],
    activation: Activation,
    loss: LossKind,
    x: &[f64],
    y: f64,
    want_grad: bool,
) -> Result<(f64, Option<GradVector>)> {
    let num_layers = layer_sizes.len() - 1;
    // Forward pass, keeping pre-activations and activations per layer.
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(num_layers + 1);
    let mut pre_acts: Vec<Vec<f64>> = Vec::with_capacity(num_layers);
    activations.push(x.to_vec());
    let mut offset = 0;
    for (l, sizes) in layer_sizes.windows(2).enumerate() {
        let (n_in, n_out) = (sizes[0], sizes[1]);
        let input = activations.last().unwrap();
        let weights = &w[offset..offset + n_in * n_out];
        let biases = &w[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let mut z = vec![0.0; n_out];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &weights[o * n_in..(o + 1) * n_in];
            *zo = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + biases[o];
        }
        let last = l == num_layers - 1;
        let a = if last {
            z.clone() // linear output; softmax folded into the loss below
        } else {
            z.iter().map(|&v| activation.apply(v)).collect()
        };
        pre_acts.push(z);
        activations.push(a);
    }

    let output = activations.last().unwrap();
    // Loss value and d(loss)/d(output).
    let (value, mut delta): (f64, Vec<f64>) = match loss {
        LossKind::SquaredError => {
            if output.len() == 1 {
                let resid = output[0] - y;
                (0.5 * resid * resid, vec![resid])
            } else {
                let yi = class_label(y, output.len())?;
                let mut resid: Vec<f64> = output.clone();
                resid[yi] -= 1.0;
                let v = 0.5 * resid.iter().map(|r| r * r).sum::<f64>();
                (v, resid)
            }
        }
        LossKind::CrossEntropy => {
            let yi = class_label(y, output.len())?;
            let (log_probs, _) = log_softmax(output);
            let mut d: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
            d[yi] -= 1.0;
            (-log_probs[yi], d)
        }
    };

    if !want_grad {
        return Ok((value, None));
    }

    // Backward pass.
    let mut grad = vec![0.0; w.len()];
    let mut layer_offsets = Vec::with_capacity(num_layers);
    let mut acc = 0;
    for sizes in layer_sizes.windows(2) {
        layer_offsets.push(acc);
        acc += sizes[0] * sizes[1] + sizes[1];
    }
    for l in (0..num_layers).rev() {
        let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
        let off = layer_offsets[l];
        let input = &activations[l];
        // delta currently holds d(loss)/d(z_l) for the output layer, or
        // d(loss)/d(a_l) for hidden layers before the activation step below.
        if l != num_layers - 1 {
            for (o, d) in delta.iter_mut().enumerate() {
                *d *= activation.derivative(pre_acts[l][o]);
            }
        }
        for o in 0..n_out {
            let d = delta[o];
            for (i, &inp) in input.iter().enumerate() {
                grad[off + o * n_in + i] = d * inp;
            }
            grad[off + n_in * n_out + o] = d;
        }
        if l > 0 {
            let weights = &w[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                for (i, n) in next.iter_mut().enumerate() {
                    *n += weights[o * n_in + i] * d;
                }
            }
            delta = next;
        }
    }
    Ok((value, Some(GradVector::new(grad))))
}

/// Length of the coefficient vector in the rank-one gradient factorization
/// g = coeff (x) x, or `None` when the model does not factorize (MLP).
pub fn coefficient_len(kind: &ModelKind) -> Option<usize> {
    match kind {
        ModelKind::LinearRegression { .. } => Some(1),
        ModelKind::LogisticRegression { num_classes: 2, .. } => Some(1),
        ModelKind::LogisticRegression { num_classes, .. } => Some(*num_classes),
        ModelKind::Mlp { .. } => None,
    }
}

/// Coefficient vector of the factored per-sample gradient: the full
/// gradient is `coeff[c] * x[j]` at parameter index `c * input_dim + j`.
/// Errors on non-factorizing models; much cheaper than materializing the
/// gradient because the outer product is skipped.
pub fn gradient_coefficients(
    model: &Model,
    loss: LossKind,
    features: &[f64],
    label: f64,
) -> Result<Vec<f64>> {
    model.check_sample(features)?;
    let w = model.params.values();
    let x = features;
    let coeff = match (&model.kind, loss) {
        (ModelKind::LinearRegression { .. }, LossKind::SquaredError) => {
            let pred: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            vec![pred - label]
        }
        (ModelKind::LogisticRegression { num_classes: 2, .. }, LossKind::CrossEntropy) => {
            let yi = class_label(label, 2)?;
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            vec![sigmoid(z) - yi as f64]
        }
        (
            ModelKind::LogisticRegression {
                input_dim,
                num_classes,
            },
            LossKind::CrossEntropy,
        ) => {
            let (k, d) = (*num_classes, *input_dim);
            let yi = class_label(label, k)?;
            let mut logits = vec![0.0; k];
            for (c, logit) in logits.iter_mut().enumerate() {
                *logit = w[c * d..(c + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum();
            }
            let (log_probs, _) = log_softmax(&logits);
            (0..k)
                .map(|c| log_probs[c].exp() - if c == yi { 1.0 } else { 0.0 })
                .collect()
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "gradient factorization is unavailable for {:?} with {loss:?}",
                model.kind
            )))
        }
    };
    if coeff.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradient coefficients".into(),
        });
    }
    Ok(coeff)
}

/// Gradient of the per-sample loss at the model's current parameters.
pub fn per_sample_gradient(
    model: &Model,
    loss: LossKind,
    features: &[f64],
    label: f64,
) -> Result<GradVector> {
    model.check_sample(features)?;
    let (_, grad) = model.loss_and_grad(loss, features, label, true)?;
    let grad = grad.expect("gradient requested");
    grad.ensure_finite("per-sample gradient")?;
    Ok(grad)
}

/// Per-sample gradients for a batch, order preserved.
pub fn batch_gradients(
    model: &Model,
    loss: LossKind,
    batch: &[(&[f64], f64)],
) -> Result<Vec<GradVector>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch_gradients on empty batch".into()));
    }
    batch
        .iter()
        .map(|(x, y)| per_sample_gradient(model, loss, x, *y))
        .collect()
}

/// Mean of all per-sample gradients over the dataset.
pub fn full_gradient(
    model: &Model,
    loss: LossKind,
    dataset: &[(&[f64], f64)],
) -> Result<GradVector> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("full_gradient on empty dataset".into()));
    }
    let mut sum = GradVector::zeros(model.params().dim());
    for (x, y) in dataset {
        sum.add(&per_sample_gradient(model, loss, x, *y)?);
    }
    sum.scale_in_place(1.0 / dataset.len() as f64);
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    /// Central finite differences on the loss; the independent oracle the
    /// analytic gradients are checked against.
    pub(crate) fn finite_difference_gradient(
        model: &Model,
        loss: LossKind,
        x: &[f64],
        y: f64,
        h: f64,
    ) -> GradVector {
        let dim = model.params().dim();
        let mut grad = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut plus = model.clone();
            plus.params_mut().values_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut().values_mut()[i] -= h;
            let fp = plus.loss(loss, x, y).unwrap();
            let fm = minus.loss(loss, x, y).unwrap();
            grad.push((fp - fm) / (2.0 * h));
        }
        GradVector::new(grad)
    }

    fn rel_gap(a: &GradVector, b: &GradVector) -> f64 {
        let mut diff = a.clone();
        diff.add_scaled(b, -1.0);
        diff.norm() / b.norm().max(1e-8)
    }

    #[test]
    fn linear_zero_weights_zero_label() {
        let model = Model::zeros(ModelKind::LinearRegression { input_dim: 2 }).unwrap();
        let g = per_sample_gradient(&model, LossKind::SquaredError, &[1.0, 2.0], 0.0).unwrap();
        assert_eq!(g.values(), &[0.0, 0.0]);
    }

    #[test]
    fn logistic_zero_weights() {
        let model = Model::zeros(ModelKind::LogisticRegression {
            input_dim: 3,
            num_classes: 2,
        })
        .unwrap();
        let x = [1.0, -2.0, 0.5];
        for y in [0.0, 1.0] {
            let g = per_sample_gradient(&model, LossKind::CrossEntropy, &x, y).unwrap();
            for (gi, xi) in g.values().iter().zip(&x) {
                assert!((gi - (0.5 - y) * xi).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mlp_matches_finite_differences() {
        let kind = ModelKind::Mlp {
            layer_sizes: vec![2, 3, 1],
            activation: Activation::Tanh,
        };
        let mut rng = stream_rng(5, 0);
        let model = Model::init_random(kind, &mut rng).unwrap();
        let x = [0.3, -0.7];
        let y = 0.25;
        let analytic = per_sample_gradient(&model, LossKind::SquaredError, &x, y).unwrap();
        let fd = finite_difference_gradient(&model, LossKind::SquaredError, &x, y, 1e-6);
        assert!(rel_gap(&analytic, &fd) <= 1e-5);
    }

    #[test]
    fn all_kinds_match_finite_differences_many_draws() {
        let mut rng = stream_rng(99, 0);
        let kinds: Vec<(ModelKind, LossKind)> = vec![
            (ModelKind::LinearRegression { input_dim: 4 }, LossKind::SquaredError),
            (
                ModelKind::LogisticRegression {
                    input_dim: 4,
                    num_classes: 2,
                },
                LossKind::CrossEntropy,
            ),
            (
                ModelKind::LogisticRegression {
                    input_dim: 3,
                    num_classes: 4,
                },
                LossKind::CrossEntropy,
            ),
            (
                ModelKind::Mlp {
                    layer_sizes: vec![3, 5, 2],
                    activation: Activation::Tanh,
                },
                LossKind::CrossEntropy,
            ),
            (
                ModelKind::Mlp {
                    layer_sizes: vec![3, 4, 1],
                    activation: Activation::Relu,
                },
                LossKind::SquaredError,
            ),
        ];
        for (kind, loss) in kinds {
            let d = kind.input_dim();
            for _ in 0..100 {
                let model = Model::init_random(kind.clone(), &mut rng).unwrap();
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = match (&kind, loss) {
                    (_, LossKind::SquaredError) => rng.random_range(-1.0..1.0),
                    (ModelKind::LogisticRegression { num_classes, .. }, _) => {
                        rng.random_range(0..*num_classes) as f64
                    }
                    (ModelKind::Mlp { layer_sizes, .. }, _) => {
                        rng.random_range(0..*layer_sizes.last().unwrap()) as f64
                    }
                    _ => unreachable!(),
                };
                let analytic = per_sample_gradient(&model, loss, &x, y).unwrap();
                let fd = finite_difference_gradient(&model, loss, &x, y, 1e-6);
                assert!(
                    rel_gap(&analytic, &fd) <= 1e-5,
                    "gradient mismatch for {kind:?} {loss:?}"
                );
            }
        }
    }

    #[test]
    fn batch_gradients_match_per_sample() {
        let mut rng = stream_rng(3, 0);
        let model = Model::init_random(
            ModelKind::LogisticRegression {
                input_dim: 3,
                num_classes: 2,
            },
            &mut rng,
        )
        .unwrap();
        let x1 = [1.0, 0.0, -1.0];
        let batch: Vec<(&[f64], f64)> = vec![(&x1, 1.0)];
        let gs = batch_gradients(&model, LossKind::CrossEntropy, &batch).unwrap();
        assert_eq!(gs.len(), 1);
        assert_eq!(
            gs[0],
            per_sample_gradient(&model, LossKind::CrossEntropy, &x1, 1.0).unwrap()
        );
        // Duplicated sample yields identical gradients.
        let batch2: Vec<(&[f64], f64)> = vec![(&x1, 1.0), (&x1, 1.0)];
        let gs2 = batch_gradients(&model, LossKind::CrossEntropy, &batch2).unwrap();
        assert_eq!(gs2[0], gs2[1]);
        assert!(batch_gradients(&model, LossKind::CrossEntropy, &[]).is_err());
    }

    #[test]
    fn batch_mean_equals_averaged_loss_gradient() {
        // Mean of per-sample gradients vs finite differences on the mean loss.
        let mut rng = stream_rng(17, 0);
        let model = Model::init_random(ModelKind::LinearRegression { input_dim: 3 }, &mut rng)
            .unwrap();
        let data: Vec<(Vec<f64>, f64)> = (0..5)
            .map(|_| {
                (
                    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let refs: Vec<(&[f64], f64)> = data.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        let full = full_gradient(&model, LossKind::SquaredError, &refs).unwrap();
        let mut mean = GradVector::zeros(3);
        for g in batch_gradients(&model, LossKind::SquaredError, &refs).unwrap() {
            mean.add_scaled(&g, 1.0 / refs.len() as f64);
        }
        assert!(rel_gap(&mean, &full) <= 1e-12);
    }

    #[test]
    fn full_gradient_edge_cases() {
        let model = Model::zeros(ModelKind::LinearRegression { input_dim: 2 }).unwrap();
        let x1 = [1.0, 2.0];
        let one: Vec<(&[f64], f64)> = vec![(&x1, 1.0)];
        let g1 = full_gradient(&model, LossKind::SquaredError, &one).unwrap();
        assert_eq!(
            g1,
            per_sample_gradient(&model, LossKind::SquaredError, &x1, 1.0).unwrap()
        );
        // Two samples with opposite gradients cancel.
        let x2 = [1.0, 2.0];
        let sym: Vec<(&[f64], f64)> = vec![(&x1, 1.0), (&x2, -1.0)];
        let g = full_gradient(&model, LossKind::SquaredError, &sym).unwrap();
        assert!(g.norm() < 1e-15);
        assert!(full_gradient(&model, LossKind::SquaredError, &[]).is_err());
    }

    #[test]
    fn gradient_linearity_in_loss_scale() {
        // grad of c*f == c*grad f: scale the squared-error residual by
        // duplicating the sample c times and comparing sums.
        let mut rng = stream_rng(23, 0);
        let model = Model::init_random(ModelKind::LinearRegression { input_dim: 2 }, &mut rng)
            .unwrap();
        let x = [0.5, -1.5];
        let g = per_sample_gradient(&model, LossKind::SquaredError, &x, 0.3).unwrap();
        let scaled = g.scaled(3.0);
        let mut sum = GradVector::zeros(2);
        for _ in 0..3 {
            sum.add(&per_sample_gradient(&model, LossKind::SquaredError, &x, 0.3).unwrap());
        }
        assert!(sum.max_abs_diff(&scaled) <= 1e-12 * scaled.norm().max(1.0));
    }

    #[test]
    fn gradient_is_pure() {
        let mut rng = stream_rng(31, 0);
        let model = Model::init_random(
            ModelKind::Mlp {
                layer_sizes: vec![2, 3, 2],
                activation: Activation::Tanh,
            },
            &mut rng,
        )
        .unwrap();
        let x = [0.1, 0.9];
        let a = per_sample_gradient(&model, LossKind::CrossEntropy, &x, 1.0).unwrap();
        let b = per_sample_gradient(&model, LossKind::CrossEntropy, &x, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors_on_bad_input() {
        let model = Model::zeros(ModelKind::LinearRegression { input_dim: 2 }).unwrap();
        assert!(matches!(
            per_sample_gradient(&model, LossKind::SquaredError, &[1.0], 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut bad = model.clone();
        bad.params_mut().values_mut()[0] = f64::NAN;
        assert!(matches!(
            per_sample_gradient(&bad, LossKind::SquaredError, &[1.0, 2.0], 0.0),
            Err(Error::NonFinite { .. })
        ));
        // Invalid class label.
        let logit = Model::zeros(ModelKind::LogisticRegression {
            input_dim: 2,
            num_classes: 2,
        })
        .unwrap();
        assert!(per_sample_gradient(&logit, LossKind::CrossEntropy, &[1.0, 2.0], 2.0).is_err());
    }

    #[test]
    fn coefficients_expand_to_the_dense_gradient() {
        let mut rng = stream_rng(31, 0);
        let cases: Vec<(ModelKind, LossKind, f64)> = vec![
            (ModelKind::LinearRegression { input_dim: 6 }, LossKind::SquaredError, 0.7),
            (
                ModelKind::LogisticRegression {
                    input_dim: 5,
                    num_classes: 2,
                },
                LossKind::CrossEntropy,
                1.0,
            ),
            (
                ModelKind::LogisticRegression {
                    input_dim: 4,
                    num_classes: 3,
                },
                LossKind::CrossEntropy,
                2.0,
            ),
        ];
        for (kind, loss, label) in cases {
            let d = kind.input_dim();
            let model = Model::init_random(kind.clone(), &mut rng).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let coeff = gradient_coefficients(&model, loss, &x, label).unwrap();
            assert_eq!(coeff.len(), coefficient_len(&kind).unwrap());
            let dense = per_sample_gradient(&model, loss, &x, label).unwrap();
            let mut expanded = Vec::with_capacity(coeff.len() * d);
            for &c in &coeff {
                expanded.extend(x.iter().map(|&xj| c * xj));
            }
            // Identical arithmetic, so the match is exact.
            assert_eq!(expanded, dense.values());
        }
        let mlp = Model::zeros(ModelKind::Mlp {
            layer_sizes: vec![2, 3, 1],
            activation: Activation::Relu,
        })
        .unwrap();
        assert!(coefficient_len(mlp.kind()).is_none());
        assert!(gradient_coefficients(&mlp, LossKind::SquaredError, &[1.0, 2.0], 0.0).is_err());
    }
}
