use super::kernels::{affine_backward_input, affine_backward_params, affine_forward};
use super::{NnError, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, z: &[f32]) -> Vec<f32> {
        match self {
            Activation::Linear => z.to_vec(),
            Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        }
    }

    /// Multiplies `grad` by the derivative at `z`; relu'(0) is 0.
    fn backprop(self, z: &[f32], grad: &mut [f32]) {
        if self == Activation::Relu {
            for (g, &v) in grad.iter_mut().zip(z) {
                if v <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

/// One fully connected layer; `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    out_dim: usize,
    in_dim: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    activation: Activation,
}

impl Dense {
    pub fn new(
        out_dim: usize,
        in_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        if out_dim == 0 || in_dim == 0 {
            return Err(NnError::InvalidSizes(vec![in_dim, out_dim]));
        }
        if weights.len() != out_dim * in_dim {
            return Err(NnError::Dimension {
                expected: out_dim * in_dim,
                actual: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(NnError::Dimension {
                expected: out_dim,
                actual: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("layer parameters"));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        (&mut self.weights, &mut self.bias)
    }
}

/// Row-major `rows x cols` matrix of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Batch {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::Dimension {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NnError::Dimension {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

/// Per-layer inputs and pre-activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    rows: usize,
    inputs: Vec<Vec<f32>>,
    pre_activations: Vec<Vec<f32>>,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn pre_activations(&self, layer: usize) -> &[f32] {
        &self.pre_activations[layer]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, mlp: &Mlp) -> bool {
        self.layers.len() == mlp.layers.len()
            && self
                .layers
                .iter()
                .zip(&mlp.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// All values, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = f32> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`) and zero biases.
    ///
    /// `sizes` lists every width from input to output, so `activations`
    /// holds one entry per layer (`sizes.len() - 1`).
    pub fn init(sizes: &[usize], activations: &[Activation], rng: &mut SeededRng) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::NoLayers);
        }
        if sizes.contains(&0) {
            return Err(NnError::InvalidSizes(sizes.to_vec()));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(NnError::ActivationCount {
                expected: sizes.len() - 1,
                actual: activations.len(),
            });
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(dims, &act)| {
                let (fan_in, fan_out) = (dims[0], dims[1]);
                let bound = (6.0 / fan_in as f32).sqrt();
                let weights = (0..fan_in * fan_out).map(|_| rng.uniform_f32(-bound, bound)).collect();
                Dense::new(fan_out, fan_in, weights, vec![0.0; fan_out], act)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::NoLayers);
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim != pair[0].out_dim {
                return Err(NnError::Dimension {
                    expected: pair[0].out_dim,
                    actual: pair[1].in_dim,
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Every parameter, layer by layer, weights before biases.
    pub fn parameters(&self) -> impl Iterator<Item = f32> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn forward(&self, input: &[f32]) -> Result<(Vec<f32>, ForwardCache), NnError> {
        let batch = Batch::new(1, input.len(), input.to_vec())?;
        let (out, cache) = self.forward_batch(&batch)?;
        Ok((out.into_data(), cache))
    }

    pub fn predict(&self, input: &[f32]) -> Result<Vec<f32>, NnError> {
        Ok(self.forward(input)?.0)
    }

    pub fn forward_batch(&self, input: &Batch) -> Result<(Batch, ForwardCache), NnError> {
        if input.cols != self.input_dim() {
            return Err(NnError::Dimension {
                expected: self.input_dim(),
                actual: input.cols,
            });
        }
        if input.data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("network input"));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = input.data.clone();
        for layer in &self.layers {
            let z = affine_forward(&current, layer.in_dim, &layer.weights, &layer.bias);
            let a = layer.activation.apply(&z);
            inputs.push(std::mem::replace(&mut current, a));
            pre_activations.push(z);
        }
        let out = Batch::new(input.rows, self.output_dim(), current)?;
        Ok((
            out,
            ForwardCache {
                rows: input.rows,
                inputs,
                pre_activations,
            },
        ))
    }

    pub fn predict_batch(&self, input: &Batch) -> Result<Batch, NnError> {
        Ok(self.forward_batch(input)?.0)
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f32]) -> Result<(Gradients, Vec<f32>), NnError> {
        let grad = Batch::new(cache.rows, self.output_dim(), output_grad.to_vec())?;
        let (g, dx) = self.backward_batch(cache, &grad)?;
        Ok((g, dx.into_data()))
    }

    /// Parameter gradients summed over the batch, plus per-sample input gradients.
    pub fn backward_batch(&self, cache: &ForwardCache, output_grad: &Batch) -> Result<(Gradients, Batch), NnError> {
        let (params, input) = self.backprop(cache, output_grad, true, true)?;
        Ok((params.expect("requested"), input.expect("requested")))
    }

    pub fn backward_params(&self, cache: &ForwardCache, output_grad: &Batch) -> Result<Gradients, NnError> {
        Ok(self.backprop(cache, output_grad, true, false)?.0.expect("requested"))
    }

    /// Input gradients only, for propagating through a frozen network.
    pub fn backward_input(&self, cache: &ForwardCache, output_grad: &Batch) -> Result<Batch, NnError> {
        Ok(self.backprop(cache, output_grad, false, true)?.1.expect("requested"))
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        output_grad: &Batch,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<Gradients>, Option<Batch>), NnError> {
        if cache.inputs.len() != self.layers.len()
            || self
                .layers
                .iter()
                .zip(&cache.pre_activations)
                .any(|(l, z)| z.len() != cache.rows * l.out_dim)
        {
            return Err(NnError::ShapeMismatch);
        }
        if output_grad.rows != cache.rows || output_grad.cols != self.output_dim() {
            return Err(NnError::Dimension {
                expected: cache.rows * self.output_dim(),
                actual: output_grad.data.len(),
            });
        }
        let mut grads: Vec<LayerGradient> = Vec::with_capacity(self.layers.len());
        let mut grad = output_grad.data.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            layer.activation.backprop(&cache.pre_activations[k], &mut grad);
            if want_params {
                let (weights, bias) = affine_backward_params(&grad, layer.out_dim, &cache.inputs[k], layer.in_dim);
                grads.push(LayerGradient { weights, bias });
            }
            if k > 0 || want_input {
                grad = affine_backward_input(&grad, layer.out_dim, &layer.weights, layer.in_dim);
            }
        }
        grads.reverse();
        let params = want_params.then_some(Gradients { layers: grads });
        let input = if want_input {
            Some(Batch::new(cache.rows, self.input_dim(), grad)?)
        } else {
            None
        };
        Ok((params, input))
    }
}

/// `(1/D) * sum (target - pred)^2` and its gradient `(2/D) * (pred - target)`.
pub fn mse_loss(prediction: &[f32], target: &[f32]) -> Result<(f32, Vec<f32>), NnError> {
    let p = Batch::new(1, prediction.len(), prediction.to_vec())?;
    let t = Batch::new(1, target.len(), target.to_vec())?;
    let (loss, grad) = mse_loss_batch(&p, &t)?;
    Ok((loss, grad.into_data()))
}

/// Mean over samples of the per-sample mean squared error.
pub fn mse_loss_batch(prediction: &Batch, target: &Batch) -> Result<(f32, Batch), NnError> {
    if prediction.rows != target.rows || prediction.cols != target.cols {
        return Err(NnError::Dimension {
            expected: prediction.data.len(),
            actual: target.data.len(),
        });
    }
    let n = (prediction.rows * prediction.cols).max(1);
    let scale = 2.0 / n as f32;
    let mut sum = 0.0f64;
    let grad: Vec<f32> = prediction
        .data
        .iter()
        .zip(&target.data)
        .map(|(&p, &t)| {
            let r = p - t;
            sum += (r as f64) * (r as f64);
            scale * r
        })
        .collect();
    Ok(((sum / n as f64) as f32, Batch::new(prediction.rows, prediction.cols, grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f32, b: f32, act: Activation) -> Mlp {
        Mlp::from_layers(vec![Dense::new(1, 1, vec![w], vec![b], act).unwrap()]).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let sizes = [2, 3];
        let a = Mlp::init(&sizes, &[Activation::Relu], &mut SeededRng::new(42)).unwrap();
        let b = Mlp::init(&sizes, &[Activation::Relu], &mut SeededRng::new(42)).unwrap();
        let bits = |m: &Mlp| m.parameters().map(f32::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.layers()[0].bias().iter().all(|&v| v == 0.0));
        let bound = (6.0f32 / 2.0).sqrt();
        assert!(a.layers()[0].weights().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_rejects_bad_sizes() {
        let mut rng = SeededRng::new(0);
        assert_eq!(Mlp::init(&[3], &[], &mut rng), Err(NnError::NoLayers));
        assert!(matches!(Mlp::init(&[3, 0], &[Activation::Relu], &mut rng), Err(NnError::InvalidSizes(_))));
        assert!(matches!(
            Mlp::init(&[3, 2], &[Activation::Relu, Activation::Linear], &mut rng),
            Err(NnError::ActivationCount { .. })
        ));
    }

    #[test]
    fn forward_examples() {
        assert_eq!(single(1.0, 0.0, Activation::Linear).predict(&[3.0]).unwrap(), vec![3.0]);
        assert_eq!(single(1.0, 0.0, Activation::Relu).predict(&[-1.0]).unwrap(), vec![0.0]);
        let net = Mlp::from_layers(vec![Dense::new(1, 2, vec![1.0, 1.0], vec![0.5], Activation::Linear).unwrap()])
            .unwrap();
        assert_eq!(net.predict(&[1.0, 2.0]).unwrap(), vec![3.5]);
        assert!(matches!(net.predict(&[1.0]), Err(NnError::Dimension { .. })));
        assert_eq!(net.predict(&[f32::NAN, 0.0]), Err(NnError::NonFinite("network input")));
    }

    #[test]
    fn mse_examples() {
        let (loss, grad) = mse_loss(&[0.5, -1.0], &[0.5, -1.0]).unwrap();
        assert_eq!((loss, grad), (0.0, vec![0.0, 0.0]));
        let (loss, grad) = mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad, vec![-1.0, -1.0]);
        let (l1, _) = mse_loss(&[0.3, -0.2], &[0.0, 0.0]).unwrap();
        let (l2, _) = mse_loss(&[0.6, -0.4], &[0.0, 0.0]).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-7);
        assert!(mse_loss(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn backward_by_hand() {
        let net = single(2.0, 0.0, Activation::Linear);
        let (_, cache) = net.forward(&[3.0]).unwrap();
        let (grads, dinput) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(grads.layers[0].weights, vec![3.0]);
        assert_eq!(grads.layers[0].bias, vec![1.0]);
        assert_eq!(dinput, vec![2.0]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let net = Mlp::init(&[4, 5, 3], &[Activation::Relu, Activation::Linear], &mut SeededRng::new(1)).unwrap();
        let (_, cache) = net.forward(&[0.1, -0.2, 0.3, 0.4]).unwrap();
        let (grads, _) = net.backward(&cache, &[0.0; 3]).unwrap();
        assert!(grads.values().all(|v| v == 0.0));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let net = single(1.0, 0.0, Activation::Relu);
        let (_, cache) = net.forward(&[0.0]).unwrap();
        let (grads, dx) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(grads.layers[0].bias, vec![0.0]);
        assert_eq!(dx, vec![0.0]);
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let a = Mlp::init(&[2, 3], &[Activation::Linear], &mut SeededRng::new(1)).unwrap();
        let b = Mlp::init(&[2, 4], &[Activation::Linear], &mut SeededRng::new(1)).unwrap();
        let (_, cache) = a.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(b.backward(&cache, &[0.0; 4]).unwrap_err(), NnError::ShapeMismatch);
        assert!(a.backward(&cache, &[0.0; 4]).is_err());
    }

    #[test]
    fn batch_matches_single_samples() {
        let net = Mlp::init(&[3, 6, 2], &[Activation::Relu, Activation::Linear], &mut SeededRng::new(5)).unwrap();
        let rows = [vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0]];
        let out = net.predict_batch(&Batch::from_rows(&rows).unwrap()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(out.row(i), net.predict(r).unwrap().as_slice());
        }
    }
}
