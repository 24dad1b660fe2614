use super::{Gradients, Mlp, NnError};

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPSILON: f32 = 1e-8;

/// Adam moments for one network, with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    learning_rate: f32,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(mlp: &Mlp, learning_rate: f32) -> Self {
        Self {
            learning_rate,
            step: 0,
            first: Gradients::zeros_like(mlp),
            second: Gradients::zeros_like(mlp),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f32 {
        self.learning_rate
    }

    /// Applies one update in place. Nothing changes if validation fails.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients) -> Result<(), NnError> {
        if !grads.matches(mlp) || !self.first.matches(mlp) {
            return Err(NnError::ShapeMismatch);
        }
        if !grads.is_finite() {
            return Err(NnError::NonFinite("gradients"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = (1.0 - (ADAM_BETA1 as f64).powi(t)) as f32;
        let bc2 = (1.0 - (ADAM_BETA2 as f64).powi(t)) as f32;
        let lr = self.learning_rate;

        for (((layer, g), m), v) in mlp
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            let (weights, bias) = layer.params_mut();
            update(weights, &g.weights, &mut m.weights, &mut v.weights, lr, bc1, bc2);
            update(bias, &g.bias, &mut m.bias, &mut v.bias, lr, bc1, bc2);
        }
        Ok(())
    }
}

fn update(params: &mut [f32], grads: &[f32], m: &mut [f32], v: &mut [f32], lr: f32, bc1: f32, bc2: f32) {
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, LayerGradient};

    fn scalar_net(w: f32) -> Mlp {
        Mlp::from_layers(vec![Dense::new(1, 1, vec![w], vec![0.0], Activation::Linear).unwrap()]).unwrap()
    }

    fn grad(w: f32, b: f32) -> Gradients {
        Gradients {
            layers: vec![LayerGradient {
                weights: vec![w],
                bias: vec![b],
            }],
        }
    }

    #[test]
    fn first_step_by_hand() {
        // t=1: m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps)
        let expected = -1e-4f64 * 0.5 / (0.5 + 1e-8);
        assert!((expected - -9.9999998e-5).abs() < 1e-12);
        let mut net = scalar_net(0.0);
        let mut adam = AdamState::new(&net, 1e-4);
        adam.step(&mut net, &grad(0.5, 0.0)).unwrap();
        let w = net.layers()[0].weights()[0] as f64;
        assert!((w - expected).abs() < 1e-9, "{w}");
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar_net(0.7);
        let before = net.clone();
        let mut adam = AdamState::new(&net, 1e-3);
        for _ in 0..50 {
            adam.step(&mut net, &grad(0.0, 0.0)).unwrap();
        }
        assert_eq!(net, before);
    }

    #[test]
    fn rejects_bad_gradients_without_mutation() {
        let mut net = scalar_net(0.7);
        let mut adam = AdamState::new(&net, 1e-3);
        assert_eq!(adam.step(&mut net, &grad(f32::NAN, 0.0)), Err(NnError::NonFinite("gradients")));
        let wrong = Gradients { layers: vec![] };
        assert_eq!(adam.step(&mut net, &wrong), Err(NnError::ShapeMismatch));
        assert_eq!(adam.step_count(), 0);
        assert_eq!(net.layers()[0].weights(), &[0.7]);
    }

    #[test]
    fn permuting_parameters_permutes_updates() {
        let w = vec![0.1, -0.2, 0.3, 0.4];
        let g = vec![0.5, -0.01, 2.0, 0.0];
        let perm = [2usize, 0, 3, 1];
        let net_of = |w: Vec<f32>| {
            Mlp::from_layers(vec![Dense::new(1, 4, w, vec![0.0], Activation::Linear).unwrap()]).unwrap()
        };
        let grads_of = |g: Vec<f32>| Gradients {
            layers: vec![LayerGradient { weights: g, bias: vec![0.0] }],
        };
        let mut a = net_of(w.clone());
        let mut b = net_of(perm.iter().map(|&i| w[i]).collect());
        let mut sa = AdamState::new(&a, 1e-2);
        let mut sb = AdamState::new(&b, 1e-2);
        for _ in 0..3 {
            sa.step(&mut a, &grads_of(g.clone())).unwrap();
            sb.step(&mut b, &grads_of(perm.iter().map(|&i| g[i]).collect())).unwrap();
        }
        let wa = a.layers()[0].weights();
        let wb = b.layers()[0].weights();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(wb[k].to_bits(), wa[i].to_bits());
        }
    }
}
