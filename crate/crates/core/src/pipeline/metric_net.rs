use crate::metrics::MetricStats;
use crate::nn::{Activation, Mlp, SeededRng};

use super::{LatentPose, PipelineError, METRIC_HIDDEN};

/// Maps `latent ++ [standardized target]` to an edited latent.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricNetwork {
    metric: String,
    net: Mlp,
    stats: MetricStats,
}

impl MetricNetwork {
    pub fn new(metric: impl Into<String>, net: Mlp, stats: MetricStats) -> Result<Self, PipelineError> {
        if net.input_dim() != net.output_dim() + 1 {
            return Err(PipelineError::LatentDim {
                expected: net.output_dim() + 1,
                actual: net.input_dim(),
            });
        }
        Ok(Self {
            metric: metric.into(),
            net,
            stats: MetricStats::new(stats.mean, stats.std),
        })
    }

    /// Freshly initialized `(latent + 1) -> 126 -> latent` network.
    pub fn init(metric: impl Into<String>, latent_dim: usize, stats: MetricStats, seed: u64) -> Result<Self, PipelineError> {
        let net = Mlp::init(
            &[latent_dim + 1, METRIC_HIDDEN, latent_dim],
            &[Activation::Relu, Activation::Linear],
            &mut SeededRng::new(seed).fork(10),
        )?;
        Self::new(metric, net, stats)
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn stats(&self) -> MetricStats {
        self.stats
    }

    pub fn latent_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Network input: the latent followed by the standardized target.
    pub fn input(&self, latent: &[f32], target: f64) -> Result<Vec<f32>, PipelineError> {
        if !target.is_finite() {
            return Err(PipelineError::NonFiniteTarget(target));
        }
        if latent.len() != self.latent_dim() {
            return Err(PipelineError::LatentDim {
                expected: self.latent_dim(),
                actual: latent.len(),
            });
        }
        let mut x = Vec::with_capacity(latent.len() + 1);
        x.extend_from_slice(latent);
        x.push(self.stats.standardize(target) as f32);
        Ok(x)
    }

    pub fn apply(&self, latent: &LatentPose, target: f64) -> Result<LatentPose, PipelineError> {
        let x = self.input(&latent.0, target)?;
        Ok(LatentPose(self.net.predict(&x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;

    fn zero_net(latent: usize) -> MetricNetwork {
        let hidden = Dense::new(4, latent + 1, vec![0.0; 4 * (latent + 1)], vec![0.0; 4], Activation::Relu).unwrap();
        let out = Dense::new(latent, 4, vec![0.0; 4 * latent], vec![0.0; latent], Activation::Linear).unwrap();
        MetricNetwork::new("m", Mlp::from_layers(vec![hidden, out]).unwrap(), MetricStats::new(1.0, 0.5)).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero_latent() {
        let net = zero_net(64);
        let z = net.apply(&LatentPose(vec![0.3; 64]), 1.2).unwrap();
        assert_eq!(z, LatentPose(vec![0.0; 64]));
    }

    #[test]
    fn input_layout_and_standardization() {
        let net = zero_net(3);
        assert_eq!(net.input(&[1.0, 2.0, 3.0], 2.0).unwrap(), vec![1.0, 2.0, 3.0, 2.0]);
        assert!(matches!(net.input(&[0.0; 3], f64::NAN), Err(PipelineError::NonFiniteTarget(_))));
        assert!(matches!(net.input(&[0.0; 2], 0.0), Err(PipelineError::LatentDim { .. })));
    }

    #[test]
    fn standard_shape_and_determinism() {
        let net = MetricNetwork::init("m", 64, MetricStats::new(0.0, 1.0), 4).unwrap();
        assert_eq!(net.net().input_dim(), 65);
        assert_eq!(net.net().layers()[0].out_dim(), 126);
        let z = LatentPose((0..64).map(|i| i as f32 / 64.0).collect());
        let a = net.apply(&z, 0.7).unwrap();
        assert_eq!(a.dim(), 64);
        assert_eq!(a, net.apply(&z, 0.7).unwrap());
    }

    #[test]
    fn degenerate_std_is_clamped() {
        let net = MetricNetwork::new("m", zero_net(2).net().clone(), MetricStats { mean: 0.0, std: 0.0 }).unwrap();
        assert_eq!(net.stats().std, crate::skeleton::STD_EPSILON);
        assert!(net.input(&[0.0; 2], 1e-3).unwrap()[2].is_finite());
    }
}
