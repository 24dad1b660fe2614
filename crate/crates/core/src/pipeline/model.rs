use crate::nn::{Activation, Batch, Mlp, SeededRng};
use crate::skeleton::{NormalizationStats, Pose};

use super::{LatentPose, PipelineError, AUTOENCODER_HIDDEN, LATENT_DIM};

/// Encoder `3J -> 512 -> 64` and decoder `64 -> 512 -> 3J` over normalized poses.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDecoder {
    encoder: Mlp,
    decoder: Mlp,
    stats: NormalizationStats,
}

impl EncoderDecoder {
    pub fn new(encoder: Mlp, decoder: Mlp, stats: NormalizationStats) -> Result<Self, PipelineError> {
        let dim = stats.dim();
        if encoder.input_dim() != dim {
            return Err(PipelineError::Bundle(format!(
                "encoder input {} does not match pose size {dim}",
                encoder.input_dim()
            )));
        }
        if decoder.output_dim() != dim {
            return Err(PipelineError::Bundle(format!(
                "decoder output {} does not match pose size {dim}",
                decoder.output_dim()
            )));
        }
        if encoder.output_dim() != decoder.input_dim() {
            return Err(PipelineError::LatentDim {
                expected: encoder.output_dim(),
                actual: decoder.input_dim(),
            });
        }
        Ok(Self { encoder, decoder, stats })
    }

    /// Freshly initialized model with the standard architecture.
    pub fn init(stats: NormalizationStats, seed: u64) -> Result<Self, PipelineError> {
        Self::init_with(stats, AUTOENCODER_HIDDEN, LATENT_DIM, seed)
    }

    pub fn init_with(stats: NormalizationStats, hidden: usize, latent: usize, seed: u64) -> Result<Self, PipelineError> {
        let root = SeededRng::new(seed);
        let dim = stats.dim();
        let acts = [Activation::Relu, Activation::Linear];
        let encoder = Mlp::init(&[dim, hidden, latent], &acts, &mut root.fork(0))?;
        let decoder = Mlp::init(&[latent, hidden, dim], &acts, &mut root.fork(1))?;
        Self::new(encoder, decoder, stats)
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Mlp, &mut Mlp) {
        (&mut self.encoder, &mut self.decoder)
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn joint_count(&self) -> usize {
        self.stats.dim() / 3
    }

    fn check_pose(&self, pose: &Pose) -> Result<(), PipelineError> {
        if pose.joint_count() != self.joint_count() {
            return Err(PipelineError::JointCount {
                expected: self.joint_count(),
                actual: pose.joint_count(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_latent(&self, latent: &[f32]) -> Result<(), PipelineError> {
        if latent.len() != self.latent_dim() {
            return Err(PipelineError::LatentDim {
                expected: self.latent_dim(),
                actual: latent.len(),
            });
        }
        Ok(())
    }

    /// Normalizes then runs the encoder.
    pub fn encode(&self, pose: &Pose) -> Result<LatentPose, PipelineError> {
        self.check_pose(pose)?;
        let x = self.stats.normalize_pose(pose)?;
        Ok(LatentPose(self.encoder.predict(&x)?))
    }

    /// Runs the decoder then denormalizes.
    pub fn decode(&self, latent: &LatentPose) -> Result<Pose, PipelineError> {
        self.check_latent(&latent.0)?;
        let y = self.decoder.predict(&latent.0)?;
        Ok(self.stats.denormalize_pose(&y)?)
    }

    pub fn encode_batch(&self, poses: &[Pose]) -> Result<Vec<LatentPose>, PipelineError> {
        if poses.is_empty() {
            return Ok(Vec::new());
        }
        let rows = poses
            .iter()
            .map(|p| {
                self.check_pose(p)?;
                Ok(self.stats.normalize_pose(p)?)
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let z = self.encoder.predict_batch(&Batch::from_rows(&rows)?)?;
        Ok(z.iter_rows().map(|r| LatentPose(r.to_vec())).collect())
    }

    pub fn decode_batch(&self, latents: &[LatentPose]) -> Result<Vec<Pose>, PipelineError> {
        if latents.is_empty() {
            return Ok(Vec::new());
        }
        for z in latents {
            self.check_latent(&z.0)?;
        }
        let rows: Vec<&[f32]> = latents.iter().map(|z| z.as_slice()).collect();
        let y = self.decoder.predict_batch(&Batch::from_rows(&rows)?)?;
        y.iter_rows()
            .map(|r| Ok(self.stats.denormalize_pose(r)?))
            .collect()
    }

    /// `decode(encode(pose))`.
    pub fn reconstruct(&self, pose: &Pose) -> Result<Pose, PipelineError> {
        self.decode(&self.encode(pose)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Vec3;

    fn stats(joints: usize) -> NormalizationStats {
        NormalizationStats::new(vec![0.1; joints * 3], vec![0.5; joints * 3]).unwrap()
    }

    #[test]
    fn standard_shapes() {
        let m = EncoderDecoder::init(stats(21), 3).unwrap();
        assert_eq!(m.latent_dim(), 64);
        assert_eq!(m.encoder().layers()[0].out_dim(), 512);
        assert_eq!(m.decoder().layers()[1].out_dim(), 63);
        let pose = Pose::new(vec![Vec3::new(0.0, 1.0, 0.0); 21]).unwrap();
        let z = m.encode(&pose).unwrap();
        assert_eq!(z.dim(), 64);
        assert_eq!(m.encode(&pose).unwrap(), z);
        assert_eq!(m.decode(&z).unwrap().joint_count(), 21);
    }

    #[test]
    fn dimension_errors() {
        let m = EncoderDecoder::init_with(stats(2), 8, 4, 1).unwrap();
        let bad_pose = Pose::new(vec![Vec3::zeros(); 3]).unwrap();
        assert!(matches!(m.encode(&bad_pose), Err(PipelineError::JointCount { .. })));
        assert!(matches!(m.decode(&LatentPose(vec![0.0; 5])), Err(PipelineError::LatentDim { .. })));
    }

    #[test]
    fn batch_agrees_with_single() {
        let m = EncoderDecoder::init_with(stats(2), 8, 4, 1).unwrap();
        let poses: Vec<Pose> = (0..3)
            .map(|i| Pose::new(vec![Vec3::new(i as f64, 0.5, 0.0), Vec3::new(0.0, 1.0, -(i as f64))]).unwrap())
            .collect();
        let zs = m.encode_batch(&poses).unwrap();
        for (p, z) in poses.iter().zip(&zs) {
            assert_eq!(&m.encode(p).unwrap(), z);
            assert_eq!(m.decode(z).unwrap(), m.decode_batch(std::slice::from_ref(z)).unwrap()[0]);
        }
    }
}
