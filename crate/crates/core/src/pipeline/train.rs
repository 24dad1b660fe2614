use crate::dataset::Dataset;
use crate::metrics::{MetricRegistry, MetricStats};
use crate::nn::{mse_loss_batch, AdamState, Batch, Mlp, SeededRng};

use super::{EncoderDecoder, MetricNetwork, PipelineError};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    /// Frame offsets are drawn from `[-max_offset, max_offset]`.
    pub max_offset: usize,
    pub steps: usize,
    pub seed: u64,
    /// Validation loss is measured every `eval_every` steps.
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: usize,
    pub min_improvement: f32,
    pub validation_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 1024,
            max_offset: 10,
            steps: 2000,
            seed: 0,
            eval_every: 50,
            patience: 10,
            min_improvement: 1e-5,
            validation_size: 1024,
        }
    }
}

/// Default step budget for metric networks. Their loss keeps falling well
/// past the autoencoder's budget, so they get longer to converge.
pub const METRIC_TRAINING_STEPS: usize = 8000;

impl TrainingConfig {
    /// Same optimizer settings as the default, with the metric-network budget.
    pub fn for_metric_network() -> Self {
        Self {
            steps: METRIC_TRAINING_STEPS,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: &str| Err(PipelineError::Config(msg.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail("learning rate must be finite and non-negative");
        }
        if self.batch_size < 1 {
            return fail("batch size must be at least 1");
        }
        if self.max_offset < 1 {
            return fail("offset range must be nonzero");
        }
        if self.eval_every < 1 {
            return fail("evaluation interval must be at least 1");
        }
        if self.patience < 1 {
            return fail("patience must be at least 1");
        }
        if !(self.min_improvement.is_finite() && self.min_improvement >= 0.0) {
            return fail("minimum improvement must be finite and non-negative");
        }
        if self.validation_size < 1 {
            return fail("validation size must be at least 1");
        }
        Ok(())
    }
}

/// Loss history of one training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Training loss of each step, measured before the update.
    pub losses: Vec<f32>,
    /// `(step, loss)` on the fixed validation batch, including step 0 and the final step.
    pub validation: Vec<(usize, f32)>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn initial_validation(&self) -> Option<f32> {
        self.validation.first().map(|v| v.1)
    }

    pub fn final_validation(&self) -> Option<f32> {
        self.validation.last().map(|v| v.1)
    }

    /// `step,loss` rows for every training step.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "loss"]).expect("in-memory write");
        for (step, loss) in self.losses.iter().enumerate() {
            w.write_record([step.to_string(), loss.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

struct EarlyStop {
    best: f32,
    stale: usize,
    patience: usize,
    min_improvement: f32,
}

impl EarlyStop {
    fn new(initial: f32, config: &TrainingConfig) -> Self {
        Self {
            best: initial,
            stale: 0,
            patience: config.patience,
            min_improvement: config.min_improvement,
        }
    }

    /// Records an evaluation; true when training should stop.
    fn observe(&mut self, loss: f32) -> bool {
        if loss < self.best - self.min_improvement {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

fn check_loss(step: usize, loss: f32) -> Result<(), PipelineError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(PipelineError::Diverged { step, loss })
    }
}

fn gather(rows: &[Vec<f32>], indices: &[usize]) -> Result<Batch, PipelineError> {
    let picked: Vec<&[f32]> = indices.iter().map(|&i| rows[i].as_slice()).collect();
    Ok(Batch::from_rows(&picked)?)
}

fn autoencoder_loss(encoder: &Mlp, decoder: &Mlp, input: &Batch) -> Result<f32, PipelineError> {
    let z = encoder.predict_batch(input)?;
    let y = decoder.predict_batch(&z)?;
    Ok(mse_loss_batch(&y, input)?.0)
}

/// Trains a freshly initialized encoder/decoder on the dataset's normalized poses.
pub fn train_autoencoder(dataset: &Dataset, config: &TrainingConfig) -> Result<(EncoderDecoder, TrainReport), PipelineError> {
    let model = EncoderDecoder::init(dataset.stats.clone(), config.seed)?;
    train_autoencoder_from(model, dataset, config)
}

/// Continues training `model`, minimizing the mean squared reconstruction error.
pub fn train_autoencoder_from(
    mut model: EncoderDecoder,
    dataset: &Dataset,
    config: &TrainingConfig,
) -> Result<(EncoderDecoder, TrainReport), PipelineError> {
    config.validate()?;
    if dataset.pose_count() == 0 {
        return Err(PipelineError::EmptyDataset);
    }
    if dataset.skeleton.joint_count() != model.joint_count() {
        return Err(PipelineError::JointCount {
            expected: model.joint_count(),
            actual: dataset.skeleton.joint_count(),
        });
    }
    let stats = model.stats().clone();
    let rows = dataset
        .poses()
        .map(|p| stats.normalize_pose(p))
        .collect::<Result<Vec<_>, _>>()?;

    let root = SeededRng::new(config.seed);
    let mut sampler = root.fork(2);
    let mut val_rng = root.fork(3);
    let val_indices: Vec<usize> = (0..config.validation_size).map(|_| val_rng.below(rows.len())).collect();
    let val_batch = gather(&rows, &val_indices)?;

    let (encoder, decoder) = model.parts_mut();
    let mut adam_e = AdamState::new(encoder, config.learning_rate);
    let mut adam_d = AdamState::new(decoder, config.learning_rate);
    let mut report = TrainReport::default();

    let initial = autoencoder_loss(encoder, decoder, &val_batch)?;
    check_loss(0, initial)?;
    report.validation.push((0, initial));
    let mut stopper = EarlyStop::new(initial, config);

    let mut indices = vec![0usize; config.batch_size];
    for step in 0..config.steps {
        for i in indices.iter_mut() {
            *i = sampler.below(rows.len());
        }
        let input = gather(&rows, &indices)?;
        let (z, cache_e) = encoder.forward_batch(&input)?;
        let (y, cache_d) = decoder.forward_batch(&z)?;
        let (loss, grad) = mse_loss_batch(&y, &input)?;
        check_loss(step, loss)?;
        report.losses.push(loss);

        let (grads_d, dz) = decoder.backward_batch(&cache_d, &grad)?;
        let grads_e = encoder.backward_params(&cache_e, &dz)?;
        adam_d.step(decoder, &grads_d)?;
        adam_e.step(encoder, &grads_e)?;

        let done = step + 1;
        if done % config.eval_every == 0 || done == config.steps {
            let val = autoencoder_loss(encoder, decoder, &val_batch)?;
            check_loss(done, val)?;
            report.validation.push((done, val));
            if stopper.observe(val) && done < config.steps {
                log::info!("autoencoder: early stop at step {done}, validation loss {val}");
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok((model, report))
}

struct Frame {
    clip: usize,
    t: usize,
}

struct MetricData<'a> {
    frames: Vec<Frame>,
    /// Start of each clip in the global frame arrays, and its length.
    clips: Vec<(usize, usize)>,
    latents: Vec<Vec<f32>>,
    normalized: Vec<Vec<f32>>,
    standardized: Vec<Option<f32>>,
    max_offset: i64,
    metric: &'a str,
}

impl MetricData<'_> {
    /// Draws `(source, target)` global indices, re-sampling offsets that leave
    /// the clip and targets whose metric could not be evaluated.
    fn sample(&self, rng: &mut SeededRng, skipped: &mut usize) -> (usize, usize) {
        loop {
            let f = &self.frames[rng.below(self.frames.len())];
            let (start, len) = self.clips[f.clip];
            let target = loop {
                let n = rng.int_inclusive(-self.max_offset, self.max_offset);
                let t = f.t as i64 + n;
                if (0..len as i64).contains(&t) {
                    break t as usize;
                }
            };
            let target = start + target;
            if self.standardized[target].is_some() {
                return (start + f.t, target);
            }
            *skipped += 1;
            log::debug!("{}: skipping target frame {target}, metric undefined", self.metric);
        }
    }

    fn batch(&self, pairs: &[(usize, usize)]) -> Result<(Batch, Batch), PipelineError> {
        let inputs: Vec<Vec<f32>> = pairs
            .iter()
            .map(|&(s, t)| {
                let mut row = self.latents[s].clone();
                row.push(self.standardized[t].expect("sampled targets have metric values"));
                row
            })
            .collect();
        let targets: Vec<&[f32]> = pairs.iter().map(|&(_, t)| self.normalized[t].as_slice()).collect();
        Ok((Batch::from_rows(&inputs)?, Batch::from_rows(&targets)?))
    }
}

fn metric_loss(net: &Mlp, decoder: &Mlp, input: &Batch, target: &Batch) -> Result<f32, PipelineError> {
    let z = net.predict_batch(input)?;
    let y = decoder.predict_batch(&z)?;
    Ok(mse_loss_batch(&y, target)?.0)
}

/// Trains a metric network through the frozen decoder.
///
/// Each sample pairs frame `t` with frame `t + n` of the same clip. The network
/// sees the latent of frame `t` and the metric of frame `t + n`, and its output
/// is decoded and compared with the normalized frame `t + n`.
pub fn train_metric_network(
    model: &EncoderDecoder,
    registry: &MetricRegistry,
    metric: &str,
    dataset: &Dataset,
    config: &TrainingConfig,
) -> Result<(MetricNetwork, TrainReport), PipelineError> {
    config.validate()?;
    let def = registry.get(metric)?;
    if dataset.skeleton.joint_count() != model.joint_count() {
        return Err(PipelineError::JointCount {
            expected: model.joint_count(),
            actual: dataset.skeleton.joint_count(),
        });
    }
    if dataset.pose_count() == 0 {
        return Err(PipelineError::EmptyDataset);
    }

    let mut frames = Vec::new();
    let mut clips = Vec::with_capacity(dataset.clips.len());
    let mut start = 0;
    for (c, clip) in dataset.clips.iter().enumerate() {
        clips.push((start, clip.len()));
        if clip.len() >= 2 {
            frames.extend((0..clip.len()).map(|t| Frame { clip: c, t }));
        } else {
            log::warn!("{metric}: clip `{}` has {} frame(s), skipped", clip.id, clip.len());
        }
        start += clip.len();
    }
    if frames.is_empty() {
        return Err(PipelineError::ClipTooShort);
    }

    let poses: Vec<_> = dataset.poses().cloned().collect();
    let values: Vec<Option<f64>> = poses
        .iter()
        .map(|p| match def.evaluate(&dataset.skeleton, p) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("{metric}: {e}");
                None
            }
        })
        .collect();
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(crate::metrics::MetricError::EmptyDataset.into());
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let stats = MetricStats::new(mean, var.sqrt());

    let stats_n = model.stats();
    let data = MetricData {
        frames,
        clips,
        latents: model.encode_batch(&poses)?.into_iter().map(|z| z.0).collect(),
        normalized: poses
            .iter()
            .map(|p| stats_n.normalize_pose(p))
            .collect::<Result<Vec<_>, _>>()?,
        standardized: values.iter().map(|v| v.map(|v| stats.standardize(v) as f32)).collect(),
        max_offset: config.max_offset as i64,
        metric,
    };

    let mut network = MetricNetwork::init(metric, model.latent_dim(), stats, config.seed)?;
    let root = SeededRng::new(config.seed);
    let mut sampler = root.fork(12);
    let mut val_rng = root.fork(13);
    let mut skipped = 0usize;
    let val_pairs: Vec<_> = (0..config.validation_size)
        .map(|_| data.sample(&mut val_rng, &mut skipped))
        .collect();
    let (val_in, val_target) = data.batch(&val_pairs)?;

    let decoder = model.decoder();
    let net = network.net_mut();
    let mut adam = AdamState::new(net, config.learning_rate);
    let mut report = TrainReport::default();
    let initial = metric_loss(net, decoder, &val_in, &val_target)?;
    check_loss(0, initial)?;
    report.validation.push((0, initial));
    let mut stopper = EarlyStop::new(initial, config);

    let mut pairs = Vec::with_capacity(config.batch_size);
    for step in 0..config.steps {
        pairs.clear();
        pairs.extend((0..config.batch_size).map(|_| data.sample(&mut sampler, &mut skipped)));
        let (input, target) = data.batch(&pairs)?;
        let (z, cache_m) = net.forward_batch(&input)?;
        let (y, cache_d) = decoder.forward_batch(&z)?;
        let (loss, grad) = mse_loss_batch(&y, &target)?;
        check_loss(step, loss)?;
        report.losses.push(loss);

        let dz = decoder.backward_input(&cache_d, &grad)?;
        let grads = net.backward_params(&cache_m, &dz)?;
        adam.step(net, &grads)?;

        let done = step + 1;
        if done % config.eval_every == 0 || done == config.steps {
            let val = metric_loss(net, decoder, &val_in, &val_target)?;
            check_loss(done, val)?;
            report.validation.push((done, val));
            if stopper.observe(val) && done < config.steps {
                log::info!("{metric}: early stop at step {done}, validation loss {val}");
                report.stopped_early = true;
                break;
            }
        }
    }
    if skipped > 0 {
        log::warn!("{metric}: skipped {skipped} sampled target(s) with undefined metric");
    }
    Ok((network, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::SPINE_FLEXION;
    use crate::nn::weights_to_bytes;
    use crate::skeleton::{AnimationClip, Pose, Skeleton, Vec3};

    fn tiny_dataset(frames: usize) -> Dataset {
        let skeleton = Skeleton::default_humanoid();
        let clip_poses = |phase: f64| {
            (0..frames)
                .map(|t| {
                    let a = phase + t as f64 * 0.1;
                    let base: Vec<Vec3> = skeleton
                        .joints()
                        .iter()
                        .enumerate()
                        .map(|(j, _)| Vec3::new(0.1 * j as f64 * a.sin(), 1.0 + 0.05 * j as f64, 0.2 * a.cos() * j as f64 / 21.0))
                        .collect();
                    Pose::new(base).unwrap()
                })
                .collect::<Vec<_>>()
        };
        let clips = vec![
            AnimationClip::new("a", 30.0, clip_poses(0.0)).unwrap(),
            AnimationClip::new("b", 30.0, clip_poses(1.0)).unwrap(),
        ];
        Dataset::with_computed_stats(skeleton, clips).unwrap()
    }

    fn small_config(steps: usize) -> TrainingConfig {
        TrainingConfig {
            batch_size: 16,
            steps,
            eval_every: 5,
            validation_size: 32,
            learning_rate: 1e-3,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        for bad in [
            TrainingConfig { batch_size: 0, ..Default::default() },
            TrainingConfig { max_offset: 0, ..Default::default() },
            TrainingConfig { learning_rate: f32::NAN, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(PipelineError::Config(_))));
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let data = tiny_dataset(12);
        let model = EncoderDecoder::init_with(data.stats.clone(), 16, 8, 1).unwrap();
        let config = TrainingConfig { learning_rate: 0.0, ..small_config(1) };
        let (trained, report) = train_autoencoder_from(model.clone(), &data, &config).unwrap();
        assert_eq!(trained, model);
        assert_eq!(report.losses.len(), 1);
    }

    #[test]
    fn autoencoder_is_deterministic_and_learns() {
        let data = tiny_dataset(30);
        let config = small_config(60);
        let run = || train_autoencoder_from(EncoderDecoder::init_with(data.stats.clone(), 32, 8, 5).unwrap(), &data, &config).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(ra.to_csv(), rb.to_csv());
        assert_eq!(weights_to_bytes(a.encoder()), weights_to_bytes(b.encoder()));
        assert!(ra.final_validation().unwrap() < ra.initial_validation().unwrap());
        assert!(ra.to_csv().starts_with("step,loss\n0,"));
    }

    #[test]
    fn metric_training_freezes_autoencoder() {
        let data = tiny_dataset(20);
        let model = EncoderDecoder::init_with(data.stats.clone(), 16, 8, 2).unwrap();
        let before = (weights_to_bytes(model.encoder()), weights_to_bytes(model.decoder()));
        let registry = MetricRegistry::with_builtins();
        let (net, report) = train_metric_network(&model, &registry, SPINE_FLEXION, &data, &small_config(10)).unwrap();
        assert_eq!(before, (weights_to_bytes(model.encoder()), weights_to_bytes(model.decoder())));
        assert_eq!(net.net().input_dim(), 9);
        assert_eq!(report.losses.len(), 10);
    }

    #[test]
    fn metric_training_errors() {
        let data = tiny_dataset(1);
        let model = EncoderDecoder::init_with(data.stats.clone(), 16, 8, 2).unwrap();
        let registry = MetricRegistry::with_builtins();
        assert!(matches!(
            train_metric_network(&model, &registry, SPINE_FLEXION, &data, &small_config(1)),
            Err(PipelineError::ClipTooShort)
        ));
        assert!(matches!(
            train_metric_network(&model, &registry, "elbow", &data, &small_config(1)),
            Err(PipelineError::Metric(_))
        ));
    }

    #[test]
    fn early_stop_counts_stale_evaluations() {
        let config = TrainingConfig { patience: 2, min_improvement: 0.1, ..Default::default() };
        let mut s = EarlyStop::new(1.0, &config);
        assert!(!s.observe(0.5));
        assert!(!s.observe(0.45));
        assert!(s.observe(0.44));
    }
}
