use std::f64::consts::PI;
use std::str::FromStr;

use super::PipelineError;

/// Per-frame blend factors in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCurve {
    weights: Vec<f64>,
}

impl WeightCurve {
    pub fn new(weights: Vec<f64>) -> Result<Self, PipelineError> {
        if let Some(bad) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(PipelineError::InvalidCurve(format!("weight {bad} outside [0, 1]")));
        }
        Ok(Self { weights })
    }

    pub fn constant(frames: usize, weight: f64) -> Result<Self, PipelineError> {
        Self::new(vec![weight; frames])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, frame: usize) -> f64 {
        self.weights[frame]
    }

    /// Frames with a nonzero weight.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveShape {
    Hat,
    Sine,
}

impl CurveShape {
    pub fn build(self, frames: usize, peak: usize, radius: usize) -> Result<WeightCurve, PipelineError> {
        match self {
            CurveShape::Hat => hat_curve(frames, peak, radius),
            CurveShape::Sine => sine_curve(frames, peak, radius),
        }
    }
}

impl FromStr for CurveShape {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hat" => Ok(CurveShape::Hat),
            "sine" => Ok(CurveShape::Sine),
            other => Err(PipelineError::InvalidCurve(format!("unknown curve shape `{other}`"))),
        }
    }
}

fn check(frames: usize, peak: usize, radius: usize) -> Result<(), PipelineError> {
    if peak >= frames {
        return Err(PipelineError::InvalidCurve(format!(
            "peak frame {peak} outside clip of {frames} frames"
        )));
    }
    if radius < 1 {
        return Err(PipelineError::InvalidCurve("radius must be at least 1".into()));
    }
    Ok(())
}

fn shaped(frames: usize, peak: usize, radius: usize, f: impl Fn(f64) -> f64) -> Result<WeightCurve, PipelineError> {
    check(frames, peak, radius)?;
    let weights = (0..frames)
        .map(|t| {
            let k = t.abs_diff(peak);
            if k >= radius {
                0.0
            } else {
                f(k as f64 / radius as f64)
            }
        })
        .collect();
    WeightCurve::new(weights)
}

/// 1 at `peak`, falling linearly to 0 at `peak ± radius`, 0 beyond.
pub fn hat_curve(frames: usize, peak: usize, radius: usize) -> Result<WeightCurve, PipelineError> {
    shaped(frames, peak, radius, |x| 1.0 - x)
}

/// Raised-cosine variant with the same endpoints as `hat_curve`.
pub fn sine_curve(frames: usize, peak: usize, radius: usize) -> Result<WeightCurve, PipelineError> {
    shaped(frames, peak, radius, |x| 0.5 * (1.0 + (PI * x).cos()))
}
