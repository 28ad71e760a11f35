use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{mix, Result, SynthError};
use crate::ingest::{FlowMap, Raster};
use crate::models::FrameSample;

/// Low-light and flow-corruption parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradeSpec {
    /// Multiplicative brightness gain in `(0, 1]`.
    pub gain: f32,
    /// Gamma exponent applied after the gain, at least 1.
    pub gamma: f32,
    /// Standard deviation of additive Gaussian image noise.
    pub noise_sigma: f32,
    /// Standard deviation of Gaussian noise on each flow component (px).
    pub flow_sigma: f32,
    /// Fraction of flow vectors replaced by zero.
    pub flow_dropout: f64,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn identity() -> Self {
        DegradeSpec { gain: 1.0, gamma: 1.0, noise_sigma: 0.0, flow_sigma: 0.0, flow_dropout: 0.0, seed: 0 }
    }

    /// A dark night-time setting with unreliable optical flow.
    pub fn low_light(seed: u64) -> Self {
        DegradeSpec { gain: 0.2, gamma: 1.0, noise_sigma: 0.02, flow_sigma: 1.5, flow_dropout: 0.3, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SynthError::InvalidSpec(what.to_string()));
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return bad("gain must lie in (0, 1]");
        }
        if !(self.gamma >= 1.0) {
            return bad("gamma must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.flow_sigma >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(0.0..1.0).contains(&self.flow_dropout) {
            return bad("flow dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// `clamp(gain * in^gamma + noise, 0, 1)` with seeded Gaussian noise.
pub fn degrade_low_light(image: &Raster<f32>, spec: &DegradeSpec, seed: u64) -> Result<Raster<f32>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed ^ mix(seed)));
    let noise = Normal::new(0.0f32, spec.noise_sigma).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let mut out = image.clone();
    for v in &mut out.data {
        let dark = spec.gain * v.clamp(0.0, 1.0).powf(spec.gamma);
        *v = (dark + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Adds Gaussian noise to both components of every valid vector, then
/// zeroes a random `flow_dropout` fraction of them.
pub fn degrade_flow(flow: &FlowMap, spec: &DegradeSpec, seed: u64) -> Result<FlowMap> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed ^ mix(seed ^ 0xF10)));
    let noise = Normal::new(0.0f32, spec.flow_sigma).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let mut out = flow.clone();
    for i in 0..out.len() {
        if !out.valid[i] {
            continue;
        }
        out.u[i] += noise.sample(&mut rng);
        out.v[i] += noise.sample(&mut rng);
        if rng.random_bool(spec.flow_dropout) {
            out.u[i] = 0.0;
            out.v[i] = 0.0;
        }
    }
    Ok(out)
}

/// Degrades the camera-derived inputs of one frame (both images and the
/// image flow). LiDAR flow and depth are left untouched.
pub fn degrade_sample(sample: &FrameSample, spec: &DegradeSpec, frame_seed: u64) -> Result<FrameSample> {
    let mut out = sample.clone();
    out.rgb = degrade_low_light(&sample.rgb, spec, frame_seed.wrapping_mul(2))?;
    if let Some(next) = &sample.rgb_next {
        out.rgb_next = Some(degrade_low_light(next, spec, frame_seed.wrapping_mul(2) + 1)?);
    }
    out.rgb_flow = degrade_flow(&sample.rgb_flow, spec, frame_seed)?;
    Ok(out)
}
