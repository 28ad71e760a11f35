//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
    /// Inputs larger than this are checked on a random subset of coordinates.
    pub max_coords_per_input: usize,
    /// Denominator floor for the relative error, so that coordinates whose
    /// true derivative is zero are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            max_coords_per_input: 2048,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    /// `(analytic, numeric)` derivative at `worst`.
    pub worst_values: Option<(f64, f64)>,
    pub coords_checked: usize,
}

/// Checks `op` at `inputs` with the default configuration and step `h`;
/// returns the maximum relative error.
pub fn grad_check<F>(op: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let cfg = GradCheckConfig { h, ..GradCheckConfig::default() };
    Ok(grad_check_with(op, inputs, cfg)?.max_rel_error)
}

/// Compares the tape's vector-Jacobian product against central differences.
///
/// The output is contracted with a fixed random direction `r`, so the checked
/// scalar is `⟨op(inputs), r⟩` and every input coordinate gets a directional
/// derivative to compare.
pub fn grad_check_with<F>(op: F, inputs: &[Tensor], cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = op(&mut tape, &vars)?;
    let direction = Tensor::randn(tape.shape(out), 1.0, &mut rng);
    let grads = tape.backward(out, direction.clone())?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone())).collect();
        let o = op(&mut t, &vs)?;
        Ok(t.value(o).dot(&direction))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: None,
        coords_checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let coords: Vec<usize> = if input.len() <= cfg.max_coords_per_input {
            (0..input.len()).collect()
        } else {
            let mut c = sample(&mut rng, input.len(), cfg.max_coords_per_input).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let orig = input.data()[i];
            work[k].data_mut()[i] = orig + cfg.h;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - cfg.h;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((k, i));
                report.worst_values = Some((a, numeric));
            }
        }
    }
    Ok(report)
}
