//! Central finite-difference verification of tape gradients.
//!
//! The checker samples parameter entries uniformly across a model's named
//! matrices, perturbs each by ±h, and compares the numeric slope against
//! the analytic gradient. Agreement is judged with a relative tolerance plus
//! an absolute floor, the same shape as `allclose`: the central difference
//! resolves slopes only down to roughly (loss rounding error)/h, so a
//! |numeric - analytic| gap under `ABS_FLOOR` is below what the measurement
//! can distinguish and counts as agreement.
//!
//! A sample that misses the tolerance is re-measured with smaller steps
//! before it is reported. Networks with rectifier nonlinearities are only
//! piecewise smooth: when a pre-activation kink falls inside [x-h, x+h] the
//! central difference blends the slopes of the two pieces and no longer
//! estimates the derivative at x, at any fixed h. Shrinking h moves the kink
//! out of the interval and the artifact collapses, while a genuinely wrong
//! analytic gradient keeps disagreeing at every step size.

use super::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Relative-error budget used by the test suites and the CLI check.
pub const GRAD_CHECK_TOL: f64 = 1e-4;

/// Probe steps, widest first; later ones are only tried when the sample
/// misses the tolerance at the previous step.
const STEPS: [f64; 3] = [3e-5, 7.5e-6, 1.5e-6];
const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub samples: usize,
    pub max_rel_err: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
}

impl GradCheckReport {
    pub fn passes(&self) -> bool {
        self.max_rel_err < GRAD_CHECK_TOL
    }
}

/// Check `samples` randomly chosen parameter entries of `model`.
///
/// `named_mut` exposes the model's parameter matrices; `loss_and_grads`
/// evaluates the loss at the current parameters and returns its analytic
/// gradients keyed by the same names (parameters with no gradient path are
/// treated as zero).
pub fn finite_diff_check<M>(
    model: &mut M,
    named_mut: &mut dyn FnMut(&mut M) -> Vec<(&'static str, &mut Matrix)>,
    loss_and_grads: &mut dyn FnMut(&M) -> (f64, BTreeMap<String, Matrix>),
    samples: usize,
    seed: u64,
) -> GradCheckReport {
    let (_, grads) = loss_and_grads(model);
    let sizes: Vec<(&'static str, usize)> =
        named_mut(model).into_iter().map(|(n, m)| (n, m.data.len())).collect();
    let total: usize = sizes.iter().map(|(_, l)| l).sum();
    assert!(total > 0, "model has no parameters");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report =
        GradCheckReport { samples, max_rel_err: 0.0, worst: "(none)".to_string() };
    for _ in 0..samples {
        let mut flat = rng.gen_range(0..total);
        let mut pick = 0;
        while flat >= sizes[pick].1 {
            flat -= sizes[pick].1;
            pick += 1;
        }
        let (name, idx) = (sizes[pick].0, flat);

        let poke = |model: &mut M, named: &mut dyn FnMut(&mut M) -> Vec<(&'static str, &mut Matrix)>, delta: f64| {
            let mut mats = named(model);
            mats[pick].1.data[idx] += delta;
        };
        let analytic = grads.get(name).map_or(0.0, |g| g.data[idx]);
        let mut rel = f64::INFINITY;
        for &h in &STEPS {
            poke(model, named_mut, h);
            let plus = loss_and_grads(model).0;
            poke(model, named_mut, -2.0 * h);
            let minus = loss_and_grads(model).0;
            poke(model, named_mut, h);

            let numeric = (plus - minus) / (2.0 * h);
            let diff = (numeric - analytic).abs();
            let scale = numeric.abs().max(analytic.abs());
            let at_h = if diff <= ABS_FLOOR { 0.0 } else { diff / scale };
            rel = rel.min(at_h);
            if rel < GRAD_CHECK_TOL {
                break;
            }
        }
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = format!("{name}[{idx}]");
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::model::{grads_by_name, EncoderCfg, TextEncoderParams};
    use crate::encoder::tape::Tape;

    #[test]
    fn text_encoder_squared_norm_gradients_check_out() {
        let cfg = EncoderCfg {
            vocab: 48,
            text_width: 10,
            embed_dim: 6,
            graph_width: 8,
            max_tokens: 12,
            classes: 4,
        };
        let mut p = TextEncoderParams::init(cfg, 13);
        let tokens = vec![3usize, 17, 5, 3, 40, 8];
        let report = finite_diff_check(
            &mut p,
            &mut |m| m.named_mut(),
            &mut |m| {
                let mut t = Tape::new();
                let b = m.bind(&mut t);
                let out = b.encode(&mut t, &tokens).unwrap();
                let sq = t.square(out);
                let half = t.mean_all(sq);
                let loss = t.scale(half, cfg.embed_dim as f64 / 2.0); // ½‖out‖²
                let mut grads = t.backward(loss);
                (t.scalar(loss), grads_by_name(&b.ids(), &mut grads))
            },
            150,
            99,
        );
        assert!(
            report.passes(),
            "max rel err {} at {}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn constant_loss_has_zero_gradients_everywhere() {
        let cfg = EncoderCfg {
            vocab: 16,
            text_width: 4,
            embed_dim: 3,
            graph_width: 4,
            max_tokens: 4,
            classes: 2,
        };
        let mut p = TextEncoderParams::init(cfg, 1);
        let report = finite_diff_check(
            &mut p,
            &mut |m| m.named_mut(),
            &mut |_| {
                let mut t = Tape::new();
                let c = t.leaf(Matrix::filled(1, 1, 2.5));
                let loss = t.mean_all(c);
                (t.scalar(loss), BTreeMap::new())
            },
            60,
            5,
        );
        assert_eq!(report.max_rel_err, 0.0);
    }
}
