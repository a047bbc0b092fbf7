use rand::{seq::index::sample, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grammar::Activation;

use super::{Gradients, Network, Sample};

/// Pre-activations closer than this to the relu kink make a weight's
/// finite difference unreliable; such weights are skipped.
const RELU_KINK: f64 = 1e-3;

/// Denominator floor for the relative error, so near-zero gradients are
/// judged by absolute error.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max |a - n| / max(|a|, |n|, 1e-6) over checked weights.
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    pub checked: usize,
    pub skipped: usize,
}

fn loss(net: &Network, s: &Sample, ws: &mut super::Workspace) -> f64 {
    net.forward_into(&s.features, ws);
    net.loss_of(ws, s.label)
}

/// Relu pre-activations of the sample last run through `ws`.
fn relu_inputs(net: &Network, ws: &super::Workspace) -> Vec<f64> {
    net.layers
        .iter()
        .zip(&ws.zs)
        .filter(|(l, _)| l.activation == Some(Activation::Relu))
        .flat_map(|(_, z)| z.iter().copied())
        .collect()
}

/// Compares backprop gradients of the sample's loss with central
/// differences `(f(w + eps) - f(w - eps)) / 2 eps` on a seeded subsample of
/// `count` parameters (all of them if the network is smaller).
pub fn gradient_check(net: &Network, s: &Sample, eps: f64, count: usize, seed: u64) -> GradCheckReport {
    assert!(eps > 0.0, "eps must be positive");
    let mut ws = net.workspace();
    let mut grads = Gradients::zeros_like(net);
    net.forward_into(&s.features, &mut ws);
    net.backward_into(s.label, &mut ws, &mut grads);
    let analytic = grads.flat();

    let total = net.parameter_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, count.min(total)).into_vec();
    picks.sort_unstable();

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_analytic: 0.0,
        max_abs_numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in picks {
        let w = *probe.parameter_mut(i);
        *probe.parameter_mut(i) = w + eps;
        let up = loss(&probe, s, &mut ws);
        let z_up = relu_inputs(&probe, &ws);
        *probe.parameter_mut(i) = w - eps;
        let down = loss(&probe, s, &mut ws);
        let z_down = relu_inputs(&probe, &ws);
        *probe.parameter_mut(i) = w;

        let near_kink = z_up
            .iter()
            .zip(&z_down)
            .any(|(a, b)| a != b && (a.abs() < RELU_KINK || b.abs() < RELU_KINK || (a > &0.0) != (b > &0.0)));
        if near_kink {
            report.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.max_abs_analytic = report.max_abs_analytic.max(a.abs());
        report.max_abs_numeric = report.max_abs_numeric.max(numeric.abs());
        report.checked += 1;
    }
    report
}
