//! Multi-start least-squares fitting of hierarchical networks.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lm::{minimize, LmConfig, ResidualProblem};
use super::{HierarchicalNetwork, NetworkArchitecture};
use crate::error::{Error, Result};

/// Result of a multi-start fit.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub network: HierarchicalNetwork,
    /// Value of the fitted objective (the weighted empirical L2 risk).
    pub objective: f64,
    /// Index of the winning start (0 is the all-zero start).
    pub start_index: usize,
    /// Objective values of the winning start's accepted steps.
    pub accepted_trace: Vec<f64>,
}

fn check_finite(rows: &[DVector<f64>], targets: &[f64]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData(format!("input {i} is not finite")));
        }
    }
    for (i, t) in targets.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFiniteData(format!("target {i} is not finite")));
        }
    }
    Ok(())
}

fn flatten(rows: &[DVector<f64>], d: usize) -> Result<Vec<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * d);
    for row in rows {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        flat.extend_from_slice(row.as_slice());
    }
    Ok(flat)
}

/// Runs the multi-start schedule on an assembled problem: start 0 is the
/// all-zero network, the remaining starts are uniform in
/// `[-init_range, init_range]`. Starts are drawn sequentially from `rng`
/// (so results do not depend on the worker count) and optimized in
/// parallel; ties go to the lower start index.
fn multi_start_fit(
    arch: &NetworkArchitecture,
    inputs: &[f64],
    targets: &[f64],
    sqrt_weights: &[f64],
    config: &LmConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FitOutcome> {
    config.validate()?;
    arch.validate()?;
    let w_count = arch.weight_count();
    let init = config.init_range.min(arch.weight_bound);
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; w_count]];
    for _ in 1..config.starts {
        starts.push((0..w_count).map(|_| rng.random_range(-init..init)).collect());
    }

    let problem = ResidualProblem {
        arch,
        inputs,
        targets,
        sqrt_weights,
    };
    let runs: Vec<_> = starts
        .par_iter()
        .map(|start| minimize(&problem, start, config))
        .collect();

    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.objective < runs[best].objective {
            best = i;
        }
    }
    let winner = &runs[best];
    Ok(FitOutcome {
        network: HierarchicalNetwork::new(*arch, winner.weights.clone())?,
        objective: winner.objective,
        start_index: best,
        accepted_trace: winner.accepted_trace.clone(),
    })
}

/// Least-squares fit minimizing the empirical L2 risk
/// `(1/n) sum_i |f(x_i) - y_i|^2`. The all-zero start guarantees the
/// returned risk never exceeds the risk of the zero network.
pub fn fit_least_squares(
    arch: &NetworkArchitecture,
    inputs: &[DVector<f64>],
    targets: &[f64],
    config: &LmConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FitOutcome> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "need equally many inputs and targets, got {} and {}",
            inputs.len(),
            targets.len()
        )));
    }
    check_finite(inputs, targets)?;
    let flat = flatten(inputs, arch.input_dim)?;
    let n = targets.len() as f64;
    let sw = vec![(1.0 / n).sqrt(); targets.len()];
    multi_start_fit(arch, &flat, targets, &sw, config, rng)
}

/// Weighted least-squares fit minimizing
/// `w/n * sum_i |f(X_i) - eps_i|^2 + (1-w)/N1 * sum_i |f(Xbar_i) - 0|^2`,
/// the residual objective with anchor regularization toward zero.
pub fn fit_weighted_least_squares(
    arch: &NetworkArchitecture,
    labeled_inputs: &[DVector<f64>],
    labeled_targets: &[f64],
    anchors: &[DVector<f64>],
    w: f64,
    config: &LmConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FitOutcome> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!(
            "weight must lie in [0, 1], got {w}"
        )));
    }
    if labeled_inputs.is_empty() || labeled_inputs.len() != labeled_targets.len() {
        return Err(Error::InvalidArgument(
            "labeled sample must be nonempty with matching lengths".into(),
        ));
    }
    if anchors.is_empty() && w < 1.0 {
        return Err(Error::InvalidArgument(
            "anchors may only be empty when w = 1".into(),
        ));
    }
    check_finite(labeled_inputs, labeled_targets)?;
    check_finite(anchors, &[])?;

    let n = labeled_inputs.len() as f64;
    let n1 = anchors.len().max(1) as f64;
    let labeled_sw = (w / n).sqrt();
    let anchor_sw = ((1.0 - w) / n1).sqrt();

    // Zero-weight rows contribute nothing to the objective or its gradient;
    // dropping them keeps the w = 0 and w = 1 edge cases cheap.
    let mut rows: Vec<&DVector<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut sw: Vec<f64> = Vec::new();
    if labeled_sw > 0.0 {
        for (x, t) in labeled_inputs.iter().zip(labeled_targets.iter()) {
            rows.push(x);
            targets.push(*t);
            sw.push(labeled_sw);
        }
    }
    if anchor_sw > 0.0 {
        for x in anchors {
            rows.push(x);
            targets.push(0.0);
            sw.push(anchor_sw);
        }
    }
    if rows.is_empty() {
        // w = 0 with anchors mandatory means this cannot happen, but keep
        // the degenerate guard explicit.
        return Err(Error::InvalidArgument("objective has no terms".into()));
    }

    let d = arch.input_dim;
    let mut flat = Vec::with_capacity(rows.len() * d);
    for row in &rows {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        flat.extend_from_slice(row.as_slice());
    }
    multi_start_fit(arch, &flat, &targets, &sw, config, rng)
}

/// Empirical L2 risk `(1/n) sum |f(x_i) - y_i|^2` of a fitted network.
pub fn empirical_risk(
    net: &HierarchicalNetwork,
    inputs: &[DVector<f64>],
    targets: &[f64],
) -> f64 {
    let n = targets.len().max(1) as f64;
    inputs
        .iter()
        .zip(targets.iter())
        .map(|(x, y)| {
            let e = net.eval_unchecked(x.as_slice()) - y;
            e * e
        })
        .sum::<f64>()
        / n
}
