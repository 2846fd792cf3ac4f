//! Data-driven architecture selection: sample splitting and k-fold
//! cross validation over candidate grids.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::fit::{empirical_risk, fit_least_squares, fit_weighted_least_squares};
use super::lm::LmConfig;
use super::{HierarchicalNetwork, NetworkArchitecture};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One candidate's evaluation inside a selection run.
#[derive(Debug, Clone)]
pub struct SelectionEntry {
    pub arch: NetworkArchitecture,
    /// Weighting parameter for cross-validated residual fits.
    pub weight: Option<f64>,
    /// Held-out (split) or mean validation (CV) risk.
    pub validation_risk: f64,
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub entries: Vec<SelectionEntry>,
    pub chosen: usize,
}

impl SelectionReport {
    pub fn chosen_entry(&self) -> &SelectionEntry {
        &self.entries[self.chosen]
    }
}

fn argmin_risk(risks: &[f64]) -> usize {
    // NaN risks lose against everything; exact ties keep the earliest
    // candidate.
    let mut best = 0;
    let mut best_risk = f64::INFINITY;
    for (i, &r) in risks.iter().enumerate() {
        if r.is_finite() && r < best_risk {
            best = i;
            best_risk = r;
        }
    }
    best
}

/// Fits every candidate on the first `ceil(train_fraction * L)` points of a
/// seeded shuffle and returns the one with the smallest L2 risk on the
/// remainder (ties broken by list order). The returned network is the one
/// trained on the train portion.
pub fn select_architecture_split(
    candidates: &[NetworkArchitecture],
    inputs: &[DVector<f64>],
    targets: &[f64],
    train_fraction: f64,
    config: &LmConfig,
    rng: RngStream,
) -> Result<(HierarchicalNetwork, SelectionReport)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate architectures".into()));
    }
    if inputs.len() < 2 || inputs.len() != targets.len() {
        return Err(Error::InvalidArgument(
            "split selection needs at least 2 labeled points".into(),
        ));
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(
            "train fraction must lie strictly between 0 and 1".into(),
        ));
    }

    let total = inputs.len();
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng.derive(0).rng());
    // Keep at least one test point even for tiny samples.
    let train_len = ((train_fraction * total as f64).ceil() as usize).min(total - 1);

    let train_inputs: Vec<DVector<f64>> =
        order[..train_len].iter().map(|&i| inputs[i].clone()).collect();
    let train_targets: Vec<f64> = order[..train_len].iter().map(|&i| targets[i]).collect();
    let test_inputs: Vec<DVector<f64>> =
        order[train_len..].iter().map(|&i| inputs[i].clone()).collect();
    let test_targets: Vec<f64> = order[train_len..].iter().map(|&i| targets[i]).collect();

    let fits: Vec<Result<(HierarchicalNetwork, f64)>> = candidates
        .par_iter()
        .enumerate()
        .map(|(idx, arch)| {
            let mut cand_rng = rng.derive2(1, idx as u64).rng();
            let fit = fit_least_squares(arch, &train_inputs, &train_targets, config, &mut cand_rng)?;
            let risk = empirical_risk(&fit.network, &test_inputs, &test_targets);
            Ok((fit.network, risk))
        })
        .collect();

    let mut nets = Vec::with_capacity(candidates.len());
    let mut entries = Vec::with_capacity(candidates.len());
    for (arch, fit) in candidates.iter().zip(fits) {
        let (net, risk) = fit?;
        entries.push(SelectionEntry {
            arch: *arch,
            weight: None,
            validation_risk: risk,
        });
        nets.push(net);
    }
    let chosen = argmin_risk(&entries.iter().map(|e| e.validation_risk).collect::<Vec<_>>());
    let winner = nets.swap_remove(chosen);
    Ok((winner, SelectionReport { entries, chosen }))
}

/// A cross-validation candidate: architecture plus objective weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvCandidate {
    pub arch: NetworkArchitecture,
    pub weight: f64,
}

/// k-fold cross validation on the labeled set with the anchors reused in
/// every fold's training objective. Validation risk is the plain L2 risk on
/// the held-out labeled points; the winner (minimal mean validation risk,
/// ties by list order) is refitted on the full labeled set.
pub fn select_architecture_cv(
    candidates: &[CvCandidate],
    labeled_inputs: &[DVector<f64>],
    labeled_targets: &[f64],
    anchors: &[DVector<f64>],
    folds: usize,
    config: &LmConfig,
    rng: RngStream,
) -> Result<(HierarchicalNetwork, f64, SelectionReport)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate architectures".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    let n = labeled_inputs.len();
    if n < folds || n != labeled_targets.len() {
        return Err(Error::InvalidArgument(format!(
            "cross validation needs at least as many labeled points as folds ({folds}), got {n}"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.derive(0).rng());
    // Round-robin fold assignment of the shuffled order keeps folds balanced.
    let fold_of: Vec<usize> = {
        let mut f = vec![0usize; n];
        for (pos, &idx) in order.iter().enumerate() {
            f[idx] = pos % folds;
        }
        f
    };

    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..folds).map(move |f| (c, f)))
        .collect();
    let fold_risks: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let cand = &candidates[c];
            let mut train_x = Vec::new();
            let mut train_y = Vec::new();
            let mut val_x = Vec::new();
            let mut val_y = Vec::new();
            for i in 0..n {
                if fold_of[i] == f {
                    val_x.push(labeled_inputs[i].clone());
                    val_y.push(labeled_targets[i]);
                } else {
                    train_x.push(labeled_inputs[i].clone());
                    train_y.push(labeled_targets[i]);
                }
            }
            let mut fit_rng = rng.derive2(c as u64 + 1, f as u64 + 1).rng();
            let fit = fit_weighted_least_squares(
                &cand.arch,
                &train_x,
                &train_y,
                anchors,
                cand.weight,
                config,
                &mut fit_rng,
            )?;
            Ok(empirical_risk(&fit.network, &val_x, &val_y))
        })
        .collect();

    let mut entries = Vec::with_capacity(candidates.len());
    let mut risk_iter = fold_risks.into_iter();
    for cand in candidates {
        let mut sum = 0.0;
        for _ in 0..folds {
            sum += risk_iter.next().expect("job per candidate-fold")?;
        }
        entries.push(SelectionEntry {
            arch: cand.arch,
            weight: Some(cand.weight),
            validation_risk: sum / folds as f64,
        });
    }
    let chosen = argmin_risk(&entries.iter().map(|e| e.validation_risk).collect::<Vec<_>>());

    let winner = &candidates[chosen];
    let mut refit_rng = rng.derive2(chosen as u64 + 1, 0).rng();
    let refit = fit_weighted_least_squares(
        &winner.arch,
        labeled_inputs,
        labeled_targets,
        anchors,
        winner.weight,
        config,
        &mut refit_rng,
    )?;
    Ok((
        refit.network,
        winner.weight,
        SelectionReport { entries, chosen },
    ))
}

/// The published selection grid for the simulation-model surrogate:
/// `l in {0,1,2}`, `I in {1,2}`, `d* in {1..d}`,
/// `M in {1,2,3,4,5,6,16,26,36,46}`.
pub fn paper_split_grid(input_dim: usize) -> Vec<NetworkArchitecture> {
    let m_grid = [1, 2, 3, 4, 5, 6, 16, 26, 36, 46];
    let mut grid = Vec::new();
    for level in 0..=2 {
        for outer in 1..=2 {
            for dstar in 1..=input_dim {
                for &m in &m_grid {
                    grid.push(NetworkArchitecture {
                        level,
                        outer_count: outer,
                        hidden_units: m,
                        input_dim,
                        interaction_order: dstar,
                        weight_bound: f64::INFINITY,
                    });
                }
            }
        }
    }
    grid
}

/// Reduced selection grid for desk-scale runs: level-0 networks over the
/// full range of interaction orders with a short ladder of widths.
pub fn desk_split_grid(input_dim: usize) -> Vec<NetworkArchitecture> {
    let m_grid = [1, 3, 6, 16];
    let mut grid = Vec::new();
    for dstar in 1..=input_dim {
        for &m in &m_grid {
            grid.push(NetworkArchitecture::level0(input_dim, m, dstar));
        }
    }
    grid
}

/// The published cross-validation grid for the residual estimator:
/// `l = 0`, `I = 1`, `d* in {1,2,4}`, `M in {1,3,5}`,
/// `w in {0, 0.25, 0.5, 0.75, 1}`.
pub fn paper_cv_candidates(input_dim: usize) -> Vec<CvCandidate> {
    let mut out = Vec::new();
    for dstar in [1usize, 2, 4] {
        if dstar > input_dim {
            continue;
        }
        for m in [1usize, 3, 5] {
            for w in [0.0, 0.25, 0.5, 0.75, 1.0] {
                out.push(CvCandidate {
                    arch: NetworkArchitecture::level0(input_dim, m, dstar),
                    weight: w,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(n: usize) -> (Vec<DVector<f64>>, Vec<f64>) {
        let inputs: Vec<DVector<f64>> = (0..n)
            .map(|i| DVector::from_vec(vec![i as f64 / n as f64 * 2.0 - 1.0]))
            .collect();
        let targets = vec![2.5; n];
        (inputs, targets)
    }

    #[test]
    fn paper_grid_sizes() {
        assert_eq!(paper_split_grid(5).len(), 3 * 2 * 5 * 10);
        assert_eq!(paper_cv_candidates(5).len(), 3 * 3 * 5);
        assert_eq!(paper_cv_candidates(2).len(), 2 * 3 * 5);
    }

    #[test]
    fn single_candidate_is_selected() {
        let (inputs, targets) = grid_points(9);
        let cands = vec![NetworkArchitecture::level0(1, 2, 1)];
        let (net, report) = select_architecture_split(
            &cands,
            &inputs,
            &targets,
            2.0 / 3.0,
            &LmConfig::default(),
            RngStream::new(1),
        )
        .unwrap();
        assert_eq!(report.chosen, 0);
        assert_eq!(net.architecture(), &cands[0]);
    }

    #[test]
    fn constant_data_tie_breaks_to_first() {
        let (inputs, targets) = grid_points(12);
        let cands = vec![
            NetworkArchitecture::level0(1, 1, 1),
            NetworkArchitecture::level0(1, 5, 1),
        ];
        let (net, report) = select_architecture_split(
            &cands,
            &inputs,
            &targets,
            2.0 / 3.0,
            &LmConfig::default(),
            RngStream::new(2),
        )
        .unwrap();
        // Both candidates represent a constant exactly; risks are ~0 and the
        // earlier one wins.
        assert!(report.entries.iter().all(|e| e.validation_risk < 1e-8));
        assert_eq!(report.chosen, 0);
        assert_eq!(net.architecture().hidden_units, 1);
    }

    #[test]
    fn split_needs_two_points() {
        let cands = vec![NetworkArchitecture::level0(1, 1, 1)];
        let inputs = vec![DVector::from_vec(vec![0.0])];
        let res = select_architecture_split(
            &cands,
            &inputs,
            &[1.0],
            2.0 / 3.0,
            &LmConfig::default(),
            RngStream::new(3),
        );
        assert!(res.is_err());
    }

    #[test]
    fn split_train_size_uses_ceiling() {
        // With 10 points the train part is ceil(20/3) = 7.
        assert_eq!((2.0f64 / 3.0 * 10.0).ceil() as usize, 7);
    }

    #[test]
    fn leave_one_out_single_candidate_refits() {
        let inputs: Vec<DVector<f64>> =
            (0..5).map(|i| DVector::from_vec(vec![i as f64 / 5.0])).collect();
        let targets = vec![0.0; 5];
        let cands = vec![CvCandidate {
            arch: NetworkArchitecture::level0(1, 1, 1),
            weight: 0.5,
        }];
        let anchors = vec![DVector::from_vec(vec![0.5])];
        let (net, w, report) = select_architecture_cv(
            &cands,
            &inputs,
            &targets,
            &anchors,
            5,
            &LmConfig::default(),
            RngStream::new(4),
        )
        .unwrap();
        assert_eq!(report.chosen, 0);
        assert_eq!(w, 0.5);
        assert_eq!(net.architecture(), &cands[0].arch);
    }

    #[test]
    fn zero_residuals_tie_break_picks_first_weight() {
        let inputs: Vec<DVector<f64>> =
            (0..10).map(|i| DVector::from_vec(vec![i as f64 / 10.0])).collect();
        let targets = vec![0.0; 10];
        let anchors: Vec<DVector<f64>> =
            (0..5).map(|i| DVector::from_vec(vec![-(i as f64) / 5.0])).collect();
        let mut cands = Vec::new();
        for m in [1usize, 3] {
            for w in [0.0, 0.5, 1.0] {
                cands.push(CvCandidate {
                    arch: NetworkArchitecture::level0(1, m, 1),
                    weight: w,
                });
            }
        }
        let (net, w, report) = select_architecture_cv(
            &cands,
            &inputs,
            &targets,
            &anchors,
            5,
            &LmConfig::default(),
            RngStream::new(5),
        )
        .unwrap();
        assert_eq!(report.chosen, 0);
        assert_eq!(w, 0.0);
        let refit_risk = empirical_risk(&net, &inputs, &targets);
        assert!(refit_risk <= 1e-12, "refit risk {refit_risk}");
    }

    #[test]
    fn cv_rejects_too_few_points() {
        let inputs: Vec<DVector<f64>> =
            (0..3).map(|i| DVector::from_vec(vec![i as f64])).collect();
        let targets = vec![0.0; 3];
        let cands = vec![CvCandidate {
            arch: NetworkArchitecture::level0(1, 1, 1),
            weight: 1.0,
        }];
        assert!(select_architecture_cv(
            &cands,
            &inputs,
            &targets,
            &[],
            5,
            &LmConfig::default(),
            RngStream::new(6),
        )
        .is_err());
    }

    #[test]
    fn selection_is_deterministic() {
        let (inputs, targets) = grid_points(15);
        let cands = desk_split_grid(1);
        let run = || {
            select_architecture_split(
                &cands,
                &inputs,
                &targets,
                2.0 / 3.0,
                &LmConfig {
                    max_iterations: 40,
                    ..Default::default()
                },
                RngStream::new(7),
            )
            .unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(ra.chosen, rb.chosen);
        let risks_a: Vec<f64> = ra.entries.iter().map(|e| e.validation_risk).collect();
        let risks_b: Vec<f64> = rb.entries.iter().map(|e| e.validation_risk).collect();
        assert_eq!(risks_a, risks_b);
    }
}
