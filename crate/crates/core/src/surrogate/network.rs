//! Flat weight layout, evaluation and analytic gradients.
//!
//! # Weight layout
//!
//! A level-0 ridge block over `d_in` inputs with `M` hidden units and inner
//! width `W = 4 d*` occupies `(M+1) + M(W+1) + M W (d_in+1)` consecutive
//! weights:
//!
//! ```text
//! [ mu_0, mu_1, ..., mu_M ]                          output layer, M+1
//! [ lambda_i0, lambda_i1, ..., lambda_iW ]  i=1..M   middle layer,  M (W+1)
//! [ theta_ij0, theta_ij1, ..., theta_ij,d_in ]       inner layer,   M W (d_in+1)
//!       for i=1..M, j=1..W (i outer, j inner)
//! ```
//!
//! A level-l network (l >= 1) stores its `I` compositions consecutively;
//! composition k holds the `g_k` block (a level-0 block over `d*` inputs)
//! followed by the `d*` subtrees `f_{1,k}, ..., f_{d*,k}`, each a complete
//! level-(l-1) network over the original `d` inputs.

use super::NetworkArchitecture;

#[inline]
fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights in one level-0 block.
#[inline]
pub(crate) fn block_len(d_in: usize, m: usize, width: usize) -> usize {
    (m + 1) + m * (width + 1) + m * width * (d_in + 1)
}

fn node_len(level: usize, arch: &NetworkArchitecture) -> usize {
    let width = 4 * arch.interaction_order;
    if level == 0 {
        block_len(arch.input_dim, arch.hidden_units, width)
    } else {
        arch.outer_count
            * (block_len(arch.interaction_order, arch.hidden_units, width)
                + arch.interaction_order * node_len(level - 1, arch))
    }
}

/// Total number of weights for an architecture.
pub(crate) fn weight_count(arch: &NetworkArchitecture) -> usize {
    node_len(arch.level, arch)
}

/// Value of one level-0 block at input `z`.
fn block_value(w: &[f64], z: &[f64], m: usize, width: usize) -> f64 {
    let d_in = z.len();
    let mid_base = m + 1;
    let inner_base = mid_base + m * (width + 1);
    let mut value = w[0];
    for i in 0..m {
        let mid_row = &w[mid_base + i * (width + 1)..mid_base + (i + 1) * (width + 1)];
        let mut a = mid_row[0];
        for j in 0..width {
            let inner_row_start = inner_base + (i * width + j) * (d_in + 1);
            let inner_row = &w[inner_row_start..inner_row_start + d_in + 1];
            let mut b = inner_row[0];
            for (v, zv) in z.iter().enumerate() {
                b += inner_row[v + 1] * zv;
            }
            a += mid_row[j + 1] * sigma(b);
        }
        value += w[i + 1] * sigma(a);
    }
    value
}

/// Value plus gradient of one level-0 block. `scale * d(value)/d(weight)` is
/// accumulated into `grad` (same layout as `w`); if `input_grad` is given,
/// the unscaled `d(value)/d(z)` is accumulated into it.
fn block_grad(
    w: &[f64],
    z: &[f64],
    m: usize,
    width: usize,
    scale: f64,
    grad: &mut [f64],
    mut input_grad: Option<&mut [f64]>,
    sig_b: &mut Vec<f64>,
) -> f64 {
    let d_in = z.len();
    let mid_base = m + 1;
    let inner_base = mid_base + m * (width + 1);
    sig_b.resize(width, 0.0);
    let mut value = w[0];
    grad[0] += scale;
    for i in 0..m {
        let mid_start = mid_base + i * (width + 1);
        let mut a = w[mid_start];
        for j in 0..width {
            let inner_row_start = inner_base + (i * width + j) * (d_in + 1);
            let mut b = w[inner_row_start];
            for (v, zv) in z.iter().enumerate() {
                b += w[inner_row_start + v + 1] * zv;
            }
            let s = sigma(b);
            sig_b[j] = s;
            a += w[mid_start + j + 1] * s;
        }
        let sa = sigma(a);
        let mu = w[i + 1];
        value += mu * sa;
        grad[i + 1] += scale * sa;
        let da = mu * sa * (1.0 - sa); // d(value)/d(a_i)
        grad[mid_start] += scale * da;
        for j in 0..width {
            let sb = sig_b[j];
            grad[mid_start + j + 1] += scale * da * sb;
            let db = da * w[mid_start + j + 1] * sb * (1.0 - sb); // d(value)/d(b_ij)
            let inner_row_start = inner_base + (i * width + j) * (d_in + 1);
            grad[inner_row_start] += scale * db;
            for (v, zv) in z.iter().enumerate() {
                grad[inner_row_start + v + 1] += scale * db * zv;
            }
            if let Some(ig) = input_grad.as_deref_mut() {
                for v in 0..d_in {
                    ig[v] += db * w[inner_row_start + v + 1];
                }
            }
        }
    }
    value
}

fn node_value(level: usize, arch: &NetworkArchitecture, w: &[f64], x: &[f64]) -> f64 {
    let m = arch.hidden_units;
    let dstar = arch.interaction_order;
    let width = 4 * dstar;
    if level == 0 {
        return block_value(w, x, m, width);
    }
    let g_len = block_len(dstar, m, width);
    let child_len = node_len(level - 1, arch);
    let comp_len = g_len + dstar * child_len;
    let mut total = 0.0;
    let mut u = vec![0.0; dstar];
    for k in 0..arch.outer_count {
        let base = k * comp_len;
        for (j, uj) in u.iter_mut().enumerate() {
            let start = base + g_len + j * child_len;
            *uj = node_value(level - 1, arch, &w[start..start + child_len], x);
        }
        total += block_value(&w[base..base + g_len], &u, m, width);
    }
    total
}

fn node_grad(
    level: usize,
    arch: &NetworkArchitecture,
    w: &[f64],
    x: &[f64],
    scale: f64,
    grad: &mut [f64],
    sig_b: &mut Vec<f64>,
) -> f64 {
    let m = arch.hidden_units;
    let dstar = arch.interaction_order;
    let width = 4 * dstar;
    if level == 0 {
        return block_grad(w, x, m, width, scale, grad, None, sig_b);
    }
    let g_len = block_len(dstar, m, width);
    let child_len = node_len(level - 1, arch);
    let comp_len = g_len + dstar * child_len;
    let mut total = 0.0;
    let mut u = vec![0.0; dstar];
    let mut du = vec![0.0; dstar];
    for k in 0..arch.outer_count {
        let base = k * comp_len;
        for (j, uj) in u.iter_mut().enumerate() {
            let start = base + g_len + j * child_len;
            *uj = node_value(level - 1, arch, &w[start..start + child_len], x);
        }
        du.iter_mut().for_each(|v| *v = 0.0);
        total += block_grad(
            &w[base..base + g_len],
            &u,
            m,
            width,
            scale,
            &mut grad[base..base + g_len],
            Some(&mut du),
            sig_b,
        );
        for j in 0..dstar {
            let start = base + g_len + j * child_len;
            node_grad(
                level - 1,
                arch,
                &w[start..start + child_len],
                x,
                scale * du[j],
                &mut grad[start..start + child_len],
                sig_b,
            );
        }
    }
    total
}

/// Network value at `x`. The caller guarantees matching dimensions.
pub(crate) fn eval(arch: &NetworkArchitecture, w: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), weight_count(arch));
    debug_assert_eq!(x.len(), arch.input_dim);
    node_value(arch.level, arch, w, x)
}

/// Network value and analytic gradient with respect to all weights.
/// `grad` is overwritten.
pub(crate) fn eval_grad(
    arch: &NetworkArchitecture,
    w: &[f64],
    x: &[f64],
    grad: &mut [f64],
) -> f64 {
    debug_assert_eq!(w.len(), weight_count(arch));
    debug_assert_eq!(grad.len(), w.len());
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut sig_b = Vec::new();
    node_grad(arch.level, arch, w, x, 1.0, grad, &mut sig_b)
}

/// Central-finite-difference gradient, the independent oracle for
/// [`eval_grad`]. Uses only network evaluation.
pub fn numeric_gradient(
    arch: &NetworkArchitecture,
    weights: &[f64],
    x: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut w = weights.to_vec();
    let mut grad = vec![0.0; w.len()];
    for k in 0..w.len() {
        let orig = w[k];
        w[k] = orig + step;
        let plus = eval(arch, &w, x);
        w[k] = orig - step;
        let minus = eval(arch, &w, x);
        w[k] = orig;
        grad[k] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Analytic gradient as a fresh vector (testing convenience).
pub fn analytic_gradient(arch: &NetworkArchitecture, weights: &[f64], x: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; weights.len()];
    eval_grad(arch, weights, x, &mut grad);
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    fn random_weights(arch: &NetworkArchitecture, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed).rng();
        (0..weight_count(arch))
            .map(|_| rng.random_range(-0.5..0.5))
            .collect()
    }

    #[test]
    fn weight_count_level0() {
        // M=2, d*=1 (width 4), d=3: (2+1) + 2*5 + 2*4*4 = 45
        let arch = NetworkArchitecture::level0(3, 2, 1);
        assert_eq!(weight_count(&arch), 45);
    }

    #[test]
    fn weight_count_level1() {
        let arch = NetworkArchitecture {
            level: 1,
            outer_count: 2,
            hidden_units: 1,
            input_dim: 3,
            interaction_order: 2,
            weight_bound: f64::INFINITY,
        };
        // g block over d*=2 inputs: 2 + 1*9 + 1*8*3 = 35
        // level-0 child over d=3: 2 + 9 + 8*4 = 43
        // total: I * (35 + 2*43) = 2 * 121 = 242
        assert_eq!(weight_count(&arch), 242);
    }

    #[test]
    fn zero_weights_give_zero() {
        for arch in [
            NetworkArchitecture::level0(5, 3, 2),
            NetworkArchitecture {
                level: 2,
                outer_count: 2,
                hidden_units: 2,
                input_dim: 4,
                interaction_order: 2,
                weight_bound: f64::INFINITY,
            },
        ] {
            let w = vec![0.0; weight_count(&arch)];
            let x = vec![1.3; arch.input_dim];
            assert_eq!(eval(&arch, &w, &x), 0.0);
        }
    }

    #[test]
    fn single_unit_sigmoid_at_zero() {
        // mu_1 = 2, all other weights zero: f(x) = 2 * sigma(0) = 1.
        let arch = NetworkArchitecture::level0(2, 1, 1);
        let mut w = vec![0.0; weight_count(&arch)];
        w[1] = 2.0;
        for x in [[0.0, 0.0], [5.0, -3.0]] {
            assert_eq!(eval(&arch, &w, &x), 1.0);
        }
    }

    #[test]
    fn value_invariant_under_hidden_block_permutation() {
        let arch = NetworkArchitecture::level0(3, 4, 2);
        let w = random_weights(&arch, 21);
        let x = [0.4, -1.1, 0.7];
        let before = eval(&arch, &w, &x);

        // Swap hidden blocks 0 and 2: mu, lambda row and theta rows move
        // together.
        let m = arch.hidden_units;
        let width = 4 * arch.interaction_order;
        let d_in = arch.input_dim;
        let mid_base = m + 1;
        let inner_base = mid_base + m * (width + 1);
        let mut p = w.clone();
        p.swap(1, 3);
        for c in 0..(width + 1) {
            p.swap(mid_base + c, mid_base + 2 * (width + 1) + c);
        }
        for c in 0..(width * (d_in + 1)) {
            p.swap(inner_base + c, inner_base + 2 * width * (d_in + 1) + c);
        }
        let after = eval(&arch, &p, &x);
        assert!((before - after).abs() < 1e-14);
    }

    #[test]
    fn level0_bound_by_output_weights() {
        let arch = NetworkArchitecture::level0(4, 3, 2);
        let w = random_weights(&arch, 5);
        let bound: f64 = w[0].abs() + w[1..=3].iter().map(|v| v.abs()).sum::<f64>();
        let mut rng = RngStream::new(6).rng();
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
            assert!(eval(&arch, &w, &x).abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_level0() {
        let arch = NetworkArchitecture::level0(3, 2, 2);
        let w = random_weights(&arch, 31);
        let x = [0.2, -0.6, 1.1];
        let analytic = analytic_gradient(&arch, &w, &x);
        let numeric = numeric_gradient(&arch, &w, &x, 1e-5);
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            let denom = a.abs().max(n.abs()).max(1e-3);
            assert!((a - n).abs() / denom < 1e-5, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_level2() {
        let arch = NetworkArchitecture {
            level: 2,
            outer_count: 2,
            hidden_units: 1,
            input_dim: 3,
            interaction_order: 2,
            weight_bound: f64::INFINITY,
        };
        let w = random_weights(&arch, 33);
        let x = [0.5, -0.3, 0.8];
        let analytic = analytic_gradient(&arch, &w, &x);
        let numeric = numeric_gradient(&arch, &w, &x, 1e-5);
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            let denom = a.abs().max(n.abs()).max(1e-3);
            assert!((a - n).abs() / denom < 1e-5, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn recursive_value_composes_level0_blocks() {
        let arch = NetworkArchitecture {
            level: 1,
            outer_count: 1,
            hidden_units: 1,
            input_dim: 2,
            interaction_order: 1,
            weight_bound: f64::INFINITY,
        };
        let w = random_weights(&arch, 40);
        let width = 4;
        let g_len = block_len(1, 1, width);
        let x = [0.3, -0.9];
        let child = block_value(&w[g_len..], &x, 1, width);
        let expected = block_value(&w[..g_len], &[child], 1, width);
        assert!((eval(&arch, &w, &x) - expected).abs() < 1e-15);
    }
}
