//! Hierarchical neural-network surrogates fitted by nonlinear least squares.
//!
//! The function class is built from ridge blocks with two logistic layers.
//! A level-0 network over inputs `z` of dimension `d_in` computes
//!
//! ```text
//! f(z) = mu_0 + sum_{i=1..M} mu_i * sigma( lambda_i0
//!            + sum_{j=1..4d*} lambda_ij * sigma( theta_ij0
//!            + sum_{v=1..d_in} theta_ijv * z_v ) )
//! ```
//!
//! with the logistic squasher `sigma(x) = 1/(1+exp(-x))`. A level-l network
//! (l >= 1) sums `I` compositions `g_k(f_{1,k}(x), ..., f_{d*,k}(x))` where
//! each `g_k` is a level-0 network over `d*` inputs and each `f_{j,k}` is a
//! level-(l-1) network over the original inputs.
//!
//! Weights live in one flat vector; see [`network`] for the exact layout.

pub mod fit;
pub mod lm;
pub mod network;
pub mod select;

pub use fit::{fit_least_squares, fit_weighted_least_squares, FitOutcome};
pub use lm::LmConfig;
pub use select::{
    desk_split_grid, paper_cv_candidates, paper_split_grid, select_architecture_cv,
    select_architecture_split, CvCandidate, SelectionEntry, SelectionReport,
};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input_model::GaussianInputModel;

/// Shape parameters of a hierarchical network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkArchitecture {
    /// Recursion level `l >= 0`.
    pub level: usize,
    /// Number of summed compositions `I` per recursion level (unused at
    /// level 0).
    pub outer_count: usize,
    /// Hidden units `M` per ridge block.
    pub hidden_units: usize,
    /// Input dimension `d`.
    pub input_dim: usize,
    /// Interaction order `d*`, `1 <= d* <= d`; the inner layer has `4 d*`
    /// units.
    pub interaction_order: usize,
    /// Weight bound `gamma`; `+inf` means unbounded (the practical default).
    #[serde(with = "serde_weight_bound")]
    pub weight_bound: f64,
}

mod serde_weight_bound {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    // JSON has no +inf, so the unbounded case is stored as null.
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Some(*v).serialize(s)
        } else {
            None::<f64>.serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl NetworkArchitecture {
    /// Level-0 architecture with unbounded weights.
    pub fn level0(input_dim: usize, hidden_units: usize, interaction_order: usize) -> Self {
        Self {
            level: 0,
            outer_count: 1,
            hidden_units,
            input_dim,
            interaction_order,
            weight_bound: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_count == 0 || self.hidden_units == 0 || self.input_dim == 0 {
            return Err(Error::InvalidArgument(
                "architecture counts must be positive".into(),
            ));
        }
        if self.interaction_order == 0 || self.interaction_order > self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "interaction order must lie in 1..={}, got {}",
                self.input_dim, self.interaction_order
            )));
        }
        if !(self.weight_bound > 0.0) {
            return Err(Error::InvalidArgument(
                "weight bound must be positive (or +inf)".into(),
            ));
        }
        Ok(())
    }

    /// Total number of weights; a deterministic function of the shape.
    pub fn weight_count(&self) -> usize {
        network::weight_count(self)
    }

    pub fn has_weight_bound(&self) -> bool {
        self.weight_bound.is_finite()
    }
}

/// A member of the hierarchical network class: architecture plus flat
/// weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalNetwork {
    arch: NetworkArchitecture,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    architecture: NetworkArchitecture,
    weights: Vec<f64>,
}

impl HierarchicalNetwork {
    pub fn new(arch: NetworkArchitecture, weights: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let expected = arch.weight_count();
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteData("network weight is not finite".into()));
        }
        if arch.has_weight_bound() {
            let bound = arch.weight_bound;
            if weights.iter().any(|w| w.abs() > bound) {
                return Err(Error::InvalidArgument(format!(
                    "weight magnitude exceeds the bound {bound}"
                )));
            }
        }
        Ok(Self { arch, weights })
    }

    pub fn zeros(arch: NetworkArchitecture) -> Result<Self> {
        arch.validate()?;
        let n = arch.weight_count();
        Ok(Self {
            arch,
            weights: vec![0.0; n],
        })
    }

    pub fn architecture(&self) -> &NetworkArchitecture {
        &self.arch
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Network value at `x`; checks the input dimension.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: x.len(),
            });
        }
        Ok(network::eval(&self.arch, &self.weights, x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arch.input_dim);
        network::eval(&self.arch, &self.weights, x)
    }

    pub fn to_json(&self) -> String {
        let repr = NetworkRepr {
            architecture: self.arch,
            weights: self.weights.clone(),
        };
        serde_json::to_string(&repr).expect("network serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: NetworkRepr =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(repr.architecture, repr.weights)
    }
}

/// `network_eval` of the specification.
pub fn network_eval(net: &HierarchicalNetwork, x: &[f64]) -> Result<f64> {
    net.eval(x)
}

/// Prediction clipping `T_beta(z) = sign(z) * min(|z|, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruncationLevel {
    Disabled,
    Bounded(f64),
}

impl TruncationLevel {
    pub fn bounded(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "truncation bound must be finite and positive, got {beta}"
            )));
        }
        Ok(TruncationLevel::Bounded(beta))
    }

    pub fn apply(&self, z: f64) -> f64 {
        match self {
            TruncationLevel::Disabled => z,
            TruncationLevel::Bounded(beta) => z.signum() * z.abs().min(*beta),
        }
    }
}

impl Default for TruncationLevel {
    fn default() -> Self {
        TruncationLevel::Disabled
    }
}

/// Per-component affine standardization `z_j = (x_j - center_j) / half_width_j`
/// applied to inputs before network evaluation. Fitting in standardized
/// coordinates keeps the optimizer well scaled when input components differ
/// by orders of magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    center: Vec<f64>,
    half_width: Vec<f64>,
}

impl AffineMap {
    pub fn new(center: Vec<f64>, half_width: Vec<f64>) -> Result<Self> {
        if center.len() != half_width.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                got: half_width.len(),
            });
        }
        if half_width.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument(
                "standardization half-widths must be positive".into(),
            ));
        }
        Ok(Self { center, half_width })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.center.len() {
            out[i] = (x[i] - self.center[i]) / self.half_width[i];
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(x, &mut out);
        out
    }
}

/// Hyper-rectangle on which the surrogate training design is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TrainingDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(
                "domain bounds must be nonempty and of equal length".into(),
            ));
        }
        for (lo, hi) in lower.iter().zip(upper.iter()) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "domain bounds must satisfy lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Default training domain: `mean_j +/- 2 sqrt(cov_jj)` per component.
    /// Degenerate components are widened by a tiny amount so the domain
    /// stays valid for near-constant inputs.
    pub fn from_input_model(model: &GaussianInputModel) -> Result<Self> {
        let d = model.dim();
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for j in 0..d {
            let mu = model.mean()[j];
            let spread = model.covariance()[(j, j)].max(0.0).sqrt();
            let half = (2.0 * spread).max(1e-8 * mu.abs().max(1.0));
            lower.push(mu - half);
            upper.push(mu + half);
        }
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Independent uniform draws on the hyper-rectangle.
    pub fn sample_uniform<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
        let d = self.dim();
        (0..count)
            .map(|_| {
                DVector::from_iterator(
                    d,
                    (0..d).map(|j| rng.random_range(self.lower[j]..self.upper[j])),
                )
            })
            .collect()
    }

    /// Affine map sending the domain onto `[-1, 1]^d`.
    pub fn standardizer(&self) -> AffineMap {
        let center: Vec<f64> = self
            .lower
            .iter()
            .zip(self.upper.iter())
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect();
        let half_width: Vec<f64> = self
            .lower
            .iter()
            .zip(self.upper.iter())
            .map(|(lo, hi)| 0.5 * (hi - lo))
            .collect();
        AffineMap::new(center, half_width).expect("valid domain gives a valid map")
    }
}

/// A fitted predictor: network, optional input standardization, optional
/// truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    net: HierarchicalNetwork,
    input_map: Option<AffineMap>,
    truncation: TruncationLevel,
}

impl SurrogateModel {
    pub fn from_network(net: HierarchicalNetwork) -> Self {
        Self {
            net,
            input_map: None,
            truncation: TruncationLevel::Disabled,
        }
    }

    pub fn with_input_map(mut self, map: AffineMap) -> Self {
        self.input_map = Some(map);
        self
    }

    pub fn with_truncation(mut self, level: TruncationLevel) -> Self {
        self.truncation = level;
        self
    }

    pub fn network(&self) -> &HierarchicalNetwork {
        &self.net
    }

    pub fn truncation(&self) -> TruncationLevel {
        self.truncation
    }

    pub fn input_dim(&self) -> usize {
        self.net.architecture().input_dim
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.predict_slice(x))
    }

    pub(crate) fn predict_slice(&self, x: &[f64]) -> f64 {
        let raw = match &self.input_map {
            Some(map) => {
                let z = map.apply_vec(x);
                self.net.eval_unchecked(&z)
            }
            None => self.net.eval_unchecked(x),
        };
        self.truncation.apply(raw)
    }
}

/// `truncate` of the specification: wrap a network into a (possibly)
/// truncated predictor.
pub fn truncate(net: HierarchicalNetwork, level: TruncationLevel) -> SurrogateModel {
    SurrogateModel::from_network(net).with_truncation(level)
}
