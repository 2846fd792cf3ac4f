//! Simulation-study harness: test functions, imperfect models, reference
//! densities, repeated L1 scoring and report rendering.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_est1, fit_base_surrogate, kde_over, residual_stage, run_est3, synthetic_inputs,
    EstimatorConfig, EstimatorKind, LabeledSample,
};
use crate::input_model::{GaussianInputModel, InputSample};
use crate::kde::{
    quantile_sorted, silverman_bandwidth, DensityGrid, KernelDensityModel, TabulatedDensity,
    DEFAULT_SUBINTERVALS, GRID_BANDWIDTH_MARGIN,
};
use crate::rng::{label, RngStream};
use crate::simulator::SimulationModel;
use crate::surrogate::TrainingDomain;

pub const INPUT_DIM: usize = 5;

/// The four benchmark test functions on R^5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestFunctionId {
    M1,
    M2,
    M3,
    M4,
}

impl TestFunctionId {
    pub const ALL: [TestFunctionId; 4] = [
        TestFunctionId::M1,
        TestFunctionId::M2,
        TestFunctionId::M3,
        TestFunctionId::M4,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunctionId::M1 => "m1",
            TestFunctionId::M2 => "m2",
            TestFunctionId::M3 => "m3",
            TestFunctionId::M4 => "m4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m1" => Ok(TestFunctionId::M1),
            "m2" => Ok(TestFunctionId::M2),
            "m3" => Ok(TestFunctionId::M3),
            "m4" => Ok(TestFunctionId::M4),
            other => Err(Error::InvalidArgument(format!(
                "unknown test function '{other}' (expected m1..m4)"
            ))),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        eval_test_function(*self, x)
    }

    pub fn simulation_model(&self) -> SimulationModel {
        let id = *self;
        SimulationModel::from_fn(id.name(), move |x| eval_test_function(id, x))
    }
}

impl std::fmt::Display for TestFunctionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Exact formula value of a test function. Additive guard constants keep
/// every term finite for finite input; the cotangent in m2 is evaluated as
/// cos/sin on the guarded argument and can be large near x2 = 0 but stays
/// finite.
pub fn eval_test_function(id: TestFunctionId, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), INPUT_DIM);
    let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
    match id {
        TestFunctionId::M1 => {
            2.0 * ((x1 * x2).abs() + 4.0 * x3.sin().powi(2) + x4.atan().abs() + 0.1).ln()
                + (x3.abs().sqrt() * x5 * x5 - x1 * x3).cos()
        }
        TestFunctionId::M2 => {
            let t = x2.abs() + 0.002;
            let cot = t.cos() / t.sin();
            x1 + (cot + x3.powi(3) + (x4.abs() + 0.1).ln()) / (9.0 * std::f64::consts::PI)
                + 3.0 * x5
        }
        TestFunctionId::M3 => {
            2.0 / (x1.abs() + 0.1)
                + 3.0 * (x2.powi(6) + 0.2).ln() * x4
                + x5 / (x1.abs() + 0.1)
        }
        TestFunctionId::M4 => {
            let s = (x3 * x4).sin();
            10.0 / (1.0 + x1 * x1) + 5.0 * s + 2.0 * x5 + x1.exp() + x2 * x2 + s * s - 10.0
        }
    }
}

/// Imperfect simulation model `m(x) = m*(x) + sigma_m * lambda_star`.
#[derive(Debug, Clone)]
pub struct ImperfectModel {
    pub base: TestFunctionId,
    pub sigma_m: f64,
    pub lambda_star: f64,
}

impl ImperfectModel {
    pub fn new(base: TestFunctionId, sigma_m: f64, lambda_star: f64) -> Result<Self> {
        if !(sigma_m >= 0.0) {
            return Err(Error::InvalidArgument("sigma_m must be >= 0".into()));
        }
        if !(lambda_star > 0.0) {
            return Err(Error::InvalidArgument("lambda_star must be > 0".into()));
        }
        Ok(Self {
            base,
            sigma_m,
            lambda_star,
        })
    }

    pub fn simulation_model(&self) -> SimulationModel {
        self.base
            .simulation_model()
            .with_offset(self.sigma_m * self.lambda_star)
    }
}

fn standard_normal_points<R: Rng>(count: usize, dim: usize, rng: &mut R) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng))))
        .collect()
}

/// Empirical interquartile range of `f(X)` over standard-normal draws.
pub fn lambda_star_of_fn<F, R>(f: F, dim: usize, sample_size: usize, rng: &mut R) -> f64
where
    F: Fn(&[f64]) -> f64,
    R: Rng,
{
    let mut values: Vec<f64> = standard_normal_points(sample_size, dim, rng)
        .iter()
        .map(|x| f(x.as_slice()))
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&values, 0.75) - quantile_sorted(&values, 0.25)
}

/// `lambda*` of a test function: the empirical IQR of `m*(X)` over
/// `sample_size` standard-normal draws.
pub fn compute_lambda_star<R: Rng>(id: TestFunctionId, sample_size: usize, rng: &mut R) -> Result<f64> {
    if sample_size < 100 {
        return Err(Error::InvalidArgument(
            "lambda* needs at least 100 samples".into(),
        ));
    }
    Ok(lambda_star_of_fn(|x| id.eval(x), INPUT_DIM, sample_size, rng))
}

/// A large-sample KDE treated as the ground-truth density for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDensity {
    pub function: TestFunctionId,
    pub sample_size: usize,
    pub seed: u64,
    pub bandwidth_rule: String,
    pub bandwidth: f64,
    pub grid: DensityGrid,
    pub values: Vec<f64>,
}

impl ReferenceDensity {
    pub fn tabulated(&self) -> TabulatedDensity {
        TabulatedDensity {
            grid: self.grid,
            abscissae: self.grid.midpoints().collect(),
            values: self.values.clone(),
        }
    }

    fn cache_file(dir: &Path, function: TestFunctionId, sample_size: usize, seed: u64, rule: &str) -> PathBuf {
        dir.join(format!(
            "reference_{}_{sample_size}_{seed}_{rule}.json",
            function.name()
        ))
    }
}

/// Builds (or loads from `cache_dir`) the reference density of a test
/// function: a KDE over `sample_size` draws of `m*(X)` with the
/// normal-reference bandwidth, tabulated on its default grid.
pub fn reference_density(
    id: TestFunctionId,
    sample_size: usize,
    rng: RngStream,
    bandwidth_override: Option<f64>,
    cache_dir: Option<&Path>,
) -> Result<ReferenceDensity> {
    if sample_size < 10_000 {
        return Err(Error::InvalidArgument(
            "reference density needs at least 1e4 samples".into(),
        ));
    }
    let seed = rng.seed();
    let rule = match bandwidth_override {
        Some(h) => format!("h{h}"),
        None => "silverman".to_string(),
    };
    if let Some(dir) = cache_dir {
        let path = ReferenceDensity::cache_file(dir, id, sample_size, seed, &rule);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(cached) = serde_json::from_str::<ReferenceDensity>(&text) {
                if cached.function == id
                    && cached.sample_size == sample_size
                    && cached.seed == seed
                    && cached.bandwidth_rule == rule
                    && cached.values.len() == cached.grid.points
                {
                    return Ok(cached);
                }
            }
        }
    }

    let mut gen = rng.rng();
    let outputs: Vec<f64> = standard_normal_points(sample_size, INPUT_DIM, &mut gen)
        .par_iter()
        .map(|x| id.eval(x.as_slice()))
        .collect();
    let h = match bandwidth_override {
        Some(h) => h,
        None => silverman_bandwidth(&outputs)?,
    };
    let lo = outputs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = outputs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let margin = GRID_BANDWIDTH_MARGIN * h;
    let grid = DensityGrid::new(lo - margin, hi + margin, DEFAULT_SUBINTERVALS)?;
    let model = KernelDensityModel::new(outputs, h, crate::kde::Kernel::Gaussian)?;
    let values = model.evaluate_grid(&grid);
    let reference = ReferenceDensity {
        function: id,
        sample_size,
        seed,
        bandwidth_rule: rule,
        bandwidth: h,
        grid,
        values,
    };

    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir)?;
        let path =
            ReferenceDensity::cache_file(dir, id, sample_size, seed, &reference.bandwidth_rule);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(serde_json::to_string(&reference).unwrap().as_bytes())?;
        file.sync_all()?;
        std::fs::rename(&tmp, &path)?;
    }
    Ok(reference)
}

/// Experiment-level configuration on top of the estimator config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Labeled experimental sample size `n`.
    pub n: usize,
    pub estimator: EstimatorConfig,
    pub repetitions: usize,
    /// Reference-density sample size (1e5 desk scale, 1e6 as published).
    pub reference_size: usize,
    /// Sample size for the lambda* interquartile range (1e6 here; the
    /// published values used 1e7).
    pub lambda_star_size: usize,
    /// Where reference densities are cached; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 10,
            estimator: EstimatorConfig::default(),
            repetitions: 10,
            reference_size: 100_000,
            lambda_star_size: 1_000_000,
            cache_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(
                "labeled sample size must be at least 2".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument(
                "need at least one repetition".into(),
            ));
        }
        self.estimator.validate()
    }
}

/// One (function, sigma_m, estimator) cell of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub function: TestFunctionId,
    pub sigma_m: f64,
    pub estimator: EstimatorKind,
    pub median_l1: f64,
    pub iqr_l1: f64,
    pub repetitions: usize,
    pub base_seed: u64,
    pub l1_values: Vec<f64>,
}

/// Median and interquartile range of L1 errors per estimator cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<ReportCell>,
}

impl BenchmarkReport {
    pub fn cell(
        &self,
        function: TestFunctionId,
        sigma_m: f64,
        estimator: EstimatorKind,
    ) -> Option<&ReportCell> {
        self.cells.iter().find(|c| {
            c.function == function && c.sigma_m == sigma_m && c.estimator == estimator
        })
    }

    pub fn merge(&mut self, other: BenchmarkReport) {
        self.cells.extend(other.cells);
    }
}

/// Median and IQR (linear-interpolation quantiles) of unordered values.
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    (median, iqr)
}

/// One repetition: fresh experimental sample, estimator runs, L1 scores
/// against the shared reference. est2 and est4 share the base surrogate and
/// every estimator propagates the same synthetic sample, exactly as the
/// standalone pipelines would with this stream.
fn run_repetition(
    function: TestFunctionId,
    sigma_m: f64,
    lambda_star: f64,
    kinds: &[EstimatorKind],
    config: &ExperimentConfig,
    rep_stream: RngStream,
    reference: &TabulatedDensity,
) -> Result<Vec<(EstimatorKind, f64)>> {
    let est_cfg = &config.estimator;
    let mut x_rng = rep_stream.derive(label::OUTPUT_SAMPLE).rng();
    let points = standard_normal_points(config.n, INPUT_DIM, &mut x_rng);
    let outputs: Vec<f64> = points.iter().map(|x| function.eval(x.as_slice())).collect();
    let xs = InputSample::new(points.clone())?;
    let sample = LabeledSample::new(points, outputs)?;
    let input_model = GaussianInputModel::fit(&xs)?;
    let domain = TrainingDomain::from_input_model(&input_model)?;
    let imperfect = ImperfectModel::new(function, sigma_m, lambda_star)?;
    let sim = imperfect.simulation_model();

    let needs_base = kinds
        .iter()
        .any(|k| matches!(k, EstimatorKind::Est2 | EstimatorKind::Est4));
    let needs_synth = kinds.iter().any(|k| !matches!(k, EstimatorKind::Est1));

    let base = if needs_base {
        Some(fit_base_surrogate(&sim, &domain, est_cfg, rep_stream)?)
    } else {
        None
    };
    let synth = if needs_synth {
        Some(synthetic_inputs(&input_model, est_cfg, rep_stream)?)
    } else {
        None
    };

    let mut results = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let density = match kind {
            EstimatorKind::Est1 => estimate_est1(&sample, est_cfg.bandwidth_override)?,
            EstimatorKind::Est2 => {
                let (surrogate, _) = base.as_ref().expect("base fitted above");
                let synth = synth.as_ref().expect("synthetic sample drawn above");
                kde_over(
                    &synth[est_cfg.anchor_size..],
                    |x| surrogate.predict_slice(x),
                    est_cfg,
                )?
            }
            EstimatorKind::Est3 => run_est3(&sample, &input_model, est_cfg, rep_stream)?.density,
            EstimatorKind::Est4 => {
                let (surrogate, _) = base.as_ref().expect("base fitted above");
                let synth = synth.as_ref().expect("synthetic sample drawn above");
                let (improved, _, _) = residual_stage(
                    &sample,
                    surrogate.clone(),
                    &synth[..est_cfg.anchor_size],
                    &domain,
                    est_cfg,
                    rep_stream.derive(label::RESIDUAL_FIT),
                )?;
                kde_over(
                    &synth[est_cfg.anchor_size..],
                    |x| improved.predict_slice(x),
                    est_cfg,
                )?
            }
        };
        let tab = TabulatedDensity::from_model(&density, &reference.grid);
        let l1 = tab.l1(reference)?;
        results.push((*kind, l1));
    }
    Ok(results)
}

/// Runs one (function, sigma_m) experiment over `repetitions` independent
/// repetitions and aggregates median and IQR of the L1 errors per estimator.
pub fn run_experiment(
    function: TestFunctionId,
    sigma_m: f64,
    kinds: &[EstimatorKind],
    config: &ExperimentConfig,
    base_seed: u64,
) -> Result<BenchmarkReport> {
    config.validate()?;
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("no estimators requested".into()));
    }
    let deduped: Vec<EstimatorKind> = {
        let mut seen = BTreeSet::new();
        kinds
            .iter()
            .copied()
            .filter(|k| seen.insert(k.id()))
            .collect()
    };

    let base = RngStream::new(base_seed);
    let mut lambda_rng = base.derive(label::LAMBDA_STAR).rng();
    let lambda_star = compute_lambda_star(function, config.lambda_star_size, &mut lambda_rng)?;

    let reference = reference_density(
        function,
        config.reference_size,
        base.derive(label::REFERENCE_DENSITY),
        config.estimator.bandwidth_override,
        config.cache_dir.as_deref(),
    )?;
    let reference_tab = reference.tabulated();

    let per_rep: Vec<Result<Vec<(EstimatorKind, f64)>>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            run_repetition(
                function,
                sigma_m,
                lambda_star,
                &deduped,
                config,
                base.derive2(label::REPETITION, rep as u64),
                &reference_tab,
            )
        })
        .collect();

    let mut by_kind: Vec<(EstimatorKind, Vec<f64>)> =
        deduped.iter().map(|k| (*k, Vec::new())).collect();
    for rep in per_rep {
        for (kind, l1) in rep? {
            by_kind
                .iter_mut()
                .find(|(k, _)| *k == kind)
                .expect("kind registered")
                .1
                .push(l1);
        }
    }

    let cells = by_kind
        .into_iter()
        .map(|(kind, values)| {
            let (median, iqr) = median_iqr(&values);
            ReportCell {
                function,
                sigma_m,
                estimator: kind,
                median_l1: median,
                iqr_l1: iqr,
                repetitions: config.repetitions,
                base_seed,
                l1_values: values,
            }
        })
        .collect();
    Ok(BenchmarkReport { cells })
}

/// Full matrix of experiments (functions x sigmas), sharing reference
/// densities per function through the cache.
pub fn run_matrix(
    functions: &[TestFunctionId],
    sigmas: &[f64],
    kinds: &[EstimatorKind],
    config: &ExperimentConfig,
    base_seed: u64,
) -> Result<BenchmarkReport> {
    let mut report = BenchmarkReport::default();
    for &function in functions {
        for &sigma in sigmas {
            report.merge(run_experiment(function, sigma, kinds, config, base_seed)?);
        }
    }
    Ok(report)
}

/// Renders the report as CSV (full precision, one row per cell).
pub fn report_to_csv(report: &BenchmarkReport, comments: &[String]) -> String {
    let mut out = String::new();
    for line in comments {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str("function,sigma_m,estimator,median_l1,iqr_l1,repetitions,seed,l1_values\n");
    for c in &report.cells {
        let values = c
            .l1_values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.function, c.sigma_m, c.estimator, c.median_l1, c.iqr_l1, c.repetitions, c.base_seed, values
        ));
    }
    out
}

/// Renders the report as a Markdown table in the published layout: one row
/// per (function, estimator), one column per sigma, entries
/// `median (iqr)`.
pub fn report_to_markdown(report: &BenchmarkReport) -> String {
    let mut functions: Vec<TestFunctionId> = Vec::new();
    let mut sigmas: Vec<f64> = Vec::new();
    let mut estimators: Vec<EstimatorKind> = Vec::new();
    for c in &report.cells {
        if !functions.contains(&c.function) {
            functions.push(c.function);
        }
        if !sigmas.iter().any(|s| s == &c.sigma_m) {
            sigmas.push(c.sigma_m);
        }
        if !estimators.contains(&c.estimator) {
            estimators.push(c.estimator);
        }
    }
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut out = String::new();
    out.push_str("| function | estimator |");
    for s in &sigmas {
        out.push_str(&format!(" sigma_m = {s} |"));
    }
    out.push('\n');
    out.push_str("|---|---|");
    for _ in &sigmas {
        out.push_str("---|");
    }
    out.push('\n');
    for f in &functions {
        for e in &estimators {
            out.push_str(&format!("| {f} | {e} |"));
            for s in &sigmas {
                match report.cell(*f, *s, *e) {
                    Some(c) => {
                        out.push_str(&format!(" {:.3} ({:.3}) |", c.median_l1, c.iqr_l1))
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Scale declaration of one real-data column, e.g. `k_rot_y:e2` means the
/// stored numbers are multiplied by `10^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub exponent: i32,
}

impl ColumnScale {
    pub fn factor(&self) -> f64 {
        10f64.powi(self.exponent)
    }

    fn parse(field: &str) -> Result<Self> {
        let field = field.trim();
        match field.rsplit_once(':') {
            Some((name, spec)) => {
                let spec = spec.trim();
                let exp = spec
                    .strip_prefix('e')
                    .or_else(|| spec.strip_prefix('E'))
                    .ok_or_else(|| {
                        Error::Parse(format!("scale spec '{spec}' must look like 'e2' or 'e-4'"))
                    })?;
                let exponent: i32 = exp
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad scale exponent '{exp}'")))?;
                Ok(Self {
                    name: name.trim().to_string(),
                    exponent,
                })
            }
            None => Ok(Self {
                name: field.to_string(),
                exponent: 0,
            }),
        }
    }
}

/// A measured sample read from CSV: the last column is the output, the
/// others are inputs; per-column powers of ten from the header are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RealData {
    pub sample: LabeledSample,
    pub scales: Vec<ColumnScale>,
}

/// Parses a real-data CSV: a header row of `name:e<exp>` column
/// declarations, then one system per row.
pub fn ingest_real_data<R: std::io::Read>(reader: R) -> Result<RealData> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(Error::EmptyData("no header row".into()));
    }
    let scales: Vec<ColumnScale> = headers
        .iter()
        .map(ColumnScale::parse)
        .collect::<Result<_>>()?;
    let columns = scales.len();
    if columns < 2 {
        return Err(Error::Parse(
            "need at least one input column and one output column".into(),
        ));
    }

    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (row_idx, record) in csv_reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.len() != columns {
            return Err(Error::ColumnCountMismatch {
                row: row_idx + 1,
                got: record.len(),
                expected: columns,
            });
        }
        let mut values = Vec::with_capacity(columns);
        for (field, scale) in record.iter().zip(scales.iter()) {
            let raw: f64 = field.parse().map_err(|_| {
                Error::Parse(format!("row {}: bad number '{field}'", row_idx + 1))
            })?;
            values.push(raw * scale.factor());
        }
        let output = values.pop().expect("columns >= 2");
        inputs.push(DVector::from_vec(values));
        outputs.push(output);
    }
    if inputs.is_empty() {
        return Err(Error::EmptyData("no data rows".into()));
    }
    Ok(RealData {
        sample: LabeledSample::new(inputs, outputs)?,
        scales,
    })
}
