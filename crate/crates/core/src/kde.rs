//! One-dimensional kernel density estimation and L1 distances on a grid.
//!
//! Densities are compared on an equidistant partition of an interval into
//! `points` subintervals; all evaluation happens at the subinterval
//! midpoints, so integrals and L1 distances are midpoint-rule Riemann sums.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Default number of subintervals for density grids.
pub const DEFAULT_SUBINTERVALS: usize = 10_000;

/// Margin (in bandwidths) added around the centers when deriving a grid from
/// a kernel density model.
pub const GRID_BANDWIDTH_MARGIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => {
                (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Equidistant partition of `[lower, upper]` into `points` subintervals.
/// Densities are tabulated at the midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl DensityGrid {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        if points < 2 {
            return Err(Error::InvalidArgument(
                "grid needs at least 2 subintervals".into(),
            ));
        }
        Ok(Self {
            lower,
            upper,
            points,
        })
    }

    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / self.points as f64
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.step()
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|i| self.midpoint(i))
    }
}

/// Rosenblatt-Parzen kernel density estimate over fixed centers.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensityModel {
    centers: Vec<f64>,
    bandwidth: f64,
    kernel: Kernel,
}

impl KernelDensityModel {
    pub fn new(centers: Vec<f64>, bandwidth: f64, kernel: Kernel) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::EmptySample);
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteData("KDE center is not finite".into()));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self {
            centers,
            bandwidth,
            kernel,
        })
    }

    /// Gaussian-kernel KDE with the normal-reference bandwidth, optionally
    /// overridden.
    pub fn from_values(values: Vec<f64>, bandwidth_override: Option<f64>) -> Result<Self> {
        let h = match bandwidth_override {
            Some(h) => h,
            None => silverman_bandwidth(&values)?,
        };
        Self::new(values, h, Kernel::Gaussian)
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// `(1/(N h)) sum_i K((y - c_i)/h)`.
    pub fn evaluate(&self, y: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.centers.iter().map(|c| self.kernel.eval((y - c) / h)).sum();
        sum / (self.centers.len() as f64 * h)
    }

    /// Tabulates the density at every grid midpoint. Each midpoint's sum is
    /// sequential, so the result does not depend on the worker count.
    pub fn evaluate_grid(&self, grid: &DensityGrid) -> Vec<f64> {
        (0..grid.points)
            .into_par_iter()
            .map(|i| self.evaluate(grid.midpoint(i)))
            .collect()
    }

    /// Grid spanning the centers plus `GRID_BANDWIDTH_MARGIN` bandwidths on
    /// both sides, with the default number of subintervals.
    pub fn default_grid(&self) -> DensityGrid {
        let lo = self.centers.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let margin = GRID_BANDWIDTH_MARGIN * self.bandwidth;
        // A degenerate span cannot happen for bandwidth > 0, but keep the
        // grid valid regardless.
        DensityGrid::new(lo - margin, hi + margin, DEFAULT_SUBINTERVALS)
            .expect("margin > 0 guarantees a valid grid")
    }
}

/// `kde_evaluate` of the specification: evaluate the model at one point.
pub fn kde_evaluate(model: &KernelDensityModel, y: f64) -> f64 {
    model.evaluate(y)
}

/// Normal-reference bandwidth `h = sigma * (4/(3N))^(1/5)` with
/// `sigma = min(sample std, IQR/1.349)` (std normalized by `1/(N-1)`).
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "bandwidth selection needs at least 2 values".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData("bandwidth input is not finite".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let sigma = std.min(iqr / 1.349);
    if !(sigma > 0.0) {
        return Err(Error::DegenerateSample(
            "scale estimate is zero, cannot select a bandwidth".into(),
        ));
    }
    Ok(sigma * (4.0 / (3.0 * n as f64)).powf(0.2))
}

/// Linear-interpolation quantile (the numpy default) on sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Midpoint-rule integral of tabulated values.
pub fn integral(values: &[f64], grid: &DensityGrid) -> f64 {
    debug_assert_eq!(values.len(), grid.points);
    values.iter().sum::<f64>() * grid.step()
}

/// Midpoint-rule L1 distance between two densities evaluated on the grid.
pub fn l1_riemann<F, G>(f: F, g: G, grid: &DensityGrid) -> f64
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
{
    let step = grid.step();
    (0..grid.points)
        .into_par_iter()
        .map(|i| {
            let y = grid.midpoint(i);
            (f(y) - g(y)).abs()
        })
        .sum::<f64>()
        * step
}

/// L1 distance between two tabulations on the same grid.
pub fn l1_from_values(f: &[f64], g: &[f64], grid: &DensityGrid) -> Result<f64> {
    if f.len() != g.len() || f.len() != grid.points {
        return Err(Error::GridMismatch(format!(
            "value counts {} and {} do not match the grid ({} subintervals)",
            f.len(),
            g.len(),
            grid.points
        )));
    }
    Ok(f.iter()
        .zip(g.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * grid.step())
}

/// L1 distance plus the Scheffe identity check `L1 = 2 * integral of the
/// positive part of (f - g)`. Both inputs must integrate to 1 +/- 1e-2 on
/// the grid.
pub fn scheffe_check<F, G>(f: F, g: G, grid: &DensityGrid) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
{
    const NORMALIZATION_TOL: f64 = 1e-2;
    let step = grid.step();
    let fs: Vec<f64> = (0..grid.points)
        .into_par_iter()
        .map(|i| f(grid.midpoint(i)))
        .collect();
    let gs: Vec<f64> = (0..grid.points)
        .into_par_iter()
        .map(|i| g(grid.midpoint(i)))
        .collect();
    for values in [&fs, &gs] {
        let total = values.iter().sum::<f64>() * step;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized {
                integral: total,
                tolerance: NORMALIZATION_TOL,
            });
        }
    }
    let l1 = fs
        .iter()
        .zip(gs.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * step;
    let positive = fs
        .iter()
        .zip(gs.iter())
        .map(|(a, b)| (a - b).max(0.0))
        .sum::<f64>()
        * step;
    Ok((l1, 2.0 * positive))
}

/// A density tabulated on a grid, as read from or written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    pub grid: DensityGrid,
    pub abscissae: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn from_model(model: &KernelDensityModel, grid: &DensityGrid) -> Self {
        Self {
            grid: *grid,
            abscissae: grid.midpoints().collect(),
            values: model.evaluate_grid(grid),
        }
    }

    pub fn integral(&self) -> f64 {
        integral(&self.values, &self.grid)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid.points == other.grid.points
            && self.abscissae.len() == other.abscissae.len()
            && self
                .abscissae
                .iter()
                .zip(other.abscissae.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn l1(&self, other: &Self) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch(
                "densities are tabulated on different grids".into(),
            ));
        }
        l1_from_values(&self.values, &other.values, &self.grid)
    }
}

/// Writes a density as two-column CSV `y,density`. Leading comment lines
/// (starting with `#`) carry metadata such as the config echo.
pub fn write_density_csv<W: Write>(
    out: &mut W,
    density: &TabulatedDensity,
    comments: &[String],
) -> Result<()> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "# grid: lower={} upper={} points={}", density.grid.lower, density.grid.upper, density.grid.points)?;
    writeln!(out, "y,density")?;
    for (y, v) in density.abscissae.iter().zip(density.values.iter()) {
        writeln!(out, "{y},{v}")?;
    }
    Ok(())
}

/// Reads a density written by [`write_density_csv`]. Comment lines are
/// returned verbatim (without the `# ` prefix) for config-echo inspection.
pub fn read_density_csv<R: BufRead>(input: R) -> Result<(TabulatedDensity, Vec<String>)> {
    let mut comments = Vec::new();
    let mut grid: Option<DensityGrid> = None;
    let mut abscissae = Vec::new();
    let mut values = Vec::new();
    let mut saw_header = false;
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(spec) = rest.strip_prefix("grid:") {
                grid = Some(parse_grid_comment(spec.trim())?);
            } else {
                comments.push(rest.to_string());
            }
            continue;
        }
        if !saw_header {
            if trimmed != "y,density" {
                return Err(Error::Parse(format!(
                    "expected header 'y,density', got '{trimmed}'"
                )));
            }
            saw_header = true;
            continue;
        }
        let mut parts = trimmed.split(',');
        let y: f64 = parts
            .next()
            .ok_or_else(|| Error::Parse("missing y column".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad y value: {e}")))?;
        let v: f64 = parts
            .next()
            .ok_or_else(|| Error::Parse("missing density column".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad density value: {e}")))?;
        if parts.next().is_some() {
            return Err(Error::Parse("expected exactly two columns".into()));
        }
        abscissae.push(y);
        values.push(v);
    }
    let grid = grid.ok_or_else(|| Error::Parse("missing '# grid:' line".into()))?;
    if abscissae.len() != grid.points {
        return Err(Error::Parse(format!(
            "grid declares {} subintervals but file has {} rows",
            grid.points,
            abscissae.len()
        )));
    }
    Ok((
        TabulatedDensity {
            grid,
            abscissae,
            values,
        },
        comments,
    ))
}

fn parse_grid_comment(spec: &str) -> Result<DensityGrid> {
    let mut lower = None;
    let mut upper = None;
    let mut points = None;
    for field in spec.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad grid field '{field}'")))?;
        match key {
            "lower" => lower = Some(value.parse().map_err(|e| Error::Parse(format!("{e}")))?),
            "upper" => upper = Some(value.parse().map_err(|e| Error::Parse(format!("{e}")))?),
            "points" => points = Some(value.parse().map_err(|e| Error::Parse(format!("{e}")))?),
            _ => return Err(Error::Parse(format!("unknown grid field '{key}'"))),
        }
    }
    match (lower, upper, points) {
        (Some(l), Some(u), Some(p)) => DensityGrid::new(l, u, p),
        _ => Err(Error::Parse("incomplete grid line".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_pdf(mu: f64, sigma: f64) -> impl Fn(f64) -> f64 {
        move |y: f64| {
            let z = (y - mu) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        }
    }

    #[test]
    fn single_center_at_origin() {
        let m = KernelDensityModel::new(vec![0.0], 1.0, Kernel::Gaussian).unwrap();
        let v = kde_evaluate(&m, 0.0);
        assert!((v - 0.3989422804014327).abs() < 1e-12);
    }

    #[test]
    fn symmetric_centers_give_symmetric_density() {
        let m = KernelDensityModel::new(vec![-2.0, -0.5, 0.5, 2.0], 0.7, Kernel::Gaussian).unwrap();
        for y in [0.1, 0.9, 2.3, 4.0] {
            assert!((m.evaluate(y) - m.evaluate(-y)).abs() < 1e-14);
        }
    }

    #[test]
    fn two_centers_hand_value() {
        let m = KernelDensityModel::new(vec![-1.0, 1.0], 1.0, Kernel::Gaussian).unwrap();
        // Both centers contribute phi(1).
        let expected = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((m.evaluate(0.0) - expected).abs() < 1e-12);
        assert!((expected - 0.241971).abs() < 1e-6);
    }

    #[test]
    fn silverman_matches_formula() {
        let mut rng = crate::rng::RngStream::new(5).rng();
        let values: Vec<f64> = (0..10_000)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let h = silverman_bandwidth(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let sigma = std.min(iqr / 1.349);
        assert!((h - sigma * (4.0 / (3.0 * n)).powf(0.2)).abs() < 1e-12);
    }

    #[test]
    fn silverman_iqr_branch() {
        let values = vec![0.0, 0.0, 0.0, 1.0];
        let n = 4.0f64;
        let mean = 0.25;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let iqr = 0.25; // quantile(0.75) = 0.25, quantile(0.25) = 0 by interpolation
        assert!(iqr / 1.349 < std);
        let h = silverman_bandwidth(&values).unwrap();
        assert!((h - (iqr / 1.349) * (4.0 / (3.0 * n)).powf(0.2)).abs() < 1e-12);
    }

    #[test]
    fn silverman_rejects_degenerate() {
        assert!(matches!(
            silverman_bandwidth(&[2.0, 2.0, 2.0]),
            Err(Error::DegenerateSample(_))
        ));
        assert!(silverman_bandwidth(&[1.0]).is_err());
    }

    #[test]
    fn l1_of_identical_densities_is_zero() {
        let grid = DensityGrid::new(-5.0, 5.0, 1000).unwrap();
        let f = normal_pdf(0.0, 1.0);
        assert_eq!(l1_riemann(&f, &f, &grid), 0.0);
    }

    #[test]
    fn l1_of_disjoint_unit_masses_is_two() {
        let grid = DensityGrid::new(-60.0, 60.0, 20_000).unwrap();
        let f = normal_pdf(-30.0, 0.5);
        let g = normal_pdf(30.0, 0.5);
        let l1 = l1_riemann(f, g, &grid);
        assert!((l1 - 2.0).abs() < 1e-3, "l1 = {l1}");
    }

    #[test]
    fn l1_closed_form_shifted_normals() {
        // Densities cross once at 1/2; closed form is 2*(2*Phi(1/2) - 1).
        let grid = DensityGrid::new(-8.0, 9.0, DEFAULT_SUBINTERVALS).unwrap();
        let l1 = l1_riemann(normal_pdf(0.0, 1.0), normal_pdf(1.0, 1.0), &grid);
        let phi_half = 0.5 * (1.0 + statrs::function::erf::erf(0.5 / 2.0f64.sqrt()));
        let expected = 2.0 * (2.0 * phi_half - 1.0);
        assert!((l1 - expected).abs() < 1e-3, "l1 = {l1}, expected {expected}");
        assert!((expected - 0.765845).abs() < 1e-5);
    }

    #[test]
    fn scheffe_identity() {
        let grid = DensityGrid::new(-8.0, 9.0, DEFAULT_SUBINTERVALS).unwrap();
        let (l1, pos) = scheffe_check(normal_pdf(0.0, 1.0), normal_pdf(1.0, 1.0), &grid).unwrap();
        assert!((l1 - 0.765845).abs() < 2e-3);
        assert!((pos - 0.765845).abs() < 2e-3);
        let f = normal_pdf(0.0, 1.0);
        let (l1, pos) = scheffe_check(&f, &f, &grid).unwrap();
        assert_eq!(l1, 0.0);
        assert_eq!(pos, 0.0);
    }

    #[test]
    fn scheffe_rejects_unnormalized() {
        let grid = DensityGrid::new(-8.0, 8.0, 1000).unwrap();
        let zero = |_: f64| 0.0;
        assert!(matches!(
            scheffe_check(normal_pdf(0.0, 1.0), zero, &grid),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn kde_integrates_to_one_on_default_grid() {
        let mut rng = crate::rng::RngStream::new(8).rng();
        let values: Vec<f64> = (0..500)
            .map(|_| {
                let z: f64 =
                    rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                3.0 * z - 1.0
            })
            .collect();
        let m = KernelDensityModel::from_values(values, None).unwrap();
        let d = TabulatedDensity::from_model(&m, &m.default_grid());
        assert!((d.integral() - 1.0).abs() < 1e-3, "integral = {}", d.integral());
    }

    #[test]
    fn csv_round_trip() {
        let m = KernelDensityModel::new(vec![0.0, 1.0, 2.0], 0.5, Kernel::Gaussian).unwrap();
        let grid = DensityGrid::new(-2.0, 4.0, 100).unwrap();
        let d = TabulatedDensity::from_model(&m, &grid);
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &d, &["config: {}".to_string()]).unwrap();
        let (parsed, comments) = read_density_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, d);
        assert_eq!(comments, vec!["config: {}".to_string()]);
    }
}
