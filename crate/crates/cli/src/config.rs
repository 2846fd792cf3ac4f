//! Resolved run configurations echoed into output files.
//!
//! Every file the CLI writes embeds a `# config: {...}` line with the fully
//! resolved parameters of the run (plus a `# version:` stamp). Re-running
//! with the echoed configuration reproduces the file byte for byte; the
//! echo re-parses to an equal `RunConfig`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Estimate {
        data: String,
        estimator: u8,
        simulator: Option<String>,
        sim_builtin: Option<String>,
        sim_offset: f64,
        seed: u64,
        design_size: usize,
        anchor_size: usize,
        kde_size: usize,
        grid: String,
        bandwidth: Option<f64>,
        lm_iterations: usize,
        lm_starts: usize,
        truncate: Option<f64>,
        truncate_residual: Option<f64>,
        subintervals: usize,
    },
    Benchmark {
        functions: Vec<String>,
        sigmas: Vec<f64>,
        estimators: Vec<u8>,
        repetitions: usize,
        seed: u64,
        n: usize,
        design_size: usize,
        anchor_size: usize,
        kde_size: usize,
        reference_size: usize,
        lambda_star_size: usize,
        grid: String,
        lm_iterations: usize,
        lm_starts: usize,
        cache_dir: Option<String>,
    },
    Sample {
        model: String,
        count: usize,
        seed: u64,
    },
    ExportDensity {
        source: String,
        grid: Option<String>,
        size: Option<usize>,
        seed: Option<u64>,
    },
}

impl RunConfig {
    pub fn echo_lines(&self) -> Vec<String> {
        vec![
            format!("version: {}", env!("CARGO_PKG_VERSION")),
            format!(
                "config: {}",
                serde_json::to_string(self).expect("config serializes")
            ),
        ]
    }

    /// Parses a `config: {...}` echo line (as returned by the density/report
    /// readers, `#` prefix already stripped).
    #[cfg(test)]
    pub fn from_echo_line(line: &str) -> Option<RunConfig> {
        let json = line.trim().strip_prefix("config:")?.trim();
        serde_json::from_str(json).ok()
    }
}

/// Formats a value with six significant digits for terminal output.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-4..9).contains(&magnitude) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}
