use std::path::{Path, PathBuf};

use maryland::cf::Frequency;
use maryland::torus::TorusPoint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const PRECISION_ENV: &str = "MARYLAND_PRECISION";
const DEFAULT_PRECISION: u32 = 256;

/// Method names looked up in the strategy registries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyNames {
    pub greens: String,
    pub lyapunov_method: String,
    pub delta_estimator: String,
    pub quadrature: String,
    pub envelope: String,
}

impl Default for StrategyNames {
    fn default() -> Self {
        StrategyNames {
            greens: "det".into(),
            lyapunov_method: "closed".into(),
            delta_estimator: "delta-n".into(),
            quadrature: "avoiding".into(),
            envelope: "literal".into(),
        }
    }
}

/// Everything a run depends on. Serialized into every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `golden`, a decimal in (0, 1), or comma-separated partial quotients
    /// (continued with ones up to `depth`).
    pub alpha: String,
    /// Number of partial quotients kept.
    pub depth: usize,
    /// Decimal phase.
    pub theta: String,
    pub lambda: f64,
    /// Energies for `lyapunov` and `herman`.
    pub energies: Vec<f64>,
    /// Energy window for `spectrum`, `eigfun` and `verify-decay`; all
    /// eigenvalues when absent.
    pub window: Option<[f64; 2]>,
    /// Box `[x1, x2]`.
    pub box_sites: [i64; 2],
    pub precision_bits: u32,
    pub eps: f64,
    /// Scale indices; derived from the box or the depth when empty.
    pub scales: Vec<usize>,
    pub trim: f64,
    pub seed: u64,
    /// Transfer-matrix length and phase samples for the empirical exponent.
    pub iterations: u64,
    pub samples: usize,
    /// Polynomial degrees and quadrature points for the subharmonic mean.
    pub herman_k: Vec<u64>,
    pub quad_points: usize,
    /// Block offsets for the uniformity scan.
    pub ells: Vec<i64>,
    pub strategies: StrategyNames,
    /// Worker threads; the runtime default when absent.
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            alpha: "golden".into(),
            depth: 40,
            theta: "0.3".into(),
            lambda: 2.0,
            energies: vec![0.0],
            window: None,
            box_sites: [-500, 500],
            precision_bits: default_precision(),
            eps: 1e-3,
            scales: Vec::new(),
            trim: 0.1,
            seed: 0,
            iterations: 100_000,
            samples: 32,
            herman_k: vec![50, 100, 200],
            quad_points: 10_000,
            ells: vec![1, 2, 3],
            strategies: StrategyNames::default(),
            workers: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn default_precision() -> u32 {
    std::env::var(PRECISION_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_PRECISION)
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config { field: field.to_string(), reason: reason.into() }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| invalid("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be a positive finite number"));
        }
        if self.depth < 3 {
            return Err(invalid("depth", "need at least 3 partial quotients"));
        }
        if !(64..=1 << 16).contains(&self.precision_bits) {
            return Err(invalid("precision_bits", "must lie in [64, 65536]"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid("eps", "must lie in (0, 1)"));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(invalid("trim", "must lie in [0, 0.5)"));
        }
        if self.box_sites[0] > self.box_sites[1] {
            return Err(invalid("box_sites", "x1 must not exceed x2"));
        }
        if let Some([lo, hi]) = self.window {
            if !(lo < hi) {
                return Err(invalid("window", "lower end must be below the upper end"));
            }
        }
        if self.energies.iter().any(|e| !e.is_finite()) {
            return Err(invalid("energies", "must be finite"));
        }
        if self.iterations == 0 || self.samples == 0 {
            return Err(invalid("iterations", "iterations and samples must be positive"));
        }
        if self.quad_points == 0 || self.herman_k.contains(&0) {
            return Err(invalid("herman_k", "degrees and quadrature points must be positive"));
        }
        if self.ells.contains(&0) {
            return Err(invalid("ells", "block offsets must be nonzero"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be positive"));
        }
        self.frequency()?;
        self.phase()?;
        Ok(())
    }

    pub fn frequency(&self) -> Result<Frequency, CliError> {
        let bits = self.precision_bits;
        let a = self.alpha.trim();
        if a == "golden" {
            return Ok(Frequency::golden_mean(self.depth, bits));
        }
        if a.contains(',') || (!a.contains('.') && !a.is_empty()) {
            let prefix = a
                .split(',')
                .map(|s| s.trim().parse::<rug::Integer>().map_err(|e| invalid("alpha", e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            if prefix.iter().any(|x| *x <= 0) {
                return Err(invalid("alpha", "partial quotients must be positive"));
            }
            let depth = self.depth.max(prefix.len());
            return Frequency::from_quotients(&prefix, depth, bits).map_err(|e| invalid("alpha", e.to_string()));
        }
        let x = TorusPoint::from_decimal(a, bits).map_err(|e| invalid("alpha", e.to_string()))?;
        let f = Frequency::expand(&x, self.depth).map_err(|e| invalid("alpha", e.to_string()))?;
        Ok(f)
    }

    pub fn phase(&self) -> Result<TorusPoint, CliError> {
        TorusPoint::from_decimal(self.theta.trim(), self.precision_bits).map_err(|e| invalid("theta", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
