//! Run configuration.
//!
//! A config file is one flat JSON object; every key is optional and unknown
//! keys are rejected. Command-line flags win over file values, which win
//! over the defaults below.
//!
//! | key | default | used by |
//! |---|---|---|
//! | `subcommand` | none | all (when none is given on the command line) |
//! | `methods` | `["euler", "rk2", "rk4", "efla"]` | verify, recall, bench, stability |
//! | `seed` | `0` | all randomized commands |
//! | `trials` | `5` | recall (seeds per cell), verify (random instances) |
//! | `seq_len`, `d_k`, `d_v` | `128`, `16`, `16` | verify |
//! | `chunk_size` | `64` | verify, bench |
//! | `tolerance` | per-suite | verify |
//! | `out` | none | converge (required), recall, bench, stability |
//! | `orders`, `betas`, `lambdas` | `1..=10`, `[1]`, `[1]` | converge |
//! | `x_values`, `steps` | `[0.5, 1, 2, 3, 5]`, `20` | stability |
//! | `n_pairs`, `recall_d_k`, `recall_d_v` | `8`, `16`, `8` | recall |
//! | `key_scheme`, `repeats` | `"orthonormal"`, `1` | recall |
//! | `perturbations` | `["none", "dropout:0.1", "scale:2", "gaussian:0.1"]` | recall |
//! | `scale_values` | `false` | recall |
//! | `bench_lengths`, `bench_d`, `bench_reps` | `[1024, 2048, 4096, 8192]`, `16`, `5` | bench |

use std::path::{Path, PathBuf};

use efla::harness::{KeyScheme, Perturbation};
use efla::MethodSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Verify,
    Converge,
    Recall,
    Bench,
    Stability,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<Subcommand>,
    pub methods: Vec<String>,
    pub seed: u64,
    pub trials: usize,
    pub seq_len: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub chunk_size: usize,
    pub tolerance: Option<f64>,
    pub out: Option<PathBuf>,
    pub orders: Vec<u32>,
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub x_values: Vec<f64>,
    pub steps: usize,
    pub n_pairs: usize,
    pub recall_d_k: usize,
    pub recall_d_v: usize,
    pub key_scheme: String,
    pub repeats: usize,
    pub perturbations: Vec<String>,
    pub scale_values: bool,
    pub bench_lengths: Vec<usize>,
    pub bench_d: usize,
    pub bench_reps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            subcommand: None,
            methods: ["euler", "rk2", "rk4", "efla"].map(String::from).to_vec(),
            seed: 0,
            trials: 5,
            seq_len: 128,
            d_k: 16,
            d_v: 16,
            chunk_size: 64,
            tolerance: None,
            out: None,
            orders: (1..=10).collect(),
            betas: vec![1.0],
            lambdas: vec![1.0],
            x_values: vec![0.5, 1.0, 2.0, 3.0, 5.0],
            steps: 20,
            n_pairs: 8,
            recall_d_k: 16,
            recall_d_v: 8,
            key_scheme: "orthonormal".into(),
            repeats: 1,
            perturbations: ["none", "dropout:0.1", "scale:2", "gaussian:0.1"].map(String::from).to_vec(),
            scale_values: false,
            bench_lengths: vec![1024, 2048, 4096, 8192],
            bench_d: 16,
            bench_reps: 5,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let dims = [
            ("trials", self.trials),
            ("seq_len", self.seq_len),
            ("d_k", self.d_k),
            ("d_v", self.d_v),
            ("chunk_size", self.chunk_size),
            ("steps", self.steps),
            ("n_pairs", self.n_pairs),
            ("recall_d_k", self.recall_d_k),
            ("recall_d_v", self.recall_d_v),
            ("repeats", self.repeats),
            ("bench_d", self.bench_d),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(CliError::Usage(format!("{name} must be at least 1")));
            }
        }
        if let Some(t) = self.tolerance {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Usage(format!("tolerance must be positive, got {t}")));
            }
        }
        if self.bench_reps < 5 {
            return Err(CliError::Usage(format!("bench_reps must be at least 5, got {}", self.bench_reps)));
        }
        self.methods()?;
        self.perturbations()?;
        self.key_scheme()?;
        Ok(())
    }

    pub fn methods(&self) -> Result<Vec<MethodSpec>, CliError> {
        if self.methods.is_empty() {
            return Err(CliError::Usage("method list is empty".into()));
        }
        self.methods
            .iter()
            .map(|m| {
                m.parse::<MethodSpec>()
                    .and_then(MethodSpec::validate)
                    .map_err(|e| CliError::Usage(e.to_string()))
            })
            .collect()
    }

    pub fn key_scheme(&self) -> Result<KeyScheme, CliError> {
        self.key_scheme.parse().map_err(|e: efla::Error| CliError::Usage(e.to_string()))
    }

    pub fn perturbations(&self) -> Result<Vec<Perturbation>, CliError> {
        self.perturbations
            .iter()
            .map(|p| parse_perturbation(p, self.scale_values))
            .collect()
    }
}

/// `none`, `dropout:P`, `scale:S` or `gaussian:SIGMA`.
pub fn parse_perturbation(text: &str, scale_values: bool) -> Result<Perturbation, CliError> {
    let bad = || CliError::Usage(format!("cannot parse perturbation `{text}`"));
    let (name, param) = match text.trim().split_once(':') {
        Some((n, p)) => (n, Some(p.trim().parse::<f64>().map_err(|_| bad())?)),
        None => (text.trim(), None),
    };
    let p = match (name.to_ascii_lowercase().as_str(), param) {
        ("none", None) => Perturbation::None,
        ("dropout", Some(p)) => Perturbation::Dropout(p),
        ("scale", Some(s)) => Perturbation::Scale {
            factor: s,
            scale_values,
        },
        ("gaussian", Some(s)) => Perturbation::Gaussian(s),
        _ => return Err(bad()),
    };
    p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"seed": 1, "sede": 2}"#).unwrap_err();
        assert!(err.to_string().contains("sede"));
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 3, "subcommand": "recall"}"#).unwrap();
        assert_eq!((cfg.seed, cfg.subcommand), (3, Some(Subcommand::Recall)));
        assert_eq!(cfg.trials, 5);
    }

    #[test]
    fn validation() {
        let zero = RunConfig {
            d_k: 0,
            ..RunConfig::default()
        };
        assert!(zero.validate().is_err());
        let tol = RunConfig {
            tolerance: Some(-1.0),
            ..RunConfig::default()
        };
        assert!(tol.validate().is_err());
        let methods = RunConfig {
            methods: vec!["heun".into()],
            ..RunConfig::default()
        };
        assert!(methods.validate().is_err());
    }

    #[test]
    fn perturbation_syntax() {
        assert_eq!(parse_perturbation("none", false).unwrap(), Perturbation::None);
        assert_eq!(parse_perturbation("dropout:0.25", false).unwrap(), Perturbation::Dropout(0.25));
        assert_eq!(
            parse_perturbation("scale:4", true).unwrap(),
            Perturbation::Scale {
                factor: 4.0,
                scale_values: true
            }
        );
        for bad in ["scale", "dropout:2", "gaussian:x", "blur:1"] {
            assert!(parse_perturbation(bad, false).is_err(), "{bad}");
        }
    }
}
