//! Experiment configuration: JSON-serializable, hashed into every CSV row.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spherecrit_core::kernel::{Activation, Kernel};
use spherecrit_core::{Error, Result};

/// Kernel selection for experiments (numeric tables are API-only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "activation", rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian {
        a2: f64,
        #[serde(default)]
        lambda_b: f64,
    },
    Relu {
        #[serde(default)]
        lambda_b: f64,
    },
    Tanh {
        #[serde(default)]
        lambda_b: f64,
    },
}

impl KernelSpec {
    pub fn activation(&self) -> Result<Activation> {
        match *self {
            KernelSpec::Gaussian { a2, lambda_b } => {
                if !(a2 > 0.0) {
                    return Err(Error::Argument("gaussian a2 must be positive".into()));
                }
                Activation::gaussian_rbf(a2.sqrt(), lambda_b)
            }
            KernelSpec::Relu { lambda_b } => Activation::relu(lambda_b),
            KernelSpec::Tanh { lambda_b } => Activation::tanh(lambda_b),
        }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::new(self.activation()?)
    }

    /// Short label used in CSV rows.
    pub fn id(&self) -> String {
        match *self {
            KernelSpec::Gaussian { a2, lambda_b } => format!("gaussian_a2={a2}_lb={lambda_b}"),
            KernelSpec::Relu { lambda_b } => format!("relu_lb={lambda_b}"),
            KernelSpec::Tanh { lambda_b } => format!("tanh_lb={lambda_b}"),
        }
    }
}

/// Scale presets: desk scale keeps CI runtimes sane, paper scale restores
/// the full experiment sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

/// One experiment run: sizes, seed, output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub depths: Vec<usize>,
    #[serde(default)]
    pub resolutions: Vec<u32>,
    pub replicas: usize,
    pub width: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_lmax")]
    pub lmax: usize,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    #[serde(default)]
    pub thresholds: Vec<f64>,
}

fn default_lmax() -> usize {
    192
}

fn default_quad_nodes() -> usize {
    5000
}

impl ExperimentConfig {
    /// Defaults shared by every experiment at the given scale.
    pub fn preset(name: &str, scale: Scale) -> ExperimentConfig {
        let (replicas, width) = match scale {
            Scale::Desk => (200, 500),
            Scale::Paper => (1000, 1000),
        };
        let depths = match (name, scale) {
            ("fig-critical", Scale::Desk) => vec![1, 5, 10, 20],
            ("fig-critical", Scale::Paper) => vec![1, 5, 10, 20, 30, 40, 50, 60],
            ("fig-variance", _) => (1..=60).collect(),
            ("threshold-sweep", _) => vec![5],
            _ => vec![1],
        };
        let resolutions = match (name, scale) {
            ("table-relu", Scale::Desk) => (3..=7).collect(),
            ("table-relu", Scale::Paper) => (3..=9).collect(),
            ("threshold-sweep", _) => vec![5],
            _ => vec![6],
        };
        let kernel = match name {
            "fig-variance" => KernelSpec::Gaussian {
                a2: 9.0,
                lambda_b: 0.0,
            },
            "table-relu" => KernelSpec::Relu { lambda_b: 0.0 },
            "threshold-sweep" | "fig-critical" => KernelSpec::Gaussian {
                a2: 1.0,
                lambda_b: 0.0,
            },
            _ => KernelSpec::Gaussian {
                a2: 1.0,
                lambda_b: 0.0,
            },
        };
        ExperimentConfig {
            name: name.to_string(),
            kernel,
            depths,
            resolutions,
            replicas,
            width,
            mc_samples: 1_000_000,
            seed: 2024,
            output_dir: PathBuf::from("out"),
            lmax: match name {
                "fig-variance" => 1536,
                _ => 192,
            },
            quad_nodes: match name {
                "fig-variance" => 5000,
                _ => 768,
            },
            thresholds: match name {
                "threshold-sweep" => vec![-12.0, -2.0, -1.0, 0.0, 1.0, 2.0],
                _ => Vec::new(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas < 1 {
            return Err(Error::Argument("replicas must be >= 1".into()));
        }
        if self.mc_samples < 1000 {
            return Err(Error::Argument("mc_samples must be >= 1000".into()));
        }
        if self.width < 1 {
            return Err(Error::Argument("width must be >= 1".into()));
        }
        self.kernel.activation()?;
        Ok(())
    }

    /// Stable hash of the full configuration, recorded in every output row.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_scales() {
        let desk = ExperimentConfig::preset("fig-critical", Scale::Desk);
        assert_eq!(desk.replicas, 200);
        assert_eq!(desk.width, 500);
        assert_eq!(desk.depths, vec![1, 5, 10, 20]);
        let paper = ExperimentConfig::preset("fig-critical", Scale::Paper);
        assert_eq!(paper.replicas, 1000);
        assert_eq!(paper.width, 1000);
        assert_eq!(*paper.depths.last().unwrap(), 60);
        desk.validate().unwrap();
    }

    #[test]
    fn config_json_roundtrip_and_hash_stability() {
        let cfg = ExperimentConfig::preset("table-relu", Scale::Desk);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut changed = cfg.clone();
        changed.seed += 1;
        assert_ne!(changed.hash(), cfg.hash());
    }

    #[test]
    fn kernel_spec_parses_from_json() {
        let spec: KernelSpec =
            serde_json::from_str(r#"{"activation":"gaussian","a2":9.0}"#).unwrap();
        assert_eq!(
            spec,
            KernelSpec::Gaussian {
                a2: 9.0,
                lambda_b: 0.0
            }
        );
        let k = spec.kernel().unwrap();
        assert!((k.dkappa1 - 81.0 / 19.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ExperimentConfig::preset("fig-monte", Scale::Desk);
        cfg.mc_samples = 10;
        assert!(cfg.validate().is_err());
        let bad = KernelSpec::Gaussian {
            a2: -1.0,
            lambda_b: 0.0,
        };
        assert!(bad.activation().is_err());
    }
}
