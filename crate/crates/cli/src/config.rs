//! Experiment configuration: TOML schema, validation diagnostics, and
//! construction of library objects.

use kac_kinetic::model::CollisionKernel;
use kac_kinetic::sampling::ReferenceDensity;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Simulate,
    Chaos,
    Relaxation,
    Lln,
    MetricsCheck,
    EntropyTrack,
    Validate,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelSpec {
    /// "gmm" | "hs" | "tmm"
    pub kind: String,
    pub d: usize,
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub strength: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InitialSpec {
    /// Library name: "uniform_ball" | "trunc_gauss" | "two_point" |
    /// "bimodal" | "gaussian".
    pub density: String,
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Condition the N-particle draw onto the energy sphere.
    #[serde(default)]
    pub conditioned: bool,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub initial: InitialSpec,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub n_schedule: Vec<usize>,
    #[serde(default)]
    pub e: Option<f64>,
    #[serde(default)]
    pub horizon: f64,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_ell")]
    pub ell: usize,
    #[serde(default = "default_q")]
    pub q: u32,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_k")]
    pub k: u32,
    /// Metric used by the lln experiment: "w1" | "hneg1sq".
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Monte Carlo budget for entropy production (0 disables it).
    #[serde(default)]
    pub mc_budget: usize,
    /// Number of random pairs for the metrics check.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Atoms per cloud in the metrics check.
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    pub master_seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: String,
    /// Anisotropy of the initial Gaussian in the entropy tracker.
    #[serde(default = "default_anisotropy")]
    pub anisotropy: f64,
    /// Fourier-grid half-width for the spectral solver.
    #[serde(default = "default_xi_max")]
    pub xi_max: f64,
    /// Fourier-grid nodes per axis (odd).
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// Spectral time step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Save every `save_stride`-th spectral step.
    #[serde(default = "default_stride")]
    pub save_stride: usize,
}

fn default_n() -> usize {
    16
}
fn default_m() -> usize {
    100
}
fn default_ell() -> usize {
    1
}
fn default_q() -> u32 {
    1
}
fn default_s() -> f64 {
    1.0
}
fn default_k() -> u32 {
    2
}
fn default_metric() -> String {
    "w1".into()
}
fn default_bootstrap() -> usize {
    32
}
fn default_pairs() -> usize {
    100
}
fn default_atoms() -> usize {
    20
}
fn default_out() -> String {
    "out".into()
}
fn default_anisotropy() -> f64 {
    0.5
}
fn default_xi_max() -> f64 {
    4.0
}
fn default_grid_n() -> usize {
    41
}
fn default_dt() -> f64 {
    0.05
}
fn default_stride() -> usize {
    8
}

impl ExperimentConfig {
    /// Schema and semantic diagnostics; never mutates state.
    pub fn validate(&self, kind: Kind) -> Vec<String> {
        let mut out = Vec::new();
        match self.kernel.kind.as_str() {
            "gmm" | "hs" => {}
            "tmm" => {
                match self.kernel.cutoff {
                    Some(c) if c > 0.0 && c < std::f64::consts::FRAC_PI_2 => {}
                    Some(c) => out.push(format!(
                        "tmm cutoff must lie in (0, pi/2); got {c}"
                    )),
                    None => out.push("tmm kernel requires a cutoff".into()),
                }
                if self.kernel.strength.is_some_and(|s| s <= 0.0) {
                    out.push("tmm strength must be positive".into());
                }
            }
            other => out.push(format!("unknown kernel '{other}'")),
        }
        if self.kernel.d == 0 || self.kernel.d > 3 {
            out.push(format!("dimension must be 1..=3, got {}", self.kernel.d));
        }
        if ReferenceDensity::by_name(&self.initial.density, self.kernel.d.max(1), self.initial.scale)
            .is_err()
        {
            out.push(format!(
                "unknown reference density '{}'",
                self.initial.density
            ));
        }
        if self.initial.scale <= 0.0 {
            out.push("initial scale must be positive".into());
        }
        if self.ell > self.n {
            out.push("marginal order exceeds particle count".into());
        }
        if !(self.q == 1 || self.q == 2) {
            out.push(format!("q must be 1 or 2, got {}", self.q));
        }
        if self.e.is_some_and(|e| e <= 0.0) {
            out.push("energy must be positive".into());
        }
        let mut sorted = self.checkpoints.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted != self.checkpoints {
            out.push("checkpoints must be sorted".into());
        }
        if self
            .checkpoints
            .iter()
            .any(|&t| t < 0.0 || t > self.horizon)
        {
            out.push("checkpoints must lie in [0, horizon]".into());
        }
        match kind {
            Kind::Lln => {
                if self.n_schedule.len() < 2 {
                    out.push("lln requires an N schedule with at least two levels".into());
                }
                if !(self.metric == "w1" || self.metric == "hneg1sq") {
                    out.push(format!("unknown lln metric '{}'", self.metric));
                }
                if self.metric == "hneg1sq" && self.kernel.d != 1 {
                    out.push("the hneg1sq metric is one-dimensional".into());
                }
            }
            Kind::Chaos | Kind::Relaxation | Kind::Simulate | Kind::EntropyTrack => {
                if self.checkpoints.is_empty() {
                    out.push("at least one checkpoint is required".into());
                }
            }
            Kind::MetricsCheck => {
                if self.pairs == 0 || self.atoms < 2 {
                    out.push("metrics check needs pairs >= 1 and atoms >= 2".into());
                }
            }
            Kind::Validate => {}
        }
        match kind {
            Kind::EntropyTrack => {
                if self.kernel.d != 2 {
                    out.push("entropy tracking runs on the d = 2 spectral solver".into());
                }
                if self.grid_n < 9 || self.grid_n % 2 == 0 {
                    out.push("grid_n must be odd and at least 9".into());
                }
                if self.dt <= 0.0 {
                    out.push("dt must be positive".into());
                }
                if !(0.0..1.0).contains(&self.anisotropy) {
                    out.push("anisotropy must lie in [0, 1)".into());
                }
            }
            _ => {}
        }
        out
    }

    pub fn kernel(&self) -> anyhow::Result<CollisionKernel> {
        Ok(match self.kernel.kind.as_str() {
            "gmm" => CollisionKernel::gmm(self.kernel.d),
            "hs" => CollisionKernel::hs(self.kernel.d),
            "tmm" => CollisionKernel::tmm(
                self.kernel.d,
                self.kernel.cutoff.unwrap_or(0.1),
                self.kernel.strength.unwrap_or(1.0),
            )?,
            other => anyhow::bail!("unknown kernel '{other}'"),
        })
    }

    pub fn density(&self) -> anyhow::Result<ReferenceDensity> {
        Ok(ReferenceDensity::by_name(
            &self.initial.density,
            self.kernel.d,
            self.initial.scale,
        )?)
    }

    pub fn energy(&self) -> anyhow::Result<f64> {
        Ok(match self.e {
            Some(e) => e,
            None => self.density()?.energy(),
        })
    }
}
