//! TOML run configurations. Every table rejects unknown keys.

use std::path::Path;

use anyhow::{bail, Result};
use dppfluct::ensembles::{EnsembleSpec, Family};
use dppfluct::montecarlo::Evaluation;
use dppfluct::symbols::LayeredStatistic;
use dppfluct::Polynomial;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Error in the configuration file or command-line options.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| config_error(e.to_string()))
}

/// Lift a core validation error into a configuration error.
pub fn checked<T>(r: dppfluct::Result<T>) -> Result<T> {
    r.map_err(|e| config_error(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    HermiteOu,
    LaguerreSquaredOu,
    JacobiDiffusion,
    Meixner,
    CharlierEdge,
    CharlierBulk,
    Krawtchouk,
    Hahn,
    NonStationaryHermite,
}

/// `[ensemble]`: a family name, the particle number and the family's own
/// parameters, flat in one table.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub family: FamilyName,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Monomial coefficients of the potential `V`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<f64>>,
}

impl EnsembleConfig {
    fn present(&self) -> Vec<&'static str> {
        let mut keys = vec![];
        let opts = [
            ("r", self.r),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("mu_tilde", self.mu_tilde),
            ("p", self.p),
            ("b", self.b),
            ("c", self.c),
        ];
        for (k, v) in opts {
            if v.is_some() {
                keys.push(k);
            }
        }
        if self.potential.is_some() {
            keys.push("potential");
        }
        keys
    }

    fn family(&self) -> Result<Family> {
        use FamilyName::*;
        let wanted: &[&str] = match self.family {
            HermiteOu => &[],
            LaguerreSquaredOu => &["r"],
            JacobiDiffusion => &["alpha", "beta"],
            Meixner => &["gamma", "mu"],
            CharlierEdge => &["mu"],
            CharlierBulk => &["mu_tilde"],
            Krawtchouk => &["p", "gamma"],
            Hahn => &["b", "c"],
            NonStationaryHermite => &["potential"],
        };
        let present = self.present();
        if let Some(extra) = present.iter().find(|k| !wanted.contains(k)) {
            bail!(config_error(format!("key `{extra}` does not apply to family {:?}", self.family)));
        }
        if let Some(missing) = wanted.iter().find(|k| !present.contains(k)) {
            bail!(config_error(format!("family {:?} needs key `{missing}`", self.family)));
        }
        let v = |x: Option<f64>| x.unwrap_or_default();
        Ok(match self.family {
            HermiteOu => Family::HermiteOU,
            LaguerreSquaredOu => Family::LaguerreSquaredOU { r: v(self.r) },
            JacobiDiffusion => Family::JacobiDiffusion {
                alpha: v(self.alpha),
                beta: v(self.beta),
            },
            Meixner => Family::Meixner {
                gamma: v(self.gamma),
                mu: v(self.mu),
            },
            CharlierEdge => Family::CharlierEdge { mu: v(self.mu) },
            CharlierBulk => Family::CharlierBulk { mu_tilde: v(self.mu_tilde) },
            Krawtchouk => Family::Krawtchouk {
                p: v(self.p),
                gamma: v(self.gamma),
            },
            Hahn => Family::Hahn {
                b: v(self.b),
                c: v(self.c),
            },
            NonStationaryHermite => Family::NonStationaryHermite {
                potential: Polynomial::monomial(self.potential.clone().unwrap_or_default()),
            },
        })
    }

    pub fn spec(&self) -> Result<EnsembleSpec> {
        checked(EnsembleSpec::new(self.family()?, self.n))
    }
}

/// `[statistic]`: layer times and monomial coefficients, either one
/// `polynomial` shared by all layers or one entry of `layers` per time.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticConfig {
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<Vec<f64>>>,
}

impl StatisticConfig {
    pub fn build(&self) -> Result<LayeredStatistic> {
        let layers = match (&self.polynomial, &self.layers) {
            (Some(p), None) => vec![p.clone(); self.times.len()],
            (None, Some(ls)) => ls.clone(),
            _ => bail!(config_error("statistic needs exactly one of `polynomial` or `layers`")),
        };
        if layers.iter().any(|c| c.is_empty() || c.iter().any(|v| !v.is_finite())) {
            bail!(config_error("polynomial coefficients must be finite and non-empty"));
        }
        checked(LayeredStatistic::new(
            layers.into_iter().map(Polynomial::monomial).collect(),
            self.times.clone(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `a0 = 0`, `a1 = sqrt(t(1-t))`, `τ = ½ ln(t/(1-t))`.
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub preset: Option<Preset>,
    pub statistic: StatisticConfig,
    #[serde(default)]
    pub series_k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CumulantMethodChoice {
    #[default]
    Windowed,
    Contour,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    #[default]
    BandedTaylor,
    DensePade,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CumulantSettings {
    pub k_max: usize,
    #[serde(default)]
    pub method: CumulantMethodChoice,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_quad_points")]
    pub quad_points: usize,
    #[serde(default)]
    pub backend: BackendChoice,
    /// Extra rows beyond the required truncation.
    #[serde(default)]
    pub extra_truncation: usize,
    /// Fail (exit 1) when `|C2 - sigma2|` exceeds this.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn default_quad_points() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CumulantConfig {
    pub ensemble: EnsembleConfig,
    pub statistic: StatisticConfig,
    pub cumulant: CumulantSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluationChoice {
    #[default]
    Auto,
    Eigenvalues,
}

impl From<EvaluationChoice> for Evaluation {
    fn from(e: EvaluationChoice) -> Self {
        match e {
            EvaluationChoice::Auto => Evaluation::Auto,
            EvaluationChoice::Eigenvalues => Evaluation::Eigenvalues,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub n: usize,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub rescale: bool,
    #[serde(default)]
    pub evaluation: EvaluationChoice,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub mc: McSettings,
    pub statistic: StatisticConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    /// `(τ, θ)` centre.
    pub center: [f64; 2],
    pub radii: [f64; 2],
    pub amplitude: f64,
    #[serde(default = "default_power")]
    pub power: i32,
}

fn default_power() -> i32 {
    3
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GffSettings {
    #[serde(default = "unit_interval")]
    pub interval: [f64; 2],
    #[serde(default = "default_series")]
    pub series_k: usize,
    #[serde(default = "default_series")]
    pub order: usize,
    /// Use the five built-in bumps in addition to `bump` entries.
    #[serde(default)]
    pub standard_bumps: bool,
    #[serde(default)]
    pub bump: Vec<BumpConfig>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_series() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GffConfig {
    pub gff: GffSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteFamily {
    Krawtchouk,
    Charlier,
    Meixner,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    pub family: DiscreteFamily,
    pub n: usize,
    /// Krawtchouk: number of sites minus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Monomial coefficients of `f`.
    pub polynomial: Vec<f64>,
    #[serde(default = "yes")]
    pub enumerate: bool,
    #[serde(default = "yes")]
    pub compare_cumulants: bool,
    #[serde(default = "default_oracle_tolerance")]
    pub tolerance: f64,
}

fn default_oracle_tolerance() -> f64 {
    1e-7
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub oracle: OracleSettings,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InfoSettings {
    /// Layer time (for Hahn, the layer parameter `rho`).
    #[serde(default)]
    pub layer: f64,
    /// Degrees to tabulate; defaults to `n-3 ..= n+3`.
    #[serde(default)]
    pub indices: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InfoConfig {
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub info: InfoSettings,
}
