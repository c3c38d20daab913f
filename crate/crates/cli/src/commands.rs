//! Subcommand implementations and their report types.
//!
//! Each command validates its configuration first (errors there are
//! [`ConfigError`]s, exit code 2), then computes. A computed comparison that
//! misses its tolerance clears `passed` (exit code 1).

use std::time::Instant;

use anyhow::{bail, Result};
use dppfluct::cumulants::{
    cumulants_contour, cumulants_windowed_report, first_cumulant, CumulantMethod, CumulantReport, CumulantRequest,
    ExpBackend, Radius,
};
use dppfluct::dpp::{determinant_cumulants_fd, enumerate_small, variance_oracle, DiscreteOPE};
use dppfluct::ensembles::{bridge_limit, hahn_limits, Family, LimitData};
use dppfluct::gff::{compare, standard_bumps, GffGeometry, TestFunction};
use dppfluct::montecarlo::{run_experiment, OuConfig};
use dppfluct::symbols::{variance_fixed_n, variance_terms};
use dppfluct::{Error as CoreError, Execution, Polynomial};
use serde::{Deserialize, Serialize};

use crate::config::{
    checked, config_error, BackendChoice, CumulantConfig, CumulantMethodChoice, DiscreteFamily, EnsembleConfig,
    EvaluationChoice, GffConfig, InfoConfig, McConfig, OracleConfig, OracleSettings, PredictConfig, Preset,
};
use crate::output::{cell, cell_f, to_json, Table, Timestamp, SCHEMA_VERSION};

/// Options shared by all subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub dump_samples: bool,
    pub execution: Execution,
}

/// Encoded results of one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub json: String,
    pub table: Option<Table>,
    pub samples: Option<Table>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictReport {
    pub schema: u32,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub times: Vec<f64>,
    pub taus: Vec<f64>,
    pub sigma2: f64,
    pub per_k_terms: Vec<f64>,
    pub timestamp: Timestamp,
}

pub fn predict(cfg: &PredictConfig, _opts: RunOptions) -> Result<Outcome> {
    let start = Instant::now();
    let stat = cfg.statistic.build()?;
    let limits: Vec<LimitData> = match (&cfg.ensemble, cfg.preset) {
        (Some(e), None) => {
            let spec = e.spec()?;
            checked(stat.times.iter().map(|&t| spec.limit_symbol(t)).collect())?
        }
        (None, Some(Preset::Bridge)) => checked(stat.times.iter().map(|&t| bridge_limit(t)).collect())?,
        _ => bail!(config_error("predict needs exactly one of [ensemble] or `preset`")),
    };
    // Terms vanish beyond the polynomial degree for three-term symbols.
    let k = cfg.series_k.unwrap_or_else(|| stat.max_degree().max(1));
    if k == 0 {
        bail!(config_error("series_k must be positive"));
    }
    let terms = checked(variance_terms(&stat, &limits, k))?;
    let sigma2 = checked(variance_fixed_n(&stat, &limits, Some(k)))?;
    let mut table = Table::new(&["k", "term"]);
    for (i, t) in terms.iter().enumerate() {
        table.push(vec![cell(i + 1), cell_f(*t)]);
    }
    let report = PredictReport {
        schema: SCHEMA_VERSION,
        command: "predict".into(),
        ensemble: cfg.ensemble.clone(),
        preset: cfg.preset,
        times: stat.times.clone(),
        taus: limits.iter().map(|l| l.tau).collect(),
        sigma2,
        per_k_terms: terms,
        timestamp: Timestamp::since(start),
    };
    Ok(Outcome {
        json: to_json(&report)?,
        table: Some(table),
        samples: None,
        passed: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CumulantValue {
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub radius: f64,
    pub truncation: usize,
    #[serde(default)]
    pub window: Option<usize>,
    pub quadrature_residual: f64,
    pub quad_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodResult {
    pub method: String,
    pub values: Vec<CumulantValue>,
    pub diagnostics: Diagnostics,
}

fn method_name(m: CumulantMethod) -> &'static str {
    match m {
        CumulantMethod::ContourFull => "contour-full",
        CumulantMethod::ContourWindowed => "contour-windowed",
        CumulantMethod::CompositionSeries => "composition-series",
    }
}

impl From<&CumulantReport> for MethodResult {
    fn from(r: &CumulantReport) -> Self {
        MethodResult {
            method: method_name(r.method).into(),
            values: r.values.iter().map(|&(k, value)| CumulantValue { k, value }).collect(),
            diagnostics: Diagnostics {
                radius: r.diagnostics.radius,
                truncation: r.diagnostics.truncation,
                window: r.diagnostics.window,
                quadrature_residual: r.diagnostics.quadrature_residual,
                quad_points: r.diagnostics.quad_points,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CumulantOutput {
    pub schema: u32,
    pub command: String,
    pub ensemble: EnsembleConfig,
    pub times: Vec<f64>,
    /// Exact first cumulant `Σ_m Tr P_n f(m, 𝕁_m)`.
    pub mean: f64,
    pub results: Vec<MethodResult>,
    /// Limiting variance of the symbols, when the family has one.
    #[serde(default)]
    pub predicted_sigma2: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    pub passed: bool,
    pub timestamp: Timestamp,
}

pub fn cumulant(cfg: &CumulantConfig, opts: RunOptions) -> Result<Outcome> {
    let start = Instant::now();
    let s = &cfg.cumulant;
    let spec = cfg.ensemble.spec()?;
    let stat = cfg.statistic.build()?;
    let n = cfg.ensemble.n;
    if s.k_max < 1 || s.quad_points < 8 * s.k_max {
        bail!(config_error("need k_max >= 1 and quad_points >= 8 k_max"));
    }
    if s.method != CumulantMethodChoice::Contour && s.k_max < 2 {
        bail!(config_error("windowed cumulants start at k = 2; use k_max >= 2"));
    }
    if let Some(r) = s.radius {
        if !(r > 0.0 && r.is_finite()) {
            bail!(config_error("radius must be positive"));
        }
    }
    let build = |size: usize| -> Result<Vec<_>> {
        checked(stat.times.iter().map(|&t| spec.weighted_recurrence(t, size)).collect())
    };
    let mut req = CumulantRequest::new(build(n + 2)?, stat.clone(), n, s.k_max);
    req.matrices = build(req.required_size() + s.extra_truncation)?;
    req.quad_points = s.quad_points;
    req.radius = s.radius.map_or(Radius::Auto, Radius::Fixed);
    req.execution = opts.execution;

    let mean = first_cumulant(&req)?;
    let mut reports = vec![];
    if s.method != CumulantMethodChoice::Contour {
        reports.push(cumulants_windowed_report(&req)?);
    }
    if s.method != CumulantMethodChoice::Windowed {
        let backend = match s.backend {
            BackendChoice::BandedTaylor => ExpBackend::BandedTaylor,
            BackendChoice::DensePade => ExpBackend::DensePade,
        };
        reports.push(cumulants_contour(&req, backend)?);
    }
    let predicted_sigma2 = stat
        .times
        .iter()
        .map(|&t| spec.limit_symbol(t))
        .collect::<dppfluct::Result<Vec<_>>>()
        .and_then(|limits| variance_fixed_n(&stat, &limits, None))
        .ok();
    let passed = match (s.tolerance, predicted_sigma2) {
        (Some(tol), Some(want)) => reports
            .iter()
            .all(|r| r.get(2).is_some_and(|c2| (c2 - want).abs() <= tol)),
        (Some(_), None) => false,
        (None, _) => true,
    };
    let mut table = Table::new(&["method", "k", "value"]);
    for r in &reports {
        for &(k, v) in &r.values {
            table.push(vec![method_name(r.method).into(), cell(k), cell_f(v)]);
        }
    }
    let report = CumulantOutput {
        schema: SCHEMA_VERSION,
        command: "cumulant".into(),
        ensemble: cfg.ensemble.clone(),
        times: stat.times.clone(),
        mean,
        results: reports.iter().map(MethodResult::from).collect(),
        predicted_sigma2,
        tolerance: s.tolerance,
        passed,
        timestamp: Timestamp::since(start),
    };
    Ok(Outcome {
        json: to_json(&report)?,
        table: Some(table),
        samples: None,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McEcho {
    pub n: usize,
    pub times: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub rescale: bool,
    pub evaluation: EvaluationChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub k3: f64,
    pub k4: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub se_k3: f64,
    pub se_k4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McReport {
    pub schema: u32,
    pub command: String,
    pub config: McEcho,
    pub layers: Vec<Vec<f64>>,
    pub samples_completed: usize,
    pub statistic: Summary,
    pub timestamp: Timestamp,
}

pub fn mc(cfg: &McConfig, opts: RunOptions) -> Result<Outcome> {
    let start = Instant::now();
    let stat = cfg.statistic.build()?;
    let seed = opts.seed.unwrap_or(cfg.mc.seed);
    let mut ou = OuConfig::new(cfg.mc.n, stat.times.clone(), cfg.mc.samples, seed);
    ou.rescale = cfg.mc.rescale;
    ou.evaluation = cfg.mc.evaluation.into();
    checked(ou.validate())?;
    let run = run_experiment(&ou, std::slice::from_ref(&stat), opts.execution, opts.dump_samples)?;
    let s = &run.statistics[0];
    let samples = run.samples.as_ref().map(|rows| {
        let mut t = Table::new(&["sample", "value"]);
        for (i, r) in rows.iter().enumerate() {
            t.push(vec![cell(i), cell_f(r[0])]);
        }
        t
    });
    let report = McReport {
        schema: SCHEMA_VERSION,
        command: "mc".into(),
        config: McEcho {
            n: ou.n,
            times: ou.times.clone(),
            samples: ou.samples,
            seed,
            rescale: ou.rescale,
            evaluation: cfg.mc.evaluation,
        },
        layers: stat.layers.iter().map(|p| p.coeffs().to_vec()).collect(),
        samples_completed: run.samples_completed,
        statistic: Summary {
            mean: s.mean,
            variance: s.variance,
            k3: s.k3,
            k4: s.k4,
            se_mean: s.se_mean,
            se_variance: s.se_variance,
            se_k3: s.se_k3,
            se_k4: s.se_k4,
        },
        timestamp: Timestamp::since(start),
    };
    Ok(Outcome {
        json: to_json(&report)?,
        table: None,
        samples,
        passed: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GffResult {
    pub label: String,
    pub sigma2: f64,
    pub dirichlet: f64,
    pub relative_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GffReport {
    pub schema: u32,
    pub command: String,
    pub interval: [f64; 2],
    pub series_k: usize,
    pub order: usize,
    #[serde(default)]
    pub tolerance: Option<f64>,
    pub results: Vec<GffResult>,
    pub passed: bool,
    pub timestamp: Timestamp,
}

pub fn gff(cfg: &GffConfig, _opts: RunOptions) -> Result<Outcome> {
    let start = Instant::now();
    let g = &cfg.gff;
    let [lo, hi] = g.interval;
    let geom = checked(GffGeometry::ornstein_uhlenbeck((lo, hi)))?;
    if g.series_k == 0 || g.order < 2 {
        bail!(config_error("series_k must be positive and order at least 2"));
    }
    let mut phis: Vec<(String, TestFunction)> = vec![];
    if g.standard_bumps {
        for (i, phi) in standard_bumps().into_iter().enumerate() {
            phis.push((format!("standard-{}", i + 1), phi));
        }
    }
    for (i, b) in g.bump.iter().enumerate() {
        if b.center[0] - b.radii[0] < lo || b.center[0] + b.radii[0] > hi {
            bail!(config_error(format!("bump {} leaves the time interval", i + 1)));
        }
        let phi = checked(TestFunction::bump(
            (b.center[0], b.center[1]),
            (b.radii[0], b.radii[1]),
            b.amplitude,
            b.power,
        ))?;
        phis.push((format!("bump-{}", i + 1), phi));
    }
    if phis.is_empty() {
        bail!(config_error("no test functions: add [[gff.bump]] entries or set standard_bumps"));
    }
    let mut results = vec![];
    for (label, phi) in &phis {
        let c = compare(phi, &geom, g.series_k, g.order)?;
        let passed = g.tolerance.is_none_or(|tol| c.relative_gap <= tol);
        results.push(GffResult {
            label: label.clone(),
            sigma2: c.sigma2,
            dirichlet: c.dirichlet,
            relative_gap: c.relative_gap,
            passed,
        });
    }
    let passed = results.iter().all(|r| r.passed);
    let mut table = Table::new(&["label", "sigma2", "dirichlet", "relative_gap"]);
    for r in &results {
        table.push(vec![
            r.label.clone(),
            cell_f(r.sigma2),
            cell_f(r.dirichlet),
            cell_f(r.relative_gap),
        ]);
    }
    let report = GffReport {
        schema: SCHEMA_VERSION,
        command: "gff".into(),
        interval: g.interval,
        series_k: g.series_k,
        order: g.order,
        tolerance: g.tolerance,
        results,
        passed,
        timestamp: Timestamp::since(start),
    };
    Ok(Outcome {
        json: to_json(&report)?,
        table: Some(table),
        samples: None,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Enumeration {
    pub configurations: u64,
    pub mean: f64,
    pub variance: f64,
    pub third_cumulant: f64,
    pub fourth_cumulant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub quantity: String,
    pub value: f64,
    pub reference: f64,
    /// `|value - reference| / scale`.
    pub error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleReport {
    pub schema: u32,
    pub command: String,
    pub oracle: OracleSettings,
    pub grid_size: usize,
    pub kernel_trace: f64,
    pub idempotency_defect: f64,
    pub orthonormality_defect: f64,
    pub kernel_variance: f64,
    #[serde(default)]
    pub enumeration: Option<Enumeration>,
    #[serde(default)]
    pub determinant_cumulants: Option<Vec<f64>>,
    pub comparisons: Vec<Comparison>,
    pub passed: bool,
    pub warnings: Vec<String>,
    pub timestamp: Timestamp,
}

fn discrete_ope(o: &OracleSettings) -> Result<DiscreteOPE> {
    let present: Vec<&str> = [
        ("m", o.m.is_some()),
        ("p", o.p.is_some()),
        ("mu", o.mu.is_some()),
        ("beta", o.beta.is_some()),
    ]
    .into_iter()
    .filter_map(|(k, on)| on.then_some(k))
    .collect();
    let wanted: &[&str] = match o.family {
        DiscreteFamily::Krawtchouk => &["m", "p"],
        DiscreteFamily::Charlier => &["mu"],
        DiscreteFamily::Meixner => &["beta", "mu"],
    };
    if let Some(extra) = present.iter().find(|k| !wanted.contains(k)) {
        bail!(config_error(format!("key `{extra}` does not apply to {:?}", o.family)));
    }
    if let Some(missing) = wanted.iter().find(|k| !present.contains(k)) {
        bail!(config_error(format!("{:?} needs key `{missing}`", o.family)));
    }
    checked(match o.family {
        DiscreteFamily::Krawtchouk => DiscreteOPE::krawtchouk(o.m.unwrap_or(0), o.p.unwrap_or(0.0), o.n),
        DiscreteFamily::Charlier => DiscreteOPE::charlier(o.mu.unwrap_or(0.0), o.n),
        DiscreteFamily::Meixner => DiscreteOPE::meixner(o.beta.unwrap_or(0.0), o.mu.unwrap_or(0.0), o.n),
    })
}

pub fn oracle(cfg: &OracleConfig, _opts: RunOptions) -> Result<Outcome> {
    let start = Instant::now();
    let o = &cfg.oracle;
    if o.polynomial.is_empty() || o.polynomial.iter().any(|c| !c.is_finite()) {
        bail!(config_error("polynomial coefficients must be finite and non-empty"));
    }
    if !(o.tolerance >= 0.0) {
        bail!(config_error("tolerance must be non-negative"));
    }
    let ope = discrete_ope(o)?;
    let f = Polynomial::monomial(o.polynomial.clone());
    let values: Vec<f64> = ope.grid().iter().map(|&x| f.eval(x)).collect();
    let kernel = ope.kernel();
    let kernel_variance = variance_oracle(&ope, &values)?;
    let enumeration = if o.enumerate {
        match enumerate_small(&ope, &values) {
            Ok(e) => Some(Enumeration {
                configurations: e.configurations,
                mean: e.mean,
                variance: e.variance,
                third_cumulant: e.third_cumulant,
                fourth_cumulant: e.fourth_cumulant,
            }),
            Err(e @ CoreError::EnumerationTooLarge(_)) => bail!(config_error(e.to_string())),
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let determinant = if o.compare_cumulants {
        Some(determinant_cumulants_fd(&ope, &f)?)
    } else {
        None
    };

    let mut comparisons = vec![];
    let mut push = |quantity: &str, value: f64, reference: f64, scale: f64| {
        let error = (value - reference).abs() / scale.max(f64::MIN_POSITIVE);
        comparisons.push(Comparison {
            quantity: quantity.into(),
            value,
            reference,
            error,
            passed: error <= o.tolerance,
        });
    };
    let sigma = kernel_variance.max(0.0).sqrt();
    if let Some(e) = &enumeration {
        push("enumeration variance vs kernel variance", e.variance, kernel_variance, kernel_variance.abs().max(1.0));
    }
    if let Some(d) = determinant {
        let names = ["mean", "variance", "third cumulant", "fourth cumulant"];
        let reference: Vec<f64> = match &enumeration {
            Some(e) => vec![e.mean, e.variance, e.third_cumulant, e.fourth_cumulant],
            None => vec![f64::NAN, kernel_variance, f64::NAN, f64::NAN],
        };
        for k in 0..4 {
            if reference[k].is_nan() {
                continue;
            }
            let scale = reference[k].abs().max(sigma.powi(k as i32 + 1)).max(1e-300);
            push(&format!("determinant {} vs exact", names[k]), d[k], reference[k], scale);
        }
    }
    let passed = comparisons.iter().all(|c| c.passed);
    let mut table = Table::new(&["quantity", "value", "reference", "error"]);
    for c in &comparisons {
        table.push(vec![c.quantity.clone(), cell_f(c.value), cell_f(c.reference), cell_f(c.error)]);
    }
    let report = OracleReport {
        schema: SCHEMA_VERSION,
        command: "oracle".into(),
        oracle: o.clone(),
        grid_size: ope.grid().len(),
        kernel_trace: kernel.trace(),
        idempotency_defect: kernel.idempotency_defect(),
        orthonormality_defect: ope.orthonormality_defect(),
        kernel_variance,
        enumeration,
        determinant_cumulants: determinant.map(|d| d.to_vec()),
        comparisons,
        passed,
        warnings: ope.warnings.clone(),
        timestamp: Timestamp::since(start),
    };
    Ok(Outcome {
        json: to_json(&report)?,
        table: Some(table),
        samples: None,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limit {
    pub a0: f64,
    pub a1: f64,
    pub tau: f64,
    pub kappa_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub k: usize,
    pub diagonal: f64,
    pub off_diagonal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HahnInfo {
    pub a_inf: f64,
    pub b_inf: f64,
    pub tau: f64,
    pub tau_at_cut: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoReport {
    pub schema: u32,
    pub command: String,
    pub ensemble: EnsembleConfig,
    pub layer: f64,
    pub limit: Limit,
    pub coefficients: Vec<Coefficient>,
    #[serde(default)]
    pub hahn: Option<HahnInfo>,
    pub timestamp: Timestamp,
}

pub fn ensemble_info(cfg: &InfoConfig, _opts: RunOptions) -> Result<Outcome> {
    let start = Instant::now();
    let spec = cfg.ensemble.spec()?;
    let n = cfg.ensemble.n;
    let layer = cfg.info.layer;
    let indices = cfg
        .info
        .indices
        .clone()
        .unwrap_or_else(|| (n.saturating_sub(3)..=n + 3).collect());
    let lim = checked(spec.limit_symbol(layer))?;
    let mut coefficients = vec![];
    for &k in &indices {
        let (b, a) = checked(spec.coefficients(layer, k))?;
        coefficients.push(Coefficient {
            k,
            diagonal: b,
            off_diagonal: a,
        });
    }
    let hahn = match spec.family {
        Family::Hahn { b, c } => {
            let h = checked(hahn_limits(b, c, layer, n))?;
            Some(HahnInfo {
                a_inf: h.a_inf,
                b_inf: h.b_inf,
                tau: h.tau,
                tau_at_cut: h.tau_at_cut,
            })
        }
        _ => None,
    };
    let mut table = Table::new(&["k", "diagonal", "off_diagonal"]);
    for c in &coefficients {
        table.push(vec![cell(c.k), cell_f(c.diagonal), cell_f(c.off_diagonal)]);
    }
    let report = InfoReport {
        schema: SCHEMA_VERSION,
        command: "ensemble-info".into(),
        ensemble: cfg.ensemble.clone(),
        layer,
        limit: Limit {
            a0: lim.a0,
            a1: lim.a1,
            tau: lim.tau,
            kappa_n: lim.kappa_n,
        },
        coefficients,
        hahn,
        timestamp: Timestamp::since(start),
    };
    Ok(Outcome {
        json: to_json(&report)?,
        table: Some(table),
        samples: None,
        passed: true,
    })
}
