//! Experiment drivers: configuration, displacement verification, scale
//! sweeps, calibration and line-oriented run reports.

use crate::construction::{
    analytic_costs, assemble_phi_k, AnalyticCosts, ConstructionError, ConstructionParams,
    Feasibility,
};
use crate::flows::{FlowError, FlowMap, IntegratorConfig};
use crate::geometry::Point;
use crate::norms::{calibrate, CalibrationRecord, McConfig, NormError, NormMethod, SobolevParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum XpError {
    #[error("config error: {0}")]
    Config(String),
    #[error("refusing to certify a path cost for k={k}: displacement failed at {violations} probes")]
    RefusedWithoutDisplacement { k: u32, violations: usize },
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How displacement probes are placed inside the shrunken unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeScheme {
    Grid,
    Halton,
}

/// One experiment run, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: u32,
    pub p: f64,
    pub beta: f64,
    /// Scales whose flows are built and probed.
    pub ks: Vec<u32>,
    pub seed: u64,
    pub samples: usize,
    pub rel_stderr_cap: f64,
    pub probe_count: usize,
    /// Probes live in (margin, 1-margin)^n.
    pub probe_margin: f64,
    pub probe_scheme: ProbeScheme,
    pub steps_per_unit: usize,
    pub norm_method: NormMethod,
    /// Width clamp as log10(λ floor); absent means exact widths.
    pub log10_lambda_floor: Option<f64>,
    /// Interpolation constants; absent means calibrate at startup.
    pub c_a: Option<f64>,
    pub c_b: Option<f64>,
    /// Largest k whose displacement is probed during a sweep.
    pub sweep_verify_max_k: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 2,
            p: 3.0,
            beta: 0.25,
            ks: vec![1, 2, 3],
            seed: 0,
            samples: 1_000_000,
            rel_stderr_cap: 0.05,
            probe_count: 10_000,
            probe_margin: 1e-3,
            probe_scheme: ProbeScheme::Halton,
            steps_per_unit: 256,
            norm_method: NormMethod::GnBoundA,
            log10_lambda_floor: Some(-3.0),
            c_a: None,
            c_b: None,
            sweep_verify_max_k: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, XpError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| XpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, XpError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), XpError> {
        if self.probe_count < 100 {
            return Err(XpError::Config(format!(
                "probe_count must be at least 100, got {}",
                self.probe_count
            )));
        }
        if !(self.probe_margin > 0.0 && self.probe_margin < 0.5) {
            return Err(XpError::Config(format!(
                "probe_margin must lie in (0, 0.5), got {}",
                self.probe_margin
            )));
        }
        if self.ks.is_empty() {
            return Err(XpError::Config("ks must not be empty".into()));
        }
        if self.samples < 1000 {
            return Err(XpError::Config(format!(
                "samples must be at least 1000, got {}",
                self.samples
            )));
        }
        self.sobolev().map_err(|e| XpError::Config(e.to_string()))?;
        if !(self.beta > 0.0 && self.beta < 1.0 / 3.0) {
            return Err(XpError::Config(format!("beta must lie in (0, 1/3), got {}", self.beta)));
        }
        Ok(())
    }

    pub fn sobolev(&self) -> Result<SobolevParams, NormError> {
        SobolevParams::new(self.n, self.p)
    }

    pub fn mc(&self) -> McConfig {
        McConfig {
            samples: self.samples,
            seed: self.seed,
            rel_stderr_cap: self.rel_stderr_cap,
            ..Default::default()
        }
    }

    pub fn feasibility(&self) -> Feasibility {
        match self.log10_lambda_floor {
            Some(l10) => Feasibility::Clamped { log_lambda_floor: l10 * std::f64::consts::LN_10 },
            None => Feasibility::Exact,
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { steps_per_unit: self.steps_per_unit, ..Default::default() }
    }

    pub fn params_for(&self, k: u32) -> Result<ConstructionParams, ConstructionError> {
        ConstructionParams::new(self.sobolev().unwrap(), k, self.beta, self.feasibility())
    }

    /// Interpolation constants, calibrating when not pinned by the config.
    pub fn constants(&self) -> Result<(f64, f64, Option<CalibrationRecord>), XpError> {
        match (self.c_a, self.c_b) {
            (Some(a), Some(b)) => Ok((a, b, None)),
            _ => {
                let sp = self.sobolev().map_err(XpError::Norm)?;
                let rec = calibrate(&sp, &self.mc())?;
                Ok((self.c_a.unwrap_or(rec.c_a), self.c_b.unwrap_or(rec.c_b), Some(rec)))
            }
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Deterministic probe cloud in (margin, 1-margin)^n.
pub fn probe_points(scheme: ProbeScheme, n: usize, count: usize, margin: f64) -> Vec<Point> {
    let lo = margin;
    let span = 1.0 - 2.0 * margin;
    match scheme {
        ProbeScheme::Halton => {
            const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
            assert!(n <= PRIMES.len());
            (1..=count as u64)
                .map(|i| {
                    let c: Vec<f64> =
                        (0..n).map(|a| lo + span * radical_inverse(i, PRIMES[a])).collect();
                    Point::from_coords(&c)
                })
                .collect()
        }
        ProbeScheme::Grid => {
            let g = (count as f64).powf(1.0 / n as f64).ceil().max(1.0) as usize;
            let mut out = Vec::with_capacity(count);
            let mut idx = vec![0usize; n];
            'outer: loop {
                let c: Vec<f64> = (0..n)
                    .map(|a| lo + span * (idx[a] as f64 + 0.5) / g as f64)
                    .collect();
                out.push(Point::from_coords(&c));
                if out.len() == count {
                    break;
                }
                for slot in idx.iter_mut() {
                    *slot += 1;
                    if *slot < g {
                        continue 'outer;
                    }
                    *slot = 0;
                }
                break;
            }
            out
        }
    }
}

/// Outcome of probing Φ_k(U) ∩ U = ∅ on U = (0,1)^n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisplacementCheck {
    pub pass: bool,
    pub checked: usize,
    pub violation_count: usize,
    /// Up to 8 offending image points, in probe order.
    pub first_violations: Vec<Vec<f64>>,
    /// Smallest final x over all probes; > 1 certifies displacement.
    pub min_final_x: f64,
}

/// Push every probe through the map and flag images that land back in the
/// closed unit cube. Probes are evaluated in parallel; results are merged
/// in probe order, so the outcome is thread-count independent.
pub fn verify_displacement(phi: &FlowMap, probes: &[Point]) -> Result<DisplacementCheck, XpError> {
    let images: Result<Vec<Point>, FlowError> =
        probes.par_iter().map(|q| phi.eval(q)).collect();
    let images = images?;
    let mut violation_count = 0;
    let mut first_violations = Vec::new();
    let mut min_final_x = f64::INFINITY;
    for p in &images {
        min_final_x = min_final_x.min(p.x);
        let inside = (0.0..=1.0).contains(&p.x) && p.y.iter().all(|&v| (0.0..=1.0).contains(&v));
        if inside {
            violation_count += 1;
            if first_violations.len() < 8 {
                first_violations.push(p.coords());
            }
        }
    }
    Ok(DisplacementCheck {
        pass: violation_count == 0,
        checked: probes.len(),
        violation_count,
        first_violations,
        min_final_x,
    })
}

/// Analytic cost of Φ_k, released only against a passing displacement
/// check: a cheap path to a map that does not displace the cube certifies
/// nothing.
pub fn displacement_energy_bound(
    params: &ConstructionParams,
    check: &DisplacementCheck,
    c_a: f64,
    c_b: f64,
) -> Result<AnalyticCosts, XpError> {
    if !check.pass {
        return Err(XpError::RefusedWithoutDisplacement {
            k: params.k,
            violations: check.violation_count,
        });
    }
    Ok(analytic_costs(&params.sp, params.beta, params.k as f64, c_a, c_b))
}

/// One line of a verification run, serialized as a JSON line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: String,
    pub k: u32,
    pub n: u32,
    pub p: f64,
    pub beta: f64,
    pub seed: u64,
    pub norm_method: NormMethod,
    pub clamped: bool,
    pub log_lambda_eff: f64,
    pub displacement_pass: bool,
    pub probes: usize,
    pub violations: usize,
    pub min_final_x: f64,
    pub costs: AnalyticCosts,
}

impl RunReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }

    pub fn from_json_line(line: &str) -> Result<Self, XpError> {
        serde_json::from_str(line).map_err(|e| XpError::Config(format!("bad report line: {e}")))
    }
}

/// Build, probe and cost every configured scale.
pub fn run_verify(config: &ExperimentConfig) -> Result<Vec<RunReport>, XpError> {
    config.validate()?;
    let (c_a, c_b, _) = config.constants()?;
    let cfg = config.integrator();
    let mut reports = Vec::new();
    for &k in &config.ks {
        let params = config.params_for(k)?;
        let (_, phi) = assemble_phi_k(&params, &cfg)?;
        let probes = probe_points(
            config.probe_scheme,
            config.n as usize,
            config.probe_count,
            config.probe_margin,
        );
        let check = verify_displacement(&phi, &probes)?;
        let costs = analytic_costs(&params.sp, params.beta, k as f64, c_a, c_b);
        reports.push(RunReport {
            kind: "verify".into(),
            k,
            n: config.n,
            p: config.p,
            beta: config.beta,
            seed: config.seed,
            norm_method: config.norm_method,
            clamped: params.log_lambda_eff() > params.log_lambda_exact(),
            log_lambda_eff: params.log_lambda_eff(),
            displacement_pass: check.pass,
            probes: check.checked,
            violations: check.violation_count,
            min_final_x: check.min_final_x,
            costs,
        });
    }
    Ok(reports)
}

/// One sweep row; displacement is only probed where flows are feasible
/// and k is small enough to integrate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u64,
    pub log_cost_squeeze1: f64,
    pub log_cost_squeeze2: f64,
    pub log_cost_transport: f64,
    pub log_total: f64,
    pub displacement_pass: Option<bool>,
    /// Local decay-rate estimate d(log_total)/d(log k) between consecutive
    /// rows; empty on the first row.
    pub slope_estimate: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub const CSV_HEADER: &'static str =
        "k,log_cost_squeeze1,log_cost_squeeze2,log_cost_transport,log_total,displacement_pass,slope_estimate";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let pass = match r.displacement_pass {
                Some(true) => "true",
                Some(false) => "false",
                None => "n/a",
            };
            let slope = r.slope_estimate.map(|s| format!("{s:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                r.k,
                r.log_cost_squeeze1,
                r.log_cost_squeeze2,
                r.log_cost_transport,
                r.log_total,
                pass,
                slope
            ));
        }
        out
    }
}

/// Analytic cost table over scales, probing displacement on the small ones.
pub fn run_sweep(config: &ExperimentConfig, ks: &[u64]) -> Result<SweepTable, XpError> {
    config.validate()?;
    if ks.is_empty() {
        return Err(XpError::Config("sweep needs at least one k".into()));
    }
    let (c_a, c_b, _) = config.constants()?;
    let sp = config.sobolev().map_err(XpError::Norm)?;
    let cfg = config.integrator();
    let mut rows: Vec<SweepRow> = Vec::with_capacity(ks.len());
    for &k in ks {
        let costs = analytic_costs(&sp, config.beta, k as f64, c_a, c_b);
        let displacement_pass = if k <= config.sweep_verify_max_k as u64 {
            match config.params_for(k as u32) {
                Ok(params) => {
                    let (_, phi) = assemble_phi_k(&params, &cfg)?;
                    let probes = probe_points(
                        config.probe_scheme,
                        config.n as usize,
                        config.probe_count,
                        config.probe_margin,
                    );
                    Some(verify_displacement(&phi, &probes)?.pass)
                }
                Err(_) => None,
            }
        } else {
            None
        };
        let slope_estimate = rows.last().map(|prev: &SweepRow| {
            (costs.log_total - prev.log_total) / ((k as f64).ln() - (prev.k as f64).ln())
        });
        rows.push(SweepRow {
            k,
            log_cost_squeeze1: costs.log_squeeze1,
            log_cost_squeeze2: costs.log_squeeze2,
            log_cost_transport: costs.log_transport,
            log_total: costs.log_total,
            displacement_pass,
            slope_estimate,
        });
    }
    Ok(SweepTable { rows })
}

/// Calibrate the interpolation constants for the configured exponents.
pub fn run_calibrate(config: &ExperimentConfig) -> Result<CalibrationRecord, XpError> {
    config.validate()?;
    let sp = config.sobolev().map_err(XpError::Norm)?;
    Ok(calibrate(&sp, &config.mc())?)
}

/// Render stored JSON-line reports as a human-readable table.
pub fn render_report_lines(jsonl: &str) -> Result<String, XpError> {
    let mut out = String::from(
        "    k  pass   probes  violations  min_final_x   log_total  clamped\n",
    );
    for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let r = RunReport::from_json_line(line)?;
        out.push_str(&format!(
            "{:5}  {:5}  {:6}  {:10}  {:11.6}  {:10.4}  {}\n",
            r.k,
            if r.displacement_pass { "PASS" } else { "FAIL" },
            r.probes,
            r.violations,
            r.min_final_x,
            r.costs.log_total,
            r.clamped,
        ));
    }
    Ok(out)
}
