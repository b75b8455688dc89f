//! Assembly of the displacement diffeomorphisms Φ_k.
//!
//! For each sublattice index I ∈ {0,1}^m the stage Φ_k^I conjugates a
//! transport flow Θ_I by a two-step squeeze Ψ_I = Ψ² ∘ Ψ¹: Ψ¹ contracts
//! the strip around Z_I from halfwidth 1/2k to e^{-η_k}/2k, Ψ² pinches it
//! further down to λ_k, and Θ_I slides the squeezed strip one unit in x by
//! summing capacity profiles ξ_k over the lattice points. Φ_k applies the
//! 2^m stages in index order; every y ∈ [0,1]^m lies in some strip, so
//! every point of the unit cube gets transported past x = 1.
//!
//! The exact widths λ_k are doubly exponentially small in k. Flow maps are
//! built at a clamped width λ_eff = max(λ_k, floor) when requested; the
//! analytic cost ledger always uses the exact log-space values.

use crate::flows::{CostLedger, FlowError, FlowMap, IntegratorConfig, LedgerEntry, SqueezeMap, TimeAction, TimeField, VelocityEmbed, path_length};
use crate::geometry::{index_order, FieldDescriptor, GeometryError, Lattice};
use crate::logspace::{ln_neg_log_lambda, log_sum_exp, neg_log_lambda};
use crate::norms::{CapacityProfile, gn_bound_b, McConfig, NormError, NormMethod, SamplerConfig, SobolevParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("beta must lie in (0, 1/3), got {0}")]
    InvalidBeta(f64),
    #[error("scale is not representable at k={k}: log lambda_eff={log_lambda:.3e} leaves no room for the pinch stage; clamp the width or reduce k")]
    InfeasibleScale { k: u32, log_lambda: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Whether flow maps are built at the exact width λ_k or at a clamped,
/// floating-point-representable width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Feasibility {
    Exact,
    /// λ_eff = max(λ_k, e^{log_lambda_floor}); the floor is a natural log.
    Clamped { log_lambda_floor: f64 },
}

/// Parameters of one construction scale k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub sp: SobolevParams,
    pub k: u32,
    pub beta: f64,
    pub feasibility: Feasibility,
}

impl ConstructionParams {
    pub fn new(
        sp: SobolevParams,
        k: u32,
        beta: f64,
        feasibility: Feasibility,
    ) -> Result<Self, ConstructionError> {
        if !(beta > 0.0 && beta < 1.0 / 3.0) {
            return Err(ConstructionError::InvalidBeta(beta));
        }
        assert!(k >= 1);
        let params = ConstructionParams { sp, k, beta, feasibility };
        // exact widths must not underflow f64, or the pinch map degenerates
        if matches!(feasibility, Feasibility::Exact)
            && params.log_lambda_exact() <= f64::MIN_POSITIVE.ln()
        {
            return Err(ConstructionError::InfeasibleScale {
                k,
                log_lambda: params.log_lambda_exact(),
            });
        }
        // both the pinch rate and the capacity plateau must be usable
        params.alpha_eff()?;
        if 0.5 * (sp.n as f64).ln() + params.log_lambda_eff() >= 0.0 {
            return Err(ConstructionError::InfeasibleScale {
                k,
                log_lambda: params.log_lambda_eff(),
            });
        }
        Ok(params)
    }

    /// Stage-one squeeze rate η_k = k^β.
    pub fn eta(&self) -> f64 {
        (self.k as f64).powf(self.beta)
    }

    /// log α_k = β k^β for the exact pinch rate α_k = e^{β k^β}.
    pub fn ln_alpha_exact(&self) -> f64 {
        self.beta * self.eta()
    }

    /// log λ_k for the exact width λ_k = e^{-α_k - η_k}/2k; -inf once the
    /// inner exponential overflows f64.
    pub fn log_lambda_exact(&self) -> f64 {
        -neg_log_lambda(self.beta, self.k as f64)
    }

    /// log of the width actually built into the flow maps.
    pub fn log_lambda_eff(&self) -> f64 {
        match self.feasibility {
            Feasibility::Exact => self.log_lambda_exact(),
            Feasibility::Clamped { log_lambda_floor } => {
                self.log_lambda_exact().max(log_lambda_floor)
            }
        }
    }

    /// Pinch rate matching λ_eff: α_eff = log(1/(2k λ_eff)) - η_k, equal to
    /// α_k when the clamp does not bind. Errors when the scale cannot be
    /// realized in f64 (exact mode at large k) or the clamp floor is so
    /// loose the pinch would have nothing to do.
    pub fn alpha_eff(&self) -> Result<f64, ConstructionError> {
        let a = -self.log_lambda_eff() - (2.0 * self.k as f64).ln() - self.eta();
        if !a.is_finite() || a <= 0.0 {
            return Err(ConstructionError::InfeasibleScale {
                k: self.k,
                log_lambda: self.log_lambda_eff(),
            });
        }
        Ok(a)
    }

    /// Capacity profile at the effective width.
    pub fn capacity(&self) -> CapacityProfile {
        CapacityProfile::new(self.k, self.log_lambda_eff(), self.sp.n)
    }
}

/// The three flows of one stage, their fields, and the conjugated map
/// Φ_k^I = Ψ_I^{-1} ∘ Θ_I ∘ Ψ_I.
#[derive(Debug, Clone)]
pub struct StageBundle {
    pub index: Vec<u8>,
    pub squeeze1_field: TimeField,
    pub squeeze2_field: TimeField,
    pub transport_field: TimeField,
    pub squeeze1: FlowMap,
    pub squeeze2: FlowMap,
    pub transport: FlowMap,
    pub conjugated: FlowMap,
    /// Number of lattice points of Z_I in [0,1]^m, i.e. transport terms.
    pub center_count: usize,
}

/// Build the stage for one sublattice index.
pub fn assemble_stage(
    params: &ConstructionParams,
    index: &[u8],
    cfg: &IntegratorConfig,
) -> Result<StageBundle, ConstructionError> {
    let m = params.sp.m as usize;
    if index.len() != m {
        return Err(GeometryError::DimensionMismatch { expected: m, got: index.len() }.into());
    }
    let n = params.sp.n as usize;
    let lattice = Lattice::new(params.k, index.to_vec())?;
    let chi = FieldDescriptor::chi(n);
    let eta = params.eta();
    let alpha = params.alpha_eff()?;
    let halfwidth = 0.5 / params.k as f64;
    let wbar = (-eta).exp() * halfwidth;

    let squeeze1_field = TimeField {
        base: FieldDescriptor::PeriodicSqueeze {
            lattice: lattice.clone(),
            rate: eta,
            cutoff: Box::new(chi.clone()),
        },
        time_action: TimeAction::Autonomous,
        embed: VelocityEmbed::YOnly,
    };
    let squeeze1 = FlowMap::ExactRegion {
        map: SqueezeMap { lattice: lattice.clone(), log_factor: -eta, domain_halfwidth: halfwidth },
        fallback: Some(Box::new(FlowMap::integrated(squeeze1_field.clone(), *cfg))),
    };

    let squeeze2_field = TimeField {
        base: FieldDescriptor::PinchSqueeze {
            lattice: lattice.clone(),
            rate: alpha,
            inner_halfwidth: wbar,
            cutoff: Box::new(chi),
        },
        time_action: TimeAction::Autonomous,
        embed: VelocityEmbed::YOnly,
    };
    let squeeze2 = FlowMap::ExactRegion {
        map: SqueezeMap { lattice: lattice.clone(), log_factor: -alpha, domain_halfwidth: wbar },
        fallback: Some(Box::new(FlowMap::integrated(squeeze2_field.clone(), *cfg))),
    };

    let centers: Vec<Vec<f64>> = lattice
        .points_in_unit_cube()
        .into_iter()
        .map(|z| {
            let mut c = Vec::with_capacity(n);
            c.push(0.0);
            c.extend(z);
            c
        })
        .collect();
    let center_count = centers.len();
    let transport_field = TimeField {
        base: FieldDescriptor::LatticeSum {
            term: Box::new(params.capacity().descriptor(vec![0.0; n])),
            centers,
        },
        time_action: TimeAction::XShift,
        embed: VelocityEmbed::XOnly,
    };
    let transport = FlowMap::integrated(transport_field.clone(), *cfg);

    let conjugated = FlowMap::Composed(vec![
        squeeze1.inverse(),
        squeeze2.inverse(),
        transport.clone(),
        squeeze2.clone(),
        squeeze1.clone(),
    ]);

    Ok(StageBundle {
        index: index.to_vec(),
        squeeze1_field,
        squeeze2_field,
        transport_field,
        squeeze1,
        squeeze2,
        transport,
        conjugated,
        center_count,
    })
}

/// All 2^m stages in index order and the full composite
/// Φ_k = Φ^{2^m} ∘ ... ∘ Φ¹.
pub fn assemble_phi_k(
    params: &ConstructionParams,
    cfg: &IntegratorConfig,
) -> Result<(Vec<StageBundle>, FlowMap), ConstructionError> {
    let stages: Vec<StageBundle> = index_order(params.sp.m as usize)
        .iter()
        .map(|i| assemble_stage(params, i, cfg))
        .collect::<Result<_, _>>()?;
    let phi = FlowMap::Composed(stages.iter().rev().map(|s| s.conjugated.clone()).collect());
    Ok((stages, phi))
}

/// Per-stage single-direction cost bound logs (E1, E2, E3):
///   squeeze 1:  log C_a + log η_k - (1-s) log k
///   squeeze 2:  log C_a + log α_k - (1-s) η_k
///   transport:  log C_b + m log k + (1-n)/p · log(-log λ_k)
/// k is taken as f64 so the formulas stay evaluable far beyond what the
/// flow maps can realize.
pub fn stage_cost_logs(
    sp: &SobolevParams,
    beta: f64,
    k: f64,
    c_a: f64,
    c_b: f64,
) -> (f64, f64, f64) {
    let eta = k.powf(beta);
    let e1 = c_a.ln() + eta.ln() - (1.0 - sp.s) * k.ln();
    let e2 = c_a.ln() + beta * eta - (1.0 - sp.s) * eta;
    let e3 = c_b.ln()
        + sp.m as f64 * k.ln()
        + (1.0 - sp.n as f64) / sp.p * ln_neg_log_lambda(beta, k);
    (e1, e2, e3)
}

/// Stage costs aggregated over the 2^m indices and both flow directions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnalyticCosts {
    pub log_squeeze1: f64,
    pub log_squeeze2: f64,
    pub log_transport: f64,
    pub log_total: f64,
}

pub fn analytic_costs(sp: &SobolevParams, beta: f64, k: f64, c_a: f64, c_b: f64) -> AnalyticCosts {
    let (e1, e2, e3) = stage_cost_logs(sp, beta, k, c_a, c_b);
    // 2^m indices, each stage and its inverse
    let mult = (sp.m as f64 + 1.0) * std::f64::consts::LN_2;
    let (l1, l2, l3) = (e1 + mult, e2 + mult, e3 + mult);
    AnalyticCosts {
        log_squeeze1: l1,
        log_squeeze2: l2,
        log_transport: l3,
        log_total: log_sum_exp(&[l1, l2, l3]),
    }
}

fn index_label(index: &[u8]) -> String {
    index.iter().map(|b| char::from(b'0' + b)).collect()
}

/// Entry-per-stage analytic ledger at the exact (unclamped) widths.
pub fn analytic_ledger(params: &ConstructionParams, c_a: f64, c_b: f64) -> CostLedger {
    let (e1, e2, e3) = stage_cost_logs(&params.sp, params.beta, params.k as f64, c_a, c_b);
    let mut ledger = CostLedger::default();
    for index in index_order(params.sp.m as usize) {
        let tag = index_label(&index);
        for (stage, log) in [("squeeze1", e1), ("squeeze2", e2), ("transport", e3)] {
            ledger.push(format!("I={tag} {stage}"), log);
            ledger.push(format!("I={tag} {stage}^-1"), log);
        }
    }
    ledger
}

/// Measured ledger at the effective (possibly clamped) widths. Squeeze
/// stages are measured with the requested norm route; the transport field
/// is bounded per capacity term (triangle inequality over the lattice
/// points) via the second interpolation bound, which stays well
/// conditioned at tiny plateau radii.
pub fn measured_ledger(
    params: &ConstructionParams,
    method: NormMethod,
    c_a: f64,
    c_b: f64,
    mc: &McConfig,
) -> Result<CostLedger, ConstructionError> {
    let sp = &params.sp;
    let n = sp.n as usize;
    let cfg = IntegratorConfig::default();
    let mut ledger = CostLedger::default();
    let squeeze_c = match method {
        NormMethod::GnBoundA => c_a,
        NormMethod::GnBoundB => c_b,
        NormMethod::GagliardoMc => 1.0,
    };
    for index in index_order(sp.m as usize) {
        let stage = assemble_stage(params, &index, &cfg)?;
        let tag = index_label(&index);
        for (name, field) in [("squeeze1", &stage.squeeze1_field), ("squeeze2", &stage.squeeze2_field)] {
            let est = path_length(field, sp, method, squeeze_c, mc)?;
            for dir in ["", "^-1"] {
                ledger.entries.push(LedgerEntry {
                    label: format!("I={tag} {name}{dir}"),
                    log_cost_bound: est.value.ln(),
                    measured: Some(est),
                });
            }
        }
        let term = params.capacity().descriptor(vec![0.0; n]);
        let bx = term.support();
        let sampler = SamplerConfig::RadialMonteCarlo {
            mc: mc.clone(),
            center: vec![0.0; n],
            log_r_min: params.capacity().log_r,
            r_max: 1.0,
        };
        let per_term = gn_bound_b(&term, sp, c_b, &bx, &sampler)?;
        let log_bound = (stage.center_count as f64).ln() + per_term.ln();
        for dir in ["", "^-1"] {
            ledger.push(format!("I={tag} transport{dir}"), log_bound);
        }
    }
    Ok(ledger)
}
