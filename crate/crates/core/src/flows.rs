//! Flow maps: fixed-step RK4 integration of time fields, semi-analytic
//! squeeze maps with closed-form inverses, composition, and the cost
//! ledger that certifies path-length upper bounds in log space.

use crate::geometry::{FieldDescriptor, Lattice, Point};
use crate::logspace::log_sum_exp;
use crate::norms::{
    gagliardo_seminorm, gn_bound_a, gn_bound_b, EstimateMethod, McConfig, NormError, NormEstimate,
    NormMethod, SamplerConfig, SobolevParams,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("richardson check failed: half-step disagreement {disagreement:.3e} exceeds tolerance {tolerance:.3e}")]
    ToleranceExceeded { disagreement: f64, tolerance: f64 },
    #[error("point outside the exact region and no integrated fallback is available")]
    OutsideRegion,
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// How the field value depends on time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeAction {
    /// Value at (t, q) is base(q).
    Autonomous,
    /// Value at (t, q) is base(q - t·e₁): the transport program.
    XShift,
}

/// Which velocity components the (possibly lower-dimensional) base field
/// output occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VelocityEmbed {
    /// base output is a full ℝⁿ velocity.
    Full,
    /// scalar base drives the x-coordinate only.
    XOnly,
    /// m-dimensional base drives the y-coordinates only.
    YOnly,
}

/// A time-dependent velocity field on ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeField {
    pub base: FieldDescriptor,
    pub time_action: TimeAction,
    pub embed: VelocityEmbed,
}

impl TimeField {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Velocity at (t, q) written into `out` (length n).
    pub fn velocity(&self, t: f64, q: &[f64], out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(out.len(), n);
        let shifted;
        let eval_at: &[f64] = match self.time_action {
            TimeAction::Autonomous => q,
            TimeAction::XShift => {
                let mut s = q.to_vec();
                s[0] -= t;
                shifted = s;
                &shifted
            }
        };
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.embed {
            VelocityEmbed::Full => {
                debug_assert_eq!(self.base.out_dim(), n);
                self.base.eval(eval_at, out);
            }
            VelocityEmbed::XOnly => {
                debug_assert_eq!(self.base.out_dim(), 1);
                let mut v = [0.0];
                self.base.eval(eval_at, &mut v);
                out[0] = v[0];
            }
            VelocityEmbed::YOnly => {
                debug_assert_eq!(self.base.out_dim(), n - 1);
                self.base.eval(eval_at, &mut out[1..]);
            }
        }
    }

    /// Descriptor of the field frozen at time t. The norm of an x-shift
    /// field is independent of t by translation invariance.
    pub fn frozen(&self, t: f64) -> FieldDescriptor {
        match self.time_action {
            TimeAction::Autonomous => self.base.clone(),
            TimeAction::XShift => {
                FieldDescriptor::TimeShifted { inner: Box::new(self.base.clone()), shift: t }
            }
        }
    }
}

/// Fixed-step classical RK4; reproducible across runs and platforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Steps per unit of integration time; at least 16 steps are always
    /// taken regardless of interval length.
    pub steps_per_unit: usize,
    /// Re-integrate at half the step and compare endpoints.
    pub richardson_check: bool,
    /// Max allowed half-step disagreement (sup over components).
    pub tolerance: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { steps_per_unit: 256, richardson_check: false, tolerance: 1e-7 }
    }
}

impl IntegratorConfig {
    fn steps(&self, t0: f64, t1: f64) -> usize {
        ((self.steps_per_unit as f64 * (t1 - t0).abs()).ceil() as usize).max(16)
    }
}

fn rk4_run(tf: &TimeField, t0: f64, t1: f64, q0: &[f64], steps: usize) -> Vec<f64> {
    let n = q0.len();
    let dt = (t1 - t0) / steps as f64;
    let mut state = q0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        tf.velocity(t, &state, &mut k1);
        for j in 0..n {
            tmp[j] = state[j] + 0.5 * dt * k1[j];
        }
        tf.velocity(t + 0.5 * dt, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = state[j] + 0.5 * dt * k2[j];
        }
        tf.velocity(t + 0.5 * dt, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = state[j] + dt * k3[j];
        }
        tf.velocity(t + dt, &tmp, &mut k4);
        for j in 0..n {
            // (k1 + 2k2 + 2k3 + k4)/6 first, so a unit field advances by
            // exactly dt in floating point
            let incr = (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0;
            state[j] += dt * incr;
        }
    }
    state
}

/// Integrate the flow of `tf` from t0 to t1 starting at q. Time-reversed
/// integration (t1 < t0) is supported.
pub fn flow_point(
    tf: &TimeField,
    t0: f64,
    t1: f64,
    q: &Point,
    cfg: &IntegratorConfig,
) -> Result<Point, FlowError> {
    let coords = q.coords();
    let steps = cfg.steps(t0, t1);
    let coarse = rk4_run(tf, t0, t1, &coords, steps);
    if cfg.richardson_check {
        let fine = rk4_run(tf, t0, t1, &coords, steps * 2);
        let disagreement = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        if disagreement > cfg.tolerance {
            return Err(FlowError::ToleranceExceeded { disagreement, tolerance: cfg.tolerance });
        }
        return Ok(Point::from_coords(&fine));
    }
    Ok(Point::from_coords(&coarse))
}

/// Like [`flow_point`] but records the state at `checkpoints` evenly
/// spaced times (including t1). Checkpoint times come from the
/// integrator's own accumulation so invariants like θ(t) ≥ t can be
/// asserted without rounding slack.
pub fn flow_trajectory(
    tf: &TimeField,
    t0: f64,
    t1: f64,
    q: &Point,
    cfg: &IntegratorConfig,
    checkpoints: usize,
) -> Vec<(f64, Point)> {
    assert!(checkpoints >= 1);
    let steps_per_leg = cfg.steps(t0, t1).div_ceil(checkpoints);
    let dt_leg = (t1 - t0) / checkpoints as f64;
    let mut out = Vec::with_capacity(checkpoints);
    let mut state = q.coords();
    for i in 0..checkpoints {
        let a = t0 + i as f64 * dt_leg;
        let b = t0 + (i + 1) as f64 * dt_leg;
        state = rk4_run(tf, a, b, &state, steps_per_leg);
        out.push((b, Point::from_coords(&state)));
    }
    out
}

/// Closed-form squeeze map y ↦ [y]_I + e^{log_factor}·(y - [y]_I), valid
/// for x ∈ [0,1], y ∈ [0,1]^m within `domain_halfwidth` of the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeMap {
    pub lattice: Lattice,
    pub log_factor: f64,
    pub domain_halfwidth: f64,
}

impl SqueezeMap {
    pub fn in_domain(&self, q: &Point) -> bool {
        if !(0.0..=1.0).contains(&q.x) {
            return false;
        }
        if !q.y.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            return false;
        }
        self.lattice
            .component_distances(&q.y)
            .iter()
            .all(|&d| d <= self.domain_halfwidth * (1.0 + 1e-12))
    }

    pub fn apply(&self, q: &Point) -> Point {
        let z = self.lattice.nearest_point_unchecked(&q.y);
        let factor = self.log_factor.exp();
        let y = q.y.iter().zip(&z).map(|(v, z)| z + factor * (v - z)).collect();
        Point::new(q.x, y)
    }

    pub fn inverse(&self) -> SqueezeMap {
        SqueezeMap {
            lattice: self.lattice.clone(),
            log_factor: -self.log_factor,
            domain_halfwidth: self.domain_halfwidth * self.log_factor.exp(),
        }
    }
}

/// A pointwise-evaluable diffeomorphism of ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowMap {
    Identity { dim: usize },
    /// Closed-form map inside its validity region; optionally falls back
    /// to ODE integration outside.
    ExactRegion { map: SqueezeMap, fallback: Option<Box<FlowMap>> },
    Integrated { field: TimeField, t0: f64, t1: f64, cfg: IntegratorConfig },
    /// Ordered factors applied right to left: [f, g, h] evaluates f∘g∘h.
    Composed(Vec<FlowMap>),
    Inverted(Box<FlowMap>),
}

impl FlowMap {
    pub fn integrated(field: TimeField, cfg: IntegratorConfig) -> FlowMap {
        FlowMap::Integrated { field, t0: 0.0, t1: 1.0, cfg }
    }

    pub fn eval(&self, q: &Point) -> Result<Point, FlowError> {
        match self {
            FlowMap::Identity { .. } => Ok(q.clone()),
            FlowMap::ExactRegion { map, fallback } => {
                if map.in_domain(q) {
                    Ok(map.apply(q))
                } else if let Some(fb) = fallback {
                    fb.eval(q)
                } else {
                    Err(FlowError::OutsideRegion)
                }
            }
            FlowMap::Integrated { field, t0, t1, cfg } => flow_point(field, *t0, *t1, q, cfg),
            FlowMap::Composed(factors) => {
                let mut p = q.clone();
                for f in factors.iter().rev() {
                    p = f.eval(&p)?;
                }
                Ok(p)
            }
            FlowMap::Inverted(inner) => inner.inverse().eval(q),
        }
    }

    /// Structural inverse: exact maps invert in closed form, integrated
    /// maps run time reversed, compositions reverse and invert factors.
    pub fn inverse(&self) -> FlowMap {
        match self {
            FlowMap::Identity { dim } => FlowMap::Identity { dim: *dim },
            FlowMap::ExactRegion { map, fallback } => FlowMap::ExactRegion {
                map: map.inverse(),
                fallback: fallback.as_ref().map(|f| Box::new(f.inverse())),
            },
            FlowMap::Integrated { field, t0, t1, cfg } => FlowMap::Integrated {
                field: field.clone(),
                t0: *t1,
                t1: *t0,
                cfg: *cfg,
            },
            FlowMap::Composed(factors) => {
                FlowMap::Composed(factors.iter().rev().map(|f| f.inverse()).collect())
            }
            FlowMap::Inverted(inner) => (**inner).clone(),
        }
    }
}

/// ∫₀¹ ‖u_t‖ dt for the supported time actions. Both autonomous and
/// x-shift fields have t-independent norms (the latter by translation
/// invariance of every norm used), so the integral collapses to a single
/// norm evaluation of the t = 0 field.
pub fn path_length(
    tf: &TimeField,
    sp: &SobolevParams,
    method: NormMethod,
    c: f64,
    mc: &McConfig,
) -> Result<NormEstimate, FlowError> {
    let f = tf.frozen(0.0);
    let bx = f.support();
    let sampler = SamplerConfig::MonteCarlo(mc.clone());
    let est = match method {
        NormMethod::GagliardoMc => gagliardo_seminorm(&f, sp, mc)?,
        NormMethod::GnBoundA => {
            NormEstimate::deterministic(gn_bound_a(&f, sp, c, &bx, &sampler)?, EstimateMethod::GnBoundA)
        }
        NormMethod::GnBoundB => {
            NormEstimate::deterministic(gn_bound_b(&f, sp, c, &bx, &sampler)?, EstimateMethod::GnBoundB)
        }
    };
    Ok(est)
}

/// One certified stage cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    /// log of the analytic upper bound on ∫‖u_t‖ dt for this stage.
    pub log_cost_bound: f64,
    /// optional measured norm (Monte Carlo or interpolation bound) at the
    /// clamped, representable scale.
    pub measured: Option<NormEstimate>,
}

/// Per-stage upper bounds whose sum certifies dist(Id, Φ) from above via
/// the triangle inequality; inverse stages cost the same as forward ones.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CostLedger {
    pub entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn push(&mut self, label: impl Into<String>, log_cost_bound: f64) {
        self.entries.push(LedgerEntry { label: label.into(), log_cost_bound, measured: None });
    }

    /// log of the summed stage bounds; empty ledgers return -inf.
    pub fn total_log(&self) -> f64 {
        let logs: Vec<f64> = self.entries.iter().map(|e| e.log_cost_bound).collect();
        log_sum_exp(&logs)
    }
}
