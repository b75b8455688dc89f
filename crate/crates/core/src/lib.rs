//! Numerical laboratory for arbitrarily short paths in the group of
//! compactly supported diffeomorphisms of ℝⁿ, measured in the critical
//! fractional Sobolev norm W^{n/p,p}.
//!
//! The crate is organized around the pipeline
//!
//!   geometry  →  norms  →  flows  →  construction  →  xp
//!
//! `geometry` holds points, lattices and closed-form field descriptors;
//! `norms` estimates L^p, W^{1,p} and Gagliardo seminorms (Monte Carlo
//! and quadrature) and the interpolation bounds built from them;
//! `flows` integrates vector fields into pointwise-evaluable flow maps;
//! `construction` assembles the split/squeeze/transport diffeomorphisms
//! Φ_k together with a log-space cost ledger; `xp` drives experiments:
//! displacement verification, parameter sweeps, calibration and reports.

pub mod construction;
pub mod flows;
pub mod geometry;
pub mod logspace;
pub mod norms;
pub mod xp;

pub use construction::{ConstructionParams, Feasibility, StageBundle};
pub use flows::{CostLedger, FlowMap, IntegratorConfig, LedgerEntry, TimeAction, TimeField};
pub use geometry::{BoxRegion, FieldDescriptor, Lattice, Point};
pub use norms::{CapacityProfile, McConfig, NormEstimate, NormMethod, SamplerConfig, SobolevParams};
pub use xp::{ExperimentConfig, RunReport, SweepTable};
