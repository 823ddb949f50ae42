//! The nonlocality measure
//!
//! ```text
//! N(rho) = sum over a != a', b != b' of max{ |<i^a j^b| rho |i^a' j^b'>| - 1/d^2, 0 }
//! ```
//!
//! together with local Kraus channels and probes of its resource axioms.

mod channel;
mod probe;

pub use channel::{
    apply_channel, apply_local, completeness_excess, Branch, ChannelKind, ChannelOutput, KrausChannel, Side, COMPLETENESS_TOL,
    MIN_BRANCH_WEIGHT,
};
pub use probe::{
    axiom_b_probe, axiom_b_trials, axiom_c_probe, axiom_c_trials, theorem1_probe, AxiomBReport, ElementSlack, ProbeRow, SlackReport,
    Theorem1Report, Theorem1Trial, MIXTURE_TOL,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::basis_opt::{optimize, OptimizerConfig};
use crate::error::{Error, Result};
use crate::inequalities::{rotate_into, InequalityKind, TermKey};
use crate::qcore::{BipartiteState, LocalBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureVariant {
    /// Every term evaluated in the supplied bases.
    FixedBasis,
    /// Each term maximized over bases on its own.
    PerTermOpt,
    /// The whole sum maximized over one basis pair.
    SharedOpt,
}

impl MeasureVariant {
    pub const ALL: [MeasureVariant; 3] = [Self::FixedBasis, Self::PerTermOpt, Self::SharedOpt];

    pub fn name(self) -> &'static str {
        match self {
            Self::FixedBasis => "fixed_basis",
            Self::PerTermOpt => "per_term_opt",
            Self::SharedOpt => "shared_opt",
        }
    }
}

impl fmt::Display for MeasureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_basis" => Ok(Self::FixedBasis),
            "per_term_opt" => Ok(Self::PerTermOpt),
            "shared_opt" => Ok(Self::SharedOpt),
            other => Err(Error::InvalidParameter(format!("unknown measure variant `{other}`"))),
        }
    }
}

/// Where the bases behind a [`MeasureResult`] came from.
#[derive(Clone, Debug)]
pub enum MeasureBases {
    Fixed(LocalBasis, LocalBasis),
    PerTerm(BTreeMap<TermKey, (LocalBasis, LocalBasis)>),
    Shared(LocalBasis, LocalBasis),
}

#[derive(Clone, Debug)]
pub struct MeasureResult {
    pub value: f64,
    pub per_term: BTreeMap<TermKey, f64>,
    pub bases: MeasureBases,
    pub variant: MeasureVariant,
    /// False when any basis search hit its evaluation budget.
    pub converged: bool,
}

fn local_dim(s: &BipartiteState) -> Result<usize> {
    if s.dim_a() != s.dim_b() {
        return Err(Error::DimensionMismatch { expected: s.dim_a(), got: s.dim_b() });
    }
    Ok(s.dim_a())
}

fn excess(magnitude: f64, d: usize) -> f64 {
    (magnitude - 1.0 / (d * d) as f64).max(0.0)
}

fn terms_in(s: &BipartiteState, d: usize, basis_a: &LocalBasis, basis_b: &LocalBasis) -> Result<BTreeMap<TermKey, f64>> {
    let r = rotate_into(s, basis_a, basis_b)?;
    Ok(InequalityKind::Combined
        .terms(d)
        .into_iter()
        .map(|key @ (a, a2, b, b2)| (key, excess(r[(a * d + b, a2 * d + b2)].norm(), d)))
        .collect())
}

/// `N` in fixed bases, the cheap path used by the probes.
pub fn n_fixed(s: &BipartiteState, basis_a: &LocalBasis, basis_b: &LocalBasis) -> Result<f64> {
    let d = local_dim(s)?;
    Ok(terms_in(s, d, basis_a, basis_b)?.values().sum())
}

/// Evaluates `N(s)`. `FixedBasis` requires both bases; the optimizing
/// variants ignore them and search with `cfg`.
pub fn n_measure(
    s: &BipartiteState,
    variant: MeasureVariant,
    basis_a: Option<&LocalBasis>,
    basis_b: Option<&LocalBasis>,
    cfg: &OptimizerConfig,
) -> Result<MeasureResult> {
    let d = local_dim(s)?;
    match variant {
        MeasureVariant::FixedBasis => {
            let (Some(ba), Some(bb)) = (basis_a, basis_b) else {
                return Err(Error::InvalidParameter("fixed_basis needs both bases".into()));
            };
            let per_term = terms_in(s, d, ba, bb)?;
            Ok(MeasureResult {
                value: per_term.values().sum(),
                per_term,
                bases: MeasureBases::Fixed(ba.clone(), bb.clone()),
                variant,
                converged: true,
            })
        }
        MeasureVariant::PerTermOpt => {
            let mut per_term = BTreeMap::new();
            let mut bases = BTreeMap::new();
            let mut converged = true;
            for key @ (a, a2, b, b2) in InequalityKind::Combined.terms(d) {
                let objective = |ba: &LocalBasis, bb: &LocalBasis| match rotate_into(s, ba, bb) {
                    Ok(r) => r[(a * d + b, a2 * d + b2)].norm(),
                    Err(_) => f64::NEG_INFINITY,
                };
                let best = optimize(objective, d, cfg)?;
                converged &= best.converged;
                let (ba, bb) = best.bases();
                let r = rotate_into(s, &ba, &bb)?;
                per_term.insert(key, excess(r[(a * d + b, a2 * d + b2)].norm(), d));
                bases.insert(key, (ba, bb));
            }
            Ok(MeasureResult { value: per_term.values().sum(), per_term, bases: MeasureBases::PerTerm(bases), variant, converged })
        }
        MeasureVariant::SharedOpt => {
            let best = optimize(|ba, bb| n_fixed(s, ba, bb).unwrap_or(f64::NEG_INFINITY), d, cfg)?;
            let (ba, bb) = best.bases();
            let per_term = terms_in(s, d, &ba, &bb)?;
            Ok(MeasureResult {
                value: per_term.values().sum(),
                per_term,
                bases: MeasureBases::Shared(ba, bb),
                variant,
                converged: best.converged,
            })
        }
    }
}
