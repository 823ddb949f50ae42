//! Transition magnitudes and the three SLHS inequality patterns.
//!
//! A term keyed `(a, a', b, b')` is `|<i^a j^b| rho |i^a' j^b'>|` for local
//! bases `i` on A and `j` on B. The patterns sum ordered pairs:
//!
//! | kind       | terms                                 | bound         |
//! |------------|---------------------------------------|---------------|
//! | `Aligned`  | `(a, a', a, a')`, `a != a'`           | `(d - 1)/d`   |
//! | `Swapped`  | `(a', a, a, a')`, `a != a'`           | `(d - 1)/d`   |
//! | `Combined` | `(a, a', b, b')`, `a != a'`, `b != b'` | `(d - 1)^2`   |
//!
//! Every state of the form `sum_l p_l rho_l^A (x) rho_l^B` satisfies all three.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::basis_opt::{nelder_mead_polished, optimize, OptimizerConfig};
use crate::error::{Error, Result};
use crate::qcore::{c, rng_for, tensor, BipartiteState, ComplexMatrix, DensityMatrix, Ket, LocalBasis};

/// Slack below which a left-hand side counts as satisfying its bound.
pub const VIOLATION_SLACK: f64 = 1e-12;

pub type TermKey = (usize, usize, usize, usize);

#[derive(Clone, Debug)]
pub struct TransitionSpec {
    pub basis: LocalBasis,
    pub a: usize,
    pub a_prime: usize,
}

impl TransitionSpec {
    pub fn new(basis: LocalBasis, a: usize, a_prime: usize) -> Result<Self> {
        let dim = basis.dim();
        for index in [a, a_prime] {
            if index >= dim {
                return Err(Error::IndexOutOfRange { index, dim });
            }
        }
        if a == a_prime {
            return Err(Error::EqualIndices(a));
        }
        Ok(Self { basis, a, a_prime })
    }
}

/// `|<i^a| rho |i^a'>|`
pub fn local_transition(rho: &DensityMatrix, t: &TransitionSpec) -> Result<f64> {
    if t.basis.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: t.basis.dim() });
    }
    let bra = t.basis.vector(t.a)?;
    let ket = t.basis.vector(t.a_prime)?;
    Ok(crate::qcore::matrix_element(rho, &bra, &ket)?.norm())
}

/// `rho` expressed in the product basis `i (x) j`: entry
/// `(a dB + b, a' dB + b')` is `<i^a j^b| rho |i^a' j^b'>`.
pub fn rotate_into(s: &BipartiteState, basis_a: &LocalBasis, basis_b: &LocalBasis) -> Result<ComplexMatrix> {
    if basis_a.dim() != s.dim_a() {
        return Err(Error::DimensionMismatch { expected: s.dim_a(), got: basis_a.dim() });
    }
    if basis_b.dim() != s.dim_b() {
        return Err(Error::DimensionMismatch { expected: s.dim_b(), got: basis_b.dim() });
    }
    let u = tensor(basis_a.unitary(), basis_b.unitary());
    Ok(u.adjoint() * s.matrix() * u)
}

/// `|<i^a j^b| rho |i^a' j^b'>|`
#[allow(clippy::too_many_arguments)]
pub fn joint_transition(
    s: &BipartiteState,
    basis_a: &LocalBasis,
    basis_b: &LocalBasis,
    a: usize,
    a_prime: usize,
    b: usize,
    b_prime: usize,
) -> Result<f64> {
    for (index, dim) in [(a, s.dim_a()), (a_prime, s.dim_a()), (b, s.dim_b()), (b_prime, s.dim_b())] {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
    }
    if a == a_prime {
        return Err(Error::EqualIndices(a));
    }
    if b == b_prime {
        return Err(Error::EqualIndices(b));
    }
    let bra = basis_a.vector(a)?.tensor(&basis_b.vector(b)?);
    let ket = basis_a.vector(a_prime)?.tensor(&basis_b.vector(b_prime)?);
    Ok(crate::qcore::matrix_element(s.rho(), &bra, &ket)?.norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    Aligned,
    Swapped,
    Combined,
}

impl InequalityKind {
    pub const ALL: [InequalityKind; 3] = [Self::Aligned, Self::Swapped, Self::Combined];

    pub fn bound(self, d: usize) -> f64 {
        let d = d as f64;
        match self {
            Self::Aligned | Self::Swapped => (d - 1.0) / d,
            Self::Combined => (d - 1.0) * (d - 1.0),
        }
    }

    /// Term keys `(a, a', b, b')` summed by this pattern.
    pub fn terms(self, d: usize) -> Vec<TermKey> {
        let pairs = || (0..d).flat_map(move |a| (0..d).filter(move |&b| b != a).map(move |b| (a, b)));
        match self {
            Self::Aligned => pairs().map(|(a, a2)| (a, a2, a, a2)).collect(),
            Self::Swapped => pairs().map(|(a, a2)| (a2, a, a, a2)).collect(),
            Self::Combined => pairs().flat_map(|(a, a2)| pairs().map(move |(b, b2)| (a, a2, b, b2))).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Aligned => "aligned",
            Self::Swapped => "swapped",
            Self::Combined => "combined",
        }
    }
}

impl std::str::FromStr for InequalityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(Self::Aligned),
            "swapped" => Ok(Self::Swapped),
            "combined" => Ok(Self::Combined),
            other => Err(Error::InvalidParameter(format!("unknown inequality `{other}`"))),
        }
    }
}

/// Outcome of a basis search behind a report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchInfo {
    pub converged: bool,
    pub evals: usize,
    pub restarts: usize,
}

#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub kind: InequalityKind,
    pub lhs: f64,
    pub bound: f64,
    pub terms: BTreeMap<TermKey, f64>,
    pub violated: bool,
    pub basis_a: LocalBasis,
    pub basis_b: LocalBasis,
    /// Present when the bases came from [`max_violation`].
    pub search: Option<SearchInfo>,
}

fn require_square(s: &BipartiteState) -> Result<usize> {
    if s.dim_a() != s.dim_b() {
        return Err(Error::DimensionMismatch { expected: s.dim_a(), got: s.dim_b() });
    }
    Ok(s.dim_a())
}

/// Left-hand side only, for optimizer inner loops.
pub fn lhs_value(s: &BipartiteState, kind: InequalityKind, basis_a: &LocalBasis, basis_b: &LocalBasis) -> Result<f64> {
    let d = require_square(s)?;
    let r = rotate_into(s, basis_a, basis_b)?;
    Ok(kind.terms(d).into_iter().map(|(a, a2, b, b2)| r[(a * d + b, a2 * d + b2)].norm()).sum())
}

pub fn evaluate(s: &BipartiteState, kind: InequalityKind, basis_a: &LocalBasis, basis_b: &LocalBasis) -> Result<InequalityReport> {
    let d = require_square(s)?;
    let r = rotate_into(s, basis_a, basis_b)?;
    let terms: BTreeMap<TermKey, f64> = kind
        .terms(d)
        .into_iter()
        .map(|key @ (a, a2, b, b2)| (key, r[(a * d + b, a2 * d + b2)].norm()))
        .collect();
    let lhs: f64 = terms.values().sum();
    let bound = kind.bound(d);
    Ok(InequalityReport {
        kind,
        lhs,
        bound,
        terms,
        violated: lhs > bound + VIOLATION_SLACK,
        basis_a: basis_a.clone(),
        basis_b: basis_b.clone(),
        search: None,
    })
}

/// Maximizes the left-hand side over local bases. The search always includes
/// the computational bases as a starting point, so the result is never below
/// the fixed-basis value.
pub fn max_violation(s: &BipartiteState, kind: InequalityKind, cfg: &OptimizerConfig) -> Result<InequalityReport> {
    let d = require_square(s)?;
    let best = optimize(|a, b| lhs_value(s, kind, a, b).unwrap_or(f64::NEG_INFINITY), d, cfg)?;
    let (ba, bb) = best.bases();
    let mut report = evaluate(s, kind, &ba, &bb)?;
    report.search = Some(SearchInfo { converged: best.converged, evals: best.evals, restarts: cfg.restarts });
    Ok(report)
}

/// Result of maximizing `sum_{a != a'} t_A(a, a') t_B(a, a')` over pairs of
/// single-system states.
#[derive(Clone, Debug, Serialize)]
pub struct BoundOracle {
    pub d: usize,
    pub value: f64,
    pub bound: f64,
    /// Off-diagonal transition magnitudes of the maximizing states.
    pub transitions_a: Vec<f64>,
    pub transitions_b: Vec<f64>,
    pub converged: bool,
}

fn ket_from_reals(x: &[f64]) -> Option<Ket> {
    let d = x.len() / 2;
    let v = nalgebra::DVector::from_fn(d, |i, _| c(x[2 * i], x[2 * i + 1]));
    Ket::normalized(v).ok()
}

fn off_diagonal_magnitudes(rho: &DensityMatrix) -> Vec<f64> {
    let d = rho.dim();
    let mut out = Vec::with_capacity(d * (d - 1));
    for a in 0..d {
        for a2 in 0..d {
            if a != a2 {
                let t = TransitionSpec::new(LocalBasis::computational(d), a, a2).expect("valid indices");
                out.push(local_transition(rho, &t).expect("dimensions match"));
            }
        }
    }
    out
}

/// Numerically maximizes the product-of-transitions sum behind the
/// `(d - 1)/d` bound. The objective is convex in each state, so pure states
/// suffice; each is parameterized by `2d` unconstrained reals.
pub fn bound_oracle(d: usize, cfg: &OptimizerConfig) -> Result<BoundOracle> {
    cfg.validate()?;
    if d < 2 {
        return Err(Error::InvalidParameter(format!("bound oracle needs d >= 2, got {d}")));
    }
    let objective = |x: &[f64]| -> f64 {
        let (Some(u), Some(v)) = (ket_from_reals(&x[..2 * d]), ket_from_reals(&x[2 * d..])) else {
            return 0.0;
        };
        let ta = off_diagonal_magnitudes(&DensityMatrix::from_ket(&u));
        let tb = off_diagonal_magnitudes(&DensityMatrix::from_ket(&v));
        ta.iter().zip(&tb).map(|(x, y)| x * y).sum()
    };
    let runs: Vec<(Vec<f64>, f64, bool)> = {
        use rand::Rng;
        use rayon::prelude::*;
        (0..cfg.restarts)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_for(cfg.seed, k as u64);
                let x0: Vec<f64> = (0..4 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let out = nelder_mead_polished(|x| -objective(x), &x0, 0.3, cfg.max_evals, cfg.tol);
                (out.x, -out.f, out.converged)
            })
            .collect()
    };
    let converged = runs.iter().all(|r| r.2);
    let (x, value, _) = runs
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("at least one restart");
    let u = ket_from_reals(&x[..2 * d]).expect("maximizer is nonzero");
    let v = ket_from_reals(&x[2 * d..]).expect("maximizer is nonzero");
    Ok(BoundOracle {
        d,
        value,
        bound: InequalityKind::Aligned.bound(d),
        transitions_a: off_diagonal_magnitudes(&DensityMatrix::from_ket(&u)),
        transitions_b: off_diagonal_magnitudes(&DensityMatrix::from_ket(&v)),
        converged,
    })
}
