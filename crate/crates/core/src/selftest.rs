//! Numerical verifier for self-testing `phi+` from maximal transition
//! amplitudes, plus an adversarial search for states that satisfy the
//! assumptions approximately but sit far from the Bell state.
//!
//! The assumptions, for orthonormal `phi^0, phi^1` on each side and
//! `xi^{0,1} = (phi^0 +- phi^1)/sqrt(2)`:
//!
//! ```text
//! <phi0 phi0| rho |phi1 phi1> = 1/2
//! <xi0 xi0|   rho |xi1 xi1>   = 1/2
//! <phi0 phi1| rho |phi1 phi0> = 0
//! ```
//!
//! Coefficients are `alpha[(i, j, k, l)] = <phi^i phi^j| rho |phi^k phi^l>`.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis_opt::{nelder_mead_polished, OptimizerConfig};
use crate::error::{Error, Result};
use crate::qcore::{c, fidelity_with_pure, matrix_element, rng_for, BipartiteState, ComplexMatrix, DensityMatrix, Ket, LocalBasis, C64};

/// Slack added to `2 epsilon` when comparing fidelity against the bound the
/// assumptions imply.
pub const CERT_SLACK: f64 = 1e-9;

/// Residual excess still counted as satisfying the constraints in
/// [`adversarial_search`].
pub const FEASIBILITY_SLACK: f64 = 1e-7;

const MAX_DIM: usize = 4;
const PENALTY_SCHEDULE: [f64; 5] = [1e2, 1e4, 1e6, 1e8, 1e10];

#[derive(Clone, Debug)]
pub struct SelfTestAssumptions {
    pub phi_a: LocalBasis,
    pub phi_b: LocalBasis,
    pub epsilon: f64,
}

impl SelfTestAssumptions {
    pub fn new(phi_a: LocalBasis, phi_b: LocalBasis, epsilon: f64) -> Result<Self> {
        if phi_a.dim() < 2 || phi_b.dim() < 2 {
            return Err(Error::InvalidParameter("self-test bases need dimension >= 2".into()));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self { phi_a, phi_b, epsilon })
    }

    pub fn computational(dim_a: usize, dim_b: usize, epsilon: f64) -> Result<Self> {
        Self::new(LocalBasis::computational(dim_a), LocalBasis::computational(dim_b), epsilon)
    }

    fn kets(basis: &LocalBasis) -> (Ket, Ket, Ket, Ket) {
        let p0 = basis.vector(0).expect("dim >= 2");
        let p1 = basis.vector(1).expect("dim >= 2");
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x0 = Ket::new((p0.amps() + p1.amps()).scale(s)).expect("orthonormal pair");
        let x1 = Ket::new((p0.amps() - p1.amps()).scale(s)).expect("orthonormal pair");
        (p0, p1, x0, x1)
    }

    /// `(phi^0 phi^0 + phi^1 phi^1)/sqrt(2)` in the given bases.
    pub fn target(&self) -> Ket {
        let (a0, a1, _, _) = Self::kets(&self.phi_a);
        let (b0, b1, _, _) = Self::kets(&self.phi_b);
        let v = (a0.tensor(&b0).amps() + a1.tensor(&b1).amps()).scale(std::f64::consts::FRAC_1_SQRT_2);
        Ket::new(v).expect("orthonormal products")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssumptionResiduals {
    /// `|<phi0 phi0| rho |phi1 phi1> - 1/2|`
    pub phi: f64,
    /// `|<xi0 xi0| rho |xi1 xi1> - 1/2|`
    pub xi: f64,
    /// `|<phi0 phi1| rho |phi1 phi0>|`
    pub cross: f64,
    pub met: bool,
}

impl AssumptionResiduals {
    pub fn max(&self) -> f64 {
        self.phi.max(self.xi).max(self.cross)
    }
}

fn check_dims(s: &BipartiteState, a: &SelfTestAssumptions) -> Result<()> {
    if a.phi_a.dim() != s.dim_a() {
        return Err(Error::DimensionMismatch { expected: s.dim_a(), got: a.phi_a.dim() });
    }
    if a.phi_b.dim() != s.dim_b() {
        return Err(Error::DimensionMismatch { expected: s.dim_b(), got: a.phi_b.dim() });
    }
    Ok(())
}

fn residuals_of(rho: &DensityMatrix, a: &SelfTestAssumptions) -> AssumptionResiduals {
    let (a0, a1, ax0, ax1) = SelfTestAssumptions::kets(&a.phi_a);
    let (b0, b1, bx0, bx1) = SelfTestAssumptions::kets(&a.phi_b);
    let el = |bra: Ket, ket: Ket| matrix_element(rho, &bra, &ket).expect("dimensions checked");
    let half = c(0.5, 0.0);
    let phi = (el(a0.tensor(&b0), a1.tensor(&b1)) - half).norm();
    let xi = (el(ax0.tensor(&bx0), ax1.tensor(&bx1)) - half).norm();
    let cross = el(a0.tensor(&b1), a1.tensor(&b0)).norm();
    let met = phi <= a.epsilon && xi <= a.epsilon && cross <= a.epsilon;
    AssumptionResiduals { phi, xi, cross, met }
}

pub fn check_assumptions(s: &BipartiteState, a: &SelfTestAssumptions) -> Result<AssumptionResiduals> {
    check_dims(s, a)?;
    Ok(residuals_of(s.rho(), a))
}

pub type AlphaKey = (usize, usize, usize, usize);

/// Coefficients of the state in the `phi` product basis and the residual of
/// each step of the derivation that pins it to `phi+`.
#[derive(Clone, Debug)]
pub struct AlgebraTrace {
    pub alpha: BTreeMap<AlphaKey, C64>,
    pub residuals: BTreeMap<&'static str, f64>,
}

impl AlgebraTrace {
    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }
}

fn alpha_coefficients(s: &BipartiteState, a: &SelfTestAssumptions) -> BTreeMap<AlphaKey, C64> {
    let r = crate::inequalities::rotate_into(s, &a.phi_a, &a.phi_b).expect("dimensions checked");
    let (da, db) = (s.dim_a(), s.dim_b());
    let mut alpha = BTreeMap::new();
    for i in 0..da {
        for j in 0..db {
            for k in 0..da {
                for l in 0..db {
                    alpha.insert((i, j, k, l), r[(i * db + j, k * db + l)]);
                }
            }
        }
    }
    alpha
}

/// Residuals, all `>= 0` and all zero for the exact Bell state:
///
/// - `hermiticity`: `max |alpha_ij^kl - conj(alpha_kl^ij)|`
/// - `normalization`: `|sum alpha_ij^ij - 1|`
/// - `sign_sum_ket`, `sign_sum_bra`: `|sum (-1)^(k+l) alpha - 2|` and the
///   `(-1)^(i+j)` form, both over the `{0, 1}` block
/// - `diagonal_combination`: `|alpha_00^00 - alpha_01^01 - alpha_10^10 + alpha_11^11 - 1|`
/// - `outside_weight`: `|2 alpha_01^01 + 2 alpha_10^10 + sum over (i, j) outside {0,1}^2 of alpha_ij^ij|`
/// - `block_population`: `|alpha_00^00 + alpha_11^11 - 1|`
/// - `cauchy_schwarz`: largest excess of `|alpha_ij^kl|^2` over `alpha_ij^ij alpha_kl^kl`
/// - `population_product`: excess of `1/4` over `alpha_00^00 alpha_11^11`
/// - `population_balance`: `(alpha_00^00 - alpha_11^11)^2`
/// - `bell_coefficients`: largest deviation of `alpha_00^00, alpha_11^11, alpha_00^11, alpha_11^00` from `1/2`
/// - `remaining_coefficients`: largest `|alpha|` among all other coefficients
pub fn algebra_trace(s: &BipartiteState, a: &SelfTestAssumptions) -> Result<AlgebraTrace> {
    let check = check_assumptions(s, a)?;
    if !check.met {
        return Err(Error::AssumptionsNotMet(check.max()));
    }
    let alpha = alpha_coefficients(s, a);
    let at = |i, j, k, l| alpha[&(i, j, k, l)];
    let diag = |i, j| at(i, j, i, j).re;
    let (da, db) = (s.dim_a(), s.dim_b());
    let mut residuals = BTreeMap::new();

    let mut herm: f64 = 0.0;
    let mut cs: f64 = 0.0;
    let mut remaining: f64 = 0.0;
    let bell_keys = [(0, 0, 0, 0), (1, 1, 1, 1), (0, 0, 1, 1), (1, 1, 0, 0)];
    for (&(i, j, k, l), &v) in &alpha {
        herm = herm.max((v - at(k, l, i, j).conj()).norm());
        cs = cs.max(v.norm_sqr() - diag(i, j) * diag(k, l));
        if !bell_keys.contains(&(i, j, k, l)) {
            remaining = remaining.max(v.norm());
        }
    }
    residuals.insert("hermiticity", herm);
    residuals.insert("cauchy_schwarz", cs.max(0.0));
    residuals.insert("remaining_coefficients", remaining);

    let trace: f64 = (0..da).flat_map(|i| (0..db).map(move |j| (i, j))).map(|(i, j)| diag(i, j)).sum();
    residuals.insert("normalization", (trace - 1.0).abs());

    let mut ket_sum = c(0.0, 0.0);
    let mut bra_sum = c(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let v = at(i, j, k, l);
                    ket_sum += v * if (k + l) % 2 == 0 { 1.0 } else { -1.0 };
                    bra_sum += v * if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
    }
    residuals.insert("sign_sum_ket", (ket_sum - c(2.0, 0.0)).norm());
    residuals.insert("sign_sum_bra", (bra_sum - c(2.0, 0.0)).norm());

    let (p00, p01, p10, p11) = (diag(0, 0), diag(0, 1), diag(1, 0), diag(1, 1));
    residuals.insert("diagonal_combination", (p00 - p01 - p10 + p11 - 1.0).abs());
    let outside: f64 = (0..da)
        .flat_map(|i| (0..db).map(move |j| (i, j)))
        .filter(|&(i, j)| i >= 2 || j >= 2)
        .map(|(i, j)| diag(i, j))
        .sum();
    residuals.insert("outside_weight", (2.0 * p01 + 2.0 * p10 + outside).abs());
    residuals.insert("block_population", (p00 + p11 - 1.0).abs());
    residuals.insert("population_product", (0.25 - p00 * p11).max(0.0));
    residuals.insert("population_balance", (p00 - p11).powi(2));
    let bell_dev = bell_keys.iter().map(|&(i, j, k, l)| (at(i, j, k, l) - c(0.5, 0.0)).norm()).fold(0.0, f64::max);
    residuals.insert("bell_coefficients", bell_dev);

    Ok(AlgebraTrace { alpha, residuals })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SelfTestVerdict {
    pub assumptions_met: bool,
    pub residuals: AssumptionResiduals,
    pub max_residual: f64,
    pub fidelity: f64,
    pub certified: bool,
}

/// Fidelity with the Bell state of the given bases, certified when the
/// assumptions hold and the fidelity is at least `1 - 2 epsilon - CERT_SLACK`
/// (the assumptions force `F >= 1 - 2 |<phi0 phi0| rho |phi1 phi1> - 1/2|`).
pub fn certify(s: &BipartiteState, a: &SelfTestAssumptions) -> Result<SelfTestVerdict> {
    let residuals = check_assumptions(s, a)?;
    let fidelity = fidelity_with_pure(s.rho(), &a.target())?.clamp(0.0, 1.0);
    let certified = residuals.met && fidelity >= 1.0 - (2.0 * a.epsilon + CERT_SLACK);
    Ok(SelfTestVerdict { assumptions_met: residuals.met, residuals, max_residual: residuals.max(), fidelity, certified })
}

/// Worst state found by [`adversarial_search`].
#[derive(Clone, Debug)]
pub struct AdversarialRecord {
    pub state: BipartiteState,
    pub infidelity: f64,
    pub residuals: AssumptionResiduals,
    /// Whether the state meets the constraints to within `FEASIBILITY_SLACK`.
    pub feasible: bool,
    /// False when some penalty stage ran out of evaluations.
    pub converged: bool,
    pub restarts: usize,
}

fn state_from_params(x: &[f64], n: usize) -> Option<DensityMatrix> {
    // Lower-triangular G: n real diagonal entries, then complex entries below.
    let mut g = ComplexMatrix::zeros(n, n);
    let mut it = x.iter().copied();
    for i in 0..n {
        g[(i, i)] = c(it.next()?, 0.0);
    }
    for i in 0..n {
        for j in 0..i {
            g[(i, j)] = c(it.next()?, it.next()?);
        }
    }
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    if !(tr.is_finite() && tr > 1e-300) {
        return None;
    }
    let m = m.unscale(tr);
    let m = (&m + m.adjoint()).scale(0.5);
    Some(DensityMatrix::from_matrix_unchecked(m))
}

/// Maximizes `1 - F` over states whose three assumption residuals are at
/// most `epsilon`, using a quadratic penalty with an increasing weight
/// schedule over a Cholesky-style parameterization. Bases are computational
/// without loss of generality. Restarts run in parallel; the worst feasible
/// state wins, or the least infeasible one when no restart is feasible.
pub fn adversarial_search(epsilon: f64, dim_a: usize, dim_b: usize, cfg: &OptimizerConfig) -> Result<AdversarialRecord> {
    cfg.validate()?;
    if !(2..=MAX_DIM).contains(&dim_a) || !(2..=MAX_DIM).contains(&dim_b) {
        return Err(Error::InvalidParameter(format!("adversarial search supports dimensions 2..={MAX_DIM}")));
    }
    let assumptions = SelfTestAssumptions::computational(dim_a, dim_b, epsilon)?;
    let target = assumptions.target();
    let n = dim_a * dim_b;
    let infidelity = |rho: &DensityMatrix| 1.0 - fidelity_with_pure(rho, &target).expect("dimensions match").clamp(0.0, 1.0);

    let runs: Vec<(Vec<f64>, bool)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(cfg.seed, k as u64);
            let mut x: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut converged = true;
            for mu in PENALTY_SCHEDULE {
                let objective = |x: &[f64]| -> f64 {
                    let Some(rho) = state_from_params(x, n) else { return f64::INFINITY };
                    let r = residuals_of(&rho, &assumptions);
                    let excess = [r.phi, r.xi, r.cross].iter().map(|v| (v - epsilon).max(0.0).powi(2)).sum::<f64>();
                    -infidelity(&rho) + mu * excess
                };
                let out = nelder_mead_polished(objective, &x, 0.2, cfg.max_evals, cfg.tol);
                converged &= out.converged;
                x = out.x;
            }
            (x, converged)
        })
        .collect();

    let converged = runs.iter().all(|r| r.1);
    let mut best: Option<(bool, f64, DensityMatrix, AssumptionResiduals)> = None;
    for (x, _) in runs {
        let Some(rho) = state_from_params(&x, n) else { continue };
        let r = residuals_of(&rho, &assumptions);
        let feasible = r.max() <= epsilon + FEASIBILITY_SLACK;
        let inf = infidelity(&rho);
        let better = match &best {
            None => true,
            Some((bf, binf, _, br)) => match (feasible, *bf) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => inf > *binf,
                (false, false) => r.max() < br.max(),
            },
        };
        if better {
            best = Some((feasible, inf, rho, r));
        }
    }
    let (feasible, infidelity, rho, residuals) =
        best.ok_or_else(|| Error::InvalidParameter("every restart degenerated".into()))?;
    Ok(AdversarialRecord {
        state: BipartiteState::new(rho, dim_a, dim_b)?,
        infidelity,
        residuals,
        feasible,
        converged,
        restarts: cfg.restarts,
    })
}
