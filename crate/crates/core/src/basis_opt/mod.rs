//! Numerical maximization over pairs of local orthonormal bases.
//!
//! A basis is `U0 exp(i H(x))`, where `U0` is the restart's starting
//! unitary and `H(x)` expands `x` in the generalized Gell-Mann matrices plus
//! the identity (`d^2` real coordinates). Restart 0 starts from the
//! computational bases, the rest from Haar-random ones.

mod nelder_mead;

pub use nelder_mead::{nelder_mead, nelder_mead_polished, NmOutcome};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qcore::{c, exp_i_hermitian, haar_unitary_with, rng_for, ComplexMatrix, LocalBasis, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NelderMead,
    /// Cyclic search over Givens rotations and column phases.
    CoordinateRotations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Objective evaluations allowed per restart.
    pub max_evals: usize,
    pub seed: u64,
    pub tol: f64,
    pub method: Method,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { restarts: 32, max_evals: 2000, seed: 0, tol: 1e-8, method: Method::NelderMead }
    }
}

impl OptimizerConfig {
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Best basis pair found by [`optimize`].
#[derive(Clone, Debug)]
pub struct BasisPoint {
    pub params_a: Vec<f64>,
    pub params_b: Vec<f64>,
    pub start_a: ComplexMatrix,
    pub start_b: ComplexMatrix,
    pub score: f64,
    /// False when any restart ran out of evaluations before converging.
    pub converged: bool,
    pub evals: usize,
    /// Index of the restart that produced the point.
    pub restart: usize,
}

impl BasisPoint {
    pub fn bases(&self) -> (LocalBasis, LocalBasis) {
        let da = self.start_a.nrows();
        let db = self.start_b.nrows();
        (compose(&self.start_a, &self.params_a, da), compose(&self.start_b, &self.params_b, db))
    }
}

/// Generalized Gell-Mann expansion. Coordinates are ordered as: for each
/// pair `j < k` the symmetric then antisymmetric generator, then the `d - 1`
/// diagonal generators, then the identity. For `d = 2` that is
/// `(sigma_x, sigma_y, sigma_z, I)`.
pub fn hermitian_from_params(params: &[f64], d: usize) -> Result<ComplexMatrix> {
    if params.len() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, got: params.len() });
    }
    let mut h = ComplexMatrix::zeros(d, d);
    let mut idx = 0;
    for j in 0..d {
        for k in (j + 1)..d {
            let (s, a) = (params[idx], params[idx + 1]);
            idx += 2;
            h[(j, k)] += c(s, -a);
            h[(k, j)] += c(s, a);
        }
    }
    for l in 1..d {
        let x = params[idx] * (2.0 / (l * (l + 1)) as f64).sqrt();
        idx += 1;
        for m in 0..l {
            h[(m, m)] += c(x, 0.0);
        }
        h[(l, l)] += c(-(l as f64) * x, 0.0);
    }
    let id = params[idx];
    for m in 0..d {
        h[(m, m)] += c(id, 0.0);
    }
    Ok(h)
}

/// `exp(i H(params))`
pub fn unitary_from_params(params: &[f64], d: usize) -> Result<ComplexMatrix> {
    Ok(exp_i_hermitian(&hermitian_from_params(params, d)?))
}

fn compose(start: &ComplexMatrix, params: &[f64], d: usize) -> LocalBasis {
    let u = start * exp_i_hermitian(&hermitian_from_params(params, d).expect("length checked"));
    LocalBasis::from_unitary_unchecked(u)
}

fn run_nelder_mead<F>(objective: &F, start_a: ComplexMatrix, start_b: ComplexMatrix, cfg: &OptimizerConfig) -> (Vec<f64>, Vec<f64>, f64, bool, usize)
where
    F: Fn(&LocalBasis, &LocalBasis) -> f64,
{
    let (da, db) = (start_a.nrows(), start_b.nrows());
    let na = da * da;
    let neg = |x: &[f64]| {
        let ba = compose(&start_a, &x[..na], da);
        let bb = compose(&start_b, &x[na..], db);
        -objective(&ba, &bb)
    };
    let x0 = vec![0.0; na + db * db];
    let out = nelder_mead_polished(neg, &x0, 0.4, cfg.max_evals, cfg.tol);
    (out.x[..na].to_vec(), out.x[na..].to_vec(), -out.f, out.converged, out.evals)
}

/// Right-multiplies column pair `(j, k)` of `u` by a Givens rotation, or a
/// single column by a phase when `j == k`.
fn givens(u: &ComplexMatrix, j: usize, k: usize, angle: f64, complex: bool) -> ComplexMatrix {
    let mut out = u.clone();
    if j == k {
        let ph = C64::from_polar(1.0, angle);
        for r in 0..u.nrows() {
            out[(r, j)] = u[(r, j)] * ph;
        }
        return out;
    }
    let (cs, sn) = (angle.cos(), angle.sin());
    let s = if complex { c(0.0, sn) } else { c(sn, 0.0) };
    for r in 0..u.nrows() {
        let (x, y) = (u[(r, j)], u[(r, k)]);
        out[(r, j)] = x * cs - y * s.conj();
        out[(r, k)] = x * s + y * cs;
    }
    out
}

fn run_coordinate<F>(objective: &F, start_a: ComplexMatrix, start_b: ComplexMatrix, cfg: &OptimizerConfig) -> (ComplexMatrix, ComplexMatrix, f64, bool, usize)
where
    F: Fn(&LocalBasis, &LocalBasis) -> f64,
{
    let mut u = [start_a, start_b];
    let score = |u: &[ComplexMatrix; 2]| {
        objective(&LocalBasis::from_unitary_unchecked(u[0].clone()), &LocalBasis::from_unitary_unchecked(u[1].clone()))
    };
    let mut best = score(&u);
    let mut evals = 1;
    let mut step = 0.5;
    let min_step = cfg.tol.sqrt().min(1e-3);
    let mut moves = Vec::new();
    for (side, m) in u.iter().enumerate() {
        let d = m.nrows();
        for j in 0..d {
            for k in j..d {
                moves.push((side, j, k, false));
                if j != k {
                    moves.push((side, j, k, true));
                }
            }
        }
    }
    while step >= min_step {
        if evals >= cfg.max_evals {
            return (u[0].clone(), u[1].clone(), best, false, evals);
        }
        let mut improved = false;
        for &(side, j, k, complex) in &moves {
            for sign in [1.0, -1.0] {
                let mut trial = u.clone();
                trial[side] = givens(&u[side], j, k, sign * step, complex);
                let v = score(&trial);
                evals += 1;
                if v > best + cfg.tol * 1e-3 {
                    best = v;
                    u = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let [a, b] = u;
    (a, b, best, true, evals)
}

/// Maximizes `objective` over pairs of local bases of dimensions `da`, `db`.
///
/// Restart `k` draws its starting bases from stream `k` of `cfg.seed`, so the
/// result is deterministic and the first `n` restarts are shared by every
/// configuration with at least `n` restarts. Restarts run in parallel and the
/// best score wins, ties going to the lowest restart index.
pub fn optimize_dims<F>(objective: F, da: usize, db: usize, cfg: &OptimizerConfig) -> Result<BasisPoint>
where
    F: Fn(&LocalBasis, &LocalBasis) -> f64 + Sync,
{
    cfg.validate()?;
    if da == 0 || db == 0 {
        return Err(Error::InvalidParameter("basis dimensions must be positive".into()));
    }
    let results: Vec<BasisPoint> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let (start_a, start_b) = if k == 0 {
                (ComplexMatrix::identity(da, da), ComplexMatrix::identity(db, db))
            } else {
                let mut rng = rng_for(cfg.seed, k as u64);
                (haar_unitary_with(da, &mut rng), haar_unitary_with(db, &mut rng))
            };
            match cfg.method {
                Method::NelderMead => {
                    let (pa, pb, score, converged, evals) = run_nelder_mead(&objective, start_a.clone(), start_b.clone(), cfg);
                    BasisPoint { params_a: pa, params_b: pb, start_a, start_b, score, converged, evals, restart: k }
                }
                Method::CoordinateRotations => {
                    let (ua, ub, score, converged, evals) = run_coordinate(&objective, start_a, start_b, cfg);
                    BasisPoint {
                        params_a: vec![0.0; da * da],
                        params_b: vec![0.0; db * db],
                        start_a: ua,
                        start_b: ub,
                        score,
                        converged,
                        evals,
                        restart: k,
                    }
                }
            }
        })
        .collect();

    let converged = results.iter().all(|p| p.converged);
    let evals = results.iter().map(|p| p.evals).sum();
    let mut best = results
        .into_iter()
        .reduce(|a, b| if b.score > a.score { b } else { a })
        .expect("at least one restart");
    best.converged = converged;
    best.evals = evals;
    Ok(best)
}

/// [`optimize_dims`] with equal local dimensions.
pub fn optimize<F>(objective: F, d: usize, cfg: &OptimizerConfig) -> Result<BasisPoint>
where
    F: Fn(&LocalBasis, &LocalBasis) -> f64 + Sync,
{
    optimize_dims(objective, d, d, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{bell, BellKind};
    use crate::inequalities::{evaluate, InequalityKind};
    use crate::qcore::{hermitian_deviation, unitary_deviation, BipartiteState};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn aligned_lhs(s: &BipartiteState) -> impl Fn(&LocalBasis, &LocalBasis) -> f64 + Sync + '_ {
        move |a, b| evaluate(s, InequalityKind::Aligned, a, b).unwrap().lhs
    }

    #[test]
    fn zero_params_give_identity() {
        for d in 1..=4 {
            let h = hermitian_from_params(&vec![0.0; d * d], d).unwrap();
            assert_eq!(h, ComplexMatrix::zeros(d, d));
            let u = unitary_from_params(&vec![0.0; d * d], d).unwrap();
            assert!((u - ComplexMatrix::identity(d, d)).norm() < 1e-15);
        }
    }

    #[test]
    fn sigma_y_coordinate_is_a_real_rotation() {
        let u = unitary_from_params(&[0.0, FRAC_PI_4, 0.0, 0.0], 2).unwrap();
        let (cs, sn) = (FRAC_PI_4.cos(), FRAC_PI_4.sin());
        let expected = ComplexMatrix::from_row_slice(2, 2, &[c(cs, 0.0), c(sn, 0.0), c(-sn, 0.0), c(cs, 0.0)]);
        assert!((u - expected).norm() < 1e-14);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(matches!(hermitian_from_params(&[0.0; 3], 2), Err(Error::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn generators_are_hermitian_and_exponentials_unitary(
            d in 1usize..5,
            raw in proptest::collection::vec(-3.0f64..3.0, 16),
        ) {
            let params = &raw[..d * d];
            let h = hermitian_from_params(params, d).unwrap();
            prop_assert!(hermitian_deviation(&h) <= 1e-14);
            let u = unitary_from_params(params, d).unwrap();
            prop_assert!(unitary_deviation(&u) <= 1e-10);
        }
    }

    #[test]
    fn bell_state_reaches_one() {
        let s = BipartiteState::from_ket(&bell(BellKind::PhiPlus), 2, 2).unwrap();
        let cfg = OptimizerConfig::default().with_restarts(4);
        let best = optimize(aligned_lhs(&s), 2, &cfg).unwrap();
        assert!(best.score >= 1.0 - 1e-6);
    }

    #[test]
    fn maximally_mixed_stays_at_zero() {
        let s = BipartiteState::maximally_mixed(2, 2);
        let cfg = OptimizerConfig::default().with_restarts(4);
        let best = optimize(aligned_lhs(&s), 2, &cfg).unwrap();
        assert!(best.score <= 1e-9);
    }

    #[test]
    fn psi_plus_found_by_relabeling() {
        let s = BipartiteState::from_ket(&bell(BellKind::PsiPlus), 2, 2).unwrap();
        for method in [Method::NelderMead, Method::CoordinateRotations] {
            let cfg = OptimizerConfig::default().with_restarts(8).with_method(method).with_seed(3);
            let best = optimize(aligned_lhs(&s), 2, &cfg).unwrap();
            assert!(best.score >= 1.0 - 1e-4, "{method:?}: {}", best.score);
            let (ba, bb) = best.bases();
            let re = evaluate(&s, InequalityKind::Aligned, &ba, &bb).unwrap();
            assert!((re.lhs - best.score).abs() < 1e-12);
        }
    }

    #[test]
    fn score_not_below_identity_start() {
        let s = crate::families::random_separable(7, 3, 2, 2).unwrap();
        let fixed = evaluate(&s, InequalityKind::Combined, &LocalBasis::z(), &LocalBasis::z()).unwrap().lhs;
        let cfg = OptimizerConfig::default().with_restarts(1).with_max_evals(100);
        let best = optimize(|a, b| evaluate(&s, InequalityKind::Combined, a, b).unwrap().lhs, 2, &cfg).unwrap();
        assert!(best.score >= fixed);
    }

    #[test]
    fn restart_monotonicity_and_determinism() {
        let s = crate::families::werner(&crate::families::WernerSpec::new(0.7, 0.3, crate::families::WernerKind::PsiPlus)).unwrap();
        let objective = |a: &LocalBasis, b: &LocalBasis| evaluate(&s, InequalityKind::Combined, a, b).unwrap().lhs;
        let mut last = f64::NEG_INFINITY;
        for restarts in [1, 2, 4, 8] {
            let cfg = OptimizerConfig::default().with_restarts(restarts).with_max_evals(400).with_seed(11);
            let score = optimize(objective, 2, &cfg).unwrap().score;
            assert!(score >= last);
            last = score;
        }
        let cfg = OptimizerConfig::default().with_restarts(3).with_max_evals(300).with_seed(5);
        let x = optimize(objective, 2, &cfg).unwrap();
        let y = optimize(objective, 2, &cfg).unwrap();
        assert_eq!(x.score, y.score);
        assert_eq!(x.restart, y.restart);
    }

    #[test]
    fn every_evaluated_basis_is_unitary() {
        use std::sync::Mutex;
        let worst = Mutex::new(0.0f64);
        let cfg = OptimizerConfig::default().with_restarts(3).with_max_evals(300);
        let s = BipartiteState::from_ket(&bell(BellKind::PhiPlus), 2, 2).unwrap();
        optimize(
            |a, b| {
                let dev = unitary_deviation(a.unitary()).max(unitary_deviation(b.unitary()));
                let mut w = worst.lock().unwrap();
                *w = w.max(dev);
                evaluate(&s, InequalityKind::Aligned, a, b).unwrap().lhs
            },
            2,
            &cfg,
        )
        .unwrap();
        assert!(*worst.lock().unwrap() <= 1e-10);
    }

    #[test]
    fn schmidt_basis_lower_bound_on_rotated_pure_states() {
        for (seed, alpha) in [(1u64, 0.5), (2, 0.3), (3, 0.1), (4, 0.8)] {
            let spec = crate::families::WernerSpec::new(1.0, alpha, crate::families::WernerKind::PhiPlus);
            let s0 = crate::families::werner(&spec).unwrap();
            let ua = crate::qcore::haar_unitary(2, 100 + seed);
            let ub = crate::qcore::haar_unitary(2, 200 + seed);
            let s = s0.local_unitary(&ua, &ub).unwrap();
            let cfg = OptimizerConfig::default().with_restarts(8).with_seed(seed);
            let best = optimize(aligned_lhs(&s), 2, &cfg).unwrap();
            let target = 2.0 * (alpha * (1.0 - alpha)).sqrt();
            assert!(best.score >= target - 1e-4, "alpha={alpha}: {} < {target}", best.score);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = OptimizerConfig::default().with_restarts(0);
        assert!(optimize(|_, _| 0.0, 2, &cfg).is_err());
    }
}
