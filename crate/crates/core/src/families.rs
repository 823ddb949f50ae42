//! State families evaluated against the inequalities, and the closed-form
//! detection thresholds of the isotropic family.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qcore::{c, random_density_with, rng_for, BipartiteState, ComplexMatrix, DensityMatrix, Ket, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

pub fn bell(kind: BellKind) -> Ket {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let amps = match kind {
        BellKind::PhiPlus => [c(s, 0.0), z, z, c(s, 0.0)],
        BellKind::PhiMinus => [c(s, 0.0), z, z, c(-s, 0.0)],
        BellKind::PsiPlus => [z, c(s, 0.0), c(s, 0.0), z],
        BellKind::PsiMinus => [z, c(s, 0.0), c(-s, 0.0), z],
    };
    Ket::from_slice(&amps).expect("Bell kets are normalized")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WernerKind {
    /// `sqrt(a)|00> + sqrt(1-a) e^{i phase}|11>`
    PhiPlus,
    /// `sqrt(a)|01> + sqrt(1-a) e^{i phase}|10>`
    PsiPlus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WernerSpec {
    pub p: f64,
    pub alpha: f64,
    pub kind: WernerKind,
    pub phase: f64,
}

impl WernerSpec {
    pub fn new(p: f64, alpha: f64, kind: WernerKind) -> Self {
        Self { p, alpha, kind, phase: 0.0 }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    fn validate(&self) -> Result<()> {
        check_unit_interval("p", self.p)?;
        check_unit_interval("alpha", self.alpha)?;
        if !self.phase.is_finite() {
            return Err(Error::InvalidParameter(format!("phase must be finite, got {}", self.phase)));
        }
        Ok(())
    }

    /// The pure component of the mixture.
    pub fn pure_ket(&self) -> Ket {
        let (lo, hi) = match self.kind {
            WernerKind::PhiPlus => (0, 3),
            WernerKind::PsiPlus => (1, 2),
        };
        let mut amps = [c(0.0, 0.0); 4];
        amps[lo] = c(self.alpha.sqrt(), 0.0);
        amps[hi] = C64::from_polar((1.0 - self.alpha).sqrt(), self.phase);
        Ket::normalized(nalgebra::DVector::from_column_slice(&amps)).expect("nonzero amplitudes")
    }
}

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {x}")))
    }
}

/// `p |psi><psi| + (1 - p) I/4`
pub fn werner(spec: &WernerSpec) -> Result<BipartiteState> {
    spec.validate()?;
    let m = spec.pure_ket().projector().scale(spec.p)
        + ComplexMatrix::identity(4, 4).scale((1.0 - spec.p) / 4.0);
    BipartiteState::new(DensityMatrix::from_matrix_unchecked(m), 2, 2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsotropicSpec {
    pub d: usize,
    pub p: f64,
}

/// `(1 - p) I/d^2 + (p/d) sum_{i,j} |ii><jj|`
pub fn isotropic(spec: &IsotropicSpec) -> Result<BipartiteState> {
    let d = spec.d;
    if d < 2 {
        return Err(Error::InvalidParameter(format!("isotropic family needs d >= 2, got {d}")));
    }
    check_unit_interval("p", spec.p)?;
    let n = d * d;
    let mut m = ComplexMatrix::identity(n, n).scale((1.0 - spec.p) / n as f64);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] += c(spec.p / d as f64, 0.0);
        }
    }
    BipartiteState::new(DensityMatrix::from_matrix_unchecked(m), d, d)
}

/// Isotropic mixing weights above which the state is entangled, steerable,
/// or violates the SLHS inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdTable {
    pub d: usize,
    pub entangled: f64,
    pub steerable: f64,
    pub slhs: f64,
}

pub fn thresholds(d: usize) -> Result<ThresholdTable> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("thresholds need d >= 2, got {d}")));
    }
    let harmonic: f64 = (2..=d).map(|r| 1.0 / r as f64).sum();
    Ok(ThresholdTable {
        d,
        entangled: 1.0 / (d as f64 + 1.0),
        steerable: harmonic / (d as f64 - 1.0),
        slhs: 1.0 / d as f64,
    })
}

/// Uniform draw from the probability simplex.
pub(crate) fn dirichlet_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// `sum_{a, theta} p(a, theta) |a><a| (x) rho_{a|theta}`.
///
/// `weights[a][theta]` must be a probability distribution and
/// `conditionals[a][theta]` a state on B.
pub fn assemblage_state(weights: &[Vec<f64>], conditionals: &[Vec<DensityMatrix>]) -> Result<BipartiteState> {
    let dim_a = weights.len();
    if dim_a == 0 || conditionals.len() != dim_a {
        return Err(Error::InvalidParameter("weights and conditionals must share the flag range".into()));
    }
    let dim_b = conditionals
        .iter()
        .flatten()
        .map(DensityMatrix::dim)
        .next()
        .ok_or_else(|| Error::InvalidParameter("no conditional states".into()))?;
    let mut total = 0.0;
    let mut m = ComplexMatrix::zeros(dim_a * dim_b, dim_a * dim_b);
    for (a, (ws, rhos)) in weights.iter().zip(conditionals).enumerate() {
        if ws.len() != rhos.len() {
            return Err(Error::InvalidParameter(format!("flag {a}: weight/state count mismatch")));
        }
        for (&w, rho) in ws.iter().zip(rhos) {
            if w < 0.0 {
                return Err(Error::InvalidParameter(format!("negative weight {w}")));
            }
            if rho.dim() != dim_b {
                return Err(Error::DimensionMismatch { expected: dim_b, got: rho.dim() });
            }
            total += w;
            let block = rho.matrix().scale(w);
            let mut view = m.view_mut((a * dim_b, a * dim_b), (dim_b, dim_b));
            view += block;
        }
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
    }
    BipartiteState::new(DensityMatrix::new(m)?, dim_a, dim_b)
}

/// Random one-sided-LHS state on two qubits: computational flags on A with
/// random conditional states on B, `settings` measurement choices.
pub fn lhs_assemblage_state(seed: u64, settings: usize) -> Result<BipartiteState> {
    lhs_assemblage_state_dims(seed, settings, 2, 2)
}

pub fn lhs_assemblage_state_dims(seed: u64, settings: usize, dim_a: usize, dim_b: usize) -> Result<BipartiteState> {
    if settings == 0 {
        return Err(Error::InvalidParameter("settings must be at least 1".into()));
    }
    let mut rng = rng_for(seed, 0x11a5);
    let flat = dirichlet_uniform(dim_a * settings, &mut rng);
    let weights: Vec<Vec<f64>> = flat.chunks(settings).map(<[f64]>::to_vec).collect();
    let conditionals: Vec<Vec<DensityMatrix>> = (0..dim_a)
        .map(|_| (0..settings).map(|_| random_density_with(dim_b, &mut rng)).collect())
        .collect();
    assemblage_state(&weights, &conditionals)
}

/// `sum_m q_m rho_m^A (x) rho_m^B` with Ginibre-induced local states and
/// Dirichlet-uniform weights `q`.
pub fn random_separable(seed: u64, terms: usize, dim_a: usize, dim_b: usize) -> Result<BipartiteState> {
    if terms == 0 || terms > 16 {
        return Err(Error::InvalidParameter(format!("terms must lie in 1..=16, got {terms}")));
    }
    let mut rng = rng_for(seed, 0x5e9a);
    let q = dirichlet_uniform(terms, &mut rng);
    let n = dim_a * dim_b;
    let mut m = ComplexMatrix::zeros(n, n);
    for w in q {
        let ra = random_density_with(dim_a, &mut rng);
        let rb = random_density_with(dim_b, &mut rng);
        m += ra.matrix().kronecker(rb.matrix()).scale(w);
    }
    BipartiteState::new(DensityMatrix::from_matrix_unchecked(m), dim_a, dim_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{Subsystem, HERMITIAN_TOL, PSD_TOL, TRACE_TOL};

    fn assert_valid(s: &BipartiteState) {
        let m = s.matrix();
        assert!(crate::qcore::hermitian_deviation(m) <= HERMITIAN_TOL);
        assert!((s.rho().trace() - 1.0).abs() <= TRACE_TOL);
        assert!(s.rho().eigenvalues()[0] >= -PSD_TOL);
    }

    #[test]
    fn bell_kets() {
        let phi = bell(BellKind::PhiPlus);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(phi.amps()[0], c(s, 0.0));
        assert_eq!(phi.amps()[3], c(s, 0.0));
        let psi = bell(BellKind::PsiPlus);
        assert_eq!(psi.amps()[1], c(s, 0.0));
        assert_eq!(psi.amps()[2], c(s, 0.0));
        assert_eq!(phi.inner(&psi), c(0.0, 0.0));
        let all = [BellKind::PhiPlus, BellKind::PhiMinus, BellKind::PsiPlus, BellKind::PsiMinus].map(bell);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((all[i].inner(&all[j]) - c(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn werner_limits_and_coherence() {
        let pure = werner(&WernerSpec::new(1.0, 0.5, WernerKind::PhiPlus)).unwrap();
        assert!((pure.matrix() - bell(BellKind::PhiPlus).projector()).norm() < 1e-15);
        let mixed = werner(&WernerSpec::new(0.0, 0.3, WernerKind::PsiPlus)).unwrap();
        assert!((mixed.matrix() - ComplexMatrix::identity(4, 4).scale(0.25)).norm() < 1e-15);
        let w = werner(&WernerSpec::new(0.8, 0.5, WernerKind::PhiPlus)).unwrap();
        assert!((w.element(0, 0, 1, 1) - c(0.4, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn werner_phase_moves_into_coherence() {
        let phase = 0.7;
        let w = werner(&WernerSpec::new(1.0, 0.5, WernerKind::PhiPlus).with_phase(phase)).unwrap();
        let expected = C64::from_polar(0.5, -phase);
        assert!((w.element(0, 0, 1, 1) - expected).norm() < 1e-15);
    }

    #[test]
    fn werner_rejects_out_of_range() {
        assert!(werner(&WernerSpec::new(1.1, 0.5, WernerKind::PhiPlus)).is_err());
        assert!(werner(&WernerSpec::new(0.5, -0.1, WernerKind::PhiPlus)).is_err());
    }

    #[test]
    fn isotropic_examples() {
        let s = isotropic(&IsotropicSpec { d: 2, p: 1.0 }).unwrap();
        assert!((s.matrix() - bell(BellKind::PhiPlus).projector()).norm() < 1e-15);
        let s3 = isotropic(&IsotropicSpec { d: 3, p: 0.5 }).unwrap();
        assert!((s3.element(0, 0, 1, 1) - c(1.0 / 6.0, 0.0)).norm() < 1e-15);
        for d in 2..=6 {
            let s = isotropic(&IsotropicSpec { d, p: 0.37 }).unwrap();
            assert!((s.rho().trace() - 1.0).abs() < 1e-12);
        }
        assert!(isotropic(&IsotropicSpec { d: 1, p: 0.5 }).is_err());
    }

    #[test]
    fn families_are_valid_states_on_a_grid() {
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            for kind in [WernerKind::PhiPlus, WernerKind::PsiPlus] {
                for alpha in [0.0, 0.2, 0.5, 0.9, 1.0] {
                    assert_valid(&werner(&WernerSpec::new(p, alpha, kind)).unwrap());
                }
            }
            for d in 2..=4 {
                assert_valid(&isotropic(&IsotropicSpec { d, p }).unwrap());
            }
        }
    }

    #[test]
    fn threshold_closed_forms() {
        let t2 = thresholds(2).unwrap();
        assert!((t2.entangled - 1.0 / 3.0).abs() < 1e-15);
        assert!((t2.steerable - 0.5).abs() < 1e-15);
        assert!((t2.slhs - 0.5).abs() < 1e-15);
        let t3 = thresholds(3).unwrap();
        assert!((t3.entangled - 0.25).abs() < 1e-15);
        assert!((t3.steerable - 5.0 / 12.0).abs() < 1e-15);
        assert!((t3.slhs - 1.0 / 3.0).abs() < 1e-15);
        let t4 = thresholds(4).unwrap();
        assert!((t4.entangled - 0.2).abs() < 1e-15);
        assert!((t4.steerable - 13.0 / 36.0).abs() < 1e-15);
        assert!((t4.slhs - 0.25).abs() < 1e-15);
        assert!(thresholds(1).is_err());
    }

    #[test]
    fn threshold_ordering() {
        for d in 2..=12 {
            let t = thresholds(d).unwrap();
            assert!(t.entangled < t.slhs);
            assert!(t.slhs <= t.steerable);
            assert_eq!(d == 2, (t.slhs - t.steerable).abs() < 1e-15, "d={d}");
        }
    }

    #[test]
    fn assemblage_flags_are_classical() {
        for seed in 0..50 {
            let s = lhs_assemblage_state(seed, 3).unwrap();
            assert_valid(&s);
            let ra = s.partial_trace(Subsystem::A);
            assert!(ra.get(0, 1).norm() < 1e-12);
        }
    }

    #[test]
    fn single_flag_assemblage_is_product() {
        let rho_b = crate::qcore::random_density(2, 5);
        let zero = DensityMatrix::maximally_mixed(2);
        let s = assemblage_state(&[vec![1.0], vec![0.0]], &[vec![rho_b.clone()], vec![zero]]).unwrap();
        let flag = DensityMatrix::from_ket(&Ket::basis(2, 0).unwrap());
        let product = BipartiteState::product(&flag, &rho_b);
        assert!((s.matrix() - product.matrix()).norm() < 1e-15);
    }

    #[test]
    fn assemblage_rejects_bad_weights() {
        let r = DensityMatrix::maximally_mixed(2);
        assert!(assemblage_state(&[vec![0.3], vec![0.3]], &[vec![r.clone()], vec![r]]).is_err());
    }

    #[test]
    fn separable_single_term_is_product() {
        let s = random_separable(4, 1, 2, 3).unwrap();
        let ra = s.partial_trace(Subsystem::A);
        let rb = s.partial_trace(Subsystem::B);
        assert!((s.matrix() - ra.matrix().kronecker(rb.matrix())).norm() < 1e-14);
    }

    #[test]
    fn separable_states_are_valid_and_bounded() {
        for seed in 0..500 {
            let s = random_separable(seed, 1 + (seed % 16) as usize, 2, 2).unwrap();
            assert_valid(&s);
            let x = s.element(0, 0, 1, 1).norm() * s.element(1, 1, 0, 0).norm();
            assert!(x <= 1.0 / 16.0 + 1e-15);
        }
        assert!(random_separable(0, 0, 2, 2).is_err());
        assert!(random_separable(0, 17, 2, 2).is_err());
    }
}
