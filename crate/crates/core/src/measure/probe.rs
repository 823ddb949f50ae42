//! Executable probes of the resource axioms and of closure under local
//! operations.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::channel::{apply_channel, ChannelKind, ChannelOutput, KrausChannel, Side};
use super::{n_fixed, n_measure, MeasureVariant};
use crate::basis_opt::OptimizerConfig;
use crate::error::{Error, Result};
use crate::families::{dirichlet_uniform, random_separable};
use crate::inequalities::{evaluate, max_violation, InequalityKind, VIOLATION_SLACK};
use crate::qcore::{random_density_with, rng_for, BipartiteState, DensityMatrix, Ket, LocalBasis, C64};

/// Tolerance on mixture weights summing to one.
pub const MIXTURE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlackReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative means the inequality failed.
    pub slack: f64,
}

impl SlackReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, slack: rhs - lhs }
    }
}

/// The tightest computational-basis element of
/// `sum_k p_k |<ab| L_k(rho) |cd>| <= |<ab| rho |cd>|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ElementSlack {
    pub element: (usize, usize, usize, usize),
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AxiomBReport {
    pub elementwise: ElementSlack,
    /// `sum_k p_k N(L_k(rho)) <= N(rho)` for the chosen variant.
    pub full: SlackReport,
    pub variant: MeasureVariant,
    pub negative: bool,
}

fn computational(s: &BipartiteState) -> (LocalBasis, LocalBasis) {
    (LocalBasis::computational(s.dim_a()), LocalBasis::computational(s.dim_b()))
}

fn measure_of(s: &BipartiteState, variant: MeasureVariant, cfg: &OptimizerConfig) -> Result<f64> {
    let (za, zb) = computational(s);
    match variant {
        MeasureVariant::FixedBasis => n_fixed(s, &za, &zb),
        _ => Ok(n_measure(s, variant, None, None, cfg)?.value),
    }
}

fn elementwise(s: &BipartiteState, out: &ChannelOutput) -> ElementSlack {
    let (da, db) = s.dims();
    let n = da * db;
    let mut worst = ElementSlack { element: (0, 0, 0, 0), lhs: 0.0, rhs: 0.0, slack: f64::INFINITY };
    for row in 0..n {
        for col in 0..n {
            let lhs: f64 = out.branches.iter().map(|b| b.unnormalized[(row, col)].norm()).sum();
            let rhs = s.matrix()[(row, col)].norm();
            if rhs - lhs < worst.slack {
                worst = ElementSlack { element: (row / db, row % db, col / db, col % db), lhs, rhs, slack: rhs - lhs };
            }
        }
    }
    worst
}

/// Compares the measure before and after `channel`, both element by element
/// in the computational basis and for the full measure under `variant`
/// (computational bases for `FixedBasis`).
pub fn axiom_b_probe(s: &BipartiteState, channel: &KrausChannel, variant: MeasureVariant, cfg: &OptimizerConfig) -> Result<AxiomBReport> {
    let out = apply_channel(s, channel)?;
    let element = elementwise(s, &out);
    let mut lhs = 0.0;
    for b in &out.branches {
        lhs += b.weight * measure_of(&b.state, variant, cfg)?;
    }
    let full = SlackReport::new(lhs, measure_of(s, variant, cfg)?);
    Ok(AxiomBReport { elementwise: element, full, variant, negative: element.slack < 0.0 || full.slack < 0.0 })
}

/// `N(sum p_i rho_i) <= sum p_i N(rho_i)`.
pub fn axiom_c_probe(components: &[(f64, BipartiteState)], variant: MeasureVariant, cfg: &OptimizerConfig) -> Result<SlackReport> {
    let (_, first) = components.first().ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
    let total: f64 = components.iter().map(|(p, _)| p).sum();
    if components.iter().any(|(p, _)| *p < 0.0) || (total - 1.0).abs() > MIXTURE_TOL {
        return Err(Error::InvalidParameter(format!("mixture weights must be non-negative and sum to 1, got {total}")));
    }
    let parts: Vec<(f64, &DensityMatrix)> = components.iter().map(|(p, s)| (*p, s.rho())).collect();
    let mixed = BipartiteState::new(DensityMatrix::mixture(&parts)?, first.dim_a(), first.dim_b())?;
    let mut rhs = 0.0;
    for (p, s) in components {
        if s.dims() != first.dims() {
            return Err(Error::DimensionMismatch { expected: first.dim_a() * first.dim_b(), got: s.dim_a() * s.dim_b() });
        }
        rhs += p * measure_of(s, variant, cfg)?;
    }
    Ok(SlackReport::new(measure_of(&mixed, variant, cfg)?, rhs))
}

/// Half the time a Ginibre state, otherwise a noisy, phase-rotated `phi+`
/// mixed with one, so that the measure is often non-zero.
fn probe_state<R: Rng + ?Sized>(rng: &mut R) -> Result<BipartiteState> {
    let sigma = random_density_with(4, rng);
    if rng.random_bool(0.5) {
        return BipartiteState::new(sigma, 2, 2);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let zero = C64::new(0.0, 0.0);
    let bell = Ket::from_slice(&[C64::new(s, 0.0), zero, zero, C64::from_polar(s, theta)])?;
    let v = rng.random_range(0.5..1.0);
    let rho = DensityMatrix::mixture(&[(v, &DensityMatrix::from_ket(&bell)), (1.0 - v, &sigma)])?;
    BipartiteState::new(rho, 2, 2)
}

/// One CSV row of a probe sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub trial: usize,
    pub slack: f64,
    pub variant: String,
    pub channel_kind: String,
}

fn random_local_pair<R: Rng + ?Sized>(kind: ChannelKind, d: usize, paired: bool, rng: &mut R) -> Result<KrausChannel> {
    let count_a = rng.random_range(1..=4);
    let count_b = if paired { count_a } else { rng.random_range(1..=4) };
    if paired && kind == ChannelKind::MixedUnitary {
        return KrausChannel::random_paired_mixed_unitary(d, count_a, rng);
    }
    let make = |side, count, rng: &mut R| match kind {
        ChannelKind::Diagonal => KrausChannel::random_diagonal(side, d, count, rng),
        ChannelKind::MixedUnitary => KrausChannel::random_mixed_unitary(side, d, count, rng),
        ChannelKind::General => KrausChannel::random_general(side, d, count, rng),
    };
    let a = make(Side::A, count_a, rng)?;
    let b = make(Side::B, count_b, rng)?;
    if paired {
        KrausChannel::paired(a.ops(), b.ops(), kind)
    } else {
        Ok(KrausChannel::product(&a, &b))
    }
}

/// Runs [`axiom_b_probe`] on random two-qubit states (see `probe_state`) under random local
/// channels of `kind`; every other trial uses the paired form. Emits an
/// `elementwise` row and a row for `variant` per trial.
pub fn axiom_b_trials(seed: u64, trials: usize, kind: ChannelKind, variant: MeasureVariant, cfg: &OptimizerConfig) -> Result<Vec<ProbeRow>> {
    let rows: Result<Vec<Vec<ProbeRow>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, t as u64);
            let s = probe_state(&mut rng)?;
            let channel = random_local_pair(kind, 2, t % 2 == 1, &mut rng)?;
            let r = axiom_b_probe(&s, &channel, variant, cfg)?;
            Ok(vec![
                ProbeRow { trial: t, slack: r.elementwise.slack, variant: "elementwise".into(), channel_kind: kind.name().into() },
                ProbeRow { trial: t, slack: r.full.slack, variant: variant.name().into(), channel_kind: kind.name().into() },
            ])
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Runs [`axiom_c_probe`] on random mixtures of two to four random two-qubit
/// states (see `probe_state`).
pub fn axiom_c_trials(seed: u64, trials: usize, variant: MeasureVariant, cfg: &OptimizerConfig) -> Result<Vec<ProbeRow>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, t as u64);
            let k = rng.random_range(2..=4);
            let weights = dirichlet_uniform(k, &mut rng);
            let components: Vec<(f64, BipartiteState)> = weights
                .into_iter()
                .map(|w| Ok((w, probe_state(&mut rng)?)))
                .collect::<Result<_>>()?;
            let r = axiom_c_probe(&components, variant, cfg)?;
            Ok(ProbeRow { trial: t, slack: r.slack, variant: variant.name().into(), channel_kind: "none".into() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Trial {
    pub trial: usize,
    pub channel_kind: String,
    pub paired: bool,
    /// Largest `lhs - bound` over all inequalities, the output mixture and
    /// every branch, in computational bases.
    pub margin_fixed: f64,
    /// Largest `lhs - bound` over all inequalities on the output mixture at
    /// optimized bases.
    pub margin_optimized: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub trials: usize,
    pub violations_fixed: usize,
    pub violations_optimized: usize,
    pub records: Vec<Theorem1Trial>,
}

/// Sends random separable two-qubit states through random local channels and
/// checks that no inequality is violated afterwards.
pub fn theorem1_probe(seed: u64, trials: usize, cfg: &OptimizerConfig) -> Result<Theorem1Report> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let records: Vec<Theorem1Trial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, t as u64);
            let terms = rng.random_range(1..=16);
            let s = random_separable(rng.random(), terms, 2, 2)?;
            let (kind, paired) = match t % 4 {
                0 => (ChannelKind::Diagonal, false),
                1 => (ChannelKind::MixedUnitary, false),
                2 => (ChannelKind::General, false),
                _ => (ChannelKind::MixedUnitary, true),
            };
            let channel = random_local_pair(kind, 2, paired, &mut rng)?;
            let out = apply_channel(&s, &channel)?;
            let z = LocalBasis::z();
            let mut margin_fixed = f64::NEG_INFINITY;
            let mut margin_optimized = f64::NEG_INFINITY;
            for ineq in InequalityKind::ALL {
                for st in std::iter::once(&out.total).chain(out.branches.iter().map(|b| &b.state)) {
                    let r = evaluate(st, ineq, &z, &z)?;
                    margin_fixed = margin_fixed.max(r.lhs - r.bound);
                }
                let r = max_violation(&out.total, ineq, cfg)?;
                margin_optimized = margin_optimized.max(r.lhs - r.bound);
            }
            Ok(Theorem1Trial {
                trial: t,
                channel_kind: kind.name().into(),
                paired,
                margin_fixed,
                margin_optimized,
                violated: margin_fixed > VIOLATION_SLACK || margin_optimized > VIOLATION_SLACK,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Theorem1Report {
        trials,
        violations_fixed: records.iter().filter(|r| r.margin_fixed > VIOLATION_SLACK).count(),
        violations_optimized: records.iter().filter(|r| r.margin_optimized > VIOLATION_SLACK).count(),
        records,
    })
}
