//! Kraus channels acting locally on one side of a bipartite state, or
//! jointly through correlated product operators `r_k^A (x) r_k^B`.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::dirichlet_uniform;
use crate::qcore::{c, haar_unitary_with, hermitian_eigenvalues, BipartiteState, ComplexMatrix, DensityMatrix, C64};

/// Allowed excess of the largest eigenvalue of `sum K^dagger K` over 1.
pub const COMPLETENESS_TOL: f64 = 1e-10;

/// Branches lighter than this are dropped from [`ChannelOutput`].
pub const MIN_BRANCH_WEIGHT: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    A,
    B,
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Diagonal,
    MixedUnitary,
    General,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Diagonal => "diagonal",
            Self::MixedUnitary => "mixed_unitary",
            Self::General => "general",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Self::Diagonal),
            "mixed_unitary" => Ok(Self::MixedUnitary),
            "general" => Ok(Self::General),
            other => Err(Error::InvalidParameter(format!("unknown channel kind `{other}`"))),
        }
    }
}

/// Trace-non-increasing Kraus set: `sum K^dagger K <= I`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    side: Side,
    ops: Vec<ComplexMatrix>,
    kind: ChannelKind,
}

fn is_diagonal(m: &ComplexMatrix) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == c(0.0, 0.0)))
}

/// Largest eigenvalue of `sum K^dagger K` minus one.
pub fn completeness_excess(ops: &[ComplexMatrix]) -> f64 {
    let d = ops[0].ncols();
    let mut sum = ComplexMatrix::zeros(d, d);
    for k in ops {
        sum += k.adjoint() * k;
    }
    hermitian_eigenvalues(&sum).last().copied().unwrap_or(0.0) - 1.0
}

impl KrausChannel {
    pub fn new(side: Side, ops: Vec<ComplexMatrix>, kind: ChannelKind) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::InvalidParameter("a channel needs at least one operator".into()))?;
        let d = first.nrows();
        for k in &ops {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: k.nrows().max(k.ncols()) });
            }
            if k.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::InvalidParameter("non-finite Kraus entry".into()));
            }
        }
        if kind == ChannelKind::Diagonal && !ops.iter().all(is_diagonal) {
            return Err(Error::InvalidParameter("diagonal channel with off-diagonal entries".into()));
        }
        let excess = completeness_excess(&ops);
        if excess > COMPLETENESS_TOL {
            return Err(Error::Completeness(excess));
        }
        Ok(Self { side, ops, kind })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.ops[0].nrows()
    }

    pub fn identity(side: Side, d: usize) -> Self {
        Self { side, ops: vec![ComplexMatrix::identity(d, d)], kind: ChannelKind::Diagonal }
    }

    /// Qubit amplitude damping with decay probability `gamma`.
    pub fn amplitude_damping(side: Side, gamma: f64) -> Result<Self> {
        check_probability("gamma", gamma)?;
        let k0 = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - gamma).sqrt(), 0.0)]);
        let k1 = ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(gamma.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        Self::new(side, vec![k0, k1], ChannelKind::General)
    }

    /// Qubit phase damping: `diag(1, sqrt(1 - gamma))` and `diag(0, sqrt(gamma))`.
    pub fn phase_damping(side: Side, gamma: f64) -> Result<Self> {
        check_probability("gamma", gamma)?;
        let k0 = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c((1.0 - gamma).sqrt(), 0.0)]));
        let k1 = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0, 0.0), c(gamma.sqrt(), 0.0)]));
        Self::new(side, vec![k0, k1], ChannelKind::Diagonal)
    }

    /// Maps every state to `I/d`, using the `d^2` clock-and-shift unitaries.
    pub fn fully_depolarizing(side: Side, d: usize) -> Self {
        let omega = std::f64::consts::TAU / d as f64;
        let mut ops = Vec::with_capacity(d * d);
        for shift in 0..d {
            for clock in 0..d {
                let mut w = ComplexMatrix::zeros(d, d);
                for j in 0..d {
                    w[((j + shift) % d, j)] = C64::from_polar(1.0 / d as f64, omega * (clock * j) as f64);
                }
                ops.push(w);
            }
        }
        Self { side, ops, kind: ChannelKind::MixedUnitary }
    }

    /// `sqrt(q_k) U_k` with Dirichlet weights and Haar unitaries.
    pub fn random_mixed_unitary<R: Rng + ?Sized>(side: Side, d: usize, count: usize, rng: &mut R) -> Result<Self> {
        check_count(count)?;
        let q = dirichlet_uniform(count, rng);
        let ops = q.into_iter().map(|w| haar_unitary_with(d, rng).scale(w.sqrt())).collect();
        Self::new(side, ops, ChannelKind::MixedUnitary)
    }

    /// Diagonal operators with Gaussian entries, rescaled so that
    /// `sum_k |K_k[i, i]|^2 = 1` for every `i`.
    pub fn random_diagonal<R: Rng + ?Sized>(side: Side, d: usize, count: usize, rng: &mut R) -> Result<Self> {
        check_count(count)?;
        let mut diags: Vec<Vec<C64>> = (0..count)
            .map(|_| (0..d).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect())
            .collect();
        for i in 0..d {
            let norm = diags.iter().map(|v| v[i].norm_sqr()).sum::<f64>().sqrt();
            for v in &mut diags {
                v[i] /= norm;
            }
        }
        let ops = diags.into_iter().map(|v| ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(v))).collect();
        Self::new(side, ops, ChannelKind::Diagonal)
    }

    /// Blocks of a Haar-random isometry `C^d -> C^(d count)`: the first `d`
    /// columns of a Haar unitary of size `d count`.
    pub fn random_general<R: Rng + ?Sized>(side: Side, d: usize, count: usize, rng: &mut R) -> Result<Self> {
        check_count(count)?;
        let u = haar_unitary_with(d * count, rng);
        let ops = (0..count).map(|k| u.view((k * d, 0), (d, d)).into_owned()).collect();
        Self::new(side, ops, ChannelKind::General)
    }

    /// Correlated operators `r_k^A (x) r_k^B` sharing the index `k`, checked
    /// for completeness jointly rather than per side.
    pub fn paired(ops_a: &[ComplexMatrix], ops_b: &[ComplexMatrix], kind: ChannelKind) -> Result<Self> {
        if ops_a.len() != ops_b.len() {
            return Err(Error::InvalidParameter(format!(
                "paired channel needs equal operator counts, got {} and {}",
                ops_a.len(),
                ops_b.len()
            )));
        }
        let ops = ops_a.iter().zip(ops_b).map(|(a, b)| a.kronecker(b)).collect();
        Self::new(Side::Joint, ops, kind)
    }

    /// `sqrt(q_k) U_k (x) V_k`, a paired mixed-unitary channel.
    pub fn random_paired_mixed_unitary<R: Rng + ?Sized>(d: usize, count: usize, rng: &mut R) -> Result<Self> {
        check_count(count)?;
        let q = dirichlet_uniform(count, rng);
        let ops_a: Vec<ComplexMatrix> = q.iter().map(|w| haar_unitary_with(d, rng).scale(w.sqrt())).collect();
        let ops_b: Vec<ComplexMatrix> = (0..count).map(|_| haar_unitary_with(d, rng)).collect();
        Self::paired(&ops_a, &ops_b, ChannelKind::MixedUnitary)
    }

    /// All pairs `K_i^A (x) K_j^B` of two one-sided channels.
    pub fn product(a: &KrausChannel, b: &KrausChannel) -> Self {
        let mut ops = Vec::with_capacity(a.ops.len() * b.ops.len());
        for ka in &a.ops {
            for kb in &b.ops {
                ops.push(ka.kronecker(kb));
            }
        }
        let kind = if a.kind == b.kind { a.kind } else { ChannelKind::General };
        Self { side: Side::Joint, ops, kind }
    }

    /// Operators on the full `dA dB` space.
    fn joint_ops(&self, dim_a: usize, dim_b: usize) -> Result<Vec<ComplexMatrix>> {
        let expect = match self.side {
            Side::A => dim_a,
            Side::B => dim_b,
            Side::Joint => dim_a * dim_b,
        };
        if self.dim() != expect {
            return Err(Error::DimensionMismatch { expected: expect, got: self.dim() });
        }
        Ok(match self.side {
            Side::A => self.ops.iter().map(|k| k.kronecker(&ComplexMatrix::identity(dim_b, dim_b))).collect(),
            Side::B => self.ops.iter().map(|k| ComplexMatrix::identity(dim_a, dim_a).kronecker(k)).collect(),
            Side::Joint => self.ops.clone(),
        })
    }
}

fn check_probability(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidParameter("operator count must be at least 1".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub weight: f64,
    pub state: BipartiteState,
    /// Unnormalized `K rho K^dagger`.
    pub unnormalized: ComplexMatrix,
}

#[derive(Clone, Debug)]
pub struct ChannelOutput {
    pub branches: Vec<Branch>,
    /// `sum_k p_k`; below 1 for trace-decreasing channels.
    pub kept_weight: f64,
    /// Branch mixture renormalized by `kept_weight`.
    pub total: BipartiteState,
}

fn branch_state(m: &ComplexMatrix, dim_a: usize, dim_b: usize) -> BipartiteState {
    let m = (m + m.adjoint()).scale(0.5);
    BipartiteState::new(DensityMatrix::from_matrix_unchecked(m), dim_a, dim_b).expect("dimensions match")
}

/// Applies `channel` and returns each branch `K_k rho K_k^dagger / p_k` with
/// its weight `p_k`, dropping branches lighter than [`MIN_BRANCH_WEIGHT`].
pub fn apply_channel(s: &BipartiteState, channel: &KrausChannel) -> Result<ChannelOutput> {
    let (da, db) = s.dims();
    let ops = channel.joint_ops(da, db)?;
    let rho = s.matrix();
    let mut branches = Vec::new();
    let mut sum = ComplexMatrix::zeros(da * db, da * db);
    let mut kept = 0.0;
    for k in &ops {
        let out = k * rho * k.adjoint();
        let p = out.trace().re;
        if p < MIN_BRANCH_WEIGHT {
            continue;
        }
        kept += p;
        sum += &out;
        branches.push(Branch { weight: p, state: branch_state(&out.unscale(p), da, db), unnormalized: out });
    }
    if branches.is_empty() {
        return Err(Error::InvalidParameter("every branch has vanishing weight".into()));
    }
    let total = branch_state(&sum.unscale(kept), da, db);
    Ok(ChannelOutput { branches, kept_weight: kept, total })
}

/// Applies one-sided channels to A and B: as the product channel over all
/// index pairs, or, with `paired`, as `r_k^A (x) r_k^B` with a shared index.
pub fn apply_local(s: &BipartiteState, chan_a: &KrausChannel, chan_b: &KrausChannel, paired: bool) -> Result<ChannelOutput> {
    let joint = if paired {
        KrausChannel::paired(chan_a.ops(), chan_b.ops(), if chan_a.kind == chan_b.kind { chan_a.kind } else { ChannelKind::General })?
    } else {
        KrausChannel::product(chan_a, chan_b)
    };
    apply_channel(s, &joint)
}
