//! Dense complex linear algebra and the state types every other module
//! builds on.
//!
//! Composite indices are A-major: the product ket `|a>|b>` of a
//! `dA x dB` system lives at row `a * dB + b`.

mod io;
mod random;

pub use io::{read_basis, read_state, write_basis, write_bipartite, write_single, LoadedState};
pub use random::{ginibre, haar_unitary, haar_unitary_with, random_density, random_density_with, rng_for};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

/// Hermiticity tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Unit-trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted as non-negative.
pub const PSD_TOL: f64 = 1e-9;
/// Orthonormality tolerance for bases.
pub const UNITARY_TOL: f64 = 1e-10;
/// Unit-norm tolerance for kets.
pub const NORM_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn check_finite(m: &ComplexMatrix) -> Result<()> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            let z = m[(row, col)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

/// Largest entrywise deviation `max |M - M^dagger|`.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest entrywise deviation of `U^dagger U` from the identity.
pub fn unitary_deviation(u: &ComplexMatrix) -> f64 {
    let gram = u.adjoint() * u;
    let n = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((gram[(i, j)] - target).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let herm = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// `exp(i H)` for Hermitian `H`, computed from its eigendecomposition.
pub fn exp_i_hermitian(h: &ComplexMatrix) -> ComplexMatrix {
    let herm = (h + h.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm);
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, l)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// Kronecker product; row `i * B.rows + k`, column `j * B.cols + l` holds `A[i,j] B[k,l]`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// A normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket(DVector<C64>);

impl Ket {
    pub fn new(amps: DVector<C64>) -> Result<Self> {
        for (i, z) in amps.iter().enumerate() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { row: i, col: 0 });
            }
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self(amps))
    }

    /// Rescales `amps` to unit norm. Fails on the zero vector.
    pub fn normalized(amps: DVector<C64>) -> Result<Self> {
        let norm = amps.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized(norm));
        }
        Self::new(amps.unscale(norm))
    }

    pub fn from_slice(amps: &[C64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amps))
    }

    /// Computational basis ket `|index>`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amps(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket(self.0.kronecker(&other.0))
    }

    pub fn inner(&self, other: &Ket) -> C64 {
        self.0.dotc(&other.0)
    }

    /// `|psi><psi|`
    pub fn projector(&self) -> ComplexMatrix {
        &self.0 * self.0.adjoint()
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates `m` and rejects anything outside tolerance.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_repair(m, false)
    }

    /// Eigenvalues down to `-PSD_TOL` are tolerated. With `repair` they are
    /// clipped to zero and the trace renormalized; anything further out is
    /// rejected either way.
    pub fn with_repair(m: ComplexMatrix, repair: bool) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("empty density matrix".into()));
        }
        check_finite(&m)?;
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::TraceNotOne(tr.re));
        }
        let herm = (&m + m.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(herm);
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        if min >= 0.0 || !repair {
            return Ok(Self(m));
        }
        let clipped = eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0));
        let total: f64 = clipped.iter().map(|z| z.re).sum();
        let rebuilt = &eig.eigenvectors
            * DMatrix::from_diagonal(&clipped.unscale(total))
            * eig.eigenvectors.adjoint();
        Ok(Self(rebuilt))
    }

    /// Skips validation; only for matrices that are states by construction.
    pub(crate) fn from_matrix_unchecked(m: ComplexMatrix) -> Self {
        debug_assert!(hermitian_deviation(&m) <= 1e-8);
        Self(m)
    }

    pub fn from_ket(psi: &Ket) -> Self {
        Self(psi.projector())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim, dim).unscale(dim as f64))
    }

    /// Convex combination of same-dimension states.
    pub fn mixture(components: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let dim = first.1.dim();
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for (w, rho) in components {
            if rho.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: rho.dim() });
            }
            if *w < 0.0 {
                return Err(Error::InvalidParameter(format!("negative weight {w}")));
            }
            acc += rho.matrix().scale(*w);
        }
        Self::new(acc)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.0)
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    /// `U rho U^dagger`
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Self {
        Self(u * &self.0 * u.adjoint())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// A density matrix on `C^dA (x) C^dB`.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteState {
    dim_a: usize,
    dim_b: usize,
    rho: DensityMatrix,
}

impl BipartiteState {
    pub fn new(rho: DensityMatrix, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::InvalidParameter("subsystem dimensions must be positive".into()));
        }
        if rho.dim() != dim_a * dim_b {
            return Err(Error::DimensionMismatch { expected: dim_a * dim_b, got: rho.dim() });
        }
        Ok(Self { dim_a, dim_b, rho })
    }

    pub fn from_ket(psi: &Ket, dim_a: usize, dim_b: usize) -> Result<Self> {
        Self::new(DensityMatrix::from_ket(psi), dim_a, dim_b)
    }

    pub fn product(rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Self {
        Self {
            dim_a: rho_a.dim(),
            dim_b: rho_b.dim(),
            rho: DensityMatrix(tensor(rho_a.matrix(), rho_b.matrix())),
        }
    }

    pub fn maximally_mixed(dim_a: usize, dim_b: usize) -> Self {
        Self { dim_a, dim_b, rho: DensityMatrix::maximally_mixed(dim_a * dim_b) }
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    pub fn rho(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.rho.matrix()
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        a * self.dim_b + b
    }

    /// `<a b| rho |a' b'>` in the computational basis.
    pub fn element(&self, a: usize, b: usize, a_prime: usize, b_prime: usize) -> C64 {
        self.rho.get(self.index(a, b), self.index(a_prime, b_prime))
    }

    pub fn partial_trace(&self, keep: Subsystem) -> DensityMatrix {
        let (da, db) = (self.dim_a, self.dim_b);
        let m = self.matrix();
        match keep {
            Subsystem::A => DensityMatrix(ComplexMatrix::from_fn(da, da, |a, a2| {
                (0..db).map(|b| m[(a * db + b, a2 * db + b)]).sum()
            })),
            Subsystem::B => DensityMatrix(ComplexMatrix::from_fn(db, db, |b, b2| {
                (0..da).map(|a| m[(a * db + b, a * db + b2)]).sum()
            })),
        }
    }

    /// `(U_A (x) U_B) rho (U_A (x) U_B)^dagger`
    pub fn local_unitary(&self, u_a: &ComplexMatrix, u_b: &ComplexMatrix) -> Result<Self> {
        if u_a.nrows() != self.dim_a || u_b.nrows() != self.dim_b {
            return Err(Error::DimensionMismatch {
                expected: self.dim_a * self.dim_b,
                got: u_a.nrows() * u_b.nrows(),
            });
        }
        let u = tensor(u_a, u_b);
        Ok(Self { dim_a: self.dim_a, dim_b: self.dim_b, rho: self.rho.conjugate_by(&u) })
    }
}

/// Free-function form of [`BipartiteState::partial_trace`].
pub fn partial_trace(s: &BipartiteState, keep: Subsystem) -> DensityMatrix {
    s.partial_trace(keep)
}

/// `<bra| rho |ket>` as an exact complex number.
pub fn matrix_element(rho: &DensityMatrix, bra: &Ket, ket: &Ket) -> Result<C64> {
    for k in [bra, ket] {
        if k.dim() != rho.dim() {
            return Err(Error::DimensionMismatch { expected: rho.dim(), got: k.dim() });
        }
    }
    Ok(bra.amps().dotc(&(rho.matrix() * ket.amps())))
}

/// `<psi| rho |psi>`, clamped into `[0, 1]` when it strays by at most 1e-12.
pub fn fidelity_with_pure(rho: &DensityMatrix, psi: &Ket) -> Result<f64> {
    let f = matrix_element(rho, psi, psi)?.re;
    Ok(if (-1e-12..0.0).contains(&f) {
        0.0
    } else if f > 1.0 && f <= 1.0 + 1e-12 {
        1.0
    } else {
        f
    })
}

/// Orthonormal basis of one subsystem, stored as the columns of a unitary.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalBasis(ComplexMatrix);

impl LocalBasis {
    pub fn new(u: ComplexMatrix) -> Result<Self> {
        if u.nrows() != u.ncols() {
            return Err(Error::DimensionMismatch { expected: u.nrows(), got: u.ncols() });
        }
        check_finite(&u)?;
        let dev = unitary_deviation(&u);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Self(u))
    }

    pub fn from_vectors(vectors: &[Ket]) -> Result<Self> {
        let dim = vectors.len();
        for v in vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.dim() });
            }
        }
        Self::new(ComplexMatrix::from_fn(dim, dim, |r, col| vectors[col].amps()[r]))
    }

    pub fn computational(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim, dim))
    }

    /// Pauli-Z eigenbasis `{|0>, |1>}`.
    pub fn z() -> Self {
        Self::computational(2)
    }

    /// Pauli-X eigenbasis `{|+>, |->}`.
    pub fn x() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self(ComplexMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]))
    }

    /// Pauli-Y eigenbasis `{|+i>, |-i>}`.
    pub fn y() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self(ComplexMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(0.0, s), c(0.0, -s)]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn vector(&self, index: usize) -> Result<Ket> {
        if index >= self.dim() {
            return Err(Error::IndexOutOfRange { index, dim: self.dim() });
        }
        Ok(Ket(self.0.column(index).into_owned()))
    }

    /// Same basis after applying `u` to every vector.
    pub fn rotated(&self, u: &ComplexMatrix) -> Result<Self> {
        Self::new(u * &self.0)
    }

    pub(crate) fn from_unitary_unchecked(u: ComplexMatrix) -> Self {
        Self(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sx() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
    }

    fn phi_plus() -> Ket {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Ket::from_slice(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]).unwrap()
    }

    #[test]
    fn identity_tensor_identity() {
        let i2 = ComplexMatrix::identity(2, 2);
        assert_eq!(tensor(&i2, &i2), ComplexMatrix::identity(4, 4));
    }

    #[test]
    fn tensor_of_projectors_lands_on_composite_index_one() {
        let p0 = Ket::basis(2, 0).unwrap().projector();
        let p1 = Ket::basis(2, 1).unwrap().projector();
        let t = tensor(&p0, &p1);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == 1 && j == 1 { 1.0 } else { 0.0 };
                assert_eq!(t[(i, j)], c(expected, 0.0));
            }
        }
    }

    #[test]
    fn sigma_x_pair_flips_00_to_11() {
        let xx = tensor(&sx(), &sx());
        let out = xx * Ket::basis(4, 0).unwrap().amps();
        assert_eq!(out, Ket::basis(4, 3).unwrap().amps().clone());
    }

    #[test]
    fn bell_reduces_to_maximally_mixed() {
        let s = BipartiteState::from_ket(&phi_plus(), 2, 2).unwrap();
        let half = DensityMatrix::maximally_mixed(2);
        for keep in [Subsystem::A, Subsystem::B] {
            let r = s.partial_trace(keep);
            assert!((r.matrix() - half.matrix()).norm() < 1e-15);
        }
    }

    #[test]
    fn werner_half_schmidt_reduces_to_maximally_mixed_on_b() {
        // p |phi+><phi+| + (1-p) I/4, traced over A by hand gives I/2 for every p.
        for p in [0.0, 0.3, 0.8, 1.0] {
            let m = phi_plus().projector().scale(p)
                + ComplexMatrix::identity(4, 4).scale((1.0 - p) / 4.0);
            let s = BipartiteState::new(DensityMatrix::new(m).unwrap(), 2, 2).unwrap();
            let r = s.partial_trace(Subsystem::B);
            assert!((r.get(0, 0).re - 0.5).abs() < 1e-15);
            assert!((r.get(1, 1).re - 0.5).abs() < 1e-15);
            assert!(r.get(0, 1).norm() < 1e-15);
        }
    }

    #[test]
    fn product_trace_recovers_factor() {
        let ra = random_density(2, 4);
        let rb = random_density(3, 5);
        let s = BipartiteState::product(&ra, &rb);
        assert!((s.partial_trace(Subsystem::A).matrix() - ra.matrix()).norm() < 1e-14);
        assert!((s.partial_trace(Subsystem::B).matrix() - rb.matrix()).norm() < 1e-14);
    }

    #[test]
    fn matrix_elements_of_bell_and_mixed() {
        let rho = DensityMatrix::from_ket(&phi_plus());
        let k = |i| Ket::basis(4, i).unwrap();
        assert!((matrix_element(&rho, &k(0), &k(3)).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        assert_eq!(matrix_element(&rho, &k(1), &k(2)).unwrap(), c(0.0, 0.0));
        let mixed = DensityMatrix::maximally_mixed(4);
        assert_eq!(matrix_element(&mixed, &k(0), &k(3)).unwrap(), c(0.0, 0.0));
        assert!(matches!(
            matrix_element(&mixed, &Ket::basis(2, 0).unwrap(), &k(0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fidelity_examples() {
        let psi = phi_plus();
        let rho = DensityMatrix::from_ket(&psi);
        assert!((fidelity_with_pure(&rho, &psi).unwrap() - 1.0).abs() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!((fidelity_with_pure(&mixed, &psi).unwrap() - 0.25).abs() < 1e-15);
        for p in [0.0, 0.25, 0.6, 1.0] {
            let m = psi.projector().scale(p) + ComplexMatrix::identity(4, 4).scale((1.0 - p) / 4.0);
            let f = fidelity_with_pure(&DensityMatrix::new(m).unwrap(), &psi).unwrap();
            assert!((f - (1.0 + 3.0 * p) / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constructor_rejections() {
        let not_herm = ComplexMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(not_herm), Err(Error::NotHermitian(_))));
        let bad_trace = ComplexMatrix::identity(2, 2);
        assert!(matches!(DensityMatrix::new(bad_trace), Err(Error::TraceNotOne(_))));
        let negative = ComplexMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(negative), Err(Error::NotPositive(_))));
        let nan = ComplexMatrix::from_row_slice(2, 2, &[c(f64::NAN, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(nan), Err(Error::NonFinite { row: 0, col: 0 })));
    }

    #[test]
    fn repair_clips_tiny_negative_eigenvalues_only() {
        let eps = 5e-10;
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(1.0 + eps, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-eps, 0.0)]);
        let kept = DensityMatrix::new(m.clone()).unwrap();
        assert!(kept.eigenvalues()[0] < 0.0);
        let fixed = DensityMatrix::with_repair(m, true).unwrap();
        assert!(fixed.eigenvalues()[0] >= 0.0);
        assert!((fixed.trace() - 1.0).abs() < 1e-15);
        let far = ComplexMatrix::from_row_slice(2, 2, &[c(1.01, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.01, 0.0)]);
        assert!(DensityMatrix::with_repair(far, true).is_err());
    }

    #[test]
    fn named_bases_are_orthonormal() {
        for b in [LocalBasis::z(), LocalBasis::x(), LocalBasis::y()] {
            assert!(unitary_deviation(b.unitary()) < 1e-15);
            assert!(LocalBasis::new(b.unitary().clone()).is_ok());
        }
        let skew = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.1, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(LocalBasis::new(skew), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = ComplexMatrix::zeros(3, 3);
        assert!((exp_i_hermitian(&z) - ComplexMatrix::identity(3, 3)).norm() < 1e-15);
    }
}
