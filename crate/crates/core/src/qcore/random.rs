use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{c, ComplexMatrix, DensityMatrix, C64};

/// Deterministic generator for `(seed, stream)`. Distinct streams never overlap,
/// so parallel workers can partition one seed by stream index.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matrix of i.i.d. standard complex normals (`E|z|^2 = 1`).
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(s * re, s * im)
    })
}

/// Hilbert-Schmidt random state `G G^dagger / Tr(G G^dagger)`.
pub fn random_density_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(d, d, rng);
    let w = &g * g.adjoint();
    let tr = w.trace().re;
    let mut m = w.unscale(tr);
    // exact Hermiticity; rounding in the product can leave 1e-17 asymmetry
    for i in 0..d {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..d {
            m[(j, i)] = m[(i, j)].conj();
        }
    }
    DensityMatrix::from_matrix_unchecked(m)
}

pub fn random_density(d: usize, seed: u64) -> DensityMatrix {
    random_density_with(d, &mut rng_for(seed, 0))
}

/// Haar unitary from the QR decomposition of a Ginibre matrix, with the
/// phases of `diag(R)` moved into `Q`.
pub fn haar_unitary_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let qr = ginibre(d, d, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            u[(i, j)] *= phase;
        }
    }
    u
}

pub fn haar_unitary(d: usize, seed: u64) -> ComplexMatrix {
    haar_unitary_with(d, &mut rng_for(seed, 0))
}
