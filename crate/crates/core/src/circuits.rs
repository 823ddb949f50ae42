//! Statevector simulation of small qubit registers with shot sampling, and
//! the two four-projector combinations that read off coherences from x- and
//! y-basis measurements.
//!
//! Qubit 0 is the most significant bit: outcome bitstrings read `q0 q1 ...`
//! and the amplitude of `|q0 q1>` sits at index `2 q0 + q1`, matching the
//! A-major convention of [`BipartiteState`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qcore::{c, rng_for, unitary_deviation, BipartiteState, ComplexMatrix, Ket, LocalBasis, C64, UNITARY_TOL};

pub const MAX_QUBITS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Y(usize),
    Z(usize),
    S(usize),
    Sdg(usize),
    /// Arbitrary single-qubit unitary, row-major 2x2.
    U(usize, ComplexMatrix),
    Cnot { control: usize, target: usize },
}

impl Gate {
    fn wires(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::Y(q) | Gate::Z(q) | Gate::S(q) | Gate::Sdg(q) | Gate::U(q, _) => vec![*q],
            Gate::Cnot { control, target } => vec![*control, *target],
        }
    }

    fn single_qubit_matrix(&self) -> Option<[[C64; 2]; 2]> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
        Some(match self {
            Gate::H(_) => [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]],
            Gate::X(_) => [[z, o], [o, z]],
            Gate::Y(_) => [[z, -i], [i, z]],
            Gate::Z(_) => [[o, z], [z, -o]],
            Gate::S(_) => [[o, z], [z, i]],
            Gate::Sdg(_) => [[o, z], [z, -i]],
            Gate::U(_, u) => [[u[(0, 0)], u[(0, 1)]], [u[(1, 0)], u[(1, 1)]]],
            Gate::Cnot { .. } => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    qubits: usize,
    ops: Vec<Gate>,
}

impl Circuit {
    pub fn new(qubits: usize) -> Result<Self> {
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(Error::InvalidParameter(format!("circuits hold 1..={MAX_QUBITS} qubits, got {qubits}")));
        }
        Ok(Self { qubits, ops: Vec::new() })
    }

    /// `H` on qubit 0 followed by `CNOT(0 -> 1)`, preparing `phi+`.
    pub fn bell_prep() -> Self {
        Self { qubits: 2, ops: vec![Gate::H(0), Gate::Cnot { control: 0, target: 1 }] }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn ops(&self) -> &[Gate] {
        &self.ops
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        let wires = gate.wires();
        for &w in &wires {
            if w >= self.qubits {
                return Err(Error::IndexOutOfRange { index: w, dim: self.qubits });
            }
        }
        if wires.len() == 2 && wires[0] == wires[1] {
            return Err(Error::EqualIndices(wires[0]));
        }
        if let Gate::U(_, u) = &gate {
            if u.nrows() != 2 || u.ncols() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: u.nrows().max(u.ncols()) });
            }
            let dev = unitary_deviation(u);
            if dev > UNITARY_TOL {
                return Err(Error::NotUnitary(dev));
            }
        }
        self.ops.push(gate);
        Ok(self)
    }

    pub fn with(mut self, gate: Gate) -> Result<Self> {
        self.push(gate)?;
        Ok(self)
    }
}

fn bit_of(index: usize, qubit: usize, qubits: usize) -> usize {
    (index >> (qubits - 1 - qubit)) & 1
}

/// Exact output state from `|0...0>`.
pub fn statevector(circuit: &Circuit) -> Ket {
    let n = circuit.qubits;
    let size = 1usize << n;
    let mut amps = vec![c(0.0, 0.0); size];
    amps[0] = c(1.0, 0.0);
    for gate in &circuit.ops {
        if let Gate::Cnot { control, target } = gate {
            let flip = 1usize << (n - 1 - target);
            for i in 0..size {
                if bit_of(i, *control, n) == 1 && bit_of(i, *target, n) == 0 {
                    amps.swap(i, i | flip);
                }
            }
            continue;
        }
        let m = gate.single_qubit_matrix().expect("single-qubit gate");
        let q = gate.wires()[0];
        let mask = 1usize << (n - 1 - q);
        for i in 0..size {
            if i & mask == 0 {
                let (a0, a1) = (amps[i], amps[i | mask]);
                amps[i] = m[0][0] * a0 + m[0][1] * a1;
                amps[i | mask] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }
    Ket::new(DVector::from_vec(amps)).expect("unitary gates preserve the norm")
}

/// Counts of computational-basis outcomes; every bitstring of the register
/// is present, including those never observed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShotRecord {
    pub shots: u64,
    pub counts: BTreeMap<String, u64>,
    pub seed: u64,
}

impl ShotRecord {
    pub fn count(&self, bits: &str) -> u64 {
        self.counts.get(bits).copied().unwrap_or(0)
    }

    pub fn fraction(&self, bits: &str) -> f64 {
        self.count(bits) as f64 / self.shots as f64
    }
}

fn check_noise(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("noise must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// Outcome probabilities after depolarizing the whole register with weight `lambda`.
pub fn outcome_probabilities(circuit: &Circuit, lambda: f64) -> Result<Vec<f64>> {
    check_noise(lambda)?;
    let psi = statevector(circuit);
    let uniform = 1.0 / psi.dim() as f64;
    Ok(psi.amps().iter().map(|z| (1.0 - lambda) * z.norm_sqr() + lambda * uniform).collect())
}

fn sample_with<R: Rng + ?Sized>(circuit: &Circuit, shots: u64, seed: u64, lambda: f64, rng: &mut R) -> Result<ShotRecord> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be at least 1".into()));
    }
    let probs = outcome_probabilities(circuit, lambda)?;
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut tally = vec![0u64; probs.len()];
    for _ in 0..shots {
        tally[dist.sample(rng)] += 1;
    }
    let n = circuit.qubits;
    let counts = tally.into_iter().enumerate().map(|(i, k)| (format!("{i:0n$b}"), k)).collect();
    Ok(ShotRecord { shots, counts, seed })
}

/// Samples `shots` computational-basis outcomes, with optional depolarizing
/// noise `(1 - lambda) rho + lambda I / 2^n` before measurement.
pub fn sample(circuit: &Circuit, shots: u64, seed: u64, noise: Option<f64>) -> Result<ShotRecord> {
    let mut rng = rng_for(seed, 0);
    sample_with(circuit, shots, seed, noise.unwrap_or(0.0), &mut rng)
}

/// Which coherence a four-projector combination reads off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    /// `P(x+x+) + P(x-x-) - P(y+y+) - P(y-y-) = 2 Re<i^a j^a| rho |i^a' j^a'>`
    Aligned,
    /// `P(x+x+) + P(x-x-) + P(y+y+) + P(y-y-) - 1`, which on two qubits is
    /// `2 Re<i^a j^a'| rho |i^a' j^a>`
    Swapped,
}

impl Combination {
    pub const ALL: [Combination; 2] = [Self::Aligned, Self::Swapped];

    pub fn name(self) -> &'static str {
        match self {
            Self::Aligned => "aligned",
            Self::Swapped => "swapped",
        }
    }

    fn real_part(self, fx: f64, fy: f64) -> f64 {
        match self {
            Self::Aligned => fx - fy,
            Self::Swapped => fx + fy - 1.0,
        }
    }

    /// Twice the imaginary part of the target element from the mixed runs,
    /// `fxy` and `fyx` being the equal-outcome fractions of the x-on-A,
    /// y-on-B run and its mirror.
    fn imaginary_part(self, fxy: f64, fyx: f64) -> f64 {
        match self {
            Self::Aligned => 1.0 - fxy - fyx,
            Self::Swapped => fxy - fyx,
        }
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(Self::Aligned),
            "swapped" => Ok(Self::Swapped),
            other => Err(Error::InvalidParameter(format!("unknown combination `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    X,
    Y,
}

/// `(|v^a> + s|v^a'>)/sqrt(2)` with `s = +-1` on the x axis and `+-i` on y.
fn axis_ket(basis: &LocalBasis, a: usize, a_prime: usize, axis: Axis, plus: bool) -> Result<Ket> {
    let sign = if plus { 1.0 } else { -1.0 };
    let phase = match axis {
        Axis::X => c(sign, 0.0),
        Axis::Y => c(0.0, sign),
    };
    let v = basis.vector(a)?.amps() + basis.vector(a_prime)?.amps() * phase;
    Ket::normalized(v)
}

/// Probability that both sides land on the same sign when A measures along
/// `axis_a` and B along `axis_b`.
fn equal_sign_probability(
    s: &BipartiteState,
    basis_a: &LocalBasis,
    basis_b: &LocalBasis,
    (a, a_prime): (usize, usize),
    axis_a: Axis,
    axis_b: Axis,
) -> Result<f64> {
    let mut total = 0.0;
    for plus in [true, false] {
        let ka = axis_ket(basis_a, a, a_prime, axis_a, plus)?;
        let kb = axis_ket(basis_b, a, a_prime, axis_b, plus)?;
        total += crate::qcore::matrix_element(s.rho(), &ka.tensor(&kb), &ka.tensor(&kb))?.re;
    }
    Ok(total)
}

fn check_pair(s: &BipartiteState, basis_a: &LocalBasis, basis_b: &LocalBasis, a: usize, a_prime: usize) -> Result<()> {
    if basis_a.dim() != s.dim_a() {
        return Err(Error::DimensionMismatch { expected: s.dim_a(), got: basis_a.dim() });
    }
    if basis_b.dim() != s.dim_b() {
        return Err(Error::DimensionMismatch { expected: s.dim_b(), got: basis_b.dim() });
    }
    let dim = s.dim_a().min(s.dim_b());
    for index in [a, a_prime] {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
    }
    if a == a_prime {
        return Err(Error::EqualIndices(a));
    }
    Ok(())
}

/// The four-projector combination evaluated exactly on `s`, with `|x+->`
/// and `|y+->` built from basis vectors `a` and `a'` on each side.
pub fn combo_identity(
    s: &BipartiteState,
    basis_a: &LocalBasis,
    basis_b: &LocalBasis,
    a: usize,
    a_prime: usize,
    which: Combination,
) -> Result<f64> {
    check_pair(s, basis_a, basis_b, a, a_prime)?;
    let fx = equal_sign_probability(s, basis_a, basis_b, (a, a_prime), Axis::X, Axis::X)?;
    let fy = equal_sign_probability(s, basis_a, basis_b, (a, a_prime), Axis::Y, Axis::Y)?;
    Ok(which.real_part(fx, fy))
}

/// Twice the modulus of the element `which` targets, assembled exactly from
/// the same-axis and mixed-axis runs.
pub fn combo_magnitude(
    s: &BipartiteState,
    basis_a: &LocalBasis,
    basis_b: &LocalBasis,
    a: usize,
    a_prime: usize,
    which: Combination,
) -> Result<f64> {
    check_pair(s, basis_a, basis_b, a, a_prime)?;
    let pair = (a, a_prime);
    let fx = equal_sign_probability(s, basis_a, basis_b, pair, Axis::X, Axis::X)?;
    let fy = equal_sign_probability(s, basis_a, basis_b, pair, Axis::Y, Axis::Y)?;
    let fxy = equal_sign_probability(s, basis_a, basis_b, pair, Axis::X, Axis::Y)?;
    let fyx = equal_sign_probability(s, basis_a, basis_b, pair, Axis::Y, Axis::X)?;
    Ok(which.real_part(fx, fy).hypot(which.imaginary_part(fxy, fyx)))
}

/// One measured run of the protocol: the detector basis on each side and
/// the resulting counts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasisRun {
    pub basis_run: String,
    #[serde(flatten)]
    pub record: ShotRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComboEstimate {
    pub which: Combination,
    pub value: f64,
    pub stderr: f64,
    pub runs: Vec<BasisRun>,
}

fn rotate_for(circuit: &mut Circuit, qubit: usize, axis: Axis) {
    if axis == Axis::Y {
        circuit.push(Gate::Sdg(qubit)).expect("qubit in range");
    }
    circuit.push(Gate::H(qubit)).expect("qubit in range");
}

fn run_label(axis_a: Axis, axis_b: Axis) -> &'static str {
    match (axis_a, axis_b) {
        (Axis::X, Axis::X) => "x",
        (Axis::Y, Axis::Y) => "y",
        (Axis::X, Axis::Y) => "xy",
        (Axis::Y, Axis::X) => "yx",
    }
}

fn stream_for(axis_a: Axis, axis_b: Axis) -> u64 {
    match (axis_a, axis_b) {
        (Axis::X, Axis::X) => 1,
        (Axis::Y, Axis::Y) => 2,
        (Axis::X, Axis::Y) => 3,
        (Axis::Y, Axis::X) => 4,
    }
}

fn measured_run(shots: u64, seed: u64, lambda: f64, axis_a: Axis, axis_b: Axis) -> Result<(f64, f64, BasisRun)> {
    let mut circuit = Circuit::bell_prep();
    rotate_for(&mut circuit, 0, axis_a);
    rotate_for(&mut circuit, 1, axis_b);
    let mut rng = rng_for(seed, stream_for(axis_a, axis_b));
    let record = sample_with(&circuit, shots, seed, lambda, &mut rng)?;
    let f = record.fraction("00") + record.fraction("11");
    let var = f * (1.0 - f) / shots as f64;
    Ok((f, var, BasisRun { basis_run: run_label(axis_a, axis_b).into(), record }))
}

/// Runs the Bell-preparation circuit with x-basis detectors (`H` on each
/// qubit) and y-basis detectors (`S^dagger` then `H`), and combines the
/// equal-outcome fractions. The standard error propagates the binomial
/// variance of both runs.
pub fn estimate_combo(shots: u64, seed: u64, lambda: f64, which: Combination) -> Result<ComboEstimate> {
    check_noise(lambda)?;
    let (fx, vx, run_x) = measured_run(shots, seed, lambda, Axis::X, Axis::X)?;
    let (fy, vy, run_y) = measured_run(shots, seed, lambda, Axis::Y, Axis::Y)?;
    Ok(ComboEstimate {
        which,
        value: which.real_part(fx, fy),
        stderr: (vx + vy).sqrt(),
        runs: vec![run_x, run_y],
    })
}

/// Like [`estimate_combo`] but adds the two mixed-axis runs and reports
/// twice the modulus of the target element rather than twice its real part.
pub fn estimate_magnitude(shots: u64, seed: u64, lambda: f64, which: Combination) -> Result<ComboEstimate> {
    check_noise(lambda)?;
    let (fx, vx, run_x) = measured_run(shots, seed, lambda, Axis::X, Axis::X)?;
    let (fy, vy, run_y) = measured_run(shots, seed, lambda, Axis::Y, Axis::Y)?;
    let (fxy, vxy, run_xy) = measured_run(shots, seed, lambda, Axis::X, Axis::Y)?;
    let (fyx, vyx, run_yx) = measured_run(shots, seed, lambda, Axis::Y, Axis::X)?;
    let re = which.real_part(fx, fy);
    let im = which.imaginary_part(fxy, fyx);
    let value = re.hypot(im);
    let (var_re, var_im) = (vx + vy, vxy + vyx);
    let stderr = if value > 0.0 {
        ((re / value).powi(2) * var_re + (im / value).powi(2) * var_im).sqrt()
    } else {
        (var_re + var_im).sqrt()
    };
    Ok(ComboEstimate { which, value, stderr, runs: vec![run_x, run_y, run_xy, run_yx] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{bell, BellKind};
    use crate::qcore::{haar_unitary, random_density, DensityMatrix};

    fn close_kets(u: &Ket, v: &Ket) -> bool {
        (u.amps() - v.amps()).norm() < 1e-12
    }

    #[test]
    fn bell_prep_gives_phi_plus() {
        assert!(close_kets(&statevector(&Circuit::bell_prep()), &bell(BellKind::PhiPlus)));
    }

    #[test]
    fn empty_circuit_stays_in_ground_state() {
        let psi = statevector(&Circuit::new(2).unwrap());
        assert!(close_kets(&psi, &Ket::basis(4, 0).unwrap()));
    }

    #[test]
    fn xx_leaves_phi_plus_invariant() {
        let c = Circuit::bell_prep().with(Gate::X(0)).unwrap().with(Gate::X(1)).unwrap();
        assert!(close_kets(&statevector(&c), &bell(BellKind::PhiPlus)));
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let c = Circuit::new(3).unwrap().with(Gate::X(0)).unwrap();
        assert!(close_kets(&statevector(&c), &Ket::basis(8, 4).unwrap()));
        let c = Circuit::new(3).unwrap().with(Gate::X(2)).unwrap().with(Gate::Cnot { control: 2, target: 1 }).unwrap();
        assert!(close_kets(&statevector(&c), &Ket::basis(8, 3).unwrap()));
    }

    #[test]
    fn named_gates_compose_as_expected() {
        // S S = Z, S Sdg = 1, H Z H = X, and a U gate equal to Y acts like Y.
        let plus = |extra: Vec<Gate>| {
            let mut c = Circuit::new(1).unwrap().with(Gate::H(0)).unwrap();
            for g in extra {
                c.push(g).unwrap();
            }
            statevector(&c)
        };
        assert!(close_kets(&plus(vec![Gate::S(0), Gate::S(0)]), &plus(vec![Gate::Z(0)])));
        assert!(close_kets(&plus(vec![Gate::S(0), Gate::Sdg(0)]), &plus(vec![])));
        let one = statevector(&Circuit::new(1).unwrap().with(Gate::X(0)).unwrap());
        let hzh = statevector(&Circuit::new(1).unwrap().with(Gate::H(0)).unwrap().with(Gate::Z(0)).unwrap().with(Gate::H(0)).unwrap());
        assert!(close_kets(&one, &hzh));
        let y = ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        assert!(close_kets(&plus(vec![Gate::U(0, y)]), &plus(vec![Gate::Y(0)])));
    }

    #[test]
    fn rejects_bad_circuits() {
        assert!(Circuit::new(0).is_err());
        assert!(Circuit::new(5).is_err());
        let mut circ = Circuit::new(2).unwrap();
        assert!(matches!(circ.push(Gate::H(2)), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(circ.push(Gate::Cnot { control: 1, target: 1 }), Err(Error::EqualIndices(1))));
        let bad = ComplexMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(circ.push(Gate::U(0, bad)), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn bell_sampling_stays_on_correlated_outcomes() {
        let rec = sample(&Circuit::bell_prep(), 8192, 3, None).unwrap();
        assert_eq!(rec.count("01") + rec.count("10"), 0);
        assert_eq!(rec.count("00") + rec.count("11"), 8192);
        let band = 4.0 * (8192.0f64 * 0.25).sqrt();
        assert!((rec.count("00") as f64 - 4096.0).abs() <= band);
    }

    #[test]
    fn full_noise_spreads_evenly() {
        let rec = sample(&Circuit::bell_prep(), 8192, 5, Some(1.0)).unwrap();
        let band = 4.0 * (8192.0f64 * 0.25 * 0.75).sqrt();
        for bits in ["00", "01", "10", "11"] {
            assert!((rec.count(bits) as f64 - 2048.0).abs() <= band, "{bits}: {rec:?}");
        }
    }

    #[test]
    fn single_shot_and_determinism() {
        let rec = sample(&Circuit::bell_prep(), 1, 9, Some(0.3)).unwrap();
        assert_eq!(rec.counts.values().sum::<u64>(), 1);
        let a = sample(&Circuit::bell_prep(), 500, 11, Some(0.2)).unwrap();
        let b = sample(&Circuit::bell_prep(), 500, 11, Some(0.2)).unwrap();
        assert_eq!(a, b);
        assert!(sample(&Circuit::bell_prep(), 0, 0, None).is_err());
        assert!(sample(&Circuit::bell_prep(), 10, 0, Some(1.5)).is_err());
    }

    #[test]
    fn sampled_marginals_pass_chi_square() {
        // A three-qubit circuit with unequal outcome weights; the chi-square
        // statistic summed over 20 seeds has 20 * 7 = 140 degrees of freedom.
        let circuit = Circuit::new(3)
            .unwrap()
            .with(Gate::H(0))
            .unwrap()
            .with(Gate::U(1, crate::qcore::haar_unitary(2, 4)))
            .unwrap()
            .with(Gate::Cnot { control: 0, target: 2 })
            .unwrap()
            .with(Gate::S(2))
            .unwrap()
            .with(Gate::H(2))
            .unwrap();
        let probs = outcome_probabilities(&circuit, 0.0).unwrap();
        let shots = 4000u64;
        let mut chi2 = 0.0;
        for seed in 0..20 {
            let rec = sample(&circuit, shots, seed, None).unwrap();
            for (i, p) in probs.iter().enumerate() {
                let expected = p * shots as f64;
                let observed = rec.count(&format!("{i:03b}")) as f64;
                chi2 += (observed - expected).powi(2) / expected;
            }
        }
        // 99.9% quantile of chi-square with 140 degrees of freedom.
        assert!(chi2 < 199.2, "chi2 = {chi2}");
    }

    fn phi() -> BipartiteState {
        BipartiteState::from_ket(&bell(BellKind::PhiPlus), 2, 2).unwrap()
    }

    #[test]
    fn combination_examples() {
        let z = LocalBasis::z();
        let psi = BipartiteState::from_ket(&bell(BellKind::PsiPlus), 2, 2).unwrap();
        let mixed = BipartiteState::maximally_mixed(2, 2);
        let cases = [(phi(), 1.0, 0.0), (mixed, 0.0, 0.0), (psi, 0.0, 1.0)];
        for (s, aligned, swapped) in cases {
            assert!((combo_identity(&s, &z, &z, 0, 1, Combination::Aligned).unwrap() - aligned).abs() < 1e-12);
            assert!((combo_identity(&s, &z, &z, 0, 1, Combination::Swapped).unwrap() - swapped).abs() < 1e-12);
        }
        assert!(matches!(combo_identity(&phi(), &z, &z, 1, 1, Combination::Aligned), Err(Error::EqualIndices(1))));
        assert!(combo_identity(&phi(), &z, &z, 0, 2, Combination::Aligned).is_err());
    }

    #[test]
    fn combinations_match_real_parts_of_elements() {
        for seed in 0..200u64 {
            let s = BipartiteState::new(random_density(4, seed), 2, 2).unwrap();
            let ba = LocalBasis::new(haar_unitary(2, 10_000 + seed)).unwrap();
            let bb = LocalBasis::new(haar_unitary(2, 20_000 + seed)).unwrap();
            let r = crate::inequalities::rotate_into(&s, &ba, &bb).unwrap();
            for (a, a2) in [(0, 1), (1, 0)] {
                let m = r[(a * 2 + a, a2 * 2 + a2)];
                let n = r[(a * 2 + a2, a2 * 2 + a)];
                let al = combo_identity(&s, &ba, &bb, a, a2, Combination::Aligned).unwrap();
                let sw = combo_identity(&s, &ba, &bb, a, a2, Combination::Swapped).unwrap();
                assert!((al - 2.0 * m.re).abs() < 1e-10);
                assert!((sw - 2.0 * n.re).abs() < 1e-10);
                let mag_al = combo_magnitude(&s, &ba, &bb, a, a2, Combination::Aligned).unwrap();
                let mag_sw = combo_magnitude(&s, &ba, &bb, a, a2, Combination::Swapped).unwrap();
                assert!((mag_al - 2.0 * m.norm()).abs() < 1e-10);
                assert!((mag_sw - 2.0 * n.norm()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn qutrit_combinations_pick_up_the_projected_block() {
        // On larger systems the swapped combination also carries the weight
        // outside span{a, a'} on both sides.
        let z = LocalBasis::computational(3);
        for seed in 0..20u64 {
            let s = BipartiteState::new(random_density(9, seed), 3, 3).unwrap();
            let m = s.element(0, 0, 2, 2);
            let n = s.element(0, 2, 2, 0);
            let inside: f64 = [(0, 0), (0, 2), (2, 0), (2, 2)].iter().map(|&(a, b)| s.element(a, b, a, b).re).sum();
            let al = combo_identity(&s, &z, &z, 0, 2, Combination::Aligned).unwrap();
            let sw = combo_identity(&s, &z, &z, 0, 2, Combination::Swapped).unwrap();
            assert!((al - 2.0 * m.re).abs() < 1e-12);
            assert!((sw - (inside + 2.0 * n.re - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_rotated_bell_state_needs_the_magnitude_mode() {
        // (|00> + i|11>)/sqrt(2): the real-part estimator sees nothing.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = Ket::from_slice(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, s)]).unwrap();
        let st = BipartiteState::new(DensityMatrix::from_ket(&psi), 2, 2).unwrap();
        let z = LocalBasis::z();
        assert!(combo_identity(&st, &z, &z, 0, 1, Combination::Aligned).unwrap().abs() < 1e-12);
        assert!((combo_magnitude(&st, &z, &z, 0, 1, Combination::Aligned).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_estimate_is_exact() {
        let e = estimate_combo(8192, 7, 0.0, Combination::Aligned).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
        let e = estimate_combo(8192, 7, 0.0, Combination::Swapped).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.runs.len(), 2);
        assert_eq!(e.runs[0].basis_run, "x");
    }

    #[test]
    fn calibrated_noise_lands_near_reported_value() {
        let e = estimate_combo(8192, 7, 0.08, Combination::Aligned).unwrap();
        assert!((e.value - 0.92).abs() <= 4.0 * e.stderr, "{} +- {}", e.value, e.stderr);
        let e = estimate_combo(8192, 7, 1.0, Combination::Aligned).unwrap();
        assert!(e.value.abs() <= 4.0 * e.stderr);
    }

    #[test]
    fn estimator_is_unbiased_over_seeds() {
        let lambda = 0.3;
        let exact = 1.0 - lambda;
        let runs: Vec<ComboEstimate> = (0..100).map(|seed| estimate_combo(1024, seed, lambda, Combination::Aligned).unwrap()).collect();
        let mean = runs.iter().map(|e| e.value).sum::<f64>() / 100.0;
        let se = runs.iter().map(|e| e.stderr).sum::<f64>() / 100.0 / 10.0;
        assert!((mean - exact).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn magnitude_estimate_on_bell_prep() {
        let e = estimate_magnitude(4096, 2, 0.0, Combination::Aligned).unwrap();
        assert_eq!(e.runs.len(), 4);
        assert!((e.value - 1.0).abs() <= 4.0 * e.stderr + 1e-12);
        let e = estimate_magnitude(4096, 2, 0.2, Combination::Aligned).unwrap();
        assert!((e.value - 0.8).abs() <= 4.0 * e.stderr, "{e:?}");
    }
}
