//! The symmetric N-photon subspace.
//!
//! A single-mode N-photon state of a two-level (polarisation or time-bin) photon
//! lives in the bosonic symmetric subspace of `(C^2)^{⊗N}`, which has dimension
//! `N + 1`. Its basis vector `|S_{N-b,b}⟩` is the normalised symmetrisation of
//! `N - b` photons in `|0⟩` and `b` photons in `|1⟩` of the chosen single-photon
//! basis. All matrices in this crate are stored in the Z-labelled basis; other
//! labels are reached with [`basis_change_matrix`].

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::linalg::{c, identity, max_abs_diff, outer, unitarity_defect, CMatrix, CVector, I, ONE, ZERO};

/// Largest photon number accepted by [`lift_gate_oracle`] unless overridden.
pub const DEFAULT_ORACLE_CAP: usize = 8;

/// Photon numbers up to this bound use exact integer binomials.
const EXACT_BINOMIAL_MAX: usize = 20;

/// Single-photon basis that labels a symmetric basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BasisLabel {
    Z,
    X,
    Y,
}

impl BasisLabel {
    /// Columns are `|0_B⟩, |1_B⟩` written in Z coordinates.
    ///
    /// `|j_x⟩ = (|0_z⟩ + (-1)^j |1_z⟩)/√2` and `|j_y⟩ = (|0_z⟩ + (-1)^j i|1_z⟩)/√2`.
    pub fn frame(self) -> CMatrix {
        let s = FRAC_1_SQRT_2;
        match self {
            BasisLabel::Z => identity(2),
            BasisLabel::X => CMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]),
            BasisLabel::Y => CMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(0.0, s), c(0.0, -s)]),
        }
    }
}

/// Binomial coefficient as a float, exact for `n <= 20`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= EXACT_BINOMIAL_MAX {
        let k = k.min(n - k);
        let mut acc: u64 = 1;
        for i in 0..k {
            // exact at every step: acc * (n - i) is divisible by (i + 1)
            acc = acc * (n - i) as u64 / (i + 1) as u64;
        }
        acc as f64
    } else {
        let ln = ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0);
        ln.exp().round()
    }
}

/// A 2x2 unitary acting on one photon.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleQubitGate(CMatrix);

impl SingleQubitGate {
    pub const UNITARITY_TOL: f64 = 1e-12;

    pub fn new(m: CMatrix) -> Result<Self> {
        if m.shape() != (2, 2) {
            return Err(Error::Dimension { expected: 2, actual: m.nrows().max(m.ncols()) });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return domain("gate has non-finite entries");
        }
        let defect = unitarity_defect(&m);
        if defect > Self::UNITARITY_TOL {
            return domain(format!("gate is not unitary (|U†U - I| = {defect:e})"));
        }
        Ok(Self(m))
    }

    fn from_rows(entries: [Complex64; 4]) -> Self {
        Self(CMatrix::from_row_slice(2, 2, &entries))
    }

    pub fn identity() -> Self {
        Self(identity(2))
    }

    pub fn pauli_x() -> Self {
        Self::from_rows([ZERO, ONE, ONE, ZERO])
    }

    pub fn pauli_z() -> Self {
        Self::from_rows([ONE, ZERO, ZERO, -ONE])
    }

    /// The phase modulator's basis rotation, `(1/√2)[[1, -1], [1, 1]]`.
    ///
    /// This is not the self-inverse Hadamard: it is a quarter turn about the y
    /// axis with eigenvectors `|0_y⟩`, `|1_y⟩` and eigenvalues `ω^{-1}`, `ω`,
    /// `ω = e^{iπ/4}`. Every protocol path uses this gate.
    pub fn modulator_hadamard() -> Self {
        let s = c(FRAC_1_SQRT_2, 0.0);
        Self::from_rows([s, -s, s, s])
    }

    /// The textbook Hadamard `(1/√2)[[1, 1], [1, -1]]`. Not used by protocol code.
    pub fn standard_hadamard() -> Self {
        let s = c(FRAC_1_SQRT_2, 0.0);
        Self::from_rows([s, s, s, -s])
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn compose(&self, other: &SingleQubitGate) -> SingleQubitGate {
        SingleQubitGate(&self.0 * &other.0)
    }

    pub fn adjoint(&self) -> SingleQubitGate {
        SingleQubitGate(self.0.adjoint())
    }
}

/// A pure state of the symmetric N-photon subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SymState {
    n_photons: usize,
    amps: CVector,
    basis: BasisLabel,
}

impl SymState {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(amps: CVector, basis: BasisLabel) -> Result<Self> {
        if amps.is_empty() {
            return domain("a symmetric state needs at least one amplitude");
        }
        Ok(Self { n_photons: amps.len() - 1, amps, basis })
    }

    pub fn n_photons(&self) -> usize {
        self.n_photons
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    pub fn basis(&self) -> BasisLabel {
        self.basis
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= Self::NORM_TOL
    }

    /// Re-expresses the same vector in the basis labelled `to`.
    pub fn to_basis(&self, to: BasisLabel) -> SymState {
        if to == self.basis {
            return self.clone();
        }
        let m = basis_change_matrix(self.n_photons, self.basis, to);
        SymState { n_photons: self.n_photons, amps: m * &self.amps, basis: to }
    }
}

/// `|S^B_{N-b,b}⟩` as a coordinate vector in its own basis.
pub fn sym_basis_state(n_photons: usize, b: usize, basis: BasisLabel) -> Result<SymState> {
    if b > n_photons {
        return domain(format!("b = {b} exceeds photon number {n_photons}"));
    }
    let mut amps = CVector::zeros(n_photons + 1);
    amps[b] = ONE;
    SymState::new(amps, basis)
}

/// Matrix converting coefficients in the `from`-labelled symmetric basis into
/// coefficients in the `to`-labelled one.
pub fn basis_change_matrix(n_photons: usize, from: BasisLabel, to: BasisLabel) -> CMatrix {
    if from == to {
        return identity(n_photons + 1);
    }
    let single = to.frame().adjoint() * from.frame();
    lift_matrix(&single, n_photons)
}

/// `D(U)`: the action of `U^{⊗N}` restricted to the symmetric subspace, in the Z basis.
pub fn lift_gate(gate: &SingleQubitGate, n_photons: usize) -> CMatrix {
    lift_matrix(gate.matrix(), n_photons)
}

/// Symmetric-subspace matrix elements of `U^{⊗N}`.
///
/// Each of the `N - b` photons in `|0⟩` is sent to `|1⟩` with amplitude `U10`
/// and each of the `b` photons in `|1⟩` stays with amplitude `U11`; `k` and `l`
/// count those transfers with `k + l = a`.
fn lift_matrix(u: &CMatrix, n: usize) -> CMatrix {
    let (u00, u01, u10, u11) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    let pow = |z: Complex64, e: usize| z.powu(e as u32);
    let binom: Vec<f64> = (0..=n).map(|k| binomial(n, k)).collect();
    CMatrix::from_fn(n + 1, n + 1, |a, b| {
        let from_zero = n - b;
        let k_lo = a.saturating_sub(b);
        let k_hi = from_zero.min(a);
        let mut acc = ZERO;
        for k in k_lo..=k_hi {
            let l = a - k;
            let weight = binomial(from_zero, k) * binomial(b, l);
            acc += pow(u00, from_zero - k) * pow(u10, k) * pow(u01, b - l) * pow(u11, l) * weight;
        }
        acc * (binom[b] / binom[a]).sqrt()
    })
}

/// Reference construction of `D(U)` through the full `2^N`-dimensional tensor space.
///
/// Builds the isometry `T` taking `|S^z_{N-b,b}⟩` to its explicit symmetrised
/// tensor expansion and returns `T† U^{⊗N} T`. Refuses `N > cap`.
pub fn lift_gate_oracle(gate: &SingleQubitGate, n_photons: usize, cap: usize) -> Result<CMatrix> {
    if n_photons > cap {
        return Err(Error::Resource(format!(
            "oracle limited to N <= {cap} (requested {n_photons}, tensor dimension 2^{n_photons})"
        )));
    }
    let iso = symmetrizer(n_photons);
    let mut full = identity(1);
    for _ in 0..n_photons {
        full = full.kronecker(gate.matrix());
    }
    Ok(iso.adjoint() * full * iso)
}

/// Largest entrywise gap between [`lift_gate`] and [`lift_gate_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleReport {
    pub n_photons: usize,
    pub trials: usize,
    pub max_dev: f64,
}

/// Compares the two lift constructions on `trials` Haar-random gates.
pub fn verify_lift_oracle(n_photons: usize, trials: usize, seed: u64) -> Result<OracleReport> {
    let mut max_dev = 0.0f64;
    for t in 0..trials {
        let mut rng = crate::random::stream(seed ^ n_photons as u64, t as u64);
        let gate = crate::random::haar_gate(&mut rng);
        let fast = lift_gate(&gate, n_photons);
        let slow = lift_gate_oracle(&gate, n_photons, DEFAULT_ORACLE_CAP)?;
        max_dev = max_dev.max(max_abs_diff(&fast, &slow));
    }
    Ok(OracleReport { n_photons, trials, max_dev })
}

/// Columns are the symmetric basis vectors written in the computational tensor basis.
fn symmetrizer(n: usize) -> CMatrix {
    let dim = 1usize << n;
    let mut iso = CMatrix::zeros(dim, n + 1);
    for word in 0..dim {
        let ones = (word as u64).count_ones() as usize;
        iso[(word, ones)] = ONE;
    }
    for b in 0..=n {
        let norm = binomial(n, b).sqrt();
        iso.column_mut(b).unscale_mut(norm);
    }
    iso
}

/// `|ψ⟩⟨ψ|` in the Z basis.
pub fn projector(state: &SymState) -> Result<CMatrix> {
    let deviation = (state.norm() - 1.0).abs();
    if deviation > 1e-9 {
        return domain(format!("projector needs a normalised state (norm deviation {deviation:e})"));
    }
    Ok(outer(state.to_basis(BasisLabel::Z).amps()))
}

/// `ω^k` with `ω = e^{iπ/4}`, taken from an exact table.
pub fn omega_pow(k: i64) -> Complex64 {
    let s = FRAC_1_SQRT_2;
    match k.rem_euclid(8) {
        0 => ONE,
        1 => c(s, s),
        2 => I,
        3 => c(-s, s),
        4 => -ONE,
        5 => c(-s, -s),
        6 => -I,
        _ => c(s, -s),
    }
}
