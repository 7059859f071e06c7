//! The squash channel from an N-photon symmetric state to a qubit.
//!
//! For every pair `0 <= b, b' <= N` with `b - b' ≡ 1 (mod 4)` the channel has a
//! Kraus operator
//!
//! ```text
//! F_{b,b'} = 2^{-(N-1)/2} ( √C(N,b') |1_y⟩⟨S^y_{N-b,b}| + √C(N,b) |0_y⟩⟨S^y_{N-b',b'}| )
//! ```
//!
//! built in the Y-labelled basis and stored in Z coordinates.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::linalg::{c, identity, is_hermitian, max_abs_diff, min_eigenvalue, trace, CMatrix};
use crate::random::{stream, wishart_density};
use crate::symfock::{basis_change_matrix, binomial, lift_gate, omega_pow, BasisLabel, SingleQubitGate};

/// What a Kraus operator represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrausLabel {
    /// `F_{b,b'}` of the squash family.
    Squash { b: usize, b_prime: usize },
    /// Projection onto the N-photon block of a truncated Fock space.
    PhotonNumber(usize),
    Unlabelled,
}

/// A trace-preserving completely positive map in Kraus form.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    input_dim: usize,
    output_dim: usize,
    ops: Vec<CMatrix>,
    labels: Vec<KrausLabel>,
}

impl KrausChannel {
    pub const COMPLETENESS_TOL: f64 = 1e-10;

    pub fn new(ops: Vec<CMatrix>, labels: Vec<KrausLabel>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::Domain("channel needs at least one Kraus operator".into()))?;
        let (output_dim, input_dim) = first.shape();
        if labels.len() != ops.len() {
            return Err(Error::Dimension { expected: ops.len(), actual: labels.len() });
        }
        for op in &ops {
            if op.shape() != (output_dim, input_dim) {
                return Err(Error::Dimension { expected: output_dim * input_dim, actual: op.len() });
            }
        }
        let ch = Self { input_dim, output_dim, ops, labels };
        let dev = ch.completeness_deviation();
        if dev > Self::COMPLETENESS_TOL {
            return domain(format!("Kraus operators are not complete (|Σ K†K - I| = {dev:e})"));
        }
        Ok(ch)
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::new(vec![u], vec![KrausLabel::Unlabelled])
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn labels(&self) -> &[KrausLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `Σ K†K`.
    pub fn kraus_sum(&self) -> CMatrix {
        self.ops
            .iter()
            .fold(CMatrix::zeros(self.input_dim, self.input_dim), |acc, k| acc + k.adjoint() * k)
    }

    pub fn completeness_deviation(&self) -> f64 {
        max_abs_diff(&self.kraus_sum(), &identity(self.input_dim))
    }

    /// Heisenberg-picture image `Σ K† E K` of an output-space operator.
    pub fn pullback(&self, effect: &CMatrix) -> CMatrix {
        self.ops
            .iter()
            .fold(CMatrix::zeros(self.input_dim, self.input_dim), |acc, k| acc + k.adjoint() * effect * k)
    }

    /// The channel `ρ ↦ U F(ρ) U†` (unitary applied after).
    pub fn followed_by(&self, u: &CMatrix) -> KrausChannel {
        assert_eq!(u.ncols(), self.output_dim);
        KrausChannel {
            input_dim: self.input_dim,
            output_dim: u.nrows(),
            ops: self.ops.iter().map(|k| u * k).collect(),
            labels: self.labels.clone(),
        }
    }

    /// The channel `ρ ↦ F(U ρ U†)` (unitary applied first).
    pub fn preceded_by(&self, u: &CMatrix) -> KrausChannel {
        assert_eq!(u.nrows(), self.input_dim);
        KrausChannel {
            input_dim: u.ncols(),
            output_dim: self.output_dim,
            ops: self.ops.iter().map(|k| k * u).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// A density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const PSD_TOL: f64 = 1e-10;

    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension { expected: m.nrows(), actual: m.ncols() });
        }
        if !is_hermitian(&m, Self::HERMITIAN_TOL) {
            return domain("density operator is not Hermitian");
        }
        let tr = trace(&m).re;
        if (tr - 1.0).abs() > Self::TRACE_TOL {
            return domain(format!("density operator has trace {tr}"));
        }
        let low = min_eigenvalue(&m);
        if low < -Self::PSD_TOL {
            return domain(format!("density operator has negative eigenvalue {low:e}"));
        }
        Ok(Self(m))
    }

    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        Self(m)
    }

    /// `I / dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self(identity(dim).unscale(dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        trace(&self.0).re
    }

    pub fn purity(&self) -> f64 {
        crate::linalg::trace_product_re(&self.0, &self.0)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self(self.0.kronecker(&other.0))
    }

    /// Traces out the second factor of a `left_dim ⊗ right_dim` operator.
    pub fn partial_trace_right(&self, left_dim: usize) -> Result<DensityMatrix> {
        let right_dim = split_dim(self.dim(), left_dim)?;
        Ok(Self(CMatrix::from_fn(left_dim, left_dim, |i, j| {
            (0..right_dim).map(|k| self.0[(i * right_dim + k, j * right_dim + k)]).sum()
        })))
    }

    /// Traces out the first factor of a `left_dim ⊗ right_dim` operator.
    pub fn partial_trace_left(&self, left_dim: usize) -> Result<DensityMatrix> {
        let right_dim = split_dim(self.dim(), left_dim)?;
        Ok(Self(CMatrix::from_fn(right_dim, right_dim, |i, j| {
            (0..left_dim).map(|k| self.0[(k * right_dim + i, k * right_dim + j)]).sum()
        })))
    }
}

fn split_dim(total: usize, left: usize) -> Result<usize> {
    if left == 0 || !total.is_multiple_of(left) {
        return domain(format!("dimension {total} does not factor with left factor {left}"));
    }
    Ok(total / left)
}

/// Index pairs `(b, b')` with `b - b' ≡ 1 (mod 4)`, ordered by `b'` then `b`.
pub fn squash_pairs(n_photons: usize) -> Vec<(usize, usize)> {
    let n = n_photons as i64;
    let mut pairs = Vec::new();
    for bp in 0..=n {
        for b in 0..=n {
            if (b - bp).rem_euclid(4) == 1 {
                pairs.push((b as usize, bp as usize));
            }
        }
    }
    pairs
}

/// The squash family for `n_photons >= 1`.
pub fn build_squash(n_photons: usize) -> Result<KrausChannel> {
    if n_photons == 0 {
        return domain("the squash channel is undefined on the vacuum");
    }
    let n = n_photons;
    let prefactor = 2f64.powf(-(n as f64 - 1.0) / 2.0);
    let into_y = basis_change_matrix(n, BasisLabel::Z, BasisLabel::Y);
    let qubit_from_y = basis_change_matrix(1, BasisLabel::Y, BasisLabel::Z);

    let pairs = squash_pairs(n);
    let ops = pairs
        .iter()
        .map(|&(b, bp)| {
            let mut f_y = CMatrix::zeros(2, n + 1);
            f_y[(1, b)] = c(prefactor * binomial(n, bp).sqrt(), 0.0);
            f_y[(0, bp)] = c(prefactor * binomial(n, b).sqrt(), 0.0);
            &qubit_from_y * f_y * &into_y
        })
        .collect();
    let labels = pairs.iter().map(|&(b, b_prime)| KrausLabel::Squash { b, b_prime }).collect();
    KrausChannel::new(ops, labels)
}

/// `Σ K ρ K†`.
pub fn apply_channel(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != ch.input_dim {
        return Err(Error::Dimension { expected: ch.input_dim, actual: rho.dim() });
    }
    let out = ch
        .ops
        .iter()
        .fold(CMatrix::zeros(ch.output_dim, ch.output_dim), |acc, k| acc + k * rho.matrix() * k.adjoint());
    Ok(DensityMatrix::new_unchecked(out))
}

/// Applies `I_A ⊗ F` to a bipartite state whose second factor has dimension `bob_dim`.
pub fn apply_channel_on_bob(ch: &KrausChannel, rho_ab: &DensityMatrix, bob_dim: usize) -> Result<DensityMatrix> {
    if bob_dim == 0 || !rho_ab.dim().is_multiple_of(bob_dim) {
        return domain(format!("state dimension {} is not a multiple of Bob's dimension {bob_dim}", rho_ab.dim()));
    }
    apply_local_channels(rho_ab, rho_ab.dim() / bob_dim, None, Some(ch))
}

/// Applies `A ⊗ B` to a bipartite state; `None` leaves that side untouched.
pub fn apply_local_channels(
    rho: &DensityMatrix,
    alice_dim: usize,
    alice: Option<&KrausChannel>,
    bob: Option<&KrausChannel>,
) -> Result<DensityMatrix> {
    let bob_dim = split_dim(rho.dim(), alice_dim)?;
    let side_ops = |ch: Option<&KrausChannel>, dim: usize| -> Result<Vec<CMatrix>> {
        match ch {
            None => Ok(vec![identity(dim)]),
            Some(ch) if ch.input_dim == dim => Ok(ch.ops.clone()),
            Some(ch) => Err(Error::Dimension { expected: dim, actual: ch.input_dim }),
        }
    };
    let a_ops = side_ops(alice, alice_dim)?;
    let b_ops = side_ops(bob, bob_dim)?;
    let out_dim = a_ops[0].nrows() * b_ops[0].nrows();
    let mut out = CMatrix::zeros(out_dim, out_dim);
    for ka in &a_ops {
        for kb in &b_ops {
            let k = ka.kronecker(kb);
            out += &k * rho.matrix() * k.adjoint();
        }
    }
    Ok(DensityMatrix::new_unchecked(out))
}

/// Outcome of the completeness check for one photon number.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CompletenessReport {
    pub n_photons: usize,
    /// `max |Σ F†F - I|` over the matrix built from the Kraus operators.
    pub max_deviation: f64,
    /// `max_b |f_{b,b} - 1|` with `f_{b,b} = 2^{-(N-1)} Σ_{b-c ≡ ±1 (4)} C(N,c)`.
    pub binomial_diag_deviation: f64,
}

pub fn verify_completeness(n_photons: usize) -> Result<CompletenessReport> {
    let ch = build_squash(n_photons)?;
    let n = n_photons as i64;
    let scale = 2f64.powf(-(n as f64 - 1.0));
    let binomial_diag_deviation = (0..=n)
        .map(|b| {
            let sum: f64 = (0..=n)
                .filter(|c| matches!((b - c).rem_euclid(4), 1 | 3))
                .map(|c| binomial(n_photons, c as usize))
                .sum();
            (scale * sum - 1.0).abs()
        })
        .fold(0.0, f64::max);
    Ok(CompletenessReport {
        n_photons,
        max_deviation: ch.completeness_deviation(),
        binomial_diag_deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HadamardReport {
    pub n_photons: usize,
    /// Every `F_{b,b'} D(H) = ω^{2b-N-1} H F_{b,b'}` holds within 1e-10.
    pub kraus_phase_ok: bool,
    pub kraus_max_dev: f64,
    /// `max |H F(ρ) H† - F(D(H) ρ D(H)†)|` over the random trial states.
    pub channel_max_dev: f64,
    pub trials: usize,
}

pub const COVARIANCE_TOL: f64 = 1e-10;

/// Checks the Hadamard covariance of each Kraus operator and the channel-level
/// invariance on `trials` Wishart states drawn from streams of `seed`.
pub fn verify_hadamard_invariance(n_photons: usize, trials: usize, seed: u64) -> Result<HadamardReport> {
    if trials == 0 {
        return domain("at least one trial is required");
    }
    let ch = build_squash(n_photons)?;
    let h_gate = SingleQubitGate::modulator_hadamard();
    let h = h_gate.matrix();
    let d_h = lift_gate(&h_gate, n_photons);
    let n = n_photons as i64;

    let kraus_max_dev = ch
        .ops
        .iter()
        .zip(&ch.labels)
        .map(|(f, label)| {
            let KrausLabel::Squash { b, .. } = *label else { unreachable!("squash ops are labelled") };
            let phase = omega_pow(2 * b as i64 - n - 1);
            max_abs_diff(&(f * &d_h), &((h * f) * phase))
        })
        .fold(0.0, f64::max);

    let rotated = ch.preceded_by(&d_h);
    let channel_max_dev = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t);
            let rho = DensityMatrix::new_unchecked(wishart_density(n_photons + 1, &mut rng));
            let lhs = crate::linalg::conjugate(h, apply_channel(&ch, &rho).expect("dims").matrix());
            let rhs = apply_channel(&rotated, &rho).expect("dims");
            max_abs_diff(&lhs, rhs.matrix())
        })
        .reduce(|| 0.0, f64::max);

    Ok(HadamardReport {
        n_photons,
        kraus_phase_ok: kraus_max_dev < COVARIANCE_TOL,
        kraus_max_dev,
        channel_max_dev,
        trials,
    })
}
