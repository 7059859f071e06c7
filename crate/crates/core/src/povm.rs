//! Threshold-detector measurement models and photon-number block states.
//!
//! A detection unit is a 50:50 splitter followed by two on/off detectors. On an
//! N-photon block it resolves only three classes: every photon at detector 0,
//! every photon at detector 1, or a coincidence. Coincidences are replaced by a
//! fair random bit, which gives the two-outcome sifted-bit POVM used by
//! [`actual_povm`]. [`virtual_povm`] pulls a qubit z measurement back through
//! the squash channel; [`verify_povm_equivalence`] checks the two agree.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::linalg::{c, conjugate, identity, is_hermitian, max_abs_diff, min_eigenvalue, CMatrix, ONE};
use crate::squash::{build_squash, DensityMatrix, KrausChannel, KrausLabel};
use crate::symfock::{lift_gate, SingleQubitGate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Outcome {
    Bit0,
    Bit1,
    Vacuum,
    Coincidence,
}

/// Positive effects summing to the identity.
#[derive(Debug, Clone)]
pub struct Povm {
    dim: usize,
    effects: Vec<CMatrix>,
    labels: Vec<Outcome>,
}

impl Povm {
    pub const TOL: f64 = 1e-10;

    pub fn new(effects: Vec<CMatrix>, labels: Vec<Outcome>) -> Result<Self> {
        let dim = effects.first().map(|e| e.nrows()).ok_or_else(|| Error::Domain("empty POVM".into()))?;
        if labels.len() != effects.len() {
            return Err(Error::Dimension { expected: effects.len(), actual: labels.len() });
        }
        let mut sum = CMatrix::zeros(dim, dim);
        for e in &effects {
            if e.shape() != (dim, dim) {
                return Err(Error::Dimension { expected: dim, actual: e.nrows() });
            }
            if !is_hermitian(e, Self::TOL) || min_eigenvalue(e) < -Self::TOL {
                return domain("POVM effect is not positive semidefinite");
            }
            sum += e;
        }
        let dev = max_abs_diff(&sum, &identity(dim));
        if dev > Self::TOL {
            return domain(format!("POVM effects do not sum to identity (deviation {dev:e})"));
        }
        Ok(Self { dim, effects, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }

    pub fn labels(&self) -> &[Outcome] {
        &self.labels
    }

    pub fn effect(&self, outcome: Outcome) -> Option<&CMatrix> {
        self.labels.iter().position(|&l| l == outcome).map(|i| &self.effects[i])
    }

    /// Born probabilities `tr(E_i ρ)` in effect order.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        if rho.dim() != self.dim {
            return Err(Error::Dimension { expected: self.dim, actual: rho.dim() });
        }
        Ok(self
            .effects
            .iter()
            .map(|e| crate::linalg::trace_product_re(e, rho.matrix()))
            .collect())
    }

    /// `U† E U` for each effect: measuring after applying `U`.
    pub fn rotated(&self, u: &CMatrix) -> Povm {
        Povm {
            dim: self.dim,
            effects: self.effects.iter().map(|e| u.adjoint() * e * u).collect(),
            labels: self.labels.clone(),
        }
    }
}

fn diagonal(values: impl IntoIterator<Item = f64>) -> CMatrix {
    let v: Vec<_> = values.into_iter().map(|x| c(x, 0.0)).collect();
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(v))
}

/// Sifted-bit POVM of the physical detection unit on an N-photon block.
pub fn actual_povm(n_photons: usize) -> Result<Povm> {
    if n_photons == 0 {
        return domain("the vacuum produces no bit; see DetectorModel");
    }
    let n = n_photons;
    let half_if_coincidence = |b: usize, extreme: usize| {
        if b == extreme {
            1.0
        } else if b == 0 || b == n {
            0.0
        } else {
            0.5
        }
    };
    let bit0 = diagonal((0..=n).map(|b| half_if_coincidence(b, 0)));
    let bit1 = diagonal((0..=n).map(|b| half_if_coincidence(b, n)));
    Povm::new(vec![bit0, bit1], vec![Outcome::Bit0, Outcome::Bit1])
}

/// Qubit z measurement pulled back through the squash channel.
pub fn virtual_povm(n_photons: usize) -> Result<Povm> {
    let ch = build_squash(n_photons)?;
    let p0 = diagonal([1.0, 0.0]);
    let p1 = diagonal([0.0, 1.0]);
    Povm::new(vec![ch.pullback(&p0), ch.pullback(&p1)], vec![Outcome::Bit0, Outcome::Bit1])
}

/// `P(|S^z_{N,0}⟩) - P(|S^z_{0,N}⟩)`.
pub fn actual_z_form(n_photons: usize) -> CMatrix {
    let n = n_photons;
    diagonal((0..=n).map(|b| match b {
        0 if n > 0 => 1.0,
        b if b == n && n > 0 => -1.0,
        _ => 0.0,
    }))
}

/// `Σ F† Z F`.
pub fn virtual_z_form(n_photons: usize) -> Result<CMatrix> {
    Ok(build_squash(n_photons)?.pullback(SingleQubitGate::pauli_z().matrix()))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PovmReport {
    pub n_photons: usize,
    pub max_dev_bit0: f64,
    pub max_dev_bit1: f64,
    pub max_dev_z: f64,
}

impl PovmReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_dev_bit0.max(self.max_dev_bit1).max(self.max_dev_z)
    }
}

pub fn verify_povm_equivalence(n_photons: usize) -> Result<PovmReport> {
    let ac = actual_povm(n_photons)?;
    let vi = virtual_povm(n_photons)?;
    Ok(PovmReport {
        n_photons,
        max_dev_bit0: max_abs_diff(&ac.effects[0], &vi.effects[0]),
        max_dev_bit1: max_abs_diff(&ac.effects[1], &vi.effects[1]),
        max_dev_z: max_abs_diff(&actual_z_form(n_photons), &virtual_z_form(n_photons)?),
    })
}

/// One photon-number block: its probability and the renormalised state inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub weight: f64,
    pub rho: DensityMatrix,
}

const WEIGHT_TOL: f64 = 1e-10;

/// A single-party state after the photon-number QND measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    blocks: BTreeMap<usize, Block>,
}

impl BlockState {
    pub fn new(blocks: BTreeMap<usize, Block>) -> Result<Self> {
        let total: f64 = blocks.values().map(|b| b.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return domain(format!("block weights sum to {total}"));
        }
        for (&n, block) in &blocks {
            if block.weight < 0.0 {
                return domain(format!("block {n} has negative weight"));
            }
            if block.rho.dim() != n + 1 {
                return Err(Error::Dimension { expected: n + 1, actual: block.rho.dim() });
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &BTreeMap<usize, Block> {
        &self.blocks
    }

    pub fn weight(&self, n_photons: usize) -> f64 {
        self.blocks.get(&n_photons).map_or(0.0, |b| b.weight)
    }
}

const QND_TRACE_TOL: f64 = 1e-8;

fn fock_offset(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Largest photon number of a truncated Fock space `⊕_{N=0}^{n_max} C^{N+1}`.
pub fn fock_cutoff(dim: usize) -> Option<usize> {
    (0..).take_while(|&n| fock_offset(n + 1) <= dim).find(|&n| fock_offset(n + 1) == dim)
}

/// QND photon-number measurement on a truncated Fock space, Kraus ops `E^N`.
pub fn qnd_channel(n_max: usize) -> KrausChannel {
    let dim = fock_offset(n_max + 1);
    let ops = (0..=n_max)
        .map(|n| {
            let mut e = CMatrix::zeros(dim, dim);
            for b in 0..=n {
                let i = fock_offset(n) + b;
                e[(i, i)] = ONE;
            }
            e
        })
        .collect();
    let labels = (0..=n_max).map(KrausLabel::PhotonNumber).collect();
    KrausChannel::new(ops, labels).expect("block projectors resolve the identity")
}

/// Splits a state on a truncated Fock space into normalised photon-number blocks.
///
/// Coherences between different photon numbers are discarded, exactly as the
/// QND measurement would. Blocks of zero weight are dropped.
pub fn qnd_split(rho: &CMatrix) -> Result<BlockState> {
    let n_max = fock_cutoff(rho.nrows())
        .ok_or_else(|| Error::Domain(format!("dimension {} is not a truncated Fock space", rho.nrows())))?;
    if !rho.is_square() {
        return Err(Error::Dimension { expected: rho.nrows(), actual: rho.ncols() });
    }
    let mut raw = BTreeMap::new();
    for n in 0..=n_max {
        let o = fock_offset(n);
        raw.insert(n, rho.view((o, o), (n + 1, n + 1)).into_owned());
    }
    block_state_from_unnormalized(raw)
}

/// Normalises a map `N -> (unnormalised block)`; weights are the block traces.
pub fn block_state_from_unnormalized(raw: BTreeMap<usize, CMatrix>) -> Result<BlockState> {
    let total: f64 = raw.values().map(|m| m.trace().re).sum();
    if (total - 1.0).abs() > QND_TRACE_TOL {
        return domain(format!("total trace {total} deviates from 1"));
    }
    let mut blocks = BTreeMap::new();
    for (n, m) in raw {
        let w = m.trace().re;
        if w <= 0.0 {
            continue;
        }
        let rho = DensityMatrix::new(m.unscale(w))?;
        blocks.insert(n, Block { weight: w / total, rho });
    }
    BlockState::new(blocks)
}

/// Block-diagonal bipartite state, keyed by (Alice's, Bob's) photon numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeBlockState {
    blocks: BTreeMap<(usize, usize), Block>,
}

impl CompositeBlockState {
    /// Builds a state from a list of weighted blocks; repeated keys are mixed.
    pub fn new(entries: Vec<((usize, usize), f64, DensityMatrix)>) -> Result<Self> {
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return domain(format!("block weights sum to {total}"));
        }
        let mut mixed: BTreeMap<(usize, usize), (f64, CMatrix)> = BTreeMap::new();
        for ((m, n), w, rho) in entries {
            if w < 0.0 {
                return domain(format!("block ({m},{n}) has negative weight {w}"));
            }
            let dim = (m + 1) * (n + 1);
            if rho.dim() != dim {
                return Err(Error::Dimension { expected: dim, actual: rho.dim() });
            }
            if w == 0.0 {
                continue;
            }
            let slot = mixed.entry((m, n)).or_insert_with(|| (0.0, CMatrix::zeros(dim, dim)));
            slot.0 += w;
            slot.1 += rho.matrix().scale(w);
        }
        let blocks = mixed
            .into_iter()
            .map(|(k, (w, m))| (k, Block { weight: w, rho: DensityMatrix::new_unchecked(m.unscale(w)) }))
            .collect();
        Ok(Self { blocks })
    }

    pub fn single(alice_photons: usize, bob_photons: usize, rho: DensityMatrix) -> Result<Self> {
        Self::new(vec![((alice_photons, bob_photons), 1.0, rho)])
    }

    pub fn blocks(&self) -> &BTreeMap<(usize, usize), Block> {
        &self.blocks
    }

    /// Bob's marginal block state.
    pub fn bob_blocks(&self) -> Result<BlockState> {
        let mut raw: BTreeMap<usize, CMatrix> = BTreeMap::new();
        for (&(m, n), block) in &self.blocks {
            let marginal = block.rho.partial_trace_left(m + 1)?;
            let slot = raw.entry(n).or_insert_with(|| CMatrix::zeros(n + 1, n + 1));
            *slot += marginal.matrix().scale(block.weight);
        }
        block_state_from_unnormalized(raw)
    }
}

/// What the two threshold detectors physically register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Click {
    Vacuum,
    /// Every photon at detector 0.
    AllZero,
    /// Every photon at detector 1.
    AllOne,
    /// Both detectors fired; `ones` photons reached detector 1. Not resolvable
    /// by the hardware, kept only for tracing.
    Coincidence { ones: usize },
}

/// Maps a Z-symmetric index `b` of an N-photon block to its click pattern.
pub fn classify_click(n_photons: usize, b: usize) -> Click {
    debug_assert!(b <= n_photons);
    match b {
        _ if n_photons == 0 => Click::Vacuum,
        0 => Click::AllZero,
        b if b == n_photons => Click::AllOne,
        ones => Click::Coincidence { ones },
    }
}

/// A measured bit or an inconclusive (no-click) round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detection {
    Bit0,
    Bit1,
    Vacuum,
}

impl Detection {
    pub fn bit(self) -> Option<u8> {
        match self {
            Detection::Bit0 => Some(0),
            Detection::Bit1 => Some(1),
            Detection::Vacuum => None,
        }
    }

    fn from_coin(coin: bool) -> Self {
        if coin {
            Detection::Bit1
        } else {
            Detection::Bit0
        }
    }
}

/// Post-processing rules of the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct DetectorModel {
    /// Assign a random bit to no-click rounds instead of discarding them.
    pub vacuum_random_bit: bool,
}

impl DetectorModel {
    /// Turns a click pattern into a bit, flipping a fair coin where needed.
    pub fn resolve<R: Rng + ?Sized>(&self, click: Click, rng: &mut R) -> Detection {
        match click {
            Click::AllZero => Detection::Bit0,
            Click::AllOne => Detection::Bit1,
            Click::Coincidence { .. } => Detection::from_coin(rng.random()),
            Click::Vacuum if self.vacuum_random_bit => Detection::from_coin(rng.random()),
            Click::Vacuum => Detection::Vacuum,
        }
    }

    /// Precomputes the click distribution of `rho` after an optional basis rotation.
    pub fn sampler(&self, n_photons: usize, rho: &DensityMatrix, basis_gate_applied: bool) -> Result<ClickSampler> {
        if rho.dim() != n_photons + 1 {
            return Err(Error::Dimension { expected: n_photons + 1, actual: rho.dim() });
        }
        let probs = if basis_gate_applied {
            let d = lift_gate(&SingleQubitGate::modulator_hadamard(), n_photons);
            conjugate(&d, rho.matrix()).diagonal()
        } else {
            rho.matrix().diagonal()
        };
        Ok(ClickSampler {
            model: *self,
            n_photons,
            index: weighted_index(probs.iter().map(|z| z.re))?,
        })
    }

    /// Samples one detection event.
    pub fn detect<R: Rng + ?Sized>(
        &self,
        n_photons: usize,
        rho: &DensityMatrix,
        basis_gate_applied: bool,
        rng: &mut R,
    ) -> Result<Detection> {
        Ok(self.sampler(n_photons, rho, basis_gate_applied)?.sample(rng))
    }

    /// `POVM` of this model on an N-photon block, including the vacuum.
    pub fn povm(&self, n_photons: usize) -> Result<Povm> {
        match n_photons {
            0 if self.vacuum_random_bit => Povm::new(
                vec![diagonal([0.5]), diagonal([0.5])],
                vec![Outcome::Bit0, Outcome::Bit1],
            ),
            0 => Povm::new(vec![identity(1)], vec![Outcome::Vacuum]),
            n => actual_povm(n),
        }
    }
}

pub(crate) fn weighted_index(probs: impl IntoIterator<Item = f64>) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(probs.into_iter().map(|p| p.max(0.0)))
        .map_err(|e| Error::Domain(format!("cannot sample outcome distribution: {e}")))
}

/// Reusable sampler for repeated detections of the same block state.
#[derive(Debug, Clone)]
pub struct ClickSampler {
    model: DetectorModel,
    n_photons: usize,
    index: WeightedIndex<f64>,
}

impl ClickSampler {
    pub fn sample_click<R: Rng + ?Sized>(&self, rng: &mut R) -> Click {
        classify_click(self.n_photons, self.index.sample(rng))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Detection {
        let click = self.sample_click(rng);
        self.model.resolve(click, rng)
    }
}

/// Samples one event with the default model (vacuum is inconclusive).
pub fn detect_event<R: Rng + ?Sized>(
    n_photons: usize,
    rho: &DensityMatrix,
    basis_gate_applied: bool,
    rng: &mut R,
) -> Result<Detection> {
    DetectorModel::default().detect(n_photons, rho, basis_gate_applied, rng)
}
