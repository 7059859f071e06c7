use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use super::Protocol;
use crate::error::{Error, Result};
use crate::linalg::{c, outer, CMatrix, CVector};
use crate::povm::CompositeBlockState;
use crate::squash::DensityMatrix;
use crate::symfock::{lift_gate, projector, sym_basis_state, BasisLabel, SingleQubitGate};

/// Eve's strategy, given as the block-diagonal state she hands to the receivers.
///
/// JSON form is internally tagged by `kind`, e.g. `{"kind":"depolarize","p":0.1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    /// `(1-p) |Φ+⟩⟨Φ+| + p I/4` on single photons.
    Depolarize { p: f64 },
    /// Eve measures her half of `|Φ+⟩` in a random Z/X basis and resends
    /// `photons` copies of the result.
    InterceptResend {
        #[serde(default = "one_photon")]
        photons: usize,
    },
    /// Explicit density operators per photon-number block.
    FixedBlock { blocks: Vec<DensityBlockSpec> },
    /// Bob (both parties for BBM92) receives `|S^z_{n-c,c}⟩`, an `n`-photon
    /// state that always fires both detectors.
    CoincidenceInjection { n: usize, c: usize },
    /// Pure states per photon-number block, as amplitude vectors.
    Custom { blocks: Vec<AmplitudeBlockSpec> },
}

fn one_photon() -> usize {
    1
}

/// A block `(alice_photons, bob_photons)` with a density matrix of dimension
/// `(alice_photons + 1) * (bob_photons + 1)`, rows of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlockSpec {
    pub alice_photons: usize,
    pub bob_photons: usize,
    pub weight: f64,
    pub rho: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeBlockSpec {
    pub alice_photons: usize,
    pub bob_photons: usize,
    pub weight: f64,
    pub amplitudes: Vec<[f64; 2]>,
}

impl DensityBlockSpec {
    pub fn from_matrix(alice_photons: usize, bob_photons: usize, weight: f64, rho: &CMatrix) -> Self {
        let rho = rho.row_iter().map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect();
        Self { alice_photons, bob_photons, weight, rho }
    }
}

impl AttackSpec {
    /// An honest source: `|Φ+⟩` on single photons as an explicit block.
    pub fn bell_source() -> Self {
        AttackSpec::FixedBlock { blocks: vec![DensityBlockSpec::from_matrix(1, 1, 1.0, bell_state().matrix())] }
    }

    /// The attacks exercised by the equivalence checks and the README examples.
    pub fn shipped() -> Vec<AttackSpec> {
        let mut v = vec![AttackSpec::bell_source()];
        v.extend([0.0, 0.1, 0.22, 0.5].map(|p| AttackSpec::Depolarize { p }));
        v.extend((1..=3).map(|photons| AttackSpec::InterceptResend { photons }));
        v.extend([(2, 1), (3, 1), (3, 2), (4, 2)].map(|(n, c)| AttackSpec::CoincidenceInjection { n, c }));
        v
    }

    /// Short human-readable tag for reports.
    pub fn label(&self) -> String {
        match self {
            AttackSpec::Depolarize { p } => format!("depolarize(p={p})"),
            AttackSpec::InterceptResend { photons } => format!("intercept_resend(photons={photons})"),
            AttackSpec::FixedBlock { blocks } => format!("fixed_block({} blocks)", blocks.len()),
            AttackSpec::CoincidenceInjection { n, c } => format!("coincidence_injection(n={n},c={c})"),
            AttackSpec::Custom { blocks } => format!("custom({} blocks)", blocks.len()),
        }
    }
}

fn attack_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Attack(msg.into()))
}

/// `|Φ+⟩ = (|00⟩ + |11⟩)/√2` as a density operator.
pub fn bell_state() -> DensityMatrix {
    let mut psi = CVector::zeros(4);
    psi[0] = c(FRAC_1_SQRT_2, 0.0);
    psi[3] = c(FRAC_1_SQRT_2, 0.0);
    DensityMatrix::new(outer(&psi)).expect("Bell projector is a state")
}

/// `|k_B⟩^{⊗n}` in the Z-symmetric basis.
fn product_state(basis: BasisLabel, k: usize, n: usize) -> CVector {
    let all_k = sym_basis_state(n, k * n, BasisLabel::Z).expect("index in range");
    let frame = SingleQubitGate::new(basis.frame()).expect("frames are unitary");
    lift_gate(&frame, n) * all_k.amps()
}

fn parse_matrix(rows: &[Vec<[f64; 2]>], dim: usize) -> Result<CMatrix> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return attack_err(format!("density block must be {dim}x{dim}"));
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

/// The state Eve distributes under `attack`.
///
/// For BB84 the first factor is always Alice's virtual qubit (a one-photon block).
pub fn eve_state(attack: &AttackSpec, protocol: Protocol) -> Result<CompositeBlockState> {
    let state = match attack {
        AttackSpec::Depolarize { p } => {
            if !(0.0..=1.0).contains(p) {
                return attack_err(format!("depolarizing probability {p} outside [0, 1]"));
            }
            let noisy = bell_state().matrix().scale(1.0 - p) + DensityMatrix::maximally_mixed(4).matrix().scale(*p);
            CompositeBlockState::single(1, 1, DensityMatrix::new(noisy)?)?
        }
        AttackSpec::InterceptResend { photons } => {
            let n = *photons;
            if n == 0 {
                return attack_err("intercept-resend needs at least one photon");
            }
            let alice_n = if protocol == Protocol::Bb84 { 1 } else { n };
            let mut entries = Vec::new();
            for basis in [BasisLabel::Z, BasisLabel::X] {
                for k in 0..2 {
                    let a = outer(&product_state(basis, k, alice_n));
                    let b = outer(&product_state(basis, k, n));
                    entries.push(((alice_n, n), 0.25, DensityMatrix::new(a.kronecker(&b))?));
                }
            }
            CompositeBlockState::new(entries)?
        }
        AttackSpec::CoincidenceInjection { n, c } => {
            if *c == 0 || *c >= *n {
                return attack_err(format!("coincidence needs 0 < c < n (got n={n}, c={c})"));
            }
            let bob = projector(&sym_basis_state(*n, *c, BasisLabel::Z)?)?;
            match protocol {
                Protocol::Bb84 => {
                    let alice = DensityMatrix::maximally_mixed(2);
                    CompositeBlockState::single(1, *n, DensityMatrix::new(alice.matrix().kronecker(&bob))?)?
                }
                Protocol::Bbm92 => CompositeBlockState::single(*n, *n, DensityMatrix::new(bob.kronecker(&bob))?)?,
            }
        }
        AttackSpec::FixedBlock { blocks } => {
            if blocks.is_empty() {
                return attack_err("fixed_block needs at least one block");
            }
            let mut entries = Vec::with_capacity(blocks.len());
            for b in blocks {
                let dim = (b.alice_photons + 1) * (b.bob_photons + 1);
                let m = parse_matrix(&b.rho, dim)?;
                let rho = DensityMatrix::new(m).map_err(|e| {
                    Error::Attack(format!("block ({},{}): {e}", b.alice_photons, b.bob_photons))
                })?;
                entries.push(((b.alice_photons, b.bob_photons), b.weight, rho));
            }
            CompositeBlockState::new(entries).map_err(|e| Error::Attack(e.to_string()))?
        }
        AttackSpec::Custom { blocks } => {
            if blocks.is_empty() {
                return attack_err("custom needs at least one block");
            }
            let mut entries = Vec::with_capacity(blocks.len());
            for b in blocks {
                let dim = (b.alice_photons + 1) * (b.bob_photons + 1);
                if b.amplitudes.len() != dim {
                    return attack_err(format!(
                        "block ({},{}) needs {dim} amplitudes, got {}",
                        b.alice_photons,
                        b.bob_photons,
                        b.amplitudes.len()
                    ));
                }
                let psi = CVector::from_iterator(dim, b.amplitudes.iter().map(|z| c(z[0], z[1])));
                if (psi.norm() - 1.0).abs() > 1e-9 {
                    return attack_err(format!("block ({},{}) amplitudes are not normalised", b.alice_photons, b.bob_photons));
                }
                entries.push(((b.alice_photons, b.bob_photons), b.weight, DensityMatrix::new(outer(&psi.normalize()))?));
            }
            CompositeBlockState::new(entries).map_err(|e| Error::Attack(e.to_string()))?
        }
    };
    if protocol == Protocol::Bb84 {
        if let Some(&(m, n)) = state.blocks().keys().find(|(m, _)| *m != 1) {
            return attack_err(format!("BB84 blocks must give Alice one qubit, found block ({m},{n})"));
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bell_state_properties() {
        let bell = bell_state();
        assert_abs_diff_eq!(bell.trace(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bell.purity(), 1.0, epsilon = 1e-15);
        let half = DensityMatrix::maximally_mixed(2);
        assert!(max_abs_diff(bell.partial_trace_left(2).unwrap().matrix(), half.matrix()) < 1e-15);
        assert!(max_abs_diff(bell.partial_trace_right(2).unwrap().matrix(), half.matrix()) < 1e-15);
        // z-z outcomes always agree
        let m = bell.matrix();
        assert_abs_diff_eq!(m[(0, 0)].re + m[(3, 3)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn depolarize_blocks() {
        let s = eve_state(&AttackSpec::Depolarize { p: 0.0 }, Protocol::Bb84).unwrap();
        assert_eq!(s.blocks().len(), 1);
        let block = &s.blocks()[&(1, 1)];
        assert_eq!(block.weight, 1.0);
        assert!(max_abs_diff(block.rho.matrix(), bell_state().matrix()) < 1e-15);
        assert!(eve_state(&AttackSpec::Depolarize { p: 1.5 }, Protocol::Bb84).is_err());
    }

    #[test]
    fn coincidence_injection_blocks() {
        let s = eve_state(&AttackSpec::CoincidenceInjection { n: 2, c: 1 }, Protocol::Bb84).unwrap();
        let rho = s.blocks()[&(1, 2)].rho.matrix();
        // I/2 ⊗ P(|S^z_{1,1}⟩): weight 1/2 on indices (0,1) and (1,1)
        assert_abs_diff_eq!(rho[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(4, 4)].re, 0.5, epsilon = 1e-15);
        let s = eve_state(&AttackSpec::CoincidenceInjection { n: 2, c: 1 }, Protocol::Bbm92).unwrap();
        assert!(s.blocks().contains_key(&(2, 2)));
        assert!(eve_state(&AttackSpec::CoincidenceInjection { n: 2, c: 2 }, Protocol::Bb84).is_err());
    }

    #[test]
    fn intercept_resend_product_states() {
        let plus = product_state(BasisLabel::X, 0, 2);
        // |+⟩|+⟩ = (|S_{2,0}⟩ + √2 |S_{1,1}⟩ + |S_{0,2}⟩)/2
        assert_abs_diff_eq!(plus[0].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(plus[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(plus[2].re, 0.5, epsilon = 1e-15);
        let s = eve_state(&AttackSpec::InterceptResend { photons: 3 }, Protocol::Bb84).unwrap();
        assert!(s.blocks().contains_key(&(1, 3)));
        let s = eve_state(&AttackSpec::InterceptResend { photons: 3 }, Protocol::Bbm92).unwrap();
        assert!(s.blocks().contains_key(&(3, 3)));
    }

    #[test]
    fn json_forms() {
        let a: AttackSpec = serde_json::from_str(r#"{"kind":"depolarize","p":0.25}"#).unwrap();
        assert_eq!(a, AttackSpec::Depolarize { p: 0.25 });
        let a: AttackSpec = serde_json::from_str(r#"{"kind":"intercept_resend"}"#).unwrap();
        assert_eq!(a, AttackSpec::InterceptResend { photons: 1 });
        assert!(serde_json::from_str::<AttackSpec>(r#"{"kind":"depolarize","q":0.25}"#).is_err());
        assert!(serde_json::from_str::<AttackSpec>(r#"{"kind":"teleport"}"#).is_err());
    }

    #[test]
    fn malformed_custom_tables() {
        let short = AttackSpec::Custom {
            blocks: vec![AmplitudeBlockSpec { alice_photons: 1, bob_photons: 1, weight: 1.0, amplitudes: vec![[1.0, 0.0]] }],
        };
        assert!(matches!(eve_state(&short, Protocol::Bb84), Err(Error::Attack(_))));
        let unnormalised = AttackSpec::Custom {
            blocks: vec![AmplitudeBlockSpec {
                alice_photons: 1,
                bob_photons: 0,
                weight: 1.0,
                amplitudes: vec![[1.0, 0.0], [1.0, 0.0]],
            }],
        };
        assert!(matches!(eve_state(&unnormalised, Protocol::Bb84), Err(Error::Attack(_))));
        let two_photon_alice = AttackSpec::Custom {
            blocks: vec![AmplitudeBlockSpec {
                alice_photons: 2,
                bob_photons: 0,
                weight: 1.0,
                amplitudes: vec![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
            }],
        };
        assert!(eve_state(&two_photon_alice, Protocol::Bb84).is_err());
        assert!(eve_state(&two_photon_alice, Protocol::Bbm92).is_ok());
    }

    #[test]
    fn fixed_block_validation() {
        let bad_weight = AttackSpec::FixedBlock {
            blocks: vec![DensityBlockSpec {
                alice_photons: 1,
                bob_photons: 0,
                weight: 0.5,
                rho: vec![vec![[0.5, 0.0], [0.0, 0.0]], vec![[0.0, 0.0], [0.5, 0.0]]],
            }],
        };
        assert!(matches!(eve_state(&bad_weight, Protocol::Bb84), Err(Error::Attack(_))));
        let not_hermitian = AttackSpec::FixedBlock {
            blocks: vec![DensityBlockSpec {
                alice_photons: 1,
                bob_photons: 0,
                weight: 1.0,
                rho: vec![vec![[0.5, 0.0], [0.3, 0.0]], vec![[0.0, 0.0], [0.5, 0.0]]],
            }],
        };
        assert!(matches!(eve_state(&not_hermitian, Protocol::Bb84), Err(Error::Attack(_))));
    }

    #[test]
    fn shipped_attacks_build_for_both_protocols() {
        for attack in AttackSpec::shipped() {
            for protocol in [Protocol::Bb84, Protocol::Bbm92] {
                eve_state(&attack, protocol).unwrap();
            }
            let json = serde_json::to_string(&attack).unwrap();
            assert_eq!(serde_json::from_str::<AttackSpec>(&json).unwrap(), attack);
        }
        let s = eve_state(&AttackSpec::bell_source(), Protocol::Bbm92).unwrap();
        assert!(max_abs_diff(s.blocks()[&(1, 1)].rho.matrix(), bell_state().matrix()) < 1e-15);
    }
}
