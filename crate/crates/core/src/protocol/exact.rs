use serde::{Deserialize, Serialize};

use super::{attack::eve_state, basis_pair_index, side_process, AttackSpec, Mode, Protocol, Side, BASES};
use crate::error::{domain, Result};
use crate::linalg::{conjugate, trace_product_re, CMatrix};
use crate::povm::{CompositeBlockState, DetectorModel, Outcome};
use crate::squash::{apply_local_channels, build_squash};
use crate::symfock::BasisLabel;

/// Virtual-protocol bit and phase error rates of the squashed qubit pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub e_bit: f64,
    pub e_ph: f64,
    /// Probability that neither side saw vacuum (the renormalisation constant).
    pub detected_weight: f64,
}

/// Exact error rates for the state Eve prepares under `attack`.
pub fn exact_error_rates(attack: &AttackSpec, protocol: Protocol) -> Result<ErrorRates> {
    exact_error_rates_of(&eve_state(attack, protocol)?, protocol)
}

/// Squashes every non-vacuum block to two qubits and reads z-z and x-x
/// disagreement probabilities with the `|0_x⟩, |1_x⟩` projectors.
pub fn exact_error_rates_of(state: &CompositeBlockState, protocol: Protocol) -> Result<ErrorRates> {
    let x_frame = BasisLabel::X.frame();
    let to_x = x_frame.adjoint().kronecker(&x_frame.adjoint());
    let (mut weight, mut bit, mut ph) = (0.0, 0.0, 0.0);
    for (&(m, n), block) in state.blocks() {
        if m == 0 || n == 0 {
            continue;
        }
        let alice = match protocol {
            Protocol::Bb84 => None,
            Protocol::Bbm92 => Some(build_squash(m)?),
        };
        let pair = apply_local_channels(&block.rho, m + 1, alice.as_ref(), Some(&build_squash(n)?))?;
        let z = pair.matrix();
        let x = conjugate(&to_x, z);
        weight += block.weight;
        bit += block.weight * (z[(1, 1)].re + z[(2, 2)].re);
        ph += block.weight * (x[(1, 1)].re + x[(2, 2)].re);
    }
    if weight <= 0.0 {
        return domain("every block contains vacuum; error rates are undefined");
    }
    Ok(ErrorRates { e_bit: bit / weight, e_ph: ph / weight, detected_weight: weight })
}

/// Category of a round: one of the four bit pairs or a discarded (vacuum) round.
pub const CATEGORIES: usize = 5;
pub const DISCARDED: usize = 4;

/// Joint law of `(basis pair, alice bit, bob bit)` including the fair basis choices.
///
/// `cells[pair][k]` with pair in `[ZZ, ZX, XZ, XX]` and `k = 2 a + b` for bits
/// `(a, b)` or [`DISCARDED`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLaw {
    pub cells: [[f64; CATEGORIES]; 4],
}

impl JointLaw {
    pub fn flat(&self) -> Vec<f64> {
        self.cells.iter().flatten().copied().collect()
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    /// Disagreement probability among detected rounds with both parties in `basis`.
    pub fn error_rate(&self, basis: BasisLabel) -> Option<f64> {
        let row = &self.cells[basis_pair_index(basis, basis)];
        let detected: f64 = row[..4].iter().sum();
        (detected > 0.0).then(|| (row[1] + row[2]) / detected)
    }

    pub fn max_abs_diff(&self, other: &JointLaw) -> f64 {
        self.flat()
            .iter()
            .zip(other.flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn category(a: Outcome, b: Outcome) -> usize {
    let bit = |o: Outcome| match o {
        Outcome::Bit0 => Some(0),
        Outcome::Bit1 => Some(1),
        _ => None,
    };
    match (bit(a), bit(b)) {
        (Some(x), Some(y)) => 2 * x + y,
        _ => DISCARDED,
    }
}

/// Heisenberg-picture effects of one party: readout POVM pulled back through
/// whatever that party applies before detection.
fn side_effects(
    protocol: Protocol,
    mode: Mode,
    side: Side,
    n_photons: usize,
    basis: BasisLabel,
    detector: &DetectorModel,
) -> Result<Vec<(Outcome, CMatrix)>> {
    let process = side_process(protocol, mode, side, n_photons, basis)?;
    let readout = detector.povm(process.readout_photons)?;
    Ok(readout
        .labels()
        .iter()
        .zip(readout.effects())
        .map(|(&label, e)| {
            let pulled = match &process.channel {
                Some(ch) => ch.pullback(e),
                None => e.clone(),
            };
            (label, pulled)
        })
        .collect())
}

/// Exact Born probabilities of every round category, computed from POVM effects.
pub fn exact_joint_law(
    state: &CompositeBlockState,
    protocol: Protocol,
    mode: Mode,
    detector: &DetectorModel,
) -> Result<JointLaw> {
    let mut cells = [[0.0; CATEGORIES]; 4];
    for (&(m, n), block) in state.blocks() {
        for a_basis in BASES {
            for b_basis in BASES {
                let pair = basis_pair_index(a_basis, b_basis);
                let alice = side_effects(protocol, mode, Side::Alice, m, a_basis, detector)?;
                let bob = side_effects(protocol, mode, Side::Bob, n, b_basis, detector)?;
                for (la, ea) in &alice {
                    for (lb, eb) in &bob {
                        let p = trace_product_re(&ea.kronecker(eb), block.rho.matrix());
                        cells[pair][category(*la, *lb)] += 0.25 * block.weight * p;
                    }
                }
            }
        }
    }
    Ok(JointLaw { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn depolarizing_rates() {
        for p in [0.0, 0.1, 0.22, 0.5, 1.0] {
            let r = exact_error_rates(&AttackSpec::Depolarize { p }, Protocol::Bb84).unwrap();
            assert_abs_diff_eq!(r.e_bit, p / 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.e_ph, p / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn coincidence_rates() {
        let r = exact_error_rates(&AttackSpec::CoincidenceInjection { n: 2, c: 1 }, Protocol::Bb84).unwrap();
        assert_abs_diff_eq!(r.e_bit, 0.5, epsilon = 1e-12);
        let r = exact_error_rates(&AttackSpec::CoincidenceInjection { n: 2, c: 1 }, Protocol::Bbm92).unwrap();
        assert_abs_diff_eq!(r.e_bit, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_photon_intercept_resend() {
        let r = exact_error_rates(&AttackSpec::InterceptResend { photons: 1 }, Protocol::Bb84).unwrap();
        assert_abs_diff_eq!(r.e_bit, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.e_ph, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn joint_law_normalised_and_modes_agree() {
        let detector = DetectorModel::default();
        for attack in [
            AttackSpec::Depolarize { p: 0.3 },
            AttackSpec::InterceptResend { photons: 3 },
            AttackSpec::CoincidenceInjection { n: 4, c: 1 },
        ] {
            for protocol in [Protocol::Bb84, Protocol::Bbm92] {
                let state = eve_state(&attack, protocol).unwrap();
                let actual = exact_joint_law(&state, protocol, Mode::Actual, &detector).unwrap();
                assert_abs_diff_eq!(actual.total(), 1.0, epsilon = 1e-12);
                for mode in [Mode::Edp1, Mode::Edp2] {
                    let virt = exact_joint_law(&state, protocol, mode, &detector).unwrap();
                    assert!(actual.max_abs_diff(&virt) < 1e-10, "{attack:?} {protocol:?} {mode:?}");
                }
                // the virtual z-z law gives the same bit error as the state route
                let rates = exact_error_rates_of(&state, protocol).unwrap();
                assert_abs_diff_eq!(actual.error_rate(BasisLabel::Z).unwrap(), rates.e_bit, epsilon = 1e-12);
                assert_abs_diff_eq!(actual.error_rate(BasisLabel::X).unwrap(), rates.e_ph, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn all_vacuum_is_undefined() {
        let state =
            CompositeBlockState::single(1, 0, crate::squash::DensityMatrix::maximally_mixed(2)).unwrap();
        assert!(exact_error_rates_of(&state, Protocol::Bb84).is_err());
    }
}
