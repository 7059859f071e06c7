//! BB84 and BBM92 with threshold detectors: the actual protocol, the two
//! virtual entanglement-distillation protocols, error rates and key rates.

mod attack;
mod engine;
mod exact;
mod rates;
pub mod stats;

pub use attack::{bell_state, eve_state, AmplitudeBlockSpec, AttackSpec, DensityBlockSpec};
pub use engine::{
    run_bb84_actual, run_bb84_virtual, run_bbm92, simulate, BlockTally, RoundClass, RoundRecord, SimConfig,
    SimResult, Simulator, Tally,
};
pub use exact::{exact_error_rates, exact_error_rates_of, exact_joint_law, ErrorRates, JointLaw};
pub use rates::{binary_entropy, key_rate, key_rate_scaled, symmetric_threshold};

use crate::error::{Error, Result};
use crate::linalg::{identity, CMatrix};
use crate::squash::{build_squash, KrausChannel};
use crate::symfock::{lift_gate, BasisLabel, SingleQubitGate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Alice holds the virtual qubit of a Bell pair; only Bob has threshold detectors.
    Bb84,
    /// An untrusted source feeds both parties, each with threshold detectors.
    Bbm92,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Bb84 => "bb84",
            Protocol::Bbm92 => "bbm92",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Phase modulation on the incoming photons, then threshold detection.
    Actual,
    /// Phase modulation on the photons, then squash, then qubit z measurement.
    Edp1,
    /// Squash first, then the basis rotation as a qubit gate, then z measurement.
    Edp2,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Actual => "actual",
            Mode::Edp1 => "edp1",
            Mode::Edp2 => "edp2",
        }
    }

    pub fn is_virtual(self) -> bool {
        !matches!(self, Mode::Actual)
    }
}

/// The two measurement bases used for key and checks.
pub const BASES: [BasisLabel; 2] = [BasisLabel::Z, BasisLabel::X];

/// Position of an (Alice, Bob) basis pair in `[ZZ, ZX, XZ, XX]`.
pub fn basis_pair_index(alice: BasisLabel, bob: BasisLabel) -> usize {
    let bit = |b: BasisLabel| match b {
        BasisLabel::Z => 0,
        BasisLabel::X => 1,
        BasisLabel::Y => panic!("Y is not a measurement basis of the protocol"),
    };
    2 * bit(alice) + bit(bob)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Alice,
    Bob,
}

/// What one party does to its share before reading out Z-symmetric indices.
///
/// `readout_photons` is the photon number whose click classification applies
/// to the output index: the incoming number for the physical detector, one for
/// a squashed qubit, zero for vacuum.
struct SideProcess {
    channel: Option<KrausChannel>,
    readout_photons: usize,
}

fn rotation(n_photons: usize, basis: BasisLabel) -> CMatrix {
    match basis {
        BasisLabel::X => lift_gate(&SingleQubitGate::modulator_hadamard(), n_photons),
        _ => identity(n_photons + 1),
    }
}

fn side_process(protocol: Protocol, mode: Mode, side: Side, n_photons: usize, basis: BasisLabel) -> Result<SideProcess> {
    if protocol == Protocol::Bb84 && side == Side::Alice {
        if n_photons != 1 {
            return Err(Error::Attack(format!("BB84 Alice holds a qubit, got a {n_photons}-photon block")));
        }
        return Ok(SideProcess { channel: Some(KrausChannel::unitary(rotation(1, basis))?), readout_photons: 1 });
    }
    if n_photons == 0 {
        return Ok(SideProcess { channel: None, readout_photons: 0 });
    }
    let channel = match mode {
        Mode::Actual => KrausChannel::unitary(rotation(n_photons, basis))?,
        Mode::Edp1 => build_squash(n_photons)?.preceded_by(&rotation(n_photons, basis)),
        Mode::Edp2 => build_squash(n_photons)?.followed_by(&rotation(1, basis)),
    };
    let readout_photons = if mode == Mode::Actual { n_photons } else { 1 };
    Ok(SideProcess { channel: Some(channel), readout_photons })
}
