//! Monte Carlo engine.
//!
//! Each trial owns the random stream `(seed, trial index)`, so results do not
//! depend on how trials are scheduled across threads. Tallies are integer
//! counts merged by addition.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::{CATEGORIES, DISCARDED};
use super::{attack::eve_state, basis_pair_index, rates, side_process, AttackSpec, Mode, Protocol, Side, BASES};
use crate::error::{domain, Error, Result};
use crate::povm::{classify_click, weighted_index, CompositeBlockState, Detection, DetectorModel};
use crate::random::stream;
use crate::squash::apply_local_channels;
use crate::symfock::BasisLabel;

const BATCH: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    pub detector: DetectorModel,
    /// Multiplier on the key rate for the single-photon share of the source.
    pub single_photon_fraction: f64,
}

impl SimConfig {
    pub fn new(protocol: Protocol, mode: Mode, trials: u64, seed: u64) -> Self {
        Self {
            protocol,
            mode,
            trials,
            seed,
            threads: None,
            detector: DetectorModel::default(),
            single_photon_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundClass {
    Sifted,
    BasisMismatch,
    Vacuum,
}

/// Everything observable about one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub alice_basis: BasisLabel,
    pub bob_basis: BasisLabel,
    pub alice_bit: Option<u8>,
    pub bob_bit: Option<u8>,
    pub alice_photons: usize,
    pub bob_photons: usize,
    pub outcome_class: RoundClass,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockTally {
    pub rounds: u64,
    pub sifted: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub rounds: u64,
    pub vacuum: u64,
    pub mismatched: u64,
    pub sifted_z: u64,
    pub errors_z: u64,
    pub sifted_x: u64,
    pub errors_x: u64,
    /// Counts per `[ZZ, ZX, XZ, XX]` and category (bit pairs, then discarded).
    pub joint: [[u64; CATEGORIES]; 4],
    /// Per (Alice, Bob) photon-number block.
    pub per_block: BTreeMap<(usize, usize), BlockTally>,
}

impl Tally {
    pub fn record(&mut self, r: &RoundRecord) {
        self.rounds += 1;
        let block = self.per_block.entry((r.alice_photons, r.bob_photons)).or_default();
        block.rounds += 1;
        let pair = basis_pair_index(r.alice_basis, r.bob_basis);
        match (r.alice_bit, r.bob_bit) {
            (Some(a), Some(b)) => self.joint[pair][(2 * a + b) as usize] += 1,
            _ => self.joint[pair][DISCARDED] += 1,
        }
        match r.outcome_class {
            RoundClass::Vacuum => self.vacuum += 1,
            RoundClass::BasisMismatch => self.mismatched += 1,
            RoundClass::Sifted => {
                let error = r.alice_bit != r.bob_bit;
                block.sifted += 1;
                block.errors += error as u64;
                if r.alice_basis == BasisLabel::Z {
                    self.sifted_z += 1;
                    self.errors_z += error as u64;
                } else {
                    self.sifted_x += 1;
                    self.errors_x += error as u64;
                }
            }
        }
    }

    pub fn merge(mut self, other: Tally) -> Tally {
        self.rounds += other.rounds;
        self.vacuum += other.vacuum;
        self.mismatched += other.mismatched;
        self.sifted_z += other.sifted_z;
        self.errors_z += other.errors_z;
        self.sifted_x += other.sifted_x;
        self.errors_x += other.errors_x;
        for (row, other_row) in self.joint.iter_mut().zip(other.joint) {
            for (x, y) in row.iter_mut().zip(other_row) {
                *x += y;
            }
        }
        for (k, v) in other.per_block {
            let slot = self.per_block.entry(k).or_default();
            slot.rounds += v.rounds;
            slot.sifted += v.sifted;
            slot.errors += v.errors;
        }
        self
    }

    pub fn sifted(&self) -> u64 {
        self.sifted_z + self.sifted_x
    }

    pub fn joint_flat(&self) -> Vec<u64> {
        self.joint.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub protocol: Protocol,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    pub sifted: u64,
    /// Error fraction of Z-basis sifted rounds; absent without such rounds.
    pub e_bit: Option<f64>,
    /// Error fraction of X-basis sifted rounds, reported for virtual runs only.
    pub e_ph: Option<f64>,
    pub key_rate: Option<f64>,
    pub tally: Tally,
}

impl SimResult {
    /// Error fraction of X-basis sifted rounds, whatever the mode.
    pub fn x_error_rate(&self) -> Option<f64> {
        ratio(self.tally.errors_x, self.tally.sifted_x)
    }

    /// True when no round survived sifting and every rate is undefined.
    pub fn is_undefined(&self) -> bool {
        self.sifted == 0
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Outcome distribution of one block under one basis pair, after the local
/// operations of the chosen mode.
struct JointSampler {
    index: WeightedIndex<f64>,
    alice_readout: usize,
    bob_readout: usize,
    bob_dim: usize,
}

/// A prepared simulation for one state and configuration.
pub struct Simulator {
    config: SimConfig,
    keys: Vec<(usize, usize)>,
    block_index: WeightedIndex<f64>,
    samplers: Vec<[JointSampler; 4]>,
}

impl Simulator {
    pub fn new(state: &CompositeBlockState, config: SimConfig) -> Result<Self> {
        if config.trials == 0 {
            return domain("at least one trial is required");
        }
        if state.blocks().is_empty() {
            return domain("state has no blocks");
        }
        let keys: Vec<_> = state.blocks().keys().copied().collect();
        let block_index = weighted_index(state.blocks().values().map(|b| b.weight))?;
        let mut samplers = Vec::with_capacity(keys.len());
        for (&(m, n), block) in state.blocks() {
            let mut per_pair = Vec::with_capacity(4);
            for a_basis in BASES {
                for b_basis in BASES {
                    let alice = side_process(config.protocol, config.mode, Side::Alice, m, a_basis)?;
                    let bob = side_process(config.protocol, config.mode, Side::Bob, n, b_basis)?;
                    let out = apply_local_channels(&block.rho, m + 1, alice.channel.as_ref(), bob.channel.as_ref())?;
                    per_pair.push(JointSampler {
                        index: weighted_index(out.matrix().diagonal().iter().map(|z| z.re))?,
                        alice_readout: alice.readout_photons,
                        bob_readout: bob.readout_photons,
                        bob_dim: bob.readout_photons + 1,
                    });
                }
            }
            let per_pair: [JointSampler; 4] = per_pair.try_into().map_err(|_| Error::Domain("basis pairs".into()))?;
            samplers.push(per_pair);
        }
        Ok(Self { config, keys, block_index, samplers })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Plays trial `trial` on its own stream.
    pub fn round(&self, trial: u64) -> RoundRecord {
        let mut rng = stream(self.config.seed, trial);
        let k = self.block_index.sample(&mut rng);
        let (alice_photons, bob_photons) = self.keys[k];
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| if rng.random::<bool>() { BasisLabel::X } else { BasisLabel::Z };
        let alice_basis = pick(&mut rng);
        let bob_basis = pick(&mut rng);
        let sampler = &self.samplers[k][basis_pair_index(alice_basis, bob_basis)];
        let idx = sampler.index.sample(&mut rng);
        let detector = &self.config.detector;
        let alice = detector.resolve(classify_click(sampler.alice_readout, idx / sampler.bob_dim), &mut rng);
        let bob = detector.resolve(classify_click(sampler.bob_readout, idx % sampler.bob_dim), &mut rng);
        let outcome_class = if alice == Detection::Vacuum || bob == Detection::Vacuum {
            RoundClass::Vacuum
        } else if alice_basis != bob_basis {
            RoundClass::BasisMismatch
        } else {
            RoundClass::Sifted
        };
        RoundRecord {
            alice_basis,
            bob_basis,
            alice_bit: alice.bit(),
            bob_bit: bob.bit(),
            alice_photons,
            bob_photons,
            outcome_class,
        }
    }

    fn tally_range(&self, start: u64, end: u64) -> Tally {
        let mut t = Tally::default();
        for trial in start..end {
            t.record(&self.round(trial));
        }
        t
    }

    pub fn run(&self) -> Result<SimResult> {
        let trials = self.config.trials;
        let batches = trials.div_ceil(BATCH);
        let work = || {
            (0..batches)
                .into_par_iter()
                .map(|i| self.tally_range(i * BATCH, ((i + 1) * BATCH).min(trials)))
                .reduce(Tally::default, Tally::merge)
        };
        let tally = match self.config.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Resource(format!("thread pool: {e}")))?
                .install(work),
            None => work(),
        };
        Ok(self.finish(tally))
    }

    fn finish(&self, tally: Tally) -> SimResult {
        let e_bit = ratio(tally.errors_z, tally.sifted_z);
        let e_x = ratio(tally.errors_x, tally.sifted_x);
        let e_ph = if self.config.mode.is_virtual() { e_x } else { None };
        // sampled rates can land just above 1/2 when the truth is 1/2
        let clamp = |e: f64| e.clamp(0.0, 0.5);
        let key_rate = match (e_bit, e_x) {
            (Some(b), Some(p)) => {
                rates::key_rate_scaled(clamp(b), clamp(p), self.config.single_photon_fraction).ok()
            }
            _ => None,
        };
        SimResult {
            protocol: self.config.protocol,
            mode: self.config.mode,
            trials: self.config.trials,
            seed: self.config.seed,
            sifted: tally.sifted(),
            e_bit,
            e_ph,
            key_rate,
            tally,
        }
    }
}

/// Runs `config` on an explicit block state.
pub fn simulate(state: &CompositeBlockState, config: SimConfig) -> Result<SimResult> {
    if !(0.0..=1.0).contains(&config.single_photon_fraction) {
        return domain("single-photon fraction outside [0, 1]");
    }
    Simulator::new(state, config)?.run()
}

pub fn run_bb84_actual(attack: &AttackSpec, trials: u64, seed: u64) -> Result<SimResult> {
    let state = eve_state(attack, Protocol::Bb84)?;
    simulate(&state, SimConfig::new(Protocol::Bb84, Mode::Actual, trials, seed))
}

pub fn run_bb84_virtual(attack: &AttackSpec, trials: u64, seed: u64, variant: Mode) -> Result<SimResult> {
    if !variant.is_virtual() {
        return domain("virtual runs take EDP1 or EDP2");
    }
    let state = eve_state(attack, Protocol::Bb84)?;
    simulate(&state, SimConfig::new(Protocol::Bb84, variant, trials, seed))
}

pub fn run_bbm92(attack: &AttackSpec, trials: u64, seed: u64, mode: Mode) -> Result<SimResult> {
    let state = eve_state(attack, Protocol::Bbm92)?;
    simulate(&state, SimConfig::new(Protocol::Bbm92, mode, trials, seed))
}
