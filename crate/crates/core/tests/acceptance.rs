//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any failure.
//!
//! Every tolerance, trial count, seed and time limit is pinned below.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use squashkit::linalg::{identity, max_abs_diff, CMatrix};
use squashkit::povm::{verify_povm_equivalence, CompositeBlockState, DetectorModel};
use squashkit::protocol::{
    eve_state, exact_error_rates, exact_joint_law, key_rate, simulate, stats, symmetric_threshold, AttackSpec,
    DensityBlockSpec, Mode, Protocol, SimConfig, SimResult,
};
use squashkit::random::{stream, wishart_density};
use squashkit::squash::{build_squash, verify_completeness, verify_hadamard_invariance};
use squashkit::symfock::verify_lift_oracle;

const NMAX: usize = 12;
const COMPLETENESS_TOL: f64 = 1e-10;
const BINOMIAL_DIAG_TOL: f64 = 1e-12;
const POVM_TOL: f64 = 1e-10;
const HADAMARD_TOL: f64 = 1e-10;
const HADAMARD_STATES: usize = 50;
const ORACLE_NMAX: usize = 6;
const ORACLE_UNITARIES: usize = 100;
const ORACLE_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-14;
const EXACT_LAW_TOL: f64 = 1e-10;
const ALPHA: f64 = 0.001;
const MC_TRIALS: u64 = 100_000;
const SIGMAS: f64 = 4.0;
const THRESHOLD_RANGE: (f64, f64) = (0.1099, 0.1101);
const DEPOLARIZE_TOL: f64 = 1e-12;
const KEY_RATE_NEAR_ONE: f64 = 1e-3;
const RANDOM_STATES: u64 = 3;
const SEED: u64 = 20_240_601;

type Outcome = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn completeness() -> Outcome {
    let (mut worst, mut worst_diag) = (0.0f64, 0.0f64);
    for n in 1..=NMAX {
        let r = verify_completeness(n).map_err(|e| e.to_string())?;
        ensure(r.max_deviation < COMPLETENESS_TOL, || format!("N={n}: |ΣF†F - I| = {:e}", r.max_deviation))?;
        ensure(r.binomial_diag_deviation < BINOMIAL_DIAG_TOL, || {
            format!("N={n}: binomial diagonal off by {:e}", r.binomial_diag_deviation)
        })?;
        worst = worst.max(r.max_deviation);
        worst_diag = worst_diag.max(r.binomial_diag_deviation);
    }
    Ok(format!("max dev {worst:.3e}, diagonal {worst_diag:.3e}"))
}

fn povm_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=NMAX {
        let r = verify_povm_equivalence(n).map_err(|e| e.to_string())?;
        ensure(r.max_deviation() < POVM_TOL, || format!("N={n}: {r:?}"))?;
        worst = worst.max(r.max_deviation());
    }
    Ok(format!("max dev {worst:.3e}"))
}

fn hadamard() -> Outcome {
    let (mut kraus, mut channel) = (0.0f64, 0.0f64);
    for n in 1..=NMAX {
        // the channel-level check is required up to N = 10; running it to NMAX costs little
        let r = verify_hadamard_invariance(n, HADAMARD_STATES, SEED).map_err(|e| e.to_string())?;
        ensure(r.kraus_phase_ok && r.kraus_max_dev < HADAMARD_TOL, || format!("N={n}: Kraus dev {:e}", r.kraus_max_dev))?;
        ensure(r.channel_max_dev < HADAMARD_TOL, || format!("N={n}: channel dev {:e}", r.channel_max_dev))?;
        kraus = kraus.max(r.kraus_max_dev);
        channel = channel.max(r.channel_max_dev);
    }
    Ok(format!("Kraus {kraus:.3e}, channel {channel:.3e}"))
}

fn lift_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=ORACLE_NMAX {
        let r = verify_lift_oracle(n, ORACLE_UNITARIES, SEED).map_err(|e| e.to_string())?;
        ensure(r.max_dev < ORACLE_TOL, || format!("N={n}: {:e}", r.max_dev))?;
        worst = worst.max(r.max_dev);
    }
    Ok(format!("max dev {worst:.3e} over {ORACLE_UNITARIES} unitaries per N"))
}

fn single_photon_identity() -> Outcome {
    let ch = build_squash(1).map_err(|e| e.to_string())?;
    ensure(ch.len() == 1, || format!("{} Kraus operators", ch.len()))?;
    let k = &ch.ops()[0];
    let phase = k[(0, 0)] / k[(0, 0)].norm();
    let dev = max_abs_diff(k, &(identity(2) * phase));
    ensure(dev < IDENTITY_TOL, || format!("deviation from phase·I is {dev:e}"))?;
    Ok(format!("deviation {dev:.3e}"))
}

/// Random multi-block states written as `fixed_block` attacks.
fn random_fixed_blocks(protocol: Protocol) -> Vec<AttackSpec> {
    let keys: &[(usize, usize)] = match protocol {
        Protocol::Bb84 => &[(1, 0), (1, 1), (1, 2), (1, 3)],
        Protocol::Bbm92 => &[(0, 2), (1, 1), (2, 1), (2, 3), (3, 3)],
    };
    (0..RANDOM_STATES)
        .map(|k| {
            let mut rng = stream(SEED ^ 0xB10C, k);
            let raw: Vec<f64> = keys.iter().map(|_| rand::Rng::random_range(&mut rng, 0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let blocks = keys
                .iter()
                .zip(&raw)
                .map(|(&(m, n), &w)| {
                    let rho: CMatrix = wishart_density((m + 1) * (n + 1), &mut rng);
                    DensityBlockSpec::from_matrix(m, n, w / total, &rho)
                })
                .collect();
            AttackSpec::FixedBlock { blocks }
        })
        .collect()
}

fn run(state: &CompositeBlockState, protocol: Protocol, mode: Mode, seed: u64) -> Result<SimResult, String> {
    simulate(state, SimConfig::new(protocol, mode, MC_TRIALS, seed)).map_err(|e| e.to_string())
}

/// Exact joint laws of all modes agree, and sampled actual and virtual tallies
/// are not distinguishable by a homogeneity test.
fn equivalence(protocol: Protocol, attacks: &[AttackSpec], virtual_modes: &[Mode]) -> Outcome {
    let detector = DetectorModel::default();
    let (mut worst_law, mut min_p) = (0.0f64, 1.0f64);
    for (i, attack) in attacks.iter().enumerate() {
        let state = eve_state(attack, protocol).map_err(|e| e.to_string())?;
        let law = |mode| exact_joint_law(&state, protocol, mode, &detector).map_err(|e| e.to_string());
        let actual_law = law(Mode::Actual)?;
        let seed = SEED + 10 * i as u64;
        let actual = run(&state, protocol, Mode::Actual, seed)?;
        for (j, &mode) in virtual_modes.iter().enumerate() {
            let dev = actual_law.max_abs_diff(&law(mode)?);
            ensure(dev < EXACT_LAW_TOL, || format!("{} {}: exact law differs by {dev:e}", attack.label(), mode.name()))?;
            worst_law = worst_law.max(dev);
            let sampled = run(&state, protocol, mode, seed + 1 + j as u64)?;
            let test = stats::homogeneity(&actual.tally.joint_flat(), &sampled.tally.joint_flat());
            ensure(!test.rejects(ALPHA), || {
                format!("{} {}: χ² = {:.3} on {} dof, p = {:.2e}", attack.label(), mode.name(), test.statistic, test.dof, test.p_value)
            })?;
            min_p = min_p.min(test.p_value);
        }
    }
    Ok(format!("{} attacks, exact law dev {worst_law:.3e}, min χ² p-value {min_p:.4}", attacks.len()))
}

fn actual_vs_virtual() -> Outcome {
    let mut notes = Vec::new();
    for protocol in [Protocol::Bb84, Protocol::Bbm92] {
        let mut attacks = AttackSpec::shipped();
        attacks.extend(random_fixed_blocks(protocol));
        notes.push(format!("{}: {}", protocol.name(), equivalence(protocol, &attacks, &[Mode::Edp1, Mode::Edp2])?));
    }
    Ok(notes.join("; "))
}

fn key_rate_figures() -> Outcome {
    let r00 = key_rate(0.0, 0.0).map_err(|e| e.to_string())?;
    ensure(r00 == 1.0, || format!("R(0,0) = {r00:e}"))?;
    let e = symmetric_threshold();
    ensure((THRESHOLD_RANGE.0..=THRESHOLD_RANGE.1).contains(&e), || format!("threshold {e}"))?;
    let r = key_rate(0.25, 0.25).map_err(|e| e.to_string())?;
    ensure(r == 0.0, || format!("R(0.25,0.25) = {r:e}"))?;
    Ok(format!("threshold e* = {e:.6}"))
}

fn within_sigmas(observed: f64, p: f64, n: u64) -> bool {
    (observed - p).abs() <= SIGMAS * (p * (1.0 - p) / n as f64).sqrt()
}

fn depolarizing() -> Outcome {
    let mut notes = Vec::new();
    for p in [0.0, 0.1, 0.22] {
        let attack = AttackSpec::Depolarize { p };
        let exact = exact_error_rates(&attack, Protocol::Bb84).map_err(|e| e.to_string())?;
        ensure((exact.e_bit - p / 2.0).abs() < DEPOLARIZE_TOL && (exact.e_ph - p / 2.0).abs() < DEPOLARIZE_TOL, || {
            format!("p={p}: exact ({}, {})", exact.e_bit, exact.e_ph)
        })?;
        let state = eve_state(&attack, Protocol::Bb84).map_err(|e| e.to_string())?;
        let r = run(&state, Protocol::Bb84, Mode::Actual, SEED)?;
        let e_bit = r.e_bit.ok_or("no sifted z rounds")?;
        ensure(within_sigmas(e_bit, p / 2.0, r.tally.sifted_z), || {
            format!("p={p}: sampled e_bit {e_bit} over {} rounds", r.tally.sifted_z)
        })?;
        notes.push(format!("p={p}: {e_bit:.4}"));
    }
    Ok(format!("sampled e_bit {}", notes.join(", ")))
}

fn bbm92() -> Outcome {
    let honest = eve_state(&AttackSpec::bell_source(), Protocol::Bbm92).map_err(|e| e.to_string())?;
    let r = run(&honest, Protocol::Bbm92, Mode::Actual, SEED)?;
    ensure(r.e_bit == Some(0.0), || format!("honest e_bit {:?}", r.e_bit))?;
    let rate = r.key_rate.ok_or("no key rate")?;
    ensure((rate - 1.0).abs() < KEY_RATE_NEAR_ONE, || format!("honest key rate {rate}"))?;

    let injected = AttackSpec::CoincidenceInjection { n: 2, c: 1 };
    let state = eve_state(&injected, Protocol::Bbm92).map_err(|e| e.to_string())?;
    let r = run(&state, Protocol::Bbm92, Mode::Actual, SEED)?;
    let e_bit = r.e_bit.ok_or("no sifted z rounds")?;
    ensure(within_sigmas(e_bit, 0.5, r.tally.sifted_z), || format!("double coincidence e_bit {e_bit}"))?;

    let mut attacks = AttackSpec::shipped();
    attacks.extend(random_fixed_blocks(Protocol::Bbm92));
    let eq = equivalence(Protocol::Bbm92, &attacks, &[Mode::Edp2])?;
    Ok(format!("honest R = {rate}, coincidence e_bit = {e_bit:.4}, actual vs edp2: {eq}"))
}

fn cli_output(threads: &str, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_squashkit"))
        .args(args)
        .env("SQUASHKIT_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))?;
    Ok(out.stdout)
}

fn reproducibility() -> Outcome {
    let commands: [&[&str]; 3] = [
        &[
            "simulate", "--protocol", "bb84", "--mode", "actual,edp1,edp2",
            "--attack", r#"{"kind":"depolarize","p":0.1}"#,
            "--attack", r#"{"kind":"coincidence_injection","n":3,"c":1}"#,
            "--trials", "50000", "--seed", "7", "--no-timing",
        ],
        &[
            "simulate", "--protocol", "bbm92", "--mode", "actual", "--mode", "edp2",
            "--attack", r#"{"kind":"intercept_resend","photons":2}"#,
            "--trials", "30001", "--seed", "18446744073709551615", "--no-timing",
        ],
        &[
            "simulate", "--protocol", "bbm92", "--attack", r#"{"kind":"coincidence_injection","n":2,"c":1}"#,
            "--trials", "20000", "--seed", "3", "--no-timing", "--format", "json",
        ],
    ];
    for args in commands {
        let reference = cli_output("1", args)?;
        for threads in ["1", "2", "4"] {
            let again = cli_output(threads, args)?;
            ensure(again == reference, || format!("output differs with SQUASHKIT_THREADS={threads} for {args:?}"))?;
        }
    }
    Ok(format!("{} commands byte-identical across 1, 2 and 4 threads", commands.len()))
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { id: 1, name: "completeness", limit: secs(5), check: completeness },
        Criterion { id: 2, name: "POVM equivalence", limit: secs(5), check: povm_equivalence },
        Criterion { id: 3, name: "Hadamard covariance", limit: secs(10), check: hadamard },
        Criterion { id: 4, name: "lift oracle", limit: secs(30), check: lift_oracle },
        Criterion { id: 5, name: "N=1 identity squash", limit: None, check: single_photon_identity },
        Criterion { id: 6, name: "actual vs virtual equivalence", limit: secs(60), check: actual_vs_virtual },
        Criterion { id: 7, name: "key-rate figures", limit: None, check: key_rate_figures },
        Criterion { id: 8, name: "depolarizing end-to-end", limit: None, check: depolarizing },
        Criterion { id: 9, name: "BBM92", limit: secs(60), check: bbm92 },
        Criterion { id: 10, name: "reproducibility", limit: None, check: reproducibility },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("[PASS] criterion {}: {} ({detail}; {elapsed:.2?})", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {}: {} ({why}; {elapsed:.2?})", c.id, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
