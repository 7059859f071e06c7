//! The `squashkit` command line.
//!
//! Exit codes are a stable contract: 0 on success, 1 when a check or a
//! simulation fails, 2 on a usage error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::povm::verify_povm_equivalence;
use crate::protocol::{
    binary_entropy, eve_state, key_rate, simulate, AttackSpec, Mode, Protocol, SimConfig, SimResult,
};
use crate::squash::{verify_completeness, verify_hadamard_invariance};
use crate::symfock::verify_lift_oracle;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the engine's worker threads.
pub const THREADS_ENV: &str = "SQUASHKIT_THREADS";

/// Largest photon number for which `verify` runs the tensor-space oracle.
pub const ORACLE_NMAX: usize = 6;

#[derive(Debug, Parser)]
#[command(name = "squashkit", version, about = "Squash operators for threshold-detector QKD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check completeness, POVM equivalence, Hadamard covariance and the lift oracle.
    Verify(VerifyArgs),
    /// Monte Carlo runs of BB84 or BBM92 against an attack.
    Simulate(SimulateArgs),
    /// One-way key rate, as a single value or a symmetric-error sweep.
    Keyrate(KeyrateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    Bb84,
    Bbm92,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Actual,
    Edp1,
    Edp2,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Bb84 => Protocol::Bb84,
            ProtocolArg::Bbm92 => Protocol::Bbm92,
        }
    }
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Actual => Mode::Actual,
            ModeArg::Edp1 => Mode::Edp1,
            ModeArg::Edp2 => Mode::Edp2,
        }
    }
}

fn positive_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err("must be a positive finite number".into())
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must lie in [0, 1]".into())
    }
}

fn error_rate(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=0.5).contains(&v) {
        Ok(v)
    } else {
        Err("error rates must lie in [0, 0.5]".into())
    }
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Check N = 1..=nmax.
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..=64))]
    nmax: u64,
    /// Every reported deviation must be strictly below this.
    #[arg(long, default_value_t = 1e-10, value_parser = positive_real)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    /// Random mixed states per N for the channel-level Hadamard check.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Random unitaries per N for the lift oracle.
    #[arg(long, default_value_t = 100)]
    oracle_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    /// Repeat or separate with commas to run several modes.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "actual")]
    mode: Vec<ModeArg>,
    /// Attack as inline JSON; repeat for several attacks.
    #[arg(long, required_unless_present = "attack_file")]
    attack: Vec<String>,
    /// JSON file holding one attack object or an array of them.
    #[arg(long)]
    attack_file: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long)]
    seed: u64,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
    /// Leave runtime_ms empty so that output depends only on the inputs.
    #[arg(long)]
    no_timing: bool,
    /// Assign a random bit to vacuum rounds instead of discarding them.
    #[arg(long)]
    vacuum_random_bit: bool,
    /// Multiplier on the key rate for the single-photon share of the source.
    #[arg(long, default_value_t = 1.0, value_parser = unit_interval)]
    single_photon_fraction: f64,
}

#[derive(Debug, Args)]
struct KeyrateArgs {
    #[arg(long, value_parser = error_rate, requires = "eph", conflicts_with = "sweep")]
    ebit: Option<f64>,
    #[arg(long, value_parser = error_rate, requires = "ebit")]
    eph: Option<f64>,
    /// `start:stop:step` over symmetric error rates e_bit = e_ph = e.
    #[arg(long, required_unless_present = "ebit")]
    sweep: Option<String>,
    /// Write the sweep CSV here instead of standard output.
    #[arg(long, requires = "sweep")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
}

/// Per-N deviations reported by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub n_photons: usize,
    pub completeness: f64,
    pub binomial_diag: f64,
    pub povm_bit0: f64,
    pub povm_bit1: f64,
    pub povm_z: f64,
    pub kraus_phase_ok: bool,
    pub kraus_max_dev: f64,
    pub channel_max_dev: f64,
    /// Absent above the oracle's photon-number limit.
    pub oracle_max_dev: Option<f64>,
}

impl VerifyRow {
    fn deviations(&self) -> impl Iterator<Item = f64> + '_ {
        [
            self.completeness,
            self.binomial_diag,
            self.povm_bit0,
            self.povm_bit1,
            self.povm_z,
            self.kraus_max_dev,
            self.channel_max_dev,
        ]
        .into_iter()
        .chain(self.oracle_max_dev)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.kraus_phase_ok && self.deviations().all(|d| d < tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tol: f64,
    pub passed: bool,
    pub rows: Vec<VerifyRow>,
}

/// One output row of `simulate`; absent values become empty CSV fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub protocol: Protocol,
    pub mode: Mode,
    /// The attack as canonical JSON.
    pub attack: String,
    pub trials: u64,
    pub seed: u64,
    pub sifted: u64,
    pub e_bit: Option<f64>,
    pub e_ph: Option<f64>,
    pub key_rate: Option<f64>,
    pub runtime_ms: Option<f64>,
}

impl SimulationRow {
    pub fn from_result(attack: &AttackSpec, r: &SimResult, runtime_ms: Option<f64>) -> Self {
        Self {
            protocol: r.protocol,
            mode: r.mode,
            attack: serde_json::to_string(attack).expect("attack specs serialize"),
            trials: r.trials,
            seed: r.seed,
            sifted: r.sifted,
            e_bit: r.e_bit,
            e_ph: r.e_ph,
            key_rate: r.key_rate,
            runtime_ms,
        }
    }
}

/// Key-rate evaluation at one error pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRatePoint {
    pub e_bit: f64,
    pub e_ph: f64,
    pub key_rate: f64,
}

/// JSON with every float written to 17 significant digits.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    struct Sig17;
    impl serde_json::ser::Formatter for Sig17 {
        fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
            write!(w, "{v:.16e}")
        }
        fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
            self.write_f64(w, v as f64)
        }
    }
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Six significant digits for human-readable output.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0.0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').len());
    }
    if s.ends_with('.') || !s.contains('.') {
        s.truncate(s.trim_end_matches('.').len());
        s.push_str(".0");
    }
    s
}

fn opt6(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), sig6)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let outcome = match cli.command {
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Keyrate(a) => cmd_keyrate(&a, out),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure { code, message }) => {
            let _ = writeln!(err, "squashkit: {message}");
            code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn failure(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_FAILURE, message: message.into() }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        failure(format!("i/o error: {e}"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        failure(e.to_string())
    }
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let nmax = a.nmax as usize;
    let mut rows = Vec::with_capacity(nmax);
    for n in 1..=nmax {
        let comp = verify_completeness(n)?;
        let povm = verify_povm_equivalence(n)?;
        let had = verify_hadamard_invariance(n, a.trials, a.seed)?;
        let oracle = match n <= ORACLE_NMAX {
            true => Some(verify_lift_oracle(n, a.oracle_trials, a.seed)?.max_dev),
            false => None,
        };
        rows.push(VerifyRow {
            n_photons: n,
            completeness: comp.max_deviation,
            binomial_diag: comp.binomial_diag_deviation,
            povm_bit0: povm.max_dev_bit0,
            povm_bit1: povm.max_dev_bit1,
            povm_z: povm.max_dev_z,
            kraus_phase_ok: had.kraus_phase_ok,
            kraus_max_dev: had.kraus_max_dev,
            channel_max_dev: had.channel_max_dev,
            oracle_max_dev: oracle,
        });
    }
    let passed = rows.iter().all(|r| r.passes(a.tol));
    let report = VerifyReport { tol: a.tol, passed, rows };
    match a.format {
        ReportFormat::Json => writeln!(out, "{}", to_json(&report))?,
        ReportFormat::Text => write_verify_text(&report, out)?,
    }
    Ok(if passed { EXIT_OK } else { EXIT_FAILURE })
}

fn write_verify_text(report: &VerifyReport, out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "{:>3} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}  status",
        "N", "complete", "binomial", "povm_bit0", "povm_bit1", "povm_z", "kraus", "channel", "oracle"
    )?;
    for r in &report.rows {
        writeln!(
            out,
            "{:>3} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}  {}",
            r.n_photons,
            sig6(r.completeness),
            sig6(r.binomial_diag),
            sig6(r.povm_bit0),
            sig6(r.povm_bit1),
            sig6(r.povm_z),
            sig6(r.kraus_max_dev),
            sig6(r.channel_max_dev),
            opt6(r.oracle_max_dev),
            if r.passes(report.tol) { "ok" } else { "FAIL" }
        )?;
    }
    let verdict = if report.passed { "all checks passed" } else { "checks FAILED" };
    writeln!(out, "{verdict} at tol {}", sig6(report.tol))
}

fn parse_attacks(a: &SimulateArgs) -> Result<Vec<AttackSpec>, Failure> {
    let mut attacks = Vec::new();
    for text in &a.attack {
        attacks.push(serde_json::from_str(text).map_err(|e| usage(format!("bad --attack JSON: {e}")))?);
    }
    if let Some(path) = &a.attack_file {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("bad JSON in {}: {e}", path.display())))?;
        let parsed = match value {
            serde_json::Value::Array(items) => items.into_iter().map(serde_json::from_value).collect(),
            other => serde_json::from_value(other).map(|a| vec![a]),
        };
        attacks.extend(parsed.map_err(|e| usage(format!("bad attack in {}: {e}", path.display())))?);
    }
    Ok(attacks)
}

fn threads_from_env() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(usage(format!("{THREADS_ENV}: {e}"))),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let threads = threads_from_env()?;
    let attacks = parse_attacks(a)?;
    let protocol = Protocol::from(a.protocol);
    let mut rows = Vec::new();
    for attack in &attacks {
        // an attack that cannot be turned into a state is a configuration error
        let state = eve_state(attack, protocol).map_err(|e| usage(e.to_string()))?;
        for &mode in &a.mode {
            let mut config = SimConfig::new(protocol, mode.into(), a.trials, a.seed);
            config.threads = threads;
            config.detector.vacuum_random_bit = a.vacuum_random_bit;
            config.single_photon_fraction = a.single_photon_fraction;
            let start = Instant::now();
            let result = simulate(&state, config)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            rows.push(SimulationRow::from_result(attack, &result, (!a.no_timing).then_some(elapsed)));
        }
    }
    let body = match a.format {
        TableFormat::Csv => simulation_csv(&rows)?,
        TableFormat::Json => format!("{}\n", to_json(&rows)),
    };
    write_body(a.out.as_ref(), &body, out)?;
    Ok(EXIT_OK)
}

fn write_body(path: Option<&PathBuf>, body: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| failure(format!("cannot write {}: {e}", p.display()))),
        None => Ok(out.write_all(body.as_bytes())?),
    }
}

fn csv_float(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// RFC 4180 table; the header is written even when there are no rows.
pub fn simulation_csv(rows: &[SimulationRow]) -> io::Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record([
        "protocol", "mode", "attack", "trials", "seed", "sifted", "e_bit", "e_ph", "key_rate", "runtime_ms",
    ])?;
    for r in rows {
        w.write_record([
            r.protocol.name().to_string(),
            r.mode.name().to_string(),
            r.attack.clone(),
            r.trials.to_string(),
            r.seed.to_string(),
            r.sifted.to_string(),
            csv_float(r.e_bit),
            csv_float(r.e_ph),
            csv_float(r.key_rate),
            csv_float(r.runtime_ms),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
}

/// Points `start + i step` for `start:stop:step` within `[0, 0.5]`.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(format!("sweep must be start:stop:step, got {spec:?}"));
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("sweep value {s:?}: {e}"));
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(0.0..=0.5).contains(&start) || !(0.0..=0.5).contains(&stop) {
        return Err("sweep bounds must lie in [0, 0.5]".into());
    }
    if stop < start {
        return Err("sweep stop is below start".into());
    }
    if !(step.is_finite() && step > 0.0) {
        return Err("sweep step must be positive".into());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| (start + i as f64 * step).min(stop)).collect())
}

fn cmd_keyrate(a: &KeyrateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if let (Some(e_bit), Some(e_ph)) = (a.ebit, a.eph) {
        let point = KeyRatePoint { e_bit, e_ph, key_rate: key_rate(e_bit, e_ph)? };
        match a.format {
            ReportFormat::Json => writeln!(out, "{}", to_json(&point))?,
            ReportFormat::Text => writeln!(out, "{}", sig6(point.key_rate))?,
        }
        return Ok(EXIT_OK);
    }
    let spec = a.sweep.as_deref().ok_or_else(|| usage("give --ebit and --eph, or --sweep"))?;
    let points = parse_sweep(spec).map_err(usage)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(["e", "H2(e)", "rate"]).map_err(io::Error::from)?;
    for e in points {
        let rate = key_rate(e, e)?;
        w.write_record([format!("{e:?}"), format!("{:?}", binary_entropy(e)), format!("{rate:?}")]).map_err(io::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| failure(e.to_string()))?;
    write_body(a.out.as_ref(), &String::from_utf8_lossy(&bytes), out)?;
    Ok(EXIT_OK)
}
