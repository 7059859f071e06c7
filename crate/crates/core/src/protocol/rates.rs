use crate::error::{domain, Result};

/// `H₂(p) = -p log₂ p - (1-p) log₂(1-p)`, with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn check_rate(name: &str, e: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&e) {
        return domain(format!("{name} = {e} outside [0, 1/2]"));
    }
    Ok(())
}

/// One-way secret fraction `max(0, 1 - H₂(e_bit) - H₂(e_ph))`.
pub fn key_rate(e_bit: f64, e_ph: f64) -> Result<f64> {
    check_rate("e_bit", e_bit)?;
    check_rate("e_ph", e_ph)?;
    Ok((1.0 - binary_entropy(e_bit) - binary_entropy(e_ph)).max(0.0))
}

/// [`key_rate`] scaled by the fraction of signals known to be single photons.
pub fn key_rate_scaled(e_bit: f64, e_ph: f64, single_photon_fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&single_photon_fraction) {
        return domain(format!("single-photon fraction {single_photon_fraction} outside [0, 1]"));
    }
    Ok(single_photon_fraction * key_rate(e_bit, e_ph)?)
}

/// Symmetric error rate `e` at which `1 - 2 H₂(e)` reaches zero.
pub fn symmetric_threshold() -> f64 {
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - 2.0 * binary_entropy(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
