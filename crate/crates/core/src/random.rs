//! Seeded random draws: counter-based streams, Haar unitaries, Wishart states.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, CMatrix, CVector};
use crate::symfock::SingleQubitGate;

/// Independent stream `index` under master `seed`.
///
/// Every stream is a pure function of `(seed, index)`, so work split across
/// any number of threads consumes exactly the same random numbers.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> num_complex::Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Haar-distributed 2x2 unitary (Gram-Schmidt of a Ginibre matrix).
pub fn haar_gate<R: Rng + ?Sized>(rng: &mut R) -> SingleQubitGate {
    let g = ginibre(2, 2, rng);
    let v0 = g.column(0).normalize();
    let raw = g.column(1) - v0.clone() * v0.dotc(&g.column(1));
    let v1 = raw.normalize();
    let mut u = CMatrix::zeros(2, 2);
    u.set_column(0, &v0);
    u.set_column(1, &v1);
    SingleQubitGate::new(u).expect("Gram-Schmidt output is unitary")
}

/// Full-rank mixed state `G G† / tr(G G†)`.
pub fn wishart_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(dim, dim, rng);
    let w = &g * g.adjoint();
    let tr = w.trace().re;
    w.unscale(tr)
}

pub fn random_pure<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    CVector::from_fn(dim, |_, _| complex_normal(rng)).normalize()
}
