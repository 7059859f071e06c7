//! Chi-square tests used to compare sampled round statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquare {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn finish(statistic: f64, dof: usize) -> ChiSquare {
    let p_value = if statistic.is_infinite() {
        0.0
    } else if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).expect("positive dof").sf(statistic)
    };
    ChiSquare { statistic, dof, p_value }
}

/// Two-sample homogeneity test on a shared set of categories.
///
/// Categories empty in both samples are dropped.
pub fn homogeneity(a: &[u64], b: &[u64]) -> ChiSquare {
    assert_eq!(a.len(), b.len());
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let mut stat = 0.0;
    let mut used: usize = 0;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        used += 1;
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    finish(stat, used.saturating_sub(1))
}

/// Goodness of fit of observed counts against exact category probabilities.
///
/// Categories with zero probability must have zero counts; a violation makes
/// the statistic infinite.
pub fn goodness_of_fit(counts: &[u64], probs: &[f64]) -> ChiSquare {
    assert_eq!(counts.len(), probs.len());
    let n = counts.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    let mut used: usize = 0;
    for (&k, &p) in counts.iter().zip(probs) {
        if p <= 1e-15 {
            if k > 0 {
                stat = f64::INFINITY;
            }
            continue;
        }
        used += 1;
        let e = n * p;
        stat += (k as f64 - e).powi(2) / e;
    }
    finish(stat, used.saturating_sub(1))
}
