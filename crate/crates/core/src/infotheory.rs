//! Discrete information measures, all in bits.

use crate::error::{invalid, Result};
use crate::security::{log2_big, parity_count_exact};

const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Input priors and a row-stochastic matrix `P(outcome | input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalChannel {
    priors: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl ClassicalChannel {
    pub fn new(priors: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if priors.is_empty() || priors.len() != rows.len() {
            return Err(invalid(format!(
                "{} priors for {} channel rows",
                priors.len(),
                rows.len()
            )));
        }
        check_probability_vector(&priors, "priors")?;
        let width = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(invalid(format!("row {i} has {} outcomes, expected {width}", row.len())));
            }
            check_probability_vector(row, &format!("row {i}"))?;
        }
        Ok(Self { priors, rows })
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn outcome_distribution(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows[0].len()];
        for (pi, row) in self.priors.iter().zip(&self.rows) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += pi * p;
            }
        }
        out
    }

    /// Contribution of each outcome to the mutual information.
    pub fn information_by_outcome(&self) -> Vec<f64> {
        let marginal = self.outcome_distribution();
        (0..marginal.len())
            .map(|j| {
                self.priors
                    .iter()
                    .zip(&self.rows)
                    .map(|(pi, row)| {
                        let p = row[j];
                        if p > 0.0 && *pi > 0.0 {
                            pi * p * (p / marginal[j]).log2()
                        } else {
                            0.0
                        }
                    })
                    .sum()
            })
            .collect()
    }
}

fn check_probability_vector(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid(format!("{what} has entries outside [0, 1]: {v:?}")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
        return Err(invalid(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// Shannon entropy with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

/// `I(input; outcome)` for one fixed measurement.
pub fn mutual_information(ch: &ClassicalChannel) -> f64 {
    ch.information_by_outcome().iter().sum::<f64>().max(0.0)
}

/// Eve's three-outcome channel `{E_0, E_1, no fire}` with equal priors.
pub fn eve_channel(f: f64) -> Result<ClassicalChannel> {
    if !(0.0..=1.0).contains(&f) {
        return Err(invalid(format!("available fraction must lie in [0, 1], got {f}")));
    }
    ClassicalChannel::new(
        vec![0.5, 0.5],
        vec![vec![f, 0.0, 1.0 - f], vec![0.0, f, 1.0 - f]],
    )
}

/// Split of Eve's information between firing and non-firing outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoDecomposition {
    pub available: f64,
    pub unavailable: f64,
}

impl InfoDecomposition {
    pub fn total(&self) -> f64 {
        self.available + self.unavailable
    }
}

pub fn eve_information_decomposition(f: f64) -> Result<InfoDecomposition> {
    let terms = eve_channel(f)?.information_by_outcome();
    Ok(InfoDecomposition {
        available: terms[0] + terms[1],
        unavailable: terms[2],
    })
}

/// `S(sum pi_i rho_i) - sum pi_i S(rho_i)` for simultaneously diagonal states,
/// each given by its spectrum in the common eigenbasis.
pub fn holevo_quantity(priors: &[f64], spectra: &[Vec<f64>]) -> Result<f64> {
    if priors.len() != spectra.len() || priors.is_empty() {
        return Err(invalid("one spectrum per prior is required"));
    }
    check_probability_vector(priors, "priors")?;
    let dim = spectra[0].len();
    for (i, s) in spectra.iter().enumerate() {
        if s.len() != dim {
            return Err(invalid(format!("spectrum {i} has dimension {}, expected {dim}", s.len())));
        }
        check_probability_vector(s, &format!("spectrum {i}"))?;
    }
    let mut mixed = vec![0.0; dim];
    for (pi, s) in priors.iter().zip(spectra) {
        for (m, x) in mixed.iter_mut().zip(s) {
            *m += pi * x;
        }
    }
    let conditional: f64 = priors.iter().zip(spectra).map(|(pi, s)| pi * entropy(s)).sum();
    Ok((entropy(&mixed) - conditional).max(0.0))
}

/// `log2` of the number of parity-consistent block strings.
pub fn hartley_parity_info(blocks: u32, block_size: u32) -> Result<f64> {
    Ok(log2_big(&parity_count_exact(blocks, block_size)?))
}

/// `eta = hartley_parity_info / (n k)`.
pub fn parity_efficiency(blocks: u32, block_size: u32) -> Result<f64> {
    Ok(hartley_parity_info(blocks, block_size)? / (blocks as f64 * block_size as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_binary_channel_carries_one_bit() {
        let ch = ClassicalChannel::new(vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((mutual_information(&ch) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn independent_channel_carries_nothing() {
        let ch = ClassicalChannel::new(vec![0.3, 0.7], vec![vec![0.2, 0.8], vec![0.2, 0.8]]).unwrap();
        assert!(mutual_information(&ch).abs() < 1e-15);
    }

    #[test]
    fn eve_channel_information_equals_fraction() {
        let ch = eve_channel(0.6).unwrap();
        assert!((mutual_information(&ch) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn decomposition() {
        let d = eve_information_decomposition(0.0).unwrap();
        assert_eq!((d.available, d.unavailable), (0.0, 0.0));
        let d = eve_information_decomposition(1.0).unwrap();
        assert!((d.available - 1.0).abs() < 1e-15 && d.unavailable.abs() < 1e-15);
        let d = eve_information_decomposition(0.35).unwrap();
        assert!((d.available - 0.35).abs() < 1e-12 && d.unavailable.abs() < 1e-15);
        assert!((d.total() - mutual_information(&eve_channel(0.35).unwrap())).abs() < 1e-15);
    }

    #[test]
    fn holevo_cases() {
        let orth = holevo_quantity(&[0.5, 0.5], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((orth - 1.0).abs() < 1e-15);
        let same = holevo_quantity(&[0.5, 0.5], &[vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert!(same.abs() < 1e-15);
        assert!(holevo_quantity(&[0.5, 0.5], &[vec![0.3, 0.6], vec![0.3, 0.7]]).is_err());
        assert!(holevo_quantity(&[0.5, 0.5], &[vec![1.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn holevo_of_eve_ensemble() {
        // Closed form: S(mix) = H(f/2, f/2, 1-f), S(rho_i) = H(f, 1-f);
        // difference = f.
        let f: f64 = 0.6;
        let oracle = -(2.0 * (f / 2.0) * (f / 2.0).log2() + (1.0 - f) * (1.0 - f).log2())
            + (f * f.log2() + (1.0 - f) * (1.0 - f).log2());
        let h = holevo_quantity(&[0.5, 0.5], &[vec![f, 0.0, 1.0 - f], vec![0.0, f, 1.0 - f]]).unwrap();
        assert!((oracle - 0.6).abs() < 1e-12);
        assert!((h - oracle).abs() < 1e-12);
    }

    #[test]
    fn malformed_channels_are_rejected() {
        assert!(ClassicalChannel::new(vec![0.5, 0.6], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(ClassicalChannel::new(vec![1.0], vec![vec![0.5, 0.6]]).is_err());
        assert!(ClassicalChannel::new(vec![0.5, 0.5], vec![vec![1.0]]).is_err());
        assert!(ClassicalChannel::new(vec![0.5, 0.5], vec![vec![1.0], vec![0.5, 0.5]]).is_err());
        assert!(eve_channel(1.5).is_err());
    }

    #[test]
    fn hartley_small_cases() {
        assert!((hartley_parity_info(3, 2).unwrap() - 4.0).abs() < 1e-12);
        assert!((hartley_parity_info(2, 1).unwrap() - 1.0).abs() < 1e-12);
        // n k = 40, k = 4
        assert!((hartley_parity_info(10, 4).unwrap() - 37.0).abs() < 0.5);
        assert!(hartley_parity_info(0, 3).is_err());
    }
}
