//! Local guessing probability and min-entropy of a certified measurement.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, size, Result};
use crate::linalg::{inverse_sqrt, DensityMatrix, ComplexMatrix};
use crate::measurements::Povm;
use crate::random::{derive_seed, ginibre, seeded_rng};

/// Dimension of Eve's space in the brute-force oracle.
pub const ORACLE_EVE_DIM: usize = 2;

/// Tr[I_b ρ] for every outcome.
pub fn outcome_distribution(p: &Povm, rho: &DensityMatrix) -> Result<Vec<f64>> {
    if p.dim() != rho.dim() {
        return Err(size(format!(
            "POVM acts on dimension {}, state has dimension {}",
            p.dim(),
            rho.dim()
        )));
    }
    Ok(p.elements().iter().map(|e| trace_product(e, rho.matrix()).re).collect())
}

fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let n = a.rows();
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// max_b Tr[I_b ρ]: Eve's optimum is to announce the most likely outcome.
pub fn guessing_probability(p: &Povm, rho: &DensityMatrix) -> Result<f64> {
    Ok(outcome_distribution(p, rho)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// −log₂ of the guessing probability, in bits.
pub fn min_entropy(p: &Povm, rho: &DensityMatrix) -> Result<f64> {
    Ok(-guessing_probability(p, rho)?.log2())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomnessReport {
    pub outcome_probs: Vec<f64>,
    pub guessing_probability: f64,
    pub min_entropy_bits: f64,
    /// All probabilities equal 1/n within the tolerance.
    pub uniform: bool,
}

pub fn randomness_report(p: &Povm, rho: &DensityMatrix, tol: f64) -> Result<RandomnessReport> {
    let outcome_probs = outcome_distribution(p, rho)?;
    let g = outcome_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = outcome_probs.len() as f64;
    let uniform = outcome_probs.iter().all(|q| (q - 1.0 / n).abs() <= tol);
    Ok(RandomnessReport {
        outcome_probs,
        guessing_probability: g,
        min_entropy_bits: -g.log2(),
        uniform,
    })
}

fn random_eve_strategy(n: usize, seed: u64) -> Result<(Vec<ComplexMatrix>, ComplexMatrix)> {
    let mut rng = seeded_rng(seed);
    let e = ORACLE_EVE_DIM;
    let g: Vec<ComplexMatrix> = (0..n)
        .map(|_| {
            let a = ginibre(e, e, &mut rng);
            &a * &a.adjoint()
        })
        .collect();
    let total = g.iter().fold(ComplexMatrix::zeros(e, e), |acc, x| &acc + x);
    let s = inverse_sqrt(&total)?;
    let z = g.iter().map(|x| (&(&s * x) * &s).hermitian_part()).collect();
    let a = ginibre(e, e, &mut rng);
    let sigma = &a * &a.adjoint();
    let tr = sigma.trace().re;
    Ok((z, sigma.scale_real(1.0 / tr)))
}

/// Best value of Σ_b Tr[I_b ρ]·Tr[Z_b σ] over Eve's deterministic
/// announcements and `samples` seeded random (measurement, state) pairs on
/// a fixed-dimension Eve space.
pub fn eve_bruteforce_oracle(p: &Povm, rho: &DensityMatrix, samples: usize, seed: u64) -> Result<f64> {
    if samples < 1 {
        return Err(domain("need at least one sample"));
    }
    let probs = outcome_distribution(p, rho)?;
    let n = probs.len();
    let deterministic = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sampled = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let (z, sigma) = random_eve_strategy(n, derive_seed(seed, i as u64))?;
            Ok(probs
                .iter()
                .zip(&z)
                .map(|(pb, zb)| pb * trace_product(zb, &sigma).re)
                .sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sampled.into_iter().fold(deterministic, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::{covariant_povm, generic_fiducial};
    use crate::states::{schmidt_state, SchmidtVector};
    use approx::assert_abs_diff_eq;

    #[test]
    fn computational_on_diagonal_state() {
        let rho = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();
        let p = Povm::computational(2);
        assert_eq!(outcome_distribution(&p, &rho).unwrap(), vec![0.75, 0.25]);
        assert_abs_diff_eq!(guessing_probability(&p, &rho).unwrap(), 0.75);
    }

    #[test]
    fn covariant_on_maximally_mixed() {
        for d in 2..5 {
            let p = covariant_povm(d, &generic_fiducial(d, 2).unwrap()).unwrap();
            let rho = DensityMatrix::maximally_mixed(d);
            let probs = outcome_distribution(&p, &rho).unwrap();
            assert!(probs.iter().all(|q| (q - 1.0 / (d * d) as f64).abs() < 1e-12));
            assert_abs_diff_eq!(min_entropy(&p, &rho).unwrap(), 2.0 * (d as f64).log2(), epsilon = 1e-12);
        }
    }

    #[test]
    fn qutrit_mes_reaches_two_log_d() {
        let sv = SchmidtVector::uniform(3).unwrap();
        let rho = schmidt_state(&sv).reduced(&[1]).unwrap();
        let p = covariant_povm(3, &generic_fiducial(3, 6).unwrap()).unwrap();
        assert_abs_diff_eq!(min_entropy(&p, &rho).unwrap(), 3.169925001442312, epsilon = 1e-9);
    }

    #[test]
    fn deterministic_and_projective_cases() {
        let det = Povm::from_elements(vec![ComplexMatrix::identity(3), ComplexMatrix::zeros(3, 3)]).unwrap();
        let rho = DensityMatrix::maximally_mixed(3);
        assert_abs_diff_eq!(guessing_probability(&det, &rho).unwrap(), 1.0);
        assert_abs_diff_eq!(eve_bruteforce_oracle(&det, &rho, 10, 1).unwrap(), 1.0);
        assert_abs_diff_eq!(min_entropy(&Povm::computational(3), &rho).unwrap(), 3f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn oracle_never_beats_analytic_value() {
        let p = covariant_povm(2, &generic_fiducial(2, 2).unwrap()).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        let v = eve_bruteforce_oracle(&p, &rho, 1000, 5).unwrap();
        assert!(v <= 0.25 + 1e-9);
        assert_eq!(v, eve_bruteforce_oracle(&p, &rho, 1000, 5).unwrap());
    }

    #[test]
    fn report_flags_uniformity() {
        let rho = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();
        let rep = randomness_report(&Povm::computational(2), &rho, 1e-9).unwrap();
        assert!(!rep.uniform);
        assert_abs_diff_eq!(rep.min_entropy_bits, -(0.75f64).log2());
    }
}
