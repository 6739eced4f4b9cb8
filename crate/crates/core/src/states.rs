//! Schmidt-form states, ideal realizations and junk-dressed embeddings.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, size, Error, Result};
use crate::linalg::{tensor, ComplexMatrix, Ket, DEFAULT_TOL, ZERO};
use crate::measurements::{clock, shift, GeneralizedObservable};
use crate::random::{random_ket, seeded_rng, seeded_unitary, derive_seed};

/// Largest deviation of Σα² from 1 that is silently renormalized.
pub const RENORMALIZE_LIMIT: f64 = 1e-6;

/// Positive Schmidt coefficients with unit Euclidean norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SchmidtVector {
    alpha: Vec<f64>,
}

impl SchmidtVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(domain(format!("need at least 2 Schmidt coefficients, got {}", alpha.len())));
        }
        if let Some((i, a)) = alpha.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a > 0.0)) {
            return Err(domain(format!("alpha_{i} = {a} must be positive")));
        }
        let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > RENORMALIZE_LIMIT {
            return Err(domain(format!("alpha has norm {norm}, expected 1")));
        }
        Ok(Self {
            alpha: alpha.into_iter().map(|a| a / norm).collect(),
        })
    }

    /// Maximally entangled coefficients 1/√d.
    pub fn uniform(d: usize) -> Result<Self> {
        Self::new(vec![1.0 / (d as f64).sqrt(); d])
    }

    /// Parses a JSON array of positive decimals.
    pub fn from_json(s: &str) -> Result<Self> {
        let v: Vec<f64> = serde_json::from_str(s)
            .map_err(|e| Error::Parse(format!("alpha must be a JSON array of numbers: {e}")))?;
        Self::new(v)
    }

    /// Random coefficients with every α_i ≥ `min_alpha`, by rejection from
    /// normalized absolute Gaussian vectors.
    pub fn random<R: Rng + ?Sized>(d: usize, min_alpha: f64, rng: &mut R) -> Result<Self> {
        if min_alpha * min_alpha * d as f64 >= 1.0 {
            return Err(domain(format!("no unit vector in dimension {d} has all entries >= {min_alpha}")));
        }
        loop {
            let v: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal).abs())
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                continue;
            }
            let v: Vec<f64> = v.into_iter().map(|x| x / n).collect();
            if v.iter().all(|&x| x >= min_alpha) {
                return Self::new(v);
            }
        }
    }

    pub fn d(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sum(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

impl TryFrom<Vec<f64>> for SchmidtVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SchmidtVector> for Vec<f64> {
    fn from(s: SchmidtVector) -> Self {
        s.alpha
    }
}

/// |ψ(α)⟩ = Σ α_i |i⟩|i⟩ on factors (d, d).
pub fn schmidt_state(sv: &SchmidtVector) -> Ket {
    let d = sv.d();
    let mut amps = vec![ZERO; d * d];
    for (i, &a) in sv.alpha.iter().enumerate() {
        amps[i * d + i] = Complex64::new(a, 0.0);
    }
    Ket::new(amps, vec![d, d]).expect("Schmidt state is normalized")
}

/// A joint state on (Alice, Bob, Eve) with Alice's unitary observables and
/// Bob's measurements in the observable picture.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    d: usize,
    state: Ket,
    alice: Vec<ComplexMatrix>,
    bob: Vec<GeneralizedObservable>,
}

impl Realization {
    /// `state` must have exactly three factors (Alice, Bob, Eve); use a
    /// dimension-1 Eve factor when there is none.
    pub fn new(d: usize, state: Ket, alice: Vec<ComplexMatrix>, bob: Vec<GeneralizedObservable>) -> Result<Self> {
        if d < 2 {
            return Err(domain(format!("d must be >= 2, got {d}")));
        }
        let dims = state.factor_dims();
        if dims.len() != 3 {
            return Err(size(format!(
                "state must have factors (A, B, E), got {dims:?}"
            )));
        }
        let (da, db) = (dims[0], dims[1]);
        for (x, a) in alice.iter().enumerate() {
            if !a.is_square() || a.rows() != da {
                return Err(size(format!("Alice observable {x} does not act on dimension {da}")));
            }
            let u = a.unitarity_residual();
            let order = a.pow(d)?.distance(&ComplexMatrix::identity(da));
            if u > DEFAULT_TOL || order > DEFAULT_TOL {
                return Err(Error::InvalidObservable(format!(
                    "Alice observable {x} is not a unitary of order {d} (residuals {u:.3e}, {order:.3e})"
                )));
            }
        }
        for (y, b) in bob.iter().enumerate() {
            if b.dim() != db {
                return Err(size(format!("Bob observable {y} does not act on dimension {db}")));
            }
            if b.d() != d {
                return Err(size(format!("Bob observable {y} has {} outcomes, expected {d}", b.d())));
            }
        }
        Ok(Self { d, state, alice, bob })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn state(&self) -> &Ket {
        &self.state
    }

    pub fn alice(&self) -> &[ComplexMatrix] {
        &self.alice
    }

    pub fn bob(&self) -> &[GeneralizedObservable] {
        &self.bob
    }

    pub fn alice_dim(&self) -> usize {
        self.state.factor_dims()[0]
    }

    pub fn bob_dim(&self) -> usize {
        self.state.factor_dims()[1]
    }

    pub fn eve_dim(&self) -> usize {
        self.state.factor_dims()[2]
    }

    pub fn with_state(&self, state: Ket) -> Result<Self> {
        Self::new(self.d, state, self.alice.clone(), self.bob.clone())
    }

    pub fn with_alice(&self, alice: Vec<ComplexMatrix>) -> Result<Self> {
        Self::new(self.d, self.state.clone(), alice, self.bob.clone())
    }

    pub fn with_bob(&self, bob: Vec<GeneralizedObservable>) -> Result<Self> {
        Self::new(self.d, self.state.clone(), self.alice.clone(), bob)
    }
}

/// |ψ(α)⟩ with A_0 = Z_d, A_1 = X_d and Bob's observables generated by
/// Z_d* and X_d.
pub fn ideal_realization(sv: &SchmidtVector) -> Realization {
    let d = sv.d();
    let state = schmidt_state(sv)
        .regroup(vec![d, d, 1])
        .expect("regrouping with a trivial factor");
    let z = clock(d);
    let x = shift(d);
    let b0 = GeneralizedObservable::from_unitary(&z.conj(), d).expect("Z* is projective");
    let b1 = GeneralizedObservable::from_unitary(&x, d).expect("X is projective");
    Realization::new(d, state, vec![z, x], vec![b0, b1]).expect("ideal realization is valid")
}

/// Dresses `r` with a seeded junk state and a seeded Haar unitary on Bob's
/// full factor.
pub fn dress_realization(r: &Realization, junk_dim_b: usize, eve_dim: usize, seed: u64) -> Result<Realization> {
    if junk_dim_b < 1 || eve_dim < 1 {
        return Err(domain("junk and Eve dimensions must be >= 1"));
    }
    let u = seeded_unitary(r.bob_dim() * junk_dim_b, derive_seed(seed, 1));
    dress_with_unitary(r, junk_dim_b, eve_dim, seed, &u)
}

/// Like [`dress_realization`] with an explicit unitary U_B acting on Bob's
/// enlarged factor. The junk state |ξ⟩ on (B″, E″) is drawn from `seed`.
///
/// The result has Bob factor B ⊗ B″ and Eve factor E ⊗ E″.
pub fn dress_with_unitary(
    r: &Realization,
    junk_dim_b: usize,
    eve_dim: usize,
    seed: u64,
    u_b: &ComplexMatrix,
) -> Result<Realization> {
    if junk_dim_b < 1 || eve_dim < 1 {
        return Err(domain("junk and Eve dimensions must be >= 1"));
    }
    let (da, db, de) = (r.alice_dim(), r.bob_dim(), r.eve_dim());
    let nb = db * junk_dim_b;
    if !u_b.is_square() || u_b.rows() != nb {
        return Err(size(format!("U_B must be {nb}x{nb}")));
    }
    let xi = random_ket(&[junk_dim_b, eve_dim], &mut seeded_rng(derive_seed(seed, 0)))?;
    // Factors (A, B, E, B″, E″) → (A, B, B″, E, E″).
    let joint = r.state().tensor(&xi)?.permute_factors(&[0, 1, 3, 2, 4])?;
    let joint = joint.regroup(vec![da, nb, de * eve_dim])?;
    let rotated = joint.apply_on_factor(1, u_b)?;
    let state = Ket::new(rotated, vec![da, nb, de * eve_dim])?;
    let bob = r
        .bob()
        .iter()
        .map(|b| b.tensor_identity(junk_dim_b)?.conjugated(u_b))
        .collect::<Result<Vec<_>>>()?;
    Realization::new(r.d(), state, r.alice().to_vec(), bob)
}

/// B_k ⊗ I for a matrix, convenience for building Bob's enlarged operators.
pub fn extend_by_identity(m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
    tensor(m, &ComplexMatrix::identity(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{partial_trace, ONE};
    use crate::measurements::{correlator, is_projective, observable_to_povm, table_from_realization, Povm};
    use approx::assert_abs_diff_eq;

    fn povms(r: &Realization) -> (Vec<Povm>, Vec<Povm>) {
        let alice = r
            .alice()
            .iter()
            .map(|a| observable_to_povm(&GeneralizedObservable::from_unitary(a, r.d()).unwrap()).unwrap())
            .collect();
        let bob = r.bob().iter().map(|b| observable_to_povm(b).unwrap()).collect();
        (alice, bob)
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn schmidt_vector_validation() {
        assert!(SchmidtVector::new(vec![1.0, 0.0]).is_err());
        assert!(SchmidtVector::new(vec![0.8, -0.6]).is_err());
        assert!(SchmidtVector::new(vec![0.8, 0.7]).is_err());
        let s = SchmidtVector::new(vec![0.7071, 0.7071]).unwrap_err();
        assert!(matches!(s, Error::Domain(_)));
        let r = SchmidtVector::new(vec![0.70710678, 0.70710678]).unwrap();
        let n: f64 = r.alpha().iter().map(|a| a * a).sum();
        assert_abs_diff_eq!(n, 1.0, epsilon = 1e-15);
        assert!(SchmidtVector::from_json("[0.6, 0.8]").is_ok());
        assert!(matches!(SchmidtVector::from_json("[0.6, "), Err(Error::Parse(_))));
    }

    #[test]
    fn random_schmidt_vectors_respect_minimum() {
        let mut rng = seeded_rng(1);
        for d in 2..9 {
            let s = SchmidtVector::random(d, 0.05, &mut rng).unwrap();
            assert!(s.alpha().iter().all(|&a| a >= 0.05));
        }
    }

    #[test]
    fn schmidt_state_examples() {
        let bell = schmidt_state(&SchmidtVector::uniform(2).unwrap());
        let h = 0.5f64.sqrt();
        assert!(crate::linalg::vec_distance(
            bell.amplitudes(),
            &[Complex64::new(h, 0.0), ZERO, ZERO, Complex64::new(h, 0.0)]
        ) < 1e-15);
        let q = schmidt_state(&SchmidtVector::uniform(3).unwrap());
        assert_abs_diff_eq!(q.amplitudes()[4].re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        let sv = SchmidtVector::new(vec![3f64.sqrt() / 2.0, 0.5]).unwrap();
        let psi = schmidt_state(&sv);
        let rho_b = partial_trace(&psi.projector(), &[2, 2], &[1]).unwrap();
        assert!(rho_b.distance(&ComplexMatrix::from_real_diagonal(&[0.75, 0.25])) < 1e-15);
        let rho_a = psi.reduced(&[0]).unwrap();
        assert!(rho_a.matrix().distance(&rho_b) < 1e-15);
    }

    #[test]
    fn ideal_bob_z_is_conjugate_clock() {
        let r = ideal_realization(&SchmidtVector::uniform(3).unwrap());
        let w = crate::measurements::omega(3);
        let expected = ComplexMatrix::from_diagonal(&[ONE, w * w, w]);
        assert!(r.bob()[0].op(1).distance(&expected) < 1e-15);
    }

    #[test]
    fn trivial_dressing_is_identity() {
        let r = ideal_realization(&SchmidtVector::new(vec![0.6, 0.8]).unwrap());
        let dressed = dress_with_unitary(&r, 1, 1, 5, &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(dressed, r);
    }

    #[test]
    fn dressing_keeps_projectivity_and_correlators() {
        let mut rng = seeded_rng(9);
        for (d, junk, eve) in [(2, 3, 2), (3, 2, 1), (3, 2, 2), (4, 1, 2)] {
            let sv = SchmidtVector::random(d, 0.1, &mut rng).unwrap();
            let r = ideal_realization(&sv);
            let dressed = dress_realization(&r, junk, eve, 11).unwrap();
            assert_eq!(dressed.bob_dim(), d * junk);
            assert_eq!(dressed.eve_dim(), eve);
            for b in dressed.bob() {
                assert!(is_projective(b, 1e-9).projective);
            }
            let (a0, b0) = povms(&r);
            let (a1, b1) = povms(&dressed);
            let t0 = table_from_realization(r.state(), &a0, &b0).unwrap();
            let t1 = table_from_realization(dressed.state(), &a1, &b1).unwrap();
            for x in 0..2 {
                for y in 0..2 {
                    for k in 0..d {
                        for l in 0..d {
                            let c0 = correlator(&t0, k, l, x, y).unwrap();
                            let c1 = correlator(&t1, k, l, x, y).unwrap();
                            assert!((c0 - c1).norm() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn realization_rejects_bad_alice() {
        let r = ideal_realization(&SchmidtVector::uniform(3).unwrap());
        let bad = vec![clock(3), clock(3).scale_real(0.9)];
        assert!(matches!(r.with_alice(bad), Err(Error::InvalidObservable(_))));
        let wrong_order = vec![clock(3), shift(3).transpose().pow(1).unwrap(), clock(2)];
        assert!(r.with_alice(wrong_order).is_err());
    }
}
