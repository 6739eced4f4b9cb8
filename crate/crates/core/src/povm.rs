//! Extremal rank-one d²-outcome POVMs, extremality tests and the
//! correlation check that certifies Bob's POVM on a self-tested state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, size, Error, Result};
use crate::linalg::{hermitian_eig, numerical_rank, tensor, ComplexMatrix, Ket, ZERO};
use crate::measurements::{weyl, Povm};
use crate::random::{random_ket, seeded_rng};
use crate::states::{schmidt_state, SchmidtVector};

pub use crate::measurements::{validate_povm, PovmValidation};

/// Default relative rank cutoff.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Phase exponents ξ_i used by the partially entangled construction, with
/// arithmetic modulo d² − d + 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTable {
    d: usize,
    xi: Vec<i64>,
}

impl PhaseTable {
    /// Any length-d table; use [`sidon_check`] to test the difference
    /// condition.
    pub fn new(d: usize, xi: Vec<i64>) -> Result<Self> {
        if d < 2 {
            return Err(domain(format!("d must be >= 2, got {d}")));
        }
        if xi.len() != d {
            return Err(domain(format!("phase table needs {d} entries, got {}", xi.len())));
        }
        Ok(Self { d, xi })
    }

    /// The tabulated difference sets for d = 3..6.
    pub fn standard(d: usize) -> Result<Self> {
        let xi = match d {
            3 => vec![0, 1, 3],
            4 => vec![0, 1, 3, 9],
            5 => vec![0, 1, 4, 14, 16],
            6 => vec![0, 1, 3, 8, 12, 18],
            _ => return Err(domain(format!("no tabulated phase set for d={d}"))),
        };
        Self::new(d, xi)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn xi(&self) -> &[i64] {
        &self.xi
    }

    pub fn modulus(&self) -> usize {
        self.d * self.d - self.d + 1
    }
}

/// True iff all pairwise differences ξ_i − ξ_j (i ≠ j) are distinct modulo
/// d² − d + 1.
pub fn sidon_check(table: &PhaseTable) -> bool {
    let m = table.modulus() as i64;
    let mut seen = vec![false; m as usize];
    for (i, a) in table.xi.iter().enumerate() {
        for (j, b) in table.xi.iter().enumerate() {
            if i == j {
                continue;
            }
            let diff = (a - b).rem_euclid(m) as usize;
            if diff == 0 || seen[diff] {
                return false;
            }
            seen[diff] = true;
        }
    }
    true
}

fn gram_rank(elements: &[ComplexMatrix], tol: f64) -> usize {
    let n = elements.len();
    let g = ComplexMatrix::from_fn(n, n, |a, b| {
        elements[a]
            .as_slice()
            .iter()
            .zip(elements[b].as_slice())
            .map(|(x, y)| x.conj() * y)
            .sum()
    });
    numerical_rank(&g, tol)
}

/// Weyl-covariant POVM {(1/d) U_{k,l}|ν⟩⟨ν|U_{k,l}†}, U_{k,l} = X^k Z^l,
/// ordered by b = d·k + l. Errors when the elements are linearly dependent.
pub fn covariant_povm(d: usize, nu: &Ket) -> Result<Povm> {
    if d < 2 {
        return Err(domain(format!("d must be >= 2, got {d}")));
    }
    if nu.dim() != d {
        return Err(size(format!("fiducial has dimension {}, expected {d}", nu.dim())));
    }
    let mut elements = Vec::with_capacity(d * d);
    for k in 0..d {
        for l in 0..d {
            let v = weyl(d, k, l).apply(nu.amplitudes())?;
            elements.push(ComplexMatrix::outer(&v, &v).scale_real(1.0 / d as f64));
        }
    }
    let rank = gram_rank(&elements, DEFAULT_RANK_TOL);
    if rank < d * d {
        return Err(Error::NotExtremal { rank, expected: d * d });
    }
    Povm::from_elements(elements)
}

/// A seeded Haar-random fiducial vector.
pub fn generic_fiducial(d: usize, seed: u64) -> Result<Ket> {
    random_ket(&[d], &mut seeded_rng(seed))
}

/// Weights λ_b and amplitudes μ_i of the partially entangled construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialWeights {
    /// λ_0..λ_{d−2} of the diagonal elements followed by the common weight
    /// of the phased elements.
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

/// λ_i = 1/(d²α_i²) for i ≤ d−2, λ_rest = (d − Σλ_i)/(d²−d+1),
/// μ_i = √((1−λ_i)/(Nλ_rest)) for i ≤ d−2 and μ_{d−1} = √(1/(Nλ_rest)).
pub fn partial_weights(sv: &SchmidtVector) -> Result<PartialWeights> {
    let d = sv.d();
    let df = d as f64;
    let n = (d * d - d + 1) as f64;
    let alpha = sv.alpha();
    for (i, &a) in alpha.iter().enumerate().take(d - 1) {
        if a < 1.0 / df {
            return Err(domain(format!("alpha_{i} = {a} is below 1/d = {}", 1.0 / df)));
        }
    }
    let mut lambda: Vec<f64> = alpha[..d - 1]
        .iter()
        .map(|a| (1.0 / (df * df * a * a)).min(1.0))
        .collect();
    let rest = (df - lambda.iter().sum::<f64>()) / n;
    let mu: Vec<f64> = lambda
        .iter()
        .map(|l| ((1.0 - l) / (n * rest)).sqrt())
        .chain(std::iter::once((1.0 / (n * rest)).sqrt()))
        .collect();
    lambda.push(rest);
    Ok(PartialWeights { lambda, mu })
}

/// The rank-one d²-outcome POVM adapted to |ψ(α)⟩: λ_i|i⟩⟨i| for
/// b = i ≤ d−2, then λ_rest|δ_b⟩⟨δ_b| for b = d−1..d²−1 with
/// |δ_b⟩ = Σ μ_i exp(2πi ξ_i (b−d+1)/(d²−d+1)) |i⟩.
pub fn partial_povm(sv: &SchmidtVector, table: &PhaseTable) -> Result<Povm> {
    let d = sv.d();
    if table.d() != d {
        return Err(domain(format!("phase table is for d={}, alpha has d={d}", table.d())));
    }
    let w = partial_weights(sv)?;
    let n = table.modulus();
    let mut elements = Vec::with_capacity(d * d);
    for (i, &l) in w.lambda.iter().enumerate().take(d - 1) {
        let mut m = ComplexMatrix::zeros(d, d);
        m[(i, i)] = Complex64::new(l, 0.0);
        elements.push(m);
    }
    let rest = w.lambda[d - 1];
    for m in 0..n {
        let v: Vec<Complex64> = (0..d)
            .map(|i| {
                let ph = (table.xi[i] * m as i64).rem_euclid(n as i64) as f64 / n as f64;
                Complex64::from_polar(w.mu[i], 2.0 * std::f64::consts::PI * ph)
            })
            .collect();
        elements.push(ComplexMatrix::outer(&v, &v).scale_real(rest));
    }
    Povm::from_elements(elements)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityReport {
    pub extremal: bool,
    pub element_ranks: Vec<usize>,
    pub gram_rank: usize,
    pub element_count: usize,
}

/// Rank-one elements (second eigenvalue ≤ tol·first) whose Gram matrix
/// Tr[I_b I_b′] has full rank.
pub fn is_extremal_rank_one(p: &Povm, tol: f64) -> ExtremalityReport {
    let element_ranks: Vec<usize> = p
        .elements()
        .iter()
        .map(|e| match hermitian_eig(&e.hermitian_part()) {
            Ok(eig) => {
                let top = eig.values[0].abs();
                eig.values.iter().filter(|v| v.abs() > tol * top && top > 0.0).count()
            }
            Err(_) => usize::MAX,
        })
        .collect();
    let gram_rank = gram_rank(p.elements(), tol);
    let element_count = p.len();
    ExtremalityReport {
        extremal: element_ranks.iter().all(|&r| r == 1) && gram_rank == element_count,
        element_ranks,
        gram_rank,
        element_count,
    }
}

/// Mixes `eps` of the identity into element `b` and rescales the set by
/// 1/(1+eps), which keeps the elements summing to the identity.
pub fn mix_identity_into(p: &Povm, b: usize, eps: f64) -> Result<Povm> {
    if b >= p.len() {
        return Err(Error::Index(format!("element {b} out of range")));
    }
    let id = ComplexMatrix::identity(p.dim());
    let s = 1.0 / (1.0 + eps);
    let elements = p
        .elements()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if i == b {
                (e + &id.scale_real(eps)).scale_real(s)
            } else {
                e.scale_real(s)
            }
        })
        .collect();
    Povm::from_elements(elements)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Report {
    /// |⟨X^iZ^j ⊗ R_b ⊗ I⟩_ψ − ⟨X^iZ^j ⊗ I_b⟩_{ψ(α)}|, indexed [i][j][b].
    pub residuals: Vec<Vec<Vec<f64>>>,
    pub max_residual: f64,
    /// max_b ‖I_b − Σ_{ij} l^b_{ij} W_{ij}‖_F with l^b_{ij} the ideal
    /// correlators divided by d and W_{ij} = P^{-1}(X^iZ^j)*P^{-1}.
    pub decomposition_residual: f64,
}

/// W_{ij} = P(α)^{-1} (X^i Z^j)* P(α)^{-1} with P(α) = diag(α).
pub fn w_basis(sv: &SchmidtVector, i: usize, j: usize) -> ComplexMatrix {
    let d = sv.d();
    let inv: Vec<f64> = sv.alpha().iter().map(|a| 1.0 / a).collect();
    let x = weyl(d, i, j).conj();
    ComplexMatrix::from_fn(d, d, |r, c| x[(r, c)] * (inv[r] * inv[c]))
}

/// Compares Bob's measured correlators with the ideal ones.
///
/// `psi` must start with Alice's d-dimensional factor followed by factors
/// matching `r_povm`'s dimension; any further factors are Eve's.
pub fn theorem3_residuals(r_povm: &Povm, ideal: &Povm, psi: &Ket, sv: &SchmidtVector) -> Result<Theorem3Report> {
    let d = sv.d();
    if ideal.len() != r_povm.len() {
        return Err(size(format!(
            "ideal has {} outcomes, measured POVM has {}",
            ideal.len(),
            r_povm.len()
        )));
    }
    if ideal.dim() != d {
        return Err(size(format!("ideal POVM acts on dimension {}, expected {d}", ideal.dim())));
    }
    if psi.factor_dims().first() != Some(&d) {
        return Err(size("state must start with Alice's d-dimensional factor"));
    }
    let target = schmidt_state(sv);
    let n = ideal.len();
    let mut residuals = vec![vec![vec![0.0; n]; d]; d];
    let mut max_residual: f64 = 0.0;
    let mut coeffs = vec![vec![vec![ZERO; d]; d]; n];
    for i in 0..d {
        for j in 0..d {
            let w = weyl(d, i, j);
            for b in 0..n {
                let measured = psi.expectation_prefix(&tensor(&w, r_povm.element(b))?)?;
                let expected = target.expectation_prefix(&tensor(&w, ideal.element(b))?)?;
                let r = (measured - expected).norm();
                residuals[i][j][b] = r;
                max_residual = max_residual.max(r);
                coeffs[b][i][j] = expected / d as f64;
            }
        }
    }
    let mut decomposition_residual: f64 = 0.0;
    for (b, cb) in coeffs.iter().enumerate() {
        let mut rec = ComplexMatrix::zeros(d, d);
        for (i, row) in cb.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                rec = &rec + &w_basis(sv, i, j).scale(c);
            }
        }
        decomposition_residual = decomposition_residual.max(rec.distance(ideal.element(b)));
    }
    Ok(Theorem3Report {
        residuals,
        max_residual,
        decomposition_residual,
    })
}
