//! Algebraic conditions forced by maximal violation, and the certification
//! verdict built from them.

use serde::{Deserialize, Serialize};

use crate::error::{size, Error, Result};
use crate::linalg::{hermitian_eig, tensor, vec_distance, vec_norm, ComplexMatrix, Ket, ZERO};
use crate::measurements::{clock, is_projective, omega_pow, shift, ProjectivityReport};
use crate::states::{schmidt_state, Realization, SchmidtVector};
use crate::steering::{evaluate, SteeringFunctional};

/// Default verdict tolerance.
pub const DEFAULT_CERT_TOL: f64 = 1e-7;
/// Tolerance used to decide whether the commutation check is applicable.
pub const PROJECTIVITY_PRECHECK_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizerResiduals {
    /// ‖(A_0^k⊗B_{k|0}⊗I)|ψ⟩ − |ψ⟩‖ for k = 1..d−1.
    pub per_k: Vec<f64>,
    /// ‖(Σ_k [γA_1^k⊗B_{k|1} + δ_k A_0^k⊗I] ⊗ I)|ψ⟩ − |ψ⟩‖.
    pub s_residual: f64,
}

pub fn stabilizer_residuals(f: &SteeringFunctional, r: &Realization) -> Result<StabilizerResiduals> {
    if r.d() != f.d() || r.alice().len() < 2 || r.bob().len() < 2 {
        return Err(size("realization does not match the functional"));
    }
    let d = f.d();
    let psi = r.state();
    let (a0, a1) = (&r.alice()[0], &r.alice()[1]);
    let id_b = ComplexMatrix::identity(r.bob_dim());
    let n = r.alice_dim() * r.bob_dim();
    let mut per_k = Vec::with_capacity(d - 1);
    let mut s = ComplexMatrix::zeros(n, n);
    let mut a0k = ComplexMatrix::identity(r.alice_dim());
    let mut a1k = a0k.clone();
    for k in 1..d {
        a0k = &a0k * a0;
        a1k = &a1k * a1;
        let stab = tensor(&a0k, r.bob()[0].op(k))?;
        per_k.push(vec_distance(&psi.apply_prefix(&stab)?, psi.amplitudes()));
        s = &s + &tensor(&a1k, r.bob()[1].op(k))?.scale_real(f.gamma());
        s = &s + &tensor(&a0k.scale(f.delta()[k]), &id_b)?;
    }
    let s_residual = vec_distance(&psi.apply_prefix(&s)?, psi.amplitudes());
    Ok(StabilizerResiduals { per_k, s_residual })
}

/// ‖(B_0B_1 − ω^{−1}B_1B_0)√ρ_B‖_F, computed as the norm of the commutator
/// applied to Bob's factor of |ψ⟩ (the two coincide).
pub fn commutation_residual(r: &Realization) -> Result<f64> {
    if r.bob().len() < 2 {
        return Err(size("need two Bob observables"));
    }
    for (y, b) in r.bob().iter().take(2).enumerate() {
        let rep = is_projective(b, PROJECTIVITY_PRECHECK_TOL);
        if !rep.projective {
            return Err(Error::Contract(format!(
                "Bob observable {y} is not projective (unitarity residual {:.3e})",
                rep.unitarity_residual
            )));
        }
    }
    let b0 = r.bob()[0].op(1);
    let b1 = r.bob()[1].op(1);
    let c = &(b0 * b1) - &(b1 * b0).scale(omega_pow(r.d(), -1));
    Ok(vec_norm(&r.state().apply_on_factor(1, &c)?))
}

/// Eigenvalues (descending) of Z̃ = (1+γ)I − Σ_{k≥1} δ_k Z_d^k.
pub fn ztilde_spectrum(f: &SteeringFunctional) -> Vec<f64> {
    let d = f.d();
    let z = clock(d);
    let mut m = ComplexMatrix::identity(d).scale_real(1.0 + f.gamma());
    let mut zk = ComplexMatrix::identity(d);
    for k in 1..d {
        zk = &zk * &z;
        m = &m - &zk.scale(f.delta()[k]);
    }
    hermitian_eig(&m.hermitian_part())
        .expect("Z-tilde is Hermitian")
        .values
}

/// λ_l = γ Σ_i α_i / α_l, in index order.
pub fn ztilde_closed_form(f: &SteeringFunctional) -> Vec<f64> {
    let s = f.alpha().sum();
    f.alpha().alpha().iter().map(|a| f.gamma() * s / a).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub value: f64,
    /// d − value.
    pub value_gap: f64,
    pub stabilizer_residuals: Vec<f64>,
    pub s_residual: f64,
    /// Absent when Bob's observables are not projective.
    pub commutation_residual: Option<f64>,
    pub projectivity: Vec<ProjectivityReport>,
    pub ztilde_min_eig: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub failing_checks: Vec<String>,
}

/// Runs every check at `tol`. Errors only when the realization's shape does
/// not fit the functional; failed checks are reported in the verdict.
pub fn certify(f: &SteeringFunctional, r: &Realization, tol: f64) -> Result<CertReport> {
    let d = f.d() as f64;
    let value = evaluate(f, r)?;
    let value_gap = d - value;
    let stab = stabilizer_residuals(f, r)?;
    let projectivity: Vec<ProjectivityReport> = r.bob().iter().take(2).map(|b| is_projective(b, tol)).collect();
    let commutation = commutation_residual(r).ok();
    let ztilde_min_eig = ztilde_spectrum(f).last().copied().unwrap_or(f64::NAN);

    let mut failing = Vec::new();
    if value_gap.abs() > tol {
        failing.push(format!("value_gap {value_gap:.3e} exceeds tolerance"));
    }
    for (i, p) in projectivity.iter().enumerate() {
        if !p.projective {
            failing.push(format!(
                "bob observable {i} not projective (unitarity {:.3e}, order {:.3e}, powers {:.3e})",
                p.unitarity_residual, p.order_residual, p.power_residual
            ));
        }
    }
    for (k, res) in stab.per_k.iter().enumerate() {
        if *res > tol {
            failing.push(format!("stabilizer k={} residual {res:.3e}", k + 1));
        }
    }
    if stab.s_residual > tol {
        failing.push(format!("s_residual {:.3e}", stab.s_residual));
    }
    match commutation {
        Some(c) if c > tol => failing.push(format!("commutation residual {c:.3e}")),
        Some(_) => {}
        None => failing.push("commutation check not applicable: Bob not projective".into()),
    }
    if ztilde_min_eig.is_nan() || ztilde_min_eig <= 0.0 {
        failing.push(format!("ztilde minimum eigenvalue {ztilde_min_eig:.3e} not positive"));
    }
    Ok(CertReport {
        value,
        value_gap,
        stabilizer_residuals: stab.per_k,
        s_residual: stab.s_residual,
        commutation_residual: commutation,
        projectivity,
        ztilde_min_eig,
        tolerance: tol,
        verdict: if failing.is_empty() {
            Verdict::Certified
        } else {
            Verdict::Failed
        },
        failing_checks: failing,
    })
}

/// A unitary on Bob's factor that brings his observables to Z_d*⊗I and
/// X_d⊗I, found by eigenbasis matching.
#[derive(Clone, Debug, PartialEq)]
pub struct BobExtraction {
    pub unitary: ComplexMatrix,
    pub junk_dim: usize,
    /// ‖U B_0 U† − Z*⊗I‖_F and ‖U B_1 U† − X⊗I‖_F.
    pub observable_residuals: [f64; 2],
    /// ⟨ψ(α)|ρ_{AB′}|ψ(α)⟩ after applying U to Bob's factor.
    pub state_fidelity: f64,
}

/// Builds U_B from an orthonormal basis |0,s⟩ of B_0's eigenvalue-1
/// eigenspace and |j,s⟩ = B_1^j|0,s⟩, mapping |j,s⟩ → |j⟩⊗|s⟩.
///
/// Only meaningful for exactly block-diagonal inputs: errors when Bob's
/// observables are not projective or B_0's eigenvalue-1 eigenspace does
/// not have dimension dim/d.
pub fn extract_bob_unitary(r: &Realization, sv: &SchmidtVector, tol: f64) -> Result<BobExtraction> {
    let d = r.d();
    let nb = r.bob_dim();
    if !nb.is_multiple_of(d) {
        return Err(size(format!("Bob dimension {nb} is not a multiple of d={d}")));
    }
    if sv.d() != d || r.alice_dim() != d {
        return Err(size("extraction needs a d-dimensional Alice and matching alpha"));
    }
    let junk = nb / d;
    for (y, b) in r.bob().iter().take(2).enumerate() {
        if !is_projective(b, tol).projective {
            return Err(Error::Contract(format!("Bob observable {y} is not projective")));
        }
    }
    let b0 = &r.bob()[0];
    let b1 = r.bob()[1].op(1);
    let mut p0 = ComplexMatrix::zeros(nb, nb);
    for k in 0..d {
        p0 = &p0 + b0.op(k);
    }
    let p0 = p0.scale_real(1.0 / d as f64).hermitian_part();
    let eig = hermitian_eig(&p0)?;
    let ones = eig.values.iter().filter(|&&v| (v - 1.0).abs() <= tol.max(1e-9)).count();
    let zeros = eig.values.iter().filter(|&&v| v.abs() <= tol.max(1e-9)).count();
    if ones != junk || zeros != nb - junk {
        return Err(Error::Contract(format!(
            "eigenvalue-1 eigenspace of B_0 has dimension {ones}, expected {junk}"
        )));
    }
    let mut u = ComplexMatrix::zeros(nb, nb);
    for s in 0..junk {
        let mut v = eig.vector(s);
        for j in 0..d {
            let row = j * junk + s;
            for (c, z) in v.iter().enumerate() {
                u[(row, c)] = z.conj();
            }
            v = b1.apply(&v)?;
        }
    }
    let id = ComplexMatrix::identity(junk);
    let ud = u.adjoint();
    let t0 = tensor(&clock(d).conj(), &id)?;
    let t1 = tensor(&shift(d), &id)?;
    let res0 = (&(&u * b0.op(1)) * &ud).distance(&t0);
    let res1 = (&(&u * b1) * &ud).distance(&t1);

    let rotated = Ket::new(r.state().apply_on_factor(1, &u)?, r.state().factor_dims().to_vec())?;
    let split = rotated.regroup(vec![d, d, junk * r.eve_dim()])?;
    let rho = split.reduced(&[0, 1])?;
    let ideal = schmidt_state(sv);
    let amps = ideal.amplitudes();
    let rho_psi = rho.matrix().apply(amps)?;
    let fid = amps
        .iter()
        .zip(&rho_psi)
        .map(|(a, b)| a.conj() * b)
        .fold(ZERO, |acc, z| acc + z);
    Ok(BobExtraction {
        unitary: u,
        junk_dim: junk,
        observable_residuals: [res0, res1],
        state_fidelity: fid.re,
    })
}
