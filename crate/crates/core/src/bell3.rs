//! The qutrit extended Bell scenario: the three-setting Bell functional, a
//! see-saw optimizer for it, dressed trusted observables and the
//! two-preparation steering check.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, size, Error, Result};
use crate::linalg::{hermitian_eig, polar_unitary, singular_values, tensor, ComplexMatrix, Ket, ZERO};
use crate::measurements::{clock, is_projective, omega_pow, shift, GeneralizedObservable};
use crate::random::{derive_seed, haar_unitary, seeded_rng};
use crate::selftest::PROJECTIVITY_PRECHECK_TOL;
use crate::states::{schmidt_state, Realization, SchmidtVector};
use crate::steering::{evaluate, functional_coefficients, lhs_bound_exact_for, LhsOptimum};

const D: usize = 3;
const SETTINGS: usize = 3;
/// Inner polar iterations per observable update.
const POLAR_ITERS: usize = 50;
/// A sweep gaining less than this ends a restart.
const SWEEP_STALL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct BellFunctional3 {
    /// λ_0, λ_1, λ_2.
    pub lambda: [Complex64; 3],
    pub bound: f64,
}

impl BellFunctional3 {
    pub fn new() -> Self {
        let l1 = Complex64::from_polar(1.0, -PI / 18.0);
        Self {
            lambda: [Complex64::new(1.0, 0.0), l1, l1.conj()],
            bound: 6.0 * 3f64.sqrt() * (PI / 9.0).cos(),
        }
    }
}

impl Default for BellFunctional3 {
    fn default() -> Self {
        Self::new()
    }
}

/// Σ_{k=1,2} Σ_{x,y} λ_k ω^{kxy} A_x^k ⊗ B_y^k.
pub fn bell_operator(f: &BellFunctional3, alice: &[ComplexMatrix], bob: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    if alice.len() != SETTINGS || bob.len() != SETTINGS {
        return Err(size("the qutrit Bell functional needs three settings per party"));
    }
    let n = alice[0].rows() * bob[0].rows();
    let mut w = ComplexMatrix::zeros(n, n);
    for (x, a) in alice.iter().enumerate() {
        let a2 = a * a;
        for (y, b) in bob.iter().enumerate() {
            let b2 = b * b;
            let c = f.lambda[1] * omega_pow(D, (x * y) as i64);
            w = &w + &tensor(a, b)?.scale(c);
            w = &w + &tensor(&a2, &b2)?.scale(c.conj());
        }
    }
    Ok(w)
}

/// Value of the qutrit Bell functional on a realization with three settings
/// on each side.
pub fn bell_value(r: &Realization) -> Result<f64> {
    if r.d() != D || r.alice().len() != SETTINGS || r.bob().len() != SETTINGS {
        return Err(size("bell_value needs d = 3 and three settings per party"));
    }
    for (y, b) in r.bob().iter().enumerate() {
        let rep = is_projective(b, PROJECTIVITY_PRECHECK_TOL);
        if !rep.projective {
            return Err(Error::Contract(format!("Bob observable {y} is not projective")));
        }
    }
    let bob: Vec<ComplexMatrix> = r.bob().iter().map(|b| b.op(1).clone()).collect();
    let w = bell_operator(&BellFunctional3::new(), r.alice(), &bob)?;
    let v = r.state().expectation_prefix(&w)?;
    if v.im.abs() > 1e-9 * v.re.abs().max(1.0) {
        return Err(Error::Contract(format!("Bell value has imaginary part {:.3e}", v.im)));
    }
    Ok(v.re)
}

#[derive(Clone, Debug)]
pub struct SeesawResult {
    pub value: f64,
    pub realization: Realization,
    /// Schmidt coefficients of the optimal state, descending.
    pub state_schmidt: Vec<f64>,
    /// Sweeps run by the winning restart.
    pub iterations: usize,
    /// Value after each sweep of the winning restart.
    pub history: Vec<f64>,
    /// Final value of every restart, by restart index.
    pub restart_values: Vec<f64>,
    pub best_restart: usize,
}

struct Restart {
    value: f64,
    state: Vec<Complex64>,
    alice: Vec<ComplexMatrix>,
    bob: Vec<ComplexMatrix>,
    history: Vec<f64>,
}

fn eigenvalue_diag() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[omega_pow(D, 0), omega_pow(D, 1), omega_pow(D, 2)])
}

fn observable(u: &ComplexMatrix) -> ComplexMatrix {
    &(u * &eigenvalue_diag()) * &u.adjoint()
}

/// Tr_B[(I ⊗ B) ρ] for ρ on 3 ⊗ 3.
fn reduce_alice(rho: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(D, D, |i, j| {
        let mut s = ZERO;
        for p in 0..D {
            for q in 0..D {
                s += b[(q, p)] * rho[(i * D + p, j * D + q)];
            }
        }
        s
    })
}

/// Tr_A[(A ⊗ I) ρ] for ρ on 3 ⊗ 3.
fn reduce_bob(rho: &ComplexMatrix, a: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(D, D, |p, q| {
        let mut s = ZERO;
        for i in 0..D {
            for j in 0..D {
                s += a[(j, i)] * rho[(i * D + p, j * D + q)];
            }
        }
        s
    })
}

/// Maximizes Σ_a ⟨u_a|G_a|u_a⟩ over orthonormal bases, starting from `u`.
/// The forms are shifted to be positive semidefinite, which makes each
/// polar step a monotone minorize-maximize update.
fn best_basis(g: &[ComplexMatrix], u: &ComplexMatrix) -> Result<ComplexMatrix> {
    let shift_by = g
        .iter()
        .map(|m| -hermitian_eig(m).map(|e| e.values[D - 1]).unwrap_or(0.0))
        .fold(0.0, f64::max);
    let shifted: Vec<ComplexMatrix> = g
        .iter()
        .map(|m| &m.hermitian_part() + &ComplexMatrix::identity(D).scale_real(shift_by))
        .collect();
    let mut u = u.clone();
    for _ in 0..POLAR_ITERS {
        let cols: Vec<Vec<Complex64>> = (0..D)
            .map(|a| shifted[a].apply(&u.column(a)))
            .collect::<Result<_>>()?;
        let m = ComplexMatrix::from_fn(D, D, |i, a| cols[a][i]);
        let next = polar_unitary(&m)?;
        let moved = next.distance(&u);
        u = next;
        if moved < 1e-15 {
            break;
        }
    }
    Ok(u)
}

/// Coefficient forms G_a for one setting, given the reduced operators R_{z,k}
/// of the other party indexed by its setting z and power k.
fn setting_forms(f: &BellFunctional3, own: usize, reduced: &[[ComplexMatrix; 2]]) -> Vec<ComplexMatrix> {
    (0..D)
        .map(|a| {
            let mut g = ComplexMatrix::zeros(D, D);
            for (z, rk) in reduced.iter().enumerate() {
                for k in 1..D {
                    let c = f.lambda[k] * omega_pow(D, (k * (own * z + a)) as i64);
                    g = &g + &rk[k - 1].scale(c);
                }
            }
            g
        })
        .collect()
}

fn top_state(w: &ComplexMatrix) -> Result<(f64, Vec<Complex64>)> {
    let eig = hermitian_eig(&w.hermitian_part())?;
    Ok((eig.values[0], eig.vector(0)))
}

fn run_restart(f: &BellFunctional3, seed: u64, iters: usize) -> Result<Restart> {
    let mut rng = seeded_rng(seed);
    let mut ua: Vec<ComplexMatrix> = (0..SETTINGS).map(|_| haar_unitary(D, &mut rng)).collect();
    let mut ub: Vec<ComplexMatrix> = (0..SETTINGS).map(|_| haar_unitary(D, &mut rng)).collect();
    let mut history = Vec::new();
    let mut alice: Vec<ComplexMatrix> = ua.iter().map(observable).collect();
    let mut bob: Vec<ComplexMatrix> = ub.iter().map(observable).collect();
    let (mut value, mut state) = top_state(&bell_operator(f, &alice, &bob)?)?;
    for _ in 0..iters {
        let rho = ComplexMatrix::outer(&state, &state);
        let from_bob: Vec<[ComplexMatrix; 2]> = bob
            .iter()
            .map(|b| [reduce_alice(&rho, b), reduce_alice(&rho, &(b * b))])
            .collect();
        for x in 0..SETTINGS {
            ua[x] = best_basis(&setting_forms(f, x, &from_bob), &ua[x])?;
            alice[x] = observable(&ua[x]);
        }
        let from_alice: Vec<[ComplexMatrix; 2]> = alice
            .iter()
            .map(|a| [reduce_bob(&rho, a), reduce_bob(&rho, &(a * a))])
            .collect();
        for y in 0..SETTINGS {
            ub[y] = best_basis(&setting_forms(f, y, &from_alice), &ub[y])?;
            bob[y] = observable(&ub[y]);
        }
        let (next, top) = top_state(&bell_operator(f, &alice, &bob)?)?;
        history.push(next);
        let gain = next - value;
        value = next;
        state = top;
        if gain < SWEEP_STALL {
            break;
        }
    }
    Ok(Restart { value, state, alice, bob, history })
}

/// Multi-start see-saw over projective qutrit observables on 3 ⊗ 3.
///
/// Each sweep takes the top eigenvector of the Bell operator, then updates
/// every A_x and B_y through polar steps on its linear coefficient forms.
/// Restarts run in parallel with seeds derived from `seed`; the best value
/// wins, with values within 1e-12 counted as ties broken by lowest index.
pub fn seesaw_optimize(seed: u64, restarts: usize, iters: usize) -> Result<SeesawResult> {
    if restarts < 1 || iters < 1 {
        return Err(domain("restarts and iters must be >= 1"));
    }
    let f = BellFunctional3::new();
    let runs = (0..restarts)
        .into_par_iter()
        .map(|i| run_restart(&f, derive_seed(seed, i as u64), iters))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value > runs[best].value + 1e-12 {
            best = i;
        }
    }
    let restart_values = runs.iter().map(|r| r.value).collect();
    let win = runs.into_iter().nth(best).expect("at least one restart");
    let coeff = ComplexMatrix::from_fn(D, D, |i, j| win.state[i * D + j]);
    let state_schmidt = singular_values(&coeff);
    let state = Ket::new(win.state, vec![D, D, 1])?;
    let bob = win
        .bob
        .iter()
        .map(|b| GeneralizedObservable::from_unitary(b, D))
        .collect::<Result<Vec<_>>>()?;
    let realization = Realization::new(D, state, win.alice, bob)?;
    Ok(SeesawResult {
        value: win.value,
        realization,
        state_schmidt,
        iterations: win.history.len(),
        history: win.history,
        restart_values,
        best_restart: best,
    })
}

/// Trusted observables A_0 = Z₃ ⊗ I and A_1 = X₃ ⊗ Q + X₃ᵀ ⊗ Q⊥ on 3 ⊗ aux.
#[derive(Clone, Debug, PartialEq)]
pub struct DressedAlice {
    pub aux_dim: usize,
    pub q_rank: usize,
    pub q_projector: ComplexMatrix,
    pub a0: ComplexMatrix,
    pub a1: ComplexMatrix,
}

fn rank_projector(n: usize, rank: usize) -> ComplexMatrix {
    let diag: Vec<f64> = (0..n).map(|i| if i < rank { 1.0 } else { 0.0 }).collect();
    ComplexMatrix::from_real_diagonal(&diag)
}

pub fn dressed_alice(aux_dim: usize, q_rank: usize) -> Result<DressedAlice> {
    if aux_dim < 1 || q_rank > aux_dim {
        return Err(domain(format!(
            "need aux_dim >= 1 and 0 <= q_rank <= aux_dim, got aux_dim={aux_dim}, q_rank={q_rank}"
        )));
    }
    let q = rank_projector(aux_dim, q_rank);
    let q_perp = &ComplexMatrix::identity(aux_dim) - &q;
    let x = shift(D);
    let a0 = tensor(&clock(D), &ComplexMatrix::identity(aux_dim))?;
    let a1 = &tensor(&x, &q)? + &tensor(&x.transpose(), &q_perp)?;
    Ok(DressedAlice { aux_dim, q_rank, q_projector: q, a0, a1 })
}

/// Branch weight w for the aux state √w|00⟩ + √(1−w)|11⟩. It is forced to 1
/// when the second branch does not exist or Q is the identity.
fn branch_weight(da: &DressedAlice, seed: u64) -> f64 {
    if da.aux_dim == 1 || da.q_rank == da.aux_dim {
        1.0
    } else {
        seeded_rng(seed).random_range(0.1..0.9)
    }
}

/// The dressed joint realization on (3 ⊗ aux) ⊗ (3 ⊗ aux). Bob's second
/// observable is X₃ on the sector paired with Q and X₃† on the sector paired
/// with Q⊥; with `paired = false` it is X₃ on both.
pub fn extended_realization(sv: &SchmidtVector, da: &DressedAlice, seed: u64, paired: bool) -> Result<(Realization, f64)> {
    if sv.d() != D {
        return Err(size(format!("the extended scenario needs d = 3, got {}", sv.d())));
    }
    let n = da.aux_dim;
    let w = branch_weight(da, seed);
    let mut branch = vec![ZERO; n * n];
    branch[0] = Complex64::new(w.sqrt(), 0.0);
    if n > 1 {
        branch[n + 1] = Complex64::new((1.0 - w).sqrt(), 0.0);
    }
    let branch = Ket::normalized(branch, vec![n, n])?;
    // Factors (A′, B′, A″, B″) → (A′, A″, B′, B″).
    let state = schmidt_state(sv)
        .tensor(&branch)?
        .permute_factors(&[0, 2, 1, 3])?
        .regroup(vec![D * n, D * n, 1])?;
    let x = shift(D);
    let q_perp = &ComplexMatrix::identity(n) - &da.q_projector;
    let second = if paired { x.adjoint() } else { x.clone() };
    let b1 = &tensor(&x, &da.q_projector)? + &tensor(&second, &q_perp)?;
    let b0 = tensor(&clock(D).conj(), &ComplexMatrix::identity(n))?;
    let bob = vec![
        GeneralizedObservable::from_unitary(&b0, D)?,
        GeneralizedObservable::from_unitary(&b1, D)?,
    ];
    let r = Realization::new(D, state, vec![da.a0.clone(), da.a1.clone()], bob)?;
    Ok((r, w))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedCheckReport {
    pub value: f64,
    pub lhs_bound: f64,
    pub branch_weight: f64,
    pub passed: bool,
    pub failing: Vec<String>,
}

/// Builds the dressed joint realization and checks that it reaches the
/// quantum value 3 while the exact LHS bound with the dressed trusted
/// observables stays below 3.
pub fn extended_certification_check(sv: &SchmidtVector, da: &DressedAlice, seed: u64) -> Result<ExtendedCheckReport> {
    let f = functional_coefficients(sv);
    let (r, w) = extended_realization(sv, da, seed, true)?;
    let value = evaluate(&f, &r)?;
    let LhsOptimum { value: lhs_bound, .. } = lhs_bound_exact_for(&f, &[da.a0.clone(), da.a1.clone()])?;
    let mut failing = Vec::new();
    if (value - D as f64).abs() > 1e-9 {
        failing.push(format!("value {value} differs from 3"));
    }
    if lhs_bound >= D as f64 {
        failing.push(format!("LHS bound {lhs_bound} is not below 3"));
    }
    Ok(ExtendedCheckReport {
        value,
        lhs_bound,
        branch_weight: w,
        passed: failing.is_empty(),
        failing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coefficients_and_bound() {
        let f = BellFunctional3::new();
        assert_eq!(f.lambda[2], f.lambda[1].conj());
        assert_abs_diff_eq!(f.bound, 9.765572176, epsilon = 1e-9);
    }

    #[test]
    fn product_state_value_is_real_and_bounded() {
        let z = clock(3);
        let state = Ket::basis(9, 0).unwrap().regroup(vec![3, 3, 1]).unwrap();
        let b = GeneralizedObservable::from_unitary(&z, 3).unwrap();
        let r = Realization::new(3, state, vec![z.clone(); 3], vec![b; 3]).unwrap();
        let v = bell_value(&r).unwrap();
        assert!(v.abs() <= 18.0);
    }

    #[test]
    fn seesaw_is_monotone_and_reaches_bound() {
        let res = seesaw_optimize(7, 4, 300).unwrap();
        for w in res.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(res.value >= BellFunctional3::new().bound - 1e-6);
        assert_abs_diff_eq!(bell_value(&res.realization).unwrap(), res.value, epsilon = 1e-9);
    }

    #[test]
    fn dressed_alice_shapes() {
        let da = dressed_alice(1, 1).unwrap();
        assert!(da.a1.distance(&shift(3)) < 1e-15);
        let da = dressed_alice(2, 1).unwrap();
        assert!(da.a1.pow(3).unwrap().distance(&ComplexMatrix::identity(6)) < 1e-9);
        assert_eq!(da.a1[(2, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(da.a1[(1, 3)], Complex64::new(1.0, 0.0));
        assert!(dressed_alice(2, 3).is_err());
    }

    #[test]
    fn extended_check_passes_and_broken_pairing_fails() {
        let sv = SchmidtVector::new(vec![0.7, 0.5, 0.26f64.sqrt()]).unwrap();
        for q in 0..=2 {
            let da = dressed_alice(2, q).unwrap();
            let rep = extended_certification_check(&sv, &da, 3).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
        let da = dressed_alice(2, 1).unwrap();
        let (r, _) = extended_realization(&sv, &da, 3, false).unwrap();
        let v = evaluate(&functional_coefficients(&sv), &r).unwrap();
        assert!(v < 3.0 - 1e-3);
    }
}
