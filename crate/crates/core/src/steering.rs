//! The steering functional: coefficients, operator, evaluation, the exact
//! LHS bound and the analytic upper bound on it.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{size, Error, Result};
use crate::linalg::{hermitian_eig, tensor, ComplexMatrix, ZERO};
use crate::measurements::{clock, omega_pow, shift, shift_eigenvector};
use crate::random::{derive_seed, seeded_rng};
use crate::states::{Realization, SchmidtVector};

/// Coefficients γ(α) and δ_k(α) of the steering functional.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringFunctional {
    alpha: SchmidtVector,
    gamma: f64,
    delta: Vec<Complex64>,
}

impl SteeringFunctional {
    pub fn d(&self) -> usize {
        self.alpha.d()
    }

    pub fn alpha(&self) -> &SchmidtVector {
        &self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// δ_0, …, δ_{d−1}.
    pub fn delta(&self) -> &[Complex64] {
        &self.delta
    }
}

/// γ = d / Σ_{i≠j} α_i/α_j and δ_k = −(γ/d) Σ_{i≠j} (α_i/α_j) ω^{k(d−j)}.
pub fn functional_coefficients(sv: &SchmidtVector) -> SteeringFunctional {
    let d = sv.d();
    let a = sv.alpha();
    let mut ratio_sum = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                ratio_sum += a[i] / a[j];
            }
        }
    }
    let gamma = d as f64 / ratio_sum;
    let mut delta = vec![ZERO; d];
    for (k, dk) in delta.iter_mut().enumerate().take(d / 2 + 1) {
        let mut s = ZERO;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += omega_pow(d, (k * (d - j)) as i64) * (a[i] / a[j]);
                }
            }
        }
        *dk = s * (-gamma / d as f64);
    }
    for k in d / 2 + 1..d {
        delta[k] = delta[d - k].conj();
    }
    SteeringFunctional {
        alpha: sv.clone(),
        gamma,
        delta,
    }
}

fn check_compatible(f: &SteeringFunctional, r: &Realization) -> Result<()> {
    if r.d() != f.d() {
        return Err(size(format!("functional has d={}, realization d={}", f.d(), r.d())));
    }
    if r.alice().len() < 2 || r.bob().len() < 2 {
        return Err(size("the functional needs two settings per party"));
    }
    Ok(())
}

/// Σ_{k=1}^{d−1} [A_0^k⊗B_{k|0} + γ A_1^k⊗B_{k|1} + δ_k A_0^k⊗I] on
/// Alice ⊗ Bob (Bob's factor includes any junk); Eve's factor is implicit.
pub fn steering_operator(f: &SteeringFunctional, r: &Realization) -> Result<ComplexMatrix> {
    check_compatible(f, r)?;
    let d = f.d();
    let (a0, a1) = (&r.alice()[0], &r.alice()[1]);
    let (b0, b1) = (&r.bob()[0], &r.bob()[1]);
    let id_b = ComplexMatrix::identity(r.bob_dim());
    let n = r.alice_dim() * r.bob_dim();
    let mut op = ComplexMatrix::zeros(n, n);
    let mut a0k = ComplexMatrix::identity(r.alice_dim());
    let mut a1k = a0k.clone();
    for k in 1..d {
        a0k = &a0k * a0;
        a1k = &a1k * a1;
        op = &op + &tensor(&a0k, b0.op(k))?;
        op = &op + &tensor(&a1k, b1.op(k))?.scale_real(f.gamma);
        op = &op + &tensor(&a0k.scale(f.delta[k]), &id_b)?;
    }
    Ok(op)
}

/// ⟨ψ|B̂|ψ⟩.
pub fn evaluate(f: &SteeringFunctional, r: &Realization) -> Result<f64> {
    let op = steering_operator(f, r)?;
    let v = r.state().expectation_prefix(&op)?;
    if v.im.abs() > 1e-9 * v.re.abs().max(1.0) {
        return Err(Error::Contract(format!(
            "steering value has imaginary part {:.3e}",
            v.im
        )));
    }
    Ok(v.re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LhsMethod {
    ExactEigen,
    PaperUpper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LhsStrategy {
    /// Bob's deterministic outcomes for settings 0 and 1.
    Deterministic { b0: usize, b1: usize },
    /// Nonnegative unit vector of the analytic bound.
    Eta(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhsOptimum {
    pub value: f64,
    pub strategy: LhsStrategy,
    pub method: LhsMethod,
}

/// Exact LHS bound for Alice's ideal observables Z_d, X_d, via the
/// projector form d·Π^Z_{−b0} + γd·Π^X_{−b1} − γ(Σα) Σ_a Π^Z_a/α_a.
pub fn lhs_bound_exact(f: &SteeringFunctional) -> LhsOptimum {
    let d = f.d();
    let a = f.alpha.alpha();
    let sum_a = f.alpha.sum();
    let base: Vec<f64> = a.iter().map(|&x| -f.gamma * sum_a / x).collect();
    let fourier: Vec<Vec<Complex64>> = (0..d).map(|b| shift_eigenvector(d, b)).collect();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for b0 in 0..d {
        for b1 in 0..d {
            let mut diag = base.clone();
            diag[(d - b0) % d] += d as f64;
            let fx = &fourier[(d - b1) % d];
            let m = &ComplexMatrix::from_real_diagonal(&diag)
                + &ComplexMatrix::outer(fx, fx).scale_real(f.gamma * d as f64);
            let top = top_eigenvalue(&m);
            if top > best.0 + 1e-12 {
                best = (top, b0, b1);
            }
        }
    }
    LhsOptimum {
        value: best.0,
        strategy: LhsStrategy::Deterministic { b0: best.1, b1: best.2 },
        method: LhsMethod::ExactEigen,
    }
}

/// Exact LHS bound for arbitrary trusted unitary observables A_0, A_1:
/// max over (b0, b1) of λ_max Σ_{k≥1} (ω^{k b0} A_0^k + γ ω^{k b1} A_1^k + δ_k A_0^k).
pub fn lhs_bound_exact_for(f: &SteeringFunctional, alice: &[ComplexMatrix]) -> Result<LhsOptimum> {
    let d = f.d();
    if alice.len() < 2 {
        return Err(size("need two trusted observables"));
    }
    let (a0, a1) = (&alice[0], &alice[1]);
    if !a0.is_square() || a0.rows() != a1.rows() || !a1.is_square() {
        return Err(size("trusted observables must be square and of equal size"));
    }
    let n = a0.rows();
    let mut p0 = vec![ComplexMatrix::identity(n)];
    let mut p1 = vec![ComplexMatrix::identity(n)];
    for k in 1..d {
        p0.push(&p0[k - 1] * a0);
        p1.push(&p1[k - 1] * a1);
    }
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for b0 in 0..d {
        for b1 in 0..d {
            let mut m = ComplexMatrix::zeros(n, n);
            for k in 1..d {
                let c0 = omega_pow(d, (k * b0) as i64) + f.delta[k];
                m = &m + &p0[k].scale(c0);
                m = &m + &p1[k].scale(omega_pow(d, (k * b1) as i64) * f.gamma);
            }
            let top = top_eigenvalue(&m.hermitian_part());
            if top > best.0 + 1e-12 {
                best = (top, b0, b1);
            }
        }
    }
    Ok(LhsOptimum {
        value: best.0,
        strategy: LhsStrategy::Deterministic { b0: best.1, b1: best.2 },
        method: LhsMethod::ExactEigen,
    })
}

fn top_eigenvalue(m: &ComplexMatrix) -> f64 {
    hermitian_eig(m).expect("operator is Hermitian by construction").values[0]
}

/// Quadratic form of the analytic bound restricted to argmax branch `a`:
/// Q_a = d e_a e_aᵀ + γ(11ᵀ − (Σα) diag(1/α)).
pub fn paper_branch_form(f: &SteeringFunctional, a: usize) -> Vec<Vec<f64>> {
    let d = f.d();
    let alpha = f.alpha.alpha();
    let sum_a = f.alpha.sum();
    let mut q = vec![vec![f.gamma; d]; d];
    for i in 0..d {
        q[i][i] -= f.gamma * sum_a / alpha[i];
    }
    q[a][a] += d as f64;
    q
}

/// g(η) = d·max_a η_a² + γ[(Σ η_a)² − Σα · Σ η_a²/α_a].
pub fn paper_objective(f: &SteeringFunctional, eta: &[f64]) -> f64 {
    let alpha = f.alpha.alpha();
    let d = f.d() as f64;
    let max_sq = eta.iter().map(|x| x * x).fold(0.0, f64::max);
    let s: f64 = eta.iter().sum();
    let w: f64 = eta.iter().zip(alpha).map(|(e, a)| e * e / a).sum();
    d * max_sq + f.gamma * (s * s - f.alpha.sum() * w)
}

fn quad(q: &[Vec<f64>], x: &[f64]) -> f64 {
    q.iter()
        .zip(x)
        .map(|(row, xi)| xi * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

fn project_to_sphere(v: &mut [f64]) -> bool {
    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    true
}

const PGA_MAX_ITERS: usize = 20_000;

/// Projected-gradient ascent of ηᵀQη on the nonnegative unit sphere with
/// backtracking; never accepts a decrease.
fn ascend(q: &[Vec<f64>], mut eta: Vec<f64>) -> (f64, Vec<f64>) {
    let d = eta.len();
    let scale = q.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let mut t = 1.0 / scale;
    let mut val = quad(q, &eta);
    let mut stall = 0;
    for _ in 0..PGA_MAX_ITERS {
        let grad: Vec<f64> = (0..d)
            .map(|i| 2.0 * q[i].iter().zip(&eta).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let mut accepted = false;
        while t > 1e-14 / scale {
            let mut cand: Vec<f64> = eta.iter().zip(&grad).map(|(e, g)| e + t * g).collect();
            if project_to_sphere(&mut cand) {
                let v = quad(q, &cand);
                if v >= val {
                    let gain = v - val;
                    eta = cand;
                    val = v;
                    accepted = true;
                    stall = if gain <= 1e-15 * val.abs().max(1.0) { stall + 1 } else { 0 };
                    t = (t * 2.0).min(1e3);
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || stall >= 5 {
            break;
        }
    }
    (val, eta)
}

/// Default number of multi-starts per branch.
pub const DEFAULT_PAPER_RESTARTS: usize = 32;

/// Maximizes the analytic bound by splitting on the argmax index and
/// running seeded multi-start projected-gradient ascent in each branch.
pub fn lhs_bound_paper_upper(f: &SteeringFunctional, restarts: usize, seed: u64) -> LhsOptimum {
    let d = f.d();
    let restarts = restarts.max(1);
    let runs: Vec<(f64, Vec<f64>)> = (0..d * restarts)
        .into_par_iter()
        .map(|idx| {
            let (a, r) = (idx / restarts, idx % restarts);
            let q = paper_branch_form(f, a);
            let mut rng = seeded_rng(derive_seed(seed, idx as u64));
            let mut start: Vec<f64> = (0..d)
                .map(|_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal).abs())
                .collect();
            if r == 0 || !project_to_sphere(&mut start) {
                start = vec![0.0; d];
                start[a] = 1.0;
            }
            ascend(&q, start)
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.0 > runs[best].0 {
            best = i;
        }
    }
    let (_, eta) = runs[best].clone();
    LhsOptimum {
        value: paper_objective(f, &eta),
        strategy: LhsStrategy::Eta(eta),
        method: LhsMethod::PaperUpper,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationGap {
    pub beta_q: f64,
    pub beta_l: f64,
    pub gap: f64,
}

/// (d, exact LHS bound, their difference).
pub fn violation_gap(f: &SteeringFunctional) -> ViolationGap {
    let beta_q = f.d() as f64;
    let beta_l = lhs_bound_exact(f).value;
    ViolationGap {
        beta_q,
        beta_l,
        gap: beta_q - beta_l,
    }
}

/// The ideal trusted observables (Z_d, X_d).
pub fn ideal_alice(d: usize) -> [ComplexMatrix; 2] {
    [clock(d), shift(d)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::ideal_realization;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_8, SQRT_2};

    fn sv(v: &[f64]) -> SchmidtVector {
        SchmidtVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mes_coefficients() {
        for d in 2..8 {
            let f = functional_coefficients(&SchmidtVector::uniform(d).unwrap());
            assert_abs_diff_eq!(f.gamma(), 1.0 / (d as f64 - 1.0), epsilon = 1e-14);
            assert!((f.delta()[0] + 1.0).norm() < 1e-12);
            for k in 1..d {
                assert!(f.delta()[k].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn qubit_partial_coefficients() {
        let f = functional_coefficients(&sv(&[3f64.sqrt() / 2.0, 0.5]));
        assert_abs_diff_eq!(f.gamma(), 3f64.sqrt() / 2.0, epsilon = 1e-14);
        assert!((f.delta()[1] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn qubit_mes_operator_is_zz_plus_xx() {
        let sv = SchmidtVector::uniform(2).unwrap();
        let f = functional_coefficients(&sv);
        let op = steering_operator(&f, &ideal_realization(&sv)).unwrap();
        let z = clock(2);
        let x = shift(2);
        let expected = &tensor(&z, &z).unwrap() + &tensor(&x, &x).unwrap();
        assert!(op.distance(&expected) < 1e-14);
    }

    #[test]
    fn ideal_operator_top_eigenvalue_is_d() {
        for d in 2..6 {
            let mut rng = seeded_rng(d as u64);
            let sv = SchmidtVector::random(d, 0.1, &mut rng).unwrap();
            let f = functional_coefficients(&sv);
            let op = steering_operator(&f, &ideal_realization(&sv)).unwrap();
            assert!(op.hermiticity_residual() <= 1e-9 * op.frobenius_norm());
            assert_abs_diff_eq!(top_eigenvalue(&op), d as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_bob_observables_leave_delta_term() {
        let sv = SchmidtVector::uniform(3).unwrap();
        let f = functional_coefficients(&sv);
        let r = ideal_realization(&sv);
        let zero = crate::measurements::povm_to_observable(&crate::measurements::Povm::trivial(3, 3)).unwrap();
        let r = r.with_bob(vec![zero.clone(), zero]).unwrap();
        let op = steering_operator(&f, &r).unwrap();
        assert!(op.max_abs() < 1e-12);
    }

    #[test]
    fn ideal_values() {
        let f = functional_coefficients(&SchmidtVector::uniform(2).unwrap());
        let v = evaluate(&f, &ideal_realization(f.alpha())).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-12);
        let s = sv(&[3f64.sqrt() / 2.0, 0.5]);
        let (a0, a1) = (s.alpha()[0], s.alpha()[1]);
        let closed = 1.0 + 4.0 * a0 * a0 * a1 * a1 + (a0 * a0 - a1 * a1).powi(2);
        assert_abs_diff_eq!(closed, 2.0, epsilon = 1e-12);
        let v = evaluate(&functional_coefficients(&s), &ideal_realization(&s)).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn qubit_mes_exact_bound_is_sqrt2() {
        let f = functional_coefficients(&SchmidtVector::uniform(2).unwrap());
        let lhs = lhs_bound_exact(&f);
        assert_abs_diff_eq!(lhs.value, SQRT_2, epsilon = 1e-12);
        assert_eq!(lhs.strategy, LhsStrategy::Deterministic { b0: 0, b1: 0 });
        let g = violation_gap(&f);
        assert_abs_diff_eq!(g.gap, 2.0 - SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn projector_and_observable_forms_agree() {
        let mut rng = seeded_rng(77);
        for d in 2..7 {
            let s = SchmidtVector::random(d, 0.05, &mut rng).unwrap();
            let f = functional_coefficients(&s);
            let a = lhs_bound_exact(&f);
            let b = lhs_bound_exact_for(&f, &ideal_alice(d)).unwrap();
            assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-10);
            assert!(a.value < d as f64);
        }
    }

    #[test]
    fn paper_bound_qubit_mes() {
        let f = functional_coefficients(&SchmidtVector::uniform(2).unwrap());
        let up = lhs_bound_paper_upper(&f, 8, 1);
        assert_abs_diff_eq!(up.value, SQRT_2, epsilon = 1e-9);
        let LhsStrategy::Eta(eta) = &up.strategy else { panic!("expected eta") };
        let (c, s) = (FRAC_PI_8.cos(), FRAC_PI_8.sin());
        let matches = (eta[0] - c).abs() < 1e-4 && (eta[1] - s).abs() < 1e-4
            || (eta[0] - s).abs() < 1e-4 && (eta[1] - c).abs() < 1e-4;
        assert!(matches, "eta = {eta:?}");
    }

    #[test]
    fn paper_objective_at_alpha() {
        let s = sv(&[0.6, 0.48, 0.64]);
        let f = functional_coefficients(&s);
        let v = paper_objective(&f, s.alpha());
        assert_abs_diff_eq!(v, 3.0 * 0.64f64 * 0.64, epsilon = 1e-12);
    }

    #[test]
    fn paper_bound_dominates_exact() {
        let mut rng = seeded_rng(3);
        for _ in 0..5 {
            let s = SchmidtVector::random(3, 0.05, &mut rng).unwrap();
            let f = functional_coefficients(&s);
            let up = lhs_bound_paper_upper(&f, 8, 2);
            assert!(up.value >= lhs_bound_exact(&f).value - 1e-7);
            assert!(up.value < 3.0);
        }
    }

    #[test]
    fn paper_bound_is_deterministic() {
        let s = sv(&[0.5, 0.5, 0.5, 0.5]);
        let f = functional_coefficients(&s);
        assert_eq!(lhs_bound_paper_upper(&f, 6, 9), lhs_bound_paper_upper(&f, 6, 9));
    }

    #[test]
    fn mismatched_dimension_is_size_error() {
        let f = functional_coefficients(&SchmidtVector::uniform(2).unwrap());
        let r = ideal_realization(&SchmidtVector::uniform(3).unwrap());
        assert!(matches!(evaluate(&f, &r), Err(Error::Size(_))));
    }
}
