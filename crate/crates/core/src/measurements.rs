//! Measurement algebra: generalized Pauli operators, the Fourier map between
//! POVMs and observables, projectivity diagnostics and correlators.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, size, Error, Result};
use crate::linalg::{hermitian_eig, inverse_sqrt, singular_values, unitary_distance, ComplexMatrix, Ket, DEFAULT_TOL, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliKind {
    Z,
    X,
}

/// ω^k with ω = exp(2πi/d); the exponent is reduced mod d first.
pub fn omega_pow(d: usize, k: i64) -> Complex64 {
    let r = k.rem_euclid(d as i64) as usize;
    // Quarter turns are returned exactly so that real operators stay real.
    if (4 * r).is_multiple_of(d) {
        return match 4 * r / d {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, 2.0 * PI * r as f64 / d as f64)
}

pub fn omega(d: usize) -> Complex64 {
    omega_pow(d, 1)
}

/// Z_d = Σ ω^i |i⟩⟨i|.
pub fn clock(d: usize) -> ComplexMatrix {
    let diag: Vec<Complex64> = (0..d).map(|i| omega_pow(d, i as i64)).collect();
    ComplexMatrix::from_diagonal(&diag)
}

/// X_d = Σ |i+1 mod d⟩⟨i|.
pub fn shift(d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |i, j| {
        if i == (j + 1) % d {
            Complex64::new(1.0, 0.0)
        } else {
            ZERO
        }
    })
}

pub fn generalized_pauli(d: usize, kind: PauliKind) -> Result<ComplexMatrix> {
    if d < 2 {
        return Err(domain(format!("generalized Pauli needs d >= 2, got {d}")));
    }
    Ok(match kind {
        PauliKind::Z => clock(d),
        PauliKind::X => shift(d),
    })
}

/// Weyl operator X_d^i Z_d^j.
pub fn weyl(d: usize, i: usize, j: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |r, c| {
        if r == (c + i) % d {
            omega_pow(d, (j * c) as i64)
        } else {
            ZERO
        }
    })
}

/// Eigenvector of X_d with eigenvalue ω^a: Σ_j ω^{−aj}|j⟩/√d.
pub fn shift_eigenvector(d: usize, a: usize) -> Vec<Complex64> {
    let s = 1.0 / (d as f64).sqrt();
    (0..d).map(|j| omega_pow(d, -((a * j) as i64)) * s).collect()
}

/// Ordered list of positive operators summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    dim: usize,
    elements: Vec<ComplexMatrix>,
}

impl Povm {
    /// Fully validated POVM at the default tolerance.
    pub fn new(elements: Vec<ComplexMatrix>) -> Result<Self> {
        let p = Self::from_elements(elements)?;
        let report = validate_povm(&p, DEFAULT_TOL);
        if !report.passed {
            return Err(domain(format!("invalid POVM: {}", report.failing.join("; "))));
        }
        Ok(p)
    }

    /// Shape-checked element list without positivity or completeness checks,
    /// for diagnostics on candidate measurements.
    pub fn from_elements(elements: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = elements
            .first()
            .ok_or_else(|| domain("a POVM needs at least one element"))?
            .rows();
        for (b, e) in elements.iter().enumerate() {
            if !e.is_square() || e.rows() != dim {
                return Err(size(format!(
                    "element {b} is {}x{}, expected {dim}x{dim}",
                    e.rows(),
                    e.cols()
                )));
            }
            if !e.is_finite() {
                return Err(domain(format!("element {b} has non-finite entries")));
            }
        }
        Ok(Self { dim, elements })
    }

    /// Projective measurement in the computational basis.
    pub fn computational(d: usize) -> Self {
        let elements = (0..d)
            .map(|a| {
                let mut m = ComplexMatrix::zeros(d, d);
                m[(a, a)] = Complex64::new(1.0, 0.0);
                m
            })
            .collect();
        Self { dim: d, elements }
    }

    /// n outcomes, each I/n.
    pub fn trivial(dim: usize, n: usize) -> Self {
        let e = ComplexMatrix::identity(dim).scale_real(1.0 / n as f64);
        Self {
            dim,
            elements: vec![e; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn element(&self, b: usize) -> &ComplexMatrix {
        &self.elements[b]
    }

    /// {N_b ⊗ I_n}.
    pub fn tensor_identity(&self, n: usize) -> Result<Self> {
        let id = ComplexMatrix::identity(n);
        let elements = self
            .elements
            .iter()
            .map(|e| crate::linalg::tensor(e, &id))
            .collect::<Result<_>>()?;
        Ok(Self {
            dim: self.dim * n,
            elements,
        })
    }

    /// {U N_b U†}.
    pub fn conjugated(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.rows() != self.dim || !u.is_square() {
            return Err(size("conjugating unitary has the wrong size"));
        }
        let ud = u.adjoint();
        Ok(Self {
            dim: self.dim,
            elements: self.elements.iter().map(|e| &(u * e) * &ud).collect(),
        })
    }
}

/// Per-element and global POVM diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmValidation {
    pub min_eigenvalues: Vec<f64>,
    pub hermiticity_residuals: Vec<f64>,
    pub completeness_residual: f64,
    pub passed: bool,
    pub failing: Vec<String>,
}

/// Checks Hermiticity, positivity and ‖Σ_b I_b − I‖_F against `tol`.
pub fn validate_povm(p: &Povm, tol: f64) -> PovmValidation {
    let mut failing = Vec::new();
    let mut min_eigenvalues = Vec::with_capacity(p.len());
    let mut hermiticity_residuals = Vec::with_capacity(p.len());
    let mut sum = ComplexMatrix::zeros(p.dim, p.dim);
    for (b, e) in p.elements.iter().enumerate() {
        let h = e.hermiticity_residual();
        hermiticity_residuals.push(h);
        if h > tol {
            failing.push(format!("element {b} not Hermitian (residual {h:.3e})"));
        }
        let min = hermitian_eig(&e.hermitian_part())
            .map(|eig| eig.values.last().copied().unwrap_or(0.0))
            .unwrap_or(f64::NEG_INFINITY);
        min_eigenvalues.push(min);
        if min < -tol {
            failing.push(format!("element {b} has eigenvalue {min:.3e}"));
        }
        sum = &sum + e;
    }
    let completeness_residual = sum.distance(&ComplexMatrix::identity(p.dim));
    if completeness_residual > tol {
        failing.push(format!(
            "elements do not sum to the identity (residual {completeness_residual:.3e})"
        ));
    }
    PovmValidation {
        min_eigenvalues,
        hermiticity_residuals,
        completeness_residual,
        passed: failing.is_empty(),
        failing,
    }
}

/// A d-outcome measurement in the observable picture, B_k = Σ_a ω^{ka} N_a.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedObservable {
    ops: Vec<ComplexMatrix>,
}

impl GeneralizedObservable {
    /// Validates B_0 = I, B_{d−k} = B_k† and ‖B_k‖_op ≤ 1 within 1e-9.
    pub fn new(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let d = ops.len();
        if d < 2 {
            return Err(domain(format!("an observable needs d >= 2 operators, got {d}")));
        }
        let dim = ops[0].rows();
        for (k, b) in ops.iter().enumerate() {
            if !b.is_square() || b.rows() != dim {
                return Err(size(format!("operator {k} has the wrong shape")));
            }
            if !b.is_finite() {
                return Err(domain(format!("operator {k} has non-finite entries")));
            }
        }
        let tol = DEFAULT_TOL;
        let r0 = ops[0].distance(&ComplexMatrix::identity(dim));
        if r0 > tol {
            return Err(Error::InvalidObservable(format!("B_0 differs from identity by {r0:.3e}")));
        }
        for k in 1..d {
            let r = ops[d - k].distance(&ops[k].adjoint());
            if r > tol {
                return Err(Error::InvalidObservable(format!(
                    "B_{} differs from B_{k}† by {r:.3e}",
                    d - k
                )));
            }
            let norm = singular_values(&ops[k]).first().copied().unwrap_or(0.0);
            if norm > 1.0 + tol {
                return Err(Error::InvalidObservable(format!(
                    "B_{k} has operator norm {norm}"
                )));
            }
        }
        Ok(Self { ops })
    }

    /// The projective observable generated by a unitary B with B^d = I.
    pub fn from_unitary(b: &ComplexMatrix, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(domain(format!("d must be >= 2, got {d}")));
        }
        let mut ops = Vec::with_capacity(d);
        let mut p = ComplexMatrix::identity(b.rows());
        for _ in 0..d {
            ops.push(p.clone());
            p = p.matmul(b)?;
        }
        Self::new(ops)
    }

    pub fn d(&self) -> usize {
        self.ops.len()
    }

    /// Hilbert-space dimension the operators act on.
    pub fn dim(&self) -> usize {
        self.ops[0].rows()
    }

    /// B_{k mod d}.
    pub fn op(&self, k: usize) -> &ComplexMatrix {
        &self.ops[k % self.ops.len()]
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    /// {U B_k U†} for a unitary U.
    pub fn conjugated(&self, u: &ComplexMatrix) -> Result<Self> {
        if !u.is_square() || u.rows() != self.dim() {
            return Err(size("conjugating unitary has the wrong size"));
        }
        let ud = u.adjoint();
        Ok(Self {
            ops: self.ops.iter().map(|b| &(u * b) * &ud).collect(),
        })
    }

    /// {B_k ⊗ I_n}.
    pub fn tensor_identity(&self, n: usize) -> Result<Self> {
        let id = ComplexMatrix::identity(n);
        Ok(Self {
            ops: self
                .ops
                .iter()
                .map(|b| crate::linalg::tensor(b, &id))
                .collect::<Result<_>>()?,
        })
    }

    /// Mixes the measurement with uniformly random outcomes:
    /// N_a → (1−p)N_a + p·I/d, i.e. B_k → (1−p)B_k for k ≥ 1.
    pub fn depolarized(&self, p: f64) -> Self {
        let ops = self
            .ops
            .iter()
            .enumerate()
            .map(|(k, b)| if k == 0 { b.clone() } else { b.scale_real(1.0 - p) })
            .collect();
        Self { ops }
    }
}

/// B_k = Σ_a ω^{ka} N_a, with d the outcome count.
pub fn povm_to_observable(p: &Povm) -> Result<GeneralizedObservable> {
    let d = p.len();
    if d < 2 {
        return Err(domain(format!("Fourier picture needs d >= 2 outcomes, got {d}")));
    }
    let ops = (0..d)
        .map(|k| {
            p.elements
                .iter()
                .enumerate()
                .fold(ComplexMatrix::zeros(p.dim, p.dim), |acc, (a, n)| {
                    &acc + &n.scale(omega_pow(d, (k * a) as i64))
                })
        })
        .collect();
    GeneralizedObservable::new(ops)
}

/// Eigenvalues below this are an invalid observable; between it and zero
/// they are treated as rounding and clipped.
pub const NEGATIVITY_LIMIT: f64 = 1e-6;

/// N_a = (1/d) Σ_k ω^{−ak} B_k. Small negative eigenvalues are clipped to
/// zero and the set renormalized to sum to the identity.
pub fn observable_to_povm(g: &GeneralizedObservable) -> Result<Povm> {
    let d = g.d();
    let dim = g.dim();
    let mut elements: Vec<ComplexMatrix> = (0..d)
        .map(|a| {
            g.ops
                .iter()
                .enumerate()
                .fold(ComplexMatrix::zeros(dim, dim), |acc, (k, b)| {
                    &acc + &b.scale(omega_pow(d, -((a * k) as i64)))
                })
                .scale_real(1.0 / d as f64)
                .hermitian_part()
        })
        .collect();
    let mut clipped = false;
    for (a, e) in elements.iter_mut().enumerate() {
        let eig = hermitian_eig(e)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -NEGATIVITY_LIMIT {
            return Err(Error::InvalidObservable(format!(
                "element {a} has eigenvalue {min:.3e}"
            )));
        }
        if min < 0.0 {
            *e = eig.map(|x| x.max(0.0));
            clipped = true;
        }
    }
    if clipped {
        let sum = elements
            .iter()
            .fold(ComplexMatrix::zeros(dim, dim), |acc, e| &acc + e);
        let s = inverse_sqrt(&sum)?;
        for e in &mut elements {
            *e = (&(&s * e) * &s).hermitian_part();
        }
    }
    Povm::from_elements(elements)
}

/// Projectivity diagnostics of an observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectivityReport {
    pub projective: bool,
    /// Frobenius distance of B_1 to the nearest unitary, ‖√(B_1†B_1) − I‖_F.
    pub unitarity_residual: f64,
    /// ‖B_1^d − I‖_F.
    pub order_residual: f64,
    /// max_k ‖B_k − B_1^k‖_F.
    pub power_residual: f64,
}

pub fn is_projective(g: &GeneralizedObservable, tol: f64) -> ProjectivityReport {
    let d = g.d();
    let b1 = g.op(1);
    let unitarity_residual = unitary_distance(b1);
    let mut p = ComplexMatrix::identity(g.dim());
    let mut power_residual: f64 = 0.0;
    for k in 1..d {
        p = &p * b1;
        power_residual = power_residual.max(g.op(k).distance(&p));
    }
    let order_residual = (&p * b1).distance(&ComplexMatrix::identity(g.dim()));
    ProjectivityReport {
        projective: unitarity_residual <= tol && order_residual <= tol && power_residual <= tol,
        unitarity_residual,
        order_residual,
        power_residual,
    }
}

/// Joint outcome probabilities p(a,b|x,y), indexed p[x][y][a][b].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorrelationTableWire", into = "CorrelationTableWire")]
pub struct CorrelationTable {
    d: usize,
    nx: usize,
    ny: usize,
    p: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Serialize, Deserialize)]
struct CorrelationTableWire {
    d: usize,
    nx: usize,
    ny: usize,
    p: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<CorrelationTableWire> for CorrelationTable {
    type Error = Error;

    fn try_from(w: CorrelationTableWire) -> Result<Self> {
        Self::new(w.d, w.nx, w.ny, w.p)
    }
}

impl From<CorrelationTable> for CorrelationTableWire {
    fn from(t: CorrelationTable) -> Self {
        Self {
            d: t.d,
            nx: t.nx,
            ny: t.ny,
            p: t.p,
        }
    }
}

impl CorrelationTable {
    pub fn new(d: usize, nx: usize, ny: usize, p: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        if d == 0 || nx == 0 || ny == 0 {
            return Err(size("table dimensions must be positive"));
        }
        let shape_ok = p.len() == nx
            && p.iter().all(|px| {
                px.len() == ny
                    && px
                        .iter()
                        .all(|pxy| pxy.len() == d && pxy.iter().all(|pa| pa.len() == d))
            });
        if !shape_ok {
            return Err(size(format!("probabilities must have shape [{nx}][{ny}][{d}][{d}]")));
        }
        for (x, px) in p.iter().enumerate() {
            for (y, pxy) in px.iter().enumerate() {
                let mut total = 0.0;
                for v in pxy.iter().flatten() {
                    if !(-1e-12..=1.0 + 1e-12).contains(v) {
                        return Err(domain(format!("probability {v} out of range at x={x}, y={y}")));
                    }
                    total += v;
                }
                if (total - 1.0).abs() > DEFAULT_TOL {
                    return Err(domain(format!("slice x={x}, y={y} sums to {total}")));
                }
            }
        }
        Ok(Self { d, nx, ny, p })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn prob(&self, a: usize, b: usize, x: usize, y: usize) -> Result<f64> {
        if x >= self.nx || y >= self.ny || a >= self.d || b >= self.d {
            return Err(Error::Index(format!("(a={a}, b={b}, x={x}, y={y}) out of range")));
        }
        Ok(self.p[x][y][a][b])
    }

    pub fn probabilities(&self) -> &[Vec<Vec<Vec<f64>>>] {
        &self.p
    }
}

/// Σ_{a,b} ω^{ak+bl} p(a,b|x,y).
pub fn correlator(table: &CorrelationTable, k: usize, l: usize, x: usize, y: usize) -> Result<Complex64> {
    let d = table.d;
    if k >= d || l >= d || x >= table.nx || y >= table.ny {
        return Err(Error::Index(format!("(k={k}, l={l}, x={x}, y={y}) out of range")));
    }
    let mut sum = ZERO;
    for a in 0..d {
        for b in 0..d {
            sum += omega_pow(d, (a * k + b * l) as i64) * table.p[x][y][a][b];
        }
    }
    Ok(sum)
}

/// Number of leading factors of `dims` whose product is exactly `target`.
fn leading_group(dims: &[usize], target: usize) -> Option<usize> {
    let mut prod = 1;
    for (i, &d) in dims.iter().enumerate() {
        if prod == target {
            return Some(i);
        }
        prod *= d;
    }
    (prod == target).then_some(dims.len())
}

/// p(a,b|x,y) = ⟨ψ|M_{a|x} ⊗ N_{b|y} ⊗ I|ψ⟩; Alice's operators act on a
/// leading factor group of the state, Bob's on the following group and any
/// remaining factors are traced out.
pub fn table_from_realization(state: &Ket, alice_povms: &[Povm], bob_povms: &[Povm]) -> Result<CorrelationTable> {
    let first = alice_povms
        .first()
        .ok_or_else(|| domain("Alice needs at least one measurement"))?;
    let second = bob_povms
        .first()
        .ok_or_else(|| domain("Bob needs at least one measurement"))?;
    let d = first.len();
    let (da, db) = (first.dim(), second.dim());
    for p in alice_povms.iter().chain(bob_povms) {
        if p.len() != d {
            return Err(size("all measurements must have the same outcome count"));
        }
    }
    if alice_povms.iter().any(|p| p.dim() != da) || bob_povms.iter().any(|p| p.dim() != db) {
        return Err(size("measurements of one party must share a dimension"));
    }
    let dims = state.factor_dims();
    let na = leading_group(dims, da)
        .ok_or_else(|| size(format!("Alice dimension {da} does not match state factors {dims:?}")))?;
    let nb = leading_group(&dims[na..], db)
        .ok_or_else(|| size(format!("Bob dimension {db} does not match state factors {dims:?}")))?;
    let keep: Vec<usize> = (0..na + nb).collect();
    let rho = state.reduced(&keep)?;
    let rho = rho.matrix();
    let mut p = vec![vec![vec![vec![0.0; d]; d]; bob_povms.len()]; alice_povms.len()];
    for (x, ma) in alice_povms.iter().enumerate() {
        for (y, nb_) in bob_povms.iter().enumerate() {
            for (a, pa) in p[x][y].iter_mut().enumerate() {
                let m = ma.element(a);
                for (b, pab) in pa.iter_mut().enumerate() {
                    let n = nb_.element(b);
                    // Tr[(M ⊗ N) ρ] = Σ M_ij N_kl ρ_(j,l),(i,k)
                    let mut s = ZERO;
                    for i in 0..da {
                        for j in 0..da {
                            let mij = m[(i, j)];
                            if mij == ZERO {
                                continue;
                            }
                            for k in 0..db {
                                for l in 0..db {
                                    s += mij * n[(k, l)] * rho[(j * db + l, i * db + k)];
                                }
                            }
                        }
                    }
                    *pab = s.re;
                }
            }
        }
    }
    CorrelationTable::new(d, alice_povms.len(), bob_povms.len(), p)
}
