//! Dense complex linear algebra: matrices, kets, density matrices, tensor
//! products, partial traces and Hermitian eigendecomposition.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{domain, size, Error, Result};

/// Default absolute tolerance for invariant checks.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default cap on the dimension of any tensor product.
pub const DEFAULT_DIM_CAP: usize = 4096;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries, checking shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(size("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(size(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(domain("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(size("ragged rows"));
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(entries: &[Complex64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &z) in entries.iter().enumerate() {
            m.data[i * n + i] = z;
        }
        m
    }

    pub fn from_real_diagonal(entries: &[f64]) -> Self {
        let v: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diagonal(&v)
    }

    /// The rank-one operator |a⟩⟨b|.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, z: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&w| w * z).collect(),
        }
    }

    pub fn scale_real(&self, x: f64) -> Self {
        self.scale(Complex64::new(x, 0.0))
    }

    /// Matrix product with a shape check.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(size(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product with a shape check.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(size(format!(
                "vector of length {} for a {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn trace(&self) -> Complex64 {
        self.diagonal().into_iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius distance ‖self − other‖_F; infinite on shape mismatch.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Integer power of a square matrix.
    pub fn pow(&self, k: usize) -> Result<Self> {
        if !self.is_square() {
            return Err(size("power of a non-square matrix"));
        }
        let mut out = Self::identity(self.rows);
        for _ in 0..k {
            out = out.matmul(self)?;
        }
        Ok(out)
    }

    /// ‖m − m†‖_F.
    pub fn hermiticity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.distance(&self.adjoint())
    }

    /// (m + m†)/2.
    pub fn hermitian_part(&self) -> Self {
        (self + &self.adjoint()).scale_real(0.5)
    }

    /// ‖m†m − I‖_F.
    pub fn unitarity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let p = &self.adjoint() * self;
        p.distance(&Self::identity(self.rows))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

fn elementwise(a: &ComplexMatrix, b: &ComplexMatrix, f: impl Fn(Complex64, Complex64) -> Complex64) -> ComplexMatrix {
    assert!(
        a.rows == b.rows && a.cols == b.cols,
        "shape mismatch: {}x{} vs {}x{}",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    ComplexMatrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

/// Panics on shape mismatch; use for internally consistent shapes.
impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        elementwise(self, rhs, |x, y| x + y)
    }
}

/// Panics on shape mismatch; use for internally consistent shapes.
impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        elementwise(self, rhs, |x, y| x - y)
    }
}

/// Panics on shape mismatch; [`ComplexMatrix::matmul`] is the checked form.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

/// Kronecker product a ⊗ b with the default dimension cap.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    tensor_with_cap(a, b, DEFAULT_DIM_CAP)
}

/// Kronecker product; the left factor indexes the coarse blocks.
pub fn tensor_with_cap(a: &ComplexMatrix, b: &ComplexMatrix, cap: usize) -> Result<ComplexMatrix> {
    let rows = a.rows.checked_mul(b.rows);
    let cols = a.cols.checked_mul(b.cols);
    match (rows, cols) {
        (Some(r), Some(c)) if r <= cap && c <= cap => {}
        _ => {
            return Err(size(format!(
                "tensor product of {}x{} and {}x{} exceeds the dimension cap {cap}",
                a.rows, a.cols, b.rows, b.cols
            )))
        }
    }
    let (br, bc) = (b.rows, b.cols);
    Ok(ComplexMatrix::from_fn(a.rows * br, a.cols * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    }))
}

/// Kronecker product of a list of factors, left to right.
pub fn tensor_all(factors: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| size("empty tensor product"))?;
    rest.iter().try_fold((*first).clone(), |acc, f| tensor(&acc, f))
}

/// For kept factors `keep` (sorted) and traced factors, returns
/// `full[k * dt + t]`, the flat index of the joint basis state whose kept
/// multi-index is `k` and traced multi-index is `t`, along with (dk, dt).
fn split_index_map(factor_dims: &[usize], keep: &[usize]) -> Result<(Vec<usize>, usize, usize)> {
    let n = factor_dims.len();
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() {
        return Err(Error::Index("duplicate factor in keep-set".into()));
    }
    if let Some(&bad) = kept.iter().find(|&&k| k >= n) {
        return Err(Error::Index(format!(
            "factor {bad} out of range for {n} factors"
        )));
    }
    let traced: Vec<usize> = (0..n).filter(|i| !kept.contains(i)).collect();
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * factor_dims[i + 1];
    }
    let dk: usize = kept.iter().map(|&i| factor_dims[i]).product();
    let dt: usize = traced.iter().map(|&i| factor_dims[i]).product();
    let offsets = |set: &[usize], count: usize| -> Vec<usize> {
        (0..count)
            .map(|mut idx| {
                let mut off = 0;
                for &f in set.iter().rev() {
                    off += (idx % factor_dims[f]) * strides[f];
                    idx /= factor_dims[f];
                }
                off
            })
            .collect()
    };
    let ko = offsets(&kept, dk);
    let to = offsets(&traced, dt);
    let mut full = Vec::with_capacity(dk * dt);
    for k in &ko {
        for t in &to {
            full.push(k + t);
        }
    }
    Ok((full, dk, dt))
}

fn check_factor_dims(factor_dims: &[usize], dim: usize) -> Result<()> {
    if factor_dims.is_empty() || factor_dims.contains(&0) {
        return Err(size("factor dimensions must be positive and non-empty"));
    }
    let prod = factor_dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| size("factor dimension product overflows"))?;
    if prod != dim {
        return Err(size(format!(
            "factor dimensions {factor_dims:?} do not multiply to {dim}"
        )));
    }
    Ok(())
}

/// Traces out every factor not listed in `keep`; kept factors stay in
/// their original order.
pub fn partial_trace(m: &ComplexMatrix, factor_dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(size("partial trace of a non-square matrix"));
    }
    check_factor_dims(factor_dims, m.rows)?;
    let (full, dk, dt) = split_index_map(factor_dims, keep)?;
    Ok(ComplexMatrix::from_fn(dk, dk, |k1, k2| {
        (0..dt)
            .map(|t| m[(full[k1 * dt + t], full[k2 * dt + t])])
            .sum()
    }))
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, i: usize) -> Vec<Complex64> {
        self.vectors.column(i)
    }

    /// V Λ V†.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let lam = ComplexMatrix::from_real_diagonal(&self.values);
        &(&self.vectors * &lam) * &self.vectors.adjoint()
    }

    /// Applies a real function to the spectrum: V f(Λ) V†.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let lam: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let lam = ComplexMatrix::from_real_diagonal(&lam);
        &(&self.vectors * &lam) * &self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition with the default Hermiticity tolerance.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEigen> {
    hermitian_eig_tol(m, DEFAULT_TOL)
}

/// Hermitian eigendecomposition with eigenvalues sorted descending.
///
/// Degenerate clusters are re-orthonormalized by Gram–Schmidt over the
/// projected standard basis vectors in index order, and every eigenvector
/// is phase-fixed so its first non-negligible component is real positive.
/// The output therefore does not depend on the backend's arbitrary choices.
pub fn hermitian_eig_tol(m: &ComplexMatrix, tol: f64) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::Contract("eigendecomposition of a non-square matrix".into()));
    }
    if !m.is_finite() {
        return Err(domain("matrix entries must be finite"));
    }
    let scale = m.frobenius_norm().max(1.0);
    let herm = m.hermiticity_residual();
    if herm > tol * scale {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian (residual {herm:.3e})"
        )));
    }
    let n = m.rows;
    let eig = m.hermitian_part().to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let raw: Vec<Vec<Complex64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();

    let spread = values.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    let cluster_tol = 1e-9 * spread;
    let mut vectors: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end - 1] - values[end] <= cluster_tol {
            end += 1;
        }
        if end - start == 1 {
            vectors.push(raw[start].clone());
        } else {
            vectors.extend(canonical_basis(&raw[start..end], n));
        }
        start = end;
    }
    for v in &mut vectors {
        fix_phase(v);
    }
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| vectors[j][i]);
    Ok(HermitianEigen { values, vectors })
}

/// Deterministic orthonormal basis of span(cluster): Gram–Schmidt over the
/// projections of e_0, e_1, ... onto the span.
fn canonical_basis(cluster: &[Vec<Complex64>], n: usize) -> Vec<Vec<Complex64>> {
    let want = cluster.len();
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(want);
    for j in 0..n {
        if basis.len() == want {
            break;
        }
        // P e_j = Σ_c v_c conj(v_c[j])
        let mut v = vec![ZERO; n];
        for c in cluster {
            let w = c[j].conj();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi += ci * w;
            }
        }
        for _ in 0..2 {
            for b in &basis {
                let p = inner(b, &v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= bi * p;
                }
            }
        }
        let nv = vec_norm(&v);
        if nv > 1e-3 {
            basis.push(v.into_iter().map(|z| z / nv).collect());
        }
    }
    if basis.len() < want {
        // Unreachable in exact arithmetic: some e_j always retains weight ≥ 1/√n.
        return cluster.to_vec();
    }
    basis
}

/// Rotates the global phase so the first component with modulus above
/// 1e-10 is real and positive.
pub fn fix_phase(v: &mut [Complex64]) {
    if let Some(i) = v.iter().position(|z| z.norm() > 1e-10) {
        let n = v[i].norm();
        let ph = v[i].conj() / n;
        for x in v.iter_mut() {
            *x *= ph;
        }
        v[i] = Complex64::new(n, 0.0);
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numerical_rank(m: &ComplexMatrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

/// Unitary factor U V† of the polar decomposition m = (U V†)(V Σ V†).
pub fn polar_unitary(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(size("polar decomposition of a non-square matrix"));
    }
    let svd = m.to_nalgebra().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Contract("SVD failed to produce U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Contract("SVD failed to produce V†".into()))?;
    Ok(ComplexMatrix::from_nalgebra(&(u * vt)))
}

/// Frobenius distance to the nearest unitary, ‖√(m†m) − I‖_F.
pub fn unitary_distance(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    singular_values(m)
        .iter()
        .map(|s| (s - 1.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Square root of a positive semidefinite matrix; negative rounding noise
/// in the spectrum is clipped to zero.
pub fn psd_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(hermitian_eig(m)?.map(|x| x.max(0.0).sqrt()))
}

/// Inverse square root of a positive definite matrix.
pub fn inverse_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let e = hermitian_eig(m)?;
    let min = e.values.last().copied().unwrap_or(0.0);
    let max = e.values.first().copied().unwrap_or(0.0);
    if min <= 1e-14 * max.max(1e-300) {
        return Err(domain("matrix is not positive definite"));
    }
    Ok(e.map(|x| 1.0 / x.sqrt()))
}

/// ⟨a|b⟩.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

/// ‖a − b‖.
pub fn vec_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Normalized pure state with tensor-factor bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amplitudes: Vec<Complex64>,
    factor_dims: Vec<usize>,
}

impl Ket {
    /// Validates shape, finiteness and unit norm (within 1e-9).
    pub fn new(amplitudes: Vec<Complex64>, factor_dims: Vec<usize>) -> Result<Self> {
        check_factor_dims(&factor_dims, amplitudes.len())?;
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(domain("ket amplitudes must be finite"));
        }
        let n = vec_norm(&amplitudes);
        if (n - 1.0).abs() > DEFAULT_TOL {
            return Err(domain(format!("ket norm {n} differs from 1")));
        }
        Ok(Self {
            amplitudes,
            factor_dims,
        })
    }

    /// Normalizes the amplitudes before validating.
    pub fn normalized(amplitudes: Vec<Complex64>, factor_dims: Vec<usize>) -> Result<Self> {
        let n = vec_norm(&amplitudes);
        if !(n > 0.0 && n.is_finite()) {
            return Err(domain("cannot normalize a zero or non-finite vector"));
        }
        Self::new(amplitudes.into_iter().map(|z| z / n).collect(), factor_dims)
    }

    /// Computational basis state |index⟩ of a single factor of size `dim`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::Index(format!("basis index {index} >= {dim}")));
        }
        let mut v = vec![ZERO; dim];
        v[index] = ONE;
        Self::new(v, vec![dim])
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.amplitudes)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Ket) -> Complex64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// |self⟩ ⊗ |other⟩ with concatenated factor dimensions.
    pub fn tensor(&self, other: &Ket) -> Result<Ket> {
        let dim = self.dim() * other.dim();
        if dim > DEFAULT_DIM_CAP {
            return Err(size(format!("ket dimension {dim} exceeds the cap")));
        }
        let mut amps = Vec::with_capacity(dim);
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amps.push(a * b);
            }
        }
        let mut dims = self.factor_dims.clone();
        dims.extend_from_slice(&other.factor_dims);
        Ok(Ket {
            amplitudes: amps,
            factor_dims: dims,
        })
    }

    /// Reinterprets the factorization without touching amplitudes.
    pub fn regroup(&self, factor_dims: Vec<usize>) -> Result<Ket> {
        check_factor_dims(&factor_dims, self.dim())?;
        Ok(Ket {
            amplitudes: self.amplitudes.clone(),
            factor_dims,
        })
    }

    /// Reorders tensor factors: factor `perm[i]` of `self` becomes factor `i`.
    pub fn permute_factors(&self, perm: &[usize]) -> Result<Ket> {
        let n = self.factor_dims.len();
        let mut seen = perm.to_vec();
        seen.sort_unstable();
        if seen != (0..n).collect::<Vec<_>>() {
            return Err(Error::Index(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.factor_dims[p]).collect();
        let mut old_strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            old_strides[i] = old_strides[i + 1] * self.factor_dims[i + 1];
        }
        let amps = (0..self.dim())
            .map(|mut idx| {
                let mut old = 0;
                for i in (0..n).rev() {
                    old += (idx % new_dims[i]) * old_strides[perm[i]];
                    idx /= new_dims[i];
                }
                self.amplitudes[old]
            })
            .collect();
        Ok(Ket {
            amplitudes: amps,
            factor_dims: new_dims,
        })
    }

    /// (op ⊗ I)|ψ⟩ where `op` acts on a leading group of factors whose
    /// dimensions multiply to op's size.
    pub fn apply_prefix(&self, op: &ComplexMatrix) -> Result<Vec<Complex64>> {
        let rest = self.prefix_rest(op)?;
        let n = op.rows();
        let mut out = vec![ZERO; self.dim()];
        for i in 0..n {
            for j in 0..n {
                let a = op[(i, j)];
                if a == ZERO {
                    continue;
                }
                let src = &self.amplitudes[j * rest..(j + 1) * rest];
                for (o, s) in out[i * rest..(i + 1) * rest].iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
        Ok(out)
    }

    /// ⟨ψ|(op ⊗ I)|ψ⟩ with `op` on a leading factor group.
    pub fn expectation_prefix(&self, op: &ComplexMatrix) -> Result<Complex64> {
        let v = self.apply_prefix(op)?;
        Ok(inner(&self.amplitudes, &v))
    }

    fn prefix_rest(&self, op: &ComplexMatrix) -> Result<usize> {
        if !op.is_square() {
            return Err(size("operator must be square"));
        }
        let mut prod = 1;
        for (i, &d) in self.factor_dims.iter().enumerate() {
            if prod == op.rows() {
                return Ok(self.factor_dims[i..].iter().product());
            }
            prod *= d;
        }
        if prod == op.rows() {
            return Ok(1);
        }
        Err(size(format!(
            "operator of size {} does not match a leading factor group of {:?}",
            op.rows(),
            self.factor_dims
        )))
    }

    /// Applies `op` to a single tensor factor.
    pub fn apply_on_factor(&self, factor: usize, op: &ComplexMatrix) -> Result<Vec<Complex64>> {
        let dims = &self.factor_dims;
        if factor >= dims.len() {
            return Err(Error::Index(format!("factor {factor} out of range")));
        }
        if !op.is_square() || op.rows() != dims[factor] {
            return Err(size(format!(
                "operator of size {}x{} on factor of dimension {}",
                op.rows(),
                op.cols(),
                dims[factor]
            )));
        }
        let left: usize = dims[..factor].iter().product();
        let right: usize = dims[factor + 1..].iter().product();
        let n = dims[factor];
        let mut out = vec![ZERO; self.dim()];
        for l in 0..left {
            for i in 0..n {
                for j in 0..n {
                    let a = op[(i, j)];
                    if a == ZERO {
                        continue;
                    }
                    let src = (l * n + j) * right;
                    let dst = (l * n + i) * right;
                    for r in 0..right {
                        out[dst + r] += a * self.amplitudes[src + r];
                    }
                }
            }
        }
        Ok(out)
    }

    /// |ψ⟩⟨ψ| as a plain matrix.
    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    /// Reduced state on the listed factors, kept in their original order.
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let (full, dk, dt) = split_index_map(&self.factor_dims, keep)?;
        let psi = &self.amplitudes;
        let m = ComplexMatrix::from_fn(dk, dk, |k1, k2| {
            (0..dt)
                .map(|t| psi[full[k1 * dt + t]] * psi[full[k2 * dt + t]].conj())
                .sum()
        });
        Ok(DensityMatrix { matrix: m })
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::new_with_tol(matrix, DEFAULT_TOL)
    }

    pub fn new_with_tol(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(size("density matrix must be square"));
        }
        let h = matrix.hermiticity_residual();
        if h > tol {
            return Err(domain(format!("density matrix not Hermitian (residual {h:.3e})")));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > tol {
            return Err(domain(format!("density matrix trace {tr} differs from 1")));
        }
        let eig = hermitian_eig_tol(&matrix, tol.max(DEFAULT_TOL))?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -tol {
            return Err(domain(format!("density matrix has eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix })
    }

    pub fn from_ket(ket: &Ket) -> Self {
        Self {
            matrix: ket.projector(),
        }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(n).scale_real(1.0 / n as f64),
        }
    }

    /// Diagonal state from a probability vector.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_real_diagonal(probs))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn real(rows: usize, cols: usize, v: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_vec(rows, cols, v.iter().map(|&x| c(x, 0.0)).collect()).unwrap()
    }

    fn shift3() -> ComplexMatrix {
        ComplexMatrix::from_fn(3, 3, |i, j| if i == (j + 1) % 3 { ONE } else { ZERO })
    }

    #[test]
    fn identity_tensor_identity() {
        let i4 = tensor(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(i4, ComplexMatrix::identity(4));
    }

    #[test]
    fn z_tensor_z_is_diagonal() {
        let z = real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let zz = tensor(&z, &z).unwrap();
        assert_eq!(zz, ComplexMatrix::from_real_diagonal(&[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn shift_tensor_identity_on_basis() {
        let op = tensor(&shift3(), &ComplexMatrix::identity(2)).unwrap();
        let ket = Ket::basis(3, 0).unwrap().tensor(&Ket::basis(2, 0).unwrap()).unwrap();
        let out = op.apply(ket.amplitudes()).unwrap();
        let expected = Ket::basis(3, 1).unwrap().tensor(&Ket::basis(2, 0).unwrap()).unwrap();
        assert_eq!(out, expected.amplitudes());
    }

    #[test]
    fn tensor_cap_is_enforced() {
        let a = ComplexMatrix::identity(64);
        let b = ComplexMatrix::identity(65);
        assert!(matches!(tensor(&a, &b), Err(Error::Size(_))));
        assert!(tensor_with_cap(&a, &b, 5000).is_ok());
    }

    #[test]
    fn tensor_is_associative_on_integers() {
        let a = real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = real(2, 1, &[-1.0, 5.0]);
        let cm = real(1, 3, &[2.0, 0.0, 7.0]);
        let left = tensor(&tensor(&a, &b).unwrap(), &cm).unwrap();
        let right = tensor(&a, &tensor(&b, &cm).unwrap()).unwrap();
        assert_eq!(left, right);
    }

    #[test]
    fn bell_state_reduces_to_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = Ket::new(vec![c(s, 0.0), ZERO, ZERO, c(s, 0.0)], vec![2, 2]).unwrap();
        let rho = partial_trace(&bell.projector(), &[2, 2], &[0]).unwrap();
        assert!(rho.distance(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
        let rho2 = bell.reduced(&[0]).unwrap();
        assert!(rho2.matrix().distance(&rho) < 1e-15);
    }

    #[test]
    fn product_state_reduction() {
        let zero = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        let rho = real(2, 2, &[0.3, 0.1, 0.1, 0.7]);
        let joint = tensor(&zero, &rho).unwrap();
        let red = partial_trace(&joint, &[2, 2], &[0]).unwrap();
        assert!(red.distance(&zero) < 1e-15);
        let red_b = partial_trace(&joint, &[2, 2], &[1]).unwrap();
        assert!(red_b.distance(&rho) < 1e-15);
    }

    #[test]
    fn schmidt_weights_appear_in_reduction() {
        let a0 = 3f64.sqrt() / 2.0;
        let psi = Ket::new(vec![c(a0, 0.0), ZERO, ZERO, c(0.5, 0.0)], vec![2, 2]).unwrap();
        let rho_b = partial_trace(&psi.projector(), &[2, 2], &[1]).unwrap();
        assert!(rho_b.distance(&ComplexMatrix::from_real_diagonal(&[0.75, 0.25])) < 1e-15);
    }

    #[test]
    fn partial_trace_over_everything_is_trace() {
        let m = ComplexMatrix::from_fn(6, 6, |i, j| c((i * 6 + j) as f64, i as f64 - j as f64));
        let t = partial_trace(&m, &[2, 3], &[]).unwrap();
        assert_eq!(t.rows(), 1);
        assert!((t[(0, 0)] - m.trace()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_preserves_trace_and_order() {
        let m = ComplexMatrix::from_fn(12, 12, |i, j| c(((i * 7 + j * 3) % 5) as f64, 0.0));
        for keep in [&[0usize][..], &[1], &[2], &[0, 2], &[2, 0], &[0, 1, 2]] {
            let t = partial_trace(&m, &[2, 3, 2], keep).unwrap();
            assert!((t.trace() - m.trace()).norm() < 1e-12);
        }
        let full = partial_trace(&m, &[2, 3, 2], &[0, 1, 2]).unwrap();
        assert_eq!(full, m);
    }

    #[test]
    fn partial_trace_rejects_bad_keep() {
        let m = ComplexMatrix::identity(4);
        assert!(matches!(partial_trace(&m, &[2, 2], &[2]), Err(Error::Index(_))));
        assert!(matches!(partial_trace(&m, &[2, 2], &[0, 0]), Err(Error::Index(_))));
        assert!(matches!(partial_trace(&m, &[2, 3], &[0]), Err(Error::Size(_))));
    }

    #[test]
    fn eig_of_pauli_z() {
        let z = real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let e = hermitian_eig(&z).unwrap();
        assert_eq!(e.values, vec![1.0, -1.0]);
        assert!(e.reconstruct().distance(&z) < 1e-12);
    }

    #[test]
    fn eig_of_rank_one_projector() {
        let p = ComplexMatrix::from_real_diagonal(&[1.0, 0.0, 0.0]);
        let e = hermitian_eig(&p).unwrap();
        for (got, want) in e.values.iter().zip([1.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        // Degenerate zero eigenspace resolves to e_1, e_2 in index order.
        assert!(vec_distance(&e.vector(1), &[ZERO, ONE, ZERO]) < 1e-12);
        assert!(vec_distance(&e.vector(2), &[ZERO, ZERO, ONE]) < 1e-12);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(hermitian_eig(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn eig_is_basis_independent_on_degenerate_spectra() {
        let h = ComplexMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                c(0.0, 0.0)
            } else {
                c(1.0, 0.0)
            }
        });
        let e = hermitian_eig(&h).unwrap();
        assert_abs_diff_eq!(e.values[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], -1.0, epsilon = 1e-12);
        assert!(e.reconstruct().distance(&h) < 1e-12);
        for v in [e.vector(0), e.vector(1), e.vector(2)] {
            let first = v.iter().find(|z| z.norm() > 1e-10).unwrap();
            assert!(first.im.abs() < 1e-14 && first.re > 0.0);
        }
        let g = &e.vectors.adjoint() * &e.vectors;
        assert!(g.distance(&ComplexMatrix::identity(3)) < 1e-12);
    }

    #[test]
    fn polar_and_singular_values() {
        let m = real(2, 2, &[0.0, 2.0, 3.0, 0.0]);
        assert_eq!(singular_values(&m), vec![3.0, 2.0]);
        let u = polar_unitary(&m).unwrap();
        assert!(u.distance(&real(2, 2, &[0.0, 1.0, 1.0, 0.0])) < 1e-12);
        assert_abs_diff_eq!(unitary_distance(&m), 5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(numerical_rank(&real(2, 2, &[1.0, 1.0, 1.0, 1.0]), 1e-8), 1);
    }

    #[test]
    fn prefix_and_factor_application_agree_with_dense_operators() {
        let psi = Ket::normalized(
            (0..12).map(|i| c(i as f64 + 1.0, (i % 3) as f64)).collect(),
            vec![3, 2, 2],
        )
        .unwrap();
        let x = shift3();
        let dense = tensor(&x, &ComplexMatrix::identity(4)).unwrap();
        assert!(vec_distance(&psi.apply_prefix(&x).unwrap(), &dense.apply(psi.amplitudes()).unwrap()) < 1e-14);
        let y = real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let dense_mid = tensor_all(&[&ComplexMatrix::identity(3), &y, &ComplexMatrix::identity(2)]).unwrap();
        assert!(
            vec_distance(&psi.apply_on_factor(1, &y).unwrap(), &dense_mid.apply(psi.amplitudes()).unwrap())
                < 1e-14
        );
        assert!(psi.apply_prefix(&ComplexMatrix::identity(2)).is_err());
        assert!(psi.apply_prefix(&ComplexMatrix::identity(6)).is_ok());
    }

    #[test]
    fn factor_permutation_moves_amplitudes() {
        let a = Ket::basis(3, 2).unwrap();
        let b = Ket::basis(2, 1).unwrap();
        let ab = a.tensor(&b).unwrap();
        let ba = ab.permute_factors(&[1, 0]).unwrap();
        assert_eq!(ba, b.tensor(&a).unwrap());
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::diagonal(&[0.75, 0.25]).is_ok());
        assert!(DensityMatrix::diagonal(&[0.75, 0.3]).is_err());
        assert!(DensityMatrix::diagonal(&[1.1, -0.1]).is_err());
        assert!(DensityMatrix::new(real(2, 2, &[0.5, 0.1, 0.0, 0.5])).is_err());
    }

    #[test]
    fn ket_validation() {
        assert!(Ket::new(vec![ONE, ONE], vec![2]).is_err());
        assert!(Ket::new(vec![ONE, ZERO], vec![3]).is_err());
        assert!(Ket::normalized(vec![ZERO, ZERO], vec![2]).is_err());
        assert!(Ket::basis(2, 2).is_err());
    }
}
