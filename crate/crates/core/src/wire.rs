//! JSON file formats. Complex numbers are `[re, im]` pairs and matrices are
//! row-major nested arrays of them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{size, Error, Result};
use crate::linalg::{ComplexMatrix, Ket};
use crate::measurements::{GeneralizedObservable, Povm};
use crate::states::{Realization, SchmidtVector};

pub type WireComplex = [f64; 2];
pub type WireMatrix = Vec<Vec<WireComplex>>;

/// Negative zeros are written as 0.
pub fn complex_to_wire(z: Complex64) -> WireComplex {
    [z.re + 0.0, z.im + 0.0]
}

pub fn complex_from_wire(z: WireComplex) -> Complex64 {
    Complex64::new(z[0], z[1])
}

pub fn vector_to_wire(v: &[Complex64]) -> Vec<WireComplex> {
    v.iter().copied().map(complex_to_wire).collect()
}

pub fn vector_from_wire(v: &[WireComplex]) -> Vec<Complex64> {
    v.iter().copied().map(complex_from_wire).collect()
}

pub fn matrix_to_wire(m: &ComplexMatrix) -> WireMatrix {
    m.to_rows().iter().map(|r| vector_to_wire(r)).collect()
}

pub fn matrix_from_wire(m: &WireMatrix) -> Result<ComplexMatrix> {
    let rows: Vec<Vec<Complex64>> = m.iter().map(|r| vector_from_wire(r)).collect();
    let out = ComplexMatrix::from_rows(&rows)?;
    if !out.is_finite() {
        return Err(Error::Parse("matrix has non-finite entries".into()));
    }
    Ok(out)
}

/// A realization on disk. `bob` lists every Fourier operator B_k, k = 0..d−1,
/// so non-projective measurements round-trip exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationFile {
    pub d: usize,
    pub alpha: Vec<f64>,
    /// Factor dimensions (Alice, Bob, Eve).
    pub dims: [usize; 3],
    pub state: Vec<WireComplex>,
    pub alice: Vec<WireMatrix>,
    pub bob: Vec<Vec<WireMatrix>>,
}

impl RealizationFile {
    pub fn from_realization(r: &Realization, sv: &SchmidtVector) -> Self {
        let f = r.state().factor_dims();
        Self {
            d: r.d(),
            alpha: sv.alpha().to_vec(),
            dims: [f[0], f[1], f[2]],
            state: vector_to_wire(r.state().amplitudes()),
            alice: r.alice().iter().map(matrix_to_wire).collect(),
            bob: r
                .bob()
                .iter()
                .map(|b| b.ops().iter().map(matrix_to_wire).collect())
                .collect(),
        }
    }

    pub fn to_realization(&self) -> Result<(Realization, SchmidtVector)> {
        let sv = SchmidtVector::new(self.alpha.clone())?;
        if sv.d() != self.d {
            return Err(size(format!("alpha has {} entries, d = {}", sv.d(), self.d)));
        }
        let state = Ket::new(vector_from_wire(&self.state), self.dims.to_vec())?;
        let alice = self.alice.iter().map(matrix_from_wire).collect::<Result<Vec<_>>>()?;
        let bob = self
            .bob
            .iter()
            .map(|ops| {
                let ops = ops.iter().map(matrix_from_wire).collect::<Result<Vec<_>>>()?;
                GeneralizedObservable::new(ops)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Realization::new(self.d, state, alice, bob)?, sv))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmFile {
    pub dim: usize,
    pub elements: Vec<WireMatrix>,
}

impl PovmFile {
    pub fn from_povm(p: &Povm) -> Self {
        Self {
            dim: p.dim(),
            elements: p.elements().iter().map(matrix_to_wire).collect(),
        }
    }

    /// Shape-checked only; run `validate_povm` for positivity and
    /// completeness.
    pub fn to_povm(&self) -> Result<Povm> {
        let elements = self.elements.iter().map(matrix_from_wire).collect::<Result<Vec<_>>>()?;
        let p = Povm::from_elements(elements)?;
        if p.dim() != self.dim {
            return Err(size(format!("elements act on dimension {}, file says {}", p.dim(), self.dim)));
        }
        Ok(p)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}
