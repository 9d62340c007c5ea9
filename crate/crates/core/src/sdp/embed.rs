use nalgebra::{DMatrix, DVector};

use crate::model::{ComplexVec, HermitianMat, C64};

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]` of a Hermitian
/// matrix. With `x̃ = (Re x; Im x)` it satisfies `xᴴHx = x̃ᵀ H̃ x̃`, and
/// every eigenvalue of `H` appears twice in `H̃`.
pub fn embed_hermitian(h: &HermitianMat) -> DMatrix<f64> {
    let m = h.as_matrix();
    let n = m.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// `(Re x; Im x)`.
pub fn embed_vector(x: &ComplexVec) -> DVector<f64> {
    let n = x.dim();
    DVector::from_fn(2 * n, |i, _| {
        if i < n {
            x.entries()[i].re
        } else {
            x.entries()[i - n].im
        }
    })
}

/// Eigendecomposition with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: Vec<ComplexVec>,
}

impl HermitianEig {
    pub fn max_value(&self) -> f64 {
        *self.values.last().expect("non-empty decomposition")
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }
}

pub fn hermitian_eig(h: &HermitianMat) -> HermitianEig {
    let eig = h.as_matrix().clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = idx
        .iter()
        .map(|&i| {
            let v: DVector<C64> = eig.eigenvectors.column(i).into_owned();
            ComplexVec::from_vector_unchecked(v)
        })
        .collect();
    HermitianEig { values, vectors }
}
