use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEig {
    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }
}

/// Eigendecomposition of a Hermitian matrix. Only the Hermitian part of `m`
/// is used.
pub fn hermitian_eig(m: &CMatrix) -> HermitianEig {
    assert!(m.is_square(), "hermitian_eig needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return HermitianEig {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    HermitianEig { values, vectors }
}

/// Cholesky factor of a Hermitian positive definite matrix, or `None` if the
/// matrix is not positive definite. For complex input nalgebra takes the
/// complex square root of every pivot and never rejects a matrix, so each
/// pivot is checked to be real and positive here.
pub fn hermitian_cholesky(m: &CMatrix) -> Option<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(m.clone())?;
    let definite = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re.is_finite() && d.re > 0.0 && d.im.abs() <= 1e-12 * d.re);
    definite.then_some(chol)
}

/// Eigenvalues (ascending) and eigenvectors of a real symmetric matrix.
pub fn symmetric_eig(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[derive(Debug, Clone)]
pub struct SingularPair {
    pub sigma: f64,
    pub left: DVector<Complex64>,
    pub right: DVector<Complex64>,
}

/// Largest singular value of a square complex matrix with unit singular
/// vectors, `M·right = σ·left`.
///
/// Computed from Hermitian eigendecompositions: nalgebra's complex SVD can
/// return a wrong leading triple on exactly rank-one input.
pub fn principal_singular_pair(m: &CMatrix) -> SingularPair {
    let n = m.nrows();
    assert!(m.is_square() && n > 0, "principal_singular_pair needs a non-empty square matrix");
    let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if max_asymmetry(m) <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        let eig = hermitian_eig(m);
        let (lo, hi) = (eig.values[0], eig.values[n - 1]);
        let idx = if hi >= -lo { n - 1 } else { 0 };
        let left = eig.vectors.column(idx).into_owned();
        let sign = if eig.values[idx] < 0.0 { -1.0 } else { 1.0 };
        return SingularPair {
            sigma: eig.values[idx].abs(),
            right: &left * Complex64::new(sign, 0.0),
            left,
        };
    }
    let gram = m.adjoint() * m;
    let eig = hermitian_eig(&gram);
    let right = eig.vectors.column(n - 1).into_owned();
    let image = m * &right;
    let sigma = image.norm();
    let left = if sigma > 0.0 {
        image / Complex64::new(sigma, 0.0)
    } else {
        right.clone()
    };
    SingularPair { sigma, left, right }
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Real inner product `Re Tr(A^H B)`.
pub fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `max |M_ij - conj(M_ji)|`.
pub fn max_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}
