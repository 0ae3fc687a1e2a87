//! Dense symmetric helpers shared by the spectral code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-decomposition of the symmetric pencil `H x = λ G x` with `G`
/// positive definite.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    /// Ascending eigenvalues.
    pub values: DVector<f64>,
    /// Columns are `G`-orthonormal eigenvectors matching `values`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn cholesky(g: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(g.clone()).ok_or(Error::IndefiniteGram)
}

/// `L⁻¹ H L⁻ᵀ` for the Cholesky factor `L` of `G`.
fn congruence(h: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let l = chol.l();
    let left = l.solve_lower_triangular(h).expect("Cholesky factor is nonsingular");
    let mut c = l
        .solve_lower_triangular(&left.transpose())
        .expect("Cholesky factor is nonsingular");
    symmetrize(&mut c);
    c
}

pub fn generalized_eigen(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<PencilEigen> {
    let chol = cholesky(g)?;
    Ok(generalized_eigen_with(h, &chol))
}

pub fn generalized_eigen_with(h: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>) -> PencilEigen {
    let c = congruence(h, chol);
    let eig = SymmetricEigen::new(c);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut y = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        y.set_column(col, &eig.eigenvectors.column(k));
    }
    let vectors = chol
        .l()
        .tr_solve_lower_triangular(&y)
        .expect("Cholesky factor is nonsingular");
    PencilEigen { values, vectors }
}

/// Largest `|λ|` of the pencil `(H, G)`, i.e. the operator norm of `G⁻¹H`
/// measured in the `G` norm.
pub fn pencil_norm(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(g)?;
    let c = congruence(h, &chol);
    let eig = SymmetricEigen::new(c);
    Ok(eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_eigen_diagonal_pencil() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -2.0]));
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let e = generalized_eigen(&h, &g).unwrap();
        assert!((e.values[0] + 0.5).abs() < 1e-15);
        assert!((e.values[1] - 3.0).abs() < 1e-15);
        let gram = e.vectors.transpose() * &g * &e.vectors;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn indefinite_gram_rejected() {
        let h = DMatrix::identity(2, 2);
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(generalized_eigen(&h, &g), Err(Error::IndefiniteGram)));
    }
}
