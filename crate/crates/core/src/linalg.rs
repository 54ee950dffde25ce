//! Layout primitives and curvature majorizers.
//!
//! Vectorization is column-major throughout: `vec(A)` stacks the columns of
//! `A` top to bottom, so `vec(ABC) = (Cᵀ ⊗ A) vec(B)`. This matches the native
//! storage order of [`DMatrix`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance used by the PSD-order checks.
pub const PSD_TOL: f64 = 1e-10;

/// Default ridge added to every curvature bound.
pub const DEFAULT_EPSILON_STAR: f64 = 1e-6;

/// Relative eigenvalue cutoff below which a direction is treated as null
/// when solving with a positive semi-definite system matrix.
pub const RANK_RCOND: f64 = 1e-10;

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Inverse of [`vec_of`]: reshapes `v` into a `rows × cols` matrix, column-major.
pub fn mat_of(v: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::shape(format!(
            "cannot reshape vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v))
}

/// Reshapes a vector of square length into a square matrix.
pub fn mat_square(v: &[f64]) -> Result<DMatrix<f64>> {
    let side = (v.len() as f64).sqrt().round() as usize;
    mat_of(v, side, side)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Kronecker product of two vectors, `a ⊗ b`.
pub fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        out.extend(b.iter().map(|&bj| ai * bj));
    }
    out
}

/// Stacks the `n` diagonal `t × t` blocks of a `tn × tn` matrix into a `tn × t` matrix.
pub fn bdiag_extract(a: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    if t == 0 || a.nrows() != a.ncols() || !a.nrows().is_multiple_of(t) {
        return Err(Error::shape(format!(
            "bdiag_extract needs a square matrix with side divisible by {t}, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows() / t;
    let mut out = DMatrix::zeros(n * t, t);
    for i in 0..n {
        out.view_mut((i * t, 0), (t, t))
            .copy_from(&a.view((i * t, i * t), (t, t)));
    }
    Ok(out)
}

/// Places the stacked `t × t` blocks of a `gt × t` matrix on a block diagonal.
pub fn bdiag_inverse(b: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    if t == 0 || b.ncols() != t || !b.nrows().is_multiple_of(t) {
        return Err(Error::shape(format!(
            "bdiag_inverse needs a (g*{t})x{t} matrix, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let g = b.nrows() / t;
    let mut out = DMatrix::zeros(g * t, g * t);
    for i in 0..g {
        out.view_mut((i * t, i * t), (t, t))
            .copy_from(&b.view((i * t, 0), (t, t)));
    }
    Ok(out)
}

/// `(1/2)(I − 11ᵀ/N)`: dominates `diag(π) − ππᵀ` for every stochastic vector π of length N.
pub fn bohning_classic_bound(dim: usize) -> DMatrix<f64> {
    assert!(dim >= 1, "bound dimension must be positive");
    let n = dim as f64;
    DMatrix::from_fn(dim, dim, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        0.5 * (id - 1.0 / n)
    })
}

/// `(3/4)I − 11ᵀ/(2b)`: dominates `diag(π̂) − π̂π̂ᵀ` for every positive sub-stochastic π̂ of length b.
pub fn bohning_corrected_bound(block_count: usize) -> DMatrix<f64> {
    assert!(block_count >= 1, "bound dimension must be positive");
    let b = block_count as f64;
    DMatrix::from_fn(block_count, block_count, |i, j| {
        let id = if i == j { 0.75 } else { 0.0 };
        id - 1.0 / (2.0 * b)
    })
}

/// Inputs of the quadratic curvature bound `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureBoundSpec {
    pub block_count: usize,
    pub feature_vec: Vec<f64>,
    pub epsilon_star: f64,
}

impl CurvatureBoundSpec {
    pub fn new(block_count: usize, feature_vec: Vec<f64>, epsilon_star: f64) -> Result<Self> {
        let spec = Self {
            block_count,
            feature_vec,
            epsilon_star,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_count == 0 {
            return Err(Error::param("block_count must be positive"));
        }
        if !(self.epsilon_star > 0.0) || !self.epsilon_star.is_finite() {
            return Err(Error::param(format!(
                "epsilon_star must be positive and finite, got {}",
                self.epsilon_star
            )));
        }
        if self.feature_vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("feature vector must be finite"));
        }
        Ok(())
    }

    /// Checks the feature vector length against `P·(D+1)`.
    pub fn check_dims(&self, covariates: usize, degree: usize) -> Result<()> {
        let expected = covariates * (degree + 1);
        if self.feature_vec.len() != expected {
            return Err(Error::shape(format!(
                "feature vector has length {}, expected {expected}",
                self.feature_vec.len()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.block_count * self.feature_vec.len()
    }
}

/// `B = ((3/4)I_b − 11ᵀ/(2b)) ⊗ x̂x̂ᵀ + ε*·I`.
pub fn build_b(spec: &CurvatureBoundSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let f = spec.feature_vec.len();
    let b = spec.block_count;
    let bound = bohning_corrected_bound(b);
    let x = DVector::from_column_slice(&spec.feature_vec);
    let outer = &x * x.transpose();
    let mut m = kron(&bound, &outer);
    for i in 0..b * f {
        m[(i, i)] += spec.epsilon_star;
    }
    Ok(m)
}

/// Eigenvalue envelope `max(1/λ_min(B), λ_max(B))`, reported for diagnostics.
pub fn envelope_m0(b: &DMatrix<f64>) -> f64 {
    let eig = sym_eigenvalues(b);
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (1.0 / lo).max(hi)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().cloned().collect()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).into_iter().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// True when `upper − lower ⪰ 0` up to `tol`.
pub fn psd_dominates(upper: &DMatrix<f64>, lower: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(&(upper - lower)) >= -tol
}

pub fn is_psd(a: &DMatrix<f64>, tol: f64) -> bool {
    a.nrows() == 0 || min_eigenvalue(a) >= -tol
}

/// Solves `A v = b` for a symmetric positive semi-definite `A`.
///
/// Directions whose eigenvalue falls below `RANK_RCOND · λ_max` are treated
/// as null and the minimum-norm solution is returned. Fails when `A` is not
/// PSD, is numerically zero, or produces a non-finite solution.
pub fn solve_sym_psd(a: &DMatrix<f64>, b: &[f64], block: &str) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::shape(format!(
            "block {block}: system {}x{} with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Solver {
            block: block.to_string(),
            message: "non-finite entries".into(),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(lam_max > f64::MIN_POSITIVE) {
        return Err(Error::Solver {
            block: block.to_string(),
            message: "matrix is numerically zero".into(),
        });
    }
    let lam_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lam_min < -1e-8 * lam_max.max(1.0) {
        return Err(Error::Solver {
            block: block.to_string(),
            message: format!("matrix is not positive semi-definite (min eigenvalue {lam_min:e})"),
        });
    }
    let cutoff = RANK_RCOND * lam_max;
    let rhs = DVector::from_column_slice(b);
    let proj = eig.eigenvectors.transpose() * rhs;
    let scaled = DVector::from_iterator(
        n,
        proj.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(&c, &l)| if l > cutoff { c / l } else { 0.0 }),
    );
    let sol = &eig.eigenvectors * scaled;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver {
            block: block.to_string(),
            message: "solution is not finite".into(),
        });
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_mat_column_major() {
        let m = mat_of(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        assert_eq!(vec_of(&m), vec![1.0, 2.0, 3.0, 4.0]);
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(mat_of(&vec_of(&i3), 3, 3).unwrap(), i3);
    }

    #[test]
    fn vec_of_outer_product() {
        let x = DVector::from_column_slice(&[1.0, 2.0]);
        assert_eq!(vec_of(&(&x * x.transpose())), vec![1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn mat_rejects_bad_length() {
        assert!(matches!(mat_of(&[1.0, 2.0, 3.0], 2, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn kron_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let five = DMatrix::from_element(1, 1, 5.0);
        assert_eq!(kron(&i2, &five), DMatrix::from_diagonal_element(2, 2, 5.0));

        let ones = DMatrix::from_element(2, 1, 1.0);
        let ab = DMatrix::from_column_slice(2, 1, &[7.0, -3.0]);
        assert_eq!(vec_of(&kron(&ones, &ab)), vec![7.0, -3.0, 7.0, -3.0]);

        let q = DMatrix::from_element(1, 1, 0.75);
        let x = DVector::from_column_slice(&[1.0, 1.0]);
        assert_eq!(kron(&q, &(&x * x.transpose())), DMatrix::from_element(2, 2, 0.75));
        assert_eq!(kron_vec(&[1.0, 2.0], &[3.0, 4.0]), vec![3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn bdiag_examples() {
        let i4 = DMatrix::<f64>::identity(4, 4);
        let stacked = bdiag_extract(&i4, 2).unwrap();
        let mut expect = DMatrix::zeros(4, 2);
        expect.view_mut((0, 0), (2, 2)).fill_with_identity();
        expect.view_mut((2, 0), (2, 2)).fill_with_identity();
        assert_eq!(stacked, expect);

        let mut b = DMatrix::zeros(4, 2);
        b.view_mut((0, 0), (2, 2)).fill_with_identity();
        b.view_mut((2, 0), (2, 2)).copy_from(&(DMatrix::<f64>::identity(2, 2) * 2.0));
        let full = bdiag_inverse(&b, 2).unwrap();
        assert_eq!(full, DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 1.0, 2.0, 2.0])));
        assert_eq!(bdiag_extract(&full, 2).unwrap(), b);
    }

    #[test]
    fn bdiag_shape_errors() {
        assert!(bdiag_extract(&DMatrix::zeros(5, 5), 2).is_err());
        assert!(bdiag_inverse(&DMatrix::zeros(5, 2), 2).is_err());
    }

    #[test]
    fn bdiag_random_blocks() {
        let a = DMatrix::from_fn(6, 6, |i, j| (i * 6 + j) as f64 * 0.37 - 4.0);
        let st = bdiag_extract(&a, 3).unwrap();
        assert_eq!(st.view((0, 0), (3, 3)), a.view((0, 0), (3, 3)));
        assert_eq!(st.view((3, 0), (3, 3)), a.view((3, 3), (3, 3)));
    }

    #[test]
    fn bound_formulas() {
        assert_eq!(bohning_classic_bound(1), DMatrix::from_element(1, 1, 0.0));
        assert_eq!(
            bohning_classic_bound(2),
            DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25])
        );
        assert_eq!(bohning_corrected_bound(1), DMatrix::from_element(1, 1, 0.25));
        assert_eq!(
            bohning_corrected_bound(2),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.25, -0.25, 0.5])
        );
    }

    #[test]
    fn scalar_bound_maximum() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!(p * (1.0 - p) <= 0.25);
        }
    }

    #[test]
    fn build_b_single_block_and_zero_features() {
        let x = vec![1.0, -2.0, 0.5];
        let b = build_b(&CurvatureBoundSpec::new(1, x.clone(), 1e-6).unwrap()).unwrap();
        let xv = DVector::from_column_slice(&x);
        let expect = (&xv * xv.transpose()) * 0.25 + DMatrix::identity(3, 3) * 1e-6;
        assert!((b - expect).abs().max() < 1e-15);

        let z = build_b(&CurvatureBoundSpec::new(3, vec![0.0; 2], 0.5).unwrap()).unwrap();
        assert_eq!(z, DMatrix::identity(6, 6) * 0.5);
    }

    #[test]
    fn build_b_rejects_nonpositive_epsilon() {
        assert!(matches!(
            CurvatureBoundSpec::new(2, vec![1.0], 0.0),
            Err(Error::Parameter(_))
        ));
        let spec = CurvatureBoundSpec { block_count: 2, feature_vec: vec![1.0], epsilon_star: -1.0 };
        assert!(build_b(&spec).is_err());
    }

    #[test]
    fn spec_dims_checked() {
        let spec = CurvatureBoundSpec::new(2, vec![1.0; 6], 1e-6).unwrap();
        assert!(spec.check_dims(3, 1).is_ok());
        assert!(spec.check_dims(2, 1).is_err());
    }

    #[test]
    fn psd_solve_min_norm() {
        // rank-one system: only the (1,1)/sqrt2 direction is determined
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let v = solve_sym_psd(&a, &[2.0, 2.0], "test").unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        assert!(solve_sym_psd(&DMatrix::zeros(2, 2), &[1.0, 1.0], "zero").is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match solve_sym_psd(&neg, &[1.0, 1.0], "neg") {
            Err(Error::Solver { block, .. }) => assert_eq!(block, "neg"),
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn envelope_of_identity() {
        let b = DMatrix::<f64>::identity(3, 3) * 0.5;
        assert!((envelope_m0(&b) - 2.0).abs() < 1e-12);
    }
}
