//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{Complex, DMatrix, DVector};

/// `M := (M + Mᵀ) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest absolute entry of `M − Mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted
/// ascending. Column `k` of the returned matrix pairs with value `k`.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    sym_eigen(m).0
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let v = sym_eigenvalues(m);
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Flip each column so that its first entry of non-negligible magnitude is
/// positive.
pub fn canonical_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12 * norm) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Owned variant of [`canonical_signs`].
pub fn with_canonical_signs(mut m: DMatrix<f64>) -> DMatrix<f64> {
    canonical_signs(&mut m);
    m
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Block-diagonal stacking of (possibly non-square, possibly empty) blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Eigenvalues of a general square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Orthonormal basis of the column space of `m`, dropping directions whose
/// singular value is below `tol · σ_max`.
pub fn orthonormal_columns(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > tol * smax)
        .collect();
    let mut out = DMatrix::zeros(m.nrows(), keep.len());
    for (dst, &k) in keep.iter().enumerate() {
        out.set_column(dst, &u.column(k));
    }
    out
}

/// Principal angles (radians, ascending) between the column spaces of `a`
/// and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = orthonormal_columns(a, 1e-12);
    let qb = orthonormal_columns(b, 1e-12);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return Vec::new();
    }
    let cross = qa.transpose() * qb;
    let mut cos: Vec<f64> = cross.singular_values().iter().map(|s| s.min(1.0)).collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    cos.into_iter().map(f64::acos).collect()
}

/// Solve `M x = b` for symmetric positive-definite `M`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().cholesky().map(|c| c.solve(b))
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}
