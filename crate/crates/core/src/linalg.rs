//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff.
pub fn pinv(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = rtol * smax.max(f64::MIN_POSITIVE);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = DMatrix::zeros(n, m);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            out += (vt.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    out
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> DVector<f64> {
    pinv(a, rtol) * b
}

/// Numerical rank with singular values above `tol * max(1, s_max)`.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let s = a.clone().singular_values();
    let cut = tol * s.max().max(1.0);
    s.iter().filter(|&&x| x > cut).count()
}

/// Orthonormal basis (Euclidean) of the column space.
pub fn column_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(m, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol * smax)
        .collect();
    DMatrix::from_fn(m, keep.len(), |r, c| u[(r, keep[c])])
}

/// Orthonormal basis (Euclidean) of the null space.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD returns a full V.
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max().max(1.0);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol * smax)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| vt[(keep[c], r)])
}

/// Gram-Schmidt (two passes) under the inner product `x^T g y`; columns whose
/// residual falls below `tol` times the largest input norm are dropped.
pub fn orthonormalize(cols: &DMatrix<f64>, g: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    let gnorm = |v: &DVector<f64>| (v.transpose() * g * v)[(0, 0)].max(0.0).sqrt();
    let largest = (0..cols.ncols()).map(|j| gnorm(&cols.column(j).into_owned())).fold(0.0, f64::max);
    for j in 0..cols.ncols() {
        let mut v = cols.column(j).into_owned();
        let n0 = gnorm(&v).max(largest);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for u in &out {
                let c = (u.transpose() * g * &v)[(0, 0)];
                v -= u * c;
            }
        }
        let nv = (v.transpose() * g * &v)[(0, 0)].max(0.0).sqrt();
        if nv > tol * n0 {
            out.push(v / nv);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(cols.nrows(), 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Smallest principal angle (radians) between two subspaces given by
/// Euclidean-orthonormal columns.
pub fn smallest_principal_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    if u.ncols() == 0 || v.ncols() == 0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let m = u.transpose() * v;
    let s = m.singular_values();
    s.max().clamp(-1.0, 1.0).acos()
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n.max(2) - 1) as f64).exp())
        .collect()
}
