//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CVector = DVector<Complex<f64>>;

/// Relative singular-value threshold for numerical rank and kernels.
pub const RANK_RTOL: f64 = 1e-9;

pub fn vec_from(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

pub fn mat_from_rows(rows: &[&[f64]]) -> Mat {
    let n = rows.len();
    let m = if n == 0 { 0 } else { rows[0].len() };
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

pub fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Unit Euclidean norm, first component above `1e-12 * norm` made positive.
pub fn normalize_sign(v: &mut Vector) {
    let nrm = v.norm();
    if nrm == 0.0 {
        return;
    }
    *v /= nrm;
    if let Some(x) = v.iter().find(|x| x.abs() > 1e-12) {
        if *x < 0.0 {
            *v *= -1.0;
        }
    }
}

pub fn normalize_sign_complex(v: &mut CVector) {
    let nrm = v.norm();
    if nrm == 0.0 {
        return;
    }
    *v /= Complex::new(nrm, 0.0);
    if let Some(x) = v.iter().find(|x| x.norm() > 1e-12).copied() {
        let phase = x / Complex::new(x.norm(), 0.0);
        *v /= phase;
    }
}

pub fn is_symmetric(m: &Mat, rtol: f64) -> bool {
    let scale = m.amax().max(1e-300);
    (m - m.transpose()).amax() <= rtol * scale
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Numerical rank with singular values below `RANK_RTOL * scale` counted as zero,
/// where `scale` defaults to the largest singular value.
pub fn numerical_rank_scaled(m: &Mat, scale: Option<f64>) -> usize {
    let s = singular_values(m);
    let top = scale.unwrap_or_else(|| s.first().copied().unwrap_or(0.0));
    if top <= 1e-300 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_RTOL * top).count()
}

pub fn numerical_rank(m: &Mat) -> usize {
    numerical_rank_scaled(m, None)
}

/// Ratio of smallest to largest singular value of a square matrix (0 for empty).
pub fn sv_ratio(m: &Mat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&a), Some(&b)) if a > 0.0 => b / a,
        _ => 0.0,
    }
}

/// Concatenate column vectors into a matrix with `n` rows.
pub fn hcat(n: usize, cols: &[Vector]) -> Mat {
    let mut m = Mat::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Eigen-decomposition of a symmetric matrix, ascending, sign-normalized vectors.
pub fn sym_eig(a: &Mat) -> (Vec<f64>, Vec<Vector>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let se = symmetrize(a).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = idx
        .iter()
        .map(|&i| {
            let mut v: Vector = se.eigenvectors.column(i).into_owned();
            normalize_sign(&mut v);
            v
        })
        .collect();
    (vals, vecs)
}

/// Symmetric-definite pencil `A x = lambda M x` with `M` SPD.
///
/// Returns ascending eigenvalues and unit, sign-normalized eigenvectors.
pub fn sym_pencil_eig(a: &Mat, m: &Mat) -> Result<(Vec<f64>, Vec<Vector>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Hypothesis("pencil matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    let s = symmetrize(&(&linv * a * linv.transpose()));
    let (vals, ys) = sym_eig(&s);
    let lt_inv = linv.transpose();
    let vecs = ys
        .into_iter()
        .map(|y| {
            let mut r = &lt_inv * y;
            normalize_sign(&mut r);
            r
        })
        .collect();
    Ok((vals, vecs))
}

pub fn complex_eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Unit null vector of the complex matrix `m - mu I` (right singular vector of the
/// smallest singular value).
pub fn complex_null_vector(m: &DMatrix<Complex<f64>>) -> CVector {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let (mut k, mut best) = (0, f64::INFINITY);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < best {
            best = *s;
            k = i;
        }
    }
    let mut v = CVector::from_fn(n, |i, _| vt[(k, i)].conj());
    normalize_sign_complex(&mut v);
    v
}

/// Orthonormal bases `(kernel, complement)` of a symmetric matrix, kernel from
/// eigenvalues below `RANK_RTOL * scale`. Vectors are returned as rows.
pub fn sym_kernel_split(a: &Mat, scale: f64) -> (Mat, Mat) {
    let n = a.nrows();
    let (vals, vecs) = sym_eig(a);
    let thr = RANK_RTOL * scale.max(1e-300);
    let ker: Vec<&Vector> = vals.iter().zip(&vecs).filter(|(l, _)| l.abs() <= thr).map(|p| p.1).collect();
    let rest: Vec<&Vector> = vals.iter().zip(&vecs).filter(|(l, _)| l.abs() > thr).map(|p| p.1).collect();
    let rows = |vs: &[&Vector]| {
        let mut m = Mat::zeros(vs.len(), n);
        for (i, v) in vs.iter().enumerate() {
            m.set_row(i, &v.transpose());
        }
        m
    };
    (rows(&ker), rows(&rest))
}

pub fn inverse(m: &Mat, what: &str) -> Result<Mat> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    if sv_ratio(m) < 1e-13 {
        return Err(Error::Internal(format!("{what} is singular")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Internal(format!("{what} is singular")))
}

pub fn submatrix(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Greedy pivoted row selection: picks `q` rows of `m` of largest residual norm
/// after projecting out those already chosen. Ties go to the lowest index.
pub fn select_rows(m: &Mat, q: usize, scale: f64) -> Option<Vec<usize>> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut basis: Vec<Vector> = Vec::new();
    for _ in 0..q {
        let mut best: Option<(usize, f64, Vector)> = None;
        for i in 0..m.nrows() {
            if chosen.contains(&i) {
                continue;
            }
            let mut r: Vector = m.row(i).transpose();
            for b in &basis {
                let c = r.dot(b);
                r -= b * c;
            }
            let nr = r.norm();
            if best.as_ref().map_or(true, |(_, bn, _)| nr > *bn) {
                best = Some((i, nr, r));
            }
        }
        let (i, nr, r) = best?;
        if nr <= RANK_RTOL * scale.max(1e-300) {
            return None;
        }
        chosen.push(i);
        basis.push(r / nr);
    }
    Some(chosen)
}

/// Selection matrix with one row per index.
pub fn selector(idx: &[usize], n: usize) -> Mat {
    let mut p = Mat::zeros(idx.len(), n);
    for (i, &j) in idx.iter().enumerate() {
        p[(i, j)] = 1.0;
    }
    p
}
