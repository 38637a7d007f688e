use std::collections::BTreeMap;

use crate::linalg::{
    complex_eigenvalues, hcat, inverse, singular_values, submatrix, sv_ratio, sym_eig, sym_kernel_split,
    sym_pencil_eig, Mat, Vector, RANK_RTOL,
};
use crate::spectral::ea_eigen;
use crate::system_model::{HypothesisReport, SystemSpec, Witness};
use crate::{Error, Result};

fn witness(u: &Vector, evidence: impl Into<String>, value: f64) -> Witness {
    Witness {
        state: u.iter().copied().collect(),
        evidence: evidence.into(),
        value,
    }
}

fn min_eig(m: &Mat) -> f64 {
    sym_eig(m).0.first().copied().unwrap_or(f64::INFINITY)
}

/// Real spectrum and uniform separation of `E^{-1} A(u, 0)` at every sample.
pub fn check_strict_hyperbolicity(spec: &SystemSpec, samples: &[Vector]) -> Result<HypothesisReport> {
    for u in samples {
        spec.check_in_ball(u)?;
    }
    let mut wit = Vec::new();
    let mut c = f64::INFINITY;
    let mut c_e = f64::INFINITY;
    let mut c_b = f64::INFINITY;
    for u in samples {
        let e = spec.e(u);
        c_e = c_e.min(min_eig(&e));
        let b = spec.b(u);
        c_b = c_b.min(if spec.is_singular() {
            let z = spec.z_idx();
            min_eig(&submatrix(&b, &z, &z))
        } else {
            min_eig(&b)
        });
        let m = inverse(&e, "E")? * spec.a0(u);
        let scale = m.amax().max(1.0);
        let ev = complex_eigenvalues(&m);
        let mut real = Vec::new();
        for l in &ev {
            if l.im.abs() > 1e-9 * scale {
                wit.push(witness(u, format!("non-real eigenvalue {:.6}{:+.6}i", l.re, l.im), l.im.abs()));
            }
            real.push(l.re);
        }
        real.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in real.windows(2) {
            c = c.min(w[1] - w[0]);
        }
        if real.len() > 1 && real.windows(2).any(|w| w[1] - w[0] <= 1e-9 * scale) {
            wit.push(witness(u, "coincident eigenvalues", 0.0));
        }
    }
    if c_e <= 0.0 {
        wit.push(witness(&spec.u_base, "E not positive definite", c_e));
    }
    let mut k = BTreeMap::new();
    k.insert("c".into(), c);
    k.insert("c_E".into(), c_e);
    k.insert(if spec.is_singular() { "c_b" } else { "c_B" }.into(), c_b);
    if let Some(u) = samples.first() {
        if let Ok((vals, _)) = ea_eigen(spec, u) {
            k.insert("n".into(), vals.iter().filter(|&&l| l < 0.0).count() as f64);
        }
    }
    Ok(HypothesisReport::finish("strict_hyperbolicity", wit, k))
}

/// No eigenvector of `E^{-1} A(u, 0)` lies in `ker B(u)`.
pub fn check_kawashima(spec: &SystemSpec, u: &Vector) -> Result<HypothesisReport> {
    let b = spec.b(u);
    let rank = crate::linalg::numerical_rank(&b);
    if rank != spec.r {
        return Err(Error::RankNotConstant {
            expected: spec.r,
            found: rank,
            state: u.iter().copied().collect(),
        });
    }
    if !spec.is_singular() {
        return Err(Error::Vacuous("kawashima".into()));
    }
    let (ker, _) = sym_kernel_split(&b, b.amax());
    let (_, vecs) = ea_eigen(spec, u)?;
    let mut wit = Vec::new();
    let mut margin = f64::INFINITY;
    for (i, r) in vecs.iter().enumerate() {
        let proj = ker.transpose() * (&ker * r);
        let dist = (r - proj).norm();
        margin = margin.min(dist);
        if dist <= 1e-6 {
            wit.push(witness(u, format!("eigenvector {} lies in ker B", i + 1), dist));
        }
    }
    let mut k = BTreeMap::new();
    k.insert("kernel_distance".into(), margin);
    Ok(HypothesisReport::finish("kawashima", wit, k))
}

/// `(A11 - sigma E11, E11)` blocks at `u` and the scale used for rank decisions.
pub(crate) fn hyperbolic_block(spec: &SystemSpec, u: &Vector, sigma: f64) -> (Mat, Mat, f64) {
    let w = spec.w_idx();
    let full = spec.a0(u) - spec.e(u) * sigma;
    let scale = singular_values(&full).first().copied().unwrap_or(0.0);
    let e11 = submatrix(&spec.e(u), &w, &w);
    (submatrix(&full, &w, &w), e11, scale)
}

/// `(n11, q)`: negative eigenvalues and kernel dimension of `A11 - sigma E11`
/// relative to `E11`.
pub(crate) fn block_counts(spec: &SystemSpec, u: &Vector, sigma: f64) -> Result<(usize, usize)> {
    if !spec.is_singular() {
        return Ok((0, 0));
    }
    let (a11, e11, scale) = hyperbolic_block(spec, u, sigma);
    let (vals, _) = sym_pencil_eig(&a11, &e11)?;
    let thr = RANK_RTOL * scale.max(1e-300);
    let n11 = vals.iter().filter(|&&l| l < -thr).count();
    let q = vals.iter().filter(|&&l| l.abs() <= thr).count();
    Ok((n11, q))
}

/// `dim ker(A11(u) - sigma E11(u))` is the same at every sample.
pub fn check_block_linear_degeneracy(spec: &SystemSpec, sigma: f64, samples: &[Vector]) -> Result<HypothesisReport> {
    if !spec.is_singular() {
        return Err(Error::Vacuous("block_linear_degeneracy".into()));
    }
    let mut dims = Vec::new();
    for u in samples {
        let (a11, _, scale) = hyperbolic_block(spec, u, sigma);
        let (ker, _) = sym_kernel_split(&a11, scale);
        dims.push(ker.nrows());
    }
    let mut wit = Vec::new();
    if let Some(&d0) = dims.first() {
        for (u, &d) in samples.iter().zip(&dims) {
            if d != d0 {
                wit.push(witness(u, format!("kernel dimension {d} differs from {d0}"), d as f64));
            }
        }
        if !wit.is_empty() {
            wit.insert(0, witness(&samples[0], format!("kernel dimension {d0}"), d0 as f64));
        }
    }
    let mut k = BTreeMap::new();
    if let Some(u) = samples.first() {
        let (n11, q) = block_counts(spec, u, sigma)?;
        k.insert("n11".into(), n11 as f64);
        k.insert("q".into(), q as f64);
    }
    k.insert("sigma".into(), sigma);
    Ok(HypothesisReport::finish("block_linear_degeneracy", wit, k))
}

/// Splitting `R^N = W(u) + Z(u)` behind the boundary-condition map.
///
/// `Z` holds the lifted eigenvectors of `E11^{-1} A11` with non-positive
/// eigenvalue; `W` the `r` parabolic coordinate directions followed by the
/// lifted positive ones. The map returns the `W`-coordinates of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    pub base: Vector,
    pub z_basis: Vec<Vector>,
    pub w_basis: Vec<Vector>,
    /// `(N - n11 - q) x N`, kernel `span(z_basis)`.
    pub projector: Mat,
    /// `(n11 + q) x N`, the complementary `Z`-coordinates.
    pub z_projector: Mat,
    pub n11: usize,
    pub q: usize,
}

impl BoundaryMap {
    pub fn apply(&self, u: &Vector) -> Vector {
        &self.projector * u
    }

    /// Output dimension `N - n11 - q`.
    pub fn dim(&self) -> usize {
        self.w_basis.len()
    }

    /// State with `W`-coordinates `g` and `Z`-coordinates taken from `other`.
    pub fn compose(&self, g: &Vector, other: &Vector) -> Vector {
        let n = self.base.len();
        let zc = &self.z_projector * other;
        let mut u = Vector::zeros(n);
        for (i, w) in self.w_basis.iter().enumerate() {
            u += w * g[i];
        }
        for (i, z) in self.z_basis.iter().enumerate() {
            u += z * zc[i];
        }
        u
    }
}

pub fn build_boundary_map(spec: &SystemSpec, u: &Vector) -> Result<BoundaryMap> {
    let n = spec.n;
    let nw = spec.nw();
    let mut z_basis = Vec::new();
    let mut w_basis: Vec<Vector> = spec
        .z_idx()
        .into_iter()
        .map(|j| {
            let mut e = Vector::zeros(n);
            e[j] = 1.0;
            e
        })
        .collect();
    let (mut n11, mut q) = (0, 0);
    if nw > 0 {
        let (a11, e11, scale) = hyperbolic_block(spec, u, 0.0);
        if !crate::linalg::is_symmetric(&a11, 1e-10) {
            return Err(Error::Defective("A11 is not symmetric; only symmetric blocks are supported".into()));
        }
        let (vals, vecs) = sym_pencil_eig(&a11, &e11)?;
        let thr = RANK_RTOL * scale.max(1e-300);
        for (l, v) in vals.iter().zip(&vecs) {
            let mut lifted = Vector::zeros(n);
            lifted.rows_mut(0, nw).copy_from(v);
            if *l <= thr {
                if l.abs() <= thr {
                    q += 1;
                } else {
                    n11 += 1;
                }
                z_basis.push(lifted);
            } else {
                w_basis.push(lifted);
            }
        }
    }
    let mut cols = w_basis.clone();
    cols.extend(z_basis.iter().cloned());
    let m = hcat(n, &cols);
    let minv = inverse(&m, "boundary-map basis")?;
    let k = w_basis.len();
    Ok(BoundaryMap {
        base: u.clone(),
        projector: minv.rows(0, k).into_owned(),
        z_projector: minv.rows(k, n - k).into_owned(),
        z_basis,
        w_basis,
        n11,
        q,
    })
}

/// Both `Z + V` and `Z + W` are direct-sum decompositions of `R^N`.
pub fn check_beta_transversality(spec: &SystemSpec, u0: &Vector, v_basis: &[Vector]) -> Result<HypothesisReport> {
    let map = build_boundary_map(spec, u0)?;
    let expected = spec.n - map.n11 - map.q;
    if v_basis.len() != expected {
        return Err(Error::Cardinality { expected, found: v_basis.len() });
    }
    let mut zv = map.z_basis.clone();
    zv.extend(v_basis.iter().cloned());
    let mut zw = map.z_basis.clone();
    zw.extend(map.w_basis.iter().cloned());
    let r_v = sv_ratio(&hcat(spec.n, &zv));
    let r_w = sv_ratio(&hcat(spec.n, &zw));
    let mut wit = Vec::new();
    if r_v <= RANK_RTOL {
        wit.push(witness(u0, "[Z | V] is rank deficient", r_v));
    }
    if r_w <= RANK_RTOL {
        wit.push(witness(u0, "[Z | W] is rank deficient", r_w));
    }
    let mut k = BTreeMap::new();
    k.insert("sv_ratio_zv".into(), r_v);
    k.insert("sv_ratio_zw".into(), r_w);
    k.insert("n11".into(), map.n11 as f64);
    k.insert("q".into(), map.q as f64);
    Ok(HypothesisReport::finish("beta_transversality", wit, k))
}
