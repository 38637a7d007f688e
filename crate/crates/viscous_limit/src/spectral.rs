//! Eigen-structure of `E^{-1} A` and of the pencil `A - mu B`, sign-count
//! invariance, transversal subspaces and the singular-viscosity reduction.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix};

use crate::linalg::{
    complex_eigenvalues, complex_null_vector, hcat, inverse, is_symmetric, normalize_sign, numerical_rank,
    select_rows, selector, singular_values, sv_ratio, sym_kernel_split, sym_pencil_eig, CVector, Mat, Vector,
    RANK_RTOL,
};
use crate::system_model::block_counts;
use crate::system_model::{HypothesisReport, SystemSpec, Witness};
use crate::{Error, Result};

type CMat = DMatrix<Complex<f64>>;

fn to_c(m: &Mat) -> CMat {
    m.map(|x| Complex::new(x, 0.0))
}

/// Eigenpairs of `E^{-1} A(u, 0)`, ascending.
///
/// Symmetric `A` uses the symmetric-definite pencil; otherwise the general
/// eigenproblem, failing on non-real eigenvalues.
pub fn ea_eigen(spec: &SystemSpec, u: &Vector) -> Result<(Vec<f64>, Vec<Vector>)> {
    let a = spec.a0(u);
    let e = spec.e(u);
    if is_symmetric(&a, 1e-12) && is_symmetric(&e, 1e-12) {
        if let Ok(r) = sym_pencil_eig(&a, &e) {
            return Ok(r);
        }
    }
    general_real_eigen(&(inverse(&e, "E")? * a))
}

fn general_real_eigen(m: &Mat) -> Result<(Vec<f64>, Vec<Vector>)> {
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    let mut vals = Vec::new();
    for l in complex_eigenvalues(m) {
        if l.im.abs() > 1e-9 * scale {
            return Err(Error::NonRealSpectrum { value: l.re, imag: l.im });
        }
        vals.push(l.re);
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let vecs = vals
        .iter()
        .map(|&l| {
            let shifted = to_c(&(m - Mat::identity(n, n) * l));
            let v = complex_null_vector(&shifted);
            let mut r = v.map(|c| c.re);
            normalize_sign(&mut r);
            r
        })
        .collect();
    Ok((vals, vecs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// `E^{-1} A(u, 0)`
    EA,
    /// `B^{-1} A(u, 0)`, invertible viscosity only
    BA,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenData {
    pub values: Vec<f64>,
    pub vectors: Vec<Vector>,
    /// Strictly negative eigenvalues (below `-zero_tol`).
    pub n: usize,
    /// Negative eigenvalues excluding the near-zero one.
    pub k_minus_1: usize,
    /// The eigenvalue of smallest modulus when it lies within the band.
    pub near_zero: Option<f64>,
    pub gap: f64,
    pub zero_tol: f64,
}

impl EigenData {
    fn build(values: Vec<f64>, vectors: Vec<Vector>, zero_tol: f64) -> Self {
        let gap = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let mut d = Self {
            n: values.iter().filter(|&&l| l < -zero_tol).count(),
            k_minus_1: 0,
            near_zero: None,
            values,
            vectors,
            gap,
            zero_tol,
        };
        d = d.with_band(zero_tol);
        d
    }

    /// Recomputes the characteristic split for a near-zero band `|lambda| <= band`.
    pub fn with_band(mut self, band: f64) -> Self {
        let closest = self
            .values
            .iter()
            .copied()
            .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
        self.near_zero = closest.filter(|l| l.abs() <= band);
        self.k_minus_1 = match self.near_zero {
            Some(z) => self.values.iter().filter(|&&l| l < z && l < -self.zero_tol.min(band)).count(),
            None => self.n,
        };
        self
    }

    pub fn has_near_zero(&self) -> bool {
        self.near_zero.is_some()
    }

    /// Indices of eigenvalues within `band` of zero.
    pub fn near_zero_indices(&self, band: f64) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i].abs() <= band).collect()
    }
}

pub(crate) fn zero_tol(m: &Mat) -> f64 {
    RANK_RTOL * singular_values(m).first().copied().unwrap_or(0.0).max(1e-300)
}

pub fn eig_pencil(spec: &SystemSpec, u: &Vector, which: Which) -> Result<EigenData> {
    let a = spec.a0(u);
    let tol = zero_tol(&a);
    let (vals, vecs) = match which {
        Which::EA => ea_eigen(spec, u)?,
        Which::BA => {
            if spec.is_singular() {
                return Err(Error::InvalidInput("B^{-1}A requires invertible viscosity".into()));
            }
            let b = spec.b(u);
            if is_symmetric(&a, 1e-12) {
                sym_pencil_eig(&a, &b)?
            } else {
                general_real_eigen(&(inverse(&b, "B")? * &a))?
            }
        }
    };
    Ok(EigenData::build(vals, vecs, tol))
}

/// `(neg(B^{-1}A), pos(B^{-1}A), neg(E^{-1}A), pos(E^{-1}A))` for one triple.
pub fn inertia_counts(a: &Mat, b: &Mat, e: &Mat) -> Result<(usize, usize, usize, usize)> {
    let tol = zero_tol(a);
    let (vb, _) = sym_pencil_eig(a, b)?;
    let (ve, _) = sym_pencil_eig(a, e)?;
    let count = |v: &[f64]| (v.iter().filter(|&&l| l < -tol).count(), v.iter().filter(|&&l| l > tol).count());
    let (nb, pb) = count(&vb);
    let (ne, pe) = count(&ve);
    Ok((nb, pb, ne, pe))
}

/// Negative and positive counts of `B^{-1}A` and `E^{-1}A` agree.
pub fn verify_count_invariance(spec: &SystemSpec, u: &Vector) -> Result<HypothesisReport> {
    if spec.is_singular() {
        return Err(Error::InvalidInput("count invariance needs invertible viscosity".into()));
    }
    let (nb, pb, ne, pe) = inertia_counts(&spec.a0(u), &spec.b(u), &spec.e(u))?;
    let mut wit = Vec::new();
    if nb != ne || pb != pe {
        wit.push(Witness {
            state: u.iter().copied().collect(),
            evidence: format!("B^-1 A counts ({nb}, {pb}) vs E^-1 A counts ({ne}, {pe})"),
            value: (nb as f64 - ne as f64).abs() + (pb as f64 - pe as f64).abs(),
        });
    }
    let mut k = BTreeMap::new();
    k.insert("n".into(), ne as f64);
    k.insert("positive".into(), pe as f64);
    Ok(HypothesisReport::finish("count_invariance", wit, k))
}

/// Blocks of the singular-viscosity reduction at `(u, sigma)`.
///
/// With `M = A(u, 0) - sigma E(u)` split into hyperbolic (`w`) and parabolic
/// (`z`) blocks, `P0` spans `ker(A11 - sigma E11)` and `Pp` its orthogonal
/// complement (rows); `Pbar`/`Ptil` select the rows of `A21 P0^T` kept in
/// `a11` and the remaining ones. The reduced pencil `a_bar - mu b_bar` acts on
/// the free parabolic coordinates `xi = Ptil z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBlocks {
    pub q: usize,
    pub sigma: f64,
    pub p0: Mat,
    pub p_perp: Mat,
    pub p_bar: Mat,
    pub p_tilde: Mat,
    pub a11: Mat,
    pub a12: Mat,
    pub a21: Mat,
    pub a22: Mat,
    pub a_tilde11: Mat,
    pub alpha11: Mat,
    pub alpha21: Mat,
    pub alpha22: Mat,
    pub b11: Mat,
    pub b12: Mat,
    pub b21: Mat,
    pub b22: Mat,
    pub a_bar: Mat,
    pub b_bar: Mat,
    /// `zbar = zb * xi`
    pub zb: Mat,
    /// `wtilde = wt * xi`
    pub wt: Mat,
    /// `wbar = (wbar0 + mu * wbar_mu) * xi`
    pub wbar0: Mat,
    pub wbar_mu: Mat,
    n: usize,
}

impl ReducedBlocks {
    /// Lifts a reduced vector `xi` with eigenvalue `mu` to `Theta` in `C^N`.
    pub fn lift(&self, mu: Complex<f64>, xi: &CVector) -> CVector {
        let wbar = (to_c(&self.wbar0) + to_c(&self.wbar_mu) * mu) * xi;
        let w = to_c(&self.p0.transpose()) * wbar + to_c(&(self.p_perp.transpose() * &self.wt)) * xi;
        let z = to_c(&(self.p_bar.transpose() * &self.zb + self.p_tilde.transpose())) * xi;
        let mut theta = CVector::zeros(self.n);
        let nw = w.len();
        theta.rows_mut(0, nw).copy_from(&w);
        theta.rows_mut(nw, z.len()).copy_from(&z);
        theta
    }

    pub fn lift_real(&self, mu: f64, xi: &Vector) -> Vector {
        let wbar = (&self.wbar0 + &self.wbar_mu * mu) * xi;
        let w = self.p0.transpose() * wbar + self.p_perp.transpose() * (&self.wt * xi);
        let z = (self.p_bar.transpose() * &self.zb + self.p_tilde.transpose()) * xi;
        let mut theta = Vector::zeros(self.n);
        theta.rows_mut(0, w.len()).copy_from(&w);
        theta.rows_mut(w.len(), z.len()).copy_from(&z);
        theta
    }
}

fn sub(m: &Mat, r0: usize, nr: usize, c0: usize, nc: usize) -> Mat {
    m.view((r0, c0), (nr, nc)).into_owned()
}

pub fn reduce_singular(spec: &SystemSpec, u: &Vector, sigma: f64) -> Result<ReducedBlocks> {
    if !spec.is_singular() {
        return Err(Error::InvalidInput("reduction needs singular viscosity (r < N)".into()));
    }
    let (n, r, nw) = (spec.n, spec.r, spec.nw());
    let m = spec.a0(u) - spec.e(u) * sigma;
    let scale = singular_values(&m).first().copied().unwrap_or(0.0);
    let bfull = spec.b(u);
    let rank_b = numerical_rank(&bfull);
    if rank_b != r {
        return Err(Error::RankNotConstant { expected: r, found: rank_b, state: u.iter().copied().collect() });
    }
    let a11f = sub(&m, 0, nw, 0, nw);
    let a12f = sub(&m, 0, nw, nw, r);
    let a21f = sub(&m, nw, r, 0, nw);
    let a22f = sub(&m, nw, r, nw, r);
    let b = sub(&bfull, nw, r, nw, r);

    let (p0, p_perp) = if is_symmetric(&a11f, 1e-12) {
        let (k, c) = sym_kernel_split(&a11f, scale);
        if k.nrows() == 0 {
            (k, Mat::identity(nw, nw))
        } else {
            (k, c)
        }
    } else {
        return Err(Error::Hypothesis("A11 - sigma E11 is not symmetric".into()));
    };
    let q = p0.nrows();
    let ai21 = &a21f * p0.transpose();
    let sel = select_rows(&ai21, q, scale).ok_or(Error::KawashimaViolated { rank: numerical_rank(&ai21), q })?;
    let rest: Vec<usize> = (0..r).filter(|i| !sel.contains(i)).collect();
    let p_bar = selector(&sel, r);
    let p_tilde = selector(&rest, r);

    let a11 = &p_bar * &a21f * p0.transpose();
    let a21 = &p_tilde * &a21f * p0.transpose();
    let a12 = &p_bar * &a21f * p_perp.transpose();
    let a22 = &p_tilde * &a21f * p_perp.transpose();
    let a_tilde11 = &p_perp * &a11f * p_perp.transpose();
    let alpha11 = &p_bar * &a22f * p_bar.transpose();
    let alpha12 = &p_bar * &a22f * p_tilde.transpose();
    let alpha21 = &p_tilde * &a22f * p_bar.transpose();
    let alpha22 = &p_tilde * &a22f * p_tilde.transpose();
    let b11 = &p_bar * &b * p_bar.transpose();
    let b12 = &p_bar * &b * p_tilde.transpose();
    let b21 = &p_tilde * &b * p_bar.transpose();
    let b22 = &p_tilde * &b * p_tilde.transpose();
    // rows of the hyperbolic equation A11 w + A12 z = 0
    let c11 = &p0 * &a12f * p_bar.transpose();
    let c12 = &p0 * &a12f * p_tilde.transpose();
    let d1 = &p_perp * &a12f * p_bar.transpose();
    let d2 = &p_perp * &a12f * p_tilde.transpose();

    let zb = -inverse(&c11, "a11^T")? * c12;
    let wt = -inverse(&a_tilde11, "A~11")? * (&d1 * &zb + d2);
    let a11_inv = inverse(&a11, "a11")?;
    let wbar0 = -&a11_inv * (&a12 * &wt + &alpha11 * &zb + &alpha12);
    let wbar_mu = &a11_inv * (&b11 * &zb + &b12);
    let a_bar = &a21 * &wbar0 + &a22 * &wt + &alpha21 * &zb + &alpha22;
    let b_bar = &b21 * &zb + &b22 - &a21 * &wbar_mu;
    if r > q && sv_ratio(&b_bar) < 1e-12 {
        return Err(Error::Internal("reduced viscosity b_bar is singular".into()));
    }
    Ok(ReducedBlocks {
        q,
        sigma,
        p0,
        p_perp,
        p_bar,
        p_tilde,
        a11,
        a12,
        a21,
        a22,
        a_tilde11,
        alpha11,
        alpha21,
        alpha22,
        b11,
        b12,
        b21,
        b22,
        a_bar,
        b_bar,
        zb,
        wt,
        wbar0,
        wbar_mu,
        n,
    })
}

/// A root `mu` of `det(A - sigma E - mu B) = 0` with its eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct GenEig {
    pub mu: Complex<f64>,
    pub theta: CVector,
}

impl GenEig {
    pub fn is_real(&self) -> bool {
        self.mu.im == 0.0
    }

    pub fn theta_re(&self) -> Vector {
        self.theta.map(|c| c.re)
    }
}

fn finish_real(mu: f64, mut theta: Vector) -> GenEig {
    normalize_sign(&mut theta);
    GenEig { mu: Complex::new(mu, 0.0), theta: theta.map(|x| Complex::new(x, 0.0)) }
}

/// Generalized eigenpairs at `sigma = 0`.
pub fn generalized_eigs(spec: &SystemSpec, u: &Vector) -> Result<Vec<GenEig>> {
    generalized_eigs_at(spec, u, 0.0)
}

/// Roots of `det(A(u,0) - sigma E(u) - mu B(u))`, sorted by real part; `r - q`
/// of them for singular viscosity, computed from `b_bar^{-1} a_bar` and lifted.
pub fn generalized_eigs_at(spec: &SystemSpec, u: &Vector, sigma: f64) -> Result<Vec<GenEig>> {
    let m = spec.a0(u) - spec.e(u) * sigma;
    let bfull = spec.b(u);
    let mut out: Vec<GenEig> = Vec::new();
    if !spec.is_singular() {
        let (vals, vecs) = if is_symmetric(&m, 1e-12) {
            sym_pencil_eig(&m, &bfull)?
        } else {
            general_real_eigen(&(inverse(&bfull, "B")? * &m))?
        };
        for (l, v) in vals.into_iter().zip(vecs) {
            out.push(finish_real(l, v));
        }
    } else {
        let red = reduce_singular(spec, u, sigma)?;
        let k = spec.r - red.q;
        if k > 0 {
            if is_symmetric(&red.a_bar, 1e-10) && is_symmetric(&red.b_bar, 1e-10) && sym_pencil_eig(&red.a_bar, &red.b_bar).is_ok() {
                let (vals, xis) = sym_pencil_eig(&red.a_bar, &red.b_bar)?;
                for (l, xi) in vals.into_iter().zip(xis) {
                    out.push(finish_real(l, red.lift_real(l, &xi)));
                }
            } else {
                let red_m = inverse(&red.b_bar, "b_bar")? * &red.a_bar;
                let scale = red_m.amax().max(1.0);
                let mut xis = Vec::new();
                for l in complex_eigenvalues(&red_m) {
                    let l = if l.im.abs() <= 1e-12 * scale { Complex::new(l.re, 0.0) } else { l };
                    let shifted = to_c(&red_m) - CMat::identity(k, k) * l;
                    let xi = complex_null_vector(&shifted);
                    xis.push(xi.clone());
                    if l.im == 0.0 {
                        let xr = xi.map(|c| c.re);
                        out.push(finish_real(l.re, red.lift_real(l.re, &xr)));
                    } else {
                        let mut th = red.lift(l, &xi);
                        crate::linalg::normalize_sign_complex(&mut th);
                        out.push(GenEig { mu: l, theta: th });
                    }
                }
                let xm = CMat::from_columns(&xis);
                let s = xm.svd(false, false).singular_values;
                let ratio = s.min() / s.max().max(1e-300);
                if ratio < 1e-8 {
                    return Err(Error::Defective("b_bar^{-1} a_bar is not diagonalizable".into()));
                }
            }
        }
    }
    out.sort_by(|a, b| a.mu.re.partial_cmp(&b.mu.re).unwrap().then(a.mu.im.partial_cmp(&b.mu.im).unwrap()));
    let mc = to_c(&m);
    let bc = to_c(&bfull);
    let na = m.amax().max(1e-300);
    for g in &out {
        let res = ((&mc - &bc * g.mu) * &g.theta).norm();
        if res > 1e-8 * na.max(1.0) * g.theta.norm() {
            return Err(Error::Internal(format!("generalized eigenpair residual {res:.3e} at mu = {}", g.mu)));
        }
    }
    Ok(out)
}

/// Dimension of the stable space of the layer equation at `u`, checked
/// against `k - 1 - n11 - q`.
pub fn stable_dimension(spec: &SystemSpec, u: &Vector) -> Result<usize> {
    let (d, formula) = stable_dimension_pair(spec, u)?;
    if d != formula {
        return Err(Error::DimensionMismatch { generalized: d, formula });
    }
    Ok(d)
}

/// `(count of Re mu < 0, k - 1 - n11 - q)` computed independently.
pub fn stable_dimension_pair(spec: &SystemSpec, u: &Vector) -> Result<(usize, usize)> {
    let eigs = generalized_eigs(spec, u)?;
    let tol = zero_tol(&spec.a0(u));
    let d = eigs.iter().filter(|g| g.mu.re < -tol).count();
    let ea = eig_pencil(spec, u, Which::EA)?;
    let (n11, q) = block_counts(spec, u, 0.0)?;
    let formula = (ea.n as isize - n11 as isize - q as isize).max(-1);
    Ok((d, if formula < 0 { usize::MAX } else { formula as usize }))
}

/// Bases of the stable, center and unstable spaces at `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceTriple {
    pub vs: Vec<Vector>,
    pub vc: Vec<Vector>,
    pub vu: Vec<Vector>,
    pub theta_vectors: Vec<GenEig>,
    pub xi_vectors: Vec<(f64, Vector)>,
}

impl SubspaceTriple {
    pub fn dim(&self) -> usize {
        self.vs.len() + self.vc.len() + self.vu.len()
    }

    /// `V = V^s + V^c + V^u` concatenated.
    pub fn v_basis(&self) -> Vec<Vector> {
        self.vs.iter().chain(&self.vc).chain(&self.vu).cloned().collect()
    }
}

pub fn transversal_subspaces(spec: &SystemSpec, u: &Vector) -> Result<SubspaceTriple> {
    let eigs = generalized_eigs(spec, u)?;
    let ea = eig_pencil(spec, u, Which::EA)?;
    let tol = ea.zero_tol;
    let mut vs = Vec::new();
    for g in eigs.iter().filter(|g| g.mu.re < -tol) {
        if g.is_real() {
            vs.push(g.theta_re());
        } else if g.mu.im > 0.0 {
            vs.push(g.theta.map(|c| c.re));
            vs.push(g.theta.map(|c| c.im));
        }
    }
    let vc: Vec<Vector> = ea.values.iter().zip(&ea.vectors).filter(|(l, _)| l.abs() <= tol).map(|p| p.1.clone()).collect();
    let vu: Vec<Vector> = ea.values.iter().zip(&ea.vectors).filter(|(l, _)| **l > tol).map(|p| p.1.clone()).collect();
    let triple = SubspaceTriple {
        xi_vectors: ea.values.iter().copied().zip(ea.vectors.iter().cloned()).collect(),
        theta_vectors: eigs,
        vs,
        vc,
        vu,
    };
    let cat = hcat(spec.n, &triple.v_basis());
    if triple.dim() > spec.n || (triple.dim() > 0 && sv_ratio(&cat) <= RANK_RTOL) {
        return Err(Error::Internal(format!(
            "transversal subspaces are not independent (smallest singular value ratio {:.3e})",
            sv_ratio(&cat)
        )));
    }
    Ok(triple)
}
