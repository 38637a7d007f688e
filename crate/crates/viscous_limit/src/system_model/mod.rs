//! Systems `E(u) u_t + A(u, u_x) u_x = eps B(u) u_xx`, structural hypothesis
//! checks at sampled states, and the boundary-condition map.

mod catalog;
mod checks;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use catalog::{make_catalog_system, CATALOG};
pub(crate) use checks::block_counts;
pub use checks::{
    build_boundary_map, check_beta_transversality, check_block_linear_degeneracy, check_kawashima,
    check_strict_hyperbolicity, BoundaryMap,
};

use crate::linalg::{Mat, Vector};
use crate::{Error, Result};

pub type MatFn = Arc<dyn Fn(&Vector) -> Mat + Send + Sync>;
pub type GradMatFn = Arc<dyn Fn(&Vector, &Vector) -> Mat + Send + Sync>;
pub type VecFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// A hyperbolic-parabolic system in symmetrized form.
///
/// When `r < n` the viscosity has the block form `B = diag(0, b(u))` with the
/// first `n - r` coordinates hyperbolic (`w`) and the last `r` parabolic (`z`).
#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub n: usize,
    pub r: usize,
    e: MatFn,
    a: GradMatFn,
    b: MatFn,
    flux: Option<VecFn>,
    pub u_base: Vector,
    pub delta: f64,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("r", &self.r)
            .field("conservative", &self.flux.is_some())
            .field("u_base", &self.u_base.as_slice())
            .field("delta", &self.delta)
            .finish()
    }
}

impl SystemSpec {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        r: usize,
        e: MatFn,
        a: GradMatFn,
        b: MatFn,
        u_base: Vector,
        delta: f64,
    ) -> Result<Self> {
        if n == 0 || r > n {
            return Err(Error::InvalidInput(format!("need 0 <= r <= N, N > 0 (N = {n}, r = {r})")));
        }
        if u_base.len() != n {
            return Err(Error::InvalidInput("base state has wrong dimension".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidParam {
                name: "delta".into(),
                reason: "must be positive".into(),
            });
        }
        Ok(Self {
            name: name.into(),
            n,
            r,
            e,
            a,
            b,
            flux: None,
            u_base,
            delta,
        })
    }

    /// System with constant coefficient matrices and linear flux `f(u) = A u`.
    pub fn constant(name: &str, e: Mat, a: Mat, b: Mat, r: usize) -> Result<Self> {
        let n = a.nrows();
        let af = a.clone();
        let s = Self::new(
            name,
            n,
            r,
            Arc::new(move |_| e.clone()),
            Arc::new(move |_, _| a.clone()),
            Arc::new(move |_| b.clone()),
            Vector::zeros(n),
            1.0,
        )?;
        Ok(s.with_flux(Arc::new(move |u| &af * u)))
    }

    /// Coefficients given as multivariate polynomials in `u` (see [`PolyMatrix`]).
    pub fn polynomial(name: &str, r: usize, e: PolyMatrix, a: PolyMatrix, b: PolyMatrix, u_base: Vector, delta: f64) -> Result<Self> {
        let n = u_base.len();
        for (what, p) in [("E", &e), ("A", &a), ("B", &b)] {
            p.validate(n).map_err(|reason| Error::InvalidParam { name: what.into(), reason })?;
        }
        Self::new(
            name,
            n,
            r,
            Arc::new(move |u| e.eval(u)),
            Arc::new(move |u, _| a.eval(u)),
            Arc::new(move |u| b.eval(u)),
            u_base,
            delta,
        )
    }

    pub fn with_flux(mut self, f: VecFn) -> Self {
        self.flux = Some(f);
        self
    }

    pub fn with_base(mut self, u: Vector) -> Self {
        self.u_base = u;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn e(&self, u: &Vector) -> Mat {
        (self.e)(u)
    }

    pub fn a(&self, u: &Vector, p: &Vector) -> Mat {
        (self.a)(u, p)
    }

    /// `A(u, 0)`.
    pub fn a0(&self, u: &Vector) -> Mat {
        (self.a)(u, &Vector::zeros(self.n))
    }

    pub fn b(&self, u: &Vector) -> Mat {
        (self.b)(u)
    }

    pub fn flux(&self, u: &Vector) -> Option<Vector> {
        self.flux.as_ref().map(|f| f(u))
    }

    pub fn is_conservative(&self) -> bool {
        self.flux.is_some()
    }

    pub fn is_singular(&self) -> bool {
        self.r < self.n
    }

    /// Number of hyperbolic coordinates `N - r`.
    pub fn nw(&self) -> usize {
        self.n - self.r
    }

    pub fn w_idx(&self) -> Vec<usize> {
        (0..self.nw()).collect()
    }

    pub fn z_idx(&self) -> Vec<usize> {
        (self.nw()..self.n).collect()
    }

    pub fn dist_to_base(&self, u: &Vector) -> f64 {
        (u - &self.u_base).norm()
    }

    pub fn check_in_ball(&self, u: &Vector) -> Result<()> {
        if u.len() != self.n {
            return Err(Error::InvalidInput(format!("state has dimension {}, expected {}", u.len(), self.n)));
        }
        let d = self.dist_to_base(u);
        if d > self.delta * (1.0 + 1e-12) {
            return Err(Error::OutsideBall {
                state: u.iter().copied().collect(),
                distance: d,
                delta: self.delta,
            });
        }
        Ok(())
    }
}

/// Matrix-valued polynomial `M(u) = sum_k c_k * prod_j u_j^{e_kj} * M_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    pub terms: Vec<(f64, Vec<u32>, Mat)>,
    pub size: usize,
}

impl PolyMatrix {
    pub fn constant(m: Mat) -> Self {
        Self { size: m.nrows(), terms: vec![(1.0, Vec::new(), m)] }
    }

    /// `M0 + sum_j u_j M_j`.
    pub fn affine(m0: Mat, linear: Vec<Mat>) -> Self {
        let size = m0.nrows();
        let mut terms = vec![(1.0, Vec::new(), m0)];
        for (j, mj) in linear.into_iter().enumerate() {
            let mut ex = vec![0; j + 1];
            ex[j] = 1;
            terms.push((1.0, ex, mj));
        }
        Self { terms, size }
    }

    pub fn eval(&self, u: &Vector) -> Mat {
        let mut m = Mat::zeros(self.size, self.size);
        for (c, ex, mk) in &self.terms {
            let mut w = *c;
            for (j, &e) in ex.iter().enumerate() {
                if e > 0 {
                    w *= u[j].powi(e as i32);
                }
            }
            m += mk * w;
        }
        m
    }

    fn validate(&self, n: usize) -> std::result::Result<(), String> {
        if self.size != n {
            return Err(format!("matrix size {} differs from N = {n}", self.size));
        }
        for (_, ex, mk) in &self.terms {
            if ex.len() > n {
                return Err("exponent vector longer than N".into());
            }
            if mk.nrows() != n || mk.ncols() != n {
                return Err("coefficient matrix has wrong shape".into());
            }
        }
        Ok(())
    }
}

/// Numeric evidence attached to a failed (or notable) check.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub state: Vec<f64>,
    pub evidence: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub name: String,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
    pub constants: BTreeMap<String, f64>,
}

impl HypothesisReport {
    pub(crate) fn finish(name: &str, witnesses: Vec<Witness>, constants: BTreeMap<String, f64>) -> Self {
        let passed = witnesses.is_empty();
        Self {
            name: name.to_string(),
            passed,
            witnesses,
            constants: if passed { constants } else { BTreeMap::new() },
        }
    }
}
