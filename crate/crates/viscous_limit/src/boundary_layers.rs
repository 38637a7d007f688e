//! Steady boundary layers: stable-manifold parameterizations, layer
//! profiles, and the characteristic-boundary components `F^k`, `F^s`, `F^p`.

use std::sync::Arc;

use crate::linalg::{hcat, inverse, max_abs, submatrix, Mat, Vector};
use crate::newton::{newton, NewtonConfig};
use crate::ode::{integrate_capped, Trajectory};
use crate::spectral::{eig_pencil, generalized_eigs, zero_tol, Which};
use crate::system_model::{block_counts, SystemSpec};
use crate::wave_curves::{char_admissible_curve_with, ClosureModel, CurveConfig, CurveState};
use crate::{Error, Result};

/// Solver settings shared by the layer computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerConfig {
    /// Refine the manifold by backward shooting (when supported).
    pub refine: bool,
    /// Truncation `X = x_factor / c`, `c` the slowest stable rate.
    pub x_factor: f64,
    /// Grid step bound `h * max|mu| <= h_rate`.
    pub h_rate: f64,
    pub max_nodes: usize,
    /// Number of samples in a returned [`LayerProfile`].
    pub samples: usize,
    pub tol_layer: f64,
    pub picard_tol: f64,
    pub max_iter: usize,
    /// Seeds start where the slowest mode has decayed by this factor.
    pub seed_decay: f64,
    /// Drop `F^p` (it is `O(delta^2)`).
    pub order1_perturbation: bool,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            refine: true,
            x_factor: 40.0,
            h_rate: 0.05,
            max_nodes: 20_001,
            samples: 2001,
            tol_layer: 1e-8,
            picard_tol: 1e-12,
            max_iter: 200,
            seed_decay: 1e9,
            order1_perturbation: false,
        }
    }
}

/// Steady layer equation `A(U, U') U' = B(U) U''` as a first-order system in
/// `(U, P)`. For invertible viscosity `P = U'`; for singular viscosity
/// `P = z'` and `w' = -A11^{-1} A12 z'`.
#[derive(Clone)]
struct SteadyField {
    spec: SystemSpec,
}

impl SteadyField {
    fn np(&self) -> usize {
        self.spec.r
    }

    /// `U'` from `(U, P)`.
    fn du(&self, u: &Vector, p: &Vector) -> Option<Vector> {
        let spec = &self.spec;
        if !spec.is_singular() {
            return Some(p.clone());
        }
        let (w, z) = (spec.w_idx(), spec.z_idx());
        let a = spec.a0(u);
        let a11 = submatrix(&a, &w, &w);
        let a12 = submatrix(&a, &w, &z);
        let wdot = a11.lu().solve(&(-(a12 * p)))?;
        let mut du = Vector::zeros(spec.n);
        du.rows_mut(0, w.len()).copy_from(&wdot);
        du.rows_mut(w.len(), z.len()).copy_from(p);
        Some(du)
    }

    fn rhs(&self, y: &Vector) -> Vector {
        let n = self.spec.n;
        let np = self.np();
        let u = y.rows(0, n).into_owned();
        let p = y.rows(n, np).into_owned();
        let nan = || Vector::from_element(n + np, f64::NAN);
        let Some(du) = self.du(&u, &p) else { return nan() };
        let flux = self.spec.a(&u, &du) * &du;
        let dp = if self.spec.is_singular() {
            let z = self.spec.z_idx();
            let b = submatrix(&self.spec.b(&u), &z, &z);
            match b.lu().solve(&flux.rows(self.spec.nw(), np).into_owned()) {
                Some(v) => v,
                None => return nan(),
            }
        } else {
            match self.spec.b(&u).lu().solve(&flux) {
                Some(v) => v,
                None => return nan(),
            }
        };
        let mut out = Vector::zeros(n + np);
        out.rows_mut(0, n).copy_from(&du);
        out.rows_mut(n, np).copy_from(&dp);
        out
    }
}

/// Real stable generalized eigenpairs at `u`, most negative first.
#[derive(Debug, Clone)]
struct StableEigs {
    mu: Vec<f64>,
    /// Directions in `u`-space.
    chi: Vec<Vector>,
    /// Rows dual to `chi` within the full eigenbasis (invertible viscosity).
    dual: Option<Mat>,
}

fn stable_eigs(spec: &SystemSpec, u: &Vector, count: usize, reference: Option<&[Vector]>) -> Result<StableEigs> {
    let eigs = generalized_eigs(spec, u)?;
    if eigs.len() < count {
        return Err(Error::Internal(format!("only {} generalized eigenvalues, need {count}", eigs.len())));
    }
    let mut mu = Vec::with_capacity(count);
    let mut chi = Vec::with_capacity(count);
    for (i, g) in eigs.iter().take(count).enumerate() {
        if !g.is_real() {
            return Err(Error::Unsupported(format!("complex stable rate {} at {:?}", g.mu, u.as_slice())));
        }
        if g.mu.re >= 0.0 {
            return Err(Error::Internal(format!("rate {} is not stable", g.mu.re)));
        }
        let mut v = g.theta_re();
        v /= v.norm();
        if let Some(r) = reference {
            if v.dot(&r[i]) < 0.0 {
                v = -v;
            }
        }
        mu.push(g.mu.re);
        chi.push(v);
    }
    let dual = if spec.is_singular() {
        None
    } else {
        let all: Vec<Vector> = eigs.iter().map(|g| g.theta_re()).collect();
        let mut all = all;
        for (i, c) in chi.iter().enumerate() {
            all[i] = c.clone();
        }
        let inv = inverse(&hcat(spec.n, &all), "eigenbasis of B^-1 A")?;
        Some(inv.rows(0, count).into_owned())
    };
    Ok(StableEigs { mu, chi, dual })
}

/// Parameterization of the stable manifold of the steady layer equation at
/// an equilibrium `base`.
#[derive(Clone)]
pub struct ManifoldParam {
    pub base: Vector,
    pub mu: Vec<f64>,
    /// Matched directions: eigenvectors for invertible viscosity, lifted
    /// `Theta` vectors for singular viscosity.
    pub chi: Vec<Vector>,
    /// `P`-components of the directions (equal to `chi` when `r = N`).
    pub p_basis: Vec<Vector>,
    pub refined: bool,
    field: Arc<SteadyField>,
    cfg: LayerConfig,
}

impl std::fmt::Debug for ManifoldParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManifoldParam")
            .field("base", &self.base.as_slice())
            .field("mu", &self.mu)
            .field("refined", &self.refined)
            .finish()
    }
}

impl ManifoldParam {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Slowest decay rate `min |mu|`.
    pub fn slowest_rate(&self) -> f64 {
        self.mu.iter().fold(f64::INFINITY, |a, m| a.min(m.abs()))
    }

    fn check_len(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.dim() {
            return Err(Error::Cardinality { expected: self.dim(), found: s.len() });
        }
        Ok(())
    }

    /// `base + sum_i s_i chi_i / mu_i`.
    pub fn order1(&self, s: &[f64]) -> Result<Vector> {
        self.check_len(s)?;
        let mut u = self.base.clone();
        for ((si, c), m) in s.iter().zip(&self.chi).zip(&self.mu) {
            u += c * (si / m);
        }
        Ok(u)
    }

    /// Boundary value `u(0)` of the layer with stable coordinates `s`.
    pub fn boundary_value(&self, s: &[f64]) -> Result<Vector> {
        if !self.refined || s.iter().all(|x| *x == 0.0) {
            return self.order1(s);
        }
        Ok(self.shoot(s, f64::INFINITY)?.1.y[0].rows(0, self.base.len()).into_owned())
    }

    /// Start of the backward integration; the seed sits where the linear
    /// layer is `seed_decay` times smaller than the parameter scale.
    fn seed_time(&self, chat: &[f64]) -> f64 {
        let slow = self.slowest_rate();
        let fast = self.mu.iter().fold(0.0f64, |a, m| a.max(m.abs()));
        let amp = chat.iter().zip(&self.mu).fold(0.0f64, |a, (c, m)| a.max((c / m).abs()));
        ((self.cfg.seed_decay * (1.0 + amp)).ln() / slow).min(600.0 / fast)
    }

    fn seed(&self, chat: &[f64], t: f64) -> (Vector, Vector) {
        let n = self.base.len();
        let np = self.field.np();
        let mut du = Vector::zeros(n);
        let mut p = Vector::zeros(np);
        for i in 0..self.dim() {
            let c = chat[i] * (self.mu[i] * t).exp();
            du += &self.chi[i] * (c / self.mu[i]);
            p += &self.p_basis[i] * c;
        }
        (du, p)
    }

    /// Backward integration from the seed at `T`; returns `(T, trajectory in
    /// x-order)` as deviation-free states `(U, P)`.
    fn integrate_from(&self, chat: &[f64], h_max: f64) -> Result<Trajectory> {
        let n = self.base.len();
        let np = self.field.np();
        let t = self.seed_time(chat);
        let (du, p) = self.seed(chat, t);
        let mut y0 = Vector::zeros(n + np);
        y0.rows_mut(0, n).copy_from(&du);
        y0.rows_mut(n, np).copy_from(&p);
        let scale = max_abs(&y0).max(1e-300);
        let base = self.base.clone();
        let field = self.field.clone();
        let f = move |_x: f64, d: &Vector| {
            let mut y = d.clone();
            for j in 0..n {
                y[j] += base[j];
            }
            field.rhs(&y)
        };
        let limit = 2.0 * self.field.spec.delta;
        let stop = |_x: f64, d: &Vector| !d.iter().all(|v| v.is_finite()) || d.rows(0, n).norm() > limit;
        let mut tr = integrate_capped(&f, t, 0.0, y0, 1e-10, 1e-10 * scale, h_max, &stop)?;
        if tr.stopped || tr.y.iter().any(|y| !y.iter().all(|v| v.is_finite())) {
            return Err(Error::Divergence(format!(
                "layer leaves the 2 delta ball around {:?}",
                self.base.as_slice()
            )));
        }
        tr.x.reverse();
        tr.y.reverse();
        tr.dy.reverse();
        for y in tr.y.iter_mut() {
            for j in 0..n {
                y[j] += self.base[j];
            }
        }
        Ok(tr)
    }

    /// Backward orbit for seed coordinates `s` (asymptotic phases of the
    /// stable modes); returns `(s, trajectory)`.
    fn shoot(&self, s: &[f64], h_max: f64) -> Result<(Vec<f64>, Trajectory)> {
        self.check_len(s)?;
        Ok((s.to_vec(), self.integrate_from(s, h_max)?))
    }

    /// Full layer for parameters `s` sampled on `[0, x_max]`.
    pub fn profile(&self, s: &[f64], x_max: f64) -> Result<LayerProfile> {
        self.check_len(s)?;
        let n = self.base.len();
        let m = self.cfg.samples.max(2);
        let x: Vec<f64> = (0..m).map(|j| x_max * j as f64 / (m - 1) as f64).collect();
        let mut us = Vec::with_capacity(m);
        if s.iter().all(|v| *v == 0.0) {
            us = vec![self.base.clone(); m];
        } else if self.refined {
            // a few steps per sample keep the resampled profile smooth
            let (chat, tr) = self.shoot(s, 0.25 * x_max / (m - 1) as f64)?;
            let t = self.seed_time(&chat);
            for &xj in &x {
                if xj <= t {
                    us.push(tr.at(xj).rows(0, n).into_owned());
                } else {
                    let mut u = self.base.clone();
                    for i in 0..self.dim() {
                        u += &self.chi[i] * (chat[i] * (self.mu[i] * xj).exp() / self.mu[i]);
                    }
                    us.push(u);
                }
            }
        } else {
            for &xj in &x {
                let mut u = self.base.clone();
                for i in 0..self.dim() {
                    u += &self.chi[i] * (s[i] * (self.mu[i] * xj).exp() / self.mu[i]);
                }
                us.push(u);
            }
        }
        Ok(LayerProfile::new(x, us, self.base.clone(), self.cfg.tol_layer))
    }
}

/// Stable manifold of the layer equation at `u_bar` with default settings.
pub fn stable_manifold(spec: &SystemSpec, u_bar: &Vector) -> Result<ManifoldParam> {
    stable_manifold_with(spec, u_bar, &LayerConfig::default())
}

pub fn stable_manifold_with(spec: &SystemSpec, u_bar: &Vector, cfg: &LayerConfig) -> Result<ManifoldParam> {
    if u_bar.len() != spec.n {
        return Err(Error::DatumDimension { expected: spec.n, found: u_bar.len() });
    }
    let eigs = generalized_eigs(spec, u_bar)?;
    let tol = zero_tol(&spec.a0(u_bar));
    let d = eigs.iter().filter(|g| g.mu.re < -tol).count();
    let (n11, q) = if spec.is_singular() { block_counts(spec, u_bar, 0.0)? } else { (0, 0) };
    if spec.is_singular() {
        let ea = eig_pencil(spec, u_bar, Which::EA)?;
        let formula = ea.n as isize - n11 as isize - q as isize;
        if formula != d as isize {
            return Err(Error::DimensionMismatch { generalized: d, formula: formula.max(0) as usize });
        }
    }
    let st = stable_eigs(spec, u_bar, d, None)?;
    let p_basis = if spec.is_singular() {
        let z = spec.z_idx();
        st.chi.iter().map(|c| Vector::from_iterator(z.len(), z.iter().map(|&j| c[j]))).collect()
    } else {
        st.chi.clone()
    };
    let refined = cfg.refine && d > 0 && n11 == 0 && q == 0;
    Ok(ManifoldParam {
        base: u_bar.clone(),
        mu: st.mu,
        chi: st.chi,
        p_basis,
        refined,
        field: Arc::new(SteadyField { spec: spec.clone() }),
        cfg: *cfg,
    })
}

/// A sampled steady layer converging to `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProfile {
    pub x: Vec<f64>,
    pub u: Vec<Vector>,
    pub target: Vector,
    /// Least-squares rate of `ln |u - target|`.
    pub decay_rate: f64,
    pub converged: bool,
}

impl LayerProfile {
    fn new(x: Vec<f64>, u: Vec<Vector>, target: Vector, tol: f64) -> Self {
        let dev: Vec<f64> = u.iter().map(|v| (v - &target).norm()).collect();
        let d0 = dev[0];
        let floor = 1e-11 * (1.0 + target.norm());
        let pts: Vec<(f64, f64)> = x
            .iter()
            .zip(&dev)
            .filter(|(_, d)| **d > floor && **d > 1e-9 * d0)
            .map(|(x, d)| (*x, d.ln()))
            .collect();
        let decay_rate = if pts.len() >= 3 {
            let nn = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / nn;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / nn;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            if sxx > 0.0 { sxy / sxx } else { 0.0 }
        } else {
            f64::NEG_INFINITY
        };
        // stays within tolerance from some point on
        let last_out = dev.iter().rposition(|d| *d > tol * (1.0 + target.norm()));
        let converged = match last_out {
            None => true,
            Some(j) => j + 1 < dev.len(),
        };
        Self { x, u, target, decay_rate, converged }
    }

    pub fn end(&self) -> &Vector {
        self.u.last().expect("non-empty profile")
    }
}

/// The steady layer from `u0` to `u_bar` on `[0, x_max]`.
///
/// The boundary value is matched on the stable manifold by Gauss-Newton; a
/// datum off the manifold (or a layer leaving the `2 delta` ball) is a
/// [`Error::Divergence`].
pub fn layer_profile(spec: &SystemSpec, u0: &Vector, u_bar: &Vector, x_max: f64) -> Result<LayerProfile> {
    layer_profile_with(spec, u0, u_bar, x_max, &LayerConfig::default())
}

pub fn layer_profile_with(spec: &SystemSpec, u0: &Vector, u_bar: &Vector, x_max: f64, cfg: &LayerConfig) -> Result<LayerProfile> {
    if u0.len() != spec.n {
        return Err(Error::DatumDimension { expected: spec.n, found: u0.len() });
    }
    if (u0 - u_bar).norm() > spec.delta * (1.0 + 1e-12) {
        return Err(Error::OutsideBall { state: u0.iter().copied().collect(), distance: (u0 - u_bar).norm(), delta: spec.delta });
    }
    let man = stable_manifold_with(spec, u_bar, cfg)?;
    let d = man.dim();
    if (u0 - u_bar).norm() == 0.0 {
        return man.profile(&vec![0.0; d], x_max);
    }
    if d == 0 {
        return Err(Error::Divergence("no stable directions: only the constant layer exists".into()));
    }
    // initial guess from the linear parameterization
    let lin = hcat(spec.n, &man.chi.iter().zip(&man.mu).map(|(c, m)| c / *m).collect::<Vec<_>>());
    let s0 = lin
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::Internal(e.to_string()))?
        * (u0 - u_bar);
    let f = |s: &Vector| -> Result<Vector> { Ok(man.boundary_value(s.as_slice())? - u0) };
    let tol = 1e-10 * (1.0 + max_abs(u0));
    let sol = newton(&f, s0, tol, &NewtonConfig::default(), "layer boundary matching").map_err(|e| match e {
        Error::NoConvergence { residual, .. } => {
            Error::Divergence(format!("boundary value is not on the stable manifold (residual {residual:.3e})"))
        }
        other => other,
    })?;
    let prof = man.profile(sol.x.as_slice(), x_max)?;
    if !prof.converged {
        return Err(Error::Truncation((prof.end() - u_bar).norm()));
    }
    Ok(prof)
}

/// Center component: `F^k(u_k, s_k) = u_k(s_k)` from the monotone fixed point.
pub fn center_component_fk(spec: &SystemSpec, closure: &ClosureModel, u_bar_k: &Vector, s_k: f64) -> Result<(Vector, CurveState)> {
    center_component_fk_with(spec, closure, u_bar_k, s_k, &CurveConfig::default())
}

pub fn center_component_fk_with(
    spec: &SystemSpec,
    closure: &ClosureModel,
    u_bar_k: &Vector,
    s_k: f64,
    cfg: &CurveConfig,
) -> Result<(Vector, CurveState)> {
    let c = char_admissible_curve_with(spec, closure, u_bar_k, s_k, cfg)?;
    Ok((c.endpoint().clone(), c))
}

/// Uniformly stable part of the layer at `u_bar_k` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StableComponent {
    /// `u_s(0)` as a deviation from `u_bar_k`.
    pub u_s0: Vector,
    pub x: Vec<f64>,
    /// Deviations `u_s(x)`.
    pub u_s: Vec<Vector>,
    pub v_s: Vec<Vector>,
    pub lambda_bar: Vec<f64>,
    /// `R^s` at the base, columns `chi_i`.
    pub r_s: Mat,
    pub iterations: usize,
}

impl StableComponent {
    /// `R^s Lambda^-1 V_s(0)`.
    pub fn first_order(&self) -> Vector {
        let mut u = Vector::zeros(self.r_s.nrows());
        if let Some(v0) = self.v_s.first() {
            for i in 0..v0.len() {
                u += self.r_s.column(i) * (v0[i] / self.lambda_bar[i]);
            }
        }
        u
    }

    pub fn h(&self) -> f64 {
        if self.x.len() < 2 { 0.0 } else { self.x[1] - self.x[0] }
    }
}

/// Stable-mode layer model: directions, rates and the projected nonlinear
/// correction at a state.
struct StableModel<'a> {
    spec: &'a SystemSpec,
    count: usize,
    base: StableEigs,
}

impl StableModel<'_> {
    fn at(&self, u: &Vector) -> Result<StableEigs> {
        stable_eigs(self.spec, u, self.count, Some(&self.base.chi))
    }

    /// `(R^s(u) V, Lambda(u, V) V)`.
    fn eval(&self, u: &Vector, v: &Vector) -> Result<(Vector, Vector)> {
        let (rv, lv, _) = self.eval_full(u, v)?;
        Ok((rv, lv))
    }

    fn eval_full(&self, u: &Vector, v: &Vector) -> Result<(Vector, Vector, StableEigs)> {
        let st = self.at(u)?;
        let mut rv = Vector::zeros(self.spec.n);
        let mut lv = Vector::zeros(self.count);
        for i in 0..self.count {
            rv += &st.chi[i] * v[i];
            lv[i] = st.mu[i] * v[i];
        }
        if let Some(dual) = &st.dual {
            // dependence of A on the slope
            let da = self.spec.a(u, &rv) - self.spec.a0(u);
            if da.amax() > 0.0 {
                let corr = self.spec.b(u).lu().solve(&(da * &rv)).ok_or_else(|| Error::Internal("B is singular".into()))?;
                lv += dual * corr;
            }
        }
        Ok((rv, lv, st))
    }
}

/// `J_m(z) = int_0^1 s^m e^{z s} ds`.
fn jm(m: u32, z: f64) -> f64 {
    if z.abs() <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..30u32 {
            if k > 0 {
                term *= z / k as f64;
            }
            sum += term / (k + m + 1) as f64;
        }
        sum
    } else {
        let mut j = (z.exp() - 1.0) / z;
        for k in 1..=m {
            j = (z.exp() - k as f64 * j) / z;
        }
        j
    }
}

/// `int_0^h e^{mu (h - t)} N(t) dt` with `N` linear between `n0` and `n1`.
fn etd_forcing(mu: f64, h: f64, n0: f64, n1: f64) -> f64 {
    let z = mu * h;
    let j0 = jm(0, z);
    let j1 = jm(1, z);
    h * (n0 * j0 + (n1 - n0) * (j0 - j1))
}

/// Uniform grid for the stable-layer computations.
fn stable_grid(mu: &[f64], cfg: &LayerConfig) -> (f64, usize) {
    let slow = mu.iter().fold(f64::INFINITY, |a, m| a.min(m.abs()));
    let fast = mu.iter().fold(0.0f64, |a, m| a.max(m.abs()));
    let x = cfg.x_factor / slow;
    let m = ((x * fast / cfg.h_rate).ceil() as usize + 1).clamp(65, cfg.max_nodes);
    (x, m)
}

fn stable_count(spec: &SystemSpec, u: &Vector, band: f64) -> Result<usize> {
    let ea = eig_pencil(spec, u, Which::EA)?.with_band(band);
    let (n11, q) = if spec.is_singular() { block_counts(spec, u, 0.0)? } else { (0, 0) };
    let c = ea.k_minus_1 as isize - n11 as isize - q as isize;
    if c < 0 {
        return Err(Error::DimensionMismatch { generalized: 0, formula: 0 });
    }
    Ok(c as usize)
}

/// Number of uniformly stable layer parameters at `u` for a near-zero band.
pub fn stable_parameter_count(spec: &SystemSpec, u: &Vector, band: f64) -> Result<usize> {
    stable_count(spec, u, band)
}

/// `F^s`: Picard iteration of
/// `u_s(x) = -int_x^inf R^s(u_k + u_s) V_s`,
/// `V_s(x) = e^{Lambda x} V_s(0) + int_0^x e^{Lambda (x-y)} [Lambda(.) - Lambda] V_s`.
pub fn stable_component_fs(spec: &SystemSpec, u_bar_k: &Vector, vs0: &[f64], band: f64) -> Result<StableComponent> {
    stable_component_fs_with(spec, u_bar_k, vs0, band, &LayerConfig::default())
}

pub fn stable_component_fs_with(
    spec: &SystemSpec,
    u_bar_k: &Vector,
    vs0: &[f64],
    band: f64,
    cfg: &LayerConfig,
) -> Result<StableComponent> {
    let count = stable_count(spec, u_bar_k, band)?;
    if vs0.len() != count {
        return Err(Error::Cardinality { expected: count, found: vs0.len() });
    }
    let n = spec.n;
    if count == 0 {
        return Ok(StableComponent {
            u_s0: Vector::zeros(n),
            x: vec![0.0],
            u_s: vec![Vector::zeros(n)],
            v_s: vec![Vector::zeros(0)],
            lambda_bar: Vec::new(),
            r_s: Mat::zeros(n, 0),
            iterations: 0,
        });
    }
    let base = stable_eigs(spec, u_bar_k, count, None)?;
    let lam = base.mu.clone();
    let r_s = hcat(n, &base.chi);
    let model = StableModel { spec, count, base };
    let (x_max, m) = stable_grid(&lam, cfg);
    let h = x_max / (m - 1) as f64;
    let x: Vec<f64> = (0..m).map(|j| j as f64 * h).collect();
    let v0 = Vector::from_column_slice(vs0);
    let mut v: Vec<Vector> = x.iter().map(|xj| Vector::from_iterator(count, (0..count).map(|i| v0[i] * (lam[i] * xj).exp()))).collect();
    let mut us: Vec<Vector> = vec![Vector::zeros(n); m];
    let tol = cfg.picard_tol * (1.0 + max_abs(&v0));
    if max_abs(&v0) == 0.0 {
        return Ok(StableComponent { u_s0: Vector::zeros(n), x, u_s: us, v_s: v, lambda_bar: lam, r_s, iterations: 0 });
    }
    let mut it = 0;
    loop {
        it += 1;
        let evals: Vec<(Vector, Vector, StableEigs)> = (0..m)
            .map(|j| model.eval_full(&(u_bar_k + &us[j]), &v[j]))
            .collect::<Result<_>>()?;
        // V-line
        let mut v_new = Vec::with_capacity(m);
        v_new.push(v0.clone());
        for j in 0..m - 1 {
            let mut next = Vector::zeros(count);
            for i in 0..count {
                let n0 = evals[j].1[i] - lam[i] * v[j][i];
                let n1 = evals[j + 1].1[i] - lam[i] * v[j + 1][i];
                next[i] = (lam[i] * h).exp() * v_new[j][i] + etd_forcing(lam[i], h, n0, n1);
            }
            v_new.push(next);
        }
        // u-line, integrated from the right with the linear tail beyond X
        let mut us_new = vec![Vector::zeros(n); m];
        let mut tail = Vector::zeros(n);
        for i in 0..count {
            tail += &evals[m - 1].2.chi[i] * (v[m - 1][i] / lam[i]);
        }
        us_new[m - 1] = tail;
        for j in (0..m - 1).rev() {
            let mut cell = Vector::zeros(n);
            let (sa, sb) = (&evals[j].2, &evals[j + 1].2);
            for i in 0..count {
                let z = lam[i] * h;
                let a = v[j][i];
                let beta = v[j + 1][i] * (-z).exp() - a;
                let c0 = &sa.chi[i];
                let dc = &sb.chi[i] - c0;
                cell += (c0 * (a * jm(0, z)) + (&dc * a + c0 * beta) * jm(1, z) + &dc * (beta * jm(2, z))) * h;
            }
            us_new[j] = &us_new[j + 1] - cell;
        }
        let mut res = 0.0f64;
        for j in 0..m {
            res = res.max(max_abs(&(&v_new[j] - &v[j]))).max(max_abs(&(&us_new[j] - &us[j])));
        }
        v = v_new;
        us = us_new;
        if res <= tol {
            break;
        }
        if it >= cfg.max_iter {
            return Err(Error::NoConvergence { stage: "stable component".into(), iterations: it, residual: res });
        }
    }
    let tail_est = v[m - 1].norm() / lam.iter().fold(f64::INFINITY, |a, l| a.min(l.abs()));
    if tail_est > 1e-8 * (1.0 + v0.norm()) {
        return Err(Error::Truncation(tail_est));
    }
    Ok(StableComponent { u_s0: us[0].clone(), x, u_s: us, v_s: v, lambda_bar: lam, r_s, iterations: it })
}

/// `beta(x)` on a grid: `beta' = v(beta)`, `beta(0) = |s_k|`, in the curve's
/// own parameterization (`v <= 0` there).
fn beta_path(curve: &CurveState, x: &[f64]) -> Vec<f64> {
    let len = curve.s.abs();
    let m = x.len();
    let sgn = curve.s.signum();
    let v_at = |tau: f64| -> f64 {
        let cm = curve.m();
        if cm < 2 {
            return 0.0;
        }
        let hh = curve.h();
        let t = (tau / hh).clamp(0.0, (cm - 1) as f64);
        let j = (t.floor() as usize).min(cm - 2);
        let w = t - j as f64;
        // internal sign: v <= 0
        sgn * (curve.v[j] * (1.0 - w) + curve.v[j + 1] * w)
    };
    let mut b = vec![len; m];
    let v_end = v_at(len);
    let vscale = curve.v.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if len == 0.0 || v_end.abs() <= 1e-13 * (1.0 + vscale) {
        return b;
    }
    for j in 0..m - 1 {
        let h = x[j + 1] - x[j];
        let y = b[j];
        let k1 = v_at(y);
        let k2 = v_at(y + 0.5 * h * k1);
        let k3 = v_at(y + 0.5 * h * k2);
        let k4 = v_at(y + h * k3);
        b[j + 1] = (y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(0.0, len);
    }
    b
}

/// Perturbation component with its grid data.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub u0: Vector,
    pub iterations: usize,
}

/// `F^p`: the coupling between the center layer `u_k o beta` and the stable
/// layer, as the fixed point `(U, q, p)` with `U, q -> 0` at infinity and
/// `p(0) = 0`.
pub fn perturbation_fp(
    spec: &SystemSpec,
    closure: &ClosureModel,
    curve: &CurveState,
    stable: &StableComponent,
    u_bar_k: &Vector,
    cfg: &LayerConfig,
) -> Result<Perturbation> {
    let n = spec.n;
    let count = stable.lambda_bar.len();
    if cfg.order1_perturbation || count == 0 || stable.x.len() < 2 {
        return Ok(Perturbation { u0: Vector::zeros(n), iterations: 0 });
    }
    let x = &stable.x;
    let m = x.len();
    let h = stable.h();
    let lam = &stable.lambda_bar;
    let beta = beta_path(curve, x);
    let sgn = curve.s.signum();
    let uk: Vec<Vector> = beta.iter().map(|b| curve.u_at(*b)).collect();
    let vk: Vec<f64> = {
        let cm = curve.m();
        beta.iter()
            .map(|&b| {
                if cm < 2 {
                    return 0.0;
                }
                let t = (b / curve.h()).clamp(0.0, (cm - 1) as f64);
                let j = (t.floor() as usize).min(cm - 2);
                let w = t - j as f64;
                // v in the layer variable: d(u_k o beta)/dx = r v with r oriented along sign(s)
                sgn * (curve.v[j] * (1.0 - w) + curve.v[j + 1] * w)
            })
            .collect()
    };
    let base = stable_eigs(spec, u_bar_k, count, None)?;
    let model = StableModel { spec, count, base };
    // center direction as the curve moves: u_k' = sign(s) r(u_k) in tau, beta' = v
    let rk = |u: &Vector| -> Result<Vector> { Ok(closure.r_tilde(u, 0.0, 0.0)? * sgn) };
    let phik = |u: &Vector| -> Result<f64> { closure.phi(u, 0.0, 0.0) };
    // fixed parts
    let mut stable_only = Vec::with_capacity(m);
    let mut center_only_r = Vec::with_capacity(m);
    let mut center_only_phi = Vec::with_capacity(m);
    for j in 0..m {
        stable_only.push(model.eval(&(u_bar_k + &stable.u_s[j]), &stable.v_s[j])?);
        center_only_r.push(rk(&uk[j])?);
        center_only_phi.push(phik(&uk[j])?);
    }
    let mut uu = vec![Vector::zeros(n); m];
    let mut q = vec![0.0; m];
    let mut p = vec![Vector::zeros(count); m];
    let scale = 1.0 + curve.s.abs() + stable.v_s[0].norm();
    let tol = cfg.picard_tol * scale;
    let mut it = 0;
    loop {
        it += 1;
        let mut du = Vec::with_capacity(m);
        let mut dq = Vec::with_capacity(m);
        let mut np = Vec::with_capacity(m);
        for j in 0..m {
            let full = &uk[j] + &stable.u_s[j] + &uu[j];
            let vtot = &stable.v_s[j] + &p[j];
            let (rv_full, lv_full) = model.eval(&full, &vtot)?;
            let r_full = rk(&full)?;
            let phi_full = phik(&full)?;
            // U' = R(full)(V + p) - R(u_k + u_s)V + [r(full) - r(u_k o beta)] v + r(full) q
            let d = &rv_full - &stable_only[j].0 + (&r_full - &center_only_r[j]) * vk[j] + &r_full * q[j];
            du.push(d);
            dq.push((phi_full - center_only_phi[j]) * vk[j] + phi_full * q[j]);
            // p' = Lambda p + [Lambda(full)(V + p) - Lambda p - Lambda(u_s) V]
            let lin = Vector::from_iterator(count, (0..count).map(|i| lam[i] * p[j][i]));
            np.push(&lv_full - &stable_only[j].1 - lin);
        }
        let mut uu_new = vec![Vector::zeros(n); m];
        let mut q_new = vec![0.0; m];
        for j in (0..m - 1).rev() {
            uu_new[j] = &uu_new[j + 1] - (&du[j] + &du[j + 1]) * (0.5 * h);
            q_new[j] = q_new[j + 1] - 0.5 * h * (dq[j] + dq[j + 1]);
        }
        let mut p_new = vec![Vector::zeros(count); m];
        for j in 0..m - 1 {
            for i in 0..count {
                p_new[j + 1][i] = (lam[i] * h).exp() * p_new[j][i] + etd_forcing(lam[i], h, np[j][i], np[j + 1][i]);
            }
        }
        let mut res = 0.0f64;
        for j in 0..m {
            res = res
                .max(max_abs(&(&uu_new[j] - &uu[j])))
                .max((q_new[j] - q[j]).abs())
                .max(max_abs(&(&p_new[j] - &p[j])));
        }
        uu = uu_new;
        q = q_new;
        p = p_new;
        if res <= tol {
            break;
        }
        if it >= cfg.max_iter {
            return Err(Error::NoConvergence { stage: "perturbation component".into(), iterations: it, residual: res });
        }
    }
    Ok(Perturbation { u0: uu[0].clone(), iterations: it })
}

/// Components of `F(u_k, s_1..s_k) = F^k + F^s + F^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedF {
    pub value: Vector,
    pub fk: Vector,
    pub fs: Vector,
    pub fp: Vector,
    pub curve: CurveState,
    pub stable: StableComponent,
}

/// `F(u_k, s)` with `s = (V_s(0), s_k)`: stable parameters first, the
/// characteristic amplitude last.
pub fn combined_f(
    spec: &SystemSpec,
    closure: &ClosureModel,
    u_bar_k: &Vector,
    s: &[f64],
    band: f64,
    curve_cfg: &CurveConfig,
    cfg: &LayerConfig,
) -> Result<CombinedF> {
    let Some((&s_k, vs0)) = s.split_last() else {
        return Err(Error::Cardinality { expected: 1, found: 0 });
    };
    let (fk, curve) = center_component_fk_with(spec, closure, u_bar_k, s_k, curve_cfg).map_err(|e| e.at("F^k"))?;
    let stable = stable_component_fs_with(spec, u_bar_k, vs0, band, cfg).map_err(|e| e.at("F^s"))?;
    let fp = perturbation_fp(spec, closure, &curve, &stable, u_bar_k, cfg).map_err(|e| e.at("F^p"))?.u0;
    let fs = stable.u_s0.clone();
    Ok(CombinedF { value: &fk + &fs + &fp, fk, fs, fp, curve, stable })
}
