//! Admissible-state curves from the envelope fixed point, their
//! characteristic (monotone-envelope) variant, wave patterns, and the
//! Riemann solver for the Cauchy problem.
//!
//! Curves are parameterized over `[0, |s|]` for either sign of `s`: the
//! state moves along `sign(s) * r`, and the reduced flux
//! `G(tau) = int_0^tau lambda~` is replaced by its (monotone) concave
//! envelope. For `s < 0` this is the reflection of the convex-envelope
//! problem on `[s, 0]`, so speeds and states are unchanged; the reported `v`
//! carries the sign of `s`.

use std::fmt;
use std::sync::Arc;

use crate::envelopes::{concave_envelope, monotone_concave_envelope, SampledFunction};
use crate::linalg::{max_abs, submatrix, numerical_rank_scaled, Vector};
use crate::newton::{newton, NewtonConfig};
use crate::spectral::ea_eigen;
use crate::system_model::SystemSpec;
use crate::{Error, Result};

pub type ClosureVecFn = Arc<dyn Fn(&Vector, f64, f64) -> Result<Vector> + Send + Sync>;
pub type ClosureScalarFn = Arc<dyn Fn(&Vector, f64, f64) -> Result<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureKind {
    FrozenEigenvector,
    Custom,
}

/// Leading-order description of the center manifold of the `i`-th family:
/// the direction field `r~(u, v, sigma)`, the rate `phi(u, v, sigma)` and the
/// constant `c_E`.
#[derive(Clone)]
pub struct ClosureModel {
    pub kind: ClosureKind,
    pub family: usize,
    pub c_e: f64,
    pub u_base: Vector,
    /// Oriented unit eigenvector at the base state.
    pub r_base: Vector,
    pub lambda_base: f64,
    spec: Option<SystemSpec>,
    custom: Option<(ClosureVecFn, ClosureScalarFn)>,
}

impl fmt::Debug for ClosureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureModel")
            .field("kind", &self.kind)
            .field("family", &self.family)
            .field("c_e", &self.c_e)
            .field("lambda_base", &self.lambda_base)
            .field("r_base", &self.r_base.as_slice())
            .finish()
    }
}

/// Pointwise data of the frozen closure: `phi = a - sigma * e`.
#[derive(Debug, Clone)]
struct FrozenCoeffs {
    r: Vector,
    a: f64,
    e: f64,
}

impl ClosureModel {
    /// A user-supplied closure. `r_tilde` should return unit vectors.
    pub fn custom(
        family: usize,
        u_base: Vector,
        c_e: f64,
        lambda_base: f64,
        r_tilde: ClosureVecFn,
        phi: ClosureScalarFn,
    ) -> Result<Self> {
        if !(c_e > 0.0) {
            return Err(Error::InvalidParam { name: "c_e".into(), reason: "must be positive".into() });
        }
        let r_base = r_tilde(&u_base, 0.0, lambda_base)?;
        Ok(Self {
            kind: ClosureKind::Custom,
            family,
            c_e,
            u_base,
            r_base,
            lambda_base,
            spec: None,
            custom: Some((r_tilde, phi)),
        })
    }

    fn frozen(&self, u: &Vector, reference: &Vector) -> Result<FrozenCoeffs> {
        let spec = self.spec.as_ref().expect("frozen closure carries its system");
        frozen_coeffs(spec, self.family, u, reference)
    }

    pub fn r_tilde(&self, u: &Vector, v: f64, sigma: f64) -> Result<Vector> {
        match &self.custom {
            Some((r, _)) => r(u, v, sigma),
            None => Ok(self.frozen(u, &self.r_base)?.r),
        }
    }

    pub fn phi(&self, u: &Vector, v: f64, sigma: f64) -> Result<f64> {
        match &self.custom {
            Some((_, p)) => p(u, v, sigma),
            None => {
                let c = self.frozen(u, &self.r_base)?;
                Ok(c.a - sigma * c.e)
            }
        }
    }

    /// `lambda~ = phi + c_E sigma`.
    pub fn lambda_tilde(&self, u: &Vector, v: f64, sigma: f64) -> Result<f64> {
        Ok(self.phi(u, v, sigma)? + self.c_e * sigma)
    }

    /// Root of `sigma -> phi(u, 0, sigma)`: the characteristic speed at `u`.
    pub fn speed(&self, u: &Vector) -> Result<f64> {
        if self.custom.is_none() {
            let c = self.frozen(u, &self.r_base)?;
            return Ok(c.a / c.e);
        }
        let mut sigma = self.lambda_base;
        for _ in 0..50 {
            let p = self.phi(u, 0.0, sigma)?;
            let h = 1e-7 * (1.0 + sigma.abs());
            let dp = (self.phi(u, 0.0, sigma + h)? - p) / h;
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            sigma -= step;
            if step.abs() <= 1e-14 * (1.0 + sigma.abs()) {
                break;
            }
        }
        Ok(sigma)
    }
}

fn frozen_coeffs(spec: &SystemSpec, i: usize, u: &Vector, reference: &Vector) -> Result<FrozenCoeffs> {
    let (_, vecs) = ea_eigen(spec, u)?;
    let mut r = vecs[i].clone();
    r /= r.norm();
    if r.dot(reference) < 0.0 {
        r = -r;
    }
    let brr = r.dot(&(spec.b(u) * &r));
    let scale = spec.b(u).amax().max(1.0);
    if brr <= 1e-12 * scale {
        return Err(Error::Hypothesis(format!(
            "<r_{i}, B r_{i}> = {brr:.3e} is not positive at {:?}",
            u.as_slice()
        )));
    }
    let a = r.dot(&(spec.a0(u) * &r)) / brr;
    let e = r.dot(&(spec.e(u) * &r)) / brr;
    Ok(FrozenCoeffs { r, a, e })
}

/// The frozen-eigenvector closure of family `i` (0-based) at the base state.
///
/// `c_E` is normalized by `<r, B r>` so that `d phi / d sigma = -c_E` at the
/// base point, as the fixed point requires.
pub fn make_closure(spec: &SystemSpec, i: usize) -> Result<ClosureModel> {
    make_closure_at(spec, i, &spec.u_base)
}

/// The frozen-eigenvector closure of family `i` anchored at `u0`.
pub fn make_closure_at(spec: &SystemSpec, i: usize, u0: &Vector) -> Result<ClosureModel> {
    if i >= spec.n {
        return Err(Error::InvalidInput(format!("family {i} out of range for N = {}", spec.n)));
    }
    if u0.len() != spec.n {
        return Err(Error::DatumDimension { expected: spec.n, found: u0.len() });
    }
    let (vals, vecs) = ea_eigen(spec, u0)?;
    let scale = vals.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    for w in vals.windows(2) {
        if w[1] - w[0] <= 1e-9 * scale {
            return Err(Error::Hypothesis(format!(
                "eigenvalues {:.6e} and {:.6e} of E^-1 A coincide at the base state",
                w[0], w[1]
            )));
        }
    }
    let lambda = vals[i];
    let mut r = vecs[i].clone();
    r /= r.norm();
    if spec.is_singular() {
        let w = spec.w_idx();
        let block = submatrix(&spec.a0(u0), &w, &w) - submatrix(&spec.e(u0), &w, &w) * lambda;
        let sc = block.amax().max(1.0);
        if numerical_rank_scaled(&block, Some(sc)) < w.len() {
            return Err(Error::Unsupported(format!(
                "ker(A11 - lambda_{i} E11) is nontrivial at the base state; curves of this family need the exact center manifold"
            )));
        }
    }
    // genuinely nonlinear orientation: lambda increases along r
    let h = 1e-6 * (1.0 + max_abs(u0));
    let lp = ea_eigen(spec, &(u0 + &r * h)).map(|(v, _)| v[i]);
    let lm = ea_eigen(spec, &(u0 - &r * h)).map(|(v, _)| v[i]);
    if let (Ok(lp), Ok(lm)) = (lp, lm) {
        let d = (lp - lm) / (2.0 * h);
        if d.abs() > 1e-8 * (1.0 + scale) && d < 0.0 {
            r = -r;
        }
    }
    let c = frozen_coeffs(spec, i, u0, &r)?;
    Ok(ClosureModel {
        kind: ClosureKind::FrozenEigenvector,
        family: i,
        c_e: c.e,
        u_base: u0.clone(),
        r_base: c.r,
        lambda_base: lambda,
        spec: Some(spec.clone()),
        custom: None,
    })
}

/// Solver settings for the curve fixed points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveConfig {
    /// Grid density; the node count is fixed per system from `delta` so that
    /// curves depend continuously on `s`.
    pub nodes_per_unit: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub damping: f64,
    /// Picard tolerance is `tol_rel * (1 + |s|)`.
    pub tol_rel: f64,
    pub max_iter: usize,
    /// `M` in the near-characteristic requirement `|lambda_k| <= M delta`.
    pub char_margin: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            nodes_per_unit: 513.0,
            min_nodes: 65,
            max_nodes: 4097,
            damping: 0.5,
            tol_rel: 1e-10,
            max_iter: 200,
            char_margin: 10.0,
        }
    }
}

impl CurveConfig {
    pub fn nodes(&self, delta: f64) -> usize {
        ((self.nodes_per_unit * delta).ceil() as usize + 1).clamp(self.min_nodes, self.max_nodes)
    }
}

/// Cut points of a characteristic curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicCut {
    /// First node after which `sigma` vanishes identically.
    pub s_bar: f64,
    pub s_bar_index: usize,
    /// Last node with `sigma = 0` and `v = 0`; equals `s_bar` when there is none.
    pub s_under: f64,
    pub s_under_index: usize,
}

/// Solution `(u, v, sigma)` of a curve fixed point on `[0, |s|]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveState {
    pub family: usize,
    pub s: f64,
    pub tau: Vec<f64>,
    pub u: Vec<Vector>,
    pub v: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    /// `G(tau) = int_0^tau lambda~`.
    pub flux: Vec<f64>,
    pub envelope: Vec<f64>,
    pub contact: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub cut: Option<CharacteristicCut>,
}

impl CurveState {
    pub fn start(&self) -> &Vector {
        &self.u[0]
    }

    /// `T_s(u_start) = u(|s|)`.
    pub fn endpoint(&self) -> &Vector {
        self.u.last().expect("non-empty curve")
    }

    pub fn m(&self) -> usize {
        self.tau.len()
    }

    pub fn h(&self) -> f64 {
        if self.m() < 2 {
            0.0
        } else {
            self.tau[1] - self.tau[0]
        }
    }

    /// State at `tau` by linear interpolation.
    pub fn u_at(&self, tau: f64) -> Vector {
        let m = self.m();
        if m == 1 || tau <= 0.0 {
            return self.u[0].clone();
        }
        let x = (tau / self.h()).min((m - 1) as f64);
        let j = (x.floor() as usize).min(m - 2);
        let t = x - j as f64;
        &self.u[j] * (1.0 - t) + &self.u[j + 1] * t
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Plain,
    Characteristic,
}

fn rk4_path(
    closure: &ClosureModel,
    u_start: &Vector,
    sg: f64,
    h: f64,
    m: usize,
    v: &[f64],
    sigma: &[f64],
) -> Result<(Vec<Vector>, Vec<FrozenCoeffs>)> {
    let frozen = closure.custom.is_none();
    let mut us = Vec::with_capacity(m);
    let mut coeffs = Vec::with_capacity(m);
    let mut reference = closure.r_base.clone();
    let mut u = u_start.clone();
    let field = |u: &Vector, vv: f64, ss: f64, reference: &Vector| -> Result<FrozenCoeffs> {
        if frozen {
            closure.frozen(u, reference)
        } else {
            let r = closure.r_tilde(u, vv, ss)?;
            let p = closure.phi(u, vv, ss)?;
            Ok(FrozenCoeffs { r, a: p + ss, e: 1.0 })
        }
    };
    for j in 0..m {
        let c = field(&u, v[j], sigma[j], &reference)?;
        reference = c.r.clone();
        us.push(u.clone());
        coeffs.push(c);
        if j + 1 == m {
            break;
        }
        let (vm, sm) = (0.5 * (v[j] + v[j + 1]), 0.5 * (sigma[j] + sigma[j + 1]));
        let k1 = &coeffs[j].r * sg;
        let k2 = field(&(&u + &k1 * (0.5 * h)), vm, sm, &reference)?.r * sg;
        let k3 = field(&(&u + &k2 * (0.5 * h)), vm, sm, &reference)?.r * sg;
        let k4 = field(&(&u + &k3 * h), v[j + 1], sigma[j + 1], &reference)?.r * sg;
        u = &u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok((us, coeffs))
}

fn solve_curve(
    spec: &SystemSpec,
    closure: &ClosureModel,
    u_start: &Vector,
    s: f64,
    mode: Mode,
    cfg: &CurveConfig,
) -> Result<CurveState> {
    if u_start.len() != spec.n {
        return Err(Error::DatumDimension { expected: spec.n, found: u_start.len() });
    }
    if !s.is_finite() {
        return Err(Error::InvalidInput("amplitude is not finite".into()));
    }
    if s.abs() > spec.delta * (1.0 + 1e-12) {
        return Err(Error::AmplitudeTooLarge { amplitude: s.abs(), delta: spec.delta });
    }
    let frozen = closure.custom.is_none();
    if s == 0.0 {
        let mut sig = closure.speed(u_start)?;
        let mut cut = None;
        if mode == Mode::Characteristic {
            sig = sig.max(0.0);
            cut = Some(CharacteristicCut { s_bar: 0.0, s_bar_index: 0, s_under: 0.0, s_under_index: 0 });
        }
        return Ok(CurveState {
            family: closure.family,
            s,
            tau: vec![0.0],
            u: vec![u_start.clone()],
            v: vec![0.0],
            sigma: vec![sig],
            lambda_tilde: vec![closure.c_e * sig],
            flux: vec![0.0],
            envelope: vec![0.0],
            contact: vec![true],
            converged: true,
            iterations: 0,
            residual: 0.0,
            cut,
        });
    }
    let m = cfg.nodes(spec.delta);
    let len = s.abs();
    let sg = s.signum();
    let h = len / (m - 1) as f64;
    let tau: Vec<f64> = (0..m).map(|j| j as f64 * h).collect();
    let tol = cfg.tol_rel * (1.0 + len);

    let mut v = vec![0.0; m];
    let mut sigma = vec![0.0; m];
    let (mut u, mut coeffs) = rk4_path(closure, u_start, sg, h, m, &v, &sigma)?;
    for j in 0..m {
        sigma[j] = if frozen { coeffs[j].a / coeffs[j].e } else { closure.speed(&u[j])? };
    }

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut last = None;
    while iterations < cfg.max_iter {
        iterations += 1;
        if !frozen {
            let (uu, cc) = rk4_path(closure, u_start, sg, h, m, &v, &sigma)?;
            u = uu;
            coeffs = cc;
        }
        let lt: Vec<f64> = (0..m)
            .map(|j| {
                if frozen {
                    Ok(coeffs[j].a - sigma[j] * coeffs[j].e + closure.c_e * sigma[j])
                } else {
                    closure.lambda_tilde(&u[j], sg * v[j], sigma[j])
                }
            })
            .collect::<Result<_>>()?;
        let mut g = vec![0.0; m];
        for j in 1..m {
            g[j] = g[j - 1] + 0.5 * h * (lt[j - 1] + lt[j]);
        }
        let lip = lt.windows(2).fold(1e-12f64, |a, w| a.max((w[1] - w[0]).abs() / h));
        let f = SampledFunction::new(len, g.clone(), lt.clone(), lip)?;
        let env = match mode {
            Mode::Plain => concave_envelope(&f)?,
            Mode::Characteristic => monotone_concave_envelope(&f)?,
        };
        let sigma_new: Vec<f64> = env.env.deriv.iter().map(|d| d / closure.c_e).collect();
        let v_new: Vec<f64> = g.iter().zip(&env.env.values).map(|(a, b)| a - b).collect();
        residual = sigma_new
            .iter()
            .zip(&sigma)
            .chain(v_new.iter().zip(&v))
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let done = residual < tol;
        if done {
            sigma = sigma_new;
            v = v_new;
        } else {
            let d = cfg.damping;
            for j in 0..m {
                sigma[j] += d * (sigma_new[j] - sigma[j]);
                v[j] += d * (v_new[j] - v[j]);
            }
        }
        last = Some((lt, g, env));
        if done {
            break;
        }
    }
    if residual >= tol {
        return Err(Error::NoConvergence { stage: "curve fixed point".into(), iterations, residual });
    }
    let (lt, g, env) = last.expect("at least one iteration");

    let cut = if mode == Mode::Characteristic {
        let stol = 1e-12 * (1.0 + sigma.iter().fold(0.0f64, |a, x| a.max(x.abs())));
        let mut jb = m - 1;
        while jb >= 1 && sigma[jb] <= stol {
            jb -= 1;
        }
        let mut ju = jb;
        for j in jb..m {
            if env.contact[j] {
                ju = j;
            }
        }
        Some(CharacteristicCut { s_bar: tau[jb], s_bar_index: jb, s_under: tau[ju], s_under_index: ju })
    } else {
        None
    };

    Ok(CurveState {
        family: closure.family,
        s,
        tau,
        u,
        v: v.iter().map(|x| sg * x).collect(),
        sigma,
        lambda_tilde: lt,
        flux: g,
        envelope: env.env.values,
        contact: env.contact,
        converged: true,
        iterations,
        residual,
        cut,
    })
}

/// The curve `T^i_s(u_start)`: concave envelope fixed point on `[0, |s|]`.
pub fn admissible_curve(spec: &SystemSpec, closure: &ClosureModel, u_start: &Vector, s: f64) -> Result<CurveState> {
    admissible_curve_with(spec, closure, u_start, s, &CurveConfig::default())
}

pub fn admissible_curve_with(
    spec: &SystemSpec,
    closure: &ClosureModel,
    u_start: &Vector,
    s: f64,
    cfg: &CurveConfig,
) -> Result<CurveState> {
    solve_curve(spec, closure, u_start, s, Mode::Plain, cfg)
}

/// Curve of the near-characteristic family with monotone envelopes, so that
/// `sigma >= 0`; also returns the cut points `s_bar` and `s_under`.
pub fn char_admissible_curve(spec: &SystemSpec, closure: &ClosureModel, u_start: &Vector, s: f64) -> Result<CurveState> {
    char_admissible_curve_with(spec, closure, u_start, s, &CurveConfig::default())
}

pub fn char_admissible_curve_with(
    spec: &SystemSpec,
    closure: &ClosureModel,
    u_start: &Vector,
    s: f64,
    cfg: &CurveConfig,
) -> Result<CurveState> {
    let lam = closure.speed(u_start)?;
    if lam.abs() > cfg.char_margin * spec.delta {
        return Err(Error::InvalidInput(format!(
            "family {} is not near-characteristic at the start state (lambda = {lam:.3e})",
            closure.family
        )));
    }
    solve_curve(spec, closure, u_start, s, Mode::Characteristic, cfg)
}

/// One piece of a self-similar solution, ordered left to right.
#[derive(Debug, Clone, PartialEq)]
pub enum WavePiece {
    ConstantState(Vector),
    /// Fan samples are `(speed, state)` sorted by speed.
    Rarefaction {
        family: usize,
        u_from: Vector,
        u_to: Vector,
        speed_from: f64,
        speed_to: f64,
        fan: Vec<(f64, Vector)>,
    },
    Shock {
        family: usize,
        u_from: Vector,
        u_to: Vector,
        speed: f64,
    },
    BoundaryLayer {
        u_boundary: Vector,
        u_trace: Vector,
    },
}

impl WavePiece {
    /// `(leftmost, rightmost)` speed of the piece; layers sit at 0.
    pub fn speed_range(&self) -> Option<(f64, f64)> {
        match self {
            WavePiece::ConstantState(_) => None,
            WavePiece::Rarefaction { speed_from, speed_to, .. } => Some((*speed_from, *speed_to)),
            WavePiece::Shock { speed, .. } => Some((*speed, *speed)),
            WavePiece::BoundaryLayer { .. } => Some((0.0, 0.0)),
        }
    }

    pub fn states(&self) -> Option<(&Vector, &Vector)> {
        match self {
            WavePiece::ConstantState(_) => None,
            WavePiece::Rarefaction { u_from, u_to, .. } | WavePiece::Shock { u_from, u_to, .. } => Some((u_from, u_to)),
            WavePiece::BoundaryLayer { u_boundary, u_trace } => Some((u_boundary, u_trace)),
        }
    }
}

/// Wave pieces of a converged curve, left to right.
///
/// Shock pieces are the runs where `v != 0`; rarefactions the runs on the
/// contact set. For a characteristic curve only `[0, s_bar]` is used.
pub fn wave_pattern(curve: &CurveState) -> Vec<WavePiece> {
    let end = curve.cut.map(|c| c.s_bar_index).unwrap_or(curve.m() - 1);
    if end == 0 {
        return Vec::new();
    }
    let seg_speed = |j: usize| curve.sigma[j + 1];
    let is_shock = |j: usize| !curve.contact[j] || !curve.contact[j + 1];
    let scale = curve.sigma.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    // runs as (lo, hi, shock), scanned right-to-left in tau = left-to-right in x
    let mut runs: Vec<(usize, usize, bool)> = Vec::new();
    for j in (0..end).rev() {
        let sh = is_shock(j);
        if let Some(last) = runs.last_mut() {
            let same_speed = (seg_speed(j) - seg_speed(last.0)).abs() <= 1e-10 * scale;
            if last.2 == sh && (!sh || same_speed || !curve.contact[j + 1]) {
                last.0 = j;
                continue;
            }
        }
        runs.push((j, j + 1, sh));
    }
    let family = curve.family;
    runs.into_iter()
        .map(|(lo, hi, sh)| {
            let u_from = curve.u[hi].clone();
            let u_to = curve.u[lo].clone();
            if sh {
                WavePiece::Shock { family, u_from, u_to, speed: seg_speed(lo) }
            } else {
                let speed_from = curve.sigma[hi];
                let speed_to = seg_speed(lo);
                let mut fan = Vec::with_capacity(hi - lo + 1);
                fan.push((speed_from, u_from.clone()));
                for j in (lo + 1..hi).rev() {
                    fan.push((0.5 * (curve.sigma[j] + curve.sigma[j + 1]), curve.u[j].clone()));
                }
                fan.push((speed_to, u_to.clone()));
                WavePiece::Rarefaction { family, u_from, u_to, speed_from, speed_to, fan }
            }
        })
        .collect()
}

/// A self-similar solution `u(t, x) = U(x / t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannPattern {
    pub pieces: Vec<WavePiece>,
    /// State at `x = 0+`.
    pub trace: Vector,
    /// State left of all waves (the trace when a boundary layer is present).
    pub left: Vector,
    pub right: Vector,
}

impl RiemannPattern {
    pub(crate) fn from_pieces(pieces: Vec<WavePiece>, left: Vector, right: Vector) -> Self {
        let mut p = Self { trace: left.clone(), pieces, left, right };
        p.trace = p.eval(0.0);
        p
    }

    pub fn has_boundary_layer(&self) -> bool {
        matches!(self.pieces.first(), Some(WavePiece::BoundaryLayer { .. }))
    }

    /// Wave speeds of all non-constant pieces, left to right.
    pub fn speeds(&self) -> Vec<f64> {
        self.pieces
            .iter()
            .filter_map(|p| p.speed_range())
            .flat_map(|(a, b)| [a, b])
            .collect()
    }

    /// `U(xi)`, right-continuous at shocks.
    pub fn eval(&self, xi: f64) -> Vector {
        let mut state = &self.left;
        for p in &self.pieces {
            match p {
                WavePiece::ConstantState(_) | WavePiece::BoundaryLayer { .. } => {}
                WavePiece::Shock { u_from, u_to, speed, .. } => {
                    if xi < *speed {
                        return u_from.clone();
                    }
                    state = u_to;
                }
                WavePiece::Rarefaction { u_from, u_to, speed_from, speed_to, fan, .. } => {
                    if xi < *speed_from {
                        return u_from.clone();
                    }
                    if xi <= *speed_to {
                        return fan_state(fan, xi);
                    }
                    state = u_to;
                }
            }
        }
        state.clone()
    }
}

fn fan_state(fan: &[(f64, Vector)], xi: f64) -> Vector {
    // monotone bisection on the tabulated speeds
    let (mut lo, mut hi) = (0usize, fan.len() - 1);
    if xi <= fan[lo].0 {
        return fan[lo].1.clone();
    }
    if xi >= fan[hi].0 {
        return fan[hi].1.clone();
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if fan[mid].0 <= xi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (s0, s1) = (fan[lo].0, fan[hi].0);
    let t = if s1 > s0 { (xi - s0) / (s1 - s0) } else { 0.0 };
    &fan[lo].1 * (1.0 - t) + &fan[hi].1 * t
}

/// `u(t, x)` of a pattern; returns the trace on `0 <= x/t <= 1e-9`.
pub fn sample_solution(pattern: &RiemannPattern, t: f64, x: f64) -> Result<Vector> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("time must be positive, got {t}")));
    }
    let xi = x / t;
    if (0.0..=1e-9).contains(&xi) {
        return Ok(pattern.trace.clone());
    }
    Ok(pattern.eval(xi))
}

/// `psi(s, u+) = T^1_{s_1} o ... o T^N_{s_N} u+`, returning all curves
/// (family order) and the final state.
pub fn compose_curves(
    spec: &SystemSpec,
    closures: &[ClosureModel],
    s: &[f64],
    u_plus: &Vector,
    cfg: &CurveConfig,
) -> Result<(Vec<CurveState>, Vector)> {
    if s.len() != closures.len() {
        return Err(Error::Cardinality { expected: closures.len(), found: s.len() });
    }
    let mut u = u_plus.clone();
    let mut curves = Vec::with_capacity(s.len());
    for i in (0..s.len()).rev() {
        let c = admissible_curve_with(spec, &closures[i], &u, s[i], cfg)?;
        u = c.endpoint().clone();
        curves.push(c);
    }
    curves.reverse();
    Ok((curves, u))
}

/// Glues per-family patterns, left to right.
pub fn glue_curves(curves: &[CurveState], left: Vector, right: Vector) -> RiemannPattern {
    let pieces = curves.iter().flat_map(wave_pattern).collect();
    RiemannPattern::from_pieces(pieces, left, right)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchySolution {
    pub s: Vec<f64>,
    pub pattern: RiemannPattern,
    pub curves: Vec<CurveState>,
    pub residual: f64,
    pub newton_iterations: usize,
}

/// Riemann problem on the whole line: Newton on `s -> psi(s, u+) - u-`.
pub fn solve_cauchy_riemann(spec: &SystemSpec, u_minus: &Vector, u_plus: &Vector) -> Result<CauchySolution> {
    solve_cauchy_riemann_with(spec, u_minus, u_plus, &CurveConfig::default(), &NewtonConfig::default())
}

pub fn solve_cauchy_riemann_with(
    spec: &SystemSpec,
    u_minus: &Vector,
    u_plus: &Vector,
    cfg: &CurveConfig,
    ncfg: &NewtonConfig,
) -> Result<CauchySolution> {
    for u in [u_minus, u_plus] {
        if u.len() != spec.n {
            return Err(Error::DatumDimension { expected: spec.n, found: u.len() });
        }
    }
    let jump = (u_minus - u_plus).norm();
    if jump > spec.delta * (1.0 + 1e-12) {
        return Err(Error::OutsideBall {
            state: u_minus.iter().copied().collect(),
            distance: jump,
            delta: spec.delta,
        });
    }
    let closures: Vec<ClosureModel> = (0..spec.n).map(|i| make_closure(spec, i)).collect::<Result<_>>()?;
    let f = |s: &Vector| -> Result<Vector> {
        let (_, u) = compose_curves(spec, &closures, s.as_slice(), u_plus, cfg)?;
        Ok(u - u_minus)
    };
    let tol = 1e-10 * (1.0 + max_abs(u_minus));
    let sol = newton(&f, Vector::zeros(spec.n), tol, ncfg, "Cauchy Riemann solver")?;
    let (curves, _) = compose_curves(spec, &closures, sol.x.as_slice(), u_plus, cfg)?;
    let pattern = glue_curves(&curves, u_minus.clone(), u_plus.clone());
    Ok(CauchySolution {
        s: sol.x.iter().copied().collect(),
        pattern,
        curves,
        residual: sol.residual,
        newton_iterations: sol.iterations,
    })
}
