//! Direct finite-difference simulation of the viscous initial-boundary value
//! problem, trace estimation, and the regularized counterexample families.

use crate::linalg::{max_abs, Vector};
use crate::ode::integrate;
use crate::spectral::ea_eigen;
use crate::system_model::{build_boundary_map, BoundaryMap, SystemSpec};
use crate::{Error, Result};

/// Uniform grid and time step of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    /// Domain length.
    pub l: f64,
    /// Number of cells.
    pub j: usize,
    pub dx: f64,
    pub t_final: f64,
    pub dt: f64,
    pub eps: f64,
}

/// Bounds on `|lambda|` and `|E^-1 B|` over a set of states.
fn speed_bounds(spec: &SystemSpec, states: &[Vector]) -> Result<(f64, f64)> {
    let mut lam: f64 = 0.0;
    let mut beta: f64 = 0.0;
    for u in states {
        let (vals, _) = ea_eigen(spec, u)?;
        lam = vals.iter().fold(lam, |a, v| a.max(v.abs()));
        let eb = spec
            .e(u)
            .lu()
            .solve(&spec.b(u))
            .ok_or_else(|| Error::Internal("E is singular".into()))?;
        beta = beta.max(eb.norm());
    }
    Ok((lam.max(1e-12), beta.max(1e-12)))
}

impl SimGrid {
    /// Grid with the largest stable step `0.4 min(dx / Lambda, dx^2 / (2 eps beta))`
    /// for the given states.
    pub fn new(spec: &SystemSpec, eps: f64, l: f64, j: usize, t_final: f64, states: &[Vector]) -> Result<Self> {
        if !(eps > 0.0) || !(l > 0.0) || j < 4 || !(t_final > 0.0) {
            return Err(Error::InvalidInput("eps, L, T must be positive and J >= 4".into()));
        }
        let dx = l / j as f64;
        let dt = Self::bound(spec, eps, dx, states)?;
        // land exactly on t_final
        let steps = (t_final / dt).ceil();
        Ok(Self { l, j, dx, t_final, dt: t_final / steps, eps })
    }

    fn bound(spec: &SystemSpec, eps: f64, dx: f64, states: &[Vector]) -> Result<f64> {
        let (lam, beta) = speed_bounds(spec, states)?;
        Ok(0.4 * (dx / lam).min(dx * dx / (2.0 * eps * beta)))
    }

    pub fn x(&self) -> Vec<f64> {
        (0..=self.j).map(|i| i as f64 * self.dx).collect()
    }
}

/// Boundary datum of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryDatum {
    /// Full Dirichlet state (invertible viscosity).
    State(Vector),
    /// `ß(u(t, 0)) = g` (singular viscosity).
    Reduced(Vector),
}

/// Snapshots of a simulation on the grid nodes `x_i = i dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub grid: SimGrid,
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<Vector>>,
}

impl SimResult {
    pub fn final_state(&self) -> &[Vector] {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    /// `int |u(t_final) - other(t_final)| dx` summed over components.
    pub fn l1_distance(&self, other: &SimResult) -> f64 {
        l1_between(&self.x, self.final_state(), &other.x, other.final_state())
    }
}

/// L1 distance of two sampled profiles, interpolating the second onto the
/// nodes of the first (restricted to the common interval).
pub fn l1_between(xa: &[f64], ua: &[Vector], xb: &[f64], ub: &[Vector]) -> f64 {
    let end = xa.last().copied().unwrap_or(0.0).min(xb.last().copied().unwrap_or(0.0));
    let mut sum = 0.0;
    for i in 0..xa.len().saturating_sub(1) {
        if xa[i + 1] > end {
            break;
        }
        let h = xa[i + 1] - xa[i];
        let d0 = (&ua[i] - interp(xb, ub, xa[i])).abs().sum();
        let d1 = (&ua[i + 1] - interp(xb, ub, xa[i + 1])).abs().sum();
        sum += 0.5 * h * (d0 + d1);
    }
    sum
}

fn interp(x: &[f64], u: &[Vector], xi: f64) -> Vector {
    let n = x.len();
    if xi <= x[0] {
        return u[0].clone();
    }
    if xi >= x[n - 1] {
        return u[n - 1].clone();
    }
    let k = x.partition_point(|v| *v <= xi).clamp(1, n - 1);
    let w = (xi - x[k - 1]) / (x[k] - x[k - 1]);
    &u[k - 1] * (1.0 - w) + &u[k] * w
}

/// Spatial discretization.
struct Scheme<'a> {
    spec: &'a SystemSpec,
    eps: f64,
    dx: f64,
    conservative: bool,
    /// Local Lax-Friedrichs dissipation, used when the viscosity is singular.
    llf: bool,
    bmap: Option<BoundaryMap>,
    datum: BoundaryDatum,
}

impl Scheme<'_> {
    fn apply_boundary(&self, u: &mut [Vector]) {
        let n = u.len();
        u[n - 1] = u[n - 2].clone();
        match (&self.datum, &self.bmap) {
            (BoundaryDatum::State(s), _) => u[0] = s.clone(),
            (BoundaryDatum::Reduced(g), Some(b)) => u[0] = b.compose(g, &u[1]),
            (BoundaryDatum::Reduced(_), None) => {}
        }
    }

    /// Semi-discrete right-hand side written into `out` (boundary rows zero).
    fn rhs(&self, u: &[Vector], out: &mut [Vector]) -> Result<()> {
        let m = u.len();
        let nn = u[0].len();
        let fluxes: Vec<Vector> = if self.conservative {
            u.iter().map(|v| self.spec.flux(v).expect("conservative")).collect()
        } else {
            Vec::new()
        };
        let speeds: Vec<f64> = if self.llf {
            u.iter()
                .map(|v| ea_eigen(self.spec, v).map(|(vals, _)| vals.iter().fold(0.0f64, |a, l| a.max(l.abs()))))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let inv2dx = 0.5 / self.dx;
        let invdx2 = 1.0 / (self.dx * self.dx);
        let mut uxx = Vector::zeros(nn);
        let mut conv = Vector::zeros(nn);
        out[0].fill(0.0);
        out[m - 1].fill(0.0);
        for i in 1..m - 1 {
            for c in 0..nn {
                uxx[c] = (u[i + 1][c] - 2.0 * u[i][c] + u[i - 1][c]) * invdx2;
            }
            if self.conservative {
                for c in 0..nn {
                    conv[c] = (fluxes[i + 1][c] - fluxes[i - 1][c]) * inv2dx;
                }
            } else {
                let ux = (&u[i + 1] - &u[i - 1]) * inv2dx;
                conv.copy_from(&(self.spec.a(&u[i], &(&ux * self.eps)) * &ux));
            }
            let o = &mut out[i];
            o.gemv(self.eps, &self.spec.b(&u[i]), &uxx, 0.0);
            if self.llf {
                let ar = 0.5 / self.dx * speeds[i].max(speeds[i + 1]);
                let al = 0.5 / self.dx * speeds[i].max(speeds[i - 1]);
                for c in 0..nn {
                    o[c] += (u[i + 1][c] - u[i][c]) * ar - (u[i][c] - u[i - 1][c]) * al;
                }
            }
            *o -= &conv;
            if !self.conservative {
                let solved = self.spec.e(&u[i]).lu().solve(o).ok_or_else(|| Error::Internal("E is singular".into()))?;
                o.copy_from(&solved);
            }
        }
        Ok(())
    }
}

/// Options of [`simulate_ibvp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Number of stored snapshots after the initial one.
    pub snapshots: usize,
    /// Use the time step stored in the grid even if it violates the bound.
    pub check_cfl: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { snapshots: 10, check_cfl: true }
    }
}

/// Method of lines with Heun's method (RK2) for
/// `E u_t + A(u, eps u_x) u_x = eps B u_xx` on `[0, L]`.
///
/// Conservative systems with `E = I` use the centered flux difference.
/// Right boundary: zeroth-order outflow extrapolation.
pub fn simulate_ibvp<F>(
    spec: &SystemSpec,
    grid: &SimGrid,
    u0_profile: F,
    datum: &BoundaryDatum,
    opts: &SimOptions,
) -> Result<SimResult>
where
    F: Fn(f64) -> Vector,
{
    let x = grid.x();
    let mut u: Vec<Vector> = x.iter().map(|&xi| u0_profile(xi)).collect();
    if u.iter().any(|v| v.len() != spec.n) {
        return Err(Error::DatumDimension { expected: spec.n, found: u[0].len() });
    }
    let bmap = match datum {
        BoundaryDatum::State(s) => {
            if s.len() != spec.n {
                return Err(Error::DatumDimension { expected: spec.n, found: s.len() });
            }
            None
        }
        BoundaryDatum::Reduced(g) => {
            let b = build_boundary_map(spec, &u[u.len() - 1])?;
            if g.len() != b.dim() {
                return Err(Error::DatumDimension { expected: b.dim(), found: g.len() });
            }
            Some(b)
        }
    };
    let mut states: Vec<Vector> = vec![u[0].clone(), u[u.len() - 1].clone()];
    if let BoundaryDatum::State(s) = datum {
        states.push(s.clone());
    }
    if opts.check_cfl {
        let bound = SimGrid::bound(spec, grid.eps, grid.dx, &states)?;
        if grid.dt > bound * (1.0 + 1e-9) {
            return Err(Error::Cfl { dt: grid.dt, bound });
        }
    }
    let identity_e = (spec.e(&u[0]) - crate::linalg::Mat::identity(spec.n, spec.n)).amax() == 0.0;
    let scheme = Scheme {
        spec,
        eps: grid.eps,
        dx: grid.dx,
        conservative: spec.is_conservative() && identity_e,
        llf: spec.is_singular(),
        bmap,
        datum: datum.clone(),
    };
    scheme.apply_boundary(&mut u);
    let steps = (grid.t_final / grid.dt).round().max(1.0) as usize;
    let every = (steps / opts.snapshots.max(1)).max(1);
    let mut times = vec![0.0];
    let mut snaps = vec![u.clone()];
    let mut k1 = vec![Vector::zeros(spec.n); u.len()];
    let mut k2 = k1.clone();
    let mut u1 = u.clone();
    for step in 1..=steps {
        scheme.rhs(&u, &mut k1)?;
        for i in 0..u.len() {
            u1[i].copy_from(&u[i]);
            u1[i].axpy(grid.dt, &k1[i], 1.0);
        }
        scheme.apply_boundary(&mut u1);
        scheme.rhs(&u1, &mut k2)?;
        for i in 0..u.len() {
            u[i].axpy(0.5 * grid.dt, &k1[i], 1.0);
            u[i].axpy(0.5 * grid.dt, &k2[i], 1.0);
        }
        scheme.apply_boundary(&mut u);
        let t = step as f64 * grid.dt;
        if u.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::BlowUp(t));
        }
        if step % every == 0 || step == steps {
            if (t - times.last().copied().unwrap_or(-1.0)).abs() > 0.0 {
                times.push(t);
                snaps.push(u.clone());
            }
        }
    }
    Ok(SimResult { grid: *grid, x, times, snapshots: snaps })
}

/// Riemann initial data `u(0, x) = u0` with the given boundary datum.
pub fn simulate_boundary_riemann(spec: &SystemSpec, eps: f64, l: f64, j: usize, t_final: f64, u0: &Vector, datum: &BoundaryDatum) -> Result<SimResult> {
    let mut states = vec![u0.clone()];
    if let BoundaryDatum::State(s) = datum {
        states.push(s.clone());
    }
    let grid = SimGrid::new(spec, eps, l, j, t_final, &states)?;
    let u0c = u0.clone();
    simulate_ibvp(spec, &grid, move |_| u0c.clone(), datum, &SimOptions::default())
}

/// Mean of `u` over `x in [K eps, 2 K eps]` at the final time.
pub fn estimate_trace(samples: &SimResult, eps: f64, k: f64) -> Result<Vector> {
    let (a, b) = (k * eps, 2.0 * k * eps);
    let u = samples.final_state();
    let inside: Vec<&Vector> = samples.x.iter().zip(u).filter(|(x, _)| **x >= a && **x <= b).map(|(_, v)| v).collect();
    if inside.is_empty() {
        return Err(Error::InvalidInput(format!("trace window [{a}, {b}] holds no grid node")));
    }
    let n = inside[0].len();
    let mut mean = Vector::zeros(n);
    for v in &inside {
        mean += *v;
    }
    mean /= inside.len() as f64;
    let var = inside.iter().map(|v| max_abs(&(*v - &mean))).fold(0.0f64, f64::max);
    if var > 0.05 * (1.0 + max_abs(&mean)) {
        return Err(Error::WindowCollision(var));
    }
    Ok(mean)
}

/// First `x > x_min` where component `c` crosses `level` at the final time.
pub fn crossing_position(samples: &SimResult, c: usize, level: f64, x_min: f64) -> Option<f64> {
    let u = samples.final_state();
    let x = &samples.x;
    for i in 0..x.len() - 1 {
        if x[i] < x_min {
            continue;
        }
        let (a, b) = (u[i][c] - level, u[i + 1][c] - level);
        if a == 0.0 {
            return Some(x[i]);
        }
        if a * b < 0.0 {
            return Some(x[i] + (x[i + 1] - x[i]) * a / (a - b));
        }
    }
    None
}

/// The three regularized examples violating block linear degeneracy or the
/// constant-rank assumption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CounterExample {
    /// `u_1' = (nu - u_1) / u_1`.
    Kernel,
    /// `u_1' = (u_1 - nu)(u_1 + nu - 2) / (2 u_1)`.
    Travelling,
    /// `u_1' = -sqrt(nu u_1^2 + 2 gamma/(gamma+1) u_1^{gamma+1}) / (nu + gamma u_1^{gamma-1})`.
    Rank { gamma: f64 },
}

impl CounterExample {
    pub fn name(&self) -> &'static str {
        match self {
            CounterExample::Kernel => "ex_kernel",
            CounterExample::Travelling => "ex_travelling",
            CounterExample::Rank { .. } => "ex_rank",
        }
    }

    pub fn from_name(name: &str, gamma: f64) -> Result<Self> {
        match name {
            "ex_kernel" => Ok(CounterExample::Kernel),
            "ex_travelling" => Ok(CounterExample::Travelling),
            "ex_rank" => Ok(CounterExample::Rank { gamma }),
            other => Err(Error::UnknownSystem(other.into())),
        }
    }

    fn rhs(&self, nu: f64, u: f64) -> f64 {
        match *self {
            CounterExample::Kernel => (nu - u) / u,
            CounterExample::Travelling => (u - nu) * (u + nu - 2.0) / (2.0 * u),
            CounterExample::Rank { gamma } => {
                let up = u.max(0.0);
                let num = (nu * up * up + 2.0 * gamma / (gamma + 1.0) * up.powf(gamma + 1.0)).sqrt();
                -num / (nu + gamma * up.powf(gamma - 1.0))
            }
        }
    }

    /// Where the `nu -> 0` limit vanishes.
    pub fn limit_kink(&self, u10: f64) -> f64 {
        match *self {
            CounterExample::Kernel => u10,
            CounterExample::Travelling => 2.0 * (2.0 / (2.0 - u10)).ln(),
            CounterExample::Rank { gamma } => {
                (2.0 * gamma * (gamma + 1.0) / (gamma - 1.0).powi(2) * u10.powf(gamma - 1.0)).sqrt()
            }
        }
    }

    /// The `nu -> 0` limit profile.
    pub fn limit(&self, u10: f64, x: f64) -> f64 {
        let x0 = self.limit_kink(u10);
        if x >= x0 {
            return 0.0;
        }
        match *self {
            CounterExample::Kernel => u10 - x,
            CounterExample::Travelling => 2.0 + (u10 - 2.0) * (x / 2.0).exp(),
            CounterExample::Rank { gamma } => {
                ((gamma - 1.0).powi(2) / (2.0 * gamma * (gamma + 1.0)) * (x - x0).powi(2)).powf(1.0 / (gamma - 1.0))
            }
        }
    }
}

/// One member of a regularized family and its comparison with the limit.
#[derive(Debug, Clone, PartialEq)]
pub struct NuFamily {
    pub example: CounterExample,
    pub nu: f64,
    pub u10: f64,
    pub x: Vec<f64>,
    pub solution: Vec<f64>,
    pub closed_form_limit: Vec<f64>,
    /// `max |u_1^nu - u_1|` on the grid.
    pub sup_error: f64,
    /// First grid point where `u_1 < 1e-3 u10`.
    pub kink: Option<f64>,
}

impl NuFamily {
    /// Centered second difference at the grid node nearest to `x`.
    pub fn second_difference_at(&self, x: f64) -> f64 {
        let h = self.x[1] - self.x[0];
        let i = ((x / h).round() as usize).clamp(1, self.x.len() - 2);
        (self.solution[i + 1] - 2.0 * self.solution[i] + self.solution[i - 1]) / (h * h)
    }
}

/// Grid used by [`counterexample_family`]: `nodes` points on `[0, 2 x0]`.
pub fn counterexample_family(example: CounterExample, nu: f64, u10: f64) -> Result<NuFamily> {
    counterexample_family_on(example, nu, u10, 4001)
}

pub fn counterexample_family_on(example: CounterExample, nu: f64, u10: f64, nodes: usize) -> Result<NuFamily> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParam { name: "nu".into(), reason: "must be positive".into() });
    }
    if !(u10 > nu) || (matches!(example, CounterExample::Travelling) && u10 >= 2.0 - nu) {
        return Err(Error::InvalidParam { name: "u10".into(), reason: "outside the admissible range".into() });
    }
    if let CounterExample::Rank { gamma } = example {
        if gamma <= 1.0 {
            return Err(Error::InvalidParam { name: "gamma".into(), reason: "must exceed 1".into() });
        }
    }
    let length = 2.0 * example.limit_kink(u10);
    let x: Vec<f64> = (0..nodes).map(|i| length * i as f64 / (nodes - 1) as f64).collect();
    // integrated in w = ln u_1, which keeps u_1 positive through the fast decay
    let f = |_x: f64, y: &Vector| {
        let u = y[0].exp();
        Vector::from_element(1, example.rhs(nu, u) / u)
    };
    let stop = |_x: f64, y: &Vector| !y[0].is_finite() || y[0] < -700.0;
    let tr = integrate(&f, 0.0, length, Vector::from_element(1, u10.ln()), 1e-11, 1e-12, &stop)?;
    let solution: Vec<f64> = x
        .iter()
        .map(|&xi| if xi <= *tr.x.last().unwrap_or(&0.0) { tr.at(xi)[0].exp() } else { 0.0 })
        .collect();
    let closed_form_limit: Vec<f64> = x.iter().map(|&xi| example.limit(u10, xi)).collect();
    let sup_error = solution.iter().zip(&closed_form_limit).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let kink = x.iter().zip(&solution).find(|(_, u)| **u < 1e-3 * u10).map(|(x, _)| *x);
    Ok(NuFamily { example, nu, u10, x, solution, closed_form_limit, sup_error, kink })
}
