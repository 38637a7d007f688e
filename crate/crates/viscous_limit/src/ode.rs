//! Thin wrapper over the Dormand-Prince 5(4) integrator of `ode_solvers`.

use ode_solvers::dop_shared::OutputType;
use ode_solvers::{Dopri5, System};

use crate::linalg::Vector;
use crate::{Error, Result};

#[cfg(test)]
const RTOL: f64 = 1e-9;
#[cfg(test)]
const ATOL: f64 = 1e-12;

struct Rhs<'a, F, S> {
    f: &'a F,
    stop: &'a S,
    /// -1 when integrating backwards through the substitution `x = x0 - t`.
    dir: f64,
    x0: f64,
}

impl<F, S> System<f64, Vector> for Rhs<'_, F, S>
where
    F: Fn(f64, &Vector) -> Vector,
    S: Fn(f64, &Vector) -> bool,
{
    fn system(&self, t: f64, y: &Vector, dy: &mut Vector) {
        let x = self.x0 + self.dir * t;
        let v = (self.f)(x, y);
        dy.copy_from(&(v * self.dir));
    }

    fn solout(&mut self, t: f64, y: &Vector, _dy: &Vector) -> bool {
        (self.stop)(self.x0 + self.dir * t, y)
    }
}

/// Accepted steps of an integration, in the direction of integration.
#[derive(Debug, Clone)]
pub(crate) struct Trajectory {
    pub x: Vec<f64>,
    pub y: Vec<Vector>,
    pub dy: Vec<Vector>,
    pub stopped: bool,
}

impl Trajectory {
    /// Cubic Hermite interpolation between accepted steps.
    pub fn at(&self, x: f64) -> Vector {
        let n = self.x.len();
        if n == 1 {
            return self.y[0].clone();
        }
        let asc = self.x[n - 1] >= self.x[0];
        let key = |v: f64| if asc { v } else { -v };
        let xk = key(x);
        let mut i = match self.x.binary_search_by(|p| key(*p).partial_cmp(&xk).unwrap()) {
            Ok(i) => return self.y[i].clone(),
            Err(i) => i,
        };
        i = i.clamp(1, n - 1);
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let h = x1 - x0;
        let t = ((x - x0) / h).clamp(0.0, 1.0);
        let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
        let h10 = t.powi(3) - 2.0 * t * t + t;
        let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
        let h11 = t.powi(3) - t * t;
        &self.y[i - 1] * h00 + &self.dy[i - 1] * (h10 * h) + &self.y[i] * h01 + &self.dy[i] * (h11 * h)
    }

    #[cfg(test)]
    pub fn last(&self) -> &Vector {
        self.y.last().expect("non-empty trajectory")
    }
}

/// Integrates `y' = f(x, y)` from `x0` to `x1` (either direction).
///
/// `stop(x, y)` ends the integration early; the trajectory is then flagged.
pub(crate) fn integrate<F, S>(f: &F, x0: f64, x1: f64, y0: Vector, rtol: f64, atol: f64, stop: &S) -> Result<Trajectory>
where
    F: Fn(f64, &Vector) -> Vector,
    S: Fn(f64, &Vector) -> bool,
{
    integrate_capped(f, x0, x1, y0, rtol, atol, f64::INFINITY, stop)
}

/// [`integrate`] with steps no longer than `h_max`, so that the Hermite
/// interpolant stays accurate when it is sampled and differentiated.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_capped<F, S>(
    f: &F,
    x0: f64,
    x1: f64,
    y0: Vector,
    rtol: f64,
    atol: f64,
    h_max: f64,
    stop: &S,
) -> Result<Trajectory>
where
    F: Fn(f64, &Vector) -> Vector,
    S: Fn(f64, &Vector) -> bool,
{
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let span = (x1 - x0).abs();
    if span == 0.0 {
        let dy = f(x0, &y0);
        return Ok(Trajectory { x: vec![x0], y: vec![y0], dy: vec![dy], stopped: false });
    }
    let rhs = Rhs { f, stop, dir, x0 };
    let mut stepper = Dopri5::from_param(
        rhs,
        0.0,
        span,
        span,
        y0,
        rtol,
        atol,
        0.9,
        0.04,
        0.2,
        10.0,
        span.min(h_max),
        0.0,
        2_000_000,
        u32::MAX,
        OutputType::Sparse,
    );
    stepper
        .integrate()
        .map_err(|e| Error::Integration(e.to_string()))?;
    let (ts, ys) = stepper.results().get();
    let xs: Vec<f64> = ts.iter().map(|t| x0 + dir * t).collect();
    let dys = xs.iter().zip(ys.iter()).map(|(&x, y)| f(x, y)).collect();
    let end = *xs.last().unwrap_or(&x0);
    let stopped = (end - x1).abs() > 1e-12 * (1.0 + x1.abs());
    Ok(Trajectory { x: xs, y: ys.clone(), dy: dys, stopped })
}

#[cfg(test)]
fn never(_: f64, _: &Vector) -> bool {
    false
}
