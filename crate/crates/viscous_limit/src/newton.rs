//! Damped Newton iteration with a finite-difference Jacobian.

use crate::linalg::{max_abs, Mat, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Relative finite-difference step, scaled by `1 + |s|`.
    pub fd_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { max_iter: 50, max_halvings: 30, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vector,
    pub residual: f64,
    pub iterations: usize,
}

/// Forward-difference Jacobian of `f` at `x` (with `f(x) = fx` known).
pub fn fd_jacobian<F>(f: &F, x: &Vector, fx: &Vector, step: f64) -> Result<Mat>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let h = step * (1.0 + max_abs(x));
    let mut jac = Mat::zeros(fx.len(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp[j] += h;
        let fp = match f(&xp) {
            Ok(v) => v,
            Err(_) => {
                // one-sided step the other way when the forward point is inadmissible
                let mut xm = x.clone();
                xm[j] -= h;
                let fm = f(&xm)?;
                jac.set_column(j, &((fx - fm) / h));
                continue;
            }
        };
        jac.set_column(j, &((fp - fx) / h));
    }
    Ok(jac)
}

/// Solves `f(x) = 0` from `x0`; halves the step until the max-norm residual decreases.
pub fn newton<F>(f: &F, x0: Vector, tol: f64, cfg: &NewtonConfig, stage: &str) -> Result<NewtonResult>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut res = max_abs(&fx);
    for it in 0..cfg.max_iter {
        if res <= tol {
            return Ok(NewtonResult { x, residual: res, iterations: it });
        }
        let jac = fd_jacobian(f, &x, &fx, cfg.fd_step)?;
        let dx = jac
            .clone()
            .svd(true, true)
            .solve(&(-&fx), 1e-14)
            .map_err(|e| Error::Internal(e.to_string()))?;
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let xt = &x + &dx * lam;
            if let Ok(ft) = f(&xt) {
                let rt = max_abs(&ft);
                if rt < res {
                    x = xt;
                    fx = ft;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { stage: stage.into(), iterations: it + 1, residual: res });
        }
    }
    if res <= tol {
        return Ok(NewtonResult { x, residual: res, iterations: cfg.max_iter });
    }
    Err(Error::NoConvergence { stage: stage.into(), iterations: cfg.max_iter, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_nonlinear_system() {
        let f = |x: &Vector| -> Result<Vector> {
            Ok(Vector::from_vec(vec![x[0] * x[0] + x[1] - 2.0, x[0] - x[1] * x[1]]))
        };
        let r = newton(&f, Vector::from_vec(vec![0.5, 0.5]), 1e-12, &NewtonConfig::default(), "test").unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] - 1.0).abs() < 1e-9);
    }
}
