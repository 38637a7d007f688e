//! Built-in systems. Every entry accepts the base-state components `u1..uN`
//! and the neighborhood radius `delta` besides its own parameters.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::linalg::{mat_from_rows, Mat, Vector};
use crate::system_model::SystemSpec;
use crate::{Error, Result};

pub const CATALOG: &[&str] = &[
    "burgers",
    "cubic",
    "p_system",
    "ex_kernel",
    "ex_travelling",
    "ex_rank",
    "linear_const",
    "singular2x2",
    "singular4x4",
    "char2x2",
];

struct Params<'a> {
    map: &'a BTreeMap<String, f64>,
    used: Vec<String>,
}

impl<'a> Params<'a> {
    fn get(&mut self, key: &str, default: f64) -> Result<f64> {
        self.used.push(key.to_string());
        let v = self.map.get(key).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::InvalidParam { name: key.into(), reason: "not finite".into() });
        }
        Ok(v)
    }

    fn base(&mut self, defaults: &[f64]) -> Result<Vector> {
        let mut u = Vector::zeros(defaults.len());
        for (i, d) in defaults.iter().enumerate() {
            u[i] = self.get(&format!("u{}", i + 1), *d)?;
        }
        Ok(u)
    }

    fn finish(self) -> Result<()> {
        for k in self.map.keys() {
            if !self.used.iter().any(|u| u == k) {
                return Err(Error::InvalidParam { name: k.clone(), reason: "unknown parameter".into() });
            }
        }
        Ok(())
    }
}

type MatFnPair = (crate::system_model::MatFn, crate::system_model::MatFn);

fn scalar(e: f64, b: f64) -> MatFnPair {
    (Arc::new(move |_| Mat::from_element(1, 1, e)), Arc::new(move |_| Mat::from_element(1, 1, b)))
}

/// Builds a catalog system by name.
pub fn make_catalog_system(name: &str, params: &BTreeMap<String, f64>) -> Result<SystemSpec> {
    let mut p = Params { map: params, used: Vec::new() };
    let spec = match name {
        "burgers" => {
            let base = p.base(&[1.0])?;
            let delta = p.get("delta", 4.0)?;
            let (e, b) = scalar(1.0, 1.0);
            SystemSpec::new(name, 1, 1, e, Arc::new(|u, _| Mat::from_element(1, 1, u[0])), b, base, delta)?
                .with_flux(Arc::new(|u| Vector::from_element(1, 0.5 * u[0] * u[0])))
        }
        "cubic" => {
            let base = p.base(&[0.0])?;
            let delta = p.get("delta", 4.0)?;
            let (e, b) = scalar(1.0, 1.0);
            SystemSpec::new(name, 1, 1, e, Arc::new(|u, _| Mat::from_element(1, 1, 3.0 * u[0] * u[0] + 1.0)), b, base, delta)?
                .with_flux(Arc::new(|u| Vector::from_element(1, u[0].powi(3) + u[0])))
        }
        "p_system" => {
            let gamma = p.get("gamma", 1.4)?;
            if gamma <= 0.0 {
                return Err(Error::InvalidParam { name: "gamma".into(), reason: "adiabatic exponent must be positive".into() });
            }
            let base = p.base(&[1.0, 0.0])?;
            let delta = p.get("delta", 0.2)?;
            if base[0] - delta <= 0.0 {
                return Err(Error::InvalidParam { name: "u1".into(), reason: "specific volume must stay positive on the delta-ball".into() });
            }
            let dp = move |v: f64| -gamma * v.powf(-gamma - 1.0);
            SystemSpec::new(
                name,
                2,
                2,
                Arc::new(move |u| Mat::from_diagonal(&Vector::from_vec(vec![-dp(u[0]), 1.0]))),
                Arc::new(move |u, _| mat_from_rows(&[&[0.0, dp(u[0])], &[dp(u[0]), 0.0]])),
                Arc::new(move |u| Mat::from_diagonal(&Vector::from_vec(vec![-dp(u[0]), 1.0]))),
                base,
                delta,
            )?
            .with_flux(Arc::new(move |u| Vector::from_vec(vec![-u[1], u[0].powf(-gamma)])))
        }
        "ex_kernel" => {
            let base = p.base(&[0.5, 0.0])?;
            let delta = p.get("delta", 0.2)?;
            SystemSpec::new(
                name,
                2,
                1,
                Arc::new(|_| Mat::identity(2, 2)),
                Arc::new(|u, _| mat_from_rows(&[&[u[0], 1.0], &[1.0, 0.0]])),
                Arc::new(|_| Mat::from_diagonal(&Vector::from_vec(vec![0.0, 1.0]))),
                base,
                delta,
            )?
            .with_flux(Arc::new(|u| Vector::from_vec(vec![0.5 * u[0] * u[0] + u[1], u[0]])))
        }
        "ex_travelling" => {
            let base = p.base(&[0.5, 0.0, 0.0])?;
            let delta = p.get("delta", 0.2)?;
            SystemSpec::new(
                name,
                3,
                2,
                Arc::new(|_| Mat::identity(3, 3)),
                Arc::new(|u, _| mat_from_rows(&[&[u[0], 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 0.0]])),
                Arc::new(|_| Mat::from_diagonal(&Vector::from_vec(vec![0.0, 1.0, 1.0]))),
                base,
                delta,
            )?
            .with_flux(Arc::new(|u| Vector::from_vec(vec![0.5 * u[0] * u[0] + u[1], u[0] + u[1], 0.0])))
        }
        "ex_rank" => {
            let gamma = p.get("gamma", 5.0)?;
            if gamma <= 1.0 {
                return Err(Error::InvalidParam { name: "gamma".into(), reason: "must exceed 1".into() });
            }
            let base = p.base(&[1.0, 0.0])?;
            let delta = p.get("delta", 0.2)?;
            let b11 = move |u1: f64| gamma * u1.max(0.0).powf(gamma - 1.0);
            // (B(u) u_x)_x = B u_xx + (dB/du1 u1_x) u_x moves into A(u, u_x)
            let db11 = move |u1: f64| gamma * (gamma - 1.0) * u1.max(0.0).powf(gamma - 2.0);
            SystemSpec::new(
                name,
                2,
                2,
                Arc::new(|_| Mat::identity(2, 2)),
                Arc::new(move |u, px| mat_from_rows(&[&[-db11(u[0]) * px[0], 1.0], &[1.0, 0.0]])),
                Arc::new(move |u| Mat::from_diagonal(&Vector::from_vec(vec![b11(u[0]), 1.0]))),
                base,
                delta,
            )?
            .with_flux(Arc::new(|u| Vector::from_vec(vec![u[1], u[0]])))
        }
        "linear_const" => {
            let a = mat_from_rows(&[
                &[p.get("a11", -1.0)?, p.get("a12", 0.5)?],
                &[p.get("a12", 0.5)?, p.get("a22", 1.0)?],
            ]);
            let b = mat_from_rows(&[
                &[p.get("b11", 2.0)?, p.get("b12", 0.3)?],
                &[p.get("b12", 0.3)?, p.get("b22", 1.0)?],
            ]);
            let e = mat_from_rows(&[
                &[p.get("e11", 1.0)?, p.get("e12", 0.0)?],
                &[p.get("e12", 0.0)?, p.get("e22", 1.0)?],
            ]);
            let base = p.base(&[0.0, 0.0])?;
            let delta = p.get("delta", 0.2)?;
            let ea = &e.clone().try_inverse().ok_or_else(|| Error::InvalidParam { name: "e11".into(), reason: "E singular".into() })? * &a;
            SystemSpec::constant(name, e, a, b, 2)?
                .with_base(base)
                .with_delta(delta)
                .with_flux(Arc::new(move |u| &ea * u))
        }
        "singular2x2" => {
            let a = p.get("a", 1.0)?;
            let base = p.base(&[0.0, 0.0])?;
            let delta = p.get("delta", 0.2)?;
            SystemSpec::new(
                name,
                2,
                1,
                Arc::new(|_| Mat::identity(2, 2)),
                Arc::new(move |u, _| mat_from_rows(&[&[a, 1.0], &[1.0, u[1]]])),
                Arc::new(|_| Mat::from_diagonal(&Vector::from_vec(vec![0.0, 1.0]))),
                base,
                delta,
            )?
            .with_flux(Arc::new(move |u| Vector::from_vec(vec![a * u[0] + u[1], u[0] + 0.5 * u[1] * u[1]])))
        }
        "singular4x4" => {
            let base = p.base(&[0.0, 0.0, 0.0, 0.0])?;
            let delta = p.get("delta", 0.1)?;
            let amat = |u: &Vector| {
                mat_from_rows(&[
                    &[-1.0, 0.0, 1.0, 0.2],
                    &[0.0, 2.0, 0.3, 1.0],
                    &[1.0, 0.3, 0.5 + u[2], 0.1],
                    &[0.2, 1.0, 0.1, -1.0 + u[3]],
                ])
            };
            SystemSpec::new(
                name,
                4,
                2,
                Arc::new(|_| Mat::identity(4, 4)),
                Arc::new(move |u, _| amat(u)),
                Arc::new(|_| Mat::from_diagonal(&Vector::from_vec(vec![0.0, 0.0, 1.0, 1.0]))),
                base,
                delta,
            )?
            .with_flux(Arc::new(|u| {
                Vector::from_vec(vec![
                    -u[0] + u[2] + 0.2 * u[3],
                    2.0 * u[1] + 0.3 * u[2] + u[3],
                    u[0] + 0.3 * u[1] + 0.5 * u[2] + 0.5 * u[2] * u[2] + 0.1 * u[3],
                    0.2 * u[0] + u[1] + 0.1 * u[2] - u[3] + 0.5 * u[3] * u[3],
                ])
            }))
        }
        "char2x2" => {
            let eps = p.get("coupling", 0.5)?;
            let base = p.base(&[0.0, 0.0])?;
            let delta = p.get("delta", 0.2)?;
            SystemSpec::new(
                name,
                2,
                2,
                Arc::new(|_| Mat::identity(2, 2)),
                Arc::new(move |u, _| mat_from_rows(&[&[-2.0 + eps * u[1], eps * u[0]], &[eps * u[0], u[1]]])),
                Arc::new(|_| mat_from_rows(&[&[1.0, 0.2], &[0.2, 1.0]])),
                base,
                delta,
            )?
            .with_flux(Arc::new(move |u| {
                Vector::from_vec(vec![-2.0 * u[0] + eps * u[0] * u[1], 0.5 * u[1] * u[1] + 0.5 * eps * u[0] * u[0]])
            }))
        }
        other => return Err(Error::UnknownSystem(other.to_string())),
    };
    p.finish()?;
    Ok(spec)
}
