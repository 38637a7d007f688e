//! Boundary Riemann problems: regime detection, the solver maps `phi`,
//! composition with the boundary-condition map, Newton inversion and
//! assembly of the limit solution.

use crate::boundary_layers::{combined_f, stable_manifold_with, LayerConfig};
use crate::linalg::{max_abs, Vector};
use crate::newton::{newton, NewtonConfig};
use crate::spectral::{eig_pencil, Which};
use crate::system_model::{block_counts, build_boundary_map, BoundaryMap, SystemSpec};
use crate::wave_curves::{
    compose_curves, make_closure_at, wave_pattern, ClosureModel, CurveConfig, CurveState, RiemannPattern, WavePiece,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Viscosity {
    Invertible,
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    NonCharacteristic,
    /// Family `family` (0-based) has a near-zero characteristic speed.
    Characteristic { family: usize },
}

/// Which of the four solver maps applies, with its parameter bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverRegime {
    pub viscosity: Viscosity,
    pub boundary: BoundaryKind,
    /// `n` (non-characteristic) or `k - 1` (characteristic): families below the boundary.
    pub negative: usize,
    pub n11: usize,
    pub q: usize,
    pub parameter_dim: usize,
    /// Half-width `M delta` of the near-zero band.
    pub band: f64,
}

impl SolverRegime {
    pub fn is_characteristic(&self) -> bool {
        matches!(self.boundary, BoundaryKind::Characteristic { .. })
    }

    /// Number of boundary-layer parameters (stable manifold or `V_s(0)`).
    pub fn layer_dim(&self) -> usize {
        self.negative - self.n11 - self.q
    }

    /// Families carried by entering admissible curves (excluding the characteristic one).
    pub fn entering_families(&self, n: usize) -> std::ops::Range<usize> {
        match self.boundary {
            BoundaryKind::NonCharacteristic => self.negative..n,
            BoundaryKind::Characteristic { family } => family + 1..n,
        }
    }
}

/// Requested regime selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegimeChoice {
    #[default]
    Auto,
    ForceNonCharacteristic,
    ForceCharacteristic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConfig {
    /// `M` in the near-zero band `|lambda| <= M delta`.
    pub margin: f64,
    pub regime: RegimeChoice,
    pub curve: CurveConfig,
    pub layer: LayerConfig,
    pub newton: NewtonConfig,
    /// Newton tolerance `tol_rel * (1 + |u0|)`.
    pub tol_rel: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            margin: 5.0,
            regime: RegimeChoice::Auto,
            curve: CurveConfig::default(),
            layer: LayerConfig::default(),
            newton: NewtonConfig { max_iter: 50, max_halvings: 30, fd_step: 1e-7 },
            tol_rel: 1e-9,
        }
    }
}

pub fn detect_regime(spec: &SystemSpec, u0: &Vector) -> Result<SolverRegime> {
    detect_regime_with(spec, u0, 5.0, RegimeChoice::Auto)
}

pub fn detect_regime_with(spec: &SystemSpec, u0: &Vector, margin: f64, choice: RegimeChoice) -> Result<SolverRegime> {
    if u0.len() != spec.n {
        return Err(Error::DatumDimension { expected: spec.n, found: u0.len() });
    }
    let band = margin * spec.delta;
    let ea = eig_pencil(spec, u0, Which::EA)?;
    let near = ea.near_zero_indices(band);
    let characteristic = match choice {
        RegimeChoice::Auto => {
            if near.len() > 1 {
                return Err(Error::TwoNearZero(near.iter().map(|&i| ea.values[i]).collect()));
            }
            near.len() == 1
        }
        RegimeChoice::ForceCharacteristic => true,
        RegimeChoice::ForceNonCharacteristic => false,
    };
    let (n11, q) = if spec.is_singular() { block_counts(spec, u0, 0.0)? } else { (0, 0) };
    let (boundary, negative) = if characteristic {
        let family = (0..ea.values.len())
            .min_by(|&a, &b| ea.values[a].abs().total_cmp(&ea.values[b].abs()))
            .ok_or_else(|| Error::Internal("empty spectrum".into()))?;
        (BoundaryKind::Characteristic { family }, family)
    } else {
        if ea.values.iter().any(|l| l.abs() <= ea.zero_tol) {
            return Err(Error::Hypothesis("a characteristic speed vanishes; the boundary is characteristic".into()));
        }
        (BoundaryKind::NonCharacteristic, ea.n)
    };
    if negative < n11 + q {
        return Err(Error::DimensionMismatch { generalized: negative, formula: n11 + q });
    }
    let viscosity = if spec.is_singular() { Viscosity::Singular } else { Viscosity::Invertible };
    Ok(SolverRegime { viscosity, boundary, negative, n11, q, parameter_dim: spec.n - n11 - q, band })
}

/// Everything produced by one evaluation of `phi`.
#[derive(Debug, Clone)]
pub struct PhiEval {
    /// Boundary value `u(0)` of the viscous layer.
    pub value: Vector,
    /// State at `x = 0+` in the limit.
    pub trace: Vector,
    /// Entering admissible curves in family order.
    pub curves: Vec<CurveState>,
    /// The characteristic curve, if any.
    pub char_curve: Option<CurveState>,
}

/// Precomputed closures and boundary map for repeated evaluation of `phi`.
#[derive(Clone)]
pub struct BoundarySolver {
    pub spec: SystemSpec,
    pub u0: Vector,
    pub regime: SolverRegime,
    pub cfg: BoundaryConfig,
    closures: Vec<ClosureModel>,
    char_closure: Option<ClosureModel>,
    bmap: Option<BoundaryMap>,
}

impl BoundarySolver {
    pub fn new(spec: &SystemSpec, u0: &Vector, cfg: &BoundaryConfig) -> Result<Self> {
        let regime = detect_regime_with(spec, u0, cfg.margin, cfg.regime)?;
        Self::with_regime(spec, u0, regime, cfg)
    }

    pub fn with_regime(spec: &SystemSpec, u0: &Vector, regime: SolverRegime, cfg: &BoundaryConfig) -> Result<Self> {
        let closures = regime
            .entering_families(spec.n)
            .map(|i| make_closure_at(spec, i, u0))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at("closures"))?;
        let char_closure = match regime.boundary {
            BoundaryKind::Characteristic { family } => Some(make_closure_at(spec, family, u0).map_err(|e| e.at("closures"))?),
            BoundaryKind::NonCharacteristic => None,
        };
        let bmap = if spec.is_singular() { Some(build_boundary_map(spec, u0)?) } else { None };
        if let Some(b) = &bmap {
            if b.dim() != regime.parameter_dim {
                return Err(Error::DimensionMismatch { generalized: b.dim(), formula: regime.parameter_dim });
            }
        }
        Ok(Self { spec: spec.clone(), u0: u0.clone(), regime, cfg: *cfg, closures, char_closure, bmap })
    }

    pub fn boundary_map(&self) -> Option<&BoundaryMap> {
        self.bmap.as_ref()
    }

    /// Dimension of the boundary datum the solver inverts for.
    pub fn datum_dim(&self) -> usize {
        self.bmap.as_ref().map_or(self.spec.n, |b| b.dim())
    }

    pub fn eval(&self, s: &[f64]) -> Result<PhiEval> {
        let reg = &self.regime;
        if s.len() != reg.parameter_dim {
            return Err(Error::Cardinality { expected: reg.parameter_dim, found: s.len() });
        }
        let d = reg.layer_dim();
        let nc = self.closures.len();
        let (layer_s, rest) = s.split_at(d);
        let (curve_s, _) = rest.split_at(nc);
        let (curves, u_mid) = compose_curves(&self.spec, &self.closures, curve_s, &self.u0, &self.cfg.curve)
            .map_err(|e| e.at("entering curves"))?;
        match reg.boundary {
            BoundaryKind::NonCharacteristic => {
                let man = stable_manifold_with(&self.spec, &u_mid, &self.cfg.layer).map_err(|e| e.at("stable manifold"))?;
                if man.dim() != d {
                    return Err(Error::DimensionMismatch { generalized: man.dim(), formula: d });
                }
                let value = man.boundary_value(layer_s).map_err(|e| e.at("boundary layer"))?;
                Ok(PhiEval { value, trace: u_mid, curves, char_curve: None })
            }
            BoundaryKind::Characteristic { .. } => {
                let closure = self.char_closure.as_ref().ok_or_else(|| Error::Internal("missing closure".into()))?;
                let mut fs_args = layer_s.to_vec();
                fs_args.push(s[s.len() - 1]);
                let f = combined_f(&self.spec, closure, &u_mid, &fs_args, reg.band, &self.cfg.curve, &self.cfg.layer)?;
                let trace = match f.curve.cut {
                    Some(c) => f.curve.u[c.s_bar_index].clone(),
                    None => f.curve.endpoint().clone(),
                };
                Ok(PhiEval { value: f.value, trace, curves, char_curve: Some(f.curve) })
            }
        }
    }

    /// `phi(u0, s)`, or `ß o phi` for singular viscosity.
    pub fn residual_map(&self, s: &[f64]) -> Result<Vector> {
        let v = self.eval(s)?.value;
        Ok(match &self.bmap {
            Some(b) => b.apply(&v),
            None => v,
        })
    }

    /// Solves `phi(u0, s) = datum` (or `ß o phi = datum`) by damped Newton from `s = 0`.
    pub fn solve(&self, datum: &Vector) -> Result<BoundarySolution> {
        let g = self.normalize_datum(datum)?;
        let g0 = self.residual_map(&vec![0.0; self.regime.parameter_dim])?;
        let dist = (&g - &g0).norm();
        if dist > self.spec.delta * (1.0 + 1e-12) {
            return Err(Error::OutsideBall { state: g.iter().copied().collect(), distance: dist, delta: self.spec.delta });
        }
        let f = |s: &Vector| -> Result<Vector> { Ok(self.residual_map(s.as_slice())? - &g) };
        let tol = self.cfg.tol_rel * (1.0 + max_abs(&self.u0));
        let sol = newton(&f, Vector::zeros(self.regime.parameter_dim), tol, &self.cfg.newton, "boundary Newton")?;
        let s: Vec<f64> = sol.x.iter().copied().collect();
        let ev = self.eval(&s)?;
        let pattern = self.assemble(&ev);
        Ok(BoundarySolution {
            s,
            trace: ev.trace.clone(),
            boundary_value: ev.value,
            pattern,
            residual: sol.residual,
            newton_iters: sol.iterations,
            regime: self.regime,
        })
    }

    fn normalize_datum(&self, datum: &Vector) -> Result<Vector> {
        match &self.bmap {
            Some(b) if datum.len() == b.dim() => Ok(datum.clone()),
            Some(b) if datum.len() == self.spec.n => Ok(b.apply(datum)),
            Some(b) => Err(Error::DatumDimension { expected: b.dim(), found: datum.len() }),
            None if datum.len() == self.spec.n => Ok(datum.clone()),
            None => Err(Error::DatumDimension { expected: self.spec.n, found: datum.len() }),
        }
    }

    fn assemble(&self, ev: &PhiEval) -> RiemannPattern {
        let mut pieces = Vec::new();
        let scale = 1.0 + max_abs(&ev.trace);
        if (&ev.value - &ev.trace).amax() > 1e-12 * scale {
            pieces.push(WavePiece::BoundaryLayer { u_boundary: ev.value.clone(), u_trace: ev.trace.clone() });
        }
        if let Some(c) = &ev.char_curve {
            pieces.extend(wave_pattern(c));
        }
        for c in &ev.curves {
            pieces.extend(wave_pattern(c));
        }
        let mut p = RiemannPattern::from_pieces(pieces, ev.trace.clone(), self.u0.clone());
        p.trace = ev.trace.clone();
        p
    }
}

/// `phi(u0, s)` for the given regime (without the boundary map).
pub fn phi_map(spec: &SystemSpec, regime: &SolverRegime, u0: &Vector, s: &[f64]) -> Result<Vector> {
    let solver = BoundarySolver::with_regime(spec, u0, *regime, &BoundaryConfig::default())?;
    Ok(solver.eval(s)?.value)
}

/// Solution of a boundary Riemann problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySolution {
    pub s: Vec<f64>,
    pub pattern: RiemannPattern,
    pub trace: Vector,
    /// `u(0)` of the viscous layer.
    pub boundary_value: Vector,
    pub residual: f64,
    pub newton_iters: usize,
    pub regime: SolverRegime,
}

pub fn solve_boundary_riemann(spec: &SystemSpec, u0: &Vector, datum: &Vector) -> Result<BoundarySolution> {
    solve_boundary_riemann_with(spec, u0, datum, &BoundaryConfig::default())
}

pub fn solve_boundary_riemann_with(spec: &SystemSpec, u0: &Vector, datum: &Vector, cfg: &BoundaryConfig) -> Result<BoundarySolution> {
    BoundarySolver::new(spec, u0, cfg)?.solve(datum)
}

pub fn extract_trace(solution: &BoundarySolution) -> Vector {
    solution.trace.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vec_from;
    use crate::system_model::make_catalog_system;
    use std::collections::BTreeMap;

    fn burgers(delta: f64) -> SystemSpec {
        let mut p = BTreeMap::new();
        p.insert("delta".to_string(), delta);
        make_catalog_system("burgers", &p).unwrap()
    }

    #[test]
    fn regimes() {
        let r = detect_regime(&burgers(0.05), &vec_from(&[1.0])).unwrap();
        assert_eq!(r.boundary, BoundaryKind::NonCharacteristic);
        assert_eq!(r.viscosity, Viscosity::Invertible);
        let r = detect_regime(&burgers(0.05), &vec_from(&[0.01])).unwrap();
        assert!(r.is_characteristic());
    }

    #[test]
    fn burgers_four_cases() {
        let spec = burgers(4.0);
        for (u0, ub, trace) in [(1.0, 2.0, 2.0), (-2.0, -1.0, -2.0), (-1.0, 2.0, 2.0), (-2.0, 1.0, -2.0)] {
            let sol = solve_boundary_riemann(&spec, &vec_from(&[u0]), &vec_from(&[ub])).unwrap();
            assert!((sol.trace[0] - trace).abs() < 1e-6, "({u0}, {ub}): {:?}", sol.trace);
            assert!((sol.boundary_value[0] - ub).abs() < 1e-8);
        }
    }
}
