//! Concave, convex and monotone envelopes of sampled functions.
//!
//! All envelopes are computed on the node set with a monotone-chain hull, so
//! they are exact for the sampled problem. Slopes are assigned per node from
//! the hull segment on its left (left-continuous at kinks); node 0 takes the
//! slope of the first segment.

use num_traits::Float;

use crate::{Error, Result};

/// Scalar function sampled with its derivative on `m` uniform nodes over `[0, s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction<T> {
    pub s: T,
    pub values: Vec<T>,
    pub deriv: Vec<T>,
    /// Lipschitz constant of the derivative.
    pub lip_k: T,
}

impl<T: Float> SampledFunction<T> {
    pub fn new(s: T, values: Vec<T>, deriv: Vec<T>, lip_k: T) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "sampled function needs at least 2 nodes, got {}",
                values.len()
            )));
        }
        if deriv.len() != values.len() {
            return Err(Error::InvalidInput("values and deriv lengths differ".into()));
        }
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::InvalidInput("interval length must be positive".into()));
        }
        if values.iter().chain(deriv.iter()).any(|x| x.is_nan()) || lip_k.is_nan() {
            return Err(Error::InvalidInput("NaN in samples".into()));
        }
        Ok(Self { s, values, deriv, lip_k })
    }

    /// Samples `f` and `df` on `m` nodes.
    pub fn from_fn(s: T, m: usize, f: impl Fn(T) -> T, df: impl Fn(T) -> T, lip_k: T) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!("sampled function needs at least 2 nodes, got {m}")));
        }
        let h = s / T::from(m - 1).unwrap();
        let taus: Vec<T> = (0..m).map(|j| T::from(j).unwrap() * h).collect();
        Self::new(s, taus.iter().map(|&t| f(t)).collect(), taus.iter().map(|&t| df(t)).collect(), lip_k)
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn h(&self) -> T {
        self.s / T::from(self.m() - 1).unwrap()
    }

    pub fn tau(&self, j: usize) -> T {
        T::from(j).unwrap() * self.h()
    }

    /// Grid tolerance `lip_k * h^2` used by all envelope comparisons.
    pub fn grid_tol(&self) -> T {
        self.lip_k * self.h() * self.h()
    }

    /// The restriction to the first `m1` nodes, i.e. to `[0, tau(m1 - 1)]`.
    pub fn prefix(&self, m1: usize) -> Result<Self> {
        if m1 < 2 || m1 > self.m() {
            return Err(Error::InvalidInput(format!("prefix length {m1} out of range")));
        }
        Self::new(
            self.tau(m1 - 1),
            self.values[..m1].to_vec(),
            self.deriv[..m1].to_vec(),
            self.lip_k,
        )
    }

    fn negated(&self) -> Self {
        Self {
            s: self.s,
            values: self.values.iter().map(|&x| -x).collect(),
            deriv: self.deriv.iter().map(|&x| -x).collect(),
            lip_k: self.lip_k,
        }
    }

    /// `g(t) = -f(s - t)`, the reflection used for the monotone convex envelope.
    fn reflected(&self) -> Self {
        Self {
            s: self.s,
            values: self.values.iter().rev().map(|&x| -x).collect(),
            deriv: self.deriv.iter().rev().copied().collect(),
            lip_k: self.lip_k,
        }
    }
}

/// A maximal run of nodes where the envelope strictly separates from `f`,
/// together with the enclosing contact nodes `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gap<T> {
    pub a_index: usize,
    pub b_index: usize,
    pub a: T,
    pub b: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeResult<T> {
    pub env: SampledFunction<T>,
    pub contact: Vec<bool>,
    pub gaps: Vec<Gap<T>>,
    /// Monotone cut point (monotone envelopes only).
    pub tau0: Option<T>,
    pub tau0_index: Option<usize>,
}

fn contact_tol<T: Float>(values: &[T]) -> T {
    let scale = values.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    T::from(64.0).unwrap() * T::epsilon() * (T::one() + scale)
}

fn upper_hull<T: Float>(f: &[T]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(f.len());
    for j in 0..f.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // b is dropped unless it lies strictly above the chord a -> j
            let lhs = (f[b] - f[a]) * T::from(j - a).unwrap();
            let rhs = (f[j] - f[a]) * T::from(b - a).unwrap();
            if lhs <= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    hull
}

fn gaps_from<T: Float>(env: &[T], f: &[T], h: T) -> (Vec<bool>, Vec<Gap<T>>) {
    let tol = contact_tol(f).max(contact_tol(env));
    let contact: Vec<bool> = env.iter().zip(f).map(|(&e, &x)| (e - x).abs() <= tol).collect();
    let m = f.len();
    let mut gaps = Vec::new();
    let mut j = 0;
    while j < m {
        if contact[j] {
            j += 1;
            continue;
        }
        let a = j.saturating_sub(1);
        let mut k = j;
        while k < m && !contact[k] {
            k += 1;
        }
        let b = k.min(m - 1);
        gaps.push(Gap {
            a_index: a,
            b_index: b,
            a: T::from(a).unwrap() * h,
            b: T::from(b).unwrap() * h,
        });
        j = k;
    }
    (contact, gaps)
}

fn left_slopes<T: Float>(env: &[T], h: T) -> Vec<T> {
    let m = env.len();
    let mut d = vec![T::zero(); m];
    for j in 1..m {
        d[j] = (env[j] - env[j - 1]) / h;
    }
    d[0] = d[1];
    d
}

/// Upper concave hull of the nodes.
pub fn concave_envelope<T: Float>(f: &SampledFunction<T>) -> Result<EnvelopeResult<T>> {
    let f = SampledFunction::new(f.s, f.values.clone(), f.deriv.clone(), f.lip_k)?;
    let m = f.m();
    let h = f.h();
    let hull = upper_hull(&f.values);
    let mut env = vec![T::zero(); m];
    let mut deriv = vec![T::zero(); m];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let slope = (f.values[b] - f.values[a]) / (T::from(b - a).unwrap() * h);
        env[a] = f.values[a];
        for j in a + 1..b {
            let t = T::from(j - a).unwrap() / T::from(b - a).unwrap();
            env[j] = f.values[a] + (f.values[b] - f.values[a]) * t;
        }
        env[b] = f.values[b];
        for d in deriv.iter_mut().take(b + 1).skip(a + 1) {
            *d = slope;
        }
    }
    deriv[0] = deriv[1];
    let (contact, gaps) = gaps_from(&env, &f.values, h);
    Ok(EnvelopeResult {
        env: SampledFunction { s: f.s, values: env, deriv, lip_k: f.lip_k },
        contact,
        gaps,
        tau0: None,
        tau0_index: None,
    })
}

/// Lower convex hull, `conv f = -conc(-f)`.
pub fn convex_envelope<T: Float>(f: &SampledFunction<T>) -> Result<EnvelopeResult<T>> {
    let c = concave_envelope(&f.negated())?;
    let env = c.env.negated();
    let (contact, gaps) = gaps_from(&env.values, &f.values, f.h());
    Ok(EnvelopeResult { env, contact, gaps, tau0: None, tau0_index: None })
}

/// Smallest concave non-decreasing majorant: `conc f` up to the cut point
/// `tau0`, constant afterwards.
pub fn monotone_concave_envelope<T: Float>(f: &SampledFunction<T>) -> Result<EnvelopeResult<T>> {
    let c = concave_envelope(f)?;
    let m = f.m();
    let h = f.h();
    // largest node whose incoming hull slope is >= 0
    let mut i0 = 0;
    for j in 1..m {
        if c.env.deriv[j] >= T::zero() {
            i0 = j;
        } else {
            break;
        }
    }
    let mut env = c.env.values.clone();
    let top = env[i0];
    for e in env.iter_mut().skip(i0 + 1) {
        *e = top;
    }
    let mut deriv = c.env.deriv.clone();
    for d in deriv.iter_mut().skip(i0 + 1) {
        *d = T::zero();
    }
    if i0 == 0 {
        deriv[0] = T::zero();
    }
    let (contact, gaps) = gaps_from(&env, &f.values, h);
    Ok(EnvelopeResult {
        env: SampledFunction { s: f.s, values: env, deriv, lip_k: f.lip_k },
        contact,
        gaps,
        tau0: Some(T::from(i0).unwrap() * h),
        tau0_index: Some(i0),
    })
}

/// Largest convex non-decreasing minorant, by reflection:
/// `monconv f(t) = -monconc[g](s - t)` with `g(t) = -f(s - t)`.
///
/// The envelope is constant up to `tau0` and equals `conv f` afterwards.
pub fn monotone_convex_envelope<T: Float>(f: &SampledFunction<T>) -> Result<EnvelopeResult<T>> {
    let g = monotone_concave_envelope(&f.reflected())?;
    let m = f.m();
    let h = f.h();
    let env: Vec<T> = g.env.values.iter().rev().map(|&x| -x).collect();
    let deriv = left_slopes(&env, h);
    let i0 = m - 1 - g.tau0_index.unwrap_or(0);
    let (contact, gaps) = gaps_from(&env, &f.values, h);
    Ok(EnvelopeResult {
        env: SampledFunction { s: f.s, values: env, deriv, lip_k: f.lip_k },
        contact,
        gaps,
        tau0: Some(T::from(i0).unwrap() * h),
        tau0_index: Some(i0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, m: usize) -> SampledFunction<f64> {
        SampledFunction::from_fn(1.0, m, f, df, 2.0).unwrap()
    }

    #[test]
    fn concave_function_is_its_own_envelope() {
        let f = sample(|t| -t * t, |t| -2.0 * t, 65);
        let e = concave_envelope(&f).unwrap();
        for (a, b) in e.env.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(e.gaps.is_empty());
    }

    #[test]
    fn convex_function_gets_its_chord() {
        let f = sample(|t| t * t, |t| 2.0 * t, 65);
        let e = concave_envelope(&f).unwrap();
        for j in 0..65 {
            assert!((e.env.values[j] - f.tau(j)).abs() < 1e-14);
            assert!((e.env.deriv[j] - 1.0).abs() < 1e-12);
        }
        assert_eq!(e.gaps.len(), 1);
        assert_eq!((e.gaps[0].a_index, e.gaps[0].b_index), (0, 64));
    }

    #[test]
    fn monotone_concave_of_parabola_cap() {
        let f = sample(|t| t * (1.0 - t), |t| 1.0 - 2.0 * t, 65);
        let e = monotone_concave_envelope(&f).unwrap();
        assert_eq!(e.tau0, Some(0.5));
        for j in 32..65 {
            assert_eq!(e.env.values[j], 0.25);
        }
        // left-continuous: the cut node keeps its incoming slope
        assert!(e.env.deriv[32] > 0.0);
        assert!(e.env.deriv[33..].iter().all(|&d| d == 0.0));
    }

    #[test]
    fn monotone_concave_of_decreasing_line_is_constant() {
        let f = sample(|t| -t, |_| -1.0, 17);
        let e = monotone_concave_envelope(&f).unwrap();
        assert_eq!(e.tau0, Some(0.0));
        assert!(e.env.values.iter().all(|&x| x == 0.0));
        assert!(e.env.deriv.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn monotone_convex_of_parabola_cup() {
        let f = sample(|t| t * (t - 1.0), |t| 2.0 * t - 1.0, 65);
        let e = monotone_convex_envelope(&f).unwrap();
        assert_eq!(e.tau0, Some(0.5));
        for j in 0..=32 {
            assert!((e.env.values[j] + 0.25).abs() < 1e-15);
        }
        for j in 32..65 {
            assert!((e.env.values[j] - f.values[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(SampledFunction::new(1.0, vec![0.0], vec![0.0], 1.0).is_err());
        assert!(SampledFunction::new(1.0, vec![0.0, f64::NAN], vec![0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let f = SampledFunction::<f32>::from_fn(1.0, 33, |t| t * t, |t| 2.0 * t, 2.0).unwrap();
        let e = concave_envelope(&f).unwrap();
        assert!((e.env.values[16] - 0.5).abs() < 1e-6);
    }
}
