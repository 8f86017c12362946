//! Finite time scales and single-variable delta calculus.
//!
//! A [`TimeScale`] is a finite, strictly increasing set of reals. Every point
//! except the maximum is right-scattered, so the forward jump, graininess,
//! delta derivative, delta integral and generalized exponential below are
//! exact formulas rather than approximations.

use thiserror::Error;

/// Two abscissae closer than this (relative) are treated as the same point.
const DEDUP_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("time scale must contain at least one point")]
    Empty,
    #[error("non-finite abscissa {0}")]
    NonFinite(f64),
    #[error("points must be strictly increasing ({prev} followed by {next})")]
    NotIncreasing { prev: f64, next: f64 },
    #[error("{0} is not a point of the time scale")]
    NotMember(f64),
    #[error("delta derivative is undefined at the maximum point {0}")]
    UndefinedAtMax(f64),
    #[error("integration limits reversed: {lower} > {upper}")]
    Reversed { lower: f64, upper: f64 },
    #[error("coefficient {p} is not regressive for graininess {mu} (1 + mu*p = 0)")]
    NonRegressiveCoefficient { p: f64, mu: f64 },
    #[error("coefficient {p} is not regressive at t = {t} (graininess {mu})")]
    NonRegressive { t: f64, mu: f64, p: f64 },
    #[error("{values} samples supplied for a scale of {points} points")]
    LengthMismatch { values: usize, points: usize },
    #[error("invalid scale constructor: {0}")]
    Constructor(String),
}

pub type Result<T> = std::result::Result<T, ScaleError>;

/// A finite time scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    points: Vec<f64>,
}

impl TimeScale {
    /// Builds a scale from an increasing list of points.
    ///
    /// Consecutive points within `1e-12` relative of each other collapse to
    /// the first one; anything else out of order is rejected.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(ScaleError::Empty);
        }
        let mut kept: Vec<f64> = Vec::with_capacity(points.len());
        for t in points {
            if !t.is_finite() {
                return Err(ScaleError::NonFinite(t));
            }
            if let Some(&prev) = kept.last() {
                let gap = t - prev;
                if gap.abs() <= DEDUP_RELATIVE * prev.abs().max(t.abs()) {
                    continue;
                }
                if gap < 0.0 {
                    return Err(ScaleError::NotIncreasing { prev, next: t });
                }
            }
            kept.push(t);
        }
        Ok(Self { points: kept })
    }

    /// `n` equally spaced points from `start` to `stop` inclusive.
    pub fn uniform(start: f64, stop: f64, n: usize) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite()) {
            return Err(ScaleError::Constructor(format!(
                "uniform({start}, {stop}, {n}) has non-finite bounds"
            )));
        }
        match n {
            0 => Err(ScaleError::Empty),
            1 if start == stop => Ok(Self { points: vec![start] }),
            1 => Err(ScaleError::Constructor(
                "uniform with one point needs start == stop".into(),
            )),
            _ if stop <= start => Err(ScaleError::Constructor(format!(
                "uniform({start}, {stop}, {n}) needs start < stop"
            ))),
            _ => {
                let h = (stop - start) / (n - 1) as f64;
                let mut points: Vec<f64> = (0..n).map(|i| start + i as f64 * h).collect();
                points[n - 1] = stop;
                Self::new(points)
            }
        }
    }

    /// The integers `a, a+1, ..., b`.
    pub fn integers(a: i64, b: i64) -> Result<Self> {
        if b < a {
            return Err(ScaleError::Constructor(format!(
                "integers({a}, {b}) needs a <= b"
            )));
        }
        Self::new((a..=b).map(|k| k as f64).collect())
    }

    /// The geometric scale `t0, t0*q, ..., t0*q^(n-1)`.
    pub fn qscale(t0: f64, q: f64, n: usize) -> Result<Self> {
        if !(t0 > 0.0 && t0.is_finite()) || !(q > 1.0 && q.is_finite()) {
            return Err(ScaleError::Constructor(format!(
                "qscale({t0}, {q}, {n}) needs t0 > 0 and q > 1"
            )));
        }
        if n == 0 {
            return Err(ScaleError::Empty);
        }
        let mut points = Vec::with_capacity(n);
        let mut t = t0;
        for _ in 0..n {
            points.push(t);
            t *= q;
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Index of `t`, which must be one of the stored abscissae exactly.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let i = self.points.partition_point(|&s| s < t);
        if i < self.points.len() && self.points[i] == t {
            Ok(i)
        } else {
            Err(ScaleError::NotMember(t))
        }
    }

    /// Forward jump at the `i`-th point.
    pub fn sigma_at(&self, i: usize) -> f64 {
        self.points[(i + 1).min(self.points.len() - 1)]
    }

    /// Graininess at the `i`-th point; zero at the maximum.
    pub fn mu_at(&self, i: usize) -> f64 {
        self.sigma_at(i) - self.points[i]
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        self.index_of(t).map(|i| self.sigma_at(i))
    }

    pub fn graininess(&self, t: f64) -> Result<f64> {
        self.index_of(t).map(|i| self.mu_at(i))
    }

    /// Generalized exponential `e_p(t, t0)`.
    pub fn exp<P: Fn(f64) -> f64>(&self, p: P, t: f64, t0: f64) -> Result<f64> {
        let i = self.index_of(t)?;
        let i0 = self.index_of(t0)?;
        self.exp_indexed(|k| p(self.points[k]), i, i0)
    }

    /// Generalized exponential between two indices with a coefficient given
    /// per index. For `i >= i0` this is the product of `1 + mu*p` over
    /// `[i0, i)`; otherwise the reciprocal of the reversed product.
    pub fn exp_indexed<P: Fn(usize) -> f64>(&self, p: P, i: usize, i0: usize) -> Result<f64> {
        let (lo, hi) = if i >= i0 { (i0, i) } else { (i, i0) };
        let mut prod = 1.0;
        for k in lo..hi {
            let mu = self.mu_at(k);
            let pk = p(k);
            let factor = 1.0 + mu * pk;
            if factor == 0.0 {
                return Err(ScaleError::NonRegressive {
                    t: self.points[k],
                    mu,
                    p: pk,
                });
            }
            prod *= factor;
        }
        Ok(if i >= i0 { prod } else { 1.0 / prod })
    }
}

/// `p ⊕ q = p + q + mu*p*q`.
pub fn circle_plus(p: f64, q: f64, mu: f64) -> f64 {
    p + q + mu * p * q
}

/// `⊖p = -p / (1 + mu*p)`, the inverse of `p` under [`circle_plus`].
pub fn circle_minus(p: f64, mu: f64) -> Result<f64> {
    let denom = 1.0 + mu * p;
    if denom == 0.0 {
        return Err(ScaleError::NonRegressiveCoefficient { p, mu });
    }
    Ok(-p / denom)
}

/// Values of a function sampled at every point of a time scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    scale: TimeScale,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(scale: TimeScale, values: Vec<f64>) -> Result<Self> {
        if values.len() != scale.len() {
            return Err(ScaleError::LengthMismatch {
                values: values.len(),
                points: scale.len(),
            });
        }
        Ok(Self { scale, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(scale: TimeScale, f: F) -> Self {
        let values = scale.points().iter().map(|&t| f(t)).collect();
        Self { scale, values }
    }

    pub fn scale(&self) -> &TimeScale {
        &self.scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        self.scale.index_of(t).map(|i| self.values[i])
    }

    /// `(f(σ(t)) - f(t)) / μ(t)`; an error at the maximum point.
    pub fn delta_derivative(&self, t: f64) -> Result<f64> {
        let i = self.scale.index_of(t)?;
        if i + 1 == self.scale.len() {
            return Err(ScaleError::UndefinedAtMax(t));
        }
        Ok((self.values[i + 1] - self.values[i]) / self.scale.mu_at(i))
    }

    /// Left Cauchy sum `Σ_{t1 <= s < t2} μ(s) f(s)`.
    pub fn delta_integral(&self, t1: f64, t2: f64) -> Result<f64> {
        let i1 = self.scale.index_of(t1)?;
        let i2 = self.scale.index_of(t2)?;
        if i1 > i2 {
            return Err(ScaleError::Reversed {
                lower: t1,
                upper: t2,
            });
        }
        Ok((i1..i2).fold(0.0, |acc, k| acc + self.scale.mu_at(k) * self.values[k]))
    }

    /// The antiderivative `t ↦ ∫_{t0}^{t} f Δs` on `t >= t0`, with `t0 = min`.
    pub fn antiderivative(&self) -> SampledFunction {
        let mut acc = 0.0;
        let mut values = Vec::with_capacity(self.values.len());
        for k in 0..self.values.len() {
            values.push(acc);
            acc += self.scale.mu_at(k) * self.values[k];
        }
        SampledFunction {
            scale: self.scale.clone(),
            values,
        }
    }
}

/// Solves `u^Δ = p(t) u`, `u(min) = u0` by forward recursion
/// `u(σ(t)) = u(t) (1 + μ(t) p(t))`.
pub fn solve_first_order<P: Fn(f64) -> f64>(
    p: P,
    u0: f64,
    scale: &TimeScale,
) -> Result<SampledFunction> {
    let n = scale.len();
    let mut values = Vec::with_capacity(n);
    let mut u = u0;
    values.push(u);
    for k in 0..n - 1 {
        let mu = scale.mu_at(k);
        let pk = p(scale.point(k));
        let factor = 1.0 + mu * pk;
        if factor == 0.0 {
            return Err(ScaleError::NonRegressive {
                t: scale.point(k),
                mu,
                p: pk,
            });
        }
        u *= factor;
        values.push(u);
    }
    SampledFunction::new(scale.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(p: &[f64]) -> TimeScale {
        TimeScale::new(p.to_vec()).unwrap()
    }

    #[test]
    fn sigma_examples() {
        let s = ts(&[0.0, 0.5, 1.0]);
        assert_eq!(s.sigma(0.0).unwrap(), 0.5);
        assert_eq!(s.sigma(1.0).unwrap(), 1.0);
        assert_eq!(ts(&[1.0, 2.0, 4.0, 8.0]).sigma(2.0).unwrap(), 4.0);
        assert_eq!(s.sigma(0.25), Err(ScaleError::NotMember(0.25)));
    }

    #[test]
    fn graininess_examples() {
        let s = ts(&[0.0, 0.5, 1.0]);
        assert_eq!(s.graininess(0.5).unwrap(), 0.5);
        assert_eq!(s.graininess(1.0).unwrap(), 0.0);
        assert_eq!(ts(&[0.0, 1.0, 2.0]).graininess(0.0).unwrap(), 1.0);
        assert!(s.graininess(3.0).is_err());
    }

    #[test]
    fn constructors() {
        assert_eq!(TimeScale::new(vec![]), Err(ScaleError::Empty));
        assert!(matches!(
            TimeScale::new(vec![0.0, 2.0, 1.0]),
            Err(ScaleError::NotIncreasing { .. })
        ));
        assert!(TimeScale::new(vec![0.0, f64::NAN]).is_err());
        let d = TimeScale::new(vec![1.0, 1.0 + 1e-14, 2.0]).unwrap();
        assert_eq!(d.points(), &[1.0, 2.0]);

        let u = TimeScale::uniform(0.0, 1.0, 5).unwrap();
        assert_eq!(u.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(TimeScale::uniform(1.0, 0.0, 3).is_err());

        let z = TimeScale::integers(-1, 2).unwrap();
        assert_eq!(z.points(), &[-1.0, 0.0, 1.0, 2.0]);
        assert!(TimeScale::integers(3, 2).is_err());

        let q = TimeScale::qscale(1.0, 2.0, 4).unwrap();
        assert_eq!(q.points(), &[1.0, 2.0, 4.0, 8.0]);
        assert!(TimeScale::qscale(1.0, 0.5, 4).is_err());
    }

    #[test]
    fn delta_derivative_examples() {
        let f = SampledFunction::from_fn(TimeScale::integers(0, 5).unwrap(), |t| t * t);
        assert_eq!(f.delta_derivative(2.0).unwrap(), 5.0);
        assert_eq!(f.delta_derivative(5.0), Err(ScaleError::UndefinedAtMax(5.0)));

        let c = SampledFunction::from_fn(ts(&[1.0, 2.0, 4.0]), |_| 7.0);
        assert_eq!(c.delta_derivative(1.0).unwrap(), 0.0);

        // classical derivative 2t plus the O(h) term h
        let fine = SampledFunction::from_fn(TimeScale::uniform(0.0, 1.0, 1001).unwrap(), |t| t * t);
        let d = fine.delta_derivative(fine.scale().point(500)).unwrap();
        assert!((d - 1.0).abs() <= 1e-3 + 1e-12, "{d}");
    }

    #[test]
    fn delta_integral_examples() {
        let s = TimeScale::integers(0, 3).unwrap();
        let one = SampledFunction::from_fn(s.clone(), |_| 1.0);
        assert_eq!(one.delta_integral(0.0, 3.0).unwrap(), 3.0);
        let id = SampledFunction::from_fn(s, |t| t);
        assert_eq!(id.delta_integral(0.0, 3.0).unwrap(), 3.0);
        assert!(matches!(
            id.delta_integral(2.0, 1.0),
            Err(ScaleError::Reversed { .. })
        ));

        let fine = SampledFunction::from_fn(TimeScale::uniform(0.0, 1.0, 1001).unwrap(), |t| t);
        let v = fine.delta_integral(0.0, 1.0).unwrap();
        assert!((v - 0.5).abs() <= 1e-3, "{v}");
    }

    #[test]
    fn circle_examples() {
        assert_eq!(circle_minus(1.0, 1.0).unwrap(), -0.5);
        assert_eq!(circle_minus(0.3, 0.0).unwrap(), -0.3);
        assert!(circle_minus(2.0, -0.5).is_err());
        let p = 1.7;
        let mu = 0.4;
        assert!(circle_plus(p, circle_minus(p, mu).unwrap(), mu).abs() < 1e-15);
    }

    #[test]
    fn exp_examples() {
        let z = TimeScale::integers(0, 3).unwrap();
        assert_eq!(z.exp(|_| 1.0, 3.0, 0.0).unwrap(), 8.0);
        assert_eq!(z.exp(|_| 1.0, 2.0, 2.0).unwrap(), 1.0);
        assert_eq!(z.exp(|_| 1.0, 0.0, 3.0).unwrap(), 0.125);
        assert!(matches!(
            z.exp(|_| -1.0, 3.0, 0.0),
            Err(ScaleError::NonRegressive { .. })
        ));
        let fine = TimeScale::uniform(0.0, 1.0, 10_001).unwrap();
        let e = fine.exp(|_| 1.0, 1.0, 0.0).unwrap();
        assert!((e - std::f64::consts::E).abs() <= 3e-4, "{e}");
    }

    #[test]
    fn first_order_examples() {
        let s = TimeScale::integers(0, 2).unwrap();
        assert_eq!(solve_first_order(|_| 1.0, 1.0, &s).unwrap().values(), &[1.0, 2.0, 4.0]);
        assert_eq!(solve_first_order(|_| 0.0, 5.0, &s).unwrap().values(), &[5.0; 3]);
        let s2 = TimeScale::integers(0, 1).unwrap();
        assert_eq!(solve_first_order(|_| -0.5, 2.0, &s2).unwrap().values(), &[2.0, 1.0]);
        assert!(solve_first_order(|_| -1.0, 2.0, &s2).is_err());
    }

    fn scale_strategy() -> impl Strategy<Value = TimeScale> {
        prop::collection::vec(0.05f64..2.0, 1..10).prop_map(|steps| {
            let mut t = 0.0;
            let mut pts = vec![0.0];
            for h in steps {
                t += h;
                pts.push(t);
            }
            TimeScale::new(pts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn sigma_is_monotone(s in scale_strategy()) {
            for w in s.points().windows(2) {
                prop_assert!(s.sigma(w[0]).unwrap() <= s.sigma(w[1]).unwrap());
            }
        }

        #[test]
        fn first_order_matches_exp(s in scale_strategy(), p in -0.4f64..3.0, u0 in -5.0f64..5.0) {
            let sol = solve_first_order(|_| p, u0, &s).unwrap();
            for (k, &t) in s.points().iter().enumerate() {
                let e = u0 * s.exp(|_| p, t, s.min()).unwrap();
                prop_assert!((sol.values()[k] - e).abs() <= 1e-12 * e.abs().max(1.0));
            }
        }

        #[test]
        fn positively_regressive_exp_is_positive(s in scale_strategy(), p in -0.4f64..3.0) {
            for &t in s.points() {
                for &t0 in s.points() {
                    prop_assert!(s.exp(|_| p, t, t0).unwrap() > 0.0);
                }
            }
        }
    }
}
