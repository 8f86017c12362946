//! Functions on the product domain `T1 × T2 × I`.
//!
//! Values are stored with the `z` index fastest: `(i * n2 + j) * n3 + k`.

use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::timescale::TimeScale;

/// `T1 × T2 × I` with the lower limits `x0 = min T1`, `y0 = min T2`, and
/// `I = [a, b]` represented by a finite scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductDomain {
    t1: TimeScale,
    t2: TimeScale,
    z: TimeScale,
}

impl ProductDomain {
    pub fn new(t1: TimeScale, t2: TimeScale, z: TimeScale) -> Result<Self> {
        for (name, s) in [("t1", &t1), ("t2", &t2), ("zscale", &z)] {
            if s.len() < 2 {
                return Err(Error::Domain(format!(
                    "{name} needs at least two points, has {}",
                    s.len()
                )));
            }
        }
        Ok(Self { t1, t2, z })
    }

    pub fn t1(&self) -> &TimeScale {
        &self.t1
    }

    pub fn t2(&self) -> &TimeScale {
        &self.t2
    }

    pub fn z(&self) -> &TimeScale {
        &self.z
    }

    pub fn axis(&self, axis: Axis) -> &TimeScale {
        match axis {
            Axis::X => &self.t1,
            Axis::Y => &self.t2,
        }
    }

    pub fn x0(&self) -> f64 {
        self.t1.min()
    }

    pub fn y0(&self) -> f64 {
        self.t2.min()
    }

    pub fn a(&self) -> f64 {
        self.z.min()
    }

    pub fn b(&self) -> f64 {
        self.z.max()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t1.len(), self.t2.len(), self.z.len())
    }

    pub fn len(&self) -> usize {
        self.t1.len() * self.t2.len() * self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.t2.len() + j) * self.z.len() + k
    }

    pub fn coords(&self, i: usize, j: usize, k: usize) -> (f64, f64, f64) {
        (self.t1.point(i), self.t2.point(j), self.z.point(k))
    }

    /// Index triple of a point given by coordinates.
    pub fn locate(&self, x: f64, y: f64, z: f64) -> Result<(usize, usize, usize)> {
        Ok((
            self.t1.index_of(x)?,
            self.t2.index_of(y)?,
            self.z.index_of(z)?,
        ))
    }

    /// All index triples in storage order.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize, usize)> {
        let (n1, n2, n3) = self.shape();
        (0..n1).flat_map(move |i| (0..n2).flat_map(move |j| (0..n3).map(move |k| (i, j, k))))
    }

    /// `E_λ(x, y, z) = e_λ(x, x0) · e_λ(y, y0) · e_λ(z, a)`.
    pub fn weight(&self, lambda: f64, (i, j, k): (usize, usize, usize)) -> Result<f64> {
        check_lambda(lambda)?;
        let ex = self.t1.exp_indexed(|_| lambda, i, 0)?;
        let ey = self.t2.exp_indexed(|_| lambda, j, 0)?;
        let ez = self.z.exp_indexed(|_| lambda, k, 0)?;
        Ok(ex * ey * ez)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda must be positive, got {lambda}")))
    }
}

/// The weight surface `E_λ` over the whole domain.
pub fn weights(domain: &Arc<ProductDomain>, lambda: f64) -> Result<GridFunction> {
    check_lambda(lambda)?;
    let cum = |s: &TimeScale| -> Vec<f64> {
        let mut out = Vec::with_capacity(s.len());
        let mut e = 1.0;
        for k in 0..s.len() {
            out.push(e);
            e *= 1.0 + s.mu_at(k) * lambda;
        }
        out
    };
    let (ex, ey, ez) = (cum(domain.t1()), cum(domain.t2()), cum(domain.z()));
    Ok(GridFunction::from_index_fn(domain.clone(), |i, j, k| {
        ex[i] * ey[j] * ez[k]
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl TryFrom<u8> for Axis {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Axis::X),
            2 => Ok(Axis::Y),
            other => Err(Error::Axis(other)),
        }
    }
}

/// Which max-point slabs hold copied rather than computed values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoundaryFill {
    pub x: bool,
    pub y: bool,
}

/// A real function sampled on every point of a [`ProductDomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    domain: Arc<ProductDomain>,
    values: Vec<f64>,
    fill: BoundaryFill,
}

impl GridFunction {
    pub fn new(domain: Arc<ProductDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            let (n1, n2, n3) = domain.shape();
            return Err(Error::Domain(format!(
                "{} values for a {n1}x{n2}x{n3} grid",
                values.len()
            )));
        }
        Ok(Self {
            domain,
            values,
            fill: BoundaryFill::default(),
        })
    }

    pub fn zeros(domain: Arc<ProductDomain>) -> Self {
        Self::constant(domain, 0.0)
    }

    pub fn constant(domain: Arc<ProductDomain>, c: f64) -> Self {
        let values = vec![c; domain.len()];
        Self {
            domain,
            values,
            fill: BoundaryFill::default(),
        }
    }

    /// Samples `f(x, y, z)` at every grid point.
    pub fn from_fn<F: Fn(f64, f64, f64) -> f64>(domain: Arc<ProductDomain>, f: F) -> Self {
        let d = domain.clone();
        Self::from_index_fn(domain, move |i, j, k| {
            let (x, y, z) = d.coords(i, j, k);
            f(x, y, z)
        })
    }

    pub fn from_index_fn<F: FnMut(usize, usize, usize) -> f64>(
        domain: Arc<ProductDomain>,
        mut f: F,
    ) -> Self {
        let values = domain.indices().map(|(i, j, k)| f(i, j, k)).collect();
        Self {
            domain,
            values,
            fill: BoundaryFill::default(),
        }
    }

    pub fn try_from_index_fn<F: FnMut(usize, usize, usize) -> Result<f64>>(
        domain: Arc<ProductDomain>,
        mut f: F,
    ) -> Result<Self> {
        let values = domain
            .indices()
            .map(|(i, j, k)| f(i, j, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            domain,
            values,
            fill: BoundaryFill::default(),
        })
    }

    pub fn domain(&self) -> &Arc<ProductDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.domain.index(i, j, k)]
    }

    pub fn boundary_fill(&self) -> BoundaryFill {
        self.fill
    }

    /// Whether the value at `(i, j, k)` was copied from an interior
    /// neighbour rather than computed.
    pub fn is_boundary_filled(&self, i: usize, j: usize, _k: usize) -> bool {
        let (n1, n2, _) = self.domain.shape();
        (self.fill.x && i + 1 == n1) || (self.fill.y && j + 1 == n2)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            fill: self.fill,
        }
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &GridFunction, f: F) -> Result<Self> {
        same_domain(&self.domain, &other.domain)?;
        Ok(Self {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            fill: BoundaryFill {
                x: self.fill.x || other.fill.x,
                y: self.fill.y || other.fill.y,
            },
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `x,y,z,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,z,value")?;
        for (idx, (i, j, k)) in self.domain.indices().enumerate() {
            let (x, y, z) = self.domain.coords(i, j, k);
            writeln!(w, "{x:.16e},{y:.16e},{z:.16e},{:.16e}", self.values[idx])?;
        }
        Ok(())
    }
}

/// Parses the output of [`GridFunction::write_csv`] into `[x, y, z, value]`
/// rows.
pub fn read_csv(text: &str) -> Result<Vec<[f64; 4]>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("x,y,z,value") => {}
        other => {
            return Err(Error::Invalid(format!("bad CSV header {other:?}")));
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let mut row = [0.0; 4];
            let mut fields = line.split(',');
            for slot in row.iter_mut() {
                *slot = fields
                    .next()
                    .and_then(|f| f.trim().parse().ok())
                    .ok_or_else(|| Error::Invalid(format!("bad CSV row {}: {line}", n + 2)))?;
            }
            Ok(row)
        })
        .collect()
}

fn same_domain(a: &Arc<ProductDomain>, b: &Arc<ProductDomain>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::Domain("grid functions live on different domains".into()))
    }
}

/// Difference quotient along one axis. The max slab of that axis repeats
/// the last computed slab and is flagged in [`BoundaryFill`].
pub fn partial_delta(u: &GridFunction, axis: Axis) -> Result<GridFunction> {
    let d = u.domain.clone();
    let scale = d.axis(axis);
    let n = scale.len();
    if n < 2 {
        return Err(Error::Domain("partial delta along a one-point axis".into()));
    }
    let mut out = GridFunction::from_index_fn(d.clone(), |i, j, k| {
        let (pos, next) = match axis {
            Axis::X => {
                let i = i.min(n - 2);
                (i, u.get(i + 1, j, k) - u.get(i, j, k))
            }
            Axis::Y => {
                let j = j.min(n - 2);
                (j, u.get(i, j + 1, k) - u.get(i, j, k))
            }
        };
        next / scale.mu_at(pos)
    });
    out.fill = u.fill;
    match axis {
        Axis::X => out.fill.x = true,
        Axis::Y => out.fill.y = true,
    }
    Ok(out)
}

/// `Δ₂` applied after `Δ₁`.
pub fn mixed_delta(u: &GridFunction) -> Result<GridFunction> {
    partial_delta(&partial_delta(u, Axis::X)?, Axis::Y)
}

/// `Σ_{s ∈ [x0, x_i)} μ₁(s) Σ_{t ∈ [y0, y_j)} μ₂(t) g(s, t, z_k)`.
pub fn double_integral(g: &GridFunction, (i, j, k): (usize, usize, usize)) -> f64 {
    let d = &g.domain;
    (0..i).fold(0.0, |acc, s| {
        let inner = (0..j).fold(0.0, |acc, t| acc + d.t2().mu_at(t) * g.get(s, t, k));
        acc + d.t1().mu_at(s) * inner
    })
}

/// Running `Δt` integral from `y0`: `Σ_{t < y_j} μ₂(t) g(x_i, t, z_k)`.
pub fn cumulative_y(g: &GridFunction) -> GridFunction {
    let d = g.domain.clone();
    let (n1, n2, n3) = d.shape();
    let mut out = vec![0.0; d.len()];
    for i in 0..n1 {
        for k in 0..n3 {
            let mut acc = 0.0;
            for j in 0..n2 {
                out[d.index(i, j, k)] = acc;
                acc += d.t2().mu_at(j) * g.get(i, j, k);
            }
        }
    }
    GridFunction::new(d, out).expect("shape preserved")
}

/// Running `Δs` integral from `x0`: `Σ_{s < x_i} μ₁(s) g(s, y_j, z_k)`.
pub fn cumulative_x(g: &GridFunction) -> GridFunction {
    let d = g.domain.clone();
    let (n1, n2, n3) = d.shape();
    let mut out = vec![0.0; d.len()];
    for j in 0..n2 {
        for k in 0..n3 {
            let mut acc = 0.0;
            for i in 0..n1 {
                out[d.index(i, j, k)] = acc;
                acc += d.t1().mu_at(i) * g.get(i, j, k);
            }
        }
    }
    GridFunction::new(d, out).expect("shape preserved")
}

/// [`double_integral`] at every grid point; bitwise equal to the pointwise
/// version.
pub fn double_integral_surface(g: &GridFunction) -> GridFunction {
    cumulative_x(&cumulative_y(g))
}

/// `∫_a^b g(q) Δq` over the `z` scale.
pub fn z_integral(domain: &ProductDomain, g: &[f64]) -> f64 {
    let z = domain.z();
    g.iter()
        .enumerate()
        .fold(0.0, |acc, (q, &v)| acc + z.mu_at(q) * v)
}

/// `(u, u^{Δ1}, u^{Δ2})` on a common domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTriple {
    pub u: GridFunction,
    pub u_d1: GridFunction,
    pub u_d2: GridFunction,
}

impl SolutionTriple {
    pub fn new(u: GridFunction, u_d1: GridFunction, u_d2: GridFunction) -> Result<Self> {
        same_domain(&u.domain, &u_d1.domain)?;
        same_domain(&u.domain, &u_d2.domain)?;
        Ok(Self { u, u_d1, u_d2 })
    }

    /// Builds the derivative layers by differencing `u`.
    pub fn differentiate(u: GridFunction) -> Result<Self> {
        let u_d1 = partial_delta(&u, Axis::X)?;
        let u_d2 = partial_delta(&u, Axis::Y)?;
        Ok(Self { u, u_d1, u_d2 })
    }

    pub fn zero(domain: Arc<ProductDomain>) -> Self {
        Self::constant(domain, 0.0)
    }

    /// `u ≡ c` with zero derivative layers.
    pub fn constant(domain: Arc<ProductDomain>, c: f64) -> Self {
        Self {
            u: GridFunction::constant(domain.clone(), c),
            u_d1: GridFunction::zeros(domain.clone()),
            u_d2: GridFunction::zeros(domain),
        }
    }

    pub fn domain(&self) -> &Arc<ProductDomain> {
        self.u.domain()
    }

    /// `|u|_W = |u| + |u^{Δ1}| + |u^{Δ2}|` at a grid point.
    pub fn w_seminorm(&self, (i, j, k): (usize, usize, usize)) -> f64 {
        self.u.get(i, j, k).abs() + self.u_d1.get(i, j, k).abs() + self.u_d2.get(i, j, k).abs()
    }

    /// `sup |u|_W · e_{⊖λ}`, with `e_{⊖λ} = 1 / E_λ`.
    pub fn s_norm(&self, lambda: f64) -> Result<f64> {
        Ok(self.s_norm_weighted(&weights(self.domain(), lambda)?))
    }

    /// [`Self::s_norm`] against a precomputed weight surface.
    pub fn s_norm_weighted(&self, weights: &GridFunction) -> f64 {
        let n = self.u.values.len();
        (0..n).fold(0.0, |m, idx| {
            let w = self.u.values[idx].abs()
                + self.u_d1.values[idx].abs()
                + self.u_d2.values[idx].abs();
            m.max(w / weights.values[idx])
        })
    }

    /// Unweighted `sup |u|_W`.
    pub fn sup_norm(&self) -> f64 {
        let n = self.u.values.len();
        (0..n).fold(0.0, |m, idx| {
            m.max(
                self.u.values[idx].abs()
                    + self.u_d1.values[idx].abs()
                    + self.u_d2.values[idx].abs(),
            )
        })
    }

    pub fn sub(&self, other: &SolutionTriple) -> Result<SolutionTriple> {
        Ok(SolutionTriple {
            u: self.u.zip_with(&other.u, |a, b| a - b)?,
            u_d1: self.u_d1.zip_with(&other.u_d1, |a, b| a - b)?,
            u_d2: self.u_d2.zip_with(&other.u_d2, |a, b| a - b)?,
        })
    }

    pub fn add(&self, other: &SolutionTriple) -> Result<SolutionTriple> {
        Ok(SolutionTriple {
            u: self.u.zip_with(&other.u, |a, b| a + b)?,
            u_d1: self.u_d1.zip_with(&other.u_d1, |a, b| a + b)?,
            u_d2: self.u_d2.zip_with(&other.u_d2, |a, b| a + b)?,
        })
    }

    pub fn scaled(&self, c: f64) -> SolutionTriple {
        SolutionTriple {
            u: self.u.map(|v| c * v),
            u_d1: self.u_d1.map(|v| c * v),
            u_d2: self.u_d2.map(|v| c * v),
        }
    }
}
