//! Successive approximation for
//!
//! ```text
//! u^{Δ2Δ1}(x,y,z) = F(x, y, z, u, u^{Δ1}, u^{Δ2}, (Hu)(x,y,z)),
//! (Hu)(x,y,z)     = ∫_a^b G(x, y, z, q, u(x,y,q), u^{Δ1}(x,y,q), u^{Δ2}(x,y,q)) Δq,
//! u(x, y0, z) = α(x, z),   u(x0, y, z) = β(y, z),
//! ```
//!
//! and for the reduced form `u^{Δ2Δ1} = f(x, y, z, u, (hu))` with
//! `(hu) = ∫_a^b j(x, y, z, q, u(x,y,q)) Δq`.
//!
//! One Picard sweep maps the triple `(u, u^{Δ1}, u^{Δ2})` to
//!
//! ```text
//! (Pu)       = α(x,z) + β(y,z) - α(x0,z) + ∫_{x0}^{x} ∫_{y0}^{y} F Δt Δs
//! (Pu)^{Δ1}  = α^{Δ1}(x,z) + ∫_{y0}^{y} F(x, t, z, ...) Δt
//! (Pu)^{Δ2}  = β^{Δ2}(y,z) + ∫_{x0}^{x} F(s, y, z, ...) Δs
//! ```
//!
//! with every argument of `F` read at the integration point.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::grid::{self, GridFunction, ProductDomain, SolutionTriple};

/// The right-hand side of the full equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Expr(Expr),
    /// A value per grid point, independent of `u`.
    Table(GridFunction),
}

/// A boundary function: `α(x, z)` or `β(y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Expr(Expr),
    /// Samples in `(axis index, z index)` order, `z` fastest.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Equation {
    /// `F` and the kernel `G` of `H`.
    Full { forcing: Forcing, kernel: Expr },
    /// `f` and the kernel `j` of `h`.
    Reduced { f: Expr, j: Expr },
}

impl Equation {
    pub fn is_reduced(&self) -> bool {
        matches!(self, Equation::Reduced { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: Arc<ProductDomain>,
    pub equation: Equation,
    pub alpha: Condition,
    pub beta: Condition,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

fn check_vars(name: &str, e: &Expr, allowed: &[Var]) -> Result<()> {
    match e.variables().into_iter().find(|v| !allowed.contains(v)) {
        Some(v) => Err(Error::Invalid(format!(
            "{name} may not reference {}; allowed: {}",
            v.name(),
            allowed.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
        ))),
        None => Ok(()),
    }
}

pub const F_VARS: [Var; 7] = [Var::X, Var::Y, Var::Z, Var::U, Var::U1, Var::U2, Var::Hu];
pub const G_VARS: [Var; 7] = [Var::X, Var::Y, Var::Z, Var::Q, Var::U, Var::U1, Var::U2];
pub const REDUCED_F_VARS: [Var; 5] = [Var::X, Var::Y, Var::Z, Var::U, Var::Hu];
pub const J_VARS: [Var; 5] = [Var::X, Var::Y, Var::Z, Var::Q, Var::U];

impl ProblemSpec {
    pub fn new(
        domain: Arc<ProductDomain>,
        equation: Equation,
        alpha: Condition,
        beta: Condition,
        lambda: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<Self> {
        let spec = Self {
            domain,
            equation,
            alpha,
            beta,
            lambda,
            tol,
            max_iter,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        let (n1, n2, n3) = self.domain.shape();
        match &self.equation {
            Equation::Full { forcing, kernel } => {
                match forcing {
                    Forcing::Expr(e) => check_vars("F", e, &F_VARS)?,
                    Forcing::Table(t) => {
                        if **t.domain() != *self.domain {
                            return Err(Error::Invalid("forcing table on a different domain".into()));
                        }
                    }
                }
                check_vars("G", kernel, &G_VARS)?;
            }
            Equation::Reduced { f, j } => {
                check_vars("f", f, &REDUCED_F_VARS)?;
                check_vars("j", j, &J_VARS)?;
            }
        }
        for (name, cond, vars, n) in [
            ("alpha", &self.alpha, [Var::X, Var::Z], n1),
            ("beta", &self.beta, [Var::Y, Var::Z], n2),
        ] {
            match cond {
                Condition::Expr(e) => check_vars(name, e, &vars)?,
                Condition::Table(v) if v.len() != n * n3 => {
                    return Err(Error::Invalid(format!(
                        "{name} table has {} samples, expected {}",
                        v.len(),
                        n * n3
                    )))
                }
                Condition::Table(_) => {}
            }
        }
        Ok(())
    }

    /// Same problem with different boundary functions.
    pub fn with_conditions(&self, alpha: Condition, beta: Condition) -> Result<Self> {
        let spec = Self {
            alpha,
            beta,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn eval_at(e: &Expr, env: &Env, what: &str, x: f64, y: f64, z: f64) -> Result<f64> {
    e.eval(env).map_err(|source| Error::Eval {
        context: format!("{what} at (x={x}, y={y}, z={z})"),
        source,
    })
}

/// A [`ProblemSpec`] with its boundary data sampled and differenced.
#[derive(Debug, Clone)]
pub struct PreparedProblem<'a> {
    spec: &'a ProblemSpec,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    alpha_d1: Vec<f64>,
    beta_d2: Vec<f64>,
    weights: GridFunction,
}

impl<'a> PreparedProblem<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let d = &spec.domain;
        let (n1, n2, n3) = d.shape();
        let sample = |cond: &Condition,
                      scale: &crate::timescale::TimeScale,
                      var: Var,
                      name: &str|
         -> Result<Vec<f64>> {
            match cond {
                Condition::Table(v) => Ok(v.clone()),
                Condition::Expr(e) => {
                    let mut out = Vec::with_capacity(scale.len() * n3);
                    for i in 0..scale.len() {
                        for k in 0..n3 {
                            let (t, z) = (scale.point(i), d.z().point(k));
                            let env = Env::new().with(var, t).with(Var::Z, z);
                            let (x, y) = if var == Var::X { (t, d.y0()) } else { (d.x0(), t) };
                            out.push(eval_at(e, &env, name, x, y, z)?);
                        }
                    }
                    Ok(out)
                }
            }
        };
        let alpha = sample(&spec.alpha, d.t1(), Var::X, "alpha")?;
        let beta = sample(&spec.beta, d.t2(), Var::Y, "beta")?;
        // forward differences along the axis, last row copied
        let diff = |v: &[f64], scale: &crate::timescale::TimeScale, n: usize| {
            let mut out = vec![0.0; n * n3];
            for i in 0..n {
                let p = i.min(n - 2);
                for k in 0..n3 {
                    out[i * n3 + k] = (v[(p + 1) * n3 + k] - v[p * n3 + k]) / scale.mu_at(p);
                }
            }
            out
        };
        let alpha_d1 = diff(&alpha, d.t1(), n1);
        let beta_d2 = diff(&beta, d.t2(), n2);
        let weights = grid::weights(d, spec.lambda)?;
        Ok(Self {
            spec,
            alpha,
            beta,
            alpha_d1,
            beta_d2,
            weights,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn weights(&self) -> &GridFunction {
        &self.weights
    }

    fn n3(&self) -> usize {
        self.spec.domain.z().len()
    }

    pub fn alpha(&self, i: usize, k: usize) -> f64 {
        self.alpha[i * self.n3() + k]
    }

    pub fn beta(&self, j: usize, k: usize) -> f64 {
        self.beta[j * self.n3() + k]
    }

    pub fn alpha_d1(&self, i: usize, k: usize) -> f64 {
        self.alpha_d1[i * self.n3() + k]
    }

    pub fn beta_d2(&self, j: usize, k: usize) -> f64 {
        self.beta_d2[j * self.n3() + k]
    }

    /// `α(x,z) + β(y,z) - α(x0,z)` on the grid.
    pub fn condition_surface(&self) -> GridFunction {
        GridFunction::from_index_fn(self.spec.domain.clone(), |i, j, k| {
            self.alpha(i, k) + self.beta(j, k) - self.alpha(0, k)
        })
    }

    /// `(Hu)` or `(hu)` at every grid point.
    pub fn integral_term(&self, s: &SolutionTriple) -> Result<GridFunction> {
        let d = self.spec.domain.clone();
        let n3 = d.z().len();
        let kernel = match &self.spec.equation {
            Equation::Full { kernel, .. } => kernel,
            Equation::Reduced { j, .. } => j,
        };
        if kernel.is_zero_literal() {
            return Ok(GridFunction::zeros(d));
        }
        let mut out = Vec::with_capacity(d.len());
        let mut integrand = vec![0.0; n3];
        let (n1, n2, _) = d.shape();
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    for (q, slot) in integrand.iter_mut().enumerate() {
                        *slot = self.kernel_at(kernel, s, (i, j, k), q)?;
                    }
                    out.push(grid::z_integral(&d, &integrand));
                }
            }
        }
        GridFunction::new(d, out)
    }

    fn kernel_at(
        &self,
        kernel: &Expr,
        s: &SolutionTriple,
        (i, j, k): (usize, usize, usize),
        q: usize,
    ) -> Result<f64> {
        let d = &self.spec.domain;
        let (x, y, z) = d.coords(i, j, k);
        let mut env = Env::new()
            .with(Var::X, x)
            .with(Var::Y, y)
            .with(Var::Z, z)
            .with(Var::Q, d.z().point(q))
            .with(Var::U, s.u.get(i, j, q));
        let name = match self.spec.equation {
            Equation::Full { .. } => {
                env.set(Var::U1, s.u_d1.get(i, j, q));
                env.set(Var::U2, s.u_d2.get(i, j, q));
                "G"
            }
            Equation::Reduced { .. } => "j",
        };
        eval_at(kernel, &env, name, x, y, z)
    }

    /// `j(x, y, z, q, u)` of the reduced problem at grid indices.
    pub fn reduced_kernel(&self, (i, j, k): (usize, usize, usize), q: usize, u: f64) -> Result<f64> {
        let Equation::Reduced { j: kernel, .. } = &self.spec.equation else {
            return Err(Error::Invalid("not a reduced problem".into()));
        };
        let d = &self.spec.domain;
        let (x, y, z) = d.coords(i, j, k);
        let env = Env::new()
            .with(Var::X, x)
            .with(Var::Y, y)
            .with(Var::Z, z)
            .with(Var::Q, d.z().point(q))
            .with(Var::U, u);
        eval_at(kernel, &env, "j", x, y, z)
    }

    /// `f(x, y, z, u, hu)` of the reduced problem at grid indices.
    pub fn reduced_rhs(&self, (i, j, k): (usize, usize, usize), u: f64, hu: f64) -> Result<f64> {
        let Equation::Reduced { f, .. } = &self.spec.equation else {
            return Err(Error::Invalid("not a reduced problem".into()));
        };
        let (x, y, z) = self.spec.domain.coords(i, j, k);
        let env = Env::new()
            .with(Var::X, x)
            .with(Var::Y, y)
            .with(Var::Z, z)
            .with(Var::U, u)
            .with(Var::Hu, hu);
        eval_at(f, &env, "f", x, y, z)
    }

    /// The right-hand side at every grid point given the triple and its
    /// integral term.
    pub fn rhs(&self, s: &SolutionTriple, h: &GridFunction) -> Result<GridFunction> {
        let d = self.spec.domain.clone();
        match &self.spec.equation {
            Equation::Full {
                forcing: Forcing::Table(t),
                ..
            } => Ok(t.clone()),
            Equation::Full {
                forcing: Forcing::Expr(e),
                ..
            } => GridFunction::try_from_index_fn(d.clone(), |i, j, k| {
                let (x, y, z) = d.coords(i, j, k);
                let env = Env::new()
                    .with(Var::X, x)
                    .with(Var::Y, y)
                    .with(Var::Z, z)
                    .with(Var::U, s.u.get(i, j, k))
                    .with(Var::U1, s.u_d1.get(i, j, k))
                    .with(Var::U2, s.u_d2.get(i, j, k))
                    .with(Var::Hu, h.get(i, j, k));
                eval_at(e, &env, "F", x, y, z)
            }),
            Equation::Reduced { .. } => GridFunction::try_from_index_fn(d.clone(), |i, j, k| {
                self.reduced_rhs((i, j, k), s.u.get(i, j, k), h.get(i, j, k))
            }),
        }
    }

    /// One Picard sweep.
    pub fn apply(&self, s: &SolutionTriple) -> Result<SolutionTriple> {
        let h = self.integral_term(s)?;
        let r = self.rhs(s, &h)?;
        Ok(self.integrate(&r))
    }

    /// Builds the triple from a right-hand-side table.
    pub fn integrate(&self, r: &GridFunction) -> SolutionTriple {
        let d = self.spec.domain.clone();
        let along_y = grid::cumulative_y(r);
        let along_x = grid::cumulative_x(r);
        let double = grid::cumulative_x(&along_y);
        let u = GridFunction::from_index_fn(d.clone(), |i, j, k| {
            self.alpha(i, k) + self.beta(j, k) - self.alpha(0, k) + double.get(i, j, k)
        });
        let u_d1 = GridFunction::from_index_fn(d.clone(), |i, j, k| {
            self.alpha_d1(i, k) + along_y.get(i, j, k)
        });
        let u_d2 = GridFunction::from_index_fn(d, |i, j, k| {
            self.beta_d2(j, k) + along_x.get(i, j, k)
        });
        SolutionTriple { u, u_d1, u_d2 }
    }
}

/// `(Hu)` (or `(hu)`) along `z` at the grid column `(i, j)`.
pub fn eval_h(s: &SolutionTriple, spec: &ProblemSpec, (i, j): (usize, usize)) -> Result<Vec<f64>> {
    let p = PreparedProblem::new(spec)?;
    let n3 = spec.domain.z().len();
    let kernel = match &spec.equation {
        Equation::Full { kernel, .. } => kernel,
        Equation::Reduced { j, .. } => j,
    };
    (0..n3)
        .map(|k| {
            let integrand = (0..n3)
                .map(|q| p.kernel_at(kernel, s, (i, j, k), q))
                .collect::<Result<Vec<_>>>()?;
            Ok(grid::z_integral(&spec.domain, &integrand))
        })
        .collect()
}

pub fn apply_p(s: &SolutionTriple, spec: &ProblemSpec) -> Result<SolutionTriple> {
    PreparedProblem::new(spec)?.apply(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: SolutionTriple,
    /// Number of residuals computed.
    pub iterations: usize,
    /// `‖u_{n+1} - u_n‖_s` for `n = 1, 2, ...`, where `u_1 = P(seed)`.
    pub residual_history: Vec<f64>,
    /// The same distances in the unweighted sup norm.
    pub sup_residual_history: Vec<f64>,
    pub gamma_hat: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary<'a> {
    pub iterations: usize,
    pub residual_history: &'a [f64],
    pub sup_residual_history: &'a [f64],
    pub gamma_hat: f64,
    pub converged: bool,
}

impl SolveReport {
    pub fn summary(&self) -> ReportSummary<'_> {
        ReportSummary {
            iterations: self.iterations,
            residual_history: &self.residual_history,
            sup_residual_history: &self.sup_residual_history,
            gamma_hat: self.gamma_hat,
            converged: self.converged,
        }
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// Largest ratio of successive nonzero residuals.
pub fn contraction_ratio(history: &[f64]) -> f64 {
    history
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .fold(0.0, |m, w| m.max(w[1] / w[0]))
}

/// Iterates `u_{n+1} = P(u_n)` from `seed` (zero by default).
///
/// The seed step `u_1 = P(seed)` is not counted; every further sweep
/// records `‖u_{n+1} - u_n‖_s` and the loop stops once it is `<= tol`,
/// returning `u_{n+1}`. Running out of iterations is reported through
/// `converged = false`, not an error.
pub fn solve_picard(spec: &ProblemSpec, seed: Option<&SolutionTriple>) -> Result<SolveReport> {
    let prepared = PreparedProblem::new(spec)?;
    let zero;
    let seed = match seed {
        Some(s) => {
            if **s.domain() != *spec.domain {
                return Err(Error::Invalid("seed lives on a different domain".into()));
            }
            s
        }
        None => {
            zero = SolutionTriple::zero(spec.domain.clone());
            &zero
        }
    };
    let mut current = prepared.apply(seed)?;
    let mut residual_history = Vec::new();
    let mut sup_residual_history = Vec::new();
    let mut converged = false;
    for _ in 0..spec.max_iter {
        let next = prepared.apply(&current)?;
        let diff = next.sub(&current)?;
        let r = diff.s_norm_weighted(prepared.weights());
        residual_history.push(r);
        sup_residual_history.push(diff.sup_norm());
        current = next;
        if r <= spec.tol {
            converged = true;
            break;
        }
    }
    Ok(SolveReport {
        solution: current,
        iterations: residual_history.len(),
        gamma_hat: contraction_ratio(&residual_history),
        residual_history,
        sup_residual_history,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compatibility {
    pub pass: bool,
    pub max_gap: f64,
    /// `z` values where `α(x0, z)` and `β(y0, z)` disagree.
    pub offending: Vec<f64>,
}

/// Checks the corner condition `α(x0, z) = β(y0, z)`.
pub fn check_compatibility(spec: &ProblemSpec) -> Result<Compatibility> {
    let p = PreparedProblem::new(spec)?;
    let z = spec.domain.z();
    let n3 = z.len();
    let max_alpha = (0..n3).fold(0.0f64, |m, k| m.max(p.alpha(0, k).abs()));
    let threshold = 1e-9 * (1.0 + max_alpha);
    let mut max_gap = 0.0f64;
    let mut offending = Vec::new();
    for k in 0..n3 {
        let gap = (p.alpha(0, k) - p.beta(0, k)).abs();
        max_gap = max_gap.max(gap);
        if gap > threshold {
            offending.push(z.point(k));
        }
    }
    Ok(Compatibility {
        pass: offending.is_empty(),
        max_gap,
        offending,
    })
}
