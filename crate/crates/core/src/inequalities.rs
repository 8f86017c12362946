//! Explicit bounds and the certificates that check them on a grid.
//!
//! The central estimate: if `w >= 0` satisfies
//!
//! ```text
//! w(x,y,z) <= c + ∫_{x0}^{x} ∫_{y0}^{y} [ p(s,t,z) w(s,t,z) + ∫_a^b r(s,t,z,q) w(s,t,q) Δq ] Δt Δs
//! ```
//!
//! then `w(x,y,z) <= c · e_{Q(·,y,z)}(x, x0)` with
//! `Q(x,y,z) = ∫_{y0}^{y} [ p(x,t,z) + ∫_a^b r(x,t,z,q) Δq ] Δt`.
//!
//! Every certificate either compares an observed surface against such a bound
//! or, when a hypothesis fails on the grid, records the failure without
//! asserting anything.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::grid::{self, GridFunction, ProductDomain, SolutionTriple};
use crate::solver::{self, PreparedProblem, ProblemSpec, SolveReport};

/// Relative slack separating rounding noise from a genuine violation.
pub const SLACK: f64 = 1e-9;

/// Kernel expressions `p(x,y,z)` and `r(x,y,z,q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPair {
    pub p: Expr,
    pub r: Expr,
}

impl KernelPair {
    pub fn new(p: Expr, r: Expr) -> Self {
        Self { p, r }
    }

    /// Samples both kernels on the grid, refusing negative values.
    pub fn tabulate(&self, domain: &Arc<ProductDomain>) -> Result<Kernels> {
        let p = tabulate_xyz(&self.p, domain, "p")?;
        let r = tabulate_xyzq(&self.r, domain, "r")?;
        Kernels::new(p, r)
    }
}

fn env_xyz(d: &ProductDomain, (i, j, k): (usize, usize, usize)) -> Env {
    let (x, y, z) = d.coords(i, j, k);
    Env::new().with(Var::X, x).with(Var::Y, y).with(Var::Z, z)
}

fn eval_with(e: &Expr, env: &Env, name: &str, d: &ProductDomain, at: (usize, usize, usize)) -> Result<f64> {
    e.eval(env).map_err(|source| {
        let (x, y, z) = d.coords(at.0, at.1, at.2);
        Error::Eval {
            context: format!("{name} at (x={x}, y={y}, z={z})"),
            source,
        }
    })
}

fn only_vars(name: &str, e: &Expr, allowed: &[Var]) -> Result<()> {
    match e.variables().into_iter().find(|v| !allowed.contains(v)) {
        Some(v) => Err(Error::Invalid(format!("{name} may not reference {}", v.name()))),
        None => Ok(()),
    }
}

/// Samples an expression over `(x, y, z)`.
pub fn tabulate_xyz(e: &Expr, d: &Arc<ProductDomain>, name: &str) -> Result<GridFunction> {
    only_vars(name, e, &[Var::X, Var::Y, Var::Z])?;
    GridFunction::try_from_index_fn(d.clone(), |i, j, k| {
        eval_with(e, &env_xyz(d, (i, j, k)), name, d, (i, j, k))
    })
}

/// Samples an expression over `(x, y, z, q)`, `q` fastest.
pub fn tabulate_xyzq(e: &Expr, d: &Arc<ProductDomain>, name: &str) -> Result<Vec<f64>> {
    only_vars(name, e, &[Var::X, Var::Y, Var::Z, Var::Q])?;
    let n3 = d.z().len();
    let mut out = Vec::with_capacity(d.len() * n3);
    for at in d.indices() {
        let mut env = env_xyz(d, at);
        for q in 0..n3 {
            env.set(Var::Q, d.z().point(q));
            out.push(eval_with(e, &env, name, d, at)?);
        }
    }
    Ok(out)
}

/// Nonnegative kernel tables on a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernels {
    p: GridFunction,
    r: Vec<f64>,
    r_integral: GridFunction,
}

impl Kernels {
    /// `r` is laid out as `(i, j, k, q)` with `q` fastest.
    pub fn new(p: GridFunction, r: Vec<f64>) -> Result<Self> {
        let d = p.domain().clone();
        let n3 = d.z().len();
        if r.len() != d.len() * n3 {
            return Err(Error::Domain(format!(
                "r table has {} entries, expected {}",
                r.len(),
                d.len() * n3
            )));
        }
        for (idx, at) in d.indices().enumerate() {
            let (x, y, z) = d.coords(at.0, at.1, at.2);
            let pv = p.values()[idx];
            if !(pv >= 0.0) {
                return Err(Error::NegativeKernel { name: "p", value: pv, x, y, z });
            }
            if let Some(&rv) = r[idx * n3..(idx + 1) * n3].iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::NegativeKernel { name: "r", value: rv, x, y, z });
            }
        }
        let r_integral = GridFunction::from_index_fn(d.clone(), |i, j, k| {
            let base = d.index(i, j, k) * n3;
            grid::z_integral(&d, &r[base..base + n3])
        });
        Ok(Self { p, r, r_integral })
    }

    pub fn zero(d: Arc<ProductDomain>) -> Self {
        let n = d.len() * d.z().len();
        Self::new(GridFunction::zeros(d), vec![0.0; n]).expect("zero kernels are valid")
    }

    pub fn domain(&self) -> &Arc<ProductDomain> {
        self.p.domain()
    }

    pub fn p(&self) -> &GridFunction {
        &self.p
    }

    pub fn r(&self, i: usize, j: usize, k: usize, q: usize) -> f64 {
        let d = self.domain();
        self.r[d.index(i, j, k) * d.z().len() + q]
    }

    /// `∫_a^b r(x,y,z,q) Δq`.
    pub fn r_integral(&self) -> &GridFunction {
        &self.r_integral
    }
}

/// `Q(x_i, y_j, z_k) = Σ_{t < y_j} μ₂(t) [p(x_i,t,z_k) + ∫ r(x_i,t,z_k,q) Δq]`.
pub fn compute_q(kernels: &Kernels, (i, j, k): (usize, usize, usize)) -> f64 {
    let d = kernels.domain();
    (0..j).fold(0.0, |acc, t| {
        acc + d.t2().mu_at(t) * (kernels.p.get(i, t, k) + kernels.r_integral.get(i, t, k))
    })
}

/// [`compute_q`] at every grid point.
pub fn q_surface(kernels: &Kernels) -> GridFunction {
    let inner = kernels
        .p
        .zip_with(&kernels.r_integral, |a, b| a + b)
        .expect("same domain");
    grid::cumulative_y(&inner)
}

fn exp_along_x(q: &GridFunction, c: f64) -> GridFunction {
    let d = q.domain().clone();
    let (n1, n2, n3) = d.shape();
    let mut out = vec![0.0; d.len()];
    for j in 0..n2 {
        for k in 0..n3 {
            let mut e = c;
            for i in 0..n1 {
                out[d.index(i, j, k)] = e;
                e *= 1.0 + d.t1().mu_at(i) * q.get(i, j, k);
            }
        }
    }
    GridFunction::new(d, out).expect("shape preserved")
}

fn check_c(name: &str, c: f64) -> Result<()> {
    if c >= 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be a finite nonnegative constant, got {c}")))
    }
}

/// `c · Π_{s < x} (1 + μ₁(s) Q(s, y, z))`, the bound as stated, with `Q`
/// taken at the same `z` as the point being bounded.
pub fn gronwall_bound(kernels: &Kernels, c: f64) -> Result<GridFunction> {
    check_c("c", c)?;
    Ok(exp_along_x(&q_surface(kernels), c))
}

/// A `z`-uniform variant: `Q` is built from `max_z [p + ∫ r Δq]`.
///
/// The per-slice bound of [`gronwall_bound`] can be exceeded when `r`
/// couples a slowly growing slice to a fast one; this surface bounds every
/// slice by the same envelope and holds without that restriction.
pub fn uniform_gronwall_bound(kernels: &Kernels, c: f64) -> Result<GridFunction> {
    check_c("c", c)?;
    let d = kernels.domain().clone();
    let (_, _, n3) = d.shape();
    let inner = kernels.p.zip_with(&kernels.r_integral, |a, b| a + b)?;
    let envelope = GridFunction::from_index_fn(d, |i, j, _| {
        (0..n3).fold(0.0f64, |m, k| m.max(inner.get(i, j, k)))
    });
    Ok(exp_along_x(&grid::cumulative_y(&envelope), c))
}

/// `c + ∫∫ [p w + ∫ r w Δq] Δt Δs` at every grid point.
pub fn gronwall_premise_rhs(w: &GridFunction, kernels: &Kernels, c: f64) -> Result<GridFunction> {
    let d = kernels.domain().clone();
    if **w.domain() != *d {
        return Err(Error::Domain("w and the kernels live on different domains".into()));
    }
    let n3 = d.z().len();
    let integrand = GridFunction::from_index_fn(d.clone(), |i, j, k| {
        let coupled = (0..n3).fold(0.0, |acc, q| {
            acc + d.z().mu_at(q) * kernels.r(i, j, k, q) * w.get(i, j, q)
        });
        kernels.p.get(i, j, k) * w.get(i, j, k) + coupled
    });
    Ok(grid::double_integral_surface(&integrand).map(|v| c + v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Gronwall,
    Boundedness,
    Dependence,
    Uniqueness,
    Contraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// A hypothesis does not hold on the grid; nothing is asserted.
    PremiseFailed,
    /// A required solve did not converge.
    Inconclusive,
}

/// The grid point where a comparison is tightest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Offender {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub bound: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub verdict: Verdict,
    pub bound: Option<GridFunction>,
    pub observed: Option<GridFunction>,
    /// `min (bound - observed)` over the grid.
    pub margin: f64,
    /// Negative margins down to `-slack` still pass.
    pub slack: f64,
    pub constants: BTreeMap<String, f64>,
    pub note: Option<String>,
    pub worst: Option<Offender>,
}

#[derive(Serialize)]
struct CertificateRecord<'a> {
    kind: CertificateKind,
    verdict: Verdict,
    pass: bool,
    margin: f64,
    slack: f64,
    constants: &'a BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst: Option<Offender>,
}

impl Certificate {
    pub fn pass(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&CertificateRecord {
            kind: self.kind,
            verdict: self.verdict,
            pass: self.pass(),
            margin: self.margin,
            slack: self.slack,
            constants: &self.constants,
            note: self.note.as_deref(),
            worst: self.worst,
        })
        .expect("certificate records always serialize")
    }

    fn compare(
        kind: CertificateKind,
        bound: GridFunction,
        observed: GridFunction,
        constants: BTreeMap<String, f64>,
    ) -> Self {
        let (margin, worst) = tightest(&bound, &observed);
        let slack = SLACK * (1.0 + bound.max_abs());
        let verdict = if margin >= -slack { Verdict::Pass } else { Verdict::Fail };
        Self {
            kind,
            verdict,
            bound: Some(bound),
            observed: Some(observed),
            margin,
            slack,
            constants,
            note: None,
            worst,
        }
    }

    fn not_asserted(
        kind: CertificateKind,
        verdict: Verdict,
        note: String,
        worst: Option<Offender>,
        constants: BTreeMap<String, f64>,
    ) -> Self {
        Self {
            kind,
            verdict,
            bound: None,
            observed: None,
            margin: f64::NAN,
            slack: 0.0,
            constants,
            note: Some(note),
            worst,
        }
    }
}

fn tightest(bound: &GridFunction, observed: &GridFunction) -> (f64, Option<Offender>) {
    let d = bound.domain();
    let mut best: Option<(f64, Offender)> = None;
    for (idx, (i, j, k)) in d.indices().enumerate() {
        let (b, o) = (bound.values()[idx], observed.values()[idx]);
        let m = b - o;
        if best.as_ref().is_none_or(|(bm, _)| m < *bm) {
            let (x, y, z) = d.coords(i, j, k);
            best = Some((m, Offender { x, y, z, bound: b, observed: o }));
        }
    }
    match best {
        Some((m, w)) => (m, Some(w)),
        None => (0.0, None),
    }
}

/// First point where `lhs > rhs` beyond the slack, reported as an offender
/// with `bound = rhs`.
fn violation(lhs: &GridFunction, rhs: &GridFunction) -> Option<Offender> {
    let slack = SLACK * (1.0 + rhs.max_abs());
    let (margin, worst) = tightest(rhs, lhs);
    if margin < -slack {
        worst
    } else {
        None
    }
}

fn offender_at(d: &ProductDomain, (i, j, k): (usize, usize, usize), bound: f64, observed: f64) -> Offender {
    let (x, y, z) = d.coords(i, j, k);
    Offender { x, y, z, bound, observed }
}

/// Checks the integral premise on `w` and, when it holds, compares `w`
/// against [`gronwall_bound`].
pub fn verify_gronwall(w: &GridFunction, kernels: &Kernels, c: f64) -> Result<Certificate> {
    check_c("c", c)?;
    let constants = BTreeMap::from([("c".to_string(), c)]);
    gronwall_certificate(CertificateKind::Gronwall, w, kernels, c, constants, "w")
}

/// [`verify_gronwall`] with `w = |u|` for a solved problem; inconclusive when
/// the solve did not converge.
pub fn solution_gronwall_certificate(report: &SolveReport, kernels: &Kernels, c: f64) -> Result<Certificate> {
    check_c("c", c)?;
    let constants = BTreeMap::from([("c".to_string(), c)]);
    if !report.converged {
        return Ok(Certificate::not_asserted(
            CertificateKind::Gronwall,
            Verdict::Inconclusive,
            "solve did not converge".into(),
            None,
            constants,
        ));
    }
    let w = report.solution.u.map(f64::abs);
    gronwall_certificate(CertificateKind::Gronwall, &w, kernels, c, constants, "|u|")
}

fn gronwall_certificate(
    kind: CertificateKind,
    w: &GridFunction,
    kernels: &Kernels,
    c: f64,
    constants: BTreeMap<String, f64>,
    what: &str,
) -> Result<Certificate> {
    let d = kernels.domain().clone();
    if let Some((idx, &v)) = w.values().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        let at = d.indices().nth(idx).expect("index in range");
        return Ok(Certificate::not_asserted(
            kind,
            Verdict::PremiseFailed,
            format!("{what} must be nonnegative"),
            Some(offender_at(&d, at, 0.0, v)),
            constants,
        ));
    }
    let rhs = gronwall_premise_rhs(w, kernels, c)?;
    if let Some(off) = violation(w, &rhs) {
        return Ok(Certificate::not_asserted(
            kind,
            Verdict::PremiseFailed,
            format!("integral premise fails: {what} exceeds c + ∫∫[p·{what} + ∫r·{what}]"),
            Some(off),
            constants,
        ));
    }
    let bound = gronwall_bound(kernels, c)?;
    let mut constants = constants;
    let (uniform, _) = tightest(&uniform_gronwall_bound(kernels, c)?, w);
    constants.insert("uniform_margin".into(), uniform);
    Ok(Certificate::compare(kind, bound, w.clone(), constants))
}

/// Smallest admissible contraction and growth constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimate {
    pub gamma: [f64; 3],
    pub eta: [f64; 3],
    pub gamma_sum: f64,
    pub contraction: bool,
    /// Left-hand sides whose ratio to the weight gives `gamma`.
    pub gamma_lhs: [GridFunction; 3],
    /// Left-hand sides whose ratio to the weight gives `eta`.
    pub eta_lhs: [GridFunction; 3],
    pub weights: GridFunction,
}

fn sup_ratio(lhs: &GridFunction, weights: &GridFunction) -> f64 {
    lhs.values()
        .iter()
        .zip(weights.values())
        .fold(0.0, |m, (a, e)| m.max(a / e))
}

/// Evaluates the double and single integrals of `M [E_λ + ∫ K E_λ Δq]` and of
/// the right-hand side at the zero triple, and divides by `E_λ`.
///
/// `M` and `K` are the Lipschitz moduli of the right-hand side and of the
/// integral kernel.
pub fn estimate_constants(spec: &ProblemSpec, m: &Expr, k: &Expr) -> Result<ConstantEstimate> {
    let prepared = PreparedProblem::new(spec)?;
    let d = spec.domain.clone();
    let n3 = d.z().len();
    let moduli = KernelPair::new(m.clone(), k.clone())
        .tabulate(&d)
        .map_err(|e| match e {
            Error::NegativeKernel { name, value, x, y, z } => Error::NegativeKernel {
                name: if name == "p" { "M" } else { "K" },
                value,
                x,
                y,
                z,
            },
            other => other,
        })?;
    let e = prepared.weights().clone();

    let g = GridFunction::from_index_fn(d.clone(), |i, j, kk| {
        let coupled = (0..n3).fold(0.0, |acc, q| {
            acc + d.z().mu_at(q) * moduli.r(i, j, kk, q) * e.get(i, j, q)
        });
        moduli.p().get(i, j, kk) * (e.get(i, j, kk) + coupled)
    });
    let gamma_lhs = [
        grid::double_integral_surface(&g),
        grid::cumulative_y(&g),
        grid::cumulative_x(&g),
    ];

    let zero = SolutionTriple::zero(d.clone());
    let h0 = prepared.integral_term(&zero)?;
    let f0 = prepared.rhs(&zero, &h0)?.map(f64::abs);
    let double = grid::double_integral_surface(&f0);
    let along_y = grid::cumulative_y(&f0);
    let along_x = grid::cumulative_x(&f0);
    let eta_lhs = [
        GridFunction::from_index_fn(d.clone(), |i, j, kk| {
            prepared.alpha(i, kk).abs()
                + prepared.beta(j, kk).abs()
                + prepared.alpha(0, kk).abs()
                + double.get(i, j, kk)
        }),
        GridFunction::from_index_fn(d.clone(), |i, j, kk| {
            prepared.alpha_d1(i, kk).abs() + along_y.get(i, j, kk)
        }),
        GridFunction::from_index_fn(d.clone(), |i, j, kk| {
            prepared.beta_d2(j, kk).abs() + along_x.get(i, j, kk)
        }),
    ];
    let gamma = [0, 1, 2].map(|n| sup_ratio(&gamma_lhs[n], &e));
    let eta = [0, 1, 2].map(|n| sup_ratio(&eta_lhs[n], &e));
    let gamma_sum = gamma.iter().sum::<f64>();
    Ok(ConstantEstimate {
        gamma,
        eta,
        gamma_sum,
        contraction: gamma_sum < 1.0,
        gamma_lhs,
        eta_lhs,
        weights: e,
    })
}

impl ConstantEstimate {
    pub fn constants(&self, lambda: f64) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for n in 0..3 {
            out.insert(format!("gamma{}", n + 1), self.gamma[n]);
            out.insert(format!("eta{}", n + 1), self.eta[n]);
        }
        out.insert("gamma".into(), self.gamma_sum);
        out.insert("lambda".into(), lambda);
        out
    }

    /// Passes iff `γ₁ + γ₂ + γ₃ < 1`. The observed surface is the pointwise
    /// contraction ratio, the bound is the constant 1.
    pub fn certificate(&self, lambda: f64) -> Certificate {
        let [a, b, c] = &self.gamma_lhs;
        let observed = GridFunction::from_index_fn(self.weights.domain().clone(), |i, j, k| {
            (a.get(i, j, k) + b.get(i, j, k) + c.get(i, j, k)) / self.weights.get(i, j, k)
        });
        let bound = GridFunction::constant(self.weights.domain().clone(), 1.0);
        let (_, worst) = tightest(&bound, &observed);
        Certificate {
            kind: CertificateKind::Contraction,
            verdict: if self.contraction { Verdict::Pass } else { Verdict::Fail },
            bound: Some(bound),
            observed: Some(observed),
            margin: 1.0 - self.gamma_sum,
            slack: 0.0,
            constants: self.constants(lambda),
            note: None,
            worst,
        }
    }
}

/// `max |α + β - α(x0,·)|` over the grid, the smallest admissible `c` for
/// the boundedness estimate.
pub fn condition_bound(spec: &ProblemSpec) -> Result<f64> {
    Ok(PreparedProblem::new(spec)?.condition_surface().max_abs())
}

fn require_reduced(spec: &ProblemSpec) -> Result<()> {
    if spec.equation.is_reduced() {
        Ok(())
    } else {
        Err(Error::Invalid("this certificate applies to the reduced equation only".into()))
    }
}

/// Scans the growth hypotheses on the solution and compares `|u|` against
/// `c · e_Q`.
pub fn boundedness_certificate(
    spec: &ProblemSpec,
    report: &SolveReport,
    kernels: &Kernels,
    c: f64,
) -> Result<Certificate> {
    require_reduced(spec)?;
    check_c("c", c)?;
    let kind = CertificateKind::Boundedness;
    let constants = BTreeMap::from([("c".to_string(), c), ("lambda".to_string(), spec.lambda)]);
    if !report.converged {
        return Ok(Certificate::not_asserted(
            kind,
            Verdict::Inconclusive,
            "solve did not converge".into(),
            None,
            constants,
        ));
    }
    let prepared = PreparedProblem::new(spec)?;
    let d = spec.domain.clone();
    let n3 = d.z().len();
    let sol = &report.solution;
    let hu = prepared.integral_term(sol)?;

    let f_abs = GridFunction::try_from_index_fn(d.clone(), |i, j, k| {
        Ok(prepared.reduced_rhs((i, j, k), sol.u.get(i, j, k), hu.get(i, j, k))?.abs())
    })?;
    let f_cap = GridFunction::from_index_fn(d.clone(), |i, j, k| {
        kernels.p().get(i, j, k) * (sol.u.get(i, j, k).abs() + hu.get(i, j, k).abs())
    });
    if let Some(off) = violation(&f_abs, &f_cap) {
        return Ok(premise(kind, "|f(u, hu)| <= p·(|u| + |hu|) fails", off, constants));
    }
    for at in d.indices() {
        for q in 0..n3 {
            let uq = sol.u.get(at.0, at.1, q);
            let jv = prepared.reduced_kernel(at, q, uq)?.abs();
            let cap = kernels.r(at.0, at.1, at.2, q) * uq.abs();
            if jv > cap + SLACK * (1.0 + cap) {
                return Ok(premise(
                    kind,
                    "|j(u)| <= r·|u| fails",
                    offender_at(&d, at, cap, jv),
                    constants,
                ));
            }
        }
    }
    let cond = prepared.condition_surface().map(f64::abs);
    let c_surface = GridFunction::constant(d.clone(), c);
    if let Some(off) = violation(&cond, &c_surface) {
        return Ok(premise(kind, "|α + β - α(x0,·)| <= c fails", off, constants));
    }
    gronwall_certificate(kind, &sol.u.map(f64::abs), kernels, c, constants, "|u|")
}

fn premise(
    kind: CertificateKind,
    note: &str,
    off: Offender,
    constants: BTreeMap<String, f64>,
) -> Certificate {
    Certificate::not_asserted(kind, Verdict::PremiseFailed, note.into(), Some(off), constants)
}

/// Solves both problems and compares `|u - v|` against `a · e_Q`, where `a`
/// is the grid max of the difference in condition surfaces.
pub fn dependence_certificate(
    spec1: &ProblemSpec,
    spec2: &ProblemSpec,
    kernels: &Kernels,
) -> Result<Certificate> {
    let r1 = solver::solve_picard(spec1, None)?;
    let r2 = solver::solve_picard(spec2, None)?;
    dependence_certificate_from(spec1, spec2, &r1, &r2, kernels)
}

/// [`dependence_certificate`] on existing solve reports.
pub fn dependence_certificate_from(
    spec1: &ProblemSpec,
    spec2: &ProblemSpec,
    r1: &SolveReport,
    r2: &SolveReport,
    kernels: &Kernels,
) -> Result<Certificate> {
    require_reduced(spec1)?;
    if *spec1.domain != *spec2.domain || spec1.equation != spec2.equation {
        return Err(Error::Invalid(
            "dependence needs two problems that differ only in their conditions".into(),
        ));
    }
    let kind = CertificateKind::Dependence;
    let p1 = PreparedProblem::new(spec1)?;
    let p2 = PreparedProblem::new(spec2)?;
    let gap = p1
        .condition_surface()
        .zip_with(&p2.condition_surface(), |a, b| (a - b).abs())?;
    let a = gap.max_abs();
    let constants = BTreeMap::from([("a".to_string(), a), ("lambda".to_string(), spec1.lambda)]);
    if !(r1.converged && r2.converged) {
        return Ok(Certificate::not_asserted(
            kind,
            Verdict::Inconclusive,
            "a solve did not converge".into(),
            None,
            constants,
        ));
    }
    let d = spec1.domain.clone();
    let n3 = d.z().len();
    let (u, v) = (&r1.solution, &r2.solution);
    let hu = p1.integral_term(u)?;
    let hv = p1.integral_term(v)?;

    let f_gap = GridFunction::try_from_index_fn(d.clone(), |i, j, k| {
        let fu = p1.reduced_rhs((i, j, k), u.u.get(i, j, k), hu.get(i, j, k))?;
        let fv = p1.reduced_rhs((i, j, k), v.u.get(i, j, k), hv.get(i, j, k))?;
        Ok((fu - fv).abs())
    })?;
    let f_cap = GridFunction::from_index_fn(d.clone(), |i, j, k| {
        kernels.p().get(i, j, k)
            * ((u.u.get(i, j, k) - v.u.get(i, j, k)).abs() + (hu.get(i, j, k) - hv.get(i, j, k)).abs())
    });
    if let Some(off) = violation(&f_gap, &f_cap) {
        return Ok(premise(kind, "Lipschitz bound on f fails along the two solutions", off, constants));
    }
    for at in d.indices() {
        for q in 0..n3 {
            let (uq, vq) = (u.u.get(at.0, at.1, q), v.u.get(at.0, at.1, q));
            let jv = (p1.reduced_kernel(at, q, uq)? - p1.reduced_kernel(at, q, vq)?).abs();
            let cap = kernels.r(at.0, at.1, at.2, q) * (uq - vq).abs();
            if jv > cap + SLACK * (1.0 + cap) {
                return Ok(premise(
                    kind,
                    "Lipschitz bound on j fails along the two solutions",
                    offender_at(&d, at, cap, jv),
                    constants,
                ));
            }
        }
    }
    let w = u.u.zip_with(&v.u, |a, b| (a - b).abs())?;
    gronwall_certificate(kind, &w, kernels, a, constants, "|u - v|")
}

/// Solves from two seeds and passes iff the results are within `2·tol` in
/// the S-norm. With kernels supplied, the grid max of
/// `∫∫ [p + ∫ r Δq] Δt Δs` is reported as `kernel_mass`.
pub fn uniqueness_check(
    spec: &ProblemSpec,
    kernels: Option<&Kernels>,
    seeds: (&SolutionTriple, &SolutionTriple),
) -> Result<Certificate> {
    let kind = CertificateKind::Uniqueness;
    let mut constants = BTreeMap::from([
        ("tol".to_string(), spec.tol),
        ("lambda".to_string(), spec.lambda),
    ]);
    if let Some(k) = kernels {
        let inner = k.p().zip_with(k.r_integral(), |a, b| a + b)?;
        constants.insert(
            "kernel_mass".into(),
            grid::double_integral_surface(&inner).max_abs(),
        );
    }
    let a = solver::solve_picard(spec, Some(seeds.0))?;
    let b = solver::solve_picard(spec, Some(seeds.1))?;
    if !(a.converged && b.converged) {
        return Ok(Certificate::not_asserted(
            kind,
            Verdict::Inconclusive,
            "a solve did not converge".into(),
            None,
            constants,
        ));
    }
    let diff = a.solution.sub(&b.solution)?;
    let weights = grid::weights(&spec.domain, spec.lambda)?;
    let distance = diff.s_norm_weighted(&weights);
    constants.insert("distance".into(), distance);
    let observed = GridFunction::from_index_fn(spec.domain.clone(), |i, j, k| diff.w_seminorm((i, j, k)));
    let bound = weights.map(|e| 2.0 * spec.tol * e);
    let mut cert = Certificate::compare(kind, bound, observed, constants);
    cert.slack = 0.0;
    cert.verdict = if distance <= 2.0 * spec.tol { Verdict::Pass } else { Verdict::Fail };
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::solver::{Condition, Equation, Forcing};
    use crate::timescale::{solve_first_order, TimeScale};
    use proptest::prelude::*;

    fn domain(n1: i64, n2: i64, z: &[f64]) -> Arc<ProductDomain> {
        Arc::new(
            ProductDomain::new(
                TimeScale::integers(0, n1).unwrap(),
                TimeScale::integers(0, n2).unwrap(),
                TimeScale::new(z.to_vec()).unwrap(),
            )
            .unwrap(),
        )
    }

    fn kernels(d: &Arc<ProductDomain>, p: &str, r: &str) -> Kernels {
        KernelPair::new(parse(p).unwrap(), parse(r).unwrap()).tabulate(d).unwrap()
    }

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn reduced(d: Arc<ProductDomain>, f: &str, j: &str, a: &str, b: &str) -> ProblemSpec {
        ProblemSpec::new(
            d,
            Equation::Reduced { f: e(f), j: e(j) },
            Condition::Expr(e(a)),
            Condition::Expr(e(b)),
            1.0,
            1e-12,
            500,
        )
        .unwrap()
    }

    #[test]
    fn q_examples() {
        let d = domain(2, 3, &[0.0, 1.0, 2.0]);
        assert_eq!(compute_q(&kernels(&d, "0", "0"), (1, 2, 0)), 0.0);
        let k = kernels(&d, "1", "0");
        assert_eq!(compute_q(&k, (1, 2, 1)), 2.0);
        assert_eq!(compute_q(&k, (1, 0, 1)), 0.0);
        assert_eq!(compute_q(&kernels(&d, "0", "1"), (0, 2, 2)), 4.0);
        let k = kernels(&d, "x + z", "q*y");
        let surf = q_surface(&k);
        for at in d.indices() {
            assert_eq!(surf.get(at.0, at.1, at.2), compute_q(&k, at));
        }
    }

    #[test]
    fn negative_kernels_are_refused() {
        let d = domain(2, 2, &[0.0, 1.0]);
        let r = KernelPair::new(e("x - 1"), e("0")).tabulate(&d);
        assert!(matches!(r, Err(Error::NegativeKernel { name: "p", .. })));
        let r = KernelPair::new(e("0"), e("q - 0.5")).tabulate(&d);
        assert!(matches!(r, Err(Error::NegativeKernel { name: "r", .. })));
        assert!(KernelPair::new(e("u"), e("0")).tabulate(&d).is_err());
    }

    #[test]
    fn bound_examples() {
        let d = domain(3, 3, &[0.0, 1.0]);
        let k = kernels(&d, "1", "0");
        assert!(gronwall_bound(&k, 0.0).unwrap().values().iter().all(|&v| v == 0.0));
        let zero = kernels(&d, "0", "0");
        assert!(gronwall_bound(&zero, 2.5).unwrap().values().iter().all(|&v| v == 2.5));
        let b = gronwall_bound(&k, 1.5).unwrap();
        assert_eq!(b.get(2, 2, 0), 9.0 * 1.5);
        for j in 0..4 {
            assert_eq!(b.get(0, j, 1), 1.5);
        }
        assert!(gronwall_bound(&k, -1.0).is_err());
    }

    #[test]
    fn constant_w_passes() {
        let d = domain(3, 2, &[0.0, 0.5, 1.0]);
        let k = kernels(&d, "x*y + 0.1", "z*q + 0.2");
        let w = GridFunction::constant(d, 2.0);
        let cert = verify_gronwall(&w, &k, 2.0).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass);
    }

    #[test]
    fn inflated_w_never_passes_silently() {
        let d = domain(3, 3, &[0.0, 1.0]);
        let k = kernels(&d, "1", "0");
        let w = gronwall_bound(&k, 1.0).unwrap().map(|v| 1.5 * v);
        let cert = verify_gronwall(&w, &k, 1.0).unwrap();
        assert_ne!(cert.verdict, Verdict::Pass);
        assert!(cert.note.is_some() || cert.margin < 0.0);
    }

    #[test]
    fn negative_w_is_a_premise_failure() {
        let d = domain(2, 2, &[0.0, 1.0]);
        let w = GridFunction::constant(d.clone(), -1.0);
        let cert = verify_gronwall(&w, &Kernels::zero(d), 1.0).unwrap();
        assert_eq!(cert.verdict, Verdict::PremiseFailed);
    }

    /// `r` routes a fast-growing slice (z = 1) into a quiet one (z = 0). The
    /// integral premise holds with equality but the per-slice bound does
    /// not; the z-uniform bound does.
    #[test]
    fn coupled_slices_break_the_per_slice_bound() {
        let d = domain(2, 2, &[0.0, 1.0, 2.0]);
        let k = kernels(
            &d,
            "100*max(0, 1 - abs(z - 1))",
            "max(0, 1 - z)*max(0, 1 - abs(q - 1))",
        );
        let zero = GridFunction::zeros(d.clone());
        let mut w = zero.clone();
        // fixed-point iteration of the premise with equality; exact after a
        // few sweeps on this nilpotent structure
        for _ in 0..10 {
            w = gronwall_premise_rhs(&w, &k, 1.0).unwrap();
        }
        assert_eq!(w.get(2, 2, 0), 105.0);
        let cert = verify_gronwall(&w, &k, 1.0).unwrap();
        assert_eq!(cert.verdict, Verdict::Fail);
        assert_eq!(cert.worst.unwrap().bound, 9.0);
        let uniform = uniform_gronwall_bound(&k, 1.0).unwrap();
        for (b, v) in uniform.values().iter().zip(w.values()) {
            assert!(b >= v);
        }
    }

    #[test]
    fn lemma_agrees_when_r_vanishes() {
        let d = Arc::new(
            ProductDomain::new(
                TimeScale::qscale(1.0, 1.3, 6).unwrap(),
                TimeScale::uniform(0.0, 2.0, 5).unwrap(),
                TimeScale::integers(0, 2).unwrap(),
            )
            .unwrap(),
        );
        let k = kernels(&d, "0.3 + x*y/(1 + z)", "0");
        let c = 1.7;
        let bound = gronwall_bound(&k, c).unwrap();
        let q = q_surface(&k);
        let (n1, n2, n3) = d.shape();
        for j in 0..n2 {
            for kk in 0..n3 {
                let a = |x: f64| q.get(d.t1().index_of(x).unwrap(), j, kk);
                let lemma = solve_first_order(a, c, d.t1()).unwrap();
                for i in 0..n1 {
                    let b = bound.get(i, j, kk);
                    assert!((lemma.values()[i] - b).abs() <= 1e-12 * b);
                }
            }
        }
    }

    #[test]
    fn zero_moduli_give_zero_gamma() {
        let d = domain(2, 2, &[0.0, 1.0]);
        let spec = reduced(d, "0", "0", "0", "0");
        let est = estimate_constants(&spec, &e("0"), &e("0")).unwrap();
        assert_eq!(est.gamma, [0.0; 3]);
        assert_eq!(est.eta, [0.0; 3]);
        assert!(est.contraction);
        assert!(est.certificate(1.0).pass());
    }

    /// Direct quadruple sum for the first contraction constant.
    fn gamma1_oracle(d: &ProductDomain, m: f64, lambda: f64) -> f64 {
        let (n1, n2, n3) = d.shape();
        let weight = |i: usize, j: usize, k: usize| {
            let mut e = 1.0;
            for s in 0..i {
                e *= 1.0 + lambda * d.t1().mu_at(s);
            }
            for t in 0..j {
                e *= 1.0 + lambda * d.t2().mu_at(t);
            }
            for q in 0..k {
                e *= 1.0 + lambda * d.z().mu_at(q);
            }
            e
        };
        let mut best = 0.0f64;
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    let mut sum = 0.0;
                    for s in 0..i {
                        for t in 0..j {
                            sum += d.t1().mu_at(s) * d.t2().mu_at(t) * m * weight(s, t, k);
                        }
                    }
                    best = best.max(sum / weight(i, j, k));
                }
            }
        }
        best
    }

    #[test]
    fn gamma1_matches_direct_sum() {
        let d = domain(2, 2, &[0.0, 1.0]);
        let spec = reduced(d.clone(), "0.3*u", "0", "1", "1");
        let est = estimate_constants(&spec, &e("0.3"), &e("0")).unwrap();
        let oracle = gamma1_oracle(&d, 0.3, 1.0);
        assert!((est.gamma[0] - oracle).abs() <= 1e-15);
        // (2^2 - 1)^2 / 2^4 at the far corner
        assert!((oracle - 0.3 * 9.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_is_minimal() {
        let d = domain(3, 3, &[0.0, 0.5, 1.0]);
        let spec = reduced(d, "0.1*u", "0.2*u", "1", "1");
        let est = estimate_constants(&spec, &e("0.1 + 0.05*x"), &e("0.2*q")).unwrap();
        for n in 0..3 {
            let g = est.gamma[n];
            let lhs = &est.gamma_lhs[n];
            let margin = lhs
                .values()
                .iter()
                .zip(est.weights.values())
                .fold(f64::INFINITY, |m, (l, w)| m.min(g * w - l));
            assert!(margin >= -1e-12);
            let shrunk = g * (1.0 - 1e-6);
            assert!(lhs.values().iter().zip(est.weights.values()).any(|(l, w)| *l > shrunk * w));
        }
    }

    #[test]
    fn darboux_boundedness_and_scaling() {
        let d = domain(4, 4, &[0.0, 1.0]);
        let k = kernels(&d, "1", "0");
        for (cond, c) in [("1", 1.0), ("2", 2.0)] {
            let spec = reduced(d.clone(), "u", "0", cond, cond);
            let report = solver::solve_picard(&spec, None).unwrap();
            assert_eq!(condition_bound(&spec).unwrap(), c);
            let cert = boundedness_certificate(&spec, &report, &k, c).unwrap();
            assert_eq!(cert.verdict, Verdict::Pass, "{:?}", cert.note);
        }
        // f = 0: |u| = 1 = bound everywhere
        let spec = reduced(d.clone(), "0", "0", "1", "1");
        let report = solver::solve_picard(&spec, None).unwrap();
        let cert = boundedness_certificate(&spec, &report, &k, 1.0).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass);
        assert_eq!(cert.margin, 0.0);
        // understated p: growth premise fails, nothing asserted
        let spec = reduced(d.clone(), "u", "0", "1", "1");
        let report = solver::solve_picard(&spec, None).unwrap();
        let cert = boundedness_certificate(&spec, &report, &kernels(&d, "0.5", "0"), 1.0).unwrap();
        assert_eq!(cert.verdict, Verdict::PremiseFailed);
    }

    #[test]
    fn boundedness_requires_reduced_problem() {
        let d = domain(2, 2, &[0.0, 1.0]);
        let spec = ProblemSpec::new(
            d.clone(),
            Equation::Full {
                forcing: Forcing::Expr(e("0")),
                kernel: e("0"),
            },
            Condition::Expr(e("1")),
            Condition::Expr(e("1")),
            1.0,
            1e-9,
            10,
        )
        .unwrap();
        let report = solver::solve_picard(&spec, None).unwrap();
        assert!(boundedness_certificate(&spec, &report, &Kernels::zero(d), 1.0).is_err());
    }

    #[test]
    fn dependence_examples() {
        let d = domain(4, 4, &[0.0, 1.0]);
        let k = kernels(&d, "1", "0");
        let base = reduced(d.clone(), "u", "0", "1", "1");
        let same = dependence_certificate(&base, &base, &k).unwrap();
        assert_eq!(same.verdict, Verdict::Pass);
        assert_eq!(same.margin, 0.0);
        assert_eq!(same.constants["a"], 0.0);

        let shifted = base.with_conditions(Condition::Expr(e("1.1")), Condition::Expr(e("1.1"))).unwrap();
        let cert = dependence_certificate(&base, &shifted, &k).unwrap();
        assert!((cert.constants["a"] - 0.1).abs() < 1e-12);
        assert_eq!(cert.verdict, Verdict::Pass, "{:?}", cert.note);

        // shifting alpha alone: alpha - alpha(x0) cancels, beta is untouched
        let alpha_only = base.with_conditions(Condition::Expr(e("1.5")), Condition::Expr(e("1"))).unwrap();
        let cert = dependence_certificate(&base, &alpha_only, &k).unwrap();
        assert_eq!(cert.constants["a"], 0.0);

        let other = reduced(domain(3, 3, &[0.0, 1.0]), "u", "0", "1", "1");
        assert!(dependence_certificate(&base, &other, &k).is_err());
    }

    #[test]
    fn uniqueness_examples() {
        let d = domain(3, 3, &[0.0, 1.0]);
        let spec = reduced(d.clone(), "0.5*u + 0.1*Hu", "0.3*u*q", "1 + x", "1 + y");
        let zero = SolutionTriple::zero(d.clone());
        let noise = SolutionTriple::differentiate(GridFunction::from_fn(d.clone(), |x, y, z| {
            (3.0 * x + y * z).sin()
        }))
        .unwrap();
        let k = kernels(&d, "0.5", "0.3*q");
        let cert = uniqueness_check(&spec, Some(&k), (&zero, &noise)).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass);
        assert!(cert.constants["kernel_mass"].is_finite());

        let mut short = spec.clone();
        short.max_iter = 1;
        let cert = uniqueness_check(&short, None, (&zero, &noise)).unwrap();
        assert_eq!(cert.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn certificates_are_deterministic() {
        let d = domain(3, 3, &[0.0, 1.0]);
        let k = kernels(&d, "1", "0");
        let spec = reduced(d, "u", "0", "1", "1");
        let r = solver::solve_picard(&spec, None).unwrap();
        let a = boundedness_certificate(&spec, &r, &k, 1.0).unwrap();
        let b = boundedness_certificate(&spec, &r, &k, 1.0).unwrap();
        assert_eq!(a.to_json_line(), b.to_json_line());
        assert_eq!(a.bound, b.bound);
        let json: serde_json::Value = serde_json::from_str(&a.to_json_line()).unwrap();
        assert_eq!(json["kind"], "boundedness");
        assert_eq!(json["pass"], true);
    }

    fn small_grid() -> impl Strategy<Value = (Arc<ProductDomain>, Vec<f64>, Vec<f64>, f64)> {
        (2usize..5, 2usize..5, 2usize..4)
            .prop_flat_map(|(n1, n2, n3)| {
                let d = Arc::new(
                    ProductDomain::new(
                        TimeScale::uniform(0.0, 1.0, n1).unwrap(),
                        TimeScale::integers(0, n2 as i64 - 1).unwrap(),
                        TimeScale::uniform(0.0, 0.5, n3).unwrap(),
                    )
                    .unwrap(),
                );
                let n = d.len();
                (
                    Just(d),
                    prop::collection::vec(0.0f64..2.0, n),
                    prop::collection::vec(0.0f64..2.0, n * n3),
                    0.0f64..5.0,
                )
            })
    }

    proptest! {
        #[test]
        fn bound_is_monotone((d, p, r, c) in small_grid(), bump in 0.0f64..1.0) {
            let base = Kernels::new(GridFunction::new(d.clone(), p.clone()).unwrap(), r.clone()).unwrap();
            let b0 = gronwall_bound(&base, c).unwrap();
            let more_c = gronwall_bound(&base, c + bump).unwrap();
            let more_p = gronwall_bound(
                &Kernels::new(GridFunction::new(d.clone(), p.iter().map(|v| v + bump).collect()).unwrap(), r.clone()).unwrap(),
                c,
            ).unwrap();
            let more_r = gronwall_bound(
                &Kernels::new(GridFunction::new(d.clone(), p).unwrap(), r.iter().map(|v| v + bump).collect()).unwrap(),
                c,
            ).unwrap();
            for idx in 0..b0.values().len() {
                let v = b0.values()[idx];
                prop_assert!(more_c.values()[idx] >= v);
                prop_assert!(more_p.values()[idx] >= v);
                prop_assert!(more_r.values()[idx] >= v);
            }
        }
    }
}
