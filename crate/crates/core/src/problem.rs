//! The plain-text problem file.
//!
//! ```text
//! # comments run to end of line
//! [domain]
//! t1 = integers(0, 6)          # or uniform(start, stop, n), qscale(t0, q, n), points(v1, v2, ...)
//! t2 = integers(0, 6)
//! zscale = points(0, 1)
//!
//! [equation]
//! kind = reduced               # reduced: f, j    full: F, G
//! f = u
//! j = 0
//!
//! [conditions]
//! alpha = 1                    # alpha(x, z)
//! beta = 1                     # beta(y, z)
//!
//! [weights]
//! lambda = 1
//! tol = 1e-10
//! max_iter = 200
//!
//! [kernels]                    # optional; every key optional
//! p = 1
//! r = 0
//! M = 0.1
//! K = 0.1
//!
//! [conditions2]                # optional; second problem for dependence
//! alpha2 = 1.1
//! beta2 = 1.1
//! ```
//!
//! Numbers are plain decimals. Every section other than `[kernels]` and
//! `[conditions2]` is required, and every key may appear once.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{parse, Expr, Var};
use crate::grid::ProductDomain;
use crate::solver::{self, Condition, Equation, Forcing, ProblemSpec};
use crate::timescale::TimeScale;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ProblemError {
    /// 1-based; `None` for whole-file problems such as a missing section.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ProblemError> {
    Err(ProblemError {
        line: Some(line),
        message: message.into(),
    })
}

fn missing<T>(message: impl Into<String>) -> Result<T, ProblemError> {
    Err(ProblemError {
        line: None,
        message: message.into(),
    })
}

/// Optional `[kernels]` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelSection {
    pub p: Option<Expr>,
    pub r: Option<Expr>,
    pub m: Option<Expr>,
    pub k: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub spec: ProblemSpec,
    pub kernels: Option<KernelSection>,
    /// `(alpha2, beta2)`.
    pub conditions2: Option<(Condition, Condition)>,
}

impl ProblemFile {
    /// The problem with `[conditions2]` substituted, if present.
    pub fn second(&self) -> Option<ProblemSpec> {
        let (a, b) = self.conditions2.clone()?;
        Some(ProblemSpec {
            alpha: a,
            beta: b,
            ..self.spec.clone()
        })
    }
}

const SECTIONS: [&str; 6] = ["domain", "equation", "conditions", "weights", "kernels", "conditions2"];

fn keys_for(section: &str) -> &'static [&'static str] {
    match section {
        "domain" => &["t1", "t2", "zscale"],
        "equation" => &["kind", "F", "G", "f", "j"],
        "conditions" => &["alpha", "beta"],
        "weights" => &["lambda", "tol", "max_iter"],
        "kernels" => &["p", "r", "M", "K"],
        "conditions2" => &["alpha2", "beta2"],
        _ => &[],
    }
}

fn allowed_vars(key: &str) -> &'static [Var] {
    match key {
        "F" => &solver::F_VARS,
        "G" => &solver::G_VARS,
        "f" => &solver::REDUCED_F_VARS,
        "j" => &solver::J_VARS,
        "alpha" | "alpha2" => &[Var::X, Var::Z],
        "beta" | "beta2" => &[Var::Y, Var::Z],
        "p" | "M" => &[Var::X, Var::Y, Var::Z],
        "r" | "K" => &[Var::X, Var::Y, Var::Z, Var::Q],
        _ => &[],
    }
}

struct Entry {
    line: usize,
    value: String,
}

type Sections = HashMap<String, HashMap<String, Entry>>;

fn split_lines(text: &str) -> Result<Sections, ProblemError> {
    let mut sections: Sections = HashMap::new();
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(line, format!("malformed section header '{body}'"));
            };
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return err(line, format!("unknown section [{name}]"));
            }
            if sections.contains_key(name) {
                return err(line, format!("section [{name}] appears twice"));
            }
            sections.insert(name.to_string(), HashMap::new());
            current = Some(name.to_string());
            continue;
        }
        let Some(section) = &current else {
            return err(line, "expected a [section] header before any entries");
        };
        let Some((key, value)) = body.split_once('=') else {
            return err(line, format!("expected 'key = value', got '{body}'"));
        };
        let (key, value) = (key.trim(), value.trim());
        if !keys_for(section).contains(&key) {
            return err(
                line,
                format!(
                    "unknown key '{key}' in [{section}]; expected one of {}",
                    keys_for(section).join(", ")
                ),
            );
        }
        if value.is_empty() {
            return err(line, format!("'{key}' has no value"));
        }
        let entries = sections.get_mut(section).expect("section registered above");
        if entries.contains_key(key) {
            return err(line, format!("'{key}' given twice in [{section}]"));
        }
        entries.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(sections)
}

fn number(e: &Entry, what: &str) -> Result<f64, ProblemError> {
    let ok = !e.value.is_empty()
        && e.value
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    match e.value.parse::<f64>() {
        Ok(v) if ok && v.is_finite() => Ok(v),
        _ => err(e.line, format!("{what}: '{}' is not a finite decimal number", e.value)),
    }
}

fn integer<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T, ProblemError> {
    s.trim()
        .parse::<T>()
        .or_else(|_| err(line, format!("{what}: '{}' is not an integer", s.trim())))
}

fn decimal(line: usize, s: &str, what: &str) -> Result<f64, ProblemError> {
    number(
        &Entry {
            line,
            value: s.trim().to_string(),
        },
        what,
    )
}

fn scale(e: &Entry, key: &str) -> Result<TimeScale, ProblemError> {
    let v = e.value.as_str();
    let (name, args) = match (v.find('('), v.strip_suffix(')')) {
        (Some(open), Some(inner)) => (v[..open].trim(), &inner[open + 1..]),
        _ => return err(e.line, format!("{key}: expected constructor(args), got '{v}'")),
    };
    let args: Vec<&str> = if args.trim().is_empty() {
        Vec::new()
    } else {
        args.split(',').collect()
    };
    let arity = |n: usize| -> Result<(), ProblemError> {
        if args.len() == n {
            Ok(())
        } else {
            err(e.line, format!("{key}: {name} takes {n} arguments, got {}", args.len()))
        }
    };
    let built = match name {
        "uniform" => {
            arity(3)?;
            TimeScale::uniform(
                decimal(e.line, args[0], key)?,
                decimal(e.line, args[1], key)?,
                integer(e.line, args[2], key)?,
            )
        }
        "integers" => {
            arity(2)?;
            TimeScale::integers(integer(e.line, args[0], key)?, integer(e.line, args[1], key)?)
        }
        "qscale" => {
            arity(3)?;
            TimeScale::qscale(
                decimal(e.line, args[0], key)?,
                decimal(e.line, args[1], key)?,
                integer(e.line, args[2], key)?,
            )
        }
        "points" => {
            if args.is_empty() {
                return err(e.line, format!("{key}: points needs at least one value"));
            }
            let pts = args
                .iter()
                .map(|a| decimal(e.line, a, key))
                .collect::<Result<Vec<_>, _>>()?;
            TimeScale::new(pts)
        }
        other => {
            return err(
                e.line,
                format!("{key}: unknown constructor '{other}'; expected uniform, integers, qscale or points"),
            )
        }
    };
    built.or_else(|x| err(e.line, format!("{key}: {x}")))
}

fn expression(e: &Entry, key: &str) -> Result<Expr, ProblemError> {
    let ex = parse(&e.value).or_else(|x| err(e.line, format!("{key}: {x}")))?;
    let allowed = allowed_vars(key);
    if let Some(v) = ex.variables().into_iter().find(|v| !allowed.contains(v)) {
        return err(
            e.line,
            format!(
                "{key} may not reference {}; allowed: {}",
                v.name(),
                allowed.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
            ),
        );
    }
    Ok(ex)
}

fn section<'s>(s: &'s Sections, name: &str) -> Result<&'s HashMap<String, Entry>, ProblemError> {
    s.get(name)
        .map_or_else(|| missing(format!("missing required section [{name}]")), Ok)
}

fn required<'s>(sec: &'s HashMap<String, Entry>, section: &str, key: &str) -> Result<&'s Entry, ProblemError> {
    sec.get(key)
        .map_or_else(|| missing(format!("[{section}] is missing '{key}'")), Ok)
}

fn optional_expr(sec: &HashMap<String, Entry>, key: &str) -> Result<Option<Expr>, ProblemError> {
    sec.get(key).map(|e| expression(e, key)).transpose()
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, ProblemError> {
    let s = split_lines(text)?;

    let dom = section(&s, "domain")?;
    let t1 = scale(required(dom, "domain", "t1")?, "t1")?;
    let t2 = scale(required(dom, "domain", "t2")?, "t2")?;
    let z = scale(required(dom, "domain", "zscale")?, "zscale")?;
    let domain = ProductDomain::new(t1, t2, z).or_else(|x| {
        err(required(dom, "domain", "t1")?.line, x.to_string())
    })?;

    let eq = section(&s, "equation")?;
    let kind = required(eq, "equation", "kind")?;
    let equation = match kind.value.as_str() {
        "full" => {
            for k in ["f", "j"] {
                if let Some(e) = eq.get(k) {
                    return err(e.line, format!("'{k}' belongs to kind = reduced; use F and G"));
                }
            }
            Equation::Full {
                forcing: Forcing::Expr(expression(required(eq, "equation", "F")?, "F")?),
                kernel: expression(required(eq, "equation", "G")?, "G")?,
            }
        }
        "reduced" => {
            for k in ["F", "G"] {
                if let Some(e) = eq.get(k) {
                    return err(e.line, format!("'{k}' belongs to kind = full; use f and j"));
                }
            }
            Equation::Reduced {
                f: expression(required(eq, "equation", "f")?, "f")?,
                j: expression(required(eq, "equation", "j")?, "j")?,
            }
        }
        other => return err(kind.line, format!("kind must be full or reduced, got '{other}'")),
    };

    let cond = section(&s, "conditions")?;
    let alpha = expression(required(cond, "conditions", "alpha")?, "alpha")?;
    let beta = expression(required(cond, "conditions", "beta")?, "beta")?;

    let w = section(&s, "weights")?;
    let lambda_e = required(w, "weights", "lambda")?;
    let lambda = number(lambda_e, "lambda")?;
    if lambda <= 0.0 {
        return err(lambda_e.line, "lambda must be positive");
    }
    let tol_e = required(w, "weights", "tol")?;
    let tol = number(tol_e, "tol")?;
    if tol <= 0.0 {
        return err(tol_e.line, "tol must be positive");
    }
    let it = required(w, "weights", "max_iter")?;
    let max_iter: usize = integer(it.line, &it.value, "max_iter")?;
    if max_iter == 0 {
        return err(it.line, "max_iter must be at least 1");
    }

    let kernels = match s.get("kernels") {
        Some(k) => Some(KernelSection {
            p: optional_expr(k, "p")?,
            r: optional_expr(k, "r")?,
            m: optional_expr(k, "M")?,
            k: optional_expr(k, "K")?,
        }),
        None => None,
    };
    let conditions2 = match s.get("conditions2") {
        Some(c) => Some((
            Condition::Expr(expression(required(c, "conditions2", "alpha2")?, "alpha2")?),
            Condition::Expr(expression(required(c, "conditions2", "beta2")?, "beta2")?),
        )),
        None => None,
    };

    let spec = ProblemSpec::new(
        Arc::new(domain),
        equation,
        Condition::Expr(alpha),
        Condition::Expr(beta),
        lambda,
        tol,
        max_iter,
    )
    .or_else(|x| missing(x.to_string()))?;
    Ok(ProblemFile {
        spec,
        kernels,
        conditions2,
    })
}
