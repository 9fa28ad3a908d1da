//! Learning coefficients of monomial sum-of-squares phase functions
//! `H(w) = sum_i (w^{u_i} - c_i)^2` over a box.
//!
//! Terms with `c != 0` fix a fiber whose codimension contributes `lambda_1`;
//! the remaining terms, projected off that fiber, define a Newton polyhedron
//! whose distance along the diagonal gives `1 / lambda_0` and the multiplicity.

mod codim;
mod exact;
mod newton;
mod split;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest_rlct::Rlct;

pub use codim::nonzero_codim;
pub use newton::{newton_facets, one_distance_mult, Facet, NewtonPolyhedron, MAX_HULL_DIM};
pub use split::{split_parts, PartSplit};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("term {0} has target zero but cannot vanish on the fiber of the nonzero part")]
    EmptyZeroSet(usize),
    #[error("the nonzero fiber meets the domain only on its boundary")]
    NoInteriorSolution,
    #[error("no sign pattern solves the nonzero part inside the domain")]
    EmptyFiber,
    #[error("Newton polyhedron in dimension {dim} exceeds the limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("too many sign patterns to enumerate ({0} free coordinates)")]
    TooManyOrthants(usize),
    #[error("integer overflow in exact arithmetic")]
    Overflow,
    #[error("invalid system: {0}")]
    Invalid(String),
}

/// Closed interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub u: Vec<u32>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonomialSos {
    pub dim: usize,
    pub terms: Vec<Term>,
    pub domain: Vec<Interval>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Endpoint {
    Num(f64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    u: Vec<u32>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct SosJson {
    dim: usize,
    terms: Vec<TermJson>,
    domain: Vec<[Option<Endpoint>; 2]>,
}

fn parse_endpoint(e: Option<Endpoint>, lower: bool) -> Result<f64, EngineError> {
    let unbounded = if lower { f64::NEG_INFINITY } else { f64::INFINITY };
    match e {
        None => Ok(unbounded),
        Some(Endpoint::Num(x)) => Ok(x),
        Some(Endpoint::Text(s)) => match s.trim() {
            "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
            "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            other => Err(EngineError::Invalid(format!("bad interval endpoint {other:?}"))),
        },
    }
}

fn write_endpoint(x: f64) -> Option<Endpoint> {
    if x == f64::INFINITY {
        Some(Endpoint::Text("inf".into()))
    } else if x == f64::NEG_INFINITY {
        Some(Endpoint::Text("-inf".into()))
    } else {
        Some(Endpoint::Num(x))
    }
}

impl MonomialSos {
    /// `{"dim":d,"terms":[{"u":[..],"c":0.0}],"domain":[[lo,hi],..]}`; an
    /// endpoint may be `null` or `"inf"`/`"-inf"` for an unbounded side.
    pub fn from_json(s: &str) -> Result<MonomialSos, EngineError> {
        let j: SosJson = serde_json::from_str(s).map_err(|e| EngineError::Invalid(e.to_string()))?;
        let mut domain = Vec::with_capacity(j.domain.len());
        for [lo, hi] in j.domain {
            domain.push(Interval::new(parse_endpoint(lo, true)?, parse_endpoint(hi, false)?));
        }
        let m = MonomialSos {
            dim: j.dim,
            terms: j.terms.into_iter().map(|t| Term { u: t.u, c: t.c }).collect(),
            domain,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let j = SosJson {
            dim: self.dim,
            terms: self.terms.iter().map(|t| TermJson { u: t.u.clone(), c: t.c }).collect(),
            domain: self.domain.iter().map(|i| [write_endpoint(i.lo), write_endpoint(i.hi)]).collect(),
        };
        serde_json::to_string(&j).expect("system json")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.terms.is_empty() {
            return Err(EngineError::Invalid("no terms".into()));
        }
        if self.domain.len() != self.dim {
            return Err(EngineError::Invalid(format!("{} intervals for dimension {}", self.domain.len(), self.dim)));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if t.u.len() != self.dim {
                return Err(EngineError::Invalid(format!("term {i} has {} exponents", t.u.len())));
            }
            if !t.c.is_finite() {
                return Err(EngineError::Invalid(format!("term {i} has a non-finite target")));
            }
        }
        for (j, iv) in self.domain.iter().enumerate() {
            if iv.lo.is_nan() || iv.hi.is_nan() || iv.lo > iv.hi {
                return Err(EngineError::Invalid(format!("interval {j} is empty")));
            }
        }
        Ok(())
    }

    /// Evaluates the phase function at `w`.
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let m: f64 = t.u.iter().zip(w).map(|(&e, &x)| x.powi(e as i32)).product();
                (m - t.c) * (m - t.c)
            })
            .sum()
    }
}

/// `(lambda_1 + lambda_0, mult)` for a monomial sum of squares. Compactness
/// of the zero set is the caller's responsibility.
pub fn rlct_monomial_sos(m: &MonomialSos) -> Result<Rlct, EngineError> {
    m.validate()?;
    let split = split_parts(m)?;
    let lambda1 = nonzero_codim(&split, &m.domain)? as i64;
    if split.zero_terms.is_empty() {
        return Ok(Rlct::integer(lambda1, 1));
    }
    let poly = newton_facets(&split.zero_terms, split.rest.len())?;
    let (t, mult) = one_distance_mult(&poly);
    let lambda0 = t.recip();
    let lambda = Ratio::from_integer(lambda1) + lambda0;
    Ok(Rlct::new(lambda, mult))
}
