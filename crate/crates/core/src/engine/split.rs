use super::{EngineError, MonomialSos, Term};

/// Terms split by whether their target is nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct PartSplit {
    /// Terms with `c != 0`, in full coordinates.
    pub nonzero_terms: Vec<Term>,
    /// Exponents of the `c == 0` terms restricted to `rest`.
    pub zero_terms: Vec<Vec<u32>>,
    /// Coordinates used by some nonzero term, ascending.
    pub first: Vec<usize>,
    /// All other coordinates, ascending.
    pub rest: Vec<usize>,
}

pub fn split_parts(m: &MonomialSos) -> Result<PartSplit, EngineError> {
    let mut in_first = vec![false; m.dim];
    let nonzero_terms: Vec<Term> = m.terms.iter().filter(|t| t.c != 0.0).cloned().collect();
    for t in &nonzero_terms {
        for (j, &e) in t.u.iter().enumerate() {
            if e > 0 {
                in_first[j] = true;
            }
        }
    }
    let first: Vec<usize> = (0..m.dim).filter(|&j| in_first[j]).collect();
    let rest: Vec<usize> = (0..m.dim).filter(|&j| !in_first[j]).collect();
    let mut zero_terms = Vec::new();
    for (i, t) in m.terms.iter().enumerate().filter(|(_, t)| t.c == 0.0) {
        let projected: Vec<u32> = rest.iter().map(|&j| t.u[j]).collect();
        // Some coordinate of the term must be able to vanish.
        let can_vanish = rest.iter().any(|&j| t.u[j] > 0 && m.domain[j].contains_zero());
        if !can_vanish {
            return Err(EngineError::EmptyZeroSet(i));
        }
        zero_terms.push(projected);
    }
    Ok(PartSplit { nonzero_terms, zero_terms, first, rest })
}
