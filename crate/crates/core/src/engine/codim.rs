use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::exact::{gf2_solvable, rank};
use super::{EngineError, Interval, PartSplit};

const MAX_FREE_SIGNS: usize = 16;
const SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Reach {
    Outside,
    Boundary,
    Interior,
}

/// Codimension of the fiber cut out by the nonzero-target terms.
///
/// In log coordinates `x_j = ln|w_j|` each term becomes the linear equation
/// `u_i . x = ln|c_i|`, so the codimension is the rank of the exponent matrix
/// once some sign pattern of the coordinates solves the system inside the
/// domain. Sign patterns are checked by parity, the box by a linear program.
pub fn nonzero_codim(split: &PartSplit, domain: &[Interval]) -> Result<usize, EngineError> {
    if split.nonzero_terms.is_empty() {
        return Ok(0);
    }
    let cols = &split.first;
    let u: Vec<Vec<i128>> = split
        .nonzero_terms
        .iter()
        .map(|t| cols.iter().map(|&j| t.u[j] as i128).collect())
        .collect();
    let target: Vec<f64> = split.nonzero_terms.iter().map(|t| t.c.abs().ln()).collect();
    let negative: Vec<bool> = split.nonzero_terms.iter().map(|t| t.c < 0.0).collect();

    // Per column: Some(bit) when the sign is forced, None when free.
    let mut forced: Vec<Option<bool>> = Vec::with_capacity(cols.len());
    let mut asym = Vec::new();
    for (k, &j) in cols.iter().enumerate() {
        let iv = domain[j];
        match (iv.hi > 0.0, iv.lo < 0.0) {
            (false, false) => return Err(EngineError::EmptyFiber),
            (true, false) => forced.push(Some(false)),
            (false, true) => forced.push(Some(true)),
            (true, true) => {
                forced.push(None);
                if iv.lo != -iv.hi {
                    asym.push(k);
                }
            }
        }
    }
    if asym.len() > MAX_FREE_SIGNS {
        return Err(EngineError::TooManyOrthants(asym.len()));
    }

    let mut best = Reach::Outside;
    for pattern in 0u32..(1 << asym.len()) {
        let mut bits = forced.clone();
        for (b, &k) in asym.iter().enumerate() {
            bits[k] = Some(pattern >> b & 1 == 1);
        }
        let free: Vec<usize> = (0..cols.len()).filter(|&k| bits[k].is_none()).collect();
        let rows: Vec<Vec<bool>> = u.iter().map(|r| free.iter().map(|&k| r[k] % 2 == 1).collect()).collect();
        let rhs: Vec<bool> = u
            .iter()
            .zip(&negative)
            .map(|(r, &neg)| {
                let fixed = (0..cols.len()).filter(|&k| bits[k] == Some(true) && r[k] % 2 == 1).count();
                neg ^ (fixed % 2 == 1)
            })
            .collect();
        if !gf2_solvable(rows, rhs) {
            continue;
        }
        let boxes: Vec<(f64, f64)> = cols
            .iter()
            .zip(&bits)
            .map(|(&j, b)| {
                let iv = domain[j];
                let (a, z) = match b {
                    Some(true) => ((-iv.hi).max(0.0), -iv.lo),
                    _ => (iv.lo.max(0.0), iv.hi),
                };
                (if a > 0.0 { a.ln() } else { f64::NEG_INFINITY }, z.ln())
            })
            .collect();
        best = best.max(reach(&u, &target, &boxes));
        if best == Reach::Interior {
            break;
        }
    }
    match best {
        Reach::Interior => rank(&u),
        Reach::Boundary => Err(EngineError::NoInteriorSolution),
        Reach::Outside => Err(EngineError::EmptyFiber),
    }
}

/// Largest margin `s` with `U x = b` and `lo + s <= x <= hi - s`.
fn reach(u: &[Vec<i128>], b: &[f64], boxes: &[(f64, f64)]) -> Reach {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let xs: Vec<_> = boxes.iter().map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let s = lp.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    for (row, &rhs) in u.iter().zip(b) {
        let expr: Vec<_> = row.iter().zip(&xs).filter(|(&a, _)| a != 0).map(|(&a, &x)| (x, a as f64)).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, rhs);
    }
    for (&(lo, hi), &x) in boxes.iter().zip(&xs) {
        if lo.is_finite() {
            lp.add_constraint([(x, 1.0), (s, -1.0)], ComparisonOp::Ge, lo);
        }
        if hi.is_finite() {
            lp.add_constraint([(x, 1.0), (s, 1.0)], ComparisonOp::Le, hi);
        }
    }
    match lp.solve() {
        Ok(sol) => {
            let margin = sol[s];
            if margin > SLACK_TOL {
                Reach::Interior
            } else if margin >= -SLACK_TOL {
                Reach::Boundary
            } else {
                Reach::Outside
            }
        }
        Err(_) => Reach::Outside,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{split_parts, MonomialSos, Term};
    use super::*;

    fn codim(terms: &[(&[u32], f64)], domain: &[(f64, f64)]) -> Result<usize, EngineError> {
        let m = MonomialSos {
            dim: domain.len(),
            terms: terms.iter().map(|(u, c)| Term { u: u.to_vec(), c: *c }).collect(),
            domain: domain.iter().map(|&(a, b)| Interval::new(a, b)).collect(),
        };
        nonzero_codim(&split_parts(&m).unwrap(), &m.domain)
    }

    #[test]
    fn hyperbola() {
        assert_eq!(codim(&[(&[1, 1], 1.0)], &[(-2.0, 2.0); 2]), Ok(1));
    }

    #[test]
    fn no_nonzero_part() {
        assert_eq!(codim(&[(&[1, 1], 0.0)], &[(-2.0, 2.0); 2]), Ok(0));
    }

    #[test]
    fn three_star_identifiable() {
        // variances then edges a1, a2, a3
        let (r12, r13, r23) = (0.3, 0.35, 0.42);
        let terms: [(&[u32], f64); 6] = [
            (&[1, 0, 0, 0, 0, 0], 1.0),
            (&[0, 1, 0, 0, 0, 0], 2.0),
            (&[0, 0, 1, 0, 0, 0], 0.5),
            (&[0, 0, 0, 1, 1, 0], r12),
            (&[0, 0, 0, 1, 0, 1], r13),
            (&[0, 0, 0, 0, 1, 1], r23),
        ];
        let inf = f64::INFINITY;
        let domain = [(0.0, inf), (0.0, inf), (0.0, inf), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)];
        assert_eq!(codim(&terms, &domain), Ok(6));
    }

    #[test]
    fn sign_parity() {
        // w1 w2 = -1 with w1 >= 0, w2 >= 0 has no solution
        assert_eq!(codim(&[(&[1, 1], -1.0)], &[(0.0, 2.0); 2]), Err(EngineError::EmptyFiber));
        // w^2 = -1 never
        assert_eq!(codim(&[(&[2], -1.0)], &[(-2.0, 2.0)]), Err(EngineError::EmptyFiber));
        // w1 w2 = -1 with w1 in [-2, 1], w2 in [0, 2]
        assert_eq!(codim(&[(&[1, 1], -1.0)], &[(-2.0, 1.0), (0.0, 2.0)]), Ok(1));
    }

    #[test]
    fn boundary_and_outside() {
        assert_eq!(codim(&[(&[1], 1.0)], &[(0.0, 1.0)]), Err(EngineError::NoInteriorSolution));
        assert_eq!(codim(&[(&[1], 2.0)], &[(0.0, 1.0)]), Err(EngineError::EmptyFiber));
        assert_eq!(codim(&[(&[1, 1], 4.0)], &[(-2.0, 2.0); 2]), Err(EngineError::NoInteriorSolution));
    }

    #[test]
    fn inconsistent_logs() {
        // w1 = 2 and w1^2 = 5
        assert_eq!(codim(&[(&[1], 2.0), (&[2], 5.0)], &[(-9.0, 9.0)]), Err(EngineError::EmptyFiber));
    }
}
