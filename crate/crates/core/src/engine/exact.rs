use num_integer::Integer;

use super::EngineError;

/// Divides out the gcd of the entries; the zero vector is left as is.
pub(crate) fn normalize(v: &mut [i128]) {
    let g = v.iter().fold(0i128, |g, &x| g.gcd(&x));
    if g > 1 {
        for x in v.iter_mut() {
            *x /= g;
        }
    }
}

pub(crate) fn dot(a: &[i128], b: &[i128]) -> Result<i128, EngineError> {
    a.iter().zip(b).try_fold(0i128, |acc, (&x, &y)| {
        x.checked_mul(y).and_then(|p| acc.checked_add(p)).ok_or(EngineError::Overflow)
    })
}

/// Rank over the rationals by fraction-free elimination.
pub(crate) fn rank(rows: &[Vec<i128>]) -> Result<usize, EngineError> {
    let mut a: Vec<Vec<i128>> = rows.to_vec();
    let n_cols = a.first().map_or(0, |r| r.len());
    let mut r = 0;
    let mut prev = 1i128;
    for c in 0..n_cols {
        let Some(p) = (r..a.len()).find(|&i| a[i][c] != 0) else {
            continue;
        };
        a.swap(r, p);
        for i in r + 1..a.len() {
            for j in c + 1..n_cols {
                let v = a[r][c]
                    .checked_mul(a[i][j])
                    .and_then(|x| a[i][c].checked_mul(a[r][j]).and_then(|y| x.checked_sub(y)))
                    .ok_or(EngineError::Overflow)?;
                a[i][j] = v / prev;
            }
            a[i][c] = 0;
        }
        prev = a[r][c];
        r += 1;
        if r == a.len() {
            break;
        }
    }
    Ok(r)
}

/// Whether `A x = b` has a solution over GF(2).
pub(crate) fn gf2_solvable(mut rows: Vec<Vec<bool>>, mut rhs: Vec<bool>) -> bool {
    let n_cols = rows.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..n_cols {
        let Some(p) = (r..rows.len()).find(|&i| rows[i][c]) else {
            continue;
        };
        rows.swap(r, p);
        rhs.swap(r, p);
        for i in 0..rows.len() {
            if i != r && rows[i][c] {
                for j in c..n_cols {
                    let x = rows[r][j];
                    rows[i][j] ^= x;
                }
                let x = rhs[r];
                rhs[i] ^= x;
            }
        }
        r += 1;
    }
    (r..rows.len()).all(|i| !rhs[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_small() {
        assert_eq!(rank(&[vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, -1]]).unwrap(), 2);
        assert_eq!(rank(&[vec![2, 4], vec![1, 3]]).unwrap(), 2);
        assert_eq!(rank(&[vec![0, 0]]).unwrap(), 0);
        assert_eq!(rank(&[]).unwrap(), 0);
    }

    #[test]
    fn gf2() {
        // x + y = 1, x + y = 0 is inconsistent
        assert!(!gf2_solvable(vec![vec![true, true], vec![true, true]], vec![true, false]));
        assert!(gf2_solvable(vec![vec![true, true], vec![false, true]], vec![true, false]));
        assert!(gf2_solvable(vec![], vec![]));
    }

    #[test]
    fn normalize_divides_gcd() {
        let mut v = [4, -6, 0];
        normalize(&mut v);
        assert_eq!(v, [2, -3, 0]);
    }
}
