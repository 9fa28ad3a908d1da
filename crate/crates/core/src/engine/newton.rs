use num_rational::Ratio;

use super::exact::{dot, normalize, rank};
use super::EngineError;

/// Largest number of active coordinates the hull is computed in.
pub const MAX_HULL_DIM: usize = 16;

/// The inequality `normal . x >= offset`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Facet {
    pub normal: Vec<i64>,
    pub offset: i64,
}

impl Facet {
    pub fn holds_at(&self, x: &[Ratio<i64>]) -> bool {
        self.value_at(x) >= Ratio::from_integer(self.offset)
    }

    pub fn tight_at(&self, x: &[Ratio<i64>]) -> bool {
        self.value_at(x) == Ratio::from_integer(self.offset)
    }

    fn value_at(&self, x: &[Ratio<i64>]) -> Ratio<i64> {
        self.normal.iter().zip(x).map(|(&a, &v)| v * a).sum()
    }
}

/// Convex hull of exponent vectors plus the nonnegative orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonPolyhedron {
    pub ambient_dim: usize,
    pub generators: Vec<Vec<u32>>,
    pub facets: Vec<Facet>,
}

impl NewtonPolyhedron {
    /// True when built from no exponents at all.
    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }
}

/// Irredundant inequality description by the double description method on
/// the homogenized cone spanned by `(1, g)` and `(0, e_j)`.
pub fn newton_facets(zero_terms: &[Vec<u32>], ambient_dim: usize) -> Result<NewtonPolyhedron, EngineError> {
    let mut generators: Vec<Vec<u32>> = zero_terms.to_vec();
    generators.sort();
    generators.dedup();
    if generators.is_empty() {
        return Ok(NewtonPolyhedron { ambient_dim, generators, facets: Vec::new() });
    }
    if let Some(g) = generators.iter().find(|g| g.len() != ambient_dim) {
        return Err(EngineError::Invalid(format!("exponent of length {} in dimension {ambient_dim}", g.len())));
    }
    let active: Vec<usize> = (0..ambient_dim).filter(|&j| generators.iter().any(|g| g[j] > 0)).collect();
    if active.len() > MAX_HULL_DIM {
        return Err(EngineError::DimensionTooLarge { dim: active.len(), max: MAX_HULL_DIM });
    }
    let reduced: Vec<Vec<i128>> = generators.iter().map(|g| active.iter().map(|&j| g[j] as i128).collect()).collect();

    let mut facets = Vec::new();
    for ray in dual_rays(&reduced, active.len())? {
        if ray[1..].iter().all(|&a| a == 0) {
            continue;
        }
        let mut normal = vec![0i64; ambient_dim];
        for (k, &j) in active.iter().enumerate() {
            normal[j] = i64::try_from(ray[k + 1]).map_err(|_| EngineError::Overflow)?;
        }
        let offset = i64::try_from(-ray[0]).map_err(|_| EngineError::Overflow)?;
        facets.push(Facet { normal, offset });
    }
    for j in (0..ambient_dim).filter(|j| !active.contains(j)) {
        let mut normal = vec![0i64; ambient_dim];
        normal[j] = 1;
        facets.push(Facet { normal, offset: 0 });
    }
    facets.sort();
    Ok(NewtonPolyhedron { ambient_dim, generators, facets })
}

type Bits = Vec<u64>;

fn set(b: &mut Bits, i: usize) {
    b[i / 64] |= 1 << (i % 64);
}

fn and(a: &Bits, b: &Bits) -> Bits {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn superset(a: &Bits, b: &Bits) -> bool {
    a.iter().zip(b).all(|(x, y)| x & y == *y)
}

fn count(b: &Bits) -> usize {
    b.iter().map(|x| x.count_ones() as usize).sum()
}

/// Extreme rays of `{y : (0, e_j) . y >= 0, (1, g) . y >= 0}` in `R^{d+1}`.
fn dual_rays(gens: &[Vec<i128>], d: usize) -> Result<Vec<Vec<i128>>, EngineError> {
    let dim = d + 1;
    let mut rows: Vec<Vec<i128>> = Vec::with_capacity(gens.len() + d);
    for g in gens {
        let mut r = vec![1i128];
        r.extend_from_slice(g);
        rows.push(r);
    }
    for j in 0..d {
        let mut r = vec![0i128; dim];
        r[j + 1] = 1;
        rows.push(r);
    }
    let words = rows.len().div_ceil(64);

    // Rows 0 (first generator) and the axes are independent; the extreme rays
    // of their cone are the columns of the inverse matrix.
    let mut rays: Vec<Vec<i128>> = Vec::with_capacity(dim);
    let mut e0 = vec![0i128; dim];
    e0[0] = 1;
    rays.push(e0);
    for j in 0..d {
        let mut r = vec![0i128; dim];
        r[0] = -gens[0][j];
        r[j + 1] = 1;
        rays.push(r);
    }
    let mut processed: Vec<usize> = vec![0];
    processed.extend(gens.len()..rows.len());
    let mut tight: Vec<Bits> = Vec::with_capacity(rays.len());
    for r in &rays {
        let mut z = vec![0u64; words];
        for &k in &processed {
            if dot(&rows[k], r)? == 0 {
                set(&mut z, k);
            }
        }
        tight.push(z);
    }

    for k in 1..gens.len() {
        let vals: Vec<i128> = rays.iter().map(|r| dot(&rows[k], r)).collect::<Result<_, _>>()?;
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] < 0).collect();
        if neg.is_empty() {
            for (i, z) in tight.iter_mut().enumerate() {
                if vals[i] == 0 {
                    set(z, k);
                }
            }
            continue;
        }
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] > 0).collect();
        let mut new_rays = Vec::new();
        let mut new_tight = Vec::new();
        for &p in &pos {
            for &n in &neg {
                let common = and(&tight[p], &tight[n]);
                if count(&common) + 2 < dim {
                    continue;
                }
                let adjacent = (0..rays.len()).all(|i| i == p || i == n || !superset(&tight[i], &common));
                if !adjacent {
                    continue;
                }
                let mut r: Vec<i128> = rays[n]
                    .iter()
                    .zip(&rays[p])
                    .map(|(&x, &y)| {
                        vals[p]
                            .checked_mul(x)
                            .and_then(|a| vals[n].checked_mul(y).and_then(|b| a.checked_sub(b)))
                            .ok_or(EngineError::Overflow)
                    })
                    .collect::<Result<_, _>>()?;
                normalize(&mut r);
                let mut z = common;
                set(&mut z, k);
                new_rays.push(r);
                new_tight.push(z);
            }
        }
        let mut kept_rays = Vec::with_capacity(rays.len() + new_rays.len());
        let mut kept_tight = Vec::with_capacity(rays.len() + new_rays.len());
        for (i, (r, mut z)) in rays.into_iter().zip(tight).enumerate() {
            if vals[i] >= 0 {
                if vals[i] == 0 {
                    set(&mut z, k);
                }
                kept_rays.push(r);
                kept_tight.push(z);
            }
        }
        kept_rays.extend(new_rays);
        kept_tight.extend(new_tight);
        rays = kept_rays;
        tight = kept_tight;
    }
    Ok(rays)
}

/// Smallest `t` with `t * 1` in the polyhedron, and the codimension of the
/// smallest face containing that point. An empty polyhedron gives `(0, 1)`.
pub fn one_distance_mult(p: &NewtonPolyhedron) -> (Ratio<i64>, u32) {
    if p.is_empty() {
        return (Ratio::from_integer(0), 1);
    }
    let t = p
        .facets
        .iter()
        .map(|f| Ratio::new(f.offset, f.normal.iter().sum::<i64>()))
        .max()
        .expect("a nonempty polyhedron has facets");
    let diag = vec![t; p.ambient_dim];
    let normals: Vec<Vec<i128>> = p
        .facets
        .iter()
        .filter(|f| f.tight_at(&diag))
        .map(|f| f.normal.iter().map(|&a| a as i128).collect())
        .collect();
    let mult = rank(&normals).expect("facet normals are small") as u32;
    (t, mult)
}
