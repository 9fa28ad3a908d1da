//! The triangular quadratic system behind the singular BIC, solved in the
//! log domain.

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().filter(|x| *x > f64::NEG_INFINITY).collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the positive root of `x^2 + x (a - b) - c = 0` given `ln a`,
/// `ln b` and `ln c` (any of which may be `-inf`; `b` and `c` not both zero).
pub fn solve_log_quadratic(log_a: f64, log_b: f64, log_c: f64) -> f64 {
    if log_c == f64::NEG_INFINITY {
        // x = b - a when positive
        return if log_b > log_a { log_b + (-(log_a - log_b).exp()).ln_1p() } else { f64::NEG_INFINITY };
    }
    let shift = log_a.max(log_b).max(0.5 * log_c);
    let a = (log_a - shift).exp();
    let b = (log_b - shift).exp();
    let lc = log_c - 2.0 * shift;
    let c = lc.exp();
    let d = a - b;
    let disc = (d * d + 4.0 * c).sqrt();
    let log_y = if d > 0.0 {
        std::f64::consts::LN_2 + lc - (d + disc).ln()
    } else if d < 0.0 {
        (0.5 * (disc - d)).ln()
    } else {
        0.5 * lc
    };
    log_y + shift
}

/// Solves the system class by class along `order` (a linear extension).
/// `below[f]` lists the classes strictly below `f`; `log_l(sub, sup)` is
/// `ln L'` of `sup` under data from `sub`. Returns `ln x_f` per class.
pub fn sbic_scores(order: &[usize], below: &[Vec<usize>], log_l: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut log_x = vec![f64::NAN; below.len()];
    for &f in order {
        let log_b = log_l(f, f);
        if below[f].is_empty() {
            log_x[f] = log_b;
            continue;
        }
        debug_assert!(below[f].iter().all(|&g| !log_x[g].is_nan()), "order is not a linear extension");
        let log_a = log_sum_exp(below[f].iter().map(|&g| log_x[g]));
        let log_c = log_sum_exp(below[f].iter().map(|&g| log_l(g, f) + log_x[g]));
        let root = solve_log_quadratic(log_a, log_b, log_c);
        // every L'(g, f) >= L'(f, f) forces c >= ab, hence x >= b; keep that under rounding
        let dominated = below[f].iter().all(|&g| log_l(g, f) >= log_b);
        log_x[f] = if dominated { root.max(log_b) } else { root };
    }
    log_x
}
