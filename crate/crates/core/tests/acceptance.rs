//! Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use latent_forest::engine::{newton_facets, one_distance_mult};
use latent_forest::forest::fixtures::{empty_on, five_leaf, quartet, star, two_leaf_path};
use latent_forest::gaussian::{default_ids, em_fit, h_q_monomials, sample, suff_stats, suff_stats_from_cov};
use latent_forest::selection::{sbic_scores, select_exhaustive, select_on_lattice};
use latent_forest::sim::{lattice5_truth, random_trivalent_tree};
use latent_forest::{
    build_forest, canonicalize, covariance, model_dimension, rlct_forest_pair, rlct_monomial_sos, run_experiment,
    steiner_subforest, subforest_lattice, zero_part_monomials, Criterion, EmConfig, ExperimentConfig, Forest,
    Interval, LaplaceConfig, ModelParams, MonomialSos, Rlct, Term,
};
use nalgebra::DMatrix;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sos(terms: &[(Vec<u32>, f64)], domain: &[(f64, f64)]) -> MonomialSos {
    MonomialSos {
        dim: domain.len(),
        terms: terms.iter().map(|(u, c)| Term { u: u.clone(), c: *c }).collect(),
        domain: domain.iter().map(|&(a, b)| Interval::new(a, b)).collect(),
    }
}

fn quartet_class_b() -> Forest {
    // leaves 1, 2 joined through a; 3, 4 isolated
    build_forest(
        &[("1", false), ("2", false), ("3", false), ("4", false), ("a", true)],
        &[("1", "a"), ("2", "a")],
    )
    .unwrap()
}

fn c1_quartet() -> Outcome {
    let host = quartet();
    let sub = quartet_class_b();
    let t = Instant::now();
    let r = rlct_forest_pair(&host, &sub).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    check(r == Rlct::new(Ratio::new(13, 2), 1), format!("got {r}"))?;
    check(el < Duration::from_millis(1), format!("took {el:?}"))?;
    Ok(format!("{r} in {el:?}"))
}

fn c2_two_leaf() -> Outcome {
    let host = two_leaf_path();
    let r = rlct_forest_pair(&host, &empty_on(&host)).map_err(|e| e.to_string())?;
    check(r == Rlct::integer(3, 2), format!("got {r}"))?;
    Ok(r.to_string())
}

fn c3_engine() -> Outcome {
    let r = rlct_monomial_sos(&sos(&[(vec![1, 1], 0.0)], &[(0.0, 1.0), (0.0, 1.0)])).map_err(|e| e.to_string())?;
    check(r == Rlct::integer(1, 2), format!("normal crossing: {r}"))?;
    for d in 1..=6usize {
        let terms: Vec<(Vec<u32>, f64)> = (0..d).map(|i| ((0..d).map(|j| (i == j) as u32).collect(), 0.0)).collect();
        let r = rlct_monomial_sos(&sos(&terms, &vec![(-1.0, 1.0); d])).map_err(|e| e.to_string())?;
        check(r == Rlct::integer(d as i64, 1), format!("regular d = {d}: {r}"))?;
    }
    let mixed = sos(
        &[(vec![1, 1, 0, 0], 1.0), (vec![1, 0, 1, 0], 0.0), (vec![0, 1, 1, 0], 0.0), (vec![0, 0, 1, 1], 0.0)],
        &[(-2.0, 2.0); 4],
    );
    let r = rlct_monomial_sos(&mixed).map_err(|e| e.to_string())?;
    check(r == Rlct::integer(2, 1), format!("mixed system: {r}"))?;
    Ok("(1,2), (d,1) for d=1..6, (2,1)".into())
}

fn c4_closed_form_vs_engine() -> Outcome {
    let t = Instant::now();
    let mut pairs = 0;
    for host in [quartet(), star(3), five_leaf()] {
        let l = subforest_lattice(&host).map_err(|e| e.to_string())?;
        for b in 0..l.len() {
            for a in 0..l.len() {
                if !l.leq(a, b) {
                    continue;
                }
                let sup = l.class(b).forest();
                let qf = steiner_subforest(sup, l.class(a).canonical()).map_err(|e| e.to_string())?;
                let closed = rlct_forest_pair(sup, &qf).map_err(|e| e.to_string())?;
                let lambda1 = Ratio::from_integer(model_dimension(&qf) as i64);
                let zero = zero_part_monomials(sup, &qf).map_err(|e| e.to_string())?;
                let engine = if zero.terms.is_empty() {
                    Rlct::new(lambda1, 1)
                } else {
                    let z = rlct_monomial_sos(&zero).map_err(|e| e.to_string())?;
                    Rlct::new(lambda1 + z.lambda, z.mult)
                };
                check(closed == engine, format!("pair ({a}, {b}): closed {closed}, engine {engine}"))?;
                pairs += 1;
            }
        }
    }
    let el = t.elapsed();
    check(el < Duration::from_secs(30), format!("took {el:?}"))?;
    Ok(format!("{pairs} pairs agree in {el:?}"))
}

fn c5_lattice() -> Outcome {
    let l = subforest_lattice(&five_leaf()).map_err(|e| e.to_string())?;
    check(l.len() == 34, format!("{} classes", l.len()))?;
    check(l.max_depth() == 4, format!("depth {}", l.max_depth()))?;
    check(l.code(12) == "1 1 1 1 1 1 0", format!("model 13 is {}", l.code(12)))?;
    Ok("34 classes, depth 4".into())
}

/// All leaf-pair path monomials of a tree, one variable per edge.
fn path_monomials(t: &Forest) -> Vec<Vec<u32>> {
    let obs = t.observed();
    let mut out = Vec::new();
    for (i, &v) in obs.iter().enumerate() {
        for &w in &obs[i + 1..] {
            let mut u = vec![0u32; t.num_edges()];
            for e in t.path_edges(v, w).unwrap() {
                u[e] += 1;
            }
            out.push(u);
        }
    }
    out
}

/// Subdivides `k` uniformly chosen edges (repeats allowed) with new latent nodes.
fn subdivide(t: &Forest, k: usize, rng: &mut ChaCha8Rng) -> Forest {
    let mut nodes = t.nodes().to_vec();
    let mut edges = t.edges().to_vec();
    for i in 0..k {
        let e = rng.gen_range(0..edges.len());
        let (u, v) = edges[e];
        let s = nodes.len();
        nodes.push(latent_forest::Node::latent(format!("s{i}")));
        edges[e] = (u, s);
        edges.push((s, v));
    }
    Forest::from_indices(nodes, edges).unwrap()
}

/// Inserted nodes whose chain of degree-2 nodes ends at a leaf.
fn pendant_insertions(s: &Forest) -> usize {
    let ends_at_leaf = |mut prev: usize, mut cur: usize| loop {
        match s.degree(cur) {
            1 => return true,
            2 => {
                let next = s.neighbors(cur).iter().map(|&(y, _)| y).find(|&y| y != prev).unwrap();
                prev = cur;
                cur = next;
            }
            _ => return false,
        }
    };
    (0..s.num_nodes())
        .filter(|&u| s.is_latent(u) && s.degree(u) == 2)
        .filter(|&u| s.neighbors(u).iter().any(|&(y, _)| ends_at_leaf(u, y)))
        .count()
}

fn c6_path_monomials() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut with_k = 0;
    let mut misses = Vec::new();
    let mut pendant_rule = 0;
    for i in 0..50u64 {
        let m = 3 + (i % 6) as usize;
        let t = random_trivalent_tree(m, 600 + i).map_err(|e| e.to_string())?;
        let p = newton_facets(&path_monomials(&t), t.num_edges()).map_err(|e| e.to_string())?;
        let (dist, mult) = one_distance_mult(&p);
        check(dist == Ratio::new(2, m as i64) && mult == 1, format!("m = {m}: ({dist}, {mult})"))?;
        // as many subdivisions as the hull dimension allows, at least one
        let room = 16 - t.num_edges();
        let k = 1 + rng.gen_range(0..room.min(4));
        let s = subdivide(&t, k, &mut rng);
        let p = newton_facets(&path_monomials(&s), s.num_edges()).map_err(|e| e.to_string())?;
        let (dist2, mult2) = one_distance_mult(&p);
        check(dist2 == Ratio::new(2, m as i64), format!("m = {m}, k = {k}: distance {dist2}"))?;
        let pendant = pendant_insertions(&s);
        if mult2 == 1 + pendant as u32 {
            pendant_rule += 1;
        }
        if mult2 != 1 + k as u32 {
            misses.push(format!("tree {i} (m = {m}, k = {k}, {pendant} on leaf chains): mult {mult2}"));
        }
        with_k += k;
    }
    let rule = format!("1 + (insertions on leaf chains) holds for {pendant_rule}/50");
    check(
        misses.is_empty(),
        format!("mult != 1 + k for {}/50 subdivided trees; {rule}; first: {}", misses.len(), misses.first().map_or("", |s| s)),
    )?;
    Ok(format!("50 trees, m in 3..=8, {with_k} inserted nodes in total; {rule}"))
}

fn c7_em() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut iters = 0;
    for i in 0..100u64 {
        let m = rng.gen_range(3..=6);
        let t = random_trivalent_tree(m, 700 + i).unwrap();
        let keep: Vec<bool> = (0..t.num_edges()).map(|_| rng.gen_bool(0.8)).collect();
        let f = t.edge_subforest(|e| keep[e]);
        let p = ModelParams {
            leaf_var: (0..m).map(|_| rng.gen_range(0.5..2.0)).collect(),
            edge_corr: (0..f.num_edges()).map(|_| rng.gen_range(-0.9..0.9)).collect(),
        };
        let n = rng.gen_range(20..500);
        let x = sample(&f, &p, n, 7000 + i).map_err(|e| e.to_string())?;
        let stats = suff_stats(&x, &default_ids(m), rng.gen_bool(0.5)).map_err(|e| e.to_string())?;
        let fit = em_fit(&f, &stats, &EmConfig { restarts: 2, seed: i, ..Default::default() }).map_err(|e| e.to_string())?;
        for w in fit.trace.windows(2) {
            check(w[1] >= w[0] - 1e-9, format!("instance {i}: {} -> {}", w[0], w[1]))?;
        }
        iters += fit.trace.len();
    }

    let host = star(3);
    let (r1, r2, r3) = (0.5, 0.6, 0.7);
    let truth = ModelParams { leaf_var: vec![1.0; 3], edge_corr: vec![r1, r2, r3] };
    let sigma = covariance(&host, &truth);
    let stats = suff_stats_from_cov(&sigma, 1000, &default_ids(3));
    let cfg = EmConfig { rel_tol: 1e-14, max_iter: 20000, ..Default::default() };
    let fit = em_fit(&host, &stats, &cfg).map_err(|e| e.to_string())?;
    let err = (covariance(&host, &fit.params) - &sigma).abs().max();
    check(err <= 1e-6, format!("covariance error {err:e}"))?;
    let (p12, p13, p23) = (r1 * r2, r1 * r3, r2 * r3);
    let target = (p12 * p13 / p23).sqrt();
    let e1 = host.edge_between(host.index_of("a").unwrap(), host.index_of("1").unwrap()).unwrap();
    let werr = (fit.params.edge_corr[e1].abs() - target).abs();
    check(werr <= 1e-4, format!("edge a-1 error {werr:e}"))?;
    Ok(format!("100 monotone traces ({iters} steps); covariance error {err:.1e}, edge error {werr:.1e}"))
}

fn toy_sbic() -> Result<f64, String> {
    let n = 1000f64;
    let ll = [-100000.0, -99990.0, -99992.5, -99985.0, -99984.0];
    let dim = [5.0, 7.0, 7.0, 9.0, 11.0];
    let below = vec![vec![], vec![0], vec![0], vec![0, 1, 2], vec![0, 1, 2, 3]];
    let rl = |a: usize, b: usize| -> (f64, u32) {
        match (a, b) {
            (0, 1) => (5.5, 1),
            (0, 2) => (6.0, 2),
            (0, 3) => (6.5, 1),
            (1, 3) => (8.0, 1),
            (2, 3) => (7.5, 2),
            (0, 4) => (7.0, 3),
            (1, 4) => (8.5, 1),
            (2, 4) => (9.0, 2),
            (3, 4) => (10.5, 1),
            _ => unreachable!(),
        }
    };
    let log_l = |a: usize, b: usize| {
        let (lam, m) = if a == b { (dim[b], 1) } else { rl(a, b) };
        ll[b] - lam / 2.0 * n.ln() + (m - 1) as f64 * n.ln().ln()
    };
    let oracle = [
        -100017.2693881974553426301,
        -100012.9656553286214193476,
        -100014.2596763310091550739,
        -100011.616729331857345487,
        -100011.07119979762572136,
    ];
    let got = sbic_scores(&[0, 2, 1, 3, 4], &below, log_l);
    let worst = got.iter().zip(&oracle).map(|(g, o)| ((g - o) / o).abs()).fold(0.0, f64::max);
    check(worst <= 1e-8, format!("relative error {worst:e}"))?;
    Ok(worst)
}

fn c8_sbic() -> Outcome {
    let (host, p) = lattice5_truth(0.6);
    let x = sample(&host, &p, 125, 8).map_err(|e| e.to_string())?;
    let stats = suff_stats(&x, &default_ids(5), false).map_err(|e| e.to_string())?;
    let (lat, sel) =
        select_exhaustive(&host, &stats, Criterion::Sbic, &EmConfig::default()).map_err(|e| e.to_string())?;
    let t = &sel.table;
    let min = lat.minimum();
    check(t.rows[min].sbic == t.rows[min].bic, format!("empty forest: {} vs {}", t.rows[min].sbic, t.rows[min].bic))?;
    check(t.rows.len() == 34, "34 rows")?;
    let slack = t.rows.iter().map(|r| r.sbic - r.bic).fold(f64::INFINITY, f64::min);
    check(slack >= 0.0, format!("sBIC below BIC by {slack:e}"))?;
    let worst = toy_sbic()?;
    Ok(format!("min sBIC - BIC = {slack:.3e}; toy lattice relative error {worst:.1e}"))
}

fn c9_trend() -> Outcome {
    let t = Instant::now();
    let cfg = ExperimentConfig::lattice5(vec![125], 100, 2024);
    let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let sbic13 = res.count(125, Criterion::Sbic, 13);
    let bic13 = res.count(125, Criterion::Bic, 13);
    let modal = res.modal(125, Criterion::Bic).unwrap();
    let el = t.elapsed();
    let lat = subforest_lattice(&five_leaf()).unwrap();
    let strict_sub = modal != 13 && lat.leq(modal - 1, 12);
    check(sbic13 > bic13, format!("model 13 chosen by sBIC {sbic13}, by BIC {bic13}"))?;
    check(strict_sub, format!("BIC modal model {modal} is not below 13"))?;
    check(el < Duration::from_secs(600), format!("took {el:?}"))?;
    Ok(format!("model 13: sBIC {sbic13}/100, BIC {bic13}/100; BIC modal model {modal}; {el:.1?}"))
}

fn c10_laplace() -> Outcome {
    let t = Instant::now();
    let cfg = LaplaceConfig::default();
    let ex = sos(&[(vec![1, 1], 0.0)], &[(0.0, 1.0), (0.0, 1.0)]);
    let a = latent_forest::laplace_rlct_estimate(&ex, &cfg).map_err(|e| e.to_string())?;
    check((0.85..=1.15).contains(&a.lambda_hat) && a.mult_hat == 2, format!("normal crossing: {a:?}"))?;

    let host = star(3);
    let mut h = h_q_monomials(&host, &DMatrix::identity(3, 3)).map_err(|e| e.to_string())?;
    for iv in h.domain.iter_mut().take(3) {
        *iv = Interval::new(0.0, 2.0);
    }
    let b = latent_forest::laplace_rlct_estimate(&h, &cfg).map_err(|e| e.to_string())?;
    check((b.lambda_hat - 4.5).abs() <= 0.2 * 4.5, format!("3-star: {b:?}"))?;
    let el = t.elapsed();
    check(el < Duration::from_secs(300), format!("took {el:?}"))?;
    Ok(format!(
        "normal crossing ({:.3}, {}), 3-star ({:.3}, {}) in {el:.1?}",
        a.lambda_hat, a.mult_hat, b.lambda_hat, b.mult_hat
    ))
}

/// Random subforest of a random tree with 4..=7 leaves.
fn random_forest(rng: &mut ChaCha8Rng) -> Forest {
    let m = rng.gen_range(4..=7);
    let t = random_trivalent_tree(m, rng.gen()).unwrap();
    let keep: Vec<bool> = (0..t.num_edges()).map(|_| rng.gen_bool(0.6)).collect();
    t.edge_subforest(|e| keep[e])
}

fn c11_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = 100;
    for i in 0..cases {
        let f = random_forest(&mut rng);
        let c = canonicalize(&f);
        check(canonicalize(c.forest()) == c, format!("idempotence case {i}"))?;
    }
    for i in 0..cases {
        let t = random_trivalent_tree(rng.gen_range(3..=6), rng.gen()).unwrap();
        let l = subforest_lattice(&t).unwrap();
        let a: u32 = rng.gen_range(0..1 << t.num_edges());
        let b = a & rng.gen::<u32>();
        let ca = l.find(&canonicalize(&t.edge_subforest(|e| a >> e & 1 == 1))).unwrap();
        let cb = l.find(&canonicalize(&t.edge_subforest(|e| b >> e & 1 == 1))).unwrap();
        check(l.leq(cb, ca), format!("order soundness case {i}"))?;
    }
    for i in 0..cases {
        let t = random_trivalent_tree(rng.gen_range(3..=6), rng.gen()).unwrap();
        let l = subforest_lattice(&t).unwrap();
        let c = rng.gen_range(0..l.len());
        let s = steiner_subforest(&t, l.class(c).canonical()).unwrap();
        check(canonicalize(&s) == *l.class(c).canonical(), format!("steiner round trip case {i}"))?;
    }
    let cfg = EmConfig { restarts: 2, ..Default::default() };
    let hosts = [quartet(), star(3), star(4)];
    let lattices: Vec<_> = hosts.iter().map(|h| subforest_lattice(h).unwrap()).collect();
    for i in 0..cases {
        let k = i % hosts.len();
        let host = &hosts[k];
        let ids: Vec<String> = host.observed_ids().iter().map(|s| s.to_string()).collect();
        let p = ModelParams {
            leaf_var: vec![1.0; ids.len()],
            edge_corr: (0..host.num_edges()).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.2..0.8) }).collect(),
        };
        let x = sample(host, &p, rng.gen_range(30..300), rng.gen()).unwrap();
        let stats = suff_stats(&x, &ids, false).unwrap();
        let mut perm: Vec<usize> = (0..ids.len()).collect();
        for j in (1..perm.len()).rev() {
            perm.swap(j, rng.gen_range(0..=j));
        }
        let rename = |id: &str| match ids.iter().position(|x| x == id) {
            Some(j) => format!("v{}", perm[j]),
            None => id.to_string(),
        };
        let host2 = host.relabel_observed(rename).unwrap();
        let ids2: Vec<String> = ids.iter().map(|s| rename(s)).collect();
        let stats2 = latent_forest::SufficientStats { ids: ids2, ..stats.clone() };
        let l2 = subforest_lattice(&host2).unwrap();
        let s1 = select_on_lattice(&lattices[k], &stats, Criterion::Sbic, &cfg).unwrap();
        let s2 = select_on_lattice(&l2, &stats2, Criterion::Sbic, &cfg).unwrap();
        for crit in [Criterion::Bic, Criterion::Sbic] {
            let (a, b) = (s1.best(&lattices[k], crit), s2.best(&l2, crit));
            let ra = canonicalize(&lattices[k].class(a).forest().relabel_observed(rename).unwrap());
            check(ra == *l2.class(b).canonical(), format!("equivariance case {i} ({crit})"))?;
        }
    }
    Ok(format!("4 suites x {cases} cases"))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 quartet RLCT", c1_quartet),
        ("2 two-leaf degenerate case", c2_two_leaf),
        ("3 engine golden values", c3_engine),
        ("4 closed form vs engine", c4_closed_form_vs_engine),
        ("5 lattice count", c5_lattice),
        ("6 path-monomial multiplicities", c6_path_monomials),
        ("7 EM correctness", c7_em),
        ("8 sBIC base and bounds", c8_sbic),
        ("9 simulation trend", c9_trend),
        ("10 Laplace oracle", c10_laplace),
        ("11 property suites", c11_properties),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(&format!("{o} "))) {
            continue;
        }
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panic: {}", msg.unwrap_or_default()))
        });
        match out {
            Ok(detail) => println!("criterion {name}: PASS ({detail}) [{:.2?}]", t.elapsed()),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why}) [{:.2?}]", t.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
