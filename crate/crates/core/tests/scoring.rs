use bsr::equilibrium::enumerate_trees;
use bsr::expr::parse_expression;
use bsr::fit::{bic, fit_parameters};
use bsr::prior_fit::{sample_from_prior, PriorSamplingConfig};
use bsr::synth::ExpressionSpec;
use bsr::{Dataset, FitConfig, OperationSet, PriorParams, Scorer};

fn dataset(expr: &str, theta: Vec<f64>, range: (f64, f64), seed: u64) -> Dataset {
    ExpressionSpec {
        expr: expr.into(),
        theta,
        ranges: vec![range],
        n: 50,
        noise: 0.3,
    }
    .generate(seed)
    .unwrap()
}

fn reference_sse(values: impl Fn(f64) -> f64, data: &Dataset) -> f64 {
    data.columns()[0]
        .iter()
        .zip(data.y())
        .map(|(x, y)| {
            let r = y - values(*x);
            r * r
        })
        .sum()
}

/// Coarse grid, then successively finer grids around the best point.
fn grid_minimum(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (lo, hi);
    let mut best = (f64::NAN, f64::INFINITY);
    for _ in 0..6 {
        let n = 2000;
        for k in 0..=n {
            let p = lo + (hi - lo) * k as f64 / n as f64;
            let v = f(p);
            if v < best.1 {
                best = (p, v);
            }
        }
        let w = (hi - lo) / n as f64 * 4.0;
        lo = best.0 - w;
        hi = best.0 + w;
    }
    best
}

#[test]
fn simplex_fit_matches_grid_search() {
    let cases: Vec<(&str, Box<dyn Fn(f64, f64) -> f64>, (f64, f64), (f64, f64))> = vec![
        (
            "(* p1 x1)",
            Box::new(|p, x| p * x),
            (-2.0, 2.0),
            (-10.0, 10.0),
        ),
        (
            "(+ p1 (sin x1))",
            Box::new(|p, x| p + x.sin()),
            (-3.0, 3.0),
            (-10.0, 10.0),
        ),
        (
            "(exp (* p1 x1))",
            Box::new(|p, x| (p * x).exp()),
            (-1.0, 1.0),
            (-5.0, 5.0),
        ),
        (
            "(pow x1 p1)",
            Box::new(|p, x| x.powf(p)),
            (0.5, 2.0),
            (-5.0, 5.0),
        ),
        (
            "(/ x1 (+ p1 x1))",
            Box::new(|p, x| x / (p + x)),
            (1.0, 3.0),
            (0.0, 10.0),
        ),
    ];
    let opset = OperationSet::from_spec("+,*,/,pow,sin,exp", 1, 1).unwrap();
    for (i, (expr, f, range, search)) in cases.into_iter().enumerate() {
        let data = dataset(expr, vec![1.3], range, i as u64);
        let tree = parse_expression(expr, &opset).unwrap();
        let fit = fit_parameters(&tree, &opset, &data, &FitConfig::default(), None);
        let (p_grid, sse_grid) =
            grid_minimum(|p| reference_sse(|x| f(p, x), &data), search.0, search.1);
        assert!(
            fit.sse <= sse_grid * (1.0 + 1e-7) + 1e-10,
            "{expr}: simplex {} grid {sse_grid}",
            fit.sse
        );
        assert!(
            (fit.theta[0] - p_grid).abs() < 1e-3 * p_grid.abs().max(1.0),
            "{expr}: {} vs {p_grid}",
            fit.theta[0]
        );
        let direct = reference_sse(|x| f(fit.theta[0], x), &data);
        assert!((direct - fit.sse).abs() <= 1e-9 * direct.max(1.0));
    }
}

#[test]
fn bic_matches_gaussian_likelihood() {
    let opset = OperationSet::from_spec("+,*,sin", 1, 2).unwrap();
    let data = dataset("(+ x1 (sin x1))", vec![0.0], (-3.0, 3.0), 2);
    let n = data.len() as f64;
    let prior = PriorParams::uniform(&opset);
    let scorer = Scorer::new(
        opset.clone(),
        Some(data.clone()),
        prior,
        FitConfig::default(),
    );
    for expr in [
        "x1",
        "(sin x1)",
        "(+ x1 (sin x1))",
        "(* x1 x1)",
        "(+ p1 x1)",
        "(+ (* p2 x1) p1)",
    ] {
        let tree = parse_expression(expr, &opset).unwrap();
        let m = scorer.score(&tree);
        let theta = &m.theta;
        let sse = reference_sse(|x| tree.evaluate(&opset, &[x], theta), &data);
        let s2 = sse / n;
        let log_lik: f64 = data
            .y()
            .iter()
            .zip(&data.columns()[0])
            .map(|(y, x)| {
                let r = y - tree.evaluate(&opset, &[*x], theta);
                -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - r * r / (2.0 * s2)
            })
            .sum();
        let k = tree.params_used().len() as f64 + 1.0;
        let expected = -2.0 * log_lik + k * n.ln();
        assert!(
            (m.bic - expected).abs() < 1e-9 * expected.abs(),
            "{expr}: {} vs {expected}",
            m.bic
        );
        assert!((m.description_length - (m.bic / 2.0 + m.prior_energy)).abs() < 1e-12);
    }
    assert_eq!(bic(f64::INFINITY, 10, 0, 0.0), f64::INFINITY);
    let floor = bic(0.0, 10, 0, 1e-3);
    assert!(
        (floor - (10.0 * (2.0 * std::f64::consts::PI * 1e-3).ln() + 10.0 + 10f64.ln())).abs()
            < 1e-12
    );
}

#[test]
fn description_length_table_matches_independent_computation() {
    let opset = OperationSet::from_spec("+,sin", 1, 1).unwrap();
    let data = dataset("(+ (+ p1 x1) (sin x1))", vec![1.0], (-4.0, 4.0), 0);
    let prior = PriorParams::new(&opset, vec![0.7, 1.9], vec![0.2, 0.05]).unwrap();
    let scorer = Scorer::new(
        opset.clone(),
        Some(data.clone()),
        prior,
        FitConfig::default(),
    );
    let n = data.len() as f64;
    for tree in enumerate_trees(&opset, 6) {
        let m = scorer.score(&tree);
        let counts = tree.count_operations(&opset);
        let (np, ns) = (counts.get(0) as f64, counts.get(1) as f64);
        let energy = 0.7 * np + 0.2 * np * np + 1.9 * ns + 0.05 * ns * ns;
        let sse = if tree.params_used().is_empty() {
            reference_sse(|x| tree.evaluate(&opset, &[x], &[0.0]), &data)
        } else {
            grid_minimum(
                |p| reference_sse(|x| tree.evaluate(&opset, &[x], &[p]), &data),
                -10.0,
                10.0,
            )
            .1
        };
        let l = tree.params_used().len() as f64;
        let b = n * (2.0 * std::f64::consts::PI * sse / n).ln() + n + (l + 1.0) * n.ln();
        let dl = b / 2.0 + energy;
        assert!((m.prior_energy - energy).abs() < 1e-12);
        // The grid is an upper bound on the optimum; the simplex may only do better.
        assert!(
            m.description_length <= dl + 1e-6,
            "{}: {} vs {dl}",
            tree.render(&opset),
            m.description_length
        );
        assert!(
            m.description_length >= dl - 1e-3,
            "{}: {} vs {dl}",
            tree.render(&opset),
            m.description_length
        );
    }
}

#[test]
fn cache_is_transparent() {
    let opset = OperationSet::from_spec("+,*,-,sin,exp", 1, 2).unwrap();
    let data = dataset("(+ p1 (* p2 (sin x1)))", vec![0.5, 2.0], (-3.0, 3.0), 5);
    let prior = PriorParams::new(&opset, vec![1.0; 5], vec![0.1; 5]).unwrap();
    let trees = sample_from_prior(&prior, &opset, 300, &PriorSamplingConfig::default(), 1).unwrap();
    let cached = Scorer::new(
        opset.clone(),
        Some(data.clone()),
        prior.clone(),
        FitConfig::default(),
    );
    let plain = Scorer::new(opset.clone(), Some(data), prior, FitConfig::default()).without_cache();
    for t in trees.iter().chain(trees.iter().rev()) {
        let a = cached.score(t);
        let b = plain.score(t);
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.sse.to_bits(), b.sse.to_bits());
        assert_eq!(
            a.description_length.to_bits(),
            b.description_length.to_bits()
        );
    }
}
