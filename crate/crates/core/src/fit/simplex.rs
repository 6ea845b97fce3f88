//! Nelder-Mead simplex minimization.

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Relative spread of function values at which a simplex is converged.
    pub f_tol: f64,
    /// Spread of vertices, relative to `1 + |x|`, at which a simplex is
    /// converged.
    pub x_tol: f64,
    /// Initial edge length is `max(min_step, rel_step * |x0_i|)`.
    pub min_step: f64,
    pub rel_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evals: 400,
            f_tol: 1e-10,
            x_tol: 1e-8,
            min_step: 0.5,
            rel_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as
/// `+inf`. After the first convergence the simplex is rebuilt around the
/// best point once, which guards against premature collapse.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };
    if n == 0 {
        let fx = eval(x0, &mut evals);
        return SimplexResult {
            x: Vec::new(),
            fx,
            evals,
        };
    }
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    for round in 0..2 {
        let before = best_f;
        let (x, fx) = run(&mut eval, &best_x, best_f, opts, &mut evals);
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        let improved = before - best_f > opts.f_tol * best_f.abs().max(1e-300);
        if round == 0 && (!improved && before.is_finite()) {
            break;
        }
        if evals >= opts.max_evals {
            break;
        }
    }
    SimplexResult {
        x: best_x,
        fx: best_f,
        evals,
    }
}

fn run<E>(
    eval: &mut E,
    x0: &[f64],
    f0: f64,
    opts: &SimplexOptions,
    evals: &mut usize,
) -> (Vec<f64>, f64)
where
    E: FnMut(&[f64], &mut usize) -> f64,
{
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.min_step.max(opts.rel_step * x0[i].abs());
        let fv = eval(&v, evals);
        simplex.push((v, fv));
    }

    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    while *evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (f_best, f_worst) = (simplex[0].1, simplex[n].1);
        if f_best.is_finite() && f_worst.is_finite() {
            let f_spread = f_worst - f_best;
            let x_spread = simplex[1..]
                .iter()
                .flat_map(|(v, _)| {
                    v.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
                })
                .fold(0.0, f64::max);
            if f_spread <= opts.f_tol * f_best.abs().max(1e-300) && x_spread <= opts.x_tol.sqrt() {
                break;
            }
            if x_spread <= opts.x_tol {
                break;
            }
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let point = |coef: f64, out: &mut Vec<f64>| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(&worst) {
                *o = c + coef * (c - w);
            }
        };

        point(ALPHA, &mut trial);
        let f_r = eval(&trial, evals);
        if f_r < simplex[0].1 {
            let reflected = trial.clone();
            point(GAMMA, &mut trial);
            let f_e = eval(&trial, evals);
            simplex[n] = if f_e < f_r {
                (trial.clone(), f_e)
            } else {
                (reflected, f_r)
            };
            continue;
        }
        if f_r < simplex[n - 1].1 {
            simplex[n] = (trial.clone(), f_r);
            continue;
        }
        // contraction, outside if the reflection beat the worst point
        let outside = f_r < simplex[n].1;
        point(if outside { RHO } else { -RHO }, &mut trial);
        let f_c = eval(&trial, evals);
        if (outside && f_c <= f_r) || (!outside && f_c < simplex[n].1) {
            simplex[n] = (trial.clone(), f_c);
            continue;
        }
        let best = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for (x, b) in v.iter_mut().zip(&best) {
                *x = b + SIGMA * (*x - b);
            }
            *fv = eval(v, evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx)
}
