//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use dynprice::estimators::ParamEstimate;
use dynprice::fluid::FluidProblem;
use dynprice::linalg::{Matrix, Vector};
use dynprice::model::PriceBox;
use dynprice::sim::standard_normals;
use dynprice::surrogate::{estimate_gamma, pseudo_observe, Center, SurrogateModel};
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random strictly concave fluid problem with `n` products and `m` resources.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> FluidProblem {
    let mut b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..0.0));
    let sym = (&b + b.transpose()) * 0.5;
    let shift = sym.symmetric_eigenvalues().max() + rng.random_range(0.3..1.0);
    for j in 0..n {
        b[(j, j)] -= shift;
    }
    let alpha = Vector::from_fn(n, |_, _| rng.random_range(1.0..3.0));
    let a = Matrix::from_fn(m, n, |_, _| rng.random_range(0.0..1.0));
    let upper = rng.random_range(1.0..2.5);
    let mid = Vector::from_element(n, upper / 2.0);
    let d_mid = (&alpha + &b * &mid).map(|x| x.max(0.1));
    let rhs = (&a * d_mid).map(|x| x * rng.random_range(0.3..1.5));
    FluidProblem::new(alpha, b, a, rhs, PriceBox::new(0.0, upper, n).unwrap())
}

/// Revenue `p·(α + Bp)` computed directly in price space.
pub fn price_revenue(problem: &FluidProblem, p: &Vector) -> f64 {
    p.dot(&(&problem.alpha + &problem.b * p))
}

pub fn feasible(problem: &FluidProblem, p: &Vector, slack: f64) -> bool {
    let d = &problem.alpha + &problem.b * p;
    d.iter().all(|&x| x >= -slack) && (&problem.a * &d - &problem.rhs).iter().all(|&x| x <= slack)
}

/// Best value over the last price coordinate with the others fixed at `prefix`.
/// Every constraint is linear in that coordinate, so the feasible set is an interval
/// and the concave objective has a closed-form maximizer on it.
fn line_best(problem: &FluidProblem, prefix: &[f64]) -> Option<f64> {
    let n = problem.alpha.len();
    let j = n - 1;
    let (mut lo, mut hi) = (problem.price_box.lower(), problem.price_box.upper());
    let base: Vec<f64> = (0..n)
        .map(|i| problem.alpha[i] + (0..j).map(|k| problem.b[(i, k)] * prefix[k]).sum::<f64>())
        .collect();
    let slope: Vec<f64> = (0..n).map(|i| problem.b[(i, j)]).collect();
    let mut bound = |g0: f64, g1: f64, r: f64| -> bool {
        // g0 + g1 x <= r
        if g1 > 0.0 {
            hi = hi.min((r - g0) / g1);
        } else if g1 < 0.0 {
            lo = lo.max((r - g0) / g1);
        } else if g0 > r {
            return false;
        }
        true
    };
    for i in 0..n {
        if !bound(-base[i], -slope[i], 0.0) {
            return None;
        }
    }
    for k in 0..problem.a.nrows() {
        let g0: f64 = (0..n).map(|i| problem.a[(k, i)] * base[i]).sum();
        let g1: f64 = (0..n).map(|i| problem.a[(k, i)] * slope[i]).sum();
        if !bound(g0, g1, problem.rhs[k]) {
            return None;
        }
    }
    if lo > hi {
        return None;
    }
    let constant: f64 = (0..j).map(|k| prefix[k] * base[k]).sum();
    let linear: f64 = (0..j).map(|k| prefix[k] * slope[k]).sum::<f64>() + base[j];
    let quad = slope[j];
    let x = (-linear / (2.0 * quad)).clamp(lo, hi);
    Some(constant + linear * x + quad * x * x)
}

/// Grid points `center ± radius` at spacing `h`, clipped to `[lo, hi]`, always
/// including the clipped endpoints.
fn axis(lo: f64, hi: f64, center: f64, radius: f64, h: f64) -> Vec<f64> {
    let a = (center - radius).max(lo);
    let b = (center + radius).min(hi);
    let steps = ((b - a) / h).floor() as usize;
    let mut out: Vec<f64> = (0..=steps).map(|k| a + k as f64 * h).collect();
    if out.last().is_none_or(|&x| x < b) {
        out.push(b);
    }
    out
}

fn search(problem: &FluidProblem, axes: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    let dims = axes.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; dims];
    let mut prefix = vec![0.0; dims];
    loop {
        for k in 0..dims {
            prefix[k] = axes[k][idx[k]];
        }
        if let Some(v) = line_best(problem, &prefix) {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, prefix.clone()));
            }
        }
        let mut k = 0;
        loop {
            if k == dims {
                return best;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Plain grid search at step `h` over the first `n−1` price coordinates with an
/// exact maximization over the last one.
pub fn grid_value(problem: &FluidProblem, h: f64) -> Option<f64> {
    let (lo, hi) = (problem.price_box.lower(), problem.price_box.upper());
    let dims = problem.alpha.len() - 1;
    let axes = vec![axis(lo, hi, lo, hi - lo, h); dims];
    search(problem, &axes).map(|(v, _)| v)
}

/// `grid_value` followed by successively finer local grids around the incumbent,
/// down to step `h·10⁻⁴`. Removes the first-order loss a coarse grid suffers when
/// the optimum sits on a corner of the feasible region. Returns `(coarse, refined)`.
pub fn refined_grid_value(problem: &FluidProblem, h: f64) -> Option<(f64, f64)> {
    let (lo, hi) = (problem.price_box.lower(), problem.price_box.upper());
    let dims = problem.alpha.len() - 1;
    let axes = vec![axis(lo, hi, lo, hi - lo, h); dims];
    let (coarse, mut center) = search(problem, &axes)?;
    let mut value = coarse;
    let mut step = h;
    for _ in 0..4 {
        let radius = 5.0 * step;
        step /= 10.0;
        let axes: Vec<Vec<f64>> = (0..dims).map(|k| axis(lo, hi, center[k], radius, step)).collect();
        if let Some((v, c)) = search(problem, &axes) {
            if v > value {
                value = v;
                center = c;
            }
        }
    }
    Some((coarse, value))
}

/// Least squares by solving the normal equations `(XᵀX) θ = Xᵀy` with a dense LU.
pub fn normal_equation_ols(prices: &[Vector], demands: &[Vector]) -> (Vector, Matrix) {
    let n = prices[0].len();
    let x = Matrix::from_fn(prices.len(), n + 1, |r, c| if c == 0 { 1.0 } else { prices[r][c - 1] });
    let y = Matrix::from_fn(demands.len(), n, |r, c| demands[r][c]);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let theta = xtx.lu().solve(&xty).expect("full-rank design");
    let alpha = Vector::from_fn(n, |j, _| theta[(0, j)]);
    let b = Matrix::from_fn(n, n, |j, k| theta[(k + 1, j)]);
    (alpha, b)
}

/// Standard normal CDF by composite Simpson integration of the density.
pub fn normal_cdf(x: f64) -> f64 {
    if x < -12.0 {
        return 0.0;
    }
    let lo = -12.0;
    let steps = 20_000;
    let h = (x - lo) / steps as f64;
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(lo) + pdf(x);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * pdf(lo + k as f64 * h);
    }
    acc * h / 3.0
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// `Var(pseudo)/Var(raw)` over `draws` paired samples of a scalar market, with the
/// control-variate coefficient estimated from the same sample and the surrogate
/// variance from an independent offline sample.
pub fn variance_ratio(rho: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 1.0;
    let sm = SurrogateModel::new(Vector::from_element(1, 4.0), Matrix::from_element(1, 1, -0.8), rho, sigma, sigma).unwrap();
    let center = Center { intercept: sm.bias.clone(), slope: sm.slope.clone() };
    let truth = ParamEstimate { alpha_hat: Vector::from_element(1, 5.0), b_hat: Matrix::from_element(1, 1, -1.0) };

    let offline: Vec<f64> = (0..10_000)
        .map(|_| {
            let p = Vector::from_element(1, rng.random_range(0.0..3.0));
            let eps = standard_normals(1, &mut rng) * sigma;
            (sm.sample(&p, &eps, &mut rng) - center.eval(&p))[0]
        })
        .collect();
    let sigma_s_off = Matrix::from_element(1, 1, variance(&offline));

    let triples: Vec<(Vector, Vector, Vector)> = (0..draws)
        .map(|_| {
            let p = Vector::from_element(1, rng.random_range(0.0..3.0));
            let eps = standard_normals(1, &mut rng) * sigma;
            let d = truth.predict(&p) + &eps;
            let s = sm.sample(&p, &eps, &mut rng);
            (d, s, p)
        })
        .collect();
    let cv = estimate_gamma(&triples, &center, &truth, &sigma_s_off, 0.0);
    let raw: Vec<f64> = triples.iter().map(|(d, _, p)| (d - truth.predict(p))[0]).collect();
    let pseudo: Vec<f64> = triples
        .iter()
        .map(|(d, s, p)| (pseudo_observe(d, s, p, &cv, &center) - truth.predict(p))[0])
        .collect();
    variance(&pseudo) / variance(&raw)
}
