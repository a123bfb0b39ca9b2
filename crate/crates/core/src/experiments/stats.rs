//! Summary statistics and log-log fits.

use thiserror::Error;

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with the `n−1` divisor; 0 for a single value.
pub fn sample_std(x: &[f64]) -> f64 {
    match x.len() {
        0 => f64::NAN,
        1 => 0.0,
        n => {
            let m = mean(x);
            (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        }
    }
}

pub fn stderr(x: &[f64]) -> f64 {
    sample_std(x) / (x.len() as f64).sqrt()
}

/// Mean and standard error of the paired differences `a − b`.
pub fn paired_difference(a: &[Option<f64>], b: &[Option<f64>]) -> (f64, f64) {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some((*x)? - (*y)?))
        .collect();
    (mean(&d), stderr(&d))
}

/// Ranks starting at 1 with ties sharing their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 horizons with positive mean regret, have {0}")]
    NotFittable(usize),
}

/// Least-squares slope of `log(mean regret)` against `log(T)`; nonpositive means are
/// dropped.
pub fn fit_scaling_exponent(points: &[(usize, f64)]) -> Result<ScalingFit, FitError> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, r)| *t > 0 && *r > 0.0 && r.is_finite())
        .map(|&(t, r)| ((t as f64).ln(), r.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(FitError::NotFittable(pts.len()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(ScalingFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const HORIZONS: [usize; 6] = [50, 100, 200, 400, 800, 1600];

    #[test]
    fn square_root_law_has_half_slope() {
        let pts: Vec<_> = HORIZONS.iter().map(|&t| (t, 7.0 * (t as f64).sqrt())).collect();
        let fit = fit_scaling_exponent(&pts).unwrap();
        assert_relative_eq!(fit.slope, 0.5, epsilon = 1e-6);
        assert_relative_eq!(fit.intercept, 7f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn log_law_has_small_slope() {
        let pts: Vec<_> = HORIZONS.iter().map(|&t| (t, 3.0 * (t as f64).ln())).collect();
        assert!(fit_scaling_exponent(&pts).unwrap().slope < 0.3);
    }

    #[test]
    fn constant_law_has_zero_slope() {
        let pts: Vec<_> = HORIZONS.iter().map(|&t| (t, 4.0)).collect();
        assert!(fit_scaling_exponent(&pts).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn nonpositive_points_are_dropped() {
        let pts = [(50, 1.0), (100, -1.0), (200, 0.0), (400, 2.0)];
        assert_eq!(fit_scaling_exponent(&pts).unwrap_err(), FitError::NotFittable(2));
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(sample_std(&[3.0, 3.0, 3.0]), 0.0);
        assert_relative_eq!(sample_std(&[1.0, 2.0, 3.0, 4.0]), (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]), 1.0);
        let (m, _) = paired_difference(&[Some(3.0), None, Some(5.0)], &[Some(1.0), Some(0.0), Some(1.0)]);
        assert_relative_eq!(m, 3.0);
    }
}
