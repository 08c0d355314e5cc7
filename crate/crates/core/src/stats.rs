//! Small statistics helpers shared by the estimators and diagnostics.

/// Pairwise summation over a fixed index order, so results do not depend on
/// how the terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn std_err(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the mean of a dependent sequence by non-overlapping
/// batch means with batches of length `floor(sqrt(n))`.
pub fn batch_means_std_err(xs: &[f64]) -> f64 {
    let n = xs.len();
    let b = (n as f64).sqrt().floor().max(1.0) as usize;
    let batches: Vec<f64> = xs.chunks_exact(b).map(mean).collect();
    if batches.len() < 2 {
        return f64::NAN;
    }
    (variance(&batches) / batches.len() as f64).sqrt()
}

/// Ordinary least squares fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
    pub intercept_std_err: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_std_err, intercept_std_err) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let s2 = rss / (n - 2) as f64;
        let sx2: f64 = x.iter().map(|a| a * a).sum();
        ((s2 / sxx).sqrt(), (s2 * sx2 / (n as f64 * sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Some(LineFit {
        slope,
        intercept,
        slope_std_err,
        intercept_std_err,
        points: n,
    })
}
