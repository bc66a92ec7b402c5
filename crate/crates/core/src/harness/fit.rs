use serde::{Deserialize, Serialize};

/// Least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

impl AffineFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares; `None` with fewer than two distinct `x`.
pub fn affine_fit(xs: &[f64], ys: &[f64]) -> Option<AffineFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys[..n].iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(AffineFit {
        intercept,
        slope,
        r_squared,
    })
}

/// How closely cumulative regret at epoch boundaries follows a line in the
/// epoch index (equivalently, in `log T`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogShape {
    pub min_epoch: u32,
    pub fit: AffineFit,
    /// Largest `|y - fit| / |fit|` over the fitted epochs.
    pub max_relative_deviation: f64,
    /// `regret / T` never increases from one boundary to the next.
    pub ratio_non_increasing: bool,
}

/// `points` are `(epoch, mean steps at boundary, mean regret at boundary)`.
pub fn log_shape(points: &[(u32, f64, f64)], min_epoch: u32) -> Option<LogShape> {
    let tail: Vec<_> = points.iter().filter(|p| p.0 >= min_epoch).collect();
    let xs: Vec<f64> = tail.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.2).collect();
    let fit = affine_fit(&xs, &ys)?;
    let max_relative_deviation = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let f = fit.predict(x);
            (y - f).abs() / f.abs()
        })
        .fold(0.0, f64::max);
    let ratio_non_increasing = points
        .windows(2)
        .all(|w| w[1].2 / w[1].1 <= w[0].2 / w[0].1);
    Some(LogShape {
        min_epoch,
        fit,
        max_relative_deviation,
        ratio_non_increasing,
    })
}
