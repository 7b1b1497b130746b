//! Finite-size scaling fits of `value = α d^{−γ}` with `d = 2^L`.

use serde::{Deserialize, Serialize};

use crate::error::{BrotocError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub log2_alpha: f64,
    pub gamma: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Least-squares line through `(L, log₂ value)` over the `k_last` largest `L`.
pub fn fit_scaling(points: &[(f64, f64)], k_last: usize) -> Result<ScalingFit> {
    if k_last < 2 {
        return Err(BrotocError::Domain("a fit needs at least 2 points".into()));
    }
    if points.len() < k_last {
        return Err(BrotocError::Domain(format!("{} points, fit needs {k_last}", points.len())));
    }
    if let Some(&(l, v)) = points.iter().find(|p| !(p.1 > 0.0) || !p.1.is_finite() || !p.0.is_finite()) {
        return Err(BrotocError::Domain(format!("value {v} at L = {l} cannot be fitted on a log scale")));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let used = &sorted[sorted.len() - k_last..];
    let n = k_last as f64;
    let xs: Vec<f64> = used.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(BrotocError::Domain("fit points share a single L".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ScalingFit { log2_alpha: intercept, gamma: -slope, r_squared, points_used: k_last })
}
