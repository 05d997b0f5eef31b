//! Least-squares power-law fits `value ≈ K h^p`.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// Fitted exponent with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub order: f64,
    pub stderr: f64,
    pub log_prefactor: f64,
}

/// Slope of `ln value` against `ln h`. Needs at least three points with
/// positive `h` and `value`.
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(usage(format!(
            "scaling fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(h, v)) = points
        .iter()
        .find(|(h, v)| !(*h > 0.0 && *v > 0.0 && h.is_finite() && v.is_finite()))
    {
        return Err(usage(format!(
            "scaling fit needs positive finite points, got ({h}, {v})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(usage("scaling fit needs at least two distinct h values"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - order * x).powi(2))
        .sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    Ok(ScalingFit {
        order,
        stderr,
        log_prefactor: intercept,
    })
}
