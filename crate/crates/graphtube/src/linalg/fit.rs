use crate::{Error, Result};

/// Least-squares fit of log(y) = slope * log(x) + intercept.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual in log space; large values mean the data
    /// is not actually on a power law.
    pub rms_residual: f64,
}

pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Invalid(format!(
            "order fit needs at least 2 matched points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Invalid("order fit needs strictly positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("order fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok(LogLogFit { slope, intercept, rms_residual: (ss / n).sqrt() })
}

/// Orders from consecutive pairs: log(y_i/y_{i+1}) / log(x_i/x_{i+1}).
pub fn pairwise_orders(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), ys.len());
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[0] / y[1]).ln() / (x[0] / x[1]).ln())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exact_power_law() {
        let xs = [0.2, 0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|&x: &f64| 3.0 * x.powf(1.5)).collect();
        let fit = log_log_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, 1.5, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0f64.ln(), epsilon = 1e-12);
        assert!(fit.rms_residual < 1e-13);
        for p in pairwise_orders(&xs, &ys) {
            assert_relative_eq!(p, 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn flags_non_power_data() {
        let xs = [0.4, 0.2, 0.1, 0.05];
        let ys = [1.0, 0.9, 0.2, 0.19];
        let fit = log_log_fit(&xs, &ys).unwrap();
        assert!(fit.rms_residual > 0.2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(log_log_fit(&[1.0], &[1.0]).is_err());
        assert!(log_log_fit(&[1.0, -1.0], &[1.0, 1.0]).is_err());
        assert!(log_log_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
