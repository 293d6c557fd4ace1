use serde::{Deserialize, Serialize};

use super::EstimationError;

/// Straight-line fit of `log10(mu_hat)` against optical density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationFit {
    /// Fitted `mu_hat` at zero optical density.
    pub amplitude: f64,
    /// Decades of `mu_hat` lost per unit of optical density; 1 for an ideal attenuator.
    pub decade_slope: f64,
    /// `log10(mu_hat) - fit`, in input order.
    pub residuals: Vec<f64>,
}

/// Equal-weight least squares of `log10(mu_hat) = log10(amplitude) - decade_slope * od`.
pub fn attenuation_fit(points: &[(f64, f64)]) -> Result<AttenuationFit, EstimationError> {
    if let Some((index, &(_, value))) = points
        .iter()
        .enumerate()
        .find(|(_, (od, mu))| !(mu.is_finite() && *mu > 0.0) || !od.is_finite())
    {
        return Err(EstimationError::NonpositiveEstimate { index, value });
    }
    if points.len() < 2 {
        return Err(EstimationError::InsufficientPoints);
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let x_mean = xs.iter().sum::<f64>() / k;
    let y_mean = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if sxx <= f64::EPSILON * x_mean.abs().max(1.0) {
        return Err(EstimationError::InsufficientPoints);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    Ok(AttenuationFit {
        amplitude: 10f64.powf(intercept),
        decade_slope: -slope,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_model_recovered() {
        let pts: Vec<_> = [5.0, 6.0, 7.0]
            .iter()
            .map(|&od: &f64| (od, 100.0 * 10f64.powf(-od + 5.0)))
            .collect();
        let fit = attenuation_fit(&pts).unwrap();
        assert_relative_eq!(fit.decade_slope, 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.amplitude, 1e7, max_relative = 1e-10);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(attenuation_fit(&[(5.0, 3.0)]), Err(EstimationError::InsufficientPoints));
        assert_eq!(
            attenuation_fit(&[(5.0, 3.0), (5.0, 3.0)]),
            Err(EstimationError::InsufficientPoints)
        );
        assert_eq!(
            attenuation_fit(&[(5.0, 3.0), (6.0, 0.0)]),
            Err(EstimationError::NonpositiveEstimate { index: 1, value: 0.0 })
        );
    }
}
