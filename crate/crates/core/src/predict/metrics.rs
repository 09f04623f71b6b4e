use super::{PredictError, Result};

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(PredictError::Shape(format!(
            "{} targets vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(PredictError::ConstantTarget);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean of `1 / (1 + |c - ĉ|)` over category ordinals `0..=3`.
pub fn categorical_accuracy(truth: &[u8], predicted: &[u8]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(PredictError::Shape(format!(
            "{} true vs {} predicted categories",
            truth.len(),
            predicted.len()
        )));
    }
    if let Some(&c) = truth.iter().chain(predicted).find(|&&c| c > 3) {
        return Err(PredictError::CategoryOutOfRange(c));
    }
    let total: f64 = truth
        .iter()
        .zip(predicted)
        .map(|(&a, &b)| 1.0 / (1.0 + a.abs_diff(b) as f64))
        .sum();
    Ok(total / truth.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_examples() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_eq!(r_squared(&y, &[1.0; 3]).unwrap(), 0.0);
        assert_eq!(r_squared(&y, &[0.0, 1.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(
            r_squared(&[1.0, 1.0], &[0.0, 1.0]),
            Err(PredictError::ConstantTarget)
        ));
        assert!(r_squared(&[], &[]).is_err());
    }

    #[test]
    fn categorical_accuracy_examples() {
        assert_eq!(
            categorical_accuracy(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap(),
            1.0
        );
        assert_eq!(categorical_accuracy(&[0, 3], &[3, 0]).unwrap(), 0.25);
        assert_eq!(categorical_accuracy(&[0, 1], &[1, 1]).unwrap(), 0.75);
        assert!(matches!(
            categorical_accuracy(&[4], &[0]),
            Err(PredictError::CategoryOutOfRange(4))
        ));
    }

    #[test]
    fn mean_and_population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
