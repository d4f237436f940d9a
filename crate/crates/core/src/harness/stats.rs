use statrs::distribution::{ContinuousCDF, StudentsT};

use super::HarnessError;

/// Mean and 95% confidence half-width of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Half-width of the two-sided 95% Student-t interval; 0 for a single
    /// sample.
    pub margin_of_error: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Result<Summary, HarnessError> {
        let n = samples.len();
        if n == 0 {
            return Err(HarnessError::Stats("no samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(HarnessError::Stats("non-finite sample".into()));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Ok(Summary {
                mean,
                margin_of_error: 0.0,
                n,
            });
        }
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| HarnessError::Stats(e.to_string()))?
            .inverse_cdf(0.975);
        Ok(Summary {
            mean,
            margin_of_error: t * var.sqrt() / (n as f64).sqrt(),
            n,
        })
    }
}

/// `baseline / variant`.
pub fn speedup(baseline_mean: f64, variant_mean: f64) -> Result<f64, HarnessError> {
    if baseline_mean <= 0.0 || variant_mean <= 0.0 {
        return Err(HarnessError::Stats(format!(
            "speedup needs positive means, got {baseline_mean} and {variant_mean}"
        )));
    }
    Ok(baseline_mean / variant_mean)
}

pub fn geometric_mean(values: &[f64]) -> Result<f64, HarnessError> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(HarnessError::Stats("geometric mean needs positive finite values".into()));
    }
    Ok((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_interval() {
        let s = Summary::of(&[9.0, 10.0, 11.0, 10.0, 10.0]).unwrap();
        assert!((s.mean - 10.0).abs() < 1e-12);
        assert!((s.margin_of_error - 0.878).abs() < 1e-3, "{}", s.margin_of_error);
    }

    #[test]
    fn constant_and_single_samples_have_zero_margin() {
        assert_eq!(Summary::of(&[10.0; 5]).unwrap().margin_of_error, 0.0);
        let one = Summary::of(&[3.5]).unwrap();
        assert_eq!((one.mean, one.margin_of_error), (3.5, 0.0));
        assert!(Summary::of(&[]).is_err());
    }

    #[test]
    fn speedups() {
        assert!((speedup(186.0, 120.0).unwrap() - 1.55).abs() < 0.005);
        assert_eq!(speedup(5.0, 5.0).unwrap(), 1.0);
        assert!(speedup(5.0, 0.0).is_err());
        assert!((geometric_mean(&[2.0, 8.0]).unwrap() - 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn margin_nonnegative_and_shift_invariant(xs in prop::collection::vec(1.0f64..1000.0, 1..20), c in 0.0f64..100.0) {
            let a = Summary::of(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let b = Summary::of(&shifted).unwrap();
            prop_assert!(a.margin_of_error >= 0.0);
            prop_assert!((a.margin_of_error - b.margin_of_error).abs() < 1e-6 * (1.0 + a.margin_of_error));
            prop_assert!((b.mean - a.mean - c).abs() < 1e-6 * (1.0 + b.mean));
        }
    }
}
