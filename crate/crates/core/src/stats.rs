//! Small numeric helpers shared across modules.

/// Sample mean and sample standard deviation (denominator `n - 1`).
///
/// Returns `(0, 0)` for an empty input and a zero deviation for a single value.
pub fn mean_sd(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    // Welford keeps the variance accurate for long, nearly constant inputs.
    let mut n = 0u64;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    match n {
        0 => (0.0, 0.0),
        1 => (mean, 0.0),
        _ => (mean, (m2 / (n - 1) as f64).max(0.0).sqrt()),
    }
}

pub fn sample_sd(values: &[f64]) -> f64 {
    mean_sd(values.iter().copied()).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_two_pass_formula() {
        let v = [1.0, 2.0, 4.0, 7.0];
        let m = v.iter().sum::<f64>() / 4.0;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0;
        let (mean, sd) = mean_sd(v);
        assert!((mean - m).abs() < 1e-15);
        assert!((sd - var.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(mean_sd([]), (0.0, 0.0));
        assert_eq!(mean_sd([3.0]), (3.0, 0.0));
        assert_eq!(sample_sd(&[2.0, 2.0, 2.0]), 0.0);
    }
}
