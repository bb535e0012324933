use crate::error::{Error, Result};

/// Standard deviations below this count as a constant group.
pub const ADV_STD_FLOOR: f64 = 1e-8;

/// Group-relative advantages `(r - mean) / std` with the population std.
/// A constant group gets all-zero advantages.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::config(format!(
            "advantages need a group of at least 2, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reward"));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < ADV_STD_FLOOR {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_of_six() {
        let a = compute_advantages(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let s = (2.0f64 / 9.0).sqrt();
        for &x in &a[..4] {
            assert!((x - (1.0 / 3.0) / s).abs() < 1e-12);
            assert!((x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
        for &x in &a[4..] {
            assert!((x + std::f64::consts::SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_group() {
        assert_eq!(compute_advantages(&[1.0; 6]).unwrap(), vec![0.0; 6]);
        assert_eq!(compute_advantages(&[0.3; 2]).unwrap(), vec![0.0; 2]);
    }

    #[test]
    fn rejects_small_groups() {
        assert!(matches!(compute_advantages(&[1.0]), Err(Error::InvalidConfig(_))));
        assert!(compute_advantages(&[]).is_err());
        assert!(compute_advantages(&[1.0, f64::NAN]).is_err());
    }
}
