//! Paired t-test and t-based confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AGreater,
    BGreater,
    Equal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    pub mean_difference: f64,
    pub significant: bool,
    pub direction: Direction,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn t_quantile(p: f64, df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df ≥ 1")
        .inverse_cdf(p)
}

/// Two-sided paired t-test on `a − b` with n − 1 degrees of freedom.
///
/// A zero-variance difference is significant unless it is identically
/// zero; its t statistic is ±∞.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least two pairs".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let df = n - 1;
    let md = mean(&d);
    let sd = std_dev(&d);
    let direction = if md > 0.0 {
        Direction::AGreater
    } else if md < 0.0 {
        Direction::BGreater
    } else {
        Direction::Equal
    };

    let spread_is_noise = sd <= 1e-12 * md.abs().max(f64::MIN_POSITIVE);
    if sd == 0.0 || spread_is_noise {
        let (t, p) = if md == 0.0 { (0.0, 1.0) } else { (md.signum() * f64::INFINITY, 0.0) };
        return Ok(TTest {
            t,
            df,
            p_value: p,
            mean_difference: md,
            significant: md != 0.0,
            direction,
        });
    }

    let t = md / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df ≥ 1");
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTest {
        t,
        df,
        p_value,
        mean_difference: md,
        significant: p_value < alpha,
        direction,
    })
}

/// `mean ± t_{0.975, n−1} · sd / √n`.
pub fn confidence_interval_95(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument("confidence interval needs at least two values".into()));
    }
    let m = mean(values);
    let sd = std_dev(values);
    if sd == 0.0 {
        return Ok((m, m));
    }
    let half = t_quantile(0.975, values.len() - 1) * sd / (values.len() as f64).sqrt();
    Ok((m - half, m + half))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_not_significant() {
        let a = [0.8, 0.9, 0.85];
        let r = paired_t_test(&a, &a, 0.05).unwrap();
        assert_eq!(r.t, 0.0);
        assert!(!r.significant);
        assert_eq!(r.direction, Direction::Equal);
    }

    #[test]
    fn constant_difference_is_significant() {
        let r = paired_t_test(&[2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0], 0.05).unwrap();
        assert!(r.t.is_infinite() && r.t > 0.0);
        assert!(r.significant);
        assert_eq!(r.direction, Direction::AGreater);
    }

    #[test]
    fn closed_form_t() {
        // differences [2, 0, 1, 1]
        let r = paired_t_test(&[2.0, 0.0, 1.0, 1.0], &[0.0; 4], 0.05).unwrap();
        let expected = 1.0 / ((2.0f64 / 3.0).sqrt() / 2.0);
        assert!((r.t - expected).abs() < 1e-12);
        assert!((r.t - 2.449).abs() < 1e-3);
        assert_eq!(r.df, 3);
        // t_{0.975,3} = 3.182
        assert!(!r.significant);
    }

    #[test]
    fn swap_negates() {
        let a = [0.9, 0.7, 0.8, 0.85, 0.6];
        let b = [0.7, 0.72, 0.6, 0.8, 0.5];
        let ab = paired_t_test(&a, &b, 0.05).unwrap();
        let ba = paired_t_test(&b, &a, 0.05).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.significant, ba.significant);
        assert_eq!(ab.direction, Direction::AGreater);
        assert_eq!(ba.direction, Direction::BGreater);
    }

    #[test]
    fn length_mismatch() {
        assert!(paired_t_test(&[1.0, 2.0], &[1.0], 0.05).is_err());
        assert!(paired_t_test(&[1.0], &[1.0], 0.05).is_err());
    }

    #[test]
    fn two_point_interval() {
        let (lo, hi) = confidence_interval_95(&[80.0, 84.0]).unwrap();
        // sample sd √8, n = 2
        let half = 12.706_204_736 * 8f64.sqrt() / 2f64.sqrt();
        assert!((lo - (82.0 - half)).abs() < 1e-6);
        assert!((hi - (82.0 + half)).abs() < 1e-6);
        assert_eq!(confidence_interval_95(&[3.0, 3.0, 3.0]).unwrap(), (3.0, 3.0));
    }
}
