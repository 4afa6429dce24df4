use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use super::{check_series, RunningMoments, StatsError};

/// Result of a two-sided Welch unequal-variances t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    /// `(mean(a) - mean(b)) / sqrt(var_a/n_a + var_b/n_b)`; infinite when
    /// both variances are zero and the means differ.
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub p: f64,
    /// Both samples had zero variance, so `t` is undefined or infinite.
    pub degenerate: bool,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    check_series("a", a)?;
    check_series("b", b)?;
    let ma: RunningMoments = a.iter().copied().collect();
    let mb: RunningMoments = b.iter().copied().collect();
    Ok(welch_from_moments(&ma, &mb))
}

/// Welch test from precomputed moments (each with at least two values).
pub fn welch_from_moments(a: &RunningMoments, b: &RunningMoments) -> WelchResult {
    let (na, nb) = (a.count() as f64, b.count() as f64);
    let (sa, sb) = (a.variance() / na, b.variance() / nb);
    let se2 = sa + sb;
    let diff = a.mean() - b.mean();
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return if diff == 0.0 {
            WelchResult { t: 0.0, df, p: 1.0, degenerate: true }
        } else {
            WelchResult { t: f64::INFINITY.copysign(diff), df, p: 0.0, degenerate: true }
        };
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    WelchResult {
        t,
        df,
        p: student_t_two_sided(t, df),
        degenerate: false,
    }
}
