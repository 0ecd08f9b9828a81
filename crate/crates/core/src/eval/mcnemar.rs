use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{check_keys, EvalError, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    pub statistic: f64,
    pub p_value: f64,
    pub continuity_correction: bool,
}

/// Survival function of the chi-square distribution with one degree of
/// freedom: P(X > x) = erfc(sqrt(x / 2)).
pub fn chi2_sf_1df(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    erfc((x / 2.0).sqrt()).clamp(0.0, 1.0)
}

/// Test from discordant counts. The uncorrected statistic is
/// (b - c)^2 / (b + c); the corrected one uses (|b - c| - 1)^2, floored at 0.
pub fn mcnemar_counts(b: u64, c: u64, continuity_correction: bool) -> Result<McNemarResult, EvalError> {
    let n = b + c;
    if n == 0 {
        return Err(EvalError::DegenerateTest);
    }
    let diff = b.abs_diff(c) as f64;
    let num = if continuity_correction {
        (diff - 1.0).max(0.0).powi(2)
    } else {
        diff.powi(2)
    };
    let statistic = num / n as f64;
    Ok(McNemarResult {
        b,
        c,
        statistic,
        p_value: chi2_sf_1df(statistic),
        continuity_correction,
    })
}

/// Compare two prediction sets on identical keys against gold.
pub fn mcnemar(a: &LabelMap, b: &LabelMap, gold: &LabelMap, continuity_correction: bool) -> Result<McNemarResult, EvalError> {
    check_keys(a, gold)?;
    check_keys(b, gold)?;
    let (mut only_a, mut only_b) = (0, 0);
    for (key, g) in gold {
        match (a[key] == *g, b[key] == *g) {
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            _ => {}
        }
    }
    mcnemar_counts(only_a, only_b, continuity_correction)
}
