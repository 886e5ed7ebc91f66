//! Distributional statistics over episode returns: value-at-risk and
//! conditional value-at-risk estimators, summary statistics, scalar training
//! objectives, and a Clopper-Pearson lower confidence bound on the
//! probability that an episode satisfies all allocation constraints.
//!
//! Sign convention: returns are rewards (larger is better), so the lower tail
//! holds the bad outcomes and both VaR and CVaR are computed over ascending
//! order statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from the estimators in this module.
#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("cannot estimate statistics from an empty sample set")]
    EmptySamples,
    #[error("sample set contains NaN")]
    NanSample,
    #[error("beta must lie in (0, 1], got {0}")]
    InvalidBeta(f64),
    #[error("upsilon must lie in (0, 1), got {0}")]
    InvalidUpsilon(f64),
    #[error("successes {successes} exceed sample count {n}")]
    TooManySuccesses { successes: u64, n: u64 },
    #[error("return collections must have equal non-zero lengths")]
    MismatchedLengths,
}

/// Monte-Carlo returns of one policy evaluation.
///
/// `z` holds raw episode returns, `z_phi` the same returns minus allocation
/// penalties, `violated` marks episodes with at least one allocation
/// violation, and `seeds` records the scenario seed of each episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSamples {
    pub z_phi: Vec<f64>,
    pub z: Vec<f64>,
    pub violated: Vec<bool>,
    pub seeds: Vec<u64>,
}

impl ReturnSamples {
    /// Bundles parallel vectors, requiring equal non-zero lengths.
    pub fn new(
        z_phi: Vec<f64>,
        z: Vec<f64>,
        violated: Vec<bool>,
        seeds: Vec<u64>,
    ) -> Result<Self, RiskError> {
        let n = z.len();
        if n == 0 || z_phi.len() != n || violated.len() != n || seeds.len() != n {
            return Err(RiskError::MismatchedLengths);
        }
        Ok(Self { z_phi, z, violated, seeds })
    }

    /// Number of episodes.
    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Episodes without any allocation violation.
    pub fn n_feasible(&self) -> u64 {
        self.violated.iter().filter(|&&v| !v).count() as u64
    }
}

/// Scalar objective maximized during policy search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObjectiveMode {
    /// Mean of penalized returns.
    MeanPenalized,
    /// Lower-tail CVaR of penalized returns at the given tail fraction.
    CVaRPenalized { beta: f64 },
}

/// Summary statistics of one evaluated sample set.
///
/// Mean, std, VaR and CVaR are computed over raw (non-penalized) returns;
/// penalties only enter the training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub mean: f64,
    pub std: f64,
    /// True when n = 1 and the reported std of 0 is a placeholder.
    pub std_degenerate: bool,
    pub var_beta: f64,
    pub cvar_beta: f64,
    pub beta: f64,
    pub n_samples: usize,
    /// Empirical fraction of episodes without allocation violations.
    pub f_sa: f64,
    /// Clopper-Pearson lower confidence bound on that fraction.
    pub f_lb: f64,
    /// Confidence level of the bound (1 - upsilon).
    pub confidence: f64,
}

fn check_samples(samples: &[f64]) -> Result<(), RiskError> {
    if samples.is_empty() {
        return Err(RiskError::EmptySamples);
    }
    if samples.iter().any(|z| z.is_nan()) {
        return Err(RiskError::NanSample);
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<(), RiskError> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(RiskError::InvalidBeta(beta));
    }
    Ok(())
}

/// 1-based order-statistic index max(1, floor(beta * n)).
///
/// Products within 1e-9 of an integer snap to it so that exact fractions
/// like 0.2 * 500 are not pushed below the boundary by rounding.
fn order_index(beta: f64, n: usize) -> usize {
    let scaled = beta * n as f64;
    let nearest = scaled.round();
    let k = if (scaled - nearest).abs() < 1e-9 { nearest } else { scaled.floor() };
    (k as usize).clamp(1, n)
}

/// Value-at-risk estimate: the max(1, floor(beta n))-th ascending order
/// statistic of the samples.
pub fn var_estimate(samples: &[f64], beta: f64) -> Result<f64, RiskError> {
    check_samples(samples)?;
    check_beta(beta)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[order_index(beta, sorted.len()) - 1])
}

/// Conditional value-at-risk estimate:
/// VaR + (1 / (beta n)) * sum_i min(0, z_i - VaR).
pub fn cvar_estimate(samples: &[f64], beta: f64) -> Result<f64, RiskError> {
    let var = var_estimate(samples, beta)?;
    let n = samples.len() as f64;
    let tail: f64 = samples.iter().map(|&z| (z - var).min(0.0)).sum();
    Ok(var + tail / (beta * n))
}

/// Lower (1 - upsilon) confidence bound on a Bernoulli success probability
/// from `successes` out of `n` trials, by the Clopper-Pearson construction.
pub fn clopper_pearson_lb(successes: u64, n: u64, upsilon: f64) -> Result<f64, RiskError> {
    if !(upsilon > 0.0 && upsilon < 1.0) {
        return Err(RiskError::InvalidUpsilon(upsilon));
    }
    if n == 0 {
        return Err(RiskError::EmptySamples);
    }
    if successes > n {
        return Err(RiskError::TooManySuccesses { successes, n });
    }
    if successes == 0 {
        return Ok(0.0);
    }
    if successes == n {
        return Ok((1.0 - upsilon).powf(1.0 / n as f64));
    }
    let a = (n + 1 - successes) as f64;
    let b = successes as f64;
    Ok(1.0 - inv_reg_inc_beta(upsilon, a, b))
}

/// Summary statistics over raw returns plus the constraint-satisfaction
/// bound. The std is the population standard deviation; n = 1 reports 0 and
/// sets the degenerate flag.
pub fn summarize(
    samples: &ReturnSamples,
    beta: f64,
    upsilon: f64,
) -> Result<RiskSummary, RiskError> {
    check_samples(&samples.z)?;
    let n = samples.n();
    let mean = samples.z.iter().sum::<f64>() / n as f64;
    let (std, std_degenerate) = if n == 1 {
        (0.0, true)
    } else {
        let var = samples.z.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
        (var.sqrt(), false)
    };
    let feasible = samples.n_feasible();
    Ok(RiskSummary {
        mean,
        std,
        std_degenerate,
        var_beta: var_estimate(&samples.z, beta)?,
        cvar_beta: cvar_estimate(&samples.z, beta)?,
        beta,
        n_samples: n,
        f_sa: feasible as f64 / n as f64,
        f_lb: clopper_pearson_lb(feasible, n as u64, upsilon)?,
        confidence: 1.0 - upsilon,
    })
}

/// Scalar training objective over penalized returns.
pub fn objective(samples: &ReturnSamples, mode: ObjectiveMode) -> Result<f64, RiskError> {
    check_samples(&samples.z_phi)?;
    match mode {
        ObjectiveMode::MeanPenalized => {
            Ok(samples.z_phi.iter().sum::<f64>() / samples.z_phi.len() as f64)
        }
        ObjectiveMode::CVaRPenalized { beta } => cvar_estimate(&samples.z_phi, beta),
    }
}

// Regularized incomplete beta function and its inverse. Accuracy target is
// 1e-12 absolute, which the continued fraction reaches in well under the
// iteration cap for the (a, b) ranges produced by confidence bounds.

const LANCZOS: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Continued-fraction kernel of the incomplete beta function, evaluated with
/// the modified Lentz algorithm.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 3e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=400 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Inverse of I_x(a, b) in x, by bisection to 1e-12 absolute.
fn inv_reg_inc_beta(p: f64, a: f64, b: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reg_inc_beta(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}
