//! Expected-residual bound for constant-step mini-batch SGD and the
//! `N_Update` lower bounds that follow from it.
//!
//! With `lambda = eta (1 - eta L / 2) / |w0 - w*|^2` and
//! `sigma^2 = eta^2 L phi^2 / (2 lambda)` the expected residual obeys
//! `Delta_{k+1} <= Delta_k - lambda Delta_k^2 + lambda sigma^2`, which
//! telescopes to
//!
//! ```text
//! Delta_k <= 1 / [(1 + 2 lambda sigma)^k (1/(Delta_0 - sigma) + 1/(2 sigma)) - 1/(2 sigma)] + sigma
//! ```
//!
//! As `sigma -> 0` this becomes the gradient-descent rate `1 / (1/Delta_0 + lambda k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams<T> {
    /// Contraction rate.
    pub lambda: T,
    /// Noise floor.
    pub sigma: T,
    /// Initial residual.
    pub delta0: T,
    /// Batch-size constant in `sigma^2 ~ theta / M`.
    pub theta: T,
}

impl<T: Scalar> BoundParams<T> {
    pub fn new(lambda: T, sigma: T, delta0: T, theta: T) -> Result<Self> {
        let bp = BoundParams { lambda, sigma, delta0, theta };
        bp.validate()?;
        Ok(bp)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lambda, self.sigma, self.delta0, self.theta].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::input("bound parameters must be finite"));
        }
        if !(self.lambda > T::zero()) {
            return Err(Error::input(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.sigma < T::zero() || self.theta < T::zero() {
            return Err(Error::input("sigma and theta must be nonnegative"));
        }
        if !(self.delta0 > T::zero()) {
            return Err(Error::input(format!("delta0 must be positive, got {}", self.delta0)));
        }
        if self.delta0 < self.sigma {
            return Err(Error::input(format!(
                "delta0 = {} is below the noise floor sigma = {}",
                self.delta0, self.sigma
            )));
        }
        if self.lambda * (self.delta0 + self.sigma) > T::one() {
            return Err(Error::input(format!(
                "lambda * (delta0 + sigma) = {} exceeds 1",
                self.lambda * (self.delta0 + self.sigma)
            )));
        }
        Ok(())
    }

    /// Same contraction and start, noise floor for batch size `m`:
    /// `sigma = sqrt(theta / m)`.
    pub fn at_minibatch(&self, m: T) -> Self {
        BoundParams { sigma: (self.theta / m).sqrt(), ..*self }
    }
}

/// Build [`BoundParams`] from the SGD primitives.
///
/// `phi` is the standard deviation of the gradient noise of a single
/// update, so `theta` is set to `sigma^2` (the `M = 1` reference).
pub fn bound_params_from_primitives<T: Scalar>(eta: T, l: T, phi: T, delta0: T, dist0: T) -> Result<BoundParams<T>> {
    if !(eta > T::zero()) {
        return Err(Error::input(format!("eta must be positive, got {eta}")));
    }
    if !(l > T::zero()) {
        return Err(Error::input(format!("L must be positive, got {l}")));
    }
    if !(dist0 > T::zero()) {
        return Err(Error::input(format!("|w0 - w*| must be positive, got {dist0}")));
    }
    if !(phi >= T::zero()) {
        return Err(Error::input(format!("phi must be nonnegative, got {phi}")));
    }
    let half_step = eta * l * T::half();
    if half_step >= T::one() {
        return Err(Error::StepSize(half_step.as_f64()));
    }
    let lambda = eta * (T::one() - half_step) / (dist0 * dist0);
    let sigma2 = eta * eta * l * phi * phi / (T::two() * lambda);
    BoundParams::new(lambda, sigma2.sqrt(), delta0, sigma2)
}

/// `(1 + 2 lambda sigma)^k` as `(growth - 1, growth)`, computed through
/// `ln_1p`/`exp_m1` so small `lambda sigma` keeps its precision.
fn growth<T: Scalar>(k: u64, lambda: T, sigma: T) -> (T, T) {
    let log = T::count(k) * (T::two() * lambda * sigma).ln_1p();
    (log.exp_m1(), log.exp())
}

/// Upper bound on the expected residual after `k` updates.
///
/// Evaluated as `1 / [ (g - 1)/(2 sigma) + g/(Delta_0 - sigma) ] + sigma`
/// with `g = (1 + 2 lambda sigma)^k`, algebraically the telescoped form but
/// without the cancellation of two `1/(2 sigma)` terms. `k = 0` returns
/// `Delta_0` exactly.
pub fn residual_bound<T: Scalar>(k: u64, bp: &BoundParams<T>) -> Result<T> {
    if bp.sigma == T::zero() {
        return Err(Error::NoiseFree);
    }
    if bp.delta0 <= bp.sigma {
        return Err(Error::Degenerate(format!("delta0 = sigma = {}: 1/(delta0 - sigma) is infinite", bp.sigma)));
    }
    if k == 0 {
        return Ok(bp.delta0);
    }
    let (g_minus_1, g) = growth(k, bp.lambda, bp.sigma);
    let denom = g_minus_1 / (T::two() * bp.sigma) + g / (bp.delta0 - bp.sigma);
    Ok(T::one() / denom + bp.sigma)
}

/// Noise-free gradient-descent rate `1 / (1/Delta_0 + lambda k)`.
pub fn gd_limit<T: Scalar>(k: u64, lambda: T, delta0: T) -> T {
    if k == 0 {
        return delta0;
    }
    T::one() / (T::one() / delta0 + lambda * T::count(k))
}

/// Either bound, dispatching `sigma = 0` to [`gd_limit`].
pub fn residual_bound_or_gd<T: Scalar>(k: u64, bp: &BoundParams<T>) -> Result<T> {
    if bp.sigma == T::zero() {
        Ok(gd_limit(k, bp.lambda, bp.delta0))
    } else {
        residual_bound(k, bp)
    }
}

/// Updates needed before the bound can reach `epsilon`:
/// `[ln((eps + sigma)/(eps - sigma)) + ln((Delta_0 - sigma)/(Delta_0 + sigma))] / ln(1 + 2 lambda sigma)`.
///
/// The log ratios are computed as `2 atanh(sigma / x)`. With `sigma = 0`
/// the value is the gradient-descent count `(1/eps - 1/Delta_0) / lambda`.
pub fn n_update_lower_bound_exact<T: Scalar>(epsilon: T, bp: &BoundParams<T>) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
    }
    if bp.sigma == T::zero() {
        return Ok((T::one() / epsilon - T::one() / bp.delta0) / bp.lambda);
    }
    if epsilon <= bp.sigma {
        return Err(Error::UnreachableTarget { epsilon: epsilon.as_f64(), sigma: bp.sigma.as_f64() });
    }
    if bp.delta0 <= bp.sigma {
        return Err(Error::Degenerate(format!("delta0 = {} is not above sigma = {}", bp.delta0, bp.sigma)));
    }
    let num = T::two() * ((bp.sigma / epsilon).atanh() - (bp.sigma / bp.delta0).atanh());
    Ok(num / (T::two() * bp.lambda * bp.sigma).ln_1p())
}

/// Small-noise expansion of the `N_Update` lower bound, already in
/// inverse-law form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorBound<T> {
    pub value: T,
    /// `(1/eps - 1/Delta_0) / lambda`.
    pub n_inf: T,
    /// `n_inf * (theta/3) * (1/eps^2 + 1/Delta_0^2 + 1/(eps Delta_0))`.
    pub alpha: T,
}

/// `N_Update >= (1/lambda)(1/eps - 1/Delta_0)(1 + sigma^2/3 * S)` with
/// `S = 1/eps^2 + 1/Delta_0^2 + 1/(eps Delta_0)` and `sigma^2 = theta / M`.
pub fn n_update_lower_bound_taylor<T: Scalar>(
    epsilon: T,
    lambda: T,
    delta0: T,
    theta: T,
    m: T,
) -> Result<TaylorBound<T>> {
    if !(epsilon > T::zero() && epsilon < delta0) {
        return Err(Error::input(format!("need 0 < epsilon < delta0, got epsilon = {epsilon}, delta0 = {delta0}")));
    }
    if !(lambda > T::zero()) || !(theta >= T::zero()) || !(m >= T::one()) {
        return Err(Error::input("need lambda > 0, theta >= 0 and M >= 1"));
    }
    let n_inf = (T::one() / epsilon - T::one() / delta0) / lambda;
    let s = T::one() / (epsilon * epsilon) + T::one() / (delta0 * delta0) + T::one() / (epsilon * delta0);
    let alpha = n_inf * theta / T::lit(3.0) * s;
    Ok(TaylorBound { value: n_inf + alpha / m, n_inf, alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport<T> {
    /// Smallest `residual_bound(k) - gd_limit(k)` over the range.
    pub min_gap: T,
    pub min_gap_at: u64,
    /// `(k, gap)` wherever the gap is negative beyond rounding.
    pub violations: Vec<(u64, T)>,
}

impl<T> DominanceReport<T> {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compare the noisy bound with the gradient-descent rate for `k = 0..=k_max`.
/// Violations are collected, not raised.
pub fn check_dominance<T: Scalar>(lambda: T, sigma: T, delta0: T, k_max: u64) -> Result<DominanceReport<T>> {
    if !(sigma > T::zero() && sigma < delta0) || !(lambda > T::zero()) {
        return Err(Error::input("need 0 < sigma < delta0 and lambda > 0"));
    }
    let bp = BoundParams { lambda, sigma, delta0, theta: sigma * sigma };
    let tolerance = T::lit(1e-12) * delta0;
    let mut report = DominanceReport { min_gap: T::infinity(), min_gap_at: 0, violations: Vec::new() };
    for k in 0..=k_max {
        let gap = residual_bound(k, &bp)? - gd_limit(k, lambda, delta0);
        if gap < report.min_gap {
            report.min_gap = gap;
            report.min_gap_at = k;
        }
        if gap < -tolerance {
            report.violations.push((k, gap));
        }
    }
    Ok(report)
}
