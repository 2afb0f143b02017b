//! Fitting the inverse law `N_Update(M) = N_inf + alpha / M`.
//!
//! The model is linear in `(N_inf, alpha)` once the regressor is `1/M`, so
//! the fit is ordinary (optionally weighted) least squares in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Conditions worth knowing about a fit; serialized as kebab-case strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFlag {
    /// Least squares gave `alpha < 0`; alpha was pinned to 0 and `N_inf`
    /// refit as the mean.
    AlphaClamped,
    /// `N_inf <= 0`. Usually noise; the optimal batch size is undefined.
    NegativeNInf,
}

impl std::fmt::Display for FitFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitFlag::AlphaClamped => "alpha-clamped",
            FitFlag::NegativeNInf => "negative-n-inf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawParams<T> {
    pub n_inf: T,
    pub alpha: T,
    pub r_squared: T,
    pub epsilon: T,
    #[serde(default)]
    pub flags: Vec<FitFlag>,
}

impl<T: Scalar> LawParams<T> {
    /// Exact parameters, e.g. from a configuration file or override.
    pub fn new(n_inf: T, alpha: T, epsilon: T) -> Self {
        let mut flags = Vec::new();
        if n_inf <= T::zero() {
            flags.push(FitFlag::NegativeNInf);
        }
        LawParams { n_inf, alpha, r_squared: T::one(), epsilon, flags }
    }

    /// Predicted updates to converge at batch size `m`.
    pub fn predict(&self, m: T) -> T {
        self.n_inf + self.alpha / m
    }

    pub fn has_flag(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Weighted least squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy)]
struct Line<T> {
    intercept: T,
    slope: T,
    r_squared: T,
}

fn weighted_line<T: Scalar>(xs: &[T], ys: &[T], ws: &[T]) -> Result<Line<T>> {
    let wsum: T = ws.iter().copied().sum();
    let xbar = xs.iter().zip(ws).map(|(&x, &w)| w * x).sum::<T>() / wsum;
    let ybar = ys.iter().zip(ws).map(|(&y, &w)| w * y).sum::<T>() / wsum;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        sxx = sxx + w * (x - xbar) * (x - xbar);
        sxy = sxy + w * (x - xbar) * (y - ybar);
    }
    if sxx <= T::zero() {
        return Err(Error::RankDeficient("regressor has zero spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let r_squared = r_squared(xs, ys, ws, intercept, slope, ybar);
    Ok(Line { intercept, slope, r_squared })
}

fn r_squared<T: Scalar>(xs: &[T], ys: &[T], ws: &[T], intercept: T, slope: T, ybar: T) -> T {
    let (mut ss_res, mut ss_tot) = (T::zero(), T::zero());
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        let r = y - (intercept + slope * x);
        ss_res = ss_res + w * r * r;
        ss_tot = ss_tot + w * (y - ybar) * (y - ybar);
    }
    if ss_tot <= T::zero() {
        // constant data: any exact fit explains all of (zero) variance
        if ss_res <= T::zero() {
            T::one()
        } else {
            T::zero()
        }
    } else {
        T::one() - ss_res / ss_tot
    }
}

/// Unweighted least-squares fit of `n_update` against `1/M`.
pub fn fit_inverse_law<T: Scalar>(points: &[(usize, T)], epsilon: T) -> Result<LawParams<T>> {
    let weights = vec![T::one(); points.len()];
    fit_inverse_law_weighted(points, &weights, epsilon)
}

/// Weighted least-squares fit of `n_update` against `1/M`, e.g. with
/// inverse-variance weights from the seed spread.
pub fn fit_inverse_law_weighted<T: Scalar>(points: &[(usize, T)], weights: &[T], epsilon: T) -> Result<LawParams<T>> {
    if points.len() < 2 {
        return Err(Error::input(format!("need at least 2 points to fit the inverse law, got {}", points.len())));
    }
    if weights.len() != points.len() {
        return Err(Error::input("one weight per point required"));
    }
    if let Some(&(m, _)) = points.iter().find(|(m, _)| *m == 0) {
        return Err(Error::input(format!("mini-batch size must be positive, got {m}")));
    }
    if weights.iter().any(|&w| !(w > T::zero() && w.is_finite())) {
        return Err(Error::input("weights must be positive and finite"));
    }
    if points.iter().all(|(m, _)| *m == points[0].0) {
        return Err(Error::RankDeficient(format!(
            "all points share M = {}; need at least two distinct batch sizes",
            points[0].0
        )));
    }
    let xs: Vec<T> = points.iter().map(|&(m, _)| T::one() / T::count(m as u64)).collect();
    let ys: Vec<T> = points.iter().map(|&(_, n)| n).collect();
    let line = weighted_line(&xs, &ys, weights)?;

    let mut flags = Vec::new();
    let (n_inf, alpha, r2) = if line.slope < T::zero() {
        flags.push(FitFlag::AlphaClamped);
        let wsum: T = weights.iter().copied().sum();
        let ybar = ys.iter().zip(weights).map(|(&y, &w)| w * y).sum::<T>() / wsum;
        let r2 = r_squared(&xs, &ys, weights, ybar, T::zero(), ybar);
        (ybar, T::zero(), r2)
    } else {
        (line.intercept, line.slope, line.r_squared)
    };
    if n_inf <= T::zero() {
        flags.push(FitFlag::NegativeNInf);
    }
    Ok(LawParams { n_inf, alpha, r_squared: r2, epsilon, flags })
}

/// Exact inverse-law parameters through two measurements.
pub fn two_point_estimate<T: Scalar>(m1: usize, n1: T, m2: usize, n2: T, epsilon: T) -> Result<LawParams<T>> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::input("mini-batch sizes must be positive"));
    }
    if m1 == m2 {
        return Err(Error::input(format!("two-point estimate needs distinct M, both are {m1}")));
    }
    let inv1 = T::one() / T::count(m1 as u64);
    let inv2 = T::one() / T::count(m2 as u64);
    let alpha = (n1 - n2) / (inv1 - inv2);
    let n_inf = n1 - alpha * inv1;
    let mut law = LawParams::new(n_inf, alpha, epsilon);
    law.r_squared = T::one();
    Ok(law)
}

/// Minimum R² for a fit to enter the epsilon study.
pub const MIN_EPSILON_FIT_R2: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    NonPositiveNInf,
    NonPositiveAlpha,
    LowRSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedFit<T> {
    pub epsilon: T,
    pub reason: ExclusionReason,
}

/// Power-law dependence of the fitted parameters on the loss target:
/// `N_inf ~ c_ninf * eps^slope_ninf`, `alpha ~ c_alpha * eps^slope_alpha`.
/// A `1/eps` law shows up as slope -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonLaw<T> {
    pub c_ninf: T,
    pub c_alpha: T,
    pub slope_ninf: T,
    pub slope_alpha: T,
    /// Epsilons of the fits used, strictly decreasing.
    pub epsilon_grid: Vec<T>,
    pub fits: Vec<LawParams<T>>,
    pub excluded: Vec<ExcludedFit<T>>,
}

/// Log-log regression of `N_inf` and `alpha` against epsilon.
///
/// Fits with nonpositive parameters or R² below [`MIN_EPSILON_FIT_R2`] are
/// left out and listed in `excluded`.
pub fn fit_epsilon_dependence<T: Scalar>(fits: &[LawParams<T>]) -> Result<EpsilonLaw<T>> {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for f in fits {
        if !(f.epsilon > T::zero()) {
            return Err(Error::input(format!("epsilon must be positive, got {}", f.epsilon)));
        }
        let reason = if f.n_inf <= T::zero() {
            Some(ExclusionReason::NonPositiveNInf)
        } else if f.alpha <= T::zero() {
            Some(ExclusionReason::NonPositiveAlpha)
        } else if f.r_squared < T::lit(MIN_EPSILON_FIT_R2) {
            Some(ExclusionReason::LowRSquared)
        } else {
            None
        };
        match reason {
            Some(reason) => excluded.push(ExcludedFit { epsilon: f.epsilon, reason }),
            None => used.push(f.clone()),
        }
    }
    used.sort_by(|a, b| b.epsilon.partial_cmp(&a.epsilon).expect("finite epsilon"));
    if used.windows(2).any(|w| w[0].epsilon == w[1].epsilon) {
        return Err(Error::input("duplicate epsilon in the fit list"));
    }
    if used.len() < 3 {
        return Err(Error::input(format!(
            "need at least 3 usable epsilon points, got {} ({} excluded)",
            used.len(),
            excluded.len()
        )));
    }
    let log_eps: Vec<T> = used.iter().map(|f| f.epsilon.ln()).collect();
    let ones = vec![T::one(); used.len()];
    let ninf = weighted_line(&log_eps, &used.iter().map(|f| f.n_inf.ln()).collect::<Vec<_>>(), &ones)?;
    let alpha = weighted_line(&log_eps, &used.iter().map(|f| f.alpha.ln()).collect::<Vec<_>>(), &ones)?;
    Ok(EpsilonLaw {
        c_ninf: ninf.intercept.exp(),
        c_alpha: alpha.intercept.exp(),
        slope_ninf: ninf.slope,
        slope_alpha: alpha.slope,
        epsilon_grid: used.iter().map(|f| f.epsilon).collect(),
        fits: used,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_points_are_recovered() {
        let pts = [(1, 1100.0), (2, 600.0), (4, 350.0), (8, 225.0)];
        let law = fit_inverse_law(&pts, 0.01).unwrap();
        assert_relative_eq!(law.n_inf, 100.0, max_relative = 1e-12);
        assert_relative_eq!(law.alpha, 1000.0, max_relative = 1e-12);
        assert_relative_eq!(law.r_squared, 1.0, max_relative = 1e-12);
        assert!(law.flags.is_empty());
    }

    #[test]
    fn noisy_points_refit_within_five_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let ms = [1usize, 2, 4, 8, 16, 32, 64, 128, 256];
        let pts: Vec<(usize, f64)> =
            ms.iter().map(|&m| (m, 100.0 + 1000.0 / m as f64 + 5.0 * rng.sample::<f64, _>(StandardNormal))).collect();
        let law = fit_inverse_law(&pts, 0.01).unwrap();
        assert!((law.n_inf - 100.0).abs() < 5.0, "{}", law.n_inf);
        assert!((law.alpha - 1000.0).abs() < 50.0, "{}", law.alpha);
    }

    #[test]
    fn constant_points_give_zero_alpha() {
        let law = fit_inverse_law(&[(1, 50.0), (10, 50.0), (100, 50.0)], 0.1).unwrap();
        assert_relative_eq!(law.n_inf, 50.0);
        assert_eq!(law.alpha, 0.0);
        assert_eq!(law.r_squared, 1.0);
    }

    #[test]
    fn rising_points_clamp_alpha() {
        let law = fit_inverse_law(&[(1, 10.0), (2, 20.0), (4, 30.0)], 0.1).unwrap();
        assert_eq!(law.alpha, 0.0);
        assert_relative_eq!(law.n_inf, 20.0);
        assert!(law.has_flag(FitFlag::AlphaClamped));
    }

    #[test]
    fn negative_n_inf_is_flagged_not_clamped() {
        let law = fit_inverse_law(&[(1, 90.0), (2, 40.0), (4, 15.0)], 0.1).unwrap();
        assert!(law.n_inf < 0.0);
        assert!(law.has_flag(FitFlag::NegativeNInf));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_inverse_law(&[(4, 1.0)], 0.1), Err(Error::Input(_))));
        assert!(matches!(fit_inverse_law(&[(4, 1.0), (4, 2.0), (4, 3.0)], 0.1), Err(Error::RankDeficient(_))));
        assert!(two_point_estimate(3, 1.0, 3, 2.0, 0.1).is_err());
    }

    #[test]
    fn two_point_examples() {
        let law = two_point_estimate(1, 1100.0, 10, 200.0, 0.01).unwrap();
        assert_relative_eq!(law.alpha, 1000.0, max_relative = 1e-12);
        assert_relative_eq!(law.n_inf, 100.0, max_relative = 1e-12);
        assert_eq!(law.r_squared, 1.0);
        let flat = two_point_estimate(2, 77.0, 8, 77.0, 0.01).unwrap();
        assert_eq!(flat.alpha, 0.0);
        assert_eq!(flat.n_inf, 77.0);
        let ols = fit_inverse_law(&[(1, 1100.0), (10, 200.0)], 0.01).unwrap();
        assert_relative_eq!(ols.alpha, law.alpha, max_relative = 1e-9);
        assert_relative_eq!(ols.n_inf, law.n_inf, max_relative = 1e-9);
    }

    #[test]
    fn epsilon_power_law_is_recovered() {
        let fits: Vec<_> = [0.1, 0.01, 0.001].iter().map(|&e: &f64| LawParams::new(1.0 / e, 5.0 / e, e)).collect();
        let law = fit_epsilon_dependence(&fits).unwrap();
        assert_relative_eq!(law.slope_ninf, -1.0, max_relative = 1e-12);
        assert_relative_eq!(law.c_ninf, 1.0, max_relative = 1e-9);
        assert_relative_eq!(law.c_alpha, 5.0, max_relative = 1e-9);
        assert_eq!(law.epsilon_grid, vec![0.1, 0.01, 0.001]);
    }

    #[test]
    fn constant_n_inf_has_zero_slope() {
        let fits: Vec<_> = [0.01, 0.1, 0.05].iter().map(|&e: &f64| LawParams::new(40.0, 1.0 / e, e)).collect();
        let law = fit_epsilon_dependence(&fits).unwrap();
        assert!(law.slope_ninf.abs() < 1e-12);
        assert_eq!(law.epsilon_grid, vec![0.1, 0.05, 0.01]);
    }

    #[test]
    fn epsilon_study_excludes_bad_fits() {
        let mut fits: Vec<_> =
            [0.1, 0.05, 0.02, 0.01].iter().map(|&e: &f64| LawParams::new(1.0 / e, 1.0 / e, e)).collect();
        fits[0].r_squared = 0.5;
        let law = fit_epsilon_dependence(&fits).unwrap();
        assert_eq!(law.excluded.len(), 1);
        assert_eq!(law.excluded[0].reason, ExclusionReason::LowRSquared);
        fits[1].n_inf = -3.0;
        let err = fit_epsilon_dependence(&fits).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    fn points_strategy() -> impl Strategy<Value = Vec<(usize, f64)>> {
        prop::collection::btree_map(1usize..512, 1.0f64..1e4, 2..12).prop_map(|m| m.into_iter().collect::<Vec<_>>())
    }

    proptest! {
        #[test]
        fn two_points_match_least_squares(m1 in 1usize..1000, m2 in 1usize..1000, n_inf in 1.0f64..1e3, alpha in 0.0f64..1e4) {
            prop_assume!(m1 != m2);
            let n = |m: usize| n_inf + alpha / m as f64;
            let tp = two_point_estimate(m1, n(m1), m2, n(m2), 0.1).unwrap();
            let ols = fit_inverse_law(&[(m1, n(m1)), (m2, n(m2))], 0.1).unwrap();
            let scale = tp.n_inf.abs().max(tp.alpha.abs()).max(1.0);
            prop_assert!((tp.n_inf - ols.n_inf).abs() <= 1e-9 * scale);
            prop_assert!((tp.alpha - ols.alpha).abs() <= 1e-9 * scale);
        }

        #[test]
        fn scaling_the_counts_scales_the_fit(pts in points_strategy(), c in 0.01f64..100.0) {
            let base = fit_inverse_law(&pts, 0.1).unwrap();
            prop_assume!(!base.has_flag(FitFlag::AlphaClamped));
            let scaled: Vec<_> = pts.iter().map(|&(m, n)| (m, c * n)).collect();
            let fit = fit_inverse_law(&scaled, 0.1).unwrap();
            let tol = 1e-8 * (base.n_inf.abs() + base.alpha.abs()) * c;
            prop_assert!((fit.n_inf - c * base.n_inf).abs() <= tol);
            prop_assert!((fit.alpha - c * base.alpha).abs() <= tol);
            prop_assert!((fit.r_squared - base.r_squared).abs() <= 1e-9);
        }

        #[test]
        fn residuals_are_orthogonal(pts in points_strategy()) {
            let law = fit_inverse_law(&pts, 0.1).unwrap();
            prop_assume!(!law.has_flag(FitFlag::AlphaClamped));
            let res: Vec<f64> = pts.iter().map(|&(m, n)| n - law.predict(m as f64)).collect();
            let scale: f64 = pts.iter().map(|&(_, n)| n.abs()).sum();
            let sum: f64 = res.iter().sum();
            let cross: f64 = res.iter().zip(&pts).map(|(r, &(m, _))| r / m as f64).sum();
            prop_assert!(sum.abs() <= 1e-9 * scale);
            prop_assert!(cross.abs() <= 1e-9 * scale);
        }

        #[test]
        fn predictions_fall_with_batch_size(n_inf in -1e3f64..1e3, alpha in 1e-3f64..1e4, m in 1u32..10_000) {
            let law = LawParams::new(n_inf, alpha, 0.1);
            let m = m as f64;
            prop_assert!(law.predict(m + 1.0) < law.predict(m));
        }
    }
}
