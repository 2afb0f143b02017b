//! Per-update wall time `T_Update(M, P) = gamma * max(M / P, M_T) + Delta(P)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How the non-overlapped communication time grows with learner count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommKind {
    /// Single learner only.
    None,
    /// `Delta(P) = delta` for `P >= 2` (bandwidth-optimal all-reduce).
    AllreduceConstant,
    /// `Delta(P) = delta * P` (synchronous parameter server).
    ParameterServerLinear,
}

impl std::fmt::Display for CommKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CommKind::None => "none",
            CommKind::AllreduceConstant => "allreduce-constant",
            CommKind::ParameterServerLinear => "parameter-server-linear",
        })
    }
}

impl std::str::FromStr for CommKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CommKind::None),
            "allreduce-constant" => Ok(CommKind::AllreduceConstant),
            "parameter-server-linear" => Ok(CommKind::ParameterServerLinear),
            other => Err(Error::input(format!("unknown comm kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareParams<T> {
    /// Seconds per sample above the knee.
    pub gamma: T,
    /// Knee: batch size below which compute time stops shrinking.
    pub m_t: u64,
    /// Communication seconds (per learner for the parameter server).
    pub delta: T,
    pub comm_kind: CommKind,
}

impl<T: Scalar> HardwareParams<T> {
    pub fn new(gamma: T, m_t: u64, delta: T, comm_kind: CommKind) -> Result<Self> {
        let hw = HardwareParams { gamma, m_t, delta, comm_kind };
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma.is_finite()) {
            return Err(Error::input(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.m_t == 0 {
            return Err(Error::input("m_t must be positive"));
        }
        if !(self.delta >= T::zero() && self.delta.is_finite()) {
            return Err(Error::input(format!("delta must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }

    pub(crate) fn m_t_real(&self) -> T {
        T::count(self.m_t)
    }

    /// `gamma * max(samples, M_T)` for a real per-learner sample count.
    pub fn compute_time(&self, samples: T) -> T {
        self.gamma * samples.max(self.m_t_real())
    }
}

/// Cross-validation pass folded into the compute time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig<T> {
    /// SGD updates per CV evaluation.
    pub updates_per_cv: u64,
    pub m_cv: u64,
    pub gamma_cv: T,
}

/// `Gamma(M) = gamma * max(M, M_T)`.
pub fn gamma_time<T: Scalar>(m: u64, hw: &HardwareParams<T>) -> T {
    hw.compute_time(T::count(m))
}

/// `Delta(P)`: zero for one learner, else by `comm_kind`.
pub fn comm_time<T: Scalar>(p: u64, hw: &HardwareParams<T>) -> Result<T> {
    if p == 0 {
        return Err(Error::input("learner count must be positive"));
    }
    if p == 1 {
        return Ok(T::zero());
    }
    match hw.comm_kind {
        CommKind::None => {
            Err(Error::Config(format!("comm kind 'none' describes a single learner, cannot model P = {p}")))
        }
        CommKind::AllreduceConstant => Ok(hw.delta),
        CommKind::ParameterServerLinear => Ok(hw.delta * T::count(p)),
    }
}

/// `gamma * max(M / P, M_T) + Delta(P)`, with `M / P` kept fractional
/// (load imbalance is ignored).
pub fn t_update<T: Scalar>(m: T, p: u64, hw: &HardwareParams<T>) -> Result<T> {
    let comm = comm_time(p, hw)?;
    Ok(hw.compute_time(m / T::count(p)) + comm)
}

/// Compute time of one CV period:
/// `gamma * N * max(M, M_T) + gamma_cv * max(M_cv, M_T)`.
pub fn cv_gamma_time<T: Scalar>(m: T, hw: &HardwareParams<T>, cv: &CvConfig<T>) -> T {
    let mt = hw.m_t_real();
    hw.gamma * T::count(cv.updates_per_cv) * m.max(mt) + cv.gamma_cv * T::count(cv.m_cv).max(mt)
}

/// Per-update time with the CV pass amortized over its `N` updates.
pub fn t_update_cv<T: Scalar>(m: T, p: u64, hw: &HardwareParams<T>, cv: &CvConfig<T>) -> Result<T> {
    if cv.updates_per_cv == 0 || cv.m_cv == 0 || !(cv.gamma_cv >= T::zero()) {
        return Err(Error::input("CV config fields must be positive"));
    }
    let comm = comm_time(p, hw)?;
    Ok(cv_gamma_time(m / T::count(p), hw, cv) / T::count(cv.updates_per_cv) + comm)
}

/// One timing measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing<T> {
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "P")]
    pub p: u64,
    pub t_update_seconds: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardwareFlag {
    /// Best knee is the smallest measured M; the true knee may be lower.
    KneeUnresolved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareFit<T> {
    pub params: HardwareParams<T>,
    /// Residual sum of squares of the single-learner segment model.
    pub sse: T,
    pub flags: Vec<HardwareFlag>,
}

fn median<T: Scalar>(mut xs: Vec<T>) -> T {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite timing"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) * T::half()
    }
}

/// Best `gamma` and SSE for `t = gamma * max(M, knee)` on single-learner rows.
fn fit_gamma_at_knee<T: Scalar>(rows: &[(T, T)], knee: T) -> (T, T) {
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for &(m, t) in rows {
        let x = m.max(knee);
        sxy = sxy + x * t;
        sxx = sxx + x * x;
    }
    let gamma = sxy / sxx;
    let sse = rows
        .iter()
        .map(|&(m, t)| {
            let r = t - gamma * m.max(knee);
            r * r
        })
        .sum();
    (gamma, sse)
}

/// Fit `(gamma, M_T)` from single-learner timings and, when multi-learner
/// rows exist, `delta` and the communication kind.
///
/// Repeated measurements of one `(M, P)` are reduced to their median. The
/// knee is searched exhaustively over every integer in the measured M range;
/// for each candidate `gamma` is the closed-form least-squares slope of
/// `t = gamma * max(M, knee)`. Ties go to the smaller knee.
pub fn fit_hardware<T: Scalar>(timings: &[Timing<T>]) -> Result<HardwareFit<T>> {
    let mut grouped: BTreeMap<(u64, u64), Vec<T>> = BTreeMap::new();
    for t in timings {
        if t.m == 0 || t.p == 0 {
            return Err(Error::input(format!("timing row has M = {} and P = {}; both must be positive", t.m, t.p)));
        }
        if !(t.t_update_seconds >= T::zero() && t.t_update_seconds.is_finite()) {
            return Err(Error::input(format!("timing at M = {} P = {} is not a finite nonnegative time", t.m, t.p)));
        }
        grouped.entry((t.m, t.p)).or_default().push(t.t_update_seconds);
    }
    let medians: Vec<(u64, u64, T)> = grouped.into_iter().map(|((m, p), ts)| (m, p, median(ts))).collect();

    let single: Vec<(T, T)> = medians.iter().filter(|(_, p, _)| *p == 1).map(|&(m, _, t)| (T::count(m), t)).collect();
    if single.len() < 3 {
        return Err(Error::input(format!(
            "need single-learner (P = 1) timings at 3 or more distinct M, got {}",
            single.len()
        )));
    }
    let m_lo = medians.iter().filter(|r| r.1 == 1).map(|r| r.0).min().unwrap_or(1);
    let m_hi = medians.iter().filter(|r| r.1 == 1).map(|r| r.0).max().unwrap_or(1);

    let mut best: Option<(u64, T, T)> = None;
    for knee in m_lo..=m_hi {
        let (gamma, sse) = fit_gamma_at_knee(&single, T::count(knee));
        if best.as_ref().is_none_or(|&(_, _, s)| sse < s) {
            best = Some((knee, gamma, sse));
        }
    }
    let (m_t, gamma, sse) = best.expect("non-empty knee range");
    let mut flags = Vec::new();
    if m_t == m_lo {
        flags.push(HardwareFlag::KneeUnresolved);
    }

    let multi: Vec<(T, u64, T)> =
        medians.iter().filter(|(_, p, _)| *p >= 2).map(|&(m, p, t)| (T::count(m), p, t)).collect();
    let (delta, comm_kind) = if multi.is_empty() {
        (T::zero(), CommKind::None)
    } else {
        let mut ps: Vec<u64> = multi.iter().map(|r| r.1).collect();
        ps.sort_unstable();
        ps.dedup();
        if ps.len() < 2 {
            return Err(Error::input(
                "multi-learner timings need at least 2 distinct P >= 2 to tell constant from linear communication",
            ));
        }
        let mt = T::count(m_t);
        // residual communication time after the compute model
        let resid: Vec<(T, T)> = multi
            .iter()
            .map(|&(m, p, t)| {
                let pt = T::count(p);
                (pt, t - gamma * (m / pt).max(mt))
            })
            .collect();
        let n = T::count(resid.len() as u64);
        let d_const = (resid.iter().map(|r| r.1).sum::<T>() / n).max(T::zero());
        let d_lin = (resid.iter().map(|&(p, r)| p * r).sum::<T>() / resid.iter().map(|&(p, _)| p * p).sum::<T>())
            .max(T::zero());
        let sse_const: T = resid.iter().map(|&(_, r)| (r - d_const) * (r - d_const)).sum();
        let sse_lin: T = resid.iter().map(|&(p, r)| (r - d_lin * p) * (r - d_lin * p)).sum();
        if sse_lin < sse_const {
            (d_lin, CommKind::ParameterServerLinear)
        } else {
            (d_const, CommKind::AllreduceConstant)
        }
    };

    Ok(HardwareFit { params: HardwareParams { gamma, m_t, delta, comm_kind }, sse, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn hw(kind: CommKind) -> HardwareParams<f64> {
        HardwareParams::new(1e-4, 32, 0.01, kind).unwrap()
    }

    const GRID: [u64; 7] = [4, 8, 16, 32, 64, 128, 256];

    #[test]
    fn gamma_time_examples() {
        let h = hw(CommKind::AllreduceConstant);
        assert_relative_eq!(gamma_time(16, &h), 3.2e-3);
        assert_relative_eq!(gamma_time(64, &h), 6.4e-3);
        assert_eq!(gamma_time(32, &h), 1e-4 * 32.0);
    }

    #[test]
    fn comm_time_examples() {
        assert_eq!(comm_time(8, &hw(CommKind::AllreduceConstant)).unwrap(), 0.01);
        assert_relative_eq!(comm_time(8, &hw(CommKind::ParameterServerLinear)).unwrap(), 0.08);
        for k in [CommKind::None, CommKind::AllreduceConstant, CommKind::ParameterServerLinear] {
            assert_eq!(comm_time(1, &hw(k)).unwrap(), 0.0);
        }
        assert!(matches!(comm_time(2, &hw(CommKind::None)), Err(Error::Config(_))));
    }

    #[test]
    fn t_update_examples() {
        let h = hw(CommKind::AllreduceConstant);
        assert_relative_eq!(t_update(200.0, 4, &h).unwrap(), 0.015, max_relative = 1e-14);
        assert_relative_eq!(t_update(32.0, 1, &h).unwrap(), 3.2e-3, max_relative = 1e-14);
        assert_relative_eq!(t_update(64.0, 4, &h).unwrap(), 0.0132, max_relative = 1e-14);
    }

    #[test]
    fn cv_examples() {
        let h = hw(CommKind::None);
        let cv = CvConfig { updates_per_cv: 100, m_cv: 128, gamma_cv: 1e-4 };
        assert_relative_eq!(cv_gamma_time(64.0, &h, &cv), 0.6528, max_relative = 1e-14);
        let cv1 = CvConfig { updates_per_cv: 1, m_cv: 16, gamma_cv: 2e-4 };
        assert_relative_eq!(cv_gamma_time(8.0, &h, &cv1), 1e-4 * 32.0 + 2e-4 * 32.0, max_relative = 1e-14);
        let off = CvConfig { updates_per_cv: 7, m_cv: 500, gamma_cv: 0.0 };
        assert_relative_eq!(cv_gamma_time(100.0, &h, &off), 7.0 * gamma_time(100, &h), max_relative = 1e-14);
    }

    fn single_timings(h: &HardwareParams<f64>) -> Vec<Timing<f64>> {
        GRID.iter().map(|&m| Timing { m, p: 1, t_update_seconds: gamma_time(m, h) }).collect()
    }

    #[test]
    fn noiseless_timings_are_recovered_exactly() {
        let h = hw(CommKind::None);
        let fit = fit_hardware(&single_timings(&h)).unwrap();
        assert_eq!(fit.params.m_t, 32);
        assert_relative_eq!(fit.params.gamma, 1e-4, max_relative = 1e-12);
        assert_eq!(fit.params.comm_kind, CommKind::None);
        assert!(fit.flags.is_empty());
    }

    #[test]
    fn noisy_timings_are_recovered_closely() {
        let h = hw(CommKind::None);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<_> = single_timings(&h)
                .into_iter()
                .map(|mut t| {
                    t.t_update_seconds *= 1.0 + 0.02 * rng.sample::<f64, _>(StandardNormal);
                    t
                })
                .collect();
            let fit = fit_hardware(&rows).unwrap();
            assert!((fit.params.gamma / 1e-4 - 1.0).abs() < 0.05, "seed {seed}: {}", fit.params.gamma);
            assert!(fit.params.m_t.abs_diff(32) <= 1, "seed {seed}: {}", fit.params.m_t);
        }
    }

    #[test]
    fn linear_timings_flag_unresolved_knee() {
        let rows: Vec<_> = GRID.iter().map(|&m| Timing { m, p: 1, t_update_seconds: 1e-4 * m as f64 }).collect();
        let fit = fit_hardware(&rows).unwrap();
        assert_eq!(fit.params.m_t, 4);
        assert_eq!(fit.flags, vec![HardwareFlag::KneeUnresolved]);
    }

    #[test]
    fn repeated_rows_use_the_median() {
        let h = hw(CommKind::None);
        let mut rows = single_timings(&h);
        rows.push(Timing { m: 64, p: 1, t_update_seconds: 1.0 });
        rows.push(Timing { m: 64, p: 1, t_update_seconds: gamma_time(64, &h) });
        let fit = fit_hardware(&rows).unwrap();
        assert_eq!(fit.params.m_t, 32);
        assert_relative_eq!(fit.params.gamma, 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn communication_kind_is_identified() {
        for kind in [CommKind::AllreduceConstant, CommKind::ParameterServerLinear] {
            let h = hw(kind);
            let mut rows = single_timings(&h);
            for p in [2u64, 4, 8] {
                for m in [64u64, 256, 1024] {
                    rows.push(Timing { m, p, t_update_seconds: t_update(m as f64, p, &h).unwrap() });
                }
            }
            let fit = fit_hardware(&rows).unwrap();
            assert_eq!(fit.params.comm_kind, kind);
            assert_relative_eq!(fit.params.delta, 0.01, max_relative = 1e-9);
        }
    }

    #[test]
    fn fitting_needs_enough_data() {
        let rows = vec![Timing { m: 4, p: 1, t_update_seconds: 1.0 }, Timing { m: 8, p: 1, t_update_seconds: 1.0 }];
        assert!(matches!(fit_hardware(&rows), Err(Error::Input(_))));
        let h = hw(CommKind::AllreduceConstant);
        let mut rows = single_timings(&h);
        rows.push(Timing { m: 64, p: 2, t_update_seconds: 0.02 });
        assert!(matches!(fit_hardware(&rows), Err(Error::Input(_))));
    }

    proptest! {
        #[test]
        fn t_update_is_monotone(gamma in 1e-6f64..1e-2, m_t in 1u64..256, delta in 0.0f64..1.0,
                                m in 1.0f64..4096.0, p in 1u64..64) {
            let h = HardwareParams::new(gamma, m_t, delta, CommKind::AllreduceConstant).unwrap();
            prop_assert!(t_update(m + 1.0, p, &h).unwrap() >= t_update(m, p, &h).unwrap());
            if p >= 2 {
                prop_assert!(t_update(m, p + 1, &h).unwrap() <= t_update(m, p, &h).unwrap());
            }
            // continuity at the knee M / P = M_T
            let knee = (m_t * p) as f64;
            let below = t_update(knee * (1.0 - 1e-12), p, &h).unwrap();
            let above = t_update(knee * (1.0 + 1e-12), p, &h).unwrap();
            prop_assert!((above - below).abs() <= 1e-9 * above);
        }

        #[test]
        fn refitting_own_predictions_is_idempotent(gamma in 1e-6f64..1e-2, m_t in 2u64..200,
                                                   delta in 1e-4f64..1.0, linear in any::<bool>()) {
            let kind = if linear { CommKind::ParameterServerLinear } else { CommKind::AllreduceConstant };
            let h = HardwareParams::new(gamma, m_t, delta, kind).unwrap();
            let mut rows: Vec<_> = [1u64, 2, 4, 8, 16, 32, 64, 128, 256, 512]
                .iter()
                .map(|&m| Timing { m, p: 1, t_update_seconds: gamma_time(m, &h) })
                .collect();
            for p in [2u64, 4, 8] {
                rows.push(Timing { m: 1024, p, t_update_seconds: t_update(1024.0, p, &h).unwrap() });
            }
            let first = fit_hardware(&rows).unwrap().params;
            let replay: Vec<_> = rows
                .iter()
                .map(|r| Timing { t_update_seconds: t_update(r.m as f64, r.p, &first).unwrap(), ..*r })
                .collect();
            let second = fit_hardware(&replay).unwrap().params;
            prop_assert_eq!(first.m_t, second.m_t);
            prop_assert_eq!(first.comm_kind, second.comm_kind);
            prop_assert!((first.gamma - second.gamma).abs() <= 1e-9 * first.gamma);
            prop_assert!((first.delta - second.delta).abs() <= 1e-9 * first.delta.max(1e-12));
        }
    }
}
