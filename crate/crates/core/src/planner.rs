//! Time to convergence, optimal mini-batch sizes and scaling curves.
//!
//! `T_Conv(M, P) = (N_inf + alpha / M) * (gamma * max(M / P, M_T) + Delta(P))`.
//!
//! For constant per-`P` overhead the optimum over `M` has a closed form:
//! `M_opt = max(sqrt(alpha * Delta * P / (N_inf * gamma)), M_T * P)`. The
//! parameter-server case (`Delta = delta * P`) is minimized numerically with
//! golden-section search instead, since the objective is convex in `M` above
//! the knee.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hwmodel::{comm_time, CommKind, CvConfig, HardwareParams};
use crate::lawfit::LawParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Communication-bound: `M_opt` is the square-root term.
    SqrtBranch,
    /// Compute-bound: `M_opt = M_T * P`, identical to weak scaling.
    WeakBranch,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::SqrtBranch => "sqrt-branch",
            Regime::WeakBranch => "weak-branch",
        })
    }
}

/// How `m_opt` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    GoldenSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan<T> {
    pub p: u64,
    pub m_opt: T,
    pub t_conv: T,
    pub regime: Regime,
    pub method: Method,
}

/// Law plus hardware, optionally with a CV pass folded into the compute time.
#[derive(Debug, Clone, Copy)]
pub struct CostModel<'a, T> {
    pub law: &'a LawParams<T>,
    pub hw: &'a HardwareParams<T>,
    pub cv: Option<&'a CvConfig<T>>,
}

impl<'a, T: Scalar> CostModel<'a, T> {
    pub fn new(law: &'a LawParams<T>, hw: &'a HardwareParams<T>) -> Self {
        CostModel { law, hw, cv: None }
    }

    pub fn with_cv(mut self, cv: &'a CvConfig<T>) -> Self {
        self.cv = Some(cv);
        self
    }

    /// Per-update time that does not depend on `M`: communication plus the
    /// amortized CV pass.
    fn overhead(&self, p: u64) -> Result<T> {
        let comm = comm_time(p, self.hw)?;
        let cv = match self.cv {
            None => T::zero(),
            Some(cv) => {
                if cv.updates_per_cv == 0 || cv.m_cv == 0 || !(cv.gamma_cv >= T::zero()) {
                    return Err(Error::input("CV config fields must be positive"));
                }
                cv.gamma_cv * T::count(cv.m_cv).max(self.hw.m_t_real()) / T::count(cv.updates_per_cv)
            }
        };
        Ok(comm + cv)
    }

    fn check_law(&self) -> Result<()> {
        if !(self.law.alpha >= T::zero() && self.law.alpha.is_finite()) {
            return Err(Error::input(format!("alpha must be nonnegative, got {}", self.law.alpha)));
        }
        if !self.law.n_inf.is_finite() {
            return Err(Error::input("N_inf must be finite"));
        }
        Ok(())
    }

    fn check_positive_n_inf(&self) -> Result<()> {
        self.check_law()?;
        if self.law.n_inf <= T::zero() {
            return Err(Error::ModelValidity(format!(
                "N_inf = {} <= 0: the optimal batch size is undefined for this (flagged) fit; \
                 refit with more seeds or evaluate t_conv at fixed M",
                self.law.n_inf
            )));
        }
        Ok(())
    }

    pub fn t_conv(&self, m: T, p: u64) -> Result<T> {
        self.check_law()?;
        self.hw.validate()?;
        if !(m >= T::one()) {
            return Err(Error::input(format!("mini-batch size must be >= 1, got {m}")));
        }
        let updates = self.law.predict(m);
        if updates <= T::zero() {
            return Err(Error::ModelValidity(format!("N_inf + alpha/M = {updates} <= 0 at M = {m}")));
        }
        let overhead = self.overhead(p)?;
        Ok(updates * (self.hw.compute_time(m / T::count(p)) + overhead))
    }

    /// Crossover learner count for the overhead seen at `P`.
    fn crossover(&self, overhead: T) -> T {
        let mt = self.hw.m_t_real();
        self.law.alpha * overhead / (self.hw.gamma * mt * mt * self.law.n_inf)
    }

    fn closed_form(&self, p: u64) -> Result<Plan<T>> {
        let overhead = self.overhead(p)?;
        let (law, hw) = (self.law, self.hw);
        let pt = T::count(p);
        let mt = hw.m_t_real();
        let sqrt_m = (law.alpha * overhead * pt / (law.n_inf * hw.gamma)).sqrt();
        let (sqrt_t, weak_t) = branch_values(pt, overhead, law, hw);
        let (m_opt, t_conv, regime) = if pt < self.crossover(overhead) {
            (sqrt_m, sqrt_t, Regime::SqrtBranch)
        } else {
            (mt * pt, weak_t, Regime::WeakBranch)
        };
        Ok(Plan { p, m_opt, t_conv, regime, method: Method::ClosedForm })
    }

    fn numeric(&self, p: u64) -> Result<Plan<T>> {
        let overhead = self.overhead(p)?;
        let (law, hw) = (self.law, self.hw);
        let pt = T::count(p);
        let knee = hw.m_t_real() * pt;
        // T_Conv is decreasing below the knee and convex above it
        let hint = (law.alpha * overhead * pt / (law.n_inf * hw.gamma)).sqrt().max(knee);
        let hi = hint * T::lit(4.0) + knee;
        let (m, t) = golden_section_min(|m| self.t_conv(m, p).unwrap_or(T::infinity()), knee, hi, T::lit(1e-12));
        let t_knee = self.t_conv(knee, p)?;
        let (m_opt, t_conv) = if t_knee <= t { (knee, t_knee) } else { (m, t) };
        let regime = if m_opt > knee { Regime::SqrtBranch } else { Regime::WeakBranch };
        Ok(Plan { p, m_opt, t_conv, regime, method: Method::GoldenSection })
    }

    pub fn t_conv_optimal(&self, p: u64) -> Result<Plan<T>> {
        self.check_positive_n_inf()?;
        self.hw.validate()?;
        if p == 0 {
            return Err(Error::input("learner count must be positive"));
        }
        if p >= 2 && self.hw.comm_kind == CommKind::ParameterServerLinear {
            self.numeric(p)
        } else {
            self.closed_form(p)
        }
    }

    pub fn m_opt(&self, p: u64) -> Result<T> {
        Ok(self.t_conv_optimal(p)?.m_opt)
    }
}

/// Minimize `f` on `[lo, hi]` by golden-section search, stopping when the
/// bracket is narrower than `rel_tol * hi`. Assumes `f` is unimodal there.
pub fn golden_section_min<T: Scalar, F: Fn(T) -> T>(f: F, lo: T, hi: T, rel_tol: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) * T::half();
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let tol = rel_tol * hi.abs().max(T::one());
    for _ in 0..500 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `(N_inf + alpha / M) * (gamma * max(M / P, M_T) + Delta(P))`.
pub fn t_conv<T: Scalar>(m: T, p: u64, law: &LawParams<T>, hw: &HardwareParams<T>) -> Result<T> {
    CostModel::new(law, hw).t_conv(m, p)
}

/// Optimal (real-valued) mini-batch size at `P` learners. `M_T` for one learner.
pub fn m_opt<T: Scalar>(p: u64, law: &LawParams<T>, hw: &HardwareParams<T>) -> Result<T> {
    CostModel::new(law, hw).m_opt(p)
}

/// Learner count `alpha * delta / (gamma * M_T^2 * N_inf)` below which the
/// square-root branch is optimal. Uses the raw `delta` (zero when
/// `comm_kind` is `none`).
pub fn p_star<T: Scalar>(law: &LawParams<T>, hw: &HardwareParams<T>) -> Result<T> {
    let model = CostModel::new(law, hw);
    model.check_positive_n_inf()?;
    hw.validate()?;
    let delta = if hw.comm_kind == CommKind::None { T::zero() } else { hw.delta };
    Ok(model.crossover(delta))
}

fn branch_values<T: Scalar>(p: T, overhead: T, law: &LawParams<T>, hw: &HardwareParams<T>) -> (T, T) {
    let mt = hw.m_t_real();
    let sqrt_t = ((overhead * law.n_inf).sqrt() + (law.alpha * hw.gamma / p).sqrt()).powi(2);
    let weak_t = (law.n_inf + law.alpha / (mt * p)) * (overhead + hw.gamma * mt);
    (sqrt_t, weak_t)
}

/// Both closed-form branches of the optimal `T_Conv` at a real learner
/// count, with constant overhead `delta`: `(sqrt-branch, weak-branch)`.
///
/// The two agree at `P = p_star`.
pub fn branch_times<T: Scalar>(p: T, law: &LawParams<T>, hw: &HardwareParams<T>) -> Result<(T, T)> {
    CostModel::new(law, hw).check_positive_n_inf()?;
    hw.validate()?;
    if !(p > T::zero() && p.is_finite()) {
        return Err(Error::input(format!("learner count must be positive, got {p}")));
    }
    let delta = if hw.comm_kind == CommKind::None { T::zero() } else { hw.delta };
    Ok(branch_values(p, delta, law, hw))
}

/// Minimum of `T_Conv` over `M` at `P` learners.
pub fn t_conv_optimal<T: Scalar>(p: u64, law: &LawParams<T>, hw: &HardwareParams<T>) -> Result<Plan<T>> {
    CostModel::new(law, hw).t_conv_optimal(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    /// Fixed global batch for strong scaling.
    pub m_strong: u64,
    /// Per-learner batch for weak scaling (`M = m * P`).
    pub m_per_learner: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow<T> {
    pub p: u64,
    pub t_strong: T,
    pub t_weak: T,
    pub t_optimal: T,
}

/// Strong, weak and optimal scaling at each learner count.
pub fn scaling_curves<T: Scalar>(
    ps: &[u64],
    law: &LawParams<T>,
    hw: &HardwareParams<T>,
    cfg: ScalingConfig,
) -> Result<Vec<ScalingRow<T>>> {
    if ps.is_empty() {
        return Err(Error::input("learner list is empty"));
    }
    if ps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("learner list must be strictly increasing"));
    }
    if cfg.m_strong == 0 || cfg.m_per_learner == 0 {
        return Err(Error::input("scaling batch sizes must be positive"));
    }
    let model = CostModel::new(law, hw);
    ps.iter()
        .map(|&p| {
            Ok(ScalingRow {
                p,
                t_strong: model.t_conv(T::count(cfg.m_strong), p)?,
                t_weak: model.t_conv(T::count(cfg.m_per_learner * p), p)?,
                t_optimal: model.t_conv_optimal(p)?.t_conv,
            })
        })
        .collect()
}

/// One purchasable system configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOption<T> {
    pub gamma: T,
    /// Cost of the compute side, including all `p` learners.
    pub cost_compute: T,
    pub delta: T,
    pub cost_bandwidth: T,
    pub p: u64,
}

impl<T: Scalar> DesignOption<T> {
    pub fn cost(&self) -> T {
        self.cost_compute + self.cost_bandwidth
    }

    /// Cartesian product of compute choices `(gamma, p, cost)` and bandwidth
    /// choices `(delta, cost)`.
    pub fn grid(compute: &[(T, u64, T)], bandwidth: &[(T, T)]) -> Vec<Self> {
        compute
            .iter()
            .flat_map(|&(gamma, p, cost_compute)| {
                bandwidth.iter().map(move |&(delta, cost_bandwidth)| DesignOption {
                    gamma,
                    cost_compute,
                    delta,
                    cost_bandwidth,
                    p,
                })
            })
            .collect()
    }

    fn same_compute(&self, other: &Self) -> bool {
        self.gamma == other.gamma && self.p == other.p && self.cost_compute == other.cost_compute
    }

    fn same_bandwidth(&self, other: &Self) -> bool {
        self.delta == other.delta && self.cost_bandwidth == other.cost_bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignAxis {
    Compute,
    Bandwidth,
}

/// Change in `T_Conv` per unit cost when moving from the winner to a
/// neighbor that differs along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRatio<T> {
    pub option: usize,
    pub axis: DesignAxis,
    pub delta_t: T,
    pub delta_cost: T,
    /// `delta_t / delta_cost`; absent when the costs are equal.
    pub ratio: Option<T>,
    pub within_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult<T> {
    pub best: usize,
    pub option: DesignOption<T>,
    pub plan: Plan<T>,
    /// `(option index, optimal T_Conv)` for every option within budget.
    pub feasible: Vec<(usize, T)>,
    pub marginals: Vec<MarginalRatio<T>>,
}

/// Exhaustive search of a design catalogue under a budget.
///
/// Each option fixes `(gamma, delta, P)`; `M_T` and the communication kind
/// come from `base`. The winner minimizes the optimal `T_Conv`; ties keep the
/// earlier option.
pub fn design_balance<T: Scalar>(
    options: &[DesignOption<T>],
    budget: T,
    law: &LawParams<T>,
    base: &HardwareParams<T>,
) -> Result<DesignResult<T>> {
    let plan_for = |o: &DesignOption<T>| {
        let hw = HardwareParams { gamma: o.gamma, delta: o.delta, ..base.clone() };
        t_conv_optimal(o.p, law, &hw)
    };
    for o in options {
        if !(o.cost_compute >= T::zero() && o.cost_bandwidth >= T::zero()) {
            return Err(Error::input("design costs must be nonnegative"));
        }
    }
    let mut feasible = Vec::new();
    let mut best: Option<(usize, Plan<T>)> = None;
    for (i, o) in options.iter().enumerate() {
        if o.cost() > budget {
            continue;
        }
        let plan = plan_for(o)?;
        feasible.push((i, plan.t_conv));
        if best.as_ref().is_none_or(|(_, b)| plan.t_conv < b.t_conv) {
            best = Some((i, plan));
        }
    }
    let (best, plan) = best.ok_or(Error::BudgetInfeasible { budget: budget.as_f64() })?;
    let winner = &options[best];
    let mut marginals = Vec::new();
    for (i, o) in options.iter().enumerate() {
        if i == best {
            continue;
        }
        let axis = if winner.same_compute(o) && !winner.same_bandwidth(o) {
            DesignAxis::Bandwidth
        } else if winner.same_bandwidth(o) && !winner.same_compute(o) {
            DesignAxis::Compute
        } else {
            continue;
        };
        let t = plan_for(o)?.t_conv;
        let delta_t = t - plan.t_conv;
        let delta_cost = o.cost() - winner.cost();
        marginals.push(MarginalRatio {
            option: i,
            axis,
            delta_t,
            delta_cost,
            ratio: (delta_cost != T::zero()).then(|| delta_t / delta_cost),
            within_budget: o.cost() <= budget,
        });
    }
    Ok(DesignResult { best, option: winner.clone(), plan, feasible, marginals })
}

/// Error constants of the mini-batch SGD bound
/// `E_N <= A/M + (1 - B/M)^(N-1) (E_1 - A/M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottouParams<T> {
    pub a: T,
    pub b: T,
    pub e1: T,
}

/// Iterations implied by inverting that bound for target `epsilon`:
/// `1 + M/(M - B) * ln((eps*M - A) / (E_1*M - A))`.
///
/// Only meaningful as a curve shape to set against `N_inf + alpha/M`; the
/// value is often `<= 1` and then says nothing.
pub fn bottou_iteration_bound<T: Scalar>(bp: &BottouParams<T>, epsilon: T, m: T) -> Result<T> {
    if !(m > bp.b) {
        return Err(Error::input(format!("need M > B, got M = {m}, B = {}", bp.b)));
    }
    if !(epsilon * m > bp.a) {
        return Err(Error::input(format!("need eps*M > A, got {} <= {}", epsilon * m, bp.a)));
    }
    if !(bp.e1 * m > bp.a) {
        return Err(Error::input(format!("need E1*M > A, got {} <= {}", bp.e1 * m, bp.a)));
    }
    Ok(T::one() + m / (m - bp.b) * ((epsilon * m - bp.a) / (bp.e1 * m - bp.a)).ln())
}
