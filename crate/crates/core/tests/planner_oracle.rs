//! Closed-form and golden-section planning against brute-force integer grids.

use proptest::prelude::*;
use sgdtime::hwmodel::{CommKind, CvConfig, HardwareParams};
use sgdtime::lawfit::LawParams;
use sgdtime::planner::{t_conv_optimal, CostModel};

/// Smallest `T_Conv` over integer `M` in `1..=upper`, by the model's own
/// pointwise evaluation.
fn grid_min(model: &CostModel<'_, f64>, p: u64, upper: u64) -> (u64, f64) {
    (1..=upper).map(|m| (m, model.t_conv(m as f64, p).unwrap())).fold((0, f64::INFINITY), |best, cur| {
        if cur.1 < best.1 {
            cur
        } else {
            best
        }
    })
}

fn kind_strategy() -> impl Strategy<Value = CommKind> {
    prop_oneof![Just(CommKind::AllreduceConstant), Just(CommKind::ParameterServerLinear)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn planner_matches_integer_grid(
        n_inf in 50.0f64..2000.0,
        alpha in 100.0f64..5e4,
        gamma in 1e-5f64..1e-3,
        m_t in 1u64..64,
        delta in 1e-4f64..1e-2,
        kind in kind_strategy(),
        p in 1u64..32,
    ) {
        let law = LawParams::new(n_inf, alpha, 0.01);
        let hw = HardwareParams::new(gamma, m_t, delta, kind).unwrap();
        let model = CostModel::new(&law, &hw);
        let plan = t_conv_optimal(p, &law, &hw).unwrap();
        let upper = (4.0 * plan.m_opt).max(16.0 * (m_t * p) as f64) as u64 + 2;
        let (m, t) = grid_min(&model, p, upper);
        prop_assert!((m as f64 - plan.m_opt).abs() <= 1.0, "grid {} vs {}", m, plan.m_opt);
        prop_assert!(plan.t_conv <= t * (1.0 + 1e-12));
        prop_assert!((t - plan.t_conv) / plan.t_conv < 1e-3);
    }

    #[test]
    fn cv_overhead_is_still_optimal(
        n_inf in 50.0f64..2000.0,
        alpha in 100.0f64..5e4,
        delta in 1e-4f64..1e-2,
        updates_per_cv in 1u64..100,
        p in 2u64..16,
    ) {
        let law = LawParams::new(n_inf, alpha, 0.01);
        let hw = HardwareParams::new(1e-4, 16, delta, CommKind::AllreduceConstant).unwrap();
        let cv = CvConfig { updates_per_cv, m_cv: 256, gamma_cv: 5e-5 };
        let model = CostModel::new(&law, &hw).with_cv(&cv);
        let plan = model.t_conv_optimal(p).unwrap();
        let upper = (4.0 * plan.m_opt).max((32 * p) as f64) as u64 + 2;
        let (m, t) = grid_min(&model, p, upper);
        prop_assert!((m as f64 - plan.m_opt).abs() <= 1.0);
        prop_assert!(plan.t_conv <= t * (1.0 + 1e-12));
    }
}
