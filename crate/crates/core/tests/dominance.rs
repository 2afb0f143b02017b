//! The noisy residual bound never drops below the noise-free GD rate.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgdtime::theory::{check_dominance, gd_limit, residual_bound, BoundParams};

#[test]
fn ten_thousand_random_draws() {
    let seed = 0x0d0e_u64;
    println!("dominance draws use rng seed {seed}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..10_000 {
        let delta0 = (rng.random_range(-6.0f64..2.0)).exp();
        let sigma = delta0 * rng.random_range(1e-9..0.999);
        let lambda = rng.random_range(1e-6..=1.0) / (delta0 + sigma);
        let report = check_dominance(lambda, sigma, delta0, 200).unwrap();
        assert!(
            report.holds(),
            "draw {i} (seed {seed}): lambda={lambda} sigma={sigma} delta0={delta0}: {:?}",
            report.violations
        );
    }
}

proptest! {
    #[test]
    fn bound_is_decreasing_and_above_both_floors(
        lambda_frac in 1e-3f64..1.0,
        sigma_frac in 1e-6f64..0.99,
        delta0 in 1e-2f64..10.0,
    ) {
        let sigma = sigma_frac * delta0;
        let lambda = lambda_frac / (delta0 + sigma);
        let bp = BoundParams::new(lambda, sigma, delta0, sigma * sigma).unwrap();
        let mut prev = f64::INFINITY;
        for k in (0..2000).step_by(37) {
            let b = residual_bound(k, &bp).unwrap();
            prop_assert!(b <= prev);
            prop_assert!(b >= sigma * (1.0 - 1e-12));
            prop_assert!(b >= gd_limit(k, lambda, delta0) - 1e-12 * delta0);
            prev = b;
        }
    }
}
