//! Property tests for the technical indicators: bounds, invariances under
//! price shifts and rescaling, and band ordering.

use esgrl_core::indicators::{bollinger, cci, dx, macd, rsi, sma};
use proptest::prelude::*;

fn price_series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..500.0, len..len + 20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rsi_stays_in_0_100(closes in price_series(20), window in 2usize..10) {
        let series = rsi(&closes, window).unwrap();
        for v in series.valid() {
            prop_assert!((0.0..=100.0).contains(v), "rsi {v}");
        }
    }

    #[test]
    fn dx_stays_in_0_100(closes in price_series(20), window in 2usize..8) {
        let high: Vec<f64> = closes.iter().map(|c| c * 1.02).collect();
        let low: Vec<f64> = closes.iter().map(|c| c * 0.98).collect();
        let series = dx(&high, &low, &closes, window).unwrap();
        for v in series.valid() {
            prop_assert!((0.0..=100.0).contains(v), "dx {v}");
        }
    }

    #[test]
    fn sma_commutes_with_constant_shift(closes in price_series(15), window in 2usize..8, c in 1.0f64..50.0) {
        let base = sma(&closes, window).unwrap();
        let shifted: Vec<f64> = closes.iter().map(|x| x + c).collect();
        let moved = sma(&shifted, window).unwrap();
        prop_assert_eq!(base.first_valid(), moved.first_valid());
        for (a, b) in base.valid().iter().zip(moved.valid()) {
            prop_assert!((a + c - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn macd_ignores_constant_shift(closes in price_series(35), c in 1.0f64..100.0) {
        // Both EMAs absorb the shift, so their difference is unaffected.
        let base = macd(&closes, 12, 26).unwrap();
        let shifted: Vec<f64> = closes.iter().map(|x| x + c).collect();
        let moved = macd(&shifted, 12, 26).unwrap();
        for (a, b) in base.valid().iter().zip(moved.valid()) {
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + a.abs().max(b.abs())));
        }
    }

    #[test]
    fn rsi_is_invariant_under_power_of_two_rescale(closes in price_series(20), window in 2usize..10, k in 1u32..6) {
        // Scaling by 2^k is exact in binary floating point, so gain/loss
        // ratios and therefore RSI match bit for bit.
        let scale = f64::from(2u32.pow(k));
        let scaled: Vec<f64> = closes.iter().map(|x| x * scale).collect();
        let base = rsi(&closes, window).unwrap();
        let moved = rsi(&scaled, window).unwrap();
        for (a, b) in base.valid().iter().zip(moved.valid()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bollinger_bands_straddle_the_sma(closes in price_series(25), window in 2usize..10) {
        let (upper, lower) = bollinger(&closes, window, 2.0).unwrap();
        let mid = sma(&closes, window).unwrap();
        for ((u, l), m) in upper.valid().iter().zip(lower.valid()).zip(mid.valid()) {
            prop_assert!(u >= m && *m >= *l, "band order broke: {l} {m} {u}");
            // Bands are symmetric about the SMA.
            prop_assert!((u - m - (m - l)).abs() < 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn cci_is_invariant_under_power_of_two_rescale(closes in price_series(20), window in 2usize..10, k in 1u32..6) {
        let scale = f64::from(2u32.pow(k));
        let high: Vec<f64> = closes.iter().map(|c| c * 1.5).collect();
        let low: Vec<f64> = closes.iter().map(|c| c * 0.5).collect();
        let base = cci(&high, &low, &closes, window).unwrap();
        let sh: Vec<f64> = high.iter().map(|x| x * scale).collect();
        let sl: Vec<f64> = low.iter().map(|x| x * scale).collect();
        let sc: Vec<f64> = closes.iter().map(|x| x * scale).collect();
        let moved = cci(&sh, &sl, &sc, window).unwrap();
        for (a, b) in base.valid().iter().zip(moved.valid()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn monotone_rise_pins_rsi_at_100_and_fall_at_0() {
    let up: Vec<f64> = (1..40).map(|i| f64::from(i)).collect();
    let r = rsi(&up, 14).unwrap();
    assert!(r.valid().iter().all(|v| *v == 100.0));
    let down: Vec<f64> = (1..40).rev().map(|i| f64::from(i)).collect();
    let r = rsi(&down, 14).unwrap();
    assert!(r.valid().iter().all(|v| *v == 0.0));
}
