//! Event-rate and uplink bandwidth budget.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateParams {
    pub detector_side_mm: f64,
    pub ring_radius_mm: f64,
    pub activity_bq: f64,
    /// Annihilation photons per decay.
    pub singles_per_decay: f64,
    pub detection_efficiency: f64,
    pub blocks_per_module: f64,
    pub modules: f64,
    pub bytes_per_event: f64,
    pub max_rate_per_block_hz: f64,
}

/// Becquerel per microcurie.
pub const BQ_PER_UCI: f64 = 3.7e4;

impl Default for RateParams {
    fn default() -> Self {
        Self {
            detector_side_mm: 25.6,
            ring_radius_mm: 55.0,
            activity_bq: 200.0 * BQ_PER_UCI,
            singles_per_decay: 2.0,
            detection_efficiency: 0.80,
            blocks_per_module: 4.0,
            modules: 12.0,
            bytes_per_event: 16.0,
            max_rate_per_block_hz: 1e6,
        }
    }
}

impl RateParams {
    pub fn singles_rate_hz(&self) -> f64 {
        self.activity_bq * self.singles_per_decay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemRates {
    pub hit_probability: f64,
    /// Singles reaching all blocks of the ring.
    pub cr1_hz: f64,
    /// Singles per module.
    pub cr2_hz: f64,
    pub avg_mbps: f64,
    pub max_mbps: f64,
}

/// Flat-panel solid-angle fraction of one block: side² / (4π r²).
pub fn hit_probability(p: &RateParams) -> f64 {
    p.detector_side_mm * p.detector_side_mm / (4.0 * std::f64::consts::PI * p.ring_radius_mm * p.ring_radius_mm)
}

pub fn system_rates(p: &RateParams) -> SystemRates {
    let hit = hit_probability(p);
    let cr1 = p.singles_rate_hz() * (hit * p.blocks_per_module * p.modules) * p.detection_efficiency;
    let cr2 = cr1 / p.modules;
    SystemRates {
        hit_probability: hit,
        cr1_hz: cr1,
        cr2_hz: cr2,
        avg_mbps: cr2 * p.bytes_per_event * 8.0 / 1e6,
        max_mbps: p.max_rate_per_block_hz * p.blocks_per_module * p.bytes_per_event * 8.0 / 1e6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_budget() {
        let p = RateParams::default();
        assert_eq!(p.singles_rate_hz(), 14.8e6);
        let r = system_rates(&p);
        assert!((r.hit_probability - 0.0172).abs() < 0.0001, "{}", r.hit_probability);
        assert!((r.cr1_hz - 9.78e6).abs() < 0.05e6, "{}", r.cr1_hz);
        assert!((9.7e6..=9.85e6).contains(&r.cr1_hz));
        assert!((r.cr2_hz - 0.82e6).abs() < 0.005e6, "{}", r.cr2_hz);
        assert!((r.avg_mbps - 105.0).abs() < 1.0, "{}", r.avg_mbps);
        assert_eq!(r.max_mbps, 512.0);
    }

    #[test]
    fn rounded_hit_probability_gives_978() {
        let p = RateParams::default();
        let cr1 = p.singles_rate_hz() * (0.0172 * 4.0 * 12.0) * 0.8;
        assert_eq!((cr1 / 1e4).round() * 1e4, 9.78e6);
    }

    #[test]
    fn edge_cases() {
        let p = RateParams { detector_side_mm: 0.0, ..Default::default() };
        assert_eq!(hit_probability(&p), 0.0);
        let base = hit_probability(&RateParams::default());
        let far = hit_probability(&RateParams { ring_radius_mm: 110.0, ..Default::default() });
        assert!((base / far - 4.0).abs() < 1e-12);
        let r = system_rates(&RateParams { detection_efficiency: 0.0, ..Default::default() });
        assert_eq!(r.cr1_hz, 0.0);
    }

    proptest! {
        #[test]
        fn cr1_linear_in_activity_and_efficiency(k in 0.01f64..100.0, e in 0.01f64..1.0) {
            let base = system_rates(&RateParams { detection_efficiency: e, ..Default::default() }).cr1_hz;
            let scaled = system_rates(&RateParams {
                activity_bq: RateParams::default().activity_bq * k,
                detection_efficiency: e,
                ..Default::default()
            }).cr1_hz;
            prop_assert!((scaled - base * k).abs() <= 1e-9 * scaled.abs().max(1.0));
            let unit = system_rates(&RateParams { detection_efficiency: 1.0, ..Default::default() }).cr1_hz;
            prop_assert!((base - unit * e).abs() <= 1e-9 * unit);
        }
    }
}
