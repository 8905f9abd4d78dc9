//! Deterministic light-sharing phantom for exercising the digital pipeline.
//!
//! Each end splits its light bilinearly over the four channels so the
//! centre-of-gravity ratios reproduce the crystal centroid exactly:
//! end 1 uses a1 = xy, b1 = (1-x)y, d1 = x(1-y), c1 = (1-x)(1-y);
//! end 2 uses d2 = xy, a2 = x(1-y), c2 = (1-x)y, b2 = (1-x)(1-y).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corrections::{PeakLut, TimeOffsetLut};
use crate::crystal_lut::{synthetic::crystal_center, BoundaryClt};
use crate::event_model::{
    BlockAddress, ChannelIntegrals, CrystalId, RawEvent, BLOCKS_PER_MODULE, CRYSTAL_COUNT, POSITION_MAX,
};

/// Ground truth for one crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrystalTruth {
    /// Light centroid as fractions of the detector face, in [0, 1].
    pub centroid: (f64, f64),
    /// Raw energy sum of a photopeak event.
    pub gain: u16,
    /// Added to the raw TDC time to recover the true time.
    pub time_offset_ps: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub module_id: u8,
    pub crystals: Vec<CrystalTruth>,
    /// Relative standard deviation applied independently to each channel.
    pub noise: f64,
    /// Share of events that deposit only part of the photopeak energy.
    pub compton_fraction: f64,
    /// End-1 light share is drawn from 0.5 ± depth_spread / 2.
    pub depth_spread: f64,
    pub events: usize,
    /// True-time spacing between consecutive events.
    pub period_ps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhantomError {
    #[error("expected {CRYSTAL_COUNT} crystals, got {0}")]
    CrystalCount(usize),
    #[error("crystal {id}: {detail}")]
    Crystal { id: usize, detail: String },
    #[error("invalid {field}: {value}")]
    Field { field: &'static str, value: String },
}

/// Flag-level knobs from which a full [`PhantomSpec`] is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    pub module_id: u8,
    pub events: usize,
    pub seed: u64,
    pub noise: f64,
    pub compton_fraction: f64,
    pub depth_spread: f64,
    pub gain_min: u16,
    pub gain_max: u16,
    pub max_time_offset_ps: i32,
    pub period_ps: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            module_id: 0,
            events: 100_000,
            seed: 1,
            noise: 0.0,
            compton_fraction: 0.0,
            depth_spread: 0.4,
            gain_min: 1600,
            gain_max: 2400,
            max_time_offset_ps: 2000,
            period_ps: 1_000_000,
        }
    }
}

/// One generated event with its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhantomEvent {
    pub event: RawEvent,
    pub crystal: CrystalId,
    pub photopeak: bool,
    pub true_time_ps: u64,
}

/// Earliest true time; keeps raw times positive for any i32 offset.
pub const TIME_ORIGIN_PS: u64 = 1 << 32;

impl PhantomSpec {
    /// Crystals at the uniform grid centres, one gain, no offsets, no noise.
    pub fn uniform(gain: u16, events: usize, seed: u64) -> Self {
        let clt = BoundaryClt::uniform_grid();
        Self {
            module_id: 0,
            crystals: CrystalId::all()
                .map(|id| CrystalTruth { centroid: centroid_of(&clt, id), gain, time_offset_ps: 0 })
                .collect(),
            noise: 0.0,
            compton_fraction: 0.0,
            depth_spread: 0.0,
            events,
            period_ps: 1_000_000,
            seed,
        }
    }

    /// Seeded per-crystal gains and offsets, centroids from `clt`.
    pub fn from_params(p: &PhantomParams, clt: &BoundaryClt) -> Result<Self, PhantomError> {
        if p.gain_min == 0 || p.gain_min > p.gain_max {
            return Err(PhantomError::Field { field: "gain range", value: format!("{}..={}", p.gain_min, p.gain_max) });
        }
        if p.max_time_offset_ps < 0 {
            return Err(PhantomError::Field { field: "max_time_offset_ps", value: p.max_time_offset_ps.to_string() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5EED_C0DE);
        let crystals = CrystalId::all()
            .map(|id| CrystalTruth {
                centroid: centroid_of(clt, id),
                gain: rng.gen_range(p.gain_min..=p.gain_max),
                time_offset_ps: rng.gen_range(-p.max_time_offset_ps..=p.max_time_offset_ps),
            })
            .collect();
        let spec = Self {
            module_id: p.module_id,
            crystals,
            noise: p.noise,
            compton_fraction: p.compton_fraction,
            depth_spread: p.depth_spread,
            events: p.events,
            period_ps: p.period_ps,
            seed: p.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        if self.crystals.len() != CRYSTAL_COUNT {
            return Err(PhantomError::CrystalCount(self.crystals.len()));
        }
        for (id, c) in self.crystals.iter().enumerate() {
            let (x, y) = c.centroid;
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(PhantomError::Crystal { id, detail: format!("centroid ({x}, {y}) outside [0, 1]") });
            }
            if c.gain < 2 {
                return Err(PhantomError::Crystal { id, detail: format!("gain {} below 2", c.gain) });
            }
        }
        let field = |field: &'static str, v: f64, ok: bool| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(PhantomError::Field { field, value: v.to_string() })
            }
        };
        field("noise", self.noise, self.noise >= 0.0)?;
        field("compton_fraction", self.compton_fraction, (0.0..=1.0).contains(&self.compton_fraction))?;
        field("depth_spread", self.depth_spread, (0.0..0.9).contains(&self.depth_spread))?;
        BlockAddress::new(self.module_id, 0)
            .map_err(|_| PhantomError::Field { field: "module_id", value: self.module_id.to_string() })?;
        if self.period_ps == 0 {
            return Err(PhantomError::Field { field: "period_ps", value: "0".into() });
        }
        Ok(())
    }

    pub fn truth(&self, id: CrystalId) -> &CrystalTruth {
        &self.crystals[id.index()]
    }

    /// Peak LUT holding each crystal's gain.
    pub fn peak_lut(&self) -> PeakLut {
        PeakLut::new(self.crystals.iter().map(|c| c.gain).collect()).expect("validated gains are non-zero")
    }

    pub fn time_lut(&self) -> TimeOffsetLut {
        TimeOffsetLut::new(self.crystals.iter().map(|c| c.time_offset_ps).collect())
    }

    /// Generates the event stream; blocks are visited round-robin.
    pub fn generate(&self) -> Result<Vec<PhantomEvent>, PhantomError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::with_capacity(self.events);
        for i in 0..self.events {
            let id = CrystalId::new(rng.gen_range(0..CRYSTAL_COUNT as u16)).expect("in range");
            let truth = self.truth(id);
            let photopeak = !(self.compton_fraction > 0.0 && rng.gen_bool(self.compton_fraction));
            let total = if photopeak {
                truth.gain as u32
            } else {
                ((truth.gain as f64 * rng.gen_range(0.1..0.7)).round() as u32).max(2)
            };
            let share = if self.depth_spread > 0.0 { 0.5 + self.depth_spread * (rng.gen::<f64>() - 0.5) } else { 0.5 };
            let s1 = ((total as f64 * share).round() as u32).clamp(1, total - 1);
            let s2 = total - s1;
            let (x, y) = truth.centroid;
            let [a1, b1, c1, d1] = split(s1, [x * y, (1.0 - x) * y, (1.0 - x) * (1.0 - y), x * (1.0 - y)]);
            let [d2, a2, c2, b2] = split(s2, [x * y, x * (1.0 - y), (1.0 - x) * y, (1.0 - x) * (1.0 - y)]);
            let mut ch = [a1, b1, c1, d1, a2, b2, c2, d2];
            if self.noise > 0.0 {
                for v in &mut ch {
                    let noisy = *v as f64 * (1.0 + self.noise * unit.sample(&mut rng));
                    *v = noisy.round().clamp(0.0, u16::MAX as f64) as u16;
                }
            }
            let true_time_ps = TIME_ORIGIN_PS + i as u64 * self.period_ps;
            let tdc_time =
                true_time_ps.checked_add_signed(-(truth.time_offset_ps as i64)).expect("origin exceeds any offset");
            let block = (i % BLOCKS_PER_MODULE as usize) as u8;
            out.push(PhantomEvent {
                event: RawEvent {
                    address: BlockAddress::new(self.module_id, block).expect("validated module"),
                    integrals: ChannelIntegrals::new(ch),
                    tdc_time,
                },
                crystal: id,
                photopeak,
                true_time_ps,
            });
        }
        Ok(out)
    }
}

fn centroid_of(clt: &BoundaryClt, id: CrystalId) -> (f64, f64) {
    let (cx, cy) = crystal_center(clt, id);
    let max = POSITION_MAX as f64;
    ((cx / max).clamp(0.0, 1.0), (cy / max).clamp(0.0, 1.0))
}

/// Integer split of `total` by `weights` (summing to 1), largest remainder.
fn split(total: u32, weights: [f64; 4]) -> [u16; 4] {
    let ideal = weights.map(|w| w * total as f64);
    let mut parts = ideal.map(|v| v.floor() as u32);
    let mut left = total - parts.iter().sum::<u32>();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts.map(|p| p as u16)
}

/// Raw events only.
pub fn raw_events(events: &[PhantomEvent]) -> Vec<RawEvent> {
    events.iter().map(|e| e.event).collect()
}
