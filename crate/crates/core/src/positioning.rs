//! Center-of-gravity positioning of the eight area integrals.
//!
//! ```text
//! x   = 0.5 * ((A1+D1)/S1 + (A2+D2)/S2)
//! y   = 0.5 * ((A1+B1)/S1 + (C2+D2)/S2)
//! doi = S1 / (S1 + S2)
//! ```
//!
//! Each ratio is evaluated as an exact integer fraction and rounded once,
//! half-up, onto 0..=511 (x, y) or 0..=15 (doi).

use thiserror::Error;

use crate::event_model::{ChannelIntegrals, Doi, RawPosition, DOI_MAX, POSITION_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("zero light at end {end}: position undefined")]
pub struct ZeroSumEvent {
    pub end: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PositionResult {
    pub pos: RawPosition,
    pub doi: Doi,
}

/// Which end-2 channel pair feeds the y coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YPairing {
    /// (A1+B1)/S1 with (C2+D2)/S2.
    #[default]
    Crossed,
    /// (A1+B1)/S1 with (A2+B2)/S2.
    Symmetric,
}

/// `round_half_up(scale * num / den)` with `num <= den`, exact.
#[inline]
fn quantize(num: u64, den: u64, scale: u64) -> u64 {
    (2 * scale * num + den) / (2 * den)
}

pub fn compute_position(ch: &ChannelIntegrals) -> Result<PositionResult, ZeroSumEvent> {
    compute_position_with(ch, YPairing::Crossed)
}

pub fn compute_position_with(ch: &ChannelIntegrals, pairing: YPairing) -> Result<PositionResult, ZeroSumEvent> {
    let s1 = ch.end1_sum() as u64;
    let s2 = ch.end2_sum() as u64;
    if s1 == 0 {
        return Err(ZeroSumEvent { end: 1 });
    }
    if s2 == 0 {
        return Err(ZeroSumEvent { end: 2 });
    }
    // 0.5 * (p/s1 + q/s2) == (p*s2 + q*s1) / (2*s1*s2); all terms stay below 2^40.
    let den = 2 * s1 * s2;
    let x_num = (ch.a1 as u64 + ch.d1 as u64) * s2 + (ch.a2 as u64 + ch.d2 as u64) * s1;
    let y_end2 = match pairing {
        YPairing::Crossed => ch.c2 as u64 + ch.d2 as u64,
        YPairing::Symmetric => ch.a2 as u64 + ch.b2 as u64,
    };
    let y_num = (ch.a1 as u64 + ch.b1 as u64) * s2 + y_end2 * s1;

    let scale = POSITION_MAX as u64;
    let x = quantize(x_num, den, scale) as u16;
    let y = quantize(y_num, den, scale) as u16;
    let doi = quantize(s1, s1 + s2, DOI_MAX as u64) as u8;
    Ok(PositionResult { pos: RawPosition::new_unchecked(x, y), doi: Doi::new_unchecked(doi) })
}
