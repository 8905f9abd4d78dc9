//! Per-crystal energy and timing corrections and the energy window.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DomainError;
use crate::event_model::{ChannelIntegrals, CrystalId, CRYSTAL_COUNT, POSITION_BITS};
use crate::formats::{self, FileHeader, FormatError};

/// Photopeak energy every crystal is normalized to.
pub const PHOTOPEAK_KEV: u32 = 511;

/// Sum of all eight integrals; at most 8 × 65535, 19 bits.
#[inline]
pub fn sum_energy(ch: &ChannelIntegrals) -> u32 {
    ch.end1_sum() + ch.end2_sum()
}

/// Measured photopeak position (raw-energy units) per crystal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeakLut {
    peaks: Vec<u16>,
}

impl PeakLut {
    pub fn new(peaks: Vec<u16>) -> Result<Self, DomainError> {
        assert_eq!(peaks.len(), CRYSTAL_COUNT, "peak LUT needs one entry per crystal");
        if let Some(i) = peaks.iter().position(|&p| p == 0) {
            return Err(DomainError::ZeroPeak(i as u16));
        }
        Ok(Self { peaks })
    }

    pub fn uniform(peak: u16) -> Result<Self, DomainError> {
        Self::new(vec![peak; CRYSTAL_COUNT])
    }

    #[inline]
    pub fn peak(&self, id: CrystalId) -> u16 {
        self.peaks[id.index()]
    }

    pub fn set(&mut self, id: CrystalId, peak: u16) -> Result<(), DomainError> {
        if peak == 0 {
            return Err(DomainError::ZeroPeak(id.get()));
        }
        self.peaks[id.index()] = peak;
        Ok(())
    }

    pub fn entries(&self) -> &[u16] {
        &self.peaks
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, FormatError> {
        let payload = formats::read_payload(r, &lut_header(formats::MAGIC_PEAK_LUT, 2), CRYSTAL_COUNT * 2)?;
        Self::new(formats::u16s_le(&payload).collect()).map_err(|e| FormatError::Content(e.to_string()))
    }

    pub fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let payload: Vec<u8> = self.peaks.iter().flat_map(|v| v.to_le_bytes()).collect();
        formats::write_file(w, &lut_header(formats::MAGIC_PEAK_LUT, 2), &payload)
    }
}

/// Signed per-crystal timing offset in picoseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeOffsetLut {
    offsets: Vec<i32>,
}

impl Default for TimeOffsetLut {
    fn default() -> Self {
        Self { offsets: vec![0; CRYSTAL_COUNT] }
    }
}

impl TimeOffsetLut {
    pub fn new(offsets: Vec<i32>) -> Self {
        assert_eq!(offsets.len(), CRYSTAL_COUNT, "time LUT needs one entry per crystal");
        Self { offsets }
    }

    #[inline]
    pub fn offset(&self, id: CrystalId) -> i32 {
        self.offsets[id.index()]
    }

    pub fn set(&mut self, id: CrystalId, offset: i32) {
        self.offsets[id.index()] = offset;
    }

    pub fn entries(&self) -> &[i32] {
        &self.offsets
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, FormatError> {
        let payload = formats::read_payload(r, &lut_header(formats::MAGIC_TIME_LUT, 4), CRYSTAL_COUNT * 4)?;
        Ok(Self::new(payload.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()))
    }

    pub fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let payload: Vec<u8> = self.offsets.iter().flat_map(|v| v.to_le_bytes()).collect();
        formats::write_file(w, &lut_header(formats::MAGIC_TIME_LUT, 4), &payload)
    }
}

fn lut_header(magic: [u8; 4], entry_bytes: u16) -> FileHeader {
    FileHeader { magic, n_bits: POSITION_BITS as u16, k: CRYSTAL_COUNT as u32, entry_bytes }
}

/// `round_half_up(raw * 511 / peak)`, saturating at 65535.
#[inline]
pub fn correct_energy(raw_energy: u32, id: CrystalId, lut: &PeakLut) -> u16 {
    let peak = lut.peak(id) as u64;
    let kev = (2 * raw_energy as u64 * PHOTOPEAK_KEV as u64 + peak) / (2 * peak);
    kev.min(u16::MAX as u64) as u16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("time {time_ps} ps plus offset {offset} ps is negative")]
pub struct ClockUnderflow {
    pub time_ps: u64,
    pub offset: i32,
}

#[inline]
pub fn correct_time(time_ps: u64, id: CrystalId, lut: &TimeOffsetLut) -> Result<u64, ClockUnderflow> {
    let offset = lut.offset(id);
    time_ps.checked_add_signed(offset as i64).ok_or(ClockUnderflow { time_ps, offset })
}

/// Inclusive accepted interval of corrected energy in keV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyWindow {
    low_kev: u16,
    high_kev: u16,
}

impl Default for EnergyWindow {
    fn default() -> Self {
        Self { low_kev: 350, high_kev: 650 }
    }
}

impl EnergyWindow {
    pub fn new(low_kev: u16, high_kev: u16) -> Result<Self, DomainError> {
        if low_kev > high_kev {
            return Err(DomainError::InvertedWindow { low: low_kev, high: high_kev });
        }
        Ok(Self { low_kev, high_kev })
    }

    pub fn low_kev(&self) -> u16 {
        self.low_kev
    }

    pub fn high_kev(&self) -> u16 {
        self.high_kev
    }
}

#[inline]
pub fn pass_window(energy_kev: u16, w: &EnergyWindow) -> bool {
    (w.low_kev..=w.high_kev).contains(&energy_kev)
}
