//! Online flood-map and energy-spectrum histogramming.
//!
//! Both modes share one 262,144-word buffer per block, each word a 10-bit
//! counter. Accumulation is a read-modify-write; an increment that would
//! carry past 1023 instead raises the full flag and ends the session.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DomainError;
use crate::event_model::{CrystalId, RawPosition, CRYSTAL_COUNT, POSITION_SPAN};

/// Words in the shared histogram RAM (the flood size, the larger mode).
pub const HIST_RAM_WORDS: usize = POSITION_SPAN * POSITION_SPAN;
pub const FLOOD_BINS: usize = HIST_RAM_WORDS;
pub const ENERGY_BINS_PER_CRYSTAL: usize = 256;
pub const ENERGY_BINS: usize = CRYSTAL_COUNT * ENERGY_BINS_PER_CRYSTAL;
pub const COUNTER_BITS: u32 = 10;
pub const COUNTER_MAX: u16 = (1 << COUNTER_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistMode {
    Flood,
    EnergySpectrum,
}

impl HistMode {
    /// Addressable bins in this mode.
    pub fn bins(self) -> usize {
        match self {
            HistMode::Flood => FLOOD_BINS,
            HistMode::EnergySpectrum => ENERGY_BINS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accumulate {
    Accepted,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HistError {
    #[error("histogram session already active")]
    AlreadyActive,
    #[error("histogram session not active")]
    NotActive,
    #[error("address {addr} out of range for {mode:?} mode")]
    AddressError { addr: u32, mode: HistMode },
}

/// Right shift applied to the raw energy sum before binning (0..=11).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct EnergyScale(u8);

impl EnergyScale {
    pub const MAX_SHIFT: u8 = 11;

    pub fn new(shift: u8) -> Result<Self, DomainError> {
        if shift > Self::MAX_SHIFT {
            return Err(DomainError::ScaleShift(shift));
        }
        Ok(Self(shift))
    }

    pub fn shift(&self) -> u8 {
        self.0
    }

    /// Spectrum bin of a raw energy sum, clamped to 255.
    #[inline]
    pub fn bin(&self, raw_energy: u32) -> u32 {
        (raw_energy >> self.0).min(ENERGY_BINS_PER_CRYSTAL as u32 - 1)
    }
}

impl Default for EnergyScale {
    fn default() -> Self {
        Self(4)
    }
}

impl TryFrom<u8> for EnergyScale {
    type Error = DomainError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<EnergyScale> for u8 {
    fn from(s: EnergyScale) -> u8 {
        s.0
    }
}

#[inline]
pub fn flood_addr(pos: RawPosition) -> u32 {
    pos.y() as u32 * POSITION_SPAN as u32 + pos.x() as u32
}

#[inline]
pub fn energy_addr(id: CrystalId, raw_energy: u32, scale: EnergyScale) -> u32 {
    id.get() as u32 * ENERGY_BINS_PER_CRYSTAL as u32 + scale.bin(raw_energy)
}

/// What the histogram RAM of one block costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RamAccount {
    pub buffers: usize,
    pub words: usize,
    pub bits: u64,
}

/// One block's histogram RAM plus its state machine.
#[derive(Clone)]
pub struct BlockHistogram {
    ram: Box<[u16]>,
    mode: HistMode,
    full_flag: bool,
    active: bool,
}

impl std::fmt::Debug for BlockHistogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockHistogram")
            .field("mode", &self.mode)
            .field("full_flag", &self.full_flag)
            .field("active", &self.active)
            .finish()
    }
}

impl Default for BlockHistogram {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockHistogram {
    pub fn new() -> Self {
        Self {
            ram: vec![0u16; HIST_RAM_WORDS].into_boxed_slice(),
            mode: HistMode::Flood,
            full_flag: false,
            active: false,
        }
    }

    pub fn mode(&self) -> HistMode {
        self.mode
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn is_full(&self) -> bool {
        self.full_flag
    }

    /// Zeroes the whole RAM and opens a session in `mode`.
    pub fn start(&mut self, mode: HistMode) -> Result<(), HistError> {
        if self.active {
            return Err(HistError::AlreadyActive);
        }
        self.ram.fill(0);
        self.mode = mode;
        self.full_flag = false;
        self.active = true;
        Ok(())
    }

    /// Aborts any session and clears the RAM.
    pub fn reset(&mut self) {
        self.ram.fill(0);
        self.full_flag = false;
        self.active = false;
    }

    #[inline]
    pub fn accumulate(&mut self, addr: u32) -> Result<Accumulate, HistError> {
        if !self.active {
            return Err(HistError::NotActive);
        }
        if addr as usize >= self.mode.bins() {
            return Err(HistError::AddressError { addr, mode: self.mode });
        }
        let word = &mut self.ram[addr as usize];
        if *word == COUNTER_MAX {
            self.full_flag = true;
            self.active = false;
            return Ok(Accumulate::Terminated);
        }
        *word += 1;
        Ok(Accumulate::Accepted)
    }

    /// Counters of the current mode in ascending address order.
    pub fn read(&self) -> &[u16] {
        &self.ram[..self.mode.bins()]
    }

    pub fn ram_account(&self) -> RamAccount {
        RamAccount { buffers: 1, words: self.ram.len(), bits: self.ram.len() as u64 * COUNTER_BITS as u64 }
    }
}

/// Bits needed for the flood histogram RAM of `blocks` blocks.
pub fn flood_ram_bits(blocks: u64) -> u64 {
    blocks * FLOOD_BINS as u64 * COUNTER_BITS as u64
}

/// Bits needed for separate energy-spectrum RAMs of `blocks` blocks.
pub fn energy_ram_bits(blocks: u64) -> u64 {
    blocks * ENERGY_BINS as u64 * COUNTER_BITS as u64
}
