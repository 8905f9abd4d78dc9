//! Shared event types and crystal identifier arithmetic.
//!
//! Crystal IDs are row-major over the 23×23 array: `row = id / 23`,
//! `col = id % 23`.

use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Crystals per side of a detector block.
pub const CRYSTALS_PER_SIDE: usize = 23;
/// Crystals per detector block.
pub const CRYSTAL_COUNT: usize = CRYSTALS_PER_SIDE * CRYSTALS_PER_SIDE;
/// Bits per raw position coordinate.
pub const POSITION_BITS: u32 = 9;
/// Raw positions per axis.
pub const POSITION_SPAN: usize = 1 << POSITION_BITS;
pub const POSITION_MAX: u16 = (POSITION_SPAN - 1) as u16;
pub const DOI_MAX: u8 = 15;
pub const MODULE_COUNT: u8 = 12;
pub const BLOCKS_PER_MODULE: u8 = 4;

/// The eight area integrals of one dual-ended detector event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ChannelIntegrals {
    pub a1: u16,
    pub b1: u16,
    pub c1: u16,
    pub d1: u16,
    pub a2: u16,
    pub b2: u16,
    pub c2: u16,
    pub d2: u16,
}

impl ChannelIntegrals {
    pub fn new(values: [u16; 8]) -> Self {
        let [a1, b1, c1, d1, a2, b2, c2, d2] = values;
        Self { a1, b1, c1, d1, a2, b2, c2, d2 }
    }

    pub fn to_array(self) -> [u16; 8] {
        [self.a1, self.b1, self.c1, self.d1, self.a2, self.b2, self.c2, self.d2]
    }

    /// Light collected at end 1.
    #[inline]
    pub fn end1_sum(&self) -> u32 {
        self.a1 as u32 + self.b1 as u32 + self.c1 as u32 + self.d1 as u32
    }

    /// Light collected at end 2.
    #[inline]
    pub fn end2_sum(&self) -> u32 {
        self.a2 as u32 + self.b2 as u32 + self.c2 as u32 + self.d2 as u32
    }

    pub fn is_valid(&self) -> bool {
        self.end1_sum() > 0 && self.end2_sum() > 0
    }
}

/// Quantized 9-bit raw (x, y) position on the flood plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RawPosition {
    x: u16,
    y: u16,
}

impl RawPosition {
    pub fn new(x: u16, y: u16) -> Result<Self, DomainError> {
        if x > POSITION_MAX || y > POSITION_MAX {
            return Err(DomainError::PositionOutOfRange { x, y });
        }
        Ok(Self { x, y })
    }

    /// Caller guarantees both coordinates are ≤ 511.
    #[inline]
    pub(crate) fn new_unchecked(x: u16, y: u16) -> Self {
        debug_assert!(x <= POSITION_MAX && y <= POSITION_MAX);
        Self { x, y }
    }

    #[inline]
    pub fn x(&self) -> u16 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> u16 {
        self.y
    }
}

/// 4-bit depth-of-interaction code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Doi(u8);

impl Doi {
    pub fn new(value: u8) -> Result<Self, DomainError> {
        if value > DOI_MAX {
            return Err(DomainError::DoiOutOfRange(value));
        }
        Ok(Self(value))
    }

    #[inline]
    pub(crate) fn new_unchecked(value: u8) -> Self {
        debug_assert!(value <= DOI_MAX);
        Self(value)
    }

    #[inline]
    pub fn value(&self) -> u8 {
        self.0
    }
}

/// Row-major index into the 23×23 crystal array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrystalId(u16);

impl CrystalId {
    pub const MAX: u16 = (CRYSTAL_COUNT - 1) as u16;

    pub fn new(id: u16) -> Result<Self, DomainError> {
        if id > Self::MAX {
            return Err(DomainError::CrystalOutOfRange(id));
        }
        Ok(Self(id))
    }

    #[inline]
    pub(crate) fn new_unchecked(id: u16) -> Self {
        debug_assert!(id <= Self::MAX);
        Self(id)
    }

    #[inline]
    pub fn get(&self) -> u16 {
        self.0
    }

    #[inline]
    pub fn index(&self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = CrystalId> {
        (0..=Self::MAX).map(CrystalId)
    }
}

impl fmt::Display for CrystalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Splits a crystal ID into its (row, col) components.
pub fn crystal_id_to_2d(id: CrystalId) -> (u8, u8) {
    let side = CRYSTALS_PER_SIDE as u16;
    ((id.0 / side) as u8, (id.0 % side) as u8)
}

/// The 2D→1D decoder.
pub fn crystal_2d_to_id(row: u8, col: u8) -> Result<CrystalId, DomainError> {
    if row as usize >= CRYSTALS_PER_SIDE || col as usize >= CRYSTALS_PER_SIDE {
        return Err(DomainError::ComponentOutOfRange { row, col });
    }
    Ok(CrystalId(row as u16 * CRYSTALS_PER_SIDE as u16 + col as u16))
}

/// Identity of a block within the scanner ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockAddress {
    module_id: u8,
    block_id: u8,
}

impl BlockAddress {
    pub fn new(module_id: u8, block_id: u8) -> Result<Self, DomainError> {
        if module_id >= MODULE_COUNT {
            return Err(DomainError::ModuleOutOfRange(module_id));
        }
        if block_id >= BLOCKS_PER_MODULE {
            return Err(DomainError::BlockOutOfRange(block_id));
        }
        Ok(Self { module_id, block_id })
    }

    #[inline]
    pub fn module_id(&self) -> u8 {
        self.module_id
    }

    #[inline]
    pub fn block_id(&self) -> u8 {
        self.block_id
    }
}

/// One digitized detector event as it enters the SPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub address: BlockAddress,
    pub integrals: ChannelIntegrals,
    /// TDC timestamp in picoseconds.
    pub tdc_time: u64,
}

/// Size of one event in an event file.
pub const EVENT_RECORD_BYTES: usize = 26;

impl RawEvent {
    /// Little-endian event-file layout: module u8, block u8, 8×u16 integrals, u64 time.
    pub fn to_bytes(&self) -> [u8; EVENT_RECORD_BYTES] {
        let mut out = [0u8; EVENT_RECORD_BYTES];
        out[0] = self.address.module_id;
        out[1] = self.address.block_id;
        for (i, v) in self.integrals.to_array().iter().enumerate() {
            out[2 + 2 * i..4 + 2 * i].copy_from_slice(&v.to_le_bytes());
        }
        out[18..26].copy_from_slice(&self.tdc_time.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; EVENT_RECORD_BYTES]) -> Result<Self, DomainError> {
        let address = BlockAddress::new(bytes[0], bytes[1])?;
        let mut values = [0u16; 8];
        for (i, v) in values.iter_mut().enumerate() {
            *v = u16::from_le_bytes([bytes[2 + 2 * i], bytes[3 + 2 * i]]);
        }
        let mut time = [0u8; 8];
        time.copy_from_slice(&bytes[18..26]);
        Ok(Self { address, integrals: ChannelIntegrals::new(values), tdc_time: u64::from_le_bytes(time) })
    }
}

/// Writes events in the 26-byte record format.
pub fn write_events<W: Write>(mut w: W, events: &[RawEvent]) -> io::Result<()> {
    for ev in events {
        w.write_all(&ev.to_bytes())?;
    }
    w.flush()
}

/// Reads a whole event file. A trailing partial record is an error.
pub fn read_events<R: Read>(mut r: R) -> io::Result<Vec<RawEvent>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() % EVENT_RECORD_BYTES != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("event file length {} is not a multiple of {EVENT_RECORD_BYTES}", buf.len()),
        ));
    }
    buf.chunks_exact(EVENT_RECORD_BYTES)
        .map(|c| {
            RawEvent::from_bytes(c.try_into().expect("exact chunk"))
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}

/// A corrected, crystal-identified single as produced by regular mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinglesRecord {
    pub address: BlockAddress,
    pub crystal: CrystalId,
    pub doi: Doi,
    pub energy_kev: u16,
    pub time_ps: u64,
}
