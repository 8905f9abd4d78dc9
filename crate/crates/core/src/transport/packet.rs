//! The 16-byte singles packet.
//!
//! ```text
//! byte  0      packet type: 0x01 regular, 0x02 flood-offline, 0x03 energy-offline
//! byte  1      [7:4] module id, [3:2] block id, [1:0] reserved
//! bytes 2-3    crystal id (regular, energy-offline) or raw x (flood-offline), big-endian
//! byte  4      regular:        [7:4] doi, [3:0] reserved
//!              energy-offline: [7:4] doi, [3] reserved, [2:0] raw energy bits 18..16
//!              flood-offline:  [0] raw y bit 8, [7:1] reserved
//! bytes 5-6    regular:        energy keV, big-endian
//!              energy-offline: raw energy bits 15..0, big-endian
//!              flood-offline:  byte 5 raw y bits 7..0, byte 6 reserved
//! bytes 7-14   time in ps, big-endian u64
//! byte  15     reserved
//! ```
//! Reserved bits must be zero; the decoder rejects anything else.

use thiserror::Error;

use crate::event_model::{BlockAddress, CrystalId, Doi, RawPosition, SinglesRecord};

pub const PACKET_BYTES: usize = 16;

pub const TYPE_REGULAR: u8 = 0x01;
pub const TYPE_FLOOD_RAW: u8 = 0x02;
pub const TYPE_ENERGY_RAW: u8 = 0x03;

/// Largest raw energy sum (8 × 65535) fits in 19 bits.
pub const RAW_ENERGY_MAX: u32 = (1 << 19) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketBody {
    Regular { crystal: CrystalId, doi: Doi, energy_kev: u16 },
    FloodRaw { pos: RawPosition },
    EnergyRaw { crystal: CrystalId, doi: Doi, raw_energy: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SinglesPacket {
    pub address: BlockAddress,
    pub body: PacketBody,
    pub time_ps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("packet is {0} bytes, expected 16")]
    Length(usize),
    #[error("unknown packet type 0x{0:02x}")]
    UnknownType(u8),
    #[error("reserved bits set in byte {0}")]
    Reserved(usize),
    #[error("crystal id {0} out of range")]
    Crystal(u16),
    #[error("raw position out of range")]
    Position,
    #[error("module id {0} out of range")]
    Module(u8),
    #[error("raw energy {0} exceeds 19 bits")]
    RawEnergy(u32),
}

impl From<SinglesRecord> for SinglesPacket {
    fn from(r: SinglesRecord) -> Self {
        Self {
            address: r.address,
            body: PacketBody::Regular { crystal: r.crystal, doi: r.doi, energy_kev: r.energy_kev },
            time_ps: r.time_ps,
        }
    }
}

impl SinglesPacket {
    pub fn packet_type(&self) -> u8 {
        match self.body {
            PacketBody::Regular { .. } => TYPE_REGULAR,
            PacketBody::FloodRaw { .. } => TYPE_FLOOD_RAW,
            PacketBody::EnergyRaw { .. } => TYPE_ENERGY_RAW,
        }
    }

    pub fn to_record(&self) -> Option<SinglesRecord> {
        match self.body {
            PacketBody::Regular { crystal, doi, energy_kev } => {
                Some(SinglesRecord { address: self.address, crystal, doi, energy_kev, time_ps: self.time_ps })
            }
            _ => None,
        }
    }

    /// Panics if an energy-offline raw energy exceeds 19 bits.
    #[inline]
    pub fn encode(&self) -> [u8; PACKET_BYTES] {
        let mut out = [0u8; PACKET_BYTES];
        out[0] = self.packet_type();
        out[1] = encode_address(self.address);
        match self.body {
            PacketBody::Regular { crystal, doi, energy_kev } => {
                out[2..4].copy_from_slice(&crystal.get().to_be_bytes());
                out[4] = doi.value() << 4;
                out[5..7].copy_from_slice(&energy_kev.to_be_bytes());
            }
            PacketBody::FloodRaw { pos } => {
                out[2..4].copy_from_slice(&pos.x().to_be_bytes());
                out[4] = (pos.y() >> 8) as u8;
                out[5] = pos.y() as u8;
            }
            PacketBody::EnergyRaw { crystal, doi, raw_energy } => {
                assert!(raw_energy <= RAW_ENERGY_MAX, "raw energy {raw_energy} exceeds 19 bits");
                out[2..4].copy_from_slice(&crystal.get().to_be_bytes());
                out[4] = doi.value() << 4 | (raw_energy >> 16) as u8;
                out[5..7].copy_from_slice(&(raw_energy as u16).to_be_bytes());
            }
        }
        out[7..15].copy_from_slice(&self.time_ps.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PacketError> {
        if bytes.len() != PACKET_BYTES {
            return Err(PacketError::Length(bytes.len()));
        }
        if bytes[1] & 0x03 != 0 {
            return Err(PacketError::Reserved(1));
        }
        if bytes[15] != 0 {
            return Err(PacketError::Reserved(15));
        }
        let module = bytes[1] >> 4;
        let address = BlockAddress::new(module, (bytes[1] >> 2) & 0x03).map_err(|_| PacketError::Module(module))?;
        let field = u16::from_be_bytes([bytes[2], bytes[3]]);
        let crystal = || CrystalId::new(field).map_err(|_| PacketError::Crystal(field));
        let doi = Doi::new_unchecked(bytes[4] >> 4);
        let body = match bytes[0] {
            TYPE_REGULAR => {
                if bytes[4] & 0x0F != 0 {
                    return Err(PacketError::Reserved(4));
                }
                PacketBody::Regular { crystal: crystal()?, doi, energy_kev: u16::from_be_bytes([bytes[5], bytes[6]]) }
            }
            TYPE_FLOOD_RAW => {
                if bytes[4] & 0xFE != 0 {
                    return Err(PacketError::Reserved(4));
                }
                if bytes[6] != 0 {
                    return Err(PacketError::Reserved(6));
                }
                let y = (bytes[4] as u16) << 8 | bytes[5] as u16;
                PacketBody::FloodRaw { pos: RawPosition::new(field, y).map_err(|_| PacketError::Position)? }
            }
            TYPE_ENERGY_RAW => {
                if bytes[4] & 0x08 != 0 {
                    return Err(PacketError::Reserved(4));
                }
                let raw_energy = ((bytes[4] & 0x07) as u32) << 16 | u16::from_be_bytes([bytes[5], bytes[6]]) as u32;
                PacketBody::EnergyRaw { crystal: crystal()?, doi, raw_energy }
            }
            t => return Err(PacketError::UnknownType(t)),
        };
        let time_ps = u64::from_be_bytes(bytes[7..15].try_into().unwrap());
        Ok(Self { address, body, time_ps })
    }
}

/// Module id in the high nibble, block id in bits 3..2.
#[inline]
pub fn encode_address(a: BlockAddress) -> u8 {
    a.module_id() << 4 | a.block_id() << 2
}

pub fn decode_address(byte: u8) -> Option<BlockAddress> {
    if byte & 0x03 != 0 {
        return None;
    }
    BlockAddress::new(byte >> 4, (byte >> 2) & 0x03).ok()
}
