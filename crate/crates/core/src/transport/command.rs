//! Downlink commands and the host-bound replies they trigger.
//!
//! A command is `opcode u8, module_id u8, block_id u8` followed by an
//! opcode-specific little-endian payload of fixed size. A datagram may carry
//! several commands back to back.
//!
//! | opcode | name                    | payload                                   |
//! |--------|-------------------------|-------------------------------------------|
//! | 0x01   | SET_MODE                | mode u8 (0 regular, 1 flood-online, 2 flood-offline, 3 energy-online, 4 energy-offline) |
//! | 0x02   | SET_ENERGY_WINDOW       | low_kev u16, high_kev u16                 |
//! | 0x03   | LOAD_BOUNDARY_CLT_LINE  | direction u8 (0 x, 1 y), line u16, 22 × u16 |
//! | 0x04   | LOAD_PEAK_ENTRY         | crystal u16, peak u16                     |
//! | 0x05   | LOAD_TIME_ENTRY         | crystal u16, offset i32                   |
//! | 0x06   | HIST_START              | none                                      |
//! | 0x07   | HIST_READ               | none                                      |
//! | 0x08   | HIST_RESET              | none                                      |
//! | 0x09   | STATUS                  | none                                      |

use thiserror::Error;

use crate::corrections::EnergyWindow;
use crate::crystal_lut::{BoundaryLine, Direction, BOUNDARIES_PER_LINE};
use crate::event_model::{BlockAddress, CrystalId};
use crate::pipeline::{BlockStats, Mode};
use crate::transport::packet::{decode_address, encode_address};

pub const OP_SET_MODE: u8 = 0x01;
pub const OP_SET_ENERGY_WINDOW: u8 = 0x02;
pub const OP_LOAD_BOUNDARY_CLT_LINE: u8 = 0x03;
pub const OP_LOAD_PEAK_ENTRY: u8 = 0x04;
pub const OP_LOAD_TIME_ENTRY: u8 = 0x05;
pub const OP_HIST_START: u8 = 0x06;
pub const OP_HIST_READ: u8 = 0x07;
pub const OP_HIST_RESET: u8 = 0x08;
pub const OP_STATUS: u8 = 0x09;

const COMMAND_HEADER: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    SetMode(Mode),
    SetEnergyWindow(EnergyWindow),
    LoadBoundaryCltLine { direction: Direction, line: u16, boundaries: BoundaryLine },
    LoadPeakEntry { crystal: CrystalId, peak: u16 },
    LoadTimeEntry { crystal: CrystalId, offset: i32 },
    HistStart,
    HistRead,
    HistReset,
    Status,
}

impl Command {
    pub fn opcode(&self) -> u8 {
        match self {
            Command::SetMode(_) => OP_SET_MODE,
            Command::SetEnergyWindow(_) => OP_SET_ENERGY_WINDOW,
            Command::LoadBoundaryCltLine { .. } => OP_LOAD_BOUNDARY_CLT_LINE,
            Command::LoadPeakEntry { .. } => OP_LOAD_PEAK_ENTRY,
            Command::LoadTimeEntry { .. } => OP_LOAD_TIME_ENTRY,
            Command::HistStart => OP_HIST_START,
            Command::HistRead => OP_HIST_READ,
            Command::HistReset => OP_HIST_RESET,
            Command::Status => OP_STATUS,
        }
    }
}

fn payload_len(opcode: u8) -> Option<usize> {
    Some(match opcode {
        OP_SET_MODE => 1,
        OP_SET_ENERGY_WINDOW => 4,
        OP_LOAD_BOUNDARY_CLT_LINE => 3 + 2 * BOUNDARIES_PER_LINE,
        OP_LOAD_PEAK_ENTRY => 4,
        OP_LOAD_TIME_ENTRY => 6,
        OP_HIST_START | OP_HIST_READ | OP_HIST_RESET | OP_STATUS => 0,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandPacket {
    pub address: BlockAddress,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("unknown opcode 0x{0:02x}")]
    UnknownOpcode(u8),
    #[error("command 0x{opcode:02x} truncated: {have} of {need} bytes")]
    Truncated { opcode: u8, have: usize, need: usize },
    #[error("bad address module {module} block {block}")]
    Address { module: u8, block: u8 },
    #[error("invalid payload for opcode 0x{opcode:02x}: {detail}")]
    Payload { opcode: u8, detail: String },
}

impl CommandPacket {
    pub fn new(address: BlockAddress, command: Command) -> Self {
        Self { address, command }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.command.opcode());
        out.push(self.address.module_id());
        out.push(self.address.block_id());
        match &self.command {
            Command::SetMode(m) => out.push(m.code()),
            Command::SetEnergyWindow(w) => {
                out.extend_from_slice(&w.low_kev().to_le_bytes());
                out.extend_from_slice(&w.high_kev().to_le_bytes());
            }
            Command::LoadBoundaryCltLine { direction, line, boundaries } => {
                out.push(match direction {
                    Direction::X => 0,
                    Direction::Y => 1,
                });
                out.extend_from_slice(&line.to_le_bytes());
                for b in boundaries {
                    out.extend_from_slice(&b.to_le_bytes());
                }
            }
            Command::LoadPeakEntry { crystal, peak } => {
                out.extend_from_slice(&crystal.get().to_le_bytes());
                out.extend_from_slice(&peak.to_le_bytes());
            }
            Command::LoadTimeEntry { crystal, offset } => {
                out.extend_from_slice(&crystal.get().to_le_bytes());
                out.extend_from_slice(&offset.to_le_bytes());
            }
            Command::HistStart | Command::HistRead | Command::HistReset | Command::Status => {}
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    /// Decodes one command from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), CommandError> {
        let opcode = *bytes.first().ok_or(CommandError::Truncated { opcode: 0, have: 0, need: 1 })?;
        let len = payload_len(opcode).ok_or(CommandError::UnknownOpcode(opcode))?;
        let need = COMMAND_HEADER + len;
        if bytes.len() < need {
            return Err(CommandError::Truncated { opcode, have: bytes.len(), need });
        }
        let (module, block) = (bytes[1], bytes[2]);
        let address = BlockAddress::new(module, block).map_err(|_| CommandError::Address { module, block })?;
        let p = &bytes[COMMAND_HEADER..need];
        let u16_at = |i: usize| u16::from_le_bytes([p[i], p[i + 1]]);
        let bad = |detail: String| CommandError::Payload { opcode, detail };
        let crystal = |v: u16| CrystalId::new(v).map_err(|e| bad(e.to_string()));

        let command = match opcode {
            OP_SET_MODE => Command::SetMode(Mode::from_code(p[0]).ok_or_else(|| bad(format!("mode {}", p[0])))?),
            OP_SET_ENERGY_WINDOW => {
                Command::SetEnergyWindow(EnergyWindow::new(u16_at(0), u16_at(2)).map_err(|e| bad(e.to_string()))?)
            }
            OP_LOAD_BOUNDARY_CLT_LINE => {
                let direction = match p[0] {
                    0 => Direction::X,
                    1 => Direction::Y,
                    d => return Err(bad(format!("direction {d}"))),
                };
                let mut boundaries = [0u16; BOUNDARIES_PER_LINE];
                for (i, b) in boundaries.iter_mut().enumerate() {
                    *b = u16_at(3 + 2 * i);
                }
                Command::LoadBoundaryCltLine { direction, line: u16_at(1), boundaries }
            }
            OP_LOAD_PEAK_ENTRY => {
                let peak = u16_at(2);
                if peak == 0 {
                    return Err(bad("zero peak".into()));
                }
                Command::LoadPeakEntry { crystal: crystal(u16_at(0))?, peak }
            }
            OP_LOAD_TIME_ENTRY => Command::LoadTimeEntry {
                crystal: crystal(u16_at(0))?,
                offset: i32::from_le_bytes(p[2..6].try_into().unwrap()),
            },
            OP_HIST_START => Command::HistStart,
            OP_HIST_READ => Command::HistRead,
            OP_HIST_RESET => Command::HistReset,
            OP_STATUS => Command::Status,
            _ => unreachable!("payload_len covers every opcode"),
        };
        Ok((Self { address, command }, need))
    }
}

/// Commands parsed from one datagram. Parsing stops at the first malformed
/// command, since its length cannot be trusted to resynchronize.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommandBatch {
    pub commands: Vec<CommandPacket>,
    pub error: Option<CommandError>,
}

pub fn receive_downlink(datagram: &[u8]) -> CommandBatch {
    let mut batch = CommandBatch::default();
    let mut rest = datagram;
    while !rest.is_empty() {
        match CommandPacket::decode(rest) {
            Ok((cmd, used)) => {
                batch.commands.push(cmd);
                rest = &rest[used..];
            }
            Err(e) => {
                batch.error = Some(e);
                break;
            }
        }
    }
    batch
}

pub fn encode_commands(commands: &[CommandPacket]) -> Vec<u8> {
    let mut out = Vec::new();
    for c in commands {
        c.encode_into(&mut out);
    }
    out
}

/// First byte of a histogram readout chunk datagram.
pub const TYPE_HIST_CHUNK: u8 = 0x10;
/// First byte of a status reply datagram.
pub const TYPE_STATUS: u8 = 0x20;
pub const HIST_CHUNK_HEADER: usize = 6;
/// Bins per chunk so that a chunk fills at most one 1472-byte datagram.
pub const HIST_CHUNK_BINS: usize = (1472 - HIST_CHUNK_HEADER) / 2;

/// One slice of a histogram readout: `{0x10, address, chunk_index u16 LE,
/// count u16 LE}` then `count` u16 LE bins. The address byte uses the singles
/// packet packing (module in the high nibble, block in bits 3..2). The last
/// chunk of a readout holds fewer than [`HIST_CHUNK_BINS`] bins, possibly zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistChunk {
    pub address: BlockAddress,
    pub chunk_index: u16,
    pub bins: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplyError {
    #[error("reply truncated")]
    Truncated,
    #[error("unexpected reply type 0x{0:02x}")]
    Type(u8),
    #[error("bad address byte 0x{0:02x}")]
    Address(u8),
    #[error("chunk count {count} disagrees with {bytes} payload bytes")]
    Count { count: u16, bytes: usize },
}

impl HistChunk {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HIST_CHUNK_HEADER + 2 * self.bins.len());
        out.push(TYPE_HIST_CHUNK);
        out.push(encode_address(self.address));
        out.extend_from_slice(&self.chunk_index.to_le_bytes());
        out.extend_from_slice(&(self.bins.len() as u16).to_le_bytes());
        for b in &self.bins {
            out.extend_from_slice(&b.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ReplyError> {
        if bytes.len() < HIST_CHUNK_HEADER {
            return Err(ReplyError::Truncated);
        }
        if bytes[0] != TYPE_HIST_CHUNK {
            return Err(ReplyError::Type(bytes[0]));
        }
        let address = decode_address(bytes[1]).ok_or(ReplyError::Address(bytes[1]))?;
        let count = u16::from_le_bytes([bytes[4], bytes[5]]);
        let body = &bytes[HIST_CHUNK_HEADER..];
        if body.len() != 2 * count as usize {
            return Err(ReplyError::Count { count, bytes: body.len() });
        }
        Ok(Self {
            address,
            chunk_index: u16::from_le_bytes([bytes[2], bytes[3]]),
            bins: body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect(),
        })
    }

    pub fn is_last(&self) -> bool {
        self.bins.len() < HIST_CHUNK_BINS
    }
}

/// Splits a readout into chunks; always ends with a short chunk.
pub fn hist_chunks(address: BlockAddress, bins: &[u16]) -> Vec<HistChunk> {
    let mut chunks: Vec<HistChunk> = bins
        .chunks(HIST_CHUNK_BINS)
        .enumerate()
        .map(|(i, c)| HistChunk { address, chunk_index: i as u16, bins: c.to_vec() })
        .collect();
    if chunks.last().is_none_or(|c| !c.is_last()) {
        chunks.push(HistChunk { address, chunk_index: chunks.len() as u16, bins: Vec::new() });
    }
    chunks
}

/// Reply to STATUS: `{0x20, address, mode u8, flags u8}` then the block
/// counters as u64 LE in [`BlockStats::FIELDS`] order. Flags: bit 0
/// histogram active, bit 1 histogram full.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusReport {
    pub address: BlockAddress,
    pub mode: Mode,
    pub hist_active: bool,
    pub hist_full: bool,
    pub stats: BlockStats,
    pub naks: u64,
}

impl StatusReport {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![
            TYPE_STATUS,
            encode_address(self.address),
            self.mode.code(),
            self.hist_active as u8 | (self.hist_full as u8) << 1,
        ];
        for v in self.stats.to_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.naks.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ReplyError> {
        let n = BlockStats::FIELDS.len();
        if bytes.len() != 4 + 8 * (n + 1) {
            return Err(ReplyError::Truncated);
        }
        if bytes[0] != TYPE_STATUS {
            return Err(ReplyError::Type(bytes[0]));
        }
        let address = decode_address(bytes[1]).ok_or(ReplyError::Address(bytes[1]))?;
        let mode = Mode::from_code(bytes[2]).ok_or(ReplyError::Type(bytes[2]))?;
        let words: Vec<u64> = bytes[4..].chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self {
            address,
            mode,
            hist_active: bytes[3] & 1 != 0,
            hist_full: bytes[3] & 2 != 0,
            stats: BlockStats::from_slice(&words[..n]),
            naks: words[n],
        })
    }
}
