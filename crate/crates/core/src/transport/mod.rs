//! Wire formats: singles packets, downlink commands and replies, UDP/IPv4
//! framing, and uplink batching.

pub mod command;
pub mod frame;
pub mod packet;
pub mod uplink;

pub use command::{receive_downlink, Command, CommandBatch, CommandError, CommandPacket, HistChunk, StatusReport};
pub use frame::{build_frame, parse_frame, FrameConfig, FrameError};
pub use packet::{PacketBody, PacketError, SinglesPacket, PACKET_BYTES};
pub use uplink::{stream_uplink, DatagramSink, Uplink, UplinkStats, PACKETS_PER_DATAGRAM};
