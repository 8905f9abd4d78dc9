//! Uplink batching and datagram sinks.

use std::io::{self, Write};
use std::net::{SocketAddr, UdpSocket};

use serde::Serialize;

use crate::event_model::BlockAddress;
use crate::transport::command::{hist_chunks, StatusReport};
use crate::transport::frame::{self, FrameBuilder, FrameConfig, MAX_PAYLOAD};
use crate::transport::packet::{SinglesPacket, PACKET_BYTES};

pub const DEFAULT_UPLINK_PORT: u16 = 5000;
pub const DEFAULT_DOWNLINK_PORT: u16 = 5001;
/// Whole packets per datagram: 92 × 16 = 1472.
pub const PACKETS_PER_DATAGRAM: usize = MAX_PAYLOAD / PACKET_BYTES;

/// Where finished datagrams go.
pub trait DatagramSink {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()>;
}

impl DatagramSink for Vec<Vec<u8>> {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        self.push(datagram.to_vec());
        Ok(())
    }
}

impl<S: DatagramSink + ?Sized> DatagramSink for &mut S {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        (**self).send(datagram)
    }
}

/// Counts datagrams without keeping them.
#[derive(Debug, Default)]
pub struct NullSink;

impl DatagramSink for NullSink {
    fn send(&mut self, _datagram: &[u8]) -> io::Result<()> {
        Ok(())
    }
}

/// Live mode: one UDP datagram per batch to a fixed peer.
#[derive(Debug)]
pub struct UdpSink {
    socket: UdpSocket,
    peer: SocketAddr,
}

impl UdpSink {
    pub fn new(socket: UdpSocket, peer: SocketAddr) -> Self {
        Self { socket, peer }
    }
}

impl DatagramSink for UdpSink {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        self.socket.send_to(datagram, self.peer).map(|_| ())
    }
}

/// Offline mode: every datagram becomes a full Ethernet frame with FCS,
/// appended to a length-prefixed capture stream.
#[derive(Debug)]
pub struct FrameCaptureSink<W: Write> {
    builder: FrameBuilder,
    out: W,
}

impl<W: Write> FrameCaptureSink<W> {
    pub fn new(config: FrameConfig, out: W) -> Self {
        Self { builder: FrameBuilder::new(config), out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> DatagramSink for FrameCaptureSink<W> {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        let mut f = self.builder.build(datagram).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        frame::append_fcs(&mut f);
        frame::write_capture_frame(&mut self.out, &f)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UplinkStats {
    pub packets: u64,
    pub datagrams: u64,
    /// Singles payload bytes, 16 per packet.
    pub payload_bytes: u64,
    pub reply_datagrams: u64,
}

impl UplinkStats {
    /// Singles byte rate over a wall-clock interval, in MB/s (10^6 bytes).
    pub fn megabytes_per_s(&self, seconds: f64) -> f64 {
        self.payload_bytes as f64 / seconds / 1e6
    }

    /// Singles bit rate over a wall-clock interval, in Mbps.
    pub fn mbps(&self, seconds: f64) -> f64 {
        self.megabytes_per_s(seconds) * 8.0
    }
}

/// Packs singles into datagrams of at most 92 packets.
#[derive(Debug)]
pub struct Uplink<S: DatagramSink> {
    sink: S,
    buf: Vec<u8>,
    stats: UplinkStats,
}

impl<S: DatagramSink> Uplink<S> {
    pub fn new(sink: S) -> Self {
        Self { sink, buf: Vec::with_capacity(MAX_PAYLOAD), stats: UplinkStats::default() }
    }

    #[inline]
    pub fn push(&mut self, packet: &SinglesPacket) -> io::Result<()> {
        self.push_bytes(&packet.encode())
    }

    #[inline]
    pub fn push_bytes(&mut self, bytes: &[u8; PACKET_BYTES]) -> io::Result<()> {
        self.buf.extend_from_slice(bytes);
        self.stats.packets += 1;
        self.stats.payload_bytes += PACKET_BYTES as u64;
        if self.buf.len() == PACKETS_PER_DATAGRAM * PACKET_BYTES {
            self.flush()?;
        }
        Ok(())
    }

    /// Sends any partially filled datagram.
    pub fn flush(&mut self) -> io::Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        self.stats.datagrams += 1;
        let r = self.sink.send(&self.buf);
        self.buf.clear();
        r
    }

    /// Sends a histogram readout; pending singles go out first.
    pub fn send_histogram(&mut self, address: BlockAddress, bins: &[u16]) -> io::Result<()> {
        self.flush()?;
        for chunk in hist_chunks(address, bins) {
            self.stats.reply_datagrams += 1;
            self.sink.send(&chunk.encode())?;
        }
        Ok(())
    }

    pub fn send_status(&mut self, report: &StatusReport) -> io::Result<()> {
        self.flush()?;
        self.stats.reply_datagrams += 1;
        self.sink.send(&report.encode())
    }

    pub fn stats(&self) -> UplinkStats {
        self.stats
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn into_sink(mut self) -> io::Result<S> {
        self.flush()?;
        Ok(self.sink)
    }
}

/// Batches a packet sequence into datagram payloads.
pub fn stream_uplink(packets: &[SinglesPacket]) -> Vec<Vec<u8>> {
    let mut up = Uplink::new(Vec::new());
    for p in packets {
        up.push(p).expect("in-memory sink");
    }
    up.into_sink().expect("in-memory sink")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::{CrystalId, Doi};
    use crate::transport::packet::PacketBody;

    fn packets(n: usize) -> Vec<SinglesPacket> {
        (0..n)
            .map(|i| SinglesPacket {
                address: BlockAddress::new(0, (i % 4) as u8).unwrap(),
                body: PacketBody::Regular {
                    crystal: CrystalId::new((i % 529) as u16).unwrap(),
                    doi: Doi::new(3).unwrap(),
                    energy_kev: 511,
                },
                time_ps: i as u64,
            })
            .collect()
    }

    #[test]
    fn datagram_capacity() {
        assert_eq!(PACKETS_PER_DATAGRAM, 92);
        let d = stream_uplink(&packets(92));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].len(), 1472);
        let d = stream_uplink(&packets(93));
        assert_eq!(d.iter().map(Vec::len).collect::<Vec<_>>(), vec![1472, 16]);
        assert!(stream_uplink(&[]).is_empty());
    }

    #[test]
    fn packets_survive_batching_in_order() {
        let ps = packets(500);
        let d = stream_uplink(&ps);
        let back: Vec<SinglesPacket> =
            d.iter().flat_map(|dg| dg.chunks(16).map(|c| SinglesPacket::decode(c).unwrap())).collect();
        assert_eq!(back, ps);
    }

    #[test]
    fn bandwidth_accounting() {
        let mut up = Uplink::new(NullSink);
        for p in packets(820_000) {
            up.push(&p).unwrap();
        }
        let s = up.stats();
        assert!((s.megabytes_per_s(1.0) - 13.12).abs() < 1e-9);
        assert!((s.mbps(1.0) - 104.96).abs() < 1e-9);

        let mut up = Uplink::new(NullSink);
        let p = packets(1)[0];
        for _ in 0..4_000_000 {
            up.push(&p).unwrap();
        }
        assert!((up.stats().megabytes_per_s(1.0) - 64.0).abs() < 1e-9);
        assert!((up.stats().mbps(1.0) - 512.0).abs() < 1e-9);
    }

    #[test]
    fn capture_sink_writes_parseable_frames() {
        let mut up = Uplink::new(FrameCaptureSink::new(FrameConfig::default(), Vec::new()));
        for p in packets(200) {
            up.push(&p).unwrap();
        }
        let bytes = up.into_sink().unwrap().into_inner();
        let frames = frame::read_capture(&bytes[..]).unwrap();
        assert_eq!(frames.len(), 3);
        let total: usize =
            frames.iter().map(|f| frame::parse_frame(frame::strip_fcs(f).unwrap()).unwrap().payload.len()).sum();
        assert_eq!(total, 200 * 16);
    }
}
