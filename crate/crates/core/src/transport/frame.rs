//! Simplified UDP/IPv4/Ethernet-II framing.
//!
//! No options, no fragmentation, no ARP. Frames shorter than the Ethernet
//! minimum are zero-padded to 60 bytes; the parser uses the IPv4 total
//! length to strip the padding. The FCS is only present in capture files;
//! in live mode the OS network stack owns the link layer.

use std::io::{self, Read, Write};
use std::net::Ipv4Addr;

use thiserror::Error;

pub const ETH_HEADER_BYTES: usize = 14;
pub const IPV4_HEADER_BYTES: usize = 20;
pub const UDP_HEADER_BYTES: usize = 8;
pub const HEADERS_BYTES: usize = ETH_HEADER_BYTES + IPV4_HEADER_BYTES + UDP_HEADER_BYTES;
/// Largest UDP payload that fits a 1500-byte MTU without fragmentation.
pub const MAX_PAYLOAD: usize = 1500 - IPV4_HEADER_BYTES - UDP_HEADER_BYTES;
pub const MIN_FRAME_BYTES: usize = 60;
pub const FCS_BYTES: usize = 4;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const IP_PROTO_UDP: u8 = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacAddr(pub [u8; 6]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
    pub port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub ttl: u8,
    /// When false the UDP checksum field is sent as zero.
    pub udp_checksum: bool,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            src: Endpoint { mac: MacAddr([0x02, 0, 0, 0, 0, 0x10]), ip: Ipv4Addr::new(192, 168, 10, 16), port: 5000 },
            dst: Endpoint { mac: MacAddr([0x02, 0, 0, 0, 0, 0x01]), ip: Ipv4Addr::new(192, 168, 10, 1), port: 5000 },
            ttl: 64,
            udp_checksum: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLarge(usize),
    #[error("frame truncated: {0}")]
    Truncated(&'static str),
    #[error("ethertype 0x{0:04x} is not IPv4")]
    BadEthertype(u16),
    #[error("IP version/IHL byte 0x{0:02x} unsupported")]
    BadIpHeader(u8),
    #[error("IPv4 header checksum mismatch")]
    BadIpChecksum,
    #[error("IPv4 total length {0} inconsistent with frame")]
    BadTotalLength(u16),
    #[error("fragmented datagram")]
    Fragmented,
    #[error("IP protocol {0} is not UDP")]
    NotUdp(u8),
    #[error("UDP length {udp} inconsistent with IP payload {ip}")]
    UdpLengthMismatch { udp: u16, ip: u16 },
    #[error("UDP checksum mismatch")]
    BadUdpChecksum,
    #[error("frame check sequence mismatch")]
    BadFcs,
}

/// Ones'-complement sum folded to 16 bits, odd trailing byte zero-padded.
fn ones_complement_sum(mut acc: u32, bytes: &[u8]) -> u32 {
    let mut chunks = bytes.chunks_exact(2);
    for c in &mut chunks {
        acc += u16::from_be_bytes([c[0], c[1]]) as u32;
    }
    if let [last] = chunks.remainder() {
        acc += (*last as u32) << 8;
    }
    acc
}

fn fold(mut acc: u32) -> u16 {
    while acc > 0xFFFF {
        acc = (acc & 0xFFFF) + (acc >> 16);
    }
    acc as u16
}

/// Checksum of an IPv4 header whose checksum field is zero.
/// Summing a header with a valid checksum in place yields zero.
pub fn ipv4_checksum(header: &[u8]) -> u16 {
    !fold(ones_complement_sum(0, header))
}

/// UDP checksum over the pseudo-header and the whole segment, with the
/// segment's checksum field zeroed. A computed zero is sent as 0xFFFF.
pub fn udp_checksum(src: Ipv4Addr, dst: Ipv4Addr, segment: &[u8]) -> u16 {
    let mut acc = ones_complement_sum(0, &src.octets());
    acc = ones_complement_sum(acc, &dst.octets());
    acc += IP_PROTO_UDP as u32;
    acc += segment.len() as u32;
    acc = ones_complement_sum(acc, segment);
    match !fold(acc) {
        0 => 0xFFFF,
        c => c,
    }
}

const CRC32_TABLE: [u32; 256] = {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

/// Ethernet CRC-32 (reflected 0x04C11DB7, init and xorout 0xFFFFFFFF).
pub fn crc32(bytes: &[u8]) -> u32 {
    !bytes.iter().fold(!0u32, |c, &b| CRC32_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8))
}

/// Builds frames and numbers their IPv4 identification field.
#[derive(Debug, Clone)]
pub struct FrameBuilder {
    pub config: FrameConfig,
    next_ident: u16,
}

impl FrameBuilder {
    pub fn new(config: FrameConfig) -> Self {
        Self { config, next_ident: 0 }
    }

    pub fn build(&mut self, payload: &[u8]) -> Result<Vec<u8>, FrameError> {
        let frame = build_frame(payload, &self.config, self.next_ident)?;
        self.next_ident = self.next_ident.wrapping_add(1);
        Ok(frame)
    }
}

/// Ethernet-II + IPv4 + UDP around `payload`, without FCS.
pub fn build_frame(payload: &[u8], cfg: &FrameConfig, ident: u16) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(payload.len()));
    }
    let udp_len = (UDP_HEADER_BYTES + payload.len()) as u16;
    let total_len = IPV4_HEADER_BYTES as u16 + udp_len;
    let mut f = Vec::with_capacity((HEADERS_BYTES + payload.len()).max(MIN_FRAME_BYTES) + FCS_BYTES);

    f.extend_from_slice(&cfg.dst.mac.0);
    f.extend_from_slice(&cfg.src.mac.0);
    f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let ip = f.len();
    f.extend_from_slice(&[0x45, 0x00]);
    f.extend_from_slice(&total_len.to_be_bytes());
    f.extend_from_slice(&ident.to_be_bytes());
    f.extend_from_slice(&0x4000u16.to_be_bytes()); // DF, offset 0
    f.extend_from_slice(&[cfg.ttl, IP_PROTO_UDP, 0, 0]);
    f.extend_from_slice(&cfg.src.ip.octets());
    f.extend_from_slice(&cfg.dst.ip.octets());
    let csum = ipv4_checksum(&f[ip..ip + IPV4_HEADER_BYTES]);
    f[ip + 10..ip + 12].copy_from_slice(&csum.to_be_bytes());

    let udp = f.len();
    f.extend_from_slice(&cfg.src.port.to_be_bytes());
    f.extend_from_slice(&cfg.dst.port.to_be_bytes());
    f.extend_from_slice(&udp_len.to_be_bytes());
    f.extend_from_slice(&[0, 0]);
    f.extend_from_slice(payload);
    if cfg.udp_checksum {
        let csum = udp_checksum(cfg.src.ip, cfg.dst.ip, &f[udp..]);
        f[udp + 6..udp + 8].copy_from_slice(&csum.to_be_bytes());
    }

    if f.len() < MIN_FRAME_BYTES {
        f.resize(MIN_FRAME_BYTES, 0);
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedFrame<'a> {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub payload: &'a [u8],
}

/// Validates and strips the Ethernet, IPv4 and UDP layers (no FCS).
pub fn parse_frame(bytes: &[u8]) -> Result<ParsedFrame<'_>, FrameError> {
    if bytes.len() < HEADERS_BYTES {
        return Err(FrameError::Truncated("shorter than the fixed headers"));
    }
    let ethertype = u16::from_be_bytes([bytes[12], bytes[13]]);
    if ethertype != ETHERTYPE_IPV4 {
        return Err(FrameError::BadEthertype(ethertype));
    }
    let ip = &bytes[ETH_HEADER_BYTES..];
    if ip[0] != 0x45 {
        return Err(FrameError::BadIpHeader(ip[0]));
    }
    if fold(ones_complement_sum(0, &ip[..IPV4_HEADER_BYTES])) != 0xFFFF {
        return Err(FrameError::BadIpChecksum);
    }
    let total_len = u16::from_be_bytes([ip[2], ip[3]]);
    if (total_len as usize) < IPV4_HEADER_BYTES + UDP_HEADER_BYTES || total_len as usize > ip.len() {
        return Err(FrameError::BadTotalLength(total_len));
    }
    // Padding is only legal up to the Ethernet minimum.
    if ip.len() > total_len as usize && bytes.len() > MIN_FRAME_BYTES {
        return Err(FrameError::BadTotalLength(total_len));
    }
    let flags = u16::from_be_bytes([ip[6], ip[7]]);
    if flags & 0x3FFF != 0 {
        return Err(FrameError::Fragmented);
    }
    if ip[9] != IP_PROTO_UDP {
        return Err(FrameError::NotUdp(ip[9]));
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);

    let segment = &ip[IPV4_HEADER_BYTES..total_len as usize];
    let udp_len = u16::from_be_bytes([segment[4], segment[5]]);
    if udp_len as usize != segment.len() {
        return Err(FrameError::UdpLengthMismatch { udp: udp_len, ip: total_len });
    }
    let sent = u16::from_be_bytes([segment[6], segment[7]]);
    if sent != 0 {
        let mut acc = ones_complement_sum(0, &src_ip.octets());
        acc = ones_complement_sum(acc, &dst_ip.octets());
        acc += IP_PROTO_UDP as u32 + segment.len() as u32;
        acc = ones_complement_sum(acc, segment);
        if fold(acc) != 0xFFFF {
            return Err(FrameError::BadUdpChecksum);
        }
    }
    let mac = |o: usize| MacAddr(bytes[o..o + 6].try_into().unwrap());
    Ok(ParsedFrame {
        src: Endpoint { mac: mac(6), ip: src_ip, port: u16::from_be_bytes([segment[0], segment[1]]) },
        dst: Endpoint { mac: mac(0), ip: dst_ip, port: u16::from_be_bytes([segment[2], segment[3]]) },
        payload: &segment[UDP_HEADER_BYTES..],
    })
}

/// Appends the little-endian FCS as transmitted on the wire.
pub fn append_fcs(frame: &mut Vec<u8>) {
    let fcs = crc32(frame);
    frame.extend_from_slice(&fcs.to_le_bytes());
}

/// Verifies and removes a trailing FCS.
pub fn strip_fcs(frame: &[u8]) -> Result<&[u8], FrameError> {
    if frame.len() < FCS_BYTES {
        return Err(FrameError::Truncated("no room for FCS"));
    }
    let (body, fcs) = frame.split_at(frame.len() - FCS_BYTES);
    if crc32(body).to_le_bytes() != fcs {
        return Err(FrameError::BadFcs);
    }
    Ok(body)
}

/// Appends one frame (with FCS) to a capture stream as `u32 LE length + bytes`.
pub fn write_capture_frame<W: Write>(w: &mut W, frame_with_fcs: &[u8]) -> io::Result<()> {
    w.write_all(&(frame_with_fcs.len() as u32).to_le_bytes())?;
    w.write_all(frame_with_fcs)
}

/// Reads every length-prefixed frame of a capture stream.
pub fn read_capture<R: Read>(mut r: R) -> io::Result<Vec<Vec<u8>>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut frames = Vec::new();
    let mut rest = &buf[..];
    while !rest.is_empty() {
        if rest.len() < 4 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated length prefix"));
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated frame"));
        }
        frames.push(rest[..len].to_vec());
        rest = &rest[len..];
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_ipv4_header_checksum() {
        // Classic worked example header, checksum 0xb861.
        let h = [
            0x45, 0x00, 0x00, 0x73, 0x00, 0x00, 0x40, 0x00, 0x40, 0x11, 0x00, 0x00, 0xc0, 0xa8, 0x00, 0x01, 0xc0, 0xa8,
            0x00, 0xc7,
        ];
        assert_eq!(ipv4_checksum(&h), 0xb861);
    }

    #[test]
    fn crc32_check_value() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn short_payload_is_padded_and_recovered() {
        let cfg = FrameConfig::default();
        let f = build_frame(&[0xAB], &cfg, 0).unwrap();
        assert_eq!(f.len(), MIN_FRAME_BYTES);
        let p = parse_frame(&f).unwrap();
        assert_eq!(p.payload, &[0xAB]);
        assert_eq!(p.src, cfg.src);
        assert_eq!(p.dst, cfg.dst);
    }

    #[test]
    fn max_payload() {
        let cfg = FrameConfig::default();
        let f = build_frame(&[7u8; MAX_PAYLOAD], &cfg, 0).unwrap();
        assert_eq!(f.len(), 14 + 1500);
        assert_eq!(build_frame(&[0u8; MAX_PAYLOAD + 1], &cfg, 0), Err(FrameError::PayloadTooLarge(1473)));
    }

    #[test]
    fn checksum_disabled_is_zero_and_accepted() {
        let cfg = FrameConfig { udp_checksum: false, ..FrameConfig::default() };
        let f = build_frame(b"hello", &cfg, 3).unwrap();
        assert_eq!(&f[40..42], &[0, 0]);
        assert_eq!(parse_frame(&f).unwrap().payload, b"hello");
    }

    #[test]
    fn distinct_parse_errors() {
        let cfg = FrameConfig::default();
        let good = build_frame(&[1u8; 100], &cfg, 0).unwrap();

        assert!(matches!(parse_frame(&good[..30]), Err(FrameError::Truncated(_))));
        let mut f = good.clone();
        f[12] = 0x86;
        assert_eq!(parse_frame(&f), Err(FrameError::BadEthertype(0x8600)));
        let mut f = good.clone();
        f[14 + 8] ^= 1; // TTL
        assert_eq!(parse_frame(&f), Err(FrameError::BadIpChecksum));
        let mut f = good.clone();
        f[50] ^= 0xFF;
        assert_eq!(parse_frame(&f), Err(FrameError::BadUdpChecksum));
        // A UDP length that disagrees with the IP total length.
        let cfg_nock = FrameConfig { udp_checksum: false, ..cfg };
        let mut f = build_frame(&[1u8; 100], &cfg_nock, 0).unwrap();
        f[38..40].copy_from_slice(&50u16.to_be_bytes());
        assert!(matches!(parse_frame(&f), Err(FrameError::UdpLengthMismatch { udp: 50, .. })));
        assert!(matches!(parse_frame(&good[..good.len() - 1]), Err(FrameError::BadTotalLength(_))));
    }

    #[test]
    fn fcs_round_trip() {
        let mut f = build_frame(b"abc", &FrameConfig::default(), 0).unwrap();
        let plain = f.clone();
        append_fcs(&mut f);
        assert_eq!(strip_fcs(&f).unwrap(), &plain[..]);
        f[3] ^= 0x10;
        assert_eq!(strip_fcs(&f), Err(FrameError::BadFcs));
    }

    #[test]
    fn capture_file_round_trip() {
        let frames = vec![vec![1u8, 2, 3], vec![], vec![9u8; 70]];
        let mut buf = Vec::new();
        for f in &frames {
            write_capture_frame(&mut buf, f).unwrap();
        }
        assert_eq!(read_capture(&buf[..]).unwrap(), frames);
        assert!(read_capture(&buf[..buf.len() - 1]).is_err());
    }
}
