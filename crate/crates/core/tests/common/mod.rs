//! Reference implementations written independently of the crate.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn round_half_up(v: BigRational) -> u64 {
    (v + ratio(1, 2)).floor().to_integer().to_u64().unwrap()
}

/// (x, y, doi) from the eight integrals in exact rational arithmetic.
pub fn position_oracle(ch: [u16; 8]) -> (u64, u64, u64) {
    let [a1, b1, c1, d1, a2, b2, c2, d2] = ch.map(u64::from);
    let s1 = a1 + b1 + c1 + d1;
    let s2 = a2 + b2 + c2 + d2;
    let half = ratio(1, 2);
    let xf = half.clone() * (ratio(a1 + d1, s1) + ratio(a2 + d2, s2));
    let yf = half * (ratio(a1 + b1, s1) + ratio(c2 + d2, s2));
    let df = ratio(s1, s1 + s2);
    let scale = |v: BigRational, m: u64| round_half_up(v * BigRational::from_integer(BigInt::from(m)));
    (scale(xf, 511), scale(yf, 511), scale(df, 15))
}

/// round_half_up(raw × 511 / peak) in exact arithmetic.
pub fn energy_oracle(raw: u32, peak: u16) -> u64 {
    round_half_up(ratio(raw as u64 * 511, peak as u64))
}

/// Ones'-complement checksum: 16-bit big-endian words, end-around carry
/// applied after every addition.
pub fn ones_complement_oracle(bytes: &[u8]) -> u16 {
    let mut sum: u16 = 0;
    for i in (0..bytes.len()).step_by(2) {
        let hi = bytes[i] as u16;
        let lo = if i + 1 < bytes.len() { bytes[i + 1] as u16 } else { 0 };
        let (s, carry) = sum.overflowing_add(hi << 8 | lo);
        sum = s + carry as u16;
    }
    !sum
}

pub fn udp_oracle(src: [u8; 4], dst: [u8; 4], segment: &[u8]) -> u16 {
    let mut pseudo = Vec::new();
    pseudo.extend_from_slice(&src);
    pseudo.extend_from_slice(&dst);
    pseudo.push(0);
    pseudo.push(17);
    pseudo.extend_from_slice(&(segment.len() as u16).to_be_bytes());
    pseudo.extend_from_slice(segment);
    match ones_complement_oracle(&pseudo) {
        0 => 0xFFFF,
        c => c,
    }
}

/// Bit-at-a-time reflected CRC-32.
pub fn crc32_oracle(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        for bit in 0..8 {
            let input = (b >> bit) & 1;
            let top = (crc & 1) as u8;
            crc >>= 1;
            if top ^ input == 1 {
                crc ^= 0xEDB8_8320;
            }
        }
    }
    !crc
}

/// Regular packet packed field by field from the documented layout.
pub fn regular_packet_oracle(module: u8, block: u8, crystal: u16, doi: u8, energy: u16, time: u64) -> [u8; 16] {
    let mut p = [0u8; 16];
    p[0] = 0x01;
    p[1] = (module << 4) | (block << 2);
    p[2] = (crystal >> 8) as u8;
    p[3] = crystal as u8;
    p[4] = doi << 4;
    p[5] = (energy >> 8) as u8;
    p[6] = energy as u8;
    for i in 0..8 {
        p[7 + i] = (time >> (56 - 8 * i)) as u8;
    }
    p
}
