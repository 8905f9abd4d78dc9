//! Host-side receiver: decodes uplink datagrams, reassembles histogram
//! readouts, accumulates offline histograms with 64-bit counters and
//! exports PGM/CSV/JSON artifacts.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::event_model::{BlockAddress, CRYSTAL_COUNT, MODULE_COUNT, POSITION_SPAN};
use crate::histogram::{energy_addr, flood_addr, EnergyScale, ENERGY_BINS, ENERGY_BINS_PER_CRYSTAL, FLOOD_BINS};
use crate::pipeline::BLOCKS;
use crate::transport::command::{HistChunk, StatusReport, TYPE_HIST_CHUNK, TYPE_STATUS};
use crate::transport::packet::{PacketBody, SinglesPacket, PACKET_BYTES};

/// Counters for one (module, block) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BlockCounters {
    pub packets: u64,
    pub regular: u64,
    pub flood_raw: u64,
    pub energy_raw: u64,
    pub hist_chunks: u64,
    pub hist_readouts: u64,
    pub status_reports: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionStats {
    pub datagrams: u64,
    pub packets: u64,
    /// 16-byte slots that failed to decode.
    pub decode_errors: u64,
    /// Datagrams whose length is not a multiple of 16 (one per datagram).
    pub length_errors: u64,
    pub reply_errors: u64,
    /// Chunks arriving out of sequence; the partial readout is discarded.
    pub reassembly_errors: u64,
    /// Records of the wrong type offered to an offline histogram.
    pub skipped_records: u64,
    /// Indexed `[module][block]`.
    pub blocks: Vec<[BlockCounters; BLOCKS]>,
}

impl Default for SessionStats {
    fn default() -> Self {
        Self {
            datagrams: 0,
            packets: 0,
            decode_errors: 0,
            length_errors: 0,
            reply_errors: 0,
            reassembly_errors: 0,
            skipped_records: 0,
            blocks: vec![[BlockCounters::default(); BLOCKS]; MODULE_COUNT as usize],
        }
    }
}

impl SessionStats {
    pub fn block(&self, a: BlockAddress) -> &BlockCounters {
        &self.blocks[a.module_id() as usize][a.block_id() as usize]
    }

    fn block_mut(&mut self, a: BlockAddress) -> &mut BlockCounters {
        &mut self.blocks[a.module_id() as usize][a.block_id() as usize]
    }
}

/// Host-side flood map, unbounded counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfflineFlood {
    pub counts: Vec<u64>,
}

impl Default for OfflineFlood {
    fn default() -> Self {
        Self { counts: vec![0; FLOOD_BINS] }
    }
}

impl OfflineFlood {
    /// Returns false for non flood-raw packets.
    pub fn add(&mut self, p: &SinglesPacket) -> bool {
        match p.body {
            PacketBody::FloodRaw { pos } => {
                self.counts[flood_addr(pos) as usize] += 1;
                true
            }
            _ => false,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Host-side per-crystal spectra, unbounded counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfflineSpectra {
    pub scale: EnergyScale,
    pub counts: Vec<u64>,
}

impl OfflineSpectra {
    pub fn new(scale: EnergyScale) -> Self {
        Self { scale, counts: vec![0; ENERGY_BINS] }
    }

    /// Returns false for non energy-raw packets.
    pub fn add(&mut self, p: &SinglesPacket) -> bool {
        match p.body {
            PacketBody::EnergyRaw { crystal, raw_energy, .. } => {
                self.counts[energy_addr(crystal, raw_energy, self.scale) as usize] += 1;
                true
            }
            _ => false,
        }
    }

    pub fn crystal(&self, id: usize) -> &[u64] {
        &self.counts[id * ENERGY_BINS_PER_CRYSTAL..(id + 1) * ENERGY_BINS_PER_CRYSTAL]
    }

    /// Bin with the most counts for a crystal (lowest on ties).
    pub fn peak_bin(&self, id: usize) -> usize {
        let s = self.crystal(id);
        let max = s.iter().copied().max().unwrap_or(0);
        s.iter().position(|&c| c == max).unwrap_or(0)
    }
}

/// Flood map from flood-raw records; also returns the skipped count.
pub fn build_offline_flood(records: &[SinglesPacket]) -> (OfflineFlood, u64) {
    let mut f = OfflineFlood::default();
    let skipped = records.iter().filter(|p| !f.add(p)).count() as u64;
    (f, skipped)
}

/// Spectra from energy-raw records; also returns the skipped count.
pub fn build_offline_spectra(records: &[SinglesPacket], scale: EnergyScale) -> (OfflineSpectra, u64) {
    let mut s = OfflineSpectra::new(scale);
    let skipped = records.iter().filter(|p| !s.add(p)).count() as u64;
    (s, skipped)
}

/// A histogram readout reassembled from chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Readout {
    pub address: BlockAddress,
    pub bins: Vec<u16>,
}

#[derive(Debug, Default)]
struct Partial {
    next: u16,
    bins: Vec<u16>,
}

/// Everything decoded from one datagram.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ingested {
    pub packets: Vec<SinglesPacket>,
    pub readout: Option<Readout>,
    pub status: Option<StatusReport>,
}

#[derive(Debug, Default)]
pub struct DaqHost {
    stats: SessionStats,
    partial: HashMap<BlockAddress, Partial>,
}

impl DaqHost {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> &SessionStats {
        &self.stats
    }

    /// Counts records an offline accumulator refused.
    pub fn note_skipped(&mut self, n: u64) {
        self.stats.skipped_records += n;
    }

    /// Decodes one datagram; malformed content is counted, never fatal.
    pub fn ingest_datagram(&mut self, bytes: &[u8]) -> Ingested {
        self.stats.datagrams += 1;
        let mut out = Ingested::default();
        match bytes.first() {
            Some(&TYPE_HIST_CHUNK) => out.readout = self.ingest_chunk(bytes),
            Some(&TYPE_STATUS) => match StatusReport::decode(bytes) {
                Ok(r) => {
                    self.stats.block_mut(r.address).status_reports += 1;
                    out.status = Some(r);
                }
                Err(_) => self.stats.reply_errors += 1,
            },
            _ => {
                let chunks = bytes.chunks_exact(PACKET_BYTES);
                if !chunks.remainder().is_empty() {
                    self.stats.length_errors += 1;
                }
                for c in chunks {
                    match SinglesPacket::decode(c) {
                        Ok(p) => {
                            self.stats.packets += 1;
                            let b = self.stats.block_mut(p.address);
                            b.packets += 1;
                            match p.body {
                                PacketBody::Regular { .. } => b.regular += 1,
                                PacketBody::FloodRaw { .. } => b.flood_raw += 1,
                                PacketBody::EnergyRaw { .. } => b.energy_raw += 1,
                            }
                            out.packets.push(p);
                        }
                        Err(_) => self.stats.decode_errors += 1,
                    }
                }
            }
        }
        out
    }

    fn ingest_chunk(&mut self, bytes: &[u8]) -> Option<Readout> {
        let Ok(chunk) = HistChunk::decode(bytes) else {
            self.stats.reply_errors += 1;
            return None;
        };
        self.stats.block_mut(chunk.address).hist_chunks += 1;
        if chunk.chunk_index == 0 {
            self.partial.insert(chunk.address, Partial::default());
        }
        let Some(part) = self.partial.get_mut(&chunk.address) else {
            self.stats.reassembly_errors += 1;
            return None;
        };
        if part.next != chunk.chunk_index {
            self.partial.remove(&chunk.address);
            self.stats.reassembly_errors += 1;
            return None;
        }
        part.next += 1;
        part.bins.extend_from_slice(&chunk.bins);
        if !chunk.is_last() {
            return None;
        }
        let part = self.partial.remove(&chunk.address).expect("present");
        self.stats.block_mut(chunk.address).hist_readouts += 1;
        Some(Readout { address: chunk.address, bins: part.bins })
    }
}

#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct ExportError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

fn with_path<T>(path: &Path, r: io::Result<T>) -> Result<T, ExportError> {
    r.map_err(|source| ExportError { path: path.to_path_buf(), source })
}

/// Binary PGM of a 512×512 map. Samples are one byte when maxval < 256 and
/// two big-endian bytes otherwise. `maxval` defaults to the observed maximum
/// (at least 1); larger counts clamp. Online readouts pass the counter
/// ceiling, 1023.
pub fn write_pgm<W: Write>(mut w: W, counts: &[u64], maxval: Option<u16>) -> io::Result<()> {
    assert_eq!(counts.len(), FLOOD_BINS, "flood map must be 512x512");
    let maxval = match maxval {
        Some(m) => m.max(1) as u64,
        None => counts.iter().copied().max().unwrap_or(0).clamp(1, u16::MAX as u64),
    };
    write!(w, "P5\n{POSITION_SPAN} {POSITION_SPAN}\n{maxval}\n")?;
    let wide = maxval >= 256;
    let mut raster = Vec::with_capacity(counts.len() * if wide { 2 } else { 1 });
    for &c in counts {
        let v = c.min(maxval) as u16;
        if wide {
            raster.extend_from_slice(&v.to_be_bytes());
        } else {
            raster.push(v as u8);
        }
    }
    w.write_all(&raster)
}

/// `crystal_id,bin,count` rows for every crystal and bin.
pub fn write_spectra_csv<W: Write>(mut w: W, counts: &[u64]) -> io::Result<()> {
    assert_eq!(counts.len(), ENERGY_BINS, "spectra must be 529x256");
    writeln!(w, "crystal_id,bin,count")?;
    for crystal in 0..CRYSTAL_COUNT {
        for bin in 0..ENERGY_BINS_PER_CRYSTAL {
            writeln!(w, "{crystal},{bin},{}", counts[crystal * ENERGY_BINS_PER_CRYSTAL + bin])?;
        }
    }
    Ok(())
}

pub fn export_flood(path: &Path, counts: &[u64], maxval: Option<u16>) -> Result<(), ExportError> {
    let f = with_path(path, File::create(path))?;
    let mut w = BufWriter::new(f);
    with_path(path, write_pgm(&mut w, counts, maxval))?;
    with_path(path, w.flush())
}

pub fn export_spectra(path: &Path, counts: &[u64]) -> Result<(), ExportError> {
    let f = with_path(path, File::create(path))?;
    let mut w = BufWriter::new(f);
    with_path(path, write_spectra_csv(&mut w, counts))?;
    with_path(path, w.flush())
}

pub fn export_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExportError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    with_path(path, std::fs::write(path, text + "\n"))
}

/// Widens a 10-bit online readout for export.
pub fn widen(bins: &[u16]) -> Vec<u64> {
    bins.iter().map(|&b| b as u64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::{CrystalId, Doi, RawPosition};
    use crate::transport::command::hist_chunks;

    fn addr(m: u8, b: u8) -> BlockAddress {
        BlockAddress::new(m, b).unwrap()
    }

    fn regular(t: u64) -> SinglesPacket {
        SinglesPacket {
            address: addr(2, 1),
            body: PacketBody::Regular {
                crystal: CrystalId::new(5).unwrap(),
                doi: Doi::new(1).unwrap(),
                energy_kev: 511,
            },
            time_ps: t,
        }
    }

    fn flood(x: u16, y: u16) -> SinglesPacket {
        SinglesPacket {
            address: addr(0, 0),
            body: PacketBody::FloodRaw { pos: RawPosition::new(x, y).unwrap() },
            time_ps: 0,
        }
    }

    #[test]
    fn three_packets_no_errors() {
        let mut h = DaqHost::new();
        let dg: Vec<u8> = (0..3).flat_map(|t| regular(t).encode()).collect();
        let got = h.ingest_datagram(&dg);
        assert_eq!(got.packets.len(), 3);
        assert_eq!(h.stats().decode_errors + h.stats().length_errors, 0);
        assert_eq!(h.stats().block(addr(2, 1)).regular, 3);
    }

    #[test]
    fn seventeen_bytes_is_one_record_one_length_error() {
        let mut h = DaqHost::new();
        let mut dg = regular(0).encode().to_vec();
        dg.push(0);
        assert_eq!(h.ingest_datagram(&dg).packets.len(), 1);
        assert_eq!(h.stats().length_errors, 1);
    }

    #[test]
    fn corrupt_packets_counted() {
        let mut h = DaqHost::new();
        let mut dg: Vec<u8> = (0..2).flat_map(|t| regular(t).encode()).collect();
        dg[15] = 0xFF;
        assert_eq!(h.ingest_datagram(&dg).packets.len(), 1);
        assert_eq!(h.stats().decode_errors, 1);
    }

    #[test]
    fn chunk_reassembly() {
        let bins: Vec<u16> = (0..FLOOD_BINS).map(|i| (i % 1024) as u16).collect();
        let mut h = DaqHost::new();
        let mut done = None;
        for c in hist_chunks(addr(3, 2), &bins) {
            if let Some(r) = h.ingest_datagram(&c.encode()).readout {
                done = Some(r);
            }
        }
        let r = done.unwrap();
        assert_eq!(r.bins, bins);
        assert_eq!(h.stats().block(addr(3, 2)).hist_readouts, 1);

        // A missing chunk spoils the readout.
        let chunks = hist_chunks(addr(3, 2), &bins);
        for (i, c) in chunks.iter().enumerate() {
            if i != 5 {
                assert!(h.ingest_datagram(&c.encode()).readout.is_none());
            }
        }
        assert!(h.stats().reassembly_errors >= 1);
    }

    #[test]
    fn offline_flood_has_no_ceiling() {
        let recs = vec![flood(10, 20); 2000];
        let (f, skipped) = build_offline_flood(&recs);
        assert_eq!(f.counts[20 * 512 + 10], 2000);
        assert_eq!(skipped, 0);
        let (empty, _) = build_offline_flood(&[]);
        assert_eq!(empty.total(), 0);
        let (_, skipped) = build_offline_flood(&[regular(0)]);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn offline_spectra_bins() {
        let p = SinglesPacket {
            address: addr(0, 0),
            body: PacketBody::EnergyRaw {
                crystal: CrystalId::new(76).unwrap(),
                doi: Doi::new(0).unwrap(),
                raw_energy: 1800,
            },
            time_ps: 0,
        };
        let (s, _) = build_offline_spectra(&[p, p], EnergyScale::default());
        assert_eq!(s.crystal(76)[1800 >> 4], 2);
        assert_eq!(s.peak_bin(76), 112);
    }

    #[test]
    fn pgm_headers() {
        let mut out = Vec::new();
        write_pgm(&mut out, &vec![0; FLOOD_BINS], None).unwrap();
        assert!(out.starts_with(b"P5\n512 512\n1\n"));
        assert_eq!(out.len(), 13 + FLOOD_BINS);
        assert!(out[13..].iter().all(|&b| b == 0));

        let mut sat = vec![0u64; FLOOD_BINS];
        sat[7] = 1023;
        let mut out = Vec::new();
        write_pgm(&mut out, &sat, None).unwrap();
        let header = b"P5\n512 512\n1023\n";
        assert!(out.starts_with(header));
        assert_eq!(out.len(), header.len() + 2 * FLOOD_BINS);
        assert_eq!(&out[header.len() + 14..header.len() + 16], &[0x03, 0xFF]);

        // A sparse online readout still uses the counter ceiling.
        sat[7] = 3;
        let mut fixed = Vec::new();
        write_pgm(&mut fixed, &sat, Some(1023)).unwrap();
        assert!(fixed.starts_with(header));
        assert_eq!(fixed.len(), header.len() + 2 * FLOOD_BINS);
    }

    #[test]
    fn csv_row_count() {
        let mut out = Vec::new();
        write_spectra_csv(&mut out, &vec![0; ENERGY_BINS]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 135_424);
        assert_eq!(text.lines().nth(1), Some("0,0,0"));
        assert_eq!(text.lines().last(), Some("528,255,0"));
    }

    #[test]
    fn export_error_names_path() {
        let e = export_flood(Path::new("/nonexistent-dir/x.pgm"), &vec![0; FLOOD_BINS], None).unwrap_err();
        assert!(e.to_string().starts_with("/nonexistent-dir/x.pgm: "));
    }
}
