//! Per-block event dataflow, mode dispatch, block FIFOs and the token-ring
//! readout arbiter.

use std::collections::VecDeque;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corrections::{correct_energy, correct_time, pass_window, sum_energy, EnergyWindow, PeakLut, TimeOffsetLut};
use crate::crystal_lut::{boundary_lookup, BoundaryClt, CltError};
use crate::error::DomainError;
use crate::event_model::{BlockAddress, RawEvent, SinglesRecord, BLOCKS_PER_MODULE};
use crate::histogram::{energy_addr, flood_addr, Accumulate, BlockHistogram, EnergyScale, HistError, HistMode};
use crate::positioning::{compute_position_with, YPairing};
use crate::transport::command::{receive_downlink, Command, CommandPacket, StatusReport};
use crate::transport::packet::{PacketBody, SinglesPacket};
use crate::transport::uplink::{DatagramSink, Uplink};

pub const BLOCKS: usize = BLOCKS_PER_MODULE as usize;
pub const FIFO_DEPTH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    RegularPackage,
    FloodOnline,
    FloodOffline,
    EnergyOnline,
    EnergyOffline,
}

impl Mode {
    pub const ALL: [Mode; 5] =
        [Mode::RegularPackage, Mode::FloodOnline, Mode::FloodOffline, Mode::EnergyOnline, Mode::EnergyOffline];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// The histogram session this mode accumulates into, if online.
    pub fn hist_mode(self) -> Option<HistMode> {
        match self {
            Mode::FloodOnline => Some(HistMode::Flood),
            Mode::EnergyOnline => Some(HistMode::EnergySpectrum),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::RegularPackage => "regular",
            Mode::FloodOnline => "flood-online",
            Mode::FloodOffline => "flood-offline",
            Mode::EnergyOnline => "energy-online",
            Mode::EnergyOffline => "energy-offline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?}; expected one of regular, flood-online, flood-offline, energy-online, energy-offline"))
    }
}

/// What happened to one ingested event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disposition {
    Packaged,
    WindowRejected,
    Histogrammed,
    HistTerminated,
    /// Online mode but no histogram session open for the block.
    HistInactive,
    ZeroSumRejected,
    ClockUnderflow,
    FifoDropped,
}

/// Per-block counters; every ingested event lands in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStats {
    pub ingested: u64,
    pub packaged: u64,
    pub window_rejected: u64,
    pub zero_sum: u64,
    pub underflow: u64,
    pub dropped: u64,
    pub histogrammed: u64,
    pub hist_terminated: u64,
    pub hist_inactive: u64,
}

impl BlockStats {
    pub const FIELDS: [&'static str; 9] = [
        "ingested",
        "packaged",
        "window_rejected",
        "zero_sum",
        "underflow",
        "dropped",
        "histogrammed",
        "hist_terminated",
        "hist_inactive",
    ];

    pub fn to_array(&self) -> [u64; 9] {
        [
            self.ingested,
            self.packaged,
            self.window_rejected,
            self.zero_sum,
            self.underflow,
            self.dropped,
            self.histogrammed,
            self.hist_terminated,
            self.hist_inactive,
        ]
    }

    pub fn from_slice(v: &[u64]) -> Self {
        Self {
            ingested: v[0],
            packaged: v[1],
            window_rejected: v[2],
            zero_sum: v[3],
            underflow: v[4],
            dropped: v[5],
            histogrammed: v[6],
            hist_terminated: v[7],
            hist_inactive: v[8],
        }
    }

    fn record(&mut self, d: Disposition) {
        self.ingested += 1;
        let slot = match d {
            Disposition::Packaged => &mut self.packaged,
            Disposition::WindowRejected => &mut self.window_rejected,
            Disposition::Histogrammed => &mut self.histogrammed,
            Disposition::HistTerminated => &mut self.hist_terminated,
            Disposition::HistInactive => &mut self.hist_inactive,
            Disposition::ZeroSumRejected => &mut self.zero_sum,
            Disposition::ClockUnderflow => &mut self.underflow,
            Disposition::FifoDropped => &mut self.dropped,
        };
        *slot += 1;
    }

    /// Sum of all disposition buckets.
    pub fn dispositions(&self) -> u64 {
        self.to_array()[1..].iter().sum()
    }

    pub fn merge(&mut self, other: &BlockStats) {
        let mut a = self.to_array();
        for (x, y) in a.iter_mut().zip(other.to_array()) {
            *x += y;
        }
        *self = Self::from_slice(&a);
    }
}

/// Bounded packet queue; drops the newest packet when full.
#[derive(Debug, Clone, Default)]
pub struct BlockFifo {
    queue: VecDeque<SinglesPacket>,
    drop_count: u64,
}

impl BlockFifo {
    pub fn new() -> Self {
        Self { queue: VecDeque::with_capacity(FIFO_DEPTH), drop_count: 0 }
    }

    /// Returns false if the packet was dropped.
    #[inline]
    pub fn push(&mut self, p: SinglesPacket) -> bool {
        if self.queue.len() >= FIFO_DEPTH {
            self.drop_count += 1;
            return false;
        }
        self.queue.push_back(p);
        true
    }

    #[inline]
    pub fn pop(&mut self) -> Option<SinglesPacket> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn drop_count(&self) -> u64 {
        self.drop_count
    }
}

/// Rotating-priority grant over the four block FIFOs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenRing {
    token: u8,
}

impl TokenRing {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_token(token: u8) -> Self {
        Self { token: token % BLOCKS as u8 }
    }

    pub fn token(&self) -> u8 {
        self.token
    }

    /// Grants one packet to the first non-empty FIFO at or after the token,
    /// then moves the token past the serviced block.
    #[inline]
    pub fn arbitrate(&mut self, fifos: &mut [&mut BlockFifo; BLOCKS]) -> Option<(u8, SinglesPacket)> {
        for step in 0..BLOCKS {
            let b = (self.token as usize + step) % BLOCKS;
            if let Some(p) = fifos[b].pop() {
                self.token = ((b + 1) % BLOCKS) as u8;
                return Some((b as u8, p));
            }
        }
        None
    }
}

/// LUTs loaded for one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLuts {
    pub clt: BoundaryClt,
    pub peaks: PeakLut,
    pub times: TimeOffsetLut,
}

impl BlockLuts {
    /// Uniform CLT, every photopeak at `peak`, no time offsets.
    pub fn uniform(peak: u16) -> Result<Self, DomainError> {
        Ok(Self { clt: BoundaryClt::uniform_grid(), peaks: PeakLut::uniform(peak)?, times: TimeOffsetLut::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpuConfig {
    pub module_id: u8,
    pub mode: Mode,
    pub window: EnergyWindow,
    pub energy_scale: EnergyScale,
    pub y_pairing: YPairing,
    pub blocks: [BlockLuts; BLOCKS],
}

impl SpuConfig {
    pub fn new(module_id: u8, blocks: [BlockLuts; BLOCKS]) -> Result<Self, DomainError> {
        BlockAddress::new(module_id, 0)?;
        Ok(Self {
            module_id,
            mode: Mode::default(),
            window: EnergyWindow::default(),
            energy_scale: EnergyScale::default(),
            y_pairing: YPairing::default(),
            blocks,
        })
    }
}

/// The dataflow of one detector block.
#[derive(Debug, Clone)]
pub struct BlockProcessor {
    block_id: u8,
    fifo: BlockFifo,
    histogram: BlockHistogram,
    stats: BlockStats,
}

impl BlockProcessor {
    pub fn new(block_id: u8) -> Self {
        Self { block_id, fifo: BlockFifo::new(), histogram: BlockHistogram::new(), stats: BlockStats::default() }
    }

    pub fn block_id(&self) -> u8 {
        self.block_id
    }

    pub fn fifo(&self) -> &BlockFifo {
        &self.fifo
    }

    pub fn fifo_mut(&mut self) -> &mut BlockFifo {
        &mut self.fifo
    }

    pub fn histogram(&self) -> &BlockHistogram {
        &self.histogram
    }

    pub fn histogram_mut(&mut self) -> &mut BlockHistogram {
        &mut self.histogram
    }

    pub fn stats(&self) -> &BlockStats {
        &self.stats
    }

    #[inline]
    fn enqueue(&mut self, p: SinglesPacket) -> Disposition {
        if self.fifo.push(p) {
            Disposition::Packaged
        } else {
            Disposition::FifoDropped
        }
    }

    #[inline]
    fn accumulate(&mut self, addr: u32) -> Disposition {
        match self.histogram.accumulate(addr) {
            Ok(Accumulate::Accepted) => Disposition::Histogrammed,
            Ok(Accumulate::Terminated) => Disposition::HistTerminated,
            Err(HistError::NotActive) => Disposition::HistInactive,
            // The mode/address pairing is fixed by the dispatch below; a
            // session started in the other mode is treated as inactive.
            Err(HistError::AddressError { .. }) | Err(HistError::AlreadyActive) => Disposition::HistInactive,
        }
    }

    /// Runs one event through the block and records its disposition.
    #[inline]
    pub fn process(&mut self, ev: &RawEvent, cfg: &SpuConfig) -> Disposition {
        let d = self.dispatch(ev, cfg);
        self.stats.record(d);
        d
    }

    #[inline]
    fn dispatch(&mut self, ev: &RawEvent, cfg: &SpuConfig) -> Disposition {
        let Ok(p) = compute_position_with(&ev.integrals, cfg.y_pairing) else {
            return Disposition::ZeroSumRejected;
        };
        let luts = &cfg.blocks[self.block_id as usize];
        match cfg.mode {
            Mode::RegularPackage => {
                let crystal = boundary_lookup(&luts.clt, p.pos);
                let Ok(time_ps) = correct_time(ev.tdc_time, crystal, &luts.times) else {
                    return Disposition::ClockUnderflow;
                };
                let energy_kev = correct_energy(sum_energy(&ev.integrals), crystal, &luts.peaks);
                if !pass_window(energy_kev, &cfg.window) {
                    return Disposition::WindowRejected;
                }
                let rec = SinglesRecord { address: ev.address, crystal, doi: p.doi, energy_kev, time_ps };
                self.enqueue(rec.into())
            }
            Mode::FloodOnline => {
                if self.histogram.mode() != HistMode::Flood {
                    return Disposition::HistInactive;
                }
                self.accumulate(flood_addr(p.pos))
            }
            Mode::EnergyOnline => {
                if self.histogram.mode() != HistMode::EnergySpectrum {
                    return Disposition::HistInactive;
                }
                let crystal = boundary_lookup(&luts.clt, p.pos);
                self.accumulate(energy_addr(crystal, sum_energy(&ev.integrals), cfg.energy_scale))
            }
            Mode::FloodOffline => self.enqueue(SinglesPacket {
                address: ev.address,
                body: PacketBody::FloodRaw { pos: p.pos },
                time_ps: ev.tdc_time,
            }),
            Mode::EnergyOffline => {
                let crystal = boundary_lookup(&luts.clt, p.pos);
                self.enqueue(SinglesPacket {
                    address: ev.address,
                    body: PacketBody::EnergyRaw { crystal, doi: p.doi, raw_energy: sum_energy(&ev.integrals) },
                    time_ps: ev.tdc_time,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("command addressed to module {0}")]
    WrongModule(u8),
    #[error("histogram: {0}")]
    Hist(#[from] HistError),
    #[error("HIST_START needs an online mode, current mode is {0}")]
    NotOnline(Mode),
    #[error("clt: {0}")]
    Clt(#[from] CltError),
    #[error("{0}")]
    Domain(#[from] DomainError),
}

/// Data a command sends back to the host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Histogram { address: BlockAddress, bins: Vec<u16> },
    Status(StatusReport),
}

/// One SPU: four block pipelines behind a token-ring arbiter.
#[derive(Debug, Clone)]
pub struct Spu {
    config: Arc<SpuConfig>,
    blocks: [BlockProcessor; BLOCKS],
    ring: TokenRing,
    naks: u64,
}

impl Spu {
    pub fn new(config: SpuConfig) -> Self {
        Self {
            config: Arc::new(config),
            blocks: std::array::from_fn(|b| BlockProcessor::new(b as u8)),
            ring: TokenRing::new(),
            naks: 0,
        }
    }

    pub fn config(&self) -> &Arc<SpuConfig> {
        &self.config
    }

    /// Replaces the whole configuration between events.
    pub fn swap_config(&mut self, config: SpuConfig) {
        self.config = Arc::new(config);
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        Arc::make_mut(&mut self.config).mode = mode;
    }

    pub fn address(&self, block: u8) -> BlockAddress {
        BlockAddress::new(self.config.module_id, block).expect("config module id validated")
    }

    pub fn block(&self, block: u8) -> &BlockProcessor {
        &self.blocks[block as usize]
    }

    pub fn blocks_mut(&mut self) -> &mut [BlockProcessor; BLOCKS] {
        &mut self.blocks
    }

    pub fn naks(&self) -> u64 {
        self.naks
    }

    pub fn token(&self) -> u8 {
        self.ring.token()
    }

    pub fn total_stats(&self) -> BlockStats {
        let mut s = BlockStats::default();
        for b in &self.blocks {
            s.merge(&b.stats);
        }
        s
    }

    /// Histogram RAM buffers held per block.
    pub fn histogram_buffers(&self) -> [usize; BLOCKS] {
        std::array::from_fn(|b| self.blocks[b].histogram.ram_account().buffers)
    }

    #[inline]
    pub fn process_event(&mut self, ev: &RawEvent) -> Disposition {
        let b = ev.address.block_id() as usize;
        self.blocks[b].process(ev, &self.config)
    }

    /// One arbitration step across the four FIFOs.
    #[inline]
    pub fn arbitrate(&mut self) -> Option<(u8, SinglesPacket)> {
        let [b0, b1, b2, b3] = &mut self.blocks;
        self.ring.arbitrate(&mut [&mut b0.fifo, &mut b1.fifo, &mut b2.fifo, &mut b3.fifo])
    }

    /// Moves up to `grants` packets to the uplink; returns how many moved.
    pub fn pump<S: DatagramSink>(&mut self, uplink: &mut Uplink<S>, grants: usize) -> io::Result<usize> {
        let mut moved = 0;
        while moved < grants {
            let Some((_, p)) = self.arbitrate() else { break };
            uplink.push(&p)?;
            moved += 1;
        }
        Ok(moved)
    }

    /// Empties every FIFO into the uplink and flushes it.
    pub fn drain<S: DatagramSink>(&mut self, uplink: &mut Uplink<S>) -> io::Result<usize> {
        let n = self.pump(uplink, usize::MAX)?;
        uplink.flush()?;
        Ok(n)
    }

    /// Processes a batch of events, granting one FIFO read per event, then drains.
    pub fn run<S: DatagramSink>(&mut self, events: &[RawEvent], uplink: &mut Uplink<S>) -> io::Result<()> {
        for ev in events {
            self.process_event(ev);
            self.pump(uplink, 1)?;
        }
        self.drain(uplink).map(|_| ())
    }

    /// Opens a histogram session on every block in the current online mode.
    pub fn start_histograms(&mut self) -> Result<(), ApplyError> {
        for b in 0..BLOCKS as u8 {
            self.hist_start(b)?;
        }
        Ok(())
    }

    fn hist_start(&mut self, block: u8) -> Result<(), ApplyError> {
        let mode = self.config.mode.hist_mode().ok_or(ApplyError::NotOnline(self.config.mode))?;
        self.blocks[block as usize].histogram.start(mode)?;
        Ok(())
    }

    pub fn status(&self, block: u8) -> StatusReport {
        let b = &self.blocks[block as usize];
        StatusReport {
            address: self.address(block),
            mode: self.config.mode,
            hist_active: b.histogram.is_active(),
            hist_full: b.histogram.is_full(),
            stats: b.stats,
            naks: self.naks,
        }
    }

    /// Applies one command. Commands for another module are rejected.
    pub fn apply_command(&mut self, cmd: &CommandPacket) -> Result<Option<Reply>, ApplyError> {
        if cmd.address.module_id() != self.config.module_id {
            return Err(ApplyError::WrongModule(cmd.address.module_id()));
        }
        let block = cmd.address.block_id();
        match &cmd.command {
            Command::SetMode(m) => self.set_mode(*m),
            Command::SetEnergyWindow(w) => Arc::make_mut(&mut self.config).window = *w,
            Command::LoadBoundaryCltLine { direction, line, boundaries } => {
                Arc::make_mut(&mut self.config).blocks[block as usize].clt.set_line(*direction, *line, *boundaries)?
            }
            Command::LoadPeakEntry { crystal, peak } => {
                Arc::make_mut(&mut self.config).blocks[block as usize].peaks.set(*crystal, *peak)?
            }
            Command::LoadTimeEntry { crystal, offset } => {
                Arc::make_mut(&mut self.config).blocks[block as usize].times.set(*crystal, *offset)
            }
            Command::HistStart => self.hist_start(block)?,
            Command::HistReset => self.blocks[block as usize].histogram.reset(),
            Command::HistRead => {
                return Ok(Some(Reply::Histogram {
                    address: cmd.address,
                    bins: self.blocks[block as usize].histogram.read().to_vec(),
                }))
            }
            Command::Status => return Ok(Some(Reply::Status(self.status(block)))),
        }
        Ok(None)
    }

    /// Parses and applies one downlink datagram, sending any replies on the
    /// uplink. Malformed or failing commands count as NAKs.
    pub fn handle_downlink<S: DatagramSink>(&mut self, datagram: &[u8], uplink: &mut Uplink<S>) -> io::Result<()> {
        let batch = receive_downlink(datagram);
        if batch.error.is_some() {
            self.naks += 1;
        }
        for cmd in &batch.commands {
            match self.apply_command(cmd) {
                Ok(None) => {}
                Ok(Some(Reply::Histogram { address, bins })) => uplink.send_histogram(address, &bins)?,
                Ok(Some(Reply::Status(report))) => uplink.send_status(&report)?,
                Err(_) => self.naks += 1,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::{ChannelIntegrals, CrystalId, Doi};
    use crate::transport::command::encode_commands;

    fn spu() -> Spu {
        let luts = BlockLuts::uniform(2000).unwrap();
        Spu::new(SpuConfig::new(0, std::array::from_fn(|_| luts.clone())).unwrap())
    }

    fn event(block: u8, integrals: [u16; 8], time: u64) -> RawEvent {
        RawEvent {
            address: BlockAddress::new(0, block).unwrap(),
            integrals: ChannelIntegrals::new(integrals),
            tdc_time: time,
        }
    }

    fn packet(block: u8, t: u64) -> SinglesPacket {
        SinglesPacket {
            address: BlockAddress::new(0, block).unwrap(),
            body: PacketBody::Regular { crystal: CrystalId::new(0).unwrap(), doi: Doi::new(0).unwrap(), energy_kev: 0 },
            time_ps: t,
        }
    }

    #[test]
    fn regular_photopeak_event_is_packaged_at_511() {
        let mut s = spu();
        assert_eq!(s.process_event(&event(1, [250; 8], 5000)), Disposition::Packaged);
        let (b, p) = s.arbitrate().unwrap();
        assert_eq!(b, 1);
        let rec = p.to_record().unwrap();
        assert_eq!(rec.energy_kev, 511);
        assert_eq!(rec.crystal.get(), 264);
        assert_eq!(rec.time_ps, 5000);
    }

    #[test]
    fn rejections() {
        let mut s = spu();
        assert_eq!(s.process_event(&event(0, [250, 250, 250, 250, 0, 0, 0, 0], 1)), Disposition::ZeroSumRejected);
        assert_eq!(s.process_event(&event(0, [10; 8], 1)), Disposition::WindowRejected);
        let mut cfg = (**s.config()).clone();
        cfg.blocks[0].times.set(CrystalId::new(264).unwrap(), -100);
        s.swap_config(cfg);
        assert_eq!(s.process_event(&event(0, [250; 8], 50)), Disposition::ClockUnderflow);
        let st = s.block(0).stats();
        assert_eq!((st.zero_sum, st.window_rejected, st.underflow, st.ingested), (1, 1, 1, 3));
        assert_eq!(st.dispositions(), st.ingested);
    }

    #[test]
    fn flood_online_terminates_on_1024th() {
        let mut s = spu();
        s.set_mode(Mode::FloodOnline);
        s.start_histograms().unwrap();
        let ev = event(2, [250; 8], 1);
        for _ in 0..1023 {
            assert_eq!(s.process_event(&ev), Disposition::Histogrammed);
        }
        assert_eq!(s.process_event(&ev), Disposition::HistTerminated);
        assert!(s.block(2).histogram().is_full());
        assert_eq!(s.process_event(&ev), Disposition::HistInactive);
        assert_eq!(s.block(2).histogram().read()[256 * 512 + 256], 1023);
    }

    #[test]
    fn offline_modes_emit_raw_packets() {
        let mut s = spu();
        s.set_mode(Mode::FloodOffline);
        s.process_event(&event(0, [250; 8], 9));
        let (_, p) = s.arbitrate().unwrap();
        assert!(matches!(p.body, PacketBody::FloodRaw { pos } if pos.x() == 256 && pos.y() == 256));
        s.set_mode(Mode::EnergyOffline);
        s.process_event(&event(0, [250; 8], 9));
        let (_, p) = s.arbitrate().unwrap();
        assert!(matches!(p.body, PacketBody::EnergyRaw { raw_energy: 2000, .. }));
    }

    #[test]
    fn token_ring_examples() {
        let mut fifos: [BlockFifo; 4] = Default::default();
        fifos[2].push(packet(2, 0));
        let mut ring = TokenRing::new();
        let [a, b, c, d] = &mut fifos;
        let (blk, _) = ring.arbitrate(&mut [a, b, c, d]).unwrap();
        assert_eq!((blk, ring.token()), (2, 3));
        let [a, b, c, d] = &mut fifos;
        assert!(ring.arbitrate(&mut [a, b, c, d]).is_none());
        assert_eq!(ring.token(), 3);

        for (i, f) in fifos.iter_mut().enumerate() {
            f.push(packet(i as u8, 0));
        }
        let mut ring = TokenRing::new();
        let order: Vec<u8> = (0..4)
            .map(|_| {
                let [a, b, c, d] = &mut fifos;
                ring.arbitrate(&mut [a, b, c, d]).unwrap().0
            })
            .collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn fifo_drops_newest() {
        let mut f = BlockFifo::new();
        for t in 0..600 {
            f.push(packet(0, t));
        }
        assert_eq!(f.len(), FIFO_DEPTH);
        assert_eq!(f.drop_count(), 88);
        assert_eq!(f.pop().unwrap().time_ps, 0);
    }

    #[test]
    fn downlink_configures_and_replies() {
        let mut s = spu();
        let a = BlockAddress::new(0, 1).unwrap();
        let cmds = vec![
            CommandPacket::new(a, Command::SetMode(Mode::EnergyOnline)),
            CommandPacket::new(a, Command::LoadPeakEntry { crystal: CrystalId::new(3).unwrap(), peak: 1234 }),
            CommandPacket::new(a, Command::HistStart),
        ];
        let mut up = Uplink::new(Vec::new());
        s.handle_downlink(&encode_commands(&cmds), &mut up).unwrap();
        assert_eq!(s.mode(), Mode::EnergyOnline);
        assert_eq!(s.config().blocks[1].peaks.peak(CrystalId::new(3).unwrap()), 1234);
        assert!(s.block(1).histogram().is_active());
        assert_eq!(s.naks(), 0);

        s.process_event(&event(1, [250; 8], 0));
        let read = encode_commands(&[CommandPacket::new(a, Command::HistRead), CommandPacket::new(a, Command::Status)]);
        s.handle_downlink(&read, &mut up).unwrap();
        let dgs = up.into_sink().unwrap();
        let bins: Vec<u16> = dgs
            .iter()
            .filter(|d| d[0] == 0x10)
            .flat_map(|d| crate::transport::HistChunk::decode(d).unwrap().bins)
            .collect();
        assert_eq!(bins.len(), 135_424);
        assert_eq!(bins.iter().map(|&b| b as u64).sum::<u64>(), 1);
        assert_eq!(bins[264 * 256 + (2000 >> 4)], 1);
        let status = StatusReport::decode(dgs.last().unwrap()).unwrap();
        assert_eq!(status.stats.histogrammed, 1);
        assert!(status.hist_active);

        // Garbage and a command for a foreign module are both NAKed.
        let mut up = Uplink::new(Vec::new());
        s.handle_downlink(&[0xEE], &mut up).unwrap();
        let foreign = CommandPacket::new(BlockAddress::new(5, 0).unwrap(), Command::HistReset).encode();
        s.handle_downlink(&foreign, &mut up).unwrap();
        assert_eq!(s.naks(), 2);
        // HIST_START while active is refused.
        s.handle_downlink(&CommandPacket::new(a, Command::HistStart).encode(), &mut up).unwrap();
        assert_eq!(s.naks(), 3);
    }

    #[test]
    fn one_buffer_per_block() {
        let mut s = spu();
        s.set_mode(Mode::EnergyOnline);
        s.start_histograms().unwrap();
        assert_eq!(s.histogram_buffers(), [1; 4]);
        assert_eq!(s.block(0).histogram().ram_account().words, 262_144);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
            assert_eq!(Mode::from_code(m.code()), Some(m));
        }
        assert!(Mode::from_code(5).is_none());
        assert!("bogus".parse::<Mode>().is_err());
    }
}
