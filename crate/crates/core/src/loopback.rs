//! In-process end-to-end session over localhost UDP: an SPU streams to a
//! DAQ host running on its own thread, configured through the downlink.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::crystal_lut::{synthetic::random_boundary_clt, BoundaryClt, Direction};
use crate::daq_host::{DaqHost, Ingested, OfflineFlood, SessionStats};
use crate::event_model::{BlockAddress, CrystalId, POSITION_SPAN};
use crate::histogram::COUNTER_MAX;
use crate::phantom::{raw_events, PhantomError, PhantomEvent, PhantomParams, PhantomSpec};
use crate::pipeline::{BlockLuts, BlockStats, Mode, Spu, SpuConfig, BLOCKS};
use crate::transport::command::{encode_commands, Command, CommandPacket};
use crate::transport::packet::PacketBody;
use crate::transport::uplink::{DatagramSink, UdpSink, Uplink};

/// Datagrams allowed in flight before the sender waits for the receiver.
const WINDOW: u64 = 64;
const STALL: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopbackOptions {
    pub phantom: PhantomParams,
    /// Use a randomly warped CLT instead of the uniform grid.
    pub warped_clt: bool,
}

impl Default for LoopbackOptions {
    fn default() -> Self {
        Self { phantom: PhantomParams::default(), warped_clt: true }
    }
}

#[derive(Debug, Error)]
pub enum LoopbackError {
    #[error("phantom: {0}")]
    Phantom(#[from] PhantomError),
    #[error("socket: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoopbackReport {
    pub events: u64,
    pub regular: BlockStats,
    pub decoded: u64,
    pub decode_errors: u64,
    pub crystal_checked: u64,
    pub crystal_mismatches: u64,
    pub energy_mismatches: u64,
    pub time_mismatches: u64,
    pub unmatched_records: u64,
    pub online_saturated_blocks: u64,
    pub flood_mismatched_bins: u64,
    pub flood_online_total: u64,
    pub flood_offline_total: u64,
    pub naks: u64,
    pub datagrams_sent: u64,
    pub datagrams_received: u64,
    pub host: Option<SessionStats>,
    pub seconds: f64,
}

impl LoopbackReport {
    /// The checks a session must pass.
    pub fn failures(&self) -> Vec<String> {
        let mut f = Vec::new();
        let mut check = |ok: bool, what: String| {
            if !ok {
                f.push(what);
            }
        };
        check(
            self.decoded == self.regular.packaged,
            format!("decoded {} != packaged {}", self.decoded, self.regular.packaged),
        );
        check(self.decode_errors == 0, format!("{} decode errors", self.decode_errors));
        check(self.crystal_mismatches == 0, format!("{} crystal mismatches", self.crystal_mismatches));
        check(self.energy_mismatches == 0, format!("{} photopeak energies not 511 keV", self.energy_mismatches));
        check(self.time_mismatches == 0, format!("{} corrected times off", self.time_mismatches));
        check(self.unmatched_records == 0, format!("{} records without ground truth", self.unmatched_records));
        check(
            self.flood_mismatched_bins == 0,
            format!("{} flood bins differ online vs offline", self.flood_mismatched_bins),
        );
        check(self.naks == 0, format!("{} commands refused", self.naks));
        check(
            self.datagrams_received == self.datagrams_sent,
            format!("received {} of {} datagrams", self.datagrams_received, self.datagrams_sent),
        );
        f
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

/// UDP sink that keeps at most [`WINDOW`] datagrams ahead of the receiver.
struct PacedSink {
    inner: UdpSink,
    sent: u64,
    received: Arc<AtomicU64>,
}

impl DatagramSink for PacedSink {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        let start = Instant::now();
        while self.sent >= self.received.load(Ordering::Acquire) + WINDOW && start.elapsed() < STALL {
            thread::yield_now();
        }
        self.sent += 1;
        self.inner.send(datagram)
    }
}

struct Host {
    rx: mpsc::Receiver<Ingested>,
    received: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    handle: thread::JoinHandle<DaqHost>,
    collected: u64,
}

impl Host {
    fn spawn(socket: UdpSocket) -> io::Result<Self> {
        socket.set_read_timeout(Some(Duration::from_millis(20)))?;
        let (tx, rx) = mpsc::channel();
        let received = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let (r, s) = (received.clone(), stop.clone());
        let handle = thread::spawn(move || {
            let mut host = DaqHost::new();
            let mut buf = vec![0u8; 65536];
            while !s.load(Ordering::Acquire) {
                let Ok(n) = socket.recv(&mut buf) else { continue };
                let got = host.ingest_datagram(&buf[..n]);
                r.fetch_add(1, Ordering::Release);
                if tx.send(got).is_err() {
                    break;
                }
            }
            host
        });
        Ok(Self { rx, received, stop, handle, collected: 0 })
    }

    /// Collects results until `expected` datagrams (cumulative) have been
    /// handed over or the stream stalls.
    fn collect(&mut self, expected: u64) -> Vec<Ingested> {
        let mut out = Vec::new();
        while self.collected < expected {
            match self.rx.recv_timeout(STALL) {
                Ok(i) => {
                    self.collected += 1;
                    out.push(i);
                }
                Err(_) => break,
            }
        }
        out
    }

    fn finish(self) -> DaqHost {
        self.stop.store(true, Ordering::Release);
        self.handle.join().expect("host thread")
    }
}

/// Downlink: the host sends command datagrams; the SPU applies them.
struct Downlink {
    host_side: UdpSocket,
    spu_side: UdpSocket,
}

impl Downlink {
    fn new() -> io::Result<Self> {
        let spu_side = UdpSocket::bind("127.0.0.1:0")?;
        spu_side.set_read_timeout(Some(STALL))?;
        let host_side = UdpSocket::bind("127.0.0.1:0")?;
        host_side.connect(spu_side.local_addr()?)?;
        Ok(Self { host_side, spu_side })
    }

    fn command<S: DatagramSink>(&self, spu: &mut Spu, up: &mut Uplink<S>, cmds: &[CommandPacket]) -> io::Result<()> {
        // One datagram per ≤ 1472 bytes of commands.
        let mut batch: Vec<CommandPacket> = Vec::new();
        let mut bytes = 0;
        let flush = |batch: &mut Vec<CommandPacket>, spu: &mut Spu, up: &mut Uplink<S>| -> io::Result<()> {
            if batch.is_empty() {
                return Ok(());
            }
            self.host_side.send(&encode_commands(batch))?;
            let mut buf = vec![0u8; 2048];
            let n = self.spu_side.recv(&mut buf)?;
            spu.handle_downlink(&buf[..n], up)?;
            batch.clear();
            Ok(())
        };
        for c in cmds {
            let len = c.encode().len();
            if bytes + len > 1472 {
                flush(&mut batch, spu, up)?;
                bytes = 0;
            }
            bytes += len;
            batch.push(c.clone());
        }
        flush(&mut batch, spu, up)
    }
}

fn configure_commands(module: u8, clt: &BoundaryClt, spec: &PhantomSpec) -> Vec<CommandPacket> {
    let mut cmds = Vec::new();
    for block in 0..BLOCKS as u8 {
        let a = BlockAddress::new(module, block).expect("valid");
        for line in 0..POSITION_SPAN as u16 {
            cmds.push(CommandPacket::new(
                a,
                Command::LoadBoundaryCltLine { direction: Direction::X, line, boundaries: *clt.x_line(line) },
            ));
            cmds.push(CommandPacket::new(
                a,
                Command::LoadBoundaryCltLine { direction: Direction::Y, line, boundaries: *clt.y_line(line) },
            ));
        }
        for id in CrystalId::all() {
            let t = spec.truth(id);
            cmds.push(CommandPacket::new(a, Command::LoadPeakEntry { crystal: id, peak: t.gain }));
            cmds.push(CommandPacket::new(a, Command::LoadTimeEntry { crystal: id, offset: t.time_offset_ps }));
        }
    }
    cmds
}

fn per_block(module: u8, f: impl Fn(BlockAddress) -> Command) -> Vec<CommandPacket> {
    (0..BLOCKS as u8)
        .map(|b| {
            let a = BlockAddress::new(module, b).expect("valid");
            CommandPacket::new(a, f(a))
        })
        .collect()
}

/// Runs regular, flood-online and flood-offline phases and checks them
/// against the phantom ground truth.
pub fn run_loopback(opts: &LoopbackOptions) -> Result<LoopbackReport, LoopbackError> {
    let start = Instant::now();
    let clt = if opts.warped_clt {
        random_boundary_clt(&mut ChaCha8Rng::seed_from_u64(opts.phantom.seed ^ 0xC17))
    } else {
        BoundaryClt::uniform_grid()
    };
    let spec = PhantomSpec::from_params(&opts.phantom, &clt)?;
    let truth = spec.generate()?;
    let events = raw_events(&truth);
    let module = spec.module_id;

    let host_sock = UdpSocket::bind("127.0.0.1:0")?;
    let host_addr: SocketAddr = host_sock.local_addr()?;
    let mut host = Host::spawn(host_sock)?;
    let spu_sock = UdpSocket::bind("127.0.0.1:0")?;
    let sink = PacedSink { inner: UdpSink::new(spu_sock, host_addr), sent: 0, received: host.received.clone() };
    let mut up = Uplink::new(sink);
    let down = Downlink::new()?;

    // The SPU starts from placeholder LUTs; the real ones arrive by command.
    let placeholder = BlockLuts::uniform(1).expect("non-zero peak");
    let mut spu = Spu::new(SpuConfig::new(module, std::array::from_fn(|_| placeholder.clone())).expect("valid module"));
    down.command(&mut spu, &mut up, &configure_commands(module, &clt, &spec))?;

    let mut report = LoopbackReport { events: events.len() as u64, ..Default::default() };

    // Regular mode.
    down.command(&mut spu, &mut up, &per_block(module, |_| Command::SetMode(Mode::RegularPackage)))?;
    spu.run(&events, &mut up)?;
    report.regular = spu.total_stats();
    let sent = up.sink().sent;
    let regular: Vec<Ingested> = host.collect(sent);
    check_regular(&mut report, &regular, &truth, spec.noise == 0.0);

    // Flood online, read back through HIST_READ.
    down.command(&mut spu, &mut up, &per_block(module, |_| Command::SetMode(Mode::FloodOnline))[..1])?;
    down.command(&mut spu, &mut up, &per_block(module, |_| Command::HistStart))?;
    spu.run(&events, &mut up)?;
    down.command(&mut spu, &mut up, &per_block(module, |_| Command::HistRead))?;
    up.flush()?;
    let online: Vec<Ingested> = host.collect(up.sink().sent);

    // Flood offline.
    down.command(&mut spu, &mut up, &per_block(module, |_| Command::SetMode(Mode::FloodOffline))[..1])?;
    spu.run(&events, &mut up)?;
    let offline: Vec<Ingested> = host.collect(up.sink().sent);
    compare_floods(&mut report, &online, &offline);

    report.naks = spu.naks();
    report.datagrams_sent = up.sink().sent;
    let host = host.finish();
    report.datagrams_received = host.stats().datagrams;
    report.decode_errors = host.stats().decode_errors + host.stats().length_errors + host.stats().reply_errors;
    report.host = Some(host.stats().clone());
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn check_regular(report: &mut LoopbackReport, got: &[Ingested], truth: &[PhantomEvent], noise_free: bool) {
    // True times are unique and strictly increasing, so they index the truth.
    let origin = truth.first().map_or(0, |t| t.true_time_ps);
    let period = if truth.len() > 1 { truth[1].true_time_ps - origin } else { 1 };
    for p in got.iter().flat_map(|i| &i.packets) {
        report.decoded += 1;
        let PacketBody::Regular { crystal, energy_kev, .. } = p.body else {
            report.unmatched_records += 1;
            continue;
        };
        let k = p.time_ps.checked_sub(origin).map(|d| (d / period) as usize);
        let Some(t) = k.and_then(|k| truth.get(k)) else {
            report.unmatched_records += 1;
            continue;
        };
        if t.true_time_ps != p.time_ps || t.event.address != p.address {
            report.time_mismatches += 1;
            continue;
        }
        if noise_free {
            report.crystal_checked += 1;
            report.crystal_mismatches += (crystal != t.crystal) as u64;
            if t.photopeak {
                report.energy_mismatches += (energy_kev != 511) as u64;
            }
        }
    }
}

fn compare_floods(report: &mut LoopbackReport, online: &[Ingested], offline: &[Ingested]) {
    let mut off: [OfflineFlood; BLOCKS] = Default::default();
    for p in offline.iter().flat_map(|i| &i.packets) {
        off[p.address.block_id() as usize].add(p);
    }
    let readouts: Vec<_> = online.iter().filter_map(|i| i.readout.as_ref()).collect();
    if readouts.len() != BLOCKS {
        report.flood_mismatched_bins += (BLOCKS - readouts.len().min(BLOCKS)) as u64 * off[0].counts.len() as u64;
    }
    for r in readouts {
        let o = &off[r.address.block_id() as usize];
        if r.bins.iter().any(|&b| b >= COUNTER_MAX) {
            report.online_saturated_blocks += 1;
        }
        for (&a, &b) in r.bins.iter().zip(&o.counts) {
            report.flood_online_total += a as u64;
            if a < COUNTER_MAX && a as u64 != b {
                report.flood_mismatched_bins += 1;
            }
        }
        report.flood_offline_total += o.total();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_session_passes() {
        let opts = LoopbackOptions {
            phantom: PhantomParams { events: 3000, seed: 4, ..Default::default() },
            warped_clt: true,
        };
        let r = run_loopback(&opts).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
        assert_eq!(r.decoded, r.regular.packaged);
        assert_eq!(r.regular.packaged, 3000);
        assert_eq!(r.flood_online_total, 3000);
        assert_eq!(r.flood_offline_total, 3000);
    }
}
