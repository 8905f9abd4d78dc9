use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, ErrorKind, Write};
use std::net::UdpSocket;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spu_core::corrections::{EnergyWindow, PeakLut, TimeOffsetLut};
use spu_core::crystal_lut::BoundaryClt;
use spu_core::daq_host::{
    export_flood, export_json, export_spectra, widen, DaqHost, Ingested, OfflineFlood, OfflineSpectra, SessionStats,
};
use spu_core::event_model::{read_events, RawEvent, EVENT_RECORD_BYTES};
use spu_core::histogram::{EnergyScale, COUNTER_MAX, ENERGY_BINS, FLOOD_BINS};
use spu_core::pipeline::{BlockLuts, BlockStats, Spu, SpuConfig, BLOCKS};
use spu_core::transport::command::{Command, CommandPacket};
use spu_core::transport::frame::{parse_frame, read_capture, strip_fcs, FrameConfig};
use spu_core::transport::packet::PacketBody;
use spu_core::transport::uplink::{DatagramSink, FrameCaptureSink, NullSink, UdpSink, Uplink, UplinkStats};

use crate::tools::load_clt;
use crate::{DaqHostArgs, SpuArgs};

/// Photopeak raw sum assumed when no peak LUT is given.
const DEFAULT_PEAK: u16 = 2000;

fn load_luts(a: &SpuArgs) -> Result<BlockLuts> {
    let (clt, peaks, times) = match &a.luts {
        Some(dir) => (Some(dir.join("clt.bclt")), Some(dir.join("peaks.pklt")), Some(dir.join("times.tolt"))),
        None => (a.clt.clone(), a.peaks.clone(), a.times.clone()),
    };
    let open = |p: &Path| -> Result<BufReader<File>> {
        Ok(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))
    };
    Ok(BlockLuts {
        clt: match clt {
            Some(p) => load_clt(&p)?,
            None => BoundaryClt::uniform_grid(),
        },
        peaks: match peaks {
            Some(p) => PeakLut::read_from(open(&p)?).with_context(|| format!("{}", p.display()))?,
            None => PeakLut::uniform(DEFAULT_PEAK)?,
        },
        times: match times {
            Some(p) => TimeOffsetLut::read_from(open(&p)?).with_context(|| format!("{}", p.display()))?,
            None => TimeOffsetLut::default(),
        },
    })
}

#[derive(Serialize)]
struct SpuSummary {
    mode: String,
    blocks: Vec<BlockStats>,
    total: BlockStats,
    naks: u64,
    uplink: UplinkStats,
}

pub fn spu(a: SpuArgs) -> Result<bool> {
    let luts = load_luts(&a)?;
    let mut cfg = SpuConfig::new(a.module, std::array::from_fn(|_| luts.clone()))?;
    cfg.mode = a.mode;
    cfg.window = EnergyWindow::new(a.window_low, a.window_high)?;
    cfg.energy_scale = EnergyScale::new(a.energy_scale)?;
    cfg.y_pairing = a.y_pairing.into();
    let mut spu = Spu::new(cfg);
    if a.mode.hist_mode().is_some() {
        spu.start_histograms()?;
    }

    let sink = match (&a.peer, &a.capture) {
        (Some(_), Some(_)) => bail!("--peer and --capture are exclusive"),
        (Some(peer), None) => Sink::Udp(UdpSink::new(UdpSocket::bind("0.0.0.0:0")?, *peer)),
        (None, Some(path)) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            Sink::Capture(FrameCaptureSink::new(FrameConfig::default(), BufWriter::new(f)))
        }
        (None, None) => Sink::Null(NullSink),
    };
    let mut up = Uplink::new(sink);

    match (&a.events, a.listen) {
        (Some(path), _) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let events = read_events(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
            spu.run(&events, &mut up)?;
        }
        (None, Some(port)) => run_live(&mut spu, &mut up, port, a.downlink, a.idle_timeout)?,
        (None, None) => bail!("give --events <file> or --listen <port>"),
    }
    if a.mode.hist_mode().is_some() {
        for b in 0..BLOCKS as u8 {
            let cmd = CommandPacket::new(spu.address(b), Command::HistRead);
            spu.handle_downlink(&cmd.encode(), &mut up)?;
        }
    }
    up.flush()?;

    let summary = SpuSummary {
        mode: a.mode.to_string(),
        blocks: (0..BLOCKS as u8).map(|b| *spu.block(b).stats()).collect(),
        total: spu.total_stats(),
        naks: spu.naks(),
        uplink: up.stats(),
    };
    if let Sink::Capture(c) = up.into_sink()? {
        c.into_inner().flush()?;
    }
    let t = &summary.total;
    println!("mode {}: {} events", summary.mode, t.ingested);
    for (name, v) in BlockStats::FIELDS.iter().zip(t.to_array()).skip(1) {
        if v > 0 {
            println!("  {name:<16} {v}");
        }
    }
    println!("  uplink           {} packets in {} datagrams", summary.uplink.packets, summary.uplink.datagrams);
    if let Some(p) = &a.stats {
        export_json(p, &summary)?;
    }
    Ok(true)
}

enum Sink {
    Null(NullSink),
    Udp(UdpSink),
    Capture(FrameCaptureSink<BufWriter<File>>),
}

impl DatagramSink for Sink {
    fn send(&mut self, datagram: &[u8]) -> std::io::Result<()> {
        match self {
            Sink::Null(s) => s.send(datagram),
            Sink::Udp(s) => s.send(datagram),
            Sink::Capture(s) => s.send(datagram),
        }
    }
}

fn run_live<S: DatagramSink>(spu: &mut Spu, up: &mut Uplink<S>, port: u16, downlink: u16, idle: f64) -> Result<()> {
    let events = UdpSocket::bind(("0.0.0.0", port)).with_context(|| format!("binding event port {port}"))?;
    events.set_read_timeout(Some(Duration::from_millis(50)))?;
    let commands =
        UdpSocket::bind(("0.0.0.0", downlink)).with_context(|| format!("binding downlink port {downlink}"))?;
    commands.set_nonblocking(true)?;
    let idle = Duration::from_secs_f64(idle);
    let mut last = Instant::now();
    let mut buf = vec![0u8; 65536];
    loop {
        loop {
            match commands.recv(&mut buf) {
                Ok(n) => spu.handle_downlink(&buf[..n], up)?,
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) => return Err(e.into()),
            }
        }
        match events.recv(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                last = Instant::now();
                for rec in buf[..n].chunks_exact(EVENT_RECORD_BYTES) {
                    // Malformed records carry no address to charge them to.
                    if let Ok(ev) = RawEvent::from_bytes(rec.try_into().expect("exact chunk")) {
                        spu.process_event(&ev);
                        spu.pump(up, 1)?;
                    }
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                spu.drain(up)?;
                if last.elapsed() >= idle {
                    break;
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
    spu.drain(up)?;
    Ok(())
}

#[derive(Default)]
struct Accumulators {
    flood: BTreeMap<(u8, u8), OfflineFlood>,
    spectra: BTreeMap<(u8, u8), OfflineSpectra>,
    readouts: Vec<((u8, u8), Vec<u16>)>,
    singles: Option<BufWriter<File>>,
    frame_errors: u64,
}

impl Accumulators {
    fn take(&mut self, got: Ingested, scale: EnergyScale) -> Result<()> {
        for p in &got.packets {
            let key = (p.address.module_id(), p.address.block_id());
            match p.body {
                PacketBody::FloodRaw { .. } => {
                    self.flood.entry(key).or_default().add(p);
                }
                PacketBody::EnergyRaw { .. } => {
                    self.spectra.entry(key).or_insert_with(|| OfflineSpectra::new(scale)).add(p);
                }
                PacketBody::Regular { .. } => {}
            }
            if let Some(w) = &mut self.singles {
                let (crystal, doi, energy, x, y) = match p.body {
                    PacketBody::Regular { crystal, doi, energy_kev } => (
                        crystal.get().to_string(),
                        doi.value().to_string(),
                        energy_kev.to_string(),
                        String::new(),
                        String::new(),
                    ),
                    PacketBody::FloodRaw { pos } => {
                        (String::new(), String::new(), String::new(), pos.x().to_string(), pos.y().to_string())
                    }
                    PacketBody::EnergyRaw { crystal, doi, raw_energy } => (
                        crystal.get().to_string(),
                        doi.value().to_string(),
                        raw_energy.to_string(),
                        String::new(),
                        String::new(),
                    ),
                };
                writeln!(w, "{},{},{},{crystal},{doi},{energy},{x},{y},{}", key.0, key.1, p.packet_type(), p.time_ps)?;
            }
        }
        if let Some(r) = got.readout {
            self.readouts.push(((r.address.module_id(), r.address.block_id()), r.bins));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct HostSummary<'a> {
    session: &'a SessionStats,
    frame_errors: u64,
    files: Vec<String>,
}

pub fn daq_host(a: DaqHostArgs) -> Result<bool> {
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let scale = EnergyScale::new(a.energy_scale)?;
    let mut host = DaqHost::new();
    let mut acc = Accumulators::default();
    if a.singles_csv {
        let p = a.out_dir.join("singles.csv");
        let mut w = BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?);
        writeln!(w, "module,block,type,crystal,doi,energy,x,y,time_ps")?;
        acc.singles = Some(w);
    }

    match (&a.capture, a.listen) {
        (Some(path), _) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            for frame in read_capture(BufReader::new(f))? {
                match strip_fcs(&frame).and_then(parse_frame) {
                    Ok(parsed) => {
                        let got = host.ingest_datagram(parsed.payload);
                        acc.take(got, scale)?;
                    }
                    Err(_) => acc.frame_errors += 1,
                }
            }
        }
        (None, Some(port)) => {
            let sock = UdpSocket::bind(("0.0.0.0", port)).with_context(|| format!("binding port {port}"))?;
            sock.set_read_timeout(Some(Duration::from_millis(100)))?;
            let idle = Duration::from_secs_f64(a.idle_timeout);
            let mut buf = vec![0u8; 65536];
            let mut last: Option<Instant> = None;
            loop {
                if a.max_datagrams.is_some_and(|m| host.stats().datagrams >= m) {
                    break;
                }
                match sock.recv(&mut buf) {
                    Ok(n) => {
                        last = Some(Instant::now());
                        let got = host.ingest_datagram(&buf[..n]);
                        acc.take(got, scale)?;
                    }
                    Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                        if last.is_some_and(|t| t.elapsed() >= idle) {
                            break;
                        }
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        (None, None) => bail!("give --listen <port> or --capture <file>"),
    }

    let mut files = Vec::new();
    let mut emit = |name: String| -> std::path::PathBuf {
        files.push(name.clone());
        a.out_dir.join(name)
    };
    for ((m, b), f) in &acc.flood {
        export_flood(&emit(format!("flood_m{m}_b{b}.pgm")), &f.counts, None)?;
    }
    for ((m, b), s) in &acc.spectra {
        export_spectra(&emit(format!("spectra_m{m}_b{b}.csv")), &s.counts)?;
    }
    for (i, ((m, b), bins)) in acc.readouts.iter().enumerate() {
        match bins.len() {
            FLOOD_BINS => {
                export_flood(&emit(format!("online_flood_m{m}_b{b}_{i}.pgm")), &widen(bins), Some(COUNTER_MAX))?
            }
            ENERGY_BINS => export_spectra(&emit(format!("online_spectra_m{m}_b{b}_{i}.csv")), &widen(bins))?,
            n => eprintln!("readout from module {m} block {b} has {n} bins; not exported"),
        }
    }
    if let Some(mut w) = acc.singles.take() {
        w.flush()?;
        files.push("singles.csv".into());
    }
    let stats_path = a.out_dir.join("stats.json");
    files.push("stats.json".into());
    let s = host.stats();
    export_json(&stats_path, &HostSummary { session: s, frame_errors: acc.frame_errors, files: files.clone() })?;
    println!(
        "{} datagrams, {} packets, {} decode errors, {} length errors, {} frame errors",
        s.datagrams, s.packets, s.decode_errors, s.length_errors, acc.frame_errors
    );
    for f in &files {
        println!("  wrote {}", a.out_dir.join(f).display());
    }
    Ok(true)
}
