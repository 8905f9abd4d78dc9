use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::UdpSocket;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spu_core::bench::{self, AGGREGATE_FLOOR, SINGLE_BLOCK_FLOOR};
use spu_core::crystal_lut::BITS_PER_MB;
use spu_core::crystal_lut::{
    boundary_lookup, decompose, footprint, full_lookup, synthetic::random_boundary_clt, BoundaryClt, FullClt,
};
use spu_core::event_model::{write_events, RawPosition, EVENT_RECORD_BYTES, POSITION_SPAN};
use spu_core::formats::{MAGIC_BOUNDARY_CLT, MAGIC_FULL_CLT};
use spu_core::histogram::{energy_ram_bits, flood_ram_bits};
use spu_core::loopback::{run_loopback, LoopbackOptions};
use spu_core::phantom::{raw_events, PhantomParams, PhantomSpec};
use spu_core::rate_model::{system_rates, RateParams, BQ_PER_UCI};

use crate::{BenchArgs, CltCmd, LoopbackArgs, PhantomArgs, RatesArgs, SimulateArgs};

/// Records per raw-event datagram (56 × 26 = 1456 bytes).
pub const EVENTS_PER_DATAGRAM: usize = 1472 / EVENT_RECORD_BYTES;

impl From<&PhantomArgs> for PhantomParams {
    fn from(a: &PhantomArgs) -> Self {
        PhantomParams {
            module_id: a.module,
            events: a.events,
            seed: a.seed,
            noise: a.noise,
            compton_fraction: a.compton_fraction,
            depth_spread: a.depth_spread,
            gain_min: a.gain_min,
            gain_max: a.gain_max,
            max_time_offset_ps: a.max_time_offset_ps,
            period_ps: a.period_ps,
        }
    }
}

/// Reads a boundary or full CLT file, decomposing the latter.
pub fn load_clt(path: &Path) -> Result<BoundaryClt> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let magic = bytes.get(..4).unwrap_or_default();
    if magic == MAGIC_BOUNDARY_CLT {
        BoundaryClt::read_from(&bytes[..]).with_context(|| format!("{}", path.display()))
    } else if magic == MAGIC_FULL_CLT {
        let full = FullClt::read_from(&bytes[..]).with_context(|| format!("{}", path.display()))?;
        decompose(&full).with_context(|| format!("{}", path.display()))
    } else {
        bail!("{}: not a CLT file", path.display())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn simulate(a: SimulateArgs) -> Result<bool> {
    let clt = match (&a.clt, a.warp_seed) {
        (Some(p), _) => load_clt(p)?,
        (None, Some(s)) => random_boundary_clt(&mut ChaCha8Rng::seed_from_u64(s)),
        (None, None) => BoundaryClt::uniform_grid(),
    };
    let spec = PhantomSpec::from_params(&PhantomParams::from(&a.phantom), &clt)?;
    let events = raw_events(&spec.generate()?);
    if a.out.is_none() && a.send.is_none() && a.luts_out.is_none() {
        bail!("nothing to do: give --out, --send or --luts-out");
    }
    if let Some(out) = &a.out {
        let mut w = create(out)?;
        write_events(&mut w, &events)?;
        w.flush()?;
        println!("wrote {} events to {}", events.len(), out.display());
    }
    if let Some(dir) = &a.luts_out {
        fs::create_dir_all(dir)?;
        let mut w = create(&dir.join("clt.bclt"))?;
        clt.write_to(&mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("peaks.pklt"))?;
        spec.peak_lut().write_to(&mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("times.tolt"))?;
        spec.time_lut().write_to(&mut w)?;
        w.flush()?;
        println!("wrote clt.bclt, peaks.pklt, times.tolt to {}", dir.display());
    }
    if let Some(peer) = a.send {
        let sock = UdpSocket::bind("0.0.0.0:0")?;
        let mut datagrams = 0;
        for chunk in events.chunks(EVENTS_PER_DATAGRAM) {
            let mut buf = Vec::with_capacity(chunk.len() * EVENT_RECORD_BYTES);
            write_events(&mut buf, chunk)?;
            sock.send_to(&buf, peer)?;
            datagrams += 1;
            // Light pacing so a receiver on the same host keeps up.
            if datagrams % 32 == 0 {
                std::thread::sleep(Duration::from_millis(1));
            }
        }
        sock.send_to(&[], peer)?;
        println!("sent {} events in {} datagrams to {}", events.len(), datagrams, peer);
    }
    Ok(true)
}

pub fn clt(c: CltCmd) -> Result<bool> {
    match c {
        CltCmd::Footprint { n, k } => {
            let f = footprint(n, k)?;
            println!("full CLT      {:>12} bits  {:.3} Mb per block", f.full_bits, f.full_mb());
            println!("boundary CLT  {:>12} bits  {:.3} Mb per block", f.boundary_bits, f.boundary_mb());
            let per_block = (f.boundary_mb() * 100.0).round() / 100.0;
            let full_rounded = (f.full_mb() * 100.0).round() / 100.0;
            println!(
                "four blocks   {:>12} / {} bits  {:.2} / {:.2} Mb  (4 x {:.2} = {:.2} Mb from the rounded per-block size)",
                4 * f.full_bits,
                4 * f.boundary_bits,
                4.0 * f.full_mb(),
                4.0 * f.boundary_mb(),
                per_block,
                4.0 * per_block
            );
            println!(
                "ratio         {:.2}  ({:.2} from the rounded {:.2} / {:.2} Mb)",
                f.ratio(),
                full_rounded / per_block,
                full_rounded,
                per_block
            );
            if n == 9 && k == 529 {
                println!("flood histogram RAM (4 blocks)   {:.3} Mb", flood_ram_bits(4) as f64 / BITS_PER_MB);
                println!("energy spectrum RAM (4 blocks)   {:.3} Mb", energy_ram_bits(4) as f64 / BITS_PER_MB);
            }
            Ok(true)
        }
        CltCmd::Generate { out, warp_seed, full } => {
            let b = match warp_seed {
                Some(s) => random_boundary_clt(&mut ChaCha8Rng::seed_from_u64(s)),
                None => BoundaryClt::uniform_grid(),
            };
            let mut w = create(&out)?;
            if full {
                b.to_full()?.write_to(&mut w)?;
            } else {
                b.write_to(&mut w)?;
            }
            w.flush()?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        CltCmd::Convert { input, output } => {
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut w = create(&output)?;
            if bytes.starts_with(&MAGIC_FULL_CLT) {
                let full = FullClt::read_from(&bytes[..])?;
                decompose(&full)?.write_to(&mut w)?;
                println!("full -> boundary: {}", output.display());
            } else if bytes.starts_with(&MAGIC_BOUNDARY_CLT) {
                BoundaryClt::read_from(&bytes[..])?.to_full()?.write_to(&mut w)?;
                println!("boundary -> full: {}", output.display());
            } else {
                bail!("{}: not a CLT file", input.display());
            }
            w.flush()?;
            Ok(true)
        }
        CltCmd::Check { input } => {
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            if bytes.starts_with(&MAGIC_FULL_CLT) {
                let full = FullClt::read_from(&bytes[..])?;
                let b = match decompose(&full) {
                    Ok(b) => b,
                    Err(e) => {
                        println!("FAIL {}: {e}", input.display());
                        return Ok(false);
                    }
                };
                let mut mismatches = 0u64;
                for y in 0..POSITION_SPAN as u16 {
                    for x in 0..POSITION_SPAN as u16 {
                        let p = RawPosition::new(x, y)?;
                        mismatches += (boundary_lookup(&b, p) != full_lookup(&full, p)) as u64;
                    }
                }
                println!(
                    "{} {}: full CLT, separable, {mismatches} lookup mismatches",
                    if mismatches == 0 { "OK" } else { "FAIL" },
                    input.display()
                );
                Ok(mismatches == 0)
            } else if bytes.starts_with(&MAGIC_BOUNDARY_CLT) {
                match BoundaryClt::read_from(&bytes[..]).map_err(anyhow::Error::from).and_then(|b| Ok(b.to_full()?)) {
                    Ok(_) => {
                        println!("OK {}: boundary CLT, every crystal reachable", input.display());
                        Ok(true)
                    }
                    Err(e) => {
                        println!("FAIL {}: {e:#}", input.display());
                        Ok(false)
                    }
                }
            } else {
                println!("FAIL {}: not a CLT file", input.display());
                Ok(false)
            }
        }
    }
}

pub fn rates(a: RatesArgs) -> Result<bool> {
    let p = RateParams {
        detector_side_mm: a.side_mm,
        ring_radius_mm: a.radius_mm,
        activity_bq: a.activity_uci * BQ_PER_UCI,
        singles_per_decay: a.singles_per_decay,
        detection_efficiency: a.efficiency,
        blocks_per_module: a.blocks,
        modules: a.modules,
        bytes_per_event: a.bytes_per_event,
        max_rate_per_block_hz: a.max_rate_per_block,
    };
    for (name, v) in [("radius", p.ring_radius_mm), ("modules", p.modules)] {
        if v <= 0.0 {
            bail!("{name} must be positive");
        }
    }
    if !(0.0..=1.0).contains(&p.detection_efficiency) {
        bail!("efficiency must lie in [0, 1]");
    }
    let r = system_rates(&p);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(true);
    }
    let rounded_hit = (r.hit_probability * 1e4).round() / 1e4;
    let cr1_rounded = p.singles_rate_hz() * rounded_hit * p.blocks_per_module * p.modules * p.detection_efficiency;
    println!("activity             {:.1} MBq, {:.1} M singles/s", p.activity_bq / 1e6, p.singles_rate_hz() / 1e6);
    println!("hit probability      {:.2} %  ({:.6})", r.hit_probability * 100.0, r.hit_probability);
    println!(
        "CR1 (all blocks)     {:.2} M singles/s  ({:.2} M with the hit probability rounded to {:.2} %)",
        r.cr1_hz / 1e6,
        cr1_rounded / 1e6,
        rounded_hit * 100.0
    );
    println!("CR2 (per module)     {:.2} M singles/s", r.cr2_hz / 1e6);
    println!("average uplink       {:.1} Mbps  ({:.2} MB/s)", r.avg_mbps, r.avg_mbps / 8.0);
    println!("maximum uplink       {:.1} Mbps  ({:.2} MB/s)", r.max_mbps, r.max_mbps / 8.0);
    Ok(true)
}

pub fn loopback(a: LoopbackArgs) -> Result<bool> {
    let opts = LoopbackOptions { phantom: PhantomParams::from(&a.phantom), warped_clt: !a.uniform_clt };
    let r = run_loopback(&opts)?;
    println!("events              {}", r.events);
    println!("packaged            {}", r.regular.packaged);
    println!("decoded             {}", r.decoded);
    println!("window rejected     {}", r.regular.window_rejected);
    println!("decode errors       {}", r.decode_errors);
    println!("crystal checked     {} ({} mismatches)", r.crystal_checked, r.crystal_mismatches);
    println!("flood online total  {}", r.flood_online_total);
    println!("flood offline total {}", r.flood_offline_total);
    println!("saturated blocks    {}", r.online_saturated_blocks);
    println!("datagrams           {} sent, {} received", r.datagrams_sent, r.datagrams_received);
    println!("elapsed             {:.2} s", r.seconds);
    if let Some(path) = &a.report {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &r)?;
        writeln!(w)?;
    }
    let failures = r.failures();
    for f in &failures {
        println!("FAIL {f}");
    }
    if failures.is_empty() {
        println!("PASS");
    }
    Ok(failures.is_empty())
}

pub fn bench(a: BenchArgs) -> Result<bool> {
    if a.seconds <= 0.0 || a.events == 0 {
        bail!("--seconds and --events must be positive");
    }
    let duration = Duration::from_secs_f64(a.seconds);
    let (cfg, events) = bench::workload(a.events, a.seed);
    let single = bench::bench_single_block(&cfg, &events, duration);
    let par = bench::bench_parallel(&cfg, &events, duration);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let ok1 = single.events_per_s() >= SINGLE_BLOCK_FLOOR;
    let ok4 = par.events_per_s() >= AGGREGATE_FLOOR;
    println!("cores available     {cores}");
    println!(
        "{} single block     {:.3} M events/s over {:.1} s (floor 1.000)",
        if ok1 { "PASS" } else { "FAIL" },
        single.events_per_s() / 1e6,
        single.seconds
    );
    println!(
        "{} four blocks      {:.3} M events/s over {:.1} s (floor 4.000)",
        if ok4 { "PASS" } else { "FAIL" },
        par.events_per_s() / 1e6,
        par.seconds
    );
    Ok(ok1 && ok4)
}
