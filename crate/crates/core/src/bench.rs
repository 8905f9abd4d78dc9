//! Regular-mode throughput measurement.

use std::hint::black_box;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::crystal_lut::BoundaryClt;
use crate::event_model::{BlockAddress, RawEvent};
use crate::phantom::{raw_events, PhantomParams, PhantomSpec};
use crate::pipeline::{BlockLuts, BlockProcessor, Mode, SpuConfig, BLOCKS};
use crate::transport::uplink::{NullSink, Uplink};

pub const SINGLE_BLOCK_FLOOR: f64 = 1_000_000.0;
pub const AGGREGATE_FLOOR: f64 = 4_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchResult {
    pub events: u64,
    pub packaged: u64,
    pub seconds: f64,
    pub threads: usize,
}

impl BenchResult {
    pub fn events_per_s(&self) -> f64 {
        self.events as f64 / self.seconds
    }
}

/// A realistic mix: noisy positions, some scatter, per-crystal gains and
/// offsets. Returns the configuration matching the phantom and its events.
pub fn workload(events: usize, seed: u64) -> (SpuConfig, Vec<RawEvent>) {
    let clt = BoundaryClt::uniform_grid();
    let params = PhantomParams { events, seed, noise: 0.02, compton_fraction: 0.3, ..Default::default() };
    let spec = PhantomSpec::from_params(&params, &clt).expect("default params are valid");
    let luts = BlockLuts { clt, peaks: spec.peak_lut(), times: spec.time_lut() };
    let mut cfg = SpuConfig::new(spec.module_id, std::array::from_fn(|_| luts.clone())).expect("valid module");
    cfg.mode = Mode::RegularPackage;
    (cfg, raw_events(&spec.generate().expect("valid spec")))
}

fn on_block(events: &[RawEvent], block: u8) -> Vec<RawEvent> {
    events
        .iter()
        .map(|e| RawEvent { address: BlockAddress::new(e.address.module_id(), block).expect("valid"), ..*e })
        .collect()
}

/// One block: process, dequeue and encode into uplink datagrams, repeating
/// the workload until `duration` has elapsed.
fn run_block(cfg: &SpuConfig, events: &[RawEvent], block: u8, duration: Duration) -> BenchResult {
    let events = on_block(events, block);
    let mut proc = BlockProcessor::new(block);
    let mut up = Uplink::new(NullSink);
    let start = Instant::now();
    let mut n = 0u64;
    loop {
        for ev in &events {
            proc.process(black_box(ev), cfg);
            if let Some(p) = proc.fifo_mut().pop() {
                up.push(&p).expect("null sink");
            }
        }
        n += events.len() as u64;
        if start.elapsed() >= duration {
            break;
        }
    }
    up.flush().expect("null sink");
    BenchResult { events: n, packaged: proc.stats().packaged, seconds: start.elapsed().as_secs_f64(), threads: 1 }
}

pub fn bench_single_block(cfg: &SpuConfig, events: &[RawEvent], duration: Duration) -> BenchResult {
    run_block(cfg, events, 0, duration)
}

/// Four blocks, each on its own thread, sharing one configuration snapshot.
pub fn bench_parallel(cfg: &SpuConfig, events: &[RawEvent], duration: Duration) -> BenchResult {
    let cfg = Arc::new(cfg.clone());
    let start = Instant::now();
    let results: Vec<BenchResult> = thread::scope(|s| {
        let handles: Vec<_> = (0..BLOCKS as u8)
            .map(|b| {
                let cfg = Arc::clone(&cfg);
                s.spawn(move || run_block(&cfg, events, b, duration))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench thread")).collect()
    });
    BenchResult {
        events: results.iter().map(|r| r.events).sum(),
        packaged: results.iter().map(|r| r.packaged).sum(),
        seconds: start.elapsed().as_secs_f64(),
        threads: BLOCKS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_runs_report_work() {
        let (cfg, events) = workload(2000, 3);
        let r = bench_single_block(&cfg, &events, Duration::from_millis(20));
        assert!(r.events >= 2000);
        assert!(r.packaged > 0 && r.packaged <= r.events);
        let p = bench_parallel(&cfg, &events, Duration::from_millis(20));
        assert_eq!(p.threads, 4);
        assert!(p.events >= 8000);
    }
}
