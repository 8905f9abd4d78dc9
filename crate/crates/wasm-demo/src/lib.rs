//! Browser bindings for three views of the SPU model: a flood map with the
//! crystal boundaries drawn over it, per-crystal spectra before and after
//! photopeak correction, and single-event positioning.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spu_core::corrections::EnergyWindow;
use spu_core::crystal_lut::{boundary_lookup, synthetic::random_boundary_clt, BoundaryClt};
use spu_core::event_model::{ChannelIntegrals, CrystalId, RawPosition};
use spu_core::histogram::ENERGY_BINS_PER_CRYSTAL;
use spu_core::phantom::{raw_events, PhantomParams, PhantomSpec};
use spu_core::pipeline::{BlockLuts, Mode, Spu, SpuConfig};
use spu_core::positioning::compute_position;
use spu_core::transport::packet::PacketBody;
use wasm_bindgen::prelude::*;

pub const SIDE: usize = 512;
/// Width of one corrected-energy bin in keV.
pub const KEV_PER_BIN: u16 = 4;
const BOUNDARY_RGB: [u8; 3] = [255, 90, 40];

fn layout(warp_seed: u32) -> BoundaryClt {
    if warp_seed == 0 {
        BoundaryClt::uniform_grid()
    } else {
        random_boundary_clt(&mut ChaCha8Rng::seed_from_u64(warp_seed as u64))
    }
}

/// Raw flood counts for a phantom on the given layout (0 = uniform grid).
pub fn flood_counts(events: u32, seed: u32, warp_seed: u32, noise: f64) -> Result<(Vec<u32>, BoundaryClt), String> {
    let clt = layout(warp_seed);
    let params = PhantomParams {
        events: events as usize,
        seed: seed as u64,
        noise,
        compton_fraction: 0.2,
        ..Default::default()
    };
    let spec = PhantomSpec::from_params(&params, &clt).map_err(|e| e.to_string())?;
    let mut counts = vec![0u32; SIDE * SIDE];
    for ev in spec.generate().map_err(|e| e.to_string())? {
        if let Ok(r) = compute_position(&ev.event.integrals) {
            counts[r.pos.y() as usize * SIDE + r.pos.x() as usize] += 1;
        }
    }
    Ok((counts, clt))
}

/// Log-scaled grey RGBA image; boundary pixels are tinted when `overlay` is set.
pub fn render_flood(counts: &[u32], clt: &BoundaryClt, overlay: bool) -> Vec<u8> {
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut rgba = Vec::with_capacity(counts.len() * 4);
    for (i, &c) in counts.iter().enumerate() {
        let (x, y) = ((i % SIDE) as u16, (i / SIDE) as u16);
        let edge = overlay && {
            let id = boundary_lookup(clt, RawPosition::new(x, y).unwrap());
            (x > 0 && boundary_lookup(clt, RawPosition::new(x - 1, y).unwrap()) != id)
                || (y > 0 && boundary_lookup(clt, RawPosition::new(x, y - 1).unwrap()) != id)
        };
        if edge {
            rgba.extend_from_slice(&BOUNDARY_RGB);
        } else {
            let v = (255.0 * (1.0 + c as f64).ln() / (1.0 + max).ln()) as u8;
            rgba.extend_from_slice(&[v, v, v]);
        }
        rgba.push(255);
    }
    rgba
}

/// Spectra of two crystals with the given photopeak gains, as four
/// 256-bin rows: uncorrected a, uncorrected b, corrected a, corrected b.
/// Uncorrected rows are the online energy histogram; corrected rows bin the
/// regular-mode energies in [`KEV_PER_BIN`] keV steps.
pub fn spectra(events: u32, seed: u32, crystals: [u16; 2], gains: [u16; 2]) -> Result<Vec<u32>, String> {
    let mut spec = PhantomSpec::uniform(2000, events as usize, seed as u64);
    spec.compton_fraction = 0.3;
    spec.noise = 0.01;
    let ids: Vec<CrystalId> =
        crystals.iter().map(|&c| CrystalId::new(c)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    for (id, gain) in ids.iter().zip(gains) {
        spec.crystals[id.index()].gain = gain;
    }
    spec.validate().map_err(|e| e.to_string())?;
    let events = raw_events(&spec.generate().map_err(|e| e.to_string())?);
    let luts = BlockLuts { clt: BoundaryClt::uniform_grid(), peaks: spec.peak_lut(), times: spec.time_lut() };
    let cfg = SpuConfig::new(0, std::array::from_fn(|_| luts.clone())).map_err(|e| e.to_string())?;
    let mut out = vec![0u32; 4 * ENERGY_BINS_PER_CRYSTAL];

    let mut online = Spu::new(SpuConfig { mode: Mode::EnergyOnline, ..cfg.clone() });
    online.start_histograms().map_err(|e| e.to_string())?;
    for ev in &events {
        online.process_event(ev);
    }
    for (row, id) in ids.iter().enumerate() {
        let span = id.index() * ENERGY_BINS_PER_CRYSTAL..(id.index() + 1) * ENERGY_BINS_PER_CRYSTAL;
        for b in 0..4 {
            let bins = &online.block(b).histogram().read()[span.clone()];
            for (o, &v) in out[row * ENERGY_BINS_PER_CRYSTAL..].iter_mut().zip(bins) {
                *o += v as u32;
            }
        }
    }

    // Open window so the Compton continuum stays visible after correction.
    let full_range = EnergyWindow::new(0, u16::MAX).map_err(|e| e.to_string())?;
    let mut regular = Spu::new(SpuConfig { mode: Mode::RegularPackage, window: full_range, ..cfg });
    for ev in &events {
        regular.process_event(ev);
        while let Some((_, p)) = regular.arbitrate() {
            if let PacketBody::Regular { crystal, energy_kev, .. } = p.body {
                if let Some(row) = ids.iter().position(|&id| id == crystal) {
                    let bin = (energy_kev / KEV_PER_BIN) as usize;
                    if bin < ENERGY_BINS_PER_CRYSTAL {
                        out[(2 + row) * ENERGY_BINS_PER_CRYSTAL + bin] += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `[x, y, doi, crystal]` for eight channel integrals on the uniform grid.
pub fn locate(ch: &[u16]) -> Result<Vec<u32>, String> {
    let ch: [u16; 8] = ch.try_into().map_err(|_| format!("expected 8 integrals, got {}", ch.len()))?;
    let r = compute_position(&ChannelIntegrals::new(ch)).map_err(|e| e.to_string())?;
    let id = boundary_lookup(&BoundaryClt::uniform_grid(), r.pos);
    Ok(vec![r.pos.x() as u32, r.pos.y() as u32, r.doi.value() as u32, id.get() as u32])
}

#[wasm_bindgen(js_name = floodImage)]
pub fn flood_image(events: u32, seed: u32, warp_seed: u32, noise: f64, overlay: bool) -> Result<Vec<u8>, JsError> {
    let (counts, clt) = flood_counts(events, seed, warp_seed, noise).map_err(|e| JsError::new(&e))?;
    Ok(render_flood(&counts, &clt, overlay))
}

#[wasm_bindgen(js_name = alignmentSpectra)]
pub fn alignment_spectra(
    events: u32,
    seed: u32,
    crystal_a: u16,
    crystal_b: u16,
    gain_a: u16,
    gain_b: u16,
) -> Result<Vec<u32>, JsError> {
    spectra(events, seed, [crystal_a, crystal_b], [gain_a, gain_b]).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = position)]
pub fn position(ch: &[u16]) -> Result<Vec<u32>, JsError> {
    locate(ch).map_err(|e| JsError::new(&e))
}
