mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spu_core::corrections::{correct_energy, PeakLut};
use spu_core::crystal_lut::{boundary_lookup, decompose, full_lookup, synthetic::random_boundary_clt};
use spu_core::daq_host::DaqHost;
use spu_core::event_model::{BlockAddress, ChannelIntegrals, CrystalId, Doi, RawEvent, RawPosition};
use spu_core::positioning::compute_position;
use spu_core::transport::command::{hist_chunks, HistChunk, HIST_CHUNK_BINS};
use spu_core::transport::frame::{build_frame, ipv4_checksum, parse_frame, FrameConfig, MAX_PAYLOAD};
use spu_core::transport::packet::{PacketBody, SinglesPacket};
use spu_core::transport::uplink::Uplink;

use common::*;

fn integrals() -> impl Strategy<Value = [u16; 8]> {
    prop::array::uniform8(any::<u16>())
        .prop_filter("both ends lit", |ch| ch[..4].iter().any(|&v| v > 0) && ch[4..].iter().any(|&v| v > 0))
}

fn address() -> impl Strategy<Value = BlockAddress> {
    (0u8..12, 0u8..4).prop_map(|(m, b)| BlockAddress::new(m, b).unwrap())
}

fn packet() -> impl Strategy<Value = SinglesPacket> {
    let body = prop_oneof![
        (0u16..529, 0u8..16, any::<u16>()).prop_map(|(c, d, e)| PacketBody::Regular {
            crystal: CrystalId::new(c).unwrap(),
            doi: Doi::new(d).unwrap(),
            energy_kev: e,
        }),
        (0u16..512, 0u16..512).prop_map(|(x, y)| PacketBody::FloodRaw { pos: RawPosition::new(x, y).unwrap() }),
        (0u16..529, 0u8..16, 0u32..1 << 19).prop_map(|(c, d, e)| PacketBody::EnergyRaw {
            crystal: CrystalId::new(c).unwrap(),
            doi: Doi::new(d).unwrap(),
            raw_energy: e,
        }),
    ];
    (address(), body, any::<u64>()).prop_map(|(address, body, time_ps)| SinglesPacket { address, body, time_ps })
}

proptest! {
    #[test]
    fn position_matches_rational_oracle(ch in integrals()) {
        let r = compute_position(&ChannelIntegrals::new(ch)).unwrap();
        prop_assert_eq!((r.pos.x() as u64, r.pos.y() as u64, r.doi.value() as u64), position_oracle(ch));
    }

    #[test]
    fn position_is_scale_invariant(ch in integrals(), c in 1u16..=255) {
        let base = ch.map(|v| v / c);
        prop_assume!(base[..4].iter().any(|&v| v > 0) && base[4..].iter().any(|&v| v > 0));
        let scaled = base.map(|v| v * c);
        prop_assert_eq!(
            compute_position(&ChannelIntegrals::new(base)).unwrap(),
            compute_position(&ChannelIntegrals::new(scaled)).unwrap()
        );
    }

    #[test]
    fn zero_sum_end_is_rejected(ch in prop::array::uniform4(any::<u16>()), end in 0usize..2) {
        let mut all = [0u16; 8];
        all[4 * (1 - end)..4 * (1 - end) + 4].copy_from_slice(&ch);
        prop_assert!(compute_position(&ChannelIntegrals::new(all)).is_err());
    }

    #[test]
    fn energy_correction_matches_oracle(raw in 0u32..1 << 19, peak in 1u16..=u16::MAX, id in 0u16..529) {
        let mut lut = PeakLut::uniform(1000).unwrap();
        let crystal = CrystalId::new(id).unwrap();
        lut.set(crystal, peak).unwrap();
        let want = energy_oracle(raw, peak).min(u16::MAX as u64) as u16;
        prop_assert_eq!(correct_energy(raw, crystal, &lut), want);
    }

    #[test]
    fn packet_round_trip(p in packet()) {
        prop_assert_eq!(SinglesPacket::decode(&p.encode()), Ok(p));
    }

    #[test]
    fn frame_round_trip(payload in prop::collection::vec(any::<u8>(), 0..=MAX_PAYLOAD), ident in any::<u16>()) {
        let cfg = FrameConfig::default();
        let frame = build_frame(&payload, &cfg, ident).unwrap();
        prop_assert!(frame.len() >= 60);
        let parsed = parse_frame(&frame).unwrap();
        prop_assert_eq!(parsed.payload, &payload[..]);
        let header = &frame[14..34];
        prop_assert_eq!(ipv4_checksum(header), 0);
    }

    #[test]
    fn histogram_chunks_reassemble(bins in prop::collection::vec(0u16..1024, 0..3 * HIST_CHUNK_BINS), a in address()) {
        let chunks = hist_chunks(a, &bins);
        prop_assert!(chunks.last().unwrap().bins.len() < HIST_CHUNK_BINS);
        let mut host = DaqHost::new();
        let mut readout = None;
        for c in &chunks {
            prop_assert_eq!(&HistChunk::decode(&c.encode()).unwrap(), c);
            readout = host.ingest_datagram(&c.encode()).readout;
        }
        let r = readout.unwrap();
        prop_assert_eq!(r.address, a);
        prop_assert_eq!(r.bins, bins);
    }

    #[test]
    fn uplink_preserves_packet_order(ps in prop::collection::vec(packet(), 0..300)) {
        let mut up = Uplink::new(Vec::new());
        for p in &ps {
            up.push(p).unwrap();
        }
        let datagrams = up.into_sink().unwrap();
        prop_assert!(datagrams.iter().all(|d| d.len() <= MAX_PAYLOAD && d.len() % 16 == 0));
        let mut host = DaqHost::new();
        let back: Vec<_> = datagrams.iter().flat_map(|d| host.ingest_datagram(d).packets).collect();
        prop_assert_eq!(back, ps);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn decompose_inverts_expansion(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_boundary_clt(&mut rng);
        let full = b.to_full().unwrap();
        let back = decompose(&full).unwrap();
        prop_assert_eq!(&back, &b);
        for (x, y) in [(0, 0), (511, 511), (0, 511), (511, 0), (seed as u16 % 512, (seed >> 16) as u16 % 512)] {
            let p = RawPosition::new(x, y).unwrap();
            prop_assert_eq!(boundary_lookup(&b, p), full_lookup(&full, p));
        }
    }

    #[test]
    fn event_record_round_trip(ch in prop::array::uniform8(any::<u16>()), a in address(), t in any::<u64>()) {
        let ev = RawEvent { address: a, integrals: ChannelIntegrals::new(ch), tdc_time: t };
        prop_assert_eq!(RawEvent::from_bytes(&ev.to_bytes()).unwrap(), ev);
    }
}
