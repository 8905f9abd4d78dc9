//! Bit-accurate software model of a PET singles processing unit.
//!
//! Eight channel integrals and a TDC time go in; crystal-identified,
//! energy-corrected, time-aligned 16-byte singles packets come out over a
//! simplified UDP/IPv4/Ethernet uplink. Online flood and energy histograms,
//! the compressed boundary crystal lookup table, and the host-side receiver
//! are modelled alongside.

pub mod bench;
pub mod corrections;
pub mod crystal_lut;
pub mod daq_host;
pub mod error;
pub mod event_model;
pub mod formats;
pub mod histogram;
pub mod loopback;
pub mod phantom;
pub mod pipeline;
pub mod positioning;
pub mod rate_model;
pub mod transport;

pub use error::DomainError;
pub use event_model::{BlockAddress, ChannelIntegrals, CrystalId, Doi, RawEvent, RawPosition, SinglesRecord};
pub use pipeline::{Disposition, Mode, Spu, SpuConfig};
