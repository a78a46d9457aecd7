//! Locally decodable and locally updatable lossless compression for
//! memoryless sources, with bit-probe accounting.

pub mod bench;
pub mod bitstore;
pub mod blockvarlen;
pub mod codecs;
pub mod container;
pub mod enumcode;
pub mod error;
pub mod localops;
pub mod multilevel;
pub mod rankdict;

pub use bitstore::{BitRead, BitSink, BitWindow, BitWrite, ProbeCounts, ProbeMeteredBits};
pub use enumcode::{Ratio, SourceModel, TypicalIndexer, TypicalSetSpec};
pub use error::{Error, Result};
