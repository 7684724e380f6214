//! Cache-aided MISO delivery with multi-stream coded caching: scheduling,
//! bit-exact content delivery, beamformer design and Monte Carlo rate
//! evaluation.

pub mod beamforming;
pub mod combinatorics;
pub mod content;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod num;
pub mod phy;

pub use combinatorics::SchedulingParams;
pub use error::{Error, Result};
pub use experiments::{Scheme, SimConfig, SnrGrid};
pub use num::Real;

pub type CVector64 = linalg::CVector<f64>;
pub type CMatrix64 = linalg::CMatrix<f64>;
pub type ChannelMatrix64 = phy::ChannelMatrix<f64>;
pub type BeamformerSet64 = phy::BeamformerSet<f64>;

pub type CVector32 = linalg::CVector<f32>;
pub type CMatrix32 = linalg::CMatrix<f32>;
pub type ChannelMatrix32 = phy::ChannelMatrix<f32>;
pub type BeamformerSet32 = phy::BeamformerSet<f32>;
