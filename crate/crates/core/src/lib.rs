//! Link- and system-level simulation of diversity pulse shaped transmission
//! (DPST) over spatially correlated Rician MIMO channels in dense small-cell
//! deployments.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: complex matrices, SVD, Hermitian eigendecomposition,
//!   sinc and Bessel kernels.
//! - [`channel`]: correlated Rician channel generation and per-channel
//!   analytics (condition number, capacity, singular-value approximation).
//! - [`shaping`]: fractional-delay transmit interpolation, receive
//!   oversampling, and the downsized/normalized virtual channel.
//! - [`transceiver`]: SVD precoding, MMSE equalization, per-stream SINR,
//!   detection and throughput mapping.
//! - [`optimizer`]: grid/coordinate search for the fractional delays that
//!   minimize channel-pair correlation.
//! - [`system`]: 7-cell hexagonal downlink Monte-Carlo producing SINR,
//!   throughput and condition-number CDFs.

pub mod channel;
pub mod numerics;
pub mod optimizer;
pub mod shaping;
pub mod system;
pub mod transceiver;

pub use channel::{ChannelMode, ChannelParams, ChannelRealization};
pub use numerics::{ComplexMatrix, SvdResult, C64};
pub use optimizer::{DelayMetric, DelaySearchConfig, DelaySearchResult};
pub use shaping::{ShapingConfig, ShapingOperators, VirtualChannelResult};
pub use system::{CdfSeries, DropResult, ScenarioConfig, SimMode};
pub use transceiver::LinkState;
