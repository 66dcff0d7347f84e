//! Link-level models and optimizers for a flexible intelligent metasurface
//! (FIM) used as a multiuser MISO downlink transmitter.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] — array layout, per-element surface displacements, and
//!   far-field steering vectors;
//! * [`channel`] — geometric multipath channel synthesis, path loss, noise
//!   power, and scenario sampling;
//! * [`beamforming`] — SINR-constrained transmit power minimisation for a
//!   fixed channel (MMSE via uplink–downlink duality, plus a zero-forcing
//!   baseline);
//! * [`morphing`] — surface-shape optimisation at fixed beamformers by
//!   projected gradient ascent on the users' SINR margins;
//! * [`optimizer`] — the alternating loop that ties beamforming and
//!   morphing together and tracks per-iteration progress.
//!
//! All quantities are linear-scale SI unless a name says otherwise
//! (`*_db`, `*_dbm`).

pub mod beamforming;
pub mod channel;
pub mod geometry;
pub mod morphing;
pub mod optimizer;

pub use beamforming::{
    mmse_beamformer, sinr_report, zf_beamformer, BeamformerKind, BeamformingError,
    BeamformingSolution, MmseConfig, SinrReport,
};
pub use channel::{
    channel_matrix, noise_power, path_gain, sample_environment, sample_user_positions,
    ChannelError, LinkBudget, PathAngles, ScatteringEnvironment, ScenarioGeometry,
    ELEMENT_GAINS_DB, SPEED_OF_LIGHT,
};
pub use geometry::{
    element_positions, steering_vector, FimGeometry, GeometryError, SurfaceShape,
};
pub use morphing::{
    margin_gradient, morph_ascent, sinr_margins, MarginReport, MorphConfig, MorphError,
    MorphOutcome,
};
pub use optimizer::{
    dbm_to_watts, optimize, watts_to_dbm, AoConfig, IterationRecord, MorphSummary,
    OptimizationTrace, OptimizeError,
};
