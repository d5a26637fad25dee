//! Desk-scale ray simulator for PIN-entry traces.
//!
//! A scene places a phone flat on a desk with a router a few meters away.
//! The channel between every router element and phone antenna is a sum of
//! three ray groups: the direct path, static environment bounces (one of
//! which is a motorized foil whose orientation is a controlled factor), and
//! bounces off a moving hand model. Rendering a typing plan sweeps the hand
//! along a constant-speed lift-and-press trajectory, synthesizes the channel
//! at every report instant, runs the beamformee's SVD feedback computation
//! and compresses the result through the codec, producing the same kind of
//! report stream a capture rig records.

mod channel;
mod keypad;
mod render;
mod scene;
mod trajectory;

pub use channel::{
    segment_gain, synth_channel, synth_channel_in, ChannelSample, Components, HandModel,
    Scatterer,
};
pub use keypad::Keypad;
pub use render::render_trace;
pub use scene::{
    Reflector, Scene, SceneGeometry, DEFAULT_ENV_PATHS, DEFAULT_N_SUB, DEFAULT_ROUTER_DISTANCE,
    SUBCARRIER_SPACING_HZ,
};
pub use trajectory::{plan_trajectory, Trajectory, TypingPlan};

use thiserror::Error;

/// Paths shorter than this are rejected as degenerate geometry.
pub const MIN_PATH_LENGTH: f64 = 1e-3;

/// Propagation speed used throughout, meters per second.
pub const LIGHT_SPEED: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("degenerate geometry: path length {0:.3e} m")]
    DegenerateGeometry(f64),
    #[error("invalid typing plan: {0}")]
    BadPlan(String),
    #[error("invalid scene: {0}")]
    BadScene(String),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}
