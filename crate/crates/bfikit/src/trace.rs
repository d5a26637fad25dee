//! Shared trace and domain types used across the pipeline.

use ndarray::Array4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{AngleReport, Codebook, StreamConfig};

/// Digits in a PIN. The whole toolkit works on 6-digit PINs.
pub const PIN_LEN: usize = 6;

/// Wi-Fi channels the capture grid uses (5 GHz numbering).
pub const CHANNELS: [u16; 4] = [44, 56, 104, 120];

/// Orientations of the motorized foil reflector, in degrees.
pub const REFLECTOR_ANGLES: [u16; 3] = [0, 45, 90];

/// Number of distinct rooms in the full domain grid.
pub const N_ROOMS: u8 = 16;

/// Number of router positions along the linear axis.
pub const N_POSITIONS: u8 = 5;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("domain component out of range: {0}")]
    BadDomain(String),
    #[error("expected {PIN_LEN} digits and keystrokes, got {digits} / {keystrokes}")]
    LabelCount { digits: usize, keystrokes: usize },
    #[error("keystroke indices must be strictly increasing and inside the trace")]
    KeystrokeOrder,
    #[error("digit {0} out of range")]
    DigitRange(u8),
    #[error("trace arrays disagree: {0}")]
    Inconsistent(String),
}

/// One cell of the recording grid: which room, router position, Wi-Fi
/// channel and reflector orientation a trace was captured under.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct DomainKey {
    pub room: u8,
    pub position: u8,
    pub channel: u16,
    pub reflector: u16,
}

impl DomainKey {
    pub fn new(room: u8, position: u8, channel: u16, reflector: u16) -> Result<Self, TraceError> {
        if room >= N_ROOMS {
            return Err(TraceError::BadDomain(format!("room {room}")));
        }
        if position >= N_POSITIONS {
            return Err(TraceError::BadDomain(format!("position {position}")));
        }
        if !CHANNELS.contains(&channel) {
            return Err(TraceError::BadDomain(format!("channel {channel}")));
        }
        if !REFLECTOR_ANGLES.contains(&reflector) {
            return Err(TraceError::BadDomain(format!("reflector {reflector}")));
        }
        Ok(Self {
            room,
            position,
            channel,
            reflector,
        })
    }

    /// All 960 cells of the full grid in lexicographic order.
    pub fn full_grid() -> Vec<DomainKey> {
        let mut keys = Vec::with_capacity(960);
        for room in 0..N_ROOMS {
            for position in 0..N_POSITIONS {
                for channel in CHANNELS {
                    for reflector in REFLECTOR_ANGLES {
                        keys.push(DomainKey {
                            room,
                            position,
                            channel,
                            reflector,
                        });
                    }
                }
            }
        }
        keys
    }

    /// Value of one factor, as an index into that factor's instance list.
    pub fn factor_instance(&self, factor: Factor) -> usize {
        match factor {
            Factor::Room => self.room as usize,
            Factor::Position => self.position as usize,
            Factor::Channel => CHANNELS.iter().position(|&c| c == self.channel).unwrap(),
            Factor::Reflector => REFLECTOR_ANGLES
                .iter()
                .position(|&a| a == self.reflector)
                .unwrap(),
        }
    }
}

impl std::fmt::Display for DomainKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "r{:02}p{}c{}a{:02}",
            self.room, self.position, self.channel, self.reflector
        )
    }
}

/// One of the four varied recording factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Factor {
    Room,
    Position,
    Channel,
    Reflector,
}

impl Factor {
    /// How many instances the full grid has for this factor.
    pub fn cardinality(&self) -> usize {
        match self {
            Factor::Room => N_ROOMS as usize,
            Factor::Position => N_POSITIONS as usize,
            Factor::Channel => CHANNELS.len(),
            Factor::Reflector => REFLECTOR_ANGLES.len(),
        }
    }
}

/// A full PIN-entry recording: the feedback report stream, its reconstructed
/// matrices, and ground truth labels.
///
/// `matrices` holds the quantized reconstruction (what an eavesdropper can
/// rebuild from payload bytes), shape `[t, n_sub, n_tx, n_stream]`.
#[derive(Debug, Clone)]
pub struct PinTrace {
    pub id: String,
    pub config: StreamConfig,
    pub codebook: Codebook,
    /// Samples per second of the report stream.
    pub sample_rate: f64,
    pub domain: DomainKey,
    pub reports: Vec<AngleReport>,
    pub matrices: Array4<Complex64>,
    /// Sample index of each keystroke, strictly increasing.
    pub keystrokes: Vec<usize>,
    /// The PIN digits, one per keystroke.
    pub digits: Vec<u8>,
    /// Fingertip position per sample when the trace came from the simulator.
    pub hand_track: Option<Vec<[f64; 3]>>,
}

impl PinTrace {
    /// Validates cross-field consistency. Call after assembling by hand;
    /// simulator and store outputs are already consistent.
    pub fn validate(&self) -> Result<(), TraceError> {
        let t = self.reports.len();
        let dims = self.matrices.dim();
        if dims.0 != t || dims.1 != self.config.n_sub {
            return Err(TraceError::Inconsistent(format!(
                "{} reports vs matrix dims {:?}",
                t, dims
            )));
        }
        if dims.2 != self.config.n_tx || dims.3 != self.config.n_stream {
            return Err(TraceError::Inconsistent(format!(
                "matrix dims {:?} vs config {:?}",
                dims, self.config
            )));
        }
        if self.digits.len() != PIN_LEN || self.keystrokes.len() != PIN_LEN {
            return Err(TraceError::LabelCount {
                digits: self.digits.len(),
                keystrokes: self.keystrokes.len(),
            });
        }
        if !self
            .keystrokes
            .windows(2)
            .all(|w| w[0] < w[1])
            || self.keystrokes.last().is_some_and(|&k| k >= t)
        {
            return Err(TraceError::KeystrokeOrder);
        }
        if let Some(d) = self.digits.iter().find(|&&d| d > 9) {
            return Err(TraceError::DigitRange(*d));
        }
        if let Some(track) = &self.hand_track {
            if track.len() != t {
                return Err(TraceError::Inconsistent(format!(
                    "hand track length {} vs {} samples",
                    track.len(),
                    t
                )));
            }
        }
        Ok(())
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    /// Keystroke gaps in samples, one per digit transition.
    pub fn keystroke_gaps(&self) -> Vec<usize> {
        self.keystrokes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// The PIN as a display string, e.g. "401923".
    pub fn pin_string(&self) -> String {
        self.digits.iter().map(|d| (b'0' + d) as char).collect()
    }
}

/// A feature window around one keystroke, carrying everything the attack
/// methods need about it.
#[derive(Debug, Clone)]
pub struct Segment {
    /// Feature rows, shape `[len, channels]`. The window is clipped at trace
    /// boundaries, so `len` varies between 1 and `2 * width + 1`.
    pub frames: ndarray::Array2<f64>,
    /// Ground truth digit of the centered keystroke.
    pub digit: u8,
    /// Row of the keystroke inside `frames`.
    pub center: usize,
    /// Requested half-window size.
    pub width: usize,
    pub domain: DomainKey,
    /// Digits typed immediately before and after, when they exist.
    pub neighbors: (Option<u8>, Option<u8>),
}
