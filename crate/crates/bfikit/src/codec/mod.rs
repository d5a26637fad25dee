//! Compressed beamforming feedback codec.
//!
//! Beamformees do not report the steering matrix V directly. Each per
//! subcarrier matrix is decomposed into a ladder of Givens rotations and only
//! the quantized rotation angles are fed back. This module implements both
//! directions of that transform and the packed byte layout used for captured
//! payloads:
//!
//! * [`decompress`] rebuilds the complex matrix from an [`AngleReport`],
//! * [`compress`] extracts and quantizes angles from a matrix,
//! * [`parse_payload`] / [`serialize_payload`] handle the wire bytes.
//!
//! Angles come in two kinds. Phi angles carry column phases and live on a
//! grid over (0, 2pi); psi angles are Givens rotation angles on a grid over
//! (0, pi/2). Their bit widths are tied: every standard codebook uses
//! `bits_phi = bits_psi + 2`.

mod ladder;
mod payload;
mod quant;

pub use ladder::{compress, decompress};
pub use payload::{parse_payload, payload_len, serialize_payload, ReportRecord};
pub use quant::{dequantize, quantize, AngleKind};

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid stream config: n_tx={n_tx}, n_stream={n_stream}, n_sub={n_sub}")]
    InvalidConfig {
        n_tx: usize,
        n_stream: usize,
        n_sub: usize,
    },
    #[error("unsupported codebook ({bits_phi}, {bits_psi})")]
    InvalidCodebook { bits_phi: u8, bits_psi: u8 },
    #[error("angle index {index} does not fit in {bits} bits")]
    IndexOutOfRange { index: u16, bits: u8 },
    #[error("angle table is {got_rows}x{got_cols}, expected {want_rows}x{want_cols}")]
    AngleShape {
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("matrix shape {got:?}, expected {want:?}")]
    MatrixShape {
        got: (usize, usize, usize),
        want: (usize, usize, usize),
    },
    #[error("matrix columns not orthonormal (worst deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("last-row phase convention violated (|Im| = {imag:.3e} at subcarrier {subcarrier})")]
    PhaseConvention { subcarrier: usize, imag: f64 },
    #[error("payload is {got} bytes, expected {want}")]
    TruncatedPayload { got: usize, want: usize },
    #[error("nonzero padding bits in final payload byte")]
    ReservedBits,
    #[error("bad payload hex: {0}")]
    BadHex(String),
}

/// Number of angles a single subcarrier report carries for the given antenna
/// configuration.
///
/// The ladder walks columns `i = 1..=min(n_stream, n_tx - 1)` and each column
/// contributes `n_tx - i` phi angles plus `n_tx - i` psi angles.
pub fn angle_count(n_tx: usize, n_stream: usize) -> Result<usize, CodecError> {
    if n_tx < 2 || n_stream == 0 || n_stream > n_tx {
        return Err(CodecError::InvalidConfig {
            n_tx,
            n_stream,
            n_sub: 0,
        });
    }
    let m = n_stream.min(n_tx - 1);
    Ok((1..=m).map(|i| 2 * (n_tx - i)).sum())
}

/// Kind of each angle in report column order, matching the layout
/// [`decompress`] consumes.
pub fn angle_pattern(n_tx: usize, n_stream: usize) -> Result<Vec<AngleKind>, CodecError> {
    angle_count(n_tx, n_stream)?;
    Ok(ladder::ladder_steps(n_tx, n_stream)
        .iter()
        .map(|step| step.kind)
        .collect())
}

/// Antenna and subcarrier layout of one feedback stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamConfig {
    pub n_tx: usize,
    pub n_stream: usize,
    pub n_sub: usize,
}

impl StreamConfig {
    pub fn new(n_tx: usize, n_stream: usize, n_sub: usize) -> Result<Self, CodecError> {
        if n_sub == 0 {
            return Err(CodecError::InvalidConfig {
                n_tx,
                n_stream,
                n_sub,
            });
        }
        angle_count(n_tx, n_stream).map_err(|_| CodecError::InvalidConfig {
            n_tx,
            n_stream,
            n_sub,
        })?;
        Ok(Self {
            n_tx,
            n_stream,
            n_sub,
        })
    }

    /// Angles per subcarrier for this configuration.
    pub fn angles_per_subcarrier(&self) -> usize {
        angle_count(self.n_tx, self.n_stream).expect("validated at construction")
    }
}

/// Quantizer bit widths for the two angle kinds.
///
/// Only the four standard pairs are representable. Wider grids reconstruct
/// the steering matrix more faithfully.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Codebook {
    bits_phi: u8,
    bits_psi: u8,
}

impl Codebook {
    /// All standard codebooks, coarsest first.
    pub const ALL: [Codebook; 4] = [
        Codebook {
            bits_phi: 4,
            bits_psi: 2,
        },
        Codebook {
            bits_phi: 6,
            bits_psi: 4,
        },
        Codebook {
            bits_phi: 7,
            bits_psi: 5,
        },
        Codebook {
            bits_phi: 9,
            bits_psi: 7,
        },
    ];

    pub fn new(bits_phi: u8, bits_psi: u8) -> Result<Self, CodecError> {
        let cb = Codebook { bits_phi, bits_psi };
        if Self::ALL.contains(&cb) {
            Ok(cb)
        } else {
            Err(CodecError::InvalidCodebook { bits_phi, bits_psi })
        }
    }

    pub fn bits_phi(&self) -> u8 {
        self.bits_phi
    }

    pub fn bits_psi(&self) -> u8 {
        self.bits_psi
    }
}

impl Default for Codebook {
    /// The finest grid, which is what commodity capture setups observe.
    fn default() -> Self {
        Codebook {
            bits_phi: 9,
            bits_psi: 7,
        }
    }
}

/// One quantized feedback report: an index table of shape
/// `[n_sub, angles_per_subcarrier]` plus capture time in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleReport {
    pub config: StreamConfig,
    pub codebook: Codebook,
    pub timestamp: f64,
    angles: Array2<u16>,
}

impl AngleReport {
    pub fn new(
        config: StreamConfig,
        codebook: Codebook,
        timestamp: f64,
        angles: Array2<u16>,
    ) -> Result<Self, CodecError> {
        let want = (config.n_sub, config.angles_per_subcarrier());
        if angles.dim() != want {
            return Err(CodecError::AngleShape {
                got_rows: angles.dim().0,
                got_cols: angles.dim().1,
                want_rows: want.0,
                want_cols: want.1,
            });
        }
        let steps = ladder::ladder_steps(config.n_tx, config.n_stream);
        for row in angles.rows() {
            for (step, &index) in steps.iter().zip(row.iter()) {
                let bits = match step.kind {
                    quant::AngleKind::Phi => codebook.bits_phi,
                    quant::AngleKind::Psi => codebook.bits_psi,
                };
                if index >= 1 << bits {
                    return Err(CodecError::IndexOutOfRange { index, bits });
                }
            }
        }
        Ok(Self {
            config,
            codebook,
            timestamp,
            angles,
        })
    }

    pub fn angles(&self) -> &Array2<u16> {
        &self.angles
    }

    /// Total number of angle indices in the report.
    pub fn total_angles(&self) -> usize {
        self.angles.len()
    }
}

/// Complex steering matrix stack, shape `[n_sub, n_tx, n_stream]`.
///
/// Columns of every per subcarrier matrix are orthonormal within 1e-6, and
/// the last transmit row is real (the per-column phase convention the ladder
/// representation forces).
#[derive(Debug, Clone, PartialEq)]
pub struct BfiMatrix {
    pub config: StreamConfig,
    values: Array3<Complex64>,
}

/// Column orthonormality tolerance enforced on [`BfiMatrix`].
pub const ORTHONORMALITY_TOL: f64 = 1e-6;

impl BfiMatrix {
    pub fn new(config: StreamConfig, values: Array3<Complex64>) -> Result<Self, CodecError> {
        let want = (config.n_sub, config.n_tx, config.n_stream);
        if values.dim() != want {
            return Err(CodecError::MatrixShape {
                got: values.dim(),
                want,
            });
        }
        let deviation = worst_orthonormality_deviation(&values, config);
        if deviation > ORTHONORMALITY_TOL {
            return Err(CodecError::NotOrthonormal { deviation });
        }
        for (s, sub) in values.outer_iter().enumerate() {
            for c in 0..config.n_stream {
                let imag = sub[(config.n_tx - 1, c)].im.abs();
                if imag > 1e-9 {
                    return Err(CodecError::PhaseConvention {
                        subcarrier: s,
                        imag,
                    });
                }
            }
        }
        Ok(Self { config, values })
    }

    /// Builds a matrix from arbitrary orthonormal input by rotating each
    /// column so its last-row entry becomes real and non-negative.
    pub fn with_phase_convention(
        config: StreamConfig,
        mut values: Array3<Complex64>,
    ) -> Result<Self, CodecError> {
        let want = (config.n_sub, config.n_tx, config.n_stream);
        if values.dim() != want {
            return Err(CodecError::MatrixShape {
                got: values.dim(),
                want,
            });
        }
        let last = config.n_tx - 1;
        for mut sub in values.outer_iter_mut() {
            for c in 0..config.n_stream {
                let z = sub[(last, c)];
                if z.norm() == 0.0 {
                    continue;
                }
                let rot = (Complex64::new(0.0, -z.arg())).exp();
                for r in 0..config.n_tx {
                    sub[(r, c)] *= rot;
                }
                // Kill the rotation residue so the convention holds exactly.
                sub[(last, c)] = Complex64::new(z.norm(), 0.0);
            }
        }
        Self::new(config, values)
    }

    pub fn values(&self) -> &Array3<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> Array3<Complex64> {
        self.values
    }
}

fn worst_orthonormality_deviation(values: &Array3<Complex64>, config: StreamConfig) -> f64 {
    let mut worst: f64 = 0.0;
    for sub in values.outer_iter() {
        for a in 0..config.n_stream {
            for b in a..config.n_stream {
                let mut dot = Complex64::new(0.0, 0.0);
                for r in 0..config.n_tx {
                    dot += sub[(r, a)].conj() * sub[(r, b)];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot.norm() - target).abs());
            }
        }
    }
    worst
}
