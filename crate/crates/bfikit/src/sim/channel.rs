//! Multipath channel synthesis over the scene geometry.
//!
//! Each propagation path contributes `(1/d) e^{-j 2 pi f d / c}` per
//! free-space segment at subcarrier frequency `f`. The channel splits into
//! a direct part (router to phone), an environment part (one bounce off
//! each static reflector), and a hand part (one bounce off each hand
//! scatterer); the total is exactly their sum.

use nalgebra::Vector3;
use ndarray::Array3;
use num_complex::Complex64;

use super::scene::{Scene, SceneGeometry};
use super::{SimError, LIGHT_SPEED, MIN_PATH_LENGTH};

/// Free-space gain of one segment of length `d` at frequency `f`.
pub fn segment_gain(d: f64, f: f64) -> Result<Complex64, SimError> {
    if !(d >= MIN_PATH_LENGTH) {
        return Err(SimError::DegenerateGeometry(d));
    }
    let phase = -std::f64::consts::TAU * f * d / LIGHT_SPEED;
    Ok(Complex64::from_polar(1.0 / d, phase))
}

/// One point scatterer of the hand, placed relative to the fingertip.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatterer {
    pub offset: Vector3<f64>,
    pub reflectivity: Complex64,
}

/// Point-scatterer stand-in for the typing hand.
#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    pub scatterers: Vec<Scatterer>,
}

impl Default for HandModel {
    /// Fingertip plus knuckle and palm trailing behind and above it.
    fn default() -> Self {
        Self {
            scatterers: vec![
                Scatterer {
                    offset: Vector3::new(0.0, 0.0, 0.0),
                    reflectivity: Complex64::new(0.8, 0.0),
                },
                Scatterer {
                    offset: Vector3::new(0.0, -0.025, 0.015),
                    reflectivity: Complex64::new(0.5, 0.0),
                },
                Scatterer {
                    offset: Vector3::new(0.0, -0.070, 0.040),
                    reflectivity: Complex64::new(0.9, 0.0),
                },
            ],
        }
    }
}

impl HandModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.scatterers.is_empty() {
            return Err(SimError::BadScene("hand needs at least one scatterer".into()));
        }
        if let Some(s) = self.scatterers.iter().find(|s| s.reflectivity.norm() > 1.0) {
            return Err(SimError::BadScene(format!(
                "scatterer reflectivity {} exceeds unit magnitude",
                s.reflectivity.norm()
            )));
        }
        Ok(())
    }
}

/// Additive pieces of the channel, each `[n_sub x n_tx x n_rx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub direct: Array3<Complex64>,
    pub environment: Array3<Complex64>,
    pub hand: Array3<Complex64>,
}

/// Channel grid for one instant, `[n_sub x n_tx x n_rx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub h: Array3<Complex64>,
    pub components: Option<Components>,
}

/// Synthesizes the channel for one fingertip position.
///
/// `hand: None` renders the empty-desk control. Components are always
/// retained; the total is their elementwise sum.
pub fn synth_channel(
    scene: &Scene,
    hand: Option<&HandModel>,
    fingertip: Vector3<f64>,
    freqs: &[f64],
) -> Result<ChannelSample, SimError> {
    let geom = scene.geometry()?;
    synth_channel_in(&geom, hand, fingertip, freqs)
}

/// Same as [`synth_channel`] for a prebuilt geometry, so per-sample render
/// loops skip redrawing the reflector set.
pub fn synth_channel_in(
    geom: &SceneGeometry,
    hand: Option<&HandModel>,
    fingertip: Vector3<f64>,
    freqs: &[f64],
) -> Result<ChannelSample, SimError> {
    if let Some(hand) = hand {
        hand.validate()?;
    }
    let n_sub = freqs.len();
    let n_tx = geom.router_elements.len();
    let n_rx = geom.phone_antennas.len();
    let mut direct = Array3::zeros((n_sub, n_tx, n_rx));
    let mut environment = Array3::zeros((n_sub, n_tx, n_rx));
    let mut hand_part = Array3::zeros((n_sub, n_tx, n_rx));

    for (ti, &tx) in geom.router_elements.iter().enumerate() {
        for (ri, &rx) in geom.phone_antennas.iter().enumerate() {
            let d_los = check_len((tx - rx).norm())?;
            for (k, &f) in freqs.iter().enumerate() {
                direct[(k, ti, ri)] = path_gain(&[d_los], f);
            }

            for refl in &geom.reflectors {
                let d_in = check_len((refl.position - tx).norm())?;
                let d_out = check_len((rx - refl.position).norm())?;
                let g = refl.gain * refl.orientation_gain(tx, rx);
                for (k, &f) in freqs.iter().enumerate() {
                    environment[(k, ti, ri)] += g * path_gain(&[d_in, d_out], f);
                }
            }

            if let Some(hand) = hand {
                for sc in &hand.scatterers {
                    let p = fingertip + sc.offset;
                    let d_in = check_len((p - tx).norm())?;
                    let d_out = check_len((rx - p).norm())?;
                    for (k, &f) in freqs.iter().enumerate() {
                        hand_part[(k, ti, ri)] +=
                            sc.reflectivity * path_gain(&[d_in, d_out], f);
                    }
                }
            }
        }
    }

    let h = &direct + &environment + &hand_part;
    Ok(ChannelSample {
        h,
        components: Some(Components {
            direct,
            environment,
            hand: hand_part,
        }),
    })
}

fn check_len(d: f64) -> Result<f64, SimError> {
    if !(d >= MIN_PATH_LENGTH) {
        return Err(SimError::DegenerateGeometry(d));
    }
    Ok(d)
}

/// Product of per-segment free-space gains, lengths pre-validated.
fn path_gain(segments: &[f64], f: f64) -> Complex64 {
    let mut amp = 1.0;
    let mut phase = 0.0;
    for &d in segments {
        amp /= d;
        phase -= std::f64::consts::TAU * f * d / LIGHT_SPEED;
    }
    Complex64::from_polar(amp, phase)
}
