//! Static capture-cell description: antenna layout, reflector set, carrier.
//!
//! A [`Scene`] captures everything about a recording cell except the hand
//! motion itself. The four grid factors (room, router position, Wi-Fi
//! channel, foil orientation) map onto it via [`Scene::from_domain`]; all
//! geometry is deterministic in the scene fields so renders reproduce.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::SimError;
use crate::trace::{DomainKey, CHANNELS};

/// Subcarriers reported per feedback frame.
pub const DEFAULT_N_SUB: usize = 234;

/// Subcarrier spacing in Hz.
pub const SUBCARRIER_SPACING_HZ: f64 = 312_500.0;

/// Nominal router-to-phone distance in meters.
pub const DEFAULT_ROUTER_DISTANCE: f64 = 1.5;

/// Room-drawn single-bounce reflectors per scene.
pub const DEFAULT_ENV_PATHS: usize = 6;

/// Spacing of the router's linear antenna array, meters.
pub const ROUTER_ELEMENT_SPACING: f64 = 0.035;

/// Router antenna count.
pub const N_ROUTER_ELEMENTS: usize = 4;

/// Phone antenna count.
pub const N_PHONE_ANTENNAS: usize = 2;

/// Half the phone's antenna separation (140 mm edge-to-edge), meters.
const PHONE_ANTENNA_HALF_SPAN: f64 = 0.07;

/// Fixed mount point of the orientable foil reflector.
const FOIL_POSITION: Vector3<f64> = Vector3::new(-0.8, 0.6, 0.3);

/// Reflection magnitude of the foil.
const FOIL_GAIN: f64 = 0.9;

/// One single-bounce path scatterer.
///
/// `normal` is `Some` only for the orientable foil; its reflection is
/// strongest when the normal bisects the two ray directions. Plain room
/// reflectors scatter isotropically.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflector {
    pub position: Vector3<f64>,
    pub gain: Complex64,
    pub normal: Option<Vector3<f64>>,
}

impl Reflector {
    /// Orientation factor for a bounce seen from `a` and `b`.
    ///
    /// Cosine-squared of the angle between the surface normal and the
    /// half-vector of the two ray directions, so it is symmetric in the
    /// endpoints and peaks at the specular condition. Isotropic reflectors
    /// return 1.
    pub fn orientation_gain(&self, a: Vector3<f64>, b: Vector3<f64>) -> f64 {
        let Some(normal) = self.normal else {
            return 1.0;
        };
        let u = (a - self.position).normalize();
        let v = (b - self.position).normalize();
        let half = u + v;
        let norm = half.norm();
        if norm < 1e-12 {
            return 0.0;
        }
        let c = normal.dot(&half) / norm;
        c * c
    }
}

/// Everything about a capture cell except the hand.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Draws the room's static reflector set.
    pub room_seed: u64,
    /// Foil orientation in degrees.
    pub reflector_angle_deg: f64,
    /// Router offset along its 1 m placement axis, meters.
    pub router_position: f64,
    /// Free-form override for the router array center.
    pub router_override: Option<Vector3<f64>>,
    /// 5 GHz channel number.
    pub channel_id: u16,
    /// Nominal router-to-phone distance, meters.
    pub router_phone_distance: f64,
    /// Report SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    /// Room-drawn reflectors in addition to the foil.
    pub n_env_paths: usize,
    pub n_sub: usize,
}

impl Scene {
    /// Scene for one cell of the recording grid.
    pub fn from_domain(key: &DomainKey, snr_db: f64) -> Self {
        Self {
            room_seed: key.room as u64,
            reflector_angle_deg: key.reflector as f64,
            router_position: key.position as f64 * 0.25,
            router_override: None,
            channel_id: key.channel,
            router_phone_distance: DEFAULT_ROUTER_DISTANCE,
            snr_db,
            n_env_paths: DEFAULT_ENV_PATHS,
            n_sub: DEFAULT_N_SUB,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !CHANNELS.contains(&self.channel_id) {
            return Err(SimError::BadScene(format!(
                "unknown channel {}",
                self.channel_id
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(SimError::BadScene("snr_db must be a real dB value".into()));
        }
        if self.router_override.is_none() && !(0.0..=1.0).contains(&self.router_position) {
            return Err(SimError::BadScene(format!(
                "router_position {} outside the 1 m axis",
                self.router_position
            )));
        }
        if !(self.router_phone_distance > 0.0) {
            return Err(SimError::BadScene("router distance must be positive".into()));
        }
        if self.n_sub == 0 {
            return Err(SimError::BadScene("need at least one subcarrier".into()));
        }
        Ok(())
    }

    /// Carrier frequency from the 5 GHz channel map, Hz.
    pub fn carrier_hz(&self) -> f64 {
        (5000.0 + 5.0 * self.channel_id as f64) * 1e6
    }

    /// Per-subcarrier frequencies, symmetric around the carrier.
    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        let fc = self.carrier_hz();
        let half = (self.n_sub as f64 - 1.0) / 2.0;
        (0..self.n_sub)
            .map(|k| fc + (k as f64 - half) * SUBCARRIER_SPACING_HZ)
            .collect()
    }

    /// Instantiates the antenna and reflector geometry.
    ///
    /// The phone lies flat with key '5' at the origin; its two antennas sit
    /// on the x axis. The router's four-element array runs parallel to it at
    /// `router_phone_distance`, shifted along x by the placement axis. The
    /// foil is always `reflectors[0]`; room reflectors follow in draw order.
    pub fn geometry(&self) -> Result<SceneGeometry, SimError> {
        self.validate()?;
        let phone_antennas: Vec<Vector3<f64>> = (0..N_PHONE_ANTENNAS)
            .map(|i| {
                let off = (2.0 * i as f64 - (N_PHONE_ANTENNAS as f64 - 1.0))
                    * PHONE_ANTENNA_HALF_SPAN;
                Vector3::new(off, 0.0, 0.0)
            })
            .collect();

        let center = self.router_override.unwrap_or(Vector3::new(
            self.router_position - 0.5,
            self.router_phone_distance,
            0.0,
        ));
        let router_elements: Vec<Vector3<f64>> = (0..N_ROUTER_ELEMENTS)
            .map(|i| {
                let off = (i as f64 - (N_ROUTER_ELEMENTS as f64 - 1.0) / 2.0)
                    * ROUTER_ELEMENT_SPACING;
                center + Vector3::new(off, 0.0, 0.0)
            })
            .collect();

        let theta = self.reflector_angle_deg.to_radians();
        let mut reflectors = vec![Reflector {
            position: FOIL_POSITION,
            gain: Complex64::new(FOIL_GAIN, 0.0),
            normal: Some(Vector3::new(theta.sin(), -theta.cos(), 0.0)),
        }];

        // Room reflectors: range, azimuth, height, gain magnitude, gain
        // phase, drawn in that order per reflector.
        let mut rng = ChaCha12Rng::seed_from_u64(self.room_seed);
        for _ in 0..self.n_env_paths {
            let r = rng.random_range(1.5..4.0);
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let z = rng.random_range(0.2..2.5);
            let mag = rng.random_range(0.3..0.9);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            reflectors.push(Reflector {
                position: Vector3::new(r * az.cos(), r * az.sin(), z),
                gain: Complex64::from_polar(mag, phase),
                normal: None,
            });
        }

        Ok(SceneGeometry {
            router_elements,
            phone_antennas,
            reflectors,
        })
    }
}

/// Concrete positions realized from a [`Scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub router_elements: Vec<Vector3<f64>>,
    pub phone_antennas: Vec<Vector3<f64>>,
    /// Foil first, then room-drawn reflectors.
    pub reflectors: Vec<Reflector>,
}
