//! Fingertip trajectory planning for a PIN entry.
//!
//! Every inter-key move takes `per_digit_duration` seconds and follows a
//! lift / transit / descend polyline at constant path speed: rise vertically
//! to the lift height, travel level to above the target key, sink onto it.
//! The keystroke happens at the moment of contact. Entry and exit points are
//! randomized a little above the plane so no two traces start identically.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::{Keypad, SimError};
use crate::trace::PIN_LEN;

/// Parameters of one simulated PIN entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TypingPlan {
    pub digits: Vec<u8>,
    /// Seconds per digit, which is also the entry and exit move duration.
    pub per_digit_duration: f64,
    /// Feedback report rate in Hz.
    pub sample_rate: f64,
    /// Peak fingertip height above the typing plane during moves, meters.
    pub lift_height: f64,
    /// Height of the randomized entry and exit hover points, meters.
    pub start_height: f64,
    /// Elevation of the typing plane itself.
    pub plane_z: f64,
    pub keypad: Keypad,
    pub rng_seed: u64,
}

impl TypingPlan {
    pub fn new(digits: Vec<u8>, rng_seed: u64) -> Self {
        Self {
            digits,
            per_digit_duration: 0.8,
            sample_rate: 18.0,
            lift_height: 0.020,
            start_height: 0.010,
            plane_z: 0.0,
            keypad: Keypad::default(),
            rng_seed,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.digits.len() != PIN_LEN {
            return Err(SimError::BadPlan(format!(
                "expected {PIN_LEN} digits, got {}",
                self.digits.len()
            )));
        }
        if let Some(&d) = self.digits.iter().find(|&&d| d > 9) {
            return Err(SimError::BadPlan(format!("digit {d} out of range")));
        }
        if !(self.per_digit_duration > 0.0) || !(self.sample_rate > 0.0) {
            return Err(SimError::BadPlan("durations and rate must be positive".into()));
        }
        if !(self.lift_height > 0.0) || self.start_height < 0.0 || self.start_height > self.lift_height
        {
            return Err(SimError::BadPlan(
                "need 0 <= start_height <= lift_height, lift_height > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Sampled fingertip path plus the exact keystroke schedule.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub sample_rate: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub keystroke_times: Vec<f64>,
    pub keystroke_samples: Vec<usize>,
}

/// Lift / transit / descend polyline between two points.
struct Move {
    from: Vector3<f64>,
    to: Vector3<f64>,
    apex: f64,
}

impl Move {
    fn lengths(&self) -> (f64, f64, f64) {
        let rise = self.apex - self.from.z;
        let level = (Vector2::new(self.to.x, self.to.y) - Vector2::new(self.from.x, self.from.y))
            .norm();
        let sink = self.apex - self.to.z;
        (rise, level, sink)
    }

    /// Position after covering fraction `u` of the total path length.
    fn at(&self, u: f64) -> Vector3<f64> {
        let (rise, level, sink) = self.lengths();
        let total = rise + level + sink;
        if total == 0.0 {
            return self.from;
        }
        let d = u.clamp(0.0, 1.0) * total;
        if d <= rise {
            Vector3::new(self.from.x, self.from.y, self.from.z + d)
        } else if d <= rise + level {
            let f = (d - rise) / level;
            Vector3::new(
                self.from.x + f * (self.to.x - self.from.x),
                self.from.y + f * (self.to.y - self.from.y),
                self.apex,
            )
        } else {
            let remaining = rise + level + sink - d;
            Vector3::new(self.to.x, self.to.y, self.to.z + remaining)
        }
    }
}

/// Expands a typing plan into a sampled trajectory.
///
/// The timeline is: one move from the entry hover point to the first key,
/// one move per further digit, then one move to the exit hover point. Each
/// takes `per_digit_duration`, so keystroke `k` lands exactly at
/// `(k + 1) * per_digit_duration`.
pub fn plan_trajectory(plan: &TypingPlan) -> Result<Trajectory, SimError> {
    plan.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(plan.rng_seed);
    let (lo, hi) = plan.keypad.bounds();
    let hover = |rng: &mut ChaCha12Rng| {
        Vector3::new(
            rng.random_range(lo.x..=hi.x),
            rng.random_range(lo.y..=hi.y),
            plan.plane_z + plan.start_height,
        )
    };
    let entry = hover(&mut rng);
    let exit = hover(&mut rng);

    let mut waypoints = vec![entry];
    for &d in &plan.digits {
        let key = plan.keypad.key_center(d)?;
        waypoints.push(Vector3::new(key.x, key.y, plan.plane_z));
    }
    waypoints.push(exit);

    let apex = plan.plane_z + plan.lift_height;
    let moves: Vec<Move> = waypoints
        .windows(2)
        .map(|w| Move {
            from: w[0],
            to: w[1],
            apex,
        })
        .collect();

    let dur = plan.per_digit_duration;
    let total = dur * moves.len() as f64;
    let n_samples = (total * plan.sample_rate).floor() as usize + 1;

    let mut times = Vec::with_capacity(n_samples);
    let mut positions = Vec::with_capacity(n_samples);
    for n in 0..n_samples {
        let t = n as f64 / plan.sample_rate;
        let seg = ((t / dur).floor() as usize).min(moves.len() - 1);
        let u = (t - seg as f64 * dur) / dur;
        times.push(t);
        positions.push(moves[seg].at(u));
    }

    let keystroke_times: Vec<f64> = (1..=plan.digits.len()).map(|k| k as f64 * dur).collect();
    let keystroke_samples: Vec<usize> = keystroke_times
        .iter()
        .map(|&t| (t * plan.sample_rate).round() as usize)
        .collect();
    if keystroke_samples.windows(2).any(|w| w[0] >= w[1])
        || keystroke_samples.last().is_some_and(|&k| k >= n_samples)
    {
        return Err(SimError::BadPlan(
            "sample rate too low to separate keystrokes".into(),
        ));
    }

    Ok(Trajectory {
        sample_rate: plan.sample_rate,
        times,
        positions,
        keystroke_times,
        keystroke_samples,
    })
}
