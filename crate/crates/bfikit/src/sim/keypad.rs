//! Numeric keypad geometry on the typing plane.

use nalgebra::Vector2;

use super::SimError;

/// Key-center map of the standard phone PIN pad:
///
/// ```text
/// 1 2 3
/// 4 5 6
/// 7 8 9
///   0
/// ```
///
/// The '5' key sits at `center`; columns are `pitch_x` apart and rows
/// `pitch_y`. `scale` grows or shrinks the whole pad, which mirrors on-screen
/// pad size experiments (useful range roughly 0.5 to 2).
#[derive(Debug, Clone, PartialEq)]
pub struct Keypad {
    pub pitch_x: f64,
    pub pitch_y: f64,
    pub center: Vector2<f64>,
    pub scale: f64,
}

impl Default for Keypad {
    fn default() -> Self {
        Self {
            pitch_x: 0.023,
            pitch_y: 0.018,
            center: Vector2::new(0.0, 0.0),
            scale: 1.0,
        }
    }
}

impl Keypad {
    /// Planar position of a digit's key center.
    pub fn key_center(&self, digit: u8) -> Result<Vector2<f64>, SimError> {
        let (col, row) = match digit {
            1..=9 => (((digit - 1) % 3) as f64 - 1.0, ((digit - 1) / 3) as f64 - 1.0),
            0 => (0.0, 2.0),
            _ => return Err(SimError::BadPlan(format!("digit {digit} out of range"))),
        };
        Ok(Vector2::new(
            self.center.x + self.scale * self.pitch_x * col,
            self.center.y - self.scale * self.pitch_y * row,
        ))
    }

    /// Euclidean distance between two key centers in meters.
    pub fn key_distance(&self, a: u8, b: u8) -> Result<f64, SimError> {
        Ok((self.key_center(a)? - self.key_center(b)?).norm())
    }

    /// Bounding box of all key centers: `(min, max)` corners.
    pub fn bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        let mut min = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for d in 0..=9 {
            let p = self.key_center(d).expect("digits 0..=9 are valid");
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }
}
