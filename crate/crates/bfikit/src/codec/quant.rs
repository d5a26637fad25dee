//! Angle quantization grids.
//!
//! For a phi field of `b` bits the representable values are
//! `k * pi / 2^(b-1) + pi / 2^b`, a uniform grid over (0, 2pi) that is
//! symmetric about pi. Psi fields of `b` bits use
//! `k * pi / 2^(b+1) + pi / 2^(b+2)`, covering (0, pi/2). Neither grid
//! contains its interval endpoints.

use std::f64::consts::PI;

use super::{Codebook, CodecError};

/// Which of the two ladder angle families an index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleKind {
    Phi,
    Psi,
}

fn grid(kind: AngleKind, cb: Codebook) -> (f64, f64, u32) {
    // (step, offset, bits)
    match kind {
        AngleKind::Phi => {
            let b = cb.bits_phi() as u32;
            (PI / (1u64 << (b - 1)) as f64, PI / (1u64 << b) as f64, b)
        }
        AngleKind::Psi => {
            let b = cb.bits_psi() as u32;
            (
                PI / (1u64 << (b + 1)) as f64,
                PI / (1u64 << (b + 2)) as f64,
                b,
            )
        }
    }
}

/// Maps a quantizer index to its angle in radians.
pub fn dequantize(index: u16, kind: AngleKind, cb: Codebook) -> Result<f64, CodecError> {
    let (step, offset, bits) = grid(kind, cb);
    if u32::from(index) >= 1 << bits {
        return Err(CodecError::IndexOutOfRange {
            index,
            bits: bits as u8,
        });
    }
    Ok(f64::from(index) * step + offset)
}

/// Maps an angle to the nearest grid index.
///
/// Phi wraps modulo 2pi, so values near zero may quantize to the top of the
/// grid; psi is clamped to its range instead. Exact midpoints resolve to the
/// lower index.
pub fn quantize(value: f64, kind: AngleKind, cb: Codebook) -> u16 {
    let (step, offset, bits) = grid(kind, cb);
    let levels = i64::from(1u32 << bits);
    match kind {
        AngleKind::Phi => {
            let v = value.rem_euclid(2.0 * PI);
            let pos = (v - offset) / step;
            let k0 = pos.floor();
            let frac = pos - k0;
            let k0 = k0 as i64;
            let k = if frac < 0.5 {
                k0
            } else if frac > 0.5 {
                k0 + 1
            } else {
                // Exact midpoint: the tie goes to the lower index after the
                // modular wrap, which matters at the 2pi boundary.
                return k0.rem_euclid(levels).min((k0 + 1).rem_euclid(levels)) as u16;
            };
            k.rem_euclid(levels) as u16
        }
        AngleKind::Psi => {
            let pos = (value - offset) / step;
            // Round to nearest with exact halves going down, then clamp.
            let k = (pos - 0.5).ceil() as i64;
            k.clamp(0, levels - 1) as u16
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CB4: Codebook = Codebook::ALL[0];
    const CB9: Codebook = Codebook::ALL[3];

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn phi_grid_for_four_bits() {
        // k * pi/8 + pi/16 for k = 0..15.
        for k in 0..16u16 {
            let want = f64::from(k) * PI / 8.0 + PI / 16.0;
            assert_close(dequantize(k, AngleKind::Phi, CB4).unwrap(), want);
        }
        assert_close(dequantize(0, AngleKind::Phi, CB4).unwrap(), PI / 16.0);
        assert_close(
            dequantize(15, AngleKind::Phi, CB4).unwrap(),
            2.0 * PI - PI / 16.0,
        );
        assert!(dequantize(16, AngleKind::Phi, CB4).is_err());
    }

    #[test]
    fn psi_grid_for_two_bits() {
        for k in 0..4u16 {
            let want = f64::from(k) * PI / 8.0 + PI / 16.0;
            assert_close(dequantize(k, AngleKind::Psi, CB4).unwrap(), want);
        }
        assert_close(
            dequantize(3, AngleKind::Psi, CB4).unwrap(),
            PI / 2.0 - PI / 16.0,
        );
        assert!(dequantize(4, AngleKind::Psi, CB4).is_err());
    }

    #[test]
    fn grids_avoid_interval_endpoints() {
        for cb in Codebook::ALL {
            let lo = dequantize(0, AngleKind::Phi, cb).unwrap();
            let hi = dequantize((1 << cb.bits_phi()) - 1, AngleKind::Phi, cb).unwrap();
            assert!(lo > 0.0 && hi < 2.0 * PI);
            let lo = dequantize(0, AngleKind::Psi, cb).unwrap();
            let hi = dequantize((1 << cb.bits_psi()) - 1, AngleKind::Psi, cb).unwrap();
            assert!(lo > 0.0 && hi < PI / 2.0);
        }
    }

    #[test]
    fn quantize_inverts_dequantize_on_grid_points() {
        for cb in Codebook::ALL {
            for k in 0..(1u16 << cb.bits_phi()) {
                let angle = dequantize(k, AngleKind::Phi, cb).unwrap();
                assert_eq!(quantize(angle, AngleKind::Phi, cb), k);
            }
            for k in 0..(1u16 << cb.bits_psi()) {
                let angle = dequantize(k, AngleKind::Psi, cb).unwrap();
                assert_eq!(quantize(angle, AngleKind::Psi, cb), k);
            }
        }
    }

    #[test]
    fn phi_wraps_and_ties_resolve_low() {
        // Zero sits exactly between the top grid point (pi/16 below, mod 2pi)
        // and the bottom one (pi/16 above); the lower index wins.
        assert_eq!(quantize(0.0, AngleKind::Phi, CB4), 0);
        assert_eq!(quantize(2.0 * PI, AngleKind::Phi, CB4), 0);
        // Just below zero wraps to the top of the grid.
        assert_eq!(quantize(-0.01, AngleKind::Phi, CB4), 15);
        assert_eq!(quantize(2.0 * PI - 0.01, AngleKind::Phi, CB4), 15);
        // Interior midpoint between k=0 and k=1.
        assert_eq!(quantize(PI / 16.0 + PI / 16.0, AngleKind::Phi, CB4), 0);
    }

    #[test]
    fn psi_clamps_out_of_range() {
        assert_eq!(quantize(-1.0, AngleKind::Psi, CB4), 0);
        assert_eq!(quantize(PI / 2.0, AngleKind::Psi, CB4), 3);
        assert_eq!(quantize(10.0, AngleKind::Psi, CB4), 3);
        // Midpoint between k=1 and k=2 resolves low.
        assert_eq!(quantize(PI / 16.0 + 1.5 * PI / 8.0, AngleKind::Psi, CB4), 1);
    }

    #[test]
    fn finest_grid_step_is_small() {
        let step = dequantize(1, AngleKind::Phi, CB9).unwrap()
            - dequantize(0, AngleKind::Phi, CB9).unwrap();
        assert_close(step, PI / 256.0);
    }
}
