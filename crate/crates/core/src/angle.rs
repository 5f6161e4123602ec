//! Angle wrapping and the fixed-point phase representation.
//!
//! Observed phases are held as *phase words*: unsigned fractions of a turn on
//! a `2^PHASE_BITS` grid. Adding a common offset and later subtracting it is
//! then exact modular integer arithmetic, so the LoS-referenced phases the
//! estimator sees do not depend on the offset by even one ulp. Panels still
//! carry radians; a radian value produced by [`word_to_rad`] maps back to the
//! same word through [`rad_to_word`].

use std::f64::consts::{PI, TAU};

/// Resolution of a phase word, in bits per turn.
pub const PHASE_BITS: u32 = 40;
/// Number of grid points per turn.
pub const PHASE_MODULUS: u64 = 1 << PHASE_BITS;
const PHASE_MASK: u64 = PHASE_MODULUS - 1;

/// `x mod 2π` in `[0, 2π)`.
pub fn wrap_2pi(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps into `(-π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let r = wrap_2pi(x);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Quantizes a phase given in turns onto the word grid.
pub fn turns_to_word(turns: f64) -> u64 {
    let frac = turns - turns.floor();
    let scaled = (frac * PHASE_MODULUS as f64).round() as u64;
    scaled & PHASE_MASK
}

pub fn rad_to_word(rad: f64) -> u64 {
    turns_to_word(rad / TAU)
}

/// Radians in `[0, 2π)`.
pub fn word_to_rad(word: u64) -> f64 {
    (word & PHASE_MASK) as f64 * (TAU / PHASE_MODULUS as f64)
}

pub fn word_add(a: u64, b: u64) -> u64 {
    a.wrapping_add(b) & PHASE_MASK
}

pub fn word_sub(a: u64, b: u64) -> u64 {
    a.wrapping_sub(b) & PHASE_MASK
}

/// Interprets a word as a signed angle in `(-π, π]`, returned in grid units.
pub fn word_to_signed(word: u64) -> i64 {
    let w = (word & PHASE_MASK) as i64;
    if w > (PHASE_MODULUS / 2) as i64 {
        w - PHASE_MODULUS as i64
    } else {
        w
    }
}

pub fn signed_to_rad(units: i64) -> f64 {
    units as f64 * (TAU / PHASE_MODULUS as f64)
}

pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap_2pi(0.0), 0.0);
        assert_eq!(wrap_2pi(TAU), 0.0);
        assert!(wrap_2pi(-1e-18) < TAU);
        assert!((wrap_pi(PI) - PI).abs() < 1e-15);
        assert!((wrap_pi(-PI) - PI).abs() < 1e-15);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn signed_range() {
        assert_eq!(
            word_to_signed(PHASE_MODULUS / 2),
            (PHASE_MODULUS / 2) as i64
        );
        assert_eq!(
            word_to_signed(PHASE_MODULUS / 2 + 1),
            -((PHASE_MODULUS / 2) as i64) + 1
        );
        assert_eq!(word_to_signed(0), 0);
    }

    proptest! {
        #[test]
        fn wrap_periodic(x in -1e4f64..1e4) {
            let a = wrap_2pi(x);
            prop_assert!((0.0..TAU).contains(&a));
            let d = (wrap_2pi(x + TAU) - a).abs();
            prop_assert!(d < 1e-12 || (TAU - d) < 1e-12);
        }

        #[test]
        fn word_round_trip(w in 0u64..PHASE_MODULUS) {
            prop_assert_eq!(rad_to_word(word_to_rad(w)), w);
            prop_assert!(word_to_rad(w) < TAU);
        }

        #[test]
        fn offset_cancels_exactly(a in 0u64..PHASE_MODULUS, b in 0u64..PHASE_MODULUS, off in 0u64..PHASE_MODULUS) {
            prop_assert_eq!(word_sub(word_add(a, off), word_add(b, off)), word_sub(a, b));
        }
    }
}
