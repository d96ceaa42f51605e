//! Dimension tags for Gaussian-unit bookkeeping.
//!
//! Exponents are stored doubled so that charge (M^½ L^{3/2} T^-1) and field
//! strength (M^½ L^-½ T^-1) are representable. Every exponent handed to a
//! matrix exponential is checked to be dimensionless.

use std::ops::{Div, Mul};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dim {
    mass2: i8,
    length2: i8,
    time2: i8,
}

impl Dim {
    pub const fn new2(mass2: i8, length2: i8, time2: i8) -> Self {
        Self {
            mass2,
            length2,
            time2,
        }
    }

    pub const fn mul(self, rhs: Dim) -> Dim {
        Dim::new2(
            self.mass2 + rhs.mass2,
            self.length2 + rhs.length2,
            self.time2 + rhs.time2,
        )
    }

    pub const fn div(self, rhs: Dim) -> Dim {
        Dim::new2(
            self.mass2 - rhs.mass2,
            self.length2 - rhs.length2,
            self.time2 - rhs.time2,
        )
    }

    pub const fn is_dimensionless(self) -> bool {
        self.mass2 == 0 && self.length2 == 0 && self.time2 == 0
    }
}

impl Mul for Dim {
    type Output = Dim;
    fn mul(self, rhs: Dim) -> Dim {
        Dim::mul(self, rhs)
    }
}

impl Div for Dim {
    type Output = Dim;
    fn div(self, rhs: Dim) -> Dim {
        Dim::div(self, rhs)
    }
}

pub const DIMENSIONLESS: Dim = Dim::new2(0, 0, 0);
pub const MASS: Dim = Dim::new2(2, 0, 0);
pub const LENGTH: Dim = Dim::new2(0, 2, 0);
pub const TIME: Dim = Dim::new2(0, 0, 2);
pub const VELOCITY: Dim = LENGTH.div(TIME);
pub const MOMENTUM: Dim = MASS.mul(VELOCITY);
pub const ENERGY: Dim = MOMENTUM.mul(VELOCITY);
pub const ACTION: Dim = ENERGY.mul(TIME);
/// statcoulomb: g^½ cm^{3/2} s^-1
pub const CHARGE: Dim = Dim::new2(1, 3, -2);
/// gauss: g^½ cm^-½ s^-1
pub const FIELD: Dim = Dim::new2(1, -1, -2);
/// qB/c, momentum per length.
pub const KAPPA: Dim = CHARGE.mul(FIELD).div(VELOCITY);
pub const FREQUENCY: Dim = DIMENSIONLESS.div(TIME);

pub fn ensure_dimensionless(what: &str, dim: Dim) -> Result<()> {
    if dim.is_dimensionless() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "exponent of {what} is not dimensionless: {dim:?}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_is_momentum_per_length() {
        assert_eq!(KAPPA, MOMENTUM / LENGTH);
        assert_eq!(KAPPA / MASS, FREQUENCY);
    }

    #[test]
    fn exponents_of_all_factors_are_dimensionless() {
        // D: h0 t / ħ
        ensure_dimensionless("D", ENERGY * TIME / ACTION).unwrap();
        // K: π† α̃ / ħ, α̃ has units of length
        ensure_dimensionless("K", MOMENTUM * LENGTH / ACTION).unwrap();
        // M: η d / ħ
        ensure_dimensionless("M", MOMENTUM * LENGTH / ACTION).unwrap();
        // gauge: q χ / (ħ c), χ = B R x
        ensure_dimensionless(
            "gauge",
            CHARGE * FIELD * LENGTH * LENGTH / (ACTION * VELOCITY),
        )
        .unwrap();
    }

    #[test]
    fn missing_factor_is_caught() {
        assert!(ensure_dimensionless("bad", MOMENTUM / ACTION).is_err());
    }
}
