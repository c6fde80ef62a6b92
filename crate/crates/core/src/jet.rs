//! Second-order jets in a single scalar variable.

use std::ops::{Add, Mul, Neg, Sub};

/// Value together with its first and second derivative with respect to time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    /// The independent variable itself: `(t, 1, 0)`.
    pub const fn variable(t: f64) -> Self {
        Self::new(t, 1.0, 0.0)
    }

    pub const fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(c * self.v, c * self.d1, c * self.d2)
    }

    /// Compose with a scalar function given its derivatives `[f, f', f'']` at `self.v`.
    pub fn compose(self, f: [f64; 3]) -> Self {
        Self::new(
            f[0],
            f[1] * self.d1,
            f[2] * self.d1 * self.d1 + f[1] * self.d2,
        )
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.v + rhs.v, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.v - rhs.v, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::new(-self.v, -self.d1, -self.d2)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2::new(
            self.v * rhs.v,
            self.d1 * rhs.v + self.v * rhs.d1,
            self.d2 * rhs.v + 2.0 * self.d1 * rhs.d1 + self.v * rhs.d2,
        )
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        self.scale(rhs)
    }
}
