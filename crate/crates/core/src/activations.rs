//! The five benchmarked activation functions and their derivatives through order 3.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::Jet2;

#[derive(Debug, Error, PartialEq)]
pub enum ActivationError {
    #[error("derivative order {0} is outside 0..=3")]
    UnsupportedOrder(u8),
    #[error("unknown activation `{0}` (expected one of tanh, mish, sine, gcu, asu)")]
    UnknownName(String),
}

/// Hidden-layer activation.
///
/// `Tanh` is monotonic, `Mish` is non-monotonic with a single dip, and `Sine`,
/// `Gcu` (z·cos z) and `Asu` (z·sin z) oscillate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Tanh,
    Mish,
    Sine,
    Gcu,
    Asu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 5] = [
        ActivationKind::Tanh,
        ActivationKind::Mish,
        ActivationKind::Sine,
        ActivationKind::Gcu,
        ActivationKind::Asu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Mish => "mish",
            ActivationKind::Sine => "sine",
            ActivationKind::Gcu => "gcu",
            ActivationKind::Asu => "asu",
        }
    }

    /// The `order`-th derivative at `z`.
    pub fn eval(self, z: f64, order: u8) -> Result<f64, ActivationError> {
        if order > 3 {
            return Err(ActivationError::UnsupportedOrder(order));
        }
        Ok(self.derivatives(z)[order as usize])
    }

    /// `[f, f', f'', f''']` at `z`.
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            ActivationKind::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
            ActivationKind::Mish => mish_derivatives(z),
            ActivationKind::Sine => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c]
            }
            ActivationKind::Gcu => {
                let (s, c) = z.sin_cos();
                [
                    z * c,
                    c - z * s,
                    -2.0 * s - z * c,
                    -3.0 * c + z * s,
                ]
            }
            ActivationKind::Asu => {
                let (s, c) = z.sin_cos();
                [
                    z * s,
                    s + z * c,
                    2.0 * c - z * s,
                    -3.0 * s - z * c,
                ]
            }
        }
    }

    /// Push an order-2 jet through the activation.
    pub fn jet(self, a: Jet2) -> Jet2 {
        let [f0, f1, f2, _] = self.derivatives(a.v);
        a.compose([f0, f1, f2])
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = ActivationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ActivationError::UnknownName(s.to_string()))
    }
}

/// ln(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// mish(z) = z * T(z), T = tanh(softplus(z)); T's derivatives come from the
// chain rule through tanh (in u = softplus) and softplus (in z).
fn mish_derivatives(z: f64) -> [f64; 4] {
    let t = softplus(z).tanh();
    let sech2 = 1.0 - t * t;
    let (t1, t2, t3) = (sech2, -2.0 * t * sech2, sech2 * (6.0 * t * t - 2.0));

    let sg = sigmoid(z);
    let (u1, u2) = (sg, sg * (1.0 - sg));
    let u3 = u2 * (1.0 - 2.0 * sg);

    let d1 = t1 * u1;
    let d2 = t2 * u1 * u1 + t1 * u2;
    let d3 = t3 * u1 * u1 * u1 + 3.0 * t2 * u1 * u2 + t1 * u3;

    [z * t, t + z * d1, 2.0 * d1 + z * d2, 3.0 * d2 + z * d3]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> impl Iterator<Item = f64> {
        (-50..=50).map(|i| i as f64 * 0.1)
    }

    #[test]
    fn closed_form_points() {
        use ActivationKind::*;
        assert_eq!(Asu.eval(0.0, 0).unwrap(), 0.0);
        assert_eq!(Asu.eval(0.0, 2).unwrap(), 2.0);
        assert!((Gcu.eval(PI, 0).unwrap() + PI).abs() < 1e-15);
        assert_eq!(Tanh.eval(0.0, 1).unwrap(), 1.0);
        assert_eq!(Mish.eval(0.0, 0).unwrap(), 0.0);
        for z in grid() {
            assert_eq!(Sine.eval(z, 3).unwrap(), -z.cos());
        }
    }

    #[test]
    fn rejects_order_four() {
        assert_eq!(
            ActivationKind::Asu.eval(1.0, 4),
            Err(ActivationError::UnsupportedOrder(4))
        );
    }

    #[test]
    fn jet_examples() {
        use ActivationKind::*;
        assert_eq!(Asu.jet(Jet2::new(0.0, 1.0, 0.0)), Jet2::new(0.0, 0.0, 2.0));
        assert_eq!(Sine.jet(Jet2::new(0.0, 1.0, 0.0)), Jet2::new(0.0, 1.0, 0.0));
        for z in grid() {
            assert_eq!(Tanh.jet(Jet2::constant(z)), Jet2::new(z.tanh(), 0.0, 0.0));
        }
    }

    #[test]
    fn identity_jet_reproduces_eval() {
        for kind in ActivationKind::ALL {
            for z in grid() {
                let j = kind.jet(Jet2::variable(z));
                assert_eq!(j.v, kind.eval(z, 0).unwrap());
                assert_eq!(j.d1, kind.eval(z, 1).unwrap());
                assert_eq!(j.d2, kind.eval(z, 2).unwrap());
            }
        }
    }

    #[test]
    fn mish_matches_direct_formula() {
        for z in grid() {
            let direct = z * (1.0 + z.exp()).ln().tanh();
            assert!((ActivationKind::Mish.eval(z, 0).unwrap() - direct).abs() < 1e-14);
        }
        // stable far out in both tails
        let big = ActivationKind::Mish.derivatives(800.0);
        assert!(big.iter().all(|x| x.is_finite()));
        assert!((big[0] - 800.0).abs() < 1e-9);
        let small = ActivationKind::Mish.derivatives(-800.0);
        assert!(small.iter().all(|x| x.is_finite()));
    }

    fn derivative_sign_changes(kind: ActivationKind) -> usize {
        let vals: Vec<f64> = (-1000..=1000)
            .map(|i| kind.eval(i as f64 * 0.01, 1).unwrap())
            .filter(|d| *d != 0.0)
            .collect();
        vals.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
    }

    #[test]
    fn oscillation_character() {
        use ActivationKind::*;
        let tanh: Vec<f64> = grid().map(|z| Tanh.eval(z, 0).unwrap()).collect();
        assert!(tanh.windows(2).all(|w| w[1] > w[0]));
        for kind in [Asu, Gcu, Sine] {
            assert!(derivative_sign_changes(kind) >= 2, "{kind}");
        }
        assert_eq!(derivative_sign_changes(Mish), 1);
        assert_eq!(derivative_sign_changes(Tanh), 0);
    }

    #[test]
    fn names_round_trip() {
        for kind in ActivationKind::ALL {
            assert_eq!(kind.name().parse::<ActivationKind>().unwrap(), kind);
        }
        assert!("relu".parse::<ActivationKind>().is_err());
    }
}
