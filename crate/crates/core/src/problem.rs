//! The MEMS beam oscillator, the initial-condition trial transforms, the ODE
//! residual and collocation sampling.

use std::f64::consts::FRAC_PI_3;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{self, AutodiffError};
use crate::jet::Jet2;
use crate::network::MlpParams;

/// Coefficients used when a run config leaves `problem.a` unset.
pub const DEFAULT_COEFFICIENTS: [f64; 7] = [1.0, 0.5, 0.25, 1.0, 0.5, 0.25, 0.1];

const POSITIVITY_GRID: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("A0 must be positive, got {0}")]
    NonPositiveA0(f64),
    #[error("inertia polynomial A0 + A1 u^2 + A2 u^4 is {value} at u = {u}; must stay positive for |u| <= 2|u0|")]
    InertiaNotPositive { u: f64, value: f64 },
    #[error("time domain is empty: t_end ({t_end}) must exceed t0 ({t0})")]
    EmptyDomain { t0: f64, t_end: f64 },
    #[error("{0} must be finite")]
    NotFinite(&'static str),
    #[error("need at least 2 collocation points, got {0}")]
    TooFewPoints(usize),
}

/// `(A0 + A1 u² + A2 u⁴) u'' + A3 u + A4 u³ + A5 u⁵ + A6 u⁷ = 0` with
/// `u(t0) = u0`, `u'(t0) = du0` on `[t0, t_end]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillatorProblem {
    a: [f64; 7],
    u0: f64,
    du0: f64,
    t0: f64,
    t_end: f64,
}

impl OscillatorProblem {
    pub fn new(a: [f64; 7], u0: f64, du0: f64, t0: f64, t_end: f64) -> Result<Self, ProblemError> {
        if a.iter().any(|c| !c.is_finite()) {
            return Err(ProblemError::NotFinite("coefficients"));
        }
        for (name, x) in [("u0", u0), ("du0", du0), ("t0", t0), ("t_end", t_end)] {
            if !x.is_finite() {
                return Err(ProblemError::NotFinite(name));
            }
        }
        if a[0] <= 0.0 {
            return Err(ProblemError::NonPositiveA0(a[0]));
        }
        if t_end <= t0 {
            return Err(ProblemError::EmptyDomain { t0, t_end });
        }
        let problem = Self { a, u0, du0, t0, t_end };
        let reach = 2.0 * u0.abs();
        for i in 0..POSITIVITY_GRID {
            let u = -reach + 2.0 * reach * i as f64 / (POSITIVITY_GRID - 1) as f64;
            let value = problem.inertia(u);
            if value <= 0.0 {
                return Err(ProblemError::InertiaNotPositive { u, value });
            }
        }
        Ok(problem)
    }

    /// Default MEMS configuration: `u(0) = π/3`, `u'(0) = 0` on `[0, 10]`.
    pub fn default_mems() -> Self {
        Self::new(DEFAULT_COEFFICIENTS, FRAC_PI_3, 0.0, 0.0, 10.0).expect("valid defaults")
    }

    /// `u'' + u = 0`, `u(0) = 1`, `u'(0) = 0`, whose solution is `cos t`.
    pub fn harmonic(t_end: f64) -> Self {
        Self::new([1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0], 1.0, 0.0, 0.0, t_end)
            .expect("valid harmonic problem")
    }

    pub fn coefficients(&self) -> &[f64; 7] {
        &self.a
    }
    pub fn u0(&self) -> f64 {
        self.u0
    }
    pub fn du0(&self) -> f64 {
        self.du0
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Same problem with every coefficient multiplied by `c`.
    pub fn with_scaled_coefficients(&self, c: f64) -> Result<Self, ProblemError> {
        Self::new(self.a.map(|x| c * x), self.u0, self.du0, self.t0, self.t_end)
    }

    /// `g(u) = A0 + A1 u² + A2 u⁴`.
    pub fn inertia(&self, u: f64) -> f64 {
        let u2 = u * u;
        self.a[0] + u2 * (self.a[1] + u2 * self.a[2])
    }

    /// `F(u) = A3 u + A4 u³ + A5 u⁵ + A6 u⁷`.
    pub fn restoring(&self, u: f64) -> f64 {
        let u2 = u * u;
        u * (self.a[3] + u2 * (self.a[4] + u2 * (self.a[5] + u2 * self.a[6])))
    }

    fn inertia_slope(&self, u: f64) -> f64 {
        u * (2.0 * self.a[1] + 4.0 * self.a[2] * u * u)
    }

    fn restoring_slope(&self, u: f64) -> f64 {
        let u2 = u * u;
        self.a[3] + u2 * (3.0 * self.a[4] + u2 * (5.0 * self.a[5] + u2 * 7.0 * self.a[6]))
    }
}

/// How the raw network output is mapped onto a candidate satisfying the
/// initial conditions, with `s(t) = 1 − e^{−(t−t0)}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialTransformKind {
    /// `ũ = u0 + s·N`. Fixes the displacement only.
    FirstOrder,
    /// `ũ = u0 + du0·s + s²·N`. Fixes displacement and velocity.
    #[default]
    SecondOrder,
}

/// The trial transform at one time, as the affine map
/// `ũ = offset + matrix · (N, N', N'')`. The matrix is lower triangular.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialMap {
    pub offset: Jet2,
    pub matrix: [[f64; 3]; 3],
}

impl TrialMap {
    pub fn new(kind: TrialTransformKind, problem: &OscillatorProblem, t: f64) -> Self {
        let e = (-(t - problem.t0)).exp();
        let s = -(-(t - problem.t0)).exp_m1();
        let (s1, s2) = (e, -e);
        match kind {
            TrialTransformKind::FirstOrder => Self {
                offset: Jet2::constant(problem.u0),
                matrix: [[s, 0.0, 0.0], [s1, s, 0.0], [s2, 2.0 * s1, s]],
            },
            TrialTransformKind::SecondOrder => {
                let du0 = problem.du0;
                let ss = s * s;
                Self {
                    offset: Jet2::new(problem.u0 + du0 * s, du0 * s1, du0 * s2),
                    matrix: [
                        [ss, 0.0, 0.0],
                        [2.0 * s * s1, ss, 0.0],
                        [2.0 * (s1 * s1 + s * s2), 4.0 * s * s1, ss],
                    ],
                }
            }
        }
    }

    pub fn apply(&self, net: Jet2) -> Jet2 {
        let m = &self.matrix;
        Jet2::new(
            self.offset.v + m[0][0] * net.v,
            self.offset.d1 + m[1][0] * net.v + m[1][1] * net.d1,
            self.offset.d2 + m[2][0] * net.v + m[2][1] * net.d1 + m[2][2] * net.d2,
        )
    }

    /// Pull an adjoint on `ũ` back to an adjoint on `N` (transpose map).
    pub fn pullback(&self, bar: Jet2) -> Jet2 {
        let m = &self.matrix;
        Jet2::new(
            m[0][0] * bar.v + m[1][0] * bar.d1 + m[2][0] * bar.d2,
            m[1][1] * bar.d1 + m[2][1] * bar.d2,
            m[2][2] * bar.d2,
        )
    }
}

/// Trial candidate jet at `t` given the network jet at the same `t`.
pub fn trial_jet(kind: TrialTransformKind, problem: &OscillatorProblem, net: Jet2, t: f64) -> Jet2 {
    TrialMap::new(kind, problem, t).apply(net)
}

/// Left-hand side of the beam equation evaluated on a candidate jet.
pub fn residual(problem: &OscillatorProblem, u: Jet2) -> f64 {
    problem.inertia(u.v) * u.d2 + problem.restoring(u.v)
}

/// Residual together with its partials w.r.t. the value and second-derivative
/// slots (it does not depend on the first-derivative slot).
pub(crate) fn residual_with_partials(problem: &OscillatorProblem, u: Jet2) -> (f64, f64, f64) {
    let g = problem.inertia(u.v);
    let r = g * u.d2 + problem.restoring(u.v);
    let dr_dv = problem.inertia_slope(u.v) * u.d2 + problem.restoring_slope(u.v);
    (r, dr_dv, g)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Equispaced,
    UniformRandom,
}

/// `n` collocation times in `[t0, t_end]`. Random draws are sorted ascending.
pub fn collocation_points(
    n: usize,
    t0: f64,
    t_end: f64,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<f64>, ProblemError> {
    if n < 2 {
        return Err(ProblemError::TooFewPoints(n));
    }
    if !(t_end > t0) {
        return Err(ProblemError::EmptyDomain { t0, t_end });
    }
    Ok(match mode {
        SamplingMode::Equispaced => equispaced(n, t0, t_end),
        SamplingMode::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = Uniform::new_inclusive(t0, t_end).expect("finite bounds");
            let mut pts: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
            pts.sort_by(f64::total_cmp);
            pts
        }
    })
}

/// `n ≥ 2` equally spaced times including both endpoints exactly.
pub fn equispaced(n: usize, t0: f64, t_end: f64) -> Vec<f64> {
    let span = t_end - t0;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                t_end
            } else {
                t0 + span * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Everything the loss depends on besides the network and the points.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub problem: OscillatorProblem,
    pub transform: TrialTransformKind,
    /// Weight λ of the optional `λ·(ũ'(t0) − du0)²` velocity penalty.
    pub ic_penalty: f64,
}

impl Objective {
    pub fn new(problem: OscillatorProblem, transform: TrialTransformKind) -> Self {
        Self { problem, transform, ic_penalty: 0.0 }
    }
}

/// Mean squared residual over `points` (plus the optional velocity penalty).
/// Shares its forward arithmetic with [`autodiff::loss_and_grad`], so the two
/// agree bit for bit.
pub fn collocation_loss(
    params: &MlpParams,
    objective: &Objective,
    points: &[f64],
) -> Result<f64, AutodiffError> {
    autodiff::loss_only(params, objective, points, crate::exec::Execution::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn residual_examples() {
        let p = OscillatorProblem::default_mems();
        assert_eq!(residual(&p, Jet2::default()), 0.0);
        let h = OscillatorProblem::harmonic(10.0);
        for i in 0..100 {
            let t = i as f64 * 0.1;
            let u = Jet2::new(t.cos(), -t.sin(), -t.cos());
            assert_eq!(residual(&h, u), 0.0);
        }
        let ones = OscillatorProblem::new([1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0], 1.0, 0.0, 0.0, 1.0)
            .unwrap();
        assert_eq!(residual(&ones, Jet2::new(1.0, 0.0, 0.0)), 4.0);
    }

    #[test]
    fn residual_is_odd() {
        let p = OscillatorProblem::default_mems();
        for i in -20..=20 {
            let u = Jet2::new(i as f64 * 0.07, 0.3, 0.9 - i as f64 * 0.01);
            let flipped = Jet2::new(-u.v, u.d1, -u.d2);
            assert_eq!(residual(&p, flipped), -residual(&p, u));
        }
    }

    #[test]
    fn transform_at_initial_time() {
        let p = OscillatorProblem::new(DEFAULT_COEFFICIENTS, 0.7, -0.4, 1.5, 4.0).unwrap();
        let net = Jet2::new(3.3, -2.0, 8.0);
        for kind in [TrialTransformKind::FirstOrder, TrialTransformKind::SecondOrder] {
            assert_eq!(trial_jet(kind, &p, net, 1.5).v, 0.7);
        }
        assert_eq!(trial_jet(TrialTransformKind::SecondOrder, &p, net, 1.5).d1, -0.4);
        // the single-factor transform leaks the network output into the velocity
        assert_eq!(trial_jet(TrialTransformKind::FirstOrder, &p, net, 1.5).d1, 3.3);
    }

    #[test]
    fn pullback_is_transpose() {
        let p = OscillatorProblem::default_mems();
        for kind in [TrialTransformKind::FirstOrder, TrialTransformKind::SecondOrder] {
            let map = TrialMap::new(kind, &p, 0.8);
            let n = Jet2::new(0.3, -1.1, 2.0);
            let bar = Jet2::new(0.7, 0.2, -0.5);
            let lin = map.apply(n) - map.offset;
            let lhs = lin.v * bar.v + lin.d1 * bar.d1 + lin.d2 * bar.d2;
            let back = map.pullback(bar);
            let rhs = n.v * back.v + n.d1 * back.d1 + n.d2 * back.d2;
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn construction_checks() {
        assert_eq!(
            OscillatorProblem::new(DEFAULT_COEFFICIENTS, 1.0, 0.0, 1.0, 1.0),
            Err(ProblemError::EmptyDomain { t0: 1.0, t_end: 1.0 })
        );
        let mut a = DEFAULT_COEFFICIENTS;
        a[0] = 0.0;
        assert!(matches!(
            OscillatorProblem::new(a, 1.0, 0.0, 0.0, 1.0),
            Err(ProblemError::NonPositiveA0(_))
        ));
        // A1 = -1 makes g vanish at |u| = 1 < 2·u0
        let a = [1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert!(matches!(
            OscillatorProblem::new(a, 1.0, 0.0, 0.0, 1.0),
            Err(ProblemError::InertiaNotPositive { .. })
        ));
        assert!(OscillatorProblem::new(a, 0.4, 0.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn collocation_examples() {
        let pts = collocation_points(3, 0.0, 10.0, SamplingMode::Equispaced, 0).unwrap();
        assert_eq!(pts, vec![0.0, 5.0, 10.0]);
        let pts = collocation_points(2, 0.0, 1.0, SamplingMode::Equispaced, 0).unwrap();
        assert_eq!(pts, vec![0.0, 1.0]);
        let a = collocation_points(50, 0.0, 10.0, SamplingMode::UniformRandom, 9).unwrap();
        let b = collocation_points(50, 0.0, 10.0, SamplingMode::UniformRandom, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|t| (0.0..=10.0).contains(t)));
        let pts = collocation_points(7, 0.0, 2.0 * PI, SamplingMode::Equispaced, 0).unwrap();
        assert_eq!(*pts.last().unwrap(), 2.0 * PI);
        assert_eq!(
            collocation_points(1, 0.0, 1.0, SamplingMode::Equispaced, 0),
            Err(ProblemError::TooFewPoints(1))
        );
        assert!(collocation_points(5, 1.0, 1.0, SamplingMode::UniformRandom, 0).is_err());
    }
}
