//! Piecewise reference profiles built from quintic blends, holds, ramps and
//! set-point steps, sampled with derivatives up to fourth order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("segment interval [{t_start}, {t_end}] is not increasing")]
    BadInterval { t_start: f64, t_end: f64 },
    #[error("time {t} outside profile horizon [0, {t_end}]")]
    OutOfHorizon { t: f64, t_end: f64 },
    #[error("derivative order {0} not available (max 4)")]
    Order(usize),
    #[error("segments must be contiguous from t = 0: gap at {0}")]
    Gap(f64),
    #[error("profile has no segments")]
    Empty,
}

pub const MAX_ORDER: usize = 4;

/// Coefficients of `r(t) = sum c_k (t - t_start)^k`, k = 0..5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quintic<T> {
    pub t_start: T,
    pub coeffs: [T; 6],
}

impl<T: Scalar> Quintic<T> {
    pub fn eval(&self, t: T, order: usize) -> T {
        let x = t - self.t_start;
        let mut acc = T::zero();
        for k in (order..6).rev() {
            let mut falling = T::one();
            for j in 0..order {
                falling *= T::lit((k - j) as f64);
            }
            acc = acc * x + self.coeffs[k] * falling;
        }
        acc
    }
}

/// Rest-to-rest quintic through `q_start -> q_end` with zero velocity and
/// acceleration at both ends.
pub fn quintic_segment<T: Scalar>(q_start: T, q_end: T, t_start: T, t_end: T) -> Result<Quintic<T>, TrajectoryError> {
    if !(t_end > t_start) {
        return Err(TrajectoryError::BadInterval { t_start: t_start.as_f64(), t_end: t_end.as_f64() });
    }
    let d = q_end - q_start;
    let h = t_end - t_start;
    let (h3, h4, h5) = (h.powi(3), h.powi(4), h.powi(5));
    Ok(Quintic {
        t_start,
        coeffs: [q_start, T::zero(), T::zero(), T::lit(10.0) * d / h3, T::lit(-15.0) * d / h4, T::lit(6.0) * d / h5],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind<T> {
    Quintic { from: T, to: T },
    Hold { value: T },
    Ramp { from: T, to: T },
    /// Instantaneous jump to `value` at `t_start`, then held.
    Step { value: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    pub t_start: T,
    pub t_end: T,
    #[serde(flatten)]
    pub kind: SegmentKind<T>,
}

/// A sampled reference value. `smooth` is false exactly at a step instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub value: T,
    pub smooth: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProfile<T> {
    segments: Vec<Segment<T>>,
    quintics: Vec<Option<Quintic<T>>>,
}

impl<T: Scalar> ReferenceProfile<T> {
    pub fn new(segments: Vec<Segment<T>>) -> Result<Self, TrajectoryError> {
        if segments.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        let mut prev_end = T::zero();
        let mut quintics = Vec::with_capacity(segments.len());
        for s in &segments {
            if !(s.t_end > s.t_start) {
                return Err(TrajectoryError::BadInterval { t_start: s.t_start.as_f64(), t_end: s.t_end.as_f64() });
            }
            if (s.t_start - prev_end).abs() > T::lit(1e-12) {
                return Err(TrajectoryError::Gap(prev_end.as_f64()));
            }
            prev_end = s.t_end;
            quintics.push(match s.kind {
                SegmentKind::Quintic { from, to } => Some(quintic_segment(from, to, s.t_start, s.t_end)?),
                _ => None,
            });
        }
        Ok(Self { segments, quintics })
    }

    /// The benchmark profile: rise, hold, descent, hold, ramp to
    /// `ramp_target`, hold, then a step back to 0.1 m held until 14 s.
    pub fn benchmark(ramp_target: T) -> Self {
        let l = T::lit;
        let seg = |a: f64, b: f64, kind| Segment { t_start: l(a), t_end: l(b), kind };
        Self::new(vec![
            seg(0.0, 2.0, SegmentKind::Quintic { from: l(0.0), to: l(0.1) }),
            seg(2.0, 3.0, SegmentKind::Hold { value: l(0.1) }),
            seg(3.0, 5.0, SegmentKind::Quintic { from: l(0.1), to: l(0.02) }),
            seg(5.0, 6.0, SegmentKind::Hold { value: l(0.02) }),
            seg(6.0, 8.0, SegmentKind::Ramp { from: l(0.02), to: ramp_target }),
            seg(8.0, 9.0, SegmentKind::Hold { value: ramp_target }),
            seg(9.0, 14.0, SegmentKind::Step { value: l(0.1) }),
        ])
        .expect("static profile")
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn t_end(&self) -> T {
        self.segments.last().map(|s| s.t_end).unwrap_or_else(T::zero)
    }

    fn locate(&self, t: T) -> Result<usize, TrajectoryError> {
        let end = self.t_end();
        if t < T::zero() || t > end || !t.is_finite() {
            return Err(TrajectoryError::OutOfHorizon { t: t.as_f64(), t_end: end.as_f64() });
        }
        Ok(self.segments.iter().position(|s| t < s.t_end).unwrap_or(self.segments.len() - 1))
    }

    pub fn sample(&self, t: T, order: usize) -> Result<Sample<T>, TrajectoryError> {
        if order > MAX_ORDER {
            return Err(TrajectoryError::Order(order));
        }
        let i = self.locate(t)?;
        let s = &self.segments[i];
        let zero = T::zero();
        let value = match s.kind {
            SegmentKind::Quintic { .. } => self.quintics[i].as_ref().expect("built").eval(t, order),
            SegmentKind::Hold { value } | SegmentKind::Step { value } => {
                if order == 0 {
                    value
                } else {
                    zero
                }
            }
            SegmentKind::Ramp { from, to } => match order {
                0 => from + (to - from) * (t - s.t_start) / (s.t_end - s.t_start),
                1 => (to - from) / (s.t_end - s.t_start),
                _ => zero,
            },
        };
        let smooth = !(matches!(s.kind, SegmentKind::Step { .. }) && t == s.t_start);
        Ok(Sample { value, smooth })
    }

    /// Position sample; convenience for the control loops.
    pub fn r(&self, t: T) -> Result<T, TrajectoryError> {
        self.sample(t, 0).map(|s| s.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quintic_midpoint_and_ends() {
        let q = quintic_segment(0.0_f64, 0.1, 0.0, 2.0).unwrap();
        assert_relative_eq!(q.eval(1.0, 0), 0.05, epsilon = 1e-15);
        for t in [0.0, 2.0] {
            assert!(q.eval(t, 1).abs() < 1e-14);
            assert!(q.eval(t, 2).abs() < 1e-14);
        }
        assert_relative_eq!(q.eval(2.0, 0), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn flat_quintic_is_constant() {
        let q = quintic_segment(0.3, 0.3, 1.0, 4.0).unwrap();
        for k in 0..=10 {
            let t = 1.0 + 0.3 * k as f64;
            assert_eq!(q.eval(t, 0), 0.3);
            assert_eq!(q.eval(t, 3), 0.0);
        }
    }

    #[test]
    fn rejects_reversed_interval() {
        assert!(quintic_segment(0.0, 1.0, 2.0, 2.0).is_err());
        assert!(quintic_segment(0.0, 1.0f32, 3.0, 2.0).is_err());
    }

    #[test]
    fn benchmark_profile_values() {
        let p = ReferenceProfile::benchmark(0.06);
        assert_eq!(p.r(0.0).unwrap(), 0.0);
        assert_relative_eq!(p.r(2.0).unwrap(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(p.r(2.5).unwrap(), 0.1);
        assert_relative_eq!(p.r(5.0).unwrap(), 0.02, epsilon = 1e-15);
        assert_relative_eq!(p.r(1.0).unwrap(), 0.05, epsilon = 1e-15);
        assert_relative_eq!(p.sample(7.0, 1).unwrap().value, 0.02);
        assert_eq!(p.sample(2.5, 1).unwrap().value, 0.0);
        let before = p.r(9.0 - 1e-9).unwrap();
        let at = p.sample(9.0, 0).unwrap();
        assert_relative_eq!(before, 0.06, epsilon = 1e-9);
        assert_eq!(at.value, 0.1);
        assert!(!at.smooth);
        assert_eq!(p.sample(9.0, 1).unwrap().value, 0.0);
        assert_eq!(p.t_end(), 14.0);
    }

    #[test]
    fn horizon_and_order_errors() {
        let p = ReferenceProfile::benchmark(0.06);
        assert!(p.r(-0.1).is_err());
        assert!(p.r(14.01).is_err());
        assert!(p.r(14.0).is_ok());
        assert!(matches!(p.sample(1.0, 5), Err(TrajectoryError::Order(5))));
    }

    #[test]
    fn gaps_rejected() {
        let segs = vec![
            Segment { t_start: 0.0, t_end: 1.0, kind: SegmentKind::Hold { value: 0.0 } },
            Segment { t_start: 1.5, t_end: 2.0, kind: SegmentKind::Hold { value: 0.0 } },
        ];
        assert!(matches!(ReferenceProfile::new(segs), Err(TrajectoryError::Gap(_))));
    }
}
