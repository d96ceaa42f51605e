//! Drive paths R(t) for the gauge center, with exact derivatives.
//!
//! A [`DrivePath`] wraps a base [`PathShape`] defined on `[0, L]` and applies
//! an optional orientation reversal and the slow-down `R(ε t)`, so the
//! effective domain is `[0, L/ε]`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

pub type Vec2 = [f64; 2];

/// Angle schedule of a circular drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleProfile {
    /// Constant angular rate.
    #[default]
    Uniform,
    /// Starts at twice the mean rate and decelerates linearly to rest:
    /// θ(u) = θ₀ + Θ·(2u − u²) for u ∈ [0, 1].
    EaseOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathShape {
    Line {
        start: Vec2,
        velocity: Vec2,
        duration: f64,
    },
    Circle {
        center: Vec2,
        radius: f64,
        /// Mean angular rate; the sign sets the orientation.
        angular_rate: f64,
        #[serde(default)]
        start_angle: f64,
        #[serde(default = "one_turn")]
        turns: f64,
        #[serde(default)]
        profile: AngleProfile,
    },
    /// Cubic Hermite interpolation through the waypoints with Catmull–Rom
    /// tangents inside and zero velocity at both ends.
    SmoothPolyline {
        waypoints: Vec<Vec2>,
        segment_duration: f64,
    },
    /// Two straight sides joined by semicircles, traversed counterclockwise
    /// at constant speed starting from the lower-left end of the bottom side.
    Stadium {
        center: Vec2,
        straight_length: f64,
        radius: f64,
        speed: f64,
    },
}

fn one_turn() -> f64 {
    1.0
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

impl PathShape {
    pub fn validate(&self) -> Result<()> {
        match self {
            PathShape::Line { duration, .. } => positive("line duration", *duration),
            PathShape::Circle {
                radius,
                angular_rate,
                turns,
                ..
            } => {
                positive("circle radius", *radius)?;
                positive("circle |angular_rate|", angular_rate.abs())?;
                positive("circle turns", *turns)
            }
            PathShape::SmoothPolyline {
                waypoints,
                segment_duration,
            } => {
                if waypoints.len() < 2 {
                    return Err(Error::Config(
                        "polyline needs at least two waypoints".into(),
                    ));
                }
                positive("segment duration", *segment_duration)
            }
            PathShape::Stadium {
                straight_length,
                radius,
                speed,
                ..
            } => {
                if !(*straight_length >= 0.0 && straight_length.is_finite()) {
                    return Err(Error::Config("stadium straight length must be >= 0".into()));
                }
                positive("stadium radius", *radius)?;
                positive("stadium speed", *speed)
            }
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            PathShape::Line { duration, .. } => *duration,
            PathShape::Circle {
                angular_rate,
                turns,
                ..
            } => TAU * turns / angular_rate.abs(),
            PathShape::SmoothPolyline {
                waypoints,
                segment_duration,
            } => segment_duration * (waypoints.len() - 1) as f64,
            PathShape::Stadium {
                straight_length,
                radius,
                speed,
                ..
            } => (2.0 * straight_length + TAU * radius) / speed,
        }
    }

    /// Times where the path is only C¹ (curvature jumps).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PathShape::SmoothPolyline {
                waypoints,
                segment_duration,
            } => (1..waypoints.len() - 1)
                .map(|k| k as f64 * segment_duration)
                .collect(),
            PathShape::Stadium {
                straight_length,
                radius,
                speed,
                ..
            } => {
                let arc = PI * radius;
                [
                    *straight_length,
                    straight_length + arc,
                    2.0 * straight_length + arc,
                ]
                .iter()
                .map(|s| s / speed)
                .filter(|t| *t > 0.0)
                .collect()
            }
            _ => Vec::new(),
        }
    }

    /// Position and velocity at base time `tau` (assumed in domain).
    fn state(&self, tau: f64) -> (Vec2, Vec2) {
        match self {
            PathShape::Line {
                start, velocity, ..
            } => (
                [start[0] + velocity[0] * tau, start[1] + velocity[1] * tau],
                *velocity,
            ),
            PathShape::Circle {
                center,
                radius,
                angular_rate,
                start_angle,
                turns,
                profile,
            } => {
                let sign = angular_rate.signum();
                let (swept, rate) = match profile {
                    AngleProfile::Uniform => (angular_rate.abs() * tau, angular_rate.abs()),
                    AngleProfile::EaseOut => {
                        let total = TAU * turns;
                        let length = self.duration();
                        let u = tau / length;
                        (total * (2.0 * u - u * u), total * 2.0 * (1.0 - u) / length)
                    }
                };
                let theta = start_angle + sign * swept;
                let omega = sign * rate;
                let (s, c) = theta.sin_cos();
                (
                    [center[0] + radius * c, center[1] + radius * s],
                    [-radius * omega * s, radius * omega * c],
                )
            }
            PathShape::SmoothPolyline {
                waypoints,
                segment_duration,
            } => {
                let h = *segment_duration;
                let last = waypoints.len() - 1;
                let k = ((tau / h).floor() as usize).min(last - 1);
                let u = (tau - k as f64 * h) / h;
                let tangent = |j: usize| -> Vec2 {
                    if j == 0 || j == last {
                        [0.0, 0.0]
                    } else {
                        [
                            (waypoints[j + 1][0] - waypoints[j - 1][0]) / (2.0 * h),
                            (waypoints[j + 1][1] - waypoints[j - 1][1]) / (2.0 * h),
                        ]
                    }
                };
                let (p0, p1) = (waypoints[k], waypoints[k + 1]);
                let (m0, m1) = (tangent(k), tangent(k + 1));
                let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
                let h10 = u.powi(3) - 2.0 * u * u + u;
                let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
                let h11 = u.powi(3) - u * u;
                let d00 = (6.0 * u * u - 6.0 * u) / h;
                let d10 = (3.0 * u * u - 4.0 * u + 1.0) / h;
                let d01 = (-6.0 * u * u + 6.0 * u) / h;
                let d11 = (3.0 * u * u - 2.0 * u) / h;
                let mut pos = [0.0; 2];
                let mut vel = [0.0; 2];
                for i in 0..2 {
                    pos[i] = h00 * p0[i] + h10 * h * m0[i] + h01 * p1[i] + h11 * h * m1[i];
                    vel[i] = d00 * p0[i] + d10 * h * m0[i] + d01 * p1[i] + d11 * h * m1[i];
                }
                (pos, vel)
            }
            PathShape::Stadium {
                center,
                straight_length,
                radius,
                speed,
            } => {
                let (l, r, v) = (*straight_length, *radius, *speed);
                let arc = PI * r;
                let s = (tau * v).clamp(0.0, 2.0 * l + 2.0 * arc);
                let (cx, cy) = (center[0], center[1]);
                if s <= l {
                    ([cx - l / 2.0 + s, cy - r], [v, 0.0])
                } else if s <= l + arc {
                    let phi = -PI / 2.0 + (s - l) / r;
                    let (sn, cs) = phi.sin_cos();
                    ([cx + l / 2.0 + r * cs, cy + r * sn], [-v * sn, v * cs])
                } else if s <= 2.0 * l + arc {
                    let q = s - l - arc;
                    ([cx + l / 2.0 - q, cy + r], [-v, 0.0])
                } else {
                    let phi = PI / 2.0 + (s - 2.0 * l - arc) / r;
                    let (sn, cs) = phi.sin_cos();
                    ([cx - l / 2.0 + r * cs, cy + r * sn], [-v * sn, v * cs])
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDrivePath", into = "RawDrivePath")]
pub struct DrivePath {
    shape: PathShape,
    epsilon: f64,
    reversed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDrivePath {
    #[serde(flatten)]
    shape: PathShape,
    #[serde(default = "one_turn")]
    epsilon: f64,
    #[serde(default)]
    reversed: bool,
}

impl TryFrom<RawDrivePath> for DrivePath {
    type Error = Error;
    fn try_from(raw: RawDrivePath) -> Result<Self> {
        let path = DrivePath::new(raw.shape)?.with_epsilon(raw.epsilon)?;
        Ok(if raw.reversed { path.reversed() } else { path })
    }
}

impl From<DrivePath> for RawDrivePath {
    fn from(p: DrivePath) -> Self {
        RawDrivePath {
            shape: p.shape,
            epsilon: p.epsilon,
            reversed: p.reversed,
        }
    }
}

impl DrivePath {
    pub fn new(shape: PathShape) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            shape,
            epsilon: 1.0,
            reversed: false,
        })
    }

    pub fn line(start: Vec2, velocity: Vec2, duration: f64) -> Result<Self> {
        Self::new(PathShape::Line {
            start,
            velocity,
            duration,
        })
    }

    /// Constant-rate circle; `turns = 1` gives a closed loop.
    pub fn circle(center: Vec2, radius: f64, angular_rate: f64, start_angle: f64) -> Result<Self> {
        Self::new(PathShape::Circle {
            center,
            radius,
            angular_rate,
            start_angle,
            turns: 1.0,
            profile: AngleProfile::Uniform,
        })
    }

    /// Sets the rate multiplier (replacing any previous one).
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        positive("epsilon", epsilon)?;
        Ok(Self {
            epsilon,
            ..self.clone()
        })
    }

    /// Same curve traversed in the opposite direction.
    pub fn reversed(&self) -> Self {
        Self {
            reversed: !self.reversed,
            ..self.clone()
        }
    }

    pub fn shape(&self) -> &PathShape {
        &self.shape
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// Effective duration `L/ε`.
    pub fn duration(&self) -> f64 {
        self.shape.duration() / self.epsilon
    }

    fn base_time(&self, t: f64) -> Result<f64> {
        let end = self.duration();
        let slack = 1e-9 * end.max(1.0);
        if !(t >= -slack && t <= end + slack) {
            return Err(Error::Domain { t, end });
        }
        let tau = (t * self.epsilon).clamp(0.0, self.shape.duration());
        Ok(if self.reversed {
            self.shape.duration() - tau
        } else {
            tau
        })
    }

    pub fn evaluate(&self, t: f64) -> Result<Vec2> {
        Ok(self.shape.state(self.base_time(t)?).0)
    }

    pub fn derivative(&self, t: f64) -> Result<Vec2> {
        let v = self.shape.state(self.base_time(t)?).1;
        let s = if self.reversed {
            -self.epsilon
        } else {
            self.epsilon
        };
        Ok([s * v[0], s * v[1]])
    }

    pub fn start(&self) -> Vec2 {
        self.evaluate(0.0).expect("0 is in every domain")
    }

    /// R(t) − R(0).
    pub fn displacement(&self, t: f64) -> Result<Vec2> {
        let r = self.evaluate(t)?;
        let r0 = self.start();
        Ok([r[0] - r0[0], r[1] - r0[1]])
    }

    pub fn is_closed(&self) -> bool {
        let a = self.shape.state(0.0).0;
        let b = self.shape.state(self.shape.duration()).0;
        let scale = a[0].abs().max(a[1].abs()).max(1.0);
        (a[0] - b[0]).abs() <= 1e-12 * scale && (a[1] - b[1]).abs() <= 1e-12 * scale
    }

    /// Breakpoints in effective time, plus the endpoints, sorted.
    pub fn segments(&self, t_end: f64) -> Vec<f64> {
        let base = self.shape.duration();
        let mut pts: Vec<f64> = self
            .shape
            .breakpoints()
            .into_iter()
            .map(|tau| (if self.reversed { base - tau } else { tau }) / self.epsilon)
            .filter(|t| *t > 0.0 && *t < t_end)
            .collect();
        pts.push(0.0);
        pts.push(t_end);
        pts.sort_by(f64::total_cmp);
        pts
    }

    /// Signed area swept by the half-displacement d(s) = (R(s) − R(0))/2
    /// relative to the origin up to time `t`: (1/2)∫₀ᵗ (d₁ḋ₂ − d₂ḋ₁) ds.
    pub fn swept_area_d(&self, t: f64) -> Result<f64> {
        self.base_time(t)?;
        let r0 = self.start();
        let integrand = |s: f64| -> f64 {
            let r = self
                .evaluate(s)
                .expect("quadrature nodes lie in the domain");
            let v = self
                .derivative(s)
                .expect("quadrature nodes lie in the domain");
            let d = [(r[0] - r0[0]) / 2.0, (r[1] - r0[1]) / 2.0];
            0.5 * (d[0] * v[1] - d[1] * v[0]) / 2.0
        };
        let opts = QuadOptions::default().with_panels(8);
        let cuts = self.segments(t.min(self.duration()));
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += integrate(integrand, w[0], w[1], &opts)?.value;
        }
        Ok(total)
    }

    /// Signed area enclosed by the closed d-path (¼ of the R-loop area).
    pub fn signed_area_d_path(&self) -> Result<f64> {
        if !self.is_closed() {
            return Err(Error::Contract("signed area requires a closed path".into()));
        }
        self.swept_area_d(self.duration())
    }
}
