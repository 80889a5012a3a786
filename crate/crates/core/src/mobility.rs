//! RSU and vehicle geometry on the straight A→B→A route, plus contact windows.

use alloc::vec::Vec;

use crate::engine::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MobilityError {
    #[error("time {t} s is outside the traversal window [{start}, {end}] s")]
    OutsideWindow { t: f64, start: f64, end: f64 },
    #[error("speed must be positive and finite, got {0} m/s")]
    BadSpeed(f64),
    #[error("route endpoints must be distinct finite points")]
    DegenerateRoute,
    #[error("lateral offset must be finite and >= 0, got {0}")]
    BadOffset(f64),
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn lerp(self, other: Point, frac: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * frac,
            self.y + (other.y - self.y) * frac,
        )
    }
}

/// Euclidean distance in meters.
pub fn distance(p: Point, q: Point) -> f64 {
    libm::hypot(p.x - q.x, p.y - q.y)
}

/// km/h to m/s.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Constant-speed out-and-back drive: A to B, then straight back to A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    point_a: Point,
    point_b: Point,
    speed: f64,
    depart_at: SimTime,
}

impl Trajectory {
    pub fn new(
        point_a: Point,
        point_b: Point,
        speed_mps: f64,
        depart_at: SimTime,
    ) -> Result<Self, MobilityError> {
        if !(speed_mps.is_finite() && speed_mps > 0.0) {
            return Err(MobilityError::BadSpeed(speed_mps));
        }
        if !point_a.is_finite() || !point_b.is_finite() || distance(point_a, point_b) == 0.0 {
            return Err(MobilityError::DegenerateRoute);
        }
        Ok(Trajectory {
            point_a,
            point_b,
            speed: speed_mps,
            depart_at,
        })
    }

    pub fn point_a(&self) -> Point {
        self.point_a
    }

    pub fn point_b(&self) -> Point {
        self.point_b
    }

    /// Meters per second.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn depart_at(&self) -> SimTime {
        self.depart_at
    }

    pub fn leg_length(&self) -> f64 {
        distance(self.point_a, self.point_b)
    }

    pub fn leg_duration(&self) -> f64 {
        self.leg_length() / self.speed
    }

    /// Both legs: `2·|AB| / speed`.
    pub fn duration(&self) -> f64 {
        2.0 * self.leg_duration()
    }

    pub fn arrive_at(&self) -> SimTime {
        self.depart_at + self.duration()
    }

    pub fn position_at(&self, t: SimTime) -> Result<Point, MobilityError> {
        if t < self.depart_at || t > self.arrive_at() {
            return Err(MobilityError::OutsideWindow {
                t: t.secs(),
                start: self.depart_at.secs(),
                end: self.arrive_at().secs(),
            });
        }
        Ok(self.position_clamped(t))
    }

    /// Like [`position_at`](Self::position_at) but the vehicle waits at A
    /// before departure and is parked at A after it returns.
    pub fn position_clamped(&self, t: SimTime) -> Point {
        let travelled = (t - self.depart_at) * self.speed;
        let length = self.leg_length();
        if travelled <= 0.0 || travelled >= 2.0 * length {
            self.point_a
        } else if travelled <= length {
            self.point_a.lerp(self.point_b, travelled / length)
        } else {
            self.point_b.lerp(self.point_a, (travelled - length) / length)
        }
    }
}

/// Where the RSU sits relative to the road.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsuPlacement {
    pub position: Point,
    /// Distance from the road axis, meters.
    pub lateral_offset: f64,
}

impl RsuPlacement {
    /// RSU `along` meters from `a` towards `b`, displaced `offset` meters to the left of the road.
    pub fn beside_road(a: Point, b: Point, along: f64, offset: f64) -> Result<Self, MobilityError> {
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(MobilityError::BadOffset(offset));
        }
        let length = distance(a, b);
        if length == 0.0 || !along.is_finite() {
            return Err(MobilityError::DegenerateRoute);
        }
        let (ux, uy) = ((b.x - a.x) / length, (b.y - a.y) / length);
        Ok(RsuPlacement {
            position: Point::new(a.x + ux * along - uy * offset, a.y + uy * along + ux * offset),
            lateral_offset: offset,
        })
    }
}

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactInterval {
    pub start: SimTime,
    pub end: SimTime,
}

impl ContactInterval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Range of arc length `s ∈ [0, length]` along the ray `origin + s·dir`
/// (unit `dir`) that lies within `range` of `center`.
fn segment_disk_overlap(
    origin: Point,
    dir: (f64, f64),
    length: f64,
    center: Point,
    range: f64,
) -> Option<(f64, f64)> {
    let (wx, wy) = (origin.x - center.x, origin.y - center.y);
    let b = wx * dir.0 + wy * dir.1;
    let c = wx * wx + wy * wy - range * range;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let root = libm::sqrt(disc);
    let lo = (-b - root).max(0.0);
    let hi = (-b + root).min(length);
    (lo < hi).then_some((lo, hi))
}

/// Maximal, sorted, disjoint windows in which the vehicle is within `range`
/// meters of the RSU. Solved in closed form per leg.
pub fn contact_intervals(traj: &Trajectory, rsu: &RsuPlacement, range: f64) -> Vec<ContactInterval> {
    let mut out: Vec<ContactInterval> = Vec::new();
    if range.is_nan() || range <= 0.0 {
        return out;
    }
    let length = traj.leg_length();
    let a = traj.point_a;
    let b = traj.point_b;
    let dir = ((b.x - a.x) / length, (b.y - a.y) / length);
    let leg_time = traj.leg_duration();
    let t0 = traj.depart_at.secs();
    let v = traj.speed;

    let outbound = segment_disk_overlap(a, dir, length, rsu.position, range)
        .map(|(lo, hi)| (t0 + lo / v, t0 + hi / v));
    let inbound = segment_disk_overlap(b, (-dir.0, -dir.1), length, rsu.position, range)
        .map(|(lo, hi)| (t0 + leg_time + lo / v, t0 + leg_time + hi / v));

    for (start, end) in outbound.into_iter().chain(inbound) {
        if let Some(last) = out.last_mut() {
            // the two legs meet at B
            if start <= last.end.secs() {
                last.end = SimTime::from_secs(end);
                continue;
            }
        }
        out.push(ContactInterval {
            start: SimTime::from_secs(start),
            end: SimTime::from_secs(end),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn route(speed_kmh: f64) -> Trajectory {
        Trajectory::new(
            Point::new(0.0, 0.0),
            Point::new(1000.0, 0.0),
            kmh_to_mps(speed_kmh),
            SimTime::ZERO,
        )
        .unwrap()
    }

    #[test]
    fn endpoints_and_turnaround() {
        let t = route(30.0);
        assert_eq!(t.position_at(SimTime::ZERO).unwrap(), t.point_a());
        let turn = t.position_at(SimTime::from_secs(t.leg_duration())).unwrap();
        assert!(distance(turn, t.point_b()) < 1e-9);
        let back = t.position_at(t.arrive_at()).unwrap();
        assert!(distance(back, t.point_a()) < 1e-9);
    }

    #[test]
    fn thirty_kmh_after_one_minute() {
        let p = route(30.0).position_at(SimTime::from_secs(60.0)).unwrap();
        assert!((p.x - 500.0).abs() < 1e-6);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn outside_window_is_an_error() {
        let t = Trajectory::new(
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            10.0,
            SimTime::from_secs(5.0),
        )
        .unwrap();
        assert!(t.position_at(SimTime::from_secs(4.0)).is_err());
        assert!(t.position_at(SimTime::from_secs(25.1)).is_err());
        assert_eq!(t.position_clamped(SimTime::from_secs(30.0)), t.point_a());
    }

    #[test]
    fn distance_cases() {
        let o = Point::new(0.0, 0.0);
        assert_eq!(distance(o, o), 0.0);
        assert_eq!(distance(o, Point::new(3.0, 4.0)), 5.0);
        assert_eq!(distance(o, Point::new(400.0, 0.0)), 400.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let o = Point::new(0.0, 0.0);
        assert!(Trajectory::new(o, Point::new(1.0, 0.0), 0.0, SimTime::ZERO).is_err());
        assert!(Trajectory::new(o, o, 1.0, SimTime::ZERO).is_err());
        assert!(RsuPlacement::beside_road(o, Point::new(1.0, 0.0), 0.5, -1.0).is_err());
    }

    #[test]
    fn rsu_beside_midpoint() {
        let r = RsuPlacement::beside_road(Point::new(0.0, 0.0), Point::new(1000.0, 0.0), 500.0, 10.0)
            .unwrap();
        assert_eq!(r.position, Point::new(500.0, 10.0));
    }

    #[test]
    fn full_coverage_is_one_interval() {
        let t = route(50.0);
        let rsu = RsuPlacement::beside_road(t.point_a(), t.point_b(), 500.0, 10.0).unwrap();
        let iv = contact_intervals(&t, &rsu, 1000.0);
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].start, SimTime::ZERO);
        assert!((iv[0].end.secs() - t.duration()).abs() < 1e-9);
    }

    #[test]
    fn no_coverage_is_empty() {
        let t = route(50.0);
        let rsu = RsuPlacement {
            position: Point::new(500.0, 5000.0),
            lateral_offset: 5000.0,
        };
        assert!(contact_intervals(&t, &rsu, 100.0).is_empty());
    }

    #[test]
    fn two_symmetric_passes() {
        let t = route(50.0);
        let rsu = RsuPlacement::beside_road(t.point_a(), t.point_b(), 500.0, 10.0).unwrap();
        let iv = contact_intervals(&t, &rsu, 100.0);
        assert_eq!(iv.len(), 2);
        let expected = 2.0 * libm::sqrt(100.0f64 * 100.0 - 10.0 * 10.0) / kmh_to_mps(50.0);
        for w in &iv {
            assert!((w.duration() - expected).abs() < 1e-9);
        }
        assert!((expected - 14.33).abs() < 0.01);
        // mirror images around the turnaround
        let mid = t.leg_duration();
        assert!(((mid - iv[0].end.secs()) - (iv[1].start.secs() - mid)).abs() < 1e-9);
    }

    #[test]
    fn legs_touching_at_b_merge() {
        let t = route(30.0);
        let rsu = RsuPlacement::beside_road(t.point_a(), t.point_b(), 1000.0, 0.0).unwrap();
        let iv = contact_intervals(&t, &rsu, 50.0);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].duration() - 100.0 / kmh_to_mps(30.0)).abs() < 1e-9);
    }
}
