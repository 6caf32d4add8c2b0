//! Intelligent-driver-model longitudinal dynamics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    /// Maximum acceleration (m/s^2).
    pub a_max: f64,
    /// Comfortable braking deceleration (m/s^2), used inside the desired gap.
    pub b_comfort: f64,
    /// Free-road exponent.
    pub delta: f64,
    /// Desired time headway (s).
    pub headway_time: f64,
    /// Standstill minimum gap (m).
    pub min_gap: f64,
    /// Hard braking applied when the bumper gap closes to zero (m/s^2). The
    /// model itself brakes without bound as the gap shrinks; this caps the
    /// response once vehicles actually touch.
    pub b_emergency: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            a_max: 1.5,
            b_comfort: 2.0,
            delta: 4.0,
            headway_time: 1.5,
            min_gap: 2.0,
            b_emergency: 8.0,
        }
    }
}

/// Acceleration of a vehicle driving at `v` with desired speed `v_des`.
/// `leader` is `(bumper_gap, leader_speed)` for the nearest vehicle ahead in
/// the same lane, if one is within sensing distance; without one the
/// interaction term vanishes. A non-positive gap means contact: the vehicle
/// slams the brakes at `b_emergency`.
pub fn acceleration(v: f64, v_des: f64, leader: Option<(f64, f64)>, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / v_des).powf(p.delta);
    match leader {
        None => p.a_max * free,
        Some((gap, _)) if gap <= 0.0 => -p.b_emergency,
        Some((gap, v_leader)) => {
            let dv = v - v_leader;
            let desired_gap =
                p.min_gap + v * p.headway_time + v * dv / (2.0 * (p.a_max * p.b_comfort).sqrt());
            p.a_max * (free - (desired_gap / gap).powi(2))
        }
    }
}

/// One semi-implicit Euler step: velocity first (clamped at zero, no
/// reversing), then position with the new velocity.
pub fn euler_step(pos: &mut f64, v: &mut f64, accel: f64, dt: f64, road_length: f64) {
    *v = (*v + accel * dt).max(0.0);
    *pos = (*pos + *v * dt).rem_euclid(road_length);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_road_settles_at_desired_speed() {
        let p = IdmParams::default();
        let (mut pos, mut v) = (0.0, 10.0);
        for _ in 0..2000 {
            let a = acceleration(v, 25.0, None, &p);
            euler_step(&mut pos, &mut v, a, 0.1, 1000.0);
        }
        assert!((v - 25.0).abs() < 0.05, "settled at {v}");
    }

    #[test]
    fn acceleration_drops_as_the_gap_closes() {
        let p = IdmParams::default();
        let far = acceleration(25.0, 25.0, Some((80.0, 25.0)), &p);
        let near = acceleration(25.0, 25.0, Some((10.0, 25.0)), &p);
        assert!(far > near);
        assert!(near < 0.0, "tailgating at equal speed must brake, got {near}");
    }

    #[test]
    fn contact_triggers_emergency_braking() {
        let p = IdmParams::default();
        assert_eq!(acceleration(20.0, 25.0, Some((0.0, 25.0)), &p), -p.b_emergency);
        assert_eq!(acceleration(20.0, 25.0, Some((-1.0, 5.0)), &p), -p.b_emergency);
    }

    #[test]
    fn velocity_never_goes_negative() {
        let p = IdmParams::default();
        let (mut pos, mut v) = (0.0, 0.5);
        let a = acceleration(v, 25.0, Some((0.0, 0.0)), &p);
        euler_step(&mut pos, &mut v, a, 0.1, 1000.0);
        assert_eq!(v, 0.0);
        assert_eq!(pos, 0.0);
    }

    #[test]
    fn follower_approaching_a_stopped_leader_stops_short() {
        let p = IdmParams::default();
        // Leader parked 80 m ahead; follower starts at full speed.
        let (mut pos, mut v) = (0.0, 25.0);
        let leader_rear = 80.0;
        for _ in 0..600 {
            let gap = leader_rear - pos;
            let a = acceleration(v, 25.0, Some((gap, 0.0)), &p);
            euler_step(&mut pos, &mut v, a, 0.1, 1e9);
        }
        assert!(v < 0.01, "still moving at {v}");
        assert!(pos < leader_rear, "overran the leader: {pos}");
    }
}
