//! Initial traffic placement: jittered uniform spacing per lane.

use super::{HighwayConfig, HighwayError, Vehicle};
use rand::prelude::*;

/// Maximum jitter as a fraction of the nominal slot spacing. Two adjacent
/// vehicles can each move toward one another by this much, so the worst-case
/// front-to-front distance is `(1 - 2 * JITTER_FRACTION) * spacing`.
const JITTER_FRACTION: f64 = 0.3;

/// Places `cfg.n_vehicles` vehicles (index 0 is the ego) on the ring.
///
/// Vehicles are spread over lanes as evenly as possible; within a lane they
/// sit on uniform slots with a random offset of up to ±30% of the slot
/// spacing, so orderings are preserved and the worst-case initial bumper gap
/// is known in advance. Everyone starts at their desired speed.
pub fn place_vehicles(
    cfg: &HighwayConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Vehicle>, HighwayError> {
    assert!(cfg.n_vehicles >= 1, "need at least the ego vehicle");
    assert!(cfg.ego_lane < cfg.n_lanes, "ego lane out of range");
    // Even split, remainder to the lowest-index lanes; the ego counts toward
    // its own lane's quota.
    let mut lane_counts = vec![cfg.n_vehicles / cfg.n_lanes; cfg.n_lanes];
    for lane in lane_counts.iter_mut().take(cfg.n_vehicles % cfg.n_lanes) {
        *lane += 1;
    }
    if lane_counts[cfg.ego_lane] == 0 {
        lane_counts[cfg.ego_lane] = 1;
        let donor = lane_counts
            .iter()
            .enumerate()
            .max_by_key(|(_, c)| **c)
            .map(|(l, _)| l)
            .unwrap();
        lane_counts[donor] -= 1;
    }

    for (lane, &count) in lane_counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let spacing = cfg.road_length / count as f64;
        let worst_gap = (1.0 - 2.0 * JITTER_FRACTION) * spacing - cfg.vehicle_length;
        if worst_gap < cfg.idm.min_gap {
            return Err(HighwayError::TooDense { lane, count });
        }
    }

    let mut vehicles = Vec::with_capacity(cfg.n_vehicles);
    // Ego first so it is always index 0.
    vehicles.push(Vehicle {
        pos: 0.0,
        v: cfg.ego_v_des,
        lane: cfg.ego_lane,
        v_des: cfg.ego_v_des,
        length: cfg.vehicle_length,
    });
    for (lane, &count) in lane_counts.iter().enumerate() {
        let spacing = cfg.road_length / count.max(1) as f64;
        let slots = if lane == cfg.ego_lane { 1..count } else { 0..count };
        for slot in slots {
            let jitter = rng.gen_range(-JITTER_FRACTION..JITTER_FRACTION) * spacing;
            let pos = (slot as f64 * spacing + jitter).rem_euclid(cfg.road_length);
            let v_des = rng.gen_range(cfg.v_des_min..=cfg.v_des_max);
            vehicles.push(Vehicle { pos, v: v_des, lane, v_des, length: cfg.vehicle_length });
        }
    }
    Ok(vehicles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn placement_respects_minimum_gaps() {
        let cfg = HighwayConfig { n_vehicles: 80, ..HighwayConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let vehicles = place_vehicles(&cfg, &mut rng).unwrap();
            assert_eq!(vehicles.len(), 80);
            for lane in 0..cfg.n_lanes {
                let mut pos: Vec<f64> =
                    vehicles.iter().filter(|v| v.lane == lane).map(|v| v.pos).collect();
                pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for i in 0..pos.len() {
                    let ahead = pos[(i + 1) % pos.len()];
                    let dist = (ahead - pos[i]).rem_euclid(cfg.road_length);
                    let gap = dist - cfg.vehicle_length;
                    assert!(gap >= cfg.idm.min_gap, "lane {lane}: gap {gap}");
                }
            }
        }
    }

    #[test]
    fn overcrowding_is_rejected() {
        let cfg = HighwayConfig { n_vehicles: 200, ..HighwayConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            place_vehicles(&cfg, &mut rng),
            Err(HighwayError::TooDense { .. })
        ));
    }

    #[test]
    fn ego_is_first_and_in_its_lane() {
        let cfg = HighwayConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vehicles = place_vehicles(&cfg, &mut rng).unwrap();
        assert_eq!(vehicles[0].lane, cfg.ego_lane);
        assert_eq!(vehicles[0].v_des, cfg.ego_v_des);
    }
}
