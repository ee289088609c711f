//! Lane-keeping IDM traffic. Vehicles follow their assigned centerline and
//! brake for the vehicle ahead on the same lane; they never change lanes and
//! ignore the ego for planning (the ego must avoid them). Non-cyclic lanes
//! wrap around to keep density constant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::idm::{idm_accel, idm_free_accel, IdmParams};
use crate::map::MapSpec;
use crate::rng::SimRng;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrafficVehicle {
    pub lane_id: usize,
    /// arc length along the lane
    pub s: f64,
    pub speed: f64,
    pub position: (f64, f64),
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

/// Spawn vehicles on every lane except within a protected window around the
/// ego start. Vehicle count per lane scales with density: one per 15 m at
/// density 1.
pub fn spawn_traffic(
    map: &MapSpec,
    density: f64,
    ego_lane: usize,
    ego_s: f64,
    rng: &mut SimRng,
) -> Vec<TrafficVehicle> {
    let mut out = Vec::new();
    const SPACING_AT_FULL: f64 = 15.0;
    const PROTECT: f64 = 14.0;
    for (lane_id, lane) in map.lanes.iter().enumerate() {
        let len = lane.length();
        let n = (density * len / SPACING_AT_FULL).floor() as usize;
        if n == 0 {
            continue;
        }
        let slot = len / n as f64;
        for i in 0..n {
            let jitter: f64 = rng.rng().gen_range(-0.25..0.25);
            let s = (i as f64 + 0.5 + jitter) * slot;
            let s = if lane.cyclic { s.rem_euclid(len) } else { s.min(len) };
            if lane_id == ego_lane && (s - ego_s).abs() < PROTECT {
                continue;
            }
            let speed: f64 = rng.rng().gen_range(2.0..6.0);
            let (x, y, heading) = lane.pose_at(s);
            out.push(TrafficVehicle {
                lane_id,
                s,
                speed,
                position: (x, y),
                heading,
                length: 4.5,
                width: 2.0,
            });
        }
    }
    out
}

/// Advance all traffic one step of IDM car following.
pub fn step_traffic(map: &MapSpec, traffic: &mut [TrafficVehicle], idm: &IdmParams, dt: f64) {
    // per-lane ordering by arc length
    let mut by_lane: Vec<Vec<usize>> = vec![Vec::new(); map.lanes.len()];
    for (i, v) in traffic.iter().enumerate() {
        by_lane[v.lane_id].push(i);
    }
    for ids in by_lane.iter_mut() {
        ids.sort_by(|&a, &b| traffic[a].s.partial_cmp(&traffic[b].s).unwrap());
    }

    let mut accels = vec![0.0f64; traffic.len()];
    for (lane_id, ids) in by_lane.iter().enumerate() {
        let lane = &map.lanes[lane_id];
        let len = lane.length();
        for (k, &i) in ids.iter().enumerate() {
            let me = &traffic[i];
            // leader: next ahead on the lane; cyclic lanes wrap, bounded lanes
            // leave the front-most vehicle on free road
            let leader = if k + 1 < ids.len() {
                Some(ids[k + 1])
            } else if lane.cyclic && ids.len() >= 2 {
                Some(ids[0])
            } else {
                None
            };
            accels[i] = match leader {
                Some(j) => {
                    let lead = &traffic[j];
                    let mut gap = lead.s - me.s;
                    if gap <= 0.0 && lane.cyclic {
                        gap += len;
                    }
                    gap -= 0.5 * (lead.length + me.length);
                    idm_accel(gap, me.speed, lead.speed, idm)
                }
                None => idm_free_accel(me.speed, idm),
            };
        }
    }

    for (v, a) in traffic.iter_mut().zip(&accels) {
        v.speed = (v.speed + a * dt).max(0.0);
        let lane = &map.lanes[v.lane_id];
        let len = lane.length();
        v.s += v.speed * dt;
        if v.s >= len {
            // wrap: cyclic lanes naturally, bounded lanes teleport to start
            v.s = v.s.rem_euclid(len);
        }
        let (x, y, heading) = lane.pose_at(v.s);
        v.position = (x, y);
        v.heading = heading;
    }
}

/// Oriented-bounding-box overlap via the separating axis test.
pub fn obb_overlap(
    c1: (f64, f64),
    half1: (f64, f64),
    h1: f64,
    c2: (f64, f64),
    half2: (f64, f64),
    h2: f64,
) -> bool {
    let axes = [
        (h1.cos(), h1.sin()),
        (-h1.sin(), h1.cos()),
        (h2.cos(), h2.sin()),
        (-h2.sin(), h2.cos()),
    ];
    let d = (c2.0 - c1.0, c2.1 - c1.1);
    for (ax, ay) in axes {
        let r1 = half1.0 * (ax * h1.cos() + ay * h1.sin()).abs()
            + half1.1 * (-ax * h1.sin() + ay * h1.cos()).abs();
        let r2 = half2.0 * (ax * h2.cos() + ay * h2.sin()).abs()
            + half2.1 * (-ax * h2.sin() + ay * h2.cos()).abs();
        let dist = (d.0 * ax + d.1 * ay).abs();
        if dist > r1 + r2 {
            return false;
        }
    }
    true
}
