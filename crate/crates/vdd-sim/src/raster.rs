//! Ego-centric two-channel BEV rasterizer. Heading points up. The road
//! channel encodes drivable area (0.5), the route corridor ahead (0.75) and
//! the destination region (1.0); the vehicle channel marks traffic footprints.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::map::MapSpec;
use crate::traffic::TrafficVehicle;

pub const ROAD_LEVELS: [f64; 4] = [0.0, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BevImage {
    pub road: Array2<f64>,
    pub vehicles: Array2<f64>,
    /// m per pixel
    pub resolution: f64,
}

impl BevImage {
    pub fn h(&self) -> usize {
        self.road.nrows()
    }

    pub fn w(&self) -> usize {
        self.road.ncols()
    }
}

pub struct RasterInput<'a> {
    pub map: &'a MapSpec,
    pub ego_pos: (f64, f64),
    pub ego_heading: f64,
    pub ego_progress: f64,
    pub traffic: &'a [TrafficVehicle],
}

/// Route corridor window rendered ahead of (and slightly behind) the ego.
const ROUTE_BEHIND: f64 = 5.0;
const ROUTE_AHEAD: f64 = 40.0;

pub fn rasterize_bev(input: &RasterInput, h: usize, w: usize, resolution: f64) -> BevImage {
    assert!(h > 0 && w > 0, "raster dims must be positive");
    let mut road = Array2::<f64>::zeros((h, w));
    let mut vehicles = Array2::<f64>::zeros((h, w));

    let (sh, ch) = input.ego_heading.sin_cos();
    // forward = heading direction; right = heading rotated -90 degrees
    let fwd = (ch, sh);
    let right = (sh, -ch);
    let half_route = input.map.lane_width / 2.0;

    // only traffic near enough to appear
    let radius = resolution * ((h * h + w * w) as f64).sqrt() / 2.0 + 5.0;
    let near: Vec<&TrafficVehicle> = input
        .traffic
        .iter()
        .filter(|t| {
            let dx = t.position.0 - input.ego_pos.0;
            let dy = t.position.1 - input.ego_pos.1;
            (dx * dx + dy * dy).sqrt() < radius
        })
        .collect();

    for r in 0..h {
        for c in 0..w {
            let x_img = (c as f64 - w as f64 / 2.0 + 0.5) * resolution;
            let y_img = (h as f64 / 2.0 - r as f64 - 0.5) * resolution;
            let px = input.ego_pos.0 + fwd.0 * y_img + right.0 * x_img;
            let py = input.ego_pos.1 + fwd.1 * y_img + right.1 * x_img;
            let p = (px, py);

            // road channel, strongest marking wins
            let ddest = ((px - input.map.destination.0).powi(2)
                + (py - input.map.destination.1).powi(2))
            .sqrt();
            let val = if ddest <= input.map.destination_radius {
                1.0
            } else {
                let (s, lat) = input.map.route.project(p);
                let in_corridor = lat.abs() <= half_route
                    && s >= input.ego_progress - ROUTE_BEHIND
                    && s <= input.ego_progress + ROUTE_AHEAD;
                if in_corridor {
                    0.75
                } else if input.map.is_drivable(p) {
                    0.5
                } else {
                    0.0
                }
            };
            road[[r, c]] = val;

            for t in &near {
                let dx = px - t.position.0;
                let dy = py - t.position.1;
                let (st, ct) = t.heading.sin_cos();
                let lx = dx * ct + dy * st;
                let ly = -dx * st + dy * ct;
                if lx.abs() <= t.length / 2.0 && ly.abs() <= t.width / 2.0 {
                    vehicles[[r, c]] = 1.0;
                    break;
                }
            }
        }
    }

    BevImage {
        road,
        vehicles,
        resolution,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapKind;

    fn straight_input(map: &MapSpec) -> RasterInput<'_> {
        RasterInput {
            map,
            ego_pos: (10.0, -2.0),
            ego_heading: 0.0,
            ego_progress: 10.0,
            traffic: &[],
        }
    }

    #[test]
    fn empty_traffic_gives_zero_vehicle_channel() {
        let map = MapSpec::build(MapKind::Straight);
        let img = rasterize_bev(&straight_input(&map), 32, 32, 0.5);
        assert!(img.vehicles.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_for_same_state() {
        let map = MapSpec::build(MapKind::Straight);
        let a = rasterize_bev(&straight_input(&map), 32, 32, 0.5);
        let b = rasterize_bev(&straight_input(&map), 32, 32, 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn values_come_from_the_palette() {
        let map = MapSpec::build(MapKind::Roundabout);
        let traffic = vec![TrafficVehicle {
            lane_id: 0,
            s: 0.0,
            speed: 0.0,
            position: (20.0, 2.0),
            heading: 1.0,
            length: 4.5,
            width: 2.0,
        }];
        let input = RasterInput {
            map: &map,
            ego_pos: (20.0, 0.0),
            ego_heading: 1.5,
            ego_progress: 30.0,
            traffic: &traffic,
        };
        let img = rasterize_bev(&input, 48, 48, 0.5);
        for &v in img.road.iter() {
            assert!(ROAD_LEVELS.contains(&v), "unexpected road value {v}");
        }
        for &v in img.vehicles.iter() {
            assert!(v == 0.0 || v == 1.0);
        }
        assert!(img.vehicles.iter().any(|&v| v == 1.0));
    }

    /// Independent oracle: rasterize the straight fixture with a differently
    /// structured computation (world-space grid walk instead of И pixel-space
    /// transform), and compare bitmaps.
    #[test]
    fn straight_fixture_matches_independent_rasterization() {
        let map = MapSpec::build(MapKind::Straight);
        let (h, w, res) = (16usize, 16usize, 1.0f64);
        let ego = (10.0, -2.0);
        let img = rasterize_bev(&straight_input(&map), h, w, res);
        // ego heading 0 (+x): image up = +x, image right = -y
        for r in 0..h {
            for c in 0..w {
                let forward = (h as f64 / 2.0 - r as f64 - 0.5) * res;
                let rightward = (c as f64 - w as f64 / 2.0 + 0.5) * res;
                let wx = ego.0 + forward;
                let wy = ego.1 - rightward;
                // straight map: drivable iff 0<=x<=80 and |y|<=4; route lane
                // corridor |y + 2| <= 2 within the window; destination disc at (80,-2)
                let dd = ((wx - 80.0).powi(2) + (wy + 2.0).powi(2)).sqrt();
                let expected = if dd <= 4.0 {
                    1.0
                } else if (wy + 2.0).abs() <= 2.0
                    && (0.0..=80.0).contains(&wx)
                    && wx >= 10.0 - 5.0
                    && wx <= 10.0 + 40.0
                {
                    0.75
                } else if (0.0..=80.0).contains(&wx) && wy.abs() <= 4.0 {
                    0.5
                } else {
                    0.0
                };
                assert_eq!(
                    img.road[[r, c]],
                    expected,
                    "pixel ({r},{c}) world ({wx},{wy})"
                );
            }
        }
    }
}
