//! Procedural driving maps: a straight test fixture, a cross intersection and
//! a roundabout. Each map carries centerline lanes for scripted traffic, one
//! ego route with checkpoints, and a drivable-area patch union.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Straight,
    Intersection,
    Roundabout,
}

impl std::str::FromStr for MapKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "straight" => Ok(MapKind::Straight),
            "intersection" => Ok(MapKind::Intersection),
            "roundabout" => Ok(MapKind::Roundabout),
            other => Err(format!("unknown map kind `{other}`")),
        }
    }
}

/// Polyline lane centerline with cached cumulative arc length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lane {
    pub points: Vec<(f64, f64)>,
    pub cyclic: bool,
    cum: Vec<f64>,
}

impl Lane {
    pub fn new(points: Vec<(f64, f64)>, cyclic: bool) -> Self {
        assert!(points.len() >= 2, "lane needs at least 2 points");
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            let d = dist(w[0], w[1]);
            assert!(d > 1e-9, "lane waypoints must strictly advance");
            cum.push(cum.last().unwrap() + d);
        }
        if cyclic {
            // implicit closing segment back to the first point
            let d = dist(*points.last().unwrap(), points[0]);
            cum.push(cum.last().unwrap() + d);
        }
        Lane { points, cyclic, cum }
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn segment(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        let n = self.points.len();
        if i + 1 < n {
            (self.points[i], self.points[i + 1])
        } else {
            (self.points[n - 1], self.points[0]) // cyclic closer
        }
    }

    fn n_segments(&self) -> usize {
        if self.cyclic {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    /// Position and heading at arc length `s` (wrapped if cyclic, clamped otherwise).
    pub fn pose_at(&self, s: f64) -> (f64, f64, f64) {
        let len = self.length();
        let s = if self.cyclic {
            s.rem_euclid(len)
        } else {
            s.clamp(0.0, len)
        };
        // find segment
        let mut i = match self
            .cum
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if i >= self.n_segments() {
            i = self.n_segments() - 1;
        }
        let (a, b) = self.segment(i);
        let seg_len = dist(a, b);
        let t = if seg_len > 0.0 {
            (s - self.cum[i]) / seg_len
        } else {
            0.0
        };
        let x = a.0 + (b.0 - a.0) * t;
        let y = a.1 + (b.1 - a.1) * t;
        let heading = (b.1 - a.1).atan2(b.0 - a.0);
        (x, y, heading)
    }

    /// Project a point: returns (arc length of projection, signed lateral
    /// offset). Lateral is positive to the left of travel direction.
    pub fn project(&self, p: (f64, f64)) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY, 0.0); // (s, dist2, signed lateral)
        for i in 0..self.n_segments() {
            let (a, b) = self.segment(i);
            let abx = b.0 - a.0;
            let aby = b.1 - a.1;
            let len2 = abx * abx + aby * aby;
            let t = if len2 > 0.0 {
                (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let fx = a.0 + abx * t;
            let fy = a.1 + aby * t;
            let d2 = (p.0 - fx) * (p.0 - fx) + (p.1 - fy) * (p.1 - fy);
            if d2 < best.1 {
                let s = self.cum[i] + t * len2.sqrt();
                // sign: cross(ab, ap) > 0 means left of segment
                let cross = abx * (p.1 - a.1) - aby * (p.0 - a.0);
                best = (s, d2, d2.sqrt().copysign(cross));
            }
        }
        (best.0, best.2)
    }
}

/// Arc length of the projection of `position` onto the route polyline.
/// Returns (progress, |lateral|, off_route) with off_route set when the point
/// is farther than `corridor` from the route.
pub fn frenet_progress(route: &Lane, position: (f64, f64), corridor: f64) -> (f64, f64, bool) {
    let (s, lat) = route.project(position);
    (s, lat.abs(), lat.abs() > corridor)
}

/// Drivable-area primitive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Patch {
    Rect {
        center: (f64, f64),
        half_len: f64,
        half_wid: f64,
        heading: f64,
    },
    Ring {
        center: (f64, f64),
        r_in: f64,
        r_out: f64,
    },
}

impl Patch {
    pub fn contains(&self, p: (f64, f64)) -> bool {
        match self {
            Patch::Rect {
                center,
                half_len,
                half_wid,
                heading,
            } => {
                let dx = p.0 - center.0;
                let dy = p.1 - center.1;
                let (s, c) = heading.sin_cos();
                let lx = dx * c + dy * s;
                let ly = -dx * s + dy * c;
                lx.abs() <= *half_len && ly.abs() <= *half_wid
            }
            Patch::Ring { center, r_in, r_out } => {
                let r = dist(p, *center);
                r >= *r_in && r <= *r_out
            }
        }
    }
}

/// A reference checkpoint on the route: the ego state is expressed relative
/// to the next checkpoint's pose.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Checkpoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSpec {
    pub kind: MapKind,
    pub lane_width: f64,
    /// traffic lane centerlines
    pub lanes: Vec<Lane>,
    /// lanes the ego may start on (indices into `lanes`)
    pub ego_start_lanes: Vec<usize>,
    pub route: Lane,
    pub checkpoints: Vec<Checkpoint>,
    pub drivable: Vec<Patch>,
    pub destination: (f64, f64),
    pub destination_radius: f64,
}

impl MapSpec {
    pub fn build(kind: MapKind) -> Self {
        match kind {
            MapKind::Straight => straight(),
            MapKind::Intersection => intersection(),
            MapKind::Roundabout => roundabout(),
        }
    }

    pub fn is_drivable(&self, p: (f64, f64)) -> bool {
        self.drivable.iter().any(|patch| patch.contains(p))
    }

    /// Next checkpoint strictly ahead of `progress` (last one once passed).
    pub fn checkpoint_ahead(&self, progress: f64) -> &Checkpoint {
        self.checkpoints
            .iter()
            .find(|c| c.s > progress + 0.5)
            .unwrap_or_else(|| self.checkpoints.last().unwrap())
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn line_points(a: (f64, f64), b: (f64, f64), spacing: f64) -> Vec<(f64, f64)> {
    let len = dist(a, b);
    let n = (len / spacing).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
        })
        .collect()
}

fn arc_points(
    center: (f64, f64),
    radius: f64,
    start_angle: f64,
    end_angle: f64,
    spacing: f64,
) -> Vec<(f64, f64)> {
    let sweep = end_angle - start_angle;
    let n = ((radius * sweep.abs()) / spacing).ceil().max(2.0) as usize;
    (0..=n)
        .map(|i| {
            let a = start_angle + sweep * i as f64 / n as f64;
            (center.0 + radius * a.cos(), center.1 + radius * a.sin())
        })
        .collect()
}

const WP: f64 = 2.0; // waypoint spacing, m

fn straight() -> MapSpec {
    let lane_width = 4.0;
    let len = 80.0;
    // two same-direction lanes along +x
    let lane0 = Lane::new(line_points((0.0, -2.0), (len, -2.0), WP), false);
    let lane1 = Lane::new(line_points((0.0, 2.0), (len, 2.0), WP), false);
    let route = Lane::new(line_points((0.0, -2.0), (len, -2.0), WP), false);
    let end = (len, -2.0);
    let checkpoints = vec![Checkpoint {
        s: route.length(),
        x: end.0,
        y: end.1,
        heading: 0.0,
    }];
    MapSpec {
        kind: MapKind::Straight,
        lane_width,
        lanes: vec![lane0, lane1],
        ego_start_lanes: vec![0],
        route,
        checkpoints,
        drivable: vec![Patch::Rect {
            center: (len / 2.0, 0.0),
            half_len: len / 2.0,
            half_wid: lane_width,
            heading: 0.0,
        }],
        destination: end,
        destination_radius: 4.0,
    }
}

fn intersection() -> MapSpec {
    let lane_width = 4.0;
    let half = 55.0;
    // right-hand two-way roads; ego drives south -> north on x = +2
    let ego_lane = Lane::new(line_points((2.0, -half), (2.0, half), WP), false);
    let oncoming = Lane::new(line_points((-2.0, half), (-2.0, -half), WP), false);
    let eastbound = Lane::new(line_points((-half, -2.0), (half, -2.0), WP), false);
    let westbound = Lane::new(line_points((half, 2.0), (-half, 2.0), WP), false);
    let route = Lane::new(line_points((2.0, -half), (2.0, half), WP), false);
    let end = (2.0, half);
    let checkpoints = vec![
        // intersection entry, then the route end
        Checkpoint {
            s: half - lane_width,
            x: 2.0,
            y: -lane_width,
            heading: std::f64::consts::FRAC_PI_2,
        },
        Checkpoint {
            s: route.length(),
            x: end.0,
            y: end.1,
            heading: std::f64::consts::FRAC_PI_2,
        },
    ];
    MapSpec {
        kind: MapKind::Intersection,
        lane_width,
        lanes: vec![ego_lane, oncoming, eastbound, westbound],
        ego_start_lanes: vec![0],
        route,
        checkpoints,
        drivable: vec![
            Patch::Rect {
                center: (0.0, 0.0),
                half_len: half,
                half_wid: lane_width,
                heading: std::f64::consts::FRAC_PI_2,
            },
            Patch::Rect {
                center: (0.0, 0.0),
                half_len: half,
                half_wid: lane_width,
                heading: 0.0,
            },
        ],
        destination: end,
        destination_radius: 4.0,
    }
}

fn roundabout() -> MapSpec {
    let lane_width = 4.0;
    let r = 20.0;
    let arm_far = 55.0;
    // entry point on the ring for the south arm's inbound lane (x = +2)
    let yj = -(r * r - 4.0).sqrt(); // circle at x = 2
    let theta_in = yj.atan2(2.0); // ~ -84.3 deg
    let theta_out = -theta_in; // exit toward the north arm at x = +2

    let mut route_pts = line_points((2.0, -arm_far), (2.0, yj), WP);
    // counterclockwise around the ring
    let arc = arc_points((0.0, 0.0), r, theta_in, theta_out, WP);
    route_pts.extend(arc.into_iter().skip(1));
    route_pts.extend(line_points((2.0, -yj), (2.0, arm_far), WP).into_iter().skip(1));
    let route = Lane::new(route_pts, false);
    let end = (2.0, arm_far);

    let ring = Lane::new(
        arc_points(
            (0.0, 0.0),
            r,
            0.0,
            2.0 * std::f64::consts::PI * (1.0 - 1e-9),
            WP,
        ),
        true,
    );
    let south_in = Lane::new(line_points((2.0, -arm_far), (2.0, yj), WP), false);
    let north_out = Lane::new(line_points((2.0, -yj), (2.0, arm_far), WP), false);

    let s_ring_entry = south_in.length();
    let s_ring_exit = s_ring_entry + r * (theta_out - theta_in);
    let checkpoints = vec![
        Checkpoint {
            s: s_ring_entry,
            x: 2.0,
            y: yj,
            heading: theta_in + std::f64::consts::FRAC_PI_2, // ccw tangent
        },
        Checkpoint {
            s: s_ring_exit,
            x: 2.0,
            y: -yj,
            heading: theta_out + std::f64::consts::FRAC_PI_2,
        },
        Checkpoint {
            s: route.length(),
            x: end.0,
            y: end.1,
            heading: std::f64::consts::FRAC_PI_2,
        },
    ];

    let arm = |center: (f64, f64), heading: f64| Patch::Rect {
        center,
        half_len: (arm_far - r + lane_width) / 2.0 + 2.0,
        half_wid: lane_width,
        heading,
    };
    let mid = (r - lane_width + arm_far) / 2.0;
    MapSpec {
        kind: MapKind::Roundabout,
        lane_width,
        lanes: vec![ring, south_in, north_out],
        ego_start_lanes: vec![1],
        route,
        checkpoints,
        drivable: vec![
            Patch::Ring {
                center: (0.0, 0.0),
                r_in: r - lane_width,
                r_out: r + lane_width,
            },
            arm((0.0, -mid), std::f64::consts::FRAC_PI_2),
            arm((0.0, mid), std::f64::consts::FRAC_PI_2),
            arm((mid, 0.0), 0.0),
            arm((-mid, 0.0), 0.0),
        ],
        destination: end,
        destination_radius: 4.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn frenet_origin_and_endpoint() {
        let route = Lane::new(vec![(0.0, 0.0), (10.0, 0.0)], false);
        let (s0, _, _) = frenet_progress(&route, (0.0, 0.0), 8.0);
        assert_eq!(s0, 0.0);
        let (s1, _, _) = frenet_progress(&route, (10.0, 0.0), 8.0);
        assert_abs_diff_eq!(s1, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn frenet_lateral_offset_projects_to_midpoint() {
        let route = Lane::new(vec![(0.0, 0.0), (10.0, 0.0)], false);
        let (s, lat, off) = frenet_progress(&route, (5.0, 1.0), 8.0);
        assert_abs_diff_eq!(s, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lat, 1.0, epsilon = 1e-12);
        assert!(!off);
        let (_, _, off_far) = frenet_progress(&route, (5.0, 20.0), 8.0);
        assert!(off_far);
    }

    #[test]
    fn progress_monotone_along_route() {
        for kind in [MapKind::Straight, MapKind::Intersection, MapKind::Roundabout] {
            let map = MapSpec::build(kind);
            let mut last = -1.0;
            let n = 200;
            for i in 0..=n {
                let s = map.route.length() * i as f64 / n as f64;
                let (x, y, _) = map.route.pose_at(s);
                let (p, _, _) = frenet_progress(&map.route, (x, y), 8.0);
                assert!(
                    p >= last - 1e-9,
                    "{kind:?}: progress regressed {last} -> {p} at s={s}"
                );
                last = p;
            }
            assert_abs_diff_eq!(last, map.route.length(), epsilon = 1e-6);
        }
    }

    #[test]
    fn route_lies_in_drivable_area() {
        for kind in [MapKind::Straight, MapKind::Intersection, MapKind::Roundabout] {
            let map = MapSpec::build(kind);
            let n = 300;
            for i in 0..=n {
                let s = map.route.length() * i as f64 / n as f64;
                let (x, y, _) = map.route.pose_at(s);
                assert!(map.is_drivable((x, y)), "{kind:?}: route point off-road at s={s}");
            }
        }
    }

    #[test]
    fn cyclic_lane_wraps_pose() {
        let ring = Lane::new(
            arc_points((0.0, 0.0), 10.0, 0.0, 2.0 * std::f64::consts::PI * 0.999999, 1.0),
            true,
        );
        let (x0, y0, _) = ring.pose_at(0.0);
        let (x1, y1, _) = ring.pose_at(ring.length());
        assert_abs_diff_eq!(x0, x1, epsilon = 1e-6);
        assert_abs_diff_eq!(y0, y1, epsilon = 1e-6);
    }

    #[test]
    fn checkpoints_increase_and_end_at_route_end() {
        for kind in [MapKind::Straight, MapKind::Intersection, MapKind::Roundabout] {
            let map = MapSpec::build(kind);
            let mut last = 0.0;
            for c in &map.checkpoints {
                assert!(c.s > last);
                last = c.s;
            }
            assert_abs_diff_eq!(last, map.route.length(), epsilon = 1e-9);
        }
    }
}
