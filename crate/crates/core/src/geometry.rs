//! Polyline reference paths and the shared Frenet frame.
//!
//! Both vehicles follow fixed reference paths that cross once; the
//! crossing point is the common station zero, so a vehicle that has not
//! reached the conflict point yet has a negative station.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// The two reference paths have no segment-segment intersection.
    #[error("reference paths do not intersect")]
    NoCrossing,
    #[error("invalid reference path: {0}")]
    InvalidPath(String),
}

/// Cartesian map coordinate in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Piecewise-linear reference path with precomputed cumulative arc length.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    vertices: Vec<Point2>,
    cumulative_arclength: Vec<f64>,
}

impl ReferencePath {
    /// Builds a path from at least two vertices; consecutive vertices must
    /// be distinct and all coordinates finite.
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::InvalidPath(format!(
                "need at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(GeometryError::InvalidPath(format!(
                    "non-finite vertex at index {i}"
                )));
            }
        }
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(0.0);
        for w in vertices.windows(2) {
            let seg = w[0].distance(w[1]);
            if seg == 0.0 {
                return Err(GeometryError::InvalidPath(
                    "consecutive vertices coincide".into(),
                ));
            }
            cumulative.push(cumulative.last().unwrap() + seg);
        }
        Ok(Self {
            vertices,
            cumulative_arclength: cumulative,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn cumulative_arclength(&self) -> &[f64] {
        &self.cumulative_arclength
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative_arclength.last().unwrap()
    }
}

/// Path-relative pose: station is signed arc length with zero at the
/// shared crossing point, lateral is the signed offset (left-positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetPose {
    pub station: f64,
    pub lateral: f64,
}

/// Intersection of two reference paths, with the arc length at which each
/// path reaches it.
#[derive(Debug, Clone, Copy)]
pub struct CrossingPoint {
    pub station_on_a: f64,
    pub station_on_b: f64,
    pub location: Point2,
}

/// Projects `point` onto the polyline, returning `(arclength, lateral)` of
/// the closest foot point. Points beyond either endpoint clamp to that
/// endpoint's arc length; lateral is the signed perpendicular offset from
/// the matched segment's line (left of travel positive).
pub fn project_to_path(path: &ReferencePath, point: Point2) -> (f64, f64) {
    let verts = path.vertices();
    let cum = path.cumulative_arclength();
    let mut best_dist2 = f64::INFINITY;
    let mut best = (0.0, 0.0);
    for i in 0..verts.len() - 1 {
        let a = verts[i];
        let b = verts[i + 1];
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let len = cum[i + 1] - cum[i];
        let px = point.x - a.x;
        let py = point.y - a.y;
        // Arc-length parameter of the foot point, clamped to the segment.
        let t = ((px * dx + py * dy) / len).clamp(0.0, len);
        let fx = a.x + dx * (t / len);
        let fy = a.y + dy * (t / len);
        let d2 = (point.x - fx).powi(2) + (point.y - fy).powi(2);
        if d2 < best_dist2 {
            best_dist2 = d2;
            let lateral = (dx * py - dy * px) / len;
            best = (cum[i] + t, lateral);
        }
    }
    best
}

/// Finds the segment-segment intersection of the two paths. With multiple
/// intersections, returns the one with the smallest `station_on_a`
/// (ties broken by smallest `station_on_b`). Parallel overlaps are not
/// treated as crossings.
pub fn find_crossing(
    path_a: &ReferencePath,
    path_b: &ReferencePath,
) -> Result<CrossingPoint, GeometryError> {
    let mut best: Option<CrossingPoint> = None;
    let va = path_a.vertices();
    let vb = path_b.vertices();
    let ca = path_a.cumulative_arclength();
    let cb = path_b.cumulative_arclength();
    for i in 0..va.len() - 1 {
        let (a0, a1) = (va[i], va[i + 1]);
        let rx = a1.x - a0.x;
        let ry = a1.y - a0.y;
        for j in 0..vb.len() - 1 {
            let (b0, b1) = (vb[j], vb[j + 1]);
            let qx = b1.x - b0.x;
            let qy = b1.y - b0.y;
            let denom = rx * qy - ry * qx;
            let scale = (rx.hypot(ry)) * (qx.hypot(qy));
            if denom.abs() <= 1e-12 * scale {
                continue;
            }
            let ex = b0.x - a0.x;
            let ey = b0.y - a0.y;
            let s = (ex * qy - ey * qx) / denom;
            let u = (ex * ry - ey * rx) / denom;
            let eps = 1e-12;
            if !(-eps..=1.0 + eps).contains(&s) || !(-eps..=1.0 + eps).contains(&u) {
                continue;
            }
            let s = s.clamp(0.0, 1.0);
            let u = u.clamp(0.0, 1.0);
            let candidate = CrossingPoint {
                station_on_a: ca[i] + s * (ca[i + 1] - ca[i]),
                station_on_b: cb[j] + u * (cb[j + 1] - cb[j]),
                location: Point2::new(a0.x + s * rx, a0.y + s * ry),
            };
            let better = match &best {
                None => true,
                Some(cur) => {
                    candidate.station_on_a < cur.station_on_a
                        || (candidate.station_on_a == cur.station_on_a
                            && candidate.station_on_b < cur.station_on_b)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    best.ok_or(GeometryError::NoCrossing)
}

/// Converts timestamped Cartesian points into the shared Frenet frame:
/// station = projected arc length minus `crossing_station`, so the station
/// is negative strictly before the crossing point and positive after it.
pub fn to_shared_frenet(
    path: &ReferencePath,
    crossing_station: f64,
    cartesian_points: &[(f64, Point2)],
) -> Vec<(f64, FrenetPose)> {
    cartesian_points
        .iter()
        .map(|&(t, p)| {
            let (arclength, lateral) = project_to_path(path, p);
            (
                t,
                FrenetPose {
                    station: arclength - crossing_station,
                    lateral,
                },
            )
        })
        .collect()
}
