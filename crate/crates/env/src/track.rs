//! Closed race tracks: centerline geometry, projection, validation,
//! procedural generation and the JSON track file.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};

pub const TRACK_FORMAT_VERSION: u32 = 1;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub seed: Option<u64>,
    pub points: Vec<Point>,
    pub half_width: Vec<f64>,
    pub version: u32,
}

/// Closed centerline with per-point half width. The segment from the last
/// point back to the first closes the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    seed: Option<u64>,
    points: Vec<Point>,
    half_width: Vec<f64>,
    arclength: Vec<f64>,
    length: f64,
    tangents: Vec<Point>,
    min_segment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arclength of the closest centerline point, in `[0, length)`.
    pub s: f64,
    /// Signed distance to the centerline, positive to the left of the driving direction.
    pub lateral: f64,
    pub point: Point,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub closed: bool,
    pub self_intersection_free: bool,
    pub min_radius: f64,
}

impl ValidationReport {
    pub fn is_valid(&self, min_radius: f64) -> bool {
        self.closed && self.self_intersection_free && self.min_radius >= min_radius
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Radius of the circle through three points, capped at `cap`. Collinear or
/// nearly collinear triples return `cap`.
pub fn circumradius(a: Point, b: Point, c: Point, cap: f64) -> f64 {
    let ab = norm(sub(b, a));
    let bc = norm(sub(c, b));
    let ca = norm(sub(a, c));
    let twice_area = cross(sub(b, a), sub(c, a)).abs();
    let denom = 2.0 * twice_area;
    if denom <= ab * bc * ca / cap || denom == 0.0 {
        return cap;
    }
    (ab * bc * ca / denom).min(cap)
}

impl Track {
    pub fn new(points: Vec<Point>, half_width: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        let mut points = points;
        let mut half_width = half_width;
        if points.len() != half_width.len() {
            return Err(EnvError::MalformedTrack(format!(
                "{} points but {} half widths",
                points.len(),
                half_width.len()
            )));
        }
        if points.len() > 1 && norm(sub(points[0], *points.last().unwrap())) < 1e-9 {
            points.pop();
            half_width.pop();
        }
        if points.len() < 4 {
            return Err(EnvError::MalformedTrack("need at least 4 distinct points".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EnvError::MalformedTrack("non-finite point".into()));
        }
        if half_width.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(EnvError::MalformedTrack("half widths must be positive".into()));
        }
        let n = points.len();
        let mut arclength = Vec::with_capacity(n);
        let mut s = 0.0;
        let mut min_segment = f64::INFINITY;
        for i in 0..n {
            arclength.push(s);
            let seg = norm(sub(points[(i + 1) % n], points[i]));
            if seg <= 0.0 {
                return Err(EnvError::MalformedTrack(format!("zero-length segment at {i}")));
            }
            min_segment = min_segment.min(seg);
            s += seg;
        }
        let tangents = (0..n)
            .map(|i| {
                let d = sub(points[(i + 1) % n], points[(i + n - 1) % n]);
                let l = norm(d);
                [d[0] / l, d[1] / l]
            })
            .collect();
        Ok(Self {
            seed,
            points,
            half_width,
            arclength,
            length: s,
            tangents,
            min_segment,
        })
    }

    pub fn with_constant_width(points: Vec<Point>, half_width: f64, seed: Option<u64>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![half_width; n], seed)
    }

    /// Circle of the given radius, counterclockwise, starting at `(radius, 0)`.
    pub fn circle(radius: f64, n: usize, half_width: f64) -> Result<Self> {
        let points = (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect();
        Self::with_constant_width(points, half_width, None)
    }

    /// Two straights of length `straight` joined by half circles of `radius`.
    /// Starts at the beginning of the lower straight, heading along +x.
    pub fn stadium(straight: f64, radius: f64, spacing: f64, half_width: f64) -> Result<Self> {
        let mut points = Vec::new();
        let n_straight = (straight / spacing).round().max(1.0) as usize;
        let n_arc = (PI * radius / spacing).round().max(2.0) as usize;
        for i in 0..n_straight {
            points.push([straight * i as f64 / n_straight as f64, -radius]);
        }
        for i in 0..n_arc {
            let a = -PI / 2.0 + PI * i as f64 / n_arc as f64;
            points.push([straight + radius * a.cos(), radius * a.sin()]);
        }
        for i in 0..n_straight {
            points.push([straight * (1.0 - i as f64 / n_straight as f64), radius]);
        }
        for i in 0..n_arc {
            let a = PI / 2.0 + PI * i as f64 / n_arc as f64;
            points.push([radius * a.cos(), radius * a.sin()]);
        }
        Self::with_constant_width(points, half_width, None)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_width
    }

    pub fn arclengths(&self) -> &[f64] {
        &self.arclength
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn wrap(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.length);
        // rem_euclid can round up to exactly `length`
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    /// Shortest signed arclength from `from` to `to` on the loop.
    pub fn signed_distance(&self, from: f64, to: f64) -> f64 {
        let mut d = (to - from).rem_euclid(self.length);
        if d > self.length / 2.0 {
            d -= self.length;
        }
        d
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let s = self.wrap(s);
        let i = self.arclength.partition_point(|&a| a <= s).saturating_sub(1);
        let next = self.arclength.get(i + 1).copied().unwrap_or(self.length);
        (i, (s - self.arclength[i]) / (next - self.arclength[i]))
    }

    pub fn point_at(&self, s: f64) -> Point {
        let (i, t) = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Unit tangent, blended linearly between vertex tangents.
    pub fn tangent_at(&self, s: f64) -> Point {
        let (i, t) = self.segment_at(s);
        let a = self.tangents[i];
        let b = self.tangents[(i + 1) % self.points.len()];
        let v = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let l = norm(v);
        [v[0] / l, v[1] / l]
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let t = self.tangent_at(s);
        t[1].atan2(t[0])
    }

    pub fn half_width_at(&self, s: f64) -> f64 {
        let (i, t) = self.segment_at(s);
        let a = self.half_width[i];
        let b = self.half_width[(i + 1) % self.points.len()];
        a + t * (b - a)
    }

    /// Circumradius through the centerline points at `s - span`, `s`, `s + span`.
    pub fn radius_at(&self, s: f64, span: f64, cap: f64) -> f64 {
        circumradius(self.point_at(s - span), self.point_at(s), self.point_at(s + span), cap)
    }

    /// Closest centerline point to `p`. With a `hint` only segments within
    /// `window` metres of arclength around the hint are searched.
    pub fn project(&self, p: Point, hint: Option<(f64, f64)>) -> Projection {
        let n = self.points.len();
        let (start, count) = match hint {
            Some((s, window)) if window * 2.0 < self.length => {
                let (i, _) = self.segment_at(s);
                let reach = (window / self.min_segment).ceil() as usize + 1;
                if 2 * reach + 1 >= n {
                    (0, n)
                } else {
                    ((i + n - reach) % n, 2 * reach + 1)
                }
            }
            _ => (0, n),
        };
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for k in 0..count {
            let i = (start + k) % n;
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            let ab = sub(b, a);
            let len_sq = ab[0] * ab[0] + ab[1] * ab[1];
            let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len_sq).clamp(0.0, 1.0);
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d = norm(sub(p, q));
            if d < best.0 {
                best = (d, i, t);
            }
        }
        let (dist, i, t) = best;
        let a = self.points[i];
        let b = self.points[(i + 1) % n];
        let seg_len = norm(sub(b, a));
        let s = self.wrap(self.arclength[i] + t * seg_len);
        let point = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let side = cross(sub(b, a), sub(p, point));
        let lateral = if side >= 0.0 { dist } else { -dist };
        Projection {
            s,
            lateral,
            point,
            heading: self.heading_at(s),
        }
    }

    /// Smallest three-point radius over the loop using samples `span` apart.
    pub fn min_radius(&self, span: f64) -> f64 {
        self.arclength
            .iter()
            .map(|&s| self.radius_at(s, span, 1e6))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> ValidationReport {
        let n = self.points.len();
        let mean_seg = self.length / n as f64;
        let mut max_seg: f64 = 0.0;
        for i in 0..n - 1 {
            max_seg = max_seg.max(self.arclength[i + 1] - self.arclength[i]);
        }
        let closing = self.length - self.arclength[n - 1];
        let closed = closing <= 2.0 * max_seg.max(mean_seg);

        let stride = ((2.0 / mean_seg).floor() as usize).max(1);
        let idx: Vec<usize> = (0..n).step_by(stride).collect();
        let mut self_intersection_free = true;
        'outer: for (a_pos, &i) in idx.iter().enumerate() {
            for &j in &idx[a_pos + 1..] {
                let clearance = self.half_width[i] + self.half_width[j];
                let sep = self.signed_distance(self.arclength[i], self.arclength[j]).abs();
                if sep <= 3.0 * clearance {
                    continue;
                }
                if norm(sub(self.points[i], self.points[j])) < clearance + 0.5 {
                    self_intersection_free = false;
                    break 'outer;
                }
            }
        }
        ValidationReport {
            closed,
            self_intersection_free,
            min_radius: self.min_radius(3.0),
        }
    }

    pub fn to_file(&self) -> TrackFile {
        TrackFile {
            seed: self.seed,
            points: self.points.clone(),
            half_width: self.half_width.clone(),
            version: TRACK_FORMAT_VERSION,
        }
    }

    pub fn from_file(file: TrackFile) -> Result<Self> {
        if file.version != TRACK_FORMAT_VERSION {
            return Err(EnvError::MalformedTrack(format!(
                "unsupported track file version {}",
                file.version
            )));
        }
        Self::new(file.points, file.half_width, file.seed)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file: TrackFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackGenParams {
    pub control_points_min: usize,
    pub control_points_max: usize,
    /// Mean distance of the control polygon from the origin (m).
    pub base_radius: f64,
    /// Relative radial jitter of control points.
    pub radius_jitter: f64,
    /// Angular jitter as a fraction of one control sector.
    pub angle_jitter: f64,
    pub half_width: f64,
    /// Lower bound on the three-point curve radius (3 m span).
    pub min_radius: f64,
    /// Resampling distance along the centerline (m).
    pub spacing: f64,
    pub max_attempts: usize,
}

impl Default for TrackGenParams {
    fn default() -> Self {
        Self {
            control_points_min: 8,
            control_points_max: 12,
            base_radius: 50.0,
            radius_jitter: 0.35,
            angle_jitter: 0.3,
            half_width: 5.0,
            min_radius: 12.0,
            spacing: 0.5,
            max_attempts: 500,
        }
    }
}

fn bspline_point(p: [Point; 4], t: f64) -> Point {
    let t2 = t * t;
    let t3 = t2 * t;
    let b0 = (1.0 - t).powi(3) / 6.0;
    let b1 = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
    let b2 = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
    let b3 = t3 / 6.0;
    [
        b0 * p[0][0] + b1 * p[1][0] + b2 * p[2][0] + b3 * p[3][0],
        b0 * p[0][1] + b1 * p[1][1] + b2 * p[2][1] + b3 * p[3][1],
    ]
}

/// Closed uniform cubic B-spline through the control polygon, resampled at
/// (approximately) uniform arclength `spacing`.
fn periodic_bspline(control: &[Point], spacing: f64) -> Vec<Point> {
    let n = control.len();
    let per_segment = 200;
    let mut dense = Vec::with_capacity(n * per_segment);
    for i in 0..n {
        let p = [
            control[(i + n - 1) % n],
            control[i],
            control[(i + 1) % n],
            control[(i + 2) % n],
        ];
        for k in 0..per_segment {
            dense.push(bspline_point(p, k as f64 / per_segment as f64));
        }
    }
    let m = dense.len();
    let mut cum = Vec::with_capacity(m + 1);
    cum.push(0.0);
    for i in 0..m {
        let d = norm(sub(dense[(i + 1) % m], dense[i]));
        cum.push(cum[i] + d);
    }
    let total = cum[m];
    let count = (total / spacing).round().max(4.0) as usize;
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for k in 0..count {
        let target = k as f64 * step;
        while cum[j + 1] < target {
            j += 1;
        }
        let t = (target - cum[j]) / (cum[j + 1] - cum[j]);
        let a = dense[j];
        let b = dense[(j + 1) % m];
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out
}

/// Deterministic track per seed: jittered control polygon around a circle,
/// smoothed by a periodic cubic B-spline, rejection-sampled against the
/// closure, self-intersection and minimum-radius validators.
pub fn generate_track(seed: u64, params: &TrackGenParams) -> Result<Track> {
    if params.control_points_min < 4 || params.control_points_max < params.control_points_min {
        return Err(EnvError::InvalidConfig("bad control point range".into()));
    }
    if !(params.spacing > 0.0 && params.half_width > 0.0 && params.base_radius > 0.0) {
        return Err(EnvError::InvalidConfig("spacing, width and radius must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_reason = String::from("no attempts");
    for _ in 0..params.max_attempts {
        let n = rng.random_range(params.control_points_min..=params.control_points_max);
        let sector = 2.0 * PI / n as f64;
        let control: Vec<Point> = (0..n)
            .map(|k| {
                let a = k as f64 * sector
                    + rng.random_range(-params.angle_jitter..=params.angle_jitter) * sector;
                let r = params.base_radius
                    * (1.0 + rng.random_range(-params.radius_jitter..=params.radius_jitter));
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        let points = periodic_bspline(&control, params.spacing);
        let track = match Track::with_constant_width(points, params.half_width, Some(seed)) {
            Ok(t) => t,
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        let report = track.validate();
        if report.is_valid(params.min_radius) {
            return Ok(track);
        }
        last_reason = format!("{report:?}");
    }
    Err(EnvError::GenerationFailed {
        attempts: params.max_attempts,
        last_reason,
    })
}
