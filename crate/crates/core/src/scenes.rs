//! Built-in scene generators and UE routes.
//!
//! Every generator returns a scene together with the polyline the UE drives
//! along. gNBs sit on that route at a fixed arc-length spacing, shifted
//! sideways to the left of the driving direction.
//!
//! Optional street obstacles (parked vehicles, kiosks) are boxes placed in a
//! band between the route and the gNB line. Their end faces are
//! perpendicular to the street, which is what makes single-bounce lines from
//! a straight street cross at useful angles: facade reflections alone all
//! produce lines parallel to the street.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{associate, TrajectoryPoint};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Segment};
use crate::raytracer::{trace_paths, GnbSite, Scene, Wall};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneKind {
    Corridor,
    Grid,
    ManhattanBlock,
}

impl SceneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneKind::Corridor => "corridor",
            SceneKind::Grid => "grid",
            SceneKind::ManhattanBlock => "manhattan-block",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corridor" => Ok(SceneKind::Corridor),
            "grid" => Ok(SceneKind::Grid),
            "manhattan-block" => Ok(SceneKind::ManhattanBlock),
            other => Err(Error::Config(format!(
                "unknown scene kind {other:?} (expected corridor, grid or manhattan-block)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub kind: SceneKind,
    /// Corridor route length.
    pub length_m: f64,
    pub street_width_m: f64,
    /// Building length along the street (corridor) or square side (grid).
    pub block_m: f64,
    /// Width of the cross streets between corridor buildings.
    pub cross_street_m: f64,
    /// How far corridor buildings extend back from the facade.
    pub block_depth_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub gnb_spacing_m: f64,
    pub lateral_offset_m: f64,
    pub gnb_height_m: f64,
    pub wall_loss_db: f64,
    /// Mean gap between obstacles; zero disables them.
    pub obstacle_spacing_m: f64,
    pub obstacle_length_m: f64,
    pub obstacle_width_m: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            kind: SceneKind::Corridor,
            length_m: 1000.0,
            street_width_m: 20.0,
            block_m: 80.0,
            cross_street_m: 20.0,
            block_depth_m: 30.0,
            rows: 3,
            cols: 3,
            gnb_spacing_m: 250.0,
            lateral_offset_m: 4.0,
            gnb_height_m: 6.0,
            wall_loss_db: 6.0,
            obstacle_spacing_m: 30.0,
            obstacle_length_m: 4.5,
            obstacle_width_m: 1.8,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length_m", self.length_m),
            ("street_width_m", self.street_width_m),
            ("block_m", self.block_m),
            ("cross_street_m", self.cross_street_m),
            ("block_depth_m", self.block_depth_m),
            ("gnb_spacing_m", self.gnb_spacing_m),
            ("obstacle_length_m", self.obstacle_length_m),
            ("obstacle_width_m", self.obstacle_width_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lateral_offset_m", self.lateral_offset_m),
            ("gnb_height_m", self.gnb_height_m),
            ("wall_loss_db", self.wall_loss_db),
            ("obstacle_spacing_m", self.obstacle_spacing_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.kind != SceneKind::Corridor && (self.rows == 0 || self.cols == 0) {
            return Err(Error::Config(format!("grid must be at least 1x1, got {}x{}", self.rows, self.cols)));
        }
        let half = self.street_width_m / 2.0;
        if self.lateral_offset_m >= half {
            return Err(Error::Config(format!(
                "lateral offset {} m puts gNBs outside a {} m street",
                self.lateral_offset_m, self.street_width_m
            )));
        }
        if self.obstacle_spacing_m > 0.0 && self.lateral_offset_m < self.obstacle_width_m + 0.4 {
            return Err(Error::Config(format!(
                "obstacles {} m wide do not fit between the route and gNBs {} m away",
                self.obstacle_width_m, self.lateral_offset_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    pub route: Vec<Point2>,
}

pub fn generate_scene(params: &SceneParams) -> Result<GeneratedScene> {
    params.validate()?;
    let (mut segments, route) = match params.kind {
        SceneKind::Corridor => corridor(params),
        SceneKind::Grid => grid(params),
        SceneKind::ManhattanBlock => manhattan_block(params),
    };
    if params.obstacle_spacing_m > 0.0 {
        segments.extend(obstacles(params, &route));
    }
    let walls = segments
        .into_iter()
        .map(|(a, b)| {
            Ok(Wall {
                segment: Segment::new(a, b)?,
                loss_db: params.wall_loss_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gnbs = gnb_sites(params, &route);
    Ok(GeneratedScene {
        scene: Scene::new(walls, gnbs)?,
        route,
    })
}

type Seg = (Point2, Point2);

fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> [Seg; 4] {
    [
        (p(x0, y0), p(x1, y0)),
        (p(x1, y0), p(x1, y1)),
        (p(x1, y1), p(x0, y1)),
        (p(x0, y1), p(x0, y0)),
    ]
}

/// Straight street along +x with a row of buildings on each side.
fn corridor(sp: &SceneParams) -> (Vec<Seg>, Vec<Point2>) {
    let half = sp.street_width_m / 2.0;
    let period = sp.block_m + sp.cross_street_m;
    let start = -sp.cross_street_m - sp.block_m / 2.0;
    let mut segs = Vec::new();
    let mut x0 = start;
    while x0 < sp.length_m + sp.block_m / 2.0 {
        let x1 = x0 + sp.block_m;
        for side in [1.0, -1.0] {
            let yf = side * half;
            let yb = side * (half + sp.block_depth_m);
            segs.push((p(x0, yf), p(x1, yf)));
            segs.push((p(x0, yf), p(x0, yb)));
            segs.push((p(x1, yf), p(x1, yb)));
        }
        x0 += period;
    }
    (segs, vec![p(0.0, 0.0), p(sp.length_m, 0.0)])
}

/// `rows × cols` square buildings; the route runs along the middle street.
fn grid(sp: &SceneParams) -> (Vec<Seg>, Vec<Point2>) {
    let period = sp.block_m + sp.street_width_m;
    let mut segs = Vec::new();
    for i in 0..sp.rows {
        for j in 0..sp.cols {
            let (x0, y0) = (j as f64 * period, i as f64 * period);
            segs.extend(rect(x0, y0, x0 + sp.block_m, y0 + sp.block_m));
        }
    }
    let y = (sp.rows / 2) as f64 * period - sp.street_width_m / 2.0;
    let x_end = sp.cols as f64 * period - sp.street_width_m;
    (segs, vec![p(0.0, y), p(x_end, y)])
}

/// Grid of buildings with the route looping counterclockwise around the
/// central one, so the street turns four times.
fn manhattan_block(sp: &SceneParams) -> (Vec<Seg>, Vec<Point2>) {
    let rows = sp.rows.max(3);
    let cols = sp.cols.max(3);
    let (segs, _) = grid(&SceneParams { rows, cols, ..*sp });
    let period = sp.block_m + sp.street_width_m;
    let (ci, cj) = ((rows / 2) as f64, (cols / 2) as f64);
    let h = sp.street_width_m / 2.0;
    let (x0, y0) = (cj * period - h, ci * period - h);
    let (x1, y1) = (cj * period + sp.block_m + h, ci * period + sp.block_m + h);
    (segs, vec![p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1), p(x0, y0)])
}

fn route_length(route: &[Point2]) -> f64 {
    route.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Point at arc length `s` and the unit direction of the segment there.
pub fn point_along(route: &[Point2], s: f64) -> (Point2, Point2) {
    let mut remaining = s.max(0.0);
    let last = route.len().saturating_sub(2);
    for (i, w) in route.windows(2).enumerate() {
        let len = w[0].distance(w[1]);
        if len == 0.0 {
            continue;
        }
        let dir = (w[1] - w[0]) * (1.0 / len);
        if remaining < len || i == last {
            return (w[0] + dir * remaining.min(len), dir);
        }
        remaining -= len;
    }
    (route[0], Point2::new(1.0, 0.0))
}

fn left_of(dir: Point2) -> Point2 {
    Point2::new(-dir.y, dir.x)
}

fn gnb_sites(sp: &SceneParams, route: &[Point2]) -> Vec<GnbSite> {
    let total = route_length(route);
    let closed = route.len() > 2 && route[0] == route[route.len() - 1];
    let n = if closed {
        (total / sp.gnb_spacing_m).ceil().max(1.0) as usize
    } else {
        (total / sp.gnb_spacing_m).ceil() as usize + 1
    };
    (0..n)
        .map(|k| {
            let s = (k as f64 * sp.gnb_spacing_m).min(total);
            let (pt, dir) = point_along(route, s);
            GnbSite {
                id: k as u32 + 1,
                position: pt + left_of(dir) * sp.lateral_offset_m,
                height: sp.gnb_height_m,
            }
        })
        .collect()
}

/// Boxes in the band between the route and the gNB line, one row per
/// route segment, kept clear of segment ends so turns stay open.
fn obstacles(sp: &SceneParams, route: &[Point2]) -> Vec<Seg> {
    let mut rng = substream(sp.seed, &[0x0b57]);
    let inner = (sp.lateral_offset_m - sp.obstacle_width_m) / 2.0;
    let outer = inner + sp.obstacle_width_m;
    let clearance = sp.street_width_m;
    let mut segs = Vec::new();
    for w in route.windows(2) {
        let len = w[0].distance(w[1]);
        if len == 0.0 {
            continue;
        }
        let dir = (w[1] - w[0]) * (1.0 / len);
        let n = left_of(dir);
        let mut s = clearance + rng.random_range(0.0..sp.obstacle_spacing_m);
        while s + sp.obstacle_length_m < len - clearance {
            let a = w[0] + dir * s;
            let b = a + dir * sp.obstacle_length_m;
            let corners = [a + n * inner, b + n * inner, b + n * outer, a + n * outer];
            for i in 0..4 {
                segs.push((corners[i], corners[(i + 1) % 4]));
            }
            s += sp.obstacle_length_m + sp.obstacle_spacing_m * rng.random_range(0.5..1.5);
        }
    }
    segs
}

/// `n_epochs` UE positions evenly spaced in arc length, driven at `speed`.
pub fn sample_route(route: &[Point2], n_epochs: usize, speed_mps: f64, ue_height: f64) -> Result<Vec<TrajectoryPoint>> {
    if route.len() < 2 {
        return Err(Error::Config("route needs at least two points".into()));
    }
    if n_epochs == 0 {
        return Err(Error::Config("n_epochs must be >= 1".into()));
    }
    if !(speed_mps > 0.0 && speed_mps.is_finite()) {
        return Err(Error::Config(format!("speed must be positive, got {speed_mps}")));
    }
    let total = route_length(route);
    let step = if n_epochs > 1 { total / (n_epochs - 1) as f64 } else { 0.0 };
    Ok((0..n_epochs)
        .map(|k| {
            let s = k as f64 * step;
            TrajectoryPoint {
                t: s / speed_mps,
                position: point_along(route, s).0,
                z: ue_height,
            }
        })
        .collect())
}

/// Epoch count whose expected number of dataset rows reaches `target_rows`,
/// estimated from `pilot` evenly spaced route points.
pub fn epochs_for_target(
    scene: &Scene,
    route: &[Point2],
    max_order: usize,
    target_rows: usize,
    pilot: usize,
) -> Result<usize> {
    let probe = sample_route(route, pilot.max(2), 1.0, 0.0)?;
    let counts = probe
        .par_iter()
        .map(|tp| {
            associate(scene.gnbs(), tp.position)
                .iter()
                .map(|g| trace_paths(scene, g.position, tp.position, max_order).map(|p| p.len()))
                .sum::<Result<usize>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let per_epoch = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    if per_epoch == 0.0 {
        return Err(Error::Config("the route sees no propagation paths".into()));
    }
    Ok(((target_rows as f64 / per_epoch).ceil() as usize).max(1))
}
