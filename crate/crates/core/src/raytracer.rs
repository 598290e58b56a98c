//! Image-method enumeration of line-of-sight and specular multipath between a
//! gNB and a UE over a 2D wall scene.
//!
//! Sequences of walls are explored depth-first. Each level carries the image
//! of the source and the part of the current wall that the previous beam can
//! illuminate; a wall that falls entirely outside the reflected beam cannot
//! host the next bounce and its subtree is skipped. Surviving sequences are
//! back-traced from the UE and checked for interior hits and occlusion.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bearing_from_to, segment_intersection, Bearing, Point2, Segment};

/// Combinatorial guard on the reflection order.
pub const MAX_SUPPORTED_ORDER: usize = 8;

/// Default maximum reflection order traced.
pub const DEFAULT_MAX_ORDER: usize = 3;

/// Reflection points closer than this to a wall endpoint are rejected.
pub const ENDPOINT_TOLERANCE_M: f64 = 1e-9;

/// Angular tolerance of the specular-law check in [`validate_path`].
pub const SPECULAR_TOLERANCE_RAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub segment: Segment,
    /// Extra attenuation per bounce off this wall.
    pub loss_db: f64,
}

/// A base station: 2D position plus antenna height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnbSite {
    pub id: u32,
    pub position: Point2,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

#[derive(Debug, Clone, Default)]
pub struct Scene {
    walls: Vec<Wall>,
    gnbs: Vec<GnbSite>,
    grid: Option<WallGrid>,
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.walls == other.walls && self.gnbs == other.gnbs
    }
}

/// Uniform bucket grid over wall bounding boxes, used to limit occlusion
/// tests to walls near a leg.
#[derive(Debug, Clone)]
struct WallGrid {
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

/// Below this many walls a linear scan is as fast as the grid.
const GRID_MIN_WALLS: usize = 24;
const GRID_MAX_CELLS: f64 = 1_048_576.0;
/// Bounding boxes are padded so that rounding at cell borders never hides a wall.
const GRID_PAD_M: f64 = 1e-6;

impl WallGrid {
    fn build(walls: &[Wall]) -> Option<Self> {
        if walls.len() < GRID_MIN_WALLS {
            return None;
        }
        let (mut lo, mut hi) = (walls[0].segment.a, walls[0].segment.a);
        for w in walls {
            for q in [w.segment.a, w.segment.b] {
                lo = Point2::new(lo.x.min(q.x), lo.y.min(q.y));
                hi = Point2::new(hi.x.max(q.x), hi.y.max(q.y));
            }
        }
        let origin = lo - Point2::new(1.0, 1.0);
        let (w, h) = (hi.x - lo.x + 2.0, hi.y - lo.y + 2.0);
        let mut cell = 0.5 * (w * h / walls.len() as f64).sqrt();
        if (w / cell).ceil() * (h / cell).ceil() > GRID_MAX_CELLS {
            cell = (w * h / GRID_MAX_CELLS).sqrt() * 1.01;
        }
        let nx = (w / cell).ceil().max(1.0) as usize;
        let ny = (h / cell).ceil().max(1.0) as usize;
        let mut cells = vec![Vec::new(); nx * ny];
        let index = |v: f64, o: f64, n: usize| (((v - o) / cell).floor().max(0.0) as usize).min(n - 1);
        for (id, wall) in walls.iter().enumerate() {
            let (a, b) = (wall.segment.a, wall.segment.b);
            let x0 = index(a.x.min(b.x) - GRID_PAD_M, origin.x, nx);
            let x1 = index(a.x.max(b.x) + GRID_PAD_M, origin.x, nx);
            let y0 = index(a.y.min(b.y) - GRID_PAD_M, origin.y, ny);
            let y1 = index(a.y.max(b.y) + GRID_PAD_M, origin.y, ny);
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    cells[iy * nx + ix].push(id as u32);
                }
            }
        }
        Some(Self { origin, cell, nx, ny, cells })
    }

    /// Calls `visit` for the walls of every cell the segment `a → b` passes
    /// through, stopping early when `visit` returns false.
    fn walk(&self, a: Point2, b: Point2, mut visit: impl FnMut(usize) -> bool) -> bool {
        let d = b - a;
        let max = self.origin + Point2::new(self.nx as f64 * self.cell, self.ny as f64 * self.cell);
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for (p, dp, lo, hi) in [(a.x, d.x, self.origin.x, max.x), (a.y, d.y, self.origin.y, max.y)] {
            if dp == 0.0 {
                if p < lo || p > hi {
                    return true;
                }
            } else {
                let (ta, tb) = ((lo - p) / dp, (hi - p) / dp);
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        if t0 > t1 {
            return true;
        }
        let start = a + d * t0;
        let clamp = |v: f64, o: f64, n: usize| (((v - o) / self.cell).floor().max(0.0) as usize).min(n - 1);
        let (mut ix, mut iy) = (clamp(start.x, self.origin.x, self.nx), clamp(start.y, self.origin.y, self.ny));
        let axis = |p: f64, dp: f64, o: f64, i: usize| -> (f64, f64) {
            if dp > 0.0 {
                ((o + (i + 1) as f64 * self.cell - p) / dp, self.cell / dp)
            } else if dp < 0.0 {
                ((o + i as f64 * self.cell - p) / dp, -self.cell / dp)
            } else {
                (f64::INFINITY, f64::INFINITY)
            }
        };
        let (mut tx, dtx) = axis(a.x, d.x, self.origin.x, ix);
        let (mut ty, dty) = axis(a.y, d.y, self.origin.y, iy);
        loop {
            if !self.cells[iy * self.nx + ix].iter().all(|&w| visit(w as usize)) {
                return false;
            }
            if tx.min(ty) > t1 {
                return true;
            }
            if tx < ty {
                match step(ix, d.x, self.nx) {
                    Some(i) => ix = i,
                    None => return true,
                }
                tx += dtx;
            } else {
                match step(iy, d.y, self.ny) {
                    Some(i) => iy = i,
                    None => return true,
                }
                ty += dty;
            }
        }
    }
}

fn wall_clear(leg: &Segment, w: &Wall, a: Point2, b: Point2) -> bool {
    match segment_intersection(leg, &w.segment) {
        Ok(None) => true,
        Ok(Some(x)) => x.distance(a) <= ENDPOINT_TOLERANCE_M || x.distance(b) <= ENDPOINT_TOLERANCE_M,
        Err(_) => false,
    }
}

fn step(i: usize, dir: f64, n: usize) -> Option<usize> {
    if dir > 0.0 {
        (i + 1 < n).then_some(i + 1)
    } else {
        i.checked_sub(1)
    }
}

impl Scene {
    pub fn new(walls: Vec<Wall>, gnbs: Vec<GnbSite>) -> Result<Self> {
        for (i, w) in walls.iter().enumerate() {
            if !(w.loss_db.is_finite() && w.loss_db >= 0.0) {
                return Err(Error::Config(format!(
                    "wall {i}: reflection loss must be finite and >= 0 dB, got {}",
                    w.loss_db
                )));
            }
            Segment::new(w.segment.a, w.segment.b)
                .map_err(|e| Error::Config(format!("wall {i}: {e}")))?;
        }
        let mut ids: Vec<u32> = gnbs.iter().map(|g| g.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate gNB id {}", w[0])));
        }
        if let Some(g) = gnbs
            .iter()
            .find(|g| !g.position.is_finite() || !g.height.is_finite())
        {
            return Err(Error::Config(format!("gNB {} has non-finite coordinates", g.id)));
        }
        let grid = WallGrid::build(&walls);
        Ok(Self { walls, gnbs, grid })
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn gnbs(&self) -> &[GnbSite] {
        &self.gnbs
    }

    pub fn gnb(&self, id: u32) -> Option<&GnbSite> {
        self.gnbs.iter().find(|g| g.id == id)
    }

    /// Axis-aligned extent of all walls and gNBs, `None` for an empty scene.
    pub fn bounds(&self) -> Option<Bounds> {
        let pts = self
            .walls
            .iter()
            .flat_map(|w| [w.segment.a, w.segment.b])
            .chain(self.gnbs.iter().map(|g| g.position));
        pts.fold(None, |acc: Option<Bounds>, p| {
            Some(match acc {
                None => Bounds { min: p, max: p },
                Some(b) => Bounds {
                    min: Point2::new(b.min.x.min(p.x), b.min.y.min(p.y)),
                    max: Point2::new(b.max.x.max(p.x), b.max.y.max(p.y)),
                },
            })
        })
    }

    /// True when the open segment `a → b` crosses no wall. Contacts within
    /// [`ENDPOINT_TOLERANCE_M`] of either end are ignored so that legs may
    /// start or end on the wall they reflect from.
    pub fn is_clear(&self, a: Point2, b: Point2) -> bool {
        let Ok(leg) = Segment::new(a, b) else {
            return true;
        };
        let d = b - a;
        let l1 = |v: Point2| v.x.abs() + v.y.abs();
        let clear_of = |w: &Wall| {
            // Both wall ends strictly on one side of the leg: no contact.
            let (pa, pb) = (w.segment.a - a, w.segment.b - a);
            let (oa, ob) = (d.cross(pa), d.cross(pb));
            let margin = 1e-12 * l1(d) * (l1(pa) + l1(pb));
            if (oa > margin && ob > margin) || (oa < -margin && ob < -margin) {
                return true;
            }
            wall_clear(&leg, w, a, b)
        };

        match &self.grid {
            Some(grid) => grid.walk(a, b, |i| clear_of(&self.walls[i])),
            None => self.walls.iter().all(clear_of),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<scene>".into(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let walls = file
            .walls
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let segment = Segment::new(Point2::new(w.x1, w.y1), Point2::new(w.x2, w.y2))
                    .map_err(|e| Error::Config(format!("wall {i}: {e}")))?;
                Ok(Wall {
                    segment,
                    loss_db: w.loss_db,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let gnbs = file
            .gnbs
            .iter()
            .map(|g| GnbSite {
                id: g.id,
                position: Point2::new(g.x, g.y),
                height: g.z,
            })
            .collect();
        Scene::new(walls, gnbs)
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            walls: self
                .walls
                .iter()
                .map(|w| WallRecord {
                    x1: w.segment.a.x,
                    y1: w.segment.a.y,
                    x2: w.segment.b.x,
                    y2: w.segment.b.y,
                    loss_db: w.loss_db,
                })
                .collect(),
            gnbs: self
                .gnbs
                .iter()
                .map(|g| GnbRecord {
                    id: g.id,
                    x: g.position.x,
                    y: g.position.y,
                    z: g.height,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("scene serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WallRecord {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    loss_db: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GnbRecord {
    id: u32,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneFile {
    #[serde(default)]
    walls: Vec<WallRecord>,
    #[serde(default)]
    gnbs: Vec<GnbRecord>,
}

/// One propagation path from gNB to UE.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    /// Reflection order; 0 is line of sight.
    pub order: usize,
    /// `[gNB, reflection points…, UE]`.
    pub vertices: Vec<Point2>,
    /// Horizontal path length in meters.
    pub length: f64,
    /// Departure bearing at the gNB.
    pub aod: Bearing,
    /// Bearing from the UE toward the last scatterer (or the gNB for LoS).
    pub aoa: Bearing,
    /// Wall index of each reflection, in travel order.
    pub wall_ids: Vec<usize>,
}

impl PropagationPath {
    pub fn from_vertices(vertices: Vec<Point2>, wall_ids: Vec<usize>) -> Result<Self> {
        if vertices.len() < 2 || wall_ids.len() + 2 != vertices.len() {
            return Err(Error::DegenerateGeometry(format!(
                "path with {} vertices and {} walls",
                vertices.len(),
                wall_ids.len()
            )));
        }
        let n = vertices.len();
        let aod = bearing_from_to(vertices[0], vertices[1])?;
        let aoa = bearing_from_to(vertices[n - 1], vertices[n - 2])?;
        let length = vertices.windows(2).map(|w| w[0].distance(w[1])).sum();
        Ok(Self {
            order: n - 2,
            vertices,
            length,
            aod,
            aoa,
            wall_ids,
        })
    }

    pub fn gnb(&self) -> Point2 {
        self.vertices[0]
    }

    pub fn ue(&self) -> Point2 {
        *self.vertices.last().expect("path has vertices")
    }

    /// Distance from the gNB to the first scatterer (equals `length` for LoS).
    pub fn first_leg(&self) -> f64 {
        self.vertices[0].distance(self.vertices[1])
    }

    /// Same path traversed UE → gNB.
    pub fn reversed(&self) -> PropagationPath {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        let mut wall_ids = self.wall_ids.clone();
        wall_ids.reverse();
        PropagationPath {
            order: self.order,
            vertices,
            length: self.length,
            aod: self.aoa,
            aoa: self.aod,
            wall_ids,
        }
    }

    /// Vertex-wise comparison within `tol` meters.
    pub fn same_route(&self, other: &PropagationPath, tol: f64) -> bool {
        self.vertices.len() == other.vertices.len()
            && self
                .vertices
                .iter()
                .zip(&other.vertices)
                .all(|(a, b)| a.distance(*b) <= tol)
    }
}

/// Portion of a wall reachable by a beam, as a sub-segment.
#[derive(Clone, Copy)]
struct Aperture {
    a: Point2,
    b: Point2,
}

/// Wall carrier data precomputed once per trace.
#[derive(Clone, Copy)]
struct WallGeom {
    a: Point2,
    b: Point2,
    dir: Point2,
    normal: Point2,
    len: f64,
}

impl WallGeom {
    fn new(seg: &Segment) -> Self {
        let len = seg.length();
        let dir = (seg.b - seg.a) * (1.0 / len);
        Self {
            a: seg.a,
            b: seg.b,
            dir,
            normal: Point2::new(-dir.y, dir.x),
            len,
        }
    }

    fn side(&self, p: Point2) -> f64 {
        (p - self.a).dot(self.normal)
    }

    fn mirror(&self, p: Point2) -> Point2 {
        p - self.normal * (2.0 * self.side(p))
    }

    fn point_at(&self, t: f64) -> Point2 {
        self.a + (self.b - self.a) * t
    }
}

/// Parts of each wall visible from one point, as sorted disjoint
/// parameter intervals in `[0, 1]`.
///
/// Shadows are shrunk by a small margin, so a point reported hidden is
/// certainly occluded. A point reported visible still goes through
/// [`Scene::is_clear`].
struct Visibility {
    intervals: Vec<Vec<(f64, f64)>>,
}

/// Relative shrink applied to shadow intervals.
const SHADOW_MARGIN: f64 = 1e-7;
/// Occluders passing this close to the viewpoint are ignored.
const VIEWPOINT_CLEARANCE_M: f64 = 1e-6;

impl Visibility {
    fn from_point(p: Point2, geom: &[WallGeom]) -> Self {
        let intervals = geom
            .iter()
            .enumerate()
            .map(|(wi, g)| {
                let sp = g.side(p);
                if sp.abs() <= ENDPOINT_TOLERANCE_M {
                    return vec![(0.0, 1.0)];
                }
                let mut shadows: Vec<(f64, f64)> = geom
                    .iter()
                    .enumerate()
                    .filter(|&(oi, _)| oi != wi)
                    .filter_map(|(_, o)| shadow(p, sp, g, o))
                    .collect();
                shadows.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut visible = Vec::new();
                let mut cursor = 0.0_f64;
                for (lo, hi) in shadows {
                    if lo > cursor {
                        visible.push((cursor, lo));
                    }
                    cursor = cursor.max(hi);
                    if cursor >= 1.0 {
                        break;
                    }
                }
                if cursor < 1.0 {
                    visible.push((cursor, 1.0));
                }
                visible
            })
            .collect();
        Self { intervals }
    }

    fn visible(&self, wall: usize, s: f64) -> bool {
        self.intervals[wall].iter().any(|&(lo, hi)| s >= lo && s <= hi)
    }

    fn hull(&self, wall: usize) -> Option<(f64, f64)> {
        let iv = &self.intervals[wall];
        Some((iv.first()?.0, iv.last()?.1))
    }
}

/// Parameter interval of `g` hidden from `p` by occluder `o`, shrunk by
/// [`SHADOW_MARGIN`]. `sp` is the signed distance of `p` from `g`.
fn shadow(p: Point2, sp: f64, g: &WallGeom, o: &WallGeom) -> Option<(f64, f64)> {
    // sigma = 1 at the viewpoint's parallel, 0 on the wall's carrier.
    let (sc, sd) = (g.side(o.a) / sp, g.side(o.b) / sp);
    let (lo_s, hi_s) = (1e-9, 1.0 - 1e-9);
    let (mut u0, mut u1) = (0.0_f64, 1.0_f64);
    let ds = sd - sc;
    for (bound, keep_above) in [(lo_s, true), (hi_s, false)] {
        if ds == 0.0 {
            let inside = if keep_above { sc >= bound } else { sc <= bound };
            if !inside {
                return None;
            }
            continue;
        }
        let u = (bound - sc) / ds;
        if (ds > 0.0) == keep_above {
            u0 = u0.max(u);
        } else {
            u1 = u1.min(u);
        }
    }
    if u0 > u1 {
        return None;
    }
    let x0 = o.point_at(u0);
    let x1 = o.point_at(u1);
    // Distance from p to the clipped occluder, checked conservatively.
    let piece = x1 - x0;
    let t = if piece.dot(piece) > 0.0 {
        ((p - x0).dot(piece) / piece.dot(piece)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    if p.distance(x0 + piece * t) <= VIEWPOINT_CLEARANCE_M {
        return None;
    }
    let project = |x: Point2| {
        let sigma = g.side(x) / sp;
        let hit = p + (x - p) * (1.0 / (1.0 - sigma));
        (hit - g.a).dot(g.dir) / g.len
    };
    let (s0, s1) = (project(x0), project(x1));
    let (lo, hi) = (s0.min(s1), s0.max(s1));
    let margin = SHADOW_MARGIN * (1.0 + (hi - lo).abs());
    let (lo, hi) = (lo + margin, hi - margin);
    if !(lo < hi) || hi <= 0.0 || lo >= 1.0 {
        return None;
    }
    Some((lo.max(0.0), hi.min(1.0)))
}

/// Clips `seg` to the wedge with apex `apex` passing through `aperture`,
/// keeping only the part beyond the aperture line.
fn clip_to_beam(apex: Point2, aperture: Aperture, seg: &WallGeom) -> Option<Aperture> {
    let (mut e1, mut e2) = (aperture.a, aperture.b);
    if (e1 - apex).cross(e2 - apex) < 0.0 {
        std::mem::swap(&mut e1, &mut e2);
    }
    let side_apex = (e2 - e1).cross(apex - e1);
    // Each constraint reads sign * dir.cross(P - origin) >= 0.
    let constraints = [
        (apex, e1 - apex, 1.0),
        (apex, e2 - apex, -1.0),
        (e1, e2 - e1, -side_apex.signum()),
    ];
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for (origin, dir, sign) in constraints {
        let g0 = sign * dir.cross(seg.a - origin);
        let g1 = sign * dir.cross(seg.b - origin);
        if g0 < 0.0 && g1 < 0.0 {
            return None;
        }
        if g0 < 0.0 {
            lo = lo.max(g0 / (g0 - g1));
        } else if g1 < 0.0 {
            hi = hi.min(g0 / (g0 - g1));
        }
    }
    if (hi - lo) * seg.len <= ENDPOINT_TOLERANCE_M {
        return None;
    }
    Some(Aperture {
        a: seg.point_at(lo),
        b: seg.point_at(hi),
    })
}

struct Tracer<'a> {
    scene: &'a Scene,
    geom: Vec<WallGeom>,
    from_gnb: Visibility,
    from_ue: Visibility,
    /// Walls with some part visible from the gNB / the UE.
    gnb_walls: Vec<usize>,
    ue_walls: Vec<usize>,
    gnb: Point2,
    ue: Point2,
    max_order: usize,
    seq: Vec<usize>,
    images: Vec<Point2>,
    out: Vec<PropagationPath>,
}

impl Tracer<'_> {
    fn descend(&mut self, image: Point2, aperture: Option<Aperture>) {
        let depth = self.seq.len();
        if depth == self.max_order {
            return;
        }
        let last_level = depth + 1 == self.max_order;
        let candidates = if last_level {
            std::mem::take(&mut self.ue_walls)
        } else if depth == 0 {
            std::mem::take(&mut self.gnb_walls)
        } else {
            Vec::new()
        };
        let all = candidates.is_empty() && !last_level && depth != 0;
        let n = if all { self.geom.len() } else { candidates.len() };
        for k in 0..n {
            let wi = if all { k } else { candidates[k] };
            if self.seq.last() == Some(&wi) {
                continue;
            }
            let g = self.geom[wi];
            // An image on the wall's carrier produces no reflection.
            let di = g.side(image);
            if di.abs() <= ENDPOINT_TOLERANCE_M {
                continue;
            }
            if last_level {
                // The final bounce needs the UE on the image's side; the
                // back-trace does the rest, so the beam clip is skipped.
                let du = g.side(self.ue);
                if du.abs() <= ENDPOINT_TOLERANCE_M || du.signum() != di.signum() || self.from_ue.hull(wi).is_none() {
                    continue;
                }
                self.seq.push(wi);
                self.images.push(g.mirror(image));
                self.try_complete();
                self.images.pop();
                self.seq.pop();
                continue;
            }
            let lit = match aperture {
                None => self.from_gnb.hull(wi).and_then(|(lo, hi)| {
                    ((hi - lo) * g.len > ENDPOINT_TOLERANCE_M).then(|| Aperture {
                        a: g.point_at(lo),
                        b: g.point_at(hi),
                    })
                }),
                Some(ap) => clip_to_beam(image, ap, &g),
            };
            let Some(lit) = lit else { continue };
            let next_image = g.mirror(image);
            self.seq.push(wi);
            self.images.push(next_image);
            self.try_complete();
            self.descend(next_image, Some(lit));
            self.images.pop();
            self.seq.pop();
        }
        if last_level {
            self.ue_walls = candidates;
        } else if depth == 0 {
            self.gnb_walls = candidates;
        }
    }

    /// Back-traces the current wall sequence from the UE.
    fn try_complete(&mut self) {
        let k = self.seq.len();
        let mut points = [Point2::default(); MAX_SUPPORTED_ORDER];
        let mut target = self.ue;
        for j in (0..k).rev() {
            let wi = self.seq[j];
            let Some((hit, s)) = reflection_point(self.images[j], target, &self.geom[wi]) else {
                return;
            };
            if j + 1 == k && !self.from_ue.visible(wi, s) {
                return;
            }
            if j == 0 && !self.from_gnb.visible(wi, s) {
                return;
            }
            points[j] = hit;
            target = hit;
        }
        let mut vertices = Vec::with_capacity(k + 2);
        vertices.push(self.gnb);
        vertices.extend_from_slice(&points[..k]);
        vertices.push(self.ue);
        if !vertices.windows(2).all(|w| self.scene.is_clear(w[0], w[1])) {
            return;
        }
        if let Ok(path) = PropagationPath::from_vertices(vertices, self.seq.clone()) {
            if !self.out.iter().any(|p| p.same_route(&path, ENDPOINT_TOLERANCE_M)) {
                self.out.push(path);
            }
        }
    }
}

/// Where the straight line `image → target` crosses `wall`, provided the two
/// points are on opposite sides and the crossing is strictly interior.
/// Also returns the hit's parameter along the wall.
fn reflection_point(image: Point2, target: Point2, wall: &WallGeom) -> Option<(Point2, f64)> {
    let di = wall.side(image);
    let dt = wall.side(target);
    if di.abs() <= ENDPOINT_TOLERANCE_M || dt.abs() <= ENDPOINT_TOLERANCE_M || di.signum() == dt.signum() {
        return None;
    }
    let hit = image + (target - image) * (di / (di - dt));
    let s = (hit - wall.a).dot(wall.dir) / wall.len;
    let margin = ENDPOINT_TOLERANCE_M / wall.len;
    (s > margin && s < 1.0 - margin).then_some((hit, s))
}

/// Every LoS and specular path from `gnb` to `ue` with order up to `max_order`.
///
/// Paths are returned LoS first, then in depth-first wall-sequence order.
pub fn trace_paths(scene: &Scene, gnb: Point2, ue: Point2, max_order: usize) -> Result<Vec<PropagationPath>> {
    if max_order > MAX_SUPPORTED_ORDER {
        return Err(Error::Config(format!(
            "max_order {max_order} exceeds the supported maximum of {MAX_SUPPORTED_ORDER}"
        )));
    }
    if gnb == ue {
        return Err(Error::DegenerateGeometry(format!("gNB and UE coincide at {gnb}")));
    }
    let geom: Vec<WallGeom> = scene.walls.iter().map(|w| WallGeom::new(&w.segment)).collect();
    let from_gnb = Visibility::from_point(gnb, &geom);
    let from_ue = Visibility::from_point(ue, &geom);
    let geom_len = geom.len();
    let mut tracer = Tracer {
        scene,
        gnb_walls: (0..geom_len).filter(|&w| from_gnb.hull(w).is_some()).collect(),
        ue_walls: (0..geom_len).filter(|&w| from_ue.hull(w).is_some()).collect(),
        geom,
        from_gnb,
        from_ue,
        gnb,
        ue,
        max_order,
        seq: Vec::new(),
        images: Vec::new(),
        out: Vec::new(),
    };
    if scene.is_clear(gnb, ue) {
        tracer.out.push(PropagationPath::from_vertices(vec![gnb, ue], Vec::new())?);
    }
    tracer.descend(gnb, None);
    Ok(tracer.out)
}

/// Checks the specular law at every bounce and that every leg is unoccluded.
pub fn validate_path(scene: &Scene, path: &PropagationPath) -> bool {
    let v = &path.vertices;
    if v.len() < 2 || path.wall_ids.len() + 2 != v.len() || path.order + 2 != v.len() {
        return false;
    }
    if v.windows(2).any(|w| w[0].distance(w[1]) <= ENDPOINT_TOLERANCE_M) {
        return false;
    }
    for (j, &wi) in path.wall_ids.iter().enumerate() {
        let Some(wall) = scene.walls.get(wi) else {
            return false;
        };
        let seg = wall.segment;
        let (prev, here, next) = (v[j], v[j + 1], v[j + 2]);
        let Ok(mut n) = seg.normal() else { return false };
        let len = seg.length();
        let s = (here - seg.a).dot(seg.direction()) / (len * len);
        let margin = ENDPOINT_TOLERANCE_M / len;
        if (here - seg.a).dot(n).abs() > ENDPOINT_TOLERANCE_M.max(1e-12 * here.norm())
            || s <= margin
            || s >= 1.0 - margin
        {
            return false;
        }
        let din = prev - here;
        let dout = next - here;
        if din.dot(n) < 0.0 {
            n = -n;
        }
        if din.dot(n) <= 0.0 || dout.dot(n) <= 0.0 {
            return false;
        }
        let t = n.perp();
        let theta_in = din.dot(t).atan2(din.dot(n));
        let theta_out = dout.dot(t).atan2(dout.dot(n));
        if (theta_in + theta_out).abs() > SPECULAR_TOLERANCE_RAD {
            return false;
        }
    }
    v.windows(2).all(|w| scene.is_clear(w[0], w[1]))
}
