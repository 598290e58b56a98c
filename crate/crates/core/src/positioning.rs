//! LoS hybrid positioning and single-bounce-reflection (SBR) positioning.
//!
//! Angle roles for an SBR path: `beta` is the departure bearing from the gNB
//! toward the scatterer (the AoD) and `alpha` is the bearing from the UE
//! toward the scatterer (the AoA). With `r` the gNB-scatterer distance and
//! `d` the total path length, the scatterer sits at `p_b + r·u(β)` and the UE
//! at `p_s − (d − r)·u(α)`. Sweeping `r` traces a straight line, and two such
//! lines from different scatterers meet at the UE.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::channel::{associate, parse_field, require_column, Measurement, TrajectoryPoint};
use crate::classifier::Ensemble;
use crate::error::{Error, Result};
use crate::geometry::{intersect_lines, Bearing, Line, Point2};
use crate::raytracer::{GnbSite, Scene};

/// Default minimum crossing angle between the two SBR lines of a pair.
pub const DEFAULT_MIN_CROSSING_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Range, azimuth and elevation of the UE as seen from the gNB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalObs {
    pub d_prime: f64,
    pub alpha: Bearing,
    pub phi_deg: f64,
}

impl SphericalObs {
    pub fn new(d_prime: f64, alpha: Bearing, phi_deg: f64) -> Result<Self> {
        if !(d_prime > 0.0 && d_prime.is_finite()) {
            return Err(Error::Domain(format!("3D range must be positive, got {d_prime}")));
        }
        if !(phi_deg > -90.0 && phi_deg < 90.0) {
            return Err(Error::Domain(format!("elevation must lie in (-90, 90), got {phi_deg}")));
        }
        Ok(Self { d_prime, alpha, phi_deg })
    }
}

pub fn spherical_to_cartesian_3d(gnb: &GnbSite, obs: &SphericalObs) -> Point3 {
    let (sa, ca) = obs.alpha.radians().sin_cos();
    let (sp, cp) = obs.phi_deg.to_radians().sin_cos();
    Point3 {
        x: gnb.position.x + obs.d_prime * sa * cp,
        y: gnb.position.y + obs.d_prime * ca * cp,
        z: gnb.height + obs.d_prime * sp,
    }
}

/// Horizontal range from a 3D range and the antenna height difference.
pub fn horizontal_range(r3: f64, delta_z: f64) -> Result<f64> {
    if !(r3.is_finite() && r3 > delta_z.abs()) {
        return Err(Error::Domain(format!(
            "3D range {r3} m does not exceed the height difference {} m",
            delta_z.abs()
        )));
    }
    Ok(((r3 - delta_z) * (r3 + delta_z)).sqrt())
}

/// 2D UE position from a LoS range/azimuth pair and a known UE height.
pub fn los_position_2d(gnb: &GnbSite, r3: f64, alpha: Bearing, ue_height: f64) -> Result<Point2> {
    let d = horizontal_range(r3, gnb.height - ue_height)?;
    Ok(gnb.position + alpha.unit() * d)
}

pub fn scatterer_point(gnb: Point2, beta: Bearing, r: f64) -> Point2 {
    gnb + beta.unit() * r
}

/// UE position for a hypothesized gNB-scatterer distance `r`.
pub fn ue_on_sbr_line(gnb: Point2, alpha: Bearing, beta: Bearing, d: f64, r: f64) -> Point2 {
    scatterer_point(gnb, beta, r) - alpha.unit() * (d - r)
}

/// Locus of UE positions consistent with one SBR path, in general form.
pub fn sbr_line(gnb: Point2, alpha: Bearing, beta: Bearing, d: f64) -> Result<Line> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("path length must be positive, got {d}")));
    }
    let near = ue_on_sbr_line(gnb, alpha, beta, d, 0.0);
    let far = ue_on_sbr_line(gnb, alpha, beta, d, d);
    if near.distance(far) <= 1e-9 * d {
        return Err(Error::DegenerateGeometry(format!(
            "SBR line endpoints coincide (alpha {alpha}, beta {beta})"
        )));
    }
    Line::through(near, far)
}

/// Slope and intercept of the SBR line, `None` when `sin α + sin β = 0`.
pub fn sbr_slope_intercept(gnb: Point2, alpha: Bearing, beta: Bearing, d: f64) -> Option<(f64, f64)> {
    let (sa, ca) = alpha.radians().sin_cos();
    let (sb, cb) = beta.radians().sin_cos();
    let denom = sa + sb;
    if denom == 0.0 {
        return None;
    }
    let k = (ca + cb) / denom;
    let b = -k * (gnb.x - d * sa) + gnb.y - d * ca;
    Some((k, b))
}

/// Known antenna geometry of one epoch/gNB link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochContext {
    pub t: f64,
    pub gnb: GnbSite,
    pub ue_height: f64,
}

impl EpochContext {
    pub fn delta_z(&self) -> f64 {
        self.gnb.height - self.ue_height
    }
}

/// SBR line of one measurement; `d` is the ToA range reduced to the plane.
pub fn measurement_line(ctx: &EpochContext, m: &Measurement) -> Result<Line> {
    let d = horizontal_range(m.range(), ctx.delta_z())?;
    sbr_line(ctx.gnb.position, m.aoa, m.aod, d)
}

pub fn sbr_position(ctx: &EpochContext, m1: &Measurement, m2: &Measurement) -> Result<Point2> {
    for m in [m1, m2] {
        if m.gnb_id != ctx.gnb.id || m.t.to_bits() != ctx.t.to_bits() {
            return Err(Error::Data(format!(
                "measurement (t={}, gnb={}) does not belong to epoch t={} gnb={}",
                m.t, m.gnb_id, ctx.t, ctx.gnb.id
            )));
        }
    }
    let l1 = measurement_line(ctx, m1)?;
    let l2 = measurement_line(ctx, m2)?;
    intersect_lines(&l1, &l2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FixMethod {
    Los,
    Sbr,
    FallbackStrongestTwo,
}

impl FixMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FixMethod::Los => "los",
            FixMethod::Sbr => "sbr",
            FixMethod::FallbackStrongestTwo => "fallback",
        }
    }
}

impl fmt::Display for FixMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionFix {
    pub t: f64,
    pub gnb_id: u32,
    pub p: Point2,
    pub method: FixMethod,
    /// `path_index` of every measurement used.
    pub contributing: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpochOutcome {
    Fix(PositionFix),
    Outage { t: f64, gnb_id: u32, reason: String },
}

impl EpochOutcome {
    pub fn fix(&self) -> Option<&PositionFix> {
        match self {
            EpochOutcome::Fix(f) => Some(f),
            EpochOutcome::Outage { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Two predicted SBRs, else the strongest two paths.
    SbrOnly,
    /// A predicted LoS path if any, else as `SbrOnly`.
    LosPreferred,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SbrOnly => "sbr",
            Mode::LosPreferred => "los",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sbr" | "sbr-only" => Ok(Mode::SbrOnly),
            "los" | "los-preferred" => Ok(Mode::LosPreferred),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected sbr or los)"))),
        }
    }
}

/// Assigns a reflection order to each measurement.
pub trait OrderClassifier {
    fn classify(&self, m: &Measurement) -> usize;
}

impl OrderClassifier for Ensemble {
    fn classify(&self, m: &Measurement) -> usize {
        self.predict_class(&m.features())
    }
}

/// Uses the ground-truth label; unlabeled measurements count as high order.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleLabels;

impl OrderClassifier for OracleLabels {
    fn classify(&self, m: &Measurement) -> usize {
        m.label.map_or(usize::MAX, usize::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Pairs whose SBR lines cross at a shallower angle are skipped; zero
    /// always takes the two strongest eligible paths.
    pub min_crossing_deg: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::SbrOnly,
            min_crossing_deg: DEFAULT_MIN_CROSSING_DEG,
        }
    }
}

/// Strongest first; equal RSS falls back to the lower path index.
fn by_strength<'a>(ms: impl IntoIterator<Item = &'a Measurement>) -> Vec<&'a Measurement> {
    let mut v: Vec<&Measurement> = ms.into_iter().collect();
    v.sort_by(|a, b| b.rss.total_cmp(&a.rss).then(a.path_index.cmp(&b.path_index)));
    v
}

/// Positions from the strongest pair of `candidates` whose SBR lines cross
/// at no less than `min_crossing_deg`. Pairs are visited in rank order
/// (0,1), (0,2), (1,2), (0,3)…, so the two strongest paths are used whenever
/// they are well conditioned.
pub fn position_from_pair(
    ctx: &EpochContext,
    candidates: &[&Measurement],
    min_crossing_deg: f64,
) -> Result<(Point2, [usize; 2])> {
    if candidates.len() < 2 {
        return Err(Error::Data(format!("{} candidate path(s), need 2", candidates.len())));
    }
    let lines: Vec<Option<Line>> = candidates.iter().map(|m| measurement_line(ctx, m).ok()).collect();
    let min_det = min_crossing_deg.to_radians().sin();
    let mut last_err = Error::DegenerateGeometry("no usable SBR line pair".into());
    for j in 1..candidates.len() {
        for i in 0..j {
            let (Some(li), Some(lj)) = (&lines[i], &lines[j]) else { continue };
            if li.det(lj).abs() < min_det {
                last_err = Error::ParallelLines { det: li.det(lj) };
                continue;
            }
            match intersect_lines(li, lj) {
                Ok(p) => return Ok((p, [candidates[i].path_index, candidates[j].path_index])),
                Err(e) => last_err = e,
            }
        }
    }
    Err(last_err)
}

fn outage(ctx: &EpochContext, reason: impl Into<String>) -> EpochOutcome {
    EpochOutcome::Outage {
        t: ctx.t,
        gnb_id: ctx.gnb.id,
        reason: reason.into(),
    }
}

fn pair_outcome(ctx: &EpochContext, cands: &[&Measurement], min_crossing_deg: f64, method: FixMethod) -> EpochOutcome {
    match position_from_pair(ctx, cands, min_crossing_deg) {
        Ok((p, ids)) => EpochOutcome::Fix(PositionFix {
            t: ctx.t,
            gnb_id: ctx.gnb.id,
            p,
            method,
            contributing: ids.to_vec(),
        }),
        Err(e) => outage(ctx, e.to_string()),
    }
}

/// Classify, filter, and position one epoch of one gNB.
pub fn pipeline_step<C: OrderClassifier + ?Sized>(
    measurements: &[Measurement],
    classifier: &C,
    ctx: &EpochContext,
    config: &PipelineConfig,
) -> EpochOutcome {
    if measurements.is_empty() {
        return outage(ctx, "no measurements");
    }
    let ranked = by_strength(measurements);
    let orders: Vec<usize> = ranked.iter().map(|m| classifier.classify(m)).collect();

    if config.mode == Mode::LosPreferred {
        if let Some(m) = ranked.iter().zip(&orders).find(|(_, &o)| o == 0).map(|(m, _)| *m) {
            return match los_position_2d(&ctx.gnb, m.range(), m.aod, ctx.ue_height) {
                Ok(p) => EpochOutcome::Fix(PositionFix {
                    t: ctx.t,
                    gnb_id: ctx.gnb.id,
                    p,
                    method: FixMethod::Los,
                    contributing: vec![m.path_index],
                }),
                Err(e) => outage(ctx, e.to_string()),
            };
        }
    }

    let sbrs: Vec<&Measurement> = ranked
        .iter()
        .zip(&orders)
        .filter(|(_, &o)| o == 1)
        .map(|(m, _)| *m)
        .collect();
    if sbrs.len() >= 2 {
        return pair_outcome(ctx, &sbrs, config.min_crossing_deg, FixMethod::Sbr);
    }
    pair_outcome(ctx, &ranked, config.min_crossing_deg, FixMethod::FallbackStrongestTwo)
}

/// Classifier-free comparisons for the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    /// Treat the strongest paths as SBRs without any filtering.
    StrongestTwo,
    /// Keep paths within the given dB of the strongest, treat them as SBRs.
    RssThreshold(f64),
    /// Treat the strongest path as LoS (conventional hybrid positioning).
    StrongestAsLos,
}

pub fn baseline_step(measurements: &[Measurement], ctx: &EpochContext, baseline: Baseline, min_crossing_deg: f64) -> EpochOutcome {
    if measurements.is_empty() {
        return outage(ctx, "no measurements");
    }
    match baseline {
        Baseline::StrongestTwo => {
            let ranked = by_strength(measurements);
            pair_outcome(ctx, &ranked, min_crossing_deg, FixMethod::FallbackStrongestTwo)
        }
        Baseline::RssThreshold(db) => match crate::classifier::baseline_rss_filter(measurements, db) {
            Ok(kept) => pair_outcome(ctx, &by_strength(kept), min_crossing_deg, FixMethod::Sbr),
            Err(e) => outage(ctx, e.to_string()),
        },
        Baseline::StrongestAsLos => {
            let m = by_strength(measurements)[0];
            match los_position_2d(&ctx.gnb, m.range(), m.aod, ctx.ue_height) {
                Ok(p) => EpochOutcome::Fix(PositionFix {
                    t: ctx.t,
                    gnb_id: ctx.gnb.id,
                    p,
                    method: FixMethod::Los,
                    contributing: vec![m.path_index],
                }),
                Err(e) => outage(ctx, e.to_string()),
            }
        }
    }
}

/// What to run on each epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Positioner {
    Pipeline(PipelineConfig),
    Baseline { baseline: Baseline, min_crossing_deg: f64 },
}

/// Measurements grouped by `(t bits, gnb_id)`.
pub fn group_epochs(measurements: &[Measurement]) -> BTreeMap<(u64, u32), Vec<Measurement>> {
    let mut groups: BTreeMap<(u64, u32), Vec<Measurement>> = BTreeMap::new();
    for m in measurements {
        groups.entry((m.t.to_bits(), m.gnb_id)).or_default().push(m.clone());
    }
    groups
}

/// Positions every trajectory epoch against its `rank`-th nearest gNB
/// (0 = gNB1, 1 = gNB2). Epochs without measurements become outages.
pub fn position_trajectory<C: OrderClassifier + Sync + ?Sized>(
    scene: &Scene,
    trajectory: &[TrajectoryPoint],
    groups: &BTreeMap<(u64, u32), Vec<Measurement>>,
    classifier: &C,
    rank: usize,
    positioner: Positioner,
) -> Vec<FixRow> {
    trajectory
        .par_iter()
        .filter_map(|tp| {
            let gnb = *associate(scene.gnbs(), tp.position).get(rank)?;
            let ctx = EpochContext { t: tp.t, gnb, ue_height: tp.z };
            let ms = groups.get(&(tp.t.to_bits(), gnb.id)).map_or(&[][..], Vec::as_slice);
            let outcome = match positioner {
                Positioner::Pipeline(cfg) => pipeline_step(ms, classifier, &ctx, &cfg),
                Positioner::Baseline { baseline, min_crossing_deg } => baseline_step(ms, &ctx, baseline, min_crossing_deg),
            };
            Some(FixRow::new(&outcome, tp.position))
        })
        .collect()
}

/// One line of the fix CSV: an epoch outcome alongside the true UE position.
#[derive(Debug, Clone, PartialEq)]
pub struct FixRow {
    pub t: f64,
    pub gnb_id: u32,
    /// `None` marks an outage.
    pub method: Option<FixMethod>,
    pub est: Option<Point2>,
    pub truth: Point2,
}

impl FixRow {
    pub fn new(outcome: &EpochOutcome, truth: Point2) -> Self {
        match outcome {
            EpochOutcome::Fix(f) => Self {
                t: f.t,
                gnb_id: f.gnb_id,
                method: Some(f.method),
                est: Some(f.p),
                truth,
            },
            EpochOutcome::Outage { t, gnb_id, .. } => Self {
                t: *t,
                gnb_id: *gnb_id,
                method: None,
                est: None,
                truth,
            },
        }
    }

    pub fn error(&self) -> Option<f64> {
        self.est.map(|p| p.distance(self.truth))
    }

    pub fn is_outage(&self) -> bool {
        self.method.is_none()
    }
}

pub const FIX_CSV_HEADER: &str = "t,gnb_id,method,x_est,y_est,x_true,y_true,err_m";
const OUTAGE_TAG: &str = "outage";

pub fn write_fixes_csv<W: Write>(mut w: W, rows: &[FixRow]) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(FIX_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let method = r.method.map_or(OUTAGE_TAG, FixMethod::as_str);
        let _ = write!(out, "{},{},{method},", r.t, r.gnb_id);
        match (r.est, r.error()) {
            (Some(p), Some(e)) => {
                let _ = write!(out, "{},{},", p.x, p.y);
                let _ = writeln!(out, "{},{},{e}", r.truth.x, r.truth.y);
            }
            _ => {
                let _ = writeln!(out, ",,{},{},", r.truth.x, r.truth.y);
            }
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_fixes_csv(text: &str, path: &str) -> Result<Vec<FixRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { path: path.into(), line: 1, msg: e.to_string() })?
        .clone();
    let cols: Vec<usize> = ["t", "gnb_id", "method", "x_est", "y_est", "x_true", "y_true"]
        .iter()
        .map(|n| require_column(&headers, n, path))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let method = match rec.get(cols[2]).unwrap_or("").trim() {
            OUTAGE_TAG => None,
            "los" => Some(FixMethod::Los),
            "sbr" => Some(FixMethod::Sbr),
            "fallback" => Some(FixMethod::FallbackStrongestTwo),
            other => {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    msg: format!("unknown method {other:?}"),
                })
            }
        };
        let est = match method {
            Some(_) => Some(Point2::new(
                parse_field(&rec, cols[3], "x_est", path)?,
                parse_field(&rec, cols[4], "y_est", path)?,
            )),
            None => None,
        };
        out.push(FixRow {
            t: parse_field(&rec, cols[0], "t", path)?,
            gnb_id: parse_field(&rec, cols[1], "gnb_id", path)?,
            method,
            est,
            truth: Point2::new(
                parse_field(&rec, cols[5], "x_true", path)?,
                parse_field(&rec, cols[6], "y_true", path)?,
            ),
        });
    }
    Ok(out)
}

pub fn load_fixes(path: impl AsRef<Path>) -> Result<Vec<FixRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_fixes_csv(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bearing_from_to;

    fn site(x: f64, y: f64, z: f64) -> GnbSite {
        GnbSite { id: 1, position: Point2::new(x, y), height: z }
    }

    #[test]
    fn spherical_examples() {
        let g = site(0., 0., 0.);
        let p = spherical_to_cartesian_3d(&g, &SphericalObs::new(10., Bearing::from_degrees(0.), 0.).unwrap());
        assert!(p.x.abs() < 1e-12 && (p.y - 10.).abs() < 1e-12 && p.z.abs() < 1e-12);
        let p = spherical_to_cartesian_3d(&g, &SphericalObs::new(10., Bearing::from_degrees(90.), 0.).unwrap());
        assert!((p.x - 10.).abs() < 1e-12 && p.y.abs() < 1e-12);
        let p = spherical_to_cartesian_3d(&g, &SphericalObs::new(10., Bearing::from_degrees(0.), 90. - 1e-9).unwrap());
        assert!(p.x.abs() < 1e-9 && p.y.abs() < 1e-6 && (p.z - 10.).abs() < 1e-9);
        assert!(SphericalObs::new(10., Bearing::from_degrees(0.), 90.).is_err());
        assert!(SphericalObs::new(0., Bearing::from_degrees(0.), 0.).is_err());
    }

    #[test]
    fn los_examples() {
        let p = los_position_2d(&site(0., 0., 0.), 10., Bearing::from_degrees(90.), 0.).unwrap();
        assert!((p.x - 10.).abs() < 1e-12 && p.y.abs() < 1e-12);
        let p = los_position_2d(&site(100., 200., 3.), 5., Bearing::from_degrees(0.), 0.).unwrap();
        assert!((p.x - 100.).abs() < 1e-12 && (p.y - 204.).abs() < 1e-12);
        assert!(matches!(
            los_position_2d(&site(0., 0., 3.), 2., Bearing::from_degrees(0.), 0.),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn scatterer_examples() {
        let s = scatterer_point(Point2::new(0., 0.), Bearing::from_degrees(45.), 200f64.sqrt());
        assert!(s.distance(Point2::new(10., 10.)) < 1e-12);
        assert_eq!(scatterer_point(Point2::new(3., 4.), Bearing::from_degrees(17.), 0.0), Point2::new(3., 4.));
        let s = scatterer_point(Point2::new(0., 0.), Bearing::from_degrees(0.), 7.);
        assert!(s.distance(Point2::new(0., 7.)) < 1e-12);
    }

    #[test]
    fn sbr_line_forward_construction() {
        let (g, s, u) = (Point2::new(0., 0.), Point2::new(10., 10.), Point2::new(20., 5.));
        let beta = bearing_from_to(g, s).unwrap();
        let alpha = bearing_from_to(u, s).unwrap();
        let d = g.distance(s) + s.distance(u);
        assert!((beta.degrees() - 45.0).abs() < 1e-12);
        assert!((alpha.degrees() - (360.0 - 63.4349)).abs() < 1e-4);
        assert!((d - 25.3224).abs() < 1e-4);
        let line = sbr_line(g, alpha, beta, d).unwrap();
        assert!(line.distance(u).abs() < 1e-9);
        let (k, b) = line.slope_intercept().unwrap();
        assert!((k + 6.1623).abs() < 1e-4, "slope {k}");
        assert!((b - 128.25).abs() < 1e-2, "intercept {b}");
        let (k2, b2) = sbr_slope_intercept(g, alpha, beta, d).unwrap();
        assert!((k - k2).abs() < 1e-9 && (b - b2).abs() < 1e-9);
    }

    #[test]
    fn sbr_line_vertical_case() {
        let line = sbr_line(Point2::new(0., 0.), Bearing::from_degrees(-45.), Bearing::from_degrees(45.), 10. * 2f64.sqrt()).unwrap();
        let (nx, ny, c) = line.coefficients();
        assert!((nx - 1.0).abs() < 1e-12 && ny.abs() < 1e-12 && (c - 10.0).abs() < 1e-9);
        assert!(sbr_slope_intercept(Point2::new(0., 0.), Bearing::from_degrees(-45.), Bearing::from_degrees(45.), 1.0)
            .is_none_or(|(k, _)| k.abs() > 1e12));
    }

    #[test]
    fn sbr_line_collinear_ray() {
        let line = sbr_line(Point2::new(0., 0.), Bearing::from_degrees(90.), Bearing::from_degrees(90.), 10.).unwrap();
        let (nx, ny, _) = line.coefficients();
        assert!(nx.abs() < 1e-12 && (ny.abs() - 1.0).abs() < 1e-12);
        for x in [-30.0, 0.0, 5.0, 80.0] {
            assert!(line.distance(Point2::new(x, 0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sbr_line_degenerate_when_opposed() {
        let err = sbr_line(Point2::new(0., 0.), Bearing::from_degrees(250.), Bearing::from_degrees(70.), 10.).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
    }

    fn measurement_for(g: Point2, s: Point2, u: Point2, k: usize) -> Measurement {
        let d = g.distance(s) + s.distance(u);
        Measurement {
            t: 0.0,
            gnb_id: 1,
            path_index: k,
            toa: d / crate::channel::SPEED_OF_LIGHT,
            aoa: bearing_from_to(u, s).unwrap(),
            aod: bearing_from_to(g, s).unwrap(),
            rss: -60.0 - k as f64,
            label: Some(1),
            truth: None,
        }
    }

    fn ctx0() -> EpochContext {
        EpochContext { t: 0.0, gnb: site(0., 0., 0.), ue_height: 0.0 }
    }

    #[test]
    fn two_sbrs_recover_ue() {
        let (g, u) = (Point2::new(0., 0.), Point2::new(20., 5.));
        let m1 = measurement_for(g, Point2::new(10., 10.), u, 0);
        let m2 = measurement_for(g, Point2::new(15., -8.), u, 1);
        let p = sbr_position(&ctx0(), &m1, &m2).unwrap();
        assert!(p.distance(u) < 1e-6);
    }

    #[test]
    fn identical_lines_are_parallel() {
        let (g, u) = (Point2::new(0., 0.), Point2::new(20., 5.));
        let m1 = measurement_for(g, Point2::new(10., 10.), u, 0);
        let m2 = measurement_for(g, Point2::new(10., 10.), u, 1);
        assert!(matches!(sbr_position(&ctx0(), &m1, &m2), Err(Error::ParallelLines { .. })));
    }

    #[test]
    fn foreign_measurement_rejected() {
        let (g, u) = (Point2::new(0., 0.), Point2::new(20., 5.));
        let m1 = measurement_for(g, Point2::new(10., 10.), u, 0);
        let mut m2 = measurement_for(g, Point2::new(15., -8.), u, 1);
        m2.gnb_id = 2;
        assert!(matches!(sbr_position(&ctx0(), &m1, &m2), Err(Error::Data(_))));
    }

    #[test]
    fn pipeline_modes() {
        let (g, u) = (Point2::new(0., 0.), Point2::new(20., 5.));
        let mut los = measurement_for(g, Point2::new(10., 2.5), u, 0);
        los.aoa = bearing_from_to(u, g).unwrap();
        los.aod = bearing_from_to(g, u).unwrap();
        los.toa = g.distance(u) / crate::channel::SPEED_OF_LIGHT;
        los.label = Some(0);
        los.rss = -50.0;
        let s1 = measurement_for(g, Point2::new(10., 10.), u, 1);
        let s2 = measurement_for(g, Point2::new(15., -8.), u, 2);
        let ms = vec![los, s1, s2];
        let cfg = PipelineConfig::default();
        let out = pipeline_step(&ms, &OracleLabels, &ctx0(), &cfg);
        let fix = out.fix().unwrap();
        assert_eq!(fix.method, FixMethod::Sbr);
        assert_eq!(fix.contributing, vec![1, 2]);
        assert!(fix.p.distance(u) < 1e-6);

        let cfg = PipelineConfig { mode: Mode::LosPreferred, ..cfg };
        let fix = pipeline_step(&ms, &OracleLabels, &ctx0(), &cfg).fix().cloned().unwrap();
        assert_eq!(fix.method, FixMethod::Los);
        assert!(fix.p.distance(u) < 1e-9);
    }

    struct Constant(usize);
    impl OrderClassifier for Constant {
        fn classify(&self, _: &Measurement) -> usize {
            self.0
        }
    }

    #[test]
    fn pipeline_fallback_and_outage() {
        let (g, u) = (Point2::new(0., 0.), Point2::new(20., 5.));
        let ms = vec![measurement_for(g, Point2::new(10., 10.), u, 0), measurement_for(g, Point2::new(15., -8.), u, 1)];
        let fix = pipeline_step(&ms, &Constant(2), &ctx0(), &PipelineConfig::default());
        assert_eq!(fix.fix().unwrap().method, FixMethod::FallbackStrongestTwo);
        assert!(matches!(pipeline_step(&[], &Constant(1), &ctx0(), &PipelineConfig::default()), EpochOutcome::Outage { .. }));
        assert!(matches!(pipeline_step(&ms[..1], &Constant(1), &ctx0(), &PipelineConfig::default()), EpochOutcome::Outage { .. }));
    }

    #[test]
    fn rss_offset_does_not_change_selection() {
        let (g, u) = (Point2::new(0., 0.), Point2::new(20., 5.));
        let mut ms = vec![
            measurement_for(g, Point2::new(10., 10.), u, 0),
            measurement_for(g, Point2::new(15., -8.), u, 1),
            measurement_for(g, Point2::new(5., -9.), u, 2),
        ];
        let a = pipeline_step(&ms, &OracleLabels, &ctx0(), &PipelineConfig::default());
        for m in &mut ms {
            m.rss += 37.5;
        }
        let b = pipeline_step(&ms, &OracleLabels, &ctx0(), &PipelineConfig::default());
        assert_eq!(a.fix().unwrap().contributing, b.fix().unwrap().contributing);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("sbr".parse::<Mode>().unwrap(), Mode::SbrOnly);
        assert_eq!("los-preferred".parse::<Mode>().unwrap(), Mode::LosPreferred);
        assert!("x".parse::<Mode>().is_err());
    }

    #[test]
    fn fix_csv_round_trip() {
        let rows = vec![
            FixRow {
                t: 0.1,
                gnb_id: 2,
                method: Some(FixMethod::Sbr),
                est: Some(Point2::new(1.5, -2.25)),
                truth: Point2::new(1.0, -2.0),
            },
            FixRow { t: 0.2, gnb_id: 2, method: None, est: None, truth: Point2::new(3.0, 4.0) },
        ];
        let mut buf = Vec::new();
        write_fixes_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(FIX_CSV_HEADER));
        assert!(text.contains("0.2,2,outage,,,3,4,\n"));
        assert_eq!(read_fixes_csv(&text, "f").unwrap(), rows);
        let bad = text.replace("sbr", "xyz");
        assert!(matches!(read_fixes_csv(&bad, "f"), Err(Error::Parse { line: 2, .. })));
    }
}
