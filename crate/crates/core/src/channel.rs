//! Conversion of traced paths into noisy ToA/AoA/AoD/RSS observations and
//! assembly of labelled datasets along a UE trajectory.
//!
//! Walls are vertical, so a specular path between antennas at different
//! heights unfolds into a straight 3D segment whose length is
//! `sqrt(L² + Δz²)` for horizontal length `L`. ToA and free-space loss use
//! that 3D length; with equal heights it reduces to the horizontal length.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Bearing, Point2};
use crate::raytracer::{trace_paths, GnbSite, PropagationPath, Scene};
use crate::rng::substream;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One channel observation of one propagation path.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub gnb_id: u32,
    /// Position of this path within its (epoch, gNB) group.
    pub path_index: usize,
    pub toa: f64,
    pub aoa: Bearing,
    pub aod: Bearing,
    pub rss: f64,
    /// Ground-truth reflection order.
    pub label: Option<u8>,
    pub truth: Option<Truth>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub ue: Point2,
    /// Range encoded by the noiseless ToA (3D unfolded length).
    pub path_len: f64,
}

impl Measurement {
    /// `[toa_s, aoa_deg, aod_deg, rss_dbm]`.
    pub fn features(&self) -> [f64; 4] {
        [self.toa, self.aoa.degrees(), self.aod.degrees(), self.rss]
    }

    /// Range implied by the ToA under synchronized clocks.
    pub fn range(&self) -> f64 {
        self.toa * SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_range: f64,
    pub sigma_angle: f64,
    pub sigma_rss: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            sigma_range: 0.0,
            sigma_angle: 0.0,
            sigma_rss: 0.0,
            seed,
        }
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self {
            sigma_range: 0.10,
            sigma_angle: 1.0,
            sigma_rss: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_range", self.sigma_range),
            ("sigma_angle", self.sigma_angle),
            ("sigma_rss", self.sigma_rss),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// ToA standard deviation in seconds.
    pub fn sigma_toa(&self) -> f64 {
        self.sigma_range / SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            bandwidth_hz: 400e6,
            tx_power_dbm: 30.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(Error::Config(format!("carrier_hz must be > 0, got {}", self.carrier_hz)));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::Config(format!("bandwidth_hz must be > 0, got {}", self.bandwidth_hz)));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(Error::Config("tx_power_dbm must be finite".into()));
        }
        Ok(())
    }
}

/// Free-space path loss in dB.
pub fn fspl_db(distance: f64, carrier_hz: f64) -> Result<f64> {
    if !(distance > 0.0 && carrier_hz > 0.0) {
        return Err(Error::Domain(format!(
            "free-space loss needs positive distance and carrier, got {distance} m, {carrier_hz} Hz"
        )));
    }
    let k = 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10();
    Ok(20.0 * distance.log10() + 20.0 * carrier_hz.log10() + k)
}

/// Where a measurement sits in the dataset; also keys its noise substream.
#[derive(Debug, Clone, Copy)]
pub struct LinkContext {
    pub t: f64,
    pub epoch_index: u64,
    pub gnb: GnbSite,
    pub ue_height: f64,
    pub path_index: usize,
}

impl LinkContext {
    pub fn delta_z(&self) -> f64 {
        self.gnb.height - self.ue_height
    }
}

/// 3D unfolded length of a path between antennas `delta_z` apart vertically.
pub fn slant_length(horizontal: f64, delta_z: f64) -> f64 {
    horizontal.hypot(delta_z)
}

pub fn path_to_measurement(
    path: &PropagationPath,
    radio: &RadioConfig,
    noise: &NoiseModel,
    scene: &Scene,
    ctx: &LinkContext,
) -> Result<Measurement> {
    let mut rng = substream(
        noise.seed,
        &[ctx.epoch_index, u64::from(ctx.gnb.id), ctx.path_index as u64],
    );
    let mut gauss = |sigma: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        z * sigma
    };
    let e_toa = gauss(noise.sigma_toa());
    let e_aoa = gauss(noise.sigma_angle);
    let e_aod = gauss(noise.sigma_angle);
    let e_rss = gauss(noise.sigma_rss);

    let length = slant_length(path.length, ctx.delta_z());
    let bounce_loss: f64 = path
        .wall_ids
        .iter()
        .map(|&w| scene.walls().get(w).map_or(0.0, |w| w.loss_db))
        .sum();
    let rss = radio.tx_power_dbm - fspl_db(length, radio.carrier_hz)? - bounce_loss + e_rss;
    let label = u8::try_from(path.order)
        .map_err(|_| Error::Data(format!("reflection order {} too large", path.order)))?;
    Ok(Measurement {
        t: ctx.t,
        gnb_id: ctx.gnb.id,
        path_index: ctx.path_index,
        toa: length / SPEED_OF_LIGHT + e_toa,
        aoa: Bearing::from_degrees(path.aoa.degrees() + e_aoa),
        aod: Bearing::from_degrees(path.aod.degrees() + e_aod),
        rss,
        label: Some(label),
        truth: Some(Truth {
            ue: path.ue(),
            path_len: length,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub position: Point2,
    pub z: f64,
}

/// The two gNBs nearest to `ue` (2D distance, ties to the lower id), nearest first.
pub fn associate(gnbs: &[GnbSite], ue: Point2) -> Vec<GnbSite> {
    let mut ranked: Vec<GnbSite> = gnbs.to_vec();
    ranked.sort_by(|a, b| {
        a.position
            .distance(ue)
            .total_cmp(&b.position.distance(ue))
            .then(a.id.cmp(&b.id))
    });
    ranked.truncate(2);
    ranked
}

/// An (epoch, gNB) association that produced no propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outage {
    pub epoch_index: u64,
    pub t: f64,
    pub gnb_id: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub measurements: Vec<Measurement>,
    pub outages: Vec<Outage>,
}

impl Dataset {
    /// Count of rows per label, indexed by label.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = Vec::new();
        for l in self.measurements.iter().filter_map(|m| m.label) {
            let l = usize::from(l);
            if h.len() <= l {
                h.resize(l + 1, 0);
            }
            h[l] += 1;
        }
        h
    }
}

/// Traced paths of one (epoch, gNB) association.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedLink {
    pub epoch_index: u64,
    pub t: f64,
    pub gnb: GnbSite,
    pub ue: Point2,
    pub ue_height: f64,
    pub paths: Vec<PropagationPath>,
}

/// Traces every associated link of every epoch, nearest gNB first.
///
/// Epochs are processed in parallel; output order follows the trajectory.
pub fn trace_trajectory(scene: &Scene, trajectory: &[TrajectoryPoint], max_order: usize) -> Result<Vec<TracedLink>> {
    if trajectory.is_empty() {
        return Err(Error::Data("trajectory is empty".into()));
    }
    if scene.gnbs().is_empty() {
        return Err(Error::Config("scene has no gNBs".into()));
    }
    let per_epoch = trajectory
        .par_iter()
        .enumerate()
        .map(|(i, tp)| {
            associate(scene.gnbs(), tp.position)
                .into_iter()
                .map(|gnb| {
                    Ok(TracedLink {
                        epoch_index: i as u64,
                        t: tp.t,
                        gnb,
                        ue: tp.position,
                        ue_height: tp.z,
                        paths: trace_paths(scene, gnb.position, tp.position, max_order)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_epoch.into_iter().flatten().collect())
}

/// Turns traced links into noisy measurements; links without paths become outages.
pub fn measure_links(scene: &Scene, links: &[TracedLink], radio: &RadioConfig, noise: &NoiseModel) -> Result<Dataset> {
    radio.validate()?;
    noise.validate()?;
    let per_link = links
        .par_iter()
        .map(|link| {
            link.paths
                .iter()
                .enumerate()
                .map(|(k, path)| {
                    let ctx = LinkContext {
                        t: link.t,
                        epoch_index: link.epoch_index,
                        gnb: link.gnb,
                        ue_height: link.ue_height,
                        path_index: k,
                    };
                    path_to_measurement(path, radio, noise, scene, &ctx)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::default();
    for (link, ms) in links.iter().zip(per_link) {
        if ms.is_empty() {
            ds.outages.push(Outage {
                epoch_index: link.epoch_index,
                t: link.t,
                gnb_id: link.gnb.id,
            });
        }
        ds.measurements.extend(ms);
    }
    Ok(ds)
}

/// Traces and measures every associated link of every epoch.
pub fn generate_dataset(
    scene: &Scene,
    trajectory: &[TrajectoryPoint],
    radio: &RadioConfig,
    noise: &NoiseModel,
    max_order: usize,
) -> Result<Dataset> {
    radio.validate()?;
    noise.validate()?;
    let links = trace_trajectory(scene, trajectory, max_order)?;
    measure_links(scene, &links, radio, noise)
}

const DATASET_HEADER: &str = "t,gnb_id,toa_s,aoa_deg,aod_deg,rss_dbm,label";
const TRUTH_HEADER: &str = ",ue_x,ue_y,path_len_m";

pub fn write_dataset_csv<W: Write>(mut w: W, rows: &[Measurement], with_truth: bool) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 96);
    out.push_str(DATASET_HEADER);
    if with_truth {
        out.push_str(TRUTH_HEADER);
    }
    out.push('\n');
    for m in rows {
        let label = m.label.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            m.t,
            m.gnb_id,
            m.toa,
            m.aoa.degrees(),
            m.aod.degrees(),
            m.rss,
            label
        ));
        if with_truth {
            match m.truth {
                Some(tr) => out.push_str(&format!(",{},{},{}", tr.ue.x, tr.ue.y, tr.path_len)),
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub(crate) fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, path: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let line = rec.position().map_or(0, |p| p.line() as usize);
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|e| Error::Parse {
        path: path.into(),
        line,
        msg: format!("column {name}: cannot parse {raw:?}: {e}"),
    })
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

pub(crate) fn require_column(headers: &csv::StringRecord, name: &str, path: &str) -> Result<usize> {
    column_index(headers, name).ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        msg: format!("missing column {name}"),
    })
}

/// Reads a dataset CSV. Truth columns are optional; a blank label reads as `None`.
///
/// `path_index` is reconstructed as the row position within each
/// consecutive (t, gnb_id) run.
pub fn read_dataset_csv(text: &str, path: &str) -> Result<Vec<Measurement>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { path: path.into(), line: 1, msg: e.to_string() })?
        .clone();
    let cols: Vec<usize> = ["t", "gnb_id", "toa_s", "aoa_deg", "aod_deg", "rss_dbm", "label"]
        .iter()
        .map(|n| require_column(&headers, n, path))
        .collect::<Result<_>>()?;
    let truth_cols: Option<Vec<usize>> = ["ue_x", "ue_y", "path_len_m"]
        .iter()
        .map(|n| column_index(&headers, n))
        .collect();
    let mut rows: Vec<Measurement> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let t: f64 = parse_field(&rec, cols[0], "t", path)?;
        let gnb_id: u32 = parse_field(&rec, cols[1], "gnb_id", path)?;
        let label = match rec.get(cols[6]).map(str::trim) {
            None | Some("") => None,
            Some(_) => Some(parse_field::<u8>(&rec, cols[6], "label", path)?),
        };
        let truth = match &truth_cols {
            Some(tc) if rec.get(tc[0]).is_some_and(|s| !s.trim().is_empty()) => Some(Truth {
                ue: Point2::new(
                    parse_field(&rec, tc[0], "ue_x", path)?,
                    parse_field(&rec, tc[1], "ue_y", path)?,
                ),
                path_len: parse_field(&rec, tc[2], "path_len_m", path)?,
            }),
            _ => None,
        };
        let path_index = match rows.last() {
            Some(prev) if prev.t.to_bits() == t.to_bits() && prev.gnb_id == gnb_id => prev.path_index + 1,
            _ => 0,
        };
        let toa: f64 = parse_field(&rec, cols[2], "toa_s", path)?;
        if !(toa > 0.0 && toa.is_finite()) {
            return Err(Error::Parse {
                path: path.into(),
                line: rec.position().map_or(0, |p| p.line() as usize),
                msg: format!("toa_s must be positive, got {toa}"),
            });
        }
        rows.push(Measurement {
            t,
            gnb_id,
            path_index,
            toa,
            aoa: Bearing::from_degrees(parse_field(&rec, cols[3], "aoa_deg", path)?),
            aod: Bearing::from_degrees(parse_field(&rec, cols[4], "aod_deg", path)?),
            rss: parse_field(&rec, cols[5], "rss_dbm", path)?,
            label,
            truth,
        });
    }
    Ok(rows)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Measurement>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset_csv(&text, &path.display().to_string())
}

/// True when the CSV header carries the truth columns.
pub fn has_truth_columns(rows: &[Measurement]) -> bool {
    !rows.is_empty() && rows.iter().all(|m| m.truth.is_some())
}

pub fn write_trajectory_csv<W: Write>(mut w: W, points: &[TrajectoryPoint]) -> Result<()> {
    let mut out = String::from("t,x,y,z\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.t, p.position.x, p.position.y, p.z));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_trajectory_csv(text: &str, path: &str) -> Result<Vec<TrajectoryPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { path: path.into(), line: 1, msg: e.to_string() })?
        .clone();
    let cols: Vec<usize> = ["t", "x", "y", "z"]
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
        out.push(TrajectoryPoint {
            t: parse_field(&rec, cols[0], "t", path)?,
            position: Point2::new(parse_field(&rec, cols[1], "x", path)?, parse_field(&rec, cols[2], "y", path)?),
            z: parse_field(&rec, cols[3], "z", path)?,
        });
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{path}: trajectory has no rows")));
    }
    Ok(out)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Vec<TrajectoryPoint>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_trajectory_csv(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Segment;
    use crate::raytracer::Wall;

    fn gnb_at(x: f64, y: f64) -> GnbSite {
        GnbSite { id: 1, position: Point2::new(x, y), height: 0.0 }
    }

    fn ctx(gnb: GnbSite) -> LinkContext {
        LinkContext { t: 0.0, epoch_index: 0, gnb, ue_height: 0.0, path_index: 0 }
    }

    /// Friis: 10·log10((4π d f / c)²).
    fn friis_oracle(d: f64, f: f64) -> f64 {
        let ratio = 4.0 * std::f64::consts::PI * d * f / SPEED_OF_LIGHT;
        10.0 * (ratio * ratio).log10()
    }

    #[test]
    fn fspl_matches_friis() {
        let frozen = [(1.0, 61.3909), (100.0, 101.3909)];
        for (d, expected) in frozen {
            let v = fspl_db(d, 28e9).unwrap();
            assert!((v - expected).abs() < 0.01, "{d} m: {v}");
            assert!((v - friis_oracle(d, 28e9)).abs() < 1e-9);
        }
    }

    #[test]
    fn fspl_doubling_adds_six_db() {
        for f in [2.4e9, 28e9, 60e9] {
            for d in [1.0, 37.0, 500.0] {
                let delta = fspl_db(2.0 * d, f).unwrap() - fspl_db(d, f).unwrap();
                assert!((delta - 6.0206).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn fspl_domain_errors() {
        assert!(matches!(fspl_db(0.0, 28e9), Err(Error::Domain(_))));
        assert!(matches!(fspl_db(1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn noiseless_los_toa() {
        let scene = Scene::default();
        let path = PropagationPath::from_vertices(
            vec![Point2::new(0.0, 0.0), Point2::new(299.792458, 0.0)],
            vec![],
        )
        .unwrap();
        let m = path_to_measurement(&path, &RadioConfig::default(), &NoiseModel::noiseless(1), &scene, &ctx(gnb_at(0.0, 0.0)))
            .unwrap();
        assert!((m.toa - 1e-6).abs() < 1e-18);
        assert_eq!(m.label, Some(0));
        assert!((m.aod.degrees() - 90.0).abs() < 1e-12);
        assert!((m.aoa.degrees() - 270.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_second_order_rss() {
        let walls = vec![
            Wall { segment: Segment::new(Point2::new(-500., 5.), Point2::new(500., 5.)).unwrap(), loss_db: 6.0 },
            Wall { segment: Segment::new(Point2::new(-500., -5.), Point2::new(500., -5.)).unwrap(), loss_db: 6.0 },
        ];
        let scene = Scene::new(walls, vec![]).unwrap();
        let paths = trace_paths(&scene, Point2::new(0., 0.), Point2::new(40., 0.), 2).unwrap();
        let p2 = paths.iter().find(|p| p.order == 2).unwrap();
        let radio = RadioConfig::default();
        let m = path_to_measurement(p2, &radio, &NoiseModel::noiseless(1), &scene, &ctx(gnb_at(0.0, 0.0))).unwrap();
        let expected = radio.tx_power_dbm - fspl_db(p2.length, radio.carrier_hz).unwrap() - 12.0;
        assert_eq!(m.rss, expected);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let scene = Scene::default();
        let path = PropagationPath::from_vertices(vec![Point2::new(0., 0.), Point2::new(50., 20.)], vec![]).unwrap();
        let noise = NoiseModel::with_defaults(42);
        let a = path_to_measurement(&path, &RadioConfig::default(), &noise, &scene, &ctx(gnb_at(0., 0.))).unwrap();
        let b = path_to_measurement(&path, &RadioConfig::default(), &noise, &scene, &ctx(gnb_at(0., 0.))).unwrap();
        assert_eq!(a.toa.to_bits(), b.toa.to_bits());
        assert_eq!(a.rss.to_bits(), b.rss.to_bits());
        assert_eq!(a.aoa.degrees().to_bits(), b.aoa.degrees().to_bits());
        let c = path_to_measurement(&path, &RadioConfig::default(), &NoiseModel::with_defaults(43), &scene, &ctx(gnb_at(0., 0.)))
            .unwrap();
        assert_ne!(a.toa, c.toa);
    }

    #[test]
    fn slant_length_uses_height_difference() {
        let path = PropagationPath::from_vertices(vec![Point2::new(0., 0.), Point2::new(4., 0.)], vec![]).unwrap();
        let mut c = ctx(GnbSite { id: 1, position: Point2::new(0., 0.), height: 4.5 });
        c.ue_height = 1.5;
        let m = path_to_measurement(&path, &RadioConfig::default(), &NoiseModel::noiseless(0), &Scene::default(), &c).unwrap();
        assert!((m.range() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn one_epoch_empty_scene() {
        let scene = Scene::new(vec![], vec![gnb_at(0., 0.)]).unwrap();
        let traj = [TrajectoryPoint { t: 0.0, position: Point2::new(10., 0.), z: 0.0 }];
        let ds = generate_dataset(&scene, &traj, &RadioConfig::default(), &NoiseModel::with_defaults(1), 3).unwrap();
        assert_eq!(ds.measurements.len(), 1);
        assert_eq!(ds.measurements[0].label, Some(0));
        assert!(ds.outages.is_empty());
    }

    #[test]
    fn association_ties_prefer_lower_id() {
        let g = |id, x| GnbSite { id, position: Point2::new(x, 0.0), height: 0.0 };
        let gnbs = [g(5, 10.0), g(2, -10.0), g(9, 30.0)];
        let ranked = associate(&gnbs, Point2::new(0.0, 0.0));
        assert_eq!(ranked.iter().map(|g| g.id).collect::<Vec<_>>(), vec![2, 5]);
    }

    #[test]
    fn enclosed_ue_is_an_outage() {
        // UE inside a closed box, gNB outside: no path at all.
        let s = |ax, ay, bx, by| Wall { segment: Segment::new(Point2::new(ax, ay), Point2::new(bx, by)).unwrap(), loss_db: 6.0 };
        let walls = vec![s(-1., -1., 1., -1.), s(1., -1., 1., 1.), s(1., 1., -1., 1.), s(-1., 1., -1., -1.)];
        let scene = Scene::new(walls, vec![gnb_at(20., 0.)]).unwrap();
        let traj = [TrajectoryPoint { t: 3.0, position: Point2::new(0., 0.), z: 0.0 }];
        let ds = generate_dataset(&scene, &traj, &RadioConfig::default(), &NoiseModel::noiseless(1), 2).unwrap();
        assert!(ds.measurements.is_empty());
        assert_eq!(ds.outages, vec![Outage { epoch_index: 0, t: 3.0, gnb_id: 1 }]);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let scene = Scene::new(vec![], vec![gnb_at(0., 0.)]).unwrap();
        let traj: Vec<_> = (0..3)
            .map(|i| TrajectoryPoint { t: f64::from(i) * 0.1, position: Point2::new(10. + f64::from(i), 1.0), z: 0.0 })
            .collect();
        let ds = generate_dataset(&scene, &traj, &RadioConfig::default(), &NoiseModel::with_defaults(9), 2).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &ds.measurements, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,gnb_id,toa_s,aoa_deg,aod_deg,rss_dbm,label,ue_x,ue_y,path_len_m\n"));
        let back = read_dataset_csv(&text, "mem").unwrap();
        assert_eq!(back, ds.measurements);

        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &ds.measurements, false).unwrap();
        let back = read_dataset_csv(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
        assert!(!has_truth_columns(&back));
    }

    #[test]
    fn dataset_parse_error_has_line_number() {
        let text = "t,gnb_id,toa_s,aoa_deg,aod_deg,rss_dbm,label\n0,1,1e-7,10,20,-60,0\n0,1,abc,10,20,-60,1\n";
        match read_dataset_csv(text, "d.csv").unwrap_err() {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "d.csv");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let pts = vec![
            TrajectoryPoint { t: 0.0, position: Point2::new(1.25, -3.0), z: 1.5 },
            TrajectoryPoint { t: 0.1, position: Point2::new(2.5, -3.0), z: 1.5 },
        ];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,y,z\n"));
        assert_eq!(read_trajectory_csv(&text, "x").unwrap(), pts);
        assert!(read_trajectory_csv("t,x,y,z\n", "x").is_err());
    }
}
