//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mmpath::channel::{NoiseModel, RadioConfig};
use mmpath::classifier::{BaggingParams, TreeParams};
use mmpath::positioning::{Mode, DEFAULT_MIN_CROSSING_DEG};
use mmpath::raytracer::{DEFAULT_MAX_ORDER, MAX_SUPPORTED_ORDER};
use mmpath::rng::derive_seed;
use mmpath::scenes::SceneParams;
use mmpath::{Error, Result};

/// Which positioning modes the `position` command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSel {
    Both,
    Only(Mode),
}

impl FromStr for ModeSel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "both" {
            Ok(ModeSel::Both)
        } else {
            s.parse().map(ModeSel::Only)
        }
    }
}

impl ModeSel {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSel::Both => vec![Mode::SbrOnly, Mode::LosPreferred],
            ModeSel::Only(m) => vec![m],
        }
    }
}

// Stream keys for the per-stage seeds.
const SCENE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;
const BAGGING_STREAM: u64 = 4;
const CV_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: PathBuf,
    pub trajectory: PathBuf,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub out_dir: PathBuf,

    pub scene_params: SceneParams,
    /// Zero means "derive from `target_rows`".
    pub n_epochs: usize,
    pub target_rows: usize,
    pub speed_mps: f64,
    pub ue_height: f64,
    pub max_order: usize,

    pub radio: RadioConfig,
    pub sigma_range: f64,
    pub sigma_angle: f64,
    pub sigma_rss: f64,

    pub bagging: BaggingParams,
    pub cv_folds: usize,

    pub mode: ModeSel,
    pub threshold_db: f64,
    pub min_crossing_deg: f64,
    pub oracle_labels: bool,
}

/// Raw key/value pairs with the directory relative paths resolve against.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut raw = Self::parse(&text, &path.display().to_string())?;
        raw.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(raw)
    }

    /// Blank lines and `#` comments are skipped; later keys win.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.into(),
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self {
            values,
            base: PathBuf::new(),
        })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(normalize_key(key), value.to_string());
    }

    pub fn resolve(mut self) -> Result<RunConfig> {
        let mut take = |key: &str| self.values.remove(key);
        let seed: u64 = match take("seed") {
            Some(v) => parse_value("seed", &v)?,
            None => {
                return Err(Error::Config(
                    "seed is mandatory (set `seed = N` or pass --seed)".into(),
                ))
            }
        };
        let base = self.base.clone();
        let mut path = |key: &str, default: &str| base.join(take(key).unwrap_or_else(|| default.into()));
        let scene = path("scene", "scene.json");
        let trajectory = path("trajectory", "trajectory.csv");
        let dataset = path("dataset", "dataset.csv");
        let model = path("model", "model.txt");
        let out_dir = path("out_dir", "out");

        let mut get = |key: &str| self.values.remove(key);
        macro_rules! field {
            ($key:literal, $default:expr) => {
                match get($key) {
                    Some(v) => parse_value($key, &v)?,
                    None => $default,
                }
            };
        }

        let d = SceneParams::default();
        let scene_params = SceneParams {
            kind: field!("scene_kind", d.kind),
            length_m: field!("length_m", d.length_m),
            street_width_m: field!("street_width_m", d.street_width_m),
            block_m: field!("block_m", d.block_m),
            cross_street_m: field!("cross_street_m", d.cross_street_m),
            block_depth_m: field!("block_depth_m", d.block_depth_m),
            rows: field!("rows", d.rows),
            cols: field!("cols", d.cols),
            gnb_spacing_m: field!("gnb_spacing_m", d.gnb_spacing_m),
            lateral_offset_m: field!("lateral_offset_m", d.lateral_offset_m),
            gnb_height_m: field!("gnb_height_m", d.gnb_height_m),
            wall_loss_db: field!("wall_loss_db", d.wall_loss_db),
            obstacle_spacing_m: field!("obstacle_spacing_m", d.obstacle_spacing_m),
            obstacle_length_m: field!("obstacle_length_m", d.obstacle_length_m),
            obstacle_width_m: field!("obstacle_width_m", d.obstacle_width_m),
            seed: derive_seed(seed, &[SCENE_STREAM]),
        };
        let r = RadioConfig::default();
        let radio = RadioConfig {
            carrier_hz: field!("carrier_hz", r.carrier_hz),
            bandwidth_hz: field!("bandwidth_hz", r.bandwidth_hz),
            tx_power_dbm: field!("tx_power_dbm", r.tx_power_dbm),
        };
        let n = NoiseModel::with_defaults(0);
        let b = BaggingParams::default();
        let bagging = BaggingParams {
            n_trees: field!("n_trees", b.n_trees),
            tree: TreeParams {
                max_depth: field!("max_depth", b.tree.max_depth),
                min_leaf_size: field!("min_leaf_size", b.tree.min_leaf_size),
            },
            bootstrap: field!("bootstrap", b.bootstrap),
        };
        let cfg = RunConfig {
            seed,
            scene,
            trajectory,
            dataset,
            model,
            out_dir,
            scene_params,
            n_epochs: field!("n_epochs", 0),
            target_rows: field!("target_rows", 200_000),
            speed_mps: field!("speed_mps", 10.0),
            ue_height: field!("ue_height", 1.5),
            max_order: field!("max_order", DEFAULT_MAX_ORDER),
            radio,
            sigma_range: field!("noise_sigma_range", n.sigma_range),
            sigma_angle: field!("noise_sigma_angle", n.sigma_angle),
            sigma_rss: field!("noise_sigma_rss", n.sigma_rss),
            bagging,
            cv_folds: field!("cv_folds", 5),
            mode: field!("mode", ModeSel::Both),
            threshold_db: field!("threshold_db", 10.0),
            min_crossing_deg: field!("min_crossing_deg", DEFAULT_MIN_CROSSING_DEG),
            oracle_labels: field!("oracle_labels", false),
        };
        if let Some(key) = self.values.keys().next() {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {raw:?}: {e}")))
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.max_order > MAX_SUPPORTED_ORDER {
            return Err(Error::Config(format!(
                "max_order must be at most {MAX_SUPPORTED_ORDER}, got {}",
                self.max_order
            )));
        }
        if self.bagging.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if self.cv_folds == 1 {
            return Err(Error::Config("cv_folds must be 0 (off) or >= 2".into()));
        }
        if !(self.threshold_db.is_finite() && self.threshold_db >= 0.0) {
            return Err(Error::Config(format!(
                "threshold_db must be >= 0, got {}",
                self.threshold_db
            )));
        }
        if !(0.0..90.0).contains(&self.min_crossing_deg) {
            return Err(Error::Config(format!(
                "min_crossing_deg must be in [0, 90), got {}",
                self.min_crossing_deg
            )));
        }
        if !(self.ue_height.is_finite() && self.ue_height >= 0.0) {
            return Err(Error::Config(format!("ue_height must be >= 0, got {}", self.ue_height)));
        }
        self.radio.validate()?;
        self.noise().validate()?;
        self.bagging.tree.validate()?;
        self.scene_params.validate()
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            sigma_range: self.sigma_range,
            sigma_angle: self.sigma_angle,
            sigma_rss: self.sigma_rss,
            seed: derive_seed(self.seed, &[NOISE_STREAM]),
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, &[SPLIT_STREAM])
    }

    pub fn bagging_seed(&self) -> u64 {
        derive_seed(self.seed, &[BAGGING_STREAM])
    }

    pub fn cv_seed(&self) -> u64 {
        derive_seed(self.seed, &[CV_STREAM])
    }
}
