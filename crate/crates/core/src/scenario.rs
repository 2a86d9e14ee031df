//! Street scenario: base stations on lamp posts, a vehicle driving a straight
//! line, static blockers and reflecting facades. Produces labeled beam
//! sequences sampled once per beam coherence time.

use std::f64::consts::PI;
use std::path::Path as FsPath;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{freq_channel, receive_power, ChannelConfig, Path, PathSet};
use crate::codebook::{build_codebook, select_beam, Codebook};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3, Wall};
use crate::rng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
/// Retries before a trajectory that keeps starting fully blocked is an error.
const MAX_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreetConfig {
    /// Meters along x; the drivable area is `[0, length] x [0, width]`.
    pub length: f64,
    pub width: f64,
}

impl Default for StreetConfig {
    fn default() -> Self {
        StreetConfig {
            length: 200.0,
            width: 14.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub num_subcarriers: usize,
    pub num_taps: usize,
    pub rolloff: f64,
    pub reflection_loss_db: f64,
    pub hysteresis_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            carrier_freq: 60e9,
            bandwidth: 1e9,
            tx_power_dbm: 30.0,
            noise_figure_db: 0.0,
            num_subcarriers: 32,
            num_taps: 16,
            rolloff: 0.1,
            reflection_loss_db: 10.0,
            hysteresis_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    /// Wavelengths.
    pub spacing: f64,
    pub oversampling: usize,
    /// Radians; `None` means `2 pi / M_CB`.
    pub beamwidth: Option<f64>,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            num_antennas: 32,
            spacing: 0.5,
            oversampling: 4,
            beamwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub speeds_kmh: Vec<f64>,
    pub trajectory_max_len: f64,
    pub start_window: f64,
    pub user_height: f64,
    /// Lower clamp on the travel/anchor angle, degrees.
    pub min_alpha_deg: f64,
    pub max_seq_len: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            speeds_kmh: vec![8.0, 16.0, 24.0, 32.0, 40.0],
            trajectory_max_len: 160.0,
            start_window: 40.0,
            user_height: 1.5,
            min_alpha_deg: 5.0,
            max_seq_len: 454,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    /// Ground position `[x, y]`, meters; mounted at `bs_height`.
    pub position: [f64; 2],
    /// Horizontal broadside direction of the array.
    pub facing: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub bs_height: f64,
    pub street: StreetConfig,
    pub radio: RadioConfig,
    pub array: ArrayConfig,
    pub mobility: MobilityConfig,
    pub base_stations: Vec<BaseStation>,
    pub blockers: Vec<Aabb>,
    pub walls: Vec<Wall>,
}

impl Default for ScenarioConfig {
    /// Two lamp-post base stations on opposite sidewalks, a kiosk-sized box on
    /// the median halfway down the street, and building facades on both sides.
    fn default() -> Self {
        ScenarioConfig {
            bs_height: 4.0,
            street: StreetConfig::default(),
            radio: RadioConfig::default(),
            array: ArrayConfig::default(),
            mobility: MobilityConfig::default(),
            base_stations: vec![
                BaseStation {
                    position: [50.0, -6.0],
                    facing: [0.0, 1.0],
                },
                BaseStation {
                    position: [150.0, 20.0],
                    facing: [0.0, -1.0],
                },
            ],
            blockers: vec![Aabb::new(
                Point3::new(90.0, 6.0, 0.0),
                Point3::new(110.0, 8.0, 4.5),
            )],
            walls: vec![
                Wall {
                    point: Point3::new(0.0, -10.0, 0.0),
                    normal: Point3::new(0.0, 1.0, 0.0),
                },
                Wall {
                    point: Point3::new(0.0, 24.0, 0.0),
                    normal: Point3::new(0.0, -1.0, 0.0),
                },
            ],
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }

    pub fn num_bs(&self) -> usize {
        self.base_stations.len()
    }

    pub fn validate(&self) -> Result<()> {
        // N = 1 is only meaningful for tests, so it is accepted here.
        if self.base_stations.is_empty() {
            return Err(Error::config("at least one base station is required"));
        }
        for (i, bs) in self.base_stations.iter().enumerate() {
            if bs.facing[0].hypot(bs.facing[1]) == 0.0 {
                return Err(Error::config(format!(
                    "base station {i} has a zero facing vector"
                )));
            }
        }
        let m = &self.mobility;
        if m.speeds_kmh.is_empty() || m.speeds_kmh.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config(
                "speeds must be a nonempty list of positive values",
            ));
        }
        if !(m.trajectory_max_len > 0.0) || !(m.start_window >= 0.0) {
            return Err(Error::config(
                "trajectory_max_len must be positive and start_window non-negative",
            ));
        }
        if !(m.start_window < self.street.length) {
            return Err(Error::config("start_window must lie inside the street"));
        }
        if !(self.street.length > 0.0) || !(self.street.width >= 0.0) {
            return Err(Error::config(
                "street length must be positive and width non-negative",
            ));
        }
        if !(0.0..90.0).contains(&m.min_alpha_deg) || m.min_alpha_deg == 0.0 {
            return Err(Error::config("min_alpha_deg must lie in (0, 90)"));
        }
        if m.max_seq_len == 0 {
            return Err(Error::config("max_seq_len must be at least 1"));
        }
        if !(self.radio.bandwidth > 0.0) {
            return Err(Error::config("bandwidth must be positive"));
        }
        if let Some(bw) = self.array.beamwidth {
            if !(bw > 0.0) {
                return Err(Error::config("beamwidth must be positive"));
            }
        }
        for w in &self.walls {
            if w.normal.norm() == 0.0 {
                return Err(Error::config("wall normal must be nonzero"));
            }
        }
        self.channel_config().validate()?;
        if self.array.oversampling == 0 {
            return Err(Error::config("oversampling must be at least 1"));
        }
        Ok(())
    }

    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            num_antennas: self.array.num_antennas,
            num_subcarriers: self.radio.num_subcarriers,
            num_taps: self.radio.num_taps,
            sample_period: 1.0 / self.radio.bandwidth,
            antenna_spacing: self.array.spacing,
            carrier_freq: self.radio.carrier_freq,
            rolloff: self.radio.rolloff,
        }
    }

    pub fn codebook(&self) -> Result<Codebook> {
        build_codebook(&self.channel_config(), self.array.oversampling)
    }

    pub fn codebook_size(&self) -> usize {
        self.array.num_antennas * self.array.oversampling
    }

    pub fn beamwidth(&self) -> f64 {
        self.array
            .beamwidth
            .unwrap_or(2.0 * PI / self.codebook_size() as f64)
    }

    pub fn noise_power_mw(&self) -> f64 {
        db_to_linear(
            THERMAL_NOISE_DBM_PER_HZ
                + 10.0 * self.radio.bandwidth.log10()
                + self.radio.noise_figure_db,
        )
    }

    pub fn bs_position(&self, bs_index: usize) -> Point3 {
        let p = self.base_stations[bs_index].position;
        Point3::new(p[0], p[1], self.bs_height)
    }

    /// 64-bit hex digest of the canonical TOML form.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Free-space path loss `(4 pi d f_c / c)^2`.
pub fn free_space_loss(distance: f64, carrier_freq: f64) -> f64 {
    (4.0 * PI * distance * carrier_freq / SPEED_OF_LIGHT).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    /// Ground-plane start, meters.
    pub start: [f64; 2],
    /// Unit vector.
    pub direction: [f64; 2],
    /// m/s.
    pub speed: f64,
    /// Meters.
    pub length: f64,
}

impl Trajectory {
    fn position(&self, traveled: f64, height: f64) -> Point3 {
        Point3::new(
            self.start[0] + self.direction[0] * traveled,
            self.start[1] + self.direction[1] * traveled,
            height,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEpisode {
    pub beam_indices: Vec<usize>,
    /// Base station serving at the next step.
    pub labels: Vec<usize>,
    pub serving_bs: Vec<usize>,
    /// Seconds since the episode started, one per step.
    pub step_times: Vec<f64>,
}

impl LabeledEpisode {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Beam coherence time `D / (v sin(alpha)) * beamwidth / 2`.
pub fn beam_coherence_time(
    speed: f64,
    scatter_distance: f64,
    alpha: f64,
    beamwidth: f64,
) -> Result<f64> {
    if !(speed > 0.0) || !(scatter_distance > 0.0) || !(beamwidth > 0.0) {
        return Err(Error::contract(
            "speed, scatter distance and beamwidth must be positive",
        ));
    }
    if !(alpha > 0.0 && alpha <= PI / 2.0) {
        return Err(Error::contract(format!(
            "alpha = {alpha} outside (0, pi/2]; clamp before calling"
        )));
    }
    Ok(scatter_distance / (speed * alpha.sin()) * beamwidth / 2.0)
}

pub fn los_blocked(user: Point3, bs: Point3, blockers: &[Aabb]) -> bool {
    blockers.iter().any(|b| b.intersects_segment(user, bs))
}

/// A traced ray before it is expressed relative to the set's path loss.
#[derive(Debug, Clone, Copy)]
struct Ray {
    length: f64,
    extra_loss: f64,
    /// First point the ray reaches after leaving the array.
    toward: Point3,
    /// Last point the ray leaves before reaching the user: the base station
    /// itself for a direct ray, the bounce point otherwise.
    anchor: Point3,
}

fn trace(user: Point3, bs_index: usize, cfg: &ScenarioConfig) -> Vec<Ray> {
    let bs = cfg.bs_position(bs_index);
    let mut rays = Vec::new();
    if !los_blocked(user, bs, &cfg.blockers) {
        rays.push(Ray {
            length: bs.distance(user),
            extra_loss: 1.0,
            toward: user,
            anchor: bs,
        });
    }
    let reflection = db_to_linear(cfg.radio.reflection_loss_db);
    for wall in &cfg.walls {
        let Some(point) = wall.reflection_point(bs, user) else {
            continue;
        };
        if los_blocked(bs, point, &cfg.blockers) || los_blocked(point, user, &cfg.blockers) {
            continue;
        }
        rays.push(Ray {
            length: bs.distance(point) + point.distance(user),
            extra_loss: reflection,
            toward: point,
            anchor: point,
        });
    }
    // panel arrays do not radiate backwards
    rays.retain(|r| {
        let facing = cfg.base_stations[bs_index].facing;
        let v = r.toward - bs;
        v.x * facing[0] + v.y * facing[1] > 0.0
    });
    rays
}

fn local_angles(bs_index: usize, target: Point3, cfg: &ScenarioConfig) -> (f64, f64) {
    let bs = cfg.bs_position(bs_index);
    let [fx, fy] = cfg.base_stations[bs_index].facing;
    let v = target - bs;
    let along_axis = v.x * fy - v.y * fx;
    let along_facing = v.x * fx + v.y * fy;
    let azimuth = along_axis.atan2(along_facing);
    let elevation = v.z.atan2(v.x.hypot(v.y));
    (azimuth, elevation)
}

fn check_inside(user: Point3, cfg: &ScenarioConfig) -> Result<()> {
    let s = &cfg.street;
    let eps = 1e-9;
    if user.x < -eps || user.x > s.length + eps || user.y < -eps || user.y > s.width + eps {
        return Err(Error::contract(format!(
            "user ({:.3}, {:.3}) outside the street",
            user.x, user.y
        )));
    }
    Ok(())
}

fn rays_to_pathset(rays: &[Ray], bs_index: usize, cfg: &ScenarioConfig) -> PathSet {
    if rays.is_empty() {
        return PathSet::blocked(bs_index);
    }
    let fc = cfg.radio.carrier_freq;
    let reference = rays
        .iter()
        .map(|r| free_space_loss(r.length, fc) * r.extra_loss)
        .fold(f64::INFINITY, f64::min);
    let paths = rays
        .iter()
        .map(|r| {
            let loss = free_space_loss(r.length, fc) * r.extra_loss;
            let delay = r.length / SPEED_OF_LIGHT;
            let (azimuth, elevation) = local_angles(bs_index, r.toward, cfg);
            Path {
                gain: Complex64::from_polar((reference / loss).sqrt(), -2.0 * PI * fc * delay),
                delay,
                azimuth,
                elevation,
            }
        })
        .collect();
    PathSet {
        paths,
        path_loss: reference,
        bs_index,
    }
}

/// Geometric path parameters between a user and one base station. Delays are
/// absolute propagation times.
pub fn path_params(user: Point3, bs_index: usize, cfg: &ScenarioConfig) -> Result<PathSet> {
    check_inside(user, cfg)?;
    if bs_index >= cfg.num_bs() {
        return Err(Error::contract(format!("no base station {bs_index}")));
    }
    Ok(rays_to_pathset(&trace(user, bs_index, cfg), bs_index, cfg))
}

#[derive(Debug, Clone, Copy)]
struct LinkState {
    beam: usize,
    snr_db: f64,
    anchor: Option<Point3>,
}

/// Measures every base station at one user position.
struct Measurer<'a> {
    cfg: &'a ScenarioConfig,
    channel: ChannelConfig,
    codebook: &'a Codebook,
    tx_mw: f64,
    noise_mw: f64,
}

impl<'a> Measurer<'a> {
    fn new(cfg: &'a ScenarioConfig, codebook: &'a Codebook) -> Self {
        Measurer {
            cfg,
            channel: cfg.channel_config(),
            codebook,
            tx_mw: db_to_linear(cfg.radio.tx_power_dbm),
            noise_mw: cfg.noise_power_mw(),
        }
    }

    fn link(&self, user: Point3, bs_index: usize) -> Result<LinkState> {
        check_inside(user, self.cfg)?;
        let rays = trace(user, bs_index, self.cfg);
        if rays.is_empty() {
            return Ok(LinkState {
                beam: 0,
                snr_db: f64::NEG_INFINITY,
                anchor: None,
            });
        }
        let dominant = rays
            .iter()
            .min_by(|a, b| {
                (a.length * a.length * a.extra_loss)
                    .total_cmp(&(b.length * b.length * b.extra_loss))
            })
            .map(|r| r.anchor);
        let ps = rays_to_pathset(&rays, bs_index, self.cfg).synchronized(&self.channel);
        let h = freq_channel(&ps, &self.channel)?;
        let (beam, _) = select_beam(&h, self.codebook)?;
        let power = receive_power(&h, &self.codebook.codewords[beam], self.tx_mw)?
            / self.channel.num_subcarriers as f64;
        Ok(LinkState {
            beam,
            snr_db: 10.0 * (power / self.noise_mw).log10(),
            anchor: dominant,
        })
    }

    fn all(&self, user: Point3) -> Result<Vec<LinkState>> {
        (0..self.cfg.num_bs()).map(|n| self.link(user, n)).collect()
    }
}

/// Highest-SNR base station, lowest index on ties; `None` when all are blocked.
fn strongest(links: &[LinkState]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, l) in links.iter().enumerate() {
        if l.snr_db == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|b| l.snr_db > links[b].snr_db) {
            best = Some(i);
        }
    }
    best
}

fn acute_angle(travel: Point3, towards: Point3) -> f64 {
    let c = (travel.dot(towards) / (travel.norm() * towards.norm())).clamp(-1.0, 1.0);
    let a = c.acos();
    a.min(PI - a)
}

/// Walks one trajectory and labels every step with the base station that
/// serves the following step.
pub fn generate_episode(
    cfg: &ScenarioConfig,
    traj: &Trajectory,
    cb: &Codebook,
) -> Result<LabeledEpisode> {
    if !(traj.length > 0.0) {
        return Err(Error::contract("zero-length trajectory"));
    }
    if !(traj.speed > 0.0) {
        return Err(Error::contract("trajectory speed must be positive"));
    }
    let measurer = Measurer::new(cfg, cb);
    let height = cfg.mobility.user_height;
    let travel = Point3::new(traj.direction[0], traj.direction[1], 0.0);
    let min_alpha = cfg.mobility.min_alpha_deg.to_radians();
    let beamwidth = cfg.beamwidth();
    let hysteresis = cfg.radio.hysteresis_db;

    let mut pos = traj.position(0.0, height);
    let mut links = measurer.all(pos)?;
    let mut serving =
        strongest(&links).ok_or(Error::EmptyEpisode("start position fully blocked"))?;
    let mut traveled = 0.0;
    let mut time = 0.0;
    let mut ep = LabeledEpisode {
        beam_indices: Vec::new(),
        labels: Vec::new(),
        serving_bs: Vec::new(),
        step_times: Vec::new(),
    };

    while ep.len() < cfg.mobility.max_seq_len {
        let link = links[serving];
        let anchor = link
            .anchor
            .expect("serving base station always has at least one path");
        let to_anchor = anchor - pos;
        let alpha = acute_angle(travel, to_anchor).max(min_alpha);
        let dwell = beam_coherence_time(traj.speed, to_anchor.norm(), alpha, beamwidth)?;

        let next_traveled = traveled + traj.speed * dwell;
        if next_traveled > traj.length {
            break;
        }
        let next_pos = traj.position(next_traveled, height);
        let next_links = measurer.all(next_pos)?;
        let Some(challenger) = strongest(&next_links) else {
            break;
        };
        let label = if challenger != serving
            && next_links[challenger].snr_db > next_links[serving].snr_db + hysteresis
        {
            challenger
        } else {
            serving
        };

        ep.beam_indices.push(link.beam);
        ep.labels.push(label);
        ep.serving_bs.push(serving);
        ep.step_times.push(time);

        time += dwell;
        traveled = next_traveled;
        pos = next_pos;
        links = next_links;
        serving = label;
    }

    if ep.is_empty() {
        return Err(Error::EmptyEpisode("no step has a labeled successor"));
    }
    Ok(ep)
}

/// Uniform start in the start window, uniform lateral offset, uniform speed
/// choice, driving along +x until the trajectory budget or the street ends.
pub fn sample_trajectory(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Trajectory {
    let m = &cfg.mobility;
    let x0 = if m.start_window > 0.0 {
        rng.random_range(0.0..m.start_window)
    } else {
        0.0
    };
    let y0 = if cfg.street.width > 0.0 {
        rng.random_range(0.0..=cfg.street.width)
    } else {
        0.0
    };
    let kmh = m.speeds_kmh[rng.random_range(0..m.speeds_kmh.len())];
    Trajectory {
        start: [x0, y0],
        direction: [1.0, 0.0],
        speed: kmh / 3.6,
        length: m.trajectory_max_len.min(cfg.street.length - x0),
    }
}

/// One episode per index, each drawn from its own `(seed, index)` stream, so
/// the result is independent of thread count.
pub fn generate_dataset(
    cfg: &ScenarioConfig,
    n_episodes: usize,
    cb: &Codebook,
    seed: u64,
) -> Result<Vec<LabeledEpisode>> {
    if n_episodes == 0 {
        return Err(Error::contract("n_episodes must be at least 1"));
    }
    cfg.validate()?;
    (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "episode", i as u64);
            for _ in 0..MAX_RESAMPLES {
                let traj = sample_trajectory(cfg, &mut rng);
                match generate_episode(cfg, &traj, cb) {
                    Err(Error::EmptyEpisode(_)) => continue,
                    other => return other,
                }
            }
            Err(Error::config(format!(
                "episode {i}: every sampled trajectory was fully blocked"
            )))
        })
        .collect()
}
