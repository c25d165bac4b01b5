//! Monte-Carlo alignment sweeps, log replay and reporting.

pub mod config;
pub mod report;

use std::path::Path;

use rayon::prelude::*;

use crate::earth::{c_en, ecef_to_lla, lla_to_ecef, EarthParams, GeoPosition};
use crate::ekf::{init_covariance, FilterConfig, FilterState, InitStds};
use crate::errmodel::{ErrorModelKind, Vec21};
use crate::meas::{Measurement, OdoParams};
use crate::mech::ImuSample;
use crate::sim::{synthesize, OdoSample, ScenarioKind, SensorData, Trajectory};
use crate::so3::{exp_so3, log_so3};
use crate::triquat::{Mat3, NavState, Quaternion, Vec3};
use crate::Error;

pub use config::{CoarseAttitude, Config, ReplayConfig, SweepConfig};
pub use report::{anees_band, emit_report, parse_report, FilterReport, McReport, TerminalRow};

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Rotation about the local up axis.
fn rot_up(a: f64) -> Mat3 {
    exp_so3(&Vec3::new(0.0, a, 0.0))
}

fn wrap_deg(a: f64) -> f64 {
    let mut x = a % 360.0;
    if x > 180.0 {
        x -= 360.0;
    } else if x <= -180.0 {
        x += 360.0;
    }
    x
}

/// Roll, pitch and yaw error of `est` against `truth` in the north-up-east
/// frame at the true position, deg.
///
/// Below 1° the components of `log(Ĉ_b^n C_b^nᵀ)` are returned as is. Larger
/// errors are split as `R_U(yaw)·exp(tilt)` with a horizontal tilt, the inverse
/// of [`perturb_attitude`]; yaw is wrapped to (−180, 180].
pub fn attitude_error_nav(est: &NavState, truth: &NavState, earth: &EarthParams) -> [f64; 3] {
    let cne = c_en(&ecef_to_lla(&truth.r_e, earth));
    let e = cne.transpose() * est.c_be() * truth.c_be().transpose() * cne;
    let phi = log_so3(&e);
    if phi.norm() < DEG {
        return [phi.x / DEG, phi.z / DEG, phi.y / DEG];
    }
    let n = e.column(0);
    let mut yaw = (-n.z).atan2(n.x);
    let mut tilt = log_so3(&(rot_up(-yaw) * e));
    // drive the up component of the tilt to zero
    for _ in 0..20 {
        if tilt.y.abs() < 1e-15 {
            break;
        }
        yaw += tilt.y;
        tilt = log_so3(&(rot_up(-yaw) * e));
    }
    [tilt.x / DEG, tilt.z / DEG, wrap_deg(yaw / DEG)]
}

/// `Ĉ_b^n = R_U(yaw)·exp([roll, 0, pitch]×)·C_b^n`, angles in deg.
pub fn perturb_attitude(truth: &NavState, error_deg: [f64; 3], earth: &EarthParams) -> Quaternion {
    let cne = c_en(&ecef_to_lla(&truth.r_e, earth));
    let e = rot_up(error_deg[2] * DEG) * exp_so3(&Vec3::new(error_deg[0] * DEG, 0.0, error_deg[1] * DEG));
    let c = cne * e * cne.transpose() * truth.c_be();
    let q = Quaternion::from_matrix(&c);
    if q.dot(&truth.q_eb) < 0.0 {
        -q
    } else {
        q
    }
}

/// Body-to-navigation matrix from (roll, pitch, yaw) in deg. Body axes are
/// forward, up, right; yaw turns north towards east.
pub fn c_bn_from_euler(rpy_deg: [f64; 3]) -> Mat3 {
    let [r, p, y] = rpy_deg.map(|a| a * DEG);
    exp_so3(&Vec3::new(0.0, -y, 0.0)) * exp_so3(&Vec3::new(0.0, 0.0, p)) * exp_so3(&Vec3::new(r, 0.0, 0.0))
}

/// Inverse of [`c_bn_from_euler`].
pub fn euler_from_c_bn(c: &Mat3) -> [f64; 3] {
    let f = c.column(0);
    let yaw = f.z.atan2(f.x);
    let pitch = f.y.clamp(-1.0, 1.0).asin();
    let rest = exp_so3(&Vec3::new(0.0, 0.0, -pitch)) * exp_so3(&Vec3::new(0.0, yaw, 0.0)) * c;
    let roll = rest[(2, 1)].atan2(rest[(1, 1)]);
    [roll / DEG, pitch / DEG, yaw / DEG]
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-axis `sqrt(mean(e²))` over runs.
pub fn rmse(errors: &[[f64; 3]]) -> [f64; 3] {
    let n = errors.len().max(1) as f64;
    let mut s = [0.0; 3];
    for e in errors {
        for a in 0..3 {
            s[a] += e[a] * e[a];
        }
    }
    s.map(|x| (x / n).sqrt())
}

/// Per-run seed derived from the sweep seed, heading index and trial.
pub fn run_seed(seed: u64, heading_idx: usize, trial: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ heading_idx as u64) ^ trial as u64)
}

/// Filter output at one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochOutput {
    pub t: f64,
    pub nav: NavState,
    pub bg: Vec3,
    pub ba: Vec3,
    pub params: OdoParams,
    pub sigma: Vec21,
    pub yaw_sigma_deg: f64,
}

fn snapshot(fs: &FilterState, earth: &EarthParams) -> EpochOutput {
    EpochOutput {
        t: fs.nav.time,
        nav: fs.nav,
        bg: fs.bg,
        ba: fs.ba,
        params: fs.params,
        sigma: fs.sigmas(),
        yaw_sigma_deg: fs.yaw_sigma_deg(earth),
    }
}

/// Attitude handover applied once, right after the IMU sample at `t`.
#[derive(Clone, Copy, Debug)]
pub struct Handover {
    pub t: f64,
    pub q_eb: Quaternion,
    pub std_deg: f64,
}

/// Runs `fs` over `imu`, applying each measurement after the first IMU sample
/// at or past its time. Returns one output per measurement epoch, plus the
/// last sample when it carries no measurement.
pub fn run_filter(
    fs: &mut FilterState,
    imu: &[ImuSample],
    meas: &[Measurement],
    cfg: &FilterConfig,
    handover: Option<Handover>,
) -> Result<Vec<EpochOutput>, Error> {
    let earth = cfg.model.earth;
    let mut out = vec![];
    let mut j = 0;
    let mut handover = handover;
    let mut t_prev = fs.nav.time;
    for (k, s) in imu.iter().enumerate() {
        fs.propagate(s, s.t - t_prev, cfg)?;
        t_prev = s.t;
        if let Some(h) = handover.filter(|h| s.t + 1e-9 >= h.t) {
            fs.nav.q_eb = h.q_eb;
            let init = InitStds { attitude_deg: h.std_deg, ..cfg.init };
            let c = FilterConfig { init, ..*cfg };
            fs.p = init_covariance(fs.kind, &fs.nav, &c, fs.params.k);
            handover = None;
        }
        let mut updated = false;
        while j < meas.len() && meas[j].t <= s.t + 1e-9 {
            fs.update(&meas[j], cfg)?;
            j += 1;
            updated = true;
        }
        if updated || k + 1 == imu.len() {
            out.push(snapshot(fs, &earth));
        }
    }
    Ok(out)
}

/// Measurements for one scenario, built from synthesized data.
pub fn scenario_measurements(scenario: ScenarioKind, data: &SensorData, cfg: &FilterConfig) -> Vec<Measurement> {
    match scenario {
        ScenarioKind::Static => {
            data.zero_velocity.iter().map(|z| Measurement::zero_velocity(z.t, z.v, cfg.zero_velocity_sigma)).collect()
        }
        ScenarioKind::InMotion => odometer_measurements(&data.odometer, cfg),
    }
}

pub fn odometer_measurements(odo: &[OdoSample], cfg: &FilterConfig) -> Vec<Measurement> {
    let sigma = cfg.odometer_sigma_vec();
    odo.iter().map(|o| Measurement::odometer(o.t, o.pulse_rate, &sigma)).collect()
}

/// Initial odometer-parameter guess: nominal scale, zero mounting and lever.
pub fn initial_params(cfg: &Config) -> OdoParams {
    OdoParams { k: cfg.sensor.odo_scale, psi: 0.0, theta: 0.0, lever: Vec3::zeros() }
}

/// Everything needed to run one sweep point.
pub struct Scenario {
    pub trajectory: Trajectory,
    pub config: Config,
    pub filter: FilterConfig,
}

impl Scenario {
    pub fn new(config: &Config) -> Result<Self, Error> {
        config.validate()?;
        let s = &config.sensor;
        let trajectory = Trajectory::new(
            &config.scenario_profile()?,
            &config.earth,
            s.mount_yaw_deg * DEG,
            s.mount_pitch_deg * DEG,
            Vec3::from(s.lever),
        )?;
        Ok(Scenario { trajectory, config: config.clone(), filter: config.filter_config() })
    }

    /// Synthesized data for one run.
    pub fn data(&self, seed: u64) -> Result<SensorData, Error> {
        let mut t = self.trajectory.clone();
        t.profile.duration = self.config.duration();
        synthesize(&t, &self.config.sensor.to_spec(seed)?)
    }

    /// One filter over one data set with the given initial attitude error.
    pub fn run(
        &self,
        kind: ErrorModelKind,
        data: &SensorData,
        error_deg: [f64; 3],
    ) -> Result<Vec<EpochOutput>, Error> {
        let earth = &self.config.earth;
        let truth0 = self.trajectory.nav_state(0.0);
        let mut nav0 = truth0;
        nav0.q_eb = perturb_attitude(&truth0, error_deg, earth);
        let mut fs = FilterState::initialize(kind, nav0, initial_params(&self.config), &self.filter);
        let meas = scenario_measurements(self.config.sweep.scenario, data, &self.filter);
        let handover = self.config.sweep.coarse_attitude.map(|c| {
            let truth = self.trajectory.nav_state(c.time);
            Handover { t: c.time, q_eb: perturb_attitude(&truth, c.attitude_deg, earth), std_deg: c.std_deg }
        });
        let mut out = vec![snapshot(&fs, &self.filter.model.earth)];
        out.extend(run_filter(&mut fs, &data.imu, &meas, &self.filter, handover)?);
        Ok(out)
    }

    /// Nav-frame attitude errors of a run against truth, deg.
    pub fn errors(&self, run: &[EpochOutput]) -> Vec<[f64; 3]> {
        run.iter()
            .map(|e| attitude_error_nav(&e.nav, &self.trajectory.nav_state(e.t), &self.config.earth))
            .collect()
    }
}

struct RunRecord {
    epochs: Vec<f64>,
    errors: Vec<[f64; 3]>,
    yaw_sigma: Vec<f64>,
}

/// Runs the configured sweep. Each sweep point synthesizes one data set and
/// feeds it to every filter; points run in parallel.
pub fn run_sweep(config: &Config) -> Result<McReport, Error> {
    let sc = Scenario::new(config)?;
    let sweep = &config.sweep;
    let points: Vec<(usize, usize)> =
        (0..sweep.heading_errors_deg.len()).flat_map(|i| (0..sweep.trials).map(move |j| (i, j))).collect();
    let results: Vec<Result<Vec<Result<RunRecord, Error>>, Error>> = points
        .par_iter()
        .map(|&(i, j)| {
            let seed = run_seed(sweep.seed, i, j);
            let data = sc.data(seed)?;
            let err0 = [sweep.roll_pitch_error_deg, sweep.roll_pitch_error_deg, sweep.heading_errors_deg[i]];
            Ok(sweep
                .filters
                .iter()
                .map(|&kind| {
                    let run = sc.run(kind, &data, err0)?;
                    Ok(RunRecord {
                        epochs: run.iter().map(|e| e.t).collect(),
                        errors: sc.errors(&run),
                        yaw_sigma: run.iter().map(|e| e.yaw_sigma_deg).collect(),
                    })
                })
                .collect())
        })
        .collect();

    let mut report = McReport::new(sweep.convergence_threshold_deg);
    for (fi, &kind) in sweep.filters.iter().enumerate() {
        let mut fr = FilterReport::empty(kind);
        let mut by_epoch: Vec<Vec<[f64; 3]>> = vec![];
        let mut sum_sig: Vec<f64> = vec![];
        let mut sum_nees: Vec<f64> = vec![];
        for (&(i, j), res) in points.iter().zip(&results) {
            let rec = match res {
                Ok(v) => match &v[fi] {
                    Ok(r) => r,
                    Err(_) => {
                        fr.failed += 1;
                        continue;
                    }
                },
                Err(e) => return Err(Error::Fault(format!("sweep point ({i}, {j}): {e}"))),
            };
            if fr.epochs.is_empty() {
                fr.epochs = rec.epochs.clone();
                by_epoch = vec![vec![]; rec.epochs.len()];
                sum_sig = vec![0.0; rec.epochs.len()];
                sum_nees = vec![0.0; rec.epochs.len()];
            }
            for (k, e) in rec.errors.iter().enumerate() {
                by_epoch[k].push(*e);
                let s = rec.yaw_sigma[k];
                sum_sig[k] += s * s;
                sum_nees[k] += e[2] * e[2] / (s * s);
            }
            let t_end = *rec.epochs.last().unwrap_or(&0.0);
            let window: Vec<f64> = rec
                .epochs
                .iter()
                .zip(&rec.errors)
                .filter(|(t, _)| **t > t_end - sweep.terminal_window + 1e-9)
                .map(|(_, e)| e[2])
                .collect();
            let final_yaw = rec.errors.last().map_or(f64::NAN, |e| e[2]);
            let window_rms = if window.is_empty() {
                final_yaw.abs()
            } else {
                (window.iter().map(|y| y * y).sum::<f64>() / window.len() as f64).sqrt()
            };
            fr.terminal.push(TerminalRow {
                heading_deg: sweep.heading_errors_deg[i],
                trial: j,
                window_yaw_rms: window_rms,
                final_yaw,
            });
            fr.runs += 1;
        }
        let n = fr.runs.max(1) as f64;
        fr.rmse = by_epoch.iter().map(|e| rmse(e)).collect();
        fr.yaw_sigma = sum_sig.iter().map(|s| (s / n).sqrt()).collect();
        fr.anees = sum_nees.iter().map(|s| s / n).collect();
        report.filters.push(fr);
    }
    Ok(report)
}

/// Per-epoch replay output: estimates and 1σ.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayRow {
    pub t: f64,
    pub rpy_deg: [f64; 3],
    pub out: EpochOutput,
}

/// Initial filter state for a replay.
pub fn replay_initial_state(cfg: &Config, kind: ErrorModelKind, t0: f64) -> Result<FilterState, Error> {
    let r = &cfg.replay;
    let geo = GeoPosition::from_degrees(r.latitude_deg, r.longitude_deg, r.height);
    let r_e = lla_to_ecef(&geo, &cfg.earth);
    let c = c_en(&geo) * c_bn_from_euler(r.attitude_deg);
    let nav = NavState::new(Quaternion::from_matrix(&c), cfg.earth.omega_vec().cross(&r_e), r_e, t0);
    let params = OdoParams::new(r.odo_scale, 0.0, 0.0, Vec3::zeros())?;
    Ok(FilterState::initialize(kind, nav, params, &cfg.filter_config()))
}

/// Runs the replay filter over a recorded IMU and odometer log.
pub fn replay(imu: &[ImuSample], odo: &[OdoSample], cfg: &Config) -> Result<Vec<ReplayRow>, Error> {
    if imu.is_empty() {
        return Err(Error::InvalidInput("replay log has no IMU samples".into()));
    }
    let fcfg = cfg.filter_config();
    let dt = fcfg.mech.dt;
    let mut fs = replay_initial_state(cfg, cfg.replay.filter, imu[0].t - dt)?;
    let meas = odometer_measurements(odo, &fcfg);
    let out = run_filter(&mut fs, imu, &meas, &fcfg, None)?;
    Ok(out
        .into_iter()
        .map(|o| {
            let cne = c_en(&ecef_to_lla(&o.nav.r_e, &cfg.earth));
            ReplayRow { t: o.t, rpy_deg: euler_from_c_bn(&(cne.transpose() * o.nav.c_be())), out: o }
        })
        .collect())
}

pub fn replay_files(imu: &Path, odo: &Path, cfg: &Config) -> Result<Vec<ReplayRow>, Error> {
    replay(&crate::sim::read_imu_csv(imu)?, &crate::sim::read_odometer_csv(odo)?, cfg)
}

pub const REPLAY_HEADER: [&str; 34] = [
    "t", "roll", "pitch", "yaw", "bgx", "bgy", "bgz", "bax", "bay", "baz", "psi", "theta", "lx", "ly", "lz", "k",
    "s_att_x", "s_att_y", "s_att_z", "s_bgx", "s_bgy", "s_bgz", "s_bax", "s_bay", "s_baz", "s_psi", "s_theta", "s_lx",
    "s_ly", "s_lz", "s_k", "s_yaw", "lat", "lon",
];

/// Writes replay rows; angles in deg, biases in SI, 1σ in state units.
pub fn write_replay_csv(path: &Path, rows: &[ReplayRow], earth: &EarthParams) -> Result<(), Error> {
    use crate::errmodel::{ATT, BA, BG, LEVER, PSI, SCALE, THETA};
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(REPLAY_HEADER).map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        let o = &r.out;
        let geo = ecef_to_lla(&o.nav.r_e, earth);
        let s = &o.sigma;
        let mut v = vec![r.t, r.rpy_deg[0], r.rpy_deg[1], r.rpy_deg[2]];
        v.extend(o.bg.iter().chain(o.ba.iter()));
        v.extend([o.params.psi / DEG, o.params.theta / DEG]);
        v.extend(o.params.lever.iter());
        v.push(o.params.k);
        v.extend((0..3).map(|i| s[ATT + i] / DEG));
        v.extend((0..3).map(|i| s[BG + i]));
        v.extend((0..3).map(|i| s[BA + i]));
        v.extend([s[PSI] / DEG, s[THETA] / DEG]);
        v.extend((0..3).map(|i| s[LEVER + i]));
        v.extend([s[SCALE], o.yaw_sigma_deg, geo.latitude / DEG, geo.longitude / DEG]);
        w.write_record(v.iter().map(|x| x.to_string())).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
