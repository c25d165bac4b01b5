//! Analytic land-vehicle trajectories and sensor synthesis.
//!
//! The wheel (rear-axle) point moves on the tangent plane at the start point.
//! Vehicle axes are forward, up, right; heading is measured from north towards
//! east. The IMU sits at `r_m − C_b^e lᵇ`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::earth::{c_en, gravitation_e, lla_to_ecef, EarthParams, GeoPosition};
use crate::meas::c_bm;
use crate::mech::ImuSample;
use crate::triquat::{Mat3, NavState, Quaternion, Vec3};
use crate::Error;

const DEG: f64 = std::f64::consts::PI / 180.0;
/// Standard gravity used for μg conversions.
pub const G0: f64 = 9.80665;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Static,
    InMotion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartPose {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// m
    pub height: f64,
    pub heading_deg: f64,
    /// m/s
    pub speed: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        StartPose { latitude_deg: 30.0, longitude_deg: 114.0, height: 20.0, heading_deg: 0.0, speed: 0.0 }
    }
}

/// One piece of an in-motion profile. Positive turn angles turn right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Segment {
    Still { duration: f64 },
    Accelerate { duration: f64, speed: f64 },
    Cruise { duration: f64 },
    Turn { angle_deg: f64, rate_deg_s: f64, ramp: f64 },
    Wave { duration: f64, amplitude: f64, period: f64 },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match *self {
            Segment::Still { duration }
            | Segment::Accelerate { duration, .. }
            | Segment::Cruise { duration }
            | Segment::Wave { duration, .. } => duration,
            Segment::Turn { angle_deg, rate_deg_s, ramp } => angle_deg.abs() / rate_deg_s + ramp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryProfile {
    pub kind: ScenarioKind,
    /// s
    pub duration: f64,
    pub start: StartPose,
    pub segments: Vec<Segment>,
}

impl Default for TrajectoryProfile {
    fn default() -> Self {
        TrajectoryProfile::canonical_in_motion()
    }
}

impl TrajectoryProfile {
    pub fn stationary(duration: f64) -> Self {
        TrajectoryProfile { kind: ScenarioKind::Static, duration, start: StartPose::default(), segments: vec![] }
    }

    /// 600 s drive: still, accelerate, cruise, right turn, cruise, left turn,
    /// then a speed wave until the end.
    pub fn canonical_in_motion() -> Self {
        let turn = |angle_deg| Segment::Turn { angle_deg, rate_deg_s: 6.0, ramp: 1.0 };
        TrajectoryProfile {
            kind: ScenarioKind::InMotion,
            duration: 600.0,
            start: StartPose::default(),
            segments: vec![
                Segment::Still { duration: 10.0 },
                Segment::Accelerate { duration: 20.0, speed: 10.0 },
                Segment::Cruise { duration: 100.0 },
                turn(90.0),
                Segment::Cruise { duration: 100.0 },
                turn(-90.0),
                Segment::Wave { duration: 338.0, amplitude: 3.0, period: 60.0 },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.duration > 0.0) {
            return Err(Error::Config("profile.duration must be positive".into()));
        }
        match self.kind {
            ScenarioKind::Static => {
                if !self.segments.is_empty() || self.start.speed != 0.0 {
                    return Err(Error::Config("static profile takes no segments and zero speed".into()));
                }
            }
            ScenarioKind::InMotion => {
                let total: f64 = self.segments.iter().map(Segment::duration).sum();
                if (total - self.duration).abs() > 1e-9 * self.duration.max(1.0) {
                    return Err(Error::Config(format!(
                        "segments last {total} s but profile.duration is {} s",
                        self.duration
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum SpeedLaw {
    Hold(f64),
    Ramp { v0: f64, v1: f64 },
    Wave { v: f64, amp: f64, period: f64 },
}

#[derive(Clone, Copy, Debug)]
enum YawLaw {
    Hold,
    Ramp { r0: f64, r1: f64 },
    Rate(f64),
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    t0: f64,
    t1: f64,
    psi0: f64,
    speed: SpeedLaw,
    yaw: YawLaw,
}

fn s5(x: f64) -> (f64, f64) {
    let x2 = x * x;
    (x2 * x * (10.0 - 15.0 * x + 6.0 * x2), 30.0 * x2 * (1.0 - 2.0 * x + x2))
}

impl Piece {
    fn speed(&self, t: f64) -> (f64, f64) {
        let tau = t - self.t0;
        let len = self.t1 - self.t0;
        match self.speed {
            SpeedLaw::Hold(v) => (v, 0.0),
            SpeedLaw::Ramp { v0, v1 } => {
                let (s, ds) = s5(tau / len);
                (v0 + (v1 - v0) * s, (v1 - v0) * ds / len)
            }
            SpeedLaw::Wave { v, amp, period } => {
                let w = 2.0 * std::f64::consts::PI / period;
                let tw = 0.5 * period;
                let (g, dg) = if tau < tw {
                    let (g, dg) = s5(tau / tw);
                    (g, dg / tw)
                } else {
                    (1.0, 0.0)
                };
                let (sn, cs) = (w * tau).sin_cos();
                (v + amp * sn * g, amp * (w * cs * g + sn * dg))
            }
        }
    }

    /// Heading, its rate and its acceleration.
    fn yaw(&self, t: f64) -> (f64, f64, f64) {
        let tau = t - self.t0;
        let len = self.t1 - self.t0;
        match self.yaw {
            YawLaw::Hold => (self.psi0, 0.0, 0.0),
            YawLaw::Rate(r) => (self.psi0 + r * tau, r, 0.0),
            YawLaw::Ramp { r0, r1 } => {
                let x = tau / len;
                let x2 = x * x;
                let d = r1 - r0;
                (
                    self.psi0 + r0 * tau + d * len * (x2 * x - 0.5 * x2 * x2),
                    r0 + d * x2 * (3.0 - 2.0 * x),
                    d * 6.0 * x * (1.0 - x) / len,
                )
            }
        }
    }

    fn end_speed(&self) -> f64 {
        self.speed(self.t1).0
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    t0: f64,
    piece: usize,
    north: f64,
    east: f64,
    dist: f64,
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

const CELL: f64 = 0.5;

/// Kinematics of the IMU point at one instant.
#[derive(Clone, Copy, Debug)]
pub struct Kinematics {
    pub t: f64,
    pub c_be: Mat3,
    /// ECEF position, velocity and acceleration relative to the earth frame.
    pub r: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    /// `ω_eb` and its derivative in the body frame.
    pub w_eb: Vec3,
    pub dw_eb: Vec3,
    /// Wheel-point speed, m/s.
    pub speed: f64,
    /// Travelled distance, m.
    pub distance: f64,
    /// rad, from north towards east
    pub heading: f64,
}

/// Closed-form evaluation of a [`TrajectoryProfile`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub profile: TrajectoryProfile,
    pub earth: EarthParams,
    pub c_bm: Mat3,
    pub lever: Vec3,
    r0: Vec3,
    c_ne0: Mat3,
    pieces: Vec<Piece>,
    cells: Vec<Cell>,
}

impl Trajectory {
    pub fn new(
        profile: &TrajectoryProfile,
        earth: &EarthParams,
        mount_psi: f64,
        mount_theta: f64,
        lever: Vec3,
    ) -> Result<Self, Error> {
        profile.validate()?;
        let s = &profile.start;
        let geo = GeoPosition::from_degrees(s.latitude_deg, s.longitude_deg, s.height);
        let pieces = build_pieces(profile)?;
        let mut tr = Trajectory {
            profile: profile.clone(),
            earth: *earth,
            c_bm: c_bm(mount_psi, mount_theta),
            lever,
            r0: lla_to_ecef(&geo, earth),
            c_ne0: c_en(&geo),
            pieces,
            cells: vec![],
        };
        tr.build_cells();
        Ok(tr)
    }

    fn build_cells(&mut self) {
        let (mut n, mut e, mut d) = (0.0, 0.0, 0.0);
        for (i, p) in self.pieces.iter().enumerate() {
            let k = ((p.t1 - p.t0) / CELL).ceil().max(1.0) as usize;
            for j in 0..k {
                let a = p.t0 + (p.t1 - p.t0) * j as f64 / k as f64;
                let b = if j + 1 == k { p.t1 } else { p.t0 + (p.t1 - p.t0) * (j + 1) as f64 / k as f64 };
                self.cells.push(Cell { t0: a, piece: i, north: n, east: e, dist: d });
                let (dn, de, dd) = planar_integral(p, a, b);
                n += dn;
                e += de;
                d += dd;
            }
        }
    }

    pub fn duration(&self) -> f64 {
        self.profile.duration
    }

    fn locate(&self, t: f64) -> &Cell {
        let i = self.cells.partition_point(|c| c.t0 <= t);
        &self.cells[i.saturating_sub(1)]
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        let cell = self.locate(t);
        let p = &self.pieces[cell.piece];
        let (dn, de, dd) = planar_integral(p, cell.t0, t);
        let (v, dv) = p.speed(t);
        let (psi, dpsi, ddpsi) = p.yaw(t);
        let (sn, cs) = psi.sin_cos();
        let fwd = Vec3::new(cs, 0.0, sn);
        let right = Vec3::new(-sn, 0.0, cs);
        let c_mn = Mat3::from_columns(&[fwd, Vec3::y(), right]);

        let pos_n = Vec3::new(cell.north + dn, 0.0, cell.east + de);
        let r_m = self.r0 + self.c_ne0 * pos_n;
        let v_m = self.c_ne0 * (fwd * v);
        let a_m = self.c_ne0 * (fwd * dv + right * (v * dpsi));

        let c_be = self.c_ne0 * c_mn * self.c_bm;
        let c_mb = self.c_bm.transpose();
        let w = c_mb * Vec3::new(0.0, -dpsi, 0.0);
        let dw = c_mb * Vec3::new(0.0, -ddpsi, 0.0);
        let l = &self.lever;
        Kinematics {
            t,
            c_be,
            r: r_m - c_be * l,
            v: v_m - c_be * w.cross(l),
            a: a_m - c_be * (dw.cross(l) + w.cross(&w.cross(l))),
            w_eb: w,
            dw_eb: dw,
            speed: v,
            distance: cell.dist + dd,
            heading: psi,
        }
    }

    /// True navigation state of the IMU at `t`.
    pub fn nav_state(&self, t: f64) -> NavState {
        let k = self.kinematics(t);
        let w = self.earth.omega_vec();
        NavState::new(Quaternion::from_matrix(&k.c_be), k.v + w.cross(&k.r), k.r, t)
    }

    /// Noise-free angular rate and specific force at `t`.
    pub fn imu_at(&self, t: f64) -> Result<(Vec3, Vec3), Error> {
        let k = self.kinematics(t);
        let w_ie = self.earth.omega_vec();
        let cbe_t = k.c_be.transpose();
        let grav = gravitation_e(&k.r, &self.earth)?;
        let f = cbe_t * (k.a + 2.0 * w_ie.cross(&k.v) + w_ie.cross(&w_ie.cross(&k.r)) - grav);
        Ok((k.w_eb + cbe_t * w_ie, f))
    }

    /// Interval means of the IMU outputs over `(t − dt, t]`.
    pub fn imu_mean(&self, t: f64, dt: f64) -> Result<(Vec3, Vec3), Error> {
        const X: f64 = 0.774_596_669_241_483_4;
        let mid = t - 0.5 * dt;
        let mut g = Vec3::zeros();
        let mut f = Vec3::zeros();
        for (x, wt) in [(-X, 5.0 / 18.0), (0.0, 8.0 / 18.0), (X, 5.0 / 18.0)] {
            let (gi, fi) = self.imu_at(mid + 0.5 * dt * x)?;
            g += gi * wt;
            f += fi * wt;
        }
        Ok((g, f))
    }
}

fn planar_integral(p: &Piece, a: f64, b: f64) -> (f64, f64, f64) {
    if b <= a {
        return (0.0, 0.0, 0.0);
    }
    let (h, m) = (0.5 * (b - a), 0.5 * (a + b));
    let (mut n, mut e, mut d) = (0.0, 0.0, 0.0);
    for (x, w) in GL8 {
        let t = m + h * x;
        let v = p.speed(t).0;
        let (sn, cs) = p.yaw(t).0.sin_cos();
        n += w * v * cs;
        e += w * v * sn;
        d += w * v;
    }
    (n * h, e * h, d * h)
}

fn push(out: &mut Vec<Piece>, t: &mut f64, psi: &mut f64, v: &mut f64, len: f64, speed: SpeedLaw, yaw: YawLaw) {
    let p = Piece { t0: *t, t1: *t + len, psi0: *psi, speed, yaw };
    *psi = p.yaw(p.t1).0;
    *v = p.end_speed();
    *t = p.t1;
    out.push(p);
}

fn build_pieces(profile: &TrajectoryProfile) -> Result<Vec<Piece>, Error> {
    let start = &profile.start;
    let mut psi = start.heading_deg * DEG;
    let mut v = start.speed;
    let mut t = 0.0;
    let mut out = vec![];
    if start.speed < 0.0 {
        return Err(Error::Config("start.speed must be non-negative".into()));
    }
    if profile.kind == ScenarioKind::Static {
        out.push(Piece { t0: 0.0, t1: profile.duration, psi0: psi, speed: SpeedLaw::Hold(0.0), yaw: YawLaw::Hold });
        return Ok(out);
    }
    for seg in &profile.segments {
        let len = seg.duration();
        if !(len > 0.0) {
            return Err(Error::Config(format!("segment {seg:?} has non-positive duration")));
        }
        match *seg {
            Segment::Still { .. } => {
                if v != 0.0 {
                    return Err(Error::Config(format!("still segment at t = {t} s while moving at {v} m/s")));
                }
                push(&mut out, &mut t, &mut psi, &mut v, len, SpeedLaw::Hold(0.0), YawLaw::Hold);
            }
            Segment::Cruise { .. } => {
                let law = SpeedLaw::Hold(v);
                push(&mut out, &mut t, &mut psi, &mut v, len, law, YawLaw::Hold);
            }
            Segment::Accelerate { speed, .. } => {
                if speed < 0.0 {
                    return Err(Error::Config(format!("negative target speed {speed}")));
                }
                let law = SpeedLaw::Ramp { v0: v, v1: speed };
                push(&mut out, &mut t, &mut psi, &mut v, len, law, YawLaw::Hold);
            }
            Segment::Wave { amplitude, period, .. } => {
                if amplitude > v || amplitude < 0.0 || !(period > 0.0) {
                    return Err(Error::Config(format!("wave amplitude {amplitude} would give negative speed")));
                }
                let law = SpeedLaw::Wave { v, amp: amplitude, period };
                push(&mut out, &mut t, &mut psi, &mut v, len, law, YawLaw::Hold);
            }
            Segment::Turn { angle_deg, rate_deg_s, ramp } => {
                if !(rate_deg_s > 0.0) || ramp < 0.0 || angle_deg.abs() / rate_deg_s < ramp {
                    return Err(Error::Config(format!("infeasible turn {seg:?}")));
                }
                let r = rate_deg_s * DEG * angle_deg.signum();
                let hold = SpeedLaw::Hold(v);
                if ramp > 0.0 {
                    push(&mut out, &mut t, &mut psi, &mut v, ramp, hold, YawLaw::Ramp { r0: 0.0, r1: r });
                }
                push(&mut out, &mut t, &mut psi, &mut v, len - 2.0 * ramp, hold, YawLaw::Rate(r));
                if ramp > 0.0 {
                    push(&mut out, &mut t, &mut psi, &mut v, ramp, hold, YawLaw::Ramp { r0: r, r1: 0.0 });
                }
            }
        }
    }
    if let Some(last) = out.last_mut() {
        last.t1 = profile.duration;
    }
    Ok(out)
}

/// Sensor error settings in config units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub gyro_bias_deg_h: f64,
    pub gyro_arw_deg_rt_h: f64,
    pub accel_bias_ug: f64,
    pub accel_vrw_ug_rt_hz: f64,
    /// pulses/m
    pub odo_scale: f64,
    pub mount_yaw_deg: f64,
    pub mount_pitch_deg: f64,
    /// m, body frame
    pub lever: [f64; 3],
    pub imu_rate_hz: f64,
    pub meas_rate_hz: f64,
    /// pulses/s
    pub odo_noise: f64,
    /// m/s
    pub zero_velocity_noise: f64,
    pub quantize_odometer: bool,
    /// Draw each bias per run from N(0, spec²) instead of using the spec value.
    pub random_biases: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            gyro_bias_deg_h: 0.005,
            gyro_arw_deg_rt_h: 0.001,
            accel_bias_ug: 30.0,
            accel_vrw_ug_rt_hz: 5.0,
            odo_scale: 59.8,
            mount_yaw_deg: 3.0,
            mount_pitch_deg: 2.0,
            lever: [1.0, 0.5, 0.8],
            imu_rate_hz: 100.0,
            meas_rate_hz: 1.0,
            odo_noise: 2.0,
            zero_velocity_noise: 0.01,
            quantize_odometer: false,
            random_biases: true,
        }
    }
}

impl SensorConfig {
    pub fn to_spec(&self, seed: u64) -> Result<SensorSpec, Error> {
        let s = SensorSpec {
            gyro_bias: self.gyro_bias_deg_h * DEG / 3600.0,
            gyro_arw: self.gyro_arw_deg_rt_h * DEG / 60.0,
            accel_bias: self.accel_bias_ug * 1e-6 * G0,
            accel_vrw: self.accel_vrw_ug_rt_hz * 1e-6 * G0,
            odo_k: self.odo_scale,
            mount_psi: self.mount_yaw_deg * DEG,
            mount_theta: self.mount_pitch_deg * DEG,
            lever: Vec3::from(self.lever),
            imu_rate: self.imu_rate_hz,
            meas_rate: self.meas_rate_hz,
            odo_noise: self.odo_noise,
            zero_velocity_noise: self.zero_velocity_noise,
            quantize_odometer: self.quantize_odometer,
            random_biases: self.random_biases,
            seed,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Sensor error model in SI units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorSpec {
    /// rad/s
    pub gyro_bias: f64,
    /// rad/√s
    pub gyro_arw: f64,
    /// m/s²
    pub accel_bias: f64,
    /// m/s²/√Hz
    pub accel_vrw: f64,
    pub odo_k: f64,
    pub mount_psi: f64,
    pub mount_theta: f64,
    pub lever: Vec3,
    pub imu_rate: f64,
    pub meas_rate: f64,
    pub odo_noise: f64,
    pub zero_velocity_noise: f64,
    pub quantize_odometer: bool,
    pub random_biases: bool,
    pub seed: u64,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), Error> {
        let noise = [self.gyro_bias, self.gyro_arw, self.accel_bias, self.accel_vrw, self.odo_noise, self.zero_velocity_noise];
        if noise.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Config("sensor noise densities must be non-negative".into()));
        }
        if !(self.odo_k > 0.0) {
            return Err(Error::Config("sensor.odo_scale must be positive".into()));
        }
        if !(self.imu_rate >= 10.0) || !(self.meas_rate > 0.0) {
            return Err(Error::Config("sensor rates out of range".into()));
        }
        let ratio = self.imu_rate / self.meas_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Config("imu_rate_hz must be a multiple of meas_rate_hz".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.imu_rate
    }

    /// IMU samples between measurement epochs.
    pub fn meas_stride(&self) -> usize {
        (self.imu_rate / self.meas_rate).round() as usize
    }

    /// Noise-free copy.
    pub fn noiseless(&self) -> Self {
        SensorSpec {
            gyro_bias: 0.0,
            gyro_arw: 0.0,
            accel_bias: 0.0,
            accel_vrw: 0.0,
            odo_noise: 0.0,
            zero_velocity_noise: 0.0,
            quantize_odometer: false,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdoSample {
    pub t: f64,
    /// pulses/s
    pub pulse_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroVelocitySample {
    pub t: f64,
    pub v: Vec3,
}

/// Synthesized sensor streams. Measurement epochs fall on every
/// [`SensorSpec::meas_stride`]-th IMU sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorData {
    pub imu: Vec<ImuSample>,
    pub odometer: Vec<OdoSample>,
    pub zero_velocity: Vec<ZeroVelocitySample>,
    pub gyro_bias: Vec3,
    pub accel_bias: Vec3,
}

fn normal3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    Vec3::new(n(), n(), n()) * sigma
}

fn sample_count(traj: &Trajectory, spec: &SensorSpec) -> usize {
    (traj.duration() * spec.imu_rate + 1e-6).floor() as usize
}

fn sample_time(k: usize, spec: &SensorSpec) -> f64 {
    k as f64 / spec.imu_rate
}

/// Truth at every IMU epoch, `t = 0, dt, …`.
pub fn gen_truth(traj: &Trajectory, spec: &SensorSpec) -> Vec<NavState> {
    let n = sample_count(traj, spec);
    let mut out: Vec<NavState> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut s = traj.nav_state(sample_time(k, spec));
        if let Some(prev) = out.last() {
            if s.q_eb.dot(&prev.q_eb) < 0.0 {
                s.q_eb = -s.q_eb;
            }
        }
        out.push(s);
    }
    out
}

/// IMU, odometer and zero-velocity streams for one run.
pub fn synthesize(traj: &Trajectory, spec: &SensorSpec) -> Result<SensorData, Error> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (gyro_bias, accel_bias) = if spec.random_biases {
        (normal3(&mut rng, spec.gyro_bias), normal3(&mut rng, spec.accel_bias))
    } else {
        (Vec3::repeat(spec.gyro_bias), Vec3::repeat(spec.accel_bias))
    };
    let dt = spec.dt();
    let n = sample_count(traj, spec);
    let (sg, sa) = (spec.gyro_arw / dt.sqrt(), spec.accel_vrw / dt.sqrt());
    let stride = spec.meas_stride();
    let mut imu = Vec::with_capacity(n);
    let mut odometer = vec![];
    let mut zero_velocity = vec![];
    let mut last_count = 0.0;
    for k in 1..=n {
        let t = sample_time(k, spec);
        let (g, f) = traj.imu_mean(t, dt)?;
        let g = g + gyro_bias + normal3(&mut rng, sg);
        let f = f + accel_bias + normal3(&mut rng, sa);
        imu.push(ImuSample::new(t, g, f));
        if k % stride == 0 {
            let kin = traj.kinematics(t);
            let rate = if spec.quantize_odometer {
                let count = (spec.odo_k * kin.distance).floor();
                let r = (count - last_count) * spec.meas_rate;
                last_count = count;
                r
            } else {
                let e: f64 = StandardNormal.sample(&mut rng);
                spec.odo_k * kin.speed + e * spec.odo_noise
            };
            odometer.push(OdoSample { t, pulse_rate: rate });
            zero_velocity.push(ZeroVelocitySample { t, v: kin.v + normal3(&mut rng, spec.zero_velocity_noise) });
        }
    }
    Ok(SensorData { imu, odometer, zero_velocity, gyro_bias, accel_bias })
}

/// IMU stream of [`synthesize`].
pub fn synth_imu(traj: &Trajectory, spec: &SensorSpec) -> Result<Vec<ImuSample>, Error> {
    Ok(synthesize(traj, spec)?.imu)
}

pub fn synth_odometer(traj: &Trajectory, spec: &SensorSpec) -> Result<Vec<OdoSample>, Error> {
    Ok(synthesize(traj, spec)?.odometer)
}

/// Noise-free odometer triple at the wheel point: `(K·speed, 0, 0)`.
pub fn odometer_truth(traj: &Trajectory, spec: &SensorSpec, t: f64) -> Vec3 {
    let k = traj.kinematics(t);
    let v_b = k.c_be.transpose() * k.v + k.w_eb.cross(&traj.lever);
    let mut y = traj.c_bm * v_b;
    y.x *= spec.odo_k;
    y
}

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        k => parse_err(line, format!("{k:?}")),
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<f64>)>, Error> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let got: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(parse_err(1, format!("expected header {}, got {}", header.join(","), got.join(","))));
    }
    let mut out = vec![];
    let mut last_t = f64::NEG_INFINITY;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, got {}", header.len(), rec.len())));
        }
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| parse_err(line, "non-numeric or non-finite field"))?;
        if !(vals[0] > last_t) {
            return Err(parse_err(line, format!("time {} does not increase", vals[0])));
        }
        last_t = vals[0];
        out.push((line, vals));
    }
    Ok(out)
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const IMU_HEADER: [&str; 7] = ["t", "gx", "gy", "gz", "ax", "ay", "az"];
pub const ODO_HEADER: [&str; 2] = ["t", "pulse_rate"];
pub const TRUTH_HEADER: [&str; 11] = ["t", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "x", "y", "z"];

pub fn write_imu_csv(path: &Path, imu: &[ImuSample]) -> Result<(), Error> {
    write_rows(
        path,
        &IMU_HEADER,
        imu.iter().map(|s| vec![s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z]),
    )
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>, Error> {
    Ok(read_rows(path, &IMU_HEADER)?
        .into_iter()
        .map(|(_, v)| ImuSample::new(v[0], Vec3::new(v[1], v[2], v[3]), Vec3::new(v[4], v[5], v[6])))
        .collect())
}

pub fn write_odometer_csv(path: &Path, odo: &[OdoSample]) -> Result<(), Error> {
    write_rows(path, &ODO_HEADER, odo.iter().map(|s| vec![s.t, s.pulse_rate]))
}

pub fn read_odometer_csv(path: &Path) -> Result<Vec<OdoSample>, Error> {
    Ok(read_rows(path, &ODO_HEADER)?.into_iter().map(|(_, v)| OdoSample { t: v[0], pulse_rate: v[1] }).collect())
}

/// Truth as `t, q_eb (w,x,y,z), v′, rᵉ`.
pub fn write_truth_csv(path: &Path, truth: &[NavState]) -> Result<(), Error> {
    write_rows(
        path,
        &TRUTH_HEADER,
        truth.iter().map(|s| {
            let q = s.q_eb;
            vec![s.time, q.w, q.x, q.y, q.z, s.v_prime.x, s.v_prime.y, s.v_prime.z, s.r_e.x, s.r_e.y, s.r_e.z]
        }),
    )
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<NavState>, Error> {
    Ok(read_rows(path, &TRUTH_HEADER)?
        .into_iter()
        .map(|(_, v)| {
            NavState::new(
                Quaternion::new(v[1], v[2], v[3], v[4]),
                Vec3::new(v[5], v[6], v[7]),
                Vec3::new(v[8], v[9], v[10]),
                v[0],
            )
        })
        .collect())
}
