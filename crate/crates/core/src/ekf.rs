//! Error-state EKF over the 21-state layout, for every [`ErrorModelKind`].
//!
//! Propagation uses `Φ = I + FΔt + ½(FΔt)²` and `Q_d = GQGᵀΔt`; updates use
//! the Joseph form. The estimated error `δx = K(ẑ − z)` is injected into the
//! nominal state and reset after every update.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::earth::{c_en, ecef_to_lla, EarthParams};
use crate::errmodel::{
    build_system, jacobian_from_traditional, ErrorModelKind, ErrorState21, Mat21, ModelConfig, Vec21, ATT, BA, BG,
    LEVER, N, POS, PSI, SCALE, VEL,
};
use crate::meas::{jacobian, predict, Mat3x21, Measurement, MeasurementKind, OdoParams};
use crate::mech::{mech_step_trident, ImuSample, MechConfig};
use crate::so3::{exp_so3, log_so3};
use crate::triquat::{pack, tq_inject, unpack, Mat3, NavState, Quaternion, Side, Vec3};
use crate::Error;

const DEG: f64 = std::f64::consts::PI / 180.0;
const G0: f64 = 9.80665;
const NS: usize = 15;

/// Initial 1σ uncertainties in traditional coordinates, in config units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitStds {
    /// deg, per earth-frame axis
    pub attitude_deg: f64,
    /// m/s
    pub velocity: f64,
    /// m
    pub position: f64,
    /// deg/h
    pub gyro_bias_deg_h: f64,
    /// μg
    pub accel_bias_ug: f64,
    /// deg, both mounting angles
    pub mounting_deg: f64,
    /// m per axis
    pub lever: f64,
    /// fraction of the nominal scale factor
    pub scale_frac: f64,
}

impl Default for InitStds {
    fn default() -> Self {
        InitStds {
            attitude_deg: 180.0,
            velocity: 0.1,
            position: 10.0,
            gyro_bias_deg_h: 0.005,
            accel_bias_ug: 30.0,
            mounting_deg: 5.0,
            lever: 1.0,
            scale_frac: 0.02,
        }
    }
}

/// How a right-side correction moves position and velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RightRetraction {
    /// Full trident product: `r` and `v′` are rotated with the attitude.
    #[default]
    Exact,
    /// Translation gets only the first-order term `φ × x`.
    FirstOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub init: InitStds,
    /// m/s
    pub zero_velocity_sigma: f64,
    /// pulses/s, m/s, m/s
    pub odometer_sigma: [f64; 3],
    /// Mahalanobis gate in σ; `None` disables gating.
    pub gate_sigma: Option<f64>,
    pub right_retraction: RightRetraction,
    pub model: ModelConfig,
    pub mech: MechConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            init: InitStds::default(),
            zero_velocity_sigma: 0.01,
            odometer_sigma: [2.0, 0.05, 0.05],
            gate_sigma: None,
            right_retraction: RightRetraction::Exact,
            model: ModelConfig::default(),
            mech: MechConfig::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.model.earth.validate()?;
        self.mech.validate()?;
        let i = &self.init;
        let stds = [
            i.attitude_deg,
            i.velocity,
            i.position,
            i.gyro_bias_deg_h,
            i.accel_bias_ug,
            i.mounting_deg,
            i.lever,
            i.scale_frac,
        ];
        if stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("filter.init stds must be positive".into()));
        }
        if !(self.zero_velocity_sigma > 0.0) || self.odometer_sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("measurement sigmas must be positive".into()));
        }
        Ok(())
    }

    pub fn odometer_sigma_vec(&self) -> Vec3 {
        Vec3::from(self.odometer_sigma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    Gated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub kind: ErrorModelKind,
    pub nav: NavState,
    pub params: OdoParams,
    pub bg: Vec3,
    pub ba: Vec3,
    pub p: Mat21,
    prev_raw: Option<ImuSample>,
    last_corrected: Option<ImuSample>,
}

/// Diagonal covariance in traditional coordinates.
pub fn traditional_covariance(cfg: &FilterConfig, nominal_scale: f64) -> Mat21 {
    let i = &cfg.init;
    let mut d = Vec21::zeros();
    let set = |d: &mut Vec21, at: usize, n: usize, s: f64| {
        for k in 0..n {
            d[at + k] = s * s;
        }
    };
    set(&mut d, ATT, 3, i.attitude_deg * DEG);
    set(&mut d, VEL, 3, i.velocity);
    set(&mut d, POS, 3, i.position);
    set(&mut d, BG, 3, i.gyro_bias_deg_h * DEG / 3600.0);
    set(&mut d, BA, 3, i.accel_bias_ug * 1e-6 * G0);
    set(&mut d, PSI, 2, i.mounting_deg * DEG);
    set(&mut d, LEVER, 3, i.lever);
    set(&mut d, SCALE, 1, i.scale_frac * nominal_scale);
    Mat21::from_diagonal(&d)
}

/// Initial covariance for `kind`, transformed from traditional coordinates.
pub fn init_covariance(kind: ErrorModelKind, nav: &NavState, cfg: &FilterConfig, nominal_scale: f64) -> Mat21 {
    let p = traditional_covariance(cfg, nominal_scale);
    let j = jacobian_from_traditional(kind, nav, &cfg.model.earth);
    let out = j * p * j.transpose();
    (out + out.transpose()) * 0.5
}

impl FilterState {
    pub fn new(kind: ErrorModelKind, nav: NavState, params: OdoParams, p: Mat21) -> Self {
        FilterState { kind, nav, params, bg: Vec3::zeros(), ba: Vec3::zeros(), p, prev_raw: None, last_corrected: None }
    }

    /// Filter initialized with [`init_covariance`] and zero bias estimates.
    pub fn initialize(kind: ErrorModelKind, nav: NavState, params: OdoParams, cfg: &FilterConfig) -> Self {
        let p = init_covariance(kind, &nav, cfg, params.k);
        FilterState::new(kind, nav, params, p)
    }

    pub fn corrected(&self, raw: &ImuSample) -> ImuSample {
        ImuSample::new(raw.t, raw.gyro - self.bg, raw.accel - self.ba)
    }

    /// Most recent bias-corrected IMU sample, if any.
    pub fn last_imu(&self) -> Option<&ImuSample> {
        self.last_corrected.as_ref()
    }

    pub fn propagate(&mut self, raw: &ImuSample, dt: f64, cfg: &FilterConfig) -> Result<(), Error> {
        if !(dt > 0.0) || !raw.is_finite() {
            return Err(Error::InvalidInput("propagate needs dt > 0 and a finite sample".into()));
        }
        let imu = self.corrected(raw);
        let prev = self.prev_raw.map(|p| self.corrected(&p));
        let sys = build_system(self.kind, &self.nav, &imu, &cfg.model)?;
        let mech = MechConfig { dt, ..cfg.mech };
        self.nav = mech_step_trident(&self.nav, &imu, prev.as_ref(), &mech, &cfg.model.earth);
        self.prev_raw = Some(*raw);
        self.last_corrected = Some(imu);

        let f: SMatrix<f64, NS, NS> = sys.f.fixed_view::<NS, NS>(0, 0) * dt;
        let phi = SMatrix::<f64, NS, NS>::identity() + f + f * f * 0.5;
        let mut gs: SMatrix<f64, NS, 12> = sys.g.fixed_view::<NS, 12>(0, 0).into_owned();
        for k in 0..12 {
            let s = (sys.q[(k, k)] * dt).sqrt();
            gs.column_mut(k).scale_mut(s);
        }
        let p_ss: SMatrix<f64, NS, NS> = self.p.fixed_view::<NS, NS>(0, 0).into_owned();
        let p_sp: SMatrix<f64, NS, 6> = self.p.fixed_view::<NS, 6>(0, NS).into_owned();
        let new_ss = phi * p_ss * phi.transpose() + gs * gs.transpose();
        let new_sp = phi * p_sp;
        self.p.fixed_view_mut::<NS, NS>(0, 0).copy_from(&new_ss);
        self.p.fixed_view_mut::<NS, 6>(0, NS).copy_from(&new_sp);
        self.p.fixed_view_mut::<6, NS>(NS, 0).copy_from(&new_sp.transpose());
        symmetrize(&mut self.p);
        if !self.p.iter().all(|x| x.is_finite()) || !self.nav.is_finite() {
            return Err(Error::Fault(format!("non-finite state after propagation at t = {}", self.nav.time)));
        }
        Ok(())
    }

    /// Predicted measurement and its Jacobian at the current estimate.
    pub fn linearize(&self, kind: MeasurementKind, cfg: &FilterConfig) -> (Vec3, Mat3x21) {
        let earth = &cfg.model.earth;
        let imu = self.last_corrected.unwrap_or_else(|| ImuSample::new(self.nav.time, Vec3::zeros(), Vec3::zeros()));
        (
            predict(kind, &self.nav, &imu, &self.params, earth),
            jacobian(kind, self.kind, &self.nav, &imu, &self.params, earth),
        )
    }

    pub fn update(&mut self, m: &Measurement, cfg: &FilterConfig) -> Result<UpdateOutcome, Error> {
        let (zhat, h) = self.linearize(m.kind, cfg);
        self.update_with(m, &zhat, &h, cfg)
    }

    /// Joseph-form update with an explicit prediction and Jacobian.
    pub fn update_with(
        &mut self,
        m: &Measurement,
        zhat: &Vec3,
        h: &Mat3x21,
        cfg: &FilterConfig,
    ) -> Result<UpdateOutcome, Error> {
        let nu = zhat - m.z;
        if !nu.iter().all(|x| x.is_finite()) {
            return Err(Error::Fault("non-finite innovation".into()));
        }
        let pht = self.p * h.transpose();
        let s = h * pht + m.r;
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Fault(format!("innovation covariance not positive definite at t = {}", m.t)))?;
        if let Some(gate) = cfg.gate_sigma {
            let d2 = nu.dot(&chol.solve(&nu));
            if d2 > gate * gate {
                return Ok(UpdateOutcome::Gated);
            }
        }
        let k: SMatrix<f64, N, 3> = chol.solve(&pht.transpose()).transpose();
        let dx: Vec21 = k * nu;
        let ikh = Mat21::identity() - k * h;
        self.p = ikh * self.p * ikh.transpose() + k * m.r * k.transpose();
        symmetrize(&mut self.p);
        self.inject_and_reset(&ErrorState21(dx), cfg);
        if !self.p.iter().all(|x| x.is_finite()) || !self.nav.is_finite() {
            return Err(Error::Fault(format!("non-finite state after update at t = {}", m.t)));
        }
        Ok(UpdateOutcome::Applied)
    }

    /// Apply an estimated error to the nominal state; the error is then zero.
    pub fn inject_and_reset(&mut self, dx: &ErrorState21, cfg: &FilterConfig) {
        let mut d = dx.0;
        if let Some(t) = self.kind.sign_transform() {
            d.component_mul_assign(&t);
        }
        let d = ErrorState21(d);
        let earth = &cfg.model.earth;
        match self.kind.base().1 {
            Some(side) => {
                let t = pack(&self.nav.q_eb, &self.nav.v_prime, &self.nav.r_e);
                let mut new = unpack(&tq_inject(&t, &d.triple(), side), self.nav.time);
                if side == Side::Right && cfg.right_retraction == RightRetraction::FirstOrder {
                    // keep the translational part linear in the rotation vector
                    let rot = new.c_be() * self.nav.c_be().transpose();
                    let phi = log_so3(&rot);
                    let lin = |x: &Vec3, y: &Vec3| y - rot * x + x + phi.cross(x);
                    new.r_e = lin(&self.nav.r_e, &new.r_e);
                    new.v_prime = lin(&self.nav.v_prime, &new.v_prime);
                }
                self.nav = new;
            }
            None => self.nav = inject_traditional(&self.nav, &d, earth),
        }
        self.bg -= d.bg();
        self.ba -= d.ba();
        self.params.psi -= d.psi();
        self.params.theta -= d.theta();
        self.params.lever -= d.lever();
        self.params.k -= d.scale();
    }

    /// Attitude covariance rotated into the navigation frame (N, U, E).
    pub fn attitude_cov_nav(&self, earth: &EarthParams) -> Mat3 {
        let geo = ecef_to_lla(&self.nav.r_e, earth);
        let cne = c_en(&geo);
        let pa: Mat3 = self.p.fixed_view::<3, 3>(ATT, ATT).into_owned();
        let m = match self.kind.base().0 {
            ErrorModelKind::LeftTrident => cne.transpose() * self.nav.c_be(),
            _ => cne.transpose(),
        };
        m * pa * m.transpose()
    }

    /// 1σ heading uncertainty, deg.
    pub fn yaw_sigma_deg(&self, earth: &EarthParams) -> f64 {
        self.attitude_cov_nav(earth)[(1, 1)].max(0.0).sqrt() / DEG
    }

    /// 1σ of every state, in state units.
    pub fn sigmas(&self) -> Vec21 {
        self.p.diagonal().map(|x| x.max(0.0).sqrt())
    }
}

fn symmetrize(p: &mut Mat21) {
    let t = (*p + p.transpose()) * 0.5;
    *p = t;
}

fn inject_traditional(nav: &NavState, d: &ErrorState21, earth: &EarthParams) -> NavState {
    let w = earth.omega_vec();
    let c = exp_so3(&-d.att()) * nav.c_be();
    let q = Quaternion::from_matrix(&c);
    let q = if q.dot(&nav.q_eb) < 0.0 { -q } else { q };
    let r = nav.r_e - d.pos();
    let v_e = nav.v_e(&w) - d.vel();
    NavState::new(q, v_e + w.cross(&r), r, nav.time)
}

/// Value-style wrapper around [`FilterState::propagate`].
pub fn propagate(fs: &FilterState, imu: &ImuSample, dt: f64, cfg: &FilterConfig) -> Result<FilterState, Error> {
    let mut out = fs.clone();
    out.propagate(imu, dt, cfg)?;
    Ok(out)
}

/// Value-style wrapper around [`FilterState::update_with`], predicting `ẑ` internally.
pub fn update(fs: &FilterState, m: &Measurement, h: &Mat3x21, cfg: &FilterConfig) -> Result<FilterState, Error> {
    let mut out = fs.clone();
    let (zhat, _) = out.linearize(m.kind, cfg);
    out.update_with(m, &zhat, h, cfg)?;
    Ok(out)
}

pub fn inject_and_reset(fs: &FilterState, dx: &ErrorState21, cfg: &FilterConfig) -> FilterState {
    let mut out = fs.clone();
    out.inject_and_reset(dx, cfg);
    out
}

/// Dense second-order transition, for reference and tests.
pub fn transition(f: &Mat21, dt: f64) -> Mat21 {
    let a = f * dt;
    Mat21::identity() + a + a * a * 0.5
}
