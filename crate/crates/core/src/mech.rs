//! Strapdown mechanization in the earth frame.
//!
//! The propagated velocity is `v′ = vᵉ + ω_ie × rᵉ`. [`mech_step_trident`]
//! integrates the trident-quaternion kinematics with closed-form twist
//! exponentials; [`mech_step_classic`] is a component-wise trapezoidal scheme
//! kept as a cross-check.

use serde::{Deserialize, Serialize};

use crate::earth::{gravitation_e, EarthParams};
use crate::so3::rotation_increment;
use crate::triquat::{pack, unpack, NavState, Quaternion, TridentTwist, Vec3};
use crate::Error;

/// One IMU sample: mean angular rate (rad/s) and specific force (m/s²) over
/// the interval ending at `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vec3,
    pub accel: Vec3,
}

impl ImuSample {
    pub fn new(t: f64, gyro: Vec3, accel: Vec3) -> Self {
        ImuSample { t, gyro, accel }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.gyro.iter().chain(self.accel.iter()).all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    SingleSample,
    TwoSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechConfig {
    pub dt: f64,
    pub integrator: Integrator,
}

impl Default for MechConfig {
    fn default() -> Self {
        MechConfig { dt: 0.01, integrator: Integrator::SingleSample }
    }
}

impl MechConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::Config(format!("mech.dt = {} outside (0, 0.1]", self.dt)));
        }
        Ok(())
    }
}

/// Effective rates over the step, with previous-interval coning and sculling
/// terms when the two-sample scheme is selected.
fn effective_rates(imu: &ImuSample, prev: Option<&ImuSample>, cfg: &MechConfig) -> (Vec3, Vec3) {
    match (cfg.integrator, prev) {
        (Integrator::TwoSample, Some(p)) => {
            let dt = cfg.dt;
            let (th0, v0) = (p.gyro * dt, p.accel * dt);
            let (th1, v1) = (imu.gyro * dt, imu.accel * dt);
            let th = th1 + th0.cross(&th1) / 12.0;
            let dv = v1 + (th0.cross(&v1) + v0.cross(&th1)) / 12.0;
            (th / dt, dv / dt)
        }
        _ => (imu.gyro, imu.accel),
    }
}

fn gravitation(r: &Vec3, earth: &EarthParams) -> Vec3 {
    // Positions reaching here have passed the radius check at the API edge
    // or are far from the singularity; fall back to zero when not.
    gravitation_e(r, earth).unwrap_or_else(|_| Vec3::zeros())
}

/// Trident-quaternion step `q̃⁺ = exp(−½ω̃_e dt)∘q̃∘exp(½ω̃_b dt)` with the earth
/// twist taken at the predicted mid-step state.
pub fn mech_step_trident(
    state: &NavState,
    imu: &ImuSample,
    prev: Option<&ImuSample>,
    cfg: &MechConfig,
    earth: &EarthParams,
) -> NavState {
    let dt = cfg.dt;
    let w_ie = earth.omega_vec();
    let (w_ib, f_b) = effective_rates(imu, prev, cfg);

    let q_mid = state.q_eb * Quaternion::from_rotation_vector(&(w_ib * (0.5 * dt)));
    let g0 = gravitation(&state.r_e, earth);
    let v_mid = state.v_prime + (q_mid.rotate(&f_b) + g0 - w_ie.cross(&state.v_prime)) * (0.5 * dt);
    let r_mid = state.r_e + (state.v_prime - w_ie.cross(&state.r_e)) * (0.5 * dt);
    let g_mid = gravitation(&r_mid, earth);

    let body = TridentTwist::new(w_ib, f_b, Vec3::zeros());
    let earth_twist = TridentTwist::new(-w_ie, g_mid, v_mid);

    // position slot carried outside the product: E∘(T₀ + ε₂½r∘q)∘B adds exp(−ω_ie dt)·r
    let t = pack(&state.q_eb, &state.v_prime, &Vec3::zeros());
    let out = earth_twist.half_exp(dt) * t * body.half_exp(dt);
    let mut next = unpack(&out.normalized(), state.time + dt);
    next.r_e = state.r_e + (next.r_e + rotation_increment(&(-w_ie * dt), &state.r_e));
    next
}

/// Attitude quaternion update followed by trapezoidal velocity and position.
pub fn mech_step_classic(
    state: &NavState,
    imu: &ImuSample,
    prev: Option<&ImuSample>,
    cfg: &MechConfig,
    earth: &EarthParams,
) -> NavState {
    let dt = cfg.dt;
    let w_ie = earth.omega_vec();
    let (w_ib, f_b) = effective_rates(imu, prev, cfg);

    let q1 = (Quaternion::from_rotation_vector(&(-w_ie * dt))
        * state.q_eb
        * Quaternion::from_rotation_vector(&(w_ib * dt)))
    .normalized();
    let cf = (state.q_eb.rotate(&f_b) + q1.rotate(&f_b)) * 0.5;

    let (v0, r0) = (state.v_prime, state.r_e);
    let g0 = gravitation(&r0, earth);
    let mut v1 = v0 + (cf + g0 - w_ie.cross(&v0)) * dt;
    let mut r1 = r0 + (v0 - w_ie.cross(&r0)) * dt;
    for _ in 0..3 {
        let g1 = gravitation(&r1, earth);
        v1 = v0 + (cf * 2.0 + g0 + g1 - w_ie.cross(&(v0 + v1))) * (0.5 * dt);
        r1 = r0 + (v0 + v1 - w_ie.cross(&(r0 + r1))) * (0.5 * dt);
    }
    NavState::new(q1, v1, r1, state.time + dt)
}

/// Stateful wrapper that remembers the previous sample for the two-sample scheme.
#[derive(Clone, Debug)]
pub struct Strapdown {
    pub cfg: MechConfig,
    prev: Option<ImuSample>,
}

impl Strapdown {
    pub fn new(cfg: MechConfig) -> Self {
        Strapdown { cfg, prev: None }
    }

    pub fn step(&mut self, state: &NavState, imu: &ImuSample, earth: &EarthParams) -> NavState {
        let out = mech_step_trident(state, imu, self.prev.as_ref(), &self.cfg, earth);
        self.prev = Some(*imu);
        out
    }

    pub fn step_classic(&mut self, state: &NavState, imu: &ImuSample, earth: &EarthParams) -> NavState {
        let out = mech_step_classic(state, imu, self.prev.as_ref(), &self.cfg, earth);
        self.prev = Some(*imu);
        out
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }
}
