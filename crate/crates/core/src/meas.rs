//! Zero-velocity and odometer measurement models.
//!
//! Residuals are predicted minus observed. Odometer output is
//! `y = diag(K, 1, 1) C_b^m (C_e^b vᵉ + ω_eb × lᵇ)`, with `C_b^m = M₃(θ)M₂(ψ)`
//! and the lateral and vertical slots observed as zero.

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::earth::EarthParams;
use crate::errmodel::{ErrorModelKind, BG, LEVER, PSI, SCALE, THETA, VEL, ATT, POS, N};
use crate::mech::ImuSample;
use crate::so3::skew;
use crate::triquat::{Mat3, NavState, Vec3};
use crate::Error;

pub type Mat3x21 = SMatrix<f64, 3, 21>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdoParams {
    /// pulses/m
    #[serde(rename = "scale")]
    pub k: f64,
    /// rad
    pub psi: f64,
    /// rad
    pub theta: f64,
    /// m, body frame, IMU to rear-axle point
    pub lever: Vec3,
}

impl OdoParams {
    pub fn new(k: f64, psi: f64, theta: f64, lever: Vec3) -> Result<Self, Error> {
        if !(k > 0.0) {
            return Err(Error::InvalidInput(format!("odometer scale {k} must be positive")));
        }
        Ok(OdoParams { k, psi, theta, lever })
    }

    pub fn c_bm(&self) -> Mat3 {
        c_bm(self.psi, self.theta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementKind {
    ZeroVelocity,
    Odometer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub t: f64,
    pub z: Vec3,
    pub r: Matrix3<f64>,
}

impl Measurement {
    pub fn zero_velocity(t: f64, z: Vec3, sigma: f64) -> Self {
        Measurement { kind: MeasurementKind::ZeroVelocity, t, z, r: Mat3::identity() * sigma * sigma }
    }

    /// Odometer pulse rate with the two non-holonomic slots observed as zero.
    pub fn odometer(t: f64, pulse_rate: f64, sigma: &Vec3) -> Self {
        Measurement {
            kind: MeasurementKind::Odometer,
            t,
            z: Vec3::new(pulse_rate, 0.0, 0.0),
            r: Mat3::from_diagonal(&sigma.component_mul(sigma)),
        }
    }
}

/// Elementary rotation `M₂(ψ)`.
pub fn m2(psi: f64) -> Mat3 {
    let (s, c) = psi.sin_cos();
    Mat3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

/// Elementary rotation `M₃(θ)`.
pub fn m3(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn d_m2(psi: f64) -> Mat3 {
    let (s, c) = psi.sin_cos();
    Mat3::new(-s, 0.0, -c, 0.0, 0.0, 0.0, c, 0.0, -s)
}

pub fn d_m3(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(-s, c, 0.0, -c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Body to vehicle frame.
pub fn c_bm(psi: f64, theta: f64) -> Mat3 {
    m3(theta) * m2(psi)
}

/// `ω_eb = ω_ib − C_e^b ω_ie`.
pub fn omega_eb(state: &NavState, imu: &ImuSample, earth: &EarthParams) -> Vec3 {
    imu.gyro - state.q_eb.conj().rotate(&earth.omega_vec())
}

/// Body-frame velocity of the wheel point, `C_e^b vᵉ + ω_eb × lᵇ`.
pub fn wheel_velocity_body(state: &NavState, imu: &ImuSample, lever: &Vec3, earth: &EarthParams) -> Vec3 {
    let v_b = state.q_eb.conj().rotate(&state.v_e(&earth.omega_vec()));
    v_b + omega_eb(state, imu, earth).cross(lever)
}

pub fn predict_odometer(state: &NavState, imu: &ImuSample, p: &OdoParams, earth: &EarthParams) -> Vec3 {
    let mut y = p.c_bm() * wheel_velocity_body(state, imu, &p.lever, earth);
    y.x *= p.k;
    y
}

pub fn predict_zero_velocity(state: &NavState, earth: &EarthParams) -> Vec3 {
    state.v_e(&earth.omega_vec())
}

pub fn predict(kind: MeasurementKind, state: &NavState, imu: &ImuSample, p: &OdoParams, earth: &EarthParams) -> Vec3 {
    match kind {
        MeasurementKind::ZeroVelocity => predict_zero_velocity(state, earth),
        MeasurementKind::Odometer => predict_odometer(state, imu, p, earth),
    }
}

fn put(h: &mut Mat3x21, c: usize, b: &Mat3) {
    h.fixed_view_mut::<3, 3>(0, c).copy_from(b);
}

fn apply_sign(kind: ErrorModelKind, mut h: Mat3x21) -> Mat3x21 {
    if let Some(t) = kind.sign_transform() {
        for c in 0..N {
            for r in 0..3 {
                h[(r, c)] *= t[c];
            }
        }
    }
    h
}

/// Zero-velocity Jacobian of `v̂ᵉ − vᵉ`.
pub fn h_static(kind: ErrorModelKind, state: &NavState, earth: &EarthParams) -> Mat3x21 {
    let mut h = Mat3x21::zeros();
    let om = skew(&earth.omega_vec());
    let c = state.c_be();
    match kind.base().0 {
        ErrorModelKind::LeftTrident => {
            put(&mut h, VEL, &-c);
            put(&mut h, POS, &(om * c));
        }
        ErrorModelKind::RightTrident => {
            put(&mut h, ATT, &(skew(&state.v_prime) - om * skew(&state.r_e)));
            put(&mut h, VEL, &-Mat3::identity());
            put(&mut h, POS, &om);
        }
        _ => {
            put(&mut h, VEL, &Mat3::identity());
        }
    }
    apply_sign(kind, h)
}

/// Odometer Jacobian of `ŷ − y`, evaluated at the estimates.
pub fn h_odometer(
    kind: ErrorModelKind,
    state: &NavState,
    imu: &ImuSample,
    p: &OdoParams,
    earth: &EarthParams,
) -> Mat3x21 {
    let mut h = Mat3x21::zeros();
    let dk = Mat3::from_diagonal(&Vec3::new(p.k, 1.0, 1.0));
    let cbm = p.c_bm();
    let jv = dk * cbm;
    let w_ie = earth.omega_vec();
    let om = skew(&w_ie);
    let c = state.c_be();
    let ct = c.transpose();
    let v_e = state.v_e(&w_ie);
    let w_eb = omega_eb(state, imu, earth);
    let u = ct * v_e + w_eb.cross(&p.lever);

    // earth rate seen in the body moves ω_eb with the attitude error
    let lx = skew(&p.lever);
    match kind.base().0 {
        ErrorModelKind::LeftTrident => {
            put(&mut h, ATT, &(-jv * (skew(&(ct * v_e)) + lx * skew(&(ct * w_ie)))));
            put(&mut h, VEL, &-jv);
            put(&mut h, POS, &(jv * skew(&(ct * w_ie))));
        }
        ErrorModelKind::RightTrident => {
            put(&mut h, ATT, &(-jv * (ct * skew(&state.r_e) * om + lx * ct * om)));
            put(&mut h, VEL, &(-jv * ct));
            put(&mut h, POS, &(jv * ct * om));
        }
        _ => {
            put(&mut h, ATT, &(jv * (ct * skew(&v_e) + lx * ct * om)));
            put(&mut h, VEL, &(jv * ct));
        }
    }
    put(&mut h, BG, &(jv * skew(&p.lever)));
    h.fixed_view_mut::<3, 1>(0, PSI).copy_from(&(dk * m3(p.theta) * d_m2(p.psi) * u));
    h.fixed_view_mut::<3, 1>(0, THETA).copy_from(&(dk * d_m3(p.theta) * m2(p.psi) * u));
    put(&mut h, LEVER, &(jv * skew(&w_eb)));
    h[(0, SCALE)] = (cbm * u).x;
    apply_sign(kind, h)
}

pub fn jacobian(
    mkind: MeasurementKind,
    kind: ErrorModelKind,
    state: &NavState,
    imu: &ImuSample,
    p: &OdoParams,
    earth: &EarthParams,
) -> Mat3x21 {
    match mkind {
        MeasurementKind::ZeroVelocity => h_static(kind, state, earth),
        MeasurementKind::Odometer => h_odometer(kind, state, imu, p, earth),
    }
}
