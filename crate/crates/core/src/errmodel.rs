//! Linearized error-state models over the 21-state layout
//! `[att, vel, pos, bg, ba, ψ, θ, lever, K]`.
//!
//! Sign conventions:
//!
//! - trident pose blocks are truth relative to estimate (see [`crate::triquat`]),
//! - bias, mounting, lever and scale errors are estimate minus truth,
//! - the traditional baseline is estimate minus truth throughout, with
//!   `Ĉ = exp(δθ×)C` in the earth frame and `δv` on `vᵉ`.
//!
//! The robocentric kinds are sign flips of the world-centric ones: with the
//! diagonal `T` from [`ErrorModelKind::sign_transform`], `F = T F_base T`,
//! `G = T G_base` and `H = H_base T`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::earth::{gravitation_e, gravity_gradient, gravity_gradient_full, EarthParams};
use crate::mech::ImuSample;
use crate::so3::{exp_so3, log_so3, skew};
use crate::triquat::{ErrorTriple, Mat3, NavState, Side, Vec3};
use crate::Error;

pub const N: usize = 21;
pub const NW: usize = 12;
pub const ATT: usize = 0;
pub const VEL: usize = 3;
pub const POS: usize = 6;
pub const BG: usize = 9;
pub const BA: usize = 12;
pub const PSI: usize = 15;
pub const THETA: usize = 16;
pub const LEVER: usize = 17;
pub const SCALE: usize = 20;

pub type Mat21 = SMatrix<f64, 21, 21>;
pub type Mat21x12 = SMatrix<f64, 21, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Vec21 = SVector<f64, 21>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorModelKind {
    LeftTrident,
    RightTrident,
    RobocentricLeft,
    RobocentricRight,
    Traditional,
}

impl ErrorModelKind {
    pub const ALL: [ErrorModelKind; 5] = [
        ErrorModelKind::LeftTrident,
        ErrorModelKind::RightTrident,
        ErrorModelKind::RobocentricLeft,
        ErrorModelKind::RobocentricRight,
        ErrorModelKind::Traditional,
    ];

    /// Short label used in file names and reports.
    pub fn label(&self) -> &'static str {
        match self {
            ErrorModelKind::LeftTrident => "lqekf",
            ErrorModelKind::RightTrident => "rqekf",
            ErrorModelKind::RobocentricLeft => "rc-lqekf",
            ErrorModelKind::RobocentricRight => "rc-rqekf",
            ErrorModelKind::Traditional => "ekf",
        }
    }

    /// World-centric model this kind is a sign transform of, and its side.
    pub fn base(&self) -> (ErrorModelKind, Option<Side>) {
        match self {
            ErrorModelKind::LeftTrident | ErrorModelKind::RobocentricRight => {
                (ErrorModelKind::LeftTrident, Some(Side::Left))
            }
            ErrorModelKind::RightTrident | ErrorModelKind::RobocentricLeft => {
                (ErrorModelKind::RightTrident, Some(Side::Right))
            }
            ErrorModelKind::Traditional => (ErrorModelKind::Traditional, None),
        }
    }

    /// Diagonal of `T` mapping this kind's error to its base kind's error.
    pub fn sign_transform(&self) -> Option<Vec21> {
        let mut t = Vec21::repeat(1.0);
        match self {
            ErrorModelKind::RobocentricRight => {
                t.fixed_rows_mut::<3>(ATT).fill(-1.0);
            }
            ErrorModelKind::RobocentricLeft => {
                t.fixed_rows_mut::<3>(ATT).fill(-1.0);
                t.fixed_rows_mut::<3>(BG).fill(-1.0);
            }
            _ => return None,
        }
        Some(t)
    }
}

impl fmt::Display for ErrorModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ErrorModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        let k = match s.trim().to_ascii_lowercase().as_str() {
            "lqekf" | "left" | "left-trident" | "lq" => ErrorModelKind::LeftTrident,
            "rqekf" | "right" | "right-trident" | "rq" => ErrorModelKind::RightTrident,
            "rc-lqekf" | "robocentric-left" => ErrorModelKind::RobocentricLeft,
            "rc-rqekf" | "robocentric-right" => ErrorModelKind::RobocentricRight,
            "ekf" | "traditional" => ErrorModelKind::Traditional,
            other => return Err(Error::InvalidInput(format!("unknown filter kind '{other}'"))),
        };
        Ok(k)
    }
}

/// 21-component error vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorState21(pub Vec21);

impl ErrorState21 {
    pub fn zeros() -> Self {
        ErrorState21(Vec21::zeros())
    }

    fn block(&self, i: usize) -> Vec3 {
        self.0.fixed_rows::<3>(i).into_owned()
    }

    pub fn att(&self) -> Vec3 {
        self.block(ATT)
    }
    pub fn vel(&self) -> Vec3 {
        self.block(VEL)
    }
    pub fn pos(&self) -> Vec3 {
        self.block(POS)
    }
    pub fn bg(&self) -> Vec3 {
        self.block(BG)
    }
    pub fn ba(&self) -> Vec3 {
        self.block(BA)
    }
    pub fn psi(&self) -> f64 {
        self.0[PSI]
    }
    pub fn theta(&self) -> f64 {
        self.0[THETA]
    }
    pub fn lever(&self) -> Vec3 {
        self.block(LEVER)
    }
    pub fn scale(&self) -> f64 {
        self.0[SCALE]
    }

    pub fn triple(&self) -> ErrorTriple {
        ErrorTriple::new(self.att(), self.vel(), self.pos())
    }

    pub fn set_triple(&mut self, e: &ErrorTriple) {
        self.0.fixed_rows_mut::<3>(ATT).copy_from(&e.att);
        self.0.fixed_rows_mut::<3>(VEL).copy_from(&e.vel);
        self.0.fixed_rows_mut::<3>(POS).copy_from(&e.pos);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientModel {
    /// `−2 g r̂ᵀ / r_eS`
    RankOne,
    /// Exact Jacobian of the J2 model.
    Full,
}

/// White-noise and random-walk densities (1σ per √s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseDensities {
    /// rad/√s
    pub gyro_arw: f64,
    /// m/s/√s
    pub accel_vrw: f64,
    /// rad/s/√s
    pub gyro_bias_rw: f64,
    /// m/s²/√s
    pub accel_bias_rw: f64,
}

impl Default for NoiseDensities {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        let g0 = 9.80665;
        NoiseDensities {
            gyro_arw: 0.001 * deg / 60.0,
            accel_vrw: 5e-6 * g0,
            gyro_bias_rw: 0.005 * deg / 3600.0 / 60.0,
            accel_bias_rw: 30e-6 * g0 / 60.0,
        }
    }
}

impl NoiseDensities {
    pub fn zero() -> Self {
        NoiseDensities { gyro_arw: 0.0, accel_vrw: 0.0, gyro_bias_rw: 0.0, accel_bias_rw: 0.0 }
    }

    /// Diagonal PSD in the order `[w_g, w_a, w_grw, w_arw]`.
    pub fn q(&self) -> Mat12 {
        let mut q = Mat12::zeros();
        for i in 0..3 {
            q[(i, i)] = self.gyro_arw.powi(2);
            q[(3 + i, 3 + i)] = self.accel_vrw.powi(2);
            q[(6 + i, 6 + i)] = self.gyro_bias_rw.powi(2);
            q[(9 + i, 9 + i)] = self.accel_bias_rw.powi(2);
        }
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub earth: EarthParams,
    pub noise: NoiseDensities,
    pub gradient: GradientModel,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { earth: EarthParams::default(), noise: NoiseDensities::default(), gradient: GradientModel::Full }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub f: Mat21,
    pub g: Mat21x12,
    pub q: Mat12,
}

fn put(m: &mut Mat21, r: usize, c: usize, b: &Mat3) {
    m.fixed_view_mut::<3, 3>(r, c).copy_from(b);
}

fn put_g(m: &mut Mat21x12, r: usize, c: usize, b: &Mat3) {
    m.fixed_view_mut::<3, 3>(r, c).copy_from(b);
}

pub fn gradient(r_e: &Vec3, cfg: &ModelConfig) -> Result<Mat3, Error> {
    match cfg.gradient {
        GradientModel::RankOne => gravity_gradient(r_e, &cfg.earth),
        GradientModel::Full => gravity_gradient_full(r_e, &cfg.earth),
    }
}

/// Continuous-time `F`, `G`, `Q` at `state` with bias-corrected `imu` rates.
pub fn build_system(
    kind: ErrorModelKind,
    state: &NavState,
    imu: &ImuSample,
    cfg: &ModelConfig,
) -> Result<SystemMatrices, Error> {
    let mut f = Mat21::zeros();
    let mut g = Mat21x12::zeros();
    let i3 = Mat3::identity();
    let c = state.c_be();
    let ct = c.transpose();
    let om = skew(&cfg.earth.omega_vec());
    let gam = gradient(&state.r_e, cfg)?;
    let w = skew(&imu.gyro);
    match kind {
        ErrorModelKind::LeftTrident | ErrorModelKind::RobocentricRight => {
            let s = if kind == ErrorModelKind::LeftTrident { 1.0 } else { -1.0 };
            put(&mut f, ATT, ATT, &-w);
            put(&mut f, ATT, BG, &(i3 * s));
            put(&mut f, VEL, ATT, &(-skew(&imu.accel) * s));
            put(&mut f, VEL, VEL, &-w);
            put(&mut f, VEL, POS, &(ct * gam * c));
            put(&mut f, VEL, BA, &i3);
            put(&mut f, POS, VEL, &i3);
            put(&mut f, POS, POS, &-w);
            put_g(&mut g, ATT, 0, &(-i3 * s));
            put_g(&mut g, VEL, 3, &-i3);
        }
        ErrorModelKind::RightTrident | ErrorModelKind::RobocentricLeft => {
            let s = if kind == ErrorModelKind::RightTrident { 1.0 } else { -1.0 };
            let ge = gravitation_e(&state.r_e, &cfg.earth)?;
            let vx = skew(&state.v_prime);
            let rx = skew(&state.r_e);
            put(&mut f, ATT, ATT, &-om);
            put(&mut f, ATT, BG, &c);
            put(&mut f, VEL, ATT, &((skew(&ge) - gam * rx) * s));
            put(&mut f, VEL, VEL, &-om);
            put(&mut f, VEL, POS, &gam);
            put(&mut f, VEL, BG, &(vx * c * s));
            put(&mut f, VEL, BA, &c);
            put(&mut f, POS, VEL, &i3);
            put(&mut f, POS, POS, &-om);
            put(&mut f, POS, BG, &(rx * c * s));
            put_g(&mut g, ATT, 0, &-c);
            put_g(&mut g, VEL, 0, &(-vx * c * s));
            put_g(&mut g, VEL, 3, &-c);
            put_g(&mut g, POS, 0, &(-rx * c * s));
        }
        ErrorModelKind::Traditional => {
            let cf = c * imu.accel;
            put(&mut f, ATT, ATT, &-om);
            put(&mut f, ATT, BG, &-c);
            put(&mut f, VEL, ATT, &-skew(&cf));
            put(&mut f, VEL, VEL, &(-2.0 * om));
            put(&mut f, VEL, POS, &(gam - om * om));
            put(&mut f, VEL, BA, &-c);
            put(&mut f, POS, VEL, &i3);
            put_g(&mut g, ATT, 0, &c);
            put_g(&mut g, VEL, 3, &c);
        }
    }
    put_g(&mut g, BG, 6, &i3);
    put_g(&mut g, BA, 9, &i3);
    Ok(SystemMatrices { f, g, q: cfg.noise.q() })
}

/// `T F T` and `T G` for the robocentric kinds, built from the world-centric model.
pub fn build_system_via_transform(
    kind: ErrorModelKind,
    state: &NavState,
    imu: &ImuSample,
    cfg: &ModelConfig,
) -> Result<SystemMatrices, Error> {
    let (base, _) = kind.base();
    let mut s = build_system(base, state, imu, cfg)?;
    if let Some(t) = kind.sign_transform() {
        for i in 0..N {
            for j in 0..N {
                s.f[(i, j)] *= t[i] * t[j];
            }
            for j in 0..NW {
                s.g[(i, j)] *= t[i];
            }
        }
    }
    Ok(s)
}

/// Max absolute difference per 3×3 block of the 15×15 inertial part.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiff {
    pub max: [[f64; 5]; 5],
}

impl BlockDiff {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.max[row / 3][col / 3]
    }

    /// Largest difference outside the listed `(row, col)` state offsets.
    pub fn max_excluding(&self, skip: &[(usize, usize)]) -> f64 {
        let mut m = 0.0f64;
        for i in 0..5 {
            for j in 0..5 {
                if !skip.contains(&(3 * i, 3 * j)) {
                    m = m.max(self.max[i][j]);
                }
            }
        }
        m
    }
}

pub fn block_diff(a: &Mat21, b: &Mat21) -> BlockDiff {
    let mut max = [[0.0; 5]; 5];
    for (i, row) in max.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let d = a.fixed_view::<3, 3>(3 * i, 3 * j) - b.fixed_view::<3, 3>(3 * i, 3 * j);
            *cell = d.abs().max();
        }
    }
    BlockDiff { max }
}

/// Block-wise difference of `F` for one kind at two estimates sharing an IMU sample.
pub fn invariance_report(
    kind: ErrorModelKind,
    a: &NavState,
    b: &NavState,
    imu: &ImuSample,
    cfg: &ModelConfig,
) -> Result<BlockDiff, Error> {
    let fa = build_system(kind, a, imu, cfg)?.f;
    let fb = build_system(kind, b, imu, cfg)?.f;
    Ok(block_diff(&fa, &fb))
}

pub fn left_invariance_report(
    a: &NavState,
    b: &NavState,
    imu: &ImuSample,
    cfg: &ModelConfig,
) -> Result<BlockDiff, Error> {
    invariance_report(ErrorModelKind::LeftTrident, a, b, imu, cfg)
}

/// Traditional to left covariance map (inertial block; identity elsewhere).
pub fn jacobian_left(state: &NavState, earth: &EarthParams) -> Mat21 {
    let ct = state.c_be().transpose();
    let om = skew(&earth.omega_vec());
    let mut j = Mat21::identity();
    put(&mut j, ATT, ATT, &ct);
    put(&mut j, VEL, VEL, &ct);
    put(&mut j, VEL, POS, &(ct * om));
    put(&mut j, POS, POS, &ct);
    j
}

/// Traditional to right covariance map (inertial block; identity elsewhere).
pub fn jacobian_right(state: &NavState, earth: &EarthParams) -> Mat21 {
    let om = skew(&earth.omega_vec());
    let mut j = Mat21::identity();
    put(&mut j, VEL, ATT, &skew(&state.v_prime));
    put(&mut j, VEL, POS, &om);
    put(&mut j, POS, ATT, &skew(&state.r_e));
    j
}

/// Covariance map from traditional coordinates for any kind.
pub fn jacobian_from_traditional(kind: ErrorModelKind, state: &NavState, earth: &EarthParams) -> Mat21 {
    let mut j = match kind.base().0 {
        ErrorModelKind::LeftTrident => jacobian_left(state, earth),
        ErrorModelKind::RightTrident => jacobian_right(state, earth),
        _ => Mat21::identity(),
    };
    if let Some(t) = kind.sign_transform() {
        for i in 0..N {
            for c in 0..N {
                j[(i, c)] *= t[i];
            }
        }
    }
    j
}

pub fn check_psd(p: &Mat21) -> Result<(), Error> {
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("covariance has non-finite entries".into()));
    }
    let asym = (p - p.transpose()).abs().max();
    let scale = p.abs().max().max(f64::MIN_POSITIVE);
    if asym > 1e-9 * scale {
        return Err(Error::InvalidInput(format!("covariance not symmetric ({asym:.3e})")));
    }
    let eig = SymmetricEigen::new(*p).eigenvalues;
    let min = eig.min();
    if min < -1e-12 * p.trace().abs().max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput(format!("covariance not PSD (min eigenvalue {min:.3e})")));
    }
    Ok(())
}

fn sandwich(j: &Mat21, p: &Mat21) -> Mat21 {
    let out = j * p * j.transpose();
    (out + out.transpose()) * 0.5
}

pub fn cov_transform_left(p_trad: &Mat21, state: &NavState, earth: &EarthParams) -> Result<Mat21, Error> {
    check_psd(p_trad)?;
    Ok(sandwich(&jacobian_left(state, earth), p_trad))
}

pub fn cov_transform_right(p_trad: &Mat21, state: &NavState, earth: &EarthParams) -> Result<Mat21, Error> {
    check_psd(p_trad)?;
    Ok(sandwich(&jacobian_right(state, earth), p_trad))
}

/// Translation discrepancies between trident errors and the first-order
/// coordinates of the SE₂(3) group errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se23Discrepancy {
    pub left: f64,
    pub right: f64,
    pub attitude: f64,
}

/// Inverse of the SO(3) left Jacobian.
pub fn so3_left_jacobian_inv(phi: &Vec3) -> Mat3 {
    let a = phi.norm();
    let k = skew(phi);
    let c = if a < 1e-4 {
        1.0 / 12.0 + a * a / 720.0
    } else {
        1.0 / (a * a) - (1.0 + a.cos()) / (2.0 * a * a.sin())
    };
    Mat3::identity() - 0.5 * k + c * k * k
}

/// Extended pose `χ = [[C, v′, r], [0, 1, 0], [0, 0, 1]]`.
pub fn extended_pose(s: &NavState) -> SMatrix<f64, 5, 5> {
    let mut x = SMatrix::<f64, 5, 5>::identity();
    x.fixed_view_mut::<3, 3>(0, 0).copy_from(&s.c_be());
    x.fixed_view_mut::<3, 1>(0, 3).copy_from(&s.v_prime);
    x.fixed_view_mut::<3, 1>(0, 4).copy_from(&s.r_e);
    x
}

/// Lie-algebra coordinates `(φ, ρ_v, ρ_r)` of an extended pose.
pub fn se23_log(x: &SMatrix<f64, 5, 5>) -> (Vec3, Vec3, Vec3) {
    let r: Mat3 = x.fixed_view::<3, 3>(0, 0).into_owned();
    let phi = log_so3(&r);
    let jinv = so3_left_jacobian_inv(&phi);
    let v: Vec3 = x.fixed_view::<3, 1>(0, 3).into_owned();
    let p: Vec3 = x.fixed_view::<3, 1>(0, 4).into_owned();
    (phi, jinv * v, jinv * p)
}

fn se23_inverse(x: &SMatrix<f64, 5, 5>) -> SMatrix<f64, 5, 5> {
    let r: Mat3 = x.fixed_view::<3, 3>(0, 0).into_owned();
    let rt = r.transpose();
    let v: Vec3 = x.fixed_view::<3, 1>(0, 3).into_owned();
    let p: Vec3 = x.fixed_view::<3, 1>(0, 4).into_owned();
    let mut out = SMatrix::<f64, 5, 5>::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-rt * v));
    out.fixed_view_mut::<3, 1>(0, 4).copy_from(&(-rt * p));
    out
}

/// Compare trident errors with SE₂(3) errors `χ̂⁻¹χ` (left) and `χχ̂⁻¹` (right).
pub fn se23_cross_check(est: &NavState, truth: &NavState) -> Result<Se23Discrepancy, Error> {
    use crate::triquat::{tq_error, tq_from_nav};
    let te = tq_from_nav(est)?;
    let tt = tq_from_nav(truth)?;
    let xe = extended_pose(est);
    let xt = extended_pose(truth);
    let mut out = Se23Discrepancy { left: 0.0, right: 0.0, attitude: 0.0 };
    for side in [Side::Left, Side::Right] {
        let eta = match side {
            Side::Left => se23_inverse(&xe) * xt,
            Side::Right => xt * se23_inverse(&xe),
        };
        let (phi, rv, rr) = se23_log(&eta);
        let e = tq_error(&te, &tt, side)?;
        let d = (e.vel - rv).amax().max((e.pos - rr).amax());
        out.attitude = out.attitude.max((e.att - phi).amax());
        match side {
            Side::Left => out.left = d,
            Side::Right => out.right = d,
        }
    }
    Ok(out)
}

/// Attitude-only error conversion `δR_r = Ĉ δR_l Ĉᵀ`.
pub fn left_to_right_rotation(est: &NavState, left_att: &Vec3) -> Vec3 {
    let c = est.c_be();
    log_so3(&(c * exp_so3(left_att) * c.transpose()))
}
