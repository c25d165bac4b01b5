//! Quaternion and trident-quaternion algebra.
//!
//! A trident quaternion `q + ε₁q′ + ε₂q″` packs attitude, transformed
//! velocity and position into one object with `ε₁² = ε₂² = ε₁ε₂ = 0`.
//! Quaternions are Hamilton, scalar first, and rotate body vectors into the
//! earth frame as `vᵉ = q∘vᵇ∘q*`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const POSE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };
    pub const ZERO: Quaternion = Quaternion { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    /// Vector quaternion `[0, v]`.
    pub fn pure(v: &Vec3) -> Self {
        Quaternion::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_parts(w: f64, v: &Vec3) -> Self {
        Quaternion::new(w, v.x, v.y, v.z)
    }

    pub fn vec(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn conj(&self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn scale(&self, s: f64) -> Self {
        Quaternion::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(&self) -> Self {
        self.scale(1.0 / self.norm())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation by angle `‖φ‖` about `φ̂`.
    pub fn from_rotation_vector(phi: &Vec3) -> Self {
        let a = phi.norm();
        let half = 0.5 * a;
        let (s, c) = if a < 1e-4 {
            let a2 = a * a;
            (0.5 - a2 / 48.0 + a2 * a2 / 3840.0, 1.0 - a2 / 8.0 + a2 * a2 / 384.0)
        } else {
            (half.sin() / a, half.cos())
        };
        Quaternion::from_parts(c, &(phi * s))
    }

    /// Rotation vector of a unit quaternion, taking the short way round.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = if self.w < 0.0 { -*self } else { *self };
        let v = q.vec();
        let s = v.norm();
        if s < 1e-8 {
            return v * (2.0 / q.w) * (1.0 - s * s / (3.0 * q.w * q.w));
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    /// `q∘[0,v]∘q*` for unit `q`.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = self.vec();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn from_matrix(m: &Mat3) -> Self {
        let tr = m.trace();
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quaternion::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        let q = q.normalized();
        if q.w < 0.0 {
            -q
        } else {
            q
        }
    }

    /// Left-multiplication matrix: `a∘b = L(a)·b` on `[w,x,y,z]`.
    pub fn left_matrix(&self) -> Matrix4<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix4::new(w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, b: Quaternion) -> Quaternion {
        Quaternion::new(self.w + b.w, self.x + b.x, self.y + b.y, self.z + b.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, b: Quaternion) -> Quaternion {
        Quaternion::new(self.w - b.w, self.x - b.x, self.y - b.y, self.z - b.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

pub fn quat_mul(a: &Quaternion, b: &Quaternion) -> Quaternion {
    *a * *b
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TridentQuaternion {
    pub real: Quaternion,
    pub eps1: Quaternion,
    pub eps2: Quaternion,
}

impl TridentQuaternion {
    pub const IDENTITY: TridentQuaternion = TridentQuaternion {
        real: Quaternion::IDENTITY,
        eps1: Quaternion::ZERO,
        eps2: Quaternion::ZERO,
    };

    pub fn conj(&self) -> Self {
        TridentQuaternion { real: self.real.conj(), eps1: self.eps1.conj(), eps2: self.eps2.conj() }
    }

    /// Largest violation of the pose invariants. The ε-slot scalar parts are
    /// measured relative to the slot magnitude when it exceeds one.
    pub fn pose_defect(&self) -> f64 {
        let n = (self.real.norm() - 1.0).abs();
        let s1 = (self.eps1 * self.real.conj()).w.abs() / self.eps1.norm().max(1.0);
        let s2 = (self.eps2 * self.real.conj()).w.abs() / self.eps2.norm().max(1.0);
        n.max(s1).max(s2)
    }

    pub fn is_pose(&self) -> bool {
        self.pose_defect() < POSE_TOL
    }

    /// Renormalize the real slot and drop the scalar parts of `εᵢ∘q*`.
    pub fn normalized(&self) -> Self {
        let q = self.real.normalized();
        let qc = q.conj();
        TridentQuaternion {
            real: q,
            eps1: Quaternion::pure(&(self.eps1 * qc).vec()) * q,
            eps2: Quaternion::pure(&(self.eps2 * qc).vec()) * q,
        }
    }
}

impl Mul for TridentQuaternion {
    type Output = TridentQuaternion;
    fn mul(self, b: TridentQuaternion) -> TridentQuaternion {
        let a = self;
        TridentQuaternion {
            real: a.real * b.real,
            eps1: a.real * b.eps1 + a.eps1 * b.real,
            eps2: a.real * b.eps2 + a.eps2 * b.real,
        }
    }
}

pub fn tq_mul(a: &TridentQuaternion, b: &TridentQuaternion) -> TridentQuaternion {
    *a * *b
}

pub fn tq_conj(a: &TridentQuaternion) -> TridentQuaternion {
    a.conj()
}

/// Pure trident vector `ω + ε₁ρ₁ + ε₂ρ₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TridentTwist {
    pub real: Vec3,
    pub eps1: Vec3,
    pub eps2: Vec3,
}

impl TridentTwist {
    pub fn new(real: Vec3, eps1: Vec3, eps2: Vec3) -> Self {
        TridentTwist { real, eps1, eps2 }
    }

    pub fn to_trident(&self) -> TridentQuaternion {
        TridentQuaternion {
            real: Quaternion::pure(&self.real),
            eps1: Quaternion::pure(&self.eps1),
            eps2: Quaternion::pure(&self.eps2),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        TridentTwist { real: self.real * s, eps1: self.eps1 * s, eps2: self.eps2 * s }
    }

    /// `exp(½·t·self)`, exact for a constant twist.
    pub fn half_exp(&self, t: f64) -> TridentQuaternion {
        let phi = self.real * t;
        TridentQuaternion {
            real: Quaternion::from_rotation_vector(&phi),
            eps1: half_exp_derivative(&phi, &(self.eps1 * t)),
            eps2: half_exp_derivative(&phi, &(self.eps2 * t)),
        }
    }
}

/// Directional derivative of `φ ↦ exp(φ/2)` along `y`, i.e. the ε-part of
/// `exp(½(φ + εy))`.
fn half_exp_derivative(phi: &Vec3, y: &Vec3) -> Quaternion {
    let x = phi * 0.5;
    let yh = y * 0.5;
    let a = x.norm();
    if a < 1e-5 {
        // series to second order in x
        let w = -x.dot(&yh) * (1.0 - a * a / 6.0);
        let v = yh * (1.0 - a * a / 6.0) + x * (x.dot(&yh) * (-1.0 / 3.0));
        return Quaternion::from_parts(w, &v);
    }
    let u = x / a;
    let par = u.dot(&yh);
    let (s, c) = a.sin_cos();
    let w = -s * par;
    let v = u * (c * par) + (yh - u * par) * (s / a);
    Quaternion::from_parts(w, &v)
}

/// Navigation state in the earth frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    pub q_eb: Quaternion,
    pub v_prime: Vec3,
    pub r_e: Vec3,
    pub time: f64,
}

impl NavState {
    pub fn new(q_eb: Quaternion, v_prime: Vec3, r_e: Vec3, time: f64) -> Self {
        NavState { q_eb, v_prime, r_e, time }
    }

    /// `C_b^e`.
    pub fn c_be(&self) -> Mat3 {
        self.q_eb.to_matrix()
    }

    /// Earth-referenced velocity `vᵉ = v′ − ω_ie × rᵉ`.
    pub fn v_e(&self, omega_ie: &Vec3) -> Vec3 {
        self.v_prime - omega_ie.cross(&self.r_e)
    }

    pub fn is_finite(&self) -> bool {
        self.q_eb.to_array().iter().all(|x| x.is_finite())
            && self.v_prime.iter().all(|x| x.is_finite())
            && self.r_e.iter().all(|x| x.is_finite())
    }
}

pub fn tq_from_nav(s: &NavState) -> Result<TridentQuaternion, Error> {
    if (s.q_eb.norm() - 1.0).abs() > POSE_TOL {
        return Err(Error::InvalidInput("attitude quaternion is not unit".into()));
    }
    Ok(pack(&s.q_eb, &s.v_prime, &s.r_e))
}

pub(crate) fn pack(q: &Quaternion, v_prime: &Vec3, r_e: &Vec3) -> TridentQuaternion {
    TridentQuaternion {
        real: *q,
        eps1: Quaternion::pure(&(v_prime * 0.5)) * *q,
        eps2: Quaternion::pure(&(r_e * 0.5)) * *q,
    }
}

/// Unpack a pose trident. The returned time is zero.
pub fn tq_to_nav(t: &TridentQuaternion) -> Result<NavState, Error> {
    if !t.is_pose() {
        return Err(Error::InvalidInput(format!(
            "trident quaternion violates pose invariants by {:.3e}",
            t.pose_defect()
        )));
    }
    Ok(unpack(t, 0.0))
}

pub(crate) fn unpack(t: &TridentQuaternion, time: f64) -> NavState {
    let qc = t.real.conj();
    NavState {
        q_eb: t.real,
        v_prime: (t.eps1 * qc).vec() * 2.0,
        r_e: (t.eps2 * qc).vec() * 2.0,
        time,
    }
}

/// `2q̃̇ = q̃∘ω̃_b − ω̃_e∘q̃`, returns `q̃̇`.
pub fn tq_dot(t: &TridentQuaternion, body: &TridentTwist, earth: &TridentTwist) -> TridentQuaternion {
    let a = *t * body.to_trident();
    let b = earth.to_trident() * *t;
    TridentQuaternion {
        real: (a.real - b.real).scale(0.5),
        eps1: (a.eps1 - b.eps1).scale(0.5),
        eps2: (a.eps2 - b.eps2).scale(0.5),
    }
}

/// Body twist `ω_ib + ε₁f` and earth twist `ω_ie − ε₁g − ε₂v′`.
pub fn twists_first_type(
    omega_ib_b: &Vec3,
    f_b: &Vec3,
    g_e: &Vec3,
    v_prime: &Vec3,
    omega_ie: &Vec3,
) -> (TridentTwist, TridentTwist) {
    (
        TridentTwist::new(*omega_ib_b, *f_b, Vec3::zeros()),
        TridentTwist::new(*omega_ie, -g_e, -v_prime),
    )
}

/// Body twist `ω_ib + ε₁f + ε₂C_e^b v′` and earth twist `ω_ie − ε₁g`.
pub fn twists_second_type(
    omega_ib_b: &Vec3,
    f_b: &Vec3,
    g_e: &Vec3,
    v_prime: &Vec3,
    omega_ie: &Vec3,
    q_eb: &Quaternion,
) -> (TridentTwist, TridentTwist) {
    let v_b = q_eb.conj().rotate(v_prime);
    (
        TridentTwist::new(*omega_ib_b, *f_b, v_b),
        TridentTwist::new(*omega_ie, -g_e, Vec3::zeros()),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// `(Δσ, Δσ′, Δσ″)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorTriple {
    pub att: Vec3,
    pub vel: Vec3,
    pub pos: Vec3,
}

impl ErrorTriple {
    pub fn new(att: Vec3, vel: Vec3, pos: Vec3) -> Self {
        ErrorTriple { att, vel, pos }
    }

    pub fn zeros() -> Self {
        ErrorTriple::new(Vec3::zeros(), Vec3::zeros(), Vec3::zeros())
    }

    pub fn norm(&self) -> f64 {
        (self.att.norm_squared() + self.vel.norm_squared() + self.pos.norm_squared()).sqrt()
    }
}

/// Left error from `conj(est)∘truth`.
pub fn tq_error_left(est: &TridentQuaternion, truth: &TridentQuaternion) -> Result<ErrorTriple, Error> {
    tq_error(est, truth, Side::Left)
}

/// Right error from `truth∘conj(est)`.
pub fn tq_error_right(est: &TridentQuaternion, truth: &TridentQuaternion) -> Result<ErrorTriple, Error> {
    tq_error(est, truth, Side::Right)
}

pub fn tq_error(est: &TridentQuaternion, truth: &TridentQuaternion, side: Side) -> Result<ErrorTriple, Error> {
    if !est.is_pose() || !truth.is_pose() {
        return Err(Error::InvalidInput("error extraction needs pose trident quaternions".into()));
    }
    let d = match side {
        Side::Left => est.conj() * *truth,
        Side::Right => *truth * est.conj(),
    };
    let dc = d.real.conj();
    Ok(ErrorTriple {
        att: d.real.to_rotation_vector(),
        vel: (d.eps1 * dc).vec() * 2.0,
        pos: (d.eps2 * dc).vec() * 2.0,
    })
}

/// Unit pose increment `exp(Δσ/2) + ε₁½Δσ′∘E + ε₂½Δσ″∘E`.
pub fn error_increment(delta: &ErrorTriple) -> TridentQuaternion {
    let e = if delta.att.norm() <= 1e-3 {
        Quaternion::from_parts(1.0, &(delta.att * 0.5)).normalized()
    } else {
        Quaternion::from_rotation_vector(&delta.att)
    };
    pack(&e, &delta.vel, &delta.pos)
}

/// Retraction inverse to [`tq_error`].
pub fn tq_inject(est: &TridentQuaternion, delta: &ErrorTriple, side: Side) -> TridentQuaternion {
    let inc = error_increment(delta);
    let out = match side {
        Side::Left => *est * inc,
        Side::Right => inc * *est,
    };
    out.normalized()
}

/// `(v′)∘q` versus `q∘(C_e^b v′)`: the frame identity behind the body-frame form.
pub fn body_frame_identity_residual(q: &Quaternion, v_prime: &Vec3) -> f64 {
    let lhs = Quaternion::pure(v_prime) * *q;
    let rhs = *q * Quaternion::pure(&q.conj().rotate(v_prime));
    (lhs - rhs).norm()
}
