//! Test-side oracles. Nothing here calls the library's algebra: quaternions
//! are plain `[w, x, y, z]` arrays multiplied through 4×4 matrices, rotations
//! come from Rodrigues' formula, and the matrix exponential is a dense
//! Taylor series with scaling and squaring.
#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3, Matrix4, SMatrix, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tqnav::earth::{c_en, lla_to_ecef, EarthParams, GeoPosition};
use tqnav::harness::c_bn_from_euler;
use tqnav::mech::ImuSample;
use tqnav::triquat::{NavState, Quaternion, TridentQuaternion};

pub type V3 = Vector3<f64>;
pub type M3 = Matrix3<f64>;
pub type Q4 = Vector4<f64>;
/// Trident quaternion as `[real; eps1; eps2]`.
pub type T12 = SMatrix<f64, 12, 1>;

pub const DEG: f64 = std::f64::consts::PI / 180.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(r: &mut ChaCha8Rng, scale: f64) -> V3 {
    V3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)) * scale
}

pub fn rand_q4(r: &mut ChaCha8Rng) -> Q4 {
    Q4::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

pub fn rand_unit(r: &mut ChaCha8Rng) -> Q4 {
    loop {
        let q = rand_q4(r);
        let n = q.norm();
        if n > 0.1 {
            return q / n;
        }
    }
}

// ---------- quaternions ----------

pub fn to4(q: &Quaternion) -> Q4 {
    Q4::new(q.w, q.x, q.y, q.z)
}

pub fn from4(q: &Q4) -> Quaternion {
    Quaternion::new(q[0], q[1], q[2], q[3])
}

/// `L(a)` with `a∘b = L(a)·b`.
pub fn lmat(a: &Q4) -> Matrix4<f64> {
    let (w, x, y, z) = (a[0], a[1], a[2], a[3]);
    Matrix4::new(w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w)
}

pub fn qmul(a: &Q4, b: &Q4) -> Q4 {
    lmat(a) * b
}

pub fn qconj(a: &Q4) -> Q4 {
    Q4::new(a[0], -a[1], -a[2], -a[3])
}

pub fn pure(v: &V3) -> Q4 {
    Q4::new(0.0, v.x, v.y, v.z)
}

pub fn vpart(q: &Q4) -> V3 {
    V3::new(q[1], q[2], q[3])
}

pub fn qexp(phi: &V3) -> Q4 {
    let a = phi.norm();
    if a == 0.0 {
        return Q4::new(1.0, 0.0, 0.0, 0.0);
    }
    let u = phi / a;
    let (s, c) = (0.5 * a).sin_cos();
    Q4::new(c, u.x * s, u.y * s, u.z * s)
}

/// Rotation vector of a unit quaternion, angle in [0, π].
pub fn qlog(q: &Q4) -> V3 {
    let q = if q[0] < 0.0 { -q } else { *q };
    let v = vpart(&q);
    let s = v.norm();
    if s < 1e-300 {
        return V3::zeros();
    }
    v * (2.0 * s.atan2(q[0]) / s)
}

pub fn qrot(q: &Q4, v: &V3) -> V3 {
    vpart(&qmul(&qmul(q, &pure(v)), &qconj(q)))
}

pub fn qmatrix(q: &Q4) -> M3 {
    M3::from_columns(&[qrot(q, &V3::x()), qrot(q, &V3::y()), qrot(q, &V3::z())])
}

pub fn skew(v: &V3) -> M3 {
    M3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn rodrigues(phi: &V3) -> M3 {
    let a = phi.norm();
    if a < 1e-12 {
        return M3::identity() + skew(phi);
    }
    let k = skew(&(phi / a));
    M3::identity() + k * a.sin() + k * k * (1.0 - a.cos())
}

/// Rotation vector of a rotation matrix, angle below π.
pub fn mat_log(r: &M3) -> V3 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let a = c.acos();
    let w = V3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if a < 1e-8 {
        return w * 0.5;
    }
    w * (a / (2.0 * a.sin()))
}

// ---------- trident quaternions ----------

pub fn t12(t: &TridentQuaternion) -> T12 {
    let mut o = T12::zeros();
    o.fixed_rows_mut::<4>(0).copy_from(&to4(&t.real));
    o.fixed_rows_mut::<4>(4).copy_from(&to4(&t.eps1));
    o.fixed_rows_mut::<4>(8).copy_from(&to4(&t.eps2));
    o
}

pub fn from12(t: &T12) -> TridentQuaternion {
    TridentQuaternion {
        real: from4(&t.fixed_rows::<4>(0).into_owned()),
        eps1: from4(&t.fixed_rows::<4>(4).into_owned()),
        eps2: from4(&t.fixed_rows::<4>(8).into_owned()),
    }
}

pub fn slot(t: &T12, i: usize) -> Q4 {
    t.fixed_rows::<4>(4 * i).into_owned()
}

pub fn make12(a: &Q4, b: &Q4, c: &Q4) -> T12 {
    let mut o = T12::zeros();
    o.fixed_rows_mut::<4>(0).copy_from(a);
    o.fixed_rows_mut::<4>(4).copy_from(b);
    o.fixed_rows_mut::<4>(8).copy_from(c);
    o
}

/// Left-multiplication matrix of `a` in the truncated algebra: the product of
/// `(a₀ + ε₁a₁ + ε₂a₂)(b₀ + ε₁b₁ + ε₂b₂)` keeping only terms of degree ≤ 1 in ε.
pub fn tmat(a: &T12) -> SMatrix<f64, 12, 12> {
    let l0 = lmat(&slot(a, 0));
    let mut m = SMatrix::<f64, 12, 12>::zeros();
    for i in 0..3 {
        m.fixed_view_mut::<4, 4>(4 * i, 4 * i).copy_from(&l0);
    }
    m.fixed_view_mut::<4, 4>(4, 0).copy_from(&lmat(&slot(a, 1)));
    m.fixed_view_mut::<4, 4>(8, 0).copy_from(&lmat(&slot(a, 2)));
    m
}

pub fn tmul(a: &T12, b: &T12) -> T12 {
    tmat(a) * b
}

pub fn tconj(a: &T12) -> T12 {
    make12(&qconj(&slot(a, 0)), &qconj(&slot(a, 1)), &qconj(&slot(a, 2)))
}

/// `q + ε₁½v′∘q + ε₂½r∘q`.
pub fn tpack(q: &Q4, v: &V3, r: &V3) -> T12 {
    make12(q, &(qmul(&pure(v), q) * 0.5), &(qmul(&pure(r), q) * 0.5))
}

pub fn tpack_nav(s: &NavState) -> T12 {
    tpack(&to4(&s.q_eb), &s.v_prime, &s.r_e)
}

pub fn tunpack(t: &T12) -> (Q4, V3, V3) {
    let q = slot(t, 0);
    let qc = qconj(&q);
    (q, vpart(&qmul(&slot(t, 1), &qc)) * 2.0, vpart(&qmul(&slot(t, 2), &qc)) * 2.0)
}

pub fn nav_of(t: &T12, time: f64) -> NavState {
    let (q, v, r) = tunpack(t);
    NavState::new(from4(&q), v, r, time)
}

/// Exact `(Δσ, Δσ′, Δσ″)` of `conj(est)∘truth` (left) or `truth∘conj(est)` (right).
pub fn error_oracle(est: &NavState, truth: &NavState, left: bool) -> (V3, V3, V3) {
    let (e, t) = (tpack_nav(est), tpack_nav(truth));
    let d = if left { tmul(&tconj(&e), &t) } else { tmul(&t, &tconj(&e)) };
    let (q, v, r) = tunpack(&d);
    (qlog(&q), v, r)
}

/// Truth whose error relative to `est` is `(a, v, p)` to first order.
pub fn perturb_pose(est: &NavState, a: &V3, v: &V3, p: &V3, left: bool) -> NavState {
    let inc = tpack(&qexp(a), v, p);
    let e = tpack_nav(est);
    let t = if left { tmul(&e, &inc) } else { tmul(&inc, &e) };
    nav_of(&t, est.time)
}

// ---------- dense linear algebra ----------

/// `exp(A)` by scaling and squaring with a 20-term Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|x| x.abs()).fold(0.0, f64::max) * n as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

pub fn max_abs<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::storage::Storage<f64, R, C>>(
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

// ---------- fixtures ----------

pub fn earth() -> EarthParams {
    EarthParams::default()
}

/// A moving, tilted vehicle near 30° N.
pub fn moving_state() -> NavState {
    let e = earth();
    let geo = GeoPosition::from_degrees(30.0, 114.0, 20.0);
    let r = lla_to_ecef(&geo, &e);
    let q = Quaternion::from_matrix(&(c_en(&geo) * c_bn_from_euler([3.0, -4.0, 40.0])));
    let v_e = V3::new(3.0, -2.0, 1.0);
    NavState::new(q, v_e + e.omega_vec().cross(&r), r, 0.0)
}

pub fn turning_imu() -> ImuSample {
    ImuSample::new(0.0, V3::new(0.01, -0.02, 0.03), V3::new(0.3, 9.8, -0.2))
}

/// Upper 97.5% and lower 2.5% points of χ²ₙ/n.
pub fn chi2_mean_band(n: usize) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let c = ChiSquared::new(n as f64).unwrap();
    (c.inverse_cdf(0.025) / n as f64, c.inverse_cdf(0.975) / n as f64)
}

// ---------- error-state oracles ----------

pub type V21 = SMatrix<f64, 21, 1>;
pub type M21 = SMatrix<f64, 21, 21>;
pub type M3x21 = SMatrix<f64, 3, 21>;

use tqnav::earth::gravitation_e;
use tqnav::errmodel::ErrorModelKind;
use tqnav::meas::OdoParams;

/// Truth at group error `(exp(a), v, p)` from `est`, adding each offset to
/// the large ECEF vectors only once.
pub fn perturb_group(est: &NavState, a: &V3, v: &V3, p: &V3, left: bool) -> NavState {
    let c = qmatrix(&to4(&est.q_eb));
    let ra = qexp(a);
    if left {
        let q = qmul(&to4(&est.q_eb), &ra);
        NavState::new(from4(&q), est.v_prime + c * v, est.r_e + c * p, est.time)
    } else {
        let q = qmul(&ra, &to4(&est.q_eb));
        let d = rodrigues(a) - M3::identity();
        NavState::new(from4(&q), est.v_prime + (d * est.v_prime + v), est.r_e + (d * est.r_e + p), est.time)
    }
}

/// Diagonal signs mapping a kind's error onto its world-centric parent.
pub fn kind_signs(kind: ErrorModelKind) -> V21 {
    let mut t = V21::repeat(1.0);
    match kind {
        ErrorModelKind::RobocentricRight => t.fixed_rows_mut::<3>(0).fill(-1.0),
        ErrorModelKind::RobocentricLeft => {
            t.fixed_rows_mut::<3>(0).fill(-1.0);
            t.fixed_rows_mut::<3>(9).fill(-1.0);
        }
        _ => {}
    }
    t
}

fn is_left(kind: ErrorModelKind) -> Option<bool> {
    match kind {
        ErrorModelKind::LeftTrident | ErrorModelKind::RobocentricRight => Some(true),
        ErrorModelKind::RightTrident | ErrorModelKind::RobocentricLeft => Some(false),
        ErrorModelKind::Traditional => None,
    }
}

fn b3(x: &V21, i: usize) -> V3 {
    x.fixed_rows::<3>(i).into_owned()
}

/// Truth state, IMU rates and odometer parameters whose error relative to the
/// estimate is `d` in the coordinates of `kind`. Biases and parameters are
/// estimate minus truth.
pub fn truth_from_error(
    kind: ErrorModelKind,
    est: &NavState,
    imu: &ImuSample,
    p: &OdoParams,
    d: &V21,
    e: &EarthParams,
) -> (NavState, ImuSample, OdoParams) {
    let d = d.component_mul(&kind_signs(kind));
    let (a, v, r) = (b3(&d, 0), b3(&d, 3), b3(&d, 6));
    let truth = match is_left(kind) {
        Some(left) => perturb_group(est, &a, &v, &r, left),
        None => {
            let w = e.omega_vec();
            let q = qmul(&qexp(&-a), &to4(&est.q_eb));
            let pos = est.r_e - r;
            let ve = est.v_prime - w.cross(&est.r_e) - v;
            NavState::new(from4(&q), ve + w.cross(&pos), pos, est.time)
        }
    };
    let ti = ImuSample::new(imu.t, imu.gyro + b3(&d, 9), imu.accel + b3(&d, 12));
    let tp = OdoParams { k: p.k - d[20], psi: p.psi - d[15], theta: p.theta - d[16], lever: p.lever - b3(&d, 17) };
    (truth, ti, tp)
}

/// Rates of attitude quaternion, transformed velocity and position.
pub fn nav_rates(s: &NavState, imu: &ImuSample, e: &EarthParams) -> (Q4, V3, V3) {
    let q = to4(&s.q_eb);
    let w = e.omega_vec();
    let qd = qmul(&q, &pure(&imu.gyro)) * 0.5 - qmul(&pure(&w), &q) * 0.5;
    let vd = qmatrix(&q) * imu.accel + gravitation_e(&s.r_e, e).unwrap() - w.cross(&s.v_prime);
    let rd = s.v_prime - w.cross(&s.r_e);
    (qd, vd, rd)
}

/// Derivative of the rotation log at `q` along `qd`.
fn log_rate(q: &Q4, qd: &Q4) -> V3 {
    let h = 1e-3;
    (qlog(&(q + qd * h)) - qlog(&(q - qd * h))) / (2.0 * h)
}

/// Instantaneous rate of the error vector (pose blocks; biases and parameters
/// are constant) for an estimate and truth driven by their own IMU rates.
/// Pose errors are the group errors `X̂⁻¹X` (left) and `XX̂⁻¹` (right) of the
/// extended pose `(C, v′, r)`, differentiated by the product rule.
pub fn error_rate(
    kind: ErrorModelKind,
    est: &NavState,
    est_imu: &ImuSample,
    truth: &NavState,
    truth_imu: &ImuSample,
    e: &EarthParams,
) -> V21 {
    let w = e.omega_vec();
    let (qe, qt) = (to4(&est.q_eb), to4(&truth.q_eb));
    let (ce, ct) = (qmatrix(&qe), qmatrix(&qt));
    let (qde, vde, rde) = nav_rates(est, est_imu, e);
    let (qdt, vdt, rdt) = nav_rates(truth, truth_imu, e);
    let (ddv, ddr) = (vdt - vde, rdt - rde);
    let mut out = V21::zeros();
    let (att, vel, pos) = match is_left(kind) {
        Some(true) => {
            // Ĉᵀ(x − x̂) and its rate with Ĉ̇ᵀ = −ω̂×Ĉᵀ + Ĉᵀω_ie×
            let cdt = -skew(&est_imu.gyro) * ce.transpose() + ce.transpose() * skew(&w);
            let q = qmul(&qconj(&qe), &qt);
            let qd = qmul(&qconj(&qde), &qt) + qmul(&qconj(&qe), &qdt);
            (
                log_rate(&q, &qd),
                cdt * (truth.v_prime - est.v_prime) + ce.transpose() * ddv,
                cdt * (truth.r_e - est.r_e) + ce.transpose() * ddr,
            )
        }
        Some(false) => {
            // x − R x̂ with R = CĈᵀ and Ṙx = C((ω − ω̂)×Ĉᵀx) − ω_ie×Rx + R(ω_ie×x)
            let r = ct * ce.transpose();
            let rdot = |x: &V3| {
                ct * (truth_imu.gyro - est_imu.gyro).cross(&(ce.transpose() * x)) - w.cross(&(r * x)) + r * w.cross(x)
            };
            // d/dt(x − Rx̂) = (ẋ − x̂̇) − Ṙx̂ − (R − I)x̂̇
            let lin = |dd: &V3, x: &V3, xd: &V3| dd - rdot(x) - (r - M3::identity()) * xd;
            let q = qmul(&qt, &qconj(&qe));
            let qd = qmul(&qdt, &qconj(&qe)) + qmul(&qt, &qconj(&qde));
            (
                log_rate(&q, &qd),
                lin(&ddv, &est.v_prime, &vde),
                lin(&ddr, &est.r_e, &rde),
            )
        }
        None => {
            let q = qmul(&qe, &qconj(&qt));
            let qd = qmul(&qde, &qconj(&qt)) + qmul(&qe, &qconj(&qdt));
            (log_rate(&q, &qd), -(ddv - w.cross(&ddr)), -ddr)
        }
    };
    out.fixed_rows_mut::<3>(0).copy_from(&att);
    out.fixed_rows_mut::<3>(3).copy_from(&vel);
    out.fixed_rows_mut::<3>(6).copy_from(&pos);
    out.component_mul(&kind_signs(kind))
}

/// `F` by central differences of the error rate, one column per error direction.
pub fn fd_system(kind: ErrorModelKind, est: &NavState, imu: &ImuSample, e: &EarthParams, eps: f64) -> M21 {
    let p = OdoParams { k: 59.8, psi: 0.0, theta: 0.0, lever: V3::zeros() };
    let mut f = M21::zeros();
    for i in 0..21 {
        let step = fd_step(i, eps);
        let mut rate = [V21::zeros(); 2];
        for (j, s) in [1.0, -1.0].iter().enumerate() {
            let mut d = V21::zeros();
            d[i] = s * step;
            let (t, ti, _) = truth_from_error(kind, est, imu, &p, &d, e);
            rate[j] = error_rate(kind, est, imu, &t, &ti, e);
        }
        f.set_column(i, &((rate[0] - rate[1]) / (2.0 * step)));
    }
    f
}

/// Odometer output `diag(K,1,1)·M₃(θ)M₂(ψ)·(Cᵀvᵉ + ω_eb×l)` for a given `vᵉ`.
pub fn odo_oracle(q: &Q4, ve: &V3, imu: &ImuSample, p: &OdoParams, e: &EarthParams) -> V3 {
    let ct = qmatrix(q).transpose();
    let web = imu.gyro - ct * e.omega_vec();
    let cbm = rodrigues(&(V3::z() * p.theta)).transpose() * rodrigues(&(V3::y() * p.psi)).transpose();
    let mut y = cbm * (ct * ve + web.cross(&p.lever));
    y.x *= p.k;
    y
}

/// Step used along error direction `i`: position directions take `1e3·eps`
/// metres, since `eps` metres is only a few ulp of an ECEF coordinate.
pub fn fd_step(i: usize, eps: f64) -> f64 {
    if (6..9).contains(&i) {
        eps * 1e3
    } else {
        eps
    }
}

/// `H` with `H·δ ≈ ŷ − y(truth)`, by central differences.
pub fn fd_measurement(
    odometer: bool,
    kind: ErrorModelKind,
    est: &NavState,
    imu: &ImuSample,
    p: &OdoParams,
    e: &EarthParams,
    eps: f64,
) -> M3x21 {
    let w = e.omega_vec();
    let ve_est = est.v_prime - w.cross(&est.r_e);
    let mut h = M3x21::zeros();
    for i in 0..21 {
        let step = fd_step(i, eps);
        let mut y = [V3::zeros(); 2];
        for (j, s) in [1.0, -1.0].iter().enumerate() {
            let mut d = V21::zeros();
            d[i] = s * step;
            let (t, ti, tp) = truth_from_error(kind, est, imu, p, &d, e);
            let ve = ve_est + ((t.v_prime - est.v_prime) - w.cross(&(t.r_e - est.r_e)));
            y[j] = if odometer { odo_oracle(&to4(&t.q_eb), &ve, &ti, &tp, e) } else { ve };
        }
        h.set_column(i, &((y[1] - y[0]) / (2.0 * step)));
    }
    h
}

/// Largest column-wise relative error. Columns below `1e-3` in norm are
/// judged against that floor.
pub fn column_rel_error<const R: usize>(model: &SMatrix<f64, R, 21>, fd: &SMatrix<f64, R, 21>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..21 {
        let (m, f) = (model.column(i), fd.column(i));
        let n = m.norm();
        let err = (m - f).norm();
        worst = worst.max(err / n.max(1e-3));
    }
    worst
}

/// First-order coordinates `(φ, J⁻¹v, J⁻¹r)` of the extended-pose error
/// `χ̂⁻¹χ` (left) or `χχ̂⁻¹` (right), built from 5×5 matrices.
pub fn group_error_coords(est: &NavState, truth: &NavState, left: bool) -> (V3, V3, V3) {
    let chi = |s: &NavState| {
        let mut x = SMatrix::<f64, 5, 5>::identity();
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&qmatrix(&to4(&s.q_eb)));
        x.fixed_view_mut::<3, 1>(0, 3).copy_from(&s.v_prime);
        x.fixed_view_mut::<3, 1>(0, 4).copy_from(&s.r_e);
        x
    };
    let (xe, xt) = (chi(est), chi(truth));
    let inv = xe.try_inverse().unwrap();
    let eta = if left { inv * xt } else { xt * inv };
    let r: M3 = eta.fixed_view::<3, 3>(0, 0).into_owned();
    let phi = mat_log(&r);
    let a = phi.norm();
    let k = skew(&phi);
    let c = if a < 1e-6 { 1.0 / 12.0 } else { 1.0 / (a * a) - (1.0 + a.cos()) / (2.0 * a * a.sin()) };
    let jinv = M3::identity() - k * 0.5 + k * k * c;
    (phi, jinv * eta.fixed_view::<3, 1>(0, 3), jinv * eta.fixed_view::<3, 1>(0, 4))
}

/// Random symmetric positive-definite 21×21 matrix with entries of order one.
pub fn rand_spd(r: &mut ChaCha8Rng) -> M21 {
    let a = M21::from_fn(|_, _| r.random_range(-1.0..1.0));
    a * a.transpose() / 21.0 + M21::identity() * 0.1
}
