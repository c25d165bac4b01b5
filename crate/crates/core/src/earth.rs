//! Earth constants, J2 gravitation and frame utilities.
//!
//! The navigation frame is north-up-east (NUE).

use serde::{Deserialize, Serialize};

use crate::so3::skew;
use crate::triquat::{Mat3, Vec3};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarthParams {
    /// rad/s
    pub omega_ie: f64,
    /// m
    pub semi_major: f64,
    pub flattening: f64,
    /// m³/s²
    pub gm: f64,
    pub j2: f64,
}

impl Default for EarthParams {
    fn default() -> Self {
        EarthParams {
            omega_ie: 7.292115e-5,
            semi_major: 6_378_137.0,
            flattening: 1.0 / 298.257223563,
            gm: 3.986004418e14,
            j2: 1.082_626_683_55e-3,
        }
    }
}

impl EarthParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.omega_ie > 0.0) {
            return Err(Error::Config("earth.omega_ie must be positive".into()));
        }
        if !(self.semi_major > 6e6) {
            return Err(Error::Config("earth.semi_major must exceed 6e6 m".into()));
        }
        if !(0.0..0.1).contains(&self.flattening) || !(self.gm > 0.0) {
            return Err(Error::Config("earth.flattening or earth.gm out of range".into()));
        }
        Ok(())
    }

    pub fn omega_vec(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.omega_ie)
    }

    pub fn semi_minor(&self) -> f64 {
        self.semi_major * (1.0 - self.flattening)
    }

    pub fn e2(&self) -> f64 {
        self.flattening * (2.0 - self.flattening)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    /// rad
    pub latitude: f64,
    /// rad
    pub longitude: f64,
    /// m
    pub height: f64,
}

impl GeoPosition {
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Self {
        GeoPosition { latitude, longitude, height }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, height: f64) -> Self {
        GeoPosition::new(lat_deg.to_radians(), lon_deg.to_radians(), height)
    }
}

fn check_radius(r: &Vec3) -> Result<f64, Error> {
    let n = r.norm();
    if !(n > 1e6) {
        return Err(Error::Domain(format!("position radius {n:.3e} m is below 1e6 m")));
    }
    Ok(n)
}

/// Mass attraction (no centrifugal term), central plus J2.
pub fn gravitation_e(r_e: &Vec3, p: &EarthParams) -> Result<Vec3, Error> {
    let r = check_radius(r_e)?;
    Ok(gravitation_unchecked(r_e, r, p))
}

fn gravitation_unchecked(r_e: &Vec3, r: f64, p: &EarthParams) -> Vec3 {
    let z = r_e.z;
    let r2 = r * r;
    let r3 = r2 * r;
    let r5 = r3 * r2;
    let k = 1.5 * p.j2 * p.gm * p.semi_major * p.semi_major;
    let alpha = 1.0 / r5 - 5.0 * z * z / (r5 * r2);
    let beta = 2.0 * z / r5;
    -r_e * (p.gm / r3) - (r_e * alpha + Vec3::new(0.0, 0.0, beta)) * k
}

/// Gravity: gravitation minus centripetal acceleration of the rotating frame.
pub fn gravity_e(r_e: &Vec3, p: &EarthParams) -> Result<Vec3, Error> {
    let w = p.omega_vec();
    Ok(gravitation_e(r_e, p)? - w.cross(&w.cross(r_e)))
}

/// Geocentric radius of the ellipsoid along `r̂`.
pub fn geocentric_radius(r_e: &Vec3, p: &EarthParams) -> f64 {
    let a = p.semi_major;
    let b = p.semi_minor();
    let rho = (r_e.x * r_e.x + r_e.y * r_e.y).sqrt();
    let phi = r_e.z.atan2(rho);
    let (s, c) = phi.sin_cos();
    a * b / (b * b * c * c + a * a * s * s).sqrt()
}

/// Rank-one gradient `−2 g r̂ᵀ / r_eS`.
pub fn gravity_gradient(r_e: &Vec3, p: &EarthParams) -> Result<Mat3, Error> {
    let r = check_radius(r_e)?;
    let g = gravitation_unchecked(r_e, r, p);
    let res = geocentric_radius(r_e, p);
    Ok(-2.0 * g * (r_e / r).transpose() / res)
}

/// Exact Jacobian of [`gravitation_e`].
pub fn gravity_gradient_full(r_e: &Vec3, p: &EarthParams) -> Result<Mat3, Error> {
    let r = check_radius(r_e)?;
    let z = r_e.z;
    let r2 = r * r;
    let r3 = r2 * r;
    let r5 = r3 * r2;
    let r7 = r5 * r2;
    let r9 = r7 * r2;
    let ez = Vec3::z();
    let central = -(Mat3::identity() - 3.0 * r_e * r_e.transpose() / r2) * (p.gm / r3);
    let k = 1.5 * p.j2 * p.gm * p.semi_major * p.semi_major;
    let alpha = 1.0 / r5 - 5.0 * z * z / r7;
    let d_alpha = r_e * (-5.0 / r7 + 35.0 * z * z / r9) - ez * (10.0 * z / r7);
    let d_beta = ez * (2.0 / r5) - r_e * (10.0 * z / r7);
    let j2 = -(Mat3::identity() * alpha + r_e * d_alpha.transpose() + ez * d_beta.transpose()) * k;
    Ok(central + j2)
}

/// `C_n^e` with columns north, up, east.
pub fn c_en(geo: &GeoPosition) -> Mat3 {
    let (sl, cl) = geo.latitude.sin_cos();
    let (so, co) = geo.longitude.sin_cos();
    let n = Vec3::new(-sl * co, -sl * so, cl);
    let u = Vec3::new(cl * co, cl * so, sl);
    let e = Vec3::new(-so, co, 0.0);
    Mat3::from_columns(&[n, u, e])
}

pub fn lla_to_ecef(geo: &GeoPosition, p: &EarthParams) -> Vec3 {
    let e2 = p.e2();
    let (sl, cl) = geo.latitude.sin_cos();
    let (so, co) = geo.longitude.sin_cos();
    let n = p.semi_major / (1.0 - e2 * sl * sl).sqrt();
    Vec3::new(
        (n + geo.height) * cl * co,
        (n + geo.height) * cl * so,
        (n * (1.0 - e2) + geo.height) * sl,
    )
}

pub fn ecef_to_lla(r: &Vec3, p: &EarthParams) -> GeoPosition {
    let a = p.semi_major;
    let e2 = p.e2();
    let rho = (r.x * r.x + r.y * r.y).sqrt();
    let lon = r.y.atan2(r.x);
    let mut lat = r.z.atan2(rho * (1.0 - e2));
    let mut h = 0.0;
    for _ in 0..8 {
        let s = lat.sin();
        let n = a / (1.0 - e2 * s * s).sqrt();
        h = if lat.cos().abs() > 1e-3 {
            rho / lat.cos() - n
        } else {
            r.z / s - n * (1.0 - e2)
        };
        lat = r.z.atan2(rho * (1.0 - e2 * n / (n + h)));
    }
    GeoPosition::new(lat, lon, h)
}

/// `ω_ie×`.
pub fn omega_skew(p: &EarthParams) -> Mat3 {
    skew(&p.omega_vec())
}
