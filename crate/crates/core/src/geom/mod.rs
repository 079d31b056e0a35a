//! Vectors, unit quaternions, 3×3 matrices and the Gaussian RBF kernel.

mod mat3;
mod quat;
pub mod rotation;
mod vec3;

pub use mat3::Mat3;
pub use quat::{quat_exp, quat_log, quat_pow, PureQuaternion, UnitQuaternion};
pub use rotation::twist_angle;
pub use vec3::Vec3;

use crate::Error;

/// Gaussian kernel `exp(−ρ²‖p − c‖²)`.
pub fn rbf(p: Vec3, rho: f64, c: Vec3) -> Result<f64, Error> {
    if !p.is_finite() || !c.is_finite() || !rho.is_finite() {
        return Err(Error::Domain("rbf: non-finite input".into()));
    }
    if rho < 0.0 {
        return Err(Error::Domain(format!("rbf: negative shape parameter {rho}")));
    }
    Ok(kernel(p, rho, c))
}

/// Unchecked form of [`rbf`] for inner loops.
#[inline]
pub(crate) fn kernel(p: Vec3, rho: f64, c: Vec3) -> f64 {
    (-(rho * rho) * (p - c).norm_squared()).exp()
}
