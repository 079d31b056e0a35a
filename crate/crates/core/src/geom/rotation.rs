//! Elementary matrix factors of the twisted affine transform.

use super::Mat3;

/// Rotation about x.
pub fn roll(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    Mat3::from_rows([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

/// Rotation about y.
pub fn pitch(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::from_rows([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

/// Rotation about z.
pub fn yaw(psi: f64) -> Mat3 {
    let (s, c) = psi.sin_cos();
    Mat3::from_rows([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

pub fn scaling(ax: f64, ay: f64, az: f64) -> Mat3 {
    Mat3::diag(ax, ay, az)
}

pub fn shear(sxy: f64, sxz: f64, syz: f64) -> Mat3 {
    Mat3::from_rows([[1.0, sxy, sxz], [0.0, 1.0, syz], [0.0, 0.0, 1.0]])
}

/// `yaw(ψ) · pitch(θ) · roll(φ)`.
pub fn euler(phi: f64, theta: f64, psi: f64) -> Mat3 {
    yaw(psi) * pitch(theta) * roll(phi)
}

pub fn reflection(rx: f64, ry: f64, rz: f64) -> Mat3 {
    Mat3::diag(rx, ry, rz)
}

/// Projector onto the xy-plane.
pub const XY_PROJECTOR: Mat3 = Mat3::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]);

/// `P · pitch(θt) · P · roll(φt) + (I − P)` with `P = diag(1, 1, 0)`.
///
/// Only the xy-rows of the rotated vector survive, so the z-coordinate passes
/// through unchanged. The matrix is orthogonal only when both angles are in
/// `{0, π}`; at intermediate angles it contracts the y (roll) or x (pitch)
/// coordinate by the cosine.
pub fn twist(phi_t: f64, theta_t: f64) -> Mat3 {
    let p = XY_PROJECTOR;
    p * pitch(theta_t) * p * roll(phi_t) + (Mat3::IDENTITY - p)
}

/// Sigmoid-scheduled twist angle `amplitude / (1 + e^(−ρ·x))`.
pub fn twist_angle(x: f64, amplitude: f64, rho_sig: f64) -> f64 {
    amplitude / (1.0 + (-rho_sig * x).exp())
}
