//! Closed-form sub-Riemannian distance on the Heisenberg group.
//!
//! A unit-speed geodesic from the origin whose horizontal projection turns through the angle
//! `φ ∈ [0, 2π]` over length `L` ends at horizontal chord `c = 2L sin(φ/2)/φ` and height
//! `z = L²(φ − sin φ)/(2φ²)` (the area of the circular segment). The ratio `z/c²` is an
//! increasing function of `φ` alone, so `d(0, (x, z))` reduces to one bracketed scalar root.
//! In H^{2n+1} the minimizers stay in a complex line, so the same formula holds with `c = |x|`.

use std::f64::consts::PI;

use super::GeodesicError;
use crate::model_space::{relative, Point};

/// `x − sin x` without cancellation near zero.
pub(crate) fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        let mut term = x * x2 / 6.0;
        let mut sum = term;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= -x2 / ((2.0 * k - 2.0) * (2.0 * k - 1.0));
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        x - x.sin()
    }
}

/// `z/c²` as a function of the half-angle `ψ = φ/2 ∈ (0, π/2]`.
fn ratio_small(psi: f64) -> f64 {
    x_minus_sin(2.0 * psi) / (8.0 * psi.sin().powi(2))
}

/// `z/c²` as a function of `ε = π − ψ ∈ (0, π/2]`.
fn ratio_large(eps: f64) -> f64 {
    (2.0 * (PI - eps) + (2.0 * eps).sin()) / (8.0 * eps.sin().powi(2))
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64, increasing: bool) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-16 * hi {
            break;
        }
        let above = f(mid) > target;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sub-Riemannian distance from the origin to a point with horizontal norm `c` and height `z`.
pub fn try_distance_from_origin(c: f64, z: f64) -> Result<f64, GeodesicError> {
    if !(c.is_finite() && z.is_finite()) || c < 0.0 {
        return Err(GeodesicError::NonFinite);
    }
    let z = z.abs();
    if z == 0.0 {
        return Ok(c);
    }
    if c == 0.0 {
        return Ok(2.0 * (PI * z).sqrt());
    }
    let rho = z / (c * c);
    if !rho.is_finite() {
        return Ok(2.0 * (PI * z).sqrt());
    }
    let split = PI / 8.0;
    if rho <= split {
        if rho > ratio_small(PI / 2.0) * (1.0 + 1e-12) {
            return Err(GeodesicError::BracketFailure { ratio: rho });
        }
        let psi = bisect(ratio_small, 0.0, PI / 2.0, rho, true);
        let scale = if psi < 1e-8 { 1.0 + psi * psi / 6.0 } else { psi / psi.sin() };
        Ok(c * scale)
    } else {
        let eps = bisect(ratio_large, 0.0, PI / 2.0, rho, false);
        if eps <= 0.0 {
            return Err(GeodesicError::BracketFailure { ratio: rho });
        }
        Ok(c * (PI - eps) / eps.sin())
    }
}

/// Infallible form used inside Monte Carlo loops; inputs there are finite by construction.
pub fn distance_from_origin(c: f64, z: f64) -> f64 {
    try_distance_from_origin(c, z).unwrap_or(f64::NAN)
}

/// `d(a, b) = d(0, a⁻¹b)`.
pub fn closed_form_distance(a: &Point, b: &Point) -> Result<f64, GeodesicError> {
    if a.x.len() != b.x.len() {
        return Err(GeodesicError::DimensionMismatch);
    }
    let q = relative(a, b);
    try_distance_from_origin(q.horizontal_norm(), q.z)
}
