//! The Heisenberg group H^{2n+1} in exponential coordinates.
//!
//! Coordinates are ordered `(x_1..x_n, y_1..y_n, z)`. The left-invariant frame is
//!
//! ```text
//! X_i = ∂_{x_i} − (y_i/2) ∂_z,   Y_i = ∂_{y_i} + (x_i/2) ∂_z,   T = ∂_z
//! ```
//!
//! so that `[X_i, Y_i] = T` and every other bracket vanishes. The group law is
//! `(a, c)·(b, c') = (a + b, c + c' + ½ω(a, b))` with `ω(a, b) = Σ x_i y'_i − y_i x'_i`,
//! and Haar measure is Lebesgue measure in these coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesics::closed_form::distance_from_origin;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("CR dimension must be at least 1, got {0}")]
    InvalidDimension(usize),
    #[error("dilation factor must be positive and finite, got {0}")]
    InvalidDilation(f64),
    #[error("ball radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("at least {min} samples are required, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("point has {got} horizontal coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A point of H^{2n+1}: `x` holds the 2n horizontal coordinates, `z` the vertical one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub z: f64,
}

impl Point {
    pub fn new(x: Vec<f64>, z: f64) -> Self {
        debug_assert!(x.len() % 2 == 0 && !x.is_empty());
        Self { x, z }
    }

    /// Point of H¹ from `(x, y, z)`.
    pub fn h1(x: f64, y: f64, z: f64) -> Self {
        Self { x: vec![x, y], z }
    }

    pub fn origin(n: usize) -> Self {
        Self { x: vec![0.0; 2 * n], z: 0.0 }
    }

    /// Rebuilds a point from the flat coordinate list `(x_1..x_n, y_1..y_n, z)`.
    pub fn from_coords(coords: &[f64]) -> Result<Self, ModelError> {
        let len = coords.len();
        if len < 3 || len % 2 == 0 {
            return Err(ModelError::DimensionMismatch { expected: 3, got: len.saturating_sub(1) });
        }
        let p = Self { x: coords[..len - 1].to_vec(), z: coords[len - 1] };
        if !p.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(p)
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.x.clone();
        c.push(self.z);
        c
    }

    /// CR dimension inferred from the coordinate count.
    pub fn n(&self) -> usize {
        self.x.len() / 2
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    pub fn is_origin(&self) -> bool {
        self.z == 0.0 && self.x.iter().all(|&v| v == 0.0)
    }

    /// Euclidean norm of the horizontal part.
    pub fn horizontal_norm(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Homogeneous gauge `max(|x|_∞, |z|^{1/2})`.
    pub fn gauge(&self) -> f64 {
        let h = self.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        h.max(self.z.abs().sqrt())
    }

    pub fn max_abs_coord(&self) -> f64 {
        self.x.iter().fold(self.z.abs(), |m, v| m.max(v.abs()))
    }
}

/// Momentum in the left-invariant trivialization: `px` pairs with `X_i, Y_i`, `pz` with `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covector {
    pub px: Vec<f64>,
    pub pz: f64,
}

impl Covector {
    pub fn new(px: Vec<f64>, pz: f64) -> Self {
        Self { px, pz }
    }

    pub fn h1(px: f64, py: f64, pz: f64) -> Self {
        Self { px: vec![px, py], pz }
    }

    pub fn components(&self) -> Vec<f64> {
        let mut c = self.px.clone();
        c.push(self.pz);
        c
    }

    pub fn is_finite(&self) -> bool {
        self.pz.is_finite() && self.px.iter().all(|v| v.is_finite())
    }
}

/// Coordinate expressions of the frame at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `X_1..X_n, Y_1..Y_n`, each a vector of 2n+1 coordinate components.
    pub horizontal: Vec<Vec<f64>>,
    pub reeb: Vec<f64>,
}

/// Monte Carlo estimate of a ball volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

pub const MIN_VOLUME_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpace {
    n: usize,
}

impl ModelSpace {
    pub fn new(n: usize) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidDimension(n));
        }
        Ok(Self { n })
    }

    /// The three-dimensional Heisenberg group H¹.
    pub fn h1() -> Self {
        Self { n: 1 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Real dimension 2n+1.
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// Homogeneous dimension Q = 2n+2.
    pub fn homogeneous_dim(&self) -> usize {
        2 * self.n + 2
    }

    pub fn origin(&self) -> Point {
        Point::origin(self.n)
    }

    pub fn check_point(&self, p: &Point) -> Result<(), ModelError> {
        if p.x.len() != 2 * self.n {
            return Err(ModelError::DimensionMismatch { expected: 2 * self.n, got: p.x.len() });
        }
        if !p.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    pub fn multiply(&self, p: &Point, q: &Point) -> Point {
        multiply(p, q)
    }

    pub fn inverse(&self, p: &Point) -> Point {
        inverse(p)
    }

    pub fn dilate(&self, lambda: f64, p: &Point) -> Result<Point, ModelError> {
        dilate(lambda, p)
    }

    pub fn frame_at(&self, p: &Point) -> Frame {
        let n = self.n;
        let dim = self.dim();
        let mut horizontal = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            v[dim - 1] = -0.5 * p.x[n + i];
            horizontal.push(v);
        }
        for i in 0..n {
            let mut v = vec![0.0; dim];
            v[n + i] = 1.0;
            v[dim - 1] = 0.5 * p.x[i];
            horizontal.push(v);
        }
        let mut reeb = vec![0.0; dim];
        reeb[dim - 1] = 1.0;
        Frame { horizontal, reeb }
    }

    /// Monte Carlo estimate of μ(B(0, r)) for the sub-Riemannian ball.
    ///
    /// Points are drawn uniformly from `[−r, r]^{2n} × [−r²/(2π), r²/(2π)]`, which contains the
    /// ball: a horizontal curve of length r encloses symplectic area at most r²/(2π).
    pub fn ball_volume(&self, r: f64, samples: usize, seed: u64) -> Result<VolumeEstimate, ModelError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(ModelError::InvalidRadius(r));
        }
        if samples < MIN_VOLUME_SAMPLES {
            return Err(ModelError::TooFewSamples { min: MIN_VOLUME_SAMPLES, got: samples });
        }
        let n = self.n;
        let z_half = r * r / (2.0 * std::f64::consts::PI);
        let box_volume = (2.0 * r).powi(2 * n as i32) * 2.0 * z_half;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; 2 * n];
        let mut hits = 0usize;
        for _ in 0..samples {
            for v in x.iter_mut() {
                *v = r * rng.random_range(-1.0..1.0);
            }
            let z = z_half * rng.random_range(-1.0..1.0);
            let c = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if distance_from_origin(c, z) <= r {
                hits += 1;
            }
        }
        let frac = hits as f64 / samples as f64;
        Ok(VolumeEstimate {
            value: box_volume * frac,
            std_error: box_volume * (frac * (1.0 - frac) / samples as f64).sqrt(),
            samples,
            seed,
        })
    }
}

/// Group law `(a, c)·(b, c') = (a + b, c + c' + ½ω(a, b))`.
pub fn multiply(p: &Point, q: &Point) -> Point {
    assert_eq!(p.x.len(), q.x.len(), "points from different model spaces");
    let n = p.n();
    let omega: f64 = (0..n).map(|i| p.x[i] * q.x[n + i] - p.x[n + i] * q.x[i]).sum();
    Point {
        x: p.x.iter().zip(&q.x).map(|(a, b)| a + b).collect(),
        z: p.z + q.z + 0.5 * omega,
    }
}

pub fn inverse(p: &Point) -> Point {
    Point { x: p.x.iter().map(|v| -v).collect(), z: -p.z }
}

/// Anisotropic dilation `(x, z) ↦ (λx, λ²z)`.
pub fn dilate(lambda: f64, p: &Point) -> Result<Point, ModelError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ModelError::InvalidDilation(lambda));
    }
    Ok(Point { x: p.x.iter().map(|v| lambda * v).collect(), z: lambda * lambda * p.z })
}

/// `a⁻¹·b`, the displacement used by every left-invariant quantity.
pub fn relative(a: &Point, b: &Point) -> Point {
    multiply(&inverse(a), b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Point, b: &Point, tol: f64) -> bool {
        a.coords().iter().zip(b.coords()).all(|(u, v)| (u - v).abs() <= tol)
    }

    #[test]
    fn multiply_examples() {
        let o = Point::origin(1);
        let p = Point::h1(1.0, 2.0, 3.0);
        assert_eq!(multiply(&o, &p), p);
        let e1 = Point::h1(1.0, 0.0, 0.0);
        let e2 = Point::h1(0.0, 1.0, 0.0);
        assert_eq!(multiply(&e1, &e2), Point::h1(1.0, 1.0, 0.5));
        let comm = multiply(&multiply(&multiply(&e1, &e2), &inverse(&e1)), &inverse(&e2));
        assert!(close(&comm, &Point::h1(0.0, 0.0, 1.0), 1e-15));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse(&Point::origin(1)), Point::origin(1));
        assert_eq!(inverse(&Point::h1(1.0, 2.0, 3.0)), Point::h1(-1.0, -2.0, -3.0));
        let p = Point::h1(1.0, 1.0, 1.0);
        assert!(multiply(&p, &inverse(&p)).is_origin());
    }

    #[test]
    fn dilate_examples() {
        let p = Point::h1(1.0, 1.0, 1.0);
        assert_eq!(dilate(1.0, &p).unwrap(), p);
        assert_eq!(dilate(2.0, &p).unwrap(), Point::h1(2.0, 2.0, 4.0));
        assert_eq!(dilate(0.0, &p), Err(ModelError::InvalidDilation(0.0)));
        assert!(dilate(-1.0, &p).is_err());
    }

    #[test]
    fn frame_examples() {
        let m = ModelSpace::h1();
        let f = m.frame_at(&Point::origin(1));
        assert_eq!(f.horizontal[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(f.horizontal[1], vec![0.0, 1.0, 0.0]);
        assert_eq!(f.reeb, vec![0.0, 0.0, 1.0]);
        let f = m.frame_at(&Point::h1(2.0, 3.0, 7.0));
        assert_eq!(f.horizontal[0], vec![1.0, 0.0, -1.5]);
        assert_eq!(f.horizontal[1], vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn model_rejects_zero_dimension() {
        assert_eq!(ModelSpace::new(0), Err(ModelError::InvalidDimension(0)));
        let m = ModelSpace::new(3).unwrap();
        assert_eq!(m.dim(), 7);
        assert_eq!(m.homogeneous_dim(), 8);
    }

    #[test]
    fn ball_volume_preconditions() {
        let m = ModelSpace::h1();
        assert!(matches!(m.ball_volume(1.0, 100, 0), Err(ModelError::TooFewSamples { .. })));
        assert!(matches!(m.ball_volume(0.0, 20_000, 0), Err(ModelError::InvalidRadius(_))));
    }

    #[test]
    fn ball_volume_shrinks_to_zero() {
        let m = ModelSpace::h1();
        let big = m.ball_volume(1.0, 20_000, 3).unwrap();
        let small = m.ball_volume(1e-3, 20_000, 3).unwrap();
        assert!(small.value < 1e-10 && big.value > 0.5);
    }

    #[test]
    fn from_coords_validates() {
        assert!(Point::from_coords(&[1.0, 2.0]).is_err());
        assert!(Point::from_coords(&[1.0, f64::NAN, 0.0]).is_err());
        assert_eq!(Point::from_coords(&[1.0, 2.0, 3.0]).unwrap(), Point::h1(1.0, 2.0, 3.0));
    }
}
