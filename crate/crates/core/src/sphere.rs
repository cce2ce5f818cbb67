//! Points on the Poincaré sphere, the three coordinate π-rotations, and
//! reproducible random substreams for sampling hidden variables.

use std::ops::Neg;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Unit vector in three dimensions.
///
/// Constructors normalize their input, so `x² + y² + z² = 1` holds to rounding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitVec3<T> {
    x: T,
    y: T,
    z: T,
}

impl<T: Real> UnitVec3<T> {
    /// Normalizes `(x, y, z)`.
    pub fn new(x: T, y: T, z: T) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm <= T::zero() {
            return Err(Error::DegenerateVector);
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Caller guarantees the components already have unit norm.
    #[inline]
    pub(crate) fn from_unit_components(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn unit_x() -> Self {
        Self::from_unit_components(T::one(), T::zero(), T::zero())
    }

    pub fn unit_y() -> Self {
        Self::from_unit_components(T::zero(), T::one(), T::zero())
    }

    pub fn unit_z() -> Self {
        Self::from_unit_components(T::zero(), T::zero(), T::one())
    }

    /// Direction with polar angle `theta` (from +z) and azimuth `phi` (from +x), radians.
    pub fn from_spherical(theta: T, phi: T) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self::from_unit_components(st * cp, st * sp, ct)
    }

    /// Same as [`UnitVec3::from_spherical`] with angles in degrees.
    pub fn from_spherical_deg(theta_deg: T, phi_deg: T) -> Self {
        Self::from_spherical(theta_deg.to_radians(), phi_deg.to_radians())
    }

    #[inline]
    pub fn x(&self) -> T {
        self.x
    }

    #[inline]
    pub fn y(&self) -> T {
        self.y
    }

    #[inline]
    pub fn z(&self) -> T {
        self.z
    }

    #[inline]
    pub fn components(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    /// Converts the components to another scalar type and renormalizes.
    pub fn cast<U: Real>(&self) -> UnitVec3<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        UnitVec3::new(c(self.x), c(self.y), c(self.z)).expect("unit vector stays non-degenerate")
    }
}

impl<T: Real> Neg for UnitVec3<T> {
    type Output = Self;

    #[inline]
    fn neg(self) -> Self {
        Self::from_unit_components(-self.x, -self.y, -self.z)
    }
}

/// A rotation by π about one of the coordinate axes.
///
/// Each is a diagonal sign flip: `X = diag(1,-1,-1)`, `Y = diag(-1,1,-1)`,
/// `Z = diag(-1,-1,1)`. Together with the identity they form the Klein
/// four-group, and `1 + X + Y + Z = 0` entrywise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisRotation {
    X,
    Y,
    Z,
}

impl AxisRotation {
    pub const ALL: [AxisRotation; 3] = [AxisRotation::X, AxisRotation::Y, AxisRotation::Z];

    /// Diagonal of the rotation matrix.
    #[inline]
    pub fn signs(self) -> [i8; 3] {
        match self {
            AxisRotation::X => [1, -1, -1],
            AxisRotation::Y => [-1, 1, -1],
            AxisRotation::Z => [-1, -1, 1],
        }
    }

    #[inline]
    pub fn rotate_pi<T: Real>(self, v: UnitVec3<T>) -> UnitVec3<T> {
        match self {
            AxisRotation::X => UnitVec3::from_unit_components(v.x, -v.y, -v.z),
            AxisRotation::Y => UnitVec3::from_unit_components(-v.x, v.y, -v.z),
            AxisRotation::Z => UnitVec3::from_unit_components(-v.x, -v.y, v.z),
        }
    }

    /// `self ∘ other`; `None` stands for the identity (when `self == other`).
    pub fn compose(self, other: AxisRotation) -> Option<AxisRotation> {
        use AxisRotation::*;
        match (self, other) {
            (a, b) if a == b => None,
            (X, Y) | (Y, X) => Some(Z),
            (Y, Z) | (Z, Y) => Some(X),
            _ => Some(Y),
        }
    }
}

/// Deterministic random substream identified by `(seed, stream_index)`.
///
/// Backed by ChaCha8 with the stream index mapped onto the cipher's 64-bit
/// stream selector, so substreams with distinct indices never overlap.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        Self {
            seed,
            stream_index,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform point on the unit sphere.
    ///
    /// Archimedes' construction: `z` uniform on `[-1, 1]`, azimuth uniform on
    /// `[0, 2π)`, `(x, y) = √(1 - z²)(cos φ, sin φ)`.
    #[inline]
    pub fn sample_uniform<T: Real>(&mut self) -> UnitVec3<T> {
        let z = 2.0 * self.next_uniform() - 1.0;
        let phi = std::f64::consts::TAU * self.next_uniform();
        let r = (1.0 - z * z).max(0.0).sqrt();
        let (s, c) = phi.sin_cos();
        UnitVec3::from_unit_components(T::lit(r * c), T::lit(r * s), T::lit(z))
    }
}
