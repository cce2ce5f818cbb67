//! Analyzer directions as they appear on external surfaces: degrees, polar
//! angle from +z and azimuth from +x.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::UnitVec3;

/// `(theta_deg, phi_deg)` analyzer direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnglePair(pub f64, pub f64);

impl AnglePair {
    pub fn theta_deg(&self) -> f64 {
        self.0
    }

    pub fn phi_deg(&self) -> f64 {
        self.1
    }

    pub fn direction(&self) -> UnitVec3<f64> {
        UnitVec3::from_spherical_deg(self.0, self.1)
    }

    /// Inverse of [`AnglePair::direction`], with the azimuth in `[0, 360)`
    /// and both angles rounded to 1e-9 degrees so that printed settings stay
    /// readable.
    pub fn from_direction(v: &UnitVec3<f64>) -> Self {
        let round = |x: f64| {
            let r = (x * 1e9).round() / 1e9;
            if r == 0.0 { 0.0 } else { r }
        };
        let theta = v.z().clamp(-1.0, 1.0).acos().to_degrees();
        let mut phi = v.y().atan2(v.x()).to_degrees();
        if phi < 0.0 {
            phi += 360.0;
        }
        let phi = round(phi);
        AnglePair(round(theta), if phi >= 360.0 { 0.0 } else { phi })
    }
}

impl FromStr for AnglePair {
    type Err = Error;

    /// Parses `"theta,phi"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let parse = |x: &str| {
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::config("setting", format!("`{s}` is not \"theta,phi\" in degrees")))
        };
        match parts.as_slice() {
            [t, p] => Ok(AnglePair(parse(t)?, parse(p)?)),
            _ => Err(Error::config("setting", format!("`{s}` is not \"theta,phi\" in degrees"))),
        }
    }
}

/// Plane swept by Bob's analyzer. The angle is measured from the first
/// named axis in [`SweepPlane::basis`] toward the second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepPlane {
    /// From +z toward +x.
    Xz,
    /// From +x toward +y.
    Xy,
    /// From +z toward +y.
    Yz,
}

impl SweepPlane {
    /// `(e₁, e₂)` with `b(θ) = cos θ e₁ + sin θ e₂`.
    pub fn basis(self) -> (UnitVec3<f64>, UnitVec3<f64>) {
        match self {
            SweepPlane::Xz => (UnitVec3::unit_z(), UnitVec3::unit_x()),
            SweepPlane::Xy => (UnitVec3::unit_x(), UnitVec3::unit_y()),
            SweepPlane::Yz => (UnitVec3::unit_z(), UnitVec3::unit_y()),
        }
    }

    pub fn direction(self, angle_deg: f64) -> UnitVec3<f64> {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let (e1, e2) = self.basis();
        let v = |i: usize| c * e1.components()[i] + s * e2.components()[i];
        UnitVec3::new(v(0), v(1), v(2)).expect("plane basis is orthonormal")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepPlane::Xz => "xz",
            SweepPlane::Xy => "xy",
            SweepPlane::Yz => "yz",
        }
    }
}

impl FromStr for SweepPlane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xz" => Ok(SweepPlane::Xz),
            "xy" => Ok(SweepPlane::Xy),
            "yz" => Ok(SweepPlane::Yz),
            _ => Err(Error::config("plane", format!("`{s}` is not one of xz, xy, yz"))),
        }
    }
}

impl fmt::Display for SweepPlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open sweep `start, start + step, …` strictly below `stop`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BobSweep {
    pub plane: SweepPlane,
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl BobSweep {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.start_deg, self.stop_deg, self.step_deg].iter().all(|x| x.is_finite());
        if !finite || self.step_deg <= 0.0 {
            return Err(Error::config("bob_sweep.step_deg", "step must be positive and finite"));
        }
        let span = self.stop_deg - self.start_deg;
        if span <= 0.0 {
            return Err(Error::config("bob_sweep.stop_deg", "stop must exceed start"));
        }
        let ratio = span / self.step_deg;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(
                "bob_sweep.step_deg",
                format!("step {} does not divide the span {span}", self.step_deg),
            ));
        }
        Ok(())
    }

    pub fn angles_deg(&self) -> Vec<f64> {
        let n = ((self.stop_deg - self.start_deg) / self.step_deg).round() as usize;
        (0..n).map(|i| self.start_deg + i as f64 * self.step_deg).collect()
    }
}

impl FromStr for BobSweep {
    type Err = Error;

    /// Parses `"plane=xz,start=0,stop=360,step=5"`.
    fn from_str(s: &str) -> Result<Self> {
        let mut plane = None;
        let (mut start, mut stop, mut step) = (None, None, None);
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::config("bob_sweep", format!("expected key=value, got `{part}`")))?;
            let num = || {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("bob_sweep.{}", k.trim()), format!("`{v}` is not a number")))
            };
            match k.trim() {
                "plane" => plane = Some(v.trim().parse()?),
                "start" => start = Some(num()?),
                "stop" => stop = Some(num()?),
                "step" => step = Some(num()?),
                other => return Err(Error::config("bob_sweep", format!("unknown key `{other}`"))),
            }
        }
        let sweep = BobSweep {
            plane: plane.ok_or_else(|| Error::config("bob_sweep.plane", "missing"))?,
            start_deg: start.ok_or_else(|| Error::config("bob_sweep.start", "missing"))?,
            stop_deg: stop.ok_or_else(|| Error::config("bob_sweep.stop", "missing"))?,
            step_deg: step.ok_or_else(|| Error::config("bob_sweep.step", "missing"))?,
        };
        sweep.validate()?;
        Ok(sweep)
    }
}
