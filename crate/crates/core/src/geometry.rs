//! Viewpoint space: a box of (horizontal, vertical) camera angles on a sphere
//! around the robot base, and the affine map to the unit square the
//! optimizer works in.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::error::{Error, Result};

/// Values this close outside an interval are snapped onto it.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Angular extent of the viewpoint space, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBounds {
    pub h_min: f64,
    pub h_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for AngleBounds {
    fn default() -> Self {
        Self {
            h_min: -FRAC_PI_2,
            h_max: FRAC_PI_2,
            v_min: -FRAC_PI_4,
            v_max: FRAC_PI_4,
        }
    }
}

impl AngleBounds {
    pub fn new(h_min: f64, h_max: f64, v_min: f64, v_max: f64) -> Result<Self> {
        let all_finite = [h_min, h_max, v_min, v_max].iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("angle bounds must be finite".into()));
        }
        if h_min >= h_max {
            return Err(Error::InvalidArgument(format!(
                "h_min ({h_min}) must be < h_max ({h_max})"
            )));
        }
        if v_min >= v_max {
            return Err(Error::InvalidArgument(format!(
                "v_min ({v_min}) must be < v_max ({v_max})"
            )));
        }
        Ok(Self {
            h_min,
            h_max,
            v_min,
            v_max,
        })
    }

    pub fn h_span(&self) -> f64 {
        self.h_max - self.h_min
    }

    pub fn v_span(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn contains(&self, v: &Viewpoint) -> bool {
        within(v.theta_h, self.h_min, self.h_max) && within(v.theta_v, self.v_min, self.v_max)
    }
}

/// A camera placement as a pair of angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub theta_h: f64,
    pub theta_v: f64,
}

impl Viewpoint {
    pub const fn new(theta_h: f64, theta_v: f64) -> Self {
        Self { theta_h, theta_v }
    }
}

/// A point of the unit square, the coordinate system of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub nu_h: f64,
    pub nu_v: f64,
}

impl NormalizedPoint {
    /// Validating constructor; snaps values within [`BOUNDARY_TOLERANCE`]
    /// of the square onto its boundary.
    pub fn new(nu_h: f64, nu_v: f64) -> Result<Self> {
        Ok(Self {
            nu_h: snap_unit("nu_h", nu_h)?,
            nu_v: snap_unit("nu_v", nu_v)?,
        })
    }

    /// Builds a point by clamping both coordinates into the unit square.
    pub fn clamped(nu_h: f64, nu_v: f64) -> Self {
        Self {
            nu_h: nu_h.clamp(0.0, 1.0),
            nu_v: nu_v.clamp(0.0, 1.0),
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.nu_h, self.nu_v]
    }

    pub fn distance_squared(&self, other: &Self) -> f64 {
        let dh = self.nu_h - other.nu_h;
        let dv = self.nu_v - other.nu_v;
        dh * dh + dv * dv
    }
}

/// Robot base position and camera radius, both in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereConfig {
    pub base: [f64; 3],
    pub radius: f64,
}

impl SphereConfig {
    pub fn new(base: [f64; 3], radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sphere radius must be > 0, got {radius}"
            )));
        }
        Ok(Self { base, radius })
    }
}

impl Default for SphereConfig {
    fn default() -> Self {
        Self {
            base: [0.0; 3],
            radius: 1.0,
        }
    }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo - BOUNDARY_TOLERANCE && x <= hi + BOUNDARY_TOLERANCE
}

fn snap_unit(axis: &'static str, value: f64) -> Result<f64> {
    if !within(value, 0.0, 1.0) || value.is_nan() {
        return Err(Error::OutsideUnitSquare { axis, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

fn snap_angle(axis: &'static str, value: f64, min: f64, max: f64) -> Result<f64> {
    if !within(value, min, max) || value.is_nan() {
        return Err(Error::OutsideBounds {
            axis,
            value,
            min,
            max,
        });
    }
    Ok(value.clamp(min, max))
}

fn affine(nu: f64, min: f64, max: f64) -> f64 {
    (nu - 0.5) * (max - min) + 0.5 * (max + min)
}

/// Maps a unit-square point to camera angles.
pub fn denormalize(p: NormalizedPoint, bounds: &AngleBounds) -> Result<Viewpoint> {
    let nu_h = snap_unit("nu_h", p.nu_h)?;
    let nu_v = snap_unit("nu_v", p.nu_v)?;
    let theta_h = affine(nu_h, bounds.h_min, bounds.h_max).clamp(bounds.h_min, bounds.h_max);
    let theta_v = affine(nu_v, bounds.v_min, bounds.v_max).clamp(bounds.v_min, bounds.v_max);
    Ok(Viewpoint { theta_h, theta_v })
}

/// Inverse of [`denormalize`].
pub fn normalize(v: Viewpoint, bounds: &AngleBounds) -> Result<NormalizedPoint> {
    let theta_h = snap_angle("theta_h", v.theta_h, bounds.h_min, bounds.h_max)?;
    let theta_v = snap_angle("theta_v", v.theta_v, bounds.v_min, bounds.v_max)?;
    let nu_h = (theta_h - 0.5 * (bounds.h_max + bounds.h_min)) / bounds.h_span() + 0.5;
    let nu_v = (theta_v - 0.5 * (bounds.v_max + bounds.v_min)) / bounds.v_span() + 0.5;
    Ok(NormalizedPoint {
        nu_h: nu_h.clamp(0.0, 1.0),
        nu_v: nu_v.clamp(0.0, 1.0),
    })
}

/// Camera position on the sphere, `b + r (cos v cos h, cos v sin h, sin v)`.
pub fn to_cartesian(v: Viewpoint, cfg: &SphereConfig) -> [f64; 3] {
    let (sin_h, cos_h) = v.theta_h.sin_cos();
    let (sin_v, cos_v) = v.theta_v.sin_cos();
    [
        cfg.base[0] + cfg.radius * cos_v * cos_h,
        cfg.base[1] + cfg.radius * cos_v * sin_h,
        cfg.base[2] + cfg.radius * sin_v,
    ]
}

fn lattice_axis(min: f64, max: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (max - min) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { max } else { min + step * i as f64 })
}

/// Uniform `n_h × n_v` lattice over the bounds, corners included.
///
/// Points are ordered with the horizontal index varying fastest.
pub fn test_grid(bounds: &AngleBounds, n_h: usize, n_v: usize) -> Result<Vec<Viewpoint>> {
    if n_h < 2 || n_v < 2 {
        return Err(Error::InvalidArgument(format!(
            "test grid needs at least 2 points per axis, got {n_h}x{n_v}"
        )));
    }
    let hs: Vec<f64> = lattice_axis(bounds.h_min, bounds.h_max, n_h).collect();
    Ok(lattice_axis(bounds.v_min, bounds.v_max, n_v)
        .flat_map(|v| hs.iter().map(move |&h| Viewpoint::new(h, v)))
        .collect())
}

/// Same lattice expressed in unit-square coordinates.
pub fn unit_grid(n_h: usize, n_v: usize) -> Vec<NormalizedPoint> {
    let axis = |n: usize| -> Vec<f64> {
        if n == 1 {
            vec![0.5]
        } else {
            lattice_axis(0.0, 1.0, n).collect()
        }
    };
    let hs = axis(n_h);
    axis(n_v)
        .into_iter()
        .flat_map(|v| {
            hs.iter().map(move |&h| NormalizedPoint { nu_h: h, nu_v: v })
        })
        .collect()
}
