//! FIM array layout and far-field steering vectors.
//!
//! The surface is a uniform `N_x × N_z` grid of radiating elements in the
//! x–z plane. Morphing displaces each element along y by an individually
//! controllable amount in `[0, y_max]`; the rigid-array special case is
//! `y_max = 0`.

use nalgebra::DVector;
use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("element grid must be at least 1x1 (got {n_x} x {n_z})")]
    EmptyGrid { n_x: usize, n_z: usize },
    #[error("{name} must be positive and finite (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("morphing range must be non-negative and finite (got {0})")]
    InvalidMorphingRange(f64),
    #[error("shape has {shape_len} displacements but the grid has {element_count} elements")]
    ShapeMismatch {
        shape_len: usize,
        element_count: usize,
    },
    #[error("displacement y[{index}] = {value} lies outside [0, {y_max}]")]
    DisplacementOutOfRange {
        index: usize,
        value: f64,
        y_max: f64,
    },
}

/// Rigid layout of the surface: grid dimensions, element pitch, and the
/// carrier wavelength that fixes the phase scale.
///
/// Element `n` (0-based, row-major along x) sits at
/// `x = d_x * (n % n_x)`, `z = d_z * (n / n_x)`, with the first element at
/// the origin. The y coordinate of each element comes from a
/// [`SurfaceShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct FimGeometry {
    n_x: usize,
    n_z: usize,
    d_x: f64,
    d_z: f64,
    wavelength: f64,
}

impl FimGeometry {
    pub fn new(
        n_x: usize,
        n_z: usize,
        d_x: f64,
        d_z: f64,
        wavelength: f64,
    ) -> Result<Self, GeometryError> {
        if n_x == 0 || n_z == 0 {
            return Err(GeometryError::EmptyGrid { n_x, n_z });
        }
        for (name, value) in [("d_x", d_x), ("d_z", d_z), ("wavelength", wavelength)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(GeometryError::NonPositive { name, value });
            }
        }
        Ok(Self {
            n_x,
            n_z,
            d_x,
            d_z,
            wavelength,
        })
    }

    /// Grid with the conventional half-wavelength pitch in both directions.
    pub fn half_wavelength(n_x: usize, n_z: usize, wavelength: f64) -> Result<Self, GeometryError> {
        Self::new(n_x, n_z, wavelength / 2.0, wavelength / 2.0, wavelength)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn d_x(&self) -> f64 {
        self.d_x
    }

    pub fn d_z(&self) -> f64 {
        self.d_z
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn element_count(&self) -> usize {
        self.n_x * self.n_z
    }

    /// Wavenumber `κ = 2π / λ`.
    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    /// In-plane coordinates `(x_n, z_n)` of element `n` (0-based).
    pub fn element_xz(&self, n: usize) -> (f64, f64) {
        (
            self.d_x * (n % self.n_x) as f64,
            self.d_z * (n / self.n_x) as f64,
        )
    }

    fn check_shape(&self, shape: &SurfaceShape) -> Result<(), GeometryError> {
        if shape.len() != self.element_count() {
            return Err(GeometryError::ShapeMismatch {
                shape_len: shape.len(),
                element_count: self.element_count(),
            });
        }
        Ok(())
    }
}

/// Per-element displacements along y, each constrained to `[0, y_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceShape {
    y: Vec<f64>,
    y_max: f64,
}

impl SurfaceShape {
    /// Validates every displacement against the box `[0, y_max]`.
    pub fn new(y: Vec<f64>, y_max: f64) -> Result<Self, GeometryError> {
        if !(y_max.is_finite() && y_max >= 0.0) {
            return Err(GeometryError::InvalidMorphingRange(y_max));
        }
        for (index, &value) in y.iter().enumerate() {
            if !(value.is_finite() && (0.0..=y_max).contains(&value)) {
                return Err(GeometryError::DisplacementOutOfRange {
                    index,
                    value,
                    y_max,
                });
            }
        }
        Ok(Self { y, y_max })
    }

    /// The undeformed surface: every displacement zero.
    pub fn flat(len: usize, y_max: f64) -> Result<Self, GeometryError> {
        Self::new(vec![0.0; len], y_max)
    }

    /// Projects arbitrary displacements onto the box `[0, y_max]` by
    /// clamping. This is the projection step of gradient ascent.
    pub fn clamped(y: Vec<f64>, y_max: f64) -> Result<Self, GeometryError> {
        if !(y_max.is_finite() && y_max >= 0.0) {
            return Err(GeometryError::InvalidMorphingRange(y_max));
        }
        let y = y.into_iter().map(|v| v.clamp(0.0, y_max)).collect();
        Ok(Self { y, y_max })
    }

    pub fn displacements(&self) -> &[f64] {
        &self.y
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// 3-D position `[x, y, z]` of every element under the given shape.
pub fn element_positions(
    geom: &FimGeometry,
    shape: &SurfaceShape,
) -> Result<Vec<[f64; 3]>, GeometryError> {
    geom.check_shape(shape)?;
    Ok(shape
        .displacements()
        .iter()
        .enumerate()
        .map(|(n, &y)| {
            let (x, z) = geom.element_xz(n);
            [x, y, z]
        })
        .collect())
}

/// Far-field steering vector of the deformed surface towards azimuth `φ`
/// and elevation `θ` (radians).
///
/// Entry `n` is `exp(jκ(x_n sinθ cosφ + y_n sinθ sinφ + z_n cosθ))`; every
/// entry has unit modulus. Displacing the whole surface by a common offset
/// multiplies the vector by a global phase only.
pub fn steering_vector(
    geom: &FimGeometry,
    shape: &SurfaceShape,
    azimuth: f64,
    elevation: f64,
) -> Result<DVector<Complex64>, GeometryError> {
    geom.check_shape(shape)?;
    let kappa = geom.wavenumber();
    let (sin_el, cos_el) = elevation.sin_cos();
    let (sin_az, cos_az) = azimuth.sin_cos();
    // Direction cosines against the x, y and z axes.
    let cx = sin_el * cos_az;
    let cy = sin_el * sin_az;
    let cz = cos_el;
    let entries = shape
        .displacements()
        .iter()
        .enumerate()
        .map(|(n, &y)| {
            let (x, z) = geom.element_xz(n);
            Complex64::from_polar(1.0, kappa * (x * cx + y * cy + z * cz))
        })
        .collect::<Vec<_>>();
    Ok(DVector::from_vec(entries))
}
