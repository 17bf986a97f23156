//! Image and sinogram containers.

use crate::error::{Error, Result};
use crate::geometry::{GeometryTag, ScanGeometry};

/// Square scalar image, row-major, indexed `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    size: usize,
    pixel_spacing: f64,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(size: usize, pixel_spacing: f64) -> Self {
        Self {
            size,
            pixel_spacing,
            data: vec![0.0; size * size],
        }
    }

    pub fn from_vec(size: usize, pixel_spacing: f64, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::shape(
                format!("{size}x{size} pixels"),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image", "all pixels must be finite"));
        }
        Ok(Self {
            size,
            pixel_spacing,
            data,
        })
    }

    /// Zero image on the grid of `geometry`.
    pub fn for_geometry(geometry: &ScanGeometry) -> Self {
        Self::zeros(geometry.image_size(), geometry.pixel_spacing())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.size + col] = v;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn check_grid(&self, geometry: &ScanGeometry) -> Result<()> {
        if self.size != geometry.image_size() {
            return Err(Error::shape(
                format!("{0}x{0} image", geometry.image_size()),
                format!("{0}x{0} image", self.size),
            ));
        }
        Ok(())
    }
}

/// Projection data indexed `(angle, bin)`, bound to the geometry it was acquired with.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    num_angles: usize,
    num_bins: usize,
    data: Vec<f64>,
    tag: GeometryTag,
}

impl Sinogram {
    pub fn zeros(geometry: &ScanGeometry) -> Self {
        Self {
            num_angles: geometry.num_angles(),
            num_bins: geometry.num_bins(),
            data: vec![0.0; geometry.num_angles() * geometry.num_bins()],
            tag: geometry.tag(),
        }
    }

    pub fn from_vec(geometry: &ScanGeometry, data: Vec<f64>) -> Result<Self> {
        let expected = geometry.num_angles() * geometry.num_bins();
        if data.len() != expected {
            return Err(Error::shape(
                format!("{}x{} sinogram", geometry.num_angles(), geometry.num_bins()),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sinogram", "all entries must be finite"));
        }
        Ok(Self {
            num_angles: geometry.num_angles(),
            num_bins: geometry.num_bins(),
            data,
            tag: geometry.tag(),
        })
    }

    /// Stacks rows (each `num_bins` long) under `geometry`.
    pub fn from_rows<'a>(
        geometry: &ScanGeometry,
        rows: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(geometry.num_angles() * geometry.num_bins());
        for r in rows {
            if r.len() != geometry.num_bins() {
                return Err(Error::shape(geometry.num_bins(), r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(geometry, data)
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn tag(&self) -> GeometryTag {
        self.tag
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_bins..(i + 1) * self.num_bins]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.num_bins..(i + 1) * self.num_bins]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.num_bins)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Rows at `idx`, rebound to the restricted geometry `sub`.
    pub fn select_rows(&self, idx: &[usize], sub: &ScanGeometry) -> Result<Self> {
        if sub.num_bins() != self.num_bins || sub.num_angles() != idx.len() {
            return Err(Error::shape(
                format!("{}x{}", idx.len(), self.num_bins),
                format!("{}x{}", sub.num_angles(), sub.num_bins()),
            ));
        }
        let mut data = Vec::with_capacity(idx.len() * self.num_bins);
        for &i in idx {
            if i >= self.num_angles {
                return Err(Error::invalid("rows", format!("{i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            num_angles: idx.len(),
            num_bins: self.num_bins,
            data,
            tag: sub.tag(),
        })
    }

    pub(crate) fn check_bound(&self, geometry: &ScanGeometry) -> Result<()> {
        if self.tag != geometry.tag()
            || self.num_angles != geometry.num_angles()
            || self.num_bins != geometry.num_bins()
        {
            return Err(Error::GeometryMismatch);
        }
        Ok(())
    }
}
