//! Parallel-beam acquisition geometry and the measured/missing angle split.

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// A centered line detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    num_bins: usize,
    bin_spacing: f64,
}

impl DetectorSpec {
    pub fn new(num_bins: usize, bin_spacing: f64) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::invalid("num_bins", "must be >= 1"));
        }
        if !(bin_spacing > 0.0 && bin_spacing.is_finite()) {
            return Err(Error::invalid("bin_spacing", "must be finite and > 0"));
        }
        Ok(Self {
            num_bins,
            bin_spacing,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn bin_spacing(&self) -> f64 {
        self.bin_spacing
    }

    /// Signed detector coordinate of the center of bin `bin`.
    #[inline]
    pub fn bin_offset(&self, bin: usize) -> f64 {
        (bin as f64 - (self.num_bins as f64 - 1.0) / 2.0) * self.bin_spacing
    }

    /// Total detector extent.
    pub fn width(&self) -> f64 {
        self.num_bins as f64 * self.bin_spacing
    }
}

/// Strictly increasing projection angles in `[0, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    angles: Vec<f64>,
}

impl AngleSet {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invalid("angles", "at least one angle is required"));
        }
        if let Some(a) = angles.iter().find(|a| !(0.0..PI).contains(*a)) {
            return Err(Error::invalid("angles", format!("{a} is outside [0, pi)")));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("angles", "must be strictly increasing"));
        }
        Ok(Self { angles })
    }

    /// `n` uniformly spaced angles `i·π/n`, endpoint excluded.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("num_angles", "must be >= 1"));
        }
        Self::new((0..n).map(|i| i as f64 * PI / n as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.angles.get(i).copied()
    }

    /// Angles at the given (sorted, in-range) indices.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(idx.len());
        for &i in idx {
            out.push(
                self.get(i)
                    .ok_or_else(|| Error::invalid("indices", format!("{i} out of range")))?,
            );
        }
        Self::new(out)
    }
}

/// Identifies the geometry an array was produced for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeometryTag(u64);

#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    image_size: usize,
    pixel_spacing: f64,
    detector: DetectorSpec,
    angles: AngleSet,
}

impl ScanGeometry {
    pub fn new(
        image_size: usize,
        pixel_spacing: f64,
        detector: DetectorSpec,
        angles: AngleSet,
    ) -> Result<Self> {
        if image_size == 0 {
            return Err(Error::invalid("image_size", "must be >= 1"));
        }
        if !(pixel_spacing > 0.0 && pixel_spacing.is_finite()) {
            return Err(Error::invalid("pixel_spacing", "must be finite and > 0"));
        }
        let diagonal = image_size as f64 * pixel_spacing * std::f64::consts::SQRT_2;
        if detector.width() < diagonal {
            return Err(Error::invalid(
                "num_bins",
                format!(
                    "detector width {} does not cover the image diagonal {diagonal:.3}",
                    detector.width()
                ),
            ));
        }
        Ok(Self {
            image_size,
            pixel_spacing,
            detector,
            angles,
        })
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }

    pub fn detector(&self) -> &DetectorSpec {
        &self.detector
    }

    pub fn angles(&self) -> &AngleSet {
        &self.angles
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn num_bins(&self) -> usize {
        self.detector.num_bins
    }

    /// Same detector and grid, restricted to a subset of the angles.
    pub fn restrict(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            angles: self.angles.select(idx)?,
            ..self.clone()
        })
    }

    pub fn tag(&self) -> GeometryTag {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.image_size.hash(&mut h);
        self.pixel_spacing.to_bits().hash(&mut h);
        self.detector.num_bins.hash(&mut h);
        self.detector.bin_spacing.to_bits().hash(&mut h);
        for a in &self.angles.angles {
            a.to_bits().hash(&mut h);
        }
        GeometryTag(h.finish())
    }
}

/// Smallest bin count covering the diagonal of an `image_size` grid at unit spacing.
pub fn min_num_bins(image_size: usize) -> usize {
    (image_size as f64 * std::f64::consts::SQRT_2).ceil() as usize
}

/// Uniform full scan over `[0, π)` with unit pixel and bin spacing.
pub fn make_full_scan(
    num_angles: usize,
    image_size: usize,
    num_bins: usize,
) -> Result<ScanGeometry> {
    if num_angles < 2 {
        return Err(Error::invalid("num_angles", "must be >= 2"));
    }
    ScanGeometry::new(
        image_size,
        1.0,
        DetectorSpec::new(num_bins, 1.0)?,
        AngleSet::uniform(num_angles)?,
    )
}

/// Partition of a full angle set into measured (J) and missing (K) indices.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSplit {
    full: AngleSet,
    measured_idx: Vec<usize>,
    missing_idx: Vec<usize>,
}

impl AngleSplit {
    /// Builds a split from an explicit measured index list; the rest is missing.
    pub fn from_measured(full: AngleSet, mut measured_idx: Vec<usize>) -> Result<Self> {
        let n = full.len();
        measured_idx.sort_unstable();
        measured_idx.dedup();
        if measured_idx.iter().any(|&i| i >= n) {
            return Err(Error::invalid("measured_idx", "index out of range"));
        }
        let mut is_measured = vec![false; n];
        for &i in &measured_idx {
            is_measured[i] = true;
        }
        let missing_idx: Vec<usize> = (0..n).filter(|&i| !is_measured[i]).collect();
        if measured_idx.is_empty() || missing_idx.is_empty() {
            return Err(Error::invalid(
                "measured_idx",
                "measured and missing sets must both be non-empty",
            ));
        }
        Ok(Self {
            full,
            measured_idx,
            missing_idx,
        })
    }

    pub fn full(&self) -> &AngleSet {
        &self.full
    }

    pub fn measured_idx(&self) -> &[usize] {
        &self.measured_idx
    }

    pub fn missing_idx(&self) -> &[usize] {
        &self.missing_idx
    }

    pub fn num_angles(&self) -> usize {
        self.full.len()
    }
}

/// Keeps every `keep_every`-th angle starting at `phase`.
pub fn split_by_stride(
    geometry: &ScanGeometry,
    keep_every: usize,
    phase: usize,
) -> Result<AngleSplit> {
    let n = geometry.num_angles();
    if keep_every < 2 {
        return Err(Error::invalid("keep_every", "must be >= 2"));
    }
    if keep_every >= n {
        return Err(Error::invalid(
            "keep_every",
            format!("must be < number of angles ({n})"),
        ));
    }
    if phase >= keep_every {
        return Err(Error::invalid("phase", "must be < keep_every"));
    }
    let measured = (0..n).filter(|i| i % keep_every == phase).collect();
    AngleSplit::from_measured(geometry.angles().clone(), measured)
}
