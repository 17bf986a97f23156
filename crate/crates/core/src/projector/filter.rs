//! Frequency-domain ramp filtering of sinogram rows.
//!
//! Each row is zero-padded at the end to `M = next_pow2(2·num_bins)`, multiplied
//! by a real, even response in the DFT domain, and cropped back to its first
//! `num_bins` samples. Two real rows are filtered per complex FFT (one in the
//! real part, one in the imaginary part); this is exact because the response
//! is real and even.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::array::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterKind {
    #[default]
    RamLak,
    /// Ramp multiplied by a Hann window reaching zero at Nyquist.
    HannWindowedRamLak,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::RamLak => "ram_lak",
            FilterKind::HannWindowedRamLak => "hann",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ram_lak" | "ramlak" => Ok(FilterKind::RamLak),
            "hann" | "hann_windowed_ram_lak" => Ok(FilterKind::HannWindowedRamLak),
            _ => Err(format!("unknown filter `{s}` (expected ram_lak or hann)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FilterSpec {
    pub kind: FilterKind,
}

impl FilterSpec {
    pub fn new(kind: FilterKind) -> Self {
        Self { kind }
    }
}

pub fn padded_len(num_bins: usize) -> usize {
    (2 * num_bins).next_power_of_two()
}

/// A planned ramp filter for one detector layout.
#[derive(Clone)]
pub struct RampFilter {
    num_bins: usize,
    response: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RampFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RampFilter")
            .field("num_bins", &self.num_bins)
            .field("padded_len", &self.response.len())
            .finish()
    }
}

impl RampFilter {
    pub fn new(spec: FilterSpec, num_bins: usize, bin_spacing: f64) -> Self {
        let m = padded_len(num_bins);
        let response = (0..m)
            .map(|k| {
                let signed = if k <= m / 2 {
                    k as f64
                } else {
                    k as f64 - m as f64
                };
                let freq = signed / (m as f64 * bin_spacing);
                let ramp = freq.abs();
                match spec.kind {
                    FilterKind::RamLak => ramp,
                    FilterKind::HannWindowedRamLak => {
                        let c = (std::f64::consts::PI * freq * bin_spacing).cos();
                        ramp * c * c
                    }
                }
            })
            .collect();
        Self::with_response(num_bins, response)
    }

    /// Filter with an arbitrary real, even response of length `padded_len(num_bins)`.
    pub fn with_response(num_bins: usize, response: Vec<f64>) -> Self {
        let m = response.len();
        debug_assert_eq!(m, padded_len(num_bins));
        let mut planner = FftPlanner::new();
        Self {
            num_bins,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
            response,
        }
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    /// Applies the response to a full padded period of two packed real signals.
    pub fn apply_padded(&self, buf: &mut [Complex<f64>]) {
        let m = self.response.len();
        let mut scratch = vec![Complex::default(); self.fwd.get_inplace_scratch_len()];
        self.fwd.process_with_scratch(buf, &mut scratch);
        let norm = 1.0 / m as f64;
        for (z, &h) in buf.iter_mut().zip(&self.response) {
            *z *= h * norm;
        }
        self.inv.process_with_scratch(buf, &mut scratch);
    }

    /// Filters each row of `data` (row length `num_bins`) in place.
    pub fn apply_rows(&self, data: &mut [f64]) {
        let nb = self.num_bins;
        let m = self.response.len();
        data.par_chunks_mut(2 * nb).for_each(|pair| {
            let mut buf = vec![Complex::default(); m];
            let (a, b) = pair.split_at_mut(nb.min(pair.len()));
            for (i, z) in buf.iter_mut().take(nb).enumerate() {
                z.re = a[i];
                z.im = b.get(i).copied().unwrap_or(0.0);
            }
            self.apply_padded(&mut buf);
            for (i, z) in buf.iter().take(nb).enumerate() {
                a[i] = z.re;
                if let Some(v) = b.get_mut(i) {
                    *v = z.im;
                }
            }
        });
    }

    pub fn apply(&self, sino: &Sinogram) -> Sinogram {
        let mut out = sino.clone();
        self.apply_rows(out.data_mut());
        out
    }

    /// Transpose of [`RampFilter::apply`].
    ///
    /// The forward map is `crop ∘ C ∘ pad`, where `pad` appends zeros and
    /// `crop` keeps the leading `num_bins` samples, so `padᵀ = crop`. `C` is
    /// circulant with a real even kernel and therefore symmetric. The
    /// transpose `padᵀ ∘ Cᵀ ∘ cropᵀ` reduces to the same sequence of steps.
    pub fn apply_transpose(&self, sino: &Sinogram) -> Sinogram {
        self.apply(sino)
    }
}

pub fn ramp_filter(sino: &Sinogram, bin_spacing: f64, spec: FilterSpec) -> Sinogram {
    RampFilter::new(spec, sino.num_bins(), bin_spacing).apply(sino)
}
