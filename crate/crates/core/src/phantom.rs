//! Ellipse phantoms, their exact parallel-beam line integrals, and simulated
//! noisy measurements.
//!
//! Phantom coordinates are normalized: the image grid spans `[-1, 1]²` with
//! `x` to the right and `y` up, so row 0 is the top of the image. One
//! normalized unit is `image_size · pixel_spacing / 2` physical units.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::array::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_axis_a: f64,
    pub semi_axis_b: f64,
    /// Counter-clockwise rotation of the `a` axis from `+x`, radians.
    pub rotation: f64,
    pub density: f64,
}

impl Ellipse {
    pub fn new(
        center_x: f64,
        center_y: f64,
        semi_axis_a: f64,
        semi_axis_b: f64,
        rotation: f64,
        density: f64,
    ) -> Result<Self> {
        if !(semi_axis_a > 0.0 && semi_axis_b > 0.0) {
            return Err(Error::invalid("semi_axis", "both semi-axes must be > 0"));
        }
        let e = Self {
            center_x,
            center_y,
            semi_axis_a,
            semi_axis_b,
            rotation,
            density,
        };
        if [
            center_x,
            center_y,
            semi_axis_a,
            semi_axis_b,
            rotation,
            density,
        ]
        .iter()
        .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("ellipse", "all parameters must be finite"));
        }
        Ok(e)
    }

    pub fn disk(center_x: f64, center_y: f64, radius: f64, density: f64) -> Result<Self> {
        Self::new(center_x, center_y, radius, radius, 0.0, density)
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.rotation.sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = (dx * c + dy * s) / self.semi_axis_a;
        let v = (-dx * s + dy * c) / self.semi_axis_b;
        u * u + v * v <= 1.0
    }

    /// Line integral along `{p : p·(cos θ, sin θ) = offset}`, normalized units.
    pub fn line_integral(&self, theta: f64, offset: f64) -> f64 {
        let (st, ct) = theta.sin_cos();
        let t = offset - (self.center_x * ct + self.center_y * st);
        let sa = (theta - self.rotation).sin();
        let (a, b) = (self.semi_axis_a, self.semi_axis_b);
        // squared support half-width of the ellipse along the ray normal
        let w2 = a * a + (b * b - a * a) * sa * sa;
        let d = w2 - t * t;
        if d <= 0.0 {
            0.0
        } else {
            2.0 * self.density * a * b * d.sqrt() / w2
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Phantom {
    pub ellipses: Vec<Ellipse>,
}

impl Phantom {
    pub fn new(ellipses: Vec<Ellipse>) -> Self {
        Self { ellipses }
    }

    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.ellipses
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.density)
            .sum()
    }

    pub fn line_integral(&self, theta: f64, offset: f64) -> f64 {
        self.ellipses
            .iter()
            .map(|e| e.line_integral(theta, offset))
            .sum()
    }

    /// Parses the text format written by [`Phantom::to_text`].
    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut ellipses = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 || fields[0] != "ellipse" {
                return Err(format!(
                    "line {}: expected `ellipse density a b cx cy rotation`",
                    n + 1
                ));
            }
            let v: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", n + 1))?;
            let e = Ellipse::new(v[3], v[4], v[1], v[2], v[5], v[0])
                .map_err(|e| format!("line {}: {e}", n + 1))?;
            ellipses.push(e);
        }
        Ok(Self { ellipses })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# ellipse density a b cx cy rotation(rad)\n");
        for e in &self.ellipses {
            out.push_str(&format!(
                "ellipse {} {} {} {} {} {}\n",
                e.density, e.semi_axis_a, e.semi_axis_b, e.center_x, e.center_y, e.rotation
            ));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_text(&text).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// Shepp–Logan head phantom (Shepp & Logan, IEEE Trans. Nucl. Sci. 21, 1974)
/// with the skull density scaled to 1, as tabulated by MATLAB's
/// `phantom('Shepp-Logan')`. Brain background is `1 - 0.98 = 0.02`.
pub fn shepp_logan() -> Phantom {
    // density, a, b, x0, y0, phi (degrees)
    const TABLE: [[f64; 6]; 10] = [
        [1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0],
        [-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0],
        [-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0],
        [-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0],
        [0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0],
        [0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0],
        [0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0],
        [0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0],
        [0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0],
        [0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0],
    ];
    Phantom::new(
        TABLE
            .iter()
            .map(|&[d, a, b, x, y, phi]| Ellipse {
                center_x: x,
                center_y: y,
                semi_axis_a: a,
                semi_axis_b: b,
                rotation: phi.to_radians(),
                density: d,
            })
            .collect(),
    )
}

/// Normalized coordinate of pixel index `i` on an `n`-pixel axis.
#[inline]
pub fn pixel_center(i: usize, n: usize) -> f64 {
    (i as f64 - (n as f64 - 1.0) / 2.0) * 2.0 / n as f64
}

/// Point-samples the phantom at pixel centers.
pub fn rasterize(phantom: &Phantom, image_size: usize, pixel_spacing: f64) -> Image {
    let n = image_size;
    let mut img = Image::zeros(n, pixel_spacing);
    for row in 0..n {
        let y = -pixel_center(row, n);
        for col in 0..n {
            img.set(row, col, phantom.value_at(pixel_center(col, n), y));
        }
    }
    img
}

/// Exact line integrals of the continuous phantom, in physical units.
pub fn analytic_sinogram(phantom: &Phantom, geometry: &ScanGeometry) -> Sinogram {
    let scale = geometry.image_size() as f64 * geometry.pixel_spacing() / 2.0;
    let det = *geometry.detector();
    let mut sino = Sinogram::zeros(geometry);
    for (j, &theta) in geometry.angles().as_slice().iter().enumerate() {
        for (b, v) in sino.row_mut(j).iter_mut().enumerate() {
            *v = scale * phantom.line_integral(theta, det.bin_offset(b) / scale);
        }
    }
    sino
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be finite and >= 0"));
        }
        Ok(Self {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        })
    }

    fn is_silent(&self) -> bool {
        self.kind == NoiseKind::None || self.sigma == 0.0
    }

    /// Adds i.i.d. noise in row-major order from a seeded stream.
    pub fn apply(&self, sino: &mut Sinogram) {
        if self.is_silent() {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated at construction");
        for v in sino.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
}

pub fn simulate_measurement(
    phantom: &Phantom,
    geometry: &ScanGeometry,
    noise: &NoiseModel,
) -> Sinogram {
    let mut sino = analytic_sinogram(phantom, geometry);
    noise.apply(&mut sino);
    sino
}
