//! On-disk formats.
//!
//! Sinogram container: a UTF-8 header of `key = value` lines closed by an
//! `end_header` line, followed by the payload as little-endian `f32`,
//! angle-major. Angles are written in shortest round-trip form so the
//! geometry reads back exactly.
//!
//! ```text
//! # sinofill sinogram
//! format_version = 1
//! image_size = 256
//! pixel_spacing = 1
//! num_angles = 360
//! num_bins = 363
//! bin_spacing = 1
//! noise_seed = 42
//! angles = 0 0.008726646259971648 ...
//! end_header
//! ```
//!
//! Images are written twice: a 16-bit grayscale PNG windowed to
//! `[0, data_range]` for viewing, and a raw `f64` sidecar with the same kind of
//! header for exact metric recomputation.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::array::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::geometry::{AngleSet, DetectorSpec, ScanGeometry};

pub const SINOGRAM_FORMAT_VERSION: u32 = 1;
const END_HEADER: &str = "end_header\n";

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Splits `bytes` into parsed header fields and the payload.
fn split_header<'a>(path: &Path, bytes: &'a [u8]) -> Result<(BTreeMap<String, String>, &'a [u8])> {
    let end = bytes
        .windows(END_HEADER.len())
        .position(|w| w == END_HEADER.as_bytes())
        .ok_or_else(|| format_err(path, "no end_header line"))?;
    let text =
        std::str::from_utf8(&bytes[..end]).map_err(|_| format_err(path, "header is not UTF-8"))?;
    let mut fields = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(path, format!("bad header line `{line}`")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok((fields, &bytes[end + END_HEADER.len()..]))
}

fn field<T: std::str::FromStr>(
    path: &Path,
    fields: &BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    let raw = fields
        .get(key)
        .ok_or_else(|| format_err(path, format!("missing header field `{key}`")))?;
    raw.parse()
        .map_err(|_| format_err(path, format!("bad value `{raw}` for `{key}`")))
}

/// Everything a sinogram file carries.
#[derive(Debug, Clone, PartialEq)]
pub struct SinogramFile {
    pub geometry: ScanGeometry,
    pub sinogram: Sinogram,
    pub noise_seed: Option<u64>,
}

pub fn encode_sinogram(
    geometry: &ScanGeometry,
    sino: &Sinogram,
    noise_seed: Option<u64>,
) -> Result<Vec<u8>> {
    sino.check_bound(geometry)?;
    let mut out = String::from("# sinofill sinogram\n");
    out.push_str(&format!("format_version = {SINOGRAM_FORMAT_VERSION}\n"));
    out.push_str(&format!("image_size = {}\n", geometry.image_size()));
    out.push_str(&format!("pixel_spacing = {}\n", geometry.pixel_spacing()));
    out.push_str(&format!("num_angles = {}\n", geometry.num_angles()));
    out.push_str(&format!("num_bins = {}\n", geometry.num_bins()));
    out.push_str(&format!(
        "bin_spacing = {}\n",
        geometry.detector().bin_spacing()
    ));
    match noise_seed {
        Some(s) => out.push_str(&format!("noise_seed = {s}\n")),
        None => out.push_str("noise_seed = none\n"),
    }
    let angles: Vec<String> = geometry
        .angles()
        .as_slice()
        .iter()
        .map(|a| a.to_string())
        .collect();
    out.push_str(&format!("angles = {}\n", angles.join(" ")));
    out.push_str(END_HEADER);
    let mut bytes = out.into_bytes();
    bytes.reserve(sino.data().len() * 4);
    for &v in sino.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(bytes)
}

pub fn decode_sinogram(path: &Path, bytes: &[u8]) -> Result<SinogramFile> {
    let (h, payload) = split_header(path, bytes)?;
    let version: u32 = field(path, &h, "format_version")?;
    if version != SINOGRAM_FORMAT_VERSION {
        return Err(format_err(
            path,
            format!("unsupported format_version {version}"),
        ));
    }
    let num_angles: usize = field(path, &h, "num_angles")?;
    let num_bins: usize = field(path, &h, "num_bins")?;
    let angles: Vec<f64> = h
        .get("angles")
        .ok_or_else(|| format_err(path, "missing header field `angles`"))?
        .split_whitespace()
        .map(|a| a.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format_err(path, "bad angle list"))?;
    if angles.len() != num_angles {
        return Err(format_err(
            path,
            "angle list length differs from num_angles",
        ));
    }
    let noise_seed = match h.get("noise_seed").map(String::as_str) {
        None | Some("none") => None,
        Some(_) => Some(field(path, &h, "noise_seed")?),
    };
    let geometry = ScanGeometry::new(
        field(path, &h, "image_size")?,
        field(path, &h, "pixel_spacing")?,
        DetectorSpec::new(num_bins, field(path, &h, "bin_spacing")?)?,
        AngleSet::new(angles)?,
    )?;
    if payload.len() != num_angles * num_bins * 4 {
        return Err(format_err(
            path,
            format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                num_angles * num_bins * 4
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let sinogram = Sinogram::from_vec(&geometry, data)?;
    Ok(SinogramFile {
        geometry,
        sinogram,
        noise_seed,
    })
}

pub fn write_sinogram(
    path: &Path,
    geometry: &ScanGeometry,
    sino: &Sinogram,
    noise_seed: Option<u64>,
) -> Result<()> {
    fs::write(path, encode_sinogram(geometry, sino, noise_seed)?)?;
    Ok(())
}

pub fn read_sinogram(path: &Path) -> Result<SinogramFile> {
    decode_sinogram(path, &read_input(path)?)
}

/// Raw `f64` image with a small text header.
pub fn write_image_raw(path: &Path, img: &Image) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(
        w,
        "# sinofill image\nimage_size = {}\npixel_spacing = {}\n{END_HEADER}",
        img.size(),
        img.pixel_spacing()
    )?;
    for v in img.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_image_raw(path: &Path) -> Result<Image> {
    let bytes = read_input(path)?;
    let (h, payload) = split_header(path, &bytes)?;
    let size: usize = field(path, &h, "image_size")?;
    let spacing: f64 = field(path, &h, "pixel_spacing")?;
    if payload.len() != size * size * 8 {
        return Err(format_err(path, "payload size does not match image_size"));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Image::from_vec(size, spacing, data)
}

fn to_u16(v: f64, data_range: f64) -> u16 {
    ((v / data_range).clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn write_png16(path: &Path, width: usize, height: usize, pixels: &[u16]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let bytes: Vec<u8> = pixels.iter().flat_map(|p| p.to_be_bytes()).collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

/// 16-bit grayscale PNG, window `[0, data_range]`.
pub fn write_image_png(path: &Path, img: &Image, data_range: f64) -> Result<()> {
    let px: Vec<u16> = img.data().iter().map(|&v| to_u16(v, data_range)).collect();
    write_png16(path, img.size(), img.size(), &px)
}

/// Panels side by side, separated by a 4-pixel black gutter.
pub fn write_image_grid(path: &Path, panels: &[&Image], data_range: f64) -> Result<()> {
    const GUTTER: usize = 4;
    let Some(first) = panels.first() else {
        return Err(Error::invalid("panels", "at least one panel is required"));
    };
    let n = first.size();
    if panels.iter().any(|p| p.size() != n) {
        return Err(Error::invalid(
            "panels",
            "all panels must have the same size",
        ));
    }
    let width = panels.len() * n + (panels.len() - 1) * GUTTER;
    let mut px = vec![0u16; width * n];
    for (k, p) in panels.iter().enumerate() {
        let x0 = k * (n + GUTTER);
        for r in 0..n {
            for c in 0..n {
                px[r * width + x0 + c] = to_u16(p.get(r, c), data_range);
            }
        }
    }
    write_png16(path, width, n, &px)
}

pub fn loss_csv(history: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<f64>> {
    let text = String::from_utf8(read_input(path)?).map_err(|_| format_err(path, "not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some("iteration,loss") {
        return Err(format_err(path, "missing `iteration,loss` header"));
    }
    lines
        .map(|l| {
            l.split_once(',')
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| format_err(path, format!("bad row `{l}`")))
        })
        .collect()
}
