//! Synthetic CCD images of the fluorescing ions.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::dynamics::Trajectory;
use crate::error::{invalid, Error, Result};

/// Projection plane; the first axis is horizontal in the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewPlane {
    Zy,
    Zx,
    Xy,
}

impl ViewPlane {
    fn axes(self) -> (usize, usize) {
        match self {
            ViewPlane::Zy => (2, 1),
            ViewPlane::Zx => (2, 0),
            ViewPlane::Xy => (0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewPlane::Zy => "zy",
            ViewPlane::Zx => "zx",
            ViewPlane::Xy => "xy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zy" => Ok(ViewPlane::Zy),
            "zx" => Ok(ViewPlane::Zx),
            "xy" => Ok(ViewPlane::Xy),
            _ => Err(invalid(format!("unknown view plane `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageConfig {
    pub view: ViewPlane,
    /// m per pixel
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    /// Samples older than this, counted back from the last one, are ignored (s).
    pub exposure: f64,
    /// Gaussian blur (m).
    pub psf_sigma: f64,
    /// Intensity deposited per ion sample.
    pub brightness: f64,
}

impl ImageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_size > 0.0) || !(self.exposure > 0.0) || !(self.psf_sigma >= 0.0) {
            return Err(invalid("image config needs pixel_size > 0, exposure > 0, psf_sigma >= 0"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("image must have at least one pixel"));
        }
        Ok(())
    }

    fn meta(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("view".into(), self.view.name().into());
        m.insert("pixel_size".into(), format!("{:e}", self.pixel_size));
        m.insert("exposure".into(), format!("{:e}", self.exposure));
        m.insert("psf_sigma".into(), format!("{:e}", self.psf_sigma));
        m.insert("brightness".into(), format!("{:e}", self.brightness));
        m
    }
}

/// Row-major pixel grid, row 0 at the top (largest vertical coordinate).
#[derive(Debug, Clone, PartialEq)]
pub struct CcdImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

impl CcdImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0.0; width * height], meta: BTreeMap::new() }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn total(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    /// Sum over rows, one value per column (axial profile for zy/zx views).
    pub fn column_profile(&self) -> Vec<f64> {
        (0..self.width).map(|c| (0..self.height).map(|r| self.get(c, r)).sum()).collect()
    }

    /// Sum over columns, one value per row.
    pub fn row_profile(&self) -> Vec<f64> {
        (0..self.height).map(|r| self.pixels[r * self.width..(r + 1) * self.width].iter().sum()).collect()
    }

    /// Binary PGM (P5), 16-bit big-endian, scaled so the brightest pixel is
    /// 65535. The comment line carries the metadata and the scale.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.max();
        let mut meta = self.meta.clone();
        meta.insert("max_intensity".into(), format!("{max:e}"));
        let comment: Vec<String> = meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let mut out = format!("P5\n# {}\n{} {}\n65535\n", comment.join(";"), self.width, self.height).into_bytes();
        for &p in &self.pixels {
            let v = if max > 0.0 { (p / max * 65535.0).round().clamp(0.0, 65535.0) as u16 } else { 0 };
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::File::create(path)?.write_all(&self.to_pgm())?;
        Ok(())
    }

    /// Parses a 16-bit P5 image written by [`CcdImage::to_pgm`]; intensities
    /// are restored with `max_intensity` when present.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Parse { line: 0, message: format!("PGM: {m}") };
        let mut pos = 0;
        let mut tokens = Vec::new();
        let mut meta = BTreeMap::new();
        while tokens.len() < 4 {
            if pos >= bytes.len() {
                return Err(bad("truncated header"));
            }
            let c = bytes[pos];
            if c == b'#' {
                let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
                let text = String::from_utf8_lossy(&bytes[pos + 1..end]).trim().to_string();
                for kv in text.split(';') {
                    if let Some((k, v)) = kv.split_once('=') {
                        meta.insert(k.trim().to_string(), v.trim().to_string());
                    }
                }
                pos = end + 1;
            } else if c.is_ascii_whitespace() {
                pos += 1;
            } else {
                let end = bytes[pos..].iter().position(|b| b.is_ascii_whitespace()).map_or(bytes.len(), |e| pos + e);
                tokens.push(String::from_utf8_lossy(&bytes[pos..end]).to_string());
                pos = end;
            }
        }
        pos += 1;
        if tokens[0] != "P5" {
            return Err(bad("not a P5 file"));
        }
        let width: usize = tokens[1].parse().map_err(|_| bad("width"))?;
        let height: usize = tokens[2].parse().map_err(|_| bad("height"))?;
        let maxval: u32 = tokens[3].parse().map_err(|_| bad("maxval"))?;
        if maxval != 65535 {
            return Err(bad("only 16-bit images are supported"));
        }
        let data = &bytes[pos.min(bytes.len())..];
        if data.len() < 2 * width * height {
            return Err(bad("truncated pixel data"));
        }
        let scale = meta.get("max_intensity").and_then(|s| s.parse::<f64>().ok()).unwrap_or(65535.0) / 65535.0;
        let pixels = data
            .chunks_exact(2)
            .take(width * height)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect();
        meta.remove("max_intensity");
        Ok(Self { width, height, pixels, meta })
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_pgm(&buf)
    }
}

fn gaussian_kernel(sigma_px: f64) -> Vec<f64> {
    let half = (4.0 * sigma_px).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let x = i as f64 - half as f64;
            (-0.5 * x * x / (sigma_px * sigma_px)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with a normalized kernel truncated at 4 sigma.
pub fn blur(img: &CcdImage, sigma_px: f64) -> CcdImage {
    if sigma_px <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma_px);
    let half = (k.len() / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let mut tmp = vec![0.0; img.pixels.len()];
    for r in 0..h {
        for c in 0..w {
            let v = img.pixels[(r * w + c) as usize];
            if v == 0.0 {
                continue;
            }
            for (ki, kv) in k.iter().enumerate() {
                let cc = c + ki as isize - half;
                if cc >= 0 && cc < w {
                    tmp[(r * w + cc) as usize] += v * kv;
                }
            }
        }
    }
    let mut out = vec![0.0; img.pixels.len()];
    for r in 0..h {
        for c in 0..w {
            let v = tmp[(r * w + c) as usize];
            if v == 0.0 {
                continue;
            }
            for (ki, kv) in k.iter().enumerate() {
                let rr = r + ki as isize - half;
                if rr >= 0 && rr < h {
                    out[(rr * w + c) as usize] += v * kv;
                }
            }
        }
    }
    CcdImage { width: img.width, height: img.height, pixels: out, meta: img.meta.clone() }
}

/// Projects the laser-cooled ion samples of the exposure window onto the
/// image plane and blurs the result with the PSF. Sympathetically cooled
/// ions do not fluoresce.
pub fn render_ccd(traj: &Trajectory, cfg: &ImageConfig) -> Result<CcdImage> {
    cfg.validate()?;
    let last = traj.snapshots.last().ok_or_else(|| Error::InsufficientSamples("no trajectory samples".into()))?;
    let t_min = last.time - cfg.exposure;
    let (ha, va) = cfg.view.axes();
    let mut img = CcdImage::zeros(cfg.width, cfg.height);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let mut samples = 0usize;
    for snap in traj.snapshots.iter().filter(|s| s.time >= t_min - 1e-15) {
        for ion in snap.ions.iter().filter(|i| i.alive) {
            if !traj.species[ion.species].is_laser_cooled() {
                continue;
            }
            let c = (ion.position[ha] / cfg.pixel_size + 0.5 * w).floor();
            let r = (0.5 * h - ion.position[va] / cfg.pixel_size).floor();
            if c >= 0.0 && c < w && r >= 0.0 && r < h {
                img.pixels[r as usize * cfg.width + c as usize] += cfg.brightness;
            }
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(Error::InsufficientSamples("no fluorescing ion samples in the exposure window".into()));
    }
    let mut out = blur(&img, cfg.psf_sigma / cfg.pixel_size);
    out.meta = cfg.meta();
    out.meta.insert("t_start".into(), format!("{t_min:e}"));
    out.meta.insert("t_end".into(), format!("{:e}", last.time));
    let lc: Vec<&str> = traj.species.iter().filter(|s| s.is_laser_cooled()).map(|s| s.name.as_str()).collect();
    out.meta.insert("species".into(), lc.join(","));
    Ok(out)
}

/// Normalized cross-correlation after mean subtraction, in [-1, 1].
pub fn image_similarity(a: &CcdImage, b: &CcdImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch { a: (a.width, a.height), b: (b.width, b.height) });
    }
    let n = a.pixels.len() as f64;
    let ma = a.pixels.iter().sum::<f64>() / n;
    let mb = b.pixels.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.pixels.iter().zip(&b.pixels) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("image with constant intensity".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IonState, Snapshot};
    use crate::presets;

    fn one_ion(pos: [f64; 3]) -> Trajectory {
        let be = presets::species("Be+").unwrap().laser_cooled(1000.0);
        let ion = IonState { position: pos, velocity: [0.0; 3], species: 0, alive: true };
        Trajectory { species: vec![be], snapshots: vec![Snapshot { time: 0.0, ions: vec![ion] }] }
    }

    fn cfg(psf: f64) -> ImageConfig {
        ImageConfig {
            view: ViewPlane::Zy,
            pixel_size: 1e-6,
            width: 40,
            height: 30,
            exposure: 1e-3,
            psf_sigma: psf,
            brightness: 2.0,
        }
    }

    #[test]
    fn stationary_ion_fills_one_pixel() {
        let img = render_ccd(&one_ion([0.0, 3.5e-6, -5.5e-6]), &cfg(0.0)).unwrap();
        let lit: Vec<usize> = (0..img.pixels.len()).filter(|&i| img.pixels[i] > 0.0).collect();
        assert_eq!(lit.len(), 1);
        assert_eq!(img.total(), 2.0);
        assert_eq!(img.get(14, 11), 2.0);
    }

    #[test]
    fn psf_conserves_intensity() {
        let img = render_ccd(&one_ion([0.0; 3]), &cfg(2.5e-6)).unwrap();
        assert!((img.total() / 2.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sympathetic_ions_are_dark() {
        let mut t = one_ion([0.0; 3]);
        t.species[0] = presets::species("Be+").unwrap();
        assert!(render_ccd(&t, &cfg(0.0)).is_err());
    }

    #[test]
    fn similarity_bounds() {
        let a = render_ccd(&one_ion([0.0; 3]), &cfg(3e-6)).unwrap();
        let b = render_ccd(&one_ion([8e-6, 0.0, 6e-6]), &cfg(3e-6)).unwrap();
        assert!((image_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mut neg = a.clone();
        neg.pixels.iter_mut().for_each(|p| *p = -*p);
        assert!((image_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        let s = image_similarity(&a, &b).unwrap();
        assert!(s < 1.0 && (s - image_similarity(&b, &a).unwrap()).abs() < 1e-15);
        let small = CcdImage::zeros(3, 3);
        assert!(matches!(image_similarity(&a, &small), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pgm_round_trip() {
        let a = render_ccd(&one_ion([1e-6, 2e-6, 3e-6]), &cfg(2e-6)).unwrap();
        let bytes = a.to_pgm();
        assert!(bytes.starts_with(b"P5\n# "));
        let b = CcdImage::from_pgm(&bytes).unwrap();
        assert_eq!((b.width, b.height), (a.width, a.height));
        assert_eq!(b.meta.get("view").map(String::as_str), Some("zy"));
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            assert!((x - y).abs() <= a.max() / 65535.0);
        }
    }
}
