//! Seeded synthetic test material: textures, analytic PSFs, noise and
//! images generated by running an AR recursion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ar::ArModel;
use crate::conv::{conv_same, BoundaryMode};
use crate::error::{Error, Result};
use crate::image::{ImagePlane, Kernel, MultiChannelImage};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    /// Random-phase field with a `1/f` amplitude spectrum.
    Fractal,
    /// Overlapping flat discs over faint noise.
    Shapes,
    /// Causal separable AR(1) x AR(1) field.
    ArField,
}

impl std::str::FromStr for Texture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fractal" => Ok(Texture::Fractal),
            "shapes" => Ok(Texture::Shapes),
            "ar" | "ar_field" => Ok(Texture::ArField),
            other => Err(Error::Config(format!("unknown texture '{other}'"))),
        }
    }
}

/// Affine map of the value range onto `[lo, hi]`.
fn stretch(img: ImagePlane, lo: f64, hi: f64) -> ImagePlane {
    let (mn, mx) = (img.min(), img.max());
    if mx <= mn {
        return ImagePlane::filled(img.width(), img.height(), 0.5 * (lo + hi));
    }
    img.map(|v| lo + (hi - lo) * (v - mn) / (mx - mn))
}

/// Square texture of side `size` with values in `[0.1, 0.9]`.
pub fn texture(kind: Texture, size: usize, seed: u64) -> Result<ImagePlane> {
    if size < 8 {
        return Err(Error::Dimensions(format!("texture side must be >= 8, got {size}")));
    }
    let raw = match kind {
        Texture::Fractal => fractal(size, seed),
        Texture::Shapes => shapes(size, seed),
        Texture::ArField => ar_field(size, seed),
    };
    Ok(stretch(raw, 0.1, 0.9))
}

fn fractal(n: usize, seed: u64) -> ImagePlane {
    let mut r = rng(seed);
    let freq = |i: usize| {
        let i = i as f64;
        let n = n as f64;
        if i < n / 2.0 { i / n } else { (i - n) / n }
    };
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let f = (freq(i).powi(2) + freq(j).powi(2)).sqrt();
            let f = if i == 0 && j == 0 { 1.0 } else { f };
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            buf.push(Complex::new(re / f, im / f));
        }
    }
    let fft = FftPlanner::new().plan_fft_inverse(n);
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
    ImagePlane::from_fn(n, n, |i, j| buf[i * n + j].re)
}

fn shapes(n: usize, seed: u64) -> ImagePlane {
    let mut r = rng(seed);
    let mut img = ImagePlane::zeros(n, n);
    let max_r = (n / 8).max(5);
    for _ in 0..60 {
        let cx = r.random_range(0..n) as f64;
        let cy = r.random_range(0..n) as f64;
        let rad = r.random_range(4..max_r) as f64;
        let v: f64 = r.random();
        for i in 0..n {
            for j in 0..n {
                let (dy, dx) = (i as f64 - cy, j as f64 - cx);
                if dx * dx + dy * dy < rad * rad {
                    img.set(i, j, v);
                }
            }
        }
    }
    img.map(|v| 0.8 * v).zip_map(&ImagePlane::from_fn(n, n, |_, _| r.random::<f64>()), |a, b| a + 0.02 * b)
}

fn ar_field(n: usize, seed: u64) -> ImagePlane {
    const WARMUP: usize = 40;
    let mut r = rng(seed);
    let m = n + WARMUP;
    let mut s: Vec<f64> = (0..m * m).map(|_| StandardNormal.sample(&mut r)).collect();
    for i in 1..m {
        for j in 1..m {
            s[i * m + j] += 0.6 * s[(i - 1) * m + j] + 0.6 * s[i * m + j - 1] - 0.36 * s[(i - 1) * m + j - 1];
        }
    }
    ImagePlane::from_fn(n, n, |i, j| s[(i + WARMUP) * m + j + WARMUP])
}

/// Analytic blur families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsfKind {
    /// Isotropic Gaussian, defocus or haze.
    Gaussian { sigma: f64 },
    /// Uniform horizontal streak through the center.
    MotionH { len: usize },
    /// Uniform streak through the center at `angle` degrees from the
    /// horizontal, counter-clockwise.
    MotionDiag { len: usize, angle: f64 },
}

impl std::str::FromStr for PsfKind {
    type Err = Error;

    /// Parses `gaussian:1.5`, `motion_h:5` or `motion_diag:5:45`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("bad PSF kind '{s}'"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let int = |t: &str| t.parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["gaussian", sig] => Ok(PsfKind::Gaussian { sigma: num(sig)? }),
            ["motion_h", len] => Ok(PsfKind::MotionH { len: int(len)? }),
            ["motion_diag", len, ang] => Ok(PsfKind::MotionDiag {
                len: int(len)?,
                angle: num(ang)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Samples a PSF family on an `l x m` grid and normalizes it to unit sum.
pub fn make_psf(kind: PsfKind, l: usize, m: usize) -> Result<Kernel> {
    if l % 2 == 0 || m % 2 == 0 || l == 0 || m == 0 {
        return Err(Error::Dimensions(format!("PSF dims must be odd, got {l}x{m}")));
    }
    let (cl, cm) = ((l / 2) as f64, (m / 2) as f64);
    let k = match kind {
        PsfKind::Gaussian { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!("gaussian sigma must be > 0, got {sigma}")));
            }
            Kernel::from_fn(l, m, |a, b| {
                let (y, x) = (a as f64 - cl, b as f64 - cm);
                (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
            })?
        }
        PsfKind::MotionH { len } => {
            if len == 0 || len % 2 == 0 || len > m {
                return Err(Error::Config(format!("motion length must be odd and <= {m}, got {len}")));
            }
            let half = (len / 2) as f64;
            Kernel::from_fn(l, m, |a, b| {
                if a as f64 == cl && (b as f64 - cm).abs() <= half { 1.0 } else { 0.0 }
            })?
        }
        PsfKind::MotionDiag { len, angle } => {
            if len == 0 || len > l.min(m) || !angle.is_finite() {
                return Err(Error::Config(format!("motion length must be in 1..={}, got {len}", l.min(m))));
            }
            let (sin, cos) = angle.to_radians().sin_cos();
            let half = len as f64 / 2.0;
            Kernel::from_fn(l, m, |a, b| {
                // rows grow downward, so the upward direction is -row
                let (x, y) = (b as f64 - cm, cl - a as f64);
                let along = x * cos + y * sin;
                let across = -x * sin + y * cos;
                if across.abs() <= 0.5 && along.abs() <= half { 1.0 } else { 0.0 }
            })?
        }
    };
    k.normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    /// Additive Gaussian noise with this standard deviation.
    Gaussian(f64),
    /// Salt and pepper: this fraction of pixels set to 0 or 1.
    Impulsive(f64),
}

impl std::str::FromStr for NoiseSpec {
    type Err = Error;

    /// Parses `none`, `gaussian:0.01` or `impulsive:0.01`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad noise setting '{s}'"));
        match s.split_once(':') {
            None if s == "none" => Ok(NoiseSpec::None),
            Some(("gaussian", v)) => Ok(NoiseSpec::Gaussian(v.parse().map_err(|_| bad())?)),
            Some(("impulsive", v)) => Ok(NoiseSpec::Impulsive(v.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// Adds noise to a plane with a generator seeded by `seed`.
pub fn apply_noise(img: &ImagePlane, noise: NoiseSpec, seed: u64) -> Result<ImagePlane> {
    let mut r = rng(seed);
    match noise {
        NoiseSpec::None => Ok(img.clone()),
        NoiseSpec::Gaussian(sd) => {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::Config(format!("noise level must be >= 0, got {sd}")));
            }
            let mut out = img.clone();
            for v in out.data_mut() {
                let n: f64 = StandardNormal.sample(&mut r);
                *v += sd * n;
            }
            Ok(out)
        }
        NoiseSpec::Impulsive(frac) => {
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::Config(format!("impulse fraction must be in [0, 1], got {frac}")));
            }
            let mut out = img.clone();
            for v in out.data_mut() {
                if r.random::<f64>() < frac {
                    *v = if r.random::<bool>() { 1.0 } else { 0.0 };
                }
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFixture {
    pub clean: MultiChannelImage,
    pub true_psf: Kernel,
    pub blurred: MultiChannelImage,
    pub noise: NoiseSpec,
    pub seed: u64,
}

/// Blurs every channel of `clean` with the sampled PSF (replicate
/// boundary) and adds noise. Channel `c` draws its noise from seed
/// `seed + c`.
pub fn make_fixture(
    clean: &MultiChannelImage,
    kind: PsfKind,
    dims: (usize, usize),
    noise: NoiseSpec,
    seed: u64,
) -> Result<SyntheticFixture> {
    let true_psf = make_psf(kind, dims.0, dims.1)?;
    if clean.height() < dims.0 || clean.width() < dims.1 {
        return Err(Error::Dimensions(format!(
            "PSF {}x{} does not fit image {}x{}",
            dims.0,
            dims.1,
            clean.height(),
            clean.width()
        )));
    }
    let mut blurred = Vec::with_capacity(clean.channels().len());
    for (c, ch) in clean.channels().iter().enumerate() {
        let b = conv_same(ch, &true_psf, BoundaryMode::NeumannReplicate)?;
        blurred.push(apply_noise(&b, noise, seed.wrapping_add(c as u64))?);
    }
    Ok(SyntheticFixture {
        clean: clean.clone(),
        true_psf,
        blurred: MultiChannelImage::new(blurred)?,
        noise,
        seed,
    })
}

/// Random AR stencil with unit center, `a_last` in the bottom-right corner
/// and all other coefficients uniform in `(-spread, spread)`.
pub fn random_stencil(p: usize, q: usize, a_last: f64, spread: f64, seed: u64) -> Result<ArModel> {
    let mut r = rng(seed);
    let n = p * q;
    let center = (p / 2) * q + q / 2;
    let coeffs = (0..n)
        .map(|i| {
            if i == center {
                1.0
            } else if i == n - 1 {
                a_last
            } else {
                r.random_range(-spread..spread)
            }
        })
        .collect();
    ArModel::new(p, q, coeffs)
}

/// Image whose every full `p x q` window is annihilated by `model`.
///
/// The first `p-1` rows and `q-1` columns are uniform in `[-1, 1]`; each
/// remaining pixel is solved from the stencil with that pixel in the
/// bottom-right corner. The result is divided by its largest magnitude.
pub fn synthesize_ar(model: &ArModel, rows: usize, cols: usize, seed: u64) -> Result<ImagePlane> {
    let (p, q) = (model.p(), model.q());
    if rows < p || cols < q {
        return Err(Error::Dimensions(format!("{rows}x{cols} smaller than stencil {p}x{q}")));
    }
    let a_last = model.get(p - 1, q - 1);
    if a_last == 0.0 {
        return Err(Error::Config("stencil corner coefficient must be non-zero".into()));
    }
    let mut r = rng(seed);
    let mut x = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            if i < p - 1 || j < q - 1 {
                x[i * cols + j] = r.random_range(-1.0..=1.0);
            }
        }
    }
    for n in p - 1..rows {
        for m in q - 1..cols {
            let mut s = 0.0;
            for i in 0..p {
                for k in 0..q {
                    if i == p - 1 && k == q - 1 {
                        continue;
                    }
                    s += model.get(i, k) * x[(n + 1 - p + i) * cols + m + 1 - q + k];
                }
            }
            x[n * cols + m] = -s / a_last;
        }
    }
    let peak = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::numerical("synthesize_ar", "recursion diverged or vanished"));
    }
    ImagePlane::new(cols, rows, x.into_iter().map(|v| v / peak).collect())
}
