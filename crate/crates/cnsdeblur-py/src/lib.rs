//! Python bindings. Images cross the boundary as nested lists of floats in
//! [0, 1]: `rows x cols` for one plane, `channels x rows x cols` for colour.

use cnsdeblur::denoise::{psf_or_delta, Orders};
use cnsdeblur::fixture::{make_fixture as build_fixture, texture, NoiseSpec, PsfKind, Texture};
use cnsdeblur::image::{psnr as plane_psnr, ImagePlane, Kernel, MultiChannelImage};
use cnsdeblur::pipeline::{blind_deblur, PipelineConfig};
use cnsdeblur::trace::TraceDocument;
use cnsdeblur::Error;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Grid = Vec<Vec<f64>>;

fn to_py(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn plane_from(grid: Grid) -> PyResult<ImagePlane> {
    let rows = grid.len();
    let cols = grid.first().map_or(0, Vec::len);
    if grid.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows of the image have different lengths"));
    }
    ImagePlane::new(cols, rows, grid.into_iter().flatten().collect()).map_err(to_py)
}

fn plane_to(p: &ImagePlane) -> Grid {
    (0..p.height()).map(|r| p.row(r).to_vec()).collect()
}

fn kernel_to(k: &Kernel) -> Grid {
    (0..k.rows()).map(|a| (0..k.cols()).map(|b| k.get(a, b)).collect()).collect()
}

fn image_to(img: &MultiChannelImage) -> Vec<Grid> {
    img.channels().iter().map(plane_to).collect()
}

fn config_from(json: Option<&str>) -> PyResult<PipelineConfig> {
    match json {
        Some(text) => PipelineConfig::from_json(text).map_err(to_py),
        None => Ok(PipelineConfig::default()),
    }
}

/// Default pipeline configuration as a JSON string.
#[pyfunction]
fn default_config() -> String {
    PipelineConfig::default().to_json()
}

/// Blind PSF of a gray image. Returns `(psf, source)` where `source` is
/// `"null_space"` or `"delta_fallback"`.
#[pyfunction]
#[pyo3(signature = (image, p=17, q=17, l=7, m=7))]
fn estimate_psf(image: Grid, p: usize, q: usize, l: usize, m: usize) -> PyResult<(Grid, String)> {
    let x = plane_from(image)?;
    let (psf, source) = psf_or_delta(&x, &Orders { p, q, l, m }).map_err(to_py)?;
    let name = serde_json::to_value(source).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    Ok((kernel_to(&psf), name))
}

/// Full pipeline on `channels x rows x cols` input. `config` is a JSON
/// document with the same keys as the command-line config file.
#[pyfunction]
#[pyo3(signature = (channels, config=None))]
fn deblur<'py>(py: Python<'py>, channels: Vec<Grid>, config: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config_from(config)?;
    let planes = channels.into_iter().map(plane_from).collect::<PyResult<Vec<_>>>()?;
    let x = MultiChannelImage::new(planes).map_err(to_py)?;
    let out = py.detach(|| blind_deblur(&x, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("restored", image_to(&out.s_hat))?;
    d.set_item("primary", image_to(&out.primary))?;
    d.set_item("psf", kernel_to(&out.psf))?;
    d.set_item("ipsf", kernel_to(&out.ipsf.g))?;
    d.set_item("ipsf_lambda", out.ipsf.lambda_used)?;
    d.set_item("trace_json", TraceDocument::new(&cfg, &out.traces).to_json())?;
    d.set_item("schema_error", out.schema_error)?;
    Ok(d)
}

/// Synthetic fixture from a generated texture. `psf` and `noise` use the
/// command-line spellings, e.g. `"gaussian:1.5"` and `"impulsive:0.01"`.
#[pyfunction]
#[pyo3(signature = (texture_kind="fractal", size=128, psf="gaussian:1.5", dims=(7, 7), noise="none", seed=0))]
fn make_fixture<'py>(
    py: Python<'py>,
    texture_kind: &str,
    size: usize,
    psf: &str,
    dims: (usize, usize),
    noise: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: Texture = texture_kind.parse().map_err(to_py)?;
    let psf: PsfKind = psf.parse().map_err(to_py)?;
    let noise: NoiseSpec = noise.parse().map_err(to_py)?;
    let clean = MultiChannelImage::gray(texture(kind, size, seed).map_err(to_py)?);
    let f = build_fixture(&clean, psf, dims, noise, seed).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("clean", plane_to(&f.clean.channels()[0]))?;
    d.set_item("blurred", plane_to(&f.blurred.channels()[0]))?;
    d.set_item("true_psf", kernel_to(&f.true_psf))?;
    Ok(d)
}

/// PSNR in dB for images on [0, 1]; infinite for identical inputs.
#[pyfunction]
fn psnr(reference: Grid, test: Grid) -> PyResult<f64> {
    plane_psnr(&plane_from(reference)?, &plane_from(test)?).map_err(to_py)
}

#[pymodule]
fn cnsdeblur_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_psf, m)?)?;
    m.add_function(wrap_pyfunction!(deblur, m)?)?;
    m.add_function(wrap_pyfunction!(make_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    Ok(())
}
