//! `cnsdeblur` command-line tool.
//!
//! Exit status: 0 on success, 2 for unusable input or configuration, 3 when
//! the numbers break down (whatever artifacts were ready are still written).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cnsdeblur::ar::{estimate_ar, select_patch};
use cnsdeblur::denoise::psf_or_delta;
use cnsdeblur::fixture::{make_fixture, texture, NoiseSpec, PsfKind, SyntheticFixture, Texture};
use cnsdeblur::io::{load_image, read_kernel, save_image, write_kernel};
use cnsdeblur::pipeline::{blind_deblur, evaluate_image, PipelineConfig, RegularizerChoice, RgbPolicy};
use cnsdeblur::psf::psf_shape_report;
use cnsdeblur::schemas::SchemaKind;
use cnsdeblur::trace::TraceDocument;
use cnsdeblur::{Error, MultiChannelImage};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "cnsdeblur", version, about = "Blind deblurring with null-space PSF estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the PSF of a blurred image and write it as a kernel text file.
    EstimatePsf {
        image: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write the fitted AR coefficient grid.
        #[arg(long)]
        ar_out: Option<PathBuf>,
    },
    /// Run the full pipeline on one image.
    Deblur {
        image: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a synthetic fixture directory.
    Synth(SynthArgs),
    /// Score a restored image against a fixture directory.
    Eval {
        /// Directory written by `synth`.
        fixture: PathBuf,
        /// Restored image.
        result: PathBuf,
        /// Estimated PSF to compare with the true one.
        #[arg(long)]
        psf: Option<PathBuf>,
        /// Trace JSON written by `deblur`.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Convert one channel of a trace JSON file to CSV.
    TracePlot {
        trace: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RegArg {
    Saf,
    Tv,
}

#[derive(Clone, Copy, ValueEnum)]
enum RgbArg {
    PerChannel,
    Luminance,
}

/// A JSON config file plus per-key overrides.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat JSON config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ar_p: Option<usize>,
    #[arg(long)]
    ar_q: Option<usize>,
    #[arg(long)]
    psf_l: Option<usize>,
    #[arg(long)]
    psf_m: Option<usize>,
    #[arg(long)]
    ar_reg_lambda: Option<f64>,
    /// Comma-separated regularization weights tried in order.
    #[arg(long, value_delimiter = ',')]
    ipsf_lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    ipsf_q: Option<usize>,
    #[arg(long)]
    ipsf_theta: Option<f64>,
    #[arg(long)]
    ipsf_eps: Option<f64>,
    #[arg(long)]
    ipsf_max_iters: Option<usize>,
    /// lr, lrme, bvdr or cs.
    #[arg(long, value_parser = parse_schema)]
    schema: Option<SchemaKind>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long, value_enum)]
    regularizer: Option<RegArg>,
    #[arg(long)]
    tv_beta: Option<f64>,
    #[arg(long)]
    transition_q: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    zero_guard: Option<f64>,
    #[arg(long)]
    update_psf: Option<bool>,
    #[arg(long)]
    denoise_stages: Option<usize>,
    #[arg(long, value_enum)]
    rgb_policy: Option<RgbArg>,
    #[arg(short, long)]
    output: Option<String>,
    #[arg(long)]
    psf_out: Option<String>,
    #[arg(long)]
    ipsf_out: Option<String>,
    #[arg(long)]
    primary_out: Option<String>,
    #[arg(long)]
    trace_out: Option<String>,
}

fn parse_schema(s: &str) -> Result<SchemaKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

macro_rules! override_fields {
    ($cfg:ident, $args:ident; $($f:ident),*) => {
        $(if let Some(v) = $args.$f.clone() { $cfg.$f = v; })*
    };
}

macro_rules! override_options {
    ($cfg:ident, $args:ident; $($f:ident),*) => {
        $(if let Some(v) = $args.$f.clone() { $cfg.$f = Some(v); })*
    };
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_json(&read_text(path)?)?,
            None => PipelineConfig::default(),
        };
        let a = self;
        override_fields!(cfg, a; ar_p, ar_q, psf_l, psf_m, ipsf_lambda_grid, ipsf_q, ipsf_theta, ipsf_eps,
            ipsf_max_iters, schema, dt, tv_beta, transition_q, theta, eps, zero_guard, update_psf, denoise_stages);
        override_options!(cfg, a; ar_reg_lambda, lambda0, max_iters, output, psf_out, ipsf_out, primary_out, trace_out);
        if let Some(r) = self.regularizer {
            cfg.regularizer = match r {
                RegArg::Saf => RegularizerChoice::Saf,
                RegArg::Tv => RegularizerChoice::Tv,
            };
        }
        if let Some(r) = self.rgb_policy {
            cfg.rgb_policy = match r {
                RgbArg::PerChannel => RgbPolicy::PerChannel,
                RgbArg::Luminance => RgbPolicy::Luminance,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    out_dir: PathBuf,
    /// fractal, shapes or ar.
    #[arg(long, default_value = "fractal", conflicts_with = "clean")]
    texture: String,
    /// Side of the generated texture.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Use this image as the clean scene instead of a texture.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// gaussian:SIGMA, motion_h:LEN or motion_diag:LEN:DEGREES.
    #[arg(long, default_value = "gaussian:1.5")]
    psf: String,
    /// Kernel support as ROWSxCOLS.
    #[arg(long, default_value = "7x7")]
    dims: String,
    /// none, gaussian:SD or impulsive:FRACTION.
    #[arg(long, default_value = "none")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Everything needed to rebuild a fixture bit for bit.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureRecipe {
    texture: Option<Texture>,
    size: usize,
    clean_image: Option<String>,
    psf: PsfKind,
    dims: (usize, usize),
    noise: NoiseSpec,
    seed: u64,
}

const RECIPE_FILE: &str = "fixture.json";

impl FixtureRecipe {
    fn build(&self, base: &Path) -> Result<SyntheticFixture, Error> {
        let clean = match (&self.clean_image, self.texture) {
            (Some(p), _) => load_image(base.join(p))?,
            (None, Some(t)) => MultiChannelImage::gray(texture(t, self.size, self.seed)?),
            (None, None) => return Err(Error::Config("fixture names neither a texture nor a clean image".into())),
        };
        make_fixture(&clean, self.psf, self.dims, self.noise, self.seed)
    }
}

fn parse_dims(s: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::Config(format!("dims must look like 7x7, got '{s}'"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Error> {
    match output {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn estimate_psf_cmd(image: &Path, args: &ConfigArgs, ar_out: Option<&Path>) -> Result<(), Error> {
    let cfg = args.resolve()?;
    let x = load_image(image)?.luminance();
    let orders = cfg.orders();
    if let Some(path) = ar_out {
        let patch = select_patch(&x, orders.p, orders.q)?;
        let fit = estimate_ar(&patch.patch, orders.p, orders.q, cfg.ar_regularization().as_ref())?;
        write_text(path, &fit.model.to_text())?;
    }
    let (psf, source) = psf_or_delta(&x, &orders)?;
    match &cfg.psf_out {
        Some(p) => write_kernel(&psf, p)?,
        None => print!("{}", cnsdeblur::io::kernel_to_text(&psf)),
    }
    let report = serde_json::json!({ "psf_source": source, "shape": psf_shape_report(&psf) });
    eprintln!("{report}");
    Ok(())
}

fn deblur_cmd(image: &Path, args: &ConfigArgs) -> Result<(), Error> {
    let cfg = args.resolve()?;
    let x = load_image(image)?;
    let out = blind_deblur(&x, &cfg)?;

    // kernels and the primary estimate go out before any refinement verdict
    if let Some(p) = &cfg.psf_out {
        write_kernel(&out.psf, p)?;
    }
    if let Some(p) = &cfg.ipsf_out {
        write_kernel(&out.ipsf.g, p)?;
    }
    if let Some(p) = &cfg.primary_out {
        save_image(&out.primary, p)?;
    }
    if let Some(p) = &cfg.trace_out {
        write_text(Path::new(p), &TraceDocument::new(&cfg, &out.traces).to_json())?;
    }
    let summary = serde_json::json!({
        "psf_source": out.psf_source,
        "ipsf_lambda": out.ipsf.lambda_used,
        "ipsf_iterations": out.ipsf.iterations,
        "stop_reasons": out.traces.iter().map(|t| t.stop_reason).collect::<Vec<_>>(),
        "iterations": out.traces.iter().map(|t| t.records.len()).collect::<Vec<_>>(),
        "schema_error": out.schema_error,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if let Some(reason) = out.schema_error {
        return Err(Error::numerical("refinement", reason));
    }
    match &cfg.output {
        Some(p) => save_image(&out.s_hat, p),
        None => {
            eprintln!("no --output given; restored image not written");
            Ok(())
        }
    }
}

fn synth_cmd(a: &SynthArgs) -> Result<(), Error> {
    let (texture, clean_image) = match &a.clean {
        Some(p) => {
            let copy = format!("source.{}", p.extension().and_then(|e| e.to_str()).unwrap_or("png"));
            fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
                path: a.out_dir.display().to_string(),
                reason: e.to_string(),
            })?;
            fs::copy(p, a.out_dir.join(&copy)).map_err(|e| Error::Io {
                path: p.display().to_string(),
                reason: e.to_string(),
            })?;
            (None, Some(copy))
        }
        None => (Some(a.texture.parse()?), None),
    };
    let recipe = FixtureRecipe {
        texture,
        size: a.size,
        clean_image,
        psf: a.psf.parse()?,
        dims: parse_dims(&a.dims)?,
        noise: a.noise.parse()?,
        seed: a.seed,
    };
    let fixture = recipe.build(&a.out_dir)?;
    write_text(
        &a.out_dir.join(RECIPE_FILE),
        &serde_json::to_string_pretty(&recipe).expect("recipe serializes"),
    )?;
    save_image(&fixture.clean, a.out_dir.join("clean.png"))?;
    save_image(&fixture.blurred, a.out_dir.join("blurred.png"))?;
    write_kernel(&fixture.true_psf, a.out_dir.join("true_psf.txt"))
}

fn eval_cmd(dir: &Path, result: &Path, psf: Option<&Path>, trace: Option<&Path>, output: Option<&Path>) -> Result<(), Error> {
    let recipe: FixtureRecipe = serde_json::from_str(&read_text(&dir.join(RECIPE_FILE))?)
        .map_err(|e| Error::Config(format!("{}: {e}", dir.join(RECIPE_FILE).display())))?;
    let fixture = recipe.build(dir)?;
    let restored = load_image(result)?;
    let psf = psf.map(read_kernel).transpose()?;
    let report = evaluate_image(&fixture, &restored, psf.as_ref(), &[])?;
    let mut value = serde_json::to_value(&report).expect("report serializes");
    // trace files carry the records but not the stop reasons
    value["traces"] = match trace {
        Some(p) => TraceDocument::from_json(&read_text(p)?)?
            .channels
            .iter()
            .map(|records| {
                serde_json::json!({
                    "iterations": records.len(),
                    "final_residual_msq": records.last().map(|r| r.residual_msq),
                })
            })
            .collect(),
        None => serde_json::Value::Array(Vec::new()),
    };
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    emit(output, &text)
}

fn trace_plot_cmd(trace: &Path, channel: usize, output: Option<&Path>) -> Result<(), Error> {
    let doc = TraceDocument::from_json(&read_text(trace)?)?;
    emit(output, &doc.channel_csv(channel)?)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::EstimatePsf { image, config, ar_out } => estimate_psf_cmd(&image, &config, ar_out.as_deref()),
        Command::Deblur { image, config } => deblur_cmd(&image, &config),
        Command::Synth(a) => synth_cmd(&a),
        Command::Eval {
            fixture,
            result,
            psf,
            trace,
            output,
        } => eval_cmd(&fixture, &result, psf.as_deref(), trace.as_deref(), output.as_deref()),
        Command::TracePlot { trace, channel, output } => trace_plot_cmd(&trace, channel, output.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
