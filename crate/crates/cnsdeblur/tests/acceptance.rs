//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines are always
//! printed. Exits non-zero if any criterion fails; a failing criterion is
//! reported with its measured values rather than hidden.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use cnsdeblur::ar::estimate_ar;
use cnsdeblur::conv::{conv_same, correlate_adjoint, saf_operator, tv_operator, BoundaryMode};
use cnsdeblur::denoise::{cascade, impulse_energy, psf_or_delta, Orders};
use cnsdeblur::fixture::{apply_noise, make_fixture, random_stencil, synthesize_ar, texture, NoiseSpec, PsfKind, Texture};
use cnsdeblur::image::{kernel_ncc, psnr, psnr_multi, ImagePlane, Kernel, MultiChannelImage};
use cnsdeblur::io::quantize_u8;
use cnsdeblur::ipsf::{build_problem, optimize_ipsf, IpsfConfig};
use cnsdeblur::pipeline::{blind_deblur, PipelineConfig, PipelineResult};
use cnsdeblur::schemas::lr::{lr_psf_update, lr_step};
use cnsdeblur::schemas::{SchemaKind, StopReason};
use cnsdeblur::SyntheticFixture;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Adjoint mismatch relative to `|a| |b|`.
const ADJOINT_REL_TOL: f64 = 1e-10;
const ADJOINT_TRIPLES: usize = 200;
const ADJOINT_TIME_LIMIT: Duration = Duration::from_secs(5);

/// Relative gap between the analytic and finite-difference directional
/// derivatives of the regularizers.
const EL_REL_TOL: f64 = 1e-3;
const EL_DIRECTIONS: usize = 100;
const EL_PLANES: usize = 5;

const AR_CLEAN_TOL: f64 = 1e-6;
const AR_NOISY_TOL: f64 = 1e-2;
const AR_NOISE_SD: f64 = 0.01;
const AR_SEEDS: u64 = 10;

const GAUSS_NCC_MIN: f64 = 0.95;
const MOTION_NCC_MIN: f64 = 0.90;
const PIPELINE_TIME_LIMIT: Duration = Duration::from_secs(60);
/// Side of the blind round-trip fixtures.
const BENCH_SIDE: usize = 512;

const DELTA_OFF_CENTER_MAX: f64 = 0.05;
const DELTA_PSNR_LOSS_MAX: f64 = 0.5;

const IPSF_MAX_ITERS: usize = 10;
const IPSF_LS_REPRO_TOL: f64 = 1e-10;

const LR_FLUX_REL_TOL: f64 = 1e-8;
const LR_DRIFT_MAX: f64 = 0.01;
const LR_UPDATES: usize = 100;
const LR_DRIFT_SIDE: usize = 256;

const BVDR_TRANSITION_MAX: usize = 10;
const BVDR_THETA_MAX: f64 = 1.0001;
/// Longer run used only to observe the peak and the steps after it.
const BVDR_OBSERVE_CAP: usize = 30;

const CS_VIOLATION_MAX_STEPS: usize = 12;
const CS_DTS: [f64; 3] = [0.1, 0.5, 1.0];
/// Iteration cap for the step-count experiment, far above any expected
/// violation point.
const CS_LONG_CAP: usize = 300;

const DEBLUR_GAIN_MIN_DB: f64 = 1.0;
const SCHEMA_AGREEMENT_DB: f64 = 3.0;

const CASCADE_PSNR_LOSS_MAX: f64 = 3.0;
const IMPULSE_FRACTION: f64 = 0.01;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_plane(r: &mut ChaCha8Rng, w: usize, h: usize) -> ImagePlane {
    ImagePlane::from_fn(w, h, |_, _| StandardNormal.sample(r))
}

/// 8-bit storage of a plane, the noise floor of any real "clean" image.
fn quantized(p: &ImagePlane) -> ImagePlane {
    p.map(|v| quantize_u8(v) as f64 / 255.0)
}

const TEXTURES: [Texture; 3] = [Texture::Fractal, Texture::Shapes, Texture::ArField];

fn gauss() -> PsfKind {
    PsfKind::Gaussian { sigma: 1.5 }
}

fn motion() -> PsfKind {
    PsfKind::MotionH { len: 5 }
}

struct BenchRun {
    name: String,
    fixture: SyntheticFixture,
    cs: PipelineResult,
    cs_time: Duration,
    bvdr: PipelineResult,
}

fn bvdr_config() -> PipelineConfig {
    PipelineConfig {
        schema: SchemaKind::Bvdr,
        dt: 0.1,
        ..PipelineConfig::default()
    }
}

/// Noise-free Gaussian and horizontal-motion fixtures on every texture,
/// each run through the full pipeline with CS and BVDR.
fn bench() -> &'static Vec<BenchRun> {
    static RUNS: OnceLock<Vec<BenchRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut runs = Vec::new();
        for (i, tex) in TEXTURES.iter().enumerate() {
            let clean = MultiChannelImage::gray(texture(*tex, BENCH_SIDE, 10 + i as u64).unwrap());
            for kind in [gauss(), motion()] {
                let fixture = make_fixture(&clean, kind, (7, 7), NoiseSpec::None, 20 + i as u64).unwrap();
                let t0 = Instant::now();
                let cs = blind_deblur(&fixture.blurred, &PipelineConfig::default()).unwrap();
                let cs_time = t0.elapsed();
                let bvdr = blind_deblur(&fixture.blurred, &bvdr_config()).unwrap();
                let kname = match kind {
                    PsfKind::Gaussian { .. } => "gauss",
                    _ => "motion_h5",
                };
                runs.push(BenchRun {
                    name: format!("{tex:?}/{kname}"),
                    fixture,
                    cs,
                    cs_time,
                    bvdr,
                });
            }
        }
        runs
    })
}

fn c1_adjoint() -> Verdict {
    let t0 = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..ADJOINT_TRIPLES {
        let (w, h) = (r.random_range(9..48), r.random_range(9..48));
        let (kr, kc) = (2 * r.random_range(0..5) + 1, 2 * r.random_range(0..5) + 1);
        let a = normal_plane(&mut r, w, h);
        let b = normal_plane(&mut r, w, h);
        let k = Kernel::from_fn(kr, kc, |_, _| StandardNormal.sample(&mut r)).unwrap();
        let lhs = conv_same(&a, &k, BoundaryMode::ZeroPad).unwrap().dot(&b);
        let rhs = a.dot(&correlate_adjoint(&b, &k, BoundaryMode::ZeroPad).unwrap());
        worst = worst.max((lhs - rhs).abs() / (a.norm() * b.norm()));
    }
    let t = t0.elapsed();
    verdict(
        worst <= ADJOINT_REL_TOL && t < ADJOINT_TIME_LIMIT,
        format!("worst relative mismatch {worst:.2e} over {ADJOINT_TRIPLES} triples in {:.2}s", t.as_secs_f64()),
    )
}

/// Sum of four plane waves with wavelengths of at least 25 px.
fn smooth_plane(r: &mut ChaCha8Rng, n: usize) -> ImagePlane {
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let k = r.random_range(0.05..0.25);
            let ang = r.random_range(0.0..std::f64::consts::TAU);
            (k * ang.cos(), k * ang.sin(), r.random_range(0.0..std::f64::consts::TAU), r.random_range(0.02..0.05))
        })
        .collect();
    ImagePlane::from_fn(n, n, |i, j| {
        0.5 + waves
            .iter()
            .map(|(kx, ky, ph, a)| a * (kx * j as f64 + ky * i as f64 + ph).cos())
            .sum::<f64>()
    })
}

fn fwd(f: &ImagePlane, horizontal: bool) -> ImagePlane {
    let (h, w) = (f.height(), f.width());
    ImagePlane::from_fn(w, h, |i, j| match horizontal {
        true if j + 1 < w => f.get(i, j + 1) - f.get(i, j),
        false if i + 1 < h => f.get(i + 1, j) - f.get(i, j),
        _ => 0.0,
    })
}

fn bwd(f: &ImagePlane, horizontal: bool) -> ImagePlane {
    let (h, w) = (f.height(), f.width());
    ImagePlane::from_fn(w, h, |i, j| match horizontal {
        true if j > 0 => f.get(i, j) - f.get(i, j - 1),
        false if i > 0 => f.get(i, j) - f.get(i - 1, j),
        _ => 0.0,
    })
}

/// Surface area averaged over the four one-sided difference pairings.
fn surface_area(f: &ImagePlane) -> f64 {
    let xs = [fwd(f, true), bwd(f, true)];
    let ys = [fwd(f, false), bwd(f, false)];
    let mut s = 0.0;
    for dx in &xs {
        for dy in &ys {
            s += dx.zip_map(dy, |a, b| (1.0 + a * a + b * b).sqrt()).sum();
        }
    }
    s / 4.0
}

fn central(f: &ImagePlane, horizontal: bool) -> ImagePlane {
    let (h, w) = (f.height(), f.width());
    ImagePlane::from_fn(w, h, |i, j| {
        if horizontal {
            match j {
                0 => f.get(i, 1) - f.get(i, 0),
                j if j == w - 1 => f.get(i, j) - f.get(i, j - 1),
                _ => 0.5 * (f.get(i, j + 1) - f.get(i, j - 1)),
            }
        } else {
            match i {
                0 => f.get(1, j) - f.get(0, j),
                i if i == h - 1 => f.get(i, j) - f.get(i - 1, j),
                _ => 0.5 * (f.get(i + 1, j) - f.get(i - 1, j)),
            }
        }
    })
}

fn total_variation(f: &ImagePlane, beta: f64) -> f64 {
    central(f, true).zip_map(&central(f, false), |a, b| (a * a + b * b + beta).sqrt()).sum()
}

/// Worst relative gap between `<op(f), d>` and the negated central
/// difference of the functional along `d`. Directions vanish within two
/// pixels of the border.
fn el_gap(r: &mut ChaCha8Rng, op: &dyn Fn(&ImagePlane) -> ImagePlane, func: &dyn Fn(&ImagePlane) -> f64) -> f64 {
    const N: usize = 16;
    const MARGIN: usize = 2;
    const STEP: f64 = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..EL_PLANES {
        let f = smooth_plane(r, N);
        let an_field = op(&f);
        for _ in 0..EL_DIRECTIONS {
            let d = ImagePlane::from_fn(N, N, |i, j| {
                let inside = (MARGIN..N - MARGIN).contains(&i) && (MARGIN..N - MARGIN).contains(&j);
                if inside { StandardNormal.sample(r) } else { 0.0 }
            });
            let an = an_field.dot(&d);
            let fd = -(func(&f.add(&d.scale(STEP))) - func(&f.sub(&d.scale(STEP)))) / (2.0 * STEP);
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()));
        }
    }
    worst
}

fn c2_el_consistency() -> Verdict {
    const BETA: f64 = 1e-3;
    let mut r = rng(2);
    let saf = el_gap(&mut r, &saf_operator, &surface_area);
    let tv = el_gap(&mut r, &|f| tv_operator(f, BETA), &|f| total_variation(f, BETA));
    verdict(
        saf <= EL_REL_TOL && tv <= EL_REL_TOL,
        format!("worst relative gap: surface area {saf:.2e}, total variation {tv:.2e}"),
    )
}

fn c3_ar_recovery() -> Verdict {
    // (order, rows, cols) of the recursion fixtures
    let setups = [(3usize, 512usize, 32usize), (5, 256, 16)];
    let mut parts = Vec::new();
    let mut pass = true;
    for (p, rows, cols) in setups {
        let mut clean = 0.0f64;
        let mut noisy_all = Vec::new();
        for seed in 0..AR_SEEDS {
            let model = random_stencil(p, p, 1.1, 0.05, seed).unwrap();
            let x = synthesize_ar(&model, rows, cols, seed).unwrap();
            let err = |img: &ImagePlane| {
                let fit = estimate_ar(img, p, p, None).unwrap();
                fit.model
                    .coeffs()
                    .iter()
                    .zip(model.coeffs())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            };
            clean = clean.max(err(&x));
            noisy_all.push(err(&apply_noise(&x, NoiseSpec::Gaussian(AR_NOISE_SD), 100 + seed).unwrap()));
        }
        noisy_all.sort_by(f64::total_cmp);
        let noisy = noisy_all[noisy_all.len() - 1];
        let median = noisy_all[noisy_all.len() / 2];
        pass &= clean <= AR_CLEAN_TOL && noisy <= AR_NOISY_TOL;
        parts.push(format!("P={p}: clean {clean:.1e}, noisy {noisy:.2e} (median seed {median:.2e})"));
    }
    verdict(pass, format!("worst coefficient error over {AR_SEEDS} seeds; {}", parts.join("; ")))
}

fn c4_psf_round_trip() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut slowest = Duration::ZERO;
    for run in bench() {
        let ncc = kernel_ncc(&run.cs.psf, &run.fixture.true_psf).unwrap();
        let min = if run.name.ends_with("gauss") { GAUSS_NCC_MIN } else { MOTION_NCC_MIN };
        pass &= ncc >= min;
        slowest = slowest.max(run.cs_time);
        parts.push(format!("{} {ncc:.3}", run.name));
    }
    pass &= slowest < PIPELINE_TIME_LIMIT;
    verdict(
        pass,
        format!(
            "NCC {} (need gauss >= {GAUSS_NCC_MIN}, motion >= {MOTION_NCC_MIN}); slowest {BENCH_SIDE}px pipeline {:.1}s",
            parts.join(", "),
            slowest.as_secs_f64()
        ),
    )
}

fn c5_delta_identity() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, tex) in TEXTURES.iter().enumerate() {
        let clean = texture(*tex, 256, 30 + i as u64).unwrap();
        let x = quantized(&clean);
        let out = blind_deblur(&MultiChannelImage::gray(x.clone()), &PipelineConfig::default()).unwrap();
        let off = out.psf.off_center_mass();
        let loss = psnr(&clean, &x).unwrap() - psnr(&clean, &out.s_hat.channels()[0]).unwrap();
        pass &= off <= DELTA_OFF_CENTER_MAX && loss <= DELTA_PSNR_LOSS_MAX;
        parts.push(format!("{tex:?}: off-center {off:.3}, loss {loss:.2} dB"));
    }
    verdict(pass, parts.join("; "))
}

fn c6_ipsf() -> Verdict {
    let run = &bench()[0];
    let x = &run.fixture.blurred.channels()[0];
    let problem = build_problem(x, &run.cs.psf).unwrap();
    let cfg = IpsfConfig::default();
    let rep = optimize_ipsf(&problem, &cfg).unwrap();
    let mut prev = rep.initial_change;
    let mut early_ok = true;
    for r in rep.residual_trace.iter().take(cfg.q) {
        early_ok &= r * cfg.theta <= prev;
        prev = *r;
    }
    let zero = optimize_ipsf(
        &problem,
        &IpsfConfig {
            lambda_grid: vec![0.0],
            ..cfg.clone()
        },
    )
    .unwrap();
    let scale = rep.g_ls.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let repro = zero
        .g
        .data()
        .iter()
        .zip(rep.g_ls.data())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale;
    let pass = !rep.fallback_ls
        && early_ok
        && rep.converged
        && rep.iterations <= IPSF_MAX_ITERS
        && repro <= IPSF_LS_REPRO_TOL;
    verdict(
        pass,
        format!(
            "lambda {:.2e}, {} iterations, converged {}, early test {}, lambda=0 vs LS {repro:.1e}",
            rep.lambda_used,
            rep.iterations,
            rep.converged,
            if early_ok { "held" } else { "broken" }
        ),
    )
}

fn c7_lr() -> Verdict {
    // nonnegativity and flux on a blob away from the border
    let h = cnsdeblur::make_psf(gauss(), 7, 7).unwrap();
    let mut r = rng(7);
    let n = 96;
    let s_true = ImagePlane::from_fn(n, n, |i, j| {
        if (24..72).contains(&i) && (24..72).contains(&j) { r.random_range(0.1..0.9) } else { 0.0 }
    });
    let x = conv_same(&s_true, &h, BoundaryMode::ZeroPad).unwrap();
    let mut s = x.clone();
    let (mut flux_err, mut min_val) = (0.0f64, f64::INFINITY);
    for _ in 0..50 {
        let next = lr_step(&s, &x, &h, 1e-6).unwrap();
        flux_err = flux_err.max((next.sum() - s.sum()).abs() / s.sum());
        min_val = min_val.min(next.min());
        s = next;
    }

    // drift of a blind PSF under repeated refinement; the fractal fixture
    // decides, the other textures are reported alongside
    let mut drifts = Vec::new();
    for (i, tex) in TEXTURES.iter().enumerate() {
        let clean = MultiChannelImage::gray(texture(*tex, LR_DRIFT_SIDE, 70 + i as u64).unwrap());
        let fixture = make_fixture(&clean, gauss(), (7, 7), NoiseSpec::None, 80 + i as u64).unwrap();
        let x = &fixture.blurred.channels()[0];
        let (h0, _) = psf_or_delta(x, &Orders { p: 17, q: 17, l: 7, m: 7 }).unwrap();
        let mut h = h0.clone();
        let mut s = x.clone();
        for _ in 0..LR_UPDATES {
            s = lr_step(&s, x, &h, 1e-6).unwrap();
            min_val = min_val.min(s.min());
            h = lr_psf_update(&s, x, &h, 1e-6).unwrap();
        }
        drifts.push((*tex, h.l1_distance(&h0) / h0.data().iter().map(|v| v.abs()).sum::<f64>()));
    }
    let drift = drifts[0].1;
    let listing: Vec<String> = drifts.iter().map(|(t, d)| format!("{t:?} {:.2}%", 100.0 * d)).collect();
    verdict(
        min_val >= 0.0 && flux_err <= LR_FLUX_REL_TOL && drift <= LR_DRIFT_MAX,
        format!(
            "min value {min_val:.2e}, worst flux change {flux_err:.1e}, PSF drift over {LR_UPDATES} updates {} (fractal decides)",
            listing.join(", ")
        ),
    )
}

fn c8_bvdr() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let observe = PipelineConfig {
        max_iters: Some(BVDR_OBSERVE_CAP),
        ..bvdr_config()
    };
    for run in bench() {
        // the capped run must stop cleanly; the long run exposes the peak
        let stop = run.bvdr.traces[0].stop_reason;
        let stop_ok = matches!(stop, StopReason::IterCap | StopReason::EpsReached);
        let long = blind_deblur(&run.fixture.blurred, &observe).unwrap();
        let t = &long.traces[0];
        let lam = t.lambdas();
        let peak = lam
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > lam[best] { i } else { best });
        let rises = peak >= 1 && lam[..=peak].windows(2).all(|w| w[1] >= w[0]);
        let falls = peak + 1 < lam.len() && lam[peak..].windows(2).all(|w| w[1] <= w[0]);
        let transition = t.transition_end;
        let thetas: Vec<f64> = t
            .records
            .iter()
            .filter(|rec| transition.is_some_and(|e| rec.k >= e))
            .filter_map(|rec| rec.theta)
            .collect();
        let theta_max = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ok = rises
            && falls
            && transition.is_some_and(|e| e <= BVDR_TRANSITION_MAX)
            && !thetas.is_empty()
            && theta_max <= BVDR_THETA_MAX
            && stop_ok;
        pass &= ok;
        parts.push(format!(
            "{}: peak@{peak} rise {rises} fall {falls} transition {transition:?} max theta {theta_max:.4} capped stop {stop:?}",
            run.name
        ));
    }
    verdict(pass, format!("observed over {BVDR_OBSERVE_CAP} steps; {}", parts.join("; ")))
}

fn c9_cs() -> Verdict {
    let clean = texture(Texture::Fractal, 256, 40).unwrap();
    let fixture = make_fixture(&MultiChannelImage::gray(clean), gauss(), (7, 7), NoiseSpec::Gaussian(0.01), 41).unwrap();
    let x = MultiChannelImage::gray(quantized(&fixture.blurred.channels()[0]));
    let mut steps = Vec::new();
    let mut bound_ok = true;
    for dt in CS_DTS {
        let cfg = PipelineConfig {
            dt,
            max_iters: Some(CS_LONG_CAP),
            ..PipelineConfig::default()
        };
        let out = blind_deblur(&x, &cfg).unwrap();
        let t = &out.traces[0];
        let accepted = match t.stop_reason {
            StopReason::MonotonicityViolated | StopReason::DtBoundViolated | StopReason::NonFinite => {
                &t.records[..t.records.len() - 1]
            }
            _ => &t.records[..],
        };
        bound_ok &= t.stop_reason != StopReason::DtBoundViolated
            && accepted.iter().all(|r| r.dt_lower.is_none_or(|lb| dt >= lb));
        steps.push(t.violation_step());
    }
    let ordered = steps.iter().all(Option::is_some) && steps.windows(2).all(|w| w[0] > w[1]);
    let last_ok = steps[2].is_some_and(|k| k <= CS_VIOLATION_MAX_STEPS);
    verdict(
        ordered && last_ok && bound_ok,
        format!(
            "steps to violation at dt {:?}: {:?}; lower step bound respected: {bound_ok}",
            CS_DTS, steps
        ),
    )
}

fn c10_quality() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in bench() {
        let base = psnr_multi(&run.fixture.clean, &run.fixture.blurred).unwrap();
        let cs = psnr_multi(&run.fixture.clean, &run.cs.s_hat).unwrap();
        let bv = psnr_multi(&run.fixture.clean, &run.bvdr.s_hat).unwrap();
        let ok = cs - base >= DEBLUR_GAIN_MIN_DB && bv - base >= DEBLUR_GAIN_MIN_DB && (cs - bv).abs() <= SCHEMA_AGREEMENT_DB;
        pass &= ok;
        parts.push(format!("{}: blurred {base:.2}, cs {cs:.2}, bvdr {bv:.2} dB", run.name));
    }
    verdict(pass, parts.join("; "))
}

fn c11_cascade() -> Verdict {
    let orders = Orders {
        p: 33,
        q: 33,
        l: 17,
        m: 17,
    };
    let clean = texture(Texture::Fractal, 256, 50).unwrap();
    let fixture = make_fixture(
        &MultiChannelImage::gray(clean.clone()),
        gauss(),
        (7, 7),
        NoiseSpec::Impulsive(IMPULSE_FRACTION),
        51,
    )
    .unwrap();
    let x = &fixture.blurred.channels()[0];
    let (out, _) = cascade(x, 2, &orders).unwrap();
    let (e_in, e_out) = (impulse_energy(x), impulse_energy(&out));
    let (lo, hi) = (out.min(), out.max());

    let q = quantized(&clean);
    let (clean_out, _) = cascade(&q, 3, &orders).unwrap();
    let loss = psnr(&clean, &q).unwrap() - psnr(&clean, &clean_out).unwrap();
    verdict(
        e_out < e_in && loss <= CASCADE_PSNR_LOSS_MAX,
        format!(
            "impulse energy {e_in:.4} -> {e_out:.4} (output range [{lo:.2}, {hi:.2}]); 3-stage loss on clean input {loss:.2} dB"
        ),
    )
}

fn c12_determinism() -> Verdict {
    let clean = MultiChannelImage::gray(texture(Texture::Shapes, 128, 60).unwrap());
    let f1 = make_fixture(&clean, gauss(), (7, 7), NoiseSpec::Gaussian(0.01), 61).unwrap();
    let f2 = make_fixture(&clean, gauss(), (7, 7), NoiseSpec::Gaussian(0.01), 61).unwrap();
    let a = blind_deblur(&f1.blurred, &PipelineConfig::default()).unwrap();
    let b = blind_deblur(&f2.blurred, &PipelineConfig::default()).unwrap();
    let bits = |img: &MultiChannelImage| -> Vec<u64> {
        img.channels().iter().flat_map(|c| c.data().iter().map(|v| v.to_bits())).collect()
    };
    let same = f1 == f2
        && bits(&a.s_hat) == bits(&b.s_hat)
        && a.psf == b.psf
        && a.ipsf == b.ipsf
        && a.traces == b.traces;
    verdict(same, format!("fixture and pipeline outputs bit-identical: {same}"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 12] = [
        (1, "adjoint identity", c1_adjoint),
        (2, "Euler-Lagrange consistency", c2_el_consistency),
        (3, "AR recovery", c3_ar_recovery),
        (4, "blind PSF round trip", c4_psf_round_trip),
        (5, "delta-blur identity", c5_delta_identity),
        (6, "inverse PSF optimization", c6_ipsf),
        (7, "LR properties", c7_lr),
        (8, "BVDR phenomenology", c8_bvdr),
        (9, "CS phenomenology", c9_cs),
        (10, "deblur quality", c10_quality),
        (11, "denoise cascade", c11_cascade),
        (12, "determinism", c12_determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let t0 = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id:>2} ({name}): {} [{:.1}s]", v.detail, t0.elapsed().as_secs_f64());
        if !v.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 12 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
