//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness. Pass criterion numbers as arguments to
//! run a subset. The process fails when any criterion that this host can
//! evaluate fails; a criterion that needs hardware the host lacks is still
//! reported as FAIL, with the reason, but does not fail the process.

use std::error::Error;
use std::io::{BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use mural3m_core::backend::protocol::{RequestFrame, ResponseFrame};
use mural3m_core::backend::{
    Backend, BackendError, BackendKind, DiffusionBackend, ExternalBackend, FallbackBackend, InpaintRequest,
};
use mural3m_core::frequency::{decompose, dft2, lowpass_plane, merge_samples, sobel_plane, DEFAULT_CUTOFF};
use mural3m_core::fusion::{average_perspectives, fuse_samples, masked_composite, ScaleWeights};
use mural3m_core::io::encode_png;
use mural3m_core::maskgen::{generate, MaskConfig, MaskKind, MaskSpec};
use mural3m_core::metrics::{mae, mse, psnr, ssim};
use mural3m_core::pipeline::{
    perspective_set, restore_giant, run_sweep_on, Engine, PipelineConfig, RestoreOutput, SweepSpec,
};
use mural3m_core::tiling::{assemble, cut, make_plan, PERSPECTIVES};
use mural3m_core::{DefectMask, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ECHO: &str = env!("CARGO_BIN_EXE_mural3m-echo");
const GIANT: usize = 1024;
const LADDER: [f64; 3] = [0.3733, 0.4605, 0.5772];

type Res = Result<Verdict, Box<dyn Error>>;

struct Verdict {
    pass: bool,
    /// Not evaluable on this host; reported but not fatal.
    gated: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Res {
    Ok(Verdict {
        pass,
        gated: false,
        detail: detail.into(),
    })
}

struct Fixture {
    kind: MaskKind,
    mask: DefectMask,
    damaged: RasterImage,
}

/// State shared between criteria so that the giant restores run once.
#[derive(Default)]
struct Shared {
    fixtures: Option<Vec<Fixture>>,
    jelly_serial: Option<(RestoreOutput, Duration)>,
}

impl Shared {
    fn fixtures(&mut self) -> Result<&[Fixture], Box<dyn Error>> {
        if self.fixtures.is_none() {
            let reference = mural(GIANT, GIANT);
            let mut out = Vec::new();
            for (i, kind) in [MaskKind::Block, MaskKind::Dust, MaskKind::Jelly, MaskKind::LinearDilated]
                .into_iter()
                .enumerate()
            {
                let g = generate(&MaskSpec::new(kind, 0.30, GIANT, GIANT, 11 + i as u64), &MaskConfig::default())?;
                let damaged = reference.apply_mask(&g.mask, 0.5)?;
                out.push(Fixture {
                    kind,
                    mask: g.mask,
                    damaged,
                });
            }
            self.fixtures = Some(out);
        }
        Ok(self.fixtures.as_deref().unwrap())
    }

    fn jelly(&mut self) -> Result<&Fixture, Box<dyn Error>> {
        Ok(self.fixtures()?.iter().find(|f| f.kind == MaskKind::Jelly).unwrap())
    }
}

fn mural(w: usize, h: usize) -> RasterImage {
    RasterImage::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        [
            0.5 + 0.3 * (6.0 * u).sin() * (4.0 * v).cos(),
            0.4 + 0.4 * u * v,
            0.6 - 0.2 * (5.0 * (u + v)).sin(),
        ]
    })
}

fn noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    RasterImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
}

fn diffusion_cfg(workers: usize) -> PipelineConfig {
    PipelineConfig {
        workers,
        ..PipelineConfig::default()
    }
}

// Independent metric oracles: direct sums and a windowed SSIM with
// explicitly centred moments.

fn naive_mse(a: &RasterImage, b: &RasterImage) -> f64 {
    let d = a.data().iter().zip(b.data());
    d.map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data().len() as f64
}

fn naive_mae(a: &RasterImage, b: &RasterImage) -> f64 {
    let d = a.data().iter().zip(b.data());
    d.map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64
}

fn naive_ssim(a: &RasterImage, b: &RasterImage) -> f64 {
    let (w, h) = a.dims();
    let n = 11usize;
    let mut win = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            win[j * n + i] = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let norm: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= norm);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (mut total, mut count) = (0.0, 0usize);
    for c in 0..3 {
        for y0 in 0..=h - n {
            for x0 in 0..=w - n {
                let at = |img: &RasterImage, i: usize| img.get(x0 + i % n, y0 + i / n, c);
                let (mut ma, mut mb) = (0.0, 0.0);
                for (i, wt) in win.iter().enumerate() {
                    ma += wt * at(a, i);
                    mb += wt * at(b, i);
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for (i, wt) in win.iter().enumerate() {
                    let (da, db) = (at(a, i) - ma, at(b, i) - mb);
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

fn c1_metrics(_: &mut Shared) -> Res {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = noise(32, 32, &mut rng);
        let b = noise(32, 32, &mut rng);
        let m = naive_mse(&a, &b);
        let devs = [
            (mae(&a, &b)? - naive_mae(&a, &b)).abs(),
            (mse(&a, &b)? - m).abs(),
            (psnr(&a, &b, 1.0)? - 10.0 * (1.0 / m).log10()).abs(),
            (ssim(&a, &b)? - naive_ssim(&a, &b)).abs(),
        ];
        worst = devs.into_iter().fold(worst, f64::max);
    }
    let a = noise(32, 32, &mut rng);
    let sentinels = ssim(&a, &a)? == 1.0 && psnr(&a, &a, 1.0)? == f64::INFINITY && mse(&a, &a)? == 0.0;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-6 && sentinels && secs < 10.0,
        format!("max deviation {worst:.2e}, sentinels {sentinels}, {secs:.1}s"),
    )
}

fn c2_tiling(_: &mut Shared) -> Res {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = Vec::new();
    for i in 0..20 {
        let (w, h) = (rng.random_range(256..=1300), rng.random_range(256..=1300));
        let tile = if i % 2 == 0 { 256 } else { 4 * rng.random_range(16..=128) };
        let img = noise(w, h, &mut rng);
        let plan = make_plan(w, h, tile)?;
        for k in 0..PERSPECTIVES {
            if assemble(&cut(&img, &plan, k)?)? != img {
                bad.push(format!("{w}x{h}/{tile}/p{k}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bad.is_empty() && secs < 30.0,
        format!("20 images x 16 perspectives, {} mismatches {bad:?}, {secs:.1}s", bad.len()),
    )
}

fn c3_null_identity(sh: &mut Shared) -> Res {
    let fixtures = sh.fixtures()?;
    let cfg = PipelineConfig::default().with_backend(BackendKind::Null);
    let start = Instant::now();
    let mut bad = Vec::new();
    for f in fixtures {
        let out = restore_giant(&f.damaged, &f.mask, &cfg)?;
        if out.image != f.damaged || encode_png(&out.image)? != encode_png(&f.damaged)? {
            bad.push(f.kind.name());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bad.is_empty() && secs < 60.0,
        format!("{GIANT}^2 block/dust/jelly/linear at 30%, differing {bad:?}, {secs:.1}s"),
    )
}

fn c4_unmasked_preserved(sh: &mut Shared) -> Res {
    let cfg = diffusion_cfg(1);
    let mut changed = Vec::new();
    let mut jelly = None;
    for f in sh.fixtures()? {
        let start = Instant::now();
        let out = restore_giant(&f.damaged, &f.mask, &cfg)?;
        let secs = start.elapsed();
        let n = (0..GIANT * GIANT)
            .filter(|&i| f.mask.data()[i] == 0)
            .filter(|&i| {
                let (x, y) = (i % GIANT, i / GIANT);
                out.image.pixel(x, y).map(f64::to_bits) != f.damaged.pixel(x, y).map(f64::to_bits)
            })
            .count();
        changed.push((f.kind.name(), n));
        if f.kind == MaskKind::Jelly {
            jelly = Some((out, secs));
        }
    }
    sh.jelly_serial = jelly;
    verdict(
        changed.iter().all(|(_, n)| *n == 0),
        format!("changed unmasked pixels {changed:?}"),
    )
}

fn c5_coverage(_: &mut Shared) -> Res {
    let targets = [0.10, 0.25, 0.3733, 0.4605, 0.5772];
    let mut worst = Vec::new();
    let mut failures = Vec::new();
    for kind in MaskKind::ALL {
        let mut dev: f64 = 0.0;
        for &t in &targets {
            for seed in 0..10 {
                match generate(&MaskSpec::new(kind, t, 256, 256, seed), &MaskConfig::default()) {
                    Ok(g) => {
                        let set = g.mask.data().iter().filter(|&&v| v != 0).count();
                        let d = (set as f64 / (256.0 * 256.0) - t).abs();
                        dev = dev.max(d);
                        if d > kind.tolerance() {
                            failures.push(format!("{kind}@{t}/s{seed}: {d:.4}"));
                        }
                    }
                    Err(e) => failures.push(format!("{kind}@{t}/s{seed}: {e}")),
                }
            }
        }
        worst.push(format!("{kind} {dev:.4}"));
    }
    verdict(
        failures.is_empty(),
        format!("worst |achieved - target|: {}; failures {failures:?}", worst.join(", ")),
    )
}

fn naive_dft_energy(p: &[f64], w: usize, h: usize) -> f64 {
    use std::f64::consts::TAU;
    let mut total = 0.0;
    for v in 0..h {
        for u in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let a = -TAU * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                    re += p[y * w + x] * a.cos();
                    im += p[y * w + x] * a.sin();
                }
            }
            total += re * re + im * im;
        }
    }
    total
}

fn c6_frequency(_: &mut Shared) -> Res {
    let (w, h) = (64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut idem, mut parseval): (f64, f64) = (0.0, 0.0);
    let mut sobel_const = true;
    for i in 0..20 {
        let p: Vec<f64> = (0..w * h).map(|_| rng.random()).collect();
        for cutoff in [DEFAULT_CUTOFF, 0.05, 0.3, 0.75] {
            let once = lowpass_plane(&p, w, h, cutoff)?;
            let twice = lowpass_plane(&once, w, h, cutoff)?;
            idem = once.iter().zip(&twice).map(|(a, b)| (a - b).abs()).fold(idem, f64::max);
        }
        let energy: f64 = p.iter().map(|v| v * v).sum();
        let spectral = dft2(&p, w, h).iter().map(|c| c.norm_sqr()).sum::<f64>() / (w * h) as f64;
        parseval = parseval.max((energy - spectral).abs() / energy);
        if i == 0 {
            let naive = naive_dft_energy(&p, w, h) / (w * h) as f64;
            parseval = parseval.max((energy - naive).abs() / energy);
        }
        let c: f64 = rng.random();
        sobel_const &= sobel_plane(&vec![c; w * h], w, h).iter().all(|&g| g == 0.0);
    }
    verdict(
        idem <= 1e-9 && parseval <= 1e-6 && sobel_const,
        format!("idempotence {idem:.2e}, Parseval rel {parseval:.2e}, Sobel of constants zero {sobel_const}"),
    )
}

/// Largest channel jump across the seams of perspective 0, taken over
/// pixel pairs with at least one masked member.
fn seam_jump(img: &RasterImage, mask: &DefectMask, cols: &[usize], rows: &[usize]) -> f64 {
    let (w, h) = img.dims();
    let diff = |a: [f64; 3], b: [f64; 3]| (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for &x in cols {
        for y in 0..h {
            if mask.is_set(x - 1, y) || mask.is_set(x, y) {
                worst = worst.max(diff(img.pixel(x - 1, y), img.pixel(x, y)));
            }
        }
    }
    for &y in rows {
        for x in 0..w {
            if mask.is_set(x, y - 1) || mask.is_set(x, y) {
                worst = worst.max(diff(img.pixel(x, y - 1), img.pixel(x, y)));
            }
        }
    }
    worst
}

fn c7_seams(_: &mut Shared) -> Res {
    let n = 512;
    let reference = mural(n, n);
    let mask = DefectMask::from_fn(n, n, |x, y| (106..406).contains(&x) && (236..276).contains(&y));
    let damaged = reference.apply_mask(&mask, 0.5)?;
    let cfg = diffusion_cfg(1);
    let engine = Engine::from_config(&cfg)?;
    let set = perspective_set(&engine, &damaged, &mask, &cfg, 1.0)?;
    let plan = make_plan(n, n, cfg.tile)?;
    let (cols, rows) = (plan.seam_columns(0), plan.seam_rows(0));
    let single = seam_jump(set.get(0), &mask, &cols, &rows);
    let averaged = seam_jump(&average_perspectives(&set)?, &mask, &cols, &rows);
    verdict(
        averaged < single,
        format!("max seam jump: perspective 0 {single:.4}, 16-perspective mean {averaged:.4}"),
    )
}

fn c8_robustness(_: &mut Shared) -> Res {
    let reference = mural(256, 256);
    let spec = SweepSpec {
        coverages: LADDER.to_vec(),
        mask_kind: MaskKind::Jelly,
        seeds: (0..5).collect(),
        reference: Default::default(),
        output: None,
    };
    let report = run_sweep_on(&reference, &spec, &diffusion_cfg(1))?;
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    let means = &report.means;
    let complete = means.len() == LADDER.len() && means.iter().all(|m| m.runs == 5);
    let monotone = means.windows(2).all(|p| p[1].psnr <= p[0].psnr && p[1].mae >= p[0].mae);
    let table: Vec<String> = means
        .iter()
        .map(|m| format!("{}: {:.2} dB / {:.5}", m.coverage, m.psnr, m.mae))
        .collect();
    verdict(
        complete && monotone,
        format!("mean PSNR / MAE {}; failed runs {failed}", table.join(", ")),
    )
}

fn c9_scale_fusion(_: &mut Shared) -> Res {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let stack: Vec<Vec<f64>> = (0..3).map(|_| (0..3 * 40 * 30).map(|_| rng.random()).collect()).collect();
    let unit = ScaleWeights::new([1.0, 0.0, 0.0])?;
    let fused = fuse_samples([&stack[0], &stack[1], &stack[2]], &unit);
    let fuse_dev = fused.iter().zip(&stack[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let n = 128;
    let reference = mural(n, n);
    let g = generate(&MaskSpec::new(MaskKind::Jelly, 0.3, n, n, 3), &MaskConfig::default())?;
    let damaged = reference.apply_mask(&g.mask, 0.5)?;
    let cfg = PipelineConfig {
        tile: 64,
        scale_weights: unit,
        ..PipelineConfig::default()
    };
    let out = restore_giant(&damaged, &g.mask, &cfg)?;

    // Original-scale-only restoration assembled from the public pieces.
    let engine = Engine::from_config(&cfg)?;
    let mean = average_perspectives(&perspective_set(&engine, &damaged, &g.mask, &cfg, 1.0)?)?;
    let bands = decompose(&damaged, cfg.cutoff)?;
    let baseline = merge_samples(bands.low.data(), bands.high.data(), bands.full.data(), &cfg.merge_weights);
    let corrected: Vec<f64> = damaged
        .data()
        .iter()
        .zip(mean.data())
        .zip(&baseline)
        .map(|((d, m), b)| (d + m - b).clamp(0.0, 1.0))
        .collect();
    let expected = masked_composite(&damaged, &RasterImage::new(n, n, corrected)?, &g.mask)?;
    let oracle_dev = out.image.data().iter().zip(expected.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut presets_ok = true;
    for (name, w) in [("default", ScaleWeights::DEFAULT), ("alternate", ScaleWeights::ALTERNATE)] {
        let parsed: ScaleWeights = name.parse()?;
        let cfg = PipelineConfig::from_pairs(&[("scale_weights", w.to_string()), ("backend", "null".into())])?;
        let report = serde_json::to_value(&restore_giant(&damaged, &g.mask, &cfg)?.report)?;
        presets_ok &= parsed == w
            && cfg.scale_weights == w
            && report["scale_weights_preset"] == name
            && report["scale_weights"] == serde_json::json!(w.0);
    }
    verdict(
        fuse_dev <= 1e-12 && oracle_dev <= 1e-12 && presets_ok,
        format!("(1,0,0) fusion {fuse_dev:.1e}, pipeline vs scale-1 oracle {oracle_dev:.1e}, presets recorded {presets_ok}"),
    )
}

fn echo_backend(args: &[&str], timeout: f64) -> Result<ExternalBackend, BackendError> {
    let mut command = vec![ECHO.to_string()];
    command.extend(args.iter().map(|s| s.to_string()));
    ExternalBackend::new(command, timeout, 1)
}

fn random_tile(rng: &mut ChaCha8Rng) -> (RasterImage, DefectMask) {
    let (w, h) = (rng.random_range(4..=64), rng.random_range(4..=64));
    let tile = noise(w, h, rng);
    let p: f64 = rng.random_range(0.05..0.6);
    let mask = DefectMask::from_fn(w, h, |_, _| rng.random_bool(p));
    (tile, mask)
}

fn c10_external(_: &mut Shared) -> Res {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut notes = Vec::new();

    // Raw frames against one long-lived client.
    let mut child = Command::new(ECHO).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut raw_ok = 0;
    for _ in 0..100 {
        let (tile, mask) = random_tile(&mut rng);
        let req = RequestFrame {
            width: tile.width() as u16,
            height: tile.height() as u16,
            band: rng.random_range(0..3),
            scale_milli: 1000,
            perspective: rng.random_range(0..16),
            tile: tile.data().iter().map(|&v| v as f32).collect(),
            mask: mask.data().to_vec(),
        };
        stdin.write_all(&req.encode())?;
        stdin.flush()?;
        let resp = ResponseFrame::read_from(&mut stdout)?;
        let same = resp.tile.iter().map(|v| v.to_bits()).eq(req.tile.iter().map(|v| v.to_bits()));
        raw_ok += (same && (resp.width, resp.height) == (req.width, req.height)) as usize;
    }
    drop(stdin);
    let exited = child.wait()?.success();
    notes.push(format!("raw echo {raw_ok}/100, clean exit {exited}"));

    // The same through the backend adapter.
    let echo = echo_backend(&[], 10.0)?;
    let mut adapter_ok = 0;
    for _ in 0..100 {
        let (tile, mask) = random_tile(&mut rng);
        adapter_ok += (echo.inpaint(&InpaintRequest::new(&tile, &mask))?.tile == tile) as usize;
    }
    notes.push(format!("adapter echo {adapter_ok}/100"));

    let (tile, mask) = random_tile(&mut rng);
    let req = InpaintRequest::new(&tile, &mask);
    let truncate = echo_backend(&["--fault", "truncate"], 10.0)?.inpaint(&req);
    let magic = echo_backend(&["--fault", "magic"], 10.0)?.inpaint(&req);
    let start = Instant::now();
    let hang = echo_backend(&["--fault", "hang"], 1.0)?.inpaint(&req);
    let hang_secs = start.elapsed().as_secs_f64();
    let faults_ok = matches!(truncate, Err(BackendError::Protocol { .. }))
        && matches!(magic, Err(BackendError::Protocol { .. }))
        && matches!(hang, Err(BackendError::Timeout { .. }))
        && hang_secs < 5.0;
    notes.push(format!(
        "truncate -> {}, magic -> {}, hang -> {} after {hang_secs:.1}s",
        kind_of(&truncate),
        kind_of(&magic),
        kind_of(&hang)
    ));

    let diffusion: Arc<dyn Backend> = Arc::new(DiffusionBackend::new(2000, 1e-5));
    let want = diffusion.inpaint(&req)?.tile;
    let mut fallback_ok = true;
    for (fault, timeout) in [("truncate", 10.0), ("magic", 10.0), ("hang", 1.0)] {
        let fb = FallbackBackend::new(Arc::new(echo_backend(&["--fault", fault], timeout)?), diffusion.clone(), 2);
        let got = fb.inpaint(&req)?.tile;
        let events = fb.events();
        fallback_ok &= got == want && events.len() == 1 && events[0].attempts == 3;
    }
    notes.push(format!("fallback to diffusion exact and logged {fallback_ok}"));

    verdict(
        raw_ok == 100 && exited && adapter_ok == 100 && faults_ok && fallback_ok,
        notes.join("; "),
    )
}

fn kind_of<T>(r: &Result<T, BackendError>) -> &'static str {
    match r {
        Ok(_) => "ok",
        Err(BackendError::Protocol { .. }) => "protocol error",
        Err(BackendError::Timeout { .. }) => "timeout",
        Err(BackendError::Exit { .. }) => "exit status",
        Err(_) => "other error",
    }
}

fn c11_parallel(sh: &mut Shared) -> Res {
    if sh.jelly_serial.is_none() {
        let f = sh.jelly()?;
        let start = Instant::now();
        let out = restore_giant(&f.damaged, &f.mask, &diffusion_cfg(1))?;
        sh.jelly_serial = Some((out, start.elapsed()));
    }
    let f = sh.jelly()?;
    let start = Instant::now();
    let parallel = restore_giant(&f.damaged, &f.mask, &diffusion_cfg(4))?;
    let t4 = start.elapsed().as_secs_f64();
    let (serial, t1) = sh.jelly_serial.as_ref().unwrap();
    let t1 = t1.as_secs_f64();
    let identical = parallel.image == serial.image
        && serde_json::to_value(&parallel.report)? == serde_json::to_value(&serial.report)?;
    let fastest = t1.min(t4);
    let ratio = t4 / t1;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let detail = format!(
        "identical {identical}, 1 worker {t1:.1}s, 4 workers {t4:.1}s, ratio {ratio:.2}, host cores {cores}"
    );
    if !(identical && fastest < 60.0) {
        return verdict(false, detail);
    }
    if cores < 4 {
        return Ok(Verdict {
            pass: false,
            gated: true,
            detail: format!("{detail}; the speed-up bound needs >= 4 cores"),
        });
    }
    verdict(ratio <= 0.6, detail)
}

fn main() {
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u8, &str, fn(&mut Shared) -> Res); 11] = [
        (1, "metrics match independent oracles", c1_metrics),
        (2, "tiling round trip", c2_tiling),
        (3, "null backend is the identity", c3_null_identity),
        (4, "unmasked pixels are preserved", c4_unmasked_preserved),
        (5, "mask coverage targeting", c5_coverage),
        (6, "band decomposition properties", c6_frequency),
        (7, "perspective averaging reduces seams", c7_seams),
        (8, "quality degrades with coverage", c8_robustness),
        (9, "scale fusion", c9_scale_fusion),
        (10, "external backend conformance", c10_external),
        (11, "parallel determinism and runtime", c11_parallel),
    ];
    let mut shared = Shared::default();
    let (mut passed, mut failed, mut gated) = (0, 0, 0);
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = match catch_unwind(AssertUnwindSafe(|| run(&mut shared))) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => Verdict {
                pass: false,
                gated: false,
                detail: format!("error: {e}"),
            },
            Err(_) => Verdict {
                pass: false,
                gated: false,
                detail: "panicked".into(),
            },
        };
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {id:>2} {name}: {} [{:.1}s]", v.detail, start.elapsed().as_secs_f64());
        match (v.pass, v.gated) {
            (true, _) => passed += 1,
            (false, true) => gated += 1,
            (false, false) => failed += 1,
        }
    }
    println!("acceptance: {passed} passed, {failed} failed, {gated} not evaluable on this host");
    if failed > 0 {
        std::process::exit(1);
    }
}
