//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#![allow(clippy::needless_range_loop)]

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use inputmix::calibration::{build_segments, calibrate, fit_profile, memory_quality_tradeoff, sweep_video, tradeoff_to_csv, CalibrationSample, SweepConfig};
use inputmix::configurator::{compose, reference_count, select_ratio, Configurator, MemoryModel, RatioPolicy};
use inputmix::dynamics::DynamicsScore;
use inputmix::flow::{complete_flow, estimate_flow, PyramidConfig};
use inputmix::frame::{FlowField, Frame, Mask, Video};
use inputmix::inpaint::BaselineInpainter;
use inputmix::metrics::{psnr, signed_max_change_rate, ssim, LineFit, RatioSweepResult};
use inputmix::pipeline::{frame_quality, mean_quality, FlowCache, Pipeline};
use inputmix::ratio::RefRatio;
use inputmix::synth::{generate, translated_texture, SceneKind, SceneSpec, Texture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------- independent oracles ----------

fn brute_psnr(a: &Frame, b: &Frame) -> f64 {
    let mut se = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = *x as f64 - *y as f64;
        se += d * d;
    }
    let mse = se / a.data().len() as f64;
    if mse == 0.0 {
        99.0
    } else {
        (10.0 * (255.0f64 * 255.0 / mse).log10()).min(99.0)
    }
}

fn luma_at(f: &Frame, x: usize, y: usize) -> f64 {
    let p = f.pixel(y * f.width() + x);
    if p.len() == 1 {
        p[0] as f64
    } else {
        0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
    }
}

fn brute_ssim(a: &Frame, b: &Frame) -> f64 {
    const N: usize = 11;
    let mut g = [[0.0f64; N]; N];
    let mut gsum = 0.0;
    for (j, row) in g.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            gsum += *v;
        }
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let (mut acc, mut n) = (0.0, 0);
    for oy in 0..=a.height() - N {
        for ox in 0..=a.width() - N {
            let (mut mx, mut my) = (0.0, 0.0);
            for j in 0..N {
                for i in 0..N {
                    let k = g[j][i] / gsum;
                    mx += k * luma_at(a, ox + i, oy + j);
                    my += k * luma_at(b, ox + i, oy + j);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..N {
                for i in 0..N {
                    let k = g[j][i] / gsum;
                    let da = luma_at(a, ox + i, oy + j) - mx;
                    let db = luma_at(b, ox + i, oy + j) - my;
                    vx += k * da * da;
                    vy += k * db * db;
                    cov += k * da * db;
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            n += 1;
        }
    }
    acc / n as f64
}

fn brute_change_rate(p: &[(f64, f64)]) -> f64 {
    let (mut hi, mut lo) = (0, 0);
    for i in 1..p.len() {
        if p[i].1 > p[hi].1 {
            hi = i;
        }
        if p[i].1 < p[lo].1 {
            lo = i;
        }
    }
    let sign = if hi > lo {
        1.0
    } else if hi < lo {
        -1.0
    } else {
        0.0
    };
    sign * (p[hi].1 - p[lo].1) / p[hi].1
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn direct_harmonic(plane: &[f64], w: usize, h: usize, unknown: &[bool]) -> Vec<f64> {
    let ids: Vec<usize> = (0..w * h).filter(|&p| unknown[p]).collect();
    let mut col = vec![usize::MAX; w * h];
    for (i, &p) in ids.iter().enumerate() {
        col[p] = i;
    }
    let n = ids.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (i, &p) in ids.iter().enumerate() {
        let (x, y) = (p % w, p / w);
        let nbrs = [
            (x > 0).then(|| p - 1),
            (x + 1 < w).then(|| p + 1),
            (y > 0).then(|| p - w),
            (y + 1 < h).then(|| p + w),
        ];
        for q in nbrs.into_iter().flatten() {
            a[i][i] += 1.0;
            if unknown[q] {
                a[i][col[q]] -= 1.0;
            } else {
                b[i] += plane[q];
            }
        }
    }
    let sol = dense_solve(a, b);
    let mut out = plane.to_vec();
    for (i, &p) in ids.iter().enumerate() {
        out[p] = sol[i];
    }
    out
}

// ---------- criteria ----------

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut dp, mut ds) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let c = if i % 2 == 0 { 3 } else { 1 };
        let a: Vec<u8> = (0..32 * 32 * c).map(|_| rng.random()).collect();
        let amp = rng.random_range(0..=80);
        let b: Vec<u8> = a
            .iter()
            .map(|&v| (v as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8)
            .collect();
        let fa = Frame::new(32, 32, c, a, 0).unwrap();
        let fb = Frame::new(32, 32, c, b, 0).unwrap();
        dp = dp.max((psnr(&fa, &fb, None).unwrap() - brute_psnr(&fa, &fb)).abs());
        ds = ds.max((ssim(&fa, &fb).unwrap() - brute_ssim(&fa, &fb)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        dp <= 1e-9 && ds <= 1e-7 && secs < 10.0,
        format!("max |dPSNR| {dp:.2e} dB, max |dSSIM| {ds:.2e}, {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        // few distinct values so ties are common
        let vals: Vec<f64> = (0..7).map(|_| 20.0 + rng.random_range(0..5) as f64 * 0.5).collect();
        let pairs: Vec<(f64, f64)> = vals.iter().enumerate().map(|(k, &v)| ((k + 1) as f64 / 8.0, v)).collect();
        let sweep = RatioSweepResult::from_pairs(RefRatio::ALL.into_iter().zip(vals.iter().copied()));
        if signed_max_change_rate(&sweep).unwrap() != brute_change_rate(&pairs) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/1000 mismatches"))
}

fn criterion_3() -> Outcome {
    let (w, h) = (10, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut masks: Vec<Vec<bool>> = Vec::new();
    // every interior rectangle of at most 16 pixels
    for rh in 1..=8 {
        for rw in 1..=8 {
            if rw * rh > 16 {
                continue;
            }
            for y0 in 1..=(9 - rh) {
                for x0 in 1..=(9 - rw) {
                    masks.push((0..w * h).map(|p| (x0..x0 + rw).contains(&(p % w)) && (y0..y0 + rh).contains(&(p / w))).collect());
                }
            }
        }
    }
    // scattered interior masks of up to 16 pixels
    for _ in 0..500 {
        let k = rng.random_range(1..=16);
        let mut m = vec![false; w * h];
        for _ in 0..k {
            m[rng.random_range(1..9) * w + rng.random_range(1..9)] = true;
        }
        masks.push(m);
    }
    let mut worst = 0.0f64;
    for m in &masks {
        let u: Vec<f64> = (0..w * h).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..w * h).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mask = Mask::new(w, h, m.iter().map(|&b| b as u8).collect(), 0).unwrap();
        let done = complete_flow(&FlowField::new(w, h, u.clone(), v.clone()).unwrap(), &mask).unwrap();
        let (du, dv) = (direct_harmonic(&u, w, h, m), direct_harmonic(&v, w, h, m));
        for p in 0..w * h {
            worst = worst.max((done.u()[p] - du[p]).abs()).max((done.v()[p] - dv[p]).abs());
        }
    }
    outcome(worst <= 1e-5, format!("{} masks, max deviation {worst:.2e}", masks.len()))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let offsets = [-3.0, -1.0, 0.0, 1.0, 3.0];
    let (mut ok, mut n) = (0, 0);
    for seed in [41u64, 42] {
        let tex = Texture::new(seed, 8.0);
        for &dy in &offsets {
            for &dx in &offsets {
                let a = translated_texture(&tex, 64, 64, 0.0, 0.0, 0);
                let b = translated_texture(&tex, 64, 64, dx, dy, 1);
                let flow = estimate_flow(&a, &b, &PyramidConfig::default()).unwrap();
                let (mut su, mut sv, mut k) = (0.0, 0.0, 0.0);
                for y in 10..54 {
                    for x in 10..54 {
                        su += flow.u()[y * 64 + x];
                        sv += flow.v()[y * 64 + x];
                        k += 1.0;
                    }
                }
                n += 1;
                if (su / k - dx).abs() <= 0.25 && (sv / k - dy).abs() <= 0.25 {
                    ok += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = ok as f64 / n as f64;
    outcome(frac >= 0.9 && secs < 30.0, format!("{ok}/{n} cases within 0.25 px, {secs:.2}s"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1e-6).unwrap();
    let mut samples = Vec::new();
    for i in 0..=20 {
        let x = i as f64 / 20.0;
        // x_mask balanced against x_flow
        for m in [0.0, 1.0] {
            samples.push(CalibrationSample::new(x, m, -0.9 * x + 0.05 + noise.sample(&mut rng)));
        }
    }
    let profile = fit_profile(&samples, "regression").unwrap();
    let x0 = profile.segments.breakpoints[4];
    let want_x0 = 0.05 / 0.9;
    let fit_ok = (profile.m_flow + 0.9).abs() <= 1e-2 && (x0 - want_x0).abs() <= 1e-2;

    let table = build_segments(
        &LineFit {
            slope: -0.5,
            intercept: 0.1,
            rss: 0.0,
        },
        0.0,
        1.0,
    )
    .unwrap();
    let expected = [0.0, 0.05, 0.10, 0.15, 0.20, 0.4667, 0.7333, 1.0];
    let rounded: Vec<f64> = table.breakpoints.iter().map(|b| (b * 1e4).round() / 1e4).collect();
    let ratios: Vec<u8> = table.ratios.iter().map(|r| r.eighths()).collect();
    let table_ok = rounded == expected && ratios == [7, 6, 5, 4, 3, 2, 1];
    outcome(
        fit_ok && table_ok,
        format!(
            "m_flow {:.5}, x0 {:.5} (want {:.5}), breakpoints {:?}",
            profile.m_flow, x0, want_x0, rounded
        ),
    )
}

fn corpus(kind: SceneKind, seeds: std::ops::Range<u64>) -> Vec<Video> {
    seeds.map(|s| generate(&SceneSpec::new(kind, s))).collect()
}

fn mean_sweep_gap(videos: &[Video], hi: RefRatio, lo: RefRatio) -> f64 {
    let inp = BaselineInpainter::default();
    let cfg = SweepConfig::default();
    let outcomes: Vec<_> = videos.iter().map(|v| sweep_video(v, &inp, &cfg).unwrap()).collect();
    let mean = |r: RefRatio| outcomes.iter().map(|o| o.sweep.entries[&r]).sum::<f64>() / outcomes.len() as f64;
    mean(hi) - mean(lo)
}

fn policy_psnr(videos: &[Video], policy: RatioPolicy) -> f64 {
    let cfg = Configurator::with_total(policy, 8, 10).unwrap();
    let inp = BaselineInpainter::default();
    let pipe = Pipeline {
        configurator: &cfg,
        inpainter: &inp,
    };
    let mut rows = Vec::new();
    for truth in videos {
        let observed = truth.corrupted();
        let mut cache = FlowCache::new(PyramidConfig::default());
        let targets = pipe.default_targets(&observed).unwrap();
        for res in pipe.run(&observed, targets, &mut cache).unwrap() {
            if !observed.mask(res.frame.index()).unwrap().is_empty() {
                rows.push(frame_quality(truth, &res.frame).unwrap());
            }
        }
    }
    mean_quality(&rows).unwrap().0
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let fast_gap = mean_sweep_gap(&corpus(SceneKind::Fast, 200..203), RefRatio::MIN, RefRatio::MAX);
    let reveal_gap = mean_sweep_gap(&corpus(SceneKind::Reveal, 200..203), RefRatio::MAX, RefRatio::MIN);

    let train: Vec<Video> = SceneKind::ALL.iter().flat_map(|&k| corpus(k, 100..103)).collect();
    let (profile, _) = calibrate(&train, &BaselineInpainter::default(), &SweepConfig::default(), "train").unwrap();
    let test: Vec<Video> = SceneKind::ALL.iter().flat_map(|&k| corpus(k, 500..503)).collect();
    let configured = policy_psnr(&test, RatioPolicy::Profile(Box::new(profile)));
    let balanced = policy_psnr(&test, RatioPolicy::Baseline);
    let secs = start.elapsed().as_secs_f64();
    let pass = fast_gap >= 1.0 && reveal_gap >= 1.0 && configured - balanced >= 0.0 && secs < 300.0;
    outcome(
        pass,
        format!(
            "(a) fast 1/8 - 7/8 = {fast_gap:+.2} dB; (b) reveal 7/8 - 1/8 = {reveal_gap:+.2} dB; \
             (c) configured {configured:.2} vs balanced {balanced:.2} dB ({:+.2}); {secs:.1}s",
            configured - balanced
        ),
    )
}

fn criterion_7() -> Outcome {
    let points = [
        (MemoryModel::new(69, 662, 5365), 8),
        (MemoryModel::new(62, 781, 6310), 8),
    ];
    let points_ok = points
        .iter()
        .all(|(m, want)| m.max_frames().unwrap() == *want && m.usage_mb(*want) == m.budget_mb as u64);

    let videos: Vec<Video> = [SceneKind::Static, SceneKind::Fast]
        .iter()
        .map(|&k| {
            generate(&SceneSpec {
                frames: 40,
                ..SceneSpec::new(k, 300)
            })
        })
        .collect();
    let memory = MemoryModel::new(69, 662, 0);
    let rows = memory_quality_tradeoff(
        &videos,
        &RatioPolicy::Baseline,
        &memory,
        5..=11,
        10,
        &BaselineInpainter::default(),
        &PyramidConfig::default(),
    )
    .unwrap();
    let csv = tradeoff_to_csv(&rows);
    let totals: Vec<usize> = rows.iter().map(|r| r.total).collect();
    let mem_increasing = rows.windows(2).all(|w| w[1].memory_mb > w[0].memory_mb);
    let tradeoff_ok = totals == (5..=11).collect::<Vec<_>>()
        && mem_increasing
        && csv.starts_with("total,memory_mb,psnr,ssim\n")
        && csv.lines().count() == 8;
    let psnrs: Vec<String> = rows.iter().map(|r| format!("{}:{:.2}", r.total, r.psnr)).collect();
    outcome(points_ok && tradeoff_ok, format!("memory points ok: {points_ok}; psnr by total {}", psnrs.join(" ")))
}

fn run_cli(out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_inputmix"))
        .args(["--seed", "8", "--out"])
        .arg(out)
        .args(["inpaint", "--synthetic", "medium", "--frames", "30", "--force-ratio", "0.25"])
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn dir_bytes(root: &Path, sub: &str) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(root.join(sub))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
        .collect()
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !(run_cli(&a) && run_cli(&b)) {
        return outcome(false, "inpaint run failed");
    }
    let frames_same = dir_bytes(&a, "frames") == dir_bytes(&b, "frames");
    let comp = |d: &Path| std::fs::read(d.join("compositions.json")).unwrap();
    let comp_same = comp(&a) == comp(&b);
    let n = dir_bytes(&a, "frames").len();
    outcome(frames_same && comp_same, format!("{n} frames identical: {frames_same}; compositions identical: {comp_same}"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    for _ in 0..10_000 {
        let fit = LineFit {
            slope: rng.random_range(-3.0..3.0),
            intercept: rng.random_range(-1.5..1.5),
            rss: 0.0,
        };
        let table = build_segments(&fit, 0.0, 1.0).unwrap();
        let (x1, x2) = (rng.random_range(-0.2..1.2), rng.random_range(-0.2..1.2));
        let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        let score = |x: f64| DynamicsScore {
            target_index: 0,
            x_flow: x,
            x_mask: x,
            x_comb: x,
        };
        if select_ratio(&score(lo), &table) < select_ratio(&score(hi), &table) {
            violations += 1;
        }
    }

    let mut size_errors = 0;
    for _ in 0..2_000 {
        let per = rng.random_range(100..1000);
        let base = rng.random_range(0..200);
        let model = MemoryModel::new(base, per, base + per * rng.random_range(2..12));
        let total = model.max_frames().unwrap();
        let r = RefRatio::ALL[rng.random_range(0..7)].value();
        let history = rng.random_range(total..200);
        let target = history - 1;
        let comp = compose(target, history, r, total, 10).unwrap();
        let n_ref = reference_count(r, total).unwrap();
        if comp.len() != total || comp.reference.len() > n_ref {
            size_errors += 1;
        }
    }
    outcome(
        violations == 0 && size_errors == 0,
        format!("{violations} monotonicity violations in 10000 pairs; {size_errors} size errors in 2000 compositions"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric oracles", criterion_1),
        ("change-rate oracle", criterion_2),
        ("harmonic completion oracle", criterion_3),
        ("flow translation", criterion_4),
        ("regression recovery", criterion_5),
        ("directional thesis", criterion_6),
        ("memory model and tradeoff", criterion_7),
        ("cli determinism", criterion_8),
        ("configurator monotonicity", criterion_9),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {name}: {} ({:.1}s)", i + 1, o.detail, t.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
