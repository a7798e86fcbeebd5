//! Calibration: ratio sweeps over a corpus, regression of the signed
//! change rate against the dynamics axes, and the seven-segment table that
//! maps a combined score to a reference ratio.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::configurator::{reference_count, Configurator, MemoryModel, RatioPolicy};
use crate::dynamics::{combine, normalize, NormalizationBounds, RawDynamics};
use crate::error::{Error, Result};
use crate::flow::PyramidConfig;
use crate::frame::Video;
use crate::inpaint::Inpainter;
use crate::metrics::{fit_line, signed_max_change_rate, LineFit, RatioSweepResult};
use crate::par;
use crate::pipeline::{frame_quality, mean_quality, FlowCache, Pipeline};
use crate::ratio::RefRatio;

pub const PROFILE_VERSION: u32 = 1;

/// Seven contiguous segments of the score domain, each with a reference ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTable {
    pub breakpoints: [f64; 8],
    pub ratios: [RefRatio; 7],
}

impl SegmentTable {
    pub fn new(breakpoints: [f64; 8], ratios: [RefRatio; 7]) -> Result<Self> {
        let table = SegmentTable { breakpoints, ratios };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.breakpoints;
        if b.iter().any(|v| !v.is_finite()) || b.windows(2).any(|w| w[1] < w[0]) || !(b[0] < b[7]) {
            return Err(Error::SchemaMismatch(format!("breakpoints {b:?} are not ascending")));
        }
        let r = &self.ratios;
        if r.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::SchemaMismatch("segment ratios must be non-increasing".into()));
        }
        let high = r.iter().filter(|&&x| x >= RefRatio::HALF).count();
        if high != 4 {
            return Err(Error::SchemaMismatch(format!(
                "{high} segments carry a ratio >= 1/2 (expected 4)"
            )));
        }
        Ok(())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], self.breakpoints[7])
    }

    /// Ratio of the segment holding `x` after clamping to the domain. A point
    /// on an interior breakpoint belongs to the segment on its left.
    pub fn lookup(&self, x: f64) -> RefRatio {
        let (lo, hi) = self.domain();
        let x = if x.is_nan() { lo } else { x.clamp(lo, hi) };
        let seg = (0..7).find(|&i| x <= self.breakpoints[i + 1]).unwrap_or(6);
        self.ratios[seg]
    }
}

/// Split `[lo, hi]` at the zero crossing `x0` of `fit`: four equal segments
/// with ratios 7/8..4/8 on `[lo, x0]`, three with 3/8..1/8 on `[x0, hi]`.
///
/// `x0` is clamped into the domain: a fit that is non-negative over the whole
/// domain puts it at `hi`, a negative one at `lo`. A flat fit has no crossing
/// and splits at the midpoint.
pub fn build_segments(fit: &LineFit, lo: f64, hi: f64) -> Result<SegmentTable> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidConfig(format!("segment domain [{lo}, {hi}] is empty")));
    }
    let x0 = if fit.slope == 0.0 || !fit.slope.is_finite() {
        0.5 * (lo + hi)
    } else {
        let (f_lo, f_hi) = (fit.eval(lo), fit.eval(hi));
        if f_lo >= 0.0 && f_hi >= 0.0 {
            hi
        } else if f_lo < 0.0 && f_hi < 0.0 {
            lo
        } else {
            fit.zero_crossing().expect("nonzero slope").clamp(lo, hi)
        }
    };
    let mut b = [0.0; 8];
    for (k, v) in b.iter_mut().take(4).enumerate() {
        *v = lo + (x0 - lo) * k as f64 / 4.0;
    }
    b[4] = x0;
    for k in 1..3 {
        b[4 + k] = x0 + (hi - x0) * k as f64 / 3.0;
    }
    b[7] = hi;
    let ratios = [7, 6, 5, 4, 3, 2, 1].map(|k| RefRatio::from_eighths(k).expect("valid eighths"));
    Ok(SegmentTable {
        breakpoints: b,
        ratios,
    })
}

/// Persisted result of calibrating on a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProfile {
    pub version: u32,
    pub corpus_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub bounds: NormalizationBounds,
    pub m_flow: f64,
    pub m_mask: f64,
    pub combined_fit: LineFit,
    pub segments: SegmentTable,
}

impl CalibrationProfile {
    /// Combined score with this profile's slopes. Two zero slopes weigh
    /// both axes equally.
    pub fn combine(&self, x_flow: f64, x_mask: f64) -> Result<f64> {
        combine_slopes(x_flow, x_mask, self.m_flow, self.m_mask)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PROFILE_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "profile version {} (expected {PROFILE_VERSION})",
                self.version
            )));
        }
        self.bounds
            .validate()
            .map_err(|e| Error::SchemaMismatch(format!("bounds: {e}")))?;
        if ![self.m_flow, self.m_mask, self.combined_fit.slope, self.combined_fit.intercept]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::SchemaMismatch("non-finite slope".into()));
        }
        self.segments.validate()
    }
}

fn combine_slopes(x_flow: f64, x_mask: f64, m_flow: f64, m_mask: f64) -> Result<f64> {
    if m_flow == 0.0 && m_mask == 0.0 {
        return combine(x_flow, x_mask, 1.0, 1.0);
    }
    combine(x_flow, x_mask, m_flow, m_mask)
}

/// Unix time, or `SOURCE_DATE_EPOCH` when set.
pub fn timestamp_now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn profile_to_json(profile: &CalibrationProfile) -> String {
    serde_json::to_string_pretty(profile).expect("profile serializes")
}

pub fn profile_from_json(text: &str) -> Result<CalibrationProfile> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::SchemaMismatch(format!("not JSON: {e}")))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == PROFILE_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::SchemaMismatch(format!(
                "profile version {v} (expected {PROFILE_VERSION})"
            )))
        }
        None => return Err(Error::SchemaMismatch("missing or non-integer `version`".into())),
    }
    let profile: CalibrationProfile =
        serde_json::from_value(value).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    profile.validate()?;
    Ok(profile)
}

pub fn save_profile(profile: &CalibrationProfile, path: &Path) -> Result<()> {
    std::fs::write(path, profile_to_json(profile)).map_err(|e| Error::io(path, e))
}

pub fn load_profile(path: &Path) -> Result<CalibrationProfile> {
    if !path.exists() {
        return Err(Error::FileMissing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    profile_from_json(&text)
}

/// One point of the change-rate scatter: a video's mean raw dynamics and
/// the signed change rate of its ratio sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub video: String,
    pub flow: f64,
    pub mask_change: f64,
    pub change_rate: f64,
}

impl CalibrationSample {
    pub fn new(flow: f64, mask_change: f64, change_rate: f64) -> Self {
        CalibrationSample {
            video: String::new(),
            flow,
            mask_change,
            change_rate,
        }
    }
}

/// CSV of samples with header `video,x_flow,x_mask,change_rate`.
pub fn samples_to_csv(samples: &[CalibrationSample]) -> String {
    let mut s = String::from("video,x_flow,x_mask,change_rate\n");
    for x in samples {
        s.push_str(&format!("{},{},{},{}\n", x.video, x.flow, x.mask_change, x.change_rate));
    }
    s
}

/// Fit a profile to per-video samples.
///
/// Bounds are the per-axis sample ranges; each slope is the regression of
/// change rate on the normalized axis; the combined fit regresses change
/// rate on the combined score and is split into segments over `[0, 1]`.
/// Samples are processed in sorted order, so the result does not depend on
/// their order.
pub fn fit_profile(samples: &[CalibrationSample], corpus_id: &str) -> Result<CalibrationProfile> {
    if samples.len() < 3 {
        return Err(Error::DegenerateSamples(format!(
            "{} samples (need at least 3)",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|s| !(s.flow.is_finite() && s.mask_change.is_finite() && s.change_rate.is_finite()))
    {
        return Err(Error::DegenerateSamples("non-finite sample".into()));
    }
    let mut pts: Vec<(f64, f64, f64)> = samples.iter().map(|s| (s.flow, s.mask_change, s.change_rate)).collect();
    pts.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });

    let range = |f: fn(&(f64, f64, f64)) -> f64| {
        pts.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (flow_min, flow_max) = range(|p| p.0);
    let (mask_min, mask_max) = range(|p| p.1);
    let bounds = NormalizationBounds::new(flow_min, flow_max, mask_min, mask_max)
        .map_err(|_| Error::DegenerateSamples("an axis has no spread across samples".into()))?;

    let xf: Vec<f64> = pts.iter().map(|p| normalize(p.0, flow_min, flow_max)).collect::<Result<_>>()?;
    let xm: Vec<f64> = pts.iter().map(|p| normalize(p.1, mask_min, mask_max)).collect::<Result<_>>()?;
    let rate: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let zip = |x: &[f64]| x.iter().copied().zip(rate.iter().copied()).collect::<Vec<_>>();
    let m_flow = fit_line(&zip(&xf))?.slope;
    let m_mask = fit_line(&zip(&xm))?.slope;

    let xc: Vec<f64> = xf
        .iter()
        .zip(&xm)
        .map(|(&f, &m)| combine_slopes(f, m, m_flow, m_mask))
        .collect::<Result<_>>()?;
    let combined_fit =
        fit_line(&zip(&xc)).map_err(|_| Error::DegenerateSamples("combined scores are all equal".into()))?;
    Ok(CalibrationProfile {
        version: PROFILE_VERSION,
        corpus_id: corpus_id.to_string(),
        created_at: timestamp_now(),
        bounds,
        m_flow,
        m_mask,
        combined_fit,
        segments: build_segments(&combined_fit, 0.0, 1.0)?,
    })
}
/// Ratio sweep of one video plus its calibration sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub video: String,
    pub sweep: RatioSweepResult,
    pub change_rate: f64,
    /// Targets with a nonempty mask that entered the PSNR means.
    pub targets: usize,
    pub sample: CalibrationSample,
}

/// Sweep parameters shared by every video of a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub total: usize,
    pub stride: usize,
    pub pyramid: PyramidConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            total: 8,
            stride: crate::configurator::DEFAULT_STRIDE,
            pyramid: PyramidConfig::default(),
        }
    }
}

impl SweepConfig {
    /// First target whose references at the largest ratio all exist.
    pub fn first_target(&self, video: &Video) -> Result<usize> {
        let n_ref = reference_count(RefRatio::MAX.value(), self.total)?;
        let first = video.start_index() + (self.stride * n_ref).max(self.total);
        if first > video.end_index() {
            return Err(Error::VideoTooShort {
                video: video.id().to_string(),
                reason: format!(
                    "{} frames; {} reference frames at stride {} need at least {}",
                    video.len(),
                    n_ref,
                    self.stride,
                    first - video.start_index() + 1
                ),
            });
        }
        Ok(first)
    }
}

fn as_inpainter_failure(video: &Video, e: Error) -> Error {
    if e.is_adapter_failure() {
        Error::InpainterFailure(format!("{}: {e}", video.id()))
    } else {
        e
    }
}

/// For each ratio `k/8`, inpaint every eligible target of `truth` with that
/// ratio forced and record the mean PSNR over the masked regions.
pub fn sweep_video(truth: &Video, inpainter: &dyn Inpainter, config: &SweepConfig) -> Result<SweepOutcome> {
    let first = config.first_target(truth)?;
    let targets = first..=truth.end_index();
    let observed = truth.corrupted();
    let mut cache = FlowCache::new(config.pyramid);

    // dynamics of the swept targets, from the same flows the inpainter uses
    cache.ensure(&observed, targets.clone())?;
    let raws: Vec<RawDynamics> = targets
        .clone()
        .filter(|&t| !observed.mask(t).expect("in range").is_empty())
        .map(|t| {
            RawDynamics::from_completed(
                t,
                cache.get(t).expect("ensured"),
                observed.mask(t).expect("in range"),
                observed.mask(t - 1).expect("t > start"),
            )
        })
        .collect::<Result<_>>()?;
    if raws.is_empty() {
        return Err(Error::VideoTooShort {
            video: truth.id().to_string(),
            reason: "every swept target has an empty mask".into(),
        });
    }

    let mut entries = Vec::with_capacity(7);
    for r in RefRatio::ALL {
        let cfg = Configurator::with_total(RatioPolicy::Forced(r.value()), config.total, config.stride)?;
        let pipe = Pipeline {
            configurator: &cfg,
            inpainter,
        };
        let results = pipe
            .run(&observed, targets.clone(), &mut cache)
            .map_err(|e| as_inpainter_failure(truth, e))?;
        let quality = results
            .iter()
            .filter(|res| !observed.mask(res.frame.index()).expect("in range").is_empty())
            .map(|res| frame_quality(truth, &res.frame))
            .collect::<Result<Vec<_>>>()?;
        entries.push((r, mean_quality(&quality).expect("nonempty").0));
    }
    let sweep = RatioSweepResult::from_pairs(entries);
    let change_rate = signed_max_change_rate(&sweep)?;
    let n = raws.len() as f64;
    Ok(SweepOutcome {
        video: truth.id().to_string(),
        change_rate,
        targets: raws.len(),
        sample: CalibrationSample {
            video: truth.id().to_string(),
            flow: raws.iter().map(|r| r.flow).sum::<f64>() / n,
            mask_change: raws.iter().map(|r| r.mask_change).sum::<f64>() / n,
            change_rate,
        },
        sweep,
    })
}

/// Sweep every video (in parallel) and fit a profile to the results.
pub fn calibrate(
    videos: &[Video],
    inpainter: &dyn Inpainter,
    config: &SweepConfig,
    corpus_id: &str,
) -> Result<(CalibrationProfile, Vec<SweepOutcome>)> {
    // fail fast before any sweep runs
    if videos.len() < 3 {
        return Err(Error::DegenerateSamples(format!("{} videos (need at least 3)", videos.len())));
    }
    for v in videos {
        config.first_target(v)?;
    }
    let outcomes = par::try_map_range(videos.len(), |i| sweep_video(&videos[i], inpainter, config))?;
    let samples: Vec<CalibrationSample> = outcomes.iter().map(|o| o.sample.clone()).collect();
    Ok((fit_profile(&samples, corpus_id)?, outcomes))
}

/// One row of the memory/quality tradeoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub total: usize,
    pub memory_mb: u64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn tradeoff_to_csv(rows: &[TradeoffRow]) -> String {
    let mut s = String::from("total,memory_mb,psnr,ssim\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.total, r.memory_mb, r.psnr, r.ssim));
    }
    s
}

/// Mean masked quality of the configured pipeline for each input count in
/// `totals`. Every total is evaluated on the same targets: those with a full
/// history at the largest total.
pub fn memory_quality_tradeoff(
    videos: &[Video],
    policy: &RatioPolicy,
    memory: &MemoryModel,
    totals: std::ops::RangeInclusive<usize>,
    stride: usize,
    inpainter: &dyn Inpainter,
    pyramid: &PyramidConfig,
) -> Result<Vec<TradeoffRow>> {
    let max_total = *totals.end();
    let observed: Vec<Video> = videos.iter().map(Video::corrupted).collect();
    let mut caches: Vec<FlowCache> = videos.iter().map(|_| FlowCache::new(*pyramid)).collect();
    let mut rows = Vec::new();
    for total in totals {
        let cfg = Configurator::with_total(policy.clone(), total, stride)?;
        let pipe = Pipeline {
            configurator: &cfg,
            inpainter,
        };
        let mut quality = Vec::new();
        for ((truth, obs), cache) in videos.iter().zip(&observed).zip(caches.iter_mut()) {
            let first = truth.start_index() + max_total;
            if first > truth.end_index() {
                return Err(Error::VideoTooShort {
                    video: truth.id().to_string(),
                    reason: format!("needs more than {max_total} frames"),
                });
            }
            for res in pipe.run(obs, first..=truth.end_index(), cache)? {
                if !obs.mask(res.frame.index()).expect("in range").is_empty() {
                    quality.push(frame_quality(truth, &res.frame)?);
                }
            }
        }
        let (psnr, ssim) = mean_quality(&quality).ok_or_else(|| {
            Error::DegenerateSamples("no target with a nonempty mask in the tradeoff corpus".into())
        })?;
        rows.push(TradeoffRow {
            total,
            memory_mb: memory.usage_mb(total),
            psnr,
            ssim,
        });
    }
    Ok(rows)
}
