//! The streaming loop: score each target, configure its inputs, inpaint it.
//!
//! Completed backward flows are computed once per frame and shared between
//! dynamics scoring and the inpainter.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::configurator::{Configurator, InputComposition};
use crate::dynamics::{completed_pair_flow, DynamicsScore, RawDynamics};
use crate::error::{Error, Result};
use crate::flow::PyramidConfig;
use crate::frame::{FlowField, Frame, Video};
use crate::inpaint::{InpaintRequest, Inpainter};
use crate::metrics::{psnr, ssim, ssim_masked};
use crate::par;

/// Completed backward flows of one video, keyed by the later frame index.
#[derive(Debug, Clone)]
pub struct FlowCache {
    config: PyramidConfig,
    flows: BTreeMap<usize, FlowField>,
    completions: BTreeMap<usize, usize>,
}

impl FlowCache {
    pub fn new(config: PyramidConfig) -> Self {
        FlowCache {
            config,
            flows: BTreeMap::new(),
            completions: BTreeMap::new(),
        }
    }

    /// Compute the flows `t -> t-1` for each requested `t` not cached yet.
    /// Indices without a predecessor in `video` are ignored.
    pub fn ensure(&mut self, video: &Video, indices: impl IntoIterator<Item = usize>) -> Result<()> {
        let todo: Vec<usize> = indices
            .into_iter()
            .filter(|&t| t > video.start_index() && t <= video.end_index() && !self.flows.contains_key(&t))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let config = self.config;
        let computed = par::try_map_range(todo.len(), |i| {
            let t = todo[i];
            let pair = |t: usize| (video.frame(t).expect("in range"), video.mask(t).expect("in range"));
            completed_pair_flow(pair(t), pair(t - 1), &config)
        })?;
        for (t, flow) in todo.into_iter().zip(computed) {
            *self.completions.entry(t).or_insert(0) += 1;
            self.flows.insert(t, flow);
        }
        Ok(())
    }

    pub fn get(&self, t: usize) -> Option<&FlowField> {
        self.flows.get(&t)
    }

    /// How many times the flow into frame `t` has been completed.
    pub fn completions(&self, t: usize) -> usize {
        self.completions.get(&t).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

/// Everything produced for one target.
#[derive(Debug, Clone)]
pub struct TargetResult {
    pub composition: InputComposition,
    pub raw: Option<RawDynamics>,
    pub score: Option<DynamicsScore>,
    pub frame: Frame,
    pub no_source: bool,
}

pub struct Pipeline<'a> {
    pub configurator: &'a Configurator,
    pub inpainter: &'a dyn Inpainter,
}

impl Pipeline<'_> {
    /// First target with a full history of `total` earlier frames.
    pub fn first_target(&self, video: &Video) -> usize {
        video.start_index() + self.configurator.total
    }

    /// Default target range: from [`Pipeline::first_target`] to the end.
    pub fn default_targets(&self, video: &Video) -> Result<RangeInclusive<usize>> {
        let first = self.first_target(video);
        if first > video.end_index() {
            return Err(Error::HistoryTooShort {
                available: video.len(),
                required: self.configurator.total + 1,
            });
        }
        Ok(first..=video.end_index())
    }

    /// Run over `targets` of `observed`, a video whose frames are already
    /// blanked under their masks.
    pub fn run(&self, observed: &Video, targets: RangeInclusive<usize>, cache: &mut FlowCache) -> Result<Vec<TargetResult>> {
        let targets: Vec<usize> = targets.collect();
        if let Some(&t) = targets.iter().find(|&&t| observed.frame(t).is_none()) {
            return Err(Error::MissingTarget(t));
        }
        let cfg = self.configurator;
        let has_dynamics = |t: usize| t > observed.start_index() && !observed.mask(t).expect("checked").is_empty();

        let mut raws: Vec<Option<RawDynamics>> = vec![None; targets.len()];
        if cfg.policy.needs_scores() {
            cache.ensure(observed, targets.iter().copied().filter(|&t| has_dynamics(t)))?;
            for (slot, &t) in raws.iter_mut().zip(&targets) {
                if has_dynamics(t) {
                    let flow = cache.get(t).expect("ensured");
                    *slot = Some(RawDynamics::from_completed(
                        t,
                        flow,
                        observed.mask(t).expect("checked"),
                        observed.mask(t - 1).expect("t > start"),
                    )?);
                }
            }
        }

        let last = observed.end_index();
        let mut planned = Vec::with_capacity(targets.len());
        for (&t, raw) in targets.iter().zip(&raws) {
            let (r, score) = cfg.ratio_for(raw.as_ref())?;
            let composition = cfg.compose(t, observed.start_index(), last, r)?;
            planned.push((composition, score));
        }

        // flows linking consecutive backward neighbors
        let needed: Vec<usize> = planned
            .iter()
            .flat_map(|(c, _)| {
                let t = c.target;
                c.neighboring
                    .iter()
                    .copied()
                    .filter(move |&i| i <= t && i > 0 && c.neighboring.contains(&(i - 1)))
            })
            .collect();
        cache.ensure(observed, needed)?;

        let cache = &*cache;
        let outputs = par::try_map_range(planned.len(), |k| {
            let comp = &planned[k].0;
            let idx = comp.indices();
            let request = InpaintRequest {
                composition: comp,
                frames: idx.iter().map(|&i| (i, observed.frame(i).expect("in range"))).collect(),
                masks: idx.iter().map(|&i| (i, observed.mask(i).expect("in range"))).collect(),
                flows: idx.iter().filter_map(|&i| cache.get(i).map(|f| (i, f))).collect(),
            };
            self.inpainter.inpaint(&request)
        })?;

        Ok(planned
            .into_iter()
            .zip(raws)
            .zip(outputs)
            .map(|(((composition, score), raw), out)| TargetResult {
                composition,
                raw,
                score,
                frame: out.frame,
                no_source: out.no_source,
            })
            .collect())
    }
}

/// Quality of one output frame against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameQuality {
    pub index: usize,
    /// PSNR over the mask (whole frame if the mask is empty), dB.
    pub psnr: f64,
    pub ssim: f64,
}

/// Masked PSNR and SSIM of `output` against the ground-truth frame of `truth`.
pub fn frame_quality(truth: &Video, output: &Frame) -> Result<FrameQuality> {
    let t = output.index();
    let (gt, mask) = truth.frame(t).zip(truth.mask(t)).ok_or(Error::MissingTarget(t))?;
    let (p, s) = if mask.is_empty() {
        (psnr(gt, output, None)?, ssim(gt, output)?)
    } else {
        (psnr(gt, output, Some(mask))?, ssim_masked(gt, output, mask)?)
    };
    Ok(FrameQuality {
        index: t,
        psnr: p,
        ssim: s,
    })
}

/// Mean PSNR and SSIM over a list of per-frame results.
pub fn mean_quality(rows: &[FrameQuality]) -> Option<(f64, f64)> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    Some((
        rows.iter().map(|r| r.psnr).sum::<f64>() / n,
        rows.iter().map(|r| r.ssim).sum::<f64>() / n,
    ))
}
