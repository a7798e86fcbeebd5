//! The input configurator: turn a dynamics score into a concrete set of
//! reference and neighboring frame indices under a memory budget.

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationProfile, SegmentTable};
use crate::dynamics::{score_raw, DynamicsScore, RawDynamics};
use crate::error::{Error, Result};
use crate::flow::PyramidConfig;
use crate::frame::SequenceWindow;
use crate::ratio::RefRatio;

/// Default spacing between reference frames.
pub const DEFAULT_STRIDE: usize = 10;

/// Linear memory model: `base_mb + frames * per_frame_mb <= budget_mb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub base_mb: u32,
    pub per_frame_mb: u32,
    pub budget_mb: u32,
}

impl MemoryModel {
    pub fn new(base_mb: u32, per_frame_mb: u32, budget_mb: u32) -> Self {
        MemoryModel {
            base_mb,
            per_frame_mb,
            budget_mb,
        }
    }

    /// Number of input frames that fit in the budget.
    pub fn max_frames(&self) -> Result<usize> {
        if self.per_frame_mb == 0 {
            return Err(Error::InvalidConfig("per_frame_mb must be positive".into()));
        }
        let too_small = Error::BudgetTooSmall {
            budget_mb: self.budget_mb,
            base_mb: self.base_mb,
            per_frame_mb: self.per_frame_mb,
        };
        let Some(free) = self.budget_mb.checked_sub(self.base_mb) else {
            return Err(too_small);
        };
        match (free / self.per_frame_mb) as usize {
            0 => Err(too_small),
            n => Ok(n),
        }
    }

    /// Memory needed for `frames` inputs.
    pub fn usage_mb(&self, frames: usize) -> u64 {
        self.base_mb as u64 + frames as u64 * self.per_frame_mb as u64
    }
}

/// Where neighboring frames sit relative to the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborMode {
    /// Trailing window ending at the target (streaming).
    #[default]
    Causal,
    /// Window centered on the target, using future frames where they exist.
    Symmetric,
}

/// Reference and neighboring frame indices for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputComposition {
    pub target: usize,
    pub total: usize,
    /// Fraction of inputs that are reference frames.
    pub r_ref: f64,
    /// Ascending.
    pub reference: Vec<usize>,
    /// Ascending; contains `target`.
    pub neighboring: Vec<usize>,
}

impl InputComposition {
    pub fn r_nei(&self) -> f64 {
        1.0 - self.r_ref
    }

    /// All input indices, ascending.
    pub fn indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.reference.iter().chain(&self.neighboring).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn len(&self) -> usize {
        self.reference.len() + self.neighboring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Number of reference slots for ratio `r_ref`: `round(r_ref * total)`
/// clamped so both sets are nonempty.
pub fn reference_count(r_ref: f64, total: usize) -> Result<usize> {
    if total < 2 {
        return Err(Error::InvalidConfig(format!("total {total} < 2")));
    }
    if !r_ref.is_finite() {
        return Err(Error::InvalidConfig(format!("ratio {r_ref} is not finite")));
    }
    Ok(((r_ref * total as f64).round().max(1.0) as usize).min(total - 1))
}

/// Segment lookup: the reference ratio for a dynamics score.
pub fn select_ratio(score: &DynamicsScore, table: &SegmentTable) -> RefRatio {
    table.lookup(score.x_comb)
}

/// Available frames and layout for [`compose_in`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComposeRequest {
    pub target: usize,
    /// Oldest available index.
    pub first: usize,
    /// Newest available index (the target itself for a live stream).
    pub last: usize,
    pub r_ref: f64,
    pub total: usize,
    pub stride: usize,
    pub mode: NeighborMode,
}

/// Causal composition for a stream whose history ends at `target` and holds
/// `history_len` frames.
pub fn compose(target: usize, history_len: usize, r_ref: f64, total: usize, stride: usize) -> Result<InputComposition> {
    if history_len == 0 || history_len > target + 1 {
        return Err(Error::HistoryTooShort {
            available: history_len.min(target + 1),
            required: total,
        });
    }
    compose_in(&ComposeRequest {
        target,
        first: target + 1 - history_len,
        last: target,
        r_ref,
        total,
        stride,
        mode: NeighborMode::Causal,
    })
}

/// Build a composition from the frames in `[first, last]`.
///
/// Neighbors form a contiguous window containing the target. References are
/// taken at `target - stride * j`, `j = 1, 2, ...`, skipping the neighbor
/// window; slots that cannot be filled become extra neighbors.
pub fn compose_in(req: &ComposeRequest) -> Result<InputComposition> {
    let &ComposeRequest {
        target,
        first,
        last,
        total,
        stride,
        mode,
        ..
    } = req;
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be positive".into()));
    }
    if target < first || target > last {
        return Err(Error::MissingTarget(target));
    }
    let n_ref = reference_count(req.r_ref, total)?;
    let history = target - first + 1;
    let available = match mode {
        NeighborMode::Causal => history,
        NeighborMode::Symmetric => last - first + 1,
    };
    if available < total {
        return Err(Error::HistoryTooShort {
            available,
            required: total,
        });
    }

    let n_nei = total - n_ref;
    let (mut lo, mut hi) = match mode {
        NeighborMode::Causal => (target + 1 - n_nei, target),
        NeighborMode::Symmetric => {
            let after = ((n_nei - 1) / 2).min(last - target);
            let before = (n_nei - 1 - after).min(target - first);
            let after = n_nei - 1 - before;
            (target - before, target + after)
        }
    };

    let mut reference = Vec::with_capacity(n_ref);
    let mut j = 1;
    while reference.len() < n_ref {
        let Some(r) = target.checked_sub(stride * j).filter(|&r| r >= first) else {
            break;
        };
        if !(lo..=hi).contains(&r) {
            reference.push(r);
        }
        j += 1;
    }

    // unfillable reference slots become neighbors: older frames first, then
    // (symmetric mode only) newer ones
    let mut neighboring: Vec<usize> = (lo..=hi).collect();
    let mut missing = n_ref - reference.len();
    while missing > 0 && lo > first {
        lo -= 1;
        if !reference.contains(&lo) {
            neighboring.push(lo);
            missing -= 1;
        }
    }
    while missing > 0 && mode == NeighborMode::Symmetric && hi < last {
        hi += 1;
        neighboring.push(hi);
        missing -= 1;
    }
    if missing > 0 {
        return Err(Error::HistoryTooShort {
            available,
            required: total,
        });
    }

    reference.sort_unstable();
    neighboring.sort_unstable();
    debug_assert_eq!(reference.len() + neighboring.len(), total);
    Ok(InputComposition {
        target,
        total,
        r_ref: reference.len() as f64 / total as f64,
        reference,
        neighboring,
    })
}

/// How the reference ratio is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum RatioPolicy {
    /// Equal split between references and neighbors.
    Baseline,
    /// A fixed ratio for every target.
    Forced(f64),
    /// Score each target and look its ratio up in the profile's segment table.
    Profile(Box<CalibrationProfile>),
}

impl RatioPolicy {
    pub fn needs_scores(&self) -> bool {
        matches!(self, RatioPolicy::Profile(_))
    }

    pub fn profile(&self) -> Option<&CalibrationProfile> {
        match self {
            RatioPolicy::Profile(p) => Some(p),
            _ => None,
        }
    }
}

/// Ratio policy plus composition layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Configurator {
    pub policy: RatioPolicy,
    pub total: usize,
    pub stride: usize,
    pub mode: NeighborMode,
}

impl Configurator {
    /// Configurator whose input count is the most the memory model affords.
    pub fn new(policy: RatioPolicy, model: &MemoryModel, stride: usize) -> Result<Self> {
        Self::with_total(policy, model.max_frames()?, stride)
    }

    pub fn with_total(policy: RatioPolicy, total: usize, stride: usize) -> Result<Self> {
        if total < 2 {
            return Err(Error::InvalidConfig(format!("total {total} < 2")));
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be positive".into()));
        }
        if let RatioPolicy::Forced(r) = policy {
            if !(r.is_finite() && (0.0..=1.0).contains(&r)) {
                return Err(Error::InvalidConfig(format!("forced ratio {r} outside [0, 1]")));
            }
        }
        Ok(Configurator {
            policy,
            total,
            stride,
            mode: NeighborMode::Causal,
        })
    }

    pub fn with_mode(mut self, mode: NeighborMode) -> Self {
        self.mode = mode;
        self
    }

    /// Reference ratio for a target and the score it came from, if any.
    /// A profile policy without dynamics (empty target mask) falls back to
    /// the balanced split.
    pub fn ratio_for(&self, raw: Option<&RawDynamics>) -> Result<(f64, Option<DynamicsScore>)> {
        match (&self.policy, raw) {
            (RatioPolicy::Baseline, _) => Ok((RefRatio::HALF.value(), None)),
            (RatioPolicy::Forced(r), _) => Ok((*r, None)),
            (RatioPolicy::Profile(p), Some(raw)) => {
                let score = score_raw(raw, p)?;
                Ok((select_ratio(&score, &p.segments).value(), Some(score)))
            }
            (RatioPolicy::Profile(_), None) => Ok((RefRatio::HALF.value(), None)),
        }
    }

    pub fn compose(&self, target: usize, first: usize, last: usize, r_ref: f64) -> Result<InputComposition> {
        compose_in(&ComposeRequest {
            target,
            first,
            last,
            r_ref,
            total: self.total,
            stride: self.stride,
            mode: self.mode,
        })
    }
}

/// Score the window's target and compose its inputs from the window's frames.
/// Without a profile the balanced split is used.
pub fn configure(
    window: &SequenceWindow,
    profile: Option<&CalibrationProfile>,
    model: &MemoryModel,
    config: &PyramidConfig,
) -> Result<InputComposition> {
    let policy = match profile {
        Some(p) => RatioPolicy::Profile(Box::new(p.clone())),
        None => RatioPolicy::Baseline,
    };
    let cfg = Configurator::new(policy, model, DEFAULT_STRIDE)?;
    let raw = if cfg.policy.needs_scores() {
        Some(crate::dynamics::measure_target(window, config)?.0)
    } else {
        None
    };
    let (r, _) = cfg.ratio_for(raw.as_ref())?;
    let indices: Vec<usize> = window.frames().iter().map(|f| f.index()).collect();
    let (first, last) = (indices[0], indices[indices.len() - 1]);
    if last - first + 1 != indices.len() {
        return Err(Error::InsufficientHistory("window indices are not contiguous".into()));
    }
    cfg.compose(window.target_index(), first, window.target_index(), r)
        .or_else(|e| match e {
            Error::HistoryTooShort { .. } if last > window.target_index() => {
                cfg.compose(window.target_index(), first, last, r)
            }
            e => Err(e),
        })
}
