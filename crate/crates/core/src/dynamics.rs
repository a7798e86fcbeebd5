//! Mask-change and masked-flow dynamics of a target frame, their
//! normalization, and the slope-weighted combined score.

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationProfile;
use crate::error::{Error, Result};
use crate::flow::{complete_flow, estimate_flow, masked_flow_magnitude, PyramidConfig};
use crate::frame::{check_same_dims, FlowField, Frame, Mask, SequenceWindow};

/// Normalized dynamics of one target frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsScore {
    pub target_index: usize,
    pub x_flow: f64,
    pub x_mask: f64,
    pub x_comb: f64,
}

/// Per-axis min–max bounds of the raw dynamics, captured during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub flow_min: f64,
    pub flow_max: f64,
    pub mask_min: f64,
    pub mask_max: f64,
}

impl NormalizationBounds {
    pub fn new(flow_min: f64, flow_max: f64, mask_min: f64, mask_max: f64) -> Result<Self> {
        let b = NormalizationBounds {
            flow_min,
            flow_max,
            mask_min,
            mask_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (min, max) in [(self.flow_min, self.flow_max), (self.mask_min, self.mask_max)] {
            if !(min < max) || !min.is_finite() || !max.is_finite() {
                return Err(Error::DegenerateBounds { min, max });
            }
        }
        Ok(())
    }
}

/// Number of pixels where the two binary masks differ.
pub fn mask_change(current: &Mask, previous: &Mask) -> Result<usize> {
    check_same_dims(current.width(), current.height(), previous.width(), previous.height(), "mask change")?;
    Ok(current
        .data()
        .iter()
        .zip(previous.data())
        .filter(|(a, b)| a != b)
        .count())
}

/// `clamp((raw - min) / (max - min), 0, 1)`.
pub fn normalize(raw: f64, min: f64, max: f64) -> Result<f64> {
    if !(min < max) {
        return Err(Error::DegenerateBounds { min, max });
    }
    Ok(((raw - min) / (max - min)).clamp(0.0, 1.0))
}

/// Weighted mean of the two normalized scores with weights `|m_flow|`, `|m_mask|`.
pub fn combine(x_flow: f64, x_mask: f64, m_flow: f64, m_mask: f64) -> Result<f64> {
    let (wf, wm) = (m_flow.abs(), m_mask.abs());
    if !(wf + wm > 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(((wf * x_flow + wm * x_mask) / (wf + wm)).clamp(0.0, 1.0))
}

/// Unnormalized dynamics of a target frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawDynamics {
    pub target_index: usize,
    /// Mean completed-flow magnitude over the target mask, px/frame.
    pub flow: f64,
    /// Pixels changed between the target mask and its predecessor.
    pub mask_change: f64,
}

impl RawDynamics {
    /// Dynamics of `target_index` from an already completed backward flow.
    pub fn from_completed(target_index: usize, completed: &FlowField, mask: &Mask, previous: &Mask) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(RawDynamics {
            target_index,
            flow: masked_flow_magnitude(completed, mask)?,
            mask_change: mask_change(mask, previous)? as f64,
        })
    }
}

/// Mask under which estimated flow is replaced by completion: both masks of
/// the pair, grown by the estimator's window so blanked pixels cannot leak in.
pub fn completion_mask(target: &Mask, previous: &Mask, config: &PyramidConfig) -> Result<Mask> {
    let union = target.union(previous)?;
    let grown = union.dilate(config.window_radius);
    if grown.size() < grown.width() * grown.height() {
        Ok(grown)
    } else {
        Ok(union)
    }
}

/// Backward flow of the pair `(t, t-1)` completed under [`completion_mask`].
pub fn completed_backward_flow(
    window: &SequenceWindow,
    target_index: usize,
    config: &PyramidConfig,
) -> Result<FlowField> {
    let (cur, prev) = consecutive_pair(window, target_index)?;
    completed_pair_flow(
        (&window.frames()[cur], &window.masks()[cur]),
        (&window.frames()[prev], &window.masks()[prev]),
        config,
    )
}

/// Flow from `current` back to `previous`, completed under [`completion_mask`].
pub fn completed_pair_flow(current: (&Frame, &Mask), previous: (&Frame, &Mask), config: &PyramidConfig) -> Result<FlowField> {
    let flow = estimate_flow(current.0, previous.0, config)?;
    complete_flow(&flow, &completion_mask(current.1, previous.1, config)?)
}

fn consecutive_pair(window: &SequenceWindow, target_index: usize) -> Result<(usize, usize)> {
    let cur = window.position(target_index).ok_or(Error::MissingTarget(target_index))?;
    let prev = target_index
        .checked_sub(1)
        .and_then(|t| window.position(t))
        .ok_or_else(|| Error::InsufficientHistory(format!("frame {target_index} has no predecessor in the window")))?;
    Ok((cur, prev))
}

/// Raw dynamics of the window's target from its latest consecutive pair,
/// together with the completed flow they were measured on.
pub fn measure_target(window: &SequenceWindow, config: &PyramidConfig) -> Result<(RawDynamics, FlowField)> {
    let target = window.target_index();
    let (cur, prev) = consecutive_pair(window, target)?;
    if window.masks()[cur].is_empty() {
        return Err(Error::EmptyMask);
    }
    let completed = completed_backward_flow(window, target, config)?;
    let raw = RawDynamics::from_completed(target, &completed, &window.masks()[cur], &window.masks()[prev])?;
    Ok((raw, completed))
}

/// Normalize raw dynamics against a profile and combine them.
pub fn score_raw(raw: &RawDynamics, profile: &CalibrationProfile) -> Result<DynamicsScore> {
    let b = &profile.bounds;
    let x_flow = normalize(raw.flow, b.flow_min, b.flow_max)?;
    let x_mask = normalize(raw.mask_change, b.mask_min, b.mask_max)?;
    Ok(DynamicsScore {
        target_index: raw.target_index,
        x_flow,
        x_mask,
        x_comb: profile.combine(x_flow, x_mask)?,
    })
}

/// Score the window's target frame against a calibration profile.
pub fn score_target(
    window: &SequenceWindow,
    profile: &CalibrationProfile,
    config: &PyramidConfig,
) -> Result<DynamicsScore> {
    score_raw(&measure_target(window, config)?.0, profile)
}

/// Equal-width histogram of `values` over `[lo, hi]`; values outside are clamped
/// into the end bins.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; bins.max(1)];
    let n = counts.len();
    for &v in values {
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        let i = ((t * n as f64).floor().max(0.0) as usize).min(n - 1);
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(x0: usize, y0: usize, w: usize, h: usize) -> Mask {
        Mask::from_fn(20, 20, 0, |x, y| (x0..x0 + w).contains(&x) && (y0..y0 + h).contains(&y)).unwrap()
    }

    #[test]
    fn mask_change_examples() {
        let a = rect(2, 2, 4, 3);
        assert_eq!(mask_change(&a, &a).unwrap(), 0);
        // disjoint 12 and 30 pixel masks
        let b = rect(0, 0, 4, 3);
        let c = rect(10, 10, 5, 6);
        assert_eq!(mask_change(&b, &c).unwrap(), 42);
        // sizes 10 and 8 sharing 5 pixels
        let d = Mask::from_fn(20, 20, 0, |x, y| y == 0 && x < 10).unwrap();
        let e = Mask::from_fn(20, 20, 0, |x, y| y == 0 && (5..13).contains(&x)).unwrap();
        assert_eq!(mask_change(&d, &e).unwrap(), 8);
        let small = Mask::empty(8, 8, 0).unwrap();
        assert!(matches!(mask_change(&a, &small), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(2.0, 2.0, 6.0).unwrap(), 0.0);
        assert_eq!(normalize(6.0, 2.0, 6.0).unwrap(), 1.0);
        assert_eq!(normalize(60.0, 2.0, 6.0).unwrap(), 1.0);
        assert_eq!(normalize(-6.0, 2.0, 6.0).unwrap(), 0.0);
        assert!(matches!(normalize(1.0, 3.0, 3.0), Err(Error::DegenerateBounds { .. })));
    }

    #[test]
    fn combine_examples() {
        assert!((combine(0.2, 0.6, 1.5, 1.5).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(combine(0.3, 0.3, -7.0, 0.2).unwrap(), 0.3);
        assert!((combine(0.8, 0.2, 3.0, 1.0).unwrap() - 0.65).abs() < 1e-15);
        assert!((combine(0.8, 0.2, -3.0, -1.0).unwrap() - 0.65).abs() < 1e-15);
        assert!(matches!(combine(0.1, 0.2, 0.0, 0.0), Err(Error::ZeroWeights)));
    }

    #[test]
    fn one_frame_window_lacks_history() {
        let f = Frame::filled(16, 16, 1, 9, 4).unwrap();
        let m = Mask::from_fn(16, 16, 4, |x, _| x < 3).unwrap();
        let w = SequenceWindow::new(vec![f], vec![m], 4).unwrap();
        assert!(matches!(
            measure_target(&w, &PyramidConfig::default()),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.0, 0.1, 0.5, 0.99, 1.0, 7.0, -1.0], 4, 0.0, 1.0);
        assert_eq!(h, vec![3, 0, 1, 3]);
    }

    proptest! {
        #[test]
        fn mask_change_is_a_metric_on_masks(sa in any::<u64>(), sb in any::<u64>()) {
            let bits = |s: u64| Mask::from_fn(8, 8, 0, |x, y| (s >> (y * 8 + x)) & 1 == 1).unwrap();
            let (a, b) = (bits(sa), bits(sb));
            prop_assert_eq!(mask_change(&a, &b).unwrap(), mask_change(&b, &a).unwrap());
            prop_assert_eq!(mask_change(&a, &a).unwrap(), 0);
            prop_assert!(mask_change(&a, &b).unwrap() <= 64);
            prop_assert_eq!(mask_change(&a, &b).unwrap() as u32, (sa ^ sb).count_ones());
        }

        #[test]
        fn combine_is_weight_scale_invariant(xf in 0.0f64..1.0, xm in 0.0f64..1.0,
                                             m1 in 0.01f64..5.0, m2 in 0.01f64..5.0, c in 0.01f64..100.0) {
            let a = combine(xf, xm, m1, m2).unwrap();
            let b = combine(xf, xm, c * m1, c * m2).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= xf.min(xm) - 1e-15 && a <= xf.max(xm) + 1e-15);
        }
    }
}
