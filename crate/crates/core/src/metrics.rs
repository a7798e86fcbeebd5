//! PSNR, SSIM, the signed maximum change rate over a ratio sweep, and
//! ordinary least-squares line fitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{check_same_dims, Frame, Mask};
use crate::par;
use crate::ratio::RefRatio;

/// Returned by [`psnr`] when the two inputs are identical.
pub const PSNR_CAP: f64 = 99.0;

const PEAK: f64 = 255.0;
const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn check_pair(reference: &Frame, test: &Frame) -> Result<()> {
    check_same_dims(reference.width(), reference.height(), test.width(), test.height(), "metric inputs")?;
    if reference.channels() != test.channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} channels",
            reference.channels(),
            test.channels()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all samples, or only over the
/// pixels of `region`. Capped at [`PSNR_CAP`].
pub fn psnr(reference: &Frame, test: &Frame, region: Option<&Mask>) -> Result<f64> {
    check_pair(reference, test)?;
    let c = reference.channels();
    let (a, b) = (reference.data(), test.data());
    let (sum, count) = match region {
        None => {
            let sum: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
            (sum, a.len())
        }
        Some(mask) => {
            check_same_dims(reference.width(), reference.height(), mask.width(), mask.height(), "psnr region")?;
            if mask.is_empty() {
                return Err(Error::EmptyRegion);
            }
            let sum: f64 = mask
                .data()
                .iter()
                .enumerate()
                .filter(|(_, &m)| m == 1)
                .flat_map(|(p, _)| (p * c..(p + 1) * c).map(|i| (a[i] as f64 - b[i] as f64).powi(2)))
                .sum();
            (sum, mask.size() * c)
        }
    };
    Ok(psnr_from_mse(sum / count as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP)
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let (dx, dy) = ((i % size) as f64 - r, (i / size) as f64 - r);
            (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Local SSIM at every position where the window fits, row-major over the
/// `(w - size + 1) x (h - size + 1)` grid of window origins.
struct SsimMap {
    size: usize,
    cols: usize,
    rows: usize,
    values: Vec<f64>,
}

fn ssim_map(reference: &Frame, test: &Frame) -> Result<SsimMap> {
    check_same_dims(reference.width(), reference.height(), test.width(), test.height(), "ssim inputs")?;
    let (w, h) = (reference.width(), reference.height());
    // frames narrower than the standard window use the largest odd window that fits
    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let kernel = gaussian_window(size);
    let (x, y) = (reference.luma(), test.luma());
    let (cols, rows) = (w - size + 1, h - size + 1);
    let values = par::map_range(cols * rows, |i| {
        let (ox, oy) = (i % cols, i / cols);
        let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for dy in 0..size {
            let row = (oy + dy) * w + ox;
            for dx in 0..size {
                let k = kernel[dy * size + dx];
                let (a, b) = (x[row + dx], y[row + dx]);
                mx += k * a;
                my += k * b;
                sxx += k * a * a;
                syy += k * b * b;
                sxy += k * a * b;
            }
        }
        let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
        ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
    });
    Ok(SsimMap {
        size,
        cols,
        rows,
        values,
    })
}

/// Mean structural similarity over 11x11 Gaussian windows (sigma 1.5) on luma.
pub fn ssim(reference: &Frame, test: &Frame) -> Result<f64> {
    let map = ssim_map(reference, test)?;
    Ok(map.values.iter().sum::<f64>() / map.values.len() as f64)
}

/// SSIM averaged over windows centered on the pixels of `region`. Centers too
/// close to the border use the nearest window that fits.
pub fn ssim_masked(reference: &Frame, test: &Frame, region: &Mask) -> Result<f64> {
    check_same_dims(reference.width(), reference.height(), region.width(), region.height(), "ssim region")?;
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let map = ssim_map(reference, test)?;
    let half = map.size / 2;
    let w = region.width();
    let mut sum = 0.0;
    for (p, _) in region.data().iter().enumerate().filter(|(_, &m)| m == 1) {
        let ox = (p % w).saturating_sub(half).min(map.cols - 1);
        let oy = (p / w).saturating_sub(half).min(map.rows - 1);
        sum += map.values[oy * map.cols + ox];
    }
    Ok(sum / region.size() as f64)
}

/// Mean masked PSNR for each of the seven reference ratios.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioSweepResult {
    pub entries: BTreeMap<RefRatio, f64>,
}

impl RatioSweepResult {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (RefRatio, f64)>) -> Self {
        RatioSweepResult {
            entries: pairs.into_iter().collect(),
        }
    }

    /// `r,psnr` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,psnr\n");
        for (r, p) in &self.entries {
            out.push_str(&format!("{},{}\n", r.value(), p));
        }
        out
    }
}

/// Sign of the ratio move from the worst to the best PSNR, times the relative
/// PSNR range. Ties resolve to the first occurrence in ascending ratio order,
/// and a zero ratio difference has sign 0.
pub fn signed_max_change_rate(sweep: &RatioSweepResult) -> Result<f64> {
    if sweep.entries.len() < 2 {
        return Err(Error::InsufficientEntries(sweep.entries.len()));
    }
    let mut it = sweep.entries.iter();
    let (&r0, &p0) = it.next().expect("two entries");
    let (mut best, mut worst) = ((r0, p0), (r0, p0));
    for (&r, &p) in it {
        if p > best.1 {
            best = (r, p);
        }
        if p < worst.1 {
            worst = (r, p);
        }
    }
    if best.1 <= 0.0 {
        return Err(Error::NonPositiveMax(best.1));
    }
    let sign = match best.0.cmp(&worst.0) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Less => -1.0,
        std::cmp::Ordering::Equal => 0.0,
    };
    Ok(sign * (best.1 - worst.1) / best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Sum of squared residuals.
    pub rss: f64,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// `x` where the line crosses zero, if it is not horizontal.
    pub fn zero_crossing(&self) -> Option<f64> {
        (self.slope != 0.0).then(|| -self.intercept / self.slope)
    }
}

/// Ordinary least-squares line through `points`.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateX);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateX);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = points
        .iter()
        .map(|&(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    Ok(LineFit { slope, intercept, rss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray(w: usize, h: usize, data: Vec<u8>) -> Frame {
        Frame::new(w, h, 1, data, 0).unwrap()
    }

    fn noise(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gray(w, h, (0..w * h).map(|_| rng.random()).collect())
    }

    #[test]
    fn psnr_examples() {
        let a = noise(16, 16, 1);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP);

        let zero = Frame::filled(8, 8, 3, 0, 0).unwrap();
        let full = Frame::filled(8, 8, 3, 255, 0).unwrap();
        assert_eq!(psnr(&zero, &full, None).unwrap(), 0.0);

        // two differing pixels (+10, -10) selected by the region: MSE = 100
        let mut d0 = vec![0u8; 64];
        let mut d1 = vec![0u8; 64];
        d0[0] = 100;
        d0[1] = 100;
        d1[0] = 110;
        d1[1] = 90;
        let region = Mask::from_fn(8, 8, 0, |x, y| y == 0 && x < 2).unwrap();
        let v = psnr(&gray(8, 8, d0), &gray(8, 8, d1), Some(&region)).unwrap();
        assert!((v - 10.0 * (65025.0f64 / 100.0).log10()).abs() < 1e-12);
        assert!((v - 28.1308).abs() < 1e-4);
    }

    #[test]
    fn psnr_errors() {
        let a = noise(8, 8, 1);
        let b = noise(9, 8, 1);
        assert!(matches!(psnr(&a, &b, None), Err(Error::DimensionMismatch(_))));
        let empty = Mask::empty(8, 8, 0).unwrap();
        assert!(matches!(psnr(&a, &a, Some(&empty)), Err(Error::EmptyRegion)));
    }

    #[test]
    fn ssim_examples() {
        let a = noise(32, 32, 3);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);

        let inv = gray(32, 32, a.data().iter().map(|v| 255 - v).collect());
        assert!(ssim(&a, &inv).unwrap() < 0.0);

        let c100 = Frame::filled(16, 16, 1, 100, 0).unwrap();
        let c120 = Frame::filled(16, 16, 1, 120, 0).unwrap();
        let expect = (2.0 * 100.0 * 120.0 + SSIM_C1) / (100.0f64.powi(2) + 120.0f64.powi(2) + SSIM_C1);
        assert!((ssim(&c100, &c120).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.98361).abs() < 1e-5);
    }

    #[test]
    fn ssim_small_frames_and_masks() {
        let a = noise(8, 8, 4);
        let b = noise(8, 8, 5);
        let v = ssim(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&v));
        let corner = Mask::from_fn(8, 8, 0, |x, y| x == 0 && y == 0).unwrap();
        assert!((ssim_masked(&a, &a, &corner).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            ssim_masked(&a, &b, &Mask::empty(8, 8, 0).unwrap()),
            Err(Error::EmptyRegion)
        ));
    }

    fn sweep(pairs: &[(u8, f64)]) -> RatioSweepResult {
        RatioSweepResult::from_pairs(pairs.iter().map(|&(k, p)| (RefRatio::from_eighths(k).unwrap(), p)))
    }

    #[test]
    fn change_rate_examples() {
        assert_eq!(signed_max_change_rate(&sweep(&[(1, 33.0), (4, 33.0), (7, 33.0)])).unwrap(), 0.0);
        let up = signed_max_change_rate(&sweep(&[(1, 30.0), (7, 36.0)])).unwrap();
        assert!((up - 6.0 / 36.0).abs() < 1e-15);
        assert!((up - 0.1667).abs() < 1e-4);
        let down = signed_max_change_rate(&sweep(&[(1, 36.0), (7, 30.0)])).unwrap();
        assert_eq!(down, -up);
    }

    #[test]
    fn change_rate_errors() {
        assert!(matches!(
            signed_max_change_rate(&sweep(&[(1, 30.0)])),
            Err(Error::InsufficientEntries(1))
        ));
        assert!(matches!(
            signed_max_change_rate(&sweep(&[(1, 0.0), (2, 0.0)])),
            Err(Error::NonPositiveMax(_))
        ));
    }

    #[test]
    fn sweep_csv() {
        let s = sweep(&[(2, 31.5), (1, 30.0)]);
        assert_eq!(s.to_csv(), "r,psnr\n0.125,30\n0.25,31.5\n");
    }

    #[test]
    fn fit_examples() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let f = fit_line(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12 && f.rss < 1e-12);

        let f = fit_line(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert!(f.slope.abs() < 1e-15);
        assert!((f.intercept - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.rss - 2.0 / 3.0).abs() < 1e-15);

        assert!(matches!(fit_line(&[(1.0, 0.0), (1.0, 5.0)]), Err(Error::DegenerateX)));
        assert!(matches!(fit_line(&[(1.0, 0.0)]), Err(Error::DegenerateX)));
    }

    proptest! {
        #[test]
        fn psnr_is_symmetric(seed in any::<u64>()) {
            let a = noise(9, 9, seed);
            let b = noise(9, 9, seed.wrapping_add(1));
            prop_assert_eq!(psnr(&a, &b, None).unwrap(), psnr(&b, &a, None).unwrap());
        }

        #[test]
        fn psnr_decreases_with_uniform_error(base in 20u8..200, e1 in 1u8..25, extra in 1u8..25) {
            let a = Frame::filled(8, 8, 1, base, 0).unwrap();
            let b1 = Frame::filled(8, 8, 1, base + e1, 0).unwrap();
            let b2 = Frame::filled(8, 8, 1, base + e1 + extra, 0).unwrap();
            prop_assert!(psnr(&a, &b1, None).unwrap() > psnr(&a, &b2, None).unwrap());
        }

        #[test]
        fn ssim_is_symmetric(seed in any::<u64>()) {
            let a = noise(14, 12, seed);
            let b = noise(14, 12, seed ^ 0xabc);
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn change_rate_sign_survives_positive_scaling(ps in proptest::collection::vec(1.0f64..50.0, 7), c in 0.01f64..100.0) {
            let a = sweep(&ps.iter().enumerate().map(|(i, &p)| (i as u8 + 1, p)).collect::<Vec<_>>());
            let b = sweep(&ps.iter().enumerate().map(|(i, &p)| (i as u8 + 1, p * c)).collect::<Vec<_>>());
            let (ra, rb) = (signed_max_change_rate(&a).unwrap(), signed_max_change_rate(&b).unwrap());
            prop_assert_eq!(ra.signum() * (ra != 0.0) as u8 as f64, rb.signum() * (rb != 0.0) as u8 as f64);
        }

        #[test]
        fn residuals_are_orthogonal(pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40)) {
            prop_assume!(pts.iter().any(|p| (p.0 - pts[0].0).abs() > 1e-3));
            let f = fit_line(&pts).unwrap();
            let r: Vec<f64> = pts.iter().map(|&(x, y)| y - f.eval(x)).collect();
            prop_assert!(r.iter().sum::<f64>().abs() < 1e-9);
            prop_assert!(r.iter().zip(&pts).map(|(r, p)| r * p.0).sum::<f64>().abs() < 1e-9);
            prop_assert!(f.rss >= 0.0);
        }
    }
}
