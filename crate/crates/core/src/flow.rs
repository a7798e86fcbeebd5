//! Dense optical flow, in-mask flow completion and the masked flow magnitude.
//!
//! Flow is estimated with an iterative coarse-to-fine Lucas–Kanade scheme
//! evaluated at every pixel. Completion replaces the flow under a mask with
//! the harmonic interpolant of the surrounding flow, per component.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{bilinear, check_same_dims, FlowField, Frame, Mask, MIN_DIM};
use crate::harmonic::{HarmonicSolver, SolveReport};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    pub levels: usize,
    pub iterations_per_level: usize,
    pub window_radius: usize,
    pub smoothing_sigma: f64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            levels: 3,
            iterations_per_level: 5,
            window_radius: 7,
            smoothing_sigma: 1.5,
        }
    }
}

impl PyramidConfig {
    /// Check the configuration against a frame size.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.levels == 0 || self.iterations_per_level == 0 || self.window_radius == 0 {
            return Err(Error::InvalidConfig(
                "levels, iterations and window radius must be at least 1".into(),
            ));
        }
        if !(self.smoothing_sigma > 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(Error::InvalidConfig("smoothing sigma must be positive".into()));
        }
        let (mut w, mut h) = (width, height);
        for _ in 1..self.levels {
            w = w.div_ceil(2);
            h = h.div_ceil(2);
        }
        if w < MIN_DIM || h < MIN_DIM {
            return Err(Error::InvalidConfig(format!(
                "{} levels shrink {width}x{height} to {w}x{h}, below 8x8",
                self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.data, self.w, self.h, x, y)
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn blur(p: &Plane, sigma: f64) -> Plane {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (p.w, p.h);
    let mut tmp = vec![0.0; w * h];
    par::for_each_row(&mut tmp, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = k
                .iter()
                .enumerate()
                .map(|(i, kv)| {
                    let xx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                    kv * p.data[y * w + xx]
                })
                .sum();
        }
    });
    let mut data = vec![0.0; w * h];
    par::for_each_row(&mut data, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = k
                .iter()
                .enumerate()
                .map(|(i, kv)| {
                    let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                    kv * tmp[yy * w + x]
                })
                .sum();
        }
    });
    Plane { w, h, data }
}

fn downsample(p: &Plane) -> Plane {
    let (w, h) = (p.w.div_ceil(2), p.h.div_ceil(2));
    let mut data = vec![0.0; w * h];
    par::for_each_row(&mut data, w, |y, row| {
        let (y0, y1) = (2 * y, (2 * y + 1).min(p.h - 1));
        for (x, out) in row.iter_mut().enumerate() {
            let (x0, x1) = (2 * x, (2 * x + 1).min(p.w - 1));
            *out = 0.25 * (p.at(x0, y0) + p.at(x1, y0) + p.at(x0, y1) + p.at(x1, y1));
        }
    });
    Plane { w, h, data }
}

fn gradients(p: &Plane) -> (Plane, Plane) {
    let (w, h) = (p.w, p.h);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    par::for_each_row(&mut gx, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let (a, b) = (x.saturating_sub(1), (x + 1).min(w - 1));
            *out = (p.at(b, y) - p.at(a, y)) / (b - a) as f64;
        }
    });
    par::for_each_row(&mut gy, w, |y, row| {
        let (a, b) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for (x, out) in row.iter_mut().enumerate() {
            *out = (p.at(x, b) - p.at(x, a)) / (b - a) as f64;
        }
    });
    (Plane { w, h, data: gx }, Plane { w, h, data: gy })
}

/// Summed-area table with a zero row and column prepended.
fn integral(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut s = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += data[y * w + x];
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

fn box_sum(s: &[f64], w: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let w1 = w + 1;
    s[(y1 + 1) * w1 + x1 + 1] - s[y0 * w1 + x1 + 1] - s[(y1 + 1) * w1 + x0] + s[y0 * w1 + x0]
}

fn build_pyramid(luma: Vec<f64>, w: usize, h: usize, config: &PyramidConfig) -> Vec<Plane> {
    let mut levels = vec![blur(&Plane { w, h, data: luma }, config.smoothing_sigma)];
    for _ in 1..config.levels {
        let prev = levels.last().expect("non-empty");
        levels.push(downsample(&blur(prev, 1.0)));
    }
    levels
}

/// Refine `(u, v)` at one pyramid level.
fn refine_level(i0: &Plane, i1: &Plane, u: &mut [f64], v: &mut [f64], config: &PyramidConfig) {
    let (w, h) = (i0.w, i0.h);
    let r = config.window_radius;
    let (gx0, gy0) = gradients(i0);
    let (gx1, gy1) = gradients(i1);
    let limit = w.max(h) as f64;

    for _ in 0..config.iterations_per_level {
        // per-pixel products of the linearized brightness-constancy system
        let products: Vec<[f64; 5]> = par::map_range(w * h, |p| {
            let (x, y) = ((p % w) as f64, (p / w) as f64);
            let (sx, sy) = (x + u[p], y + v[p]);
            let it = i1.sample(sx, sy) - i0.data[p];
            let ix = 0.5 * (gx0.data[p] + gx1.sample(sx, sy));
            let iy = 0.5 * (gy0.data[p] + gy1.sample(sx, sy));
            [ix * ix, ix * iy, iy * iy, ix * it, iy * it]
        });
        let tables: Vec<Vec<f64>> = (0..5)
            .map(|k| integral(&products.iter().map(|q| q[k]).collect::<Vec<_>>(), w, h))
            .collect();

        let updates: Vec<(f64, f64)> = par::map_range(w * h, |p| {
            let (x, y) = (p % w, p / w);
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
            let area = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
            let s = |k: usize| box_sum(&tables[k], w, x0, y0, x1, y1);
            // small Tikhonov term keeps flat or edge-only windows well posed
            let lambda = 1e-2 * area;
            let (a, b, c) = (s(0) + lambda, s(1), s(2) + lambda);
            let (bx, by) = (-s(3), -s(4));
            let det = a * c - b * b;
            ((c * bx - b * by) / det, (a * by - b * bx) / det)
        });
        for (p, (du, dv)) in updates.into_iter().enumerate() {
            let (nu, nv) = (u[p] + du, v[p] + dv);
            let mag = nu.hypot(nv);
            let scale = if mag > limit { limit / mag } else { 1.0 };
            u[p] = nu * scale;
            v[p] = nv * scale;
        }
    }
}

fn upsample_flow(u: &[f64], v: &[f64], from: &Plane, to: &Plane) -> (Vec<f64>, Vec<f64>) {
    let sx = to.w as f64 / from.w as f64;
    let sy = to.h as f64 / from.h as f64;
    let (mut nu, mut nv) = (vec![0.0; to.w * to.h], vec![0.0; to.w * to.h]);
    for y in 0..to.h {
        for x in 0..to.w {
            let cx = (x as f64 + 0.5) / sx - 0.5;
            let cy = (y as f64 + 0.5) / sy - 0.5;
            nu[y * to.w + x] = sx * bilinear(u, from.w, from.h, cx, cy);
            nv[y * to.w + x] = sy * bilinear(v, from.w, from.h, cx, cy);
        }
    }
    (nu, nv)
}

/// Dense flow from `prev` to `next`: `prev(x) ≈ next(x + flow(x))`.
///
/// RGB inputs are reduced to luma. Magnitudes are clamped to `max(width, height)`.
pub fn estimate_flow(prev: &Frame, next: &Frame, config: &PyramidConfig) -> Result<FlowField> {
    if !prev.same_dims(next) {
        return Err(Error::DimensionMismatch(format!(
            "flow inputs {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            next.width(),
            next.height()
        )));
    }
    let (w, h) = (prev.width(), prev.height());
    config.validate(w, h)?;
    let p0 = build_pyramid(prev.luma(), w, h, config);
    let p1 = build_pyramid(next.luma(), w, h, config);

    let coarsest = p0.len() - 1;
    let (mut u, mut v) = (
        vec![0.0; p0[coarsest].w * p0[coarsest].h],
        vec![0.0; p0[coarsest].w * p0[coarsest].h],
    );
    for level in (0..=coarsest).rev() {
        if level != coarsest {
            (u, v) = upsample_flow(&u, &v, &p0[level + 1], &p0[level]);
        }
        refine_level(&p0[level], &p1[level], &mut u, &mut v, config);
    }
    FlowField::new(w, h, u, v)
}

/// Replace the flow under `mask` with the harmonic interpolant of its surroundings.
pub fn complete_flow(flow: &FlowField, mask: &Mask) -> Result<FlowField> {
    complete_flow_with(flow, mask, &HarmonicSolver::default()).map(|(f, _)| f)
}

/// [`complete_flow`] with an explicit solver, also returning per-component reports.
pub fn complete_flow_with(
    flow: &FlowField,
    mask: &Mask,
    solver: &HarmonicSolver,
) -> Result<(FlowField, [SolveReport; 2])> {
    check_same_dims(flow.width(), flow.height(), mask.width(), mask.height(), "flow vs mask")?;
    let (w, h) = (flow.width(), flow.height());
    let unknown: Vec<bool> = mask.data().iter().map(|&m| m == 1).collect();
    let (mut u, mut v) = flow.clone().into_planes();
    let ru = solver.solve(&mut u, w, h, &unknown)?;
    let rv = solver.solve(&mut v, w, h, &unknown)?;
    Ok((FlowField::new(w, h, u, v)?, [ru, rv]))
}

/// Mean per-pixel flow magnitude over the mask pixels.
pub fn masked_flow_magnitude(flow: &FlowField, mask: &Mask) -> Result<f64> {
    check_same_dims(flow.width(), flow.height(), mask.width(), mask.height(), "flow vs mask")?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let total: f64 = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m == 1)
        .map(|(p, _)| flow.magnitude(p))
        .sum();
    Ok(total / mask.size() as f64)
}

pub const FLOW_MAGIC: &[u8; 8] = b"DYFLOW01";

/// Binary flow file: magic, width and height as u32 LE, then the u and v
/// planes as row-major f32 LE.
pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * flow.u().len());
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(flow.width() as u32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as u32).to_le_bytes());
    for plane in [flow.u(), flow.v()] {
        for &x in plane {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    let bad = |reason: &str| Error::MalformedHeader {
        path: "<flow>".into(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 || &bytes[..8] != FLOW_MAGIC {
        return Err(bad("missing DYFLOW01 magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (w, h) = (word(8), word(12));
    let n = w * h;
    if bytes.len() != 16 + 8 * n {
        return Err(bad("plane length does not match dimensions"));
    }
    let plane = |offset: usize| -> Vec<f64> {
        bytes[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect()
    };
    FlowField::new(w, h, plane(16), plane(16 + 4 * n))
}

pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_flow(flow)).map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes)
}
