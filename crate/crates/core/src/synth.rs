//! Seeded synthetic scenes: a smooth random texture seen by a translating
//! camera, with a randomly shaped mask that wanders over it.
//!
//! Mask motion follows a clamped random walk on the velocity: each frame the
//! velocity gets a uniform kick in `[-jitter, jitter]` per axis, is rescaled
//! to at most `max_speed`, and the blob reflects off a margin of
//! `max_radius` pixels from the frame edges.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Mask, Video};

/// Periodic two-octave value noise with RGB samples in `[0, 255]`.
#[derive(Debug, Clone)]
pub struct Texture {
    octaves: Vec<Octave>,
}

#[derive(Debug, Clone)]
struct Octave {
    lattice: Vec<[f64; 3]>,
    period: usize,
    cell: f64,
    weight: f64,
}

impl Octave {
    fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let (gx, gy) = (x / self.cell, y / self.cell);
        let (fx, fy) = (gx.floor(), gy.floor());
        let (tx, ty) = (smooth(gx - fx), smooth(gy - fy));
        let n = self.period as i64;
        let at = |i: i64, j: i64| self.lattice[(j.rem_euclid(n) * n + i.rem_euclid(n)) as usize];
        let (i, j) = (fx as i64, fy as i64);
        let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
        std::array::from_fn(|k| {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bot = c[k] + (d[k] - c[k]) * tx;
            top + (bot - top) * ty
        })
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    /// `feature_px` is the coarse lattice spacing in pixels.
    pub fn new(seed: u64, feature_px: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut octave = |period: usize, cell: f64, weight: f64| Octave {
            lattice: (0..period * period)
                .map(|_| std::array::from_fn(|_| rng.random_range(0.0..255.0)))
                .collect(),
            period,
            cell,
            weight,
        };
        let octaves = vec![
            octave(37, feature_px, 0.7),
            octave(53, feature_px * 0.5, 0.3),
        ];
        Texture { octaves }
    }

    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for o in &self.octaves {
            let s = o.sample(x, y);
            for k in 0..3 {
                out[k] += o.weight * s[k];
            }
        }
        out
    }
}

/// RGB frame showing `texture` shifted by `(dx, dy)`: content at texture
/// position `p` appears at pixel `p + (dx, dy)`.
pub fn translated_texture(texture: &Texture, width: usize, height: usize, dx: f64, dy: f64, index: usize) -> Frame {
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let s = texture.sample(x as f64 - dx, y as f64 - dy);
            data.extend(s.iter().map(|v| (v + 0.5).floor().clamp(0.0, 255.0) as u8));
        }
    }
    Frame::new(width, height, 3, data, index).expect("synthetic frame dims")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// Still camera, mask wandering slowly.
    Static,
    /// Still camera, mask drifting steadily so stride-spaced frames uncover it.
    Reveal,
    /// Camera pans about 1 px/frame.
    Medium,
    /// Camera pans about 3 px/frame, mask moves quickly.
    Fast,
}

impl SceneKind {
    pub const ALL: [SceneKind; 4] = [SceneKind::Static, SceneKind::Reveal, SceneKind::Medium, SceneKind::Fast];

    fn params(self) -> MotionParams {
        match self {
            SceneKind::Static => MotionParams {
                camera_speed: 0.0,
                mask_speed: 0.5,
                jitter: 0.15,
                radius: (6.0, 10.0),
            },
            SceneKind::Reveal => MotionParams {
                camera_speed: 0.0,
                mask_speed: 0.45,
                jitter: 0.0,
                radius: (8.0, 12.0),
            },
            SceneKind::Medium => MotionParams {
                camera_speed: 1.0,
                mask_speed: 1.0,
                jitter: 0.3,
                radius: (6.0, 10.0),
            },
            SceneKind::Fast => MotionParams {
                camera_speed: 3.0,
                mask_speed: 2.0,
                jitter: 0.5,
                radius: (6.0, 10.0),
            },
        }
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(SceneKind::Static),
            "reveal" => Ok(SceneKind::Reveal),
            "medium" => Ok(SceneKind::Medium),
            "fast" => Ok(SceneKind::Fast),
            other => Err(Error::InvalidConfig(format!("unknown scene kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SceneKind::Static => "static",
            SceneKind::Reveal => "reveal",
            SceneKind::Medium => "medium",
            SceneKind::Fast => "fast",
        };
        f.write_str(s)
    }
}

struct MotionParams {
    camera_speed: f64,
    mask_speed: f64,
    jitter: f64,
    radius: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, seed: u64) -> Self {
        SceneSpec {
            kind,
            width: 96,
            height: 64,
            frames: 90,
            seed,
        }
    }
}

/// Render the ground-truth frames and masks of a scene. Indices start at 0.
pub fn generate(spec: &SceneSpec) -> Video {
    let params = spec.kind.params();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let texture = Texture::new(rng.random(), rng.random_range(6.0..9.0));
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let camera = (params.camera_speed * heading.cos(), params.camera_speed * heading.sin());

    // blob: a few overlapping ellipses around a moving center
    let lobes: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|i| {
            let off = if i == 0 { 0.0 } else { params.radius.0 * 0.6 };
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            (
                off * a.cos(),
                off * a.sin(),
                rng.random_range(params.radius.0..params.radius.1),
                rng.random_range(params.radius.0..params.radius.1),
            )
        })
        .collect();
    let max_radius = lobes.iter().map(|l| l.0.abs().max(l.1.abs()) + l.2.max(l.3)).fold(0.0, f64::max);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let margin_x = max_radius.min(w / 2.0 - 1.0);
    let margin_y = max_radius.min(h / 2.0 - 1.0);

    let mut center = (
        rng.random_range(margin_x..=w - margin_x),
        rng.random_range(margin_y..=h - margin_y),
    );
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    let mut vel = (params.mask_speed * a.cos(), params.mask_speed * a.sin());

    let mut frames = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        frames.push(translated_texture(
            &texture,
            spec.width,
            spec.height,
            camera.0 * t as f64,
            camera.1 * t as f64,
            t,
        ));
        let c = center;
        masks.push(
            Mask::from_fn(spec.width, spec.height, t, |x, y| {
                lobes.iter().any(|&(ox, oy, rx, ry)| {
                    let dx = (x as f64 - c.0 - ox) / rx;
                    let dy = (y as f64 - c.1 - oy) / ry;
                    dx * dx + dy * dy <= 1.0
                })
            })
            .expect("synthetic mask dims"),
        );

        if params.jitter > 0.0 {
            vel.0 += rng.random_range(-params.jitter..=params.jitter);
            vel.1 += rng.random_range(-params.jitter..=params.jitter);
            let speed = vel.0.hypot(vel.1);
            if speed > params.mask_speed {
                vel = (vel.0 * params.mask_speed / speed, vel.1 * params.mask_speed / speed);
            }
        }
        center = (center.0 + vel.0, center.1 + vel.1);
        if center.0 < margin_x || center.0 > w - margin_x {
            vel.0 = -vel.0;
            center.0 = center.0.clamp(margin_x, w - margin_x);
        }
        if center.1 < margin_y || center.1 > h - margin_y {
            vel.1 = -vel.1;
            center.1 = center.1.clamp(margin_y, h - margin_y);
        }
    }
    Video::new(format!("{}-{}", spec.kind, spec.seed), frames, masks).expect("synthetic video is consistent")
}
