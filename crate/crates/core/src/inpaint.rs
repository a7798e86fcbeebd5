//! Inpainter boundary: a flow-guided propagation baseline and a file-based
//! adapter for external processes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::configurator::InputComposition;
use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame, Mask};
use crate::harmonic::HarmonicSolver;
use crate::media_io::{format_index, read_frame_file, write_frame, write_mask};

/// Inputs for inpainting one target.
#[derive(Debug, Clone)]
pub struct InpaintRequest<'a> {
    pub composition: &'a InputComposition,
    /// Input frames, blanked under their masks, keyed by temporal index.
    /// Holds at least every index of the composition.
    pub frames: BTreeMap<usize, &'a Frame>,
    pub masks: BTreeMap<usize, &'a Mask>,
    /// Completed backward flows keyed by the later index: `flows[t]` maps
    /// pixels of frame `t` into frame `t - 1`.
    pub flows: BTreeMap<usize, &'a FlowField>,
}

impl<'a> InpaintRequest<'a> {
    fn target(&self) -> Result<(&'a Frame, &'a Mask)> {
        let t = self.composition.target;
        match (self.frames.get(&t), self.masks.get(&t)) {
            (Some(f), Some(m)) => Ok((f, m)),
            _ => Err(Error::MissingTarget(t)),
        }
    }

    fn input(&self, t: usize) -> Result<(&'a Frame, &'a Mask)> {
        match (self.frames.get(&t), self.masks.get(&t)) {
            (Some(f), Some(m)) => Ok((f, m)),
            _ => Err(Error::InsufficientHistory(format!("input frame {t} not supplied"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintOutput {
    pub frame: Frame,
    /// No masked pixel could be taken from any input; the fill is diffusion only.
    pub no_source: bool,
}

pub trait Inpainter: Sync {
    fn inpaint(&self, request: &InpaintRequest<'_>) -> Result<InpaintOutput>;
}

/// Flow-guided propagation from neighbors, zero-motion copy from
/// references, then harmonic fill of whatever is left.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineInpainter {
    pub solver: HarmonicSolver,
}

impl Inpainter for BaselineInpainter {
    fn inpaint(&self, request: &InpaintRequest<'_>) -> Result<InpaintOutput> {
        let (target, mask) = request.target()?;
        if mask.is_empty() {
            return Ok(InpaintOutput {
                frame: target.clone(),
                no_source: false,
            });
        }
        let t = request.composition.target;
        let (w, h, c) = (target.width(), target.height(), target.channels());
        for i in request.composition.indices() {
            let (f, _) = request.input(i)?;
            if !f.same_dims(target) || f.channels() != c {
                return Err(Error::DimensionMismatch(format!("input {i} vs target {t}")));
            }
        }

        let mut out: Vec<f64> = target.data().iter().map(|&v| v as f64).collect();
        let mut holes: Vec<usize> = (0..w * h).filter(|&p| mask.data()[p] == 1).collect();
        let hole_count = holes.len();

        // 1. chained backward warps through consecutive neighbors, nearest first
        let chain: Vec<usize> = request
            .composition
            .neighboring
            .iter()
            .rev()
            .copied()
            .filter(|&i| i < t)
            .collect();
        let mut steps: Vec<(&FlowField, &Frame, &Mask)> = Vec::new();
        let mut warped = Vec::new();
        let mut later = t;
        for &i in &chain {
            if i + 1 != later {
                break;
            }
            let Some(flow) = request.flows.get(&later) else {
                break;
            };
            let (f, m) = request.input(i)?;
            steps.push((flow, f, m));
            warped.push(i);
            later = i;
        }
        if !steps.is_empty() {
            holes.retain(|&p| {
                let (mut x, mut y) = ((p % w) as f64, (p / w) as f64);
                for &(flow, frame, m) in &steps {
                    let (u, v) = flow.sample(x, y);
                    x += u;
                    y += v;
                    if !(0.0..=(w - 1) as f64).contains(&x) || !(0.0..=(h - 1) as f64).contains(&y) {
                        return true;
                    }
                    if let Some(px) = sample_valid(frame, m, x, y) {
                        out[p * c..(p + 1) * c].copy_from_slice(&px[..c]);
                        return false;
                    }
                }
                true
            });
        }

        // 2. zero-motion copy: forward neighbors, then references, nearest first
        let mut direct: Vec<usize> = request
            .composition
            .neighboring
            .iter()
            .chain(&request.composition.reference)
            .copied()
            .filter(|&i| i != t && !warped.contains(&i))
            .collect();
        direct.sort_by_key(|&i| (i.abs_diff(t), i));
        for i in direct {
            if holes.is_empty() {
                break;
            }
            let (f, m) = request.input(i)?;
            holes.retain(|&p| {
                if m.data()[p] == 1 {
                    return true;
                }
                for k in 0..c {
                    out[p * c + k] = f.data()[p * c + k] as f64;
                }
                false
            });
        }

        // 3. harmonic fill of the remaining holes
        let no_source = holes.len() == hole_count;
        if !holes.is_empty() {
            let mut unknown = vec![false; w * h];
            for &p in &holes {
                unknown[p] = true;
            }
            let mut plane = vec![0.0; w * h];
            for k in 0..c {
                for p in 0..w * h {
                    plane[p] = out[p * c + k];
                }
                self.solver.solve(&mut plane, w, h, &unknown)?;
                for &p in &holes {
                    out[p * c + k] = plane[p];
                }
            }
            if no_source {
                log::warn!("target {t}: no input pixel covers the mask; diffusion-only fill");
            }
        }

        let data = out
            .iter()
            .zip(target.data())
            .enumerate()
            .map(|(i, (&v, &orig))| {
                if mask.data()[i / c] == 1 {
                    (v + 0.5).floor().clamp(0.0, 255.0) as u8
                } else {
                    orig
                }
            })
            .collect();
        Ok(InpaintOutput {
            frame: Frame::new(w, h, c, data, t)?,
            no_source,
        })
    }
}

/// Bilinear sample of `frame` at `(x, y)` if every tap with positive weight
/// is inside the frame and unmasked.
fn sample_valid(frame: &Frame, mask: &Mask, x: f64, y: f64) -> Option<[f64; 3]> {
    let (w, h, c) = (frame.width(), frame.height(), frame.channels());
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let mut acc = [0.0; 3];
    for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            let wgt = wx * wy;
            if wgt <= 0.0 {
                continue;
            }
            let (xx, yy) = (x0 + dx, y0 + dy);
            if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                return None;
            }
            let p = yy as usize * w + xx as usize;
            if mask.data()[p] == 1 {
                return None;
            }
            for (k, a) in acc.iter_mut().enumerate().take(c) {
                *a += wgt * frame.data()[p * c + k] as f64;
            }
        }
    }
    Some(acc)
}

/// Runs an external command on a job directory.
///
/// The directory holds `composition.json`, `frames/%05d.ppm` and
/// `masks/%05d.pgm` for every input index; the command receives the
/// directory as its last argument and must write `output.ppm`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalInpainter {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

pub const JOB_COMPOSITION: &str = "composition.json";
pub const JOB_OUTPUT: &str = "output.ppm";

impl ExternalInpainter {
    pub fn new(command: &[String], timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidConfig("empty external command".into()))?;
        Ok(ExternalInpainter {
            program: program.clone(),
            args: args.to_vec(),
            timeout,
        })
    }

    /// Write the job directory for `request` into `dir`.
    pub fn write_job(request: &InpaintRequest<'_>, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(request.composition)
            .map_err(|e| Error::InvalidConfig(format!("composition json: {e}")))?;
        let path = dir.join(JOB_COMPOSITION);
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        for t in request.composition.indices() {
            let (f, m) = request.input(t)?;
            write_frame(f, &dir.join(format_index(crate::media_io::DEFAULT_FRAME_PATTERN, t)))?;
            write_mask(m, &dir.join(format_index(crate::media_io::DEFAULT_MASK_PATTERN, t)))?;
        }
        Ok(())
    }

    fn run(&self, dir: &Path) -> Result<()> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::ProcessFailure(format!("cannot start '{}': {e}", self.program)))?;
        let start = Instant::now();
        loop {
            match child.try_wait() {
                Ok(Some(status)) if status.success() => return Ok(()),
                Ok(Some(status)) => {
                    let mut stderr = String::new();
                    if let Some(mut pipe) = child.stderr.take() {
                        use std::io::Read;
                        let _ = pipe.read_to_string(&mut stderr);
                    }
                    return Err(Error::ProcessFailure(format!(
                        "'{}' exited with {status}: {}",
                        self.program,
                        stderr.trim()
                    )));
                }
                Ok(None) if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Timeout(self.timeout));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(Error::ProcessFailure(format!("waiting on '{}': {e}", self.program))),
            }
        }
    }
}

impl Inpainter for ExternalInpainter {
    fn inpaint(&self, request: &InpaintRequest<'_>) -> Result<InpaintOutput> {
        let (target, _) = request.target()?;
        let job = tempfile::Builder::new()
            .prefix("inpaint-job-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Self::write_job(request, job.path())?;
        self.run(job.path())?;
        let out_path: PathBuf = job.path().join(JOB_OUTPUT);
        if !out_path.exists() {
            return Err(Error::ProcessFailure(format!("'{}' wrote no {JOB_OUTPUT}", self.program)));
        }
        let frame = read_frame_file(&out_path, target.index())?;
        if !frame.same_dims(target) || frame.channels() != target.channels() {
            return Err(Error::DimensionMismatch(format!(
                "external output {}x{}x{} vs target {}x{}x{}",
                frame.width(),
                frame.height(),
                frame.channels(),
                target.width(),
                target.height(),
                target.channels()
            )));
        }
        Ok(InpaintOutput { frame, no_source: false })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    #[default]
    Baseline,
    External,
}

/// Serializable description of which inpainter to run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub kind: AdapterKind,
    pub external_command: Option<Vec<String>>,
    pub timeout_secs: u64,
}

impl AdapterSpec {
    pub fn build(&self) -> Result<Box<dyn Inpainter>> {
        match self.kind {
            AdapterKind::Baseline => Ok(Box::new(BaselineInpainter::default())),
            AdapterKind::External => {
                let cmd = self
                    .external_command
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("external adapter needs a command".into()))?;
                let secs = if self.timeout_secs == 0 { 300 } else { self.timeout_secs };
                Ok(Box::new(ExternalInpainter::new(cmd, Duration::from_secs(secs))?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configurator::compose;

    fn textured(w: usize, h: usize, t: usize) -> Frame {
        let data = (0..w * h * 3).map(|i| ((i * 37 + i / 7 * 11) % 251) as u8).collect();
        Frame::new(w, h, 3, data, t).unwrap()
    }

    #[test]
    fn empty_mask_is_identity() {
        let f = textured(16, 16, 9);
        let m = Mask::empty(16, 16, 9).unwrap();
        let comp = compose(9, 10, 0.5, 2, 1).unwrap();
        let others: Vec<(Frame, Mask)> = (0..10)
            .map(|t| (textured(16, 16, t), Mask::empty(16, 16, t).unwrap()))
            .collect();
        let mut req = InpaintRequest {
            composition: &comp,
            frames: others.iter().map(|(f, _)| (f.index(), f)).collect(),
            masks: others.iter().map(|(_, m)| (m.index(), m)).collect(),
            flows: BTreeMap::new(),
        };
        req.frames.insert(9, &f);
        req.masks.insert(9, &m);
        let out = BaselineInpainter::default().inpaint(&req).unwrap();
        assert_eq!(out.frame, f);
        assert!(!out.no_source);
    }

    #[test]
    fn reference_copy_restores_static_content() {
        let truth: Vec<Frame> = (0..12).map(|t| textured(16, 16, 0).with_index(t)).collect();
        let masks: Vec<Mask> = (0..12)
            .map(|t| {
                if t == 11 {
                    Mask::from_fn(16, 16, t, |x, y| (4..9).contains(&x) && (4..9).contains(&y)).unwrap()
                } else {
                    Mask::from_fn(16, 16, t, |x, _| x >= 14).unwrap()
                }
            })
            .collect();
        let observed: Vec<Frame> = truth.iter().zip(&masks).map(|(f, m)| f.blanked(m).unwrap()).collect();
        let comp = compose(11, 12, 0.5, 2, 10).unwrap();
        assert_eq!(comp.reference, vec![1]);
        let req = InpaintRequest {
            composition: &comp,
            frames: observed.iter().map(|f| (f.index(), f)).collect(),
            masks: masks.iter().map(|m| (m.index(), m)).collect(),
            flows: BTreeMap::new(),
        };
        let out = BaselineInpainter::default().inpaint(&req).unwrap();
        assert_eq!(out.frame.data(), truth[11].data());
    }

    #[test]
    fn fully_hidden_content_is_diffused_and_flagged() {
        let mask = Mask::from_fn(16, 16, 1, |x, y| (5..10).contains(&x) && (5..10).contains(&y)).unwrap();
        let prev_mask = mask.clone().with_index(0);
        let f0 = Frame::filled(16, 16, 1, 80, 0).unwrap().blanked(&prev_mask).unwrap();
        let f1 = Frame::filled(16, 16, 1, 80, 1).unwrap().blanked(&mask).unwrap();
        let comp = InputComposition {
            target: 1,
            total: 2,
            r_ref: 0.5,
            reference: vec![0],
            neighboring: vec![1],
        };
        let req = InpaintRequest {
            composition: &comp,
            frames: [(0, &f0), (1, &f1)].into_iter().collect(),
            masks: [(0, &prev_mask), (1, &mask)].into_iter().collect(),
            flows: BTreeMap::new(),
        };
        let out = BaselineInpainter::default().inpaint(&req).unwrap();
        assert!(out.no_source);
        assert!(out.frame.data().iter().all(|&v| v == 80));
    }

    #[test]
    fn warp_follows_the_flow_chain() {
        // content moves +1 px in x per frame, so frame t-1 holds pixel x at x-1
        let (w, h) = (24, 12);
        let col = |x: i64| ((x * 23).rem_euclid(256)) as u8;
        let frame = |t: usize| {
            let data = (0..w * h).map(|p| col((p % w) as i64 - t as i64)).collect();
            Frame::new(w, h, 1, data, t).unwrap()
        };
        let hole = |t: usize, x0: usize| Mask::from_fn(w, h, t, |x, y| (x0..x0 + 3).contains(&x) && y < 4).unwrap();
        let masks = [hole(0, 15), hole(1, 10), hole(2, 10)];
        let truth = [frame(0), frame(1), frame(2)];
        let observed: Vec<Frame> = truth.iter().zip(&masks).map(|(f, m)| f.blanked(m).unwrap()).collect();
        let back = FlowField::uniform(w, h, -1.0, 0.0).unwrap();
        let comp = InputComposition {
            target: 2,
            total: 3,
            r_ref: 0.0,
            reference: vec![],
            neighboring: vec![0, 1, 2],
        };
        let req = InpaintRequest {
            composition: &comp,
            frames: observed.iter().map(|f| (f.index(), f)).collect(),
            masks: masks.iter().map(|m| (m.index(), m)).collect(),
            flows: [(2, &back), (1, &back)].into_iter().collect(),
        };
        let out = BaselineInpainter::default().inpaint(&req).unwrap();
        assert_eq!(out.frame.data(), truth[2].data());
        assert!(!out.no_source);
    }

    #[test]
    fn adapter_spec_requires_command() {
        let spec = AdapterSpec {
            kind: AdapterKind::External,
            ..Default::default()
        };
        assert!(spec.build().is_err());
        assert!(AdapterSpec::default().build().is_ok());
    }
}
