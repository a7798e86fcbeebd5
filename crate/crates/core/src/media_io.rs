//! Binary PGM/PPM frame and mask sequences.
//!
//! The on-disk layout is `<root>/frames/%05d.ppm` and `<root>/masks/%05d.pgm`.
//! Only 8-bit binary Netpbm (P5/P6, maxval 255) is accepted.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{Frame, Mask, Video, MIN_DIM};

pub const DEFAULT_FRAME_PATTERN: &str = "frames/%05d.ppm";
pub const DEFAULT_MASK_PATTERN: &str = "masks/%05d.pgm";

/// A numbered frame/mask sequence on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSource {
    pub root_path: PathBuf,
    pub frame_pattern: String,
    pub mask_pattern: String,
    pub start_index: usize,
    pub end_index: usize,
}

impl SequenceSource {
    /// Default layout with an explicit inclusive index range.
    pub fn new(root: impl Into<PathBuf>, start_index: usize, end_index: usize) -> Self {
        SequenceSource {
            root_path: root.into(),
            frame_pattern: DEFAULT_FRAME_PATTERN.to_string(),
            mask_pattern: DEFAULT_MASK_PATTERN.to_string(),
            start_index,
            end_index,
        }
    }

    /// Default layout with the index range taken from the numbered files in
    /// `<root>/frames`.
    pub fn discover(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let frames_dir = root.join("frames");
        if !root.join("masks").is_dir() {
            return Err(Error::FileMissing(root.join("masks")));
        }
        let entries = fs::read_dir(&frames_dir).map_err(|_| Error::FileMissing(frames_dir.clone()))?;
        let mut indices: Vec<usize> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let path = e.path();
                let ext = path.extension()?.to_str()?;
                if ext != "ppm" && ext != "pgm" {
                    return None;
                }
                path.file_stem()?.to_str()?.parse().ok()
            })
            .collect();
        indices.sort_unstable();
        match (indices.first(), indices.last()) {
            (Some(&s), Some(&e)) => Ok(Self::new(root, s, e)),
            _ => Err(Error::FileMissing(frames_dir.join(format_index(DEFAULT_FRAME_PATTERN, 0)))),
        }
    }

    pub fn len(&self) -> usize {
        self.end_index + 1 - self.start_index
    }

    pub fn is_empty(&self) -> bool {
        self.end_index < self.start_index
    }

    pub fn frame_path(&self, t: usize) -> PathBuf {
        self.root_path.join(format_index(&self.frame_pattern, t))
    }

    pub fn mask_path(&self, t: usize) -> PathBuf {
        self.root_path.join(format_index(&self.mask_pattern, t))
    }

    fn check_range(&self, t: usize, path: PathBuf) -> Result<PathBuf> {
        if t < self.start_index || t > self.end_index {
            return Err(Error::FileMissing(path));
        }
        Ok(path)
    }
}

/// Expand the first `%d` / `%0Nd` conversion in `pattern`.
pub fn format_index(pattern: &str, t: usize) -> String {
    let Some(start) = pattern.find('%') else {
        return pattern.to_string();
    };
    let rest = &pattern[start + 1..];
    let Some(d) = rest.find('d') else {
        return pattern.to_string();
    };
    let spec = &rest[..d];
    let width: usize = spec.trim_start_matches('0').parse().unwrap_or(0);
    format!("{}{:0width$}{}", &pattern[..start], t, &rest[d + 1..], width = width)
}

pub fn read_frame(source: &SequenceSource, t: usize) -> Result<Frame> {
    let path = source.check_range(t, source.frame_path(t))?;
    read_frame_file(&path, t)
}

pub fn read_mask(source: &SequenceSource, t: usize) -> Result<Mask> {
    let path = source.check_range(t, source.mask_path(t))?;
    read_mask_file(&path, t)
}

/// Load every frame and mask of `source` into memory.
pub fn load_video(source: &SequenceSource, id: impl Into<String>) -> Result<Video> {
    let range: Vec<usize> = (source.start_index..=source.end_index).collect();
    let frames = crate::par::try_map_range(range.len(), |i| read_frame(source, range[i]))?;
    let masks = crate::par::try_map_range(range.len(), |i| read_mask(source, range[i]))?;
    Video::new(id, frames, masks)
}

/// Write `video` in the default layout under `root`.
pub fn save_video(video: &Video, root: &Path) -> Result<SequenceSource> {
    for (f, m) in video.frames().iter().zip(video.masks()) {
        write_frame(f, &root.join(format_index(DEFAULT_FRAME_PATTERN, f.index())))?;
        write_mask(m, &root.join(format_index(DEFAULT_MASK_PATTERN, m.index())))?;
    }
    Ok(SequenceSource::new(root, video.start_index(), video.end_index()))
}

struct Pnm {
    magic: u8,
    width: usize,
    height: usize,
    data: Vec<u8>,
}

fn parse_pnm(path: &Path, bytes: &[u8]) -> Result<Pnm> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || bytes[0] != b'P' || (bytes[1] != b'5' && bytes[1] != b'6') {
        return Err(malformed("expected P5 or P6 magic"));
    }
    let magic = bytes[1];
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let begin = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if begin == pos {
            return Err(malformed("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[begin..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("header field out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed("missing whitespace after maxval"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxVal {
            path: path.to_path_buf(),
            maxval,
        });
    }
    let channels = if magic == b'6' { 3 } else { 1 };
    let (width, height) = (width as usize, height as usize);
    let len = width * height * channels;
    if bytes.len() < pos + len {
        return Err(malformed("truncated raster"));
    }
    Ok(Pnm {
        magic,
        width,
        height,
        data: bytes[pos..pos + len].to_vec(),
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileMissing(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

/// Read a P5 (gray) or P6 (RGB) file as a frame with temporal index `t`.
pub fn read_frame_file(path: &Path, t: usize) -> Result<Frame> {
    let pnm = parse_pnm(path, &read_bytes(path)?)?;
    let channels = if pnm.magic == b'6' { 3 } else { 1 };
    Frame::new(pnm.width, pnm.height, channels, pnm.data, t)
}

/// Read a P5 file as a binary mask (samples `>= 128` become 1).
pub fn read_mask_file(path: &Path, t: usize) -> Result<Mask> {
    let pnm = parse_pnm(path, &read_bytes(path)?)?;
    if pnm.magic != b'5' {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "masks must be P5".into(),
        });
    }
    Mask::from_gray(pnm.width, pnm.height, &pnm.data, t)
}

fn write_pnm(path: &Path, magic: &str, width: usize, height: usize, data: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(file, "{magic}\n{width} {height}\n255\n")
        .and_then(|_| file.write_all(data))
        .map_err(|e| Error::io(path, e))
}

/// Write as P5 or P6 depending on the channel count. Parent directories are created.
pub fn write_frame(frame: &Frame, path: &Path) -> Result<()> {
    let magic = if frame.channels() == 3 { "P6" } else { "P5" };
    write_pnm(path, magic, frame.width(), frame.height(), frame.data())
}

/// Write as P5 with 1-pixels stored as 255.
pub fn write_mask(mask: &Mask, path: &Path) -> Result<()> {
    let data: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    write_pnm(path, "P5", mask.width(), mask.height(), &data)
}

/// Bilinear resize with pixel-center alignment and edge clamping.
///
/// Output samples are rounded half-up.
pub fn resize_bilinear(frame: &Frame, new_width: usize, new_height: usize) -> Result<Frame> {
    if new_width < MIN_DIM || new_height < MIN_DIM {
        return Err(Error::DimensionTooSmall {
            width: new_width,
            height: new_height,
        });
    }
    let data = resize_plane_bilinear(
        frame.data(),
        frame.width(),
        frame.height(),
        frame.channels(),
        new_width,
        new_height,
    );
    Frame::new(new_width, new_height, frame.channels(), data, frame.index())
}

fn source_coord(d: usize, src: usize, dst: usize) -> f64 {
    ((d as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64)
}

pub(crate) fn resize_plane_bilinear(
    data: &[u8],
    width: usize,
    height: usize,
    channels: usize,
    new_width: usize,
    new_height: usize,
) -> Vec<u8> {
    let xs: Vec<(usize, usize, f64)> = (0..new_width)
        .map(|x| {
            let sx = source_coord(x, width, new_width);
            let x0 = sx.floor() as usize;
            (x0, (x0 + 1).min(width - 1), sx - x0 as f64)
        })
        .collect();
    let mut out = vec![0u8; new_width * new_height * channels];
    crate::par::for_each_row(&mut out, new_width * channels, |y, row| {
        let sy = source_coord(y, height, new_height);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(height - 1);
        let fy = sy - y0 as f64;
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..channels {
                let at = |xx: usize, yy: usize| data[(yy * width + xx) * channels + c] as f64;
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                let v = top * (1.0 - fy) + bot * fy;
                row[x * channels + c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    });
    out
}

/// Nearest-neighbor resize for masks, which keeps them binary.
pub fn resize_mask_nearest(mask: &Mask, new_width: usize, new_height: usize) -> Result<Mask> {
    let (w, h) = (mask.width(), mask.height());
    let pick = |d: usize, src: usize, dst: usize| {
        (((d as f64 + 0.5) * src as f64 / dst as f64).floor() as usize).min(src - 1)
    };
    Mask::from_fn(new_width, new_height, mask.index(), |x, y| {
        mask.get(pick(x, w, new_width), pick(y, h, new_height))
    })
}
