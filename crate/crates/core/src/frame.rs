//! Frames, masks, flow fields and sequence windows.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared freely across threads.

use crate::error::{Error, Result};

/// Smallest accepted width or height.
pub const MIN_DIM: usize = 8;

/// An 8-bit gray or RGB image at a temporal position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
    index: usize,
}

impl Frame {
    /// `data` is row-major and channel-interleaved.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>, index: usize) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidFrame(format!("{channels} channels (expected 1 or 3)")));
        }
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::DimensionTooSmall { width, height });
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidFrame(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            channels,
            data,
            index,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8, index: usize) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels], index)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn index(&self) -> usize {
        self.index
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }
    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    /// Samples of pixel `p` (row-major pixel offset).
    pub fn pixel(&self, p: usize) -> &[u8] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    /// Luma plane in 64-bit floats (0.299 R + 0.587 G + 0.114 B for RGB).
    pub fn luma(&self) -> Vec<f64> {
        match self.channels {
            1 => self.data.iter().map(|&v| v as f64).collect(),
            _ => self
                .data
                .chunks_exact(3)
                .map(|c| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64)
                .collect(),
        }
    }

    /// Copy with every masked pixel set to zero, as handed to an inpainter.
    pub fn blanked(&self, mask: &Mask) -> Result<Frame> {
        check_same_dims(self.width, self.height, mask.width(), mask.height(), "frame vs mask")?;
        let mut data = self.data.clone();
        for (p, &m) in mask.data().iter().enumerate() {
            if m == 1 {
                data[p * self.channels..(p + 1) * self.channels].fill(0);
            }
        }
        Ok(Frame { data, ..self.clone() })
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// A binary mask; 1 marks pixels to be inpainted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
    index: usize,
    size: usize,
}

impl Mask {
    /// `data` must contain only 0 and 1.
    pub fn new(width: usize, height: usize, data: Vec<u8>, index: usize) -> Result<Self> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::DimensionTooSmall { width, height });
        }
        if data.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "mask length {} != {width}x{height}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidFrame(format!("mask value {bad} is not binary")));
        }
        let size = data.iter().filter(|&&v| v == 1).count();
        Ok(Mask {
            width,
            height,
            data,
            index,
            size,
        })
    }

    /// Binarize gray samples: `>= 128` becomes 1.
    pub fn from_gray(width: usize, height: usize, gray: &[u8], index: usize) -> Result<Self> {
        Self::new(width, height, gray.iter().map(|&v| u8::from(v >= 128)).collect(), index)
    }

    pub fn empty(width: usize, height: usize, index: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height], index)
    }

    pub fn from_fn(width: usize, height: usize, index: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| u8::from(f(x, y)))
            .collect();
        Self::new(width, height, data, index)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn index(&self) -> usize {
        self.index
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Number of 1-pixels.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        check_same_dims(self.width, self.height, other.width, other.height, "mask union")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect();
        Mask::new(self.width, self.height, data, self.index)
    }

    /// Square (Chebyshev) dilation by `radius` pixels.
    pub fn dilate(&self, radius: usize) -> Mask {
        if radius == 0 || self.size == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        // separable: horizontal pass then vertical pass
        let mut tmp = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                tmp[y * w + x] = u8::from(self.data[y * w + lo..=y * w + hi].contains(&1));
            }
        }
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            for x in 0..w {
                out[y * w + x] = u8::from((lo..=hi).any(|yy| tmp[yy * w + x] == 1));
            }
        }
        Mask::new(w, h, out, self.index).expect("dilation preserves shape")
    }
}

/// Dense per-pixel displacement field in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "flow planes of length {}/{} for {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidFrame("flow contains non-finite values".into()));
        }
        Ok(FlowField { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Result<Self> {
        Self::new(width, height, vec![u; width * height], vec![v; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn v(&self) -> &[f64] {
        &self.v
    }
    pub fn into_planes(self) -> (Vec<f64>, Vec<f64>) {
        (self.u, self.v)
    }

    pub fn magnitude(&self, p: usize) -> f64 {
        self.u[p].hypot(self.v[p])
    }

    /// Bilinear sample at a real-valued position, clamped to the field.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        (
            bilinear(&self.u, self.width, self.height, x, y),
            bilinear(&self.v, self.width, self.height, x, y),
        )
    }
}

/// Clamped bilinear sample of a single plane.
pub(crate) fn bilinear(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

pub(crate) fn check_same_dims(w0: usize, h0: usize, w1: usize, h1: usize, what: &str) -> Result<()> {
    if w0 != w1 || h0 != h1 {
        return Err(Error::DimensionMismatch(format!("{what}: {w0}x{h0} vs {w1}x{h1}")));
    }
    Ok(())
}

/// Frames and masks around a target frame.
#[derive(Debug, Clone)]
pub struct SequenceWindow {
    frames: Vec<Frame>,
    masks: Vec<Mask>,
    target_index: usize,
}

impl SequenceWindow {
    pub fn new(frames: Vec<Frame>, masks: Vec<Mask>, target_index: usize) -> Result<Self> {
        let window = SequenceWindow {
            frames,
            masks,
            target_index,
        };
        validate_window(&window)?;
        Ok(window)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }
    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }
    pub fn target_index(&self) -> usize {
        self.target_index
    }

    /// Position of `index` in the window, if present.
    pub fn position(&self, index: usize) -> Option<usize> {
        self.frames.binary_search_by_key(&index, Frame::index).ok()
    }
}

/// Check every [`SequenceWindow`] invariant.
pub fn validate_window(window: &SequenceWindow) -> Result<()> {
    let frames = &window.frames;
    let masks = &window.masks;
    let Some(first) = frames.first() else {
        return Err(Error::MissingTarget(window.target_index));
    };
    if masks.len() != frames.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames but {} masks",
            frames.len(),
            masks.len()
        )));
    }
    for (i, (f, m)) in frames.iter().zip(masks).enumerate() {
        check_same_dims(first.width, first.height, f.width, f.height, &format!("frame {i}"))?;
        check_same_dims(first.width, first.height, m.width, m.height, &format!("mask {i}"))?;
        if m.index != f.index {
            return Err(Error::DimensionMismatch(format!(
                "mask index {} not aligned with frame index {}",
                m.index, f.index
            )));
        }
        if i > 0 && f.index <= frames[i - 1].index {
            return Err(Error::NonMonotonicIndices { position: i });
        }
    }
    if !frames.iter().any(|f| f.index == window.target_index) {
        return Err(Error::MissingTarget(window.target_index));
    }
    Ok(())
}

/// A whole contiguous sequence of frames with aligned masks.
#[derive(Debug, Clone)]
pub struct Video {
    id: String,
    frames: Vec<Frame>,
    masks: Vec<Mask>,
}

impl Video {
    /// Frames must have consecutive indices and share one size.
    pub fn new(id: impl Into<String>, frames: Vec<Frame>, masks: Vec<Mask>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::InvalidFrame("video has no frames".into()));
        };
        let target = first.index;
        let window = SequenceWindow {
            frames,
            masks,
            target_index: target,
        };
        validate_window(&window)?;
        let SequenceWindow { frames, masks, .. } = window;
        if let Some(i) = (1..frames.len()).find(|&i| frames[i].index != frames[i - 1].index + 1) {
            return Err(Error::NonMonotonicIndices { position: i });
        }
        Ok(Video {
            id: id.into(),
            frames,
            masks,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }
    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }
    pub fn len(&self) -> usize {
        self.frames.len()
    }
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
    pub fn width(&self) -> usize {
        self.frames[0].width
    }
    pub fn height(&self) -> usize {
        self.frames[0].height
    }
    pub fn start_index(&self) -> usize {
        self.frames[0].index
    }
    pub fn end_index(&self) -> usize {
        self.frames[self.frames.len() - 1].index
    }

    /// Frame at temporal index `t`.
    pub fn frame(&self, t: usize) -> Option<&Frame> {
        t.checked_sub(self.start_index()).and_then(|i| self.frames.get(i))
    }

    pub fn mask(&self, t: usize) -> Option<&Mask> {
        t.checked_sub(self.start_index()).and_then(|i| self.masks.get(i))
    }

    /// Copy with every frame blanked under its own mask.
    pub fn corrupted(&self) -> Video {
        let frames = self
            .frames
            .iter()
            .zip(&self.masks)
            .map(|(f, m)| f.blanked(m).expect("video dims validated"))
            .collect();
        Video {
            id: self.id.clone(),
            frames,
            masks: self.masks.clone(),
        }
    }

    /// Window over the inclusive index range `[first, last]` targeting `target`.
    pub fn window(&self, first: usize, last: usize, target: usize) -> Result<SequenceWindow> {
        let (s, e) = (self.start_index(), self.end_index());
        if first < s || last > e || first > last {
            return Err(Error::InsufficientHistory(format!(
                "window [{first}, {last}] outside video range [{s}, {e}]"
            )));
        }
        let (a, b) = (first - s, last - s + 1);
        SequenceWindow::new(self.frames[a..b].to_vec(), self.masks[a..b].to_vec(), target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: usize, h: usize, index: usize) -> Frame {
        Frame::filled(w, h, 3, 7, index).unwrap()
    }

    fn window(dims: &[(usize, usize)], indices: &[usize], target: usize) -> Result<SequenceWindow> {
        let frames = dims.iter().zip(indices).map(|(&(w, h), &i)| frame(w, h, i)).collect();
        let masks = dims
            .iter()
            .zip(indices)
            .map(|(&(w, h), &i)| Mask::empty(w, h, i).unwrap())
            .collect();
        SequenceWindow::new(frames, masks, target)
    }

    #[test]
    fn valid_window() {
        let dims = vec![(420, 240); 8];
        let idx: Vec<usize> = (10..18).collect();
        assert!(window(&dims, &idx, 17).is_ok());
    }

    #[test]
    fn one_small_frame_is_rejected() {
        let mut dims = vec![(420, 240); 8];
        dims[3] = (100, 100);
        let idx: Vec<usize> = (0..8).collect();
        assert!(matches!(window(&dims, &idx, 7), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn repeated_index_is_rejected() {
        let dims = vec![(16, 16); 3];
        assert!(matches!(
            window(&dims, &[3, 3, 4], 4),
            Err(Error::NonMonotonicIndices { position: 1 })
        ));
    }

    #[test]
    fn missing_target() {
        let dims = vec![(16, 16); 3];
        assert!(matches!(window(&dims, &[1, 2, 3], 9), Err(Error::MissingTarget(9))));
    }

    #[test]
    fn construction_rejects_bad_data() {
        assert!(Frame::new(8, 8, 3, vec![0; 10], 0).is_err());
        assert!(Frame::new(8, 8, 2, vec![0; 128], 0).is_err());
        assert!(matches!(
            Frame::new(7, 8, 1, vec![0; 56], 0),
            Err(Error::DimensionTooSmall { .. })
        ));
        assert!(Mask::new(8, 8, vec![2; 64], 0).is_err());
        assert!(FlowField::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0], vec![0.0; 4]).is_err());
    }

    #[test]
    fn mask_threshold_and_size() {
        let mut gray = vec![0u8; 64];
        gray[0] = 127;
        gray[1] = 128;
        gray[2] = 255;
        let m = Mask::from_gray(8, 8, &gray, 0).unwrap();
        assert_eq!(m.data()[..3], [0, 1, 1]);
        assert_eq!(m.size(), 2);
    }

    #[test]
    fn dilation_grows_square() {
        let m = Mask::from_fn(16, 16, 0, |x, y| x == 8 && y == 8).unwrap();
        let d = m.dilate(2);
        assert_eq!(d.size(), 25);
        assert!(d.get(6, 6) && d.get(10, 10) && !d.get(11, 8));
    }

    #[test]
    fn blanking_zeroes_masked_pixels_only() {
        let f = Frame::filled(8, 8, 3, 200, 0).unwrap();
        let m = Mask::from_fn(8, 8, 0, |x, _| x < 2).unwrap();
        let b = f.blanked(&m).unwrap();
        assert_eq!(b.pixel(0), &[0, 0, 0]);
        assert_eq!(b.pixel(2), &[200, 200, 200]);
    }

    #[test]
    fn rgb_luma() {
        let mut data = vec![0u8; 64 * 3];
        data[0] = 255;
        let f = Frame::new(8, 8, 3, data, 0).unwrap();
        assert!((f.luma()[0] - 0.299 * 255.0).abs() < 1e-12);
    }
}
