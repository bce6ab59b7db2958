//! Raw video input: YUV4MPEG2 decoding to luma planes, and the 2x pyramid
//! downscale used for the second feature scale.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{Result, VqaError};

/// Smallest frame side accepted from a video file.
pub const MIN_VIDEO_SIDE: usize = 16;

/// One 8-bit luminance plane, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LumaFrame {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl LumaFrame {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(VqaError::DegenerateInput(format!(
                "frame dimensions {width}x{height} are empty"
            )));
        }
        if samples.len() != width * height {
            return Err(VqaError::Shape(format!(
                "{} samples for a {width}x{height} frame",
                samples.len()
            )));
        }
        Ok(LumaFrame { width, height, samples })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&v| f64::from(v)).collect()
    }
}

/// A decoded video: at least two equally sized luma frames.
#[derive(Clone, Debug)]
pub struct VideoSequence {
    frames: Vec<LumaFrame>,
    frame_rate: f64,
    source_path: String,
}

impl VideoSequence {
    pub fn new(frames: Vec<LumaFrame>, frame_rate: f64, source_path: impl Into<String>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(VqaError::Validation(format!(
                "a video needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(VqaError::Validation(format!(
                "frame rate {frame_rate} must be positive"
            )));
        }
        let (w, h) = (frames[0].width, frames[0].height);
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.width != w || f.height != h) {
            return Err(VqaError::Shape(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                f.width, f.height
            )));
        }
        Ok(VideoSequence {
            frames,
            frame_rate,
            source_path: source_path.into(),
        })
    }

    pub fn frames(&self) -> &[LumaFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

/// Chroma layouts accepted in the `C` header tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chroma {
    C420,
    C422,
    C444,
}

impl Chroma {
    fn parse(tag: &str) -> Result<Self> {
        match tag {
            "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok(Chroma::C420),
            "422" => Ok(Chroma::C422),
            "444" => Ok(Chroma::C444),
            other if other.contains('p') || other == "mono" || other.starts_with("444alpha") => {
                Err(VqaError::UnsupportedFormat(format!("chroma/bit-depth tag C{other}")))
            }
            other => Err(VqaError::Format(format!("unknown chroma tag C{other}"))),
        }
    }

    fn chroma_bytes(self, width: usize, height: usize) -> usize {
        let (cw, ch) = match self {
            Chroma::C420 => (width.div_ceil(2), height.div_ceil(2)),
            Chroma::C422 => (width.div_ceil(2), height),
            Chroma::C444 => (width, height),
        };
        2 * cw * ch
    }

    fn tag(self) -> &'static str {
        match self {
            Chroma::C420 => "420jpeg",
            Chroma::C422 => "422",
            Chroma::C444 => "444",
        }
    }
}

/// Streaming YUV4MPEG2 reader yielding the luma plane of each frame.
pub struct Y4mReader<R> {
    inner: R,
    width: usize,
    height: usize,
    frame_rate: f64,
    chroma: Chroma,
    frame_index: usize,
    skip: Vec<u8>,
}

fn read_line<R: BufRead>(reader: &mut R, limit: usize) -> std::io::Result<Option<Vec<u8>>> {
    let mut line = Vec::new();
    let n = reader.by_ref().take(limit as u64).read_until(b'\n', &mut line)?;
    if n == 0 {
        return Ok(None);
    }
    Ok(Some(line))
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let line = read_line(&mut inner, 4096)
            .map_err(|e| VqaError::Format(format!("reading header: {e}")))?
            .ok_or_else(|| VqaError::Format("empty stream".into()))?;
        if line.last() != Some(&b'\n') {
            return Err(VqaError::Format("header is not newline terminated".into()));
        }
        let header =
            std::str::from_utf8(&line[..line.len() - 1]).map_err(|_| VqaError::Format("header is not ASCII".into()))?;
        let mut tokens = header.split(' ').filter(|t| !t.is_empty());
        if tokens.next() != Some("YUV4MPEG2") {
            return Err(VqaError::Format("missing YUV4MPEG2 signature".into()));
        }

        let mut width = None;
        let mut height = None;
        let mut frame_rate = None;
        let mut chroma = Chroma::C420;
        for token in tokens {
            if !token.is_char_boundary(1) {
                return Err(VqaError::Format(format!("unknown header tag {token:?}")));
            }
            let (key, value) = token.split_at(1);
            match key {
                "W" => width = Some(parse_dim(value, "width")?),
                "H" => height = Some(parse_dim(value, "height")?),
                "F" => frame_rate = Some(parse_rate(value)?),
                "C" => chroma = Chroma::parse(value)?,
                // interlacing, aspect and extension tags carry nothing we use
                "I" | "A" | "X" => {}
                _ => return Err(VqaError::Format(format!("unknown header tag {token:?}"))),
            }
        }
        let width = width.ok_or_else(|| VqaError::Format("header lacks W".into()))?;
        let height = height.ok_or_else(|| VqaError::Format("header lacks H".into()))?;
        let frame_rate = frame_rate.ok_or_else(|| VqaError::Format("header lacks F".into()))?;

        Ok(Y4mReader {
            inner,
            width,
            height,
            frame_rate,
            chroma,
            frame_index: 0,
            skip: vec![0; chroma.chroma_bytes(width, height)],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn chroma(&self) -> Chroma {
        self.chroma
    }

    /// Reads the next frame; `Ok(None)` at a clean end of stream.
    pub fn next_frame(&mut self) -> Result<Option<LumaFrame>> {
        let frame = self.frame_index;
        let line = match read_line(&mut self.inner, 1024) {
            Ok(None) => return Ok(None),
            Ok(Some(line)) => line,
            Err(e) => return Err(VqaError::Format(format!("frame {frame} header: {e}"))),
        };
        if !line.starts_with(b"FRAME") {
            return Err(VqaError::Format(format!("frame {frame} lacks FRAME marker")));
        }
        if line.last() != Some(&b'\n') {
            return Err(VqaError::Truncated { frame });
        }

        let mut luma = vec![0u8; self.width * self.height];
        read_payload(&mut self.inner, &mut luma, frame)?;
        read_payload(&mut self.inner, &mut self.skip, frame)?;
        self.frame_index += 1;
        LumaFrame::new(self.width, self.height, luma).map(Some)
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<LumaFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

fn read_payload<R: Read>(reader: &mut R, buf: &mut [u8], frame: usize) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => VqaError::Truncated { frame },
        _ => VqaError::Format(format!("frame {frame}: {e}")),
    })
}

fn parse_dim(value: &str, what: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(VqaError::Format(format!("bad {what} {value:?}"))),
    }
}

fn parse_rate(value: &str) -> Result<f64> {
    let bad = || VqaError::Format(format!("bad frame rate {value:?}"));
    let (num, den) = value.split_once(':').ok_or_else(bad)?;
    let num: u64 = num.parse().map_err(|_| bad())?;
    let den: u64 = den.parse().map_err(|_| bad())?;
    if num == 0 || den == 0 {
        return Err(bad());
    }
    Ok(num as f64 / den as f64)
}

/// Opens a Y4M file for streaming frame access.
pub fn open_y4m(path: impl AsRef<Path>) -> Result<Y4mReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| VqaError::io(path, e))?;
    let reader = Y4mReader::new(BufReader::with_capacity(1 << 20, file))?;
    check_video_dims(reader.width(), reader.height())?;
    Ok(reader)
}

pub(crate) fn check_video_dims(width: usize, height: usize) -> Result<()> {
    if width < MIN_VIDEO_SIDE || height < MIN_VIDEO_SIDE {
        return Err(VqaError::UnsupportedFormat(format!(
            "{width}x{height} video; both sides must be at least {MIN_VIDEO_SIDE}"
        )));
    }
    Ok(())
}

/// Loads every luma plane of a Y4M file.
pub fn load_y4m(path: impl AsRef<Path>) -> Result<VideoSequence> {
    let path = path.as_ref();
    let mut reader = open_y4m(path)?;
    let mut frames = Vec::new();
    while let Some(frame) = reader.next_frame()? {
        frames.push(frame);
    }
    VideoSequence::new(frames, reader.frame_rate(), path.display().to_string())
}

/// Writes a sequence as Y4M with neutral chroma.
pub fn write_y4m<W: Write>(mut out: W, video: &VideoSequence, chroma: Chroma) -> std::io::Result<()> {
    let (num, den) = rate_fraction(video.frame_rate());
    writeln!(
        out,
        "YUV4MPEG2 W{} H{} F{num}:{den} Ip A1:1 C{}",
        video.width(),
        video.height(),
        chroma.tag()
    )?;
    let neutral = vec![128u8; chroma.chroma_bytes(video.width(), video.height())];
    for frame in video.frames() {
        out.write_all(b"FRAME\n")?;
        out.write_all(frame.samples())?;
        out.write_all(&neutral)?;
    }
    out.flush()
}

pub fn save_y4m(path: impl AsRef<Path>, video: &VideoSequence, chroma: Chroma) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| VqaError::io(path, e))?;
    write_y4m(BufWriter::new(file), video, chroma).map_err(|e| VqaError::io(path, e))
}

fn rate_fraction(rate: f64) -> (u64, u64) {
    if (rate - rate.round()).abs() < 1e-9 {
        (rate.round() as u64, 1)
    } else {
        ((rate * 1001.0).round() as u64, 1001)
    }
}

/// Half-sample symmetric reflection of an index into `0..n`.
#[inline]
pub(crate) fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

const BINOMIAL5: [u32; 5] = [1, 4, 6, 4, 1];

/// Binomial low-pass followed by decimation to even rows and columns.
pub fn downscale_by_2(frame: &LumaFrame) -> Result<LumaFrame> {
    let (w, h) = (frame.width, frame.height);
    if w < 2 || h < 2 {
        return Err(VqaError::DegenerateInput(format!("cannot halve a {w}x{h} frame")));
    }
    let (ow, oh) = (w / 2, h / 2);

    let col_taps: Vec<[usize; 5]> = (0..ow).map(|ox| taps(2 * ox, w)).collect();
    let mut rows = vec![0u32; ow * h];
    for y in 0..h {
        let src = &frame.samples[y * w..(y + 1) * w];
        let dst = &mut rows[y * ow..(y + 1) * ow];
        for (d, t) in dst.iter_mut().zip(&col_taps) {
            *d = t.iter().zip(BINOMIAL5).map(|(&x, k)| k * u32::from(src[x])).sum();
        }
    }

    let mut samples = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        let rt = taps(2 * oy, h);
        for ox in 0..ow {
            let acc: u32 = rt.iter().zip(BINOMIAL5).map(|(&y, k)| k * rows[y * ow + ox]).sum();
            samples.push(((acc + 128) >> 8).min(255) as u8);
        }
    }
    LumaFrame::new(ow, oh, samples)
}

fn taps(center: usize, n: usize) -> [usize; 5] {
    let c = center as isize;
    [
        reflect(c - 2, n),
        reflect(c - 1, n),
        reflect(c, n),
        reflect(c + 1, n),
        reflect(c + 2, n),
    ]
}
