//! Video decoding and per-frame preprocessing.
//!
//! A source is either a video file, decoded by an external command that
//! writes raw RGB24 frames to stdout, or a directory of numbered images.
//! Frames are then sampled with `frame_index % fps == 0` (one per second at
//! the normalized rate), resized bilinearly to 224x224 and scaled to [0, 1].

use std::fs;
use std::io::{BufReader, ErrorKind, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use std::thread::JoinHandle;

use thiserror::Error;

/// Side length of the square backbone input.
pub const INPUT_SIZE: usize = 224;
pub const CHANNELS: usize = 3;
pub const DEFAULT_FPS: u32 = 30;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("decoder program {program:?} is not available: {reason}")]
    DecoderUnavailable { program: String, reason: String },
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("no frames decoded from {0}")]
    EmptyStream(PathBuf),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("expected a {expected} frame, got {actual}")]
    Shape { expected: String, actual: String },
    #[error("fps must be positive")]
    InvalidFps,
}

pub type Result<T> = std::result::Result<T, FrameError>;

/// Decoded RGB frame, row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
    pub frame_index: u64,
}

impl RawFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>, frame_index: u64) -> Result<Self> {
        if data.len() != width * height * CHANNELS {
            return Err(FrameError::InvalidFrame(format!(
                "{width}x{height}x3 frame needs {} bytes, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            frame_index,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3], frame_index: u64) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * CHANNELS)
            .collect();
        Self {
            width,
            height,
            data,
            frame_index,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// A 224x224x3 frame with values in [0, 1], HWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    values: Vec<f32>,
    pub video_id: String,
    pub frame_index: u64,
}

impl FrameTensor {
    pub const LEN: usize = INPUT_SIZE * INPUT_SIZE * CHANNELS;

    pub fn new(values: Vec<f32>, video_id: impl Into<String>, frame_index: u64) -> Result<Self> {
        if values.len() != Self::LEN {
            return Err(FrameError::Shape {
                expected: "224x224x3".into(),
                actual: format!("{} values", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FrameError::InvalidFrame(format!(
                "tensor value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            values,
            video_id: video_id.into(),
            frame_index,
        })
    }

    pub fn constant(v: f32) -> Self {
        Self::new(vec![v; Self::LEN], "", 0).expect("constant in [0, 1]")
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.values[(y * INPUT_SIZE + x) * CHANNELS + c]
    }
}

/// External decoder invocation.
///
/// `command` is split on whitespace; in each resulting argument the
/// placeholders `{input}`, `{fps}`, `{width}` and `{height}` are substituted.
/// The program must write `width * height * 3` bytes per frame to stdout.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DecoderConfig {
    pub command: String,
    pub width: usize,
    pub height: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            command: "ffmpeg -v error -i {input} -vf fps={fps},scale={width}:{height} -f rawvideo -pix_fmt rgb24 pipe:1".into(),
            width: INPUT_SIZE,
            height: INPUT_SIZE,
        }
    }
}

impl DecoderConfig {
    fn argv(&self, input: &Path, fps: u32) -> Vec<String> {
        let input = input.to_string_lossy();
        self.command
            .split_whitespace()
            .map(|tok| {
                tok.replace("{input}", &input)
                    .replace("{fps}", &fps.to_string())
                    .replace("{width}", &self.width.to_string())
                    .replace("{height}", &self.height.to_string())
            })
            .collect()
    }
}

/// Ordered frames of one source at the normalized rate.
pub struct FrameStream {
    inner: StreamInner,
    path: PathBuf,
    emitted: u64,
    finished: bool,
}

enum StreamInner {
    Directory {
        files: Vec<PathBuf>,
        source_fps: u32,
        target_fps: u32,
        len: u64,
    },
    Process {
        child: Child,
        stdout: BufReader<ChildStdout>,
        stderr: Option<JoinHandle<String>>,
        width: usize,
        height: usize,
    },
}

impl FrameStream {
    pub fn path(&self) -> &Path {
        &self.path
    }

    fn next_frame(&mut self) -> Result<Option<RawFrame>> {
        let index = self.emitted;
        match &mut self.inner {
            StreamInner::Directory {
                files,
                source_fps,
                target_fps,
                len,
            } => {
                if index >= *len {
                    return Ok(None);
                }
                let src = (index * *source_fps as u64 / *target_fps as u64) as usize;
                read_image(&files[src], index).map(Some)
            }
            StreamInner::Process {
                child,
                stdout,
                stderr,
                width,
                height,
            } => {
                let mut buf = vec![0u8; *width * *height * CHANNELS];
                let filled = read_full(stdout, &mut buf).map_err(|e| FrameError::Decode {
                    path: self.path.clone(),
                    message: e.to_string(),
                })?;
                if filled == buf.len() {
                    return RawFrame::new(*width, *height, buf, index).map(Some);
                }
                let status = child.wait().map_err(|e| FrameError::Decode {
                    path: self.path.clone(),
                    message: e.to_string(),
                })?;
                let err_text = stderr
                    .take()
                    .and_then(|h| h.join().ok())
                    .unwrap_or_default();
                if !status.success() {
                    return Err(FrameError::Decode {
                        path: self.path.clone(),
                        message: format!("decoder exited with {status}: {}", err_text.trim()),
                    });
                }
                if filled != 0 {
                    return Err(FrameError::Decode {
                        path: self.path.clone(),
                        message: format!(
                            "truncated frame: {filled} of {} bytes",
                            buf.len()
                        ),
                    });
                }
                Ok(None)
            }
        }
    }
}

impl Iterator for FrameStream {
    type Item = Result<RawFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.next_frame() {
            Ok(Some(f)) => {
                self.emitted += 1;
                Some(Ok(f))
            }
            Ok(None) => {
                self.finished = true;
                (self.emitted == 0).then(|| Err(FrameError::EmptyStream(self.path.clone())))
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

impl Drop for FrameStream {
    fn drop(&mut self) {
        if let StreamInner::Process { child, .. } = &mut self.inner {
            if !self.finished {
                let _ = child.kill();
            }
            let _ = child.wait();
        }
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn read_image(path: &Path, frame_index: u64) -> Result<RawFrame> {
    let img = image::open(path).map_err(|e| FrameError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    RawFrame::new(w, h, rgb.into_raw(), frame_index)
}

fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| FrameError::Decode {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Opens `source` as a stream of frames at `target_fps`.
///
/// Directories are read as numbered images at `fps_hint` (default
/// `target_fps`) and resampled by nearest earlier frame. Files go through the
/// external decoder, which performs the rate conversion itself.
pub fn decode_frames(
    source: &Path,
    fps_hint: Option<u32>,
    target_fps: u32,
    decoder: &DecoderConfig,
) -> Result<FrameStream> {
    if target_fps == 0 || fps_hint == Some(0) {
        return Err(FrameError::InvalidFps);
    }
    if !source.exists() {
        return Err(FrameError::Decode {
            path: source.to_path_buf(),
            message: "no such file or directory".into(),
        });
    }
    let inner = if source.is_dir() {
        let files = list_frame_files(source)?;
        if files.is_empty() {
            return Err(FrameError::EmptyStream(source.to_path_buf()));
        }
        let source_fps = fps_hint.unwrap_or(target_fps);
        let len = (files.len() as u64 * target_fps as u64).div_ceil(source_fps as u64);
        StreamInner::Directory {
            files,
            source_fps,
            target_fps,
            len,
        }
    } else {
        if decoder.width == 0 || decoder.height == 0 {
            return Err(FrameError::InvalidFrame("decoder geometry must be positive".into()));
        }
        let argv = decoder.argv(source, target_fps);
        let (program, args) = argv.split_first().ok_or_else(|| FrameError::DecoderUnavailable {
            program: String::new(),
            reason: "empty decoder command".into(),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| match e.kind() {
                ErrorKind::NotFound | ErrorKind::PermissionDenied => FrameError::DecoderUnavailable {
                    program: program.clone(),
                    reason: e.to_string(),
                },
                _ => FrameError::Decode {
                    path: source.to_path_buf(),
                    message: e.to_string(),
                },
            })?;
        let stdout = BufReader::new(child.stdout.take().expect("stdout piped"));
        let mut err_pipe = child.stderr.take().expect("stderr piped");
        let stderr = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = err_pipe.read_to_string(&mut s);
            s
        });
        StreamInner::Process {
            child,
            stdout,
            stderr: Some(stderr),
            width: decoder.width,
            height: decoder.height,
        }
    };
    Ok(FrameStream {
        inner,
        path: source.to_path_buf(),
        emitted: 0,
        finished: false,
    })
}

/// Keeps the frames whose index is divisible by `fps`, in order.
pub fn sample_frames<I>(stream: I, fps: u32) -> Result<Vec<RawFrame>>
where
    I: IntoIterator<Item = Result<RawFrame>>,
{
    if fps == 0 {
        return Err(FrameError::InvalidFps);
    }
    let mut kept = Vec::new();
    for frame in stream {
        let frame = frame?;
        if frame.frame_index % fps as u64 == 0 {
            kept.push(frame);
        }
    }
    if kept.is_empty() {
        return Err(FrameError::EmptyStream(PathBuf::new()));
    }
    Ok(kept)
}

/// Bilinear resize with half-pixel centers and edge clamping.
///
/// Output sample `x` reads source coordinate `(x + 0.5) * sw / dw - 0.5`.
/// Equal sizes map every output sample exactly onto its source sample.
pub fn resize_bilinear(frame: &RawFrame, width: usize, height: usize) -> Result<RawFrame> {
    if frame.width == 0 || frame.height == 0 || width == 0 || height == 0 {
        return Err(FrameError::InvalidFrame(format!(
            "cannot resize {}x{} to {width}x{height}",
            frame.width, frame.height
        )));
    }
    if frame.width == width && frame.height == height {
        return Ok(frame.clone());
    }
    let xs = axis_taps(frame.width, width);
    let ys = axis_taps(frame.height, height);
    let src_row = frame.width * CHANNELS;
    let mut data = Vec::with_capacity(width * height * CHANNELS);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..CHANNELS {
                let p = |x: usize, y: usize| frame.data[y * src_row + x * CHANNELS + c] as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RawFrame::new(width, height, data, frame.frame_index)
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

pub fn resize_frame(frame: &RawFrame) -> Result<RawFrame> {
    resize_bilinear(frame, INPUT_SIZE, INPUT_SIZE)
}

/// Divides every sample by 255.
pub fn normalize_pixels(frame: &RawFrame, video_id: &str) -> Result<FrameTensor> {
    if frame.width != INPUT_SIZE || frame.height != INPUT_SIZE {
        return Err(FrameError::Shape {
            expected: "224x224x3".into(),
            actual: format!("{}x{}x3", frame.width, frame.height),
        });
    }
    let values = frame.data.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(FrameTensor {
        values,
        video_id: video_id.to_string(),
        frame_index: frame.frame_index,
    })
}

/// decode, sample, resize and normalize in one call.
pub fn frame_tensors(
    video_id: &str,
    source: &Path,
    fps_hint: Option<u32>,
    fps: u32,
    decoder: &DecoderConfig,
) -> Result<Vec<FrameTensor>> {
    let stream = decode_frames(source, fps_hint, fps, decoder)?;
    let path = stream.path().to_path_buf();
    let sampled = sample_frames(stream, fps).map_err(|e| match e {
        FrameError::EmptyStream(_) => FrameError::EmptyStream(path),
        e => e,
    })?;
    sampled
        .iter()
        .map(|f| resize_frame(f).and_then(|r| normalize_pixels(&r, video_id)))
        .collect()
}
