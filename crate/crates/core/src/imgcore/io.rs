//! 8-bit PGM/PPM and 4:2:0 Y4M readers and writers.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::imgcore::{ColorFrame, Frame};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_u8(b: u8) -> f64 {
    b as f64 / 255.0
}

pub fn write_pgm<W: Write>(mut out: W, f: &Frame) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", f.width(), f.height())?;
    let bytes: Vec<u8> = f.data().iter().map(|&v| to_u8(v)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn write_ppm<W: Write>(mut out: W, c: &ColorFrame) -> Result<()> {
    write!(out, "P6\n{} {}\n255\n", c.width(), c.height())?;
    let mut bytes = Vec::with_capacity(c.width() * c.height() * 3);
    for i in 0..c.width() * c.height() {
        bytes.extend(c.pixel_at(i).iter().map(|&v| to_u8(v)));
    }
    out.write_all(&bytes)?;
    Ok(())
}

/// Reads the four whitespace-separated header fields of a binary PNM file.
fn read_pnm_header<R: BufRead>(r: &mut R) -> Result<(String, usize, usize, usize)> {
    let mut tokens = Vec::with_capacity(4);
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    let mut in_comment = false;
    while tokens.len() < 4 {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Parse("truncated PNM header".into()));
        }
        let b = byte[0];
        if in_comment {
            in_comment = b != b'\n';
            continue;
        }
        if b == b'#' {
            in_comment = true;
        } else if b.is_ascii_whitespace() {
            if !token.is_empty() {
                tokens.push(String::from_utf8_lossy(&token).into_owned());
                token.clear();
            }
        } else {
            token.push(b);
        }
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad PNM header field `{s}`")))
    };
    let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PNM maxval {maxval}")));
    }
    Ok((tokens[0].clone(), w, h, maxval))
}

pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Frame> {
    let (magic, w, h, maxval) = read_pnm_header(&mut r)?;
    if magic != "P5" {
        return Err(Error::Parse(format!("expected P5, found {magic}")));
    }
    let mut buf = vec![0u8; w * h];
    r.read_exact(&mut buf)?;
    let scale = maxval as f64;
    Frame::new(w, h, buf.iter().map(|&b| b as f64 / scale).collect())
}

pub fn read_ppm<R: BufRead>(mut r: R) -> Result<ColorFrame> {
    let (magic, w, h, maxval) = read_pnm_header(&mut r)?;
    if magic != "P6" {
        return Err(Error::Parse(format!("expected P6, found {magic}")));
    }
    let mut buf = vec![0u8; w * h * 3];
    r.read_exact(&mut buf)?;
    let scale = maxval as f64;
    let mut planes = [Vec::new(), Vec::new(), Vec::new()];
    for px in buf.chunks_exact(3) {
        for c in 0..3 {
            planes[c].push(px[c] as f64 / scale);
        }
    }
    ColorFrame::new(w, h, planes)
}

/// Full-range (JFIF) YCbCr to RGB.
fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> [f64; 3] {
    let (y, cb, cr) = (y as f64, cb as f64 - 128.0, cr as f64 - 128.0);
    let r = y + 1.402 * cr;
    let g = y - 0.344136 * cb - 0.714136 * cr;
    let b = y + 1.772 * cb;
    [r / 255.0, g / 255.0, b / 255.0].map(|v| v.clamp(0.0, 1.0))
}

fn rgb_to_ycbcr([r, g, b]: [f64; 3]) -> [f64; 3] {
    let (r, g, b) = (r * 255.0, g * 255.0, b * 255.0);
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub width: usize,
    pub height: usize,
    /// Frame rate as numerator/denominator.
    pub fps: (u32, u32),
    pub frames: Vec<ColorFrame>,
}

impl Video {
    pub fn fps_f64(&self) -> f64 {
        self.fps.0 as f64 / self.fps.1.max(1) as f64
    }
}

/// Reads a 4:2:0 YUV4MPEG2 stream into RGB frames.
pub fn read_y4m<R: BufRead>(mut r: R) -> Result<Video> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let mut fields = header.trim_end().split(' ');
    if fields.next() != Some("YUV4MPEG2") {
        return Err(Error::Parse("missing YUV4MPEG2 signature".into()));
    }
    let (mut w, mut h, mut fps) = (0usize, 0usize, (25u32, 1u32));
    for field in fields {
        let (tag, val) = field.split_at(1);
        match tag {
            "W" => w = val.parse().map_err(|_| Error::Parse(format!("bad width `{val}`")))?,
            "H" => h = val.parse().map_err(|_| Error::Parse(format!("bad height `{val}`")))?,
            "F" => {
                let (n, d) = val
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("bad frame rate `{val}`")))?;
                fps = (
                    n.parse().map_err(|_| Error::Parse(format!("bad frame rate `{val}`")))?,
                    d.parse().map_err(|_| Error::Parse(format!("bad frame rate `{val}`")))?,
                );
            }
            "C" if !val.starts_with("420") => {
                return Err(Error::Parse(format!("unsupported chroma layout C{val}")));
            }
            _ => {}
        }
    }
    if w == 0 || h == 0 {
        return Err(Error::Parse("Y4M header lacks dimensions".into()));
    }
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut frames = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            break;
        }
        if !line.starts_with("FRAME") {
            return Err(Error::Parse("expected FRAME marker".into()));
        }
        let mut luma = vec![0u8; w * h];
        let mut cb = vec![0u8; cw * ch];
        let mut cr = vec![0u8; cw * ch];
        r.read_exact(&mut luma)?;
        r.read_exact(&mut cb)?;
        r.read_exact(&mut cr)?;
        frames.push(ColorFrame::from_fn(w, h, |x, y| {
            let c = (y / 2) * cw + x / 2;
            ycbcr_to_rgb(luma[y * w + x], cb[c], cr[c])
        }));
    }
    Ok(Video {
        width: w,
        height: h,
        fps,
        frames,
    })
}

pub fn write_y4m<W: Write>(mut out: W, video: &Video) -> Result<()> {
    let (w, h) = (video.width, video.height);
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    writeln!(
        out,
        "YUV4MPEG2 W{w} H{h} F{}:{} Ip A1:1 C420jpeg",
        video.fps.0, video.fps.1
    )?;
    for frame in &video.frames {
        if frame.dims() != (w, h) {
            return Err(Error::ShapeMismatch {
                expected: (w, h),
                got: frame.dims(),
            });
        }
        let ycc: Vec<[f64; 3]> = (0..w * h).map(|i| rgb_to_ycbcr(frame.pixel_at(i))).collect();
        let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        let mut buf: Vec<u8> = ycc.iter().map(|p| q(p[0])).collect();
        for plane in 1..3 {
            for cy in 0..ch {
                for cx in 0..cw {
                    let (mut acc, mut n) = (0.0, 0.0);
                    for y in 2 * cy..(2 * cy + 2).min(h) {
                        for x in 2 * cx..(2 * cx + 2).min(w) {
                            acc += ycc[y * w + x][plane];
                            n += 1.0;
                        }
                    }
                    buf.push(q(acc / n));
                }
            }
        }
        out.write_all(b"FRAME\n")?;
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Grayscale frame from an 8-bit value array; used by tests and tools.
pub fn frame_from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Frame> {
    Frame::new(width, height, bytes.iter().map(|&b| from_u8(b)).collect())
}
