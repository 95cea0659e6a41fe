//! 16-bit binary PGM (`P5`) depth files with an optional JSON sidecar.
//!
//! Samples are big-endian `u16` millimeters. The sidecar `<stem>.meta.json`
//! next to the image carries the lateral scale and capture metadata.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::DepthFrame;
use crate::phantom::View;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub mm_per_pixel: f64,
    #[serde(default = "default_distance")]
    pub distance_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<View>,
}

fn default_distance() -> f64 {
    1.0
}

impl FrameMeta {
    pub fn new(mm_per_pixel: f64, distance_m: f64, view: Option<View>) -> Self {
        Self {
            mm_per_pixel,
            distance_m,
            view,
        }
    }
}

/// `dir/front.pgm` -> `dir/front.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

pub fn read_meta(path: &Path) -> Result<Option<FrameMeta>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

pub fn write_meta(path: &Path, meta: &FrameMeta) -> Result<()> {
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(meta)?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Reads a frame. `scale` overrides the sidecar's `mm_per_pixel`; without
/// either the read fails with [`Error::MissingScale`].
pub fn read_frame(path: &Path, scale: Option<f64>) -> Result<DepthFrame> {
    read_frame_with_meta(path, scale).map(|(f, _)| f)
}

pub fn read_frame_with_meta(path: &Path, scale: Option<f64>) -> Result<(DepthFrame, Option<FrameMeta>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta = read_meta(path)?;
    let mm_per_pixel = scale
        .or(meta.as_ref().map(|m| m.mm_per_pixel))
        .ok_or_else(|| Error::MissingScale(path.to_path_buf()))?;
    let frame = decode(&bytes, mm_per_pixel)?;
    Ok((frame, meta))
}

pub fn write_frame(frame: &DepthFrame, path: &Path) -> Result<()> {
    let bytes = encode(frame)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn write_frame_with_meta(frame: &DepthFrame, path: &Path, meta: &FrameMeta) -> Result<()> {
    write_frame(frame, path)?;
    write_meta(path, meta)
}

pub fn encode(frame: &DepthFrame) -> Result<Vec<u8>> {
    if frame.width() == 0 || frame.height() == 0 {
        return Err(Error::ZeroDimension {
            width: frame.width(),
            height: frame.height(),
        });
    }
    let header = format!("P5\n{} {}\n65535\n", frame.width(), frame.height());
    let mut out = Vec::with_capacity(header.len() + 2 * frame.samples().len());
    out.extend_from_slice(header.as_bytes());
    for (index, &value) in frame.samples().iter().enumerate() {
        if value.fract() != 0.0 || !(0.0..=u16::MAX as f64).contains(&value) {
            return Err(Error::NonIntegralSample { index, value });
        }
        out.extend_from_slice(&(value as u16).to_be_bytes());
    }
    Ok(out)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader("unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::MalformedHeader("non-ASCII header".into()))
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::MalformedHeader(format!("bad {what}: {tok:?}")))
    }
}

pub fn decode(bytes: &[u8], mm_per_pixel: f64) -> Result<DepthFrame> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = cur.token()?;
    if magic != "P5" {
        return Err(Error::MalformedHeader(format!(
            "expected magic P5, found {magic:?}"
        )));
    }
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension { width, height });
    }
    if maxval == 0 || maxval > u16::MAX as u32 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} out of range")));
    }
    if maxval < 256 {
        return Err(Error::BitDepth { maxval });
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing separator after maxval".into()));
    }
    let data = &bytes[cur.pos + 1..];
    let expected = width * height * 2;
    if data.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            found: data.len(),
        });
    }
    let samples = data[..expected]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64)
        .collect();
    DepthFrame::new(width, height, samples, mm_per_pixel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_frame_round_trip() {
        let f = DepthFrame::filled(4, 4, 1000.0, 1.5).unwrap();
        let back = decode(&encode(&f).unwrap(), 1.5).unwrap();
        assert!(back.samples().iter().all(|&v| v == 1000.0));
        assert_eq!(back, f);
    }

    #[test]
    fn zeros_preserved() {
        let f = DepthFrame::new(3, 2, vec![0.0, 5.0, 0.0, 65535.0, 0.0, 1.0], 1.0).unwrap();
        assert_eq!(decode(&encode(&f).unwrap(), 1.0).unwrap(), f);
    }

    #[test]
    fn eight_bit_rejected() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        assert!(matches!(decode(&bytes, 1.0), Err(Error::BitDepth { maxval: 255 })));
    }

    #[test]
    fn header_errors_are_distinct() {
        assert!(matches!(
            decode(b"P2\n2 2\n65535\n", 1.0),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode(b"P5\n0 2\n65535\n", 1.0),
            Err(Error::ZeroDimension { .. })
        ));
        assert!(matches!(
            decode(b"P5\n2 x\n65535\n", 1.0),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode(b"P5\n2 2\n65535\n\x00\x01", 1.0),
            Err(Error::TruncatedData { .. })
        ));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# depth in mm\n1 1\n# max\n65535\n".to_vec();
        bytes.extend_from_slice(&1000u16.to_be_bytes());
        let f = decode(&bytes, 2.0).unwrap();
        assert_eq!(f.samples(), &[1000.0]);
    }

    #[test]
    fn fractional_samples_refused() {
        let f = DepthFrame::new(1, 1, vec![999.5], 1.0).unwrap();
        assert!(matches!(encode(&f), Err(Error::NonIntegralSample { .. })));
        let f = DepthFrame::new(1, 1, vec![70000.0], 1.0).unwrap();
        assert!(matches!(encode(&f), Err(Error::NonIntegralSample { .. })));
    }

    #[test]
    fn sidecar_supplies_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("front.pgm");
        let f = DepthFrame::filled(5, 3, 987.0, 2.5).unwrap();
        write_frame_with_meta(&f, &path, &FrameMeta::new(2.5, 1.0, Some(View::Front))).unwrap();
        assert!(dir.path().join("front.meta.json").exists());
        let (back, meta) = read_frame_with_meta(&path, None).unwrap();
        assert_eq!(back, f);
        assert_eq!(meta.unwrap().view, Some(View::Front));
        // explicit scale wins over the sidecar
        assert_eq!(read_frame(&path, Some(4.0)).unwrap().mm_per_pixel(), 4.0);
    }

    #[test]
    fn missing_scale_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        write_frame(&DepthFrame::filled(2, 2, 1.0, 1.0).unwrap(), &path).unwrap();
        assert!(matches!(read_frame(&path, None), Err(Error::MissingScale(_))));
    }

    #[test]
    fn unwritable_path() {
        let f = DepthFrame::filled(2, 2, 1.0, 1.0).unwrap();
        let err = write_frame(&f, Path::new("/nonexistent-dir/x.pgm")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            (w, h, samples) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<u16>(), w * h))
            })
        ) {
            let f = DepthFrame::new(w, h, samples.into_iter().map(f64::from).collect(), 1.0).unwrap();
            prop_assert_eq!(decode(&encode(&f).unwrap(), 1.0).unwrap(), f);
        }
    }
}
