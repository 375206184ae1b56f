//! Binary portable graymap (P5) export and import of frames.
//!
//! The header carries the frame geometry as `key=value` comment lines:
//!
//! ```text
//! P5
//! # tbdsim-frame
//! # origin_offset_um=0
//! # ccd.cols=1530
//! # ccd.rows=1020
//! # ccd.pixel_pitch_um=9
//! # ccd.full_well=65535
//! # ccd.nd_attenuation_db=0
//! # ccd.noise_rms=0
//! # ccd.rng_seed=0
//! 1530 1020
//! 65535
//! ```
//!
//! followed by row-major samples, big-endian 16-bit when `maxval > 255` and
//! single bytes otherwise. `maxval` is the full well. Floats are written in
//! shortest round-trip form, so export/import is lossless.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{CcdConfig, DetectorError, Frame};

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PGM: {0}")]
    Format(String),
    #[error("header comment {key}={value}: {reason}")]
    BadComment {
        key: String,
        value: String,
        reason: String,
    },
    #[error(transparent)]
    Frame(#[from] DetectorError),
}

pub fn write_pgm<W: Write>(frame: &Frame, mut out: W) -> Result<(), PgmError> {
    let cfg = frame.config();
    let mut header = String::from("P5\n# tbdsim-frame\n");
    header.push_str(&format!("# origin_offset_um={}\n", frame.origin_offset_um()));
    header.push_str(&format!("# ccd.cols={}\n", cfg.cols));
    header.push_str(&format!("# ccd.rows={}\n", cfg.rows));
    header.push_str(&format!("# ccd.pixel_pitch_um={}\n", cfg.pixel_pitch_um));
    header.push_str(&format!("# ccd.full_well={}\n", cfg.full_well));
    header.push_str(&format!("# ccd.nd_attenuation_db={}\n", cfg.nd_attenuation_db));
    header.push_str(&format!("# ccd.noise_rms={}\n", cfg.noise_rms));
    header.push_str(&format!("# ccd.rng_seed={}\n", cfg.rng_seed));
    header.push_str(&format!("{} {}\n{}\n", cfg.cols, cfg.rows, cfg.full_well));
    out.write_all(header.as_bytes())?;

    let wide = cfg.full_well > 255;
    let mut body = Vec::with_capacity(frame.data().len() * if wide { 2 } else { 1 });
    for &v in frame.data() {
        if wide {
            body.extend_from_slice(&v.to_be_bytes());
        } else {
            body.push(v as u8);
        }
    }
    out.write_all(&body)?;
    out.flush()?;
    Ok(())
}

struct Header {
    width: usize,
    height: usize,
    maxval: u16,
    comments: HashMap<String, String>,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PgmError> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    let mut comments = HashMap::new();
    while tokens.len() < 4 {
        let Some(&b) = bytes.get(pos) else {
            return Err(PgmError::Format("truncated header".into()));
        };
        if b.is_ascii_whitespace() {
            pos += 1;
        } else if b == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|&c| c == b'\n')
                .map_or(bytes.len(), |i| pos + i);
            let line = String::from_utf8_lossy(&bytes[pos + 1..end]);
            if let Some((k, v)) = line.trim().split_once('=') {
                comments.insert(k.trim().to_string(), v.trim().to_string());
            }
            pos = end;
        } else {
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
    }
    if tokens[0] != "P5" {
        return Err(PgmError::Format(format!("expected magic P5, found {:?}", tokens[0])));
    }
    let num = |i: usize, what: &str| {
        tokens[i]
            .parse::<usize>()
            .map_err(|_| PgmError::Format(format!("bad {what} {:?}", tokens[i])))
    };
    let width = num(1, "width")?;
    let height = num(2, "height")?;
    let maxval = num(3, "maxval")?;
    if maxval == 0 || maxval > usize::from(u16::MAX) {
        return Err(PgmError::Format(format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PgmError::Format("missing separator after maxval".into())),
    }
    Ok(Header {
        width,
        height,
        maxval: maxval as u16,
        comments,
        data_start: pos,
    })
}

fn comment_value<T: std::str::FromStr>(comments: &HashMap<String, String>, key: &str) -> Result<Option<T>, PgmError>
where
    T::Err: std::fmt::Display,
{
    comments
        .get(key)
        .map(|v| {
            v.parse::<T>().map_err(|e| PgmError::BadComment {
                key: key.to_string(),
                value: v.clone(),
                reason: e.to_string(),
            })
        })
        .transpose()
}

/// Reads a P5 graymap. Missing metadata comments fall back to the default
/// CCD settings, with the geometry and full well taken from the header.
pub fn read_pgm<R: Read>(mut input: R) -> Result<Frame, PgmError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let header = parse_header(&bytes)?;
    let c = &header.comments;

    let defaults = CcdConfig::default();
    let config = CcdConfig {
        cols: header.width,
        rows: header.height,
        pixel_pitch_um: comment_value(c, "ccd.pixel_pitch_um")?.unwrap_or(defaults.pixel_pitch_um),
        full_well: header.maxval,
        nd_attenuation_db: comment_value(c, "ccd.nd_attenuation_db")?.unwrap_or(defaults.nd_attenuation_db),
        noise_rms: comment_value(c, "ccd.noise_rms")?.unwrap_or(defaults.noise_rms),
        rng_seed: comment_value(c, "ccd.rng_seed")?.unwrap_or(defaults.rng_seed),
    };
    for (key, header_value) in [("ccd.cols", header.width), ("ccd.rows", header.height)] {
        if let Some(v) = comment_value::<usize>(c, key)? {
            if v != header_value {
                return Err(PgmError::BadComment {
                    key: key.into(),
                    value: v.to_string(),
                    reason: format!("header says {header_value}"),
                });
            }
        }
    }
    if let Some(fw) = comment_value::<u16>(c, "ccd.full_well")? {
        if fw != header.maxval {
            return Err(PgmError::BadComment {
                key: "ccd.full_well".into(),
                value: fw.to_string(),
                reason: format!("maxval is {}", header.maxval),
            });
        }
    }
    let origin_offset_um = comment_value(c, "origin_offset_um")?.unwrap_or(0.0);

    let n = header
        .width
        .checked_mul(header.height)
        .ok_or_else(|| PgmError::Format("frame dimensions overflow".into()))?;
    let raster = &bytes[header.data_start..];
    let data: Vec<u16> = if header.maxval > 255 {
        if raster.len() < 2 * n {
            return Err(PgmError::Format(format!("expected {} raster bytes, found {}", 2 * n, raster.len())));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect()
    } else {
        if raster.len() < n {
            return Err(PgmError::Format(format!("expected {n} raster bytes, found {}", raster.len())));
        }
        raster[..n].iter().map(|&b| u16::from(b)).collect()
    };
    Ok(Frame::from_counts(data, config, origin_offset_um)?)
}
