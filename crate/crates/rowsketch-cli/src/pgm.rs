//! Minimal PGM (portable graymap) reader for the image experiments:
//! 8-bit grayscale, P5 (binary) or P2 (ASCII), image rows become matrix
//! rows with entries in [0, 255].

use std::fs;
use std::path::Path;

use rowsketch::error::{Error, Result};
use rowsketch::Mat;

fn bad(msg: &str) -> Error {
    Error::InvalidArgument(format!("malformed PGM: {msg}"))
}

/// Advances past whitespace and '#' comments, then returns the next token.
fn next_token(bytes: &[u8], at: &mut usize) -> Result<String> {
    loop {
        while *at < bytes.len() && bytes[*at].is_ascii_whitespace() {
            *at += 1;
        }
        if *at < bytes.len() && bytes[*at] == b'#' {
            while *at < bytes.len() && bytes[*at] != b'\n' {
                *at += 1;
            }
            continue;
        }
        break;
    }
    let start = *at;
    while *at < bytes.len() && !bytes[*at].is_ascii_whitespace() {
        *at += 1;
    }
    if start == *at {
        return Err(bad("unexpected end of header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*at]).into_owned())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Mat> {
    let bytes = fs::read(path.as_ref()).map_err(|e| {
        Error::InvalidArgument(format!("cannot read {}: {e}", path.as_ref().display()))
    })?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Mat> {
    let mut at = 0usize;
    let magic = next_token(bytes, &mut at)?;
    if magic != "P5" && magic != "P2" {
        return Err(bad("expected magic P5 or P2"));
    }
    let w: usize = next_token(bytes, &mut at)?.parse().map_err(|_| bad("bad width"))?;
    let h: usize = next_token(bytes, &mut at)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = next_token(bytes, &mut at)?.parse().map_err(|_| bad("bad maxval"))?;
    if w == 0 || h == 0 {
        return Err(bad("zero dimensions"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit graymaps are supported"));
    }
    let mut m = Mat::zeros(h, w);
    if magic == "P5" {
        // Binary data starts after exactly one whitespace byte.
        at += 1;
        if bytes.len() < at + w * h {
            return Err(bad("truncated pixel data"));
        }
        for r in 0..h {
            for c in 0..w {
                m[(r, c)] = bytes[at + r * w + c] as f64;
            }
        }
    } else {
        for r in 0..h {
            for c in 0..w {
                let v: usize = next_token(bytes, &mut at)?
                    .parse()
                    .map_err(|_| bad("bad pixel"))?;
                if v > maxval {
                    return Err(bad("pixel exceeds maxval"));
                }
                m[(r, c)] = v as f64;
            }
        }
    }
    Ok(m)
}
