//! Binary PGM (P5) output for inspecting digits.

use std::io::{self, Write};
use std::path::Path;

/// Maps a normalized value in `[-1, 1]` to a gray level. Values outside
/// the range are clamped.
pub fn to_gray(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

pub fn encode(width: usize, height: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "pixel count does not match dimensions");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| to_gray(v)));
    out
}

pub fn write(path: &Path, width: usize, height: usize, values: &[f32]) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode(width, height, values))?;
    f.flush()
}
