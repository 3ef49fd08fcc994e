//! Raster files. PGM is the canonical output; PNG copies are for viewing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use entroball::Grid;

use crate::error::{CliError, Result};

/// Gray level of region `index` out of `n` regions, spread over 0..=255.
pub fn region_gray(index: usize, n: usize) -> u8 {
    if n <= 1 {
        0
    } else {
        ((index * 255 + (n - 1) / 2) / (n - 1)) as u8
    }
}

/// Plain (P2) PGM of region indices scaled to gray levels.
pub fn write_regions_pgm(path: &Path, grid: &Grid<usize>, n_regions: usize) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("P2\n{} {}\n255\n", grid.width, grid.height));
    for row in grid.cells.chunks(grid.width) {
        let line: Vec<String> = row
            .iter()
            .map(|&i| region_gray(i, n_regions).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(CliError::io(path))
}

/// Region indices as CSV, one raster row per line.
pub fn write_regions_csv(path: &Path, grid: &Grid<usize>) -> Result<()> {
    let mut out = String::new();
    for row in grid.cells.chunks(grid.width) {
        let line: Vec<String> = row.iter().map(|i| i.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(CliError::io(path))
}

pub fn write_regions_png(path: &Path, grid: &Grid<usize>, n_regions: usize) -> Result<()> {
    let data: Vec<u8> = grid.cells.iter().map(|&i| region_gray(i, n_regions)).collect();
    write_png(path, grid, png::BitDepth::Eight, &data)
}

/// Scales values linearly onto 0..=65535 with `max` at full white.
pub fn quantize(grid: &Grid<f64>, max: f64) -> Grid<u16> {
    grid.map(|&v| {
        if max > 0.0 {
            (v / max * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        }
    })
}

/// Binary (P5) 16-bit PGM, big-endian samples.
pub fn write_pgm16(path: &Path, grid: &Grid<u16>) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n65535\n", grid.width, grid.height)?;
        for v in &grid.cells {
            w.write_all(&v.to_be_bytes())?;
        }
        w.flush()
    };
    write().map_err(CliError::io(path))
}

/// Reads back a file written by [`write_pgm16`].
pub fn read_pgm16(path: &Path) -> Result<Grid<u16>> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let bad = || CliError::Config(format!("{}: not a 16-bit P5 file", path.display()));
    // header: magic, width, height, maxval, each followed by one whitespace byte
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
        pos += 1;
    }
    let (width, height): (usize, usize) = (
        fields[1].parse().map_err(|_| bad())?,
        fields[2].parse().map_err(|_| bad())?,
    );
    if fields[0] != "P5" || fields[3] != "65535" || bytes.len() != pos + 2 * width * height {
        return Err(bad());
    }
    let cells = bytes[pos..]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok(Grid {
        width,
        height,
        cells,
    })
}

pub fn write_pgm16_png(path: &Path, grid: &Grid<u16>) -> Result<()> {
    let data: Vec<u8> = grid.cells.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_png(path, grid, png::BitDepth::Sixteen, &data)
}

fn write_png<T>(path: &Path, grid: &Grid<T>, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), grid.width as u32, grid.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => e,
        e => std::io::Error::other(e),
    };
    let mut writer = enc.write_header().map_err(to_io).map_err(CliError::io(path))?;
    writer
        .write_image_data(data)
        .map_err(to_io)
        .map_err(CliError::io(path))?;
    writer.finish().map_err(to_io).map_err(CliError::io(path))
}
