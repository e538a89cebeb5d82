//! Minimal raster line plots. There is no text rendering; the CSV written
//! next to each plot carries the numbers and the legend.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

pub const WIDTH: u32 = 480;
pub const HEIGHT: u32 = 320;
const MARGIN: i64 = 32;

const BACKGROUND: [u8; 3] = [255, 255, 255];
const AXIS: [u8; 3] = [0, 0, 0];
const GRID: [u8; 3] = [220, 220, 220];

/// Series colors, assigned in order.
pub const PALETTE: [[u8; 3]; 6] = [
    [214, 39, 40],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [140, 86, 75],
];

pub struct Series {
    pub color: [u8; 3],
    pub points: Vec<(f64, f64)>,
}

struct Canvas {
    rgb: Vec<u8>,
}

impl Canvas {
    fn new() -> Self {
        Self {
            rgb: BACKGROUND
                .iter()
                .copied()
                .cycle()
                .take((WIDTH * HEIGHT * 3) as usize)
                .collect(),
        }
    }

    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if (0..WIDTH as i64).contains(&x) && (0..HEIGHT as i64).contains(&y) {
            let i = ((y as u32 * WIDTH + x as u32) * 3) as usize;
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    fn square(&mut self, x: i64, y: i64, half: i64, c: [u8; 3]) {
        for dy in -half..=half {
            for dx in -half..=half {
                self.set(x + dx, y + dy, c);
            }
        }
    }

    /// Bresenham line, drawn `half` pixels thick on each side.
    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), half: i64, c: [u8; 3]) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.square(x0, y0, half, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }
}

/// Plot `series` over `x_range` with y fixed to [0, 1] and write a PNG.
pub fn line_plot(series: &[Series], x_range: (f64, f64), path: &Path) -> Result<()> {
    let mut canvas = Canvas::new();
    let (w, h) = (WIDTH as i64 - 2 * MARGIN, HEIGHT as i64 - 2 * MARGIN);
    let span = if x_range.1 > x_range.0 {
        x_range.1 - x_range.0
    } else {
        1.0
    };
    let to_px = |x: f64, y: f64| {
        let px = MARGIN + ((x - x_range.0) / span * w as f64).round() as i64;
        let py = MARGIN + h - (y.clamp(0.0, 1.0) * h as f64).round() as i64;
        (px, py)
    };
    for k in 1..=4 {
        let (_, y) = to_px(0.0, k as f64 / 4.0);
        canvas.line((MARGIN, y), (MARGIN + w, y), 0, GRID);
    }
    canvas.line((MARGIN, MARGIN), (MARGIN, MARGIN + h), 0, AXIS);
    canvas.line((MARGIN, MARGIN + h), (MARGIN + w, MARGIN + h), 0, AXIS);
    for s in series {
        let px: Vec<_> = s.points.iter().map(|&(x, y)| to_px(x, y)).collect();
        for pair in px.windows(2) {
            canvas.line(pair[0], pair[1], 1, s.color);
        }
        for &(x, y) in &px {
            canvas.square(x, y, 3, s.color);
        }
    }
    let out = |e: &dyn std::fmt::Display| Error::Output {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, WIDTH, HEIGHT);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| out(&e))?;
    writer.write_image_data(&canvas.rgb).map_err(|e| out(&e))?;
    writer.finish().map_err(|e| out(&e))?;
    Ok(())
}
