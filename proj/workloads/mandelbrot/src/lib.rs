//! Sequential escape-time Mandelbrot renderer.
//!
//! Input is a JSON object with the render parameters; output is the
//! row-major grid of escape counts as little-endian u16. With `io_enabled`
//! the grid is also written as a 16-bit binary PGM to `output_path`.

use serde::Deserialize;

wit_bindgen::generate!({ world: "function", path: "../wit" });

#[derive(Deserialize)]
#[serde(default)]
struct Params {
    width: u32,
    height: u32,
    max_iter: u32,
    re_min: f64,
    re_max: f64,
    im_min: f64,
    im_max: f64,
    io_enabled: bool,
    output_path: String,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            width: 800,
            height: 600,
            max_iter: 1000,
            re_min: -2.5,
            re_max: 1.0,
            im_min: -1.0,
            im_max: 1.0,
            io_enabled: false,
            output_path: "mandelbrot.pgm".to_string(),
        }
    }
}

fn escape_count(c_re: f64, c_im: f64, max_iter: u32) -> u16 {
    let (mut z_re, mut z_im) = (0.0f64, 0.0f64);
    for k in 1..=max_iter {
        let next_re = z_re * z_re - z_im * z_im + c_re;
        let next_im = 2.0 * z_re * z_im + c_im;
        z_re = next_re;
        z_im = next_im;
        if z_re * z_re + z_im * z_im > 4.0 {
            return k as u16;
        }
    }
    max_iter as u16
}

fn render(p: &Params) -> Vec<u16> {
    let re_step = (p.re_max - p.re_min) / p.width as f64;
    let im_step = (p.im_max - p.im_min) / p.height as f64;
    let mut grid = Vec::with_capacity(p.width as usize * p.height as usize);
    for y in 0..p.height {
        let c_im = p.im_min + y as f64 * im_step;
        for x in 0..p.width {
            let c_re = p.re_min + x as f64 * re_step;
            grid.push(escape_count(c_re, c_im, p.max_iter));
        }
    }
    grid
}

fn validate(p: &Params) -> Result<(), String> {
    if p.width == 0 || p.height == 0 {
        return Err("width and height must be positive".into());
    }
    if p.max_iter == 0 || p.max_iter > u16::MAX as u32 {
        return Err("max_iter must be in 1..=65535".into());
    }
    if !(p.re_min < p.re_max) || !(p.im_min < p.im_max) {
        return Err("viewport bounds must be strictly increasing".into());
    }
    if p.io_enabled && (p.output_path.is_empty() || p.output_path.split('/').any(|s| s == "..")) {
        return Err("invalid output_path".into());
    }
    Ok(())
}

fn write_pgm(p: &Params, grid: &[u16]) -> Result<(), String> {
    let mut out = format!("P5\n{} {}\n{}\n", p.width, p.height, p.max_iter).into_bytes();
    out.reserve(grid.len() * 2);
    for v in grid {
        out.extend_from_slice(&v.to_be_bytes());
    }
    write_durable(&p.output_path, &out).map_err(|e| format!("write {}: {}", p.output_path, e))
}

fn write_durable(path: &str, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

struct Mandelbrot;

impl Guest for Mandelbrot {
    fn run(input: Vec<u8>) -> Result<Vec<u8>, String> {
        let params: Params = if input.is_empty() {
            Params::default()
        } else {
            serde_json::from_slice(&input).map_err(|e| format!("bad params: {e}"))?
        };
        validate(&params)?;
        let grid = render(&params);
        if params.io_enabled {
            write_pgm(&params, &grid)?;
        }
        let mut out = Vec::with_capacity(grid.len() * 2);
        for v in &grid {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }
}

export!(Mandelbrot);
