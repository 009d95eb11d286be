//! Reads a PNG from the sandbox, applies a filter chain and returns the
//! re-encoded PNG. With `write_output` the result is also written back.
//!
//! Filters act on the colour channels; an alpha channel passes through.

use serde::Deserialize;
use std::io::Cursor;

wit_bindgen::generate!({ world: "function", path: "../wit" });

#[derive(Deserialize)]
struct Job {
    input_path: String,
    filters: Vec<String>,
    #[serde(default)]
    write_output: bool,
    #[serde(default = "default_output_path")]
    output_path: String,
}

fn default_output_path() -> String {
    "output.png".to_string()
}

struct Image {
    width: usize,
    height: usize,
    channels: usize,
    color: png::ColorType,
    data: Vec<u8>,
}

fn safe_path(p: &str) -> bool {
    !p.is_empty() && !p.split('/').any(|s| s == "..")
}

fn decode(bytes: &[u8]) -> Result<Image, String> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| format!("decode: {e}"))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| format!("decode: {e}"))?;
    buf.truncate(info.buffer_size());
    let (color, data) = match info.color_type {
        png::ColorType::Rgb | png::ColorType::Rgba => (info.color_type, buf),
        png::ColorType::Grayscale => (png::ColorType::Rgb, buf.iter().flat_map(|&v| [v, v, v]).collect()),
        png::ColorType::GrayscaleAlpha => (
            png::ColorType::Rgba,
            buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0], p[1]]).collect(),
        ),
        other => return Err(format!("unsupported colour type {other:?}")),
    };
    let channels = if color == png::ColorType::Rgba { 4 } else { 3 };
    Ok(Image { width: info.width as usize, height: info.height as usize, channels, color, data })
}

fn encode(img: &Image) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(img.color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| format!("encode: {e}"))?;
        w.write_image_data(&img.data).map_err(|e| format!("encode: {e}"))?;
    }
    Ok(out)
}

fn grayscale(img: &mut Image) {
    for px in img.data.chunks_exact_mut(img.channels) {
        let weighted = 299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32;
        let y = ((weighted + 500) / 1000) as u8;
        px[0] = y;
        px[1] = y;
        px[2] = y;
    }
}

fn invert(img: &mut Image) {
    for px in img.data.chunks_exact_mut(img.channels) {
        for v in &mut px[..3] {
            *v = 255 - *v;
        }
    }
}

fn blur3x3(img: &mut Image) {
    let (w, h, ch) = (img.width, img.height, img.channels);
    let src = img.data.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut sum = 0u32;
                for dy in [-1i64, 0, 1] {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    for dx in [-1i64, 0, 1] {
                        let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        sum += src[(yy * w + xx) * ch + c] as u32;
                    }
                }
                img.data[(y * w + x) * ch + c] = ((sum * 2 + 9) / 18) as u8;
            }
        }
    }
}

struct ImageProcessing;

impl Guest for ImageProcessing {
    fn run(input: Vec<u8>) -> Result<Vec<u8>, String> {
        let job: Job = serde_json::from_slice(&input).map_err(|e| format!("bad job: {e}"))?;
        if job.filters.is_empty() {
            return Err("filters must not be empty".into());
        }
        if !safe_path(&job.input_path) || !safe_path(&job.output_path) {
            return Err("paths must be non-empty and free of '..'".into());
        }
        let bytes = std::fs::read(&job.input_path).map_err(|e| format!("read {}: {}", job.input_path, e))?;
        let mut img = decode(&bytes)?;
        for f in &job.filters {
            match f.as_str() {
                "grayscale" => grayscale(&mut img),
                "invert" => invert(&mut img),
                "blur3x3" => blur3x3(&mut img),
                other => return Err(format!("unknown filter '{other}'")),
            }
        }
        let out = encode(&img)?;
        if job.write_output {
            write_durable(&job.output_path, &out).map_err(|e| format!("write {}: {}", job.output_path, e))?;
        }
        Ok(out)
    }
}

export!(ImageProcessing);

fn write_durable(path: &str, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}
