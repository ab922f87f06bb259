//! Image decoding and conversion to network input tensors.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::network::InputShape;
use crate::tensor::{Shape4, Tensor};

/// Planar `(1, 3, H, W)` tensor with values in `[0, 1]`.
pub fn rgb_to_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn(Shape4::new(1, 3, h, w), |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        raw[p * 3 + c] as f32 / 255.0
    })
}

pub fn gray_to_tensor(img: &GrayImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn(Shape4::new(1, 1, h, w), |i| raw[i] as f32 / 255.0)
}

/// Bilinear resampling with half-pixel centres and clamped borders.
pub fn resize_bilinear(src: &Tensor<f32>, height: usize, width: usize) -> Tensor<f32> {
    let s = src.shape();
    if s.h == height && s.w == width {
        return src.clone();
    }
    let sy = s.h as f64 / height as f64;
    let sx = s.w as f64 / width as f64;
    let taps = |o: usize, scale: f64, n: usize| {
        let f = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (f - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..width).map(|x| taps(x, sx, s.w)).collect();
    let ys: Vec<_> = (0..height).map(|y| taps(y, sy, s.h)).collect();
    let data = src.data();
    Tensor::from_fn(Shape4::new(s.n, s.c, height, width), |i| {
        let x = i % width;
        let y = (i / width) % height;
        let plane = i / (width * height);
        let base = plane * s.h * s.w;
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let at = |yy: usize, xx: usize| data[base + yy * s.w + xx];
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Converts a decoded image to the network input shape, resizing when needed.
pub fn image_to_input(img: &DynamicImage, input: &InputShape) -> Result<Tensor<f32>> {
    let t = match input.channels {
        1 => gray_to_tensor(&img.to_luma8()),
        3 => rgb_to_tensor(&img.to_rgb8()),
        c => {
            return Err(Error::config(format!(
                "images can feed 1 or 3 input channels, spec wants {c}"
            )))
        }
    };
    Ok(resize_bilinear(&t, input.height, input.width))
}

/// Decodes a PNG or PNM file into a network input tensor.
pub fn load_image(path: &Path, input: &InputShape) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    image_to_input(&img, input)
}
