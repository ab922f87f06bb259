//! Procedural places rendered under several appearance conditions.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mining::manifest::{FrameRecord, Pose, SequenceManifest};

/// Distance between consecutive places along the synthetic route, metres.
pub const PLACE_SPACING_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_places")]
    pub places: usize,
    #[serde(default = "default_conditions")]
    pub conditions: usize,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_places() -> usize {
    50
}

fn default_conditions() -> usize {
    3
}

fn default_width() -> u32 {
    32
}

fn default_height() -> u32 {
    24
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            places: default_places(),
            conditions: default_conditions(),
            width: default_width(),
            height: default_height(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.places < 2 {
            return Err(Error::config("synthetic dataset needs at least 2 places"));
        }
        if self.conditions < 1 {
            return Err(Error::config("synthetic dataset needs at least 1 condition"));
        }
        if self.width < 4 || self.height < 4 || self.width > 4096 || self.height > 4096 {
            return Err(Error::config(format!(
                "image size {}x{} outside 4..=4096",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Independent stream for (`seed`, `domain`, `index`).
fn sub_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index);
    rng
}

#[derive(Debug, Clone, Copy)]
enum ShapeKind {
    Rect,
    Ellipse,
    Triangle,
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    kind: ShapeKind,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: [f64; 3],
}

#[derive(Debug, Clone)]
struct Scene {
    base: [f64; 3],
    stripe: [f64; 3],
    angle: f64,
    freq: f64,
    phase: f64,
    blobs: Vec<Blob>,
}

fn random_color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)]
}

impl Scene {
    fn new(seed: u64, place: usize) -> Self {
        let mut rng = sub_rng(seed, 1, place as u64);
        // each place gets its own tonal window, so scenes differ in overall
        // luminance as well as layout
        let mid = rng.gen_range(0.3..0.7);
        let (lo, hi) = (mid - 0.3, mid + 0.3);
        let base = random_color(&mut rng, lo, hi);
        let stripe = random_color(&mut rng, lo, hi);
        let angle = rng.gen_range(0.0..PI);
        let freq = rng.gen_range(1.5..5.0);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let n = rng.gen_range(4..=6);
        let blobs = (0..n)
            .map(|_| {
                let kind = match rng.gen_range(0..3) {
                    0 => ShapeKind::Rect,
                    1 => ShapeKind::Ellipse,
                    _ => ShapeKind::Triangle,
                };
                Blob {
                    kind,
                    cx: rng.gen_range(0.1..0.9),
                    cy: rng.gen_range(0.1..0.9),
                    rx: rng.gen_range(0.08..0.25),
                    ry: rng.gen_range(0.08..0.25),
                    color: random_color(&mut rng, lo, hi),
                }
            })
            .collect();
        Scene {
            base,
            stripe,
            angle,
            freq,
            phase,
            blobs,
        }
    }

    /// Colour at normalised coordinates; later blobs paint over earlier ones.
    fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let t = 0.5
            + 0.5
                * (2.0 * PI * self.freq * (u * self.angle.cos() + v * self.angle.sin()) + self.phase)
                    .sin();
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = self.base[k] * (1.0 - t) + self.stripe[k] * t;
        }
        for b in &self.blobs {
            let (dx, dy) = ((u - b.cx) / b.rx, (v - b.cy) / b.ry);
            let inside = match b.kind {
                ShapeKind::Rect => dx.abs() <= 1.0 && dy.abs() <= 1.0,
                ShapeKind::Ellipse => dx * dx + dy * dy <= 1.0,
                ShapeKind::Triangle => dy <= 1.0 && dy >= 2.0 * dx.abs() - 1.0,
            };
            if inside {
                c = b.color;
            }
        }
        c
    }
}

/// Global appearance change applied to every frame of one condition.
#[derive(Debug, Clone, Copy)]
struct Appearance {
    brightness: f64,
    contrast: f64,
    hue: [[f64; 3]; 3],
    noise: f64,
}

fn hue_matrix(angle: f64) -> [[f64; 3]; 3] {
    let (c, s) = (angle.cos(), angle.sin());
    let a = (1.0 - c) / 3.0;
    let b = (1.0f64 / 3.0).sqrt() * s;
    [[c + a, a - b, a + b], [a + b, c + a, a - b], [a - b, a + b, c + a]]
}

impl Appearance {
    fn new(seed: u64, condition: usize) -> Self {
        if condition == 0 {
            return Appearance {
                brightness: 0.0,
                contrast: 1.0,
                hue: hue_matrix(0.0),
                noise: 0.03,
            };
        }
        let mut rng = sub_rng(seed, 2, condition as u64);
        let sign = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let brightness = sign(&mut rng) * rng.gen_range(0.04..0.1);
        let contrast = if rng.gen_bool(0.5) {
            rng.gen_range(0.8..0.9)
        } else {
            rng.gen_range(1.1..1.2)
        };
        let angle = sign(&mut rng) * rng.gen_range(60.0f64..150.0).to_radians();
        Appearance {
            brightness,
            contrast,
            hue: hue_matrix(angle),
            noise: 0.03,
        }
    }

    fn apply(&self, c: [f64; 3], noise: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for k in 0..3 {
            let h = self.hue[k][0] * c[0] + self.hue[k][1] * c[1] + self.hue[k][2] * c[2];
            out[k] = ((h - 0.5) * self.contrast + 0.5 + self.brightness + noise[k]).clamp(0.0, 1.0);
        }
        out
    }
}

/// Renders `place` as seen under `condition`, including a per-frame shift of
/// up to two pixels and additive noise.
pub fn render_place(cfg: &SynthConfig, condition: usize, place: usize) -> RgbImage {
    let scene = Scene::new(cfg.seed, place);
    let look = Appearance::new(cfg.seed, condition);
    let mut rng = sub_rng(cfg.seed, 3, (condition * cfg.places + place) as u64);
    let shift_x = rng.gen_range(-2i32..=2) as f64;
    let shift_y = rng.gen_range(-2i32..=2) as f64;
    let (w, h) = (cfg.width, cfg.height);
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let u = (x as f64 + 0.5 + shift_x) / w as f64;
            let v = (y as f64 + 0.5 + shift_y) / h as f64;
            let noise = [
                rng.gen_range(-look.noise..look.noise),
                rng.gen_range(-look.noise..look.noise),
                rng.gen_range(-look.noise..look.noise),
            ];
            let c = look.apply(scene.sample(u, v), noise);
            img.put_pixel(x, y, Rgb(c.map(|v| (v * 255.0).round() as u8)));
        }
    }
    img
}

pub fn sequence_id(condition: usize) -> String {
    format!("synth-c{condition}")
}

/// Manifest of one condition; images live under `images/c{condition}/`.
pub fn synthetic_manifest(cfg: &SynthConfig, condition: usize, base_dir: &Path) -> SequenceManifest {
    SequenceManifest {
        seq_id: sequence_id(condition),
        condition: format!("c{condition}"),
        geographic: false,
        base_dir: base_dir.to_path_buf(),
        records: (0..cfg.places)
            .map(|p| FrameRecord {
                frame: p,
                timestamp: p as f64,
                pose: Pose::Metric {
                    x: p as f64 * PLACE_SPACING_M,
                    y: 0.0,
                    z: 0.0,
                },
                image: format!("images/c{condition}/p{p:04}.png"),
            })
            .collect(),
    }
}

/// Path of the manifest file written for `condition`.
pub fn manifest_path(out_dir: &Path, condition: usize) -> PathBuf {
    out_dir.join(format!("{}.csv", sequence_id(condition)))
}

/// Writes PNG images and one manifest per condition under `out_dir`.
pub fn generate_synthetic_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<Vec<SequenceManifest>> {
    cfg.validate()?;
    let mut manifests = Vec::with_capacity(cfg.conditions);
    for c in 0..cfg.conditions {
        let dir = out_dir.join(format!("images/c{c}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let m = synthetic_manifest(cfg, c, out_dir);
        for p in 0..cfg.places {
            let path = m.image_path(p);
            render_place(cfg, c, p)
                .save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| match e {
                    image::ImageError::IoError(io) => Error::io(&path, io),
                    other => Error::Image {
                        path: path.clone(),
                        message: other.to_string(),
                    },
                })?;
        }
        let mpath = manifest_path(out_dir, c);
        let file = std::fs::File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
        m.write_csv(std::io::BufWriter::new(file))?;
        manifests.push(m);
    }
    Ok(manifests)
}
