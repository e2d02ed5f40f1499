//! Seeded synthetic sequences of moving Gaussian blobs with exact flows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FlowField, FlowSequence, Image, ImageSequence};
use crate::metrics::add_gaussian_noise;

pub const BACKGROUND: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Motion {
    /// Constant shift per frame, in pixels.
    Translate { dx: f64, dy: f64 },
    /// Rotation about the image centre, in degrees per frame.
    Rotate { degrees: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

impl Blob {
    fn at(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        self.amplitude * (-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub motion: Motion,
    /// One blob is placed at the centre; more are scattered by `seed`.
    pub blobs: usize,
    pub seed: u64,
    /// Variance of the added Gaussian noise (zero for none).
    pub noise_variance: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 5,
            motion: Motion::Translate { dx: 1.0, dy: 0.5 },
            blobs: 1,
            seed: 0,
            noise_variance: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub clean: ImageSequence,
    pub observed: ImageSequence,
    /// `flows[k]` maps frame `k` onto frame `k + 1`: `uᵏ⁺¹(x + v) = uᵏ(x)`.
    pub flows: FlowSequence,
    pub blobs: Vec<Blob>,
}

impl Scene {
    /// Pixels of frame `k` where the blobs rise above `fraction` of the
    /// strongest amplitude.
    pub fn support(&self, k: usize, fraction: f64) -> Vec<bool> {
        let peak = self.blobs.iter().map(|b| b.amplitude).fold(0.0, f64::max);
        self.clean.frames()[k].data().iter().map(|&v| v - BACKGROUND > fraction * peak).collect()
    }
}

fn blob_layout(spec: &SceneSpec) -> Vec<Blob> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let base = w.min(h);
    let mut blobs = vec![Blob { cx: (w - 1.0) / 2.0, cy: (h - 1.0) / 2.0, sigma: base / 8.0, amplitude: 0.6 }];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_b10b);
    for _ in 1..spec.blobs {
        blobs.push(Blob {
            cx: rng.random_range(0.2 * w..0.8 * w),
            cy: rng.random_range(0.2 * h..0.8 * h),
            sigma: rng.random_range(base / 20.0..base / 8.0),
            amplitude: rng.random_range(0.2..0.5),
        });
    }
    blobs
}

/// Maps a point of frame `k` back to its position in frame 0, and gives the
/// displacement from frame `k` to frame `k + 1`.
fn motion_maps(motion: Motion, w: usize, h: usize) -> (impl Fn(f64, f64, usize) -> (f64, f64), impl Fn(f64, f64) -> (f64, f64)) {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let back = move |x: f64, y: f64, k: usize| match motion {
        Motion::Translate { dx, dy } => (x - k as f64 * dx, y - k as f64 * dy),
        Motion::Rotate { degrees } => {
            let t = -(k as f64) * degrees.to_radians();
            let (s, c) = t.sin_cos();
            let (px, py) = (x - cx, y - cy);
            (cx + c * px - s * py, cy + s * px + c * py)
        }
    };
    let step = move |x: f64, y: f64| match motion {
        Motion::Translate { dx, dy } => (dx, dy),
        Motion::Rotate { degrees } => {
            let (s, c) = degrees.to_radians().sin_cos();
            let (px, py) = (x - cx, y - cy);
            (cx + c * px - s * py - x, cy + s * px + c * py - y)
        }
    };
    (back, step)
}

pub fn blob_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.width < 2 || spec.height < 2 || spec.frames < 2 {
        return Err(Error::param("scenes need at least 2×2 pixels and 2 frames"));
    }
    if spec.blobs == 0 {
        return Err(Error::param("scenes need at least one blob"));
    }
    let blobs = blob_layout(spec);
    let (back, step) = motion_maps(spec.motion, spec.width, spec.height);
    let frames: Vec<Image> = (0..spec.frames)
        .map(|k| {
            Image::from_fn(spec.width, spec.height, |i, j| {
                let (x, y) = back(i as f64, j as f64, k);
                BACKGROUND + blobs.iter().map(|b| b.at(x, y)).sum::<f64>()
            })
        })
        .collect();
    let field = FlowField::from_fn(spec.width, spec.height, |i, j| step(i as f64, j as f64));
    let flows = FlowSequence::new(vec![field; spec.frames - 1])?;
    let clean = ImageSequence::new(frames)?;
    let observed = add_gaussian_noise(&clean, 0.0, spec.noise_variance, spec.seed)?;
    Ok(Scene { clean, observed, flows, blobs })
}
