//! Procedural test imagery: continuous scenes rendered with supersampling,
//! so frames can be produced at arbitrary sub-pixel displacements.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::plane::Plane;

#[derive(Clone, Debug)]
enum Component {
    /// Soft step across a line.
    Edge { nx: f64, ny: f64, offset: f64, sharpness: f64, amp: f64 },
    Grating { kx: f64, ky: f64, phase: f64, amp: f64 },
    Blob { cx: f64, cy: f64, inv_two_sigma2: f64, amp: f64 },
    /// Smoothly interpolated lattice noise.
    Noise { cell: f64, cols: usize, values: Vec<f64>, amp: f64 },
}

impl Component {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Component::Edge { nx, ny, offset, sharpness, amp } => amp * (sharpness * (nx * x + ny * y - offset)).tanh(),
            Component::Grating { kx, ky, phase, amp } => amp * (kx * x + ky * y + phase).sin(),
            Component::Blob { cx, cy, inv_two_sigma2, amp } => {
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                amp * (-d2 * inv_two_sigma2).exp()
            }
            Component::Noise { cell, cols, ref values, amp } => {
                let gx = (x / cell).max(0.0);
                let gy = (y / cell).max(0.0);
                let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
                let rows = values.len() / cols;
                let (ix, iy) = (ix.min(cols - 2), iy.min(rows - 2));
                let (fx, fy) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
                let at = |c: usize, r: usize| values[r * cols + c];
                let top = at(ix, iy) * (1.0 - fx) + at(ix + 1, iy) * fx;
                let bottom = at(ix, iy + 1) * (1.0 - fx) + at(ix + 1, iy + 1) * fx;
                amp * (top * (1.0 - fy) + bottom * fy)
            }
        }
    }
}

fn smooth(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// A random continuous scene covering roughly `width × height` pixels
/// (plus margin for motion).
#[derive(Clone, Debug)]
pub struct Scene {
    base: f64,
    components: Vec<Component>,
}

impl Scene {
    pub fn random(width: usize, height: usize, seed: u64) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (width as f64, height as f64);
        let mut components = Vec::new();
        for _ in 0..rng.random_range(3..7) {
            let angle = rng.random_range(0.0..PI);
            let (nx, ny) = (angle.cos(), angle.sin());
            let offset = nx * rng.random_range(0.0..w) + ny * rng.random_range(0.0..h);
            components.push(Component::Edge {
                nx,
                ny,
                offset,
                sharpness: rng.random_range(0.3..3.0),
                amp: rng.random_range(10.0..35.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            });
        }
        for _ in 0..rng.random_range(2..5) {
            let angle = rng.random_range(0.0..PI);
            let freq = rng.random_range(0.15..1.3);
            components.push(Component::Grating {
                kx: freq * angle.cos(),
                ky: freq * angle.sin(),
                phase: rng.random_range(0.0..2.0 * PI),
                amp: rng.random_range(4.0..16.0),
            });
        }
        for _ in 0..rng.random_range(2..6) {
            let sigma: f64 = rng.random_range(2.0..w.min(h) / 4.0 + 3.0);
            components.push(Component::Blob {
                cx: rng.random_range(0.0..w),
                cy: rng.random_range(0.0..h),
                inv_two_sigma2: 1.0 / (2.0 * sigma * sigma),
                amp: rng.random_range(-40.0..40.0),
            });
        }
        for cell in [2.5, 7.0] {
            let margin = 64.0;
            let cols = ((w + 2.0 * margin) / cell).ceil() as usize + 3;
            let rows = ((h + 2.0 * margin) / cell).ceil() as usize + 3;
            let values = (0..cols * rows).map(|_| rng.random_range(-1.0..1.0)).collect();
            components.push(Component::Noise {
                cell,
                cols,
                values,
                amp: if cell < 3.0 { rng.random_range(4.0..12.0) } else { rng.random_range(8.0..20.0) },
            });
        }
        Scene {
            base: rng.random_range(90.0..165.0),
            components,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        // noise lattices start at -margin
        self.base
            + self
                .components
                .iter()
                .map(|c| match c {
                    Component::Noise { .. } => c.eval(x + 64.0, y + 64.0),
                    _ => c.eval(x, y),
                })
                .sum::<f64>()
    }

    /// Renders the scene displaced by `(dx, dy)` pixels with 4×4 supersampling.
    pub fn render(&self, width: usize, height: usize, dx: f64, dy: f64) -> Plane {
        const S: usize = 4;
        Plane::from_fn(width, height, |x, y| {
            let mut acc = 0.0;
            for sy in 0..S {
                for sx in 0..S {
                    let px = x as f64 + (sx as f64 + 0.5) / S as f64 - dx;
                    let py = y as f64 + (sy as f64 + 0.5) / S as f64 - dy;
                    acc += self.eval(px, py);
                }
            }
            (acc / (S * S) as f64).round().clamp(0.0, 255.0) as u8
        })
        .expect("non-empty plane")
    }
}

/// One still image.
pub fn synthetic_plane(width: usize, height: usize, seed: u64) -> Plane {
    Scene::random(width, height, seed).render(width, height, 0.0, 0.0)
}

/// `count` images with seeds `seed, seed + 1, ...`.
pub fn synthetic_corpus(width: usize, height: usize, count: usize, seed: u64) -> Vec<Plane> {
    (0..count as u64).map(|i| synthetic_plane(width, height, seed.wrapping_add(i))).collect()
}

/// Frames of one scene under constant (typically fractional) global motion:
/// frame `t` is the scene shifted by `t * velocity` pixels.
pub fn synthetic_sequence(width: usize, height: usize, frames: usize, velocity: (f64, f64), seed: u64) -> Vec<Plane> {
    let scene = Scene::random(width, height, seed);
    (0..frames)
        .map(|t| scene.render(width, height, t as f64 * velocity.0, t as f64 * velocity.1))
        .collect()
}
