//! Training-pair synthesis: blur the source, take sub-pixel targets from the
//! blurred image and the integer sample from the raw image, degrade the
//! integer sample with a codec-loss proxy, and cut aligned patches.

mod dataset;
mod proxy;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::position::Variant;

pub use dataset::{decode_dataset, encode_dataset, read_dataset, write_dataset, Dataset, SamplePair, PATCH_SIZE};
pub use proxy::{qstep, reconstruction_proxy, MAX_QP};

/// Smallest corpus image accepted by [`make_dataset`].
pub const MIN_SOURCE_SIZE: usize = 8;

/// Real-valued plane holding blurred samples before they are rounded.
#[derive(Clone, Debug, PartialEq)]
pub struct RealPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RealPlane {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn from_plane(p: &Plane) -> RealPlane {
        RealPlane {
            width: p.width(),
            height: p.height(),
            data: p.data().iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Normalized 3×3 Gaussian, indexed `[dy + 1][dx + 1]`.
pub type Kernel3 = [[f64; 3]; 3];

pub fn gaussian_kernel(std: f64) -> Result<Kernel3> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Parameter(format!("gaussian std must be positive, got {std}")));
    }
    let mut k = [[0.0; 3]; 3];
    let mut sum = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (u, w) = (j as f64 - 1.0, i as f64 - 1.0);
            *v = (-(u * u + w * w) / (2.0 * std * std)).exp();
            sum += *v;
        }
    }
    for v in k.iter_mut().flatten() {
        *v /= sum;
    }
    Ok(k)
}

/// 2-D correlation with replicate boundary, kept in real precision.
pub fn blur(plane: &Plane, kernel: &Kernel3) -> RealPlane {
    let (w, h) = (plane.width(), plane.height());
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, row) in kernel.iter().enumerate() {
                for (dx, &k) in row.iter().enumerate() {
                    let s = plane.get_clamped(x as isize + dx as isize - 1, y as isize + dy as isize - 1);
                    acc += k * s as f64;
                }
            }
            data.push(acc);
        }
    }
    RealPlane { width: w, height: h, data }
}

/// Round half away from zero, clamped to the 8-bit range.
#[inline]
pub fn quantize_sample(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// In-patch offsets `(row, col)` of the targets for a sampling factor, row-major.
pub fn target_offsets(variant: Variant) -> Vec<(usize, usize)> {
    let f = variant.factor();
    let half = f / 2;
    let mut out = Vec::new();
    for i in 0..f {
        for j in 0..f {
            let on_half_grid = i % half == 0 && j % half == 0;
            let keep = match variant {
                Variant::H => (i, j) != (0, 0),
                Variant::Q => !on_half_grid,
            };
            if keep {
                out.push((i, j));
            }
        }
    }
    out
}

fn sample(raw: &Plane, blurred: &RealPlane, variant: Variant) -> Result<(Plane, Vec<Plane>)> {
    let f = variant.factor();
    let (w, h) = (raw.width(), raw.height());
    if blurred.width != w || blurred.height != h {
        return Err(Error::Input(format!(
            "raw {w}x{h} and blurred {}x{} differ in size",
            blurred.width, blurred.height
        )));
    }
    if w % f != 0 || h % f != 0 {
        return Err(Error::Input(format!(
            "{w}x{h} plane is not divisible into {f}x{f} patches"
        )));
    }
    let (ow, oh) = (w / f, h / f);
    let integer = Plane::from_fn(ow, oh, |c, r| raw.get(f * c, f * r))?;
    let targets = target_offsets(variant)
        .into_iter()
        .map(|(i, j)| Plane::from_fn(ow, oh, |c, r| quantize_sample(blurred.get(f * c + j, f * r + i))))
        .collect::<Result<Vec<_>>>()?;
    Ok((integer, targets))
}

/// Half-pel sampling over disjoint 2×2 patches: integer from `raw`,
/// targets `f2, f8, f10` from `blurred`.
pub fn sample_half(raw: &Plane, blurred: &RealPlane) -> Result<(Plane, Vec<Plane>)> {
    sample(raw, blurred, Variant::H)
}

/// Quarter-pel sampling over disjoint 4×4 patches: the 12 targets sit at the
/// in-patch offsets with an odd row or column, row-major.
pub fn sample_quarter(raw: &Plane, blurred: &RealPlane) -> Result<(Plane, Vec<Plane>)> {
    sample(raw, blurred, Variant::Q)
}

/// Where the integer-sample degradation comes from.
#[derive(Clone, Copy, Debug)]
pub enum Degradation<'a> {
    /// DCT quantization proxy at the dataset QP.
    Proxy,
    /// Integer planes already degraded elsewhere (e.g. by a real codec), one
    /// per corpus image, each the size of the sampled integer plane.
    Precomputed(&'a [Plane]),
    None,
}

/// Full-plane synthesis result for one source image.
#[derive(Clone, Debug)]
pub struct Synthesized {
    pub std: f64,
    /// Integer-position sample after degradation (the network input).
    pub integer: Plane,
    /// Integer-position sample before degradation.
    pub clean_integer: Plane,
    /// Ground-truth planes in the variant's head order.
    pub targets: Vec<Plane>,
}

/// Runs blur, sampling and degradation on one image. Images whose size is not
/// a multiple of the sampling factor are cropped at the bottom/right.
pub fn synthesize(
    raw: &Plane,
    variant: Variant,
    qp: u8,
    std: f64,
    degraded: Option<&Plane>,
) -> Result<Synthesized> {
    let f = variant.factor();
    let (w, h) = (raw.width() / f * f, raw.height() / f * f);
    if w == 0 || h == 0 {
        return Err(Error::Input(format!(
            "{}x{} image too small for {f}x{f} sampling",
            raw.width(),
            raw.height()
        )));
    }
    let raw = if (w, h) == (raw.width(), raw.height()) {
        raw.clone()
    } else {
        raw.crop(0, 0, w, h)?
    };
    let kernel = gaussian_kernel(std)?;
    let blurred = blur(&raw, &kernel);
    let (clean_integer, targets) = sample(&raw, &blurred, variant)?;
    let integer = match degraded {
        Some(p) => {
            if (p.width(), p.height()) != (clean_integer.width(), clean_integer.height()) {
                return Err(Error::Input(format!(
                    "pre-degraded plane is {}x{}, expected {}x{}",
                    p.width(),
                    p.height(),
                    clean_integer.width(),
                    clean_integer.height()
                )));
            }
            p.clone()
        }
        None => reconstruction_proxy(&clean_integer, qp)?,
    };
    Ok(Synthesized {
        std,
        integer,
        clean_integer,
        targets,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetOptions {
    pub variant: Variant,
    pub qp: u8,
    pub std_range: (f64, f64),
    pub seed: u64,
    pub stride: usize,
}

impl DatasetOptions {
    pub fn new(variant: Variant, qp: u8, seed: u64) -> Self {
        DatasetOptions {
            variant,
            qp,
            std_range: variant.default_std_range(),
            seed,
            stride: 16,
        }
    }
}

/// Blur std for corpus image `index`: one uniform draw per image from a
/// stream keyed by the image index, so the draw does not depend on
/// processing order.
pub fn draw_std(seed: u64, index: usize, (lo, hi): (f64, f64)) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Top-left corners of aligned `PATCH_SIZE` windows with the given stride.
pub fn patch_origins(len: usize, stride: usize) -> Vec<usize> {
    if len < PATCH_SIZE {
        return Vec::new();
    }
    (0..=(len - PATCH_SIZE) / stride).map(|i| i * stride).collect()
}

fn validate(corpus: &[Plane], opts: &DatasetOptions) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Dataset("corpus is empty".into()));
    }
    if opts.qp > MAX_QP {
        return Err(Error::Parameter(format!("qp {} outside [0, {MAX_QP}]", opts.qp)));
    }
    let (lo, hi) = opts.std_range;
    if !(lo > 0.0) || hi < lo {
        return Err(Error::Parameter(format!("invalid std range [{lo}, {hi}]")));
    }
    if opts.stride == 0 {
        return Err(Error::Parameter("patch stride must be positive".into()));
    }
    if let Some(p) = corpus
        .iter()
        .find(|p| p.width() < MIN_SOURCE_SIZE || p.height() < MIN_SOURCE_SIZE)
    {
        return Err(Error::Input(format!(
            "corpus image {}x{} is smaller than {MIN_SOURCE_SIZE}x{MIN_SOURCE_SIZE}",
            p.width(),
            p.height()
        )));
    }
    Ok(())
}

/// Builds the training set for one variant and QP, in corpus order.
pub fn make_dataset(corpus: &[Plane], opts: &DatasetOptions) -> Result<Dataset> {
    build(corpus, opts, Degradation::Proxy)
}

pub fn make_dataset_with(corpus: &[Plane], opts: &DatasetOptions, degradation: Degradation<'_>) -> Result<Dataset> {
    build(corpus, opts, degradation)
}

fn build(corpus: &[Plane], opts: &DatasetOptions, degradation: Degradation<'_>) -> Result<Dataset> {
    validate(corpus, opts)?;
    if let Degradation::Precomputed(d) = degradation {
        if d.len() != corpus.len() {
            return Err(Error::Dataset(format!(
                "{} pre-degraded planes for {} corpus images",
                d.len(),
                corpus.len()
            )));
        }
    }
    let per_image: Vec<Result<Vec<SamplePair>>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, raw)| {
            let std = draw_std(opts.seed, i, opts.std_range);
            let synth = match degradation {
                Degradation::Proxy => synthesize(raw, opts.variant, opts.qp, std, None)?,
                Degradation::Precomputed(d) => synthesize(raw, opts.variant, opts.qp, std, Some(&d[i]))?,
                Degradation::None => {
                    let s = synthesize(raw, opts.variant, opts.qp, std, None)?;
                    Synthesized {
                        integer: s.clean_integer.clone(),
                        ..s
                    }
                }
            };
            cut_patches(&synth, opts)
        })
        .collect();
    let mut pairs = Vec::new();
    for r in per_image {
        pairs.extend(r?);
    }
    if pairs.is_empty() {
        return Err(Error::Dataset(format!(
            "no {PATCH_SIZE}x{PATCH_SIZE} patch fits in any corpus image"
        )));
    }
    Ok(Dataset {
        variant: opts.variant,
        qp: opts.qp,
        pairs,
    })
}

fn cut_patches(s: &Synthesized, opts: &DatasetOptions) -> Result<Vec<SamplePair>> {
    let xs = patch_origins(s.integer.width(), opts.stride);
    let ys = patch_origins(s.integer.height(), opts.stride);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let input = s.integer.crop(x, y, PATCH_SIZE, PATCH_SIZE)?.into_vec();
            let targets = s
                .targets
                .iter()
                .map(|t| t.crop(x, y, PATCH_SIZE, PATCH_SIZE).map(Plane::into_vec))
                .collect::<Result<Vec<_>>>()?;
            out.push(SamplePair { input, targets });
        }
    }
    Ok(out)
}
