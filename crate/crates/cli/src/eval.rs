//! Held-out interpolation quality: per-position PSNR of the copy baseline,
//! DCTIF and GVTCNN against synthesized ground truth.

use gvtcnn_core::datagen::{draw_std, synthesize};
use gvtcnn_core::gvtcnn::infer_plane;
use gvtcnn_core::hevc::interpolate_position;
use gvtcnn_core::metrics::{mse, psnr_from_mse};
use gvtcnn_core::{GvtcnnModel, Plane, PositionId, Result, Variant};
use rayon::prelude::*;

pub const EVAL_COLUMNS: [&str; 11] = [
    "variant",
    "position",
    "dx",
    "dy",
    "psnr_copy",
    "psnr_dctif",
    "psnr_gvtcnn",
    "gain_vs_copy",
    "gap_vs_dctif",
    "images",
    "train_overlap",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PositionScore {
    pub variant: Variant,
    pub position: PositionId,
    pub psnr_copy: f64,
    pub psnr_dctif: f64,
    pub psnr_gvtcnn: f64,
    pub images: usize,
}

impl PositionScore {
    pub fn gain_vs_copy(&self) -> f64 {
        self.psnr_gvtcnn - self.psnr_copy
    }

    pub fn gap_vs_dctif(&self) -> f64 {
        self.psnr_gvtcnn - self.psnr_dctif
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<PositionScore>,
    /// Held-out images whose content hash also appears among the training inputs.
    pub overlapping_images: usize,
}

impl EvalReport {
    pub fn mean_copy(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.psnr_copy))
    }

    pub fn mean_dctif(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.psnr_dctif))
    }

    pub fn mean_gvtcnn(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.psnr_gvtcnn))
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let overlap = u8::from(self.overlapping_images > 0).to_string();
        w.write_record(EVAL_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.variant.to_string(),
                r.position.to_string(),
                r.position.dx().to_string(),
                r.position.dy().to_string(),
                format!("{:.4}", r.psnr_copy),
                format!("{:.4}", r.psnr_dctif),
                format!("{:.4}", r.psnr_gvtcnn),
                format!("{:.4}", r.gain_vs_copy()),
                format!("{:.4}", r.gap_vs_dctif()),
                r.images.to_string(),
                overlap.clone(),
            ])
            .expect("in-memory write");
        }
        if !self.rows.is_empty() {
            let images = self.rows.iter().map(|r| r.images).max().unwrap_or(0);
            w.write_record([
                "mean".to_string(),
                "mean".to_string(),
                String::new(),
                String::new(),
                format!("{:.4}", self.mean_copy()),
                format!("{:.4}", self.mean_dctif()),
                format!("{:.4}", self.mean_gvtcnn()),
                format!("{:.4}", self.mean_gvtcnn() - self.mean_copy()),
                format!("{:.4}", self.mean_gvtcnn() - self.mean_dctif()),
                images.to_string(),
                overlap,
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Scores one model over a corpus. Image `i` is blurred with
/// `draw_std(seed, i, std_range)` and degraded at `qp`; PSNR is computed from
/// the squared error pooled over all images.
pub fn evaluate_model(
    model: &GvtcnnModel,
    corpus: &[Plane],
    qp: u8,
    seed: u64,
    std_range: (f64, f64),
) -> Result<Vec<PositionScore>> {
    let variant = model.config().variant;
    let positions = variant.positions();
    let per_image: Vec<Vec<[f64; 3]>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, raw)| {
            let syn = synthesize(raw, variant, qp, draw_std(seed, i, std_range), None)?;
            let predicted = infer_plane(model, &syn.integer)?;
            positions
                .iter()
                .zip(&syn.targets)
                .zip(&predicted)
                .map(|((&pos, target), net)| {
                    let n = target.data().len() as f64;
                    let dctif = interpolate_position(&syn.integer, pos)?;
                    Ok([
                        mse(syn.integer.data(), target.data()) * n,
                        mse(dctif.data(), target.data()) * n,
                        mse(net.data(), target.data()) * n,
                    ])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let pixels: f64 = corpus
        .iter()
        .map(|p| {
            let f = variant.factor();
            ((p.width() / f) * (p.height() / f)) as f64
        })
        .sum();
    Ok(positions
        .iter()
        .enumerate()
        .map(|(j, &position)| {
            let mut se = [0.0; 3];
            for img in &per_image {
                for (acc, v) in se.iter_mut().zip(img[j]) {
                    *acc += v;
                }
            }
            PositionScore {
                variant,
                position,
                psnr_copy: psnr_from_mse(se[0] / pixels),
                psnr_dctif: psnr_from_mse(se[1] / pixels),
                psnr_gvtcnn: psnr_from_mse(se[2] / pixels),
                images: corpus.len(),
            }
        })
        .collect())
}
