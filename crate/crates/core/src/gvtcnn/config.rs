use crate::error::{Error, Result};
use crate::position::{PositionId, Variant};
use crate::tensor::PaddingMode;

/// QPs that get their own trained model pair.
pub const QP_TAGS: [u8; 4] = [22, 27, 32, 37];

/// Maps any QP to the nearest trained tag; ties go to the smaller QP.
pub fn nearest_qp_tag(qp: u8) -> u8 {
    *QP_TAGS
        .iter()
        .min_by_key(|&&t| ((t as i16 - qp as i16).abs(), t))
        .expect("tag list is non-empty")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GvtcnnConfig {
    pub variant: Variant,
    pub qp_tag: u8,
    /// Channels of the first layer, the last trunk layer and the shared map.
    pub wide_channels: usize,
    pub narrow_channels: usize,
    /// Number of narrow layers between the first and the last trunk layer.
    pub narrow_layers: usize,
    pub padding: PaddingMode,
}

impl GvtcnnConfig {
    pub fn new(variant: Variant, qp_tag: u8) -> Self {
        GvtcnnConfig {
            variant,
            qp_tag,
            wide_channels: 48,
            narrow_channels: 10,
            narrow_layers: 8,
            padding: PaddingMode::Replicate,
        }
    }

    pub fn head_count(&self) -> usize {
        self.variant.head_count()
    }

    pub fn positions(&self) -> Vec<PositionId> {
        self.variant.positions()
    }

    /// Convolutions in the trunk (first, narrow and last layers).
    pub fn trunk_depth(&self) -> usize {
        self.narrow_layers + 2
    }

    pub fn validate(&self) -> Result<()> {
        if !QP_TAGS.contains(&self.qp_tag) {
            return Err(Error::Config(format!(
                "qp tag {} is not one of {QP_TAGS:?}",
                self.qp_tag
            )));
        }
        if self.wide_channels == 0 || self.narrow_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.wide_channels > u16::MAX as usize || self.narrow_channels > u16::MAX as usize {
            return Err(Error::Config("channel counts must fit in 16 bits".into()));
        }
        Ok(())
    }
}

/// Optimization schedule. Defaults are the full-scale values; every field can
/// be overridden for desk-scale runs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Iterations `1..=lr_drop_iteration` use `lr_initial`, later ones
    /// `lr_initial / lr_drop_factor`.
    pub lr_drop_iteration: u64,
    pub lr_drop_factor: f64,
    pub total_iterations: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_size: 32,
            stride: 16,
            batch_size: 128,
            lr_initial: 1e-4,
            lr_drop_iteration: 30_000,
            lr_drop_factor: 10.0,
            total_iterations: 50_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate used by 1-based `iteration`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        if iteration <= self.lr_drop_iteration {
            self.lr_initial
        } else {
            self.lr_initial / self.lr_drop_factor
        }
    }

    /// Desk-scale schedule: `iterations` steps with the drop at the same
    /// relative point (3/5) as the full schedule.
    pub fn scaled(iterations: u64, batch_size: usize, lr_initial: f64, seed: u64) -> Self {
        let d = TrainConfig::default();
        TrainConfig {
            batch_size,
            lr_initial,
            lr_drop_iteration: (iterations * d.lr_drop_iteration / d.total_iterations).min(iterations.saturating_sub(1)),
            total_iterations: iterations,
            seed,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.stride == 0 || self.batch_size == 0 || self.total_iterations == 0 {
            return Err(Error::Config("patch size, stride, batch size and iterations must be positive".into()));
        }
        if !(self.lr_initial >= 0.0) || !self.lr_initial.is_finite() {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr_initial)));
        }
        if self.lr_drop_iteration >= self.total_iterations {
            return Err(Error::Config(format!(
                "lr drop iteration {} must come before the last iteration {}",
                self.lr_drop_iteration, self.total_iterations
            )));
        }
        if !(self.lr_drop_factor > 0.0) {
            return Err(Error::Config(format!("invalid lr drop factor {}", self.lr_drop_factor)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_tag_prefers_smaller_on_ties() {
        assert_eq!(nearest_qp_tag(0), 22);
        assert_eq!(nearest_qp_tag(24), 22);
        assert_eq!(nearest_qp_tag(25), 27);
        assert_eq!(nearest_qp_tag(30), 32);
        assert_eq!(nearest_qp_tag(29), 27);
        assert_eq!(nearest_qp_tag(34), 32);
        assert_eq!(nearest_qp_tag(51), 37);
    }

    #[test]
    fn schedule_drops_after_threshold() {
        let tc = TrainConfig::default();
        assert_eq!(tc.lr_at(1), 1e-4);
        assert_eq!(tc.lr_at(30_000), 1e-4);
        assert!((tc.lr_at(30_001) - 1e-5).abs() < 1e-20);
        assert_eq!(
            (tc.batch_size, tc.total_iterations, tc.lr_drop_iteration, tc.patch_size, tc.stride),
            (128, 50_000, 30_000, 32, 16)
        );
    }

    #[test]
    fn config_validation() {
        assert!(GvtcnnConfig::new(Variant::H, 22).validate().is_ok());
        assert!(GvtcnnConfig::new(Variant::H, 23).validate().is_err());
        let tc = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(tc.validate().is_err());
        let tc = TrainConfig {
            total_iterations: 500,
            ..TrainConfig::default()
        };
        assert!(tc.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
