use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::{Dataset, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::tensor::{mse_loss, AdamConfig, AdamState, MseNormalization, ParamRef, Scalar, Tensor};

use super::config::TrainConfig;
use super::model::GvtcnnModel;

/// Loss observed at one iteration, before that iteration's update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    /// 1-based.
    pub iteration: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub records: Vec<LossRecord>,
}

impl LossCurve {
    pub fn first(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn last(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// `iteration,lr,loss` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,lr,loss\n");
        for r in &self.records {
            out.push_str(&format!("{},{:e},{:.9e}\n", r.iteration, r.lr, r.loss));
        }
        out
    }
}

/// Converts the selected pairs to `[0, 1]` input `(n,1,32,32)` and target
/// `(n,heads,32,32)` tensors.
pub fn batch_tensors<T: Scalar>(dataset: &Dataset, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let heads = dataset.variant.head_count();
    let n = indices.len();
    let scale = |v: u8| T::from_f64(v as f64 / 255.0);
    let mut input = Vec::with_capacity(n * PATCH_SIZE * PATCH_SIZE);
    let mut targets = Vec::with_capacity(n * heads * PATCH_SIZE * PATCH_SIZE);
    for &i in indices {
        let pair = &dataset.pairs[i];
        if pair.targets.len() != heads {
            return Err(Error::Config(format!(
                "pair {i} has {} targets, variant {} needs {heads}",
                pair.targets.len(),
                dataset.variant
            )));
        }
        input.extend(pair.input.iter().map(|&v| scale(v)));
        for t in &pair.targets {
            targets.extend(t.iter().map(|&v| scale(v)));
        }
    }
    Ok((
        Tensor::from_vec([n, 1, PATCH_SIZE, PATCH_SIZE], input)?,
        Tensor::from_vec([n, heads, PATCH_SIZE, PATCH_SIZE], targets)?,
    ))
}

/// Adam over the multi-head MSE (per-element mean, so heads are weighted
/// uniformly), one update per call to [`Trainer::step`].
pub struct Trainer<T: Scalar> {
    model: GvtcnnModel<T>,
    adam: AdamState<T>,
    schedule: TrainConfig,
    iteration: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: GvtcnnModel<T>, schedule: TrainConfig) -> Result<Self> {
        schedule.validate()?;
        let sizes: Vec<usize> = model.params().blocks().iter().map(|(_, b)| b.len()).collect();
        let adam = AdamState::new(
            &sizes,
            AdamConfig {
                lr: schedule.lr_initial,
                ..AdamConfig::default()
            },
        );
        Ok(Trainer {
            model,
            adam,
            schedule,
            iteration: 0,
        })
    }

    pub fn model(&self) -> &GvtcnnModel<T> {
        &self.model
    }

    pub fn into_model(self) -> GvtcnnModel<T> {
        self.model
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Loss of the current parameters on a batch, without updating.
    pub fn evaluate(&self, input: &Tensor<T>, targets: &Tensor<T>) -> Result<f64> {
        let out = self.model.forward_stacked(input)?;
        Ok(mse_loss(&out, targets, MseNormalization::Element)?.0)
    }

    pub fn step(&mut self, input: &Tensor<T>, targets: &Tensor<T>) -> Result<LossRecord> {
        let iteration = self.iteration + 1;
        let diverged = |detail: String| Error::Divergence { iteration, detail };
        let acts = self.model.forward_cached(input).map_err(|e| match e {
            Error::Inference { layer } => diverged(format!("non-finite activation after {layer}")),
            other => other,
        })?;
        let (loss, grad) = mse_loss(&acts.output, targets, MseNormalization::Element)?;
        if !loss.is_finite() {
            return Err(diverged(format!("loss is {loss}")));
        }
        let grads = self.model.backward(&acts, &grad)?;
        let lr = self.schedule.lr_at(iteration);
        let grad_blocks = grads.blocks();
        let mut params: Vec<ParamRef<'_, T>> = self
            .model
            .params_mut()
            .blocks_mut()
            .into_iter()
            .zip(&grad_blocks)
            .map(|((name, value), (_, grad))| ParamRef { name, value, grad })
            .collect();
        self.adam.step(&mut params, lr).map_err(|e| match e {
            Error::NonFiniteGradient { param } => diverged(format!("non-finite gradient in {param}")),
            other => other,
        })?;
        self.iteration = iteration;
        Ok(LossRecord { iteration, lr, loss })
    }
}

/// Trains for `total_iterations` steps over minibatches drawn from a
/// per-epoch shuffle (seeded by `tc.seed`; the last partial batch of an
/// epoch is dropped). Batches larger than the dataset are clamped to it.
pub fn train<T: Scalar>(
    model: GvtcnnModel<T>,
    dataset: &Dataset,
    tc: &TrainConfig,
) -> Result<(GvtcnnModel<T>, LossCurve)> {
    train_with_progress(model, dataset, tc, |_| {})
}

pub fn train_with_progress<T: Scalar>(
    model: GvtcnnModel<T>,
    dataset: &Dataset,
    tc: &TrainConfig,
    mut progress: impl FnMut(&LossRecord),
) -> Result<(GvtcnnModel<T>, LossCurve)> {
    if dataset.variant != model.config().variant {
        return Err(Error::Config(format!(
            "dataset is for variant {}, model is variant {}",
            dataset.variant,
            model.config().variant
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut trainer = Trainer::new(model, tc.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let batch = tc.batch_size.min(dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut curve = LossCurve::default();
    for _ in 0..tc.total_iterations {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let (input, targets) = batch_tensors::<T>(dataset, &order[cursor..cursor + batch])?;
        cursor += batch;
        let rec = trainer.step(&input, &targets)?;
        progress(&rec);
        curve.records.push(rec);
    }
    Ok((trainer.into_model(), curve))
}
