//! Mini-batch AdamW training of the encoding head with early stopping on
//! validation mean Pearson R.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{BatchWorkspace, EncoderArchitecture, EncoderModel, Gradients};
use super::stats::pearson_per_voxel;
use super::{EncoderError, ResponseDataset};
use crate::adam::{AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            max_epochs: 50,
            patience: 5,
            batch_size: 32,
            weight_decay: 1e-2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(EncoderError::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.patience == 0 {
            return Err(EncoderError::InvalidConfig("patience must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EncoderError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(EncoderError::InvalidConfig("max_epochs must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(EncoderError::InvalidConfig(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamConfig {
        AdamConfig::adamw(self.learning_rate, self.weight_decay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mean_r: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    /// Full-train-set MSE of the freshly initialised model.
    pub initial_train_mse: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// `epoch,train_mse,val_mean_r`, one row per completed epoch.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Patience-based stopping rule on a metric where larger is better.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records `metric` for `epoch`; returns `true` when it is a new best.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        match self.best {
            Some((_, b)) if metric <= b => {
                self.bad_epochs += 1;
                false
            }
            _ => {
                self.best = Some((epoch, metric));
                self.bad_epochs = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad_epochs >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }
}

/// Mean voxelwise Pearson R of `model` on `data`.
pub fn mean_pearson(model: &EncoderModel, data: &ResponseDataset) -> Result<f64, EncoderError> {
    let pred = model.predict_many(data.embeddings())?;
    Ok(pearson_per_voxel(&pred, data.responses())?.mean())
}

/// Trains a freshly initialised model and returns the best-validation checkpoint.
pub fn train(
    train_set: &ResponseDataset,
    val_set: &ResponseDataset,
    arch: &EncoderArchitecture,
    cfg: &TrainConfig,
) -> Result<(EncoderModel, TrainLog), EncoderError> {
    train_with_observer(train_set, val_set, arch, cfg, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with_observer<F>(
    train_set: &ResponseDataset,
    val_set: &ResponseDataset,
    arch: &EncoderArchitecture,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(EncoderModel, TrainLog), EncoderError>
where
    F: FnMut(&EpochRecord),
{
    cfg.validate()?;
    arch.validate()?;
    if train_set.is_empty() || val_set.len() < 2 {
        return Err(EncoderError::EmptyDataset);
    }
    for (name, ds) in [("train", train_set), ("validation", val_set)] {
        if ds.n_voxels() != arch.n_voxels || ds.shape().len() != arch.input_len {
            return Err(EncoderError::ShapeMismatch(format!(
                "{name} set has {} inputs x {} voxels, architecture expects {} x {}",
                ds.shape().len(),
                ds.n_voxels(),
                arch.input_len,
                arch.n_voxels
            )));
        }
    }

    let mut model = EncoderModel::init(arch.clone(), cfg.seed)?;
    let mut shuffle_rng = crate::rng::seeded(cfg.seed, crate::rng::Stream::Shuffle);
    let adam = cfg.adamw();
    let mut states: Vec<(AdamState, AdamState)> = model
        .layers()
        .iter()
        .map(|l| (AdamState::new(l.weight.len()), AdamState::new(l.bias.len())))
        .collect();
    let mut grads = Gradients::zeros_like(arch);
    let mut ws = BatchWorkspace::new(arch);

    let mut log = TrainLog {
        initial_train_mse: model.mse(train_set.pairs())?,
        ..TrainLog::default()
    };
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_model = model.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sse = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let loss = model.accumulate_mse_gradients(
                chunk.iter().map(|&i| train_set.sample(i)),
                chunk.len(),
                &mut grads,
                &mut ws,
            )?;
            if !loss.is_finite() {
                return Err(EncoderError::NonFiniteLoss { epoch, batch: b });
            }
            sse += loss * chunk.len() as f64;
            for ((layer, g), (sw, sb)) in model
                .layers_mut()
                .iter_mut()
                .zip(&grads.layers)
                .zip(states.iter_mut())
            {
                sw.step(&mut layer.weight, &g.weight, &adam);
                sb.step(&mut layer.bias, &g.bias, &adam);
            }
        }
        let val_mean_r = mean_pearson(&model, val_set)?;
        if !val_mean_r.is_finite() {
            return Err(EncoderError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        let rec = EpochRecord {
            epoch,
            train_mse: sse / train_set.len() as f64,
            val_mean_r,
        };
        log.epochs.push(rec);
        on_epoch(&rec);
        if stopper.observe(epoch, val_mean_r) {
            best_model = model.clone();
        }
        if stopper.should_stop() {
            log.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch().unwrap_or(0);
    Ok((best_model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_patience_one() {
        let mut s = EarlyStopping::new(1);
        assert!(s.observe(1, 0.8));
        assert!(!s.should_stop());
        assert!(!s.observe(2, 0.7));
        assert!(s.should_stop());
        assert_eq!(s.best_epoch(), Some(1));
    }

    #[test]
    fn early_stopping_resets_on_improvement() {
        let mut s = EarlyStopping::new(2);
        for (e, m) in [(1, 0.1), (2, 0.05), (3, 0.2), (4, 0.2), (5, 0.19)] {
            s.observe(e, m);
        }
        assert!(s.should_stop());
        assert_eq!(s.best_epoch(), Some(3));
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.learning_rate, 3e-4);
        assert_eq!((ok.max_epochs, ok.patience, ok.batch_size), (50, 5, 32));
        for bad in [
            TrainConfig { learning_rate: 0.0, ..ok },
            TrainConfig { patience: 0, ..ok },
            TrainConfig { batch_size: 0, ..ok },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn log_csv_header() {
        let log = TrainLog {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_mse: 0.5,
                val_mean_r: 0.25,
            }],
            ..Default::default()
        };
        assert_eq!(log.to_csv_string(), "epoch,train_mse,val_mean_r\n1,0.5,0.25\n");
    }
}
