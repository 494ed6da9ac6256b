//! Siamese training loop: minibatch Adam over overlap-labelled pairs with a
//! query-id-disjoint validation split and early stopping.

use super::optimizer::Adam;
use super::tensor::Scalar;
use super::{normalize_input, pair_batch_backward, pair_batch_loss, EmbedNetConfig, EmbeddingNet, PairInput};
use crate::error::{Error, Result};
use crate::pairs::{apply_augmentation, AugmentSpec, PairSample};
use crate::raster::Raster;
use crate::synth::MapSet;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};

/// Raster lookup by image id, pooled over one or more map sets.
pub struct ImageStore {
    images: HashMap<String, Raster>,
}

impl ImageStore {
    pub fn from_mapsets<'a>(mapsets: impl IntoIterator<Item = &'a MapSet>) -> Self {
        let mut images = HashMap::new();
        for ms in mapsets {
            for img in ms.references.iter().chain(ms.queries.iter()) {
                images.insert(img.id.clone(), img.pixels.clone());
            }
        }
        Self { images }
    }

    pub fn get(&self, id: &str) -> Option<&Raster> {
        self.images.get(id)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Maximum epoch count; early stopping may end training sooner.
    pub epochs: usize,
    pub seed: u64,
    /// Early-stopping patience on validation loss, in epochs.
    pub patience: usize,
    /// Fraction of query ids held out for validation.
    pub validation_fraction: f64,
    /// Augment the two pair members independently instead of jointly.
    pub independent_augmentation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            patience: 5,
            validation_fraction: 0.1,
            independent_augmentation: false,
        }
    }
}

/// Trained network plus the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub net: EmbeddingNet<T>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Materialize the network inputs for one pair sample.
fn pair_input<T: Scalar>(
    sample: &PairSample,
    store: &ImageStore,
    independent: bool,
    sample_idx: usize,
    seed: u64,
) -> Result<PairInput<T>> {
    let q_raster = store
        .get(&sample.query_id)
        .ok_or_else(|| Error::invalid(format!("unknown image id '{}'", sample.query_id)))?;
    let r_raster = store
        .get(&sample.ref_id)
        .ok_or_else(|| Error::invalid(format!("unknown image id '{}'", sample.ref_id)))?;
    let q_aug = apply_augmentation(q_raster, &sample.augmentation);
    let r_spec = if independent {
        let mut rng = StdRng::seed_from_u64(seed ^ (0x9E3779B97F4A7C15u64.wrapping_mul(sample_idx as u64 + 1)));
        AugmentSpec::random(&mut rng)
    } else {
        sample.augmentation
    };
    let r_aug = apply_augmentation(r_raster, &r_spec);
    Ok(PairInput {
        query: normalize_input(&q_aug),
        reference: normalize_input(&r_aug),
        overlap: sample.overlap,
    })
}

/// Split pair indices into train and validation sets by query id, so no
/// query's pairs leak across the split. Deterministic in the seed.
pub fn validation_split(
    pairs: &[PairSample],
    seed: u64,
    validation_fraction: f64,
) -> (Vec<usize>, Vec<usize>) {
    let query_ids: BTreeSet<&str> = pairs.iter().map(|p| p.query_id.as_str()).collect();
    let mut query_ids: Vec<&str> = query_ids.into_iter().collect();
    let mut split_rng = StdRng::seed_from_u64(seed ^ 0x5157_u64);
    for i in (1..query_ids.len()).rev() {
        let j = split_rng.gen_range(0..=i);
        query_ids.swap(i, j);
    }
    let n_val_ids = if query_ids.len() >= 2 {
        ((query_ids.len() as f64 * validation_fraction).round() as usize)
            .clamp(1, query_ids.len() - 1)
    } else {
        0
    };
    let val_ids: HashSet<&str> = query_ids[..n_val_ids].iter().copied().collect();
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (i, sample) in pairs.iter().enumerate() {
        if val_ids.contains(sample.query_id.as_str()) {
            val_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    (train_idx, val_idx)
}

/// Mean absolute residual |d - (1 - o)| of the network over pair samples.
pub fn mean_abs_residual<T: Scalar>(
    net: &super::EmbeddingNet<T>,
    pairs: &[PairSample],
    store: &ImageStore,
) -> Result<f64> {
    use rayon::prelude::*;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no pairs to evaluate".into()));
    }
    let inputs: Vec<PairInput<T>> = pairs
        .iter()
        .enumerate()
        .map(|(i, s)| pair_input::<T>(s, store, false, i, 0))
        .collect::<Result<_>>()?;
    let total: f64 = inputs
        .par_iter()
        .map(|p| {
            let e_q = net.forward(&p.query);
            let e_r = net.forward(&p.reference);
            let d = super::pair_distance(&e_q, &e_r).expect("dims match").as_f64();
            (d - (1.0 - p.overlap)).abs()
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Train the Siamese embedding network.
///
/// The validation split is taken by query id so no query appears on both
/// sides. Given a fixed seed, the whole run (split, shuffles, updates, loss
/// traces) is deterministic.
pub fn train_siamese<T: Scalar>(
    pairs: &[PairSample],
    store: &ImageStore,
    net_config: &EmbedNetConfig,
    config: &TrainConfig,
) -> Result<TrainReport<T>> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no training pairs supplied".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::invalid("batch_size and epochs must be positive"));
    }

    let (train_idx, val_idx) = validation_split(pairs, config.seed, config.validation_fraction);
    let mut train_inputs = Vec::with_capacity(train_idx.len());
    for &idx in &train_idx {
        train_inputs.push(pair_input::<T>(
            &pairs[idx],
            store,
            config.independent_augmentation,
            idx,
            config.seed,
        )?);
    }
    let mut val_inputs = Vec::with_capacity(val_idx.len());
    for &idx in &val_idx {
        val_inputs.push(pair_input::<T>(
            &pairs[idx],
            store,
            config.independent_augmentation,
            idx,
            config.seed,
        )?);
    }
    if train_inputs.is_empty() {
        return Err(Error::EmptyDataset(
            "validation split consumed every pair".into(),
        ));
    }

    let mut net: EmbeddingNet<T> = EmbeddingNet::init(net_config, config.seed)?;
    let mut adam = Adam::new(&net, config.learning_rate, config.weight_decay);

    let mut train_trace = Vec::with_capacity(config.epochs);
    let mut val_trace = Vec::with_capacity(config.epochs);
    let mut best_loss = f64::INFINITY;
    let mut best_net = net.clone();
    let mut best_epoch = 0usize;
    let mut bad_epochs = 0usize;
    let mut stopped_early = false;

    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    for epoch in 0..config.epochs {
        let mut epoch_rng = StdRng::seed_from_u64(
            config.seed ^ 0xE90C_u64 ^ ((epoch as u64 + 1).wrapping_mul(0x2545F4914F6CDD1D)),
        );
        for i in (1..order.len()).rev() {
            let j = epoch_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<PairInput<T>> = chunk
                .iter()
                .map(|&i| PairInput {
                    query: train_inputs[i].query.clone(),
                    reference: train_inputs[i].reference.clone(),
                    overlap: train_inputs[i].overlap,
                })
                .collect();
            let (loss, grads) = pair_batch_backward(&net, &batch);
            let loss_f = loss.as_f64();
            if !loss_f.is_finite() {
                return Err(Error::TrainingFailure {
                    epoch,
                    detail: format!("batch loss became {loss_f}"),
                });
            }
            adam.step(&mut net, &grads);
            loss_sum += loss_f * chunk.len() as f64;
        }
        if !net.weights_finite() {
            return Err(Error::TrainingFailure {
                epoch,
                detail: "weights became non-finite after an optimizer step".into(),
            });
        }
        let train_loss = loss_sum / train_inputs.len() as f64;
        train_trace.push(train_loss);

        let monitored = if val_inputs.is_empty() {
            val_trace.push(f64::NAN);
            train_loss
        } else {
            let v = pair_batch_loss(&net, &val_inputs).as_f64();
            val_trace.push(v);
            v
        };

        if monitored < best_loss {
            best_loss = monitored;
            best_net = net.clone();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainReport {
        net: best_net,
        train_loss: train_trace,
        val_loss: val_trace,
        best_epoch,
        stopped_early,
    })
}
