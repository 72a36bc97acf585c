//! Two-hidden-layer MLP on Morgan fingerprints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{epoch_order, scores_of, task_loss};
use super::{evaluate_predictions, BenchError, Dataset, EpochRecord, EvalReport, Partition, SplitAssignment, Task};
use crate::molgraph::{assemble, fnv1a64, morgan_fingerprint};
use crate::tensor::{Adam, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: [usize; 2],
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub radius: usize,
    pub n_bits: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: [256, 64],
            dropout: 0.1,
            epochs: 100,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
            radius: 2,
            n_bits: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub epochs: Vec<EpochRecord>,
    /// One report per non-empty partition.
    pub reports: Vec<EvalReport>,
}

#[derive(Debug)]
pub struct Mlp {
    pub store: ParamStore,
    layers: Vec<(ParamId, ParamId, Option<ParamId>)>,
    dropout: f64,
    seed: u64,
}

impl Mlp {
    pub fn new(d_in: usize, hidden: [usize; 2], n_out: usize, dropout: f64, seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dims = [d_in, hidden[0], hidden[1], n_out];
        let mut layers = Vec::new();
        for l in 0..3 {
            let w = store.add_glorot(format!("mlp.{l}.weight"), dims[l], dims[l + 1], &mut rng);
            let b = store.add(format!("mlp.{l}.bias"), Tensor::zeros(&[1, dims[l + 1]]), true);
            let slope = (l < 2).then(|| store.add(format!("mlp.{l}.prelu"), Tensor::full(&[1, dims[l + 1]], 0.25), true));
            layers.push((w, b, slope));
        }
        Mlp {
            store,
            layers,
            dropout,
            seed,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: &Tensor, training: bool, step: u64) -> Result<(Var, Vec<(ParamId, Var)>), BenchError> {
        let bound: Vec<(ParamId, Var)> = self.store.iter().map(|(id, _)| (id, self.store.bind(tape, id))).collect();
        let v = |id: ParamId| bound[id.index()].1;
        let mut h = tape.constant(x.clone());
        for (l, &(w, b, slope)) in self.layers.iter().enumerate() {
            h = tape.linear(h, v(w), Some(v(b)))?;
            if let Some(s) = slope {
                h = tape.prelu(h, v(s))?;
                let mut key = self.seed.to_le_bytes().to_vec();
                key.extend_from_slice(&[l as u8]);
                key.extend_from_slice(&step.to_le_bytes());
                h = tape.dropout(h, self.dropout, training, fnv1a64(&key))?;
            }
        }
        Ok((h, bound))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor, BenchError> {
        let mut tape = Tape::new();
        let (out, _) = self.forward(&mut tape, x, false, 0)?;
        Ok(tape.value(out).clone())
    }
}

fn rows_of(features: &[Vec<f64>], idx: &[usize]) -> Tensor {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| features[i].clone()).collect();
    Tensor::from_rows(&rows)
}

/// Trains an MLP on `features[train]`; returns the model and its loss log.
pub fn train_mlp(
    features: &[Vec<f64>],
    labels: &[Vec<f64>],
    task: Task,
    train: &[usize],
    config: &MlpConfig,
) -> Result<(Mlp, Vec<EpochRecord>), BenchError> {
    if train.is_empty() || features.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(BenchError::Invalid("batch_size must be positive".into()));
    }
    let mut mlp = Mlp::new(features[0].len(), config.hidden, task.n_outputs(), config.dropout, config.seed);
    let adam = Adam::new(config.lr);
    let mut log = Vec::new();
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for (b, chunk) in epoch_order(train, config.seed, epoch).chunks(config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let (out, bound) = mlp.forward(&mut tape, &rows_of(features, chunk), true, step)?;
            let y: Vec<&Vec<f64>> = chunk.iter().map(|&i| &labels[i]).collect();
            let loss = task_loss(&mut tape, task, out, &y)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(BenchError::NonFiniteLoss { epoch, step: b });
            }
            let grads = tape.backward(loss);
            mlp.store.zero_grad();
            mlp.store.accumulate(&grads, &bound);
            adam.step(&mut mlp.store);
            total += value * chunk.len() as f64;
            step += 1;
        }
        log.push(EpochRecord {
            epoch,
            loss: total / train.len() as f64,
            val: None,
        });
    }
    Ok((mlp, log))
}

/// Morgan bits of every assembled glycan, followed by the protein
/// embedding for interaction records.
pub fn fingerprint_features(dataset: &Dataset, radius: usize, n_bits: usize) -> Result<Vec<Vec<f64>>, BenchError> {
    dataset
        .records
        .iter()
        .map(|r| {
            let g = assemble(&r.tree).map_err(|e| BenchError::Invalid(format!("{}: {e}", r.id)))?;
            let mut x = morgan_fingerprint(&g, radius, n_bits).to_dense();
            if dataset.task == Task::Interaction {
                let p = r.protein.as_deref().unwrap_or_default();
                let emb = dataset
                    .proteins
                    .as_ref()
                    .and_then(|t| t.get(p))
                    .ok_or_else(|| BenchError::UnknownProtein(p.to_string()))?;
                x.extend_from_slice(emb);
            }
            Ok(x)
        })
        .collect()
}

/// Trains on the train partition and reports every non-empty partition.
pub fn fingerprint_mlp_baseline(dataset: &Dataset, split: &SplitAssignment, config: &MlpConfig) -> Result<BaselineOutcome, BenchError> {
    let features = fingerprint_features(dataset, config.radius, config.n_bits)?;
    let labels: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.label.clone()).collect();
    let indices = |part: Partition| -> Vec<usize> {
        (0..dataset.len())
            .filter(|&i| split.partition.get(&dataset.records[i].id) == Some(&part))
            .collect()
    };
    let (mlp, epochs) = train_mlp(&features, &labels, dataset.task, &indices(Partition::Train), config)?;
    let mut reports = Vec::new();
    for part in Partition::ALL {
        let idx = indices(part);
        if idx.is_empty() {
            continue;
        }
        let scores = scores_of(dataset.task, &mlp.predict(&rows_of(&features, &idx))?);
        let targets: Vec<Vec<f64>> = idx.iter().map(|&i| labels[i].clone()).collect();
        let full = evaluate_predictions(&dataset.task, &scores, &targets)?;
        let ood = if part == Partition::Test && !split.ood.is_empty() {
            let (s, t): (Vec<_>, Vec<_>) = idx
                .iter()
                .zip(&scores)
                .filter(|(&i, _)| split.ood.get(&dataset.records[i].id).copied().unwrap_or(false))
                .map(|(&i, s)| (s.clone(), labels[i].clone()))
                .unzip();
            Some(evaluate_predictions(&dataset.task, &s, &t)?)
        } else {
            None
        };
        reports.push(EvalReport {
            partition: part,
            full,
            ood,
            predictions: idx.iter().map(|&i| dataset.records[i].id.clone()).zip(scores).collect(),
        });
    }
    Ok(BaselineOutcome { epochs, reports })
}
