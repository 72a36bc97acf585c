use std::collections::HashMap;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_predictions, BenchError, Dataset, MetricRecord, Partition, SplitAssignment, Task};
use crate::complex::build_cc;
use crate::homp::{glycan_sign_seed, positional_encoding, CellBatch, GlycanCells, Model, ModelConfig};
use crate::molgraph::{assemble, fnv1a64};
use crate::tensor::{sigmoid, Adam, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Drives the per-epoch shuffle.
    pub seed: u64,
    pub lr_schedule: LrSchedule,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` at the first epoch to 0 after the last.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, lr: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine => 0.5 * lr * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs.max(1) as f64).cos()),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.batch_size == 0 {
            return Err(BenchError::Invalid("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(BenchError::Invalid(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch losses averaged with batch sizes as weights.
    pub loss: f64,
    pub val: Option<MetricRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub partition: Partition,
    pub full: MetricRecord,
    /// Restricted to test glycans flagged out of distribution.
    pub ood: Option<MetricRecord>,
    /// Scores (probabilities or values) per record id.
    pub predictions: Vec<(String, Vec<f64>)>,
}

/// Model inputs cached once per record.
#[derive(Debug)]
pub struct Prepared {
    pub task: Task,
    pub ids: Vec<String>,
    pub labels: Vec<Vec<f64>>,
    pub cells: Vec<GlycanCells>,
    pub extra: Option<Vec<Vec<f64>>>,
    index: HashMap<String, usize>,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Record positions of one partition, in dataset order.
    pub fn indices(&self, split: &SplitAssignment, part: Partition) -> Vec<usize> {
        (0..self.ids.len())
            .filter(|&i| split.partition.get(&self.ids[i]) == Some(&part))
            .collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn batch(&self, idx: &[usize]) -> Result<CellBatch, BenchError> {
        let refs: Vec<&GlycanCells> = idx.iter().map(|&i| &self.cells[i]).collect();
        let mut batch = CellBatch::from_cells(&refs)?;
        if let Some(extra) = &self.extra {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| extra[i].clone()).collect();
            batch = batch.with_extra(Tensor::from_rows(&rows))?;
        }
        Ok(batch)
    }
}

/// Assembles every glycan, builds its complex and positional encoding, and
/// attaches protein embeddings for interaction records.
pub fn prepare(config: &ModelConfig, dataset: &Dataset) -> Result<Prepared, BenchError> {
    let mut cells = Vec::with_capacity(dataset.len());
    let mut extra = Vec::new();
    let use_proteins = dataset.task == Task::Interaction;
    if use_proteins {
        let table = dataset.proteins.as_ref().ok_or_else(|| BenchError::Invalid("interaction task needs a protein table".into()))?;
        if table.dim != config.extra_dim {
            return Err(BenchError::Invalid(format!(
                "model extra_dim {} does not match protein embedding width {}",
                config.extra_dim, table.dim
            )));
        }
    } else if config.extra_dim != 0 {
        return Err(BenchError::Invalid("extra_dim is only used by interaction tasks".into()));
    }
    for r in &dataset.records {
        let graph = assemble(&r.tree).map_err(|e| BenchError::Invalid(format!("{}: {e}", r.id)))?;
        let cc = build_cc(&graph).map_err(|e| BenchError::Invalid(format!("{}: {e}", r.id)))?;
        let pe = positional_encoding(&cc, config.pe, glycan_sign_seed(&r.tree.to_iupac()));
        cells.push(GlycanCells::new(&cc, &config.neighborhoods, pe)?);
        if use_proteins {
            let p = r.protein.as_deref().unwrap_or_default();
            let table = dataset.proteins.as_ref().expect("checked above");
            extra.push(table.get(p).ok_or_else(|| BenchError::UnknownProtein(p.to_string()))?.to_vec());
        }
    }
    let ids: Vec<String> = dataset.records.iter().map(|r| r.id.clone()).collect();
    let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(Prepared {
        task: dataset.task,
        labels: dataset.records.iter().map(|r| r.label.clone()).collect(),
        ids,
        cells,
        extra: use_proteins.then_some(extra),
        index,
    })
}

/// Mean loss of `output` for the task: binary cross-entropy on logits for
/// binary and multilabel, softmax cross-entropy for multiclass, squared
/// error otherwise.
pub(crate) fn task_loss(tape: &mut Tape, task: Task, output: Var, labels: &[&Vec<f64>]) -> Result<Var, BenchError> {
    Ok(match task {
        Task::Multiclass { .. } => {
            let classes: Vec<usize> = labels.iter().map(|l| l[0] as usize).collect();
            tape.cross_entropy(output, Rc::new(classes))?
        }
        Task::Binary | Task::Multilabel { .. } => {
            let rows: Vec<Vec<f64>> = labels.iter().map(|l| (*l).clone()).collect();
            tape.bce_with_logits(output, Rc::new(Tensor::from_rows(&rows)))?
        }
        Task::Regression | Task::Interaction => {
            let rows: Vec<Vec<f64>> = labels.iter().map(|l| (*l).clone()).collect();
            tape.mse(output, Rc::new(Tensor::from_rows(&rows)))?
        }
    })
}

/// Turns raw outputs into scores: probabilities for classification, the
/// values themselves for regression.
pub(crate) fn scores_of(task: Task, output: &Tensor) -> Vec<Vec<f64>> {
    (0..output.rows())
        .map(|i| {
            let row = output.row(i);
            match task {
                Task::Binary | Task::Multilabel { .. } => row.iter().map(|&z| sigmoid(z)).collect(),
                Task::Multiclass { .. } => {
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = row.iter().map(|&z| (z - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    e.into_iter().map(|x| x / s).collect()
                }
                Task::Regression | Task::Interaction => row.to_vec(),
            }
        })
        .collect()
}

pub(crate) fn epoch_order(train: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    let mut key = seed.to_le_bytes().to_vec();
    key.extend_from_slice(&(epoch as u64).to_le_bytes());
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(fnv1a64(&key)));
    order
}

/// Mini-batch Adam on the train partition. After every epoch the val
/// partition, when non-empty, is scored in eval mode.
pub fn train(model: &mut Model, data: &Prepared, split: &SplitAssignment, config: &TrainConfig) -> Result<TrainOutcome, BenchError> {
    config.validate()?;
    let train_idx = data.indices(split, Partition::Train);
    if train_idx.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    let val_idx = data.indices(split, Partition::Val);
    let mut adam = Adam::new(config.lr);
    let mut step = 0u64;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        adam.lr = config.lr_schedule.rate(config.lr, epoch, config.epochs);
        let order = epoch_order(&train_idx, config.seed, epoch);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = data.batch(chunk)?;
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &batch, true, step)?;
            let labels: Vec<&Vec<f64>> = chunk.iter().map(|&i| &data.labels[i]).collect();
            let loss = task_loss(&mut tape, data.task, out.output, &labels)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(BenchError::NonFiniteLoss { epoch, step: b });
            }
            let grads = tape.backward(loss);
            model.store.zero_grad();
            model.store.accumulate(&grads, &out.bound);
            if !model.store.grads_finite() {
                return Err(BenchError::NonFiniteLoss { epoch, step: b });
            }
            adam.step(&mut model.store);
            model.apply_bn_stats(&out.bn_stats);
            total += value * chunk.len() as f64;
            step += 1;
        }
        let val = if val_idx.is_empty() {
            None
        } else {
            Some(score(model, data, &val_idx, config.batch_size)?.0)
        };
        let loss = total / train_idx.len() as f64;
        log::debug!("epoch {epoch}: loss {loss:.6}");
        log.push(EpochRecord { epoch, loss, val });
    }
    Ok(TrainOutcome { epochs: log })
}

fn score(model: &Model, data: &Prepared, idx: &[usize], batch_size: usize) -> Result<(MetricRecord, Vec<Vec<f64>>), BenchError> {
    let mut scores = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let out = model.predict(&data.batch(chunk)?)?;
        scores.extend(scores_of(data.task, &out));
    }
    let targets: Vec<Vec<f64>> = idx.iter().map(|&i| data.labels[i].clone()).collect();
    Ok((evaluate_predictions(&data.task, &scores, &targets)?, scores))
}

/// Eval-mode metrics on one partition. Test partitions with OOD flags get
/// an extra row for the flagged records.
pub fn evaluate(model: &Model, data: &Prepared, split: &SplitAssignment, part: Partition, batch_size: usize) -> Result<EvalReport, BenchError> {
    let idx = data.indices(split, part);
    let (full, scores) = score(model, data, &idx, batch_size)?;
    let ood = if part == Partition::Test && !split.ood.is_empty() {
        let (s, t): (Vec<Vec<f64>>, Vec<Vec<f64>>) = idx
            .iter()
            .zip(&scores)
            .filter(|(&i, _)| split.ood.get(&data.ids[i]).copied().unwrap_or(false))
            .map(|(&i, s)| (s.clone(), data.labels[i].clone()))
            .unzip();
        Some(evaluate_predictions(&data.task, &s, &t)?)
    } else {
        None
    };
    Ok(EvalReport {
        partition: part,
        full,
        ood,
        predictions: idx.iter().map(|&i| data.ids[i].clone()).zip(scores).collect(),
    })
}

/// Shifts to mean 0 and scales to population standard deviation 1.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>, BenchError> {
    if values.len() < 2 {
        return Err(BenchError::DegenerateVariance);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(BenchError::DegenerateVariance);
    }
    Ok(values.iter().map(|v| (v - mean) / std).collect())
}
