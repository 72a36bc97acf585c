use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layer::{gifflar_layer, ThetaKey};
use super::readout::{readout, ReadoutParams};
use super::{lap_pe, rw_pe, CellBatch, HompError, ModelConfig, PositionalEncoding, CLASS_COUNTS, N_RANKS};
use crate::complex::{CellKind, CombinatorialComplex};
use crate::molgraph::fnv1a64;
use crate::tensor::{
    read_checkpoint_file, write_checkpoint_file, BatchNormMode, BatchStats, ParamId, ParamStore, Tape, Tensor, Var,
};

const BN_EPS: f64 = 1e-5;
const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone)]
struct Theta {
    weight: ParamId,
    bias: ParamId,
    slope: ParamId,
    gamma: ParamId,
    beta: ParamId,
    bn: String,
}

#[derive(Debug, Clone)]
struct HeadParams {
    w1: ParamId,
    b1: ParamId,
    slope: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Frozen class embeddings, `L` message-passing layers, pooling and a
/// two-layer prediction head.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    embeddings: [ParamId; N_RANKS],
    thetas: Vec<Vec<Theta>>,
    self_thetas: Vec<Vec<Option<Theta>>>,
    epsilon: ParamId,
    rank_weights: Option<ParamId>,
    gate: Option<(ParamId, ParamId)>,
    head: HeadParams,
}

/// Result of one forward pass.
pub struct ForwardOutput {
    /// `n_graphs x n_out`.
    pub output: Var,
    /// Final-layer states per rank.
    pub states: Vec<Var>,
    pub pooled: Var,
    /// Training-mode batch statistics keyed by buffer prefix.
    pub bn_stats: Vec<(String, BatchStats)>,
    /// Every parameter with its tape handle.
    pub bound: Vec<(ParamId, Var)>,
}

fn add_theta(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d_in: usize, d_out: usize) -> Theta {
    let weight = store.add_glorot(format!("{prefix}.weight"), d_in, d_out, rng);
    let bias = store.add(format!("{prefix}.bias"), Tensor::zeros(&[d_out]), true);
    let slope = store.add(format!("{prefix}.prelu"), Tensor::full(&[d_out], PRELU_INIT), true);
    let gamma = store.add(format!("{prefix}.bn.gamma"), Tensor::full(&[d_out], 1.0), true);
    let beta = store.add(format!("{prefix}.bn.beta"), Tensor::zeros(&[d_out]), true);
    let bn = format!("{prefix}.bn");
    store.set_buffer(format!("{bn}.mean"), Tensor::zeros(&[d_out]));
    store.set_buffer(format!("{bn}.var"), Tensor::full(&[d_out], 1.0));
    Theta {
        weight,
        bias,
        slope,
        gamma,
        beta,
        bn,
    }
}

pub fn build_model(config: ModelConfig) -> Result<Model, HompError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::new();
    let d0 = config.input_dim + config.pe.dim();
    let h = config.hidden_dim;

    let mut emb_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_e4b3_dd16_0001);
    let embeddings = std::array::from_fn(|r| {
        let data = (0..CLASS_COUNTS[r] * config.input_dim)
            .map(|_| StandardNormal.sample(&mut emb_rng))
            .collect();
        let t = Tensor::new(vec![CLASS_COUNTS[r], config.input_dim], data).expect("embedding shape");
        store.add(format!("embedding.rank{r}"), t, false)
    });

    let mut thetas = Vec::with_capacity(config.layers);
    let mut self_thetas = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let d_in = if l == 0 { d0 } else { h };
        let layer: Vec<Theta> = config
            .neighborhoods
            .iter()
            .map(|s| add_theta(&mut store, &mut rng, &format!("layer{l}.{}", s.name()), d_in, h))
            .collect();
        let selfs = (0..N_RANKS)
            .map(|r| {
                let targeted = config.neighborhoods.iter().any(|s| s.rank == r);
                (!targeted).then(|| add_theta(&mut store, &mut rng, &format!("layer{l}.self{r}"), d_in, h))
            })
            .collect();
        thetas.push(layer);
        self_thetas.push(selfs);
    }
    let epsilon = store.add("epsilon", Tensor::scalar(config.epsilon), config.learn_epsilon);
    let rank_weights = config
        .pooling
        .is_weighted()
        .then(|| store.add("readout.rank_weights", Tensor::full(&[N_RANKS, 1], 1.0 / 3.0), true));
    let gate = config.pooling.is_attention().then(|| {
        (
            store.add_glorot("readout.gate.weight", h, 1, &mut rng),
            store.add("readout.gate.bias", Tensor::zeros(&[1]), true),
        )
    });
    let head_in = h + config.extra_dim;
    let head_mid = (h / 2).max(1);
    let n_out = config.head.n_out();
    let head = HeadParams {
        w1: store.add_glorot("head.0.weight", head_in, head_mid, &mut rng),
        b1: store.add("head.0.bias", Tensor::zeros(&[head_mid]), true),
        slope: store.add("head.0.prelu", Tensor::full(&[head_mid], PRELU_INIT), true),
        w2: store.add_glorot("head.1.weight", head_mid, n_out, &mut rng),
        b2: store.add("head.1.bias", Tensor::zeros(&[n_out]), true),
    };
    Ok(Model {
        config,
        store,
        embeddings,
        thetas,
        self_thetas,
        epsilon,
        rank_weights,
        gate,
        head,
    })
}

fn mix_seed(seed: u64, site: u64, step: u64) -> u64 {
    let mut bytes = [0u8; 24];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&site.to_le_bytes());
    bytes[16..].copy_from_slice(&step.to_le_bytes());
    fnv1a64(&bytes)
}

impl Model {
    /// Trainable scalars (frozen embeddings and buffers excluded).
    pub fn param_count(&self) -> usize {
        self.store.n_trainable()
    }

    /// Name and size of every trainable tensor.
    pub fn param_ledger(&self) -> Vec<(String, usize)> {
        self.store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| (p.name.clone(), p.value.len()))
            .collect()
    }

    fn apply_theta(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        t: &Theta,
        input: Var,
        training: bool,
        dropout_seed: u64,
        stats: &mut Vec<(String, BatchStats)>,
    ) -> Result<Var, HompError> {
        let v = |id: ParamId| vars[id.index()];
        let mut y = tape.linear(input, v(t.weight), Some(v(t.bias)))?;
        y = tape.prelu(y, v(t.slope))?;
        y = tape.dropout(y, self.config.dropout, training, dropout_seed)?;
        let rows = tape.value(y).rows();
        let mode = if training && rows >= 2 {
            BatchNormMode::Train { eps: BN_EPS }
        } else {
            BatchNormMode::Eval {
                mean: self.buffer(&format!("{}.mean", t.bn))?.data().to_vec(),
                var: self.buffer(&format!("{}.var", t.bn))?.data().to_vec(),
                eps: BN_EPS,
            }
        };
        let (out, batch_stats) = tape.batch_norm(y, v(t.gamma), v(t.beta), &mode)?;
        if let Some(s) = batch_stats {
            stats.push((t.bn.clone(), s));
        }
        Ok(out)
    }

    fn buffer(&self, name: &str) -> Result<&Tensor, HompError> {
        self.store
            .buffer(name)
            .ok_or_else(|| HompError::Config(format!("missing buffer {name}")))
    }

    fn inputs(&self, tape: &mut Tape, vars: &[Var], batch: &CellBatch) -> Result<Vec<Var>, HompError> {
        let pe_dim = self.config.pe.dim();
        match &batch.pe {
            Some(p) if p.cols() != pe_dim => {
                return Err(HompError::DimensionMismatch {
                    what: "positional encoding width",
                    expected: pe_dim,
                    found: p.cols(),
                })
            }
            None if pe_dim > 0 => {
                return Err(HompError::DimensionMismatch {
                    what: "positional encoding width",
                    expected: pe_dim,
                    found: 0,
                })
            }
            _ => {}
        }
        let mut states = Vec::with_capacity(N_RANKS);
        for r in 0..N_RANKS {
            let emb = tape.gather_rows(vars[self.embeddings[r].index()], batch.classes[r].clone())?;
            if pe_dim == 0 {
                states.push(emb);
                continue;
            }
            let extra = if r == 0 {
                batch.pe.clone().expect("checked above")
            } else {
                Tensor::zeros(&[batch.n_cells[r], pe_dim])
            };
            let extra = tape.constant(extra);
            states.push(tape.concat_cols(&[emb, extra])?);
        }
        Ok(states)
    }

    /// Runs the model on a batch. `step` feeds the dropout masks.
    pub fn forward(&self, tape: &mut Tape, batch: &CellBatch, training: bool, step: u64) -> Result<ForwardOutput, HompError> {
        if batch.pairs.len() != self.config.neighborhoods.len() {
            return Err(HompError::DimensionMismatch {
                what: "neighborhood count",
                expected: self.config.neighborhoods.len(),
                found: batch.pairs.len(),
            });
        }
        let ids: Vec<ParamId> = self.store.iter().map(|(id, _)| id).collect();
        let vars: Vec<Var> = ids.iter().map(|&id| self.store.bind(tape, id)).collect();
        let mut stats = Vec::new();
        let mut states = self.inputs(tape, &vars, batch)?;
        let eps = vars[self.epsilon.index()];
        let seed = self.config.seed;
        for l in 0..self.config.layers {
            let mut theta = |tape: &mut Tape, key: ThetaKey, input: Var| {
                let (t, site) = match key {
                    ThetaKey::Spec(k) => (&self.thetas[l][k], (l as u64) << 8 | k as u64),
                    ThetaKey::SelfRank(r) => (
                        self.self_thetas[l][r]
                            .as_ref()
                            .ok_or_else(|| HompError::MissingTheta(format!("self{r}")))?,
                        (l as u64) << 8 | 0x80 | r as u64,
                    ),
                };
                self.apply_theta(tape, &vars, t, input, training, mix_seed(seed, site, step), &mut stats)
            };
            states = gifflar_layer(
                tape,
                &states,
                &self.config.neighborhoods,
                &batch.pairs,
                eps,
                &mut theta,
                l,
            )?;
        }
        let params = ReadoutParams {
            rank_weights: self.rank_weights.map(|id| vars[id.index()]),
            gate: self.gate.map(|(w, b)| (vars[w.index()], vars[b.index()])),
        };
        let mut pooled = readout(tape, &states, batch, self.config.pooling, params)?;
        if self.config.extra_dim > 0 {
            let extra = batch.extra.clone().ok_or(HompError::DimensionMismatch {
                what: "extra feature width",
                expected: self.config.extra_dim,
                found: 0,
            })?;
            if extra.cols() != self.config.extra_dim {
                return Err(HompError::DimensionMismatch {
                    what: "extra feature width",
                    expected: self.config.extra_dim,
                    found: extra.cols(),
                });
            }
            let extra = tape.constant(extra);
            pooled = tape.concat_cols(&[pooled, extra])?;
        }
        let v = |id: ParamId| vars[id.index()];
        let hd = &self.head;
        let mut y = tape.linear(pooled, v(hd.w1), Some(v(hd.b1)))?;
        y = tape.prelu(y, v(hd.slope))?;
        y = tape.dropout(y, self.config.dropout, training, mix_seed(seed, u64::MAX, step))?;
        let output = tape.linear(y, v(hd.w2), Some(v(hd.b2)))?;
        if !tape.value(output).is_finite() {
            return Err(HompError::NonFiniteState {
                layer: self.config.layers,
                rank: N_RANKS,
            });
        }
        Ok(ForwardOutput {
            output,
            states,
            pooled,
            bn_stats: stats,
            bound: ids.into_iter().zip(vars).collect(),
        })
    }

    /// Folds training-mode batch statistics into the running estimates
    /// (unbiased variance, momentum from the config).
    pub fn apply_bn_stats(&mut self, stats: &[(String, BatchStats)]) {
        let m = self.config.bn_momentum;
        for (prefix, s) in stats {
            let n = s.rows as f64;
            let (mk, vk) = (format!("{prefix}.mean"), format!("{prefix}.var"));
            let mut mean = self.store.buffer(&mk).cloned().unwrap_or_else(|| Tensor::zeros(&[s.mean.len()]));
            let mut var = self.store.buffer(&vk).cloned().unwrap_or_else(|| Tensor::full(&[s.var.len()], 1.0));
            for (r, b) in mean.data_mut().iter_mut().zip(&s.mean) {
                *r = (1.0 - m) * *r + m * b;
            }
            for (r, b) in var.data_mut().iter_mut().zip(&s.var) {
                *r = (1.0 - m) * *r + m * b * n / (n - 1.0);
            }
            self.store.set_buffer(mk, mean);
            self.store.set_buffer(vk, var);
        }
    }

    /// Eval-mode outputs, `n_graphs x n_out`.
    pub fn predict(&self, batch: &CellBatch) -> Result<Tensor, HompError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, false, 0)?;
        Ok(tape.value(out.output).clone())
    }

    /// Eval-mode final-layer states per rank.
    pub fn embed(&self, batch: &CellBatch) -> Result<Vec<Tensor>, HompError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, false, 0)?;
        Ok(out.states.iter().map(|&s| tape.value(s).clone()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), HompError> {
        Ok(write_checkpoint_file(path, &self.store.named_tensors())?)
    }

    /// Rebuilds the architecture from `config` and loads weights.
    pub fn load(config: ModelConfig, path: &Path) -> Result<Model, HompError> {
        let mut model = build_model(config)?;
        model.store.load_named(read_checkpoint_file(path)?)?;
        model.config.epsilon = model.store.value(model.epsilon).item();
        Ok(model)
    }
}

/// Seed for the Laplacian sign flips of one glycan, taken from its
/// canonical serialization so that every run agrees.
pub fn glycan_sign_seed(canonical: &str) -> u64 {
    fnv1a64(canonical.as_bytes())
}

/// Positional encodings of the rank-0 graph of `cc`, or `None` when
/// disabled. Both encodings are concatenated random-walk first.
pub fn positional_encoding(cc: &CombinatorialComplex, pe: PositionalEncoding, sign_seed: u64) -> Option<Tensor> {
    let n = cc.n_cells(0);
    let edges = cc.rank0_edges();
    match pe {
        PositionalEncoding::None => None,
        PositionalEncoding::RandomWalk { k } => Some(rw_pe(n, &edges, k)),
        PositionalEncoding::Laplacian { k } => Some(lap_pe(n, &edges, k, sign_seed)),
        PositionalEncoding::Both { k } => {
            let a = rw_pe(n, &edges, k);
            let b = lap_pe(n, &edges, k, sign_seed);
            let mut data = Vec::with_capacity(n * 2 * k);
            for i in 0..n {
                data.extend_from_slice(a.row(i));
                data.extend_from_slice(b.row(i));
            }
            Some(Tensor::new(vec![n, 2 * k], data).expect("pe shape"))
        }
    }
}

/// One line per cell: glycan id, rank, cell id, monosaccharide name (rank 2
/// only, otherwise empty), then the state values.
pub fn write_embeddings_tsv(
    w: &mut impl Write,
    glycan_id: &str,
    cc: &CombinatorialComplex,
    states: &[Tensor],
) -> io::Result<()> {
    for (rank, s) in states.iter().enumerate() {
        for i in 0..s.rows() {
            let name = match cc.kinds(rank).get(i) {
                Some(CellKind::Monomer { name, .. }) if rank == 2 => name.as_str(),
                _ => "",
            };
            write!(w, "{glycan_id}\t{rank}\t{i}\t{name}")?;
            for v in s.row(i) {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
