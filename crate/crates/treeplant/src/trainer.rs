//! Training orchestration: dataset preparation for every supervision kind,
//! an AdamW loop over per-sentence sequences, and the sweep driver.
//!
//! Determinism contract: a (config, seed, corpus) triple fully determines
//! the trained parameters. Batch items run in parallel but their gradients
//! are reduced in slot order, and each item derives its own dropout RNG
//! from (seed, step, slot), so thread scheduling cannot change results.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{
    distance_matrix_const, distance_matrix_dep, distance_pool, random_distances,
    sequential_distances, DistanceMatrix,
};
use crate::error::{Error, Result};
use crate::loss::{
    aggregate_word_attention, aggregate_word_attention_backward, total_loss, tree_planting_loss,
    tree_planting_loss_backward, LossBreakdown,
};
use crate::model::checkpoint::Checkpoint;
use crate::model::ops::log_softmax_row;
use crate::model::{GptModel, GptParams, HeadSelection, ModelConfig};
use crate::supervision::{supervision_matrix, SupervisionMatrix};
use crate::tokenizer::{encode_with_alignment, Vocabulary, WordAlignment};
use crate::treebank::{parse_bracketed, parse_conllu, ConstituencyTree, DependencyTree, Sentence};

/// Which structure (or baseline) supplies the supervision targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupervisionKind {
    /// Dependency tree distances.
    Dep,
    /// Constituency tree distances.
    Cons,
    /// Right-factored binarized constituency distances.
    Bin,
    /// No supervision: a plain language model.
    Zero,
    /// Distances resampled i.i.d. from the dependency-distance pool.
    Rand,
    /// Positional offsets `|i - j|`.
    Seq,
}

impl SupervisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dep => "dep",
            Self::Cons => "cons",
            Self::Bin => "bin",
            Self::Zero => "zero",
            Self::Rand => "rand",
            Self::Seq => "seq",
        }
    }
}

impl std::str::FromStr for SupervisionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dep" => Ok(Self::Dep),
            "cons" => Ok(Self::Cons),
            "bin" => Ok(Self::Bin),
            "zero" => Ok(Self::Zero),
            "rand" => Ok(Self::Rand),
            "seq" => Ok(Self::Seq),
            other => Err(Error::Config(format!("unknown supervision kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePlantConfig {
    pub kind: SupervisionKind,
    pub lambda: f64,
    pub selection: HeadSelection,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global L2 gradient clip; disabled by default.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl TreePlantConfig {
    /// Laptop-scale defaults: a single tree-planted head on the last layer,
    /// constant learning rate, no gradient clipping.
    pub fn desk_default(kind: SupervisionKind, vocab_size: usize) -> Self {
        let model = ModelConfig::desk_default(vocab_size);
        let selection = HeadSelection::single_last_layer(&model);
        Self {
            kind,
            lambda: 0.5,
            selection,
            model,
            optimizer: OptimizerConfig::default(),
            epochs: 20,
            batch_size: 16,
            seed: 0,
            grad_clip: None,
        }
    }

    /// Full-scale preset: GPT-2-small geometry, lr 5e-5, 10 epochs,
    /// batch 256, dropout 0.1, lambda 0.5, one last-layer head.
    pub fn paper_preset(kind: SupervisionKind, vocab_size: usize) -> Self {
        let model = ModelConfig::gpt2_small(vocab_size);
        let selection = HeadSelection::single_last_layer(&model);
        Self {
            kind,
            lambda: 0.5,
            selection,
            model,
            optimizer: OptimizerConfig {
                lr: 5e-5,
                ..OptimizerConfig::default()
            },
            epochs: 10,
            batch_size: 256,
            seed: 0,
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.selection.validate(&self.model)?;
        if self.lambda < 0.0 {
            return Err(Error::Config(format!("negative lambda {}", self.lambda)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.optimizer.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One augmented, tokenized sentence ready for training.
#[derive(Debug, Clone)]
pub struct Example {
    pub words: Vec<String>,
    pub ids: Vec<u32>,
    pub align: WordAlignment,
    pub sup: Option<SupervisionMatrix>,
}

/// Parsed treebank input of either structure type.
pub enum TreeFile {
    Dependency(Vec<DependencyTree>),
    Constituency(Vec<ConstituencyTree>),
}

impl TreeFile {
    pub fn len(&self) -> usize {
        match self {
            Self::Dependency(t) => t.len(),
            Self::Constituency(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses treebank text, sniffing the format: a first non-blank line that
/// starts with `(` is bracketed constituency, anything else CoNLL-U.
pub fn load_trees(text: &str) -> Result<TreeFile> {
    let first = text
        .lines()
        .map(str::trim_start)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    match first {
        Some(l) if l.starts_with('(') => Ok(TreeFile::Constituency(parse_bracketed(text)?)),
        Some(_) => Ok(TreeFile::Dependency(parse_conllu(text)?)),
        None => Err(Error::Data("empty treebank file".into())),
    }
}

/// Per-sentence output of preprocessing: the augmented words, and for
/// supervised kinds the distance and supervision matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub words: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<DistanceMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<SupervisionMatrix>,
}

fn augmented_sentences(trees: &TreeFile) -> Result<Vec<Sentence>> {
    match trees {
        TreeFile::Dependency(ts) => ts
            .iter()
            .map(|t| Ok(t.augment_bos_eos()?.sentence))
            .collect(),
        TreeFile::Constituency(ts) => {
            ts.iter().map(|t| t.augment_bos_eos()?.sentence()).collect()
        }
    }
}

/// Computes per-sentence distance and supervision matrices for `kind`.
/// `zero` yields words only. Errors if the file type cannot serve the kind
/// (dependency files for `dep`/`rand`, constituency for `cons`/`bin`).
pub fn preprocess(
    trees: &TreeFile,
    kind: SupervisionKind,
    seed: u64,
) -> Result<Vec<PreprocessRecord>> {
    if trees.is_empty() {
        return Err(Error::Data("empty treebank file".into()));
    }
    let records = match (kind, trees) {
        (SupervisionKind::Dep, TreeFile::Dependency(ts)) => ts
            .iter()
            .map(|t| {
                let aug = t.augment_bos_eos()?;
                let d = distance_matrix_dep(&aug)?;
                let s = supervision_matrix(&d)?;
                Ok(PreprocessRecord {
                    words: aug.sentence.words,
                    d: Some(d),
                    s: Some(s),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        (SupervisionKind::Cons, TreeFile::Constituency(ts)) => ts
            .iter()
            .map(|t| {
                let aug = t.augment_bos_eos()?;
                let d = distance_matrix_const(&aug)?;
                let s = supervision_matrix(&d)?;
                Ok(PreprocessRecord {
                    words: aug.sentence()?.words,
                    d: Some(d),
                    s: Some(s),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        (SupervisionKind::Bin, TreeFile::Constituency(ts)) => ts
            .iter()
            .map(|t| {
                let aug = t.binarize().augment_bos_eos()?;
                let d = distance_matrix_const(&aug)?;
                let s = supervision_matrix(&d)?;
                Ok(PreprocessRecord {
                    words: aug.sentence()?.words,
                    d: Some(d),
                    s: Some(s),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        (SupervisionKind::Rand, TreeFile::Dependency(ts)) => {
            // Pool the real dependency distances, then resample entrywise
            // with one fixed sample per sentence per run.
            let augmented: Vec<DependencyTree> = ts
                .iter()
                .map(DependencyTree::augment_bos_eos)
                .collect::<Result<_>>()?;
            let mats: Vec<DistanceMatrix> = augmented
                .iter()
                .map(distance_matrix_dep)
                .collect::<Result<_>>()?;
            let pool = distance_pool(&mats);
            augmented
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let d = random_distances(t.len(), &pool, derive_seed(seed, 1, i as u64))?;
                    let s = supervision_matrix(&d)?;
                    Ok(PreprocessRecord {
                        words: t.sentence.words.clone(),
                        d: Some(d),
                        s: Some(s),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        (SupervisionKind::Seq, _) => augmented_sentences(trees)?
            .into_iter()
            .map(|sent| {
                let d = sequential_distances(sent.len());
                let s = supervision_matrix(&d)?;
                Ok(PreprocessRecord {
                    words: sent.words,
                    d: Some(d),
                    s: Some(s),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        (SupervisionKind::Zero, _) => augmented_sentences(trees)?
            .into_iter()
            .map(|sent| {
                Ok(PreprocessRecord {
                    words: sent.words,
                    d: None,
                    s: None,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        (kind, TreeFile::Dependency(_)) => {
            return Err(Error::Config(format!(
                "kind {} needs constituency trees but the file holds dependency trees",
                kind.as_str()
            )))
        }
        (kind, TreeFile::Constituency(_)) => {
            return Err(Error::Config(format!(
                "kind {} needs dependency trees but the file holds constituency trees",
                kind.as_str()
            )))
        }
    };
    Ok(records)
}

/// Tokenizes preprocessed records into training examples.
pub fn prepare_dataset(
    trees: &TreeFile,
    kind: SupervisionKind,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<Vec<Example>> {
    preprocess(trees, kind, seed)?
        .into_iter()
        .map(|rec| {
            let sentence = Sentence::new(rec.words.clone())?;
            let (ids, align) = encode_with_alignment(&sentence, vocab);
            Ok(Example {
                words: rec.words,
                ids,
                align,
                sup: rec.s,
            })
        })
        .collect()
}

/// Splitmix-style seed derivation so nested RNG streams never alias.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut x = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Decoupled-weight-decay Adam over the canonical tensor list.
pub struct AdamW {
    cfg: OptimizerConfig,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(params: &GptParams, cfg: OptimizerConfig) -> Self {
        let shapes: Vec<Array2<f64>> = params
            .named_tensors()
            .iter()
            .map(|(_, t, _)| Array2::zeros(t.raw_dim()))
            .collect();
        Self {
            cfg,
            t: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    pub fn step(&mut self, params: &mut GptParams, grads: &GptParams) {
        self.t += 1;
        let (b1, b2) = self.cfg.betas;
        let bc1 = 1.0 - b1.powi(self.t);
        let bc2 = 1.0 - b2.powi(self.t);
        let lr = self.cfg.lr;
        let eps = self.cfg.eps;
        let wd = self.cfg.weight_decay;
        let grad_tensors = grads.named_tensors();
        for (i, (p, decay)) in params.tensors_mut().into_iter().enumerate() {
            let g = grad_tensors[i].1;
            self.m[i].zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            self.v[i].zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            let m = &self.m[i];
            let v = &self.v[i];
            ndarray::Zip::from(&mut *p).and(m).and(v).for_each(|p, &m, &v| {
                let update = (m / bc1) / ((v / bc2).sqrt() + eps);
                let decay_term = if decay { wd * *p } else { 0.0 };
                *p -= lr * (update + decay_term);
            });
        }
    }
}

/// Per-step entry of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub epoch: usize,
    pub nwp: f64,
    pub tree: Vec<f64>,
    pub total: f64,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainLogEntry>,
}

struct ItemResult {
    grads: GptParams,
    nwp_sum: f64,
    tree: Vec<f64>,
}

fn run_item(
    model: &GptModel,
    selection: &HeadSelection,
    example: &Example,
    lambda: f64,
    batch_size: usize,
    token_total: usize,
    dropout_seed: Option<u64>,
) -> Result<ItemResult> {
    let ids = &example.ids;
    let t = ids.len();
    let tape = model.forward_tape(ids, selection, dropout_seed)?;

    let v = model.config.vocab_size;
    let mut dlogits = Array2::zeros((t, v));
    let mut nwp_sum = 0.0;
    let scale = 1.0 / token_total as f64;
    for pos in 0..t - 1 {
        let target = ids[pos + 1] as usize;
        let row = tape.logits.row(pos);
        let lsm = log_softmax_row(row.as_slice().expect("contiguous logits row"));
        nwp_sum -= lsm[target];
        for (j, &l) in lsm.iter().enumerate() {
            dlogits[[pos, j]] = (l.exp() - f64::from(j == target)) * scale;
        }
    }

    let mut tree = Vec::new();
    let mut attn_grads: Vec<Option<Array2<f64>>> = vec![None; tape.record.heads.len()];
    if let Some(sup) = &example.sup {
        let heads = tape.record.heads.len();
        for (idx, (_, a)) in tape.record.heads.iter().enumerate() {
            let w = aggregate_word_attention(a, &example.align)?;
            tree.push(tree_planting_loss(sup, &w)?);
            if lambda > 0.0 {
                let upstream = lambda / (heads * batch_size) as f64;
                let dw = tree_planting_loss_backward(sup, &w, upstream);
                attn_grads[idx] =
                    Some(aggregate_word_attention_backward(a, &example.align, &w, &dw)?);
            }
        }
    }

    let grads = model.backward(&tape, &dlogits, &attn_grads)?;
    Ok(ItemResult {
        grads,
        nwp_sum,
        tree,
    })
}

fn global_grad_norm(grads: &GptParams) -> f64 {
    grads
        .named_tensors()
        .iter()
        .map(|(_, t, _)| t.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

fn scale_grads(grads: &mut GptParams, factor: f64) {
    for (t, _) in grads.tensors_mut() {
        *t *= factor;
    }
}

/// Trains a model on tokenized examples. Deterministic given the config
/// seed: fixed init, fixed shuffles, order-fixed gradient reduction.
pub fn train(
    config: &TreePlantConfig,
    dataset: &[Example],
    vocab: &Vocabulary,
) -> Result<TrainOutcome> {
    train_with_observer(config, dataset, vocab, |_| {})
}

/// [`train`] with a per-step callback (used to stream JSONL logs).
pub fn train_with_observer(
    config: &TreePlantConfig,
    dataset: &[Example],
    vocab: &Vocabulary,
    mut observe: impl FnMut(&TrainLogEntry),
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("empty training dataset".into()));
    }
    if config.model.vocab_size != vocab.size() {
        return Err(Error::Config(format!(
            "model vocab_size {} but vocabulary has {} tokens",
            config.model.vocab_size,
            vocab.size()
        )));
    }
    if let Some(too_long) = dataset.iter().find(|e| e.ids.len() > config.model.max_seq) {
        return Err(Error::Config(format!(
            "sentence of {} subwords exceeds max_seq {}",
            too_long.ids.len(),
            config.model.max_seq
        )));
    }

    let mut model = GptModel::new(config.model.clone(), derive_seed(config.seed, 0, 0))?;
    let mut opt = AdamW::new(&model.params, config.optimizer.clone());
    let mut log = Vec::new();

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut shuffle_rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2, 0));

    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let token_total: usize = batch.iter().map(|&i| dataset[i].ids.len() - 1).sum();
            let dropout_on = model.config.dropout > 0.0;
            let results: Vec<Result<ItemResult>> = batch
                .par_iter()
                .enumerate()
                .map(|(slot, &i)| {
                    let dropout_seed =
                        dropout_on.then(|| derive_seed(config.seed, 3 + step as u64, slot as u64));
                    run_item(
                        &model,
                        &config.selection,
                        &dataset[i],
                        config.lambda,
                        batch.len(),
                        token_total,
                        dropout_seed,
                    )
                })
                .collect();

            let mut grads: Option<GptParams> = None;
            let mut nwp_sum = 0.0;
            let mut tree_sums = vec![0.0; config.selection.len()];
            let mut have_tree = false;
            for res in results {
                let item = res?;
                nwp_sum += item.nwp_sum;
                if !item.tree.is_empty() {
                    have_tree = true;
                    for (h, v) in item.tree.iter().enumerate() {
                        tree_sums[h] += v;
                    }
                }
                match &mut grads {
                    Some(g) => g.add_assign(&item.grads),
                    None => grads = Some(item.grads),
                }
            }
            let mut grads = grads.expect("non-empty batch");
            if let Some(clip) = config.grad_clip {
                let norm = global_grad_norm(&grads);
                if norm > clip {
                    scale_grads(&mut grads, clip / norm);
                }
            }

            let nwp = nwp_sum / token_total as f64;
            let tree: Vec<f64> = if have_tree {
                tree_sums.iter().map(|s| s / batch.len() as f64).collect()
            } else {
                Vec::new()
            };
            let breakdown: LossBreakdown = total_loss(nwp, &tree, config.lambda)?;
            if !breakdown.total.is_finite() {
                return Err(Error::Diverged {
                    step,
                    msg: format!("nwp {} tree {:?}", breakdown.nwp, breakdown.tree),
                });
            }
            opt.step(&mut model.params, &grads);
            let entry = TrainLogEntry {
                step,
                epoch,
                nwp: breakdown.nwp,
                tree: breakdown.tree,
                total: breakdown.total,
            };
            observe(&entry);
            log.push(entry);
        }
    }

    let checkpoint = Checkpoint::new(model, config.selection.clone(), vocab)?;
    Ok(TrainOutcome { checkpoint, log })
}

/// Mean tree-planting loss of a checkpoint over a supervised dataset with
/// dropout off: the convergence figure overfit runs report.
pub fn mean_tree_loss(ckpt: &Checkpoint, dataset: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in dataset {
        let Some(sup) = &ex.sup else {
            return Err(Error::Data("dataset carries no supervision".into()));
        };
        let tape = ckpt.model.forward_tape(&ex.ids, &ckpt.selection, None)?;
        for (_, a) in &tape.record.heads {
            let w = aggregate_word_attention(a, &ex.align)?;
            total += tree_planting_loss(sup, &w)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Data("no tree-planted heads to evaluate".into()));
    }
    Ok(total / count as f64)
}

/// One axis of the head/layer/weight extension study.
#[derive(Debug, Clone)]
pub enum SweepSpec {
    /// `value` tree-planted heads on the last layer.
    Heads(Vec<usize>),
    /// Head 0 of each of the bottom `value` layers.
    Layers(Vec<usize>),
    /// Loss-weight grid.
    Weight(Vec<f64>),
}

impl SweepSpec {
    pub fn validate(&self, config: &TreePlantConfig) -> Result<()> {
        match self {
            Self::Heads(grid) => {
                if grid.is_empty() {
                    return Err(Error::Config("empty sweep grid".into()));
                }
                if let Some(&bad) = grid.iter().find(|&&h| h > config.model.heads) {
                    return Err(Error::Config(format!(
                        "{bad} tree-planted heads on a {}-head layer",
                        config.model.heads
                    )));
                }
            }
            Self::Layers(grid) => {
                if grid.is_empty() {
                    return Err(Error::Config("empty sweep grid".into()));
                }
                if let Some(&bad) = grid.iter().find(|&&l| l > config.model.layers) {
                    return Err(Error::Config(format!(
                        "{bad} tree-planted layers in a {}-layer model",
                        config.model.layers
                    )));
                }
            }
            Self::Weight(grid) => {
                if grid.is_empty() {
                    return Err(Error::Config("empty sweep grid".into()));
                }
                if let Some(&bad) = grid.iter().find(|&&w| w < 0.0 || !w.is_finite()) {
                    return Err(Error::Config(format!("invalid loss weight {bad}")));
                }
            }
        }
        Ok(())
    }

    fn points(&self) -> Vec<f64> {
        match self {
            Self::Heads(g) => g.iter().map(|&x| x as f64).collect(),
            Self::Layers(g) => g.iter().map(|&x| x as f64).collect(),
            Self::Weight(g) => g.clone(),
        }
    }

    fn apply(&self, base: &TreePlantConfig, value: f64) -> TreePlantConfig {
        let mut config = base.clone();
        match self {
            Self::Heads(_) => {
                config.selection = HeadSelection::last_layer_heads(&config.model, value as usize);
            }
            Self::Layers(_) => {
                config.selection = HeadSelection::bottom_layers(value as usize);
            }
            Self::Weight(_) => {
                config.lambda = value;
            }
        }
        config
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub sg_accuracy: f64,
    pub ppl: f64,
    pub seed: u64,
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Grid points whose training failed, with the error text.
    pub failures: Vec<(f64, String)>,
}

/// Trains and evaluates one model per grid point. Failures are recorded
/// and the grid continues.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &TreePlantConfig,
    dataset: &[Example],
    vocab: &Vocabulary,
    suites: &[crate::eval::SyntacticSuite],
    ppl_corpus: &[Sentence],
) -> Result<SweepOutcome> {
    spec.validate(base)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for value in spec.points() {
        let config = spec.apply(base, value);
        let attempt = (|| -> Result<SweepRow> {
            let outcome = train(&config, dataset, vocab)?;
            let scorer = crate::eval::ModelScorer::new(&outcome.checkpoint.model);
            let report = crate::eval::evaluate(&scorer, vocab, suites, ppl_corpus)?;
            Ok(SweepRow {
                value,
                sg_accuracy: report.overall,
                ppl: report.ppl,
                seed: config.seed,
            })
        })();
        match attempt {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((value, e.to_string())),
        }
    }
    Ok(SweepOutcome { rows, failures })
}

/// CSV rendering of sweep results, header `value,sg_accuracy,ppl,seed`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,sg_accuracy,ppl,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.value, r.sg_accuracy, r.ppl, r.seed
        ));
    }
    out
}
