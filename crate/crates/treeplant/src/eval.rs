//! Targeted syntactic evaluation over minimal-pair suites, word-level
//! perplexity, and a word-attention inspector for trained checkpoints.
//!
//! A suite is a set of items on one construction; each item holds named
//! conditions (the same sentence frame with the contrast applied) split
//! into named regions, plus a success criterion: a strict inequality
//! between the summed surprisals of one region pair across two conditions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{aggregate_word_attention, kl_divergence_rows};
use crate::model::checkpoint::Checkpoint;
use crate::model::ops::log_softmax_row;
use crate::model::{GptModel, HeadSelection};
use crate::supervision::SupervisionMatrix;
use crate::tokenizer::{encode_with_alignment, Vocabulary};
use crate::treebank::{Sentence, BOS_WORD, EOS_WORD};

/// Anything that can score token sequences left to right.
pub trait SequenceScorer: Sync {
    fn vocab_size(&self) -> usize;

    /// `log p(ids[t] | ids[..t])` for `t in 1..len`; one value per
    /// transition, natural log.
    fn token_log_probs(&self, ids: &[u32]) -> Result<Vec<f64>>;
}

/// Scores sequences with a trained transformer (dropout off).
pub struct ModelScorer<'a> {
    model: &'a GptModel,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a GptModel) -> Self {
        Self { model }
    }
}

impl SequenceScorer for ModelScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn token_log_probs(&self, ids: &[u32]) -> Result<Vec<f64>> {
        let (logits, _) = self.model.forward(ids, &HeadSelection::empty())?;
        Ok((1..ids.len())
            .map(|t| {
                let row = logits.row(t - 1);
                let lsm = log_softmax_row(row.as_slice().expect("contiguous logits row"));
                lsm[ids[t] as usize]
            })
            .collect())
    }
}

/// One region of one condition: a name and its (possibly empty) text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionText {
    pub region: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionRegion {
    pub condition: String,
    pub region: String,
}

/// Success criterion: the `lesser` side must have strictly smaller summed
/// surprisal than the `greater` side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub lesser: ConditionRegion,
    pub greater: ConditionRegion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteItem {
    pub conditions: BTreeMap<String, Vec<RegionText>>,
    pub criterion: Criterion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntacticSuite {
    pub name: String,
    pub circuit: String,
    pub items: Vec<SuiteItem>,
}

impl SyntacticSuite {
    pub fn from_json(text: &str) -> Result<Self> {
        let suite: Self = serde_json::from_str(text)?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the structural invariants: non-empty, conditions within an
    /// item share region names, and every criterion references existing
    /// conditions and regions.
    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::Data(format!("suite {} has no items", self.name)));
        }
        for (i, item) in self.items.iter().enumerate() {
            let mut region_names: Option<Vec<&str>> = None;
            for (cond, regions) in &item.conditions {
                let names: Vec<&str> = regions.iter().map(|r| r.region.as_str()).collect();
                match &region_names {
                    None => region_names = Some(names),
                    Some(expected) if *expected != names => {
                        return Err(Error::Data(format!(
                            "suite {}, item {i}: condition {cond} has region names {names:?}, expected {expected:?}",
                            self.name
                        )))
                    }
                    _ => {}
                }
            }
            for side in [&item.criterion.lesser, &item.criterion.greater] {
                let Some(regions) = item.conditions.get(&side.condition) else {
                    return Err(Error::Data(format!(
                        "suite {}, item {i}: criterion references missing condition {:?}",
                        self.name, side.condition
                    )));
                };
                if !regions.iter().any(|r| r.region == side.region) {
                    return Err(Error::Data(format!(
                        "suite {}, item {i}: criterion references missing region {:?}",
                        self.name, side.region
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Summed surprisal (nats) of every region of one condition, conditioning
/// strictly left to right with BOS prepended. Regions tile the sentence.
pub fn region_surprisals(
    scorer: &dyn SequenceScorer,
    vocab: &Vocabulary,
    regions: &[RegionText],
) -> Result<Vec<(String, f64)>> {
    let mut words = vec![BOS_WORD.to_string()];
    let mut region_of_word = Vec::new();
    for (ri, r) in regions.iter().enumerate() {
        for w in r.text.split_whitespace() {
            words.push(w.to_string());
            region_of_word.push(ri);
        }
    }
    if words.len() == 1 {
        return Err(Error::Data("all regions are empty".into()));
    }
    let sentence = Sentence::new(words)?;
    let (ids, align) = encode_with_alignment(&sentence, vocab);
    let log_probs = scorer.token_log_probs(&ids)?;
    if log_probs.len() != ids.len() - 1 {
        return Err(Error::Data(format!(
            "scorer returned {} log-probs for {} transitions",
            log_probs.len(),
            ids.len() - 1
        )));
    }
    let mut totals = vec![0.0; regions.len()];
    for (word_idx, &ri) in region_of_word.iter().enumerate() {
        let (start, end) = align.spans[word_idx + 1]; // word 0 is BOS
        for pos in start..=end {
            totals[ri] -= log_probs[pos - 1];
        }
    }
    Ok(regions
        .iter()
        .zip(totals)
        .map(|(r, t)| (r.region.clone(), t))
        .collect())
}

fn criterion_surprisal(
    scorer: &dyn SequenceScorer,
    vocab: &Vocabulary,
    item: &SuiteItem,
    side: &ConditionRegion,
) -> Result<f64> {
    let regions = item.conditions.get(&side.condition).ok_or_else(|| {
        Error::Data(format!("criterion references missing condition {:?}", side.condition))
    })?;
    let surprisals = region_surprisals(scorer, vocab, regions)?;
    surprisals
        .iter()
        .find(|(name, _)| *name == side.region)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::Data(format!("criterion references missing region {:?}", side.region)))
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub circuit: String,
    pub accuracy: f64,
    pub items: usize,
}

/// Fraction of items whose criterion inequality holds strictly; ties fail.
pub fn evaluate_suite(
    scorer: &dyn SequenceScorer,
    vocab: &Vocabulary,
    suite: &SyntacticSuite,
) -> Result<SuiteResult> {
    suite.validate()?;
    let passes: Vec<Result<bool>> = suite
        .items
        .par_iter()
        .map(|item| {
            let lesser = criterion_surprisal(scorer, vocab, item, &item.criterion.lesser)?;
            let greater = criterion_surprisal(scorer, vocab, item, &item.criterion.greater)?;
            Ok(lesser < greater)
        })
        .collect();
    let mut passed = 0usize;
    for p in passes {
        if p? {
            passed += 1;
        }
    }
    Ok(SuiteResult {
        name: suite.name.clone(),
        circuit: suite.circuit.clone(),
        accuracy: passed as f64 / suite.items.len() as f64,
        items: suite.items.len(),
    })
}

/// `exp(total subword NLL / total word count)`: words counted excluding
/// BOS, including EOS. Sentences arrive un-augmented.
pub fn word_perplexity(
    scorer: &dyn SequenceScorer,
    vocab: &Vocabulary,
    corpus: &[Sentence],
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Data("empty perplexity corpus".into()));
    }
    let parts: Vec<Result<(f64, usize)>> = corpus
        .par_iter()
        .map(|sentence| {
            let mut words = vec![BOS_WORD.to_string()];
            words.extend(sentence.words.iter().cloned());
            words.push(EOS_WORD.to_string());
            let augmented = Sentence::new(words)?;
            let (ids, _) = encode_with_alignment(&augmented, vocab);
            let log_probs = scorer.token_log_probs(&ids)?;
            let nll = -log_probs.iter().sum::<f64>();
            Ok((nll, sentence.len() + 1))
        })
        .collect();
    let mut total_nll = 0.0;
    let mut total_words = 0usize;
    for p in parts {
        let (nll, words) = p?;
        total_nll += nll;
        total_words += words;
    }
    Ok((total_nll / total_words as f64).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct CircuitResult {
    pub circuit: String,
    pub accuracy: f64,
}

/// Suite, circuit, and overall accuracies (unweighted means across suites)
/// plus word-level perplexity.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub suites: Vec<SuiteResult>,
    pub circuits: Vec<CircuitResult>,
    pub overall: f64,
    pub ppl: f64,
}

pub fn evaluate(
    scorer: &dyn SequenceScorer,
    vocab: &Vocabulary,
    suites: &[SyntacticSuite],
    ppl_corpus: &[Sentence],
) -> Result<EvalReport> {
    if suites.is_empty() {
        return Err(Error::Data("no syntactic suites to evaluate".into()));
    }
    let results: Vec<SuiteResult> = suites
        .iter()
        .map(|s| evaluate_suite(scorer, vocab, s))
        .collect::<Result<_>>()?;
    let mut by_circuit: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in &results {
        by_circuit.entry(&r.circuit).or_default().push(r.accuracy);
    }
    let circuits = by_circuit
        .into_iter()
        .map(|(c, accs)| CircuitResult {
            circuit: c.to_string(),
            accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
        })
        .collect();
    let overall = results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64;
    let ppl = word_perplexity(scorer, vocab, ppl_corpus)?;
    Ok(EvalReport {
        suites: results,
        circuits,
        overall,
        ppl,
    })
}

/// CSV rendering of a report, one row per suite.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("suite,circuit,accuracy\n");
    for s in &report.suites {
        out.push_str(&format!("{},{},{}\n", s.name, s.circuit, s.accuracy));
    }
    out
}

/// Word-level attention of one tree-planted head on one sentence, with
/// per-row KL against supervision when a tree is supplied.
#[derive(Debug, Clone, Serialize)]
pub struct InspectedHead {
    pub layer: usize,
    pub head: usize,
    pub word_attention: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_rows: Option<Vec<f64>>,
}

/// Runs a checkpoint over one sentence (content words; BOS/EOS added here)
/// and aggregates each tree-planted head's attention to word level.
pub fn inspect(
    ckpt: &Checkpoint,
    vocab: &Vocabulary,
    content_words: &[String],
    sup: Option<&SupervisionMatrix>,
) -> Result<Vec<InspectedHead>> {
    if content_words.is_empty() {
        return Err(Error::Data("empty sentence".into()));
    }
    let mut words = vec![BOS_WORD.to_string()];
    words.extend(content_words.iter().cloned());
    words.push(EOS_WORD.to_string());
    let sentence = Sentence::new(words)?;
    let (ids, align) = encode_with_alignment(&sentence, vocab);
    let (_, record) = ckpt.model.forward(&ids, &ckpt.selection)?;
    record
        .heads
        .iter()
        .map(|((layer, head), a)| {
            let w = aggregate_word_attention(a, &align)?;
            let kl_rows = sup.map(|s| kl_divergence_rows(s, &w)).transpose()?;
            Ok(InspectedHead {
                layer: *layer,
                head: *head,
                word_attention: w.w,
                kl_rows,
            })
        })
        .collect()
}
