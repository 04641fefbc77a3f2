//! A synthetic subject-verb agreement grammar with gold dependency trees.
//!
//! Sentence shape: `(Adv)? the (Adj)* N (P the (Adj)* N')* V`, with zero,
//! one, or two prepositional phrases. The verb agrees in number with the
//! subject noun N; attractor nouns N' vary freely (optionally correlated
//! with the subject's number, which rewards a nearest-noun heuristic during
//! training). Adverbs and adjectives are number-neutral and shift every
//! content word's linear position, so neither absolute position nor string
//! recency identifies the subject. On the gold tree the subject is always
//! at distance 1 from the verb while attractors sit at distances 3 and 5:
//! prepositions head their object noun and attach to the preceding noun.
//!
//! Minimal-pair suites built from the same grammar use the PP shapes with
//! every attractor number-mismatched, contrasting the two verb forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{ConditionRegion, Criterion, RegionText, SuiteItem, SyntacticSuite};
use crate::treebank::{DependencyTree, Head, Sentence};

#[derive(Debug, Clone)]
pub struct AgreementGrammar {
    /// (singular, plural) noun pairs.
    pub nouns: Vec<(&'static str, &'static str)>,
    /// (singular, plural) verb pairs.
    pub verbs: Vec<(&'static str, &'static str)>,
    pub preps: Vec<&'static str>,
    pub adjectives: Vec<&'static str>,
    pub adverbs: Vec<&'static str>,
    /// Sampling weights of the 0-, 1-, and 2-PP shapes.
    pub shape_weights: [f64; 3],
    /// Probability that an attractor noun carries the subject's number.
    /// Above 0.5 a nearest-noun heuristic pays off during training while
    /// the (always mismatched) suite items punish it.
    pub attractor_match_prob: f64,
    /// Probability of a sentence-initial adverb.
    pub adverb_prob: f64,
    /// Probability that a single-PP sentence fronts its PP before the
    /// subject ("near the cats the dog smiles"), attached to the verb.
    pub fronted_prob: f64,
    /// Probability weights for 0, 1, or 2 adjectives in front of a noun.
    pub adjective_weights: [f64; 3],
}

impl Default for AgreementGrammar {
    fn default() -> Self {
        Self {
            nouns: vec![
                ("dog", "dogs"),
                ("cat", "cats"),
                ("author", "authors"),
                ("senator", "senators"),
                ("pilot", "pilots"),
                ("teacher", "teachers"),
                ("farmer", "farmers"),
                ("guard", "guards"),
                ("driver", "drivers"),
                ("singer", "singers"),
                ("judge", "judges"),
                ("nurse", "nurses"),
            ],
            verbs: vec![
                ("smiles", "smile"),
                ("runs", "run"),
                ("sleeps", "sleep"),
                ("waits", "wait"),
                ("sings", "sing"),
                ("laughs", "laugh"),
            ],
            preps: vec!["near", "beside", "behind", "above"],
            adjectives: vec!["old", "young", "tall", "small", "kind", "busy", "calm", "quiet"],
            adverbs: vec!["today", "yesterday", "often", "soon"],
            shape_weights: [0.3, 0.45, 0.25],
            attractor_match_prob: 0.5,
            adverb_prob: 0.3,
            fronted_prob: 0.0,
            adjective_weights: [0.5, 0.35, 0.15],
        }
    }
}

struct NounPhrase {
    adjectives: Vec<&'static str>,
    noun: String,
}

struct Draw {
    adverb: Option<&'static str>,
    subject: NounPhrase,
    verb: String,
    phrases: Vec<(&'static str, NounPhrase)>,
    fronted: bool,
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if pick < *w {
            return i;
        }
        pick -= w;
    }
    weights.len() - 1
}

impl AgreementGrammar {
    fn noun_phrase(&self, rng: &mut ChaCha8Rng, plural: bool) -> NounPhrase {
        let count = pick_weighted(rng, &self.adjective_weights);
        let adjectives = (0..count)
            .map(|_| self.adjectives[rng.gen_range(0..self.adjectives.len())])
            .collect();
        let (sg, pl) = self.nouns[rng.gen_range(0..self.nouns.len())];
        NounPhrase {
            adjectives,
            noun: if plural { pl } else { sg }.to_string(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Draw {
        let adverb = rng
            .gen_bool(self.adverb_prob)
            .then(|| self.adverbs[rng.gen_range(0..self.adverbs.len())]);
        let subject_plural = rng.gen_bool(0.5);
        let subject = self.noun_phrase(rng, subject_plural);
        let (vsg, vpl) = self.verbs[rng.gen_range(0..self.verbs.len())];
        let verb = if subject_plural { vpl } else { vsg }.to_string();
        let pps = pick_weighted(rng, &self.shape_weights);
        let phrases = (0..pps)
            .map(|_| {
                let prep = self.preps[rng.gen_range(0..self.preps.len())];
                let plural = if rng.gen_bool(self.attractor_match_prob) {
                    subject_plural
                } else {
                    !subject_plural
                };
                let np = self.noun_phrase(rng, plural);
                (prep, np)
            })
            .collect();
        let fronted = pps == 1 && rng.gen_bool(self.fronted_prob);
        Draw {
            adverb,
            subject,
            verb,
            phrases,
            fronted,
        }
    }

    /// Gold tree: adverbs attach to the verb, determiners and adjectives to
    /// their noun, the subject to the verb, each preposition to the
    /// preceding noun, each object noun to its preposition, the verb to
    /// ROOT.
    fn tree_of(&self, draw: &Draw) -> DependencyTree {
        let mut words: Vec<String> = Vec::new();
        // Heads are patched once positions are final: usize::MAX marks the
        // verb slot, usize::MAX - 1 an attachment to the verb.
        const VERB: usize = usize::MAX;
        const TO_VERB: usize = usize::MAX - 1;
        let mut raw: Vec<usize> = Vec::new();
        if let Some(adv) = draw.adverb {
            words.push(adv.into());
            raw.push(TO_VERB);
        }
        let push_np = |words: &mut Vec<String>, raw: &mut Vec<usize>, np: &NounPhrase, head: usize| -> usize {
            let noun_pos = words.len() + 1 + np.adjectives.len();
            words.push("the".into());
            raw.push(noun_pos);
            for adj in &np.adjectives {
                words.push((*adj).into());
                raw.push(noun_pos);
            }
            words.push(np.noun.clone());
            raw.push(head);
            noun_pos
        };
        if draw.fronted {
            // Fronted PP attaches to the verb: P the (adj)* N' precede the
            // subject NP.
            let (prep, np) = &draw.phrases[0];
            let prep_pos = words.len();
            words.push((*prep).into());
            raw.push(TO_VERB);
            push_np(&mut words, &mut raw, np, prep_pos);
            push_np(&mut words, &mut raw, &draw.subject, TO_VERB);
        } else {
            let subject_pos = push_np(&mut words, &mut raw, &draw.subject, TO_VERB);
            let mut prev_noun = subject_pos;
            for (prep, np) in &draw.phrases {
                let prep_pos = words.len();
                words.push((*prep).into());
                raw.push(prev_noun);
                prev_noun = push_np(&mut words, &mut raw, np, prep_pos);
            }
        }
        let verb_pos = words.len();
        words.push(draw.verb.clone());
        raw.push(VERB);
        let heads = raw
            .into_iter()
            .map(|h| match h {
                VERB => Head::Root,
                TO_VERB => Head::Word(verb_pos),
                other => Head::Word(other),
            })
            .collect();
        DependencyTree::new(Sentence::new(words).unwrap(), heads).unwrap()
    }

    /// Deterministic corpus of `n` sentences with gold trees.
    pub fn corpus(&self, n: usize, seed: u64) -> Vec<DependencyTree> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.tree_of(&self.draw(&mut rng))).collect()
    }

    /// Content-word sentences (no trees), e.g. for perplexity corpora.
    pub fn sentences(&self, n: usize, seed: u64) -> Vec<Sentence> {
        self.corpus(n, seed)
            .into_iter()
            .map(|t| t.sentence)
            .collect()
    }

    /// Every distinct word the grammar can emit; lets callers size the
    /// vocabulary so each word is a single token.
    pub fn lexicon(&self) -> Vec<String> {
        let mut words = vec!["the".to_string()];
        for (sg, pl) in &self.nouns {
            words.push((*sg).into());
            words.push((*pl).into());
        }
        for (sg, pl) in &self.verbs {
            words.push((*sg).into());
            words.push((*pl).into());
        }
        words.extend(self.preps.iter().map(|p| p.to_string()));
        words.extend(self.adjectives.iter().map(|a| a.to_string()));
        words.extend(self.adverbs.iter().map(|a| a.to_string()));
        words
    }

    /// Minimal-pair suite: PP shapes only (alternating one and two PPs),
    /// every attractor noun carries the opposite number from the subject,
    /// and the two verb forms are contrasted at the verb region.
    pub fn suite(&self, items: usize, seed: u64) -> SyntacticSuite {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(items);
        let mut seen = std::collections::HashSet::new();
        while out.len() < items {
            let double = out.len() % 2 == 1;
            let subject_plural = rng.gen_bool(0.5);
            let mut grammar = self.clone();
            grammar.attractor_match_prob = 0.0;
            grammar.fronted_prob = 0.0;
            grammar.shape_weights = if double { [0.0, 0.0, 1.0] } else { [0.0, 1.0, 0.0] };
            let mut draw = grammar.draw(&mut rng);
            // Force the drawn subject number to the item's.
            let si = rng.gen_range(0..self.nouns.len());
            draw.subject.noun =
                if subject_plural { self.nouns[si].1 } else { self.nouns[si].0 }.to_string();
            for (_, np) in &mut draw.phrases {
                let mut ai = rng.gen_range(0..self.nouns.len());
                if ai == si {
                    ai = (ai + 1) % self.nouns.len();
                }
                np.noun =
                    if subject_plural { self.nouns[ai].0 } else { self.nouns[ai].1 }.to_string();
            }
            let vi = rng.gen_range(0..self.verbs.len());
            let (good, bad) = if subject_plural {
                (self.verbs[vi].1, self.verbs[vi].0)
            } else {
                (self.verbs[vi].0, self.verbs[vi].1)
            };

            let mut prefix = Vec::new();
            if let Some(adv) = draw.adverb {
                prefix.push(adv.to_string());
            }
            prefix.push("the".into());
            prefix.extend(draw.subject.adjectives.iter().map(|a| a.to_string()));
            prefix.push(draw.subject.noun.clone());
            let subject_text = prefix.join(" ");
            let pp_text = draw
                .phrases
                .iter()
                .map(|(prep, np)| {
                    let mut parts = vec![prep.to_string(), "the".into()];
                    parts.extend(np.adjectives.iter().map(|a| a.to_string()));
                    parts.push(np.noun.clone());
                    parts.join(" ")
                })
                .collect::<Vec<_>>()
                .join(" ");
            let key = format!("{subject_text}|{pp_text}|{good}");
            if !seen.insert(key) {
                continue;
            }
            let make_condition = |verb: &str| {
                vec![
                    RegionText {
                        region: "subject".into(),
                        text: subject_text.clone(),
                    },
                    RegionText {
                        region: "pp".into(),
                        text: pp_text.clone(),
                    },
                    RegionText {
                        region: "verb".into(),
                        text: verb.to_string(),
                    },
                ]
            };
            let mut conditions = std::collections::BTreeMap::new();
            conditions.insert("grammatical".to_string(), make_condition(good));
            conditions.insert("ungrammatical".to_string(), make_condition(bad));
            out.push(SuiteItem {
                conditions,
                criterion: Criterion {
                    lesser: ConditionRegion {
                        condition: "grammatical".into(),
                        region: "verb".into(),
                    },
                    greater: ConditionRegion {
                        condition: "ungrammatical".into(),
                        region: "verb".into(),
                    },
                },
            });
        }
        SyntacticSuite {
            name: "subject-verb number agreement with prepositional phrases".into(),
            circuit: "Agreement".into(),
            items: out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::distance_matrix_dep;

    #[test]
    fn corpus_is_deterministic_and_valid() {
        let g = AgreementGrammar::default();
        let a = g.corpus(50, 3);
        let b = g.corpus(50, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn subject_is_tree_adjacent_to_verb_but_string_distant() {
        let g = AgreementGrammar::default();
        let nouns: std::collections::HashSet<&str> = g
            .nouns
            .iter()
            .flat_map(|(s, p)| [*s, *p])
            .collect();
        let mut checked_double = false;
        for tree in g.corpus(300, 1) {
            let verb = tree.len() - 1;
            let d = distance_matrix_dep(&tree).unwrap();
            let noun_positions: Vec<usize> = tree
                .sentence
                .words
                .iter()
                .enumerate()
                .filter(|(_, w)| nouns.contains(w.as_str()))
                .map(|(i, _)| i)
                .collect();
            // First noun is the subject: tree distance 1. Later nouns are
            // attractors: distances 3, 5, ...
            for (k, &pos) in noun_positions.iter().enumerate() {
                assert_eq!(d.get(verb, pos), 1 + 2 * k as u32);
            }
            if noun_positions.len() == 3 {
                checked_double = true;
            }
        }
        assert!(checked_double, "no 2-PP sentence in 300 draws");
    }

    #[test]
    fn suite_items_mismatch_attractor_number() {
        let g = AgreementGrammar::default();
        let suite = g.suite(20, 9);
        suite.validate().unwrap();
        assert_eq!(suite.items.len(), 20);
        let plurals: std::collections::HashSet<&str> =
            g.nouns.iter().map(|(_, p)| *p).collect();
        let nouns: std::collections::HashSet<&str> = g
            .nouns
            .iter()
            .flat_map(|(s, p)| [*s, *p])
            .collect();
        for item in &suite.items {
            let gram = &item.conditions["grammatical"];
            let subject = gram[0]
                .text
                .split_whitespace()
                .find(|w| nouns.contains(w))
                .unwrap();
            let subject_plural = plurals.contains(subject);
            let attractors: Vec<&str> = gram[1]
                .text
                .split_whitespace()
                .filter(|w| nouns.contains(w))
                .collect();
            assert!(!attractors.is_empty());
            for attractor in attractors {
                assert_ne!(
                    subject_plural,
                    plurals.contains(attractor),
                    "attractor must mismatch subject number: {subject} vs {attractor}"
                );
            }
        }
    }

    #[test]
    fn lexicon_covers_generated_words() {
        let g = AgreementGrammar::default();
        let lexicon: std::collections::HashSet<String> = g.lexicon().into_iter().collect();
        for s in g.sentences(100, 5) {
            for w in &s.words {
                assert!(lexicon.contains(w), "{w} missing from lexicon");
            }
        }
    }
}
