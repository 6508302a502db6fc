//! Synthetic corpora from a small probabilistic grammar. Every token
//! carries its generating class, so downstream clustering can be checked
//! against ground truth.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TaggedToken;
use crate::error::{LexError, Result};

/// One flat pattern: a class sequence and its selection probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pattern {
    pub classes: Vec<String>,
    pub p: f64,
}

/// A flat probabilistic grammar: named classes, a word list per class,
/// and weighted class-sequence patterns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcfgGrammar {
    pub classes: Vec<String>,
    pub lexicon: HashMap<String, Vec<String>>,
    pub patterns: Vec<Pattern>,
}

/// The grammar bundled for end-to-end runs: four classes of fifteen words
/// walking a fixed class cycle, so the class after any window is fully
/// determined by the class before it.
pub const GRAMMAR_4CLASS: &str = include_str!("../assets/grammar_4class.json");

impl PcfgGrammar {
    pub fn from_json(text: &str) -> Result<PcfgGrammar> {
        let grammar: PcfgGrammar = serde_json::from_str(text)
            .map_err(|e| LexError::Config(format!("grammar: {e}")))?;
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn from_file(path: &Path) -> Result<PcfgGrammar> {
        let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
        Self::from_json(&text)
    }

    /// The bundled four-class grammar.
    pub fn bundled() -> PcfgGrammar {
        Self::from_json(GRAMMAR_4CLASS).expect("bundled grammar is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(LexError::Config("grammar has no classes".into()));
        }
        if self.patterns.is_empty() {
            return Err(LexError::Config("grammar has no patterns".into()));
        }
        let class_set: HashSet<&String> = self.classes.iter().collect();
        if class_set.len() != self.classes.len() {
            return Err(LexError::Config("duplicate class name".into()));
        }
        let mut seen_words: HashMap<&str, &str> = HashMap::new();
        for class in &self.classes {
            let words = self
                .lexicon
                .get(class)
                .ok_or_else(|| LexError::Config(format!("class {class} missing from lexicon")))?;
            if words.is_empty() {
                return Err(LexError::Config(format!("class {class} has an empty word list")));
            }
            for word in words {
                if let Some(other) = seen_words.insert(word, class) {
                    return Err(LexError::Config(format!(
                        "word {word:?} appears in both {other} and {class}"
                    )));
                }
            }
        }
        for extra in self.lexicon.keys() {
            if !class_set.contains(extra) {
                return Err(LexError::Config(format!(
                    "lexicon class {extra} is not in the class list"
                )));
            }
        }
        let mut total = 0.0;
        for pattern in &self.patterns {
            if pattern.classes.is_empty() {
                return Err(LexError::Config("empty pattern".into()));
            }
            if !(pattern.p > 0.0 && pattern.p.is_finite()) {
                return Err(LexError::Config(format!(
                    "pattern probability {} must be positive and finite",
                    pattern.p
                )));
            }
            for class in &pattern.classes {
                if !class_set.contains(class) {
                    return Err(LexError::Config(format!(
                        "pattern references unknown class {class}"
                    )));
                }
            }
            total += pattern.p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(LexError::Config(format!(
                "pattern probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// Expected long-run token frequency per class, implied by the
    /// pattern probabilities and slot counts.
    pub fn class_frequencies(&self) -> HashMap<String, f64> {
        let mut counts: HashMap<String, f64> = HashMap::new();
        let mut total = 0.0;
        for pattern in &self.patterns {
            total += pattern.p * pattern.classes.len() as f64;
            for class in &pattern.classes {
                *counts.entry(class.clone()).or_default() += pattern.p;
            }
        }
        counts.values_mut().for_each(|v| *v /= total);
        counts
    }

    /// A `form -> class` map over the whole lexicon.
    pub fn word_classes(&self) -> HashMap<String, String> {
        let mut map = HashMap::new();
        for class in &self.classes {
            for word in &self.lexicon[class] {
                map.insert(word.clone(), class.clone());
            }
        }
        map
    }
}

/// Samples `sentences` pattern instances and fills each class slot with a
/// uniformly chosen word. Deterministic for a given seed.
pub fn generate_corpus(
    grammar: &PcfgGrammar,
    sentences: usize,
    seed: u64,
) -> Result<Vec<Vec<TaggedToken>>> {
    grammar.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::with_capacity(sentences);
    for _ in 0..sentences {
        let mut u: f64 = rng.gen();
        let mut chosen = grammar.patterns.last().expect("validated non-empty");
        for pattern in &grammar.patterns {
            if u < pattern.p {
                chosen = pattern;
                break;
            }
            u -= pattern.p;
        }
        let mut sentence = Vec::with_capacity(chosen.classes.len());
        for class in &chosen.classes {
            let words = &grammar.lexicon[class];
            let word = &words[rng.gen_range(0..words.len())];
            sentence.push(TaggedToken::tagged(word.clone(), class.clone()));
        }
        corpus.push(sentence);
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PcfgGrammar {
        PcfgGrammar {
            classes: vec!["DET".into(), "NOUN".into()],
            lexicon: [
                ("DET".to_string(), vec!["der".to_string()]),
                ("NOUN".to_string(), vec!["hund".to_string()]),
            ]
            .into_iter()
            .collect(),
            patterns: vec![Pattern {
                classes: vec!["DET".into(), "NOUN".into()],
                p: 1.0,
            }],
        }
    }

    #[test]
    fn single_pattern_repeats() {
        let corpus = generate_corpus(&tiny(), 3, 7).unwrap();
        let flat: Vec<TaggedToken> = corpus.into_iter().flatten().collect();
        let expected: Vec<TaggedToken> = (0..3)
            .flat_map(|_| {
                vec![
                    TaggedToken::tagged("der", "DET"),
                    TaggedToken::tagged("hund", "NOUN"),
                ]
            })
            .collect();
        assert_eq!(flat, expected);
    }

    #[test]
    fn same_seed_same_stream() {
        let grammar = PcfgGrammar::bundled();
        let a = generate_corpus(&grammar, 200, 13).unwrap();
        let b = generate_corpus(&grammar, 200, 13).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&grammar, 200, 14).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn validation_catches_bad_grammars() {
        let mut g = tiny();
        g.patterns[0].p = 0.9;
        assert!(g.validate().is_err());

        let mut g = tiny();
        g.lexicon.get_mut("NOUN").unwrap().clear();
        assert!(g.validate().is_err());

        let mut g = tiny();
        g.lexicon.get_mut("NOUN").unwrap().push("der".into());
        assert!(g.validate().is_err());

        let mut g = tiny();
        g.patterns[0].classes.push("VERB".into());
        assert!(g.validate().is_err());
    }

    #[test]
    fn bundled_grammar_shape() {
        let grammar = PcfgGrammar::bundled();
        assert_eq!(grammar.classes.len(), 4);
        let total_words: usize = grammar.lexicon.values().map(Vec::len).sum();
        assert_eq!(total_words, 60);
        for words in grammar.lexicon.values() {
            assert_eq!(words.len(), 15);
        }
    }

    #[test]
    fn bundled_grammar_walks_the_class_cycle() {
        let grammar = PcfgGrammar::bundled();
        let cycle = &grammar.classes;
        let succ: HashMap<&String, &String> = (0..cycle.len())
            .map(|i| (&cycle[i], &cycle[(i + 1) % cycle.len()]))
            .collect();
        let flat: Vec<TaggedToken> = generate_corpus(&grammar, 500, 42)
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        for pair in flat.windows(2) {
            let want = succ[pair[0].tag.as_ref().unwrap()];
            assert_eq!(pair[1].tag.as_ref().unwrap(), want);
        }
        // the cycle also closes across sentence boundaries: stream length
        // is a multiple of the cycle length by construction
        assert_eq!(flat.len() % cycle.len(), 0);
    }

    #[test]
    fn empirical_class_frequencies_match_analytic() {
        let grammar = PcfgGrammar::bundled();
        let expected = grammar.class_frequencies();
        let flat: Vec<TaggedToken> = generate_corpus(&grammar, 3000, 42)
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tok in &flat {
            *counts.entry(tok.tag.as_deref().unwrap()).or_default() += 1;
        }
        for (class, freq) in &expected {
            let got = counts[class.as_str()] as f64 / flat.len() as f64;
            assert!(
                (got - freq).abs() < 0.02,
                "class {class}: empirical {got} vs analytic {freq}"
            );
        }
    }

    #[test]
    fn mixed_length_pattern_frequencies() {
        let grammar = PcfgGrammar {
            classes: vec!["DET".into(), "ADJ".into(), "NOUN".into()],
            lexicon: [
                ("DET".to_string(), vec!["der".to_string(), "die".to_string()]),
                ("ADJ".to_string(), vec!["gute".to_string()]),
                ("NOUN".to_string(), vec!["hund".to_string(), "katze".to_string()]),
            ]
            .into_iter()
            .collect(),
            patterns: vec![
                Pattern {
                    classes: vec!["DET".into(), "NOUN".into()],
                    p: 0.7,
                },
                Pattern {
                    classes: vec!["DET".into(), "ADJ".into(), "NOUN".into()],
                    p: 0.3,
                },
            ],
        };
        // expected token shares: DET 1/2.3, ADJ 0.3/2.3, NOUN 1/2.3
        let expected = grammar.class_frequencies();
        assert!((expected["DET"] - 1.0 / 2.3).abs() < 1e-12);
        assert!((expected["ADJ"] - 0.3 / 2.3).abs() < 1e-12);

        let flat: Vec<TaggedToken> = generate_corpus(&grammar, 10_000, 5)
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        let adj = flat.iter().filter(|t| t.tag.as_deref() == Some("ADJ")).count();
        let got = adj as f64 / flat.len() as f64;
        assert!((got - expected["ADJ"]).abs() < 0.02);
    }
}
