//! Synthetic planted-topic corpora.
//!
//! Generates labeled short texts from disjoint topic word groups. Every
//! document draws a fixed share of its words from one dominant group and
//! the rest from the others, and its label names the dominant group, so
//! a working model must recover both the word groups (as topics) and the
//! label mapping (as a classifier).

use rand::seq::SliceRandom;
use rand::Rng;

/// Shape of the generated corpus.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    pub docs: usize,
    /// Minimum document length in words, inclusive.
    pub min_len: usize,
    /// Maximum document length in words, inclusive.
    pub max_len: usize,
    /// Fraction of each document drawn from its dominant group (rounded
    /// to a whole word count per document).
    pub dominant_share: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            topics: 4,
            words_per_topic: 15,
            docs: 250,
            min_len: 8,
            max_len: 12,
            dominant_share: 0.9,
            seed: 7,
        }
    }
}

/// The canonical name of one planted word.
pub fn topic_word(topic: usize, index: usize) -> String {
    format!("t{topic}w{index}")
}

/// The planted word groups, one list per topic.
pub fn planted_words(spec: &SynthSpec) -> Vec<Vec<String>> {
    (0..spec.topics)
        .map(|t| (0..spec.words_per_topic).map(|i| topic_word(t, i)).collect())
        .collect()
}

/// Generate the corpus as `label<TAB>text` lines ready for preparation.
pub fn planted_topic_lines(spec: &SynthSpec) -> String {
    let words = planted_words(spec);
    let mut rng = crate::rng::named_stream(spec.seed, "synth");
    let mut out = String::new();
    for _ in 0..spec.docs {
        let dominant = rng.gen_range(0..spec.topics);
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let n_dominant = if spec.topics == 1 {
            len
        } else {
            ((spec.dominant_share * len as f64).round() as usize).min(len)
        };
        let mut tokens: Vec<String> = Vec::with_capacity(len);
        for _ in 0..n_dominant {
            tokens.push(words[dominant][rng.gen_range(0..spec.words_per_topic)].clone());
        }
        for _ in n_dominant..len {
            let mut other = rng.gen_range(0..spec.topics - 1);
            if other >= dominant {
                other += 1;
            }
            tokens.push(words[other][rng.gen_range(0..spec.words_per_topic)].clone());
        }
        tokens.shuffle(&mut rng);
        out.push_str(&format!("topic{dominant}\t{}\n", tokens.join(" ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn generation_is_reproducible() {
        let spec = SynthSpec::default();
        assert_eq!(planted_topic_lines(&spec), planted_topic_lines(&spec));
        let other = SynthSpec { seed: 8, ..SynthSpec::default() };
        assert_ne!(planted_topic_lines(&spec), planted_topic_lines(&other));
    }

    #[test]
    fn documents_respect_count_and_length_bounds() {
        let spec = SynthSpec::default();
        let text = planted_topic_lines(&spec);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), spec.docs);
        for line in &lines {
            let (_, body) = line.split_once('\t').unwrap();
            let len = body.split_whitespace().count();
            assert!((spec.min_len..=spec.max_len).contains(&len), "length {len}");
        }
    }

    #[test]
    fn each_label_names_its_dominant_word_group() {
        let spec = SynthSpec::default();
        for line in planted_topic_lines(&spec).lines() {
            let (label, body) = line.split_once('\t').unwrap();
            let len = body.split_whitespace().count();
            let mut per_topic = vec![0usize; spec.topics];
            for token in body.split_whitespace() {
                let topic: usize =
                    token[1..token.find('w').unwrap()].parse().unwrap();
                per_topic[topic] += 1;
            }
            let dominant: usize = label.strip_prefix("topic").unwrap().parse().unwrap();
            let expected = (spec.dominant_share * len as f64).round() as usize;
            assert_eq!(per_topic[dominant], expected.min(len), "line {line}");
        }
    }

    #[test]
    fn all_words_come_from_the_planted_groups() {
        let spec = SynthSpec::default();
        let allowed: HashSet<String> =
            planted_words(&spec).into_iter().flatten().collect();
        let mut seen: HashSet<String> = HashSet::new();
        for line in planted_topic_lines(&spec).lines() {
            let (_, body) = line.split_once('\t').unwrap();
            for token in body.split_whitespace() {
                assert!(allowed.contains(token), "unexpected word {token}");
                seen.insert(token.to_owned());
            }
        }
        assert_eq!(seen.len(), allowed.len(), "every planted word should appear");
    }

    #[test]
    fn a_single_topic_spec_uses_only_its_own_words() {
        let spec = SynthSpec { topics: 1, docs: 10, ..SynthSpec::default() };
        for line in planted_topic_lines(&spec).lines() {
            let (label, body) = line.split_once('\t').unwrap();
            assert_eq!(label, "topic0");
            for token in body.split_whitespace() {
                assert!(token.starts_with("t0w"));
            }
        }
    }
}
