//! Word-index vocabularies for the two document views.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::CorpusError;

/// Index of the padding symbol in the sequence vocabulary.
pub const PAD: usize = 0;
/// Index of the unknown-word symbol in the sequence vocabulary.
pub const UNK: usize = 1;
/// Spelled-out padding symbol (angle brackets cannot collide with tokens).
pub const PAD_TOKEN: &str = "<pad>";
/// Spelled-out unknown-word symbol.
pub const UNK_TOKEN: &str = "<unk>";

/// A bidirectional word-index map with per-word document frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    word_to_id: HashMap<String, usize>,
    id_to_word: Vec<String>,
    doc_freq: Vec<usize>,
}

impl Vocabulary {
    /// Build from (word, doc_freq) rows already in final index order.
    pub fn from_ordered(rows: Vec<(String, usize)>) -> Self {
        let mut word_to_id = HashMap::with_capacity(rows.len());
        let mut id_to_word = Vec::with_capacity(rows.len());
        let mut doc_freq = Vec::with_capacity(rows.len());
        for (id, (word, freq)) in rows.into_iter().enumerate() {
            word_to_id.insert(word.clone(), id);
            id_to_word.push(word);
            doc_freq.push(freq);
        }
        Vocabulary { word_to_id, id_to_word, doc_freq }
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.word_to_id.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.id_to_word[id]
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq[id]
    }

    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_word.is_empty()
    }

    /// Words in index order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.id_to_word.iter().map(String::as_str)
    }
}

/// Document frequency of every distinct word across the given documents.
fn document_frequencies(docs: &[Vec<String>]) -> BTreeMap<&str, usize> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let distinct: HashSet<&str> = doc.iter().map(String::as_str).collect();
        for word in distinct {
            *freq.entry(word).or_insert(0) += 1;
        }
    }
    freq
}

/// Sort retained words by descending document frequency, ties lexicographic.
fn ordered_rows(freq: BTreeMap<&str, usize>, keep: impl Fn(&str, usize) -> bool) -> Vec<(String, usize)> {
    let mut rows: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|(w, f)| keep(w, *f))
        .map(|(w, f)| (w.to_owned(), f))
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

/// The bag-of-words vocabulary: training words only, stop words removed,
/// document frequency at least `min_count`.
pub fn build_bow_vocabulary(
    train_docs: &[Vec<String>],
    min_count: usize,
    stopwords: &HashSet<String>,
) -> Result<Vocabulary, CorpusError> {
    let rows = ordered_rows(document_frequencies(train_docs), |w, f| {
        f >= min_count && !stopwords.contains(w)
    });
    if rows.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    Ok(Vocabulary::from_ordered(rows))
}

/// The sequence vocabulary: stop words retained, `PAD` and `UNK` reserved
/// at the front, the same `min_count` rule with unknown-word fallback.
pub fn build_seq_vocabulary(train_docs: &[Vec<String>], min_count: usize) -> Vocabulary {
    let mut rows = vec![(PAD_TOKEN.to_owned(), 0), (UNK_TOKEN.to_owned(), 0)];
    rows.extend(ordered_rows(document_frequencies(train_docs), |_, f| f >= min_count));
    Vocabulary::from_ordered(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter().map(|d| d.iter().map(|w| w.to_string()).collect()).collect()
    }

    #[test]
    fn retains_words_meeting_document_frequency() {
        let d = docs(&[&["a", "b"], &["a", "b"], &["a", "c"]]);
        let v = build_bow_vocabulary(&d, 2, &HashSet::new()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.word(0), "a");
        assert_eq!(v.word(1), "b");
        assert!(v.id("c").is_none());
    }

    #[test]
    fn stop_words_never_enter_the_bow_vocabulary() {
        let d = docs(&[&["a", "b"], &["a", "b"], &["a", "c"]]);
        let stop: HashSet<String> = ["a".to_string()].into();
        let v = build_bow_vocabulary(&d, 2, &stop).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.word(0), "b");
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let d = docs(&[&["a"], &["b"]]);
        assert!(matches!(
            build_bow_vocabulary(&d, 2, &HashSet::new()),
            Err(CorpusError::EmptyVocabulary)
        ));
    }

    #[test]
    fn repeated_tokens_in_one_document_count_once() {
        let d = docs(&[&["a", "a", "a"], &["a"]]);
        let v = build_bow_vocabulary(&d, 1, &HashSet::new()).unwrap();
        assert_eq!(v.doc_freq(v.id("a").unwrap()), 2);
    }

    #[test]
    fn ordering_is_descending_frequency_then_lexicographic() {
        let d = docs(&[&["zebra", "apple"], &["zebra", "apple"], &["mango"]]);
        let v = build_bow_vocabulary(&d, 1, &HashSet::new()).unwrap();
        // apple and zebra tie at 2, apple wins lexicographically.
        assert_eq!(v.word(0), "apple");
        assert_eq!(v.word(1), "zebra");
        assert_eq!(v.word(2), "mango");
    }

    #[test]
    fn vocabulary_matches_a_brute_force_frequency_counter() {
        use rand::Rng;
        let mut rng = crate::rng::named_stream(11, "vocab-oracle");
        let words: Vec<String> = (0..50).map(|i| format!("w{:02}", i)).collect();
        let corpus: Vec<Vec<String>> = (0..1000)
            .map(|_| {
                (0..rng.gen_range(1..8))
                    .map(|_| words[rng.gen_range(0..words.len())].clone())
                    .collect()
            })
            .collect();
        let v = build_bow_vocabulary(&corpus, 3, &HashSet::new()).unwrap();

        let mut expected = 0;
        for w in &words {
            let df = corpus.iter().filter(|d| d.contains(w)).count();
            if df >= 3 {
                expected += 1;
                assert_eq!(v.doc_freq(v.id(w).unwrap()), df, "doc freq for {}", w);
            }
        }
        assert_eq!(v.len(), expected);
    }

    #[test]
    fn sequence_vocabulary_reserves_pad_and_unk() {
        let d = docs(&[&["the", "cat"], &["the", "dog"]]);
        let v = build_seq_vocabulary(&d, 2);
        assert_eq!(v.word(PAD), PAD_TOKEN);
        assert_eq!(v.word(UNK), UNK_TOKEN);
        assert_eq!(v.id("the"), Some(2));
        // cat and dog fall below min_count and will map to UNK.
        assert!(v.id("cat").is_none());
    }

    #[test]
    fn inverse_maps_agree() {
        let d = docs(&[&["x", "y", "z"], &["x", "y"], &["x"]]);
        let v = build_bow_vocabulary(&d, 1, &HashSet::new()).unwrap();
        for id in 0..v.len() {
            assert_eq!(v.id(v.word(id)), Some(id));
        }
    }
}
