//! Corpus ingestion: tokenized documents, the vocabulary, sparse counts and
//! the row-normalized smoothed TF-IDF representation fed to the encoder.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndmath::Tensor;

pub type TokenizedDoc = Vec<String>;

/// Sparse bag of words: word id -> count.
pub type WordCounts = BTreeMap<usize, u32>;

// ── Vocabulary ───────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::VocabularyTooSmall(tokens.len()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::DuplicateToken(t.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; line number is the word id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().map(str::to_owned).collect())
    }
}

/// Keeps tokens seen at least `min_count` times, at most `max_vocab` of
/// them, ordered by descending frequency then ascending token.
pub fn build_vocabulary(
    docs: &[TokenizedDoc],
    min_count: usize,
    max_vocab: usize,
) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::InvalidArgument("no documents".into()));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        for tok in doc {
            *freq.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(max_vocab);
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Vocabulary::new(kept.into_iter().map(|(t, _)| t.to_owned()).collect())
}

// ── Documents on disk ────────────────────────────────────────────────

/// Reads one document per line (whitespace tokens, lowercased) and an
/// optional aligned label file. Blank lines are dropped together with
/// their labels.
pub fn load_documents(
    path: impl AsRef<Path>,
    label_path: Option<&Path>,
) -> Result<(Vec<TokenizedDoc>, Option<Vec<usize>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();

    let labels = match label_path {
        None => None,
        Some(lp) => {
            let raw = fs::read_to_string(lp).map_err(|e| Error::io(lp, e))?;
            let mut labels = Vec::new();
            for (i, l) in raw.lines().enumerate() {
                let l = l.trim();
                if l.is_empty() {
                    continue;
                }
                let v = l.parse::<usize>().map_err(|_| Error::BadLabel {
                    line: i + 1,
                    value: l.to_owned(),
                })?;
                labels.push(v);
            }
            // a trailing newline at the end of the document file is not a document
            let doc_lines = lines.len();
            if labels.len() != doc_lines {
                return Err(Error::LabelMismatch {
                    docs: doc_lines,
                    labels: labels.len(),
                });
            }
            Some(labels)
        }
    };

    let mut docs = Vec::new();
    let mut kept_labels = labels.as_ref().map(|_| Vec::new());
    for (i, line) in lines.iter().enumerate() {
        let toks: TokenizedDoc = line.split_whitespace().map(str::to_lowercase).collect();
        if toks.is_empty() {
            continue;
        }
        docs.push(toks);
        if let (Some(out), Some(all)) = (kept_labels.as_mut(), labels.as_ref()) {
            out.push(all[i]);
        }
    }
    Ok((docs, kept_labels))
}

// ── Raw counts ───────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct RawCorpus {
    docs: Vec<WordCounts>,
    labels: Option<Vec<usize>>,
    vocab_size: usize,
    classes: usize,
}

impl RawCorpus {
    /// `classes` is the label count L; when `None` it is inferred as the
    /// largest label plus one.
    pub fn new(
        docs: Vec<WordCounts>,
        vocab_size: usize,
        labels: Option<Vec<usize>>,
        classes: Option<usize>,
    ) -> Result<Self> {
        for doc in &docs {
            if let Some((&id, _)) = doc.range(vocab_size..).next() {
                return Err(Error::WordOutOfRange {
                    id,
                    size: vocab_size,
                });
            }
        }
        let classes = match &labels {
            None => 0,
            Some(l) => {
                if l.len() != docs.len() {
                    return Err(Error::LabelMismatch {
                        docs: docs.len(),
                        labels: l.len(),
                    });
                }
                let inferred = l.iter().max().map_or(0, |m| m + 1);
                let classes = classes.unwrap_or(inferred);
                if let Some(&id) = l.iter().find(|&&y| y >= classes) {
                    return Err(Error::ClassOutOfRange { id, classes });
                }
                classes
            }
        };
        Ok(Self {
            docs,
            labels,
            vocab_size,
            classes,
        })
    }

    /// Counts in-vocabulary tokens; unknown tokens are dropped.
    pub fn from_tokens(
        docs: &[TokenizedDoc],
        vocab: &Vocabulary,
        labels: Option<Vec<usize>>,
        classes: Option<usize>,
    ) -> Result<Self> {
        let counts = docs
            .iter()
            .map(|doc| {
                let mut c = WordCounts::new();
                for id in doc.iter().filter_map(|t| vocab.id(t)) {
                    *c.entry(id).or_default() += 1;
                }
                c
            })
            .collect();
        Self::new(counts, vocab.len(), labels, classes)
    }

    pub fn docs(&self) -> &[WordCounts] {
        &self.docs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Keeps the listed documents (and their labels), in the given order.
    pub fn subset(&self, idx: &[usize]) -> RawCorpus {
        RawCorpus {
            docs: idx.iter().map(|&i| self.docs[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            vocab_size: self.vocab_size,
            classes: self.classes,
        }
    }

    /// Sparse text form: one document per line as `id:count` pairs.
    pub fn write_counts(&self, mut out: impl Write) -> std::io::Result<()> {
        for doc in &self.docs {
            let line: Vec<String> = doc.iter().map(|(id, c)| format!("{id}:{c}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_counts(path: impl AsRef<Path>) -> Result<Vec<WordCounts>> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut docs = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut doc = WordCounts::new();
            for pair in line.split_whitespace() {
                let parsed = pair
                    .split_once(':')
                    .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
                let Some((id, c)) = parsed else {
                    return Err(Error::InvalidArgument(format!(
                        "{}:{}: malformed count pair {pair:?}",
                        path.display(),
                        n + 1
                    )));
                };
                doc.insert(id, c);
            }
            docs.push(doc);
        }
        Ok(docs)
    }
}

// ── TF-IDF ───────────────────────────────────────────────────────────

/// Smoothed inverse document frequencies `log(N / (1 + df))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Idf {
    weights: Vec<f64>,
}

impl Idf {
    pub fn fit(corpus: &RawCorpus) -> Result<Self> {
        let n = corpus.len();
        if n < 2 {
            return Err(Error::TooFewDocuments { needed: 2, got: n });
        }
        let mut df = vec![0usize; corpus.vocab_size()];
        for doc in corpus.docs() {
            for (&id, &c) in doc {
                if c != 0 {
                    df[id] += 1;
                }
            }
        }
        let weights = df
            .iter()
            .map(|&d| (n as f64 / (1.0 + d as f64)).ln())
            .collect();
        Ok(Self { weights })
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Normalized TF-IDF rows for `corpus` under these weights. Negative
    /// weights are clamped to zero; rows left with no weight are dropped.
    pub fn transform(&self, corpus: &RawCorpus) -> Result<TfidfMatrix> {
        let v = self.weights.len();
        if corpus.vocab_size() != v {
            return Err(Error::ShapeMismatch {
                op: "tfidf",
                left: vec![corpus.vocab_size()],
                right: vec![v],
            });
        }
        let mut data = Vec::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (i, doc) in corpus.docs().iter().enumerate() {
            let total: u64 = doc.values().map(|&c| c as u64).sum();
            let mut row = vec![0.0; v];
            let mut sum = 0.0;
            if total > 0 {
                for (&id, &c) in doc {
                    let w = (c as f64 / total as f64 * self.weights[id]).max(0.0);
                    row[id] = w;
                    sum += w;
                }
            }
            if sum > 0.0 {
                row.iter_mut().for_each(|x| *x /= sum);
                data.extend(row);
                kept.push(i);
            } else {
                dropped.push(i);
            }
        }
        if kept.is_empty() {
            return Err(Error::AllRowsDropped);
        }
        Ok(TfidfMatrix {
            rows: Tensor::matrix(kept.len(), v, data)?,
            kept,
            dropped,
        })
    }
}

/// Row-stochastic TF-IDF matrix plus the bookkeeping of which source
/// documents survived.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfMatrix {
    pub rows: Tensor,
    /// Source document index of each row.
    pub kept: Vec<usize>,
    /// Source documents whose clamped weight summed to zero.
    pub dropped: Vec<usize>,
}

impl TfidfMatrix {
    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// Labels aligned with the retained rows.
    pub fn labels_from(&self, corpus: &RawCorpus) -> Option<Vec<usize>> {
        corpus
            .labels()
            .map(|l| self.kept.iter().map(|&i| l[i]).collect())
    }
}

pub fn tfidf(corpus: &RawCorpus) -> Result<TfidfMatrix> {
    Idf::fit(corpus)?.transform(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(lines: &[&str]) -> Vec<TokenizedDoc> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect()
    }

    fn counts(pairs: &[&[(usize, u32)]]) -> Vec<WordCounts> {
        pairs.iter().map(|p| p.iter().copied().collect()).collect()
    }

    #[test]
    fn vocabulary_ordering_and_filters() {
        let docs = toks(&["a a b", "b c"]);
        let v = build_vocabulary(&docs, 1, 10).unwrap();
        assert_eq!(v.tokens(), &["a", "b", "c"]);
        let v = build_vocabulary(&docs, 2, 10).unwrap();
        assert_eq!(v.tokens(), &["a", "b"]);
        let v = build_vocabulary(&toks(&["c c c a a b"]), 1, 2).unwrap();
        assert_eq!(v.tokens(), &["c", "a"]);
        assert!(matches!(
            build_vocabulary(&toks(&["x"]), 2, 10),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
        assert!(Vocabulary::new(vec!["a".into()]).is_err());
    }

    #[test]
    fn tfidf_hand_example() {
        let raw = RawCorpus::new(
            counts(&[&[(0, 2), (1, 1)], &[(1, 1), (2, 1)], &[(2, 1), (3, 1)], &[(3, 2), (0, 1)]]),
            4,
            None,
            None,
        )
        .unwrap();
        let m = tfidf(&raw).unwrap();
        assert_eq!(m.len(), 4);
        let r0 = m.rows.row(0);
        assert!((r0[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r0[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(&r0[2..], &[0.0, 0.0]);
    }

    #[test]
    fn ubiquitous_words_drop_the_row() {
        // word 0 is in every document, so its smoothed idf is negative
        let raw = RawCorpus::new(
            counts(&[&[(0, 3)], &[(0, 1), (1, 1)], &[(0, 1), (2, 1)]]),
            3,
            None,
            None,
        )
        .unwrap();
        let m = tfidf(&raw).unwrap();
        assert_eq!(m.dropped, vec![0]);
        assert_eq!(m.kept, vec![1, 2]);
        assert_eq!(m.rows.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn single_rare_word_row_is_one_hot() {
        let raw = RawCorpus::new(
            counts(&[&[(0, 3)], &[(1, 1)], &[(1, 1), (2, 2)]]),
            3,
            None,
            None,
        )
        .unwrap();
        let m = tfidf(&raw).unwrap();
        assert_eq!(m.rows.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn tfidf_errors() {
        let one = RawCorpus::new(counts(&[&[(0, 1)]]), 2, None, None).unwrap();
        assert!(matches!(tfidf(&one), Err(Error::TooFewDocuments { .. })));
        let all = RawCorpus::new(counts(&[&[(0, 1)], &[(0, 1)]]), 2, None, None).unwrap();
        assert!(matches!(tfidf(&all), Err(Error::AllRowsDropped)));
    }

    #[test]
    fn raw_corpus_validation() {
        assert!(RawCorpus::new(counts(&[&[(5, 1)]]), 3, None, None).is_err());
        assert!(RawCorpus::new(counts(&[&[(0, 1)]]), 3, Some(vec![0, 1]), None).is_err());
        assert!(RawCorpus::new(counts(&[&[(0, 1)]]), 3, Some(vec![2]), Some(2)).is_err());
        let c = RawCorpus::new(counts(&[&[(0, 1)], &[]]), 3, Some(vec![0, 3]), None).unwrap();
        assert_eq!(c.classes(), 4);
    }
}
