use std::collections::HashMap;

use crate::error::{Error, Result};

/// Sparse feature row: `(column, value)` pairs sorted by column.
pub type SparseRow = Vec<(usize, f64)>;

/// Lowercased alphanumeric runs of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '_')
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// Vocabulary and smoothed inverse document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
    fitted_on: usize,
}

impl TfidfModel {
    /// `idf(t) = ln((1 + D) / (1 + df(t))) + 1`; columns are assigned in
    /// lexicographic token order.
    pub fn fit<S: AsRef<str>>(docs: &[S]) -> Result<Self> {
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let mut toks = tokenize(doc.as_ref());
            toks.sort_unstable();
            toks.dedup();
            for t in toks {
                *df.entry(t).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::invalid("cannot fit TF-IDF: every document is empty"));
        }
        let mut terms: Vec<(String, usize)> = df.into_iter().collect();
        terms.sort_unstable();
        let d = docs.len() as f64;
        let idf = terms
            .iter()
            .map(|(_, f)| ((1.0 + d) / (1.0 + *f as f64)).ln() + 1.0)
            .collect();
        let vocabulary = terms
            .into_iter()
            .enumerate()
            .map(|(i, (t, _))| (t, i))
            .collect();
        Ok(Self {
            vocabulary,
            idf,
            fitted_on: docs.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).copied()
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// Raw counts times idf, L2-normalized. Unknown tokens are dropped.
    pub fn transform(&self, text: &str) -> SparseRow {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for tok in tokenize(text) {
            if let Some(&col) = self.vocabulary.get(&tok) {
                *counts.entry(col).or_default() += 1.0;
            }
        }
        let mut row: SparseRow = counts
            .into_iter()
            .map(|(c, tf)| (c, tf * self.idf[c]))
            .collect();
        row.sort_unstable_by_key(|&(c, _)| c);
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut row {
                *v /= norm;
            }
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_matches_word_pattern() {
        assert_eq!(tokenize("A bb, Cc-dd e9 x"), vec!["bb", "cc", "dd", "e9"]);
    }

    #[test]
    fn single_token_document() {
        let m = TfidfModel::fit(&["hello"]).unwrap();
        let row = m.transform("hello");
        assert_eq!(row.len(), 1);
        assert!((row[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shared_token_has_unit_idf() {
        let m = TfidfModel::fit(&["aa bb", "aa cc", "aa"]).unwrap();
        assert_eq!(m.idf()[m.column("aa").unwrap()], 1.0);
    }

    #[test]
    fn three_document_idf_by_hand() {
        // D = 3; df(aa) = 3, df(bb) = 2, df(cc) = 1
        let m = TfidfModel::fit(&["aa bb", "aa bb cc", "aa"]).unwrap();
        let idf = |t: &str| m.idf()[m.column(t).unwrap()];
        assert!((idf("aa") - 1.0).abs() < 1e-15);
        assert!((idf("bb") - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-15);
        assert!((idf("cc") - (2.0f64.ln() + 1.0)).abs() < 1e-15);
        assert_eq!(m.fitted_on(), 3);

        // doc 2 = [1, idf_bb, idf_cc] / norm
        let row = m.transform("aa bb cc");
        let raw = [1.0, (4.0f64 / 3.0).ln() + 1.0, 2.0f64.ln() + 1.0];
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for ((_, v), r) in row.iter().zip(raw) {
            assert!((v - r / norm).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_tokens_count() {
        let m = TfidfModel::fit(&["aa bb", "bb"]).unwrap();
        let row = m.transform("bb bb aa");
        let idf_a = (3.0f64 / 2.0).ln() + 1.0;
        let raw = [idf_a, 2.0];
        let norm = (raw[0] * raw[0] + 4.0f64).sqrt();
        assert!((row[0].1 - raw[0] / norm).abs() < 1e-15);
        assert!((row[1].1 - 2.0 / norm).abs() < 1e-15);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(TfidfModel::fit(&["", " x "]).is_err());
    }
}
