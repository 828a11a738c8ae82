//! Token-embedding view: vocabulary construction and the two embedding
//! providers (a trainable lookup table and file-backed precomputed
//! matrices).

mod cssm;

pub use cssm::{load_css_file, read_cssm, write_cssm};

use crate::error::{Error, Result};
use crate::frontend::Token;
use crate::nn::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Token-to-id mapping with dense ids; PAD and UNK are always present.
/// Whole identifiers are single entries, never subword-split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    /// id -> token, the canonical (serialized) order.
    id_to_token: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id_of(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Map a token sequence to ids; out-of-vocabulary tokens become UNK.
    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_of(&t.text)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = VocabFile {
            tokens: self.id_to_token[2..].to_vec(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::format(format!("vocabulary serialization: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let file: VocabFile = serde_json::from_str(&json)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        let mut vocab = Vocabulary::empty();
        for token in file.tokens {
            vocab.insert(token)?;
        }
        Ok(vocab)
    }

    fn empty() -> Self {
        let mut v = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        v.id_to_token.push("<pad>".to_string());
        v.id_to_token.push("<unk>".to_string());
        v.token_to_id.insert("<pad>".to_string(), PAD);
        v.token_to_id.insert("<unk>".to_string(), UNK);
        v
    }

    fn insert(&mut self, token: String) -> Result<()> {
        if self.token_to_id.contains_key(&token) {
            return Err(Error::format(format!("duplicate vocabulary entry '{token}'")));
        }
        let id = self.id_to_token.len();
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
        Ok(())
    }
}

/// Build a vocabulary from a token corpus. Tokens seen at least
/// `min_count` times get ids in first-occurrence order; the rest map to
/// UNK at encode time.
pub fn build_vocabulary(corpus: &[Vec<Token>], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::config("vocabulary corpus is empty"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tokens in corpus {
        for t in tokens {
            *counts.entry(t.text.as_str()).or_insert(0) += 1;
        }
    }
    let mut vocab = Vocabulary::empty();
    for tokens in corpus {
        for t in tokens {
            if counts[t.text.as_str()] >= min_count && !vocab.contains(&t.text) {
                vocab.insert(t.text.clone())?;
            }
        }
    }
    Ok(vocab)
}

/// T_max x d matrix representation of one snippet's token sequence. Rows
/// past `valid_len` are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CssMatrix {
    t_max: usize,
    d: usize,
    data: Vec<f64>,
    pub valid_len: usize,
}

impl CssMatrix {
    pub fn zeros(t_max: usize, d: usize) -> Self {
        CssMatrix {
            t_max,
            d,
            data: vec![0.0; t_max * d],
            valid_len: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.t_max
    }

    pub fn cols(&self) -> usize {
        self.d
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.d..(r + 1) * self.d]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.d + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[self.t_max, self.d], self.data.clone())
    }
}

/// Fresh embedding table with the standard seeded Gaussian init.
pub fn seeded_table(vocab_size: usize, d_embed: usize, seed: u64) -> Tensor {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(&[vocab_size, d_embed], 0.02, &mut rng)
}

/// Sinusoidal position value for row `t`, column `i` of a width-`d` code.
pub fn sinusoid(t: usize, i: usize, d: usize) -> f64 {
    let angle = t as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
    if i % 2 == 0 {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// Pure lookup: row t of the output is the table row of token t's id.
/// Sequences longer than `t_max` are truncated, shorter ones zero-padded.
pub fn encode_learned(
    tokens: &[Token],
    vocab: &Vocabulary,
    table: &Tensor,
    t_max: usize,
    positions: bool,
) -> CssMatrix {
    assert_eq!(table.rows(), vocab.size(), "table rows must match vocabulary size");
    let d = table.cols();
    let mut m = CssMatrix::zeros(t_max, d);
    let ids = vocab.encode(tokens);
    let valid = ids.len().min(t_max);
    for (t, &id) in ids.iter().take(valid).enumerate() {
        let row = table.row(id);
        for c in 0..d {
            let pos = if positions { sinusoid(t, c, d) } else { 0.0 };
            m.set(t, c, row[c] + pos);
        }
    }
    m.valid_len = valid;
    m
}

/// One capability: turn a snippet into its CSS matrix. Deterministic for
/// fixed inputs.
pub trait EmbeddingProvider {
    fn embed(&self, snippet_id: &str, tokens: &[Token]) -> Result<CssMatrix>;
}

/// Trainable lookup-table provider.
pub struct LearnedProvider {
    pub vocab: Vocabulary,
    pub table: Tensor,
    pub t_max: usize,
    pub positions: bool,
}

impl EmbeddingProvider for LearnedProvider {
    fn embed(&self, _snippet_id: &str, tokens: &[Token]) -> Result<CssMatrix> {
        Ok(encode_learned(
            tokens,
            &self.vocab,
            &self.table,
            self.t_max,
            self.positions,
        ))
    }
}

/// Loads matrices precomputed offline, keyed by snippet id.
pub struct FileBackedProvider {
    pub paths: std::collections::BTreeMap<String, PathBuf>,
    pub t_max: usize,
    pub d: usize,
}

impl EmbeddingProvider for FileBackedProvider {
    fn embed(&self, snippet_id: &str, _tokens: &[Token]) -> Result<CssMatrix> {
        let path = self.paths.get(snippet_id).ok_or_else(|| {
            Error::format(format!("no css file registered for snippet '{snippet_id}'"))
        })?;
        load_css_file(path, self.t_max, self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::tokenize;

    fn toks(src: &str) -> Vec<Token> {
        tokenize(src).unwrap()
    }

    #[test]
    fn underscored_identifier_is_a_single_entry() {
        let vocab = build_vocabulary(&[toks("int LF_NORMAL = 1;")], 1).unwrap();
        assert!(vocab.contains("LF_NORMAL"));
        assert!(!vocab.contains("LF"));
        assert!(!vocab.contains("NORMAL"));
    }

    #[test]
    fn smallest_vocabulary_is_pad_unk_plus_one() {
        let vocab = build_vocabulary(&[toks("x x x")], 1).unwrap();
        assert_eq!(vocab.size(), 3);
        assert_eq!(vocab.id_of("x"), 2);
        assert_eq!(vocab.id_of("y"), UNK);
    }

    /// Frequency filter cross-checked against an independent count.
    #[test]
    fn min_count_filter_matches_hand_counted_frequencies() {
        let corpus: Vec<Vec<Token>> = vec![
            toks("a b a"),
            toks("b c"),
            toks("a d"),
        ];
        // Counts: a=3, b=2, c=1, d=1. min_count=2 keeps {a, b}.
        let vocab = build_vocabulary(&corpus, 2).unwrap();
        assert_eq!(vocab.size(), 4);
        assert!(vocab.contains("a") && vocab.contains("b"));
        assert!(!vocab.contains("c") && !vocab.contains("d"));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(build_vocabulary(&[], 1).is_err());
    }

    #[test]
    fn encode_learned_is_exact_row_lookup() {
        let vocab = build_vocabulary(&[toks("a b c")], 1).unwrap();
        let table = Tensor::from_vec(
            &[5, 2],
            vec![0.0, 0.0, 9.0, 9.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        );
        let m = encode_learned(&toks("a b c"), &vocab, &table, 4, false);
        assert_eq!(m.valid_len, 3);
        assert_eq!(m.row(0), &[1.0, 2.0]);
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.row(2), &[5.0, 6.0]);
        assert_eq!(m.row(3), &[0.0, 0.0]);
    }

    #[test]
    fn long_sequences_truncate_at_t_max() {
        let vocab = build_vocabulary(&[toks("x")], 1).unwrap();
        let table = Tensor::zeros(&[3, 2]);
        let long: Vec<Token> = (0..600).flat_map(|_| toks("x")).collect();
        let m = encode_learned(&long, &vocab, &table, 512, false);
        assert_eq!(m.valid_len, 512);
        assert_eq!(m.rows(), 512);
    }

    #[test]
    fn empty_token_list_gives_zero_matrix() {
        let vocab = build_vocabulary(&[toks("x")], 1).unwrap();
        let table = Tensor::zeros(&[3, 2]);
        let m = encode_learned(&[], &vocab, &table, 4, false);
        assert_eq!(m.valid_len, 0);
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oov_maps_to_unk_row() {
        let vocab = build_vocabulary(&[toks("a")], 1).unwrap();
        let mut table = Tensor::zeros(&[3, 2]);
        table.set(UNK, 0, 7.0);
        let m = encode_learned(&toks("zzz"), &vocab, &table, 4, false);
        assert_eq!(m.row(0), &[7.0, 0.0]);
    }

    #[test]
    fn vocabulary_roundtrips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let vocab = build_vocabulary(&[toks("int LF_NORMAL = readLine();")], 1).unwrap();
        vocab.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(vocab, back);
    }
}
