//! Sequence-tagging task layer: column-file ingestion, hashed context
//! features, synthetic data, and evaluation metrics.
//!
//! The text format is the classic column layout: one token per line,
//! whitespace-separated columns, the last column the gold tag, blank lines
//! separating sentences. Columns between the first and last are per-token
//! attributes; all non-tag columns feed the feature map.
//!
//! [`featurize`] builds the linear scoring scheme: every (column, window
//! offset, value, tag) conjunction is hashed onto `2^hash_bits - 1` unary
//! dimensions (hashing-trick semantics, collisions accepted), and a dense
//! tag-bigram block of `(T+2)^2` entries — two extra indices for the
//! boundary symbols — is appended after the hashed block. Boundary bigrams
//! are folded into the first and last node unaries, so chains expose only
//! real-tag transitions to inference.
//!
//! [`synth_chain_dataset`] generates desk-scale corpora by sampling a
//! ground-truth linear model and drawing tag sequences from its Gibbs
//! distribution by forward filtering / backward sampling, then emitting
//! tokens correlated with tags. [`evaluate`] scores predictions with
//! Hamming accuracy and token-level F1 (per class and micro-averaged);
//! span-level chunk scoring is deliberately out of scope.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Labeling, PotentialTable};
use crate::loss::{ModelKind, ScoreModel};
use crate::smoothing::log_sum_exp;

/// One tagged sentence: per-token non-tag column values plus gold indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    /// `columns[v]` holds token v's column values with the tag removed;
    /// `columns[v][0]` is the surface token.
    pub columns: Vec<Vec<String>>,
    /// Gold tag indices into the owning dataset's alphabet. May contain the
    /// reserved out-of-alphabet index when read against a fixed alphabet.
    pub tags: Vec<usize>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// A tagging corpus with a stable label alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TaggedDataset {
    pub sentences: Vec<Sentence>,
    /// Tag strings in first-seen order.
    pub label_alphabet: Vec<String>,
}

impl TaggedDataset {
    /// Index that out-of-alphabet tags map to when reading against a fixed
    /// alphabet; never predicted, always counted as an error.
    pub fn reserved_label(&self) -> usize {
        self.label_alphabet.len()
    }
}

fn parse_rows<R: BufRead>(
    reader: R,
    mut on_tag: impl FnMut(&str) -> usize,
) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut columns: Vec<Vec<String>> = Vec::new();
    let mut tags: Vec<usize> = Vec::new();
    let mut expected_cols: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidInput(format!("read failed: {e}")))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            if !columns.is_empty() {
                sentences.push(Sentence {
                    columns: std::mem::take(&mut columns),
                    tags: std::mem::take(&mut tags),
                });
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "line {lineno}: need at least a token and a tag column, found {}",
                fields.len()
            )));
        }
        match expected_cols {
            None => expected_cols = Some(fields.len()),
            Some(k) if k != fields.len() => {
                return Err(Error::InvalidInput(format!(
                    "line {lineno}: expected {k} columns, found {}",
                    fields.len()
                )));
            }
            Some(_) => {}
        }
        let (tag, rest) = fields.split_last().unwrap();
        columns.push(rest.iter().map(|s| s.to_string()).collect());
        tags.push(on_tag(tag));
    }
    if !columns.is_empty() {
        sentences.push(Sentence { columns, tags });
    }
    Ok(sentences)
}

/// Reads a column file, building the label alphabet in first-seen order.
///
/// Blank-line runs act as single sentence separators; an empty file yields
/// an empty dataset. Ragged rows fail with the offending line number.
pub fn read_conll<R: BufRead>(reader: R) -> Result<TaggedDataset> {
    let mut alphabet: Vec<String> = Vec::new();
    let sentences = parse_rows(reader, |tag| {
        match alphabet.iter().position(|t| t == tag) {
            Some(i) => i,
            None => {
                alphabet.push(tag.to_string());
                alphabet.len() - 1
            }
        }
    })?;
    Ok(TaggedDataset { sentences, label_alphabet: alphabet })
}

/// Reads a column file against a fixed alphabet (evaluation-time use).
///
/// Tags not in the alphabet map to the reserved index `alphabet.len()`;
/// the second return value counts them so callers can warn.
pub fn read_conll_using<R: BufRead>(
    reader: R,
    alphabet: &[String],
) -> Result<(TaggedDataset, usize)> {
    let mut unknown = 0usize;
    let sentences = parse_rows(reader, |tag| {
        match alphabet.iter().position(|t| t == tag) {
            Some(i) => i,
            None => {
                unknown += 1;
                alphabet.len()
            }
        }
    })?;
    Ok((
        TaggedDataset { sentences, label_alphabet: alphabet.to_vec() },
        unknown,
    ))
}

/// Writes a dataset back to the column format (debug/round-trip writer).
pub fn write_conll<W: Write>(dataset: &TaggedDataset, mut out: W) -> Result<()> {
    let reserved = dataset.reserved_label();
    for (s, sentence) in dataset.sentences.iter().enumerate() {
        if s > 0 {
            writeln!(out).map_err(|e| Error::InvalidInput(format!("write failed: {e}")))?;
        }
        for (cols, &tag) in sentence.columns.iter().zip(&sentence.tags) {
            let mut line = cols.join(" ");
            let tag_str = if tag < reserved { &dataset.label_alphabet[tag] } else { "<unk>" };
            let _ = write!(line, " {tag_str}");
            writeln!(out, "{line}")
                .map_err(|e| Error::InvalidInput(format!("write failed: {e}")))?;
        }
    }
    Ok(())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(FNV_OFFSET)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    fn write_u32(&mut self, v: u32) {
        self.write(&v.to_le_bytes());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// The linear feature scheme of a tagging task: hashed context unaries plus
/// a dense tag-bigram block. Versioned by construction — identical
/// parameters always map identical inputs to identical indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggingFeatures {
    pub alphabet: Vec<String>,
    /// Context window half-width (offsets `-window ..= window`).
    pub window: usize,
    pub hash_bits: u32,
    pub hash_seed: u64,
    dim: usize,
}

/// Builds the feature scheme for a dataset.
///
/// `hash_bits` selects `2^hash_bits - 1` hashed unary dimensions and must
/// lie in [4, 30]; the dense bigram block `(T+2)^2` (boundary symbols
/// included) is appended after the hashed block.
pub fn featurize(
    dataset: &TaggedDataset,
    window: usize,
    hash_bits: u32,
    hash_seed: u64,
) -> Result<TaggingFeatures> {
    let t = dataset.label_alphabet.len();
    for (s, sentence) in dataset.sentences.iter().enumerate() {
        if sentence.is_empty() {
            return Err(Error::InvalidInput(format!("sentence {s} is empty")));
        }
        if let Some(&bad) = sentence.tags.iter().find(|&&tag| tag >= t) {
            return Err(Error::InvalidInput(format!(
                "sentence {s} has tag index {bad} outside the alphabet (size {t})"
            )));
        }
    }
    TaggingFeatures::from_parts(dataset.label_alphabet.clone(), window, hash_bits, hash_seed)
}

impl TaggingFeatures {
    /// Reassembles a feature scheme from its stored parts (e.g. when
    /// deserializing a model file). The parts fully determine the scheme:
    /// identical parts index identical inputs identically.
    pub fn from_parts(
        alphabet: Vec<String>,
        window: usize,
        hash_bits: u32,
        hash_seed: u64,
    ) -> Result<Self> {
        if !(4..=30).contains(&hash_bits) {
            return Err(Error::InvalidConfig(format!(
                "hash_bits must lie in [4, 30], got {hash_bits}"
            )));
        }
        if alphabet.is_empty() {
            return Err(Error::InvalidInput("label alphabet is empty".into()));
        }
        for (i, tag) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(tag) {
                return Err(Error::InvalidInput(format!(
                    "label alphabet repeats the tag {tag:?}"
                )));
            }
        }
        let t = alphabet.len();
        let hashed = (1usize << hash_bits) - 1;
        let dim = hashed + (t + 2) * (t + 2);
        Ok(TaggingFeatures { alphabet, window, hash_bits, hash_seed, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_tags(&self) -> usize {
        self.alphabet.len()
    }

    fn hashed_dims(&self) -> usize {
        (1usize << self.hash_bits) - 1
    }

    fn start_symbol(&self) -> usize {
        self.num_tags()
    }

    fn stop_symbol(&self) -> usize {
        self.num_tags() + 1
    }

    /// Index of the dense bigram weight for (child tag, parent tag),
    /// boundary symbols included.
    pub fn bigram_index(&self, child: usize, parent: usize) -> usize {
        let side = self.num_tags() + 2;
        debug_assert!(child < side && parent < side);
        self.hashed_dims() + child * side + parent
    }

    fn unary_index(&self, offset: isize, attr: usize, value: &str, tag: usize) -> usize {
        let mut h = Fnv::new();
        h.write(&self.hash_seed.to_le_bytes());
        h.write(b"u");
        h.write(&(offset as i32).to_le_bytes());
        h.write_u32(attr as u32);
        h.write_u32(value.len() as u32);
        h.write(value.as_bytes());
        h.write_u32(tag as u32);
        (h.finish() % self.hashed_dims() as u64) as usize
    }

    /// Calls `f` with every hashed feature index of (sentence, position, tag).
    fn for_each_unary(
        &self,
        sentence: &Sentence,
        v: usize,
        tag: usize,
        mut f: impl FnMut(usize),
    ) {
        let p = sentence.len() as isize;
        let attrs = sentence.columns[v].len();
        for offset in -(self.window as isize)..=(self.window as isize) {
            let pos = v as isize + offset;
            for attr in 0..attrs {
                let value: &str = if pos < 0 {
                    "start"
                } else if pos >= p {
                    "stop"
                } else {
                    &sentence.columns[pos as usize][attr]
                };
                f(self.unary_index(offset, attr, value, tag));
            }
        }
    }

    /// Score tables of one sentence at parameters w. Boundary bigrams are
    /// folded into the first and last node unaries.
    pub fn potentials_for(&self, sentence: &Sentence, w: &[f64]) -> Result<PotentialTable> {
        if w.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "parameter vector has length {}, feature dimension is {}",
                w.len(),
                self.dim
            )));
        }
        if sentence.is_empty() {
            return Err(Error::InvalidInput("cannot score an empty sentence".into()));
        }
        let p = sentence.len();
        let t = self.num_tags();
        let mut node: Vec<Vec<f64>> = Vec::with_capacity(p);
        for v in 0..p {
            let mut scores = vec![0.0; t];
            for (tag, s) in scores.iter_mut().enumerate() {
                self.for_each_unary(sentence, v, tag, |idx| *s += w[idx]);
                if v == 0 {
                    *s += w[self.bigram_index(tag, self.start_symbol())];
                }
                if v == p - 1 {
                    *s += w[self.bigram_index(self.stop_symbol(), tag)];
                }
            }
            node.push(scores);
        }
        let pair: Vec<Vec<Vec<f64>>> = (1..p)
            .map(|_| {
                (0..t)
                    .map(|child| {
                        (0..t).map(|parent| w[self.bigram_index(child, parent)]).collect()
                    })
                    .collect()
            })
            .collect();
        PotentialTable::new_chain(node, pair)
    }
}

/// A featurized dataset, ready for training: borrows the scheme and the
/// corpus and exposes them as a linear [`ScoreModel`].
pub struct TaggingModel<'a> {
    pub features: &'a TaggingFeatures,
    pub data: &'a TaggedDataset,
}

impl<'a> TaggingModel<'a> {
    pub fn new(features: &'a TaggingFeatures, data: &'a TaggedDataset) -> Result<Self> {
        if features.alphabet != data.label_alphabet {
            return Err(Error::InvalidInput(
                "dataset alphabet does not match the feature scheme's alphabet".into(),
            ));
        }
        let t = features.num_tags();
        for (s, sentence) in data.sentences.iter().enumerate() {
            if sentence.is_empty() {
                return Err(Error::InvalidInput(format!("sentence {s} is empty")));
            }
            if sentence.tags.iter().any(|&tag| tag >= t) {
                return Err(Error::InvalidInput(format!(
                    "sentence {s} has an out-of-alphabet tag; cannot train on it"
                )));
            }
        }
        Ok(Self { features, data })
    }
}

impl ScoreModel for TaggingModel<'_> {
    fn kind(&self) -> ModelKind {
        ModelKind::Linear
    }

    fn num_examples(&self) -> usize {
        self.data.sentences.len()
    }

    fn dim(&self) -> usize {
        self.features.dim()
    }

    fn gold(&self, i: usize) -> Labeling {
        Labeling::new(self.data.sentences[i].tags.clone())
    }

    fn potentials(&self, i: usize, w: &[f64]) -> Result<PotentialTable> {
        self.features.potentials_for(&self.data.sentences[i], w)
    }

    fn linearized_potentials(
        &self,
        i: usize,
        _anchor: &[f64],
        w: &[f64],
    ) -> Result<PotentialTable> {
        self.potentials(i, w)
    }

    fn add_unary_grad(
        &self,
        i: usize,
        _at: &[f64],
        v: usize,
        label: usize,
        coef: f64,
        grad: &mut [f64],
    ) {
        let sentence = &self.data.sentences[i];
        self.features
            .for_each_unary(sentence, v, label, |idx| grad[idx] += coef);
        if v == 0 {
            grad[self.features.bigram_index(label, self.features.start_symbol())] += coef;
        }
        if v == sentence.len() - 1 {
            grad[self.features.bigram_index(self.features.stop_symbol(), label)] += coef;
        }
    }

    fn add_pair_grad(
        &self,
        _i: usize,
        _at: &[f64],
        _v: usize,
        child_label: usize,
        parent_label: usize,
        coef: f64,
        grad: &mut [f64],
    ) {
        grad[self.features.bigram_index(child_label, parent_label)] += coef;
    }
}

/// Parameters of the synthetic corpus generator.
#[derive(Clone, Copy, Debug)]
pub struct SynthParams {
    pub seed: u64,
    /// Number of sentences.
    pub n: usize,
    /// Tokens per sentence.
    pub p: usize,
    pub num_tags: usize,
    pub vocab_size: usize,
    /// Probability of replacing a gold tag with a uniformly random other tag.
    pub noise: f64,
    /// Gibbs temperature of the ground-truth model; small values make tag
    /// sequences nearly deterministic given the sampled scores.
    pub temperature: f64,
}

fn sample_from_log_weights(log_w: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let z = log_sum_exp(log_w);
    let u: f64 = rng.random_range(0.0..1.0);
    let mut cum = 0.0;
    for (j, &lw) in log_w.iter().enumerate() {
        cum += (lw - z).exp();
        if u < cum {
            return j;
        }
    }
    log_w.len() - 1
}

/// Generates a synthetic tagging corpus from a sampled ground-truth model.
///
/// A fixed transition matrix and per-position unary scores are drawn from a
/// standard normal; tag sequences are exact Gibbs samples of the resulting
/// chain at `temperature` (forward filtering, backward sampling). Each tag
/// owns a vocabulary slice and emits from it with probability 0.95 (full
/// vocabulary otherwise), then label noise flips tags independently. Equal
/// seeds give byte-identical datasets.
pub fn synth_chain_dataset(params: &SynthParams) -> Result<TaggedDataset> {
    if params.n == 0 || params.p == 0 || params.num_tags == 0 || params.vocab_size == 0 {
        return Err(Error::InvalidConfig(
            "synthetic dataset needs n, p, num_tags, vocab_size all >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&params.noise) {
        return Err(Error::InvalidConfig(format!(
            "noise must lie in [0, 1], got {}",
            params.noise
        )));
    }
    if !(params.temperature.is_finite() && params.temperature > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be finite and positive, got {}",
            params.temperature
        )));
    }
    let t = params.num_tags;
    let inv_temp = 1.0 / params.temperature;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = StandardNormal;
    let trans: Vec<Vec<f64>> = (0..t)
        .map(|_| (0..t).map(|_| normal.sample(&mut rng)).collect())
        .collect();

    let slice = (params.vocab_size / t).max(1);
    let mut sentences = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let unary: Vec<Vec<f64>> = (0..params.p)
            .map(|_| (0..t).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        // Forward filtering in log space at the given temperature.
        let mut forward: Vec<Vec<f64>> = Vec::with_capacity(params.p);
        for v in 0..params.p {
            let mut row = vec![0.0; t];
            for (j, r) in row.iter_mut().enumerate() {
                let mut score = unary[v][j] * inv_temp;
                if v > 0 {
                    let incoming: Vec<f64> = (0..t)
                        .map(|i| forward[v - 1][i] + trans[j][i] * inv_temp)
                        .collect();
                    score += log_sum_exp(&incoming);
                }
                *r = score;
            }
            forward.push(row);
        }
        // Backward sampling.
        let mut tags = vec![0usize; params.p];
        tags[params.p - 1] = sample_from_log_weights(&forward[params.p - 1], &mut rng);
        for v in (0..params.p - 1).rev() {
            let next = tags[v + 1];
            let cond: Vec<f64> =
                (0..t).map(|j| forward[v][j] + trans[next][j] * inv_temp).collect();
            tags[v] = sample_from_log_weights(&cond, &mut rng);
        }
        // Token emission: mostly from the tag's vocabulary slice.
        let columns: Vec<Vec<String>> = tags
            .iter()
            .map(|&tag| {
                let token = if rng.random_range(0.0..1.0) < 0.95 {
                    let lo = (tag * slice).min(params.vocab_size - 1);
                    let hi = ((tag + 1) * slice).min(params.vocab_size).max(lo + 1);
                    rng.random_range(lo..hi)
                } else {
                    rng.random_range(0..params.vocab_size)
                };
                vec![format!("w{token}")]
            })
            .collect();
        // Label noise.
        for tag in tags.iter_mut() {
            if params.noise > 0.0 && t > 1 && rng.random_range(0.0..1.0) < params.noise {
                let other = rng.random_range(0..t - 1);
                *tag = if other >= *tag { other + 1 } else { other };
            }
        }
        sentences.push(Sentence { columns, tags });
    }
    Ok(TaggedDataset {
        sentences,
        label_alphabet: (0..t).map(|j| format!("t{j}")).collect(),
    })
}

/// Token-level quality of a prediction run.
#[derive(Clone, Debug)]
pub struct Metrics {
    /// Fraction of tokens tagged correctly.
    pub hamming_accuracy: f64,
    /// Micro-averaged token F1 over all classes.
    pub token_f1_micro: f64,
    /// Per-class token F1, indexed by the alphabet.
    pub per_class_f1: Vec<f64>,
}

/// Tags every sentence with un-augmented max inference and scores the
/// predictions against gold.
///
/// The dataset's alphabet must equal the feature scheme's. Gold tags at the
/// reserved out-of-alphabet index are never matched, counting against
/// accuracy and as false positives of the predicted class.
pub fn evaluate(
    features: &TaggingFeatures,
    w: &[f64],
    dataset: &TaggedDataset,
) -> Result<Metrics> {
    if features.alphabet != dataset.label_alphabet {
        return Err(Error::InvalidInput(
            "dataset alphabet does not match the feature scheme's alphabet".into(),
        ));
    }
    let t = features.num_tags();
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut tp = vec![0usize; t];
    let mut fp = vec![0usize; t];
    let mut fne = vec![0usize; t];
    for sentence in &dataset.sentences {
        let pot = features.potentials_for(sentence, w)?;
        let (_, pred) = crate::chain::viterbi(&pot)?;
        for (&gold, &guess) in sentence.tags.iter().zip(&pred.labels) {
            total += 1;
            if gold == guess {
                correct += 1;
                tp[guess] += 1;
            } else {
                fp[guess] += 1;
                if gold < t {
                    fne[gold] += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput("cannot evaluate an empty dataset".into()));
    }
    let f1 = |tp: usize, fp: usize, fne: usize| -> f64 {
        let denom = 2 * tp + fp + fne;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let per_class_f1 = (0..t).map(|c| f1(tp[c], fp[c], fne[c])).collect();
    let tp_sum: usize = tp.iter().sum();
    let fp_sum: usize = fp.iter().sum();
    let fn_sum: usize = fne.iter().sum();
    Ok(Metrics {
        hamming_accuracy: correct as f64 / total as f64,
        token_f1_micro: f1(tp_sum, fp_sum, fn_sum),
        per_class_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalyst::{
        catalyst_run, estimate_a, make_schedule, CatalystConfig, InnerBudget, ScheduleKind,
        ScheduleParams, WarmStart,
    };
    use crate::graph::test_support::seeded;
    use crate::loss::{hinge, smoothed_hinge};
    use crate::smoothing::SmoothingConfig;
    use crate::SmootherKind;
    use std::io::Cursor;

    const TOY: &str = "\
the DT O
cat NN B
sat VB O

dogs NN B
bark VB O
";

    fn toy_dataset() -> TaggedDataset {
        read_conll(Cursor::new(TOY)).unwrap()
    }

    #[test]
    fn read_toy_file() {
        let data = toy_dataset();
        assert_eq!(data.sentences.len(), 2);
        assert_eq!(data.label_alphabet, vec!["O", "B"]);
        assert_eq!(data.sentences[0].tags, vec![0, 1, 0]);
        assert_eq!(data.sentences[0].columns[1], vec!["cat", "NN"]);
        assert_eq!(data.sentences[1].len(), 2);
    }

    #[test]
    fn blank_line_runs_are_single_separators() {
        let spaced = "a X t1\n\n\n\nb Y t2\n\n\n";
        let tight = "a X t1\n\nb Y t2\n";
        let d1 = read_conll(Cursor::new(spaced)).unwrap();
        let d2 = read_conll(Cursor::new(tight)).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.sentences.len(), 2);
    }

    #[test]
    fn ragged_rows_fail_with_line_number() {
        let bad = "a X t1\nb t2\n";
        let err = read_conll(Cursor::new(bad)).unwrap_err();
        match err {
            Error::InvalidInput(msg) => assert!(msg.contains("line 2"), "message: {msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn single_column_rows_fail() {
        let err = read_conll(Cursor::new("lonely\n")).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let data = read_conll(Cursor::new("")).unwrap();
        assert!(data.sentences.is_empty());
        assert!(data.label_alphabet.is_empty());
        let blank = read_conll(Cursor::new("\n\n")).unwrap();
        assert!(blank.sentences.is_empty());
    }

    #[test]
    fn write_read_round_trip() {
        let data = toy_dataset();
        let mut buf = Vec::new();
        write_conll(&data, &mut buf).unwrap();
        let back = read_conll(Cursor::new(buf)).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn unknown_tags_map_to_reserved_index() {
        let alphabet = vec!["O".to_string(), "B".to_string()];
        let text = "x A O\ny A Z\n";
        let (data, unknown) = read_conll_using(Cursor::new(text), &alphabet).unwrap();
        assert_eq!(unknown, 1);
        assert_eq!(data.sentences[0].tags, vec![0, 2]);
        assert_eq!(data.reserved_label(), 2);
    }

    #[test]
    fn featurize_dimensions_and_validation() {
        let data = toy_dataset();
        let features = featurize(&data, 2, 8, 7).unwrap();
        assert_eq!(features.dim(), 255 + 16, "2 tags + boundary symbols give a 4x4 block");
        assert!(matches!(featurize(&data, 2, 3, 7), Err(Error::InvalidConfig(_))));
        assert!(matches!(featurize(&data, 2, 31, 7), Err(Error::InvalidConfig(_))));

        let single = read_conll(Cursor::new("one X a\n")).unwrap();
        let f = featurize(&single, 2, 8, 0).unwrap();
        // Single tag: block side is 1 + 2.
        assert_eq!(f.dim(), 255 + 9);
    }

    #[test]
    fn identical_sentences_identical_tables() {
        let data = toy_dataset();
        let features = featurize(&data, 2, 10, 99).unwrap();
        let mut rng = seeded(401);
        use rand::Rng as _;
        let w: Vec<f64> = (0..features.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = features.potentials_for(&data.sentences[0], &w).unwrap();
        let b = features.potentials_for(&data.sentences[0], &w).unwrap();
        for v in 0..a.num_nodes() {
            assert_eq!(a.node_scores(v), b.node_scores(v));
        }
    }

    #[test]
    fn hash_seed_moves_unaries_but_not_bigrams() {
        let data = toy_dataset();
        let f1 = featurize(&data, 2, 10, 1).unwrap();
        let f2 = featurize(&data, 2, 10, 2).unwrap();
        let mut rng = seeded(402);
        use rand::Rng as _;
        let w: Vec<f64> = (0..f1.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = f1.potentials_for(&data.sentences[0], &w).unwrap();
        let b = f2.potentials_for(&data.sentences[0], &w).unwrap();
        // Same parameters, different hashing: unaries almost surely differ.
        let unary_diff = (0..a.num_nodes()).any(|v| a.node_scores(v) != b.node_scores(v));
        assert!(unary_diff, "different seeds should relocate unary features");
        for v in 1..a.num_nodes() {
            assert_eq!(a.edge_table(v), b.edge_table(v), "bigram block ignores the seed");
        }
        assert_eq!(f1.bigram_index(0, 1), f2.bigram_index(0, 1));
    }

    #[test]
    fn boundary_bigrams_fold_into_unaries() {
        let data = toy_dataset();
        let features = featurize(&data, 2, 8, 5).unwrap();
        let mut w = vec![0.0; features.dim()];
        let t = features.num_tags();
        let start = t;
        let stop = t + 1;
        w[features.bigram_index(1, start)] = 3.0;
        w[features.bigram_index(stop, 0)] = 5.0;
        w[features.bigram_index(0, 1)] = 7.0;
        let sentence = &data.sentences[1]; // two tokens
        let pot = features.potentials_for(sentence, &w).unwrap();
        // Only dense weights are set, so node scores isolate the folds.
        assert_eq!(pot.node_score(0, 1), 3.0, "start bigram folds into node 0");
        assert_eq!(pot.node_score(1, 0), 5.0, "stop bigram folds into the last node");
        assert_eq!(pot.node_score(0, 0), 0.0);
        assert_eq!(pot.edge_score(1, 0, 1), 7.0, "interior bigram stays on the edge");
        let score = pot.score(&Labeling::new(vec![1, 0])).unwrap();
        assert_eq!(score, 3.0 + 5.0 + 7.0);
    }

    #[test]
    fn tagging_gradients_match_finite_differences() {
        let data = toy_dataset();
        let features = featurize(&data, 2, 6, 11).unwrap();
        let model = TaggingModel::new(&features, &data).unwrap();
        let mut rng = seeded(403);
        use rand::Rng as _;
        let w: Vec<f64> = (0..features.dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
        for cfg in [
            SmoothingConfig::entropy(0.3).unwrap(),
            SmoothingConfig::topk_l2(0.3, 4).unwrap(),
        ] {
            let l = smoothed_hinge(&model, 0, &w, &cfg).unwrap();
            let h = 1e-5;
            for j in 0..features.dim() {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let vp = smoothed_hinge(&model, 0, &wp, &cfg).unwrap().value;
                let vm = smoothed_hinge(&model, 0, &wm, &cfg).unwrap().value;
                let fd = (vp - vm) / (2.0 * h);
                let scale = fd.abs().max(l.gradient[j].abs()).max(1e-3);
                assert!(
                    (l.gradient[j] - fd).abs() <= 1e-5 * scale + 1e-8,
                    "coord {j}: analytic {} vs fd {fd}",
                    l.gradient[j]
                );
            }
        }
    }

    #[test]
    fn hinge_gradient_sparsity_bounded() {
        let data = toy_dataset();
        let features = featurize(&data, 2, 12, 3).unwrap();
        let model = TaggingModel::new(&features, &data).unwrap();
        let w = vec![0.0; features.dim()];
        let l = hinge(&model, 0, &w).unwrap();
        let nonzero = l.gradient.iter().filter(|&&g| g != 0.0).count();
        let p = data.sentences[0].len();
        let per_token = (2 * features.window + 1) * data.sentences[0].columns[0].len();
        let bound = 2 * per_token * p + (features.num_tags() + 2).pow(2);
        assert!(nonzero <= bound, "{nonzero} nonzeros exceed the sparsity bound {bound}");
    }

    #[test]
    fn synth_is_deterministic_and_sized() {
        let params = SynthParams {
            seed: 7,
            n: 5,
            p: 4,
            num_tags: 3,
            vocab_size: 12,
            noise: 0.1,
            temperature: 1.0,
        };
        let a = synth_chain_dataset(&params).unwrap();
        let b = synth_chain_dataset(&params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sentences.len(), 5);
        assert!(a.sentences.iter().all(|s| s.len() == 4));
        assert_eq!(a.label_alphabet, vec!["t0", "t1", "t2"]);

        let tiny = synth_chain_dataset(&SynthParams {
            seed: 1,
            n: 1,
            p: 1,
            num_tags: 1,
            vocab_size: 1,
            noise: 0.0,
            temperature: 1.0,
        })
        .unwrap();
        assert_eq!(tiny.sentences.len(), 1);
        assert_eq!(tiny.sentences[0].len(), 1);
    }

    #[test]
    fn synth_round_trips_through_text() {
        let params = SynthParams {
            seed: 3,
            n: 4,
            p: 3,
            num_tags: 2,
            vocab_size: 8,
            noise: 0.0,
            temperature: 0.5,
        };
        let data = synth_chain_dataset(&params).unwrap();
        let mut buf = Vec::new();
        write_conll(&data, &mut buf).unwrap();
        let back = read_conll(Cursor::new(buf)).unwrap();
        // The generator's alphabet may order tags differently from
        // first-seen order; compare surface forms.
        assert_eq!(back.sentences.len(), data.sentences.len());
        for (sa, sb) in data.sentences.iter().zip(&back.sentences) {
            assert_eq!(sa.columns, sb.columns);
            for (&ta, &tb) in sa.tags.iter().zip(&sb.tags) {
                assert_eq!(data.label_alphabet[ta], back.label_alphabet[tb]);
            }
        }
    }

    #[test]
    fn evaluate_perfect_and_forced_predictions() {
        let data = toy_dataset();
        let features = featurize(&data, 2, 10, 17).unwrap();
        // Reward each token's gold tag through its own offset-0 feature.
        let mut w = vec![0.0; features.dim()];
        for sentence in &data.sentences {
            for (v, &tag) in sentence.tags.iter().enumerate() {
                features.for_each_unary(sentence, v, tag, |idx| w[idx] = 1.0);
            }
        }
        let m = evaluate(&features, &w, &data).unwrap();
        assert_eq!(m.hamming_accuracy, 1.0);
        assert_eq!(m.token_f1_micro, 1.0);
        assert!(m.per_class_f1.iter().all(|&f| f == 1.0));

        // Forcing tag 0 through the boundary and transition weights gives
        // constant predictions; the toy data holds 3 "O" and 2 "B" tokens.
        let mut w0 = vec![0.0; features.dim()];
        let start = features.num_tags();
        let stop = features.num_tags() + 1;
        w0[features.bigram_index(0, start)] = 10.0;
        w0[features.bigram_index(0, 0)] = 10.0;
        w0[features.bigram_index(stop, 0)] = 10.0;
        let m0 = evaluate(&features, &w0, &data).unwrap();
        assert!((m0.hamming_accuracy - 0.6).abs() < 1e-12);
        assert_eq!(m0.per_class_f1[1], 0.0, "class B is never predicted");
    }

    #[test]
    fn evaluate_hand_counted_confusion() {
        // Three tokens, gold [O, O, B], forced prediction [O, B, B]:
        // class O: tp=1 fn=1 fp=0 -> F1 = 2/3;
        // class B: tp=1 fp=1 fn=0 -> F1 = 2/3; accuracy 2/3; micro 2/3.
        let text = "a X O\nb X O\nc X B\n";
        let data = read_conll(Cursor::new(text)).unwrap();
        let features = featurize(&data, 0, 10, 23).unwrap();
        let mut w = vec![0.0; features.dim()];
        let sentence = &data.sentences[0];
        for (v, &tag) in [0usize, 1, 1].iter().enumerate() {
            features.for_each_unary(sentence, v, tag, |idx| w[idx] = 5.0);
        }
        let m = evaluate(&features, &w, &data).unwrap();
        assert!((m.hamming_accuracy - 2.0 / 3.0).abs() <= 1e-12);
        assert!((m.per_class_f1[0] - 2.0 / 3.0).abs() <= 1e-12);
        assert!((m.per_class_f1[1] - 2.0 / 3.0).abs() <= 1e-12);
        assert!((m.token_f1_micro - 2.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn evaluate_rejects_alphabet_mismatch() {
        let data = toy_dataset();
        let features = featurize(&data, 2, 8, 1).unwrap();
        let mut other = data.clone();
        other.label_alphabet = vec!["O".to_string(), "I".to_string()];
        let w = vec![0.0; features.dim()];
        assert!(matches!(
            evaluate(&features, &w, &other),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn clean_synthetic_data_is_learnable() {
        // Near-deterministic generator (no label noise, tiny temperature):
        // a model trained from scratch must fit the train set well. The
        // threshold is frozen; this is the end-to-end smoke test of the
        // feature stack and the accelerated trainer together.
        let params = SynthParams {
            seed: 42,
            n: 60,
            p: 6,
            num_tags: 3,
            vocab_size: 30,
            noise: 0.0,
            temperature: 1e-3,
        };
        let data = synth_chain_dataset(&params).unwrap();
        let features = featurize(&data, 2, 12, 42).unwrap();
        let model = TaggingModel::new(&features, &data).unwrap();
        let lambda = 0.01 / data.sentences.len() as f64;
        let a_est = estimate_a(&model).unwrap();
        // An explicit, generous kappa keeps the prox subproblems easy for the
        // fixed inner budget; this is a fit test, not an acceleration test.
        let schedule = make_schedule(
            ScheduleKind::ScConst,
            &ScheduleParams {
                lambda,
                kappa: Some(10.0),
                mu: Some(0.5),
                epsilon: None,
                d_omega: 0.5,
                a_est,
                n: model.num_examples(),
            },
        )
        .unwrap();
        let cfg = CatalystConfig {
            schedule,
            smoother: SmootherKind::TopkL2,
            topk: 5,
            outer_iters: 40,
            budget: InnerBudget::Fixed { steps: 4 * model.num_examples() },
            warm_start: WarmStart::ProxCenter,
            step: None,
            a_est,
            seed: 11,
        };
        let w0 = vec![0.0; features.dim()];
        let out = catalyst_run(&model, lambda, &w0, &cfg, |_, _| {}).unwrap();
        let metrics = evaluate(&features, &out.w, &data).unwrap();
        assert!(
            metrics.hamming_accuracy >= 0.95,
            "learnability smoke test: accuracy {} below 0.95",
            metrics.hamming_accuracy
        );
    }
}
