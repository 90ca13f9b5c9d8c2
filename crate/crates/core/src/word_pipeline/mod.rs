//! From retrieved captions to one category word per segment.
//!
//! Captions are (i) cleaned of URLs, file names and non-words,
//! (ii) lowercased and singularized, and (iii) filtered by frequency and
//! part of speech. The surviving candidate whose text embedding is most
//! similar to the segment embedding names the segment.

pub mod lexicon;
pub mod singular;
pub mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use serde::Serialize;

pub use lexicon::{PosLexicon, PosTag, TagSet};
pub use singular::{singularize, standardize};
pub use tokenize::{tokenize, tokenize_and_remove};

use crate::dense_features::{cosine, l2_normalize};
use crate::error::{Error, Result};
use crate::tensor_store::{AlignedTextTable, Matrix};

pub const UNKNOWN_LABEL: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    /// Every occurrence counts.
    #[default]
    Occurrence,
    /// A word counts at most once per caption.
    Caption,
}

impl FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "occurrence" => Ok(Self::Occurrence),
            "caption" => Ok(Self::Caption),
            other => Err(Error::Parameter(format!("unknown count mode `{other}`"))),
        }
    }
}

/// Pipeline stages that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Remove,
    Standardize,
    Filter,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remove" => Ok(Self::Remove),
            "standardize" => Ok(Self::Standardize),
            "filter" => Ok(Self::Filter),
            other => Err(Error::Parameter(format!("unknown pipeline stage `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordPipelineConfig {
    pub freq_threshold: usize,
    pub count_mode: CountMode,
    /// Words carrying any of these tags survive the part-of-speech filter.
    pub keep_pos: TagSet,
    /// Keep words the lexicon does not know (proper nouns, rare words).
    pub keep_unknown: bool,
    /// Lower the frequency threshold until at least one word survives.
    pub fallback: bool,
    pub remove: bool,
    pub standardize: bool,
    pub filter: bool,
}

impl Default for WordPipelineConfig {
    fn default() -> Self {
        Self {
            freq_threshold: 2,
            count_mode: CountMode::Occurrence,
            keep_pos: TagSet::of(&[PosTag::Noun]),
            keep_unknown: true,
            fallback: true,
            remove: true,
            standardize: true,
            filter: true,
        }
    }
}

impl WordPipelineConfig {
    pub fn disable(&mut self, stage: Stage) {
        match stage {
            Stage::Remove => self.remove = false,
            Stage::Standardize => self.standardize = false,
            Stage::Filter => self.filter = false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WordCount {
    pub word: String,
    pub count: usize,
}

/// Candidate words for one segment, most frequent first.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CandidateWordSet {
    pub segment: u32,
    pub words: Vec<WordCount>,
    /// Frequency threshold that was finally applied.
    pub threshold: usize,
    pub degenerate: bool,
}

impl CandidateWordSet {
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn count(&self, word: &str) -> Option<usize> {
        self.words.iter().find(|w| w.word == word).map(|w| w.count)
    }
}

/// Tokenize and normalize one caption according to the enabled stages.
pub fn caption_words(caption: &str, config: &WordPipelineConfig) -> Vec<String> {
    let tokens = tokenize(caption, config.remove);
    if config.standardize {
        standardize(&tokens)
    } else {
        tokens
    }
}

/// Word counts over a segment's retrieved captions.
pub fn count_words<S: AsRef<str>>(
    captions: &[S],
    config: &WordPipelineConfig,
) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for caption in captions {
        let words = caption_words(caption.as_ref(), config);
        match config.count_mode {
            CountMode::Occurrence => {
                for w in words {
                    *counts.entry(w).or_insert(0) += 1;
                }
            }
            CountMode::Caption => {
                for w in words.into_iter().collect::<BTreeSet<_>>() {
                    *counts.entry(w).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

/// Frequency and part-of-speech filtering of already-normalized tokens.
pub fn filter<S: AsRef<str>>(
    tokens: &[S],
    config: &WordPipelineConfig,
    lexicon: &PosLexicon,
) -> Result<CandidateWordSet> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_ref().to_string()).or_insert(0) += 1;
    }
    filter_counts(&counts, config, lexicon)
}

/// Filter a word → count table.
///
/// The part-of-speech filter keeps words tagged with one of
/// `config.keep_pos`, plus words missing from the lexicon when
/// `keep_unknown` is set. Among those, words with count ≥ the threshold
/// survive; when none do and `fallback` is on, the threshold is lowered
/// step by step (down to 1) until the most frequent words pass.
pub fn filter_counts(
    counts: &BTreeMap<String, usize>,
    config: &WordPipelineConfig,
    lexicon: &PosLexicon,
) -> Result<CandidateWordSet> {
    if config.freq_threshold == 0 {
        return Err(Error::Parameter("frequency threshold must be at least 1".into()));
    }
    if counts.is_empty() {
        return Ok(CandidateWordSet {
            threshold: config.freq_threshold,
            degenerate: true,
            ..Default::default()
        });
    }
    if !config.filter {
        return Ok(finish(counts.iter(), 1));
    }
    let meaningful: Vec<(&String, &usize)> = counts
        .iter()
        .filter(|(w, _)| match lexicon.tags(w) {
            Some(tags) => tags.intersects(config.keep_pos),
            None => config.keep_unknown,
        })
        .collect();
    let top = meaningful.iter().map(|(_, &c)| c).max().unwrap_or(0);
    let threshold = if config.fallback && top > 0 {
        config.freq_threshold.min(top)
    } else {
        config.freq_threshold
    };
    let set = finish(
        meaningful.into_iter().filter(|(_, &c)| c >= threshold),
        threshold,
    );
    if set.words.is_empty() {
        log::warn!("no candidate word survives filtering at threshold {threshold}");
    }
    Ok(set)
}

fn finish<'a>(words: impl Iterator<Item = (&'a String, &'a usize)>, threshold: usize) -> CandidateWordSet {
    let mut words: Vec<WordCount> = words
        .map(|(w, &c)| WordCount {
            word: w.clone(),
            count: c,
        })
        .collect();
    words.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.word.cmp(&b.word)));
    CandidateWordSet {
        segment: 0,
        degenerate: words.is_empty(),
        words,
        threshold,
    }
}

/// Run all three stages over a segment's retrieved captions.
pub fn extract_candidates<S: AsRef<str>>(
    segment: u32,
    captions: &[S],
    config: &WordPipelineConfig,
    lexicon: &PosLexicon,
) -> Result<CandidateWordSet> {
    let counts = count_words(captions, config);
    let mut set = filter_counts(&counts, config, lexicon)?;
    set.segment = segment;
    Ok(set)
}

/// Every distinct normalized word in a caption corpus.
pub fn vocabulary<S: AsRef<str>>(captions: &[S], config: &WordPipelineConfig) -> BTreeSet<String> {
    captions
        .iter()
        .flat_map(|c| caption_words(c.as_ref(), config))
        .collect()
}

/// Unit-norm text embedding per normalized word.
#[derive(Debug, Clone)]
pub struct WordEmbeddingTable {
    index: HashMap<String, usize>,
    vectors: Matrix,
}

impl WordEmbeddingTable {
    pub fn from_table(table: AlignedTextTable) -> Result<Self> {
        let AlignedTextTable {
            records,
            embeddings,
        } = table;
        let dim = embeddings.cols();
        let mut index = HashMap::with_capacity(records.len());
        let mut data = Vec::with_capacity(embeddings.as_slice().len());
        for (record, row) in records.iter().zip(embeddings.iter_rows()) {
            let mut v = row.to_vec();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Input(format!("non-finite embedding for `{}`", record.text)));
            }
            if !l2_normalize(&mut v) {
                log::warn!("word `{}` has a zero embedding; dropped", record.text);
                continue;
            }
            if index.contains_key(&record.text) {
                log::warn!("word `{}` listed twice; keeping the first", record.text);
                continue;
            }
            index.insert(record.text.clone(), index.len());
            data.extend(v);
        }
        let rows = index.len();
        Ok(Self {
            index,
            vectors: Matrix::new(rows, if rows == 0 { 0 } else { dim }, data)?,
        })
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentLabel {
    pub segment: u32,
    pub word: String,
    pub score: f32,
    pub degenerate: bool,
}

impl SegmentLabel {
    pub fn unknown(segment: u32) -> Self {
        Self {
            segment,
            word: UNKNOWN_LABEL.to_string(),
            score: 0.0,
            degenerate: true,
        }
    }
}

/// Pick the candidate whose embedding is most similar to the segment
/// embedding. Ties go to the more frequent word, then the
/// lexicographically smaller one.
pub fn assign_category(
    candidates: &CandidateWordSet,
    segment_embedding: &[f32],
    table: &WordEmbeddingTable,
) -> Result<SegmentLabel> {
    if !table.is_empty() && segment_embedding.len() != table.dim() {
        return Err(Error::Input(format!(
            "segment embedding has {} dims, word table has {}",
            segment_embedding.len(),
            table.dim()
        )));
    }
    let mut best: Option<(f32, &WordCount)> = None;
    for cand in &candidates.words {
        let Some(emb) = table.get(&cand.word) else {
            log::warn!("candidate `{}` has no word embedding; skipped", cand.word);
            continue;
        };
        let sim = cosine(segment_embedding, emb);
        if sim.degenerate {
            return Ok(SegmentLabel::unknown(candidates.segment));
        }
        let better = match best {
            None => true,
            Some((s, w)) => {
                sim.value > s
                    || (sim.value == s
                        && (cand.count > w.count || (cand.count == w.count && cand.word < w.word)))
            }
        };
        if better {
            best = Some((sim.value, cand));
        }
    }
    Ok(match best {
        Some((score, w)) => SegmentLabel {
            segment: candidates.segment,
            word: w.word.clone(),
            score,
            degenerate: false,
        },
        None => SegmentLabel::unknown(candidates.segment),
    })
}
