//! Caption database and top-n cosine retrieval.
//!
//! Database rows are unit-normalized at build time, so cosine similarity
//! reduces to a dot product against the normalized query. Two index kinds
//! are offered: an exact scan and an inverted-lists index whose coarse
//! quantizer is trained with the engine's deterministic k-means.
//!
//! On-disk layout of a database directory:
//!
//! * `records.jsonl` – caption records
//! * `embeddings.tens` – normalized `N × D` caption embeddings
//! * `index.json` – manifest (kind, list count, probe count, seed, ...)
//! * `centroids.tens` – `L × D` coarse centroids (inverted lists only)
//! * `postings.bin` – delta-encoded posting lists (inverted lists only)

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense_features::{l2_normalize, l2_normalize_rows};
use crate::error::{Error, Result};
use crate::kmeans::{self, KMeansParams};
use crate::tensor_store::{
    load_records, load_tensor, save_records, save_tensor, AlignedTextTable, Matrix, TextRecord,
};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.tens";
pub const MANIFEST_FILE: &str = "index.json";
pub const CENTROIDS_FILE: &str = "centroids.tens";
pub const POSTINGS_FILE: &str = "postings.bin";
pub const POSTINGS_MAGIC: &[u8; 8] = b"TAGPOST1";

/// Caption records with unit-norm embeddings. Rows whose embedding had zero
/// norm are excluded from every search.
#[derive(Debug, Clone)]
pub struct CaptionDatabase {
    records: Vec<TextRecord>,
    embeddings: Matrix,
    excluded: Vec<bool>,
}

impl CaptionDatabase {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn record(&self, id: usize) -> &TextRecord {
        &self.records[id]
    }

    pub fn records(&self) -> &[TextRecord] {
        &self.records
    }

    pub fn embedding(&self, id: usize) -> &[f32] {
        self.embeddings.row(id)
    }

    pub fn is_excluded(&self, id: usize) -> bool {
        self.excluded[id]
    }

    pub fn active_rows(&self) -> usize {
        self.excluded.iter().filter(|&&e| !e).count()
    }
}

/// Normalize every caption embedding and flag zero rows.
pub fn build_database(table: AlignedTextTable) -> Result<CaptionDatabase> {
    if table.is_empty() {
        return Err(Error::Input("caption database is empty".into()));
    }
    let AlignedTextTable {
        records,
        embeddings,
    } = table;
    let (rows, dim) = (embeddings.rows(), embeddings.cols());
    if dim == 0 {
        return Err(Error::Input("caption embeddings have zero width".into()));
    }
    if let Some(i) = embeddings.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite embedding in row {}", i / dim)));
    }
    let mut data = embeddings.as_slice().to_vec();
    let zeros = l2_normalize_rows(&mut data, dim);
    let mut excluded = vec![false; rows];
    for &z in &zeros {
        log::warn!("caption {z} has a zero embedding and is excluded from search");
        excluded[z] = true;
    }
    if zeros.len() == rows {
        return Err(Error::Input("every caption embedding is zero".into()));
    }
    Ok(CaptionDatabase {
        records,
        embeddings: Matrix::new(rows, dim, data)?,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    #[default]
    Exact,
    Ivf,
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "ivf" => Ok(Self::Ivf),
            other => Err(Error::Parameter(format!("unknown index kind `{other}`"))),
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Ivf => "ivf",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexParams {
    pub kind: IndexKind,
    /// Coarse list count; defaults to `ceil(sqrt(N))`.
    pub lists: Option<usize>,
    /// Lists searched per query; defaults to `ceil(L / 8)`.
    pub probe: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VectorIndex {
    Exact,
    InvertedLists {
        centroids: Matrix,
        lists: Vec<Vec<u32>>,
        probe: usize,
        seed: u64,
    },
}

impl VectorIndex {
    pub fn kind(&self) -> IndexKind {
        match self {
            Self::Exact => IndexKind::Exact,
            Self::InvertedLists { .. } => IndexKind::Ivf,
        }
    }

    pub fn list_count(&self) -> usize {
        match self {
            Self::Exact => 1,
            Self::InvertedLists { lists, .. } => lists.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub id: u32,
    pub text: String,
    pub score: f32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
    /// Set when the query had zero norm.
    pub degenerate: bool,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<u32> {
        self.hits.iter().map(|h| h.id).collect()
    }
}

/// A caption database together with its search structure. Immutable after
/// construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct CaptionIndex {
    db: CaptionDatabase,
    index: VectorIndex,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: IndexKind,
    rows: usize,
    dim: usize,
    excluded: usize,
    lists: usize,
    probe: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    centroids: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    postings: Option<String>,
}

/// Score order: higher score first, then lower row id.
fn rank(a: &(f32, u32), b: &(f32, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn top_of(mut scored: Vec<(f32, u32)>, n: usize) -> Vec<(f32, u32)> {
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, rank);
        scored.truncate(n);
    }
    scored.sort_unstable_by(rank);
    scored
}

fn score(query: &[f32], row: &[f32]) -> f32 {
    let s: f64 = query.iter().zip(row).map(|(&a, &b)| a as f64 * b as f64).sum();
    s.clamp(-1.0, 1.0) as f32
}

impl CaptionIndex {
    pub fn build(db: CaptionDatabase, params: &IndexParams) -> Result<Self> {
        let index = match params.kind {
            IndexKind::Exact => VectorIndex::Exact,
            IndexKind::Ivf => build_inverted_lists(&db, params)?,
        };
        Ok(Self { db, index })
    }

    pub fn database(&self) -> &CaptionDatabase {
        &self.db
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn probe(&self) -> usize {
        match &self.index {
            VectorIndex::Exact => 1,
            VectorIndex::InvertedLists { probe, .. } => *probe,
        }
    }

    /// The `n` captions most similar to `query` under cosine similarity.
    pub fn top_n(&self, query: &[f32], n: usize) -> Result<RetrievalResult> {
        self.top_n_with_probe(query, n, None)
    }

    /// As [`top_n`](Self::top_n), overriding the probe count of an inverted-lists index.
    pub fn top_n_with_probe(
        &self,
        query: &[f32],
        n: usize,
        probe: Option<usize>,
    ) -> Result<RetrievalResult> {
        if n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        if query.len() != self.db.dim() {
            return Err(Error::Input(format!(
                "query has {} dims, database has {}",
                query.len(),
                self.db.dim()
            )));
        }
        let mut q = query.to_vec();
        if !l2_normalize(&mut q) {
            return Ok(RetrievalResult {
                hits: Vec::new(),
                degenerate: true,
            });
        }
        let scored: Vec<(f32, u32)> = match &self.index {
            VectorIndex::Exact => (0..self.db.len())
                .filter(|&i| !self.db.excluded[i])
                .map(|i| (score(&q, self.db.embedding(i)), i as u32))
                .collect(),
            VectorIndex::InvertedLists {
                centroids,
                lists,
                probe: default_probe,
                ..
            } => {
                let probe = probe.unwrap_or(*default_probe);
                if probe == 0 || probe > lists.len() {
                    return Err(Error::Parameter(format!(
                        "probe count {probe} outside 1..={}",
                        lists.len()
                    )));
                }
                let mut order: Vec<(f32, u32)> = centroids
                    .iter_rows()
                    .enumerate()
                    .map(|(j, c)| {
                        let d: f32 = c.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                        (-d, j as u32)
                    })
                    .collect();
                order = top_of(order, probe);
                order
                    .iter()
                    .flat_map(|&(_, j)| lists[j as usize].iter())
                    .map(|&i| (score(&q, self.db.embedding(i as usize)), i))
                    .collect()
            }
        };
        let hits = top_of(scored, n)
            .into_iter()
            .map(|(s, id)| Hit {
                id,
                text: self.db.records[id as usize].text.clone(),
                score: s,
            })
            .collect();
        Ok(RetrievalResult {
            hits,
            degenerate: false,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_records(&self.db.records, dir.join(RECORDS_FILE))?;
        save_tensor(&self.db.embeddings.to_tensor()?, dir.join(EMBEDDINGS_FILE))?;
        let mut manifest = Manifest {
            kind: self.index.kind(),
            rows: self.db.len(),
            dim: self.db.dim(),
            excluded: self.db.len() - self.db.active_rows(),
            lists: self.index.list_count(),
            probe: self.probe(),
            seed: 0,
            centroids: None,
            postings: None,
        };
        if let VectorIndex::InvertedLists {
            centroids,
            lists,
            seed,
            ..
        } = &self.index
        {
            manifest.seed = *seed;
            manifest.centroids = Some(CENTROIDS_FILE.into());
            manifest.postings = Some(POSTINGS_FILE.into());
            save_tensor(&centroids.to_tensor()?, dir.join(CENTROIDS_FILE))?;
            let path = dir.join(POSTINGS_FILE);
            fs::write(&path, encode_postings(lists)).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::format("manifest", format!("{}: {e}", path.display())))?;
        let records = load_records(dir.join(RECORDS_FILE))?;
        let embeddings = load_tensor(dir.join(EMBEDDINGS_FILE))?.into_matrix()?;
        let table = AlignedTextTable::new(records, embeddings)?;
        if table.len() != manifest.rows || table.embeddings.cols() != manifest.dim {
            return Err(Error::format(
                "manifest",
                format!(
                    "manifest describes {}x{} but files hold {}x{}",
                    manifest.rows,
                    manifest.dim,
                    table.len(),
                    table.embeddings.cols()
                ),
            ));
        }
        let db = stored_database(table)?;
        let index = match manifest.kind {
            IndexKind::Exact => VectorIndex::Exact,
            IndexKind::Ivf => {
                let centroids = load_tensor(dir.join(
                    manifest.centroids.as_deref().unwrap_or(CENTROIDS_FILE),
                ))?
                .into_matrix()?;
                let path = dir.join(manifest.postings.as_deref().unwrap_or(POSTINGS_FILE));
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let lists = decode_postings(&bytes)?;
                if lists.len() != centroids.rows() || centroids.cols() != db.dim() {
                    return Err(Error::format(
                        "postings",
                        format!(
                            "{} posting lists for {} centroids",
                            lists.len(),
                            centroids.rows()
                        ),
                    ));
                }
                check_partition(&db, &lists)?;
                if manifest.probe == 0 || manifest.probe > lists.len() {
                    return Err(Error::format("probe", format!("{} lists, probe {}", lists.len(), manifest.probe)));
                }
                VectorIndex::InvertedLists {
                    centroids,
                    lists,
                    probe: manifest.probe,
                    seed: manifest.seed,
                }
            }
        };
        Ok(Self { db, index })
    }
}

// Rows were normalized when the database was built; keep their exact bits.
fn stored_database(table: AlignedTextTable) -> Result<CaptionDatabase> {
    if table.is_empty() {
        return Err(Error::Input("caption database is empty".into()));
    }
    let mut excluded = Vec::with_capacity(table.len());
    for (i, row) in table.embeddings.iter_rows().enumerate() {
        let n = crate::dense_features::norm(row);
        if n == 0.0 {
            excluded.push(true);
        } else if (n - 1.0).abs() > 1e-5 || !n.is_finite() {
            return Err(Error::format(
                "embeddings",
                format!("stored row {i} has norm {n}, expected 1"),
            ));
        } else {
            excluded.push(false);
        }
    }
    Ok(CaptionDatabase {
        records: table.records,
        embeddings: table.embeddings,
        excluded,
    })
}

fn build_inverted_lists(db: &CaptionDatabase, params: &IndexParams) -> Result<VectorIndex> {
    let active: Vec<u32> = (0..db.len())
        .filter(|&i| !db.excluded[i])
        .map(|i| i as u32)
        .collect();
    let n = active.len();
    let lists = params
        .lists
        .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize);
    if lists == 0 || lists > n {
        return Err(Error::Parameter(format!(
            "list count {lists} must lie in 1..={n}"
        )));
    }
    let dim = db.dim();
    let points: Vec<f32> = active
        .iter()
        .flat_map(|&i| db.embedding(i as usize).iter().copied())
        .collect();
    let km = kmeans::kmeans(
        &points,
        dim,
        &KMeansParams {
            k: lists,
            seed: params.seed,
            ..Default::default()
        },
    )?;
    let l = km.k();
    if l < lists {
        log::warn!("trained {l} coarse lists instead of {lists} (duplicate rows)");
    }
    let mut postings = vec![Vec::new(); l];
    for (&row, &a) in active.iter().zip(&km.assignment) {
        postings[a as usize].push(row);
    }
    let probe = params.probe.unwrap_or_else(|| l.div_ceil(8));
    if probe == 0 || probe > l {
        return Err(Error::Parameter(format!(
            "probe count {probe} must lie in 1..={l}"
        )));
    }
    Ok(VectorIndex::InvertedLists {
        centroids: Matrix::new(l, dim, km.centroids)?,
        lists: postings,
        probe,
        seed: params.seed,
    })
}

fn check_partition(db: &CaptionDatabase, lists: &[Vec<u32>]) -> Result<()> {
    let mut seen = vec![false; db.len()];
    for &id in lists.iter().flatten() {
        let slot = seen
            .get_mut(id as usize)
            .ok_or_else(|| Error::format("postings", format!("row id {id} out of range")))?;
        if *slot {
            return Err(Error::format("postings", format!("row id {id} listed twice")));
        }
        *slot = true;
    }
    for (i, &s) in seen.iter().enumerate() {
        if s == db.excluded[i] {
            return Err(Error::format(
                "postings",
                format!("row {i} coverage does not match its exclusion flag"),
            ));
        }
    }
    Ok(())
}

/// `TAGPOST1`, u32 list count, then per list a u32 length followed by the
/// ascending ids as u32 deltas (first id stored as-is). Little-endian.
pub fn encode_postings(lists: &[Vec<u32>]) -> Vec<u8> {
    let mut out = POSTINGS_MAGIC.to_vec();
    out.extend_from_slice(&(lists.len() as u32).to_le_bytes());
    for list in lists {
        out.extend_from_slice(&(list.len() as u32).to_le_bytes());
        let mut prev = 0u32;
        for &id in list {
            out.extend_from_slice(&(id - prev).to_le_bytes());
            prev = id;
        }
    }
    out
}

pub fn decode_postings(bytes: &[u8]) -> Result<Vec<Vec<u32>>> {
    if bytes.len() < 8 || &bytes[..8] != POSTINGS_MAGIC {
        return Err(Error::format("magic", "posting file does not start with TAGPOST1"));
    }
    let mut words = bytes[8..].chunks(4).map(|c| {
        <[u8; 4]>::try_from(c)
            .map(u32::from_le_bytes)
            .map_err(|_| Error::format("postings", "truncated posting file"))
    });
    let mut next = || {
        words
            .next()
            .unwrap_or_else(|| Err(Error::format("postings", "truncated posting file")))
    };
    let count = next()? as usize;
    let mut lists = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = next()? as usize;
        let mut list = Vec::with_capacity(len.min(1 << 20));
        let mut prev = 0u32;
        for j in 0..len {
            let delta = next()?;
            if j > 0 && delta == 0 {
                return Err(Error::format("postings", "ids within a list must increase"));
            }
            prev = prev
                .checked_add(delta)
                .ok_or_else(|| Error::format("postings", "row id overflows u32"))?;
            list.push(prev);
        }
        lists.push(list);
    }
    if words.next().is_some() {
        return Err(Error::format("postings", "trailing bytes after last list"));
    }
    Ok(lists)
}

/// Answer many queries in parallel; results keep query order.
pub fn batch_top_n(
    index: &CaptionIndex,
    queries: &[Vec<f32>],
    n: usize,
) -> Result<Vec<RetrievalResult>> {
    queries.par_iter().map(|q| index.top_n(q, n)).collect()
}
