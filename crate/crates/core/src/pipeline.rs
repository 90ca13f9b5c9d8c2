//! End-to-end labeling of one image from its dense feature maps.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::caption_index::{CaptionIndex, Hit};
use crate::dense_features::{upsample, DenseFeatureMap, UpsampleMode};
use crate::error::{Error, Result};
use crate::evaluator::{LabelMap, LegendEntry};
use crate::kmeans::KMeansParams;
use crate::render;
use crate::segmenter::{self, ClusterOn, SegmentPartition};
use crate::word_pipeline::{
    assign_category, extract_candidates, CandidateWordSet, PosLexicon, SegmentLabel,
    WordEmbeddingTable, WordPipelineConfig,
};

pub const LABELS_SUFFIX: &str = "labels.png";
pub const LEGEND_SUFFIX: &str = "legend.json";
pub const REPORT_SUFFIX: &str = "report.json";
pub const OVERLAY_SUFFIX: &str = "overlay.png";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub clusters: usize,
    pub topn: usize,
    pub seed: u64,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub upsample: UpsampleMode,
    pub cluster_on: ClusterOn,
    pub words: WordPipelineConfig,
    pub workers: Option<usize>,
    /// Probe count override for an inverted-lists caption index.
    pub probe: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let km = KMeansParams::default();
        Self {
            clusters: km.k,
            topn: 10,
            seed: km.seed,
            kmeans_max_iters: km.max_iters,
            kmeans_tol: km.tol,
            upsample: UpsampleMode::Bilinear,
            cluster_on: ClusterOn::Pixel,
            words: WordPipelineConfig::default(),
            workers: None,
            probe: None,
        }
    }
}

impl PipelineConfig {
    pub fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            k: self.clusters,
            seed: self.seed,
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
            workers: self.workers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::Parameter("cluster count must be at least 1".into()));
        }
        if self.topn == 0 {
            return Err(Error::Parameter("top-n must be at least 1".into()));
        }
        if self.kmeans_max_iters == 0 {
            return Err(Error::Parameter("k-means needs at least one iteration".into()));
        }
        if !(self.kmeans_tol.is_finite() && self.kmeans_tol >= 0.0) {
            return Err(Error::Parameter("k-means tolerance must be a non-negative number".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Parameter("worker count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Shared, read-only inputs reused across images.
pub struct Resources<'a> {
    pub captions: &'a CaptionIndex,
    pub words: &'a WordEmbeddingTable,
    pub lexicon: &'a PosLexicon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentReport {
    pub segment: u32,
    pub pixels: usize,
    pub captions: Vec<Hit>,
    pub candidates: CandidateWordSet,
    pub word: String,
    pub score: f32,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub height: usize,
    pub width: usize,
    pub clusters: usize,
    pub segments: Vec<SegmentReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub partition: SegmentPartition,
    pub labels: Vec<SegmentLabel>,
    pub report: ImageReport,
}

impl SegmentationResult {
    pub fn label_map(&self) -> Result<LabelMap> {
        let legend = self
            .labels
            .iter()
            .map(|l| LegendEntry {
                id: l.segment,
                word: l.word.clone(),
                score: l.score,
                degenerate: l.degenerate,
            })
            .collect();
        LabelMap::new(self.partition.size(), self.partition.assignment().to_vec(), legend)
    }

    /// Write `<stem>.labels.png`, `<stem>.legend.json`, `<stem>.report.json`
    /// and `<stem>.overlay.png` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str, base_image: Option<&Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let map = self.label_map()?;
        map.save(
            dir.join(format!("{stem}.{LABELS_SUFFIX}")),
            dir.join(format!("{stem}.{LEGEND_SUFFIX}")),
        )?;
        let report_path = dir.join(format!("{stem}.{REPORT_SUFFIX}"));
        let text = serde_json::to_string_pretty(&self.report).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(&report_path, text + "\n").map_err(|e| Error::io(&report_path, e))?;
        let base = base_image
            .map(|p| render::load_base_image(p, map.size()))
            .transpose()?;
        render::write_overlay(dir.join(format!("{stem}.{OVERLAY_SUFFIX}")), &map, base.as_deref())
    }
}

/// Cluster, pool, retrieve and name the segments of one image.
pub fn segment_image(
    dino: &DenseFeatureMap,
    clip: &DenseFeatureMap,
    resources: &Resources<'_>,
    config: &PipelineConfig,
) -> Result<SegmentationResult> {
    config.validate()?;
    if dino.image_size() != clip.image_size() {
        return Err(Error::Geometry(format!(
            "dino features cover {:?} but clip features cover {:?}",
            dino.image_size(),
            clip.image_size()
        )));
    }
    let params = config.kmeans_params();
    let partition = match config.cluster_on {
        ClusterOn::Pixel => segmenter::kmeans(&upsample(dino, config.upsample)?, &params)?,
        ClusterOn::Patch => segmenter::kmeans_on_grid(dino, config.upsample, &params)?,
    };
    let clip_pixels = upsample(clip, config.upsample)?;
    let pooled = segmenter::pool_segments(&partition, &clip_pixels)?;
    if pooled.dim() != resources.captions.database().dim() {
        return Err(Error::Input(format!(
            "clip features have {} dims, caption database has {}",
            pooled.dim(),
            resources.captions.database().dim()
        )));
    }

    let mut labels = Vec::with_capacity(partition.k());
    let mut segments = Vec::with_capacity(partition.k());
    for k in 0..partition.k() {
        let segment = k as u32;
        let retrieved = resources
            .captions
            .top_n_with_probe(pooled.vector(k), config.topn, config.probe)?;
        let texts: Vec<&str> = retrieved.hits.iter().map(|h| h.text.as_str()).collect();
        let candidates = extract_candidates(segment, &texts, &config.words, resources.lexicon)?;
        let label = if pooled.is_degenerate(k) || retrieved.degenerate {
            SegmentLabel::unknown(segment)
        } else {
            assign_category(&candidates, pooled.vector(k), resources.words)?
        };
        segments.push(SegmentReport {
            segment,
            pixels: partition.counts()[k],
            captions: retrieved.hits,
            candidates,
            word: label.word.clone(),
            score: label.score,
            degenerate: label.degenerate,
        });
        labels.push(label);
    }
    let (height, width) = partition.size();
    let report = ImageReport {
        height,
        width,
        clusters: partition.k(),
        segments,
        warnings: partition.warnings().to_vec(),
    };
    Ok(SegmentationResult {
        partition,
        labels,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption_index::{build_database, IndexParams};
    use crate::tensor_store::{AlignedTextTable, Matrix};
    use crate::word_pipeline::UNKNOWN_LABEL;

    /// Two vertical halves with orthogonal features; captions name each half.
    fn scene() -> (DenseFeatureMap, DenseFeatureMap, CaptionIndex, WordEmbeddingTable) {
        let (gh, gw, patch) = (2, 4, 4);
        let n = gh * gw;
        let mut dino = vec![0.0; 2 * n];
        let mut clip = vec![0.0; 3 * n];
        for i in 0..n {
            let half = usize::from(i % gw >= gw / 2);
            dino[half * n + i] = 1.0;
            clip[half * n + i] = 1.0;
        }
        let dino = DenseFeatureMap::new(dino, 2, (gh, gw), (gh * patch, gw * patch), patch, "dino").unwrap();
        let clip = DenseFeatureMap::new(clip, 3, (gh, gw), (gh * patch, gw * patch), patch, "clip").unwrap();
        let caps = ["a lake", "the lake", "a forest", "dense forest"];
        let rows = vec![1.0, 0.0, 0.1, 1.0, 0.0, 0.2, 0.0, 1.0, 0.1, 0.0, 1.0, 0.2];
        let table = AlignedTextTable::from_texts(caps, "t", Matrix::new(4, 3, rows).unwrap()).unwrap();
        let index = CaptionIndex::build(build_database(table).unwrap(), &IndexParams::default()).unwrap();
        let words = ["lake", "forest", "dense"];
        let wrows = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let words = WordEmbeddingTable::from_table(
            AlignedTextTable::from_texts(words, "t", Matrix::new(3, 3, wrows).unwrap()).unwrap(),
        )
        .unwrap();
        (dino, clip, index, words)
    }

    fn run(config: &PipelineConfig) -> Result<SegmentationResult> {
        let (dino, clip, index, words) = scene();
        let lexicon = PosLexicon::bundled();
        let resources = Resources { captions: &index, words: &words, lexicon: &lexicon };
        segment_image(&dino, &clip, &resources, config)
    }

    #[test]
    fn two_halves_get_their_words() {
        let config = PipelineConfig { clusters: 2, topn: 2, upsample: UpsampleMode::Nearest, ..Default::default() };
        let result = run(&config).unwrap();
        let mut words: Vec<&str> = result.labels.iter().map(|l| l.word.as_str()).collect();
        words.sort();
        assert_eq!(words, ["forest", "lake"]);
        let (h, w) = result.partition.size();
        let left = result.partition.label(0, 0);
        assert!((0..h).all(|y| result.partition.label(y, w - 1) != left));
    }

    #[test]
    fn one_cluster_covers_the_image() {
        let result = run(&PipelineConfig { clusters: 1, ..Default::default() }).unwrap();
        assert_eq!(result.partition.k(), 1);
        assert!(result.partition.assignment().iter().all(|&a| a == 0));
        assert_eq!(result.labels.len(), 1);
    }

    #[test]
    fn nothing_surviving_the_filter_gives_unknown() {
        let mut config = PipelineConfig { clusters: 2, topn: 2, ..Default::default() };
        config.words.freq_threshold = 50;
        config.words.fallback = false;
        let result = run(&config).unwrap();
        assert!(result.labels.iter().all(|l| l.word == UNKNOWN_LABEL && l.degenerate));
        assert!(result.report.segments.iter().all(|s| s.candidates.degenerate));
    }

    #[test]
    fn invalid_counts_are_parameter_errors() {
        for config in [
            PipelineConfig { clusters: 0, ..Default::default() },
            PipelineConfig { topn: 0, ..Default::default() },
            PipelineConfig { workers: Some(0), ..Default::default() },
        ] {
            assert!(matches!(run(&config), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn mismatched_image_sizes_are_rejected() {
        let (dino, _, index, words) = scene();
        let clip = DenseFeatureMap::new(vec![1.0; 3 * 4], 3, (2, 2), (8, 8), 4, "clip").unwrap();
        let lexicon = PosLexicon::bundled();
        let resources = Resources { captions: &index, words: &words, lexicon: &lexicon };
        let err = segment_image(&dino, &clip, &resources, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn written_outputs_reload() {
        let dir = tempfile::tempdir().unwrap();
        let result = run(&PipelineConfig { clusters: 2, ..Default::default() }).unwrap();
        result.write(dir.path(), "x", None).unwrap();
        let map = LabelMap::load(dir.path().join("x.labels.png"), dir.path().join("x.legend.json")).unwrap();
        assert_eq!(map, result.label_map().unwrap());
        for suffix in [REPORT_SUFFIX, OVERLAY_SUFFIX] {
            assert!(dir.path().join(format!("x.{suffix}")).exists());
        }
    }
}
