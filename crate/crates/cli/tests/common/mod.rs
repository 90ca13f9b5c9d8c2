//! Synthetic scene shared by the integration and acceptance tests: five
//! rectangular regions whose DINO features are orthogonal, and a 50-caption
//! database whose embeddings point at the matching region's CLIP feature.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use tag_core::dense_features::{DenseFeatureMap, SOURCE_CLIP, SOURCE_DINO};
use tag_core::evaluator::{ClassList, SentenceEmbeddingTable};
use tag_core::label_png;
use tag_core::tensor_store::{save_tensor, AlignedTextTable, Matrix, Tensor};
use tag_core::word_pipeline::{vocabulary, WordPipelineConfig};

pub const WORDS: [&str; 5] = ["cloud", "tree", "road", "car", "house"];
pub const PATCH: usize = 14;
pub const GRID: (usize, usize) = (6, 8);
pub const DINO_DIM: usize = 8;
pub const CLIP_DIM: usize = 16;

const TEMPLATES: [&str; 10] = [
    "a photo of the {w}",
    "{p} in the background",
    "the {w} on a sunny day",
    "a big {w} near a building",
    "close up of a {w}",
    "the {w} at noon",
    "{w} and more {p}",
    "a small {w} in the picture",
    "wide shot of the {w}",
    "one {w} under the light",
];

fn plural(w: &str) -> String {
    format!("{w}s")
}

/// Region of the patch cell at grid position `(gy, gx)`.
pub fn region(gy: usize, gx: usize) -> usize {
    match (gy < 3, gx) {
        (true, x) if x < 4 => 0,
        (true, _) => 1,
        (false, x) if x < 3 => 2,
        (false, x) if x < 6 => 3,
        _ => 4,
    }
}

pub fn image_size() -> (usize, usize) {
    (GRID.0 * PATCH, GRID.1 * PATCH)
}

/// Ground-truth region per pixel, taken from the patch containing it.
pub fn gt_regions() -> Vec<u32> {
    let (h, w) = image_size();
    (0..h * w)
        .map(|i| region(i / w / PATCH, i % w / PATCH) as u32)
        .collect()
}

fn basis(dim: usize, i: usize, scale: f32) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[i] = scale;
    v
}

/// Channel-major `D × h × w` values with `cell(region)` at every patch.
fn grid_values(dim: usize, cell: impl Fn(usize) -> Vec<f32>) -> Vec<f32> {
    let n = GRID.0 * GRID.1;
    let mut values = vec![0.0; dim * n];
    for gy in 0..GRID.0 {
        for gx in 0..GRID.1 {
            let v = cell(region(gy, gx));
            for c in 0..dim {
                values[c * n + gy * GRID.1 + gx] = v[c];
            }
        }
    }
    values
}

pub fn dino_tensor() -> Tensor {
    Tensor::new(vec![DINO_DIM, GRID.0, GRID.1], grid_values(DINO_DIM, |r| basis(DINO_DIM, r, 1.0))).unwrap()
}

pub fn clip_tensor() -> Tensor {
    Tensor::new(vec![CLIP_DIM, GRID.0, GRID.1], grid_values(CLIP_DIM, |r| basis(CLIP_DIM, r, 2.0))).unwrap()
}

pub fn dino() -> DenseFeatureMap {
    DenseFeatureMap::from_tensor(dino_tensor(), None, PATCH, SOURCE_DINO).unwrap()
}

pub fn clip() -> DenseFeatureMap {
    DenseFeatureMap::from_tensor(clip_tensor(), None, PATCH, SOURCE_CLIP).unwrap()
}

pub fn captions() -> Vec<String> {
    let mut out = Vec::new();
    for w in WORDS {
        for t in TEMPLATES {
            out.push(t.replace("{w}", w).replace("{p}", &plural(w)));
        }
    }
    out
}

/// Caption `i` points at its region's CLIP direction with a small,
/// caption-specific offset in the unused dimensions.
pub fn caption_table() -> AlignedTextTable {
    let caps = captions();
    let mut data = Vec::with_capacity(caps.len() * CLIP_DIM);
    for i in 0..caps.len() {
        let mut v = basis(CLIP_DIM, i / TEMPLATES.len(), 1.0);
        v[WORDS.len() + i % (CLIP_DIM - WORDS.len())] += 0.1 + 0.01 * (i % 7) as f32;
        data.extend(v);
    }
    AlignedTextTable::from_texts(caps.clone(), "synthetic", Matrix::new(caps.len(), CLIP_DIM, data).unwrap())
        .unwrap()
}

/// Every normalized caption word. Region words share their region's CLIP
/// direction; the rest sit in the unused dimensions.
pub fn word_table() -> AlignedTextTable {
    let vocab: Vec<String> = vocabulary(&captions(), &WordPipelineConfig::default()).into_iter().collect();
    let mut data = Vec::new();
    for (i, word) in vocab.iter().enumerate() {
        let v = match WORDS.iter().position(|w| w == word) {
            Some(r) => basis(CLIP_DIM, r, 1.0),
            None => basis(CLIP_DIM, WORDS.len() + i % (CLIP_DIM - WORDS.len()), 1.0),
        };
        data.extend(v);
    }
    AlignedTextTable::from_texts(vocab.clone(), "synthetic", Matrix::new(vocab.len(), CLIP_DIM, data).unwrap())
        .unwrap()
}

/// Class names embedded on the identity basis, so a word reassigns to itself.
pub fn sbert_table() -> AlignedTextTable {
    let data: Vec<f32> = (0..WORDS.len()).flat_map(|r| basis(WORDS.len(), r, 1.0)).collect();
    AlignedTextTable::from_texts(WORDS, "synthetic", Matrix::new(WORDS.len(), WORDS.len(), data).unwrap()).unwrap()
}

pub fn sbert() -> SentenceEmbeddingTable {
    SentenceEmbeddingTable::from_table(sbert_table()).unwrap()
}

pub fn classes() -> ClassList {
    ClassList::from_names(WORDS)
}

pub struct SceneFiles {
    pub root: PathBuf,
    pub dino: PathBuf,
    pub clip: PathBuf,
    pub features_dir: PathBuf,
    pub captions: PathBuf,
    pub caption_embeddings: PathBuf,
    pub words: PathBuf,
    pub word_embeddings: PathBuf,
    pub sbert: PathBuf,
    pub sbert_embeddings: PathBuf,
    pub classes: PathBuf,
    pub gt_dir: PathBuf,
}

/// Write the scene as files for the command-line tool.
pub fn write_scene(root: &Path) -> SceneFiles {
    let features_dir = root.join("features");
    let gt_dir = root.join("gt");
    fs::create_dir_all(&features_dir).unwrap();
    fs::create_dir_all(&gt_dir).unwrap();
    let files = SceneFiles {
        root: root.to_path_buf(),
        dino: features_dir.join("scene.dino.tens"),
        clip: features_dir.join("scene.clip.tens"),
        features_dir,
        captions: root.join("captions.jsonl"),
        caption_embeddings: root.join("captions.tens"),
        words: root.join("words.jsonl"),
        word_embeddings: root.join("words.tens"),
        sbert: root.join("sbert.jsonl"),
        sbert_embeddings: root.join("sbert.tens"),
        classes: root.join("classes.tsv"),
        gt_dir,
    };
    save_tensor(&dino_tensor(), &files.dino).unwrap();
    save_tensor(&clip_tensor(), &files.clip).unwrap();
    caption_table().save(&files.captions, &files.caption_embeddings).unwrap();
    word_table().save(&files.words, &files.word_embeddings).unwrap();
    sbert_table().save(&files.sbert, &files.sbert_embeddings).unwrap();
    let class_text: String = WORDS.iter().enumerate().map(|(i, w)| format!("{i}\t{w}\n")).collect();
    fs::write(&files.classes, class_text).unwrap();
    let gt: Vec<u16> = gt_regions().iter().map(|&r| r as u16).collect();
    label_png::write_gray16(files.gt_dir.join("scene.png"), image_size(), &gt).unwrap();
    files
}
