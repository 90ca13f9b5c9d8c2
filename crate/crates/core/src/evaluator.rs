//! Scoring free-form label maps against ground truth.
//!
//! Each predicted word is first mapped onto the ground-truth class whose
//! sentence embedding is closest in cosine similarity. Confusion matrices
//! are then accumulated over all images and reduced to per-class IoU and
//! mIoU. Segments whose recorded similarity falls below a threshold can be
//! excluded from scoring.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense_features::cosine;
use crate::error::{Error, Result};
use crate::label_png;
use crate::tensor_store::AlignedTextTable;
use crate::word_pipeline::UNKNOWN_LABEL;

/// Ground-truth value that is never scored.
pub const IGNORE_VALUE: u32 = 255;
const IGNORE_DIRECTIVE: &str = "!ignore";

/// Dataset class list: class index → (pixel value in ground truth, name).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassList {
    names: Vec<String>,
    values: Vec<u32>,
    ignore: Vec<u32>,
}

impl ClassList {
    /// Classes whose ground-truth values are `0..names.len()`.
    pub fn from_names<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        Self {
            values: (0..names.len() as u32).collect(),
            names,
            ignore: Vec::new(),
        }
    }

    /// Parse `value<TAB>name` lines; a name of `!ignore` declares an ignored value.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut list = Self {
            names: Vec::new(),
            values: Vec::new(),
            ignore: Vec::new(),
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |detail: &str| Error::format("classes", format!("{origin}:{}: {detail}", lineno + 1));
            let (value, name) = line.split_once('\t').ok_or_else(|| bad("expected value<TAB>name"))?;
            let value: u32 = value.trim().parse().map_err(|_| bad("value is not an integer"))?;
            if list.values.contains(&value) || list.ignore.contains(&value) {
                return Err(bad("duplicate value"));
            }
            let name = name.trim();
            if name == IGNORE_DIRECTIVE {
                list.ignore.push(value);
            } else if name.is_empty() {
                return Err(bad("empty class name"));
            } else {
                list.values.push(value);
                list.names.push(name.to_string());
            }
        }
        if list.names.is_empty() {
            return Err(Error::format("classes", format!("{origin}: no classes")));
        }
        Ok(list)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Bundled class lists: `voc20`, `context59`, `ade150`.
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "voc20" => include_str!("../data/classes/voc20.tsv"),
            "context59" => include_str!("../data/classes/context59.tsv"),
            "ade150" => include_str!("../data/classes/ade150.tsv"),
            _ => return None,
        };
        Some(Self::parse(text, name).expect("bundled class list is well formed"))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn lookup(&self) -> HashMap<u32, Option<u16>> {
        let mut map: HashMap<u32, Option<u16>> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, Some(i as u16)))
            .collect();
        for &v in &self.ignore {
            map.insert(v, None);
        }
        map.entry(IGNORE_VALUE).or_insert(None);
        map
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub id: u32,
    pub word: String,
    #[serde(default)]
    pub score: f32,
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct LegendFile {
    height: usize,
    width: usize,
    labels: Vec<LegendEntry>,
}

/// Predicted label ids per pixel plus the id → word legend.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    ids: Vec<u32>,
    legend: BTreeMap<u32, LegendEntry>,
}

impl LabelMap {
    pub fn new(size: (usize, usize), ids: Vec<u32>, legend: Vec<LegendEntry>) -> Result<Self> {
        let (height, width) = size;
        if ids.len() != height * width {
            return Err(Error::Input(format!("{} ids for a {height}x{width} map", ids.len())));
        }
        let legend: BTreeMap<u32, LegendEntry> = legend.into_iter().map(|e| (e.id, e)).collect();
        if let Some(missing) = ids.iter().find(|id| !legend.contains_key(id)) {
            return Err(Error::Input(format!("label id {missing} has no legend entry")));
        }
        Ok(Self {
            height,
            width,
            ids,
            legend,
        })
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn legend(&self) -> impl Iterator<Item = &LegendEntry> {
        self.legend.values()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.legend.get(&id).map(|e| e.word.as_str())
    }

    /// Write the id grid as a 16-bit PNG and the legend as JSON.
    pub fn save(&self, png_path: impl AsRef<Path>, legend_path: impl AsRef<Path>) -> Result<()> {
        let ids: Vec<u16> = self
            .ids
            .iter()
            .map(|&id| u16::try_from(id).map_err(|_| Error::Input(format!("label id {id} exceeds 16 bits"))))
            .collect::<Result<_>>()?;
        label_png::write_gray16(png_path, (self.height, self.width), &ids)?;
        let legend = LegendFile {
            height: self.height,
            width: self.width,
            labels: self.legend.values().cloned().collect(),
        };
        let path = legend_path.as_ref();
        let text = serde_json::to_string_pretty(&legend).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(png_path: impl AsRef<Path>, legend_path: impl AsRef<Path>) -> Result<Self> {
        let (height, width, ids) = label_png::read_single_channel(png_path)?;
        let path = legend_path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let legend: LegendFile = serde_json::from_str(&text)
            .map_err(|e| Error::format("legend", format!("{}: {e}", path.display())))?;
        if (legend.height, legend.width) != (height, width) {
            return Err(Error::format(
                "legend",
                format!(
                    "{}: legend is {}x{} but label map is {height}x{width}",
                    path.display(),
                    legend.height,
                    legend.width
                ),
            ));
        }
        Self::new((height, width), ids, legend.labels)
    }
}

/// Ground-truth class index per pixel (`None` = ignored).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    height: usize,
    width: usize,
    classes: Vec<Option<u16>>,
}

impl GroundTruth {
    /// Map raw ground-truth values onto class indices. Values outside the
    /// class list and its ignore set are an input error.
    pub fn from_values(size: (usize, usize), values: &[u32], classes: &ClassList) -> Result<Self> {
        let (height, width) = size;
        if values.len() != height * width {
            return Err(Error::Input(format!("{} values for a {height}x{width} map", values.len())));
        }
        let lookup = classes.lookup();
        let classes = values
            .iter()
            .map(|v| {
                lookup
                    .get(v)
                    .copied()
                    .ok_or_else(|| Error::Input(format!("ground-truth value {v} is not in the class list")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            height,
            width,
            classes,
        })
    }

    /// Class indices given directly; `None` marks ignored pixels.
    pub fn from_classes(size: (usize, usize), classes: Vec<Option<u16>>) -> Result<Self> {
        if classes.len() != size.0 * size.1 {
            return Err(Error::Input("ground-truth size mismatch".into()));
        }
        Ok(Self {
            height: size.0,
            width: size.1,
            classes,
        })
    }

    pub fn load_png(path: impl AsRef<Path>, classes: &ClassList) -> Result<Self> {
        let (h, w, values) = label_png::read_single_channel(path)?;
        Self::from_values((h, w), &values, classes)
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn classes(&self) -> &[Option<u16>] {
        &self.classes
    }
}

/// Sentence embeddings for predicted words and class names.
#[derive(Debug, Clone, Default)]
pub struct SentenceEmbeddingTable {
    vectors: HashMap<String, Vec<f32>>,
}

impl SentenceEmbeddingTable {
    pub fn from_table(table: AlignedTextTable) -> Result<Self> {
        let mut vectors = HashMap::with_capacity(table.len());
        for (record, row) in table.records.iter().zip(table.embeddings.iter_rows()) {
            vectors.entry(record.text.clone()).or_insert_with(|| row.to_vec());
        }
        Ok(Self { vectors })
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f32>) {
        self.vectors.insert(key.into(), vector);
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    fn require(&self, key: &str) -> Result<&[f32]> {
        self.get(key)
            .ok_or_else(|| Error::Evaluation(format!("no sentence embedding for `{key}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentAssignment {
    pub segment: u32,
    pub word: String,
    /// Ground-truth class index; `None` for segments that carry no word.
    pub class: Option<usize>,
    pub similarity: f32,
}

/// A label map whose segments have been mapped onto ground-truth classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReassignedLabelMap {
    height: usize,
    width: usize,
    ids: Vec<u32>,
    segments: BTreeMap<u32, SegmentAssignment>,
}

impl ReassignedLabelMap {
    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn segments(&self) -> impl Iterator<Item = &SegmentAssignment> {
        self.segments.values()
    }

    pub fn segment(&self, id: u32) -> Option<&SegmentAssignment> {
        self.segments.get(&id)
    }

    /// Class index per pixel (`None` where the segment has no word).
    pub fn pixel_classes(&self) -> Vec<Option<usize>> {
        self.ids.iter().map(|id| self.segments[id].class).collect()
    }
}

/// Map every predicted word to its most similar ground-truth class.
/// Ties go to the class listed first. Segments labeled `unknown` (or
/// flagged degenerate) keep no class and a similarity of -1.
pub fn reassign(
    pred: &LabelMap,
    classes: &ClassList,
    table: &SentenceEmbeddingTable,
) -> Result<ReassignedLabelMap> {
    let class_vecs: Vec<&[f32]> = classes
        .names
        .iter()
        .map(|n| table.require(n))
        .collect::<Result<_>>()?;
    let mut segments = BTreeMap::new();
    for entry in pred.legend.values() {
        let assignment = if entry.degenerate || entry.word == UNKNOWN_LABEL {
            SegmentAssignment {
                segment: entry.id,
                word: entry.word.clone(),
                class: None,
                similarity: -1.0,
            }
        } else {
            let v = table.require(&entry.word)?;
            let mut best = (0usize, f32::NEG_INFINITY);
            for (c, cv) in class_vecs.iter().enumerate() {
                if cv.len() != v.len() {
                    return Err(Error::Evaluation(format!(
                        "embedding widths differ for `{}` and `{}`",
                        entry.word, classes.names[c]
                    )));
                }
                let s = cosine(v, cv).value;
                if s > best.1 {
                    best = (c, s);
                }
            }
            SegmentAssignment {
                segment: entry.id,
                word: entry.word.clone(),
                class: Some(best.0),
                similarity: best.1,
            }
        };
        segments.insert(entry.id, assignment);
    }
    Ok(ReassignedLabelMap {
        height: pred.height,
        width: pred.width,
        ids: pred.ids.clone(),
        segments,
    })
}

/// Ground-truth rows × prediction columns; the extra last column counts
/// pixels whose segment received no word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * (classes + 1)],
        }
    }

    pub fn add(&mut self, gt: usize, pred: Option<usize>) {
        let col = pred.unwrap_or(self.classes);
        self.counts[gt * (self.classes + 1) + col] += 1;
    }

    pub fn get(&self, gt: usize, pred: Option<usize>) -> u64 {
        self.counts[gt * (self.classes + 1) + pred.unwrap_or(self.classes)]
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(tp, fp, fn)` for one class.
    pub fn class_counts(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.get(c, Some(c));
        let row: u64 = (0..=self.classes).map(|p| self.counts[c * (self.classes + 1) + p]).sum();
        let col: u64 = (0..self.classes).map(|g| self.get(g, Some(c))).sum();
        (tp, col - tp, row - tp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiouOptions {
    /// Segments with similarity below this are not scored.
    pub sim_threshold: f32,
    /// Report classes absent from both prediction and ground truth as IoU 0
    /// instead of leaving them out of the mean.
    pub keep_undefined_as_zero: bool,
}

impl Default for MiouOptions {
    fn default() -> Self {
        Self {
            sim_threshold: -1.0,
            keep_undefined_as_zero: false,
        }
    }
}

/// One scored image.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub name: String,
    pub pred: ReassignedLabelMap,
    pub gt: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassIou {
    pub name: String,
    pub iou: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReassignmentRow {
    pub image: String,
    pub segment: u32,
    pub word: String,
    pub class: Option<String>,
    pub similarity: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub sim_threshold: f32,
    pub miou: f64,
    pub classes: Vec<ClassIou>,
    /// Pixels entering the confusion matrix.
    pub evaluated_pixels: u64,
    /// Pixels ignored by the ground truth.
    pub ignored_pixels: u64,
    /// Pixels excluded because their segment fell below the threshold.
    pub thresholded_pixels: u64,
    pub images: usize,
    pub reassignments: Vec<ReassignmentRow>,
}

fn confusion(sample: &EvalSample, classes: usize, threshold: f32) -> (ConfusionMatrix, u64, u64) {
    let mut cm = ConfusionMatrix::new(classes);
    let (mut ignored, mut thresholded) = (0u64, 0u64);
    let pred = &sample.pred;
    for (&id, &gt) in pred.ids.iter().zip(&sample.gt.classes) {
        let Some(gt) = gt else {
            ignored += 1;
            continue;
        };
        let seg = &pred.segments[&id];
        if seg.similarity < threshold {
            thresholded += 1;
            continue;
        }
        cm.add(gt as usize, seg.class);
    }
    (cm, ignored, thresholded)
}

/// Per-class IoU and mIoU over all samples.
pub fn miou(samples: &[EvalSample], classes: &ClassList, options: &MiouOptions) -> Result<EvalReport> {
    for s in samples {
        if s.pred.size() != s.gt.size() {
            return Err(Error::Input(format!(
                "{}: prediction is {:?} but ground truth is {:?}",
                s.name,
                s.pred.size(),
                s.gt.size()
            )));
        }
        if let Some(bad) = s.gt.classes.iter().flatten().find(|&&c| c as usize >= classes.len()) {
            return Err(Error::Input(format!("{}: class index {bad} out of range", s.name)));
        }
    }
    let n = classes.len();
    let per_image: Vec<(ConfusionMatrix, u64, u64)> = samples
        .par_iter()
        .map(|s| confusion(s, n, options.sim_threshold))
        .collect();
    let mut cm = ConfusionMatrix::new(n);
    let (mut ignored, mut thresholded) = (0, 0);
    for (m, i, t) in &per_image {
        cm.merge(m);
        ignored += i;
        thresholded += t;
    }

    let mut per_class = Vec::with_capacity(n);
    let (mut sum, mut defined) = (0.0f64, 0usize);
    for c in 0..n {
        let (tp, fp, fn_) = cm.class_counts(c);
        let denom = tp + fp + fn_;
        let iou = if denom == 0 {
            options.keep_undefined_as_zero.then_some(0.0)
        } else {
            Some(tp as f64 / denom as f64)
        };
        if let Some(v) = iou {
            sum += v;
            defined += 1;
        }
        per_class.push(ClassIou {
            name: classes.names[c].clone(),
            iou,
            tp,
            fp,
            fn_,
        });
    }
    let reassignments = samples
        .iter()
        .flat_map(|s| {
            s.pred.segments.values().map(|a| ReassignmentRow {
                image: s.name.clone(),
                segment: a.segment,
                word: a.word.clone(),
                class: a.class.map(|c| classes.names[c].clone()),
                similarity: a.similarity,
            })
        })
        .collect();
    Ok(EvalReport {
        sim_threshold: options.sim_threshold,
        miou: if defined == 0 { 0.0 } else { sum / defined as f64 },
        classes: per_class,
        evaluated_pixels: cm.total(),
        ignored_pixels: ignored,
        thresholded_pixels: thresholded,
        images: samples.len(),
        reassignments,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.classes.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<width$}  {:>7}  {:>12}  {:>12}  {:>12}", "class", "IoU", "tp", "fp", "fn")?;
        for c in &self.classes {
            let iou = c.iou.map_or("-".to_string(), |v| format!("{:.2}", v * 100.0));
            writeln!(f, "{:<width$}  {:>7}  {:>12}  {:>12}  {:>12}", c.name, iou, c.tp, c.fp, c.fn_)?;
        }
        writeln!(f, "{}", "-".repeat(width + 51))?;
        writeln!(f, "mIoU {:.2}  (threshold {}, {} images)", self.miou * 100.0, self.sim_threshold, self.images)?;
        write!(
            f,
            "pixels: {} evaluated, {} ignored, {} below threshold",
            self.evaluated_pixels, self.ignored_pixels, self.thresholded_pixels
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn legend(words: &[&str]) -> Vec<LegendEntry> {
        words
            .iter()
            .enumerate()
            .map(|(i, w)| LegendEntry {
                id: i as u32,
                word: w.to_string(),
                score: 0.0,
                degenerate: false,
            })
            .collect()
    }

    fn table(entries: &[(&str, Vec<f32>)]) -> SentenceEmbeddingTable {
        let mut t = SentenceEmbeddingTable::default();
        for (k, v) in entries {
            t.insert(*k, v.clone());
        }
        t
    }

    #[test]
    fn class_list_parsing() {
        let list = ClassList::parse("0\t!ignore\n1\tcat\n2\tdog\n", "t").unwrap();
        assert_eq!(list.names(), &["cat", "dog"]);
        let gt = GroundTruth::from_values((1, 4), &[0, 1, 2, 255], &list).unwrap();
        assert_eq!(gt.classes(), &[None, Some(0), Some(1), None]);
        assert!(matches!(
            GroundTruth::from_values((1, 1), &[7], &list),
            Err(Error::Input(_))
        ));
        assert!(ClassList::parse("1\tcat\n1\tdog\n", "t").is_err());
    }

    #[test]
    fn builtin_lists() {
        assert_eq!(ClassList::builtin("voc20").unwrap().len(), 20);
        assert_eq!(ClassList::builtin("context59").unwrap().len(), 59);
        assert_eq!(ClassList::builtin("ade150").unwrap().len(), 150);
        assert!(ClassList::builtin("coco").is_none());
    }

    #[test]
    fn reassign_identical_word_and_single_class() {
        let classes = ClassList::from_names(["cat", "dog"]);
        let t = table(&[("cat", vec![1.0, 0.0]), ("dog", vec![0.0, 1.0]), ("puppy", vec![0.2, 0.9])]);
        let pred = LabelMap::new((1, 2), vec![0, 1], legend(&["dog", "puppy"])).unwrap();
        let r = reassign(&pred, &classes, &t).unwrap();
        assert_eq!(r.segment(0).unwrap().class, Some(1));
        assert_eq!(r.segment(0).unwrap().similarity, 1.0);
        assert_eq!(r.segment(1).unwrap().class, Some(1));

        let single = ClassList::from_names(["cat"]);
        let r = reassign(&pred, &single, &t).unwrap();
        assert!(r.segments().all(|s| s.class == Some(0)));
    }

    #[test]
    fn reassign_missing_word() {
        let classes = ClassList::from_names(["cat"]);
        let t = table(&[("cat", vec![1.0])]);
        let pred = LabelMap::new((1, 1), vec![0], legend(&["zebra"])).unwrap();
        match reassign(&pred, &classes, &t).unwrap_err() {
            Error::Evaluation(msg) => assert!(msg.contains("zebra")),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn reassign_ties_follow_class_order() {
        let classes = ClassList::from_names(["b", "a"]);
        let t = table(&[("a", vec![1.0, 0.0]), ("b", vec![1.0, 0.0]), ("w", vec![1.0, 1.0])]);
        let pred = LabelMap::new((1, 1), vec![0], legend(&["w"])).unwrap();
        assert_eq!(reassign(&pred, &classes, &t).unwrap().segment(0).unwrap().class, Some(0));
    }

    fn sample(pred_classes: &[u32], gt: &[Option<u16>], size: (usize, usize), classes: &ClassList) -> EvalSample {
        let names: Vec<&str> = classes.names().iter().map(String::as_str).collect();
        let pred = LabelMap::new(size, pred_classes.to_vec(), legend(&names)).unwrap();
        let mut t = SentenceEmbeddingTable::default();
        for (i, n) in names.iter().enumerate() {
            let mut v = vec![0.0; names.len()];
            v[i] = 1.0;
            t.insert(*n, v);
        }
        EvalSample {
            name: "img".into(),
            pred: reassign(&pred, classes, &t).unwrap(),
            gt: GroundTruth::from_classes(size, gt.to_vec()).unwrap(),
        }
    }

    #[test]
    fn perfect_prediction() {
        let classes = ClassList::from_names(["a", "b", "c"]);
        let s = sample(&[0, 1, 2, 1], &[Some(0), Some(1), Some(2), Some(1)], (2, 2), &classes);
        let r = miou(&[s], &classes, &MiouOptions::default()).unwrap();
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.evaluated_pixels, 4);
    }

    #[test]
    fn hand_built_two_class_confusion() {
        // gt: left half a, right half b. pred: first column a, rest b.
        // a: tp 2, fn 2, fp 0 -> 0.5; b: tp 4, fp 2, fn 0 -> 4/6
        let classes = ClassList::from_names(["a", "b"]);
        let pred = [0, 1, 1, 1, 0, 1, 1, 1];
        let gt = [Some(0), Some(0), Some(1), Some(1), Some(0), Some(0), Some(1), Some(1)];
        let r = miou(&[sample(&pred, &gt, (2, 4), &classes)], &classes, &MiouOptions::default()).unwrap();
        assert_eq!(r.classes[0].iou, Some(0.5));
        assert!((r.classes[1].iou.unwrap() - 4.0 / 6.0).abs() < 1e-12);
        assert!((r.miou - (0.5 + 4.0 / 6.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_classes_excluded_or_zero() {
        let classes = ClassList::from_names(["a", "b", "c"]);
        let s = sample(&[0, 0], &[Some(0), Some(0)], (1, 2), &classes);
        let r = miou(std::slice::from_ref(&s), &classes, &MiouOptions::default()).unwrap();
        assert_eq!(r.classes[1].iou, None);
        assert_eq!(r.miou, 1.0);
        let r = miou(&[s], &classes, &MiouOptions { keep_undefined_as_zero: true, ..Default::default() }).unwrap();
        assert!((r.miou - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ignored_pixels_and_shape_mismatch() {
        let classes = ClassList::from_names(["a", "b"]);
        let s = sample(&[0, 1], &[None, Some(1)], (1, 2), &classes);
        let r = miou(std::slice::from_ref(&s), &classes, &MiouOptions::default()).unwrap();
        assert_eq!((r.evaluated_pixels, r.ignored_pixels), (1, 1));
        let mut bad = s.clone();
        bad.gt = GroundTruth::from_classes((2, 1), vec![Some(0), Some(0)]).unwrap();
        assert!(matches!(miou(&[bad], &classes, &MiouOptions::default()), Err(Error::Input(_))));
    }

    #[test]
    fn unknown_segments_count_as_misses() {
        let classes = ClassList::from_names(["a"]);
        let mut t = SentenceEmbeddingTable::default();
        t.insert("a", vec![1.0]);
        let pred = LabelMap::new(
            (1, 2),
            vec![0, 1],
            vec![
                LegendEntry { id: 0, word: "a".into(), score: 0.0, degenerate: false },
                LegendEntry { id: 1, word: UNKNOWN_LABEL.into(), score: 0.0, degenerate: true },
            ],
        )
        .unwrap();
        let s = EvalSample {
            name: "x".into(),
            pred: reassign(&pred, &classes, &t).unwrap(),
            gt: GroundTruth::from_classes((1, 2), vec![Some(0), Some(0)]).unwrap(),
        };
        let r = miou(&[s], &classes, &MiouOptions::default()).unwrap();
        assert_eq!(r.classes[0].iou, Some(0.5));
    }

    #[test]
    fn label_map_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = LabelMap::new((2, 2), vec![0, 1, 1, 0], legend(&["sky", "tree"])).unwrap();
        map.save(dir.path().join("l.png"), dir.path().join("l.json")).unwrap();
        let back = LabelMap::load(dir.path().join("l.png"), dir.path().join("l.json")).unwrap();
        assert_eq!(back, map);
    }
}
