//! Citation datasets in the `.content` / `.cites` layout, feature scaling and
//! the two train/validation/test split protocols.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, FeatureMatrix, SparseGraph};
use crate::rng::{stream, Purpose};

/// A node-classification dataset. The graph is raw (not normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub n_classes: usize,
    /// Original node identifiers, indexed by dense node index.
    pub node_ids: Vec<String>,
    /// Citation lines kept (both endpoints known, not comments).
    pub citation_lines: usize,
    /// Citation lines dropped because an endpoint is missing from the content file.
    pub dropped_citations: usize,
}

impl Dataset {
    pub fn new(
        graph: SparseGraph,
        features: FeatureMatrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = graph.n_nodes();
        if features.n_nodes() != n {
            return Err(Error::DimensionMismatch {
                context: "dataset features",
                expected: n,
                actual: features.n_nodes(),
            });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: n,
                actual: labels.len(),
            });
        }
        let n_classes = class_names.len();
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        Ok(Self {
            graph,
            features,
            labels,
            class_names,
            n_classes,
            node_ids: (0..n).map(|i| i.to_string()).collect(),
            citation_lines: 0,
            dropped_citations: 0,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// Node indices per class, ascending.
    pub fn nodes_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (node, &label) in self.labels.iter().enumerate() {
            by_class[label].push(node);
        }
        by_class
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a `.content` file (`id<TAB>f_1 .. f_d<TAB>label`) and a `.cites`
/// file (`cited<TAB>citing`).
///
/// Node indices follow first appearance in the content file; class indices
/// follow the lexicographic order of the label strings. Citations naming an
/// id absent from the content file are dropped and counted.
pub fn load_content_cites(content_path: &Path, cites_path: &Path) -> Result<Dataset> {
    let content = read_text(content_path)?;
    let cites = read_text(cites_path)?;

    let mut node_ids: Vec<String> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;

    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::parse(
                content_path,
                lineno,
                "expected node id, features and label separated by tabs",
            ));
        }
        let n_features = fields.len() - 2;
        match dim {
            None => dim = Some(n_features),
            Some(d) if d != n_features => {
                return Err(Error::parse(
                    content_path,
                    lineno,
                    format!("expected {d} features, found {n_features}"),
                ));
            }
            Some(_) => {}
        }
        let id = fields[0].trim().to_string();
        if index_of.contains_key(&id) {
            return Err(Error::parse(content_path, lineno, format!("duplicate node id {id:?}")));
        }
        for (column, raw) in fields[1..fields.len() - 1].iter().enumerate() {
            let value: f64 = raw.trim().parse().map_err(|_| {
                Error::parse(
                    content_path,
                    lineno,
                    format!("feature {column} is not numeric: {raw:?}"),
                )
            })?;
            if !value.is_finite() {
                return Err(Error::parse(
                    content_path,
                    lineno,
                    format!("feature {column} is not finite: {raw:?}"),
                ));
            }
            data.push(value);
        }
        index_of.insert(id.clone(), node_ids.len());
        node_ids.push(id);
        raw_labels.push(fields[fields.len() - 1].trim().to_string());
    }

    let n = node_ids.len();
    let dim = dim.unwrap_or(0);
    let class_names: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| class_names.binary_search(l).expect("label collected above"))
        .collect();

    let mut edges = Vec::new();
    let mut citation_lines = 0;
    let mut dropped = 0;
    for (lineno, line) in cites.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                cites_path,
                lineno,
                format!("expected 2 node ids, found {} fields", fields.len()),
            ));
        }
        match (index_of.get(fields[0]), index_of.get(fields[1])) {
            (Some(&a), Some(&b)) => {
                edges.push((a, b));
                citation_lines += 1;
            }
            _ => dropped += 1,
        }
    }

    let graph = build_graph(&edges, n)?;
    let features = FeatureMatrix::new(n, dim, data)?;
    let mut ds = Dataset::new(graph, features, labels, class_names)?;
    ds.node_ids = node_ids;
    ds.citation_lines = citation_lines;
    ds.dropped_citations = dropped;
    Ok(ds)
}

/// Writes a dataset back out in the `.content` / `.cites` layout.
pub fn write_content_cites(ds: &Dataset, content_path: &Path, cites_path: &Path) -> Result<()> {
    let mut content = Vec::new();
    for i in 0..ds.n_nodes() {
        write!(content, "{}", ds.node_ids[i]).expect("write to Vec");
        for v in ds.features.row(i) {
            write!(content, "\t{v}").expect("write to Vec");
        }
        writeln!(content, "\t{}", ds.class_names[ds.labels[i]]).expect("write to Vec");
    }
    fs::write(content_path, content).map_err(|e| Error::io(content_path, e))?;

    let mut cites = Vec::new();
    for i in 0..ds.n_nodes() {
        for &j in ds.graph.row(i).0 {
            if i < j {
                writeln!(cites, "{}\t{}", ds.node_ids[i], ds.node_ids[j]).expect("write to Vec");
            }
        }
    }
    fs::write(cites_path, cites).map_err(|e| Error::io(cites_path, e))
}

/// How raw features are scaled before propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureScaling {
    /// Divide each non-zero row by its sum.
    #[default]
    RowNormalize,
    /// Leave values as they are; the encoder clamps to [0, 1].
    ClampOnly,
}

impl FromStr for FeatureScaling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "row-normalize" | "row_normalize" => Ok(Self::RowNormalize),
            "clamp-only" | "clamp_only" => Ok(Self::ClampOnly),
            other => Err(format!("unknown feature scaling {other:?}")),
        }
    }
}

impl fmt::Display for FeatureScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RowNormalize => "row-normalize",
            Self::ClampOnly => "clamp-only",
        })
    }
}

pub fn scale_features(ds: &Dataset, mode: FeatureScaling) -> Result<Dataset> {
    let features = &ds.features;
    for node in 0..features.n_nodes() {
        for (column, &value) in features.row(node).iter().enumerate() {
            if value < 0.0 {
                return Err(Error::NegativeFeature {
                    node,
                    column,
                    value,
                });
            }
        }
    }
    let mut out = ds.clone();
    if mode == FeatureScaling::RowNormalize {
        for node in 0..out.features.n_nodes() {
            let row = out.features.row_mut(node);
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
    Ok(out)
}

/// Split protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// 20 labelled nodes per class, 500 validation, 1000 test.
    Official,
    /// 8:2 train/test with a fifth of the training block held out for validation.
    Ratio,
}

impl SplitMode {
    fn name(self) -> &'static str {
        match self {
            Self::Official => "official",
            Self::Ratio => "ratio",
        }
    }
}

impl FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "official" | "split-i" | "I" => Ok(Self::Official),
            "ratio" | "split-ii" | "II" => Ok(Self::Ratio),
            other => Err(format!("unknown split mode {other:?}")),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const TRAIN_PER_CLASS: usize = 20;
pub const OFFICIAL_VAL: usize = 500;
pub const OFFICIAL_TEST: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    /// `None` for splits imported from a file without a header comment.
    pub mode: Option<SplitMode>,
    pub seed: Option<u64>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl SplitSpec {
    /// Checks that all indices are in range and the three sets are disjoint.
    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        let mut seen = vec![false; n_nodes];
        for &i in self.train_idx.iter().chain(&self.val_idx).chain(&self.test_idx) {
            if i >= n_nodes {
                return Err(Error::NodeOutOfRange { index: i, n_nodes });
            }
            if seen[i] {
                return Err(Error::InvalidInput(format!(
                    "node {i} appears in more than one split set"
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let (Some(mode), Some(seed)) = (self.mode, self.seed) {
            out.push_str(&format!("# mode={mode} seed={seed}\n"));
        }
        for (header, idx) in [
            ("TRAIN", &self.train_idx),
            ("VAL", &self.val_idx),
            ("TEST", &self.test_idx),
        ] {
            out.push_str(header);
            out.push('\n');
            let joined: Vec<String> = idx.iter().map(usize::to_string).collect();
            out.push_str(&joined.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut mode = None;
        let mut seed = None;
        let mut sets: [Option<Vec<usize>>; 3] = [None, None, None];
        let mut current: Option<usize> = None;
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                for token in comment.split_whitespace() {
                    if let Some(m) = token.strip_prefix("mode=") {
                        mode = m.parse().ok();
                    } else if let Some(s) = token.strip_prefix("seed=") {
                        seed = s.parse().ok();
                    }
                }
                continue;
            }
            let slot = match line {
                "TRAIN" => Some(0),
                "VAL" => Some(1),
                "TEST" => Some(2),
                _ => None,
            };
            if let Some(slot) = slot {
                if sets[slot].is_some() {
                    return Err(Error::parse(source, lineno, format!("repeated header {line}")));
                }
                sets[slot] = Some(Vec::new());
                current = Some(slot);
                continue;
            }
            let Some(slot) = current else {
                if line.is_empty() {
                    continue;
                }
                return Err(Error::parse(source, lineno, "index list before any header"));
            };
            for token in line.split_whitespace() {
                let index = token.parse().map_err(|_| {
                    Error::parse(source, lineno, format!("not a node index: {token:?}"))
                })?;
                sets[slot].as_mut().expect("slot opened").push(index);
            }
        }
        let [train, val, test] = sets;
        let missing = |name: &str| Error::parse(source, 0, format!("missing {name} section"));
        Ok(Self {
            mode,
            seed,
            train_idx: train.ok_or_else(|| missing("TRAIN"))?,
            val_idx: val.ok_or_else(|| missing("VAL"))?,
            test_idx: test.ok_or_else(|| missing("TEST"))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }
}

/// Sizes of a ratio split of `n` nodes: `(train, val, test)`.
///
/// Test takes `ceil(0.2 n)`; validation takes `floor(0.2 b)` of the remaining
/// block `b` (at least one node once `b >= 2`); train keeps the rest.
pub fn ratio_split_sizes(n: usize) -> (usize, usize, usize) {
    let test = (n * 2).div_ceil(10);
    let block = n - test;
    let mut val = block * 2 / 10;
    if val == 0 && block >= 2 {
        val = 1;
    }
    (block - val, val, test)
}

pub fn make_split(ds: &Dataset, mode: SplitMode, seed: u64) -> Result<SplitSpec> {
    let mut rng = stream(seed, Purpose::Split, 0, 0);
    let n = ds.n_nodes();
    match mode {
        SplitMode::Official => {
            let by_class = ds.nodes_by_class();
            for (class, nodes) in by_class.iter().enumerate() {
                if nodes.len() < TRAIN_PER_CLASS {
                    return Err(Error::InsufficientNodes {
                        mode: "official",
                        class: ds.class_names[class].clone(),
                        needed: TRAIN_PER_CLASS,
                        available: nodes.len(),
                    });
                }
            }
            let needed = TRAIN_PER_CLASS * ds.n_classes + OFFICIAL_VAL + OFFICIAL_TEST;
            if n < needed {
                return Err(Error::InsufficientNodes {
                    mode: "official",
                    class: "<all>".into(),
                    needed,
                    available: n,
                });
            }
            let mut in_train = vec![false; n];
            let mut train_idx = Vec::with_capacity(TRAIN_PER_CLASS * ds.n_classes);
            for mut nodes in by_class {
                nodes.shuffle(&mut rng);
                for &node in &nodes[..TRAIN_PER_CLASS] {
                    in_train[node] = true;
                    train_idx.push(node);
                }
            }
            let mut rest: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
            rest.shuffle(&mut rng);
            let val_idx = rest[..OFFICIAL_VAL].to_vec();
            let test_idx = rest[OFFICIAL_VAL..OFFICIAL_VAL + OFFICIAL_TEST].to_vec();
            Ok(SplitSpec {
                mode: Some(mode),
                seed: Some(seed),
                train_idx,
                val_idx,
                test_idx,
            })
        }
        SplitMode::Ratio => {
            if n < 3 {
                return Err(Error::InsufficientNodes {
                    mode: "ratio",
                    class: "<all>".into(),
                    needed: 3,
                    available: n,
                });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (train, val, _test) = ratio_split_sizes(n);
            Ok(SplitSpec {
                mode: Some(mode),
                seed: Some(seed),
                train_idx: order[..train].to_vec(),
                val_idx: order[train..train + val].to_vec(),
                test_idx: order[train + val..].to_vec(),
            })
        }
    }
}
