//! Random forest of Poisson deviance regression trees.
//!
//! Each tree predicts a claims *rate* (claims per exposure unit); node splits
//! maximize Poisson deviance reduction; growth is best-first, always applying
//! the largest remaining gain until the leaf budget is exhausted. Trees are
//! trained on bootstrap resamples drawn from per-tree random streams, so a
//! forest is reproducible from its seed regardless of thread count, and
//! out-of-bag rows give an honest deviance estimate.

mod split;

pub use split::{best_split, BestSplit, SplitMode};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::glm::serialize::{parse_f64, parse_usize, Reader, HEADER};
use crate::glm::{covariate_value, GlmError, COVARIATES};
use crate::panel::TownYearRecord;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("no usable rows (positive exposure) to train on")]
    NoRows,
    #[error("bad forest options: {message}")]
    BadOptions { message: String },
    #[error("model text: {message}")]
    ModelText { message: String },
}

impl From<GlmError> for ForestError {
    fn from(e: GlmError) -> Self {
        ForestError::ModelText { message: e.to_string() }
    }
}

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestOptions {
    pub trees: usize,
    /// Features drawn (without replacement) per node.
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_leaves: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub training_years: Option<(i32, i32)>,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            trees: 200,
            mtry: 3,
            min_leaf: 50,
            max_leaves: 512,
            bootstrap: true,
            seed: 0,
            training_years: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf { rate: f64, rows: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Root at index 0; children always appear after their parent.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_rate(&self, features: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { rate, .. } => return *rate,
                Node::Split { feature, threshold, left, right } => {
                    at = if features[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonForest {
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    pub options: ForestOptions,
    pub n: usize,
    /// Mean out-of-bag Poisson deviance per row; `None` without bootstrap.
    pub oob_deviance: Option<f64>,
}

/// Split candidate ordered by gain; ties go to the earlier insertion, so
/// growth order is deterministic.
struct Candidate {
    gain: f64,
    id: u64,
    node: usize,
    split: BestSplit,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.gain.total_cmp(&other.gain) == Ordering::Equal && self.id == other.id
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct TrainingData {
    features: Vec<Vec<f64>>,
    y: Vec<f64>,
    e: Vec<f64>,
}

fn training_data(records: &[TownYearRecord]) -> Result<TrainingData, ForestError> {
    let mut usable: Vec<&TownYearRecord> = records.iter().filter(|r| r.exposure > 0).collect();
    usable.sort_by(|a, b| (&a.town_id, a.year).cmp(&(&b.town_id, b.year)));
    if usable.is_empty() {
        return Err(ForestError::NoRows);
    }
    let mut features = vec![Vec::with_capacity(usable.len()); COVARIATES.len()];
    let mut y = Vec::with_capacity(usable.len());
    let mut e = Vec::with_capacity(usable.len());
    for r in usable {
        for (f, name) in COVARIATES.iter().enumerate() {
            features[f].push(covariate_value(r, name).expect("panel covariate"));
        }
        y.push(r.claims as f64);
        e.push(r.exposure as f64);
    }
    Ok(TrainingData { features, y, e })
}

/// Draws `mtry` distinct feature indices (ascending) by partial shuffle.
fn draw_features(rng: &mut ChaCha8Rng, n_features: usize, mtry: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n_features).collect();
    for i in 0..mtry {
        let j = rng.random_range(i..n_features);
        pool.swap(i, j);
    }
    let mut chosen = pool[..mtry].to_vec();
    chosen.sort_unstable();
    chosen
}

fn node_rate(data: &TrainingData, rows: &[u32]) -> f64 {
    let mut sum_y = 0.0;
    let mut sum_e = 0.0;
    for &r in rows {
        sum_y += data.y[r as usize];
        sum_e += data.e[r as usize];
    }
    sum_y / sum_e
}

fn grow_tree(
    data: &TrainingData,
    options: &ForestOptions,
    rng: &mut ChaCha8Rng,
    root_rows: Vec<u32>,
) -> Tree {
    let min_gain = 1e-12 * (1.0 + data.y.iter().sum::<f64>());
    let mut nodes = Vec::new();
    let mut node_rows: Vec<Option<Vec<u32>>> = Vec::new();
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
    let mut next_id = 0u64;
    // Creates a leaf and, when it is large enough to split, evaluates its
    // best split over a fresh feature draw and queues it.
    let mut create = |rows: Vec<u32>,
                      nodes: &mut Vec<Node>,
                      node_rows: &mut Vec<Option<Vec<u32>>>,
                      heap: &mut BinaryHeap<Candidate>,
                      rng: &mut ChaCha8Rng|
     -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf { rate: node_rate(data, &rows), rows: rows.len() });
        if rows.len() >= 2 * options.min_leaf {
            let candidates = draw_features(rng, data.features.len(), options.mtry);
            if let Some(split) = best_split(
                &data.features,
                &data.y,
                &data.e,
                &rows,
                &candidates,
                options.min_leaf,
                min_gain,
                SplitMode::Poisson,
            ) {
                heap.push(Candidate { gain: split.gain, id: next_id, node: id, split });
                next_id += 1;
            }
        }
        node_rows.push(Some(rows));
        id
    };
    create(root_rows, &mut nodes, &mut node_rows, &mut heap, rng);
    let mut leaves = 1;
    while leaves < options.max_leaves {
        let Some(cand) = heap.pop() else { break };
        let rows = node_rows[cand.node].take().expect("unsplit node retains its rows");
        let col = &data.features[cand.split.feature];
        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for r in rows {
            if col[r as usize] <= cand.split.threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        let left = create(left_rows, &mut nodes, &mut node_rows, &mut heap, rng);
        let right = create(right_rows, &mut nodes, &mut node_rows, &mut heap, rng);
        nodes[cand.node] = Node::Split {
            feature: cand.split.feature,
            threshold: cand.split.threshold,
            left,
            right,
        };
        leaves += 1;
    }
    Tree { nodes }
}

/// Fits a forest on panel records (rows with positive exposure, ordered by
/// town and year so resampling is reproducible).
pub fn fit_forest(
    records: &[TownYearRecord],
    options: &ForestOptions,
) -> Result<PoissonForest, ForestError> {
    let bad = |message: String| Err(ForestError::BadOptions { message });
    if options.trees == 0 {
        return bad("need at least one tree".to_string());
    }
    if options.mtry == 0 || options.mtry > COVARIATES.len() {
        return bad(format!(
            "mtry {} outside 1..={}",
            options.mtry,
            COVARIATES.len()
        ));
    }
    if options.min_leaf == 0 {
        return bad("min_leaf must be positive".to_string());
    }
    if options.max_leaves == 0 {
        return bad("max_leaves must be positive".to_string());
    }
    let data = training_data(records)?;
    let n = data.y.len();
    // Per-tree random streams off a common seed: reproducible and
    // independent of the parallel schedule.
    let grown: Vec<(Tree, Vec<bool>)> = (0..options.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(t as u64 + 1);
            // Bootstrap membership for OOB bookkeeping.
            let mut in_bag = vec![false; n];
            let rows: Vec<u32> = if options.bootstrap {
                let rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
                for &r in &rows {
                    in_bag[r as usize] = true;
                }
                rows
            } else {
                in_bag.iter_mut().for_each(|b| *b = true);
                (0..n as u32).collect()
            };
            (grow_tree(&data, options, &mut rng, rows), in_bag)
        })
        .collect();
    let trees: Vec<Tree> = grown.iter().map(|(t, _)| t.clone()).collect();
    let oob_deviance = options.bootstrap.then(|| {
        let mut total = 0.0;
        let mut covered = 0usize;
        let mut feats = vec![0.0; COVARIATES.len()];
        for i in 0..n {
            let mut sum_rate = 0.0;
            let mut votes = 0usize;
            for (tree, in_bag) in &grown {
                if !in_bag[i] {
                    for (f, col) in data.features.iter().enumerate() {
                        feats[f] = col[i];
                    }
                    sum_rate += tree.predict_rate(&feats);
                    votes += 1;
                }
            }
            if votes == 0 {
                continue;
            }
            let mu = (data.e[i] * sum_rate / votes as f64).max(1e-12);
            let yi = data.y[i];
            let ylny = if yi > 0.0 { yi * (yi / mu).ln() } else { 0.0 };
            total += 2.0 * (ylny - (yi - mu));
            covered += 1;
        }
        if covered == 0 {
            f64::NAN
        } else {
            total / covered as f64
        }
    });
    Ok(PoissonForest {
        feature_names: COVARIATES.iter().map(|s| s.to_string()).collect(),
        trees,
        options: options.clone(),
        n,
        oob_deviance,
    })
}

/// Expected claims for one covariate vector (column order of
/// `feature_names`) and exposure.
pub fn predict_forest(forest: &PoissonForest, features: &[f64], exposure: f64) -> f64 {
    if exposure <= 0.0 {
        return 0.0;
    }
    let mean_rate: f64 = forest
        .trees
        .iter()
        .map(|t| t.predict_rate(features))
        .sum::<f64>()
        / forest.trees.len() as f64;
    exposure * mean_rate
}

/// Applies [`predict_forest`] to a panel record.
pub fn predict_forest_record(forest: &PoissonForest, record: &TownYearRecord) -> f64 {
    let features: Vec<f64> = forest
        .feature_names
        .iter()
        .map(|name| covariate_value(record, name).expect("panel covariate"))
        .collect();
    predict_forest(forest, &features, record.exposure as f64)
}

/// Serializes a forest in the shared model-text format.
pub fn forest_to_text(forest: &PoissonForest) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "kind forest").unwrap();
    writeln!(s, "features {}", forest.feature_names.join(",")).unwrap();
    match forest.options.training_years {
        Some((lo, hi)) => writeln!(s, "train_years {lo} {hi}").unwrap(),
        None => writeln!(s, "train_years none").unwrap(),
    }
    writeln!(s, "n {}", forest.n).unwrap();
    writeln!(s, "trees {}", forest.options.trees).unwrap();
    writeln!(s, "mtry {}", forest.options.mtry).unwrap();
    writeln!(s, "min_leaf {}", forest.options.min_leaf).unwrap();
    writeln!(s, "max_leaves {}", forest.options.max_leaves).unwrap();
    writeln!(s, "bootstrap {}", forest.options.bootstrap).unwrap();
    writeln!(s, "seed {}", forest.options.seed).unwrap();
    match forest.oob_deviance {
        Some(d) => writeln!(s, "oob_deviance {d}").unwrap(),
        None => writeln!(s, "oob_deviance none").unwrap(),
    }
    for (t, tree) in forest.trees.iter().enumerate() {
        writeln!(s, "tree {t} nodes {}", tree.nodes.len()).unwrap();
        for (i, node) in tree.nodes.iter().enumerate() {
            match node {
                Node::Leaf { rate, rows } => writeln!(s, "node {i} leaf {rate} {rows}").unwrap(),
                Node::Split { feature, threshold, left, right } => {
                    writeln!(s, "node {i} split {feature} {threshold} {left} {right}").unwrap()
                }
            }
        }
    }
    writeln!(s, "end").unwrap();
    s
}

/// Parses text written by [`forest_to_text`].
pub fn forest_from_text(text: &str) -> Result<PoissonForest, ForestError> {
    let fail = |line: usize, message: String| ForestError::ModelText {
        message: format!("line {line}: {message}"),
    };
    let mut r = Reader::new(text);
    r.expect(HEADER)?;
    let (no, kind) = r.key("kind")?;
    if kind != "forest" {
        return Err(fail(no, format!("expected kind forest, found {kind:?}")));
    }
    let (_, feats) = r.key("features")?;
    let feature_names: Vec<String> = feats.split(',').map(str::to_string).collect();
    let (no, years) = r.key("train_years")?;
    let training_years = if years == "none" {
        None
    } else {
        let mut it = years.split_whitespace();
        let lo = it
            .next()
            .and_then(|v| v.parse::<i32>().ok())
            .ok_or_else(|| fail(no, "bad train_years".to_string()))?;
        let hi = it
            .next()
            .and_then(|v| v.parse::<i32>().ok())
            .ok_or_else(|| fail(no, "bad train_years".to_string()))?;
        Some((lo, hi))
    };
    let (no, n) = r.key("n")?;
    let n = parse_usize(n, no)?;
    let (no, trees_n) = r.key("trees")?;
    let trees_n = parse_usize(trees_n, no)?;
    let (no, mtry) = r.key("mtry")?;
    let mtry = parse_usize(mtry, no)?;
    let (no, min_leaf) = r.key("min_leaf")?;
    let min_leaf = parse_usize(min_leaf, no)?;
    let (no, max_leaves) = r.key("max_leaves")?;
    let max_leaves = parse_usize(max_leaves, no)?;
    let (no, bootstrap) = r.key("bootstrap")?;
    let bootstrap = match bootstrap {
        "true" => true,
        "false" => false,
        other => return Err(fail(no, format!("bad bootstrap flag {other:?}"))),
    };
    let (no, seed) = r.key("seed")?;
    let seed = seed
        .parse::<u64>()
        .map_err(|_| fail(no, format!("bad seed {seed:?}")))?;
    let (no, oob) = r.key("oob_deviance")?;
    let oob_deviance = if oob == "none" { None } else { Some(parse_f64(oob, no)?) };
    let mut trees = Vec::with_capacity(trees_n);
    for t in 0..trees_n {
        let (no, line) = r.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("tree") || parts.next() != Some(t.to_string().as_str()) {
            return Err(fail(no, format!("expected tree {t} header, found {line:?}")));
        }
        if parts.next() != Some("nodes") {
            return Err(fail(no, format!("malformed tree header {line:?}")));
        }
        let count = parts
            .next()
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| fail(no, "bad node count".to_string()))?;
        let mut nodes = Vec::with_capacity(count);
        for i in 0..count {
            let (no, line) = r.next_line()?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some("node") || parts.next() != Some(i.to_string().as_str()) {
                return Err(fail(no, format!("expected node {i}, found {line:?}")));
            }
            match parts.next() {
                Some("leaf") => {
                    let rate = parts
                        .next()
                        .ok_or_else(|| fail(no, "leaf missing rate".to_string()))?;
                    let rows = parts
                        .next()
                        .and_then(|v| v.parse::<usize>().ok())
                        .ok_or_else(|| fail(no, "leaf missing row count".to_string()))?;
                    nodes.push(Node::Leaf { rate: parse_f64(rate, no)?, rows });
                }
                Some("split") => {
                    let feature = parts
                        .next()
                        .and_then(|v| v.parse::<usize>().ok())
                        .ok_or_else(|| fail(no, "split missing feature".to_string()))?;
                    if feature >= feature_names.len() {
                        return Err(fail(no, format!("feature index {feature} out of range")));
                    }
                    let threshold = parts
                        .next()
                        .ok_or_else(|| fail(no, "split missing threshold".to_string()))?;
                    let threshold = parse_f64(threshold, no)?;
                    let left = parts
                        .next()
                        .and_then(|v| v.parse::<usize>().ok())
                        .ok_or_else(|| fail(no, "split missing left child".to_string()))?;
                    let right = parts
                        .next()
                        .and_then(|v| v.parse::<usize>().ok())
                        .ok_or_else(|| fail(no, "split missing right child".to_string()))?;
                    if left >= count || right >= count || left <= i || right <= i {
                        return Err(fail(no, format!("bad child indices in node {i}")));
                    }
                    nodes.push(Node::Split { feature, threshold, left, right });
                }
                other => return Err(fail(no, format!("bad node tag {other:?}"))),
            }
        }
        trees.push(Tree { nodes });
    }
    r.expect("end")?;
    Ok(PoissonForest {
        feature_names,
        trees,
        options: ForestOptions {
            trees: trees_n,
            mtry,
            min_leaf,
            max_leaves,
            bootstrap,
            seed,
            training_years,
        },
        n,
        oob_deviance,
    })
}
