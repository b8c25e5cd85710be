//! Random-forest classifier for the per-step tearing-mode probability.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::pipeline::ShotSequence;
use crate::rng;

/// Anything that maps `(s, a)` to a tearing probability.
pub trait TmProbability: Send + Sync {
    fn tm_probability(&self, s: &[f64], a: &[f64]) -> Result<f64>;
}

/// Same probability everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantProbability(pub f64);

impl TmProbability for ConstantProbability {
    fn tm_probability(&self, _: &[f64], _: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: 8, min_samples_split: 2, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut n = self;
        loop {
            match n {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    n = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub seed: u64,
    pub root: Node,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub features: Vec<String>,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
    /// True when the training labels were all one class.
    pub degenerate: bool,
}

/// Labelled feature rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl Samples {
    /// Concatenated `(s_t, a_t)` rows with each step's label.
    pub fn from_sequences(seqs: &[ShotSequence]) -> Self {
        let mut out = Samples::default();
        for s in seqs {
            for t in 0..s.len() {
                let mut row = s.states[t].clone();
                row.extend_from_slice(&s.actions[t]);
                out.x.push(row);
                out.y.push(s.tm[t]);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

pub fn train_forest(data: &Samples, features: Vec<String>, cfg: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("no classifier samples".into()));
    }
    check_len("classifier labels", data.x.len(), data.y.len())?;
    let d = features.len();
    if let Some(bad) = data.x.iter().find(|r| r.len() != d) {
        return Err(Error::schema(format!("classifier row has {} features, schema has {d}", bad.len())));
    }
    if cfg.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let positives = data.y.iter().filter(|&&v| v != 0).count();
    if positives == 0 || positives == data.len() {
        let value = if positives == 0 { 0.0 } else { 1.0 };
        tracing::warn!(value, "classifier data has a single class, using a constant model");
        return Ok(ForestModel {
            features,
            config: cfg.clone(),
            trees: vec![Tree { seed, root: Node::Leaf { value } }],
            degenerate: true,
        });
    }
    let mtry = cfg.max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let tseed = rng::derive_seed(seed, i as u64);
            let mut r = rng::from_seed(tseed);
            let n = data.len();
            let mut idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let root = grow(data, &mut idx, 0, cfg, mtry, &mut r);
            Tree { seed: tseed, root }
        })
        .collect();
    Ok(ForestModel { features, config: cfg.clone(), trees, degenerate: false })
}

fn leaf(data: &Samples, idx: &[usize]) -> Node {
    let pos = idx.iter().filter(|&&i| data.y[i] != 0).count();
    Node::Leaf { value: pos as f64 / idx.len().max(1) as f64 }
}

fn grow<R: Rng>(data: &Samples, idx: &mut [usize], depth: usize, cfg: &ForestConfig, mtry: usize, r: &mut R) -> Node {
    let pos = idx.iter().filter(|&&i| data.y[i] != 0).count();
    if depth >= cfg.max_depth || idx.len() < cfg.min_samples_split.max(2) || pos == 0 || pos == idx.len() {
        return leaf(data, idx);
    }
    let d = data.x[0].len();
    let mut best: Option<(f64, usize, f64)> = None;
    for f in sample(r, d, mtry).into_iter() {
        if let Some((score, thr)) = best_split(data, idx, f) {
            if best.is_none_or(|(b, _, _)| score < b) {
                best = Some((score, f, thr));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return leaf(data, idx);
    };
    let mid = partition(idx, |i| data.x[i][feature] <= threshold);
    let (l, rr) = idx.split_at_mut(mid);
    Node::Split {
        feature,
        threshold,
        left: Box::new(grow(data, l, depth + 1, cfg, mtry, r)),
        right: Box::new(grow(data, rr, depth + 1, cfg, mtry, r)),
    }
}

/// Weighted child Gini impurity of the best threshold on feature `f`.
fn best_split(data: &Samples, idx: &[usize], f: usize) -> Option<(f64, f64)> {
    let mut v: Vec<(f64, u8)> = idx.iter().map(|&i| (data.x[i][f], data.y[i])).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = v.len() as f64;
    let total_pos = v.iter().filter(|p| p.1 != 0).count() as f64;
    let gini = |pos: f64, cnt: f64| if cnt == 0.0 { 0.0 } else { 2.0 * pos / cnt * (1.0 - pos / cnt) };
    let mut left_pos = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..v.len() - 1 {
        left_pos += (v[k].1 != 0) as u8 as f64;
        if v[k].0 == v[k + 1].0 {
            continue;
        }
        let nl = (k + 1) as f64;
        let nr = n - nl;
        let score = (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / n;
        if best.is_none_or(|(b, _)| score < b) {
            let thr = 0.5 * (v[k].0 + v[k + 1].0);
            // The midpoint can round up to the right value for adjacent floats.
            let thr = if thr < v[k + 1].0 { thr } else { v[k].0 };
            best = Some((score, thr));
        }
    }
    best
}

fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut k = 0;
    for j in 0..idx.len() {
        if pred(idx[j]) {
            idx.swap(k, j);
            k += 1;
        }
    }
    k
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        check_len("classifier features", x.len(), self.features.len())?;
        Ok(self.trees.iter().map(|t| t.root.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        check_len("classifier features", s.len() + a.len(), self.features.len())?;
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        self.predict_row(&x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

impl TmProbability for ForestModel {
    fn tm_probability(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        self.predict_prob(s, a)
    }
}

/// Mean squared error of probabilities against 0/1 labels.
pub fn brier_score(probs: &[f64], labels: &[u8]) -> f64 {
    probs.iter().zip(labels).map(|(p, &y)| (p - y as f64).powi(2)).sum::<f64>() / probs.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_feature(xs: &[f64], label: impl Fn(f64) -> u8) -> Samples {
        Samples { x: xs.iter().map(|&x| vec![x]).collect(), y: xs.iter().map(|&x| label(x)).collect() }
    }

    #[test]
    fn all_negative_gives_constant_zero() {
        let d = one_feature(&[0.1, 0.2, 0.3], |_| 0);
        let m = train_forest(&d, vec!["x".into()], &ForestConfig::default(), 1).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.predict_row(&[5.0]).unwrap(), 0.0);
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 100.0 - 1.0 + 0.003).collect();
        let d = one_feature(&xs, |x| (x > 0.0) as u8);
        let m = train_forest(&d, vec!["x".into()], &ForestConfig::default(), 7).unwrap();
        for (x, y) in d.x.iter().zip(&d.y) {
            let p = m.predict_row(x).unwrap();
            assert_eq!((p >= 0.5) as u8, *y, "x = {}", x[0]);
        }
    }

    #[test]
    fn depth_zero_tree_returns_base_rate() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let d = one_feature(&xs, |x| (x < 3.0) as u8);
        let cfg = ForestConfig { n_trees: 1, max_depth: 0, ..ForestConfig::default() };
        let m = train_forest(&d, vec!["x".into()], &cfg, 0).unwrap();
        // One bootstrap sample; its positive fraction is the leaf.
        let Node::Leaf { value } = m.trees[0].root else { panic!("expected a leaf") };
        assert_eq!(m.predict_row(&[100.0]).unwrap(), value);
    }

    #[test]
    fn seeded_training_is_reproducible_and_round_trips() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = Samples {
            x: xs.iter().map(|&x| vec![x, x * x]).collect(),
            y: xs.iter().map(|&x| (x > 0.2) as u8).collect(),
        };
        let f = vec!["a".to_string(), "b".to_string()];
        let cfg = ForestConfig { n_trees: 10, ..ForestConfig::default() };
        let a = train_forest(&d, f.clone(), &cfg, 3).unwrap();
        let b = train_forest(&d, f, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.trees.iter().all(|t| t.root.depth() <= 8));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        a.save(&p).unwrap();
        assert_eq!(ForestModel::load(&p).unwrap(), a);
        assert!(a.predict_row(&[0.0]).is_err());
    }
}
