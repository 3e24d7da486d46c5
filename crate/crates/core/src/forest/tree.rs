use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::check_len;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Persisted node arrays; `feature[i] < 0` marks a leaf whose prediction is
/// `value[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeRepr {
    n_features: usize,
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<usize>,
    right: Vec<usize>,
    value: Vec<f64>,
}

/// Binary CART regression tree. Samples with `x[feature] < threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeRepr", try_from = "TreeRepr")]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl From<RegressionTree> for TreeRepr {
    fn from(t: RegressionTree) -> Self {
        let n = t.nodes.len();
        let mut r = TreeRepr {
            n_features: t.n_features,
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            value: Vec::with_capacity(n),
        };
        for node in t.nodes {
            let (f, th, l, rt, v) = match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => (feature as i64, threshold, left, right, 0.0),
                Node::Leaf { value } => (-1, 0.0, 0, 0, value),
            };
            r.feature.push(f);
            r.threshold.push(th);
            r.left.push(l);
            r.right.push(rt);
            r.value.push(v);
        }
        r
    }
}

impl TryFrom<TreeRepr> for RegressionTree {
    type Error = Error;

    fn try_from(r: TreeRepr) -> Result<Self> {
        let n = r.feature.len();
        if n == 0 {
            return Err(Error::invalid("tree has no nodes"));
        }
        for len in [r.threshold.len(), r.left.len(), r.right.len(), r.value.len()] {
            check_len(n, len)?;
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let node = if r.feature[i] < 0 {
                if !r.value[i].is_finite() {
                    return Err(Error::invalid("non-finite leaf value"));
                }
                Node::Leaf { value: r.value[i] }
            } else {
                let f = r.feature[i] as usize;
                let (l, rt) = (r.left[i], r.right[i]);
                // Children after parents keeps every path finite.
                if f >= r.n_features || l <= i || rt <= i || l >= n || rt >= n {
                    return Err(Error::invalid(format!("malformed split node {i}")));
                }
                if r.threshold[i].is_nan() {
                    return Err(Error::invalid("NaN split threshold"));
                }
                Node::Split {
                    feature: f,
                    threshold: r.threshold[i],
                    left: l,
                    right: rt,
                }
            };
            nodes.push(node);
        }
        Ok(RegressionTree {
            nodes,
            n_features: r.n_features,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub max_splits: usize,
    /// Features drawn per split; `None` means `ceil(p / 3)`.
    pub features_per_split: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_splits: 710,
            features_per_split: None,
            min_leaf: 5,
        }
    }
}

impl TreeConfig {
    pub fn features_for(&self, p: usize) -> usize {
        self.features_per_split.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_features, x.len())?;
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return Ok(value),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn split_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len() - self.split_count()
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    sse: f64,
}

fn sse_of(y: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let s: f64 = idx.iter().map(|&i| y[i]).sum();
    let s2: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    (s2 - s * s / n).max(0.0)
}

fn best_split_on(
    x: &[Vec<f64>],
    y: &[f64],
    idx: &mut [usize],
    feature: usize,
    min_leaf: usize,
) -> Option<SplitChoice> {
    idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let total2: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let mut left = 0.0;
    let mut best: Option<SplitChoice> = None;
    for k in 1..n {
        left += y[idx[k - 1]];
        let (a, b) = (x[idx[k - 1]][feature], x[idx[k]][feature]);
        if k < min_leaf || n - k < min_leaf || a == b {
            continue;
        }
        let nl = k as f64;
        let nr = (n - k) as f64;
        let right = total - left;
        let sse = total2 - left * left / nl - right * right / nr;
        if best.as_ref().is_none_or(|c| sse < c.sse) {
            let mut threshold = 0.5 * (a + b);
            if threshold <= a {
                threshold = b;
            }
            best = Some(SplitChoice {
                feature,
                threshold,
                sse,
            });
        }
    }
    best
}

fn leaf(y: &[f64], idx: &[usize]) -> Node {
    Node::Leaf {
        value: idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64,
    }
}

/// Grows a tree breadth-first by greedy variance reduction.
///
/// `rows` indexes into `x`/`y` and may contain repeats (bootstrap samples).
/// At each node a random subset of features is searched; if none of them
/// admits a split, the remaining features are tried before giving up.
pub fn tree_fit(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    cfg: &TreeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RegressionTree> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len(x.len(), y.len())?;
    let p = x[rows[0]].len();
    let m = cfg.features_for(p);
    let min_leaf = cfg.min_leaf.max(1);
    let mut nodes = vec![leaf(y, rows)];
    let mut queue: VecDeque<(usize, Vec<usize>)> = VecDeque::from([(0, rows.to_vec())]);
    let mut splits = 0;
    let mut features: Vec<usize> = (0..p).collect();

    while let Some((node, mut idx)) = queue.pop_front() {
        if splits >= cfg.max_splits {
            break;
        }
        let parent = sse_of(y, &idx);
        if idx.len() < 2 * min_leaf || parent <= 0.0 {
            continue;
        }
        features.shuffle(rng);
        let mut best: Option<SplitChoice> = None;
        for (pos, &f) in features.iter().enumerate() {
            if pos == m && best.is_some() {
                break;
            }
            if let Some(c) = best_split_on(x, y, &mut idx, f, min_leaf) {
                if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                    best = Some(c);
                }
            }
        }
        let Some(choice) = best.filter(|c| c.sse < parent - 1e-12 * parent.max(1.0)) else {
            continue;
        };
        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| x[i][choice.feature] < choice.threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(leaf(y, &l_idx));
        nodes.push(leaf(y, &r_idx));
        nodes[node] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left: l,
            right: r,
        };
        splits += 1;
        queue.push_back((l, l_idx));
        queue.push_back((r, r_idx));
    }
    Ok(RegressionTree {
        nodes,
        n_features: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn fit(x: &[Vec<f64>], y: &[f64], cfg: &TreeConfig) -> RegressionTree {
        let rows: Vec<usize> = (0..y.len()).collect();
        tree_fit(x, y, &rows, cfg, &mut rng::indexed(1, 0)).unwrap()
    }

    #[test]
    fn constant_targets_give_one_leaf() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let t = fit(&x, &[4.0; 20], &TreeConfig::default());
        assert_eq!(t.nodes, vec![Node::Leaf { value: 4.0 }]);
    }

    #[test]
    fn step_function_splits_once() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 10.0 }).collect();
        let cfg = TreeConfig {
            min_leaf: 1,
            ..TreeConfig::default()
        };
        let t = fit(&x, &y, &cfg);
        assert_eq!(t.split_count(), 1);
        let Node::Split { threshold, .. } = t.nodes[0] else { panic!() };
        assert!(threshold > 4.0 && threshold <= 5.0);
        assert!(x.iter().zip(&y).all(|(xi, yi)| t.predict(xi).unwrap() == *yi));
    }

    #[test]
    fn unlimited_tree_memorizes() {
        let mut r = rng::substream(5, "tree");
        let x: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)])
            .collect();
        let y: Vec<f64> = (0..20).map(|_| r.random_range(-5.0..5.0)).collect();
        let cfg = TreeConfig {
            max_splits: usize::MAX,
            features_per_split: None,
            min_leaf: 1,
        };
        let t = fit(&x, &y, &cfg);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((t.predict(xi).unwrap() - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn respects_max_splits_and_min_leaf() {
        let mut r = rng::substream(6, "tree");
        let x: Vec<Vec<f64>> = (0..300).map(|_| vec![r.random_range(0.0..10.0)]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0].sin() + r.random_range(-0.1..0.1)).collect();
        let cfg = TreeConfig {
            max_splits: 7,
            features_per_split: None,
            min_leaf: 5,
        };
        let t = fit(&x, &y, &cfg);
        assert!(t.split_count() <= 7);
        assert_eq!(t.leaf_count(), t.split_count() + 1);
    }

    #[test]
    fn leaf_mean_is_sse_optimal() {
        let mut r = rng::substream(7, "tree");
        let x: Vec<Vec<f64>> = (0..200).map(|_| vec![r.random_range(0.0..10.0)]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0] * v[0] + r.random_range(-3.0..3.0)).collect();
        let cfg = TreeConfig {
            max_splits: 10,
            ..TreeConfig::default()
        };
        let t = fit(&x, &y, &cfg);
        let mut members: std::collections::HashMap<u64, Vec<f64>> = Default::default();
        for (xi, &yi) in x.iter().zip(&y) {
            members.entry(t.predict(xi).unwrap().to_bits()).or_default().push(yi);
        }
        for (bits, ys) in members {
            let c = f64::from_bits(bits);
            let sse = |v: f64| ys.iter().map(|y| (y - v).powi(2)).sum::<f64>();
            assert!(sse(c) <= sse(c + 1e-3) && sse(c) <= sse(c - 1e-3));
        }
    }

    #[test]
    fn json_rejects_cycles() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let t = fit(&x, &y, &TreeConfig { min_leaf: 1, ..TreeConfig::default() });
        let text = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<RegressionTree>(&text).unwrap(), t);
        let bad = r#"{"n_features":1,"feature":[0],"threshold":[1.0],"left":[0],"right":[0],"value":[0.0]}"#;
        assert!(serde_json::from_str::<RegressionTree>(bad).is_err());
    }
}
