use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Growth limits for a regression tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

/// Preorder node; the left child of a split immediately follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    #[inline]
    pub fn predict(&self, context: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    right,
                } => {
                    i = if context[feature] <= threshold { i + 1 } else { right };
                }
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { right, .. } => 1 + walk(nodes, i + 1).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Rows sharing one context, summarized by weighted Welford statistics.
/// Splits never separate identical contexts, so growing on groups gives the
/// same tree as growing on the raw rows.
#[derive(Debug, Clone)]
struct Group {
    x: Vec<f64>,
    weight: f64,
    mean: f64,
    m2: f64,
    count: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct TreeAccumulator {
    groups: BTreeMap<Vec<u64>, Group>,
}

fn key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 compare equal as features, so they share a key.
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl TreeAccumulator {
    pub fn push(&mut self, x: &[f64], y: f64, w: f64) {
        let g = self.groups.entry(key(x)).or_insert_with(|| Group {
            x: x.to_vec(),
            weight: 0.0,
            mean: 0.0,
            m2: 0.0,
            count: 0,
        });
        let total = g.weight + w;
        let delta = y - g.mean;
        let r = w / total;
        g.mean += delta * r;
        g.m2 += w * delta * (y - g.mean);
        g.weight = total;
        g.count += 1;
    }

    pub fn fit(&self, cfg: &TreeConfig) -> Option<RegressionTree> {
        if self.groups.is_empty() {
            return None;
        }
        let groups: Vec<&Group> = self.groups.values().collect();
        let dim = groups[0].x.len();
        let mut builder = Builder {
            groups: &groups,
            dim,
            cfg,
            nodes: Vec::new(),
        };
        let mut idx: Vec<usize> = (0..groups.len()).collect();
        builder.build(&mut idx, 0);
        Some(RegressionTree { nodes: builder.nodes })
    }
}

struct Builder<'a> {
    groups: &'a [&'a Group],
    dim: usize,
    cfg: &'a TreeConfig,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn build(&mut self, idx: &mut [usize], depth: usize) {
        let (mut w, mut s, mut within, mut count) = (0.0, 0.0, 0.0, 0usize);
        for &i in idx.iter() {
            let g = self.groups[i];
            w += g.weight;
            s += g.weight * g.mean;
            within += g.m2;
            count += g.count;
        }
        let mean = s / w;
        let between: f64 = idx
            .iter()
            .map(|&i| {
                let g = self.groups[i];
                g.weight * (g.mean - mean) * (g.mean - mean)
            })
            .sum();
        let variance = (within + between) / w;
        let pure = variance <= f64::EPSILON * mean.abs().max(1.0).powi(2);
        let depth_capped = self.cfg.max_depth.is_some_and(|d| depth >= d);
        let leaf = TreeNode::Leaf {
            value: mean,
            samples: count,
        };
        if pure || depth_capped || count < self.cfg.min_samples_split || idx.len() < 2 {
            self.nodes.push(leaf);
            return;
        }
        let Some(best) = self.best_split(idx, w, s) else {
            self.nodes.push(leaf);
            return;
        };
        let f = best.feature;
        let groups = self.groups;
        idx.sort_by(|&a, &b| {
            let la = groups[a].x[f] <= best.threshold;
            let lb = groups[b].x[f] <= best.threshold;
            lb.cmp(&la).then(a.cmp(&b))
        });
        let n_left = idx.iter().take_while(|&&i| groups[i].x[f] <= best.threshold).count();
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature: f,
            threshold: best.threshold,
            right: 0,
        });
        let (left, right) = idx.split_at_mut(n_left);
        self.build(left, depth + 1);
        let right_at = self.nodes.len();
        if let TreeNode::Split { right, .. } = &mut self.nodes[at] {
            *right = right_at;
        }
        self.build(right, depth + 1);
    }

    /// Maximizes `S_L²/W_L + S_R²/W_R`, equivalent to minimizing the weighted
    /// squared error of the children. Ties keep the lowest feature, then the
    /// lowest threshold.
    fn best_split(&self, idx: &[usize], w: f64, s: f64) -> Option<BestSplit> {
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for f in 0..self.dim {
            let groups = self.groups;
            order.sort_by(|&a, &b| groups[a].x[f].total_cmp(&groups[b].x[f]).then(a.cmp(&b)));
            let (mut wl, mut sl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let g = groups[order[k]];
                wl += g.weight;
                sl += g.weight * g.mean;
                let lo = g.x[f];
                let hi = groups[order[k + 1]].x[f];
                if lo >= hi {
                    continue;
                }
                let wr = w - wl;
                let sr = s - sl;
                let score = sl * sl / wl + sr * sr / wr;
                let better = match &best {
                    None => true,
                    Some(b) => score > b.score + 1e-12 * b.score.abs(),
                };
                if better {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi || !threshold.is_finite() {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}
