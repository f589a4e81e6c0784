//! CART regression trees with exhaustive midpoint split search on squared error.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 3, min_samples_leaf: 1, min_samples_split: 2 }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// A fitted tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn constant(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }] }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Rows with `x[feature] <= threshold` go left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Largest feature index referenced by a split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Feature matrix with per-feature sort orders computed once.
///
/// Boosting fits many trees on the same rows, so the sort is shared across
/// every tree of a run.
#[derive(Clone, Debug)]
pub struct SortedFeatures {
    n: usize,
    d: usize,
    /// column-major copy of X
    columns: Vec<f64>,
    order: Vec<Vec<u32>>,
}

impl SortedFeatures {
    pub fn new(x: ArrayView2<f64>) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyInput(format!("feature matrix is {n}x{d}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature matrix has non-finite values".into()));
        }
        let columns: Vec<f64> = x.t().iter().copied().collect();
        let order = (0..d)
            .map(|f| {
                let col = &columns[f * n..(f + 1) * n];
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        Ok(Self { n, d, columns, order })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    fn value(&self, feature: usize, row: u32) -> f64 {
        self.columns[feature * self.n + row as usize]
    }

    /// Grows a tree greedily on `targets`.
    pub fn fit(&self, targets: &[f64], params: &TreeParams) -> Result<RegressionTree> {
        params.validate()?;
        if targets.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: targets.len() });
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("tree targets have non-finite values".into()));
        }
        let mut builder = Builder {
            data: self,
            targets,
            params,
            nodes: Vec::new(),
            goes_left: vec![false; self.n],
        };
        builder.grow(self.order.clone(), 0);
        Ok(RegressionTree { nodes: builder.nodes })
    }
}

/// Fits a single tree on `x` (n×d) and `targets`.
pub fn fit_tree(x: ArrayView2<f64>, targets: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    SortedFeatures::new(x)?.fit(targets, params)
}

struct Builder<'a> {
    data: &'a SortedFeatures,
    targets: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    /// `order[f]` lists this node's rows sorted by feature f. Returns the node index.
    fn grow(&mut self, order: Vec<Vec<u32>>, depth: usize) -> usize {
        let rows = &order[0];
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.targets[r as usize]).sum();
        let mean = sum / n as f64;
        let sse: f64 = rows
            .iter()
            .map(|&r| {
                let e = self.targets[r as usize] - mean;
                e * e
            })
            .sum();

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });

        if depth >= self.params.max_depth
            || n < self.params.min_samples_split
            || n < 2 * self.params.min_samples_leaf
            || !(sse > 0.0)
        {
            return id;
        }
        let Some(best) = self.best_split(&order, sum) else {
            return id;
        };
        if !(best.gain > 1e-12 * sse) {
            return id;
        }

        for &r in rows {
            self.goes_left[r as usize] = self.data.value(best.feature, r) <= best.threshold;
        }
        let (left, right): (Vec<Vec<u32>>, Vec<Vec<u32>>) = order
            .into_iter()
            .map(|list| list.into_iter().partition(|&r| self.goes_left[r as usize]))
            .unzip();

        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] =
            Node::Split { feature: best.feature, threshold: best.threshold, left: l, right: r };
        id
    }

    /// SSE reduction is sl²/nl + sr²/nr − s²/n; the first strict maximum wins,
    /// so ties go to the lowest feature and then the lowest threshold.
    fn best_split(&self, order: &[Vec<u32>], total: f64) -> Option<Candidate> {
        let n = order[0].len();
        let min_leaf = self.params.min_samples_leaf;
        let base = total * total / n as f64;
        let mut best: Option<Candidate> = None;
        for (f, rows) in order.iter().enumerate() {
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.targets[rows[k] as usize];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let lo = self.data.value(f, rows[k]);
                let hi = self.data.value(f, rows[k + 1]);
                if !(lo < hi) {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - base;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + 0.5 * (hi - lo);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Candidate { feature: f, threshold, gain });
                }
            }
        }
        best
    }
}
