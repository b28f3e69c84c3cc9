//! Binary regression / classification trees (CART) with impurity-decrease
//! bookkeeping for variable importance.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Impurity {
    /// Within-node variance (regression).
    Variance,
    /// Gini index for a 0/1 outcome, `2 p (1 - p)`.
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub impurity: Impurity,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried at each split; `None` tries all of them.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { values: Vec<f64>, mean: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct Builder<'a, R: Rng + ?Sized> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    params: TreeParams,
    total: f64,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    rng: &'a mut R,
}

fn sse(sum: f64, sum_sq: f64, count: f64) -> f64 {
    (sum_sq - sum * sum / count).max(0.0)
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn scale(&self) -> f64 {
        match self.params.impurity {
            Impurity::Variance => 1.0,
            Impurity::Gini => 2.0,
        }
    }

    fn leaf(&mut self, rows: &[usize]) -> usize {
        let values: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        self.nodes.push(Node::Leaf { values, mean });
        self.nodes.len() - 1
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let p = self.x.ncols();
        let features: Vec<usize> = match self.params.mtry {
            Some(m) if m < p => sample_indices(self.rng, p, m.max(1)).into_vec(),
            _ => (0..p).collect(),
        };
        let m = rows.len() as f64;
        let total_sum: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let total_sq: f64 = rows.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let parent = sse(total_sum, total_sq, m);
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
        for &f in &features {
            pairs.clear();
            let col = self.x.column(f);
            pairs.extend(rows.iter().map(|&i| (col[i], self.y[i])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let (mut ls, mut lsq) = (0.0, 0.0);
            for k in 0..pairs.len() - 1 {
                ls += pairs[k].1;
                lsq += pairs[k].1 * pairs[k].1;
                let nl = k + 1;
                let nr = pairs.len() - nl;
                if nl < min_leaf || nr < min_leaf || pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let child = sse(ls, lsq, nl as f64) + sse(total_sum - ls, total_sq - lsq, nr as f64);
                let gain = parent - child;
                if gain > 1e-12 && best.is_none_or(|b| gain > b.2) {
                    best = Some((f, 0.5 * (pairs[k].0 + pairs[k + 1].0), gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let min_leaf = self.params.min_leaf.max(1);
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || rows.len() < 2 * min_leaf {
            return self.leaf(&rows);
        }
        let Some((feature, threshold, gain)) = self.best_split(&rows) else {
            return self.leaf(&rows);
        };
        self.importance[feature] += self.scale() * gain / self.total;
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[(i, feature)] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Split { feature, threshold, left: 0, right: 0 });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

impl Tree {
    /// Fit on the given (possibly repeated) training rows. Returns the tree
    /// and the per-feature impurity decrease, normalized by the number of
    /// training rows.
    pub fn fit<R: Rng + ?Sized>(
        x: &DMatrix<f64>,
        y: &[f64],
        rows: Vec<usize>,
        params: TreeParams,
        rng: &mut R,
    ) -> (Tree, Vec<f64>) {
        let total = rows.len().max(1) as f64;
        let mut b = Builder {
            x,
            y,
            params,
            total,
            nodes: Vec::new(),
            importance: vec![0.0; x.ncols()],
            rng,
        };
        let root = b.grow(rows, 0);
        debug_assert_eq!(root, 0);
        (Tree { nodes: b.nodes }, b.importance)
    }

    fn leaf_of(&self, row: &[f64]) -> &Node {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    id = if row[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.leaf_of(row) {
            Node::Leaf { mean, .. } => *mean,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Training targets that landed in the same leaf as `row`.
    pub fn leaf_values(&self, row: &[f64]) -> &[f64] {
        match self.leaf_of(row) {
            Node::Leaf { values, .. } => values,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(min_leaf: usize) -> TreeParams {
        TreeParams { impurity: Impurity::Variance, max_depth: None, min_leaf, mtry: None }
    }

    #[test]
    fn splits_a_step_function() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { i as f64 } else { ((i * 7) % 5) as f64 });
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 5.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (tree, imp) = Tree::fit(&x, &y, (0..20).collect(), params(2), &mut rng);
        assert_eq!(tree.predict(&[3.0, 0.0]), 0.0);
        assert_eq!(tree.predict(&[15.0, 0.0]), 5.0);
        assert!(imp[0] > 0.0);
        assert_eq!(imp[1], 0.0);
        // Total decrease equals the root variance.
        assert!((imp[0] - 6.25).abs() < 1e-12);
    }

    #[test]
    fn constant_outcome_makes_single_leaf() {
        let x = DMatrix::from_fn(30, 3, |i, j| (i * (j + 1)) as f64);
        let y = vec![1.0; 30];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (tree, imp) = Tree::fit(&x, &y, (0..30).collect(), params(1), &mut rng);
        assert_eq!(tree.leaf_count(), 1);
        assert!(imp.iter().all(|v| *v == 0.0));
        assert_eq!(tree.leaf_values(&[0.0, 0.0, 0.0]).len(), 30);
    }

    #[test]
    fn respects_min_leaf_and_depth() {
        let x = DMatrix::from_fn(40, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = TreeParams { max_depth: Some(2), min_leaf: 10, ..params(10) };
        let (tree, _) = Tree::fit(&x, &y, (0..40).collect(), p, &mut rng);
        assert!(tree.leaf_count() <= 4);
        for i in 0..40 {
            assert!(tree.leaf_values(&[i as f64]).len() >= 10);
        }
    }
}
