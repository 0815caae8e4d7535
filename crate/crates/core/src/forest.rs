//! Random forests: classification/probability/regression trees with bagging,
//! Gini or variance splitting, out-of-bag error, permutation importance, and
//! propensity-score estimation.
//!
//! Split search is exact over the sorted unique values of each candidate
//! covariate; ties in split quality resolve to the lowest covariate index and
//! lowest threshold, so a fitted forest is a pure function of
//! `(data, params, seed)`.

use crate::cohort::{Arm, Cohort};
use crate::error::{Error, Result};
use crate::float;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, derive_seed_indexed, Rng};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Whether a forest predicts class probabilities or real values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestMode {
    Classification,
    Regression,
}

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ForestParams {
    pub n_trees: usize,
    /// Covariates tried per split; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Bootstrap sample size as a fraction of n (drawn with replacement).
    pub bootstrap_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            bootstrap_fraction: 1.0,
        }
    }
}

impl ForestParams {
    fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p)
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Argument("n_trees must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Argument("min_leaf must be >= 1".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > p {
                return Err(Error::Argument(format!("mtry = {m} out of range 1..={p}")));
            }
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return Err(Error::Argument("bootstrap_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One tree node: an internal split or a leaf payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    LeafCounts {
        counts: Vec<u32>,
    },
    LeafMean {
        mean: f64,
        n: u32,
    },
}

/// A fitted decision tree (node 0 is the root).
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Rebuilds a tree from deserialized nodes (validated by
    /// [`Forest::from_parts`]).
    pub fn from_nodes(nodes: Vec<Node>) -> Tree {
        Tree { nodes }
    }

    fn leaf_for<F: Fn(usize) -> f64>(&self, feature_value: F) -> &Node {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if feature_value(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                leaf => return leaf,
            }
        }
    }

    /// Hard class prediction (argmax of leaf counts, ties to the lowest class).
    fn predict_class<F: Fn(usize) -> f64>(&self, feature_value: F) -> u32 {
        match self.leaf_for(feature_value) {
            Node::LeafCounts { counts } => {
                let mut best = 0usize;
                for (c, &cnt) in counts.iter().enumerate() {
                    if cnt > counts[best] {
                        best = c;
                    }
                }
                best as u32
            }
            _ => unreachable!("classification tree with regression leaf"),
        }
    }

    fn predict_mean<F: Fn(usize) -> f64>(&self, feature_value: F) -> f64 {
        match self.leaf_for(feature_value) {
            Node::LeafMean { mean, .. } => *mean,
            _ => unreachable!("regression tree with classification leaf"),
        }
    }

    /// Leaf class proportions.
    fn predict_proba_into<F: Fn(usize) -> f64>(&self, feature_value: F, out: &mut [f64]) {
        match self.leaf_for(feature_value) {
            Node::LeafCounts { counts } => {
                let total: u32 = counts.iter().sum();
                for (o, &c) in out.iter_mut().zip(counts) {
                    *o += c as f64 / total as f64;
                }
            }
            _ => unreachable!("classification tree with regression leaf"),
        }
    }
}

/// Fitting target: class labels or real-valued responses.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Classes(&'a [u32]),
    Values(&'a [f64]),
}

/// A bagged ensemble of trees with recorded out-of-bag index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    mode: ForestMode,
    params: ForestParams,
    oob: Vec<Vec<u32>>,
    seed: u64,
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
    /// Total split-quality (Gini/variance) decrease per covariate, averaged
    /// over trees; the secondary importance score.
    impurity_importance: Vec<f64>,
}

struct TreeFit {
    tree: Tree,
    oob: Vec<u32>,
    impurity_decrease: Vec<f64>,
}

fn bootstrap_indices(n: usize, fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<u32>) {
    let draws = ((n as f64 * fraction) as usize).max(1);
    let mut in_bag = Vec::with_capacity(draws);
    let mut seen = vec![false; n];
    for _ in 0..draws {
        let i = rng.below(n);
        seen[i] = true;
        in_bag.push(i);
    }
    let oob = (0..n).filter(|&i| !seen[i]).map(|i| i as u32).collect();
    (in_bag, oob)
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
    gain: f64,
}

/// Best split over the candidate features, or None when nothing improves on
/// the parent node. `score` is higher-is-better; ties keep the first-found
/// candidate (features ascending, thresholds ascending).
fn best_split(
    x: &Matrix,
    target: &Target<'_>,
    n_classes: usize,
    indices: &[usize],
    features: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<Split> {
    let m = indices.len();
    let parent_score = match target {
        Target::Classes(labels) => {
            let mut counts = vec![0u64; n_classes];
            for &i in indices {
                counts[labels[i] as usize] += 1;
            }
            counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / m as f64
        }
        Target::Values(values) => {
            let s: f64 = indices.iter().map(|&i| values[i]).sum();
            s * s / m as f64
        }
    };

    let mut best: Option<Split> = None;
    for &f in features {
        scratch.clear();
        match target {
            Target::Classes(labels) => {
                scratch.extend(indices.iter().map(|&i| (x.get(i, f), labels[i] as f64)));
            }
            Target::Values(values) => {
                scratch.extend(indices.iter().map(|&i| (x.get(i, f), values[i])));
            }
        }
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        match target {
            Target::Classes(_) => {
                let mut left = vec![0u64; n_classes];
                let mut right = vec![0u64; n_classes];
                for &(_, lab) in scratch.iter() {
                    right[lab as usize] += 1;
                }
                let mut sumsq_left = 0.0f64;
                let mut sumsq_right: f64 = right.iter().map(|&c| (c * c) as f64).sum();
                for i in 1..m {
                    let lab = scratch[i - 1].1 as usize;
                    sumsq_left += (2 * left[lab] + 1) as f64;
                    left[lab] += 1;
                    sumsq_right -= (2 * right[lab] - 1) as f64;
                    right[lab] -= 1;
                    if i < min_leaf || m - i < min_leaf {
                        continue;
                    }
                    let (v_prev, v_next) = (scratch[i - 1].0, scratch[i].0);
                    if v_prev >= v_next {
                        continue;
                    }
                    let score = sumsq_left / i as f64 + sumsq_right / (m - i) as f64;
                    if score > parent_score && best.as_ref().is_none_or(|b| score > b.score) {
                        best = Some(Split {
                            feature: f,
                            threshold: (v_prev + v_next) / 2.0,
                            score,
                            gain: score - parent_score,
                        });
                    }
                }
            }
            Target::Values(_) => {
                let total: f64 = scratch.iter().map(|&(_, y)| y).sum();
                let mut sum_left = 0.0f64;
                for i in 1..m {
                    sum_left += scratch[i - 1].1;
                    if i < min_leaf || m - i < min_leaf {
                        continue;
                    }
                    let (v_prev, v_next) = (scratch[i - 1].0, scratch[i].0);
                    if v_prev >= v_next {
                        continue;
                    }
                    let sum_right = total - sum_left;
                    let score =
                        sum_left * sum_left / i as f64 + sum_right * sum_right / (m - i) as f64;
                    if score > parent_score && best.as_ref().is_none_or(|b| score > b.score) {
                        best = Some(Split {
                            feature: f,
                            threshold: (v_prev + v_next) / 2.0,
                            score,
                            gain: score - parent_score,
                        });
                    }
                }
            }
        }
    }
    best
}

fn make_leaf(target: &Target<'_>, n_classes: usize, indices: &[usize]) -> Node {
    match target {
        Target::Classes(labels) => {
            let mut counts = vec![0u32; n_classes];
            for &i in indices {
                counts[labels[i] as usize] += 1;
            }
            Node::LeafCounts { counts }
        }
        Target::Values(values) => {
            let mean = indices.iter().map(|&i| values[i]).sum::<f64>() / indices.len() as f64;
            Node::LeafMean {
                mean,
                n: indices.len() as u32,
            }
        }
    }
}

fn is_pure(target: &Target<'_>, indices: &[usize]) -> bool {
    match target {
        Target::Classes(labels) => {
            let first = labels[indices[0]];
            indices.iter().all(|&i| labels[i] == first)
        }
        Target::Values(values) => {
            let first = values[indices[0]];
            indices.iter().all(|&i| values[i] == first)
        }
    }
}

fn fit_tree(
    x: &Matrix,
    target: &Target<'_>,
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
) -> TreeFit {
    let n = x.rows();
    let p = x.cols();
    let mtry = params.resolved_mtry(p);
    let mut rng = Rng::seed_from_u64(seed);
    let (in_bag, oob) = bootstrap_indices(n, params.bootstrap_fraction, &mut rng);

    let mut nodes: Vec<Node> = vec![make_leaf(target, n_classes, &in_bag)];
    let mut impurity_decrease = vec![0.0f64; p];
    // (node slot, node sample indices, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, in_bag, 0)];
    let mut scratch: Vec<(f64, f64)> = Vec::new();

    while let Some((slot, indices, depth)) = stack.pop() {
        let too_deep = params.max_depth.is_some_and(|d| depth >= d);
        if indices.len() < 2 * params.min_leaf || too_deep || is_pure(target, &indices) {
            nodes[slot] = make_leaf(target, n_classes, &indices);
            continue;
        }
        let features = rng.sample_distinct(p, mtry);
        let Some(split) = best_split(
            x,
            target,
            n_classes,
            &indices,
            &features,
            params.min_leaf,
            &mut scratch,
        ) else {
            nodes[slot] = make_leaf(target, n_classes, &indices);
            continue;
        };

        impurity_decrease[split.feature] += split.gain;
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| x.get(i, split.feature) <= split.threshold);
        let left_slot = nodes.len();
        nodes.push(Node::LeafMean { mean: 0.0, n: 0 });
        let right_slot = nodes.len();
        nodes.push(Node::LeafMean { mean: 0.0, n: 0 });
        nodes[slot] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: left_slot as u32,
            right: right_slot as u32,
        };
        stack.push((right_slot, right_idx, depth + 1));
        stack.push((left_slot, left_idx, depth + 1));
    }

    TreeFit {
        tree: Tree { nodes },
        oob,
        impurity_decrease,
    }
}

impl Forest {
    fn fit(
        x: &Matrix,
        target: Target<'_>,
        mode: ForestMode,
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Forest> {
        let n = x.rows();
        let target_len = match target {
            Target::Classes(l) => l.len(),
            Target::Values(v) => v.len(),
        };
        if n != target_len || n < 2 {
            return Err(Error::Argument(format!(
                "need matching X rows and targets with n >= 2 (got {n} rows, {target_len} targets)"
            )));
        }
        params.validate(x.cols())?;
        if let Target::Classes(labels) = target {
            if n_classes < 2 {
                return Err(Error::Argument("classification needs >= 2 classes".into()));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
                return Err(Error::Argument(format!(
                    "label {bad} out of range for {n_classes} classes"
                )));
            }
            let first = labels[0];
            if labels.iter().all(|&l| l == first) {
                return Err(Error::Argument(
                    "classification target has a single observed class".into(),
                ));
            }
        }

        let mut trees = Vec::with_capacity(params.n_trees);
        let mut oob = Vec::with_capacity(params.n_trees);
        let mut impurity = vec![0.0f64; x.cols()];
        for t in 0..params.n_trees {
            let tree_seed = derive_seed_indexed(seed, "tree", t as u64);
            let fit = fit_tree(x, &target, n_classes, params, tree_seed);
            for (acc, d) in impurity.iter_mut().zip(&fit.impurity_decrease) {
                *acc += d / params.n_trees as f64;
            }
            trees.push(fit.tree);
            oob.push(fit.oob);
        }
        Ok(Forest {
            trees,
            mode,
            params: params.clone(),
            oob,
            seed,
            n_samples: n,
            n_features: x.cols(),
            n_classes,
            impurity_importance: impurity,
        })
    }

    /// Fits a classification (probability) forest over integer class labels.
    pub fn fit_classifier(
        x: &Matrix,
        labels: &[u32],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Forest> {
        Self::fit(
            x,
            Target::Classes(labels),
            ForestMode::Classification,
            n_classes,
            params,
            seed,
        )
    }

    /// Fits a regression forest. A constant target yields a valid degenerate
    /// forest whose every prediction equals that constant.
    pub fn fit_regressor(x: &Matrix, values: &[f64], params: &ForestParams, seed: u64) -> Result<Forest> {
        Self::fit(x, Target::Values(values), ForestMode::Regression, 0, params, seed)
    }

    pub fn mode(&self) -> ForestMode {
        self.mode
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn oob_sets(&self) -> &[Vec<u32>] {
        &self.oob
    }

    /// Average Gini (or variance) decrease per covariate.
    pub fn impurity_importance(&self) -> &[f64] {
        &self.impurity_importance
    }

    /// Rebuilds a forest from serialized parts, revalidating structure.
    pub fn from_parts(
        trees: Vec<Tree>,
        mode: ForestMode,
        params: ForestParams,
        seed: u64,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Forest> {
        if trees.is_empty() {
            return Err(Error::Argument("forest needs at least one tree".into()));
        }
        for tree in &trees {
            for node in &tree.nodes {
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        if *feature as usize >= n_features
                            || !threshold.is_finite()
                            || *left as usize >= tree.nodes.len()
                            || *right as usize >= tree.nodes.len()
                        {
                            return Err(Error::Argument("malformed split node".into()));
                        }
                    }
                    Node::LeafCounts { counts } => {
                        if mode != ForestMode::Classification
                            || counts.len() != n_classes
                            || counts.iter().all(|&c| c == 0)
                        {
                            return Err(Error::Argument("malformed classification leaf".into()));
                        }
                    }
                    Node::LeafMean { mean, .. } => {
                        if mode != ForestMode::Regression || !mean.is_finite() {
                            return Err(Error::Argument("malformed regression leaf".into()));
                        }
                    }
                }
            }
        }
        let n_trees = trees.len();
        let impurity = vec![0.0; n_features];
        Ok(Forest {
            trees,
            mode,
            params: ForestParams {
                n_trees,
                ..params
            },
            oob: vec![Vec::new(); n_trees],
            seed,
            n_samples: 0,
            n_features,
            n_classes,
            impurity_importance: impurity,
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Argument(format!(
                "input has {} features, forest was trained on {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Class probabilities, averaged over per-tree leaf proportions.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if self.mode != ForestMode::Classification {
            return Err(Error::Argument("predict_proba on a regression forest".into()));
        }
        let mut out = vec![0.0f64; self.n_classes];
        for tree in &self.trees {
            tree.predict_proba_into(|f| x[f], &mut out);
        }
        for o in &mut out {
            *o /= self.trees.len() as f64;
        }
        Ok(out)
    }

    /// Mean of per-tree leaf means.
    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if self.mode != ForestMode::Regression {
            return Err(Error::Argument("predict_value on a classification forest".into()));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict_mean(|f| x[f])).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Fraction of training subjects that are out-of-bag for at least one tree.
    pub fn oob_coverage(&self) -> f64 {
        if self.n_samples == 0 {
            return 0.0;
        }
        let mut covered = vec![false; self.n_samples];
        for oob in &self.oob {
            for &i in oob {
                covered[i as usize] = true;
            }
        }
        covered.iter().filter(|&&c| c).count() as f64 / self.n_samples as f64
    }

    /// Out-of-bag ensemble error: misclassification rate (classification) or
    /// mean squared error (regression), over subjects with at least one OOB tree.
    pub fn oob_error(&self, x: &Matrix, target: Target<'_>) -> Result<f64> {
        self.validate_eval_inputs(x, &target)?;
        let n = x.rows();
        let mut per_sample: Vec<(f64, usize)> = vec![(0.0, 0); n]; // (sum, count)
        match target {
            Target::Classes(_) => {
                let mut votes = vec![vec![0u32; self.n_classes]; n];
                for (tree, oob) in self.trees.iter().zip(&self.oob) {
                    for &i in oob {
                        let i = i as usize;
                        let class = tree.predict_class(|f| x.get(i, f));
                        votes[i][class as usize] += 1;
                        per_sample[i].1 += 1;
                    }
                }
                let Target::Classes(labels) = target else {
                    unreachable!()
                };
                let mut wrong = 0usize;
                let mut used = 0usize;
                for i in 0..n {
                    if per_sample[i].1 == 0 {
                        continue;
                    }
                    used += 1;
                    let mut best = 0usize;
                    for (c, &v) in votes[i].iter().enumerate() {
                        if v > votes[i][best] {
                            best = c;
                        }
                    }
                    if best as u32 != labels[i] {
                        wrong += 1;
                    }
                }
                if used == 0 {
                    return Err(Error::Eval("no out-of-bag samples recorded".into()));
                }
                Ok(wrong as f64 / used as f64)
            }
            Target::Values(values) => {
                for (tree, oob) in self.trees.iter().zip(&self.oob) {
                    for &i in oob {
                        let i = i as usize;
                        per_sample[i].0 += tree.predict_mean(|f| x.get(i, f));
                        per_sample[i].1 += 1;
                    }
                }
                let mut sse = 0.0;
                let mut used = 0usize;
                for i in 0..n {
                    if per_sample[i].1 == 0 {
                        continue;
                    }
                    used += 1;
                    let pred = per_sample[i].0 / per_sample[i].1 as f64;
                    sse += (pred - values[i]) * (pred - values[i]);
                }
                if used == 0 {
                    return Err(Error::Eval("no out-of-bag samples recorded".into()));
                }
                Ok(sse / used as f64)
            }
        }
    }

    fn validate_eval_inputs(&self, x: &Matrix, target: &Target<'_>) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::Argument("feature dimension mismatch".into()));
        }
        let len = match target {
            Target::Classes(l) => l.len(),
            Target::Values(v) => v.len(),
        };
        if len != x.rows() {
            return Err(Error::Argument("target length mismatch".into()));
        }
        let mode_matches = matches!(
            (self.mode, target),
            (ForestMode::Classification, Target::Classes(_))
                | (ForestMode::Regression, Target::Values(_))
        );
        if !mode_matches {
            return Err(Error::Argument("target kind does not match forest mode".into()));
        }
        Ok(())
    }
}

/// Gini impurity `1 - sum_c (n_c / n)^2` of a count vector.
pub fn gini_impurity(class_counts: &[u64]) -> Result<f64> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::Argument("gini_impurity of all-zero counts".into()));
    }
    let n = total as f64;
    let sum_sq: f64 = class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum();
    Ok(1.0 - sum_sq)
}

/// Permutation (primary) and impurity-decrease (secondary) importance scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    /// Mean over trees of (OOB error with the covariate permuted - baseline).
    pub permutation: Vec<f64>,
    /// Average split-quality decrease attributed to the covariate.
    pub impurity: Vec<f64>,
}

/// Out-of-bag permutation importance.
///
/// For each covariate, its values are shuffled among each tree's out-of-bag
/// subjects and the resulting error increase is averaged across trees.
/// Permutations are seeded from the forest seed, so scores are deterministic.
pub fn oob_permutation_importance(
    forest: &Forest,
    x: &Matrix,
    target: Target<'_>,
) -> Result<ImportanceScores> {
    forest.validate_eval_inputs(x, &target)?;
    if forest.oob.iter().all(|o| o.is_empty()) {
        return Err(Error::Eval("forest has no out-of-bag samples".into()));
    }
    let p = forest.n_features;
    let mut scores = vec![0.0f64; p];
    let mut used_trees = 0usize;

    for (t, (tree, oob)) in forest.trees.iter().zip(&forest.oob).enumerate() {
        if oob.is_empty() {
            continue;
        }
        used_trees += 1;
        let baseline = tree_error(tree, x, &target, oob);
        for j in 0..p {
            let mut permuted: Vec<f64> = oob.iter().map(|&i| x.get(i as usize, j)).collect();
            let seed = derive_seed_indexed(forest.seed, "oob-permutation", (t * p + j) as u64);
            Rng::seed_from_u64(seed).shuffle(&mut permuted);
            let err = tree_error_permuted(tree, x, &target, oob, j, &permuted);
            scores[j] += err - baseline;
        }
    }
    for s in &mut scores {
        *s /= used_trees as f64;
    }
    Ok(ImportanceScores {
        permutation: scores,
        impurity: forest.impurity_importance.clone(),
    })
}

fn tree_error(tree: &Tree, x: &Matrix, target: &Target<'_>, oob: &[u32]) -> f64 {
    match target {
        Target::Classes(labels) => {
            let wrong = oob
                .iter()
                .filter(|&&i| tree.predict_class(|f| x.get(i as usize, f)) != labels[i as usize])
                .count();
            wrong as f64 / oob.len() as f64
        }
        Target::Values(values) => {
            let sse: f64 = oob
                .iter()
                .map(|&i| {
                    let d = tree.predict_mean(|f| x.get(i as usize, f)) - values[i as usize];
                    d * d
                })
                .sum();
            sse / oob.len() as f64
        }
    }
}

fn tree_error_permuted(
    tree: &Tree,
    x: &Matrix,
    target: &Target<'_>,
    oob: &[u32],
    feature: usize,
    permuted: &[f64],
) -> f64 {
    let value_of = |pos: usize, i: usize, f: usize| {
        if f == feature {
            permuted[pos]
        } else {
            x.get(i, f)
        }
    };
    match target {
        Target::Classes(labels) => {
            let wrong = oob
                .iter()
                .enumerate()
                .filter(|&(pos, &i)| {
                    tree.predict_class(|f| value_of(pos, i as usize, f)) != labels[i as usize]
                })
                .count();
            wrong as f64 / oob.len() as f64
        }
        Target::Values(values) => {
            let sse: f64 = oob
                .iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let d = tree.predict_mean(|f| value_of(pos, i as usize, f)) - values[i as usize];
                    d * d
                })
                .sum();
            sse / oob.len() as f64
        }
    }
}

/// Propensity model: `P(A = +1 | X)` with predictions clipped into
/// `[clip, 1 - clip]`.
#[derive(Debug, Clone)]
pub struct PropensityModel {
    estimator: PropensityEstimator,
    clip: f64,
}

/// Backing estimator for a propensity model. `Forest` is the fitted
/// production path; `Logistic` and `Constant` exist so known or deliberately
/// misspecified mechanisms can be injected in evaluations.
#[derive(Debug, Clone)]
pub enum PropensityEstimator {
    Forest(Forest),
    Logistic { weights: Vec<f64>, intercept: f64 },
    Constant(f64),
}

impl PropensityModel {
    pub const DEFAULT_CLIP: f64 = 0.01;

    pub fn from_forest(forest: Forest, clip: f64) -> Result<PropensityModel> {
        if forest.mode() != ForestMode::Classification || forest.n_classes() != 2 {
            return Err(Error::Argument(
                "propensity forest must be a two-class probability forest".into(),
            ));
        }
        Self::with_clip(PropensityEstimator::Forest(forest), clip)
    }

    pub fn logistic(weights: Vec<f64>, intercept: f64, clip: f64) -> Result<PropensityModel> {
        Self::with_clip(PropensityEstimator::Logistic { weights, intercept }, clip)
    }

    pub fn constant(prob_pos: f64, clip: f64) -> Result<PropensityModel> {
        if !(0.0..=1.0).contains(&prob_pos) {
            return Err(Error::Argument("constant propensity must be in [0, 1]".into()));
        }
        Self::with_clip(PropensityEstimator::Constant(prob_pos), clip)
    }

    fn with_clip(estimator: PropensityEstimator, clip: f64) -> Result<PropensityModel> {
        if !(0.0..0.5).contains(&clip) {
            return Err(Error::Argument(format!("clip must be in [0, 0.5), got {clip}")));
        }
        Ok(PropensityModel { estimator, clip })
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn estimator(&self) -> &PropensityEstimator {
        &self.estimator
    }

    /// Clipped `P(A = +1 | x)`.
    pub fn prob_pos(&self, x: &[f64]) -> Result<f64> {
        let raw = match &self.estimator {
            PropensityEstimator::Forest(f) => f.predict_proba(x)?[1],
            PropensityEstimator::Logistic { weights, intercept } => {
                if weights.len() != x.len() {
                    return Err(Error::Argument("propensity dimension mismatch".into()));
                }
                let z: f64 = intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                1.0 / (1.0 + float::exp(-z))
            }
            PropensityEstimator::Constant(p) => *p,
        };
        Ok(raw.clamp(self.clip, 1.0 - self.clip))
    }

    /// Clipped probability of the given arm.
    pub fn prob_of(&self, x: &[f64], arm: Arm) -> Result<f64> {
        let p = self.prob_pos(x)?;
        Ok(match arm {
            Arm::Pos => p,
            Arm::Neg => 1.0 - p,
        })
    }
}

/// Fits a probability forest for `P(A = +1 | X)` on the cohort covariates.
pub fn fit_propensity(
    cohort: &Cohort,
    params: &ForestParams,
    clip: f64,
    seed: u64,
) -> Result<PropensityModel> {
    cohort.require_both_arms()?;
    let x = cohort.feature_matrix();
    let labels: Vec<u32> = cohort
        .subjects()
        .iter()
        .map(|s| s.treatment.class_index())
        .collect();
    let forest = Forest::fit_classifier(&x, &labels, 2, params, seed)?;
    PropensityModel::from_forest(forest, clip)
}

/// Cross-validated variable screening report.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    /// Selected covariate names, best mean rank first.
    pub selected: Vec<String>,
    /// Permutation importance per fold (k x p).
    pub per_fold_importance: Vec<Vec<f64>>,
    /// Rank per fold (1 = most important).
    pub per_fold_ranks: Vec<Vec<u32>>,
    /// Mean rank across folds per covariate.
    pub mean_ranks: Vec<f64>,
    /// All covariate indices ordered by mean rank.
    pub order: Vec<usize>,
}

fn ranks_from_importance(importance: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_unstable_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    let mut ranks = vec![0u32; importance.len()];
    for (pos, &j) in order.iter().enumerate() {
        ranks[j] = pos as u32 + 1;
    }
    ranks
}

/// Screening target: completed rewards when available, otherwise the observed
/// follow-up truncated at the horizon.
fn screening_target(cohort: &Cohort) -> Vec<f64> {
    let horizon = cohort.horizon();
    cohort
        .subjects()
        .iter()
        .map(|s| {
            s.reward
                .unwrap_or_else(|| horizon.map_or(s.time, |h| s.time.min(h)))
        })
        .collect()
}

/// Ranks covariates by permutation importance within each of `k` folds and
/// returns the `m` with the best mean rank.
///
/// Each fold's forest is a regression on the screening outcome over the
/// fold's training complement (covariates only, treatment excluded).
pub fn select_top_variables(
    cohort: &Cohort,
    k: usize,
    m: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<SelectionReport> {
    let p = cohort.n_covariates();
    if m == 0 || m > p {
        return Err(Error::Argument(format!("m = {m} out of range 1..={p}")));
    }
    let folds = crate::cohort::kfold_split(cohort, k, derive_seed(seed, "importance-folds"))?;
    let x_full = cohort.feature_matrix();
    let y_full = screening_target(cohort);

    let mut per_fold_importance = Vec::with_capacity(k);
    let mut per_fold_ranks = Vec::with_capacity(k);
    let mut mean_ranks = vec![0.0f64; p];
    for fold in 0..k {
        let (train, _) = folds.split(fold);
        let mut data = Vec::with_capacity(train.len() * p);
        let mut y = Vec::with_capacity(train.len());
        for &i in &train {
            data.extend_from_slice(x_full.row(i));
            y.push(y_full[i]);
        }
        let x = Matrix::new(train.len(), p, data)?;
        let forest = Forest::fit_regressor(
            &x,
            &y,
            params,
            derive_seed_indexed(seed, "importance-fit", fold as u64),
        )
        .map_err(|e| Error::Fit(format!("importance fold {fold}: {e}")))?;
        let scores = oob_permutation_importance(&forest, &x, Target::Values(&y))
            .map_err(|e| Error::Eval(format!("importance fold {fold}: {e}")))?;
        let ranks = ranks_from_importance(&scores.permutation);
        for (acc, &r) in mean_ranks.iter_mut().zip(&ranks) {
            *acc += r as f64 / k as f64;
        }
        per_fold_importance.push(scores.permutation);
        per_fold_ranks.push(ranks);
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_unstable_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]).then(a.cmp(&b)));
    let selected = order[..m]
        .iter()
        .map(|&j| cohort.schema()[j].clone())
        .collect();
    Ok(SelectionReport {
        selected,
        per_fold_importance,
        per_fold_ranks,
        mean_ranks,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Subject;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn grid_matrix(n: usize, p: usize, seed: u64) -> Matrix {
        let mut rng = Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * p).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Matrix::new(n, p, data).unwrap()
    }

    #[test]
    fn gini_examples() {
        assert!((gini_impurity(&[5, 5]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(gini_impurity(&[10, 0]).unwrap(), 0.0);
        // hand evaluation: 1 - 0.49 - 0.09
        assert!((gini_impurity(&[7, 3]).unwrap() - 0.42).abs() < 1e-12);
        assert!(gini_impurity(&[0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn gini_properties(counts in proptest::collection::vec(0u64..50, 2..5)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let g = gini_impurity(&counts).unwrap();
            prop_assert!((0.0..1.0).contains(&g));
            // permutation invariance
            let mut rev = counts.clone();
            rev.reverse();
            prop_assert!((g - gini_impurity(&rev).unwrap()).abs() < 1e-12);
            // zero iff one class
            let nonzero = counts.iter().filter(|&&c| c > 0).count();
            prop_assert_eq!(g == 0.0, nonzero == 1);
        }
    }

    #[test]
    fn gini_maximal_at_uniform_counts() {
        let uniform = gini_impurity(&[10, 10, 10]).unwrap();
        for counts in [[28, 1, 1], [15, 10, 5], [11, 10, 9]] {
            assert!(gini_impurity(&counts).unwrap() <= uniform + 1e-12);
        }
    }

    #[test]
    fn separable_classification_has_low_oob_error() {
        let n = 400;
        let x = grid_matrix(n, 3, 7);
        let labels: Vec<u32> = (0..n).map(|i| u32::from(x.get(i, 1) > 0.1)).collect();
        let forest = Forest::fit_classifier(&x, &labels, 2, &ForestParams::default(), 11).unwrap();
        let err = forest.oob_error(&x, Target::Classes(&labels)).unwrap();
        assert!(err < 0.05, "oob error {err}");
        assert!(forest.oob_coverage() > 0.999);
    }

    #[test]
    fn constant_regression_target_predicts_constant() {
        let x = grid_matrix(50, 2, 3);
        let y = vec![42.5; 50];
        let forest = Forest::fit_regressor(&x, &y, &ForestParams::default(), 1).unwrap();
        for i in 0..50 {
            assert_eq!(forest.predict_value(x.row(i)).unwrap(), 42.5);
        }
    }

    #[test]
    fn refit_with_same_seed_is_identical() {
        let x = grid_matrix(120, 4, 5);
        let y: Vec<f64> = (0..120).map(|i| x.get(i, 0) * 3.0 + x.get(i, 2)).collect();
        let a = Forest::fit_regressor(&x, &y, &ForestParams::default(), 77).unwrap();
        let b = Forest::fit_regressor(&x, &y, &ForestParams::default(), 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_rejected() {
        let x = grid_matrix(20, 2, 1);
        let labels = vec![1u32; 20];
        assert!(Forest::fit_classifier(&x, &labels, 2, &ForestParams::default(), 0).is_err());
    }

    #[test]
    fn single_pure_leaf_has_unit_probability() {
        // fully separated classes, one tree with unit leaves: a query deep in
        // the class-1 region hits a pure leaf
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i < 10 { -1.0 - 0.05 * i as f64 } else { 0.8 + 0.05 * i as f64 }])
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let x = Matrix::from_rows(&refs).unwrap();
        let labels: Vec<u32> = (0..20).map(|i| u32::from(i >= 10)).collect();
        let params = ForestParams {
            n_trees: 1,
            min_leaf: 1,
            mtry: Some(1),
            ..ForestParams::default()
        };
        let forest = Forest::fit_classifier(&x, &labels, 2, &params, 5).unwrap();
        assert_eq!(forest.predict_proba(&[2.5]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn identical_stump_trees_reproduce_the_stump() {
        let stump = Tree::from_nodes(vec![
            Node::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            Node::LeafMean { mean: 10.0, n: 4 },
            Node::LeafMean { mean: 30.0, n: 6 },
        ]);
        let forest = Forest::from_parts(
            vec![stump.clone(), stump.clone(), stump],
            ForestMode::Regression,
            ForestParams::default(),
            0,
            1,
            0,
        )
        .unwrap();
        assert_eq!(forest.predict_value(&[0.2]).unwrap(), 10.0);
        assert_eq!(forest.predict_value(&[0.9]).unwrap(), 30.0);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let n = 150;
        let x = grid_matrix(n, 3, 21);
        let labels: Vec<u32> = (0..n).map(|i| u32::from(x.get(i, 0) + x.get(i, 2) > 0.0)).collect();
        let forest = Forest::fit_classifier(&x, &labels, 2, &ForestParams::default(), 4).unwrap();
        for i in 0..20 {
            let proba = forest.predict_proba(x.row(i)).unwrap();
            assert!((proba.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(proba.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn regression_predictions_within_target_range() {
        let n = 200;
        let x = grid_matrix(n, 4, 9);
        let y: Vec<f64> = (0..n).map(|i| 10.0 * x.get(i, 1) - 4.0 * x.get(i, 3)).collect();
        let forest = Forest::fit_regressor(&x, &y, &ForestParams::default(), 13).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        for i in 0..n {
            let pred = forest.predict_value(x.row(i)).unwrap();
            assert!(pred >= lo - 1e-9 && pred <= hi + 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_argument_error() {
        let x = grid_matrix(30, 3, 2);
        let y = vec![1.0; 30];
        let forest = Forest::fit_regressor(&x, &y, &ForestParams::default(), 0).unwrap();
        assert!(matches!(forest.predict_value(&[1.0, 2.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn more_trees_do_not_hurt_oob_error() {
        let n = 300;
        let x = grid_matrix(n, 5, 31);
        let labels: Vec<u32> = (0..n).map(|i| u32::from(x.get(i, 2) > 0.0)).collect();
        let fit = |n_trees| {
            let params = ForestParams {
                n_trees,
                ..ForestParams::default()
            };
            Forest::fit_classifier(&x, &labels, 2, &params, 8)
                .unwrap()
                .oob_error(&x, Target::Classes(&labels))
                .unwrap()
        };
        let err_50 = fit(50);
        let err_500 = fit(500);
        assert!(err_500 <= err_50 + 0.02, "50 trees: {err_50}, 500 trees: {err_500}");
    }

    fn randomized_cohort(n: usize, p: usize, seed: u64) -> Cohort {
        let mut rng = Rng::seed_from_u64(seed);
        let subjects: Vec<Subject> = (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..p).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let arm = if rng.next_f64() < 0.5 { Arm::Pos } else { Arm::Neg };
                Subject::new(format!("s{i}"), x, arm, 100.0, true)
            })
            .collect();
        let schema = (0..p).map(|j| format!("x{}", j + 1)).collect();
        Cohort::new(schema, subjects).unwrap()
    }

    #[test]
    fn randomized_assignment_gives_centered_propensity() {
        let cohort = randomized_cohort(600, 3, 17);
        let model = fit_propensity(&cohort, &ForestParams::default(), 0.01, 3).unwrap();
        let mean: f64 = cohort
            .subjects()
            .iter()
            .map(|s| model.prob_pos(&s.covariates).unwrap())
            .sum::<f64>()
            / cohort.len() as f64;
        assert!((0.45..=0.55).contains(&mean), "mean propensity {mean}");
    }

    #[test]
    fn deterministic_assignment_is_clipped_exactly() {
        let mut rng = Rng::seed_from_u64(9);
        let subjects: Vec<Subject> = (0..300)
            .map(|i| {
                let x = rng.uniform(-3.0, 3.0);
                let arm = if x > 0.0 { Arm::Pos } else { Arm::Neg };
                Subject::new(format!("s{i}"), vec![x], arm, 10.0, false)
            })
            .collect();
        let cohort = Cohort::new(vec!["x1".into()], subjects).unwrap();
        let model = fit_propensity(&cohort, &ForestParams::default(), 0.01, 5).unwrap();
        assert_eq!(model.prob_pos(&[2.5]).unwrap(), 0.99);
        assert_eq!(model.prob_pos(&[-2.5]).unwrap(), 0.01);
    }

    #[test]
    fn table_one_propensity_matches_stratum_shares() {
        let cohort = crate::synth::generate_from_table(&crate::strata::table1(), false, 3);
        let model = fit_propensity(&cohort, &ForestParams::default(), 0.01, 7).unwrap();
        let reduced: Vec<&Subject> = cohort
            .subjects()
            .iter()
            .filter(|s| s.covariates[0] == 1.0)
            .collect();
        let mean_pred: f64 = reduced
            .iter()
            .map(|s| model.prob_pos(&s.covariates).unwrap())
            .sum::<f64>()
            / reduced.len() as f64;
        let share = 1100.0 / 10_100.0;
        assert!(
            (mean_pred - share).abs() <= 0.03,
            "predicted torsemide share {mean_pred} vs empirical {share}"
        );
    }

    #[test]
    fn propensity_rejects_single_arm() {
        let subjects: Vec<Subject> = (0..10)
            .map(|i| Subject::new(format!("s{i}"), vec![i as f64], Arm::Pos, 1.0, false))
            .collect();
        let cohort = Cohort::new(vec!["x1".into()], subjects).unwrap();
        assert!(fit_propensity(&cohort, &ForestParams::default(), 0.01, 0).is_err());
    }

    #[test]
    fn propensity_always_within_clip_bounds() {
        let cohort = randomized_cohort(200, 2, 23);
        let model = fit_propensity(&cohort, &ForestParams::default(), 0.05, 1).unwrap();
        for s in cohort.subjects() {
            let p = model.prob_pos(&s.covariates).unwrap();
            assert!((0.05..=0.95).contains(&p));
        }
    }

    #[test]
    fn null_feature_importance_near_zero_and_signal_dominates() {
        let n = 400;
        let p = 10;
        let x = grid_matrix(n, p, 41);
        // y determined by x0's sign, other nine covariates are noise
        let labels: Vec<u32> = (0..n).map(|i| u32::from(x.get(i, 0) > 0.0)).collect();
        let forest = Forest::fit_classifier(&x, &labels, 2, &ForestParams::default(), 6).unwrap();
        let scores = oob_permutation_importance(&forest, &x, Target::Classes(&labels)).unwrap();
        let signal = scores.permutation[0];
        for j in 1..p {
            assert!(scores.permutation[j] < signal, "noise feature {j} beat the signal");
            assert!(scores.permutation[j].abs() < 0.05, "noise importance {}", scores.permutation[j]);
        }
        assert!(signal > 0.1, "signal importance {signal}");
        // impurity-based secondary score agrees on the winner
        let top_impurity = scores
            .impurity
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(top_impurity, 0);
    }

    #[test]
    fn duplicated_signal_shares_importance() {
        let n = 500;
        let mut rng = Rng::seed_from_u64(55);
        let mut data = Vec::with_capacity(n * 4);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let signal = rng.uniform(-1.0, 1.0);
            let copy = signal; // exact duplicate column
            let noise1 = rng.uniform(-1.0, 1.0);
            let noise2 = rng.uniform(-1.0, 1.0);
            data.extend_from_slice(&[signal, copy, noise1, noise2]);
            y.push(if signal > 0.0 { 50.0 } else { 10.0 });
        }
        let x = Matrix::new(n, 4, data).unwrap();
        let forest = Forest::fit_regressor(&x, &y, &ForestParams::default(), 19).unwrap();
        let scores = oob_permutation_importance(&forest, &x, Target::Values(&y)).unwrap();
        assert!(scores.permutation[0] > 0.0);
        assert!(scores.permutation[1] > 0.0);
        assert!(scores.permutation[0] > scores.permutation[2].max(scores.permutation[3]));
        assert!(scores.permutation[1] > scores.permutation[2].max(scores.permutation[3]));
    }

    fn planted_signal_cohort(n: usize, p: usize, seed: u64) -> Cohort {
        let mut rng = Rng::seed_from_u64(seed);
        let subjects: Vec<Subject> = (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..p).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let time = 150.0 + 60.0 * x[0] + 40.0 * x[1] + 10.0 * rng.normal();
                let arm = if rng.next_f64() < 0.5 { Arm::Pos } else { Arm::Neg };
                let mut s = Subject::new(format!("s{i}"), x, arm, time.max(0.0), true);
                s.reward = Some(time.max(0.0));
                s
            })
            .collect();
        let schema = (0..p).map(|j| format!("x{}", j + 1)).collect();
        Cohort::new(schema, subjects).unwrap()
    }

    #[test]
    fn select_top_variables_finds_planted_signals() {
        let cohort = planted_signal_cohort(500, 12, 71);
        let report =
            select_top_variables(&cohort, 10, 2, &ForestParams::default(), 5).unwrap();
        assert_eq!(report.selected, vec!["x1".to_string(), "x2".to_string()]);
    }

    #[test]
    fn select_all_variables_returns_full_ordering() {
        let cohort = planted_signal_cohort(200, 5, 13);
        let report =
            select_top_variables(&cohort, 5, 5, &ForestParams::default(), 2).unwrap();
        assert_eq!(report.selected.len(), 5);
        let mut sorted = report.selected.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["x1", "x2", "x3", "x4", "x5"]);
    }

    #[test]
    fn select_top_variables_is_deterministic() {
        let cohort = planted_signal_cohort(200, 6, 29);
        let a = select_top_variables(&cohort, 5, 3, &ForestParams::default(), 44).unwrap();
        let b = select_top_variables(&cohort, 5, 3, &ForestParams::default(), 44).unwrap();
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.mean_ranks, b.mean_ranks);
        assert!(matches!(
            select_top_variables(&cohort, 5, 9, &ForestParams::default(), 1),
            Err(Error::Argument(_))
        ));
    }
}
