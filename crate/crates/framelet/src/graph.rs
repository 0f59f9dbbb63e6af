//! Graph storage, JSON interchange, SBM generation, homophily, and the
//! augmented matrices every other module consumes.
//!
//! All matrices are dense (`ndarray`), sized for desk-scale graphs; the
//! augmentation convention throughout is `Ã = A + I`, `D̃ = diag(Ã·1)`,
//! `Â = D̃^{-1/2} Ã D̃^{-1/2}`, `Δ̃ = I − Â`.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Dense-mode node limit; past this the eigendecomposition path refuses.
pub const DENSE_NODE_LIMIT: usize = 5000;

/// Train/validation/test membership for one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Undirected weighted graph with node features and optional labels/split.
///
/// Edges are stored once per unordered pair with `i < j`, unit weight unless
/// stated; self-loops are rejected (the augmentation adds them itself).
#[derive(Debug, Clone)]
pub struct Graph<F: Scalar> {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize, F)>,
    /// `num_nodes × feature_dim`.
    pub features: Array2<F>,
    pub labels: Option<Vec<usize>>,
    pub split: Option<Vec<Split>>,
}

impl<F: Scalar> Graph<F> {
    /// Validating constructor. Edges may arrive in either orientation and
    /// are normalized to `i < j`; duplicates and self-loops are errors.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize, F)>,
        features: Array2<F>,
    ) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "features have {} rows for {} nodes",
                features.nrows(),
                num_nodes
            )));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for (i, j, w) in edges {
            if i >= num_nodes || j >= num_nodes {
                return Err(Error::EdgeOutOfRange { i, j, num_nodes });
            }
            if i == j {
                return Err(Error::GraphData(format!("self-loop at node {i}")));
            }
            if !w.is_finite() {
                return Err(Error::GraphData(format!("non-finite weight on edge ({i}, {j})")));
            }
            normalized.push((i.min(j), i.max(j), w));
        }
        normalized.sort_by_key(|&(i, j, _)| (i, j));
        if normalized.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::GraphData("duplicate edge".into()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::GraphData("non-finite feature value".into()));
        }
        Ok(Self { num_nodes, edges: normalized, features, labels: None, split: None })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "{} split entries for {} nodes",
                split.len(),
                self.num_nodes
            )));
        }
        self.split = Some(split);
        Ok(self)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of distinct labels (0 if unlabeled).
    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|&m| m + 1))
            .unwrap_or(0)
    }

    /// Dense unaugmented adjacency `A`.
    pub fn adjacency(&self) -> Array2<F> {
        let mut a = Array2::zeros((self.num_nodes, self.num_nodes));
        for &(i, j, w) in &self.edges {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        a
    }

    /// Boolean mask for one split kind; errors when no split is attached.
    pub fn split_mask(&self, which: Split) -> Result<Vec<bool>> {
        let split = self
            .split
            .as_ref()
            .ok_or_else(|| Error::GraphData("graph has no split".into()))?;
        Ok(split.iter().map(|&s| s == which).collect())
    }

    /// Apply a node permutation: node `i` of the result is node `perm[i]`
    /// of the original. Used by the equivariance checks.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::ShapeMismatch("permutation length".into()));
        }
        let mut inv = vec![usize::MAX; perm.len()];
        for (new_i, &old_i) in perm.iter().enumerate() {
            if old_i >= perm.len() || inv[old_i] != usize::MAX {
                return Err(Error::GraphData(format!(
                    "not a bijection: node {old_i} repeated or out of range"
                )));
            }
            inv[old_i] = new_i;
        }
        let edges = self.edges.iter().map(|&(i, j, w)| (inv[i], inv[j], w)).collect();
        let mut features = Array2::zeros(self.features.raw_dim());
        for new_i in 0..self.num_nodes {
            features.row_mut(new_i).assign(&self.features.row(perm[new_i]));
        }
        let mut g = Graph::new(self.num_nodes, edges, features)?;
        if let Some(labels) = &self.labels {
            g = g.with_labels(perm.iter().map(|&p| labels[p]).collect())?;
        }
        if let Some(split) = &self.split {
            g = g.with_split(perm.iter().map(|&p| split[p]).collect())?;
        }
        Ok(g)
    }
}

/// The matrices derived from one graph: `Ã`, `D̃` (as a vector), `Â`, `Δ̃`,
/// plus an edge copy for the edge-sum energy route.
#[derive(Debug, Clone)]
pub struct GraphMatrices<F: Scalar> {
    pub num_nodes: usize,
    pub a_tilde: Array2<F>,
    /// Augmented degrees `d̃_i = 1 + Σ_j w_ij`.
    pub deg_tilde: Array1<F>,
    pub a_hat: Array2<F>,
    /// `Δ̃ = I − Â`.
    pub laplacian: Array2<F>,
    pub edges: Vec<(usize, usize, F)>,
}

/// Assemble the augmented matrices for a graph.
pub fn build_matrices<F: Scalar>(g: &Graph<F>) -> Result<GraphMatrices<F>> {
    if g.num_nodes == 0 {
        return Err(Error::GraphData("graph has no nodes".into()));
    }
    let n = g.num_nodes;
    let mut a_tilde = Array2::eye(n);
    for &(i, j, w) in &g.edges {
        a_tilde[(i, j)] = w;
        a_tilde[(j, i)] = w;
    }
    let deg_tilde = a_tilde.sum_axis(ndarray::Axis(1));
    let inv_sqrt: Array1<F> = deg_tilde.mapv(|d| F::one() / d.sqrt());
    let mut a_hat = a_tilde.clone();
    for ((i, j), v) in a_hat.indexed_iter_mut() {
        *v = *v * inv_sqrt[i] * inv_sqrt[j];
    }
    let mut laplacian = a_hat.mapv(|v| -v);
    for i in 0..n {
        laplacian[(i, i)] = laplacian[(i, i)] + F::one();
    }
    Ok(GraphMatrices {
        num_nodes: n,
        a_tilde,
        deg_tilde,
        a_hat,
        laplacian,
        edges: g.edges.clone(),
    })
}

impl<F: Scalar> GraphMatrices<F> {
    /// Connected components over positive-weight edges; returns a component
    /// id per node.
    pub fn components(&self) -> Vec<usize> {
        let n = self.num_nodes;
        let mut adj = vec![Vec::new(); n];
        for &(i, j, w) in &self.edges {
            if w > F::zero() {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn num_components(&self) -> usize {
        self.components().iter().max().map(|&m| m + 1).unwrap_or(0)
    }
}

/// Stochastic block model parameters.
///
/// Features are drawn i.i.d. Gaussian with unit variance around each block's
/// mean; labels are block ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SbmConfig<F: Scalar> {
    pub nodes_per_block: usize,
    pub num_blocks: usize,
    pub p_intra: f64,
    pub q_inter: f64,
    /// One mean per block.
    pub feature_means: Vec<F>,
    pub feature_dim: usize,
    pub seed: u64,
}

impl<F: Scalar> SbmConfig<F> {
    /// The common two-block setup with means `±0.5` and 16 feature channels.
    pub fn two_block(nodes_per_block: usize, p_intra: f64, q_inter: f64, seed: u64) -> Self {
        Self {
            nodes_per_block,
            num_blocks: 2,
            p_intra,
            q_inter,
            feature_means: vec![F::c(0.5), F::c(-0.5)],
            feature_dim: 16,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_blocks < 2 {
            return Err(Error::InvalidConfig("sbm needs at least 2 blocks".into()));
        }
        if self.nodes_per_block == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidConfig("sbm sizes must be positive".into()));
        }
        for &p in &[self.p_intra, self.q_inter] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("edge probability {p} outside [0, 1]")));
            }
        }
        if self.feature_means.len() != self.num_blocks {
            return Err(Error::InvalidConfig("one feature mean per block required".into()));
        }
        Ok(())
    }
}

/// Draw one SBM graph. Deterministic given the config (edge coins first in
/// node-major pair order, then features row-major).
pub fn sbm_generate<F: Scalar>(cfg: &SbmConfig<F>) -> Result<Graph<F>> {
    cfg.validate()?;
    let n = cfg.nodes_per_block * cfg.num_blocks;
    let labels: Vec<usize> = (0..n).map(|i| i / cfg.nodes_per_block).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { cfg.p_intra } else { cfg.q_inter };
            if rng.gen::<f64>() < p {
                edges.push((i, j, F::one()));
            }
        }
    }
    let mut features = Array2::zeros((n, cfg.feature_dim));
    for i in 0..n {
        let mean = cfg.feature_means[labels[i]];
        for k in 0..cfg.feature_dim {
            features[(i, k)] = mean + F::std_normal(&mut rng);
        }
    }
    Graph::new(n, edges, features)?.with_labels(labels)
}

/// Node-averaged homophily: mean over non-isolated nodes of the fraction of
/// neighbors sharing the node's label. Errors when any node is unlabeled or
/// every node is isolated.
pub fn homophily_level<F: Scalar>(g: &Graph<F>) -> Result<F> {
    let labels = g
        .labels
        .as_ref()
        .ok_or_else(|| Error::GraphData("homophily requires labels".into()))?;
    let mut same = vec![0usize; g.num_nodes];
    let mut total = vec![0usize; g.num_nodes];
    for &(i, j, w) in &g.edges {
        if w <= F::zero() {
            continue;
        }
        total[i] += 1;
        total[j] += 1;
        if labels[i] == labels[j] {
            same[i] += 1;
            same[j] += 1;
        }
    }
    let mut fractions: Vec<F> = (0..g.num_nodes)
        .filter(|&v| total[v] > 0)
        .map(|v| F::c(same[v] as f64 / total[v] as f64))
        .collect();
    if fractions.is_empty() {
        return Err(Error::GraphData("homophily undefined: all nodes isolated".into()));
    }
    // Summed in sorted order so the result is exactly permutation-invariant.
    fractions.sort_by(|a, b| a.partial_cmp(b).expect("finite fractions"));
    let count = F::c(fractions.len() as f64);
    Ok(fractions.into_iter().sum::<F>() / count)
}

/// Attach a seeded random train/val/test split with the given fractions
/// (test takes the remainder).
pub fn assign_split<F: Scalar>(
    g: &mut Graph<F>,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&train_frac)
        || !(0.0..=1.0).contains(&val_frac)
        || train_frac + val_frac > 1.0
    {
        return Err(Error::InvalidConfig("split fractions must sum to at most 1".into()));
    }
    let n = g.num_nodes;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates, explicit so the order is stable across rand versions.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let n_train = (train_frac * n as f64).round() as usize;
    let n_val = (val_frac * n as f64).round() as usize;
    let mut split = vec![Split::Test; n];
    for (rank, &node) in idx.iter().enumerate() {
        split[node] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    g.split = Some(split);
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeJson<F> {
    Weighted((usize, usize, F)),
    Plain((usize, usize)),
}

#[derive(Serialize, Deserialize)]
struct GraphJson<F> {
    num_nodes: usize,
    edges: Vec<EdgeJson<F>>,
    features: Vec<Vec<F>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<Vec<Split>>,
}

impl<F: Scalar> Graph<F> {
    /// Parse the JSON interchange format (see the repository README for the
    /// schema). Validation matches [`Graph::new`]; NaN/Inf are rejected.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: GraphJson<F> = serde_json::from_str(s)?;
        let dim = raw.features.first().map(|r| r.len()).unwrap_or(0);
        if raw.features.iter().any(|r| r.len() != dim) {
            return Err(Error::GraphData("ragged feature rows".into()));
        }
        let mut features = Array2::zeros((raw.features.len(), dim));
        for (i, row) in raw.features.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                features[(i, k)] = v;
            }
        }
        let edges = raw
            .edges
            .into_iter()
            .map(|e| match e {
                EdgeJson::Weighted((i, j, w)) => (i, j, w),
                EdgeJson::Plain((i, j)) => (i, j, F::one()),
            })
            .collect();
        let mut g = Graph::new(raw.num_nodes, edges, features)?;
        if let Some(labels) = raw.labels {
            g = g.with_labels(labels)?;
        }
        if let Some(split) = raw.split {
            g = g.with_split(split)?;
        }
        Ok(g)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let edges = self
            .edges
            .iter()
            .map(|&(i, j, w)| {
                if w == F::one() {
                    EdgeJson::Plain((i, j))
                } else {
                    EdgeJson::Weighted((i, j, w))
                }
            })
            .collect();
        let features = self
            .features
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect();
        let raw = GraphJson {
            num_nodes: self.num_nodes,
            edges,
            features,
            labels: self.labels.clone(),
            split: self.split.clone(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json_string()?)?)
    }
}
