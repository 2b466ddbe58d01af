//! Naive Bayes, tree-augmented (TAN) and forest-augmented (FAN) Bayesian
//! network classifiers over discrete attributes.
//!
//! The class node is an implicit parent of every attribute; an attribute may
//! additionally have one attribute parent. Structure learning uses
//! unsmoothed empirical information measures (natural log), parameter
//! learning uses Laplace (add-one) estimates, and classification is MAP in
//! log space.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{n} attribute(s) cannot carry a tree structure; use naive Bayes")]
    DegenerateStructure { n: usize },
    #[error("attribute {attr} has value {value}, outside 0..{cardinality}")]
    Domain {
        attr: usize,
        value: usize,
        cardinality: usize,
    },
    #[error("class {class} outside 0..{class_count}")]
    ClassDomain { class: usize, class_count: usize },
    #[error("dimension mismatch: expected {expected} attributes, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
}

/// Discrete training data: attribute states are 0-based, as are classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDataset {
    cardinalities: Vec<usize>,
    class_count: usize,
    rows: Vec<Vec<usize>>,
    classes: Vec<usize>,
}

impl DiscreteDataset {
    pub fn new(cardinalities: Vec<usize>, class_count: usize) -> Result<Self, BayesError> {
        if class_count == 0 || cardinalities.contains(&0) {
            return Err(BayesError::InsufficientData("cardinalities and class count must be positive".into()));
        }
        Ok(Self {
            cardinalities,
            class_count,
            rows: Vec::new(),
            classes: Vec::new(),
        })
    }

    pub fn push(&mut self, row: Vec<usize>, class: usize) -> Result<(), BayesError> {
        check_instance(&self.cardinalities, &row)?;
        if class >= self.class_count {
            return Err(BayesError::ClassDomain {
                class,
                class_count: self.class_count,
            });
        }
        self.rows.push(row);
        self.classes.push(class);
        Ok(())
    }

    pub fn with_instances(
        cardinalities: Vec<usize>,
        class_count: usize,
        instances: impl IntoIterator<Item = (Vec<usize>, usize)>,
    ) -> Result<Self, BayesError> {
        let mut ds = Self::new(cardinalities, class_count)?;
        for (row, class) in instances {
            ds.push(row, class)?;
        }
        Ok(ds)
    }

    pub fn n_attrs(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn instances(&self) -> impl Iterator<Item = (&[usize], usize)> {
        self.rows.iter().map(Vec::as_slice).zip(self.classes.iter().copied())
    }

    fn check_attr(&self, i: usize) -> Result<(), BayesError> {
        if i >= self.n_attrs() {
            return Err(BayesError::Dimension {
                expected: self.n_attrs(),
                found: i + 1,
            });
        }
        Ok(())
    }
}

fn check_instance(cardinalities: &[usize], row: &[usize]) -> Result<(), BayesError> {
    if row.len() != cardinalities.len() {
        return Err(BayesError::Dimension {
            expected: cardinalities.len(),
            found: row.len(),
        });
    }
    for (attr, (&value, &cardinality)) in row.iter().zip(cardinalities).enumerate() {
        if value >= cardinality {
            return Err(BayesError::Domain {
                attr,
                value,
                cardinality,
            });
        }
    }
    Ok(())
}

/// `I(A_i; A_j | C)` from empirical frequencies. Symmetric bit-for-bit:
/// the pair is always accumulated in `(min, max)` order.
pub fn conditional_mutual_information(ds: &DiscreteDataset, i: usize, j: usize) -> Result<f64, BayesError> {
    ds.check_attr(i)?;
    ds.check_attr(j)?;
    if i == j {
        return Err(BayesError::InvalidStructure(format!("CMI needs two distinct attributes, got {i} twice")));
    }
    if ds.is_empty() {
        return Err(BayesError::InsufficientData("empty dataset".into()));
    }
    let (a, b) = (i.min(j), i.max(j));
    let (va, vb, k) = (ds.cardinalities[a], ds.cardinalities[b], ds.class_count);
    let mut nxyz = vec![0u64; k * va * vb];
    let mut nxz = vec![0u64; k * va];
    let mut nyz = vec![0u64; k * vb];
    let mut nz = vec![0u64; k];
    for (row, c) in ds.instances() {
        let (x, y) = (row[a], row[b]);
        nxyz[(c * va + x) * vb + y] += 1;
        nxz[c * va + x] += 1;
        nyz[c * vb + y] += 1;
        nz[c] += 1;
    }
    let n = ds.len() as f64;
    let mut total = 0.0;
    for c in 0..k {
        for x in 0..va {
            for y in 0..vb {
                let cnt = nxyz[(c * va + x) * vb + y];
                if cnt == 0 {
                    continue;
                }
                let ratio = (cnt * nz[c]) as f64 / (nxz[c * va + x] * nyz[c * vb + y]) as f64;
                total += cnt as f64 / n * ratio.ln();
            }
        }
    }
    Ok(total.max(0.0))
}

/// `I(A_i; C)` from empirical frequencies.
pub fn mutual_information_with_class(ds: &DiscreteDataset, i: usize) -> Result<f64, BayesError> {
    ds.check_attr(i)?;
    if ds.is_empty() {
        return Err(BayesError::InsufficientData("empty dataset".into()));
    }
    let (v, k) = (ds.cardinalities[i], ds.class_count);
    let mut nxz = vec![0u64; k * v];
    let mut nx = vec![0u64; v];
    let mut nz = vec![0u64; k];
    for (row, c) in ds.instances() {
        nxz[c * v + row[i]] += 1;
        nx[row[i]] += 1;
        nz[c] += 1;
    }
    let n = ds.len() as u64;
    let mut total = 0.0;
    for c in 0..k {
        for x in 0..v {
            let cnt = nxz[c * v + x];
            if cnt == 0 {
                continue;
            }
            let ratio = (cnt * n) as f64 / (nx[x] * nz[c]) as f64;
            total += cnt as f64 / n as f64 * ratio.ln();
        }
    }
    Ok(total.max(0.0))
}

/// Pairwise conditional mutual information, attribute-class mutual
/// information and the mean off-diagonal CMI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInfoMatrix {
    pub cmi: Vec<Vec<f64>>,
    pub mi_class: Vec<f64>,
    pub i_avg: f64,
}

impl MutualInfoMatrix {
    pub fn compute(ds: &DiscreteDataset) -> Result<Self, BayesError> {
        let n = ds.n_attrs();
        if ds.is_empty() {
            return Err(BayesError::InsufficientData("empty dataset".into()));
        }
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let values = pairs
            .par_iter()
            .map(|&(i, j)| conditional_mutual_information(ds, i, j))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cmi = vec![vec![0.0; n]; n];
        for (&(i, j), v) in pairs.iter().zip(values) {
            cmi[i][j] = v;
            cmi[j][i] = v;
        }
        let mi_class = (0..n)
            .map(|i| mutual_information_with_class(ds, i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            i_avg: average_off_diagonal(&cmi),
            cmi,
            mi_class,
        })
    }

    pub fn n_attrs(&self) -> usize {
        self.cmi.len()
    }

    /// First attribute with maximal mutual information with the class.
    pub fn root_by_class_information(&self) -> usize {
        argmax_first(&self.mi_class)
    }
}

/// `sum_{i != j} w[i][j] / (n (n - 1))`; zero when `n < 2`.
pub fn average_off_diagonal(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, row) in w.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                sum += v;
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Index of the first maximum.
pub fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Kruskal's maximum-weight spanning tree over the complete graph with
/// symmetric weights `w`. Equal weights are taken in ascending `(i, j)`
/// order. Edges are returned as `(i, j)` with `i < j`, in insertion order.
pub fn maximum_spanning_tree(w: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = w.len();
    let mut edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    edges.sort_by(|&(a, b), &(c, d)| w[c][d].total_cmp(&w[a][b]).then((a, b).cmp(&(c, d))));
    let mut sets = DisjointSet::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for (i, j) in edges {
        if sets.union(i, j) {
            tree.push((i, j));
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    tree
}

/// Directs undirected `edges` away from `root`; returns each node's parent.
pub fn orient_from_root(n: usize, edges: &[(usize, usize)], root: usize) -> Vec<Option<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    parent
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Nb,
    Tan,
    Fan,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Nb, ClassifierKind::Tan, ClassifierKind::Fan];

    pub fn label(self) -> &'static str {
        match self {
            ClassifierKind::Nb => "NB",
            ClassifierKind::Tan => "TAN",
            ClassifierKind::Fan => "FAN",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Nb => "nb",
            ClassifierKind::Tan => "tan",
            ClassifierKind::Fan => "fan",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nb" => Ok(ClassifierKind::Nb),
            "tan" => Ok(ClassifierKind::Tan),
            "fan" => Ok(ClassifierKind::Fan),
            other => Err(format!("unknown classifier {other:?} (expected nb, tan or fan)")),
        }
    }
}

/// Attribute parents on top of the implicit class parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStructure {
    pub kind: ClassifierKind,
    #[serde(with = "parent_map")]
    pub attr_parent: Vec<Option<usize>>,
    pub root: Option<usize>,
}

/// Serializes parents as a `{child: parent}` map holding only real edges.
mod parent_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        n_attrs: usize,
        edges: BTreeMap<usize, usize>,
    }

    pub fn serialize<S: Serializer>(parents: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        Repr {
            n_attrs: parents.len(),
            edges: parents
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.map(|p| (i, p)))
                .collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        let repr = Repr::deserialize(d)?;
        let mut parents = vec![None; repr.n_attrs];
        for (child, parent) in repr.edges {
            let slot = parents
                .get_mut(child)
                .ok_or_else(|| serde::de::Error::custom(format!("edge child {child} out of range")))?;
            *slot = Some(parent);
        }
        Ok(parents)
    }
}

impl NetworkStructure {
    pub fn n_attrs(&self) -> usize {
        self.attr_parent.len()
    }

    /// Directed attribute edges as `(parent, child)`, ordered by child.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.attr_parent
            .iter()
            .enumerate()
            .filter_map(|(child, p)| p.map(|p| (p, child)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), BayesError> {
        let n = self.n_attrs();
        for (child, p) in self.attr_parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n || p == child {
                    return Err(BayesError::InvalidStructure(format!("attribute {child} has parent {p}")));
                }
            }
        }
        if self.root.is_some_and(|r| r >= n) {
            return Err(BayesError::InvalidStructure("root out of range".into()));
        }
        for start in 0..n {
            let mut cur = start;
            for _ in 0..=n {
                match self.attr_parent[cur] {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            if self.attr_parent[cur].is_some() {
                return Err(BayesError::InvalidStructure(format!("cycle through attribute {start}")));
            }
        }
        Ok(())
    }
}

pub fn construct_nb(ds: &DiscreteDataset) -> NetworkStructure {
    NetworkStructure {
        kind: ClassifierKind::Nb,
        attr_parent: vec![None; ds.n_attrs()],
        root: None,
    }
}

/// TAN over precomputed weights: maximum spanning tree directed from `root`.
pub fn tan_from_weights(mi: &MutualInfoMatrix, root: usize) -> Result<NetworkStructure, BayesError> {
    let n = mi.n_attrs();
    if n < 2 {
        return Err(BayesError::DegenerateStructure { n });
    }
    if root >= n {
        return Err(BayesError::InvalidStructure(format!("root {root} outside 0..{n}")));
    }
    let tree = maximum_spanning_tree(&mi.cmi);
    Ok(NetworkStructure {
        kind: ClassifierKind::Tan,
        attr_parent: orient_from_root(n, &tree, root),
        root: Some(root),
    })
}

/// Tree-augmented naive Bayes; the root defaults to attribute 0.
pub fn construct_tan(ds: &DiscreteDataset, root_override: Option<usize>) -> Result<(NetworkStructure, MutualInfoMatrix), BayesError> {
    if ds.n_attrs() < 2 {
        return Err(BayesError::DegenerateStructure { n: ds.n_attrs() });
    }
    let mi = MutualInfoMatrix::compute(ds)?;
    let s = tan_from_weights(&mi, root_override.unwrap_or(0))?;
    Ok((s, mi))
}

/// FAN over precomputed weights. The tree is rooted at the attribute most
/// informative about the class; directed edges whose CMI is strictly below
/// `threshold_multiplier * i_avg` are removed, as are zero-CMI edges for
/// any positive multiplier. An infinite multiplier removes every edge.
pub fn fan_from_weights(mi: &MutualInfoMatrix, threshold_multiplier: f64) -> Result<NetworkStructure, BayesError> {
    if threshold_multiplier.is_nan() || threshold_multiplier < 0.0 {
        return Err(BayesError::InvalidStructure(format!(
            "threshold multiplier must be >= 0, got {threshold_multiplier}"
        )));
    }
    let root = mi.root_by_class_information();
    let mut s = tan_from_weights(mi, root)?;
    s.kind = ClassifierKind::Fan;
    let threshold = if threshold_multiplier.is_infinite() {
        f64::INFINITY
    } else {
        threshold_multiplier * mi.i_avg
    };
    for child in 0..s.n_attrs() {
        if let Some(p) = s.attr_parent[child] {
            let w = mi.cmi[p][child];
            // A positive multiplier never keeps an edge that carries no
            // information, even when I_avg = 0 makes the threshold vanish.
            if w < threshold || (threshold_multiplier > 0.0 && w <= 0.0) {
                s.attr_parent[child] = None;
            }
        }
    }
    Ok(s)
}

pub fn construct_fan(ds: &DiscreteDataset, threshold_multiplier: f64) -> Result<(NetworkStructure, MutualInfoMatrix), BayesError> {
    if ds.n_attrs() < 2 {
        return Err(BayesError::DegenerateStructure { n: ds.n_attrs() });
    }
    let mi = MutualInfoMatrix::compute(ds)?;
    let s = fan_from_weights(&mi, threshold_multiplier)?;
    Ok((s, mi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttributeTable {
    /// `probs[c][a] = P(a | c)`
    Class { probs: Vec<Vec<f64>> },
    /// `probs[c][b][a] = P(a | parent = b, c)`
    ClassAndParent { parent: usize, probs: Vec<Vec<Vec<f64>>> },
}

impl AttributeTable {
    fn parent(&self) -> Option<usize> {
        match self {
            AttributeTable::Class { .. } => None,
            AttributeTable::ClassAndParent { parent, .. } => Some(*parent),
        }
    }

    #[inline]
    fn prob(&self, c: usize, x: &[usize], attr: usize) -> f64 {
        match self {
            AttributeTable::Class { probs } => probs[c][x[attr]],
            AttributeTable::ClassAndParent { parent, probs } => probs[c][x[*parent]][x[attr]],
        }
    }

    /// Every conditional distribution in the table.
    pub fn slices(&self) -> Vec<&[f64]> {
        match self {
            AttributeTable::Class { probs } => probs.iter().map(Vec::as_slice).collect(),
            AttributeTable::ClassAndParent { probs, .. } => probs.iter().flatten().map(Vec::as_slice).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalProbabilityTable {
    pub class_prior: Vec<f64>,
    pub attributes: Vec<AttributeTable>,
}

impl ConditionalProbabilityTable {
    pub fn class_count(&self) -> usize {
        self.class_prior.len()
    }

    /// The class prior followed by every attribute slice.
    pub fn all_slices(&self) -> Vec<&[f64]> {
        std::iter::once(self.class_prior.as_slice())
            .chain(self.attributes.iter().flat_map(AttributeTable::slices))
            .collect()
    }

    fn cardinality(&self, attr: usize) -> usize {
        match &self.attributes[attr] {
            AttributeTable::Class { probs } => probs[0].len(),
            AttributeTable::ClassAndParent { probs, .. } => probs[0][0].len(),
        }
    }
}

/// Laplace estimates:
/// `P(c) = (N(c)+1)/(N+k)`, `P(a|c) = (N(c,a)+1)/(N(c)+v)`,
/// `P(a|b,c) = (N(c,a,b)+1)/(N(c,b)+v)`.
pub fn fit_parameters(ds: &DiscreteDataset, s: &NetworkStructure) -> Result<ConditionalProbabilityTable, BayesError> {
    if s.n_attrs() != ds.n_attrs() {
        return Err(BayesError::Dimension {
            expected: ds.n_attrs(),
            found: s.n_attrs(),
        });
    }
    s.validate()?;
    let k = ds.class_count;
    let n = ds.len() as f64;
    let mut class_counts = vec![0u64; k];
    for (_, c) in ds.instances() {
        class_counts[c] += 1;
    }
    let class_prior = class_counts.iter().map(|&nc| (nc as f64 + 1.0) / (n + k as f64)).collect();

    let attributes = (0..ds.n_attrs())
        .map(|i| {
            let v = ds.cardinalities[i];
            match s.attr_parent[i] {
                None => {
                    let mut counts = vec![vec![0u64; v]; k];
                    for (row, c) in ds.instances() {
                        counts[c][row[i]] += 1;
                    }
                    let probs = counts
                        .iter()
                        .zip(&class_counts)
                        .map(|(row, &nc)| row.iter().map(|&cnt| (cnt as f64 + 1.0) / (nc as f64 + v as f64)).collect())
                        .collect();
                    AttributeTable::Class { probs }
                }
                Some(p) => {
                    let vp = ds.cardinalities[p];
                    let mut counts = vec![vec![vec![0u64; v]; vp]; k];
                    for (row, c) in ds.instances() {
                        counts[c][row[p]][row[i]] += 1;
                    }
                    let probs = counts
                        .iter()
                        .map(|per_parent| {
                            per_parent
                                .iter()
                                .map(|row| {
                                    let ncb: u64 = row.iter().sum();
                                    row.iter().map(|&cnt| (cnt as f64 + 1.0) / (ncb as f64 + v as f64)).collect()
                                })
                                .collect()
                        })
                        .collect();
                    AttributeTable::ClassAndParent { parent: p, probs }
                }
            }
        })
        .collect();
    Ok(ConditionalProbabilityTable {
        class_prior,
        attributes,
    })
}

fn check_query(cpt: &ConditionalProbabilityTable, s: &NetworkStructure, x: &[usize]) -> Result<(), BayesError> {
    if s.n_attrs() != cpt.attributes.len() {
        return Err(BayesError::Dimension {
            expected: cpt.attributes.len(),
            found: s.n_attrs(),
        });
    }
    for (i, table) in cpt.attributes.iter().enumerate() {
        if table.parent() != s.attr_parent[i] {
            return Err(BayesError::InvalidStructure(format!(
                "attribute {i}: table parent {:?} disagrees with structure {:?}",
                table.parent(),
                s.attr_parent[i]
            )));
        }
    }
    let cards: Vec<usize> = (0..cpt.attributes.len()).map(|i| cpt.cardinality(i)).collect();
    check_instance(&cards, x)
}

/// Unnormalized log scores `ln P(c) + sum_i ln P(a_i | parent, c)`.
pub fn log_scores(cpt: &ConditionalProbabilityTable, s: &NetworkStructure, x: &[usize]) -> Result<Vec<f64>, BayesError> {
    check_query(cpt, s, x)?;
    Ok((0..cpt.class_count())
        .map(|c| {
            cpt.class_prior[c].ln()
                + cpt
                    .attributes
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t.prob(c, x, i).ln())
                    .sum::<f64>()
        })
        .collect())
}

/// Class posterior `P(c | x)`, normalized from log scores.
pub fn posterior(cpt: &ConditionalProbabilityTable, s: &NetworkStructure, x: &[usize]) -> Result<Vec<f64>, BayesError> {
    let scores = log_scores(cpt, s, x)?;
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|u| u / z).collect())
}

/// MAP class (0-based); ties go to the lowest index.
pub fn classify_map(cpt: &ConditionalProbabilityTable, s: &NetworkStructure, x: &[usize]) -> Result<usize, BayesError> {
    Ok(argmax_first(&posterior(cpt, s, x)?))
}

/// How a structure is learned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureOptions {
    pub kind: ClassifierKind,
    pub threshold_multiplier: f64,
    pub root_override: Option<usize>,
}

impl Default for StructureOptions {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Nb,
            threshold_multiplier: 1.0,
            root_override: None,
        }
    }
}

pub fn learn_structure(ds: &DiscreteDataset, opts: &StructureOptions) -> Result<NetworkStructure, BayesError> {
    Ok(match opts.kind {
        ClassifierKind::Nb => construct_nb(ds),
        ClassifierKind::Tan => construct_tan(ds, opts.root_override)?.0,
        ClassifierKind::Fan => construct_fan(ds, opts.threshold_multiplier)?.0,
    })
}

/// A learned structure with its Laplace-smoothed tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesClassifier {
    pub cardinalities: Vec<usize>,
    pub class_count: usize,
    pub structure: NetworkStructure,
    pub cpt: ConditionalProbabilityTable,
}

impl BayesClassifier {
    pub fn fit(ds: &DiscreteDataset, opts: &StructureOptions) -> Result<Self, BayesError> {
        let structure = learn_structure(ds, opts)?;
        let cpt = fit_parameters(ds, &structure)?;
        Ok(Self {
            cardinalities: ds.cardinalities.clone(),
            class_count: ds.class_count,
            structure,
            cpt,
        })
    }

    pub fn posterior(&self, x: &[usize]) -> Result<Vec<f64>, BayesError> {
        posterior(&self.cpt, &self.structure, x)
    }

    pub fn predict(&self, x: &[usize]) -> Result<usize, BayesError> {
        classify_map(&self.cpt, &self.structure, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(cards: &[usize], k: usize, rows: &[(&[usize], usize)]) -> DiscreteDataset {
        DiscreteDataset::with_instances(cards.to_vec(), k, rows.iter().map(|(r, c)| (r.to_vec(), *c))).unwrap()
    }

    #[test]
    fn cmi_zero_for_product_distribution() {
        // per class, (x, y) covers the full product grid once
        let mut rows = Vec::new();
        for c in 0..2 {
            for x in 0..2 {
                for y in 0..3 {
                    rows.push((vec![x, y], c));
                }
            }
        }
        let d = DiscreteDataset::with_instances(vec![2, 3], 2, rows).unwrap();
        assert!(conditional_mutual_information(&d, 0, 1).unwrap().abs() < 1e-9);
    }

    #[test]
    fn cmi_of_copied_binary_column() {
        let d = ds(
            &[2, 2],
            2,
            &[(&[0, 0], 0), (&[1, 1], 0), (&[0, 0], 1), (&[1, 1], 1)],
        );
        let v = conditional_mutual_information(&d, 0, 1).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        assert_eq!(v, conditional_mutual_information(&d, 1, 0).unwrap());
    }

    #[test]
    fn cmi_errors() {
        let d = ds(&[2, 2], 2, &[]);
        assert!(matches!(conditional_mutual_information(&d, 0, 1), Err(BayesError::InsufficientData(_))));
        let d = ds(&[2, 2], 2, &[(&[0, 0], 0)]);
        assert!(conditional_mutual_information(&d, 1, 1).is_err());
        assert!(conditional_mutual_information(&d, 0, 2).is_err());
    }

    #[test]
    fn mi_constant_attribute_and_class_copy() {
        let d = ds(&[1, 3], 3, &[(&[0, 0], 0), (&[0, 1], 1), (&[0, 2], 2)]);
        assert_eq!(mutual_information_with_class(&d, 0).unwrap(), 0.0);
        assert!((mutual_information_with_class(&d, 1).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nb_has_no_attribute_edges() {
        let d = ds(&[2; 16], 2, &[]);
        let s = construct_nb(&d);
        assert_eq!(s.n_attrs(), 16);
        assert!(s.edges().is_empty());
        s.validate().unwrap();
    }

    #[test]
    fn tan_two_attributes_single_edge() {
        let d = ds(&[2, 2], 2, &[(&[0, 1], 0), (&[1, 1], 1)]);
        let (s, _) = construct_tan(&d, None).unwrap();
        assert_eq!(s.edges(), vec![(0, 1)]);
        let (s, _) = construct_tan(&d, Some(1)).unwrap();
        assert_eq!(s.edges(), vec![(1, 0)]);
    }

    #[test]
    fn tan_needs_two_attributes() {
        let d = ds(&[2], 2, &[(&[0], 0)]);
        assert!(matches!(construct_tan(&d, None), Err(BayesError::DegenerateStructure { n: 1 })));
        assert!(matches!(construct_fan(&d, 1.0), Err(BayesError::DegenerateStructure { n: 1 })));
    }

    #[test]
    fn kruskal_ties_follow_index_order() {
        let w = vec![vec![0.0; 4]; 4];
        assert_eq!(maximum_spanning_tree(&w), vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn fan_limits() {
        let d = ds(
            &[2, 2, 2],
            2,
            &[(&[0, 0, 1], 0), (&[1, 1, 0], 0), (&[0, 0, 0], 1), (&[1, 1, 1], 1), (&[0, 1, 1], 1)],
        );
        let (fan0, mi) = construct_fan(&d, 0.0).unwrap();
        let tan = tan_from_weights(&mi, mi.root_by_class_information()).unwrap();
        assert_eq!(fan0.edges(), tan.edges());
        let (fan_inf, _) = construct_fan(&d, f64::INFINITY).unwrap();
        assert!(fan_inf.edges().is_empty());
        assert!(construct_fan(&d, -1.0).is_err());
    }

    #[test]
    fn fan_without_dependence_is_nb() {
        // one row: every CMI and I_avg are zero
        let d = ds(&[2, 3, 2], 2, &[(&[1, 2, 0], 1)]);
        let (fan0, mi) = construct_fan(&d, 0.0).unwrap();
        assert_eq!(mi.i_avg, 0.0);
        assert_eq!(fan0.edges().len(), 2);
        let (fan, _) = construct_fan(&d, 1e-3).unwrap();
        assert_eq!(fan.attr_parent, construct_nb(&d).attr_parent);
    }

    #[test]
    fn laplace_prior_on_balanced_classes() {
        let mut d = DiscreteDataset::new(vec![5], 5).unwrap();
        for i in 0..100 {
            d.push(vec![i % 5], i % 5).unwrap();
        }
        let cpt = fit_parameters(&d, &construct_nb(&d)).unwrap();
        assert_eq!(cpt.class_prior, vec![0.2; 5]);
    }

    #[test]
    fn laplace_on_empty_dataset() {
        let d = ds(&[5, 5], 5, &[]);
        let cpt = fit_parameters(&d, &construct_nb(&d)).unwrap();
        assert_eq!(cpt.class_prior, vec![0.2; 5]);
        for slice in cpt.all_slices() {
            assert!(slice.iter().all(|&p| p == 0.2));
        }
    }

    #[test]
    fn laplace_single_instance() {
        let d = ds(&[5], 2, &[(&[0], 0)]);
        let cpt = fit_parameters(&d, &construct_nb(&d)).unwrap();
        let AttributeTable::Class { probs } = &cpt.attributes[0] else { panic!() };
        assert!((probs[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((probs[1][0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn uniform_tables_give_uniform_posterior() {
        let d = ds(&[3, 3], 4, &[]);
        let s = construct_nb(&d);
        let cpt = fit_parameters(&d, &s).unwrap();
        let p = posterior(&cpt, &s, &[2, 0]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert_eq!(classify_map(&cpt, &s, &[2, 0]).unwrap(), 0);
    }

    #[test]
    fn out_of_range_query() {
        let d = ds(&[3, 3], 2, &[]);
        let s = construct_nb(&d);
        let cpt = fit_parameters(&d, &s).unwrap();
        assert!(matches!(posterior(&cpt, &s, &[3, 0]), Err(BayesError::Domain { attr: 0, value: 3, .. })));
        assert!(matches!(posterior(&cpt, &s, &[0]), Err(BayesError::Dimension { .. })));
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(argmax_first(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax_first(&[0.5, 0.5]), 0);
        let scaled: Vec<f64> = [0.1, 0.7, 0.2].iter().map(|x| x * 37.5).collect();
        assert_eq!(argmax_first(&scaled), 1);
    }

    #[test]
    fn structure_validation_rejects_cycles() {
        let s = NetworkStructure {
            kind: ClassifierKind::Tan,
            attr_parent: vec![Some(1), Some(0)],
            root: None,
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn structure_json_uses_edge_map() {
        let s = NetworkStructure {
            kind: ClassifierKind::Fan,
            attr_parent: vec![None, Some(0), None],
            root: Some(0),
        };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"fan","attr_parent":{"n_attrs":3,"edges":{"1":0}},"root":0}"#);
        assert_eq!(serde_json::from_str::<NetworkStructure>(&json).unwrap(), s);
    }
}
