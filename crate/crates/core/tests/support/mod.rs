//! Brute-force reference implementations used by the oracle tests and the
//! acceptance suite. Nothing here calls into the code under test except for
//! plain data accessors.

#![allow(dead_code, clippy::needless_range_loop)]

use blockbayes::bayesnet::{AttributeTable, ConditionalProbabilityTable, DiscreteDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rows, classes, cardinalities and class count of a dataset.
pub struct RawData {
    pub rows: Vec<Vec<usize>>,
    pub classes: Vec<usize>,
    pub cards: Vec<usize>,
    pub k: usize,
}

impl RawData {
    pub fn dataset(&self) -> DiscreteDataset {
        DiscreteDataset::with_instances(
            self.cards.clone(),
            self.k,
            self.rows.iter().cloned().zip(self.classes.iter().copied()),
        )
        .unwrap()
    }

    fn n(&self) -> f64 {
        self.rows.len() as f64
    }

    /// Empirical probability of the rows matching `pred`.
    fn prob(&self, pred: impl Fn(&[usize], usize) -> bool) -> f64 {
        self.rows
            .iter()
            .zip(&self.classes)
            .filter(|(r, &c)| pred(r, c))
            .count() as f64
            / self.n()
    }
}

/// Random dataset with `n_attrs` attributes of cardinality up to `max_card`,
/// up to `max_classes` classes and between 1 and `max_rows` rows. Half of
/// the attributes copy a noisy version of an earlier one so that CMI values
/// are not all near zero.
pub fn random_data(rng: &mut ChaCha8Rng, n_attrs: usize, max_card: usize, max_classes: usize, max_rows: usize) -> RawData {
    let cards: Vec<usize> = (0..n_attrs).map(|_| rng.gen_range(1..=max_card)).collect();
    let k = rng.gen_range(1..=max_classes);
    let n_rows = rng.gen_range(1..=max_rows);
    let sources: Vec<Option<usize>> = (0..n_attrs)
        .map(|i| (i > 0 && rng.gen_bool(0.5)).then(|| rng.gen_range(0..i)))
        .collect();
    let mut rows = Vec::with_capacity(n_rows);
    let mut classes = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let c = rng.gen_range(0..k);
        let mut row = vec![0; n_attrs];
        for i in 0..n_attrs {
            row[i] = match sources[i] {
                Some(s) if rng.gen_bool(0.7) => (row[s] + c) % cards[i],
                _ => rng.gen_range(0..cards[i]),
            };
        }
        rows.push(row);
        classes.push(c);
    }
    RawData {
        rows,
        classes,
        cards,
        k,
    }
}

/// `sum P(x,y,z) ln [P(x,y|z) / (P(x|z) P(y|z))]` by triple enumeration.
pub fn brute_cmi(d: &RawData, i: usize, j: usize) -> f64 {
    let mut total = 0.0;
    for z in 0..d.k {
        let pz = d.prob(|_, c| c == z);
        if pz == 0.0 {
            continue;
        }
        for x in 0..d.cards[i] {
            for y in 0..d.cards[j] {
                let pxyz = d.prob(|r, c| c == z && r[i] == x && r[j] == y);
                if pxyz == 0.0 {
                    continue;
                }
                let pxz = d.prob(|r, c| c == z && r[i] == x);
                let pyz = d.prob(|r, c| c == z && r[j] == y);
                total += pxyz * ((pxyz / pz) / ((pxz / pz) * (pyz / pz))).ln();
            }
        }
    }
    total.max(0.0)
}

/// `sum P(x,z) ln [P(x,z) / (P(x) P(z))]` by double enumeration.
pub fn brute_mi(d: &RawData, i: usize) -> f64 {
    let mut total = 0.0;
    for z in 0..d.k {
        for x in 0..d.cards[i] {
            let pxz = d.prob(|r, c| c == z && r[i] == x);
            if pxz == 0.0 {
                continue;
            }
            let px = d.prob(|r, _| r[i] == x);
            let pz = d.prob(|_, c| c == z);
            total += pxz * (pxz / (px * pz)).ln();
        }
    }
    total.max(0.0)
}

pub fn brute_i_avg(d: &RawData) -> f64 {
    let n = d.cards.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += brute_cmi(d, i, j);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

fn is_spanning_tree(n: usize, edges: &[(usize, usize)]) -> bool {
    // label propagation: merge components edge by edge, reject on a cycle
    let mut comp: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (ca, cb) = (comp[a], comp[b]);
        if ca == cb {
            return false;
        }
        for c in comp.iter_mut() {
            if *c == cb {
                *c = ca;
            }
        }
    }
    comp.iter().all(|&c| c == comp[0])
}

/// Weight of the heaviest spanning tree, by enumerating every (n-1)-subset
/// of the complete graph's edges.
pub fn brute_max_spanning_weight(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut best = f64::NEG_INFINITY;
    let mut chosen = Vec::with_capacity(n - 1);
    fn rec(
        edges: &[(usize, usize)],
        start: usize,
        need: usize,
        n: usize,
        w: &[Vec<f64>],
        chosen: &mut Vec<(usize, usize)>,
        best: &mut f64,
    ) {
        if need == 0 {
            if is_spanning_tree(n, chosen) {
                let total: f64 = chosen.iter().map(|&(a, b)| w[a][b]).sum();
                if total > *best {
                    *best = total;
                }
            }
            return;
        }
        for e in start..edges.len() {
            chosen.push(edges[e]);
            rec(edges, e + 1, need - 1, n, w, chosen, best);
            chosen.pop();
        }
    }
    rec(&edges, 0, n - 1, n, w, &mut chosen, &mut best);
    best
}

/// Posterior by enumerating the full joint `P(c, a_1..a_n)` in linear space
/// and conditioning on `x`.
pub fn brute_posterior(cpt: &ConditionalProbabilityTable, cards: &[usize], x: &[usize]) -> Vec<f64> {
    let k = cpt.class_prior.len();
    let n = cards.len();
    let mut joint_at_x = vec![0.0; k];
    let mut config = vec![0usize; n];
    let total_configs: usize = cards.iter().product();
    let mut mass = 0.0;
    for _ in 0..total_configs {
        for c in 0..k {
            let mut p = cpt.class_prior[c];
            for (i, table) in cpt.attributes.iter().enumerate() {
                p *= match table {
                    AttributeTable::Class { probs } => probs[c][config[i]],
                    AttributeTable::ClassAndParent { parent, probs } => probs[c][config[*parent]][config[i]],
                };
            }
            mass += p;
            if config.as_slice() == x {
                joint_at_x[c] += p;
            }
        }
        // odometer increment
        for i in 0..n {
            config[i] += 1;
            if config[i] < cards[i] {
                break;
            }
            config[i] = 0;
        }
    }
    assert!((mass - 1.0).abs() < 1e-9, "joint does not sum to one: {mass}");
    let px: f64 = joint_at_x.iter().sum();
    joint_at_x.iter().map(|p| p / px).collect()
}

/// Random symmetric weight matrix with zero diagonal; small integer weights
/// so ties are frequent.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = if rng.gen_bool(0.3) {
                rng.gen_range(0..4) as f64
            } else {
                rng.gen::<f64>()
            };
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    w
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
