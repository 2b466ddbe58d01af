//! Vector quantization of block descriptors into discrete labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{block_descriptor, BlockDescriptor, FeatureConfig, FeatureError};
use crate::imageio::{partition_blocks, BlockGrid, GrayImage, ImageError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("insufficient data: {distinct} distinct descriptors for k = {k}")]
    InsufficientData { distinct: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("descriptor has {found} coordinates, codebook expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

const STD_FLOOR: f64 = 1e-12;

/// k-means centroids in z-scored descriptor space, with the normalization
/// statistics they were fitted under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

impl Codebook {
    pub fn dim(&self) -> usize {
        self.feature_means.len()
    }

    pub fn normalize(&self, d: &[f64]) -> Result<Vec<f64>, ClusterError> {
        if d.len() != self.dim() {
            return Err(ClusterError::Dimension {
                expected: self.dim(),
                found: d.len(),
            });
        }
        Ok(d.iter()
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}

/// One discrete instance: a 1-based cluster label per block position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub labels: Vec<usize>,
    pub class: Option<usize>,
}

impl LabelVector {
    /// Zero-based attribute states, as consumed by the Bayesian networks.
    pub fn states(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l - 1).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn zscore_stats(data: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let dim = data[0].len();
    let n = data.len() as f64;
    let mut means = vec![0.0; dim];
    for row in data {
        for (m, x) in means.iter_mut().zip(row.iter()) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = vec![0.0; dim];
    for row in data {
        for ((s, x), m) in stds.iter_mut().zip(row.iter()).zip(&means) {
            *s += (x - m).powi(2);
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt().max(STD_FLOOR);
    }
    (means, stds)
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        // a point with zero distance can never be picked, so centroids stay distinct
        let mut chosen = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                chosen = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
        }
        let c = points[chosen.expect("enough distinct points were checked")].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Result of a k-means run, including the objective after each assignment.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub codebook: Codebook,
    pub assignments: Vec<usize>,
    pub objective_trace: Vec<f64>,
}

/// z-scores the descriptors, seeds centers with k-means++ and runs Lloyd
/// iterations until the assignment stops changing or `max_iter` is hit.
pub fn kmeans_fit(descriptors: &[&[f64]], k: usize, seed: u64, max_iter: usize) -> Result<KmeansFit, ClusterError> {
    if k < 2 {
        return Err(ClusterError::InvalidK(k));
    }
    if descriptors.len() < k {
        return Err(ClusterError::InsufficientData {
            distinct: descriptors.len(),
            k,
        });
    }
    let dim = descriptors[0].len();
    if let Some(bad) = descriptors.iter().find(|d| d.len() != dim) {
        return Err(ClusterError::Dimension {
            expected: dim,
            found: bad.len(),
        });
    }
    let (feature_means, feature_stds) = zscore_stats(descriptors);
    let points: Vec<Vec<f64>> = descriptors
        .iter()
        .map(|d| {
            d.iter()
                .zip(feature_means.iter().zip(&feature_stds))
                .map(|(x, (m, s))| (x - m) / s)
                .collect()
        })
        .collect();
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    sorted.dedup();
    if sorted.len() < k {
        return Err(ClusterError::InsufficientData {
            distinct: sorted.len(),
            k,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&points, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut objective_trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut next: Vec<(usize, f64)> = points.iter().map(|p| nearest(p, &centroids)).collect();
        reseed_empty(&points, &mut centroids, &mut next);
        let labels: Vec<usize> = next.iter().map(|(j, _)| *j).collect();
        objective_trace.push(next.iter().map(|(_, d)| d).sum());
        if labels == assignments {
            break;
        }
        assignments = labels;
        update_centroids(&points, &assignments, &mut centroids);
    }
    Ok(KmeansFit {
        codebook: Codebook {
            k,
            centroids,
            feature_means,
            feature_stds,
        },
        assignments,
        objective_trace,
    })
}

/// Moves each empty cluster's centroid onto the point lying farthest from
/// its current centroid, taken from a cluster with more than one member.
fn reseed_empty(points: &[Vec<f64>], centroids: &mut [Vec<f64>], assign: &mut [(usize, f64)]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for (j, _) in assign.iter() {
            sizes[*j] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = assign
            .iter()
            .enumerate()
            .filter(|(_, (j, d))| sizes[*j] > 1 && *d > 0.0)
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i);
        let Some(i) = donor else {
            return;
        };
        centroids[empty] = points[i].clone();
        assign[i] = (empty, 0.0);
    }
}

fn update_centroids(points: &[Vec<f64>], assignments: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &j) in points.iter().zip(assignments) {
        counts[j] += 1;
        for (s, x) in sums[j].iter_mut().zip(p) {
            *s += x;
        }
    }
    for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
        if n > 0 {
            *c = s.into_iter().map(|v| v / n as f64).collect();
        }
    }
}

/// 1-based label of the nearest centroid in normalized space.
pub fn assign_label(d: &[f64], cb: &Codebook) -> Result<usize, ClusterError> {
    let z = cb.normalize(d)?;
    Ok(nearest(&z, &cb.centroids).0 + 1)
}

/// Descriptors for every block of `img`, row-major.
pub fn image_descriptors(img: &GrayImage, grid: BlockGrid, cfg: &FeatureConfig) -> Result<Vec<BlockDescriptor>, ClusterError> {
    partition_blocks(img, grid)?
        .iter()
        .map(|b| block_descriptor(b, cfg).map_err(ClusterError::from))
        .collect()
}

pub fn label_image(img: &GrayImage, cb: &Codebook, grid: BlockGrid, cfg: &FeatureConfig) -> Result<LabelVector, ClusterError> {
    let labels = image_descriptors(img, grid, cfg)?
        .iter()
        .map(|d| assign_label(d.as_slice(), cb))
        .collect::<Result<_, _>>()?;
    Ok(LabelVector { labels, class: None })
}
