//! Per-block descriptors: Haralick texture statistics over a gray-level
//! co-occurrence matrix, plus a Gaussian-mixture summary of the intensity
//! distribution whose order is picked by BIC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::GrayImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("block of {width}x{height} has no pixel pair at offset ({dr}, {dc})")]
    DegenerateBlock {
        width: usize,
        height: usize,
        dr: isize,
        dc: isize,
    },
    #[error("insufficient data: {samples} samples for {components} components")]
    InsufficientData { samples: usize, components: usize },
    #[error("invalid feature configuration: {0}")]
    Config(String),
}

/// Normalized, symmetric co-occurrence matrix over `levels` gray levels.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    levels: usize,
    p: Vec<f64>,
}

impl GlcmMatrix {
    /// Every entry `1 / L^2`.
    pub fn uniform(levels: usize) -> Self {
        let n = levels * levels;
        Self {
            levels,
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.levels + j]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.p
            .iter()
            .enumerate()
            .map(|(idx, &v)| (idx / self.levels, idx % self.levels, v))
    }
}

/// Maps an intensity onto one of `levels` equal-width bins.
#[inline]
fn quantize(value: u16, maxval: u16, levels: usize) -> usize {
    value as usize * levels / (maxval as usize + 1)
}

/// Co-occurrence counts at `offset` and its negation, normalized to sum 1.
pub fn glcm(block: &GrayImage, levels: usize, offset: (isize, isize)) -> Result<GlcmMatrix, FeatureError> {
    if levels < 2 {
        return Err(FeatureError::Config(format!("GLCM needs at least 2 levels, got {levels}")));
    }
    let (dr, dc) = offset;
    let (h, w) = (block.height() as isize, block.width() as isize);
    let mut counts = vec![0u64; levels * levels];
    let mut pairs = 0u64;
    for r in 0..h {
        let r2 = r + dr;
        if r2 < 0 || r2 >= h {
            continue;
        }
        for c in 0..w {
            let c2 = c + dc;
            if c2 < 0 || c2 >= w {
                continue;
            }
            let a = quantize(block.get(r as usize, c as usize), block.maxval(), levels);
            let b = quantize(block.get(r2 as usize, c2 as usize), block.maxval(), levels);
            counts[a * levels + b] += 1;
            counts[b * levels + a] += 1;
            pairs += 2;
        }
    }
    if pairs == 0 {
        return Err(FeatureError::DegenerateBlock {
            width: block.width(),
            height: block.height(),
            dr,
            dc,
        });
    }
    let total = pairs as f64;
    Ok(GlcmMatrix {
        levels,
        p: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaralickFeatures {
    pub energy: f64,
    pub entropy: f64,
    pub contrast: f64,
    pub homogeneity: f64,
}

/// Energy, entropy (natural log, `0 ln 0 = 0`), contrast and homogeneity.
pub fn haralick(m: &GlcmMatrix) -> HaralickFeatures {
    let mut f = HaralickFeatures {
        energy: 0.0,
        entropy: 0.0,
        contrast: 0.0,
        homogeneity: 0.0,
    };
    for (i, j, p) in m.iter() {
        if p <= 0.0 {
            continue;
        }
        let d2 = (i as f64 - j as f64).powi(2);
        f.energy += p * p;
        f.entropy -= p * p.ln();
        f.contrast += d2 * p;
        f.homogeneity += p / (1.0 + d2);
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

/// Univariate Gaussian mixture fitted by EM.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood after initialization and after every EM iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

impl GmmParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Components reordered by ascending mean.
    pub fn sorted_by_mean(&self) -> GmmParams {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| self.means[a].total_cmp(&self.means[b]));
        GmmParams {
            weights: order.iter().map(|&i| self.weights[i]).collect(),
            means: order.iter().map(|&i| self.means[i]).collect(),
            variances: order.iter().map(|&i| self.variances[i]).collect(),
            ..self.clone()
        }
    }
}

/// Lower bound on component variances: `1e-6 * range^2 + 1e-12`.
pub fn variance_floor(samples: &[f64]) -> f64 {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = if samples.is_empty() { 0.0 } else { hi - lo };
    1e-6 * range * range + 1e-12
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// k-means++ seeding for scalar samples. Falls back to a uniform draw when
/// every sample coincides with an existing center.
fn seed_centers(samples: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = vec![samples[rng.gen_range(0..samples.len())]];
    let mut d2: Vec<f64> = samples.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = samples.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..samples.len())
        };
        let c = samples[idx];
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(samples) {
            *d = d.min((x - c).powi(2));
        }
    }
    centers
}

struct Mixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl Mixture {
    /// Fills `resp` (n x k, row-major) with posterior responsibilities and
    /// returns the data log-likelihood.
    fn e_step(&self, samples: &[f64], resp: &mut [f64]) -> f64 {
        let k = self.weights.len();
        let consts: Vec<f64> = (0..k)
            .map(|j| self.weights[j].ln() - 0.5 * (LN_2PI + self.variances[j].ln()))
            .collect();
        let mut ll = 0.0;
        let mut row = vec![0.0; k];
        for (i, &x) in samples.iter().enumerate() {
            for j in 0..k {
                row[j] = consts[j] - 0.5 * (x - self.means[j]).powi(2) / self.variances[j];
            }
            let norm = log_sum_exp(&row);
            ll += norm;
            for j in 0..k {
                resp[i * k + j] = (row[j] - norm).exp();
            }
        }
        ll
    }

    fn m_step(&mut self, samples: &[f64], resp: &[f64], floor: f64) {
        let k = self.weights.len();
        let n = samples.len() as f64;
        for j in 0..k {
            let mut nk = 0.0;
            let mut sx = 0.0;
            for (i, &x) in samples.iter().enumerate() {
                let r = resp[i * k + j];
                nk += r;
                sx += r * x;
            }
            self.weights[j] = nk / n;
            if nk <= f64::MIN_POSITIVE {
                // dead component: zero weight, parameters left in place
                continue;
            }
            let mean = sx / nk;
            let sxx: f64 = samples
                .iter()
                .enumerate()
                .map(|(i, &x)| resp[i * k + j] * (x - mean).powi(2))
                .sum();
            self.means[j] = mean;
            self.variances[j] = (sxx / nk).max(floor);
        }
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
    }
}

fn mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Fits a `k`-component univariate mixture by EM.
///
/// Initialization: seeded k-means++ means, uniform weights, pooled sample
/// variance. Variances never drop below [`variance_floor`]. Iteration stops
/// once the log-likelihood gain falls under `cfg.tol` or after
/// `cfg.max_iter` iterations.
pub fn em_fit_gmm(samples: &[f64], k: usize, cfg: &EmConfig) -> Result<GmmParams, FeatureError> {
    if k == 0 || samples.len() < k {
        return Err(FeatureError::InsufficientData {
            samples: samples.len(),
            components: k,
        });
    }
    let floor = variance_floor(samples);
    let (mean, var) = mean_and_variance(samples);
    let var = var.max(floor);

    if k == 1 {
        let ll = samples
            .iter()
            .map(|x| -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var))
            .sum();
        return Ok(GmmParams {
            weights: vec![1.0],
            means: vec![mean],
            variances: vec![var],
            log_likelihood: ll,
            trace: vec![ll],
            iterations: 1,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(k as u64);
    let mut mix = Mixture {
        weights: vec![1.0 / k as f64; k],
        means: seed_centers(samples, k, &mut rng),
        variances: vec![var; k],
    };
    let mut resp = vec![0.0; samples.len() * k];
    let mut ll = mix.e_step(samples, &mut resp);
    let mut trace = vec![ll];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        mix.m_step(samples, &resp, floor);
        let next = mix.e_step(samples, &mut resp);
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < cfg.tol {
            break;
        }
    }
    Ok(GmmParams {
        weights: mix.weights,
        means: mix.means,
        variances: mix.variances,
        log_likelihood: ll,
        trace,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicResult {
    pub chosen_k: usize,
    pub params: GmmParams,
    /// `bic_values[K-1]` is BIC for a K-component fit.
    pub bic_values: Vec<f64>,
    pub free_params: Vec<usize>,
    pub n: usize,
}

/// Free parameters of a univariate K-component mixture.
pub fn free_parameter_count(k: usize) -> usize {
    3 * k - 1
}

/// Fits K = 1..=min(k_sup, n) components and keeps the BIC minimizer
/// (`-2 ln L + (3K - 1) ln n`), preferring the smaller K on ties.
pub fn bic_select(samples: &[f64], k_sup: usize, cfg: &EmConfig) -> Result<BicResult, FeatureError> {
    if samples.is_empty() {
        return Err(FeatureError::InsufficientData {
            samples: 0,
            components: 1,
        });
    }
    if k_sup == 0 {
        return Err(FeatureError::Config("k_sup must be at least 1".into()));
    }
    let n = samples.len();
    let ln_n = (n as f64).ln();
    let mut best: Option<(usize, GmmParams)> = None;
    let mut bic_values = Vec::new();
    let mut free_params = Vec::new();
    for k in 1..=k_sup.min(n) {
        let fit = em_fit_gmm(samples, k, cfg)?;
        let v = free_parameter_count(k);
        let bic = -2.0 * fit.log_likelihood + v as f64 * ln_n;
        let better = match &best {
            None => true,
            Some((bk, _)) => bic < bic_values[*bk - 1],
        };
        bic_values.push(bic);
        free_params.push(v);
        if better {
            best = Some((k, fit));
        }
    }
    let (chosen_k, params) = best.expect("at least one K is fitted");
    Ok(BicResult {
        chosen_k,
        params,
        bic_values,
        free_params,
        n,
    })
}

/// Everything that determines a block descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub levels: usize,
    pub offset: (isize, isize),
    pub k_sup: usize,
    pub em: EmConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            offset: (0, 1),
            k_sup: 3,
            em: EmConfig::default(),
        }
    }
}

impl FeatureConfig {
    pub fn descriptor_len(&self) -> usize {
        2 * self.k_sup + 4
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.levels < 2 {
            return Err(FeatureError::Config(format!("levels must be >= 2, got {}", self.levels)));
        }
        if self.k_sup == 0 {
            return Err(FeatureError::Config("k_sup must be >= 1".into()));
        }
        if self.offset == (0, 0) {
            return Err(FeatureError::Config("GLCM offset must be nonzero".into()));
        }
        if self.em.tol.is_nan() || self.em.tol < 0.0 {
            return Err(FeatureError::Config("tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Fixed-layout block descriptor:
/// `[weights; k_sup] ++ [means; k_sup] ++ [E, ENT, CONT, HOM]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockDescriptor(pub Vec<f64>);

impl BlockDescriptor {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn block_descriptor(block: &GrayImage, cfg: &FeatureConfig) -> Result<BlockDescriptor, FeatureError> {
    cfg.validate()?;
    let samples: Vec<f64> = block.pixels().iter().map(|&p| p as f64).collect();
    let gmm = bic_select(&samples, cfg.k_sup, &cfg.em)?.params.sorted_by_mean();
    let texture = match glcm(block, cfg.levels, cfg.offset) {
        Ok(m) => haralick(&m),
        Err(FeatureError::DegenerateBlock { .. }) => haralick(&GlcmMatrix::uniform(cfg.levels)),
        Err(e) => return Err(e),
    };
    let mut v = vec![0.0; cfg.descriptor_len()];
    for (j, (w, m)) in gmm.weights.iter().zip(&gmm.means).enumerate() {
        v[j] = *w;
        v[cfg.k_sup + j] = *m;
    }
    let tail = 2 * cfg.k_sup;
    v[tail] = texture.energy;
    v[tail + 1] = texture.entropy;
    v[tail + 2] = texture.contrast;
    v[tail + 3] = texture.homogeneity;
    Ok(BlockDescriptor(v))
}
