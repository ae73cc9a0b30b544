//! Labeled synthetic feature sequences with random monotone time warps.
//!
//! Each class has one smooth prototype trajectory: a low-order random
//! Fourier series per feature dimension, scaled by the envelope
//! `(2τ - 1)^4` so that motion happens near the start and the end while the
//! middle of the sequence is nearly still. Samples are warped copies of their
//! class prototype with additive Gaussian noise.

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RtwError};
use crate::rng::{derive_seed, seeded, uniform, unit_f64};
use crate::sampling::FeatureSequence;

/// Prototypes must have pairwise mean frame cosine below this value.
pub const MAX_PROTOTYPE_SIMILARITY: f64 = 0.3;
const HARMONICS: usize = 3;
const ENVELOPE_POWER: i32 = 4;
const WARP_SEGMENTS: usize = 4;
const DRAW_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub prototype_length: usize,
    pub d_model: usize,
    /// In `[0, 1]`; bounds how far the warp map strays from the identity.
    pub warp_strength: f64,
    pub noise_sigma: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0
            || self.prototype_length == 0
            || self.d_model == 0
            || self.train_per_class == 0
            || self.test_per_class == 0
        {
            return invalid("synthetic dataset counts must all be at least 1");
        }
        if !(0.0..=1.0).contains(&self.warp_strength) {
            return invalid(format!("warp strength {} outside [0, 1]", self.warp_strength));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return invalid(format!("noise sigma {} must be finite and >= 0", self.noise_sigma));
        }
        Ok(())
    }

    pub fn label(class: usize) -> String {
        format!("class_{class:02}")
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub prototypes: Vec<FeatureSequence>,
    pub train: Vec<(FeatureSequence, String)>,
    pub test: Vec<(FeatureSequence, String)>,
}

fn fourier_trajectory(len: usize, dim: usize, rng: &mut impl RngCore) -> Vec<Vec<f64>> {
    // coefficients[d][h] = (cos, sin), damped by 1/h.
    let coeffs: Vec<Vec<(f64, f64)>> = (0..dim)
        .map(|_| {
            (1..=HARMONICS)
                .map(|h| {
                    let s = 1.0 / h as f64;
                    (uniform(rng, -s, s), uniform(rng, -s, s))
                })
                .collect()
        })
        .collect();
    (0..len)
        .map(|t| {
            let tau = if len > 1 { t as f64 / (len - 1) as f64 } else { 0.0 };
            coeffs
                .iter()
                .map(|cs| {
                    cs.iter()
                        .enumerate()
                        .map(|(h, &(a, b))| {
                            let w = std::f64::consts::PI * (h + 1) as f64 * tau;
                            a * w.cos() + b * w.sin()
                        })
                        .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// Mean over frames of the cosine between corresponding frames.
pub fn mean_frame_cosine(a: &FeatureSequence, b: &FeatureSequence) -> f64 {
    let n = a.len().min(b.len());
    let total: f64 = (0..n)
        .map(|t| {
            let (x, y) = (a.frame(t), b.frame(t));
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nx == 0.0 || ny == 0.0 {
                0.0
            } else {
                dot / (nx * ny)
            }
        })
        .sum();
    total / n as f64
}

/// Largest pairwise mean frame cosine among the prototypes (0 for one).
pub fn max_prototype_similarity(prototypes: &[FeatureSequence]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (i, a) in prototypes.iter().enumerate() {
        for b in &prototypes[i + 1..] {
            worst = worst.max(mean_frame_cosine(a, b));
        }
    }
    if worst.is_finite() {
        worst
    } else {
        0.0
    }
}

/// Rejection-samples `n_classes` prototypes that are pairwise dissimilar.
pub fn make_prototypes(spec: &SynthSpec) -> Result<Vec<FeatureSequence>> {
    spec.validate()?;
    let mut rng = seeded(derive_seed(spec.seed, 0x5052_4f54));
    let mut accepted: Vec<FeatureSequence> = Vec::with_capacity(spec.n_classes);
    let mut draws = 0;
    while accepted.len() < spec.n_classes {
        if draws == DRAW_BUDGET {
            return Err(RtwError::Generation(format!(
                "no set of {} prototypes with similarity below {MAX_PROTOTYPE_SIMILARITY} after {DRAW_BUDGET} draws",
                spec.n_classes
            )));
        }
        draws += 1;
        let mut frames = fourier_trajectory(spec.prototype_length, spec.d_model, &mut rng);
        let len = spec.prototype_length;
        for (t, f) in frames.iter_mut().enumerate() {
            let tau = if len > 1 { t as f64 / (len - 1) as f64 } else { 0.0 };
            let e = (2.0 * tau - 1.0).powi(ENVELOPE_POWER);
            for x in f.iter_mut() {
                *x *= e;
            }
        }
        let cand = FeatureSequence::new(SynthSpec::label(accepted.len()), frames)?;
        if accepted
            .iter()
            .all(|p| mean_frame_cosine(p, &cand) < MAX_PROTOTYPE_SIMILARITY)
        {
            accepted.push(cand);
        }
    }
    Ok(accepted)
}

/// Random monotone map from output positions to source frame indices.
///
/// The continuous map is `φ(τ) = (1 - s) τ + s G(τ)`, where `G` is a random
/// piecewise-linear CDF on `[0, 1]` and `s` the warp strength, so
/// `|φ(τ) - τ| <= s`. The output length is `round(n (1 + s v))` with `v`
/// uniform in `[-0.5, 0.5)`.
pub fn warp_index_map(n: usize, warp_strength: f64, rng: &mut impl RngCore) -> Vec<usize> {
    let s = warp_strength.clamp(0.0, 1.0);
    let v = unit_f64(rng) - 0.5;
    let n_out = ((n as f64) * (1.0 + s * v)).round().max(1.0) as usize;
    let segs = WARP_SEGMENTS;
    let weights: Vec<f64> = (0..segs).map(|_| 0.05 + unit_f64(rng)).collect();
    let total: f64 = weights.iter().sum();
    let mut knots = Vec::with_capacity(segs + 1);
    knots.push(0.0);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        knots.push(acc);
    }
    knots[segs] = 1.0;
    let cdf = |tau: f64| {
        let x = tau * segs as f64;
        let seg = (x.floor() as usize).min(segs - 1);
        let frac = x - seg as f64;
        knots[seg] + frac * (knots[seg + 1] - knots[seg])
    };
    let top = (n - 1) as f64;
    (0..n_out)
        .map(|i| {
            let tau = if n_out > 1 { i as f64 / (n_out - 1) as f64 } else { 0.0 };
            let phi = (1.0 - s) * tau + s * cdf(tau);
            ((phi * top).round() as usize).min(n - 1)
        })
        .collect()
}

/// Resamples `seq` through [`warp_index_map`] seeded with `seed`.
pub fn warp_sequence(seq: &FeatureSequence, warp_strength: f64, seed: u64) -> Result<FeatureSequence> {
    if !(0.0..=1.0).contains(&warp_strength) {
        return invalid(format!("warp strength {warp_strength} outside [0, 1]"));
    }
    if warp_strength == 0.0 {
        return Ok(seq.clone());
    }
    let map = warp_index_map(seq.len(), warp_strength, &mut seeded(seed));
    let data = map.iter().flat_map(|&j| seq.frame(j).iter().copied()).collect();
    FeatureSequence::from_flat(seq.id(), seq.dim(), data)
}

/// Adds i.i.d. `N(0, sigma²)` noise to every entry.
pub fn add_noise(seq: &FeatureSequence, sigma: f64, seed: u64) -> Result<FeatureSequence> {
    if sigma == 0.0 {
        return Ok(seq.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| RtwError::InvalidArgument(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = seeded(seed);
    let data = seq.as_flat().iter().map(|x| x + normal.sample(&mut rng)).collect();
    FeatureSequence::from_flat(seq.id(), seq.dim(), data)
}

pub fn generate_dataset(spec: &SynthSpec) -> Result<SynthDataset> {
    let prototypes = make_prototypes(spec)?;
    let sample = |split: u64, class: usize, idx: usize, name: &str| -> Result<(FeatureSequence, String)> {
        let stream = (split << 48) | ((class as u64) << 24) | idx as u64;
        let base = derive_seed(spec.seed, stream);
        let label = SynthSpec::label(class);
        let warped = warp_sequence(&prototypes[class], spec.warp_strength, derive_seed(base, 1))?;
        let noisy = add_noise(&warped, spec.noise_sigma, derive_seed(base, 2))?;
        Ok((noisy.with_id(format!("{name}_{label}_{idx:04}")), label))
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..spec.n_classes {
        for i in 0..spec.train_per_class {
            train.push(sample(1, c, i, "train")?);
        }
        for i in 0..spec.test_per_class {
            test.push(sample(2, c, i, "test")?);
        }
    }
    Ok(SynthDataset {
        prototypes,
        train,
        test,
    })
}
