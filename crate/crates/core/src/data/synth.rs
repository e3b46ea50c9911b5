use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{time_split, Batch, DEFAULT_SPLIT};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::{derive_seed, seeded_rng};

/// Parameters of a synthetic multi-task dataset.
///
/// Every task labels a sample positive when a noisy linear score of its
/// time-averaged features ranks in the top `imbalance` fraction. The score
/// noise has standard deviation `sd(score) / separability`, so an infinite
/// separability gives noise-free labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_tasks: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub timesteps: usize,
    /// Feature width including the trailing padding indicator.
    pub features: usize,
    pub separability: f64,
    pub imbalance: f64,
    /// Probability that a task is measured for a given sample.
    pub label_rate: f64,
    /// Probability that a sample is shorter than `timesteps`.
    pub short_rate: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Split `samples` into train / validation / test with the 70:14:8 ratio.
    pub fn with_total(samples: usize, n_tasks: usize, timesteps: usize, features: usize, imbalance: f64, seed: u64) -> Result<Self> {
        let [a, b, c] = time_split(samples, DEFAULT_SPLIT)?;
        Ok(SynthSpec {
            n_tasks,
            n_train: a.len(),
            n_val: b.len(),
            n_test: c.len(),
            timesteps,
            features,
            separability: 8.0,
            imbalance,
            label_rate: 0.9,
            short_rate: 0.2,
            seed,
        })
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: Batch,
    pub val: Batch,
    pub test: Batch,
    /// Per-task rule weights over the real (non-indicator) features.
    pub rules: Vec<Vec<f64>>,
}

/// Generate a deterministic synthetic dataset from `spec.seed`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<SynthData> {
    let n = spec.total();
    if n == 0 || spec.n_tasks == 0 || spec.timesteps == 0 || spec.features < 2 {
        return Err(Error::InvalidArgument(format!(
            "need samples, tasks and timesteps > 0 and features >= 2 (got {n}, {}, {}, {})",
            spec.n_tasks, spec.timesteps, spec.features
        )));
    }
    if !(spec.separability > 0.0) {
        return Err(Error::InvalidArgument("separability must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.label_rate) || !(0.0..=1.0).contains(&spec.short_rate) {
        return Err(Error::InvalidArgument("label_rate and short_rate must lie in [0, 1]".into()));
    }
    let n_pos = libm::round(spec.imbalance * n as f64) as usize;
    if !(spec.imbalance > 0.0 && spec.imbalance < 1.0) || n_pos == 0 || n_pos >= n {
        return Err(Error::InvalidArgument(format!(
            "imbalance {} yields {n_pos} positives out of {n}; need at least one of each class",
            spec.imbalance
        )));
    }

    let (t, f, m) = (spec.timesteps, spec.features, spec.n_tasks);
    let real = f - 1;

    let mut rng = seeded_rng(derive_seed(spec.seed, 1));
    let support = (real / 4).max(1);
    let rules: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let mut w = vec![0.0; real];
            for k in index::sample(&mut rng, real, support) {
                let mag = rng.random_range(0.5..1.5);
                w[k] = if rng.random::<bool>() { mag } else { -mag };
            }
            w
        })
        .collect();

    let mut rng = seeded_rng(derive_seed(spec.seed, 2));
    let mut x = vec![0.0; n * t * f];
    let mut pad = vec![0.0; n * t];
    let mut means = vec![0.0; n * real];
    for i in 0..n {
        let len = if t > 1 && rng.random::<f64>() < spec.short_rate { rng.random_range(1..t) } else { t };
        for s in 0..t {
            let row = &mut x[(i * t + s) * f..(i * t + s + 1) * f];
            if s < len {
                for k in 0..real {
                    row[k] = rng.random::<f64>();
                    means[i * real + k] += row[k] / len as f64;
                }
            } else {
                row[real] = 1.0;
                pad[i * t + s] = 1.0;
            }
        }
    }

    let mut rng = seeded_rng(derive_seed(spec.seed, 3));
    let mut labels = vec![0.0; n * 2 * m];
    let mut mask = vec![0.0; n * m];
    for (j, w) in rules.iter().enumerate() {
        let scores: Vec<f64> = (0..n)
            .map(|i| means[i * real..(i + 1) * real].iter().zip(w).map(|(a, b)| a * b).sum())
            .collect();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let sd = libm::sqrt(scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64);
        let noisy: Vec<f64> = if spec.separability.is_infinite() || sd == 0.0 {
            scores
        } else {
            let noise = Normal::new(0.0, sd / spec.separability)
                .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
            scores.iter().map(|s| s + noise.sample(&mut rng)).collect()
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| noisy[b].total_cmp(&noisy[a]).then(a.cmp(&b)));
        let mut positive = vec![false; n];
        for &i in &order[..n_pos] {
            positive[i] = true;
        }
        for i in 0..n {
            if rng.random::<f64>() < spec.label_rate {
                mask[i * m + j] = 1.0;
                labels[i * 2 * m + 2 * j + usize::from(positive[i])] = 1.0;
            }
        }
    }

    let all = Batch::new(
        Tensor::new(&[n, t, f], x)?,
        Tensor::new(&[n, t], pad)?,
        Tensor::new(&[n, 2 * m], labels)?,
        Tensor::new(&[n, m], mask)?,
    )?;
    let (a, b) = (spec.n_train, spec.n_train + spec.n_val);
    Ok(SynthData { train: all.slice(0..a)?, val: all.slice(a..b)?, test: all.slice(b..n)?, rules })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::label_counts;
    use crate::metrics::roc_auc;

    fn spec() -> SynthSpec {
        SynthSpec {
            n_tasks: 2,
            n_train: 300,
            n_val: 100,
            n_test: 50,
            timesteps: 3,
            features: 9,
            separability: f64::INFINITY,
            imbalance: 0.1,
            label_rate: 0.9,
            short_rate: 0.3,
            seed: 5,
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_dataset(&spec()).unwrap(), synth_dataset(&spec()).unwrap());
        let other = synth_dataset(&SynthSpec { seed: 6, ..spec() }).unwrap();
        assert_ne!(synth_dataset(&spec()).unwrap().train, other.train);
    }

    #[test]
    fn noiseless_rule_ranks_perfectly() {
        let d = synth_dataset(&spec()).unwrap();
        let b = &d.train;
        let (t, f) = (b.timesteps(), b.n_features());
        for (j, w) in d.rules.iter().enumerate() {
            let (idx, pos) = b.task_labels(j);
            let scores: Vec<f64> = idx
                .iter()
                .map(|&i| {
                    let steps: Vec<usize> = (0..t).filter(|&s| b.pad_mask.data()[i * t + s] == 0.0).collect();
                    steps
                        .iter()
                        .map(|&s| {
                            let row = &b.x.data()[(i * t + s) * f..(i * t + s) * f + f - 1];
                            row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>()
                        })
                        .sum::<f64>()
                        / steps.len() as f64
                })
                .collect();
            assert_eq!(roc_auc(&scores, &pos).unwrap(), 1.0);
        }
    }

    #[test]
    fn positive_rate_follows_imbalance() {
        let s = SynthSpec { n_train: 10_000, n_val: 0, n_test: 0, imbalance: 0.02, separability: 4.0, ..spec() };
        let d = synth_dataset(&s).unwrap();
        for [_, pos] in label_counts(&d.train.labels, &d.train.label_mask).unwrap() {
            assert!((150..=250).contains(&pos), "{pos}");
        }
    }

    #[test]
    fn padding_indicator_matches_mask() {
        let d = synth_dataset(&spec()).unwrap();
        let b = &d.train;
        let f = b.n_features();
        for (r, &m) in b.pad_mask.data().iter().enumerate() {
            assert_eq!(b.x.data()[r * f + f - 1], m);
        }
        assert!(b.pad_mask.data().contains(&1.0));
        assert!(b.pad_mask.data().chunks(3).all(|row| row[0] == 0.0));
    }

    #[test]
    fn infeasible_imbalance() {
        assert!(synth_dataset(&SynthSpec { imbalance: 0.0001, ..spec() }).is_err());
        assert!(synth_dataset(&SynthSpec { n_train: 0, n_val: 0, n_test: 0, ..spec() }).is_err());
    }
}
