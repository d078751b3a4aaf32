//! Seeded synthetic data: multi-label sets with planted label correlations
//! and small dense instances for the approximation-bound check.

use crate::data::{DenseMatrix, SparseDataset, SparseVector};
use crate::error::{Result, SllError};
use crate::io::SeededRng;

/// Shape of a planted multi-label dataset.
///
/// Examples mix a few latent topics; features are drawn mostly from the
/// vocabularies of those topics, and each label fires on the examples whose
/// weight on the label's two parent topics is highest. Labels that share a
/// parent topic are therefore correlated, both in their responses and in
/// their optimal classifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub n_labels: usize,
    pub n_topics: usize,
    pub avg_nnz: usize,
    pub avg_labels: f64,
    /// Standard deviation of the per-example label noise.
    pub noise: f64,
    pub seed: u64,
}

impl PlantedSpec {
    /// Sizes of the Bibtex benchmark: 4880/2515 examples, 1836 features,
    /// 159 labels, about 68.7 nonzeros and 2.4 labels per example.
    pub fn bibtex_like(seed: u64) -> Self {
        PlantedSpec {
            n_train: 4880,
            n_test: 2515,
            dim: 1836,
            n_labels: 159,
            n_topics: 40,
            avg_nnz: 69,
            avg_labels: 2.4,
            noise: 0.15,
            seed,
        }
    }

    /// A scaled-down version for quick runs.
    pub fn small(seed: u64) -> Self {
        PlantedSpec {
            n_train: 600,
            n_test: 300,
            dim: 120,
            n_labels: 30,
            n_topics: 10,
            avg_nnz: 15,
            avg_labels: 2.0,
            noise: 0.15,
            seed,
        }
    }
}

struct Planted {
    vocab: Vec<Vec<usize>>,
    parents: Vec<(usize, usize, f64)>,
    thresholds: Vec<f64>,
}

fn topic_mix(rng: &mut SeededRng, n_topics: usize) -> Vec<(usize, f64)> {
    let count = 1 + rng.below(3) as usize;
    let mut mix: Vec<(usize, f64)> = Vec::with_capacity(count);
    let mut total = 0.0;
    for _ in 0..count {
        let t = rng.below(n_topics as u32) as usize;
        let w = 0.2 + rng.unit_f64();
        total += w;
        match mix.iter_mut().find(|(tt, _)| *tt == t) {
            Some(e) => e.1 += w,
            None => mix.push((t, w)),
        }
    }
    for e in mix.iter_mut() {
        e.1 /= total;
    }
    mix
}

fn draw_example(rng: &mut SeededRng, spec: &PlantedSpec, plan: &Planted) -> (SparseVector, Vec<f64>) {
    let mix = topic_mix(rng, spec.n_topics);
    let mut theta = vec![0.0; spec.n_topics];
    for &(t, w) in &mix {
        theta[t] = w;
    }
    let nnz = (spec.avg_nnz / 2 + rng.below(spec.avg_nnz as u32 + 1) as usize).clamp(1, spec.dim);
    let mut feats: Vec<usize> = Vec::with_capacity(nnz);
    while feats.len() < nnz {
        let f = if rng.unit_f64() < 0.8 {
            let u = rng.unit_f64();
            let mut acc = 0.0;
            let mut topic = mix[mix.len() - 1].0;
            for &(t, w) in &mix {
                acc += w;
                if u < acc {
                    topic = t;
                    break;
                }
            }
            let v = &plan.vocab[topic];
            v[rng.below(v.len() as u32) as usize]
        } else {
            rng.below(spec.dim as u32) as usize
        };
        if !feats.contains(&f) {
            feats.push(f);
        }
    }
    feats.sort_unstable();
    let raw: Vec<f64> = feats.iter().map(|_| 0.5 + rng.unit_f64()).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = raw.iter().map(|v| v / norm).collect();
    let x = SparseVector::new(feats, values, spec.dim).expect("indices sorted and in range");
    let scores = plan
        .parents
        .iter()
        .map(|&(a, b, w)| theta[a] + w * theta[b] + spec.noise * rng.normal())
        .collect();
    (x, scores)
}

/// Train and test sets drawn from the same planted model.
pub fn planted_dataset(spec: &PlantedSpec) -> Result<(SparseDataset, SparseDataset)> {
    if spec.n_topics < 2 || spec.dim < spec.n_topics || spec.n_labels == 0 || spec.n_train == 0 || spec.n_test == 0 {
        return Err(SllError::InvalidConfig(format!("degenerate synthetic spec {:?}", spec)));
    }
    let mut rng = SeededRng::new(spec.seed);
    let vocab_size = (2 * spec.dim / spec.n_topics).max(2);
    let vocab = (0..spec.n_topics)
        .map(|_| (0..vocab_size).map(|_| rng.below(spec.dim as u32) as usize).collect())
        .collect();
    let parents = (0..spec.n_labels)
        .map(|_| {
            let a = rng.below(spec.n_topics as u32) as usize;
            let mut b = rng.below(spec.n_topics as u32 - 1) as usize;
            if b >= a {
                b += 1;
            }
            (a, b, 0.3 + 0.5 * rng.unit_f64())
        })
        .collect();
    let mut plan = Planted {
        vocab,
        parents,
        thresholds: Vec::new(),
    };

    // Label frequencies follow a decaying profile averaging `avg_labels`.
    let raw: Vec<f64> = (0..spec.n_labels).map(|l| 1.0 / (1.0 + l as f64 / 8.0)).collect();
    let scale = spec.avg_labels / raw.iter().sum::<f64>();
    let mut freqs: Vec<f64> = raw.iter().map(|r| (r * scale).clamp(0.005, 0.5)).collect();
    rng.shuffle(&mut freqs);

    let train_rows: Vec<(SparseVector, Vec<f64>)> =
        (0..spec.n_train).map(|_| draw_example(&mut rng, spec, &plan)).collect();
    plan.thresholds = (0..spec.n_labels)
        .map(|l| {
            let mut s: Vec<f64> = train_rows.iter().map(|(_, sc)| sc[l]).collect();
            s.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
            let idx = ((freqs[l] * spec.n_train as f64) as usize).clamp(1, spec.n_train) - 1;
            s[idx]
        })
        .collect();
    let test_rows: Vec<(SparseVector, Vec<f64>)> =
        (0..spec.n_test).map(|_| draw_example(&mut rng, spec, &plan)).collect();

    let build = |rows: Vec<(SparseVector, Vec<f64>)>| -> Result<SparseDataset> {
        let mut feats = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (x, sc) in rows {
            labels.push((0..spec.n_labels).filter(|&l| sc[l] >= plan.thresholds[l]).collect());
            feats.push(x);
        }
        SparseDataset::new(spec.dim, spec.n_labels, feats, labels)
    };
    Ok((build(train_rows)?, build(test_rows)?))
}

/// Dense Gaussian features (`n x d`) with `n_labels` labels from noisy
/// linear scores; the last label is a noisy copy of a mix of the others.
pub fn dense_instance(n: usize, d: usize, n_labels: usize, seed: u64) -> Result<SparseDataset> {
    if n == 0 || d == 0 || n_labels == 0 {
        return Err(SllError::InvalidConfig("empty dense instance".into()));
    }
    let mut rng = SeededRng::new(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    let w: Vec<Vec<f64>> = (0..n_labels).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    let mix: Vec<f64> = (0..n_labels.saturating_sub(1)).map(|_| rng.normal()).collect();
    let mut labels = Vec::with_capacity(n);
    for row in &rows {
        let mut set = Vec::new();
        let mut scores: Vec<f64> = w
            .iter()
            .map(|wl| wl.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + 0.5 * rng.normal())
            .collect();
        if n_labels > 1 {
            let combined: f64 = mix.iter().zip(&scores).map(|(a, b)| a * b).sum();
            scores[n_labels - 1] = 0.5 * scores[n_labels - 1] + combined;
        }
        for (l, s) in scores.iter().enumerate() {
            if *s >= 0.0 {
                set.push(l);
            }
        }
        labels.push(set);
    }
    let feats = rows
        .iter()
        .map(|r| SparseVector::from_dense(r))
        .collect::<Result<Vec<_>>>()?;
    SparseDataset::new(d, n_labels, feats, labels)
}

/// Dense matrix of standard normals.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_small_has_requested_shape() {
        let spec = PlantedSpec::small(3);
        let (train, test) = planted_dataset(&spec).unwrap();
        assert_eq!(train.n_examples(), spec.n_train);
        assert_eq!(test.n_examples(), spec.n_test);
        assert_eq!(train.n_labels(), spec.n_labels);
        let avg: f64 = train.label_sets().iter().map(|s| s.len() as f64).sum::<f64>() / spec.n_train as f64;
        assert!((avg - spec.avg_labels).abs() < 0.5, "avg labels {}", avg);
    }

    #[test]
    fn planted_is_deterministic() {
        let spec = PlantedSpec::small(11);
        let (a, _) = planted_dataset(&spec).unwrap();
        let (b, _) = planted_dataset(&spec).unwrap();
        assert_eq!(a.label_sets(), b.label_sets());
        assert_eq!(a.features().rows(), b.features().rows());
    }

    #[test]
    fn dense_instance_shape() {
        let data = dense_instance(40, 5, 4, 1).unwrap();
        assert_eq!((data.n_examples(), data.n_features(), data.n_labels()), (40, 5, 4));
    }
}
