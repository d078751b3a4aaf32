//! Dictionary reduction: k-means over label response vectors, one medoid
//! per cluster.

use crate::data::LabelView;
use crate::error::{Result, SllError};
use crate::io::SeededRng;

const MAX_LLOYD_ITERS: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Picks `p` labels of the view as a reduced dictionary. Returned ids are
/// label ids in ascending order.
pub fn reduce_dictionary(view: &LabelView<'_>, target_size: usize, seed: u64) -> Result<Vec<usize>> {
    let cols = view.materialize()?.transpose();
    let vectors: Vec<&[f64]> = (0..cols.rows()).map(|j| cols.row(j)).collect();
    let picks = cluster_medoids(&vectors, target_size, seed)?;
    let mut ids: Vec<usize> = picks.into_iter().map(|i| view.selected()[i]).collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Seeded k-means (k-means++ seeding, Lloyd iterations, Euclidean) on
/// `vectors`, returning the position of each cluster's medoid in ascending
/// order. With `p >= vectors.len()` every vector is its own cluster.
pub fn cluster_medoids(vectors: &[&[f64]], p: usize, seed: u64) -> Result<Vec<usize>> {
    let count = vectors.len();
    if p < 1 {
        return Err(SllError::InvalidConfig("dictionary size must be at least 1".into()));
    }
    if p > count {
        return Err(SllError::InvalidConfig(format!(
            "dictionary size {} exceeds the {} available labels",
            p, count
        )));
    }
    if p == count {
        return Ok((0..count).collect());
    }
    let dim = vectors[0].len();
    let mut rng = SeededRng::new(seed);

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(p);
    centers.push(vectors[rng.below(count as u32) as usize].to_vec());
    let mut nearest: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < p {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.unit_f64() * total;
            let mut chosen = count - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.below(count as u32) as usize
        };
        centers.push(vectors[pick].to_vec());
        for (d, v) in nearest.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, centers.last().unwrap()));
        }
    }

    let mut assign = vec![usize::MAX; count];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let best = nearest_center(v, &centers);
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; p];
        let mut sizes = vec![0usize; p];
        for (v, &c) in vectors.iter().zip(&assign) {
            sizes[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v.iter()) {
                *s += x;
            }
        }
        for c in 0..p {
            if sizes[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            } else {
                // empty cluster: move it onto the point farthest from its center
                let far = (0..count)
                    .max_by(|&a, &b| {
                        let da = sq_dist(vectors[a], &centers[assign[a]]);
                        let db = sq_dist(vectors[b], &centers[assign[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap();
                centers[c] = vectors[far].to_vec();
                assign[far] = c;
            }
        }
    }

    let mut medoids = Vec::with_capacity(p);
    for c in 0..p {
        let members: Vec<usize> = (0..count).filter(|&i| assign[i] == c).collect();
        let medoid = members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let cost = |i: usize| -> f64 {
                    members.iter().map(|&j| sq_dist(vectors[i], vectors[j]).sqrt()).sum()
                };
                cost(a).total_cmp(&cost(b)).then(a.cmp(&b))
            });
        if let Some(m) = medoid {
            medoids.push(m);
        }
    }
    medoids.sort_unstable();
    medoids.dedup();
    // a cluster can only be empty here if all vectors coincide; fill up deterministically
    let mut next = 0;
    while medoids.len() < p {
        if medoids.binary_search(&next).is_err() {
            medoids.push(next);
            medoids.sort_unstable();
        }
        next += 1;
    }
    Ok(medoids)
}

fn nearest_center(v: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(v, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SparseDataset, SparseVector};

    #[test]
    fn full_size_is_identity() {
        let a = [1.0, -1.0];
        let b = [1.0, -1.0];
        let picks = cluster_medoids(&[&a, &b], 2, 0).unwrap();
        assert_eq!(picks, vec![0, 1]);
    }

    #[test]
    fn one_representative_per_duplicate_group() {
        let g1 = [1.0, 1.0, -1.0, -1.0, 1.0];
        let g2 = [-1.0, -1.0, 1.0, 1.0, -1.0];
        let vecs: Vec<&[f64]> = vec![&g1, &g2, &g1, &g2, &g1];
        for seed in 0..20 {
            let picks = cluster_medoids(&vecs, 2, seed).unwrap();
            assert_eq!(picks.len(), 2);
            assert_ne!(vecs[picks[0]], vecs[picks[1]], "seed {seed}");
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        let a = [1.0];
        assert!(cluster_medoids(&[&a], 0, 0).is_err());
        assert!(cluster_medoids(&[&a], 2, 0).is_err());
    }

    #[test]
    fn reduce_dictionary_maps_to_label_ids() {
        // labels 0 and 2 identical, 1 and 3 identical
        let sets = vec![vec![0, 2], vec![1, 3], vec![0, 2], vec![1, 3]];
        let ds = SparseDataset::new(1, 4, vec![SparseVector::default(); 4], sets).unwrap();
        let view = LabelView::new(&ds, vec![3, 2, 1, 0]);
        let ids = reduce_dictionary(&view, 2, 11).unwrap();
        assert_eq!(ids.len(), 2);
        assert!(ids.contains(&0) ^ ids.contains(&2));
        assert!(ids.contains(&1) ^ ids.contains(&3));
        assert_eq!(reduce_dictionary(&view, 4, 11).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn deterministic_under_seed() {
        let vecs: Vec<Vec<f64>> = (0..30)
            .map(|i| (0..12).map(|j| if (i * 7 + j * 3) % 5 < 2 { 1.0 } else { -1.0 }).collect())
            .collect();
        let refs: Vec<&[f64]> = vecs.iter().map(Vec::as_slice).collect();
        assert_eq!(cluster_medoids(&refs, 6, 3).unwrap(), cluster_medoids(&refs, 6, 3).unwrap());
    }
}
