//! Taste archetypes: cluster raw normalized rating vectors, then encode
//! and polarize each centroid into a stored memory pattern.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::RatingsMatrix;
use crate::error::{Error, Result};
use crate::nn::{encode, EncoderParams};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    /// `k x M`, row per cluster.
    pub centroids: Array2<f64>,
    /// Cluster index per data row.
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step; non-increasing.
    pub inertia_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarPattern {
    /// Entries exactly +1 or -1.
    pub bits: Vec<i8>,
    /// K-Means cluster the pattern came from, before canonical reordering.
    pub source_cluster: usize,
}

/// Distinct polar patterns of a common dimension; the memory's contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    patterns: Vec<PolarPattern>,
    n: usize,
}

impl PatternSet {
    pub fn new(bits: Vec<Vec<i8>>) -> Result<Self> {
        let patterns = bits
            .into_iter()
            .enumerate()
            .map(|(source_cluster, bits)| PolarPattern {
                bits,
                source_cluster,
            })
            .collect();
        Self::from_patterns(patterns)
    }

    pub fn from_patterns(patterns: Vec<PolarPattern>) -> Result<Self> {
        let Some(first) = patterns.first() else {
            return Err(Error::InvalidArgument("empty pattern set".into()));
        };
        let n = first.bits.len();
        if n == 0 {
            return Err(Error::InvalidArgument("zero-length pattern".into()));
        }
        for p in &patterns {
            if p.bits.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "pattern lengths differ: {} vs {n}",
                    p.bits.len()
                )));
            }
            if p.bits.iter().any(|&b| b != 1 && b != -1) {
                return Err(Error::InvalidArgument(
                    "pattern entries must be exactly +1 or -1".into(),
                ));
            }
        }
        for i in 0..patterns.len() {
            for j in i + 1..patterns.len() {
                if patterns[i].bits == patterns[j].bits {
                    return Err(Error::PatternCollision {
                        first: patterns[i].source_cluster,
                        second: patterns[j].source_cluster,
                        n,
                    });
                }
            }
        }
        Ok(PatternSet { patterns, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Bit vectors in storage order.
    pub fn iter(&self) -> impl Iterator<Item = &[i8]> {
        self.patterns.iter().map(|p| p.bits.as_slice())
    }

    pub fn patterns(&self) -> &[PolarPattern] {
        &self.patterns
    }
}

/// Sign mapping with `polarize(0) = +1`.
pub fn polarize(latent: ArrayView1<f64>) -> Result<Vec<i8>> {
    if latent.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "cannot polarize non-finite values".into(),
        ));
    }
    Ok(latent.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Seeded k-means++ initialization.
fn init_centroids(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let rows = data.nrows();
    let mut centroids = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..rows);
    centroids.row_mut(0).assign(&data.row(first));

    let mut best: Vec<f64> = (0..rows)
        .map(|r| sq_dist(data.row(r), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut threshold = rng.random_range(0.0..total);
            let mut chosen = rows - 1;
            for (r, &d) in best.iter().enumerate() {
                if threshold < d {
                    chosen = r;
                    break;
                }
                threshold -= d;
            }
            chosen
        } else {
            rng.random_range(0..rows)
        };
        centroids.row_mut(c).assign(&data.row(pick));
        for r in 0..rows {
            best[r] = best[r].min(sq_dist(data.row(r), centroids.row(c)));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Ties in assignment go to the
/// lowest cluster index; an emptied cluster is reseeded to the point
/// farthest from its current centroid.
pub fn kmeans(
    data: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let rows = data.nrows();
    if k == 0 || k > rows {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={rows} (number of rows)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_centroids(data, k, &mut rng);
    let mut labels = vec![0usize; rows];
    let mut inertia_history = Vec::new();
    let mut inertia;

    for _ in 0..max_iter {
        // assignment
        inertia = 0.0;
        for r in 0..rows {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(data.row(r), centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            labels[r] = best_c;
            inertia += best_d;
        }
        inertia_history.push(inertia);

        // update
        let mut next = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for r in 0..rows {
            let mut row = next.row_mut(labels[r]);
            row += &data.row(r);
            counts[labels[r]] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // farthest point from its assigned centroid takes over
                let far = (0..rows)
                    .max_by(|&a, &b| {
                        let da = sq_dist(data.row(a), centroids.row(labels[a]));
                        let db = sq_dist(data.row(b), centroids.row(labels[b]));
                        da.total_cmp(&db)
                    })
                    .unwrap();
                log::warn!("cluster {c} emptied; reseeding to row {far}");
                next.row_mut(c).assign(&data.row(far));
            } else {
                let mut row = next.row_mut(c);
                row /= counts[c] as f64;
            }
        }

        let shift = centroids
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = next;
        if shift < tol {
            break;
        }
    }

    // final assignment so labels match the last centroid update
    inertia = 0.0;
    for r in 0..rows {
        let mut best_c = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = sq_dist(data.row(r), centroids.row(c));
            if d < best_d {
                best_d = d;
                best_c = c;
            }
        }
        labels[r] = best_c;
        inertia += best_d;
    }
    inertia_history.push(inertia);

    Ok(ClusterModel {
        k,
        centroids,
        labels,
        inertia,
        inertia_history,
    })
}

/// Cluster raw user vectors, encode each centroid, polarize, and return
/// the canonically ordered pattern set plus per-user labels.
///
/// Clusters are re-indexed by lexicographic pattern order so that runs with
/// different row orders or seeds remain comparable.
pub fn extract_archetypes(
    matrix: &RatingsMatrix,
    encoder: &EncoderParams,
    k: usize,
    seed: u64,
) -> Result<(PatternSet, Vec<usize>, ClusterModel)> {
    let model = kmeans(matrix.values.view(), k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;

    let mut patterns = Vec::with_capacity(k);
    for c in 0..k {
        let centroid: Array1<f64> = model.centroids.index_axis(Axis(0), c).to_owned();
        let latent = encode(encoder, centroid.view())?;
        patterns.push(PolarPattern {
            bits: polarize(latent.view())?,
            source_cluster: c,
        });
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| patterns[a].bits.cmp(&patterns[b].bits));
    let mut rank = vec![0usize; k];
    for (new_idx, &old_idx) in order.iter().enumerate() {
        rank[old_idx] = new_idx;
    }

    let sorted: Vec<PolarPattern> = order.iter().map(|&i| patterns[i].clone()).collect();
    let set = PatternSet::from_patterns(sorted)?;
    let labels = model.labels.iter().map(|&l| rank[l]).collect();
    Ok((set, labels, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    fn toy2d() -> Array2<f64> {
        ndarray::array![[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]
    }

    #[test]
    fn one_point_per_cluster_has_zero_inertia() {
        let data = toy2d();
        let model = kmeans(data.view(), 4, 3, 50, 1e-9).unwrap();
        assert!(model.inertia < 1e-12);
        let mut sorted = model.labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        for r in 0..4 {
            assert_eq!(model.centroids.row(model.labels[r]), data.row(r));
        }
    }

    #[test]
    fn two_cluster_toy_finds_the_known_centroids() {
        let data = toy2d();
        for seed in 0..5 {
            let model = kmeans(data.view(), 2, seed, 50, 1e-9).unwrap();
            let mut rows: Vec<Vec<f64>> = model
                .centroids
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect();
            rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(rows[0], vec![0.0, 0.5]);
            assert_eq!(rows[1], vec![10.0, 10.5]);
        }
    }

    #[test]
    fn same_seed_gives_identical_labels() {
        let data = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 13) % 11) as f64);
        let a = kmeans(data.view(), 4, 9, 100, 1e-9).unwrap();
        let b = kmeans(data.view(), 4, 9, 100, 1e-9).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn inertia_never_increases() {
        let data = Array2::from_shape_fn((60, 4), |(i, j)| ((i * 5 + j * 17) % 23) as f64 * 0.3);
        for seed in 0..8 {
            let model = kmeans(data.view(), 5, seed, 100, 0.0).unwrap();
            for w in model.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "inertia rose: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let data = toy2d();
        assert!(kmeans(data.view(), 0, 1, 10, 1e-9).is_err());
        assert!(kmeans(data.view(), 5, 1, 10, 1e-9).is_err());
    }

    #[test]
    fn polarize_examples() {
        assert_eq!(polarize(ndarray::array![0.3, -0.7].view()).unwrap(), vec![1, -1]);
        assert_eq!(polarize(ndarray::array![0.0, 0.0].view()).unwrap(), vec![1, 1]);
        assert!(polarize(ndarray::array![f64::NAN].view()).is_err());
    }

    #[test]
    fn polarize_is_idempotent_and_sign_equivariant() {
        let v = ndarray::array![0.4, -0.2, 0.9, -0.6];
        let bits = polarize(v.view()).unwrap();
        let rebits = polarize(
            Array1::from_iter(bits.iter().map(|&b| f64::from(b))).view(),
        )
        .unwrap();
        assert_eq!(bits, rebits);

        let neg = polarize(v.mapv(|x| -x).view()).unwrap();
        let flipped: Vec<i8> = bits.iter().map(|b| -b).collect();
        assert_eq!(neg, flipped);
    }

    #[test]
    fn pattern_set_validation() {
        assert!(PatternSet::new(vec![]).is_err());
        assert!(PatternSet::new(vec![vec![1, 0]]).is_err());
        assert!(PatternSet::new(vec![vec![1, -1], vec![1]]).is_err());
        let err = PatternSet::new(vec![vec![1, -1], vec![1, 1], vec![1, -1]]).unwrap_err();
        assert!(matches!(
            err,
            Error::PatternCollision { first: 0, second: 2, n: 2 }
        ));
    }

    fn constant_sign_encoder(m: usize, n: usize) -> EncoderParams {
        // zero weights: every latent is tanh(0) = 0, polarizing to all +1
        EncoderParams {
            layer1: DenseLayer {
                weights: Array2::zeros((3, m)),
                bias: Array1::zeros(3),
                activation: Activation::Identity,
            },
            layer2: DenseLayer {
                weights: Array2::zeros((n, 3)),
                bias: Array1::zeros(n),
                activation: Activation::Tanh,
            },
            n,
        }
    }

    fn tiny_matrix() -> RatingsMatrix {
        use crate::dataset::{build_matrix, RatingRecord};
        let mut records = Vec::new();
        for u in 0..8u32 {
            for m in 0..6u32 {
                // two obvious taste groups
                let rating = if (u < 4) == (m < 3) { 5.0 } else { 1.0 };
                records.push(RatingRecord {
                    user_id: u + 1,
                    movie_id: m + 1,
                    rating,
                    timestamp: 0,
                });
            }
        }
        build_matrix(&records, 5).unwrap()
    }

    #[test]
    fn identical_patterns_are_a_collision_error() {
        let m = tiny_matrix();
        let enc = constant_sign_encoder(m.movies(), 4);
        let err = extract_archetypes(&m, &enc, 2, 1).unwrap_err();
        assert!(matches!(err, Error::PatternCollision { .. }), "{err}");
    }

    fn signful_encoder(m: usize, n: usize) -> EncoderParams {
        // pass-through of the first n coordinates, shifted to produce signs
        let mut w1 = Array2::zeros((n, m));
        for i in 0..n.min(m) {
            w1[[i, i]] = 1.0;
        }
        EncoderParams {
            layer1: DenseLayer {
                weights: w1,
                bias: Array1::zeros(n),
                activation: Activation::Identity,
            },
            layer2: DenseLayer {
                weights: Array2::eye(n) * 4.0,
                bias: Array1::from_elem(n, -2.4),
                activation: Activation::Tanh,
            },
            n,
        }
    }

    #[test]
    fn single_cluster_gives_one_pattern_and_zero_labels() {
        let m = tiny_matrix();
        let enc = signful_encoder(m.movies(), 3);
        let (set, labels, _) = extract_archetypes(&m, &enc, 1, 5).unwrap();
        assert_eq!(set.len(), 1);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn row_permutation_yields_the_same_canonical_patterns() {
        use std::collections::BTreeSet;
        let m = tiny_matrix();
        let enc = signful_encoder(m.movies(), 3);
        let (set_a, labels_a, _) = extract_archetypes(&m, &enc, 2, 3).unwrap();

        // permute rows by reversing user order
        let mut rev = m.clone();
        let ids = rev.user_ids();
        for (new_row, &id) in ids.iter().rev().enumerate() {
            rev.values
                .row_mut(new_row)
                .assign(&m.values.row(m.user_index[&id]));
        }
        let rev_index: std::collections::BTreeMap<u32, usize> = ids
            .iter()
            .rev()
            .enumerate()
            .map(|(row, &id)| (id, row))
            .collect();
        rev.user_index = rev_index;

        let (set_b, labels_b, _) = extract_archetypes(&rev, &enc, 2, 3).unwrap();
        let a: BTreeSet<Vec<i8>> = set_a.iter().map(|p| p.to_vec()).collect();
        let b: BTreeSet<Vec<i8>> = set_b.iter().map(|p| p.to_vec()).collect();
        assert_eq!(a, b);

        // labels line up per user after canonical ordering
        for (&id, &row_a) in &m.user_index {
            let row_b = ids.iter().rev().position(|&x| x == id).unwrap();
            assert_eq!(labels_a[row_a], labels_b[row_b], "user {id}");
        }
    }
}
