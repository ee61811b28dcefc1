use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::correlation::DistanceMatrix;
use crate::error::{Error, Result};

pub const LLOYD_MAX_ITER: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Hierarchical,
    Kmeans,
}

/// Partition of the features into `k` non-empty clusters. Cluster ids are
/// numbered in order of each cluster's first member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub method: ClusterMethod,
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: Option<u64>,
    pub converged: bool,
}

impl ClusterModel {
    /// Member indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cluster count {k} must be between 1 and {n}")));
    }
    Ok(())
}

fn relabel(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Agglomerative clustering with average linkage, cut at `k` clusters.
pub fn hierarchical_clusters(d: &DistanceMatrix, k: usize) -> Result<ClusterModel> {
    let n = d.len();
    check_k(n, k)?;
    let mut dist = d.matrix().clone();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut label: Vec<usize> = (0..n).collect();

    while active.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                if dist[(a, b)] < best.0 {
                    best = (dist[(a, b)], a, b);
                }
            }
        }
        let (_, a, b) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &c in &active {
            if c != a && c != b {
                let v = (na * dist[(a, c)] + nb * dist[(b, c)]) / (na + nb);
                dist[(a, c)] = v;
                dist[(c, a)] = v;
            }
        }
        size[a] += size[b];
        active.retain(|&c| c != b);
        for l in label.iter_mut() {
            if *l == b {
                *l = a;
            }
        }
    }
    Ok(ClusterModel {
        method: ClusterMethod::Hierarchical,
        k,
        assignment: relabel(&label),
        seed: None,
        converged: true,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(point, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

struct LloydRun {
    assignment: Vec<usize>,
    inertia: f64,
    converged: bool,
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> LloydRun {
    let n = points.len();
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut converged = false;
    for _ in 0..LLOYD_MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster with the point farthest from its centroid
                let far = (0..n)
                    .filter(|&i| counts[assignment[i]] > 1)
                    .max_by(|&i, &j| {
                        let di = sq_dist(&points[i], &centroids[assignment[i]]);
                        let dj = sq_dist(&points[j], &centroids[assignment[j]]);
                        di.total_cmp(&dj).then(j.cmp(&i))
                    });
                if let Some(i) = far {
                    counts[assignment[i]] -= 1;
                    assignment[i] = c;
                    counts[c] = 1;
                    centroids[c] = points[i].clone();
                }
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let mut next_counts = vec![0usize; k];
        for &c in &next {
            next_counts[c] += 1;
        }
        if next == assignment && next_counts.iter().all(|&c| c > 0) {
            converged = true;
            break;
        }
        if next_counts.iter().all(|&c| c > 0) {
            assignment = next;
        } else {
            // keep every cluster populated: only move points out of clusters
            // that would stay non-empty
            let mut counts: Vec<usize> = vec![0; k];
            for &c in &assignment {
                counts[c] += 1;
            }
            for i in 0..n {
                let (from, to) = (assignment[i], next[i]);
                if from != to && counts[from] > 1 {
                    counts[from] -= 1;
                    counts[to] += 1;
                    assignment[i] = to;
                }
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    LloydRun {
        assignment,
        inertia,
        converged,
    }
}

/// Lloyd's algorithm with k-means++ seeding, treating each feature's row of
/// `d` as its coordinates. Runs `restarts` seedings from one seeded stream
/// and keeps the lowest within-cluster scatter.
pub fn kmeans_clusters(d: &DistanceMatrix, k: usize, seed: u64, restarts: usize) -> Result<ClusterModel> {
    let n = d.len();
    check_k(n, k)?;
    let points: Vec<Vec<f64>> = (0..n).map(|i| d.matrix().row(i).iter().copied().collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<LloydRun> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(&points, plus_plus(&points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(ClusterModel {
        method: ClusterMethod::Kmeans,
        k,
        assignment: relabel(&best.assignment),
        seed: Some(seed),
        converged: best.converged,
    })
}

/// Medoid of every cluster, in cluster order. Ties go to the earlier feature.
pub fn cluster_representatives(model: &ClusterModel, d: &DistanceMatrix) -> Result<Vec<usize>> {
    if model.assignment.len() != d.len() {
        return Err(Error::invalid("cluster model and distance matrix disagree on feature count"));
    }
    Ok(model
        .members()
        .into_iter()
        .map(|members| {
            let mean_dist = |i: usize| {
                if members.len() == 1 {
                    return 0.0;
                }
                members.iter().filter(|&&j| j != i).map(|&j| d.get(i, j)).sum::<f64>() / (members.len() - 1) as f64
            };
            members
                .iter()
                .copied()
                .fold((usize::MAX, f64::INFINITY), |best, i| {
                    let m = mean_dist(i);
                    if m < best.1 {
                        (i, m)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn dm(values: DMatrix<f64>) -> DistanceMatrix {
        let names = (0..values.nrows()).map(|i| format!("f{i}")).collect();
        DistanceMatrix::new(names, values).unwrap()
    }

    /// Two perfectly correlated pairs {0, 2} and {1, 3}, 0.8 apart.
    fn two_pairs() -> DistanceMatrix {
        dm(DMatrix::from_fn(4, 4, |i, j| {
            if i == j || i % 2 == j % 2 {
                0.0
            } else {
                0.8
            }
        }))
    }

    /// Enumerates every 2-partition and returns the one with the least total
    /// within-cluster distance.
    fn brute_force_two_partition(d: &DistanceMatrix) -> Vec<usize> {
        let n = d.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let lab: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let cost: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| lab[i] == lab[j])
                .map(|(i, j)| d.get(i, j))
                .sum();
            if cost < best.0 {
                best = (cost, relabel(&lab));
            }
        }
        best.1
    }

    #[test]
    fn hierarchical_recovers_pairs() {
        let d = two_pairs();
        let m = hierarchical_clusters(&d, 2).unwrap();
        assert_eq!(m.assignment, brute_force_two_partition(&d));
        assert_eq!(m.assignment, vec![0, 1, 0, 1]);
    }

    #[test]
    fn kmeans_recovers_pairs_for_any_seed() {
        let d = two_pairs();
        let oracle = brute_force_two_partition(&d);
        for seed in 0..20 {
            let m = kmeans_clusters(&d, 2, seed, 3).unwrap();
            assert_eq!(m.assignment, oracle, "seed {seed}");
            assert!(m.converged);
        }
    }

    #[test]
    fn extreme_k() {
        let d = two_pairs();
        assert_eq!(hierarchical_clusters(&d, 4).unwrap().assignment, vec![0, 1, 2, 3]);
        assert_eq!(hierarchical_clusters(&d, 1).unwrap().assignment, vec![0; 4]);
        assert_eq!(kmeans_clusters(&d, 4, 1, 2).unwrap().assignment, vec![0, 1, 2, 3]);
        assert!(hierarchical_clusters(&d, 0).is_err());
        assert!(kmeans_clusters(&d, 5, 0, 1).is_err());
    }

    #[test]
    fn medoid_selection() {
        let d = dm(DMatrix::from_row_slice(3, 3, &[0.0, 0.1, 0.1, 0.1, 0.0, 0.4, 0.1, 0.4, 0.0]));
        let one = ClusterModel {
            method: ClusterMethod::Hierarchical,
            k: 1,
            assignment: vec![0, 0, 0],
            seed: None,
            converged: true,
        };
        assert_eq!(cluster_representatives(&one, &d).unwrap(), vec![0]);
        let pairs = two_pairs();
        let m = hierarchical_clusters(&pairs, 2).unwrap();
        assert_eq!(cluster_representatives(&m, &pairs).unwrap(), vec![0, 1]);
        let singles = hierarchical_clusters(&pairs, 4).unwrap();
        assert_eq!(cluster_representatives(&singles, &pairs).unwrap(), vec![0, 1, 2, 3]);
    }

    fn random_distance(n: usize, raw: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut it = raw.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    proptest! {
        #[test]
        fn permutation_equivariance(raw in proptest::collection::vec(0.01f64..1.0, 15), k in 1usize..6, rot in 0usize..6) {
            let n = 6;
            let base = random_distance(n, &raw);
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let permuted = DMatrix::from_fn(n, n, |i, j| base[(perm[i], perm[j])]);
            let a = hierarchical_clusters(&dm(base.clone()), k).unwrap().assignment;
            let b = hierarchical_clusters(&dm(permuted.clone()), k).unwrap().assignment;
            // same partition up to labels: co-membership agrees
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(a[perm[i]] == a[perm[j]], b[i] == b[j]);
                }
            }
            let ka = kmeans_clusters(&dm(base), k, 9, 8).unwrap();
            let kb = kmeans_clusters(&dm(permuted), k, 9, 8).unwrap();
            prop_assert_eq!(ka.members().iter().filter(|m| !m.is_empty()).count(), k);
            prop_assert_eq!(kb.members().iter().filter(|m| !m.is_empty()).count(), k);
        }

        #[test]
        fn identical_rows_share_a_cluster(raw in proptest::collection::vec(0.05f64..1.0, 10), k in 1usize..5, seed in 0u64..50) {
            let n = 5;
            let mut m = random_distance(n, &raw);
            // make feature 4 a copy of feature 0
            for j in 1..4 {
                m[(4, j)] = m[(0, j)];
                m[(j, 4)] = m[(0, j)];
            }
            m[(0, 4)] = 0.0;
            m[(4, 0)] = 0.0;
            let model = kmeans_clusters(&dm(m), k, seed, 4).unwrap();
            prop_assert_eq!(model.assignment[0], model.assignment[4]);
        }
    }
}
