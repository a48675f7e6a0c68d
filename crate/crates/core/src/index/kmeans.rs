//! Lloyd's k-means with seeded k-means++ initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{l2_sq, LANES};

pub const DEFAULT_MAX_ITERS: usize = 25;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f32>,
    pub assignments: Vec<u32>,
    /// Mean squared distance to the assigned centroid after each assignment
    /// step. Non-increasing.
    pub distortion: Vec<f64>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn final_distortion(&self) -> f64 {
        self.distortion.last().copied().unwrap_or(0.0)
    }
}

/// Index and squared distance of the nearest centroid; ties go to the lower
/// index.
#[inline]
pub fn nearest(point: &[f32], centroids: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_sq(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn row(points: &[f32], dim: usize, i: usize) -> &[f32] {
    &points[i * dim..(i + 1) * dim]
}

/// k-means++ seeding. When fewer than `k` distinct points exist the
/// remaining centroids reuse points in order.
fn init_plus_plus(points: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = points.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(points, dim, first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| f64::from(l2_sq(row(points, dim, i), row(points, dim, first))))
        .collect();
    let mut reuse = 0;
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // float slack can leave us on a zero-weight point
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap();
            }
            chosen
        } else {
            let i = reuse % n;
            reuse += 1;
            i
        };
        let start = centroids.len();
        centroids.extend_from_slice(row(points, dim, pick));
        let c = &centroids[start..];
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = f64::from(l2_sq(row(points, dim, i), c));
            if d < *slot {
                *slot = d;
            }
        }
    }
    centroids
}

/// Cluster `points` (`n × dim`, row-major) into `k` groups.
pub fn kmeans(points: &[f32], dim: usize, k: usize, max_iters: usize, seed: u64) -> KMeans {
    assert!(dim > 0 && k > 0, "dim and k must be positive");
    assert!(
        !points.is_empty() && points.len() % dim == 0,
        "need at least one point"
    );
    let n = points.len() / dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(points, dim, k, &mut rng);

    let mut assignments = vec![u32::MAX; n];
    let mut dist = vec![0f32; n];
    let mut distortion = Vec::new();
    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];

    let mut assign = Assigner::new(dim, k);
    for iter in 0..max_iters.max(1) {
        let mut changed = false;
        assign.load(&centroids);
        for i in 0..n {
            let (c, d) = assign.nearest(row(points, dim, i), &centroids);
            if assignments[i] != c as u32 {
                assignments[i] = c as u32;
                changed = true;
            }
            dist[i] = d;
        }
        distortion.push(cluster_sse(&dist, &assignments, k).iter().sum::<f64>() / n as f64);
        if (iter > 0 && !changed) || iter + 1 == max_iters.max(1) {
            break;
        }

        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for i in 0..n {
            let c = assignments[i] as usize;
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(row(points, dim, i))
            {
                *s += f64::from(x);
            }
        }
        let old_sse = cluster_sse(&dist, &assignments, k);
        let old_centroids = centroids.clone();
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for j in 0..dim {
                centroids[c * dim + j] = (sums[c * dim + j] / counts[c] as f64) as f32;
            }
        }
        // Rounding the f64 mean to f32 can, for an already converged
        // cluster, cost more than keeping the old centroid.
        let mut new_sse = vec![0f64; k];
        for i in 0..n {
            let c = assignments[i] as usize;
            new_sse[c] += f64::from(l2_sq(
                row(points, dim, i),
                &centroids[c * dim..(c + 1) * dim],
            ));
        }
        for c in 0..k {
            if counts[c] > 0 && new_sse[c] > old_sse[c] {
                centroids[c * dim..(c + 1) * dim]
                    .copy_from_slice(&old_centroids[c * dim..(c + 1) * dim]);
            }
        }
        reseed_empty(points, dim, &assignments, &counts, &mut centroids);
    }

    KMeans {
        dim,
        centroids,
        assignments,
        distortion,
    }
}

/// Nearest-centroid search. Low-dimensional inputs (PQ subspaces) keep the
/// centroids column-major so the distance loop runs across centroids; the
/// arithmetic matches `l2_sq` term for term, so results are identical.
struct Assigner {
    dim: usize,
    k: usize,
    columns: Vec<f32>,
    dist: Vec<f32>,
}

impl Assigner {
    fn new(dim: usize, k: usize) -> Self {
        let small = dim < LANES;
        Self {
            dim,
            k,
            columns: if small {
                vec![0.0; dim * k]
            } else {
                Vec::new()
            },
            dist: if small { vec![0.0; k] } else { Vec::new() },
        }
    }

    fn load(&mut self, centroids: &[f32]) {
        if self.columns.is_empty() {
            return;
        }
        for (c, centroid) in centroids.chunks_exact(self.dim).enumerate() {
            for (t, &x) in centroid.iter().enumerate() {
                self.columns[t * self.k + c] = x;
            }
        }
    }

    #[inline]
    fn nearest(&mut self, point: &[f32], centroids: &[f32]) -> (usize, f32) {
        if self.columns.is_empty() {
            return nearest(point, centroids, self.dim);
        }
        self.dist.iter_mut().for_each(|d| *d = 0.0);
        for (t, &x) in point.iter().enumerate() {
            let col = &self.columns[t * self.k..(t + 1) * self.k];
            for (d, &c) in self.dist.iter_mut().zip(col) {
                let diff = x - c;
                *d += diff * diff;
            }
        }
        first_min(&self.dist)
    }
}

/// Index and value of the first minimum, found lane-wise so the comparisons
/// vectorize.
fn first_min(values: &[f32]) -> (usize, f32) {
    let mut val = [f32::INFINITY; LANES];
    let mut idx = [0usize; LANES];
    let chunks = values.chunks_exact(LANES);
    let tail = chunks.remainder();
    for (c, chunk) in chunks.enumerate() {
        for l in 0..LANES {
            if chunk[l] < val[l] {
                val[l] = chunk[l];
                idx[l] = c * LANES + l;
            }
        }
    }
    let mut best = (0, f32::INFINITY);
    for l in 0..LANES {
        if val[l] < best.1 || (val[l] == best.1 && idx[l] < best.0) {
            best = (idx[l], val[l]);
        }
    }
    let offset = values.len() - tail.len();
    for (i, &v) in tail.iter().enumerate() {
        if v < best.1 {
            best = (offset + i, v);
        }
    }
    best
}

fn cluster_sse(dist: &[f32], assignments: &[u32], k: usize) -> Vec<f64> {
    let mut sse = vec![0f64; k];
    for (d, &a) in dist.iter().zip(assignments) {
        sse[a as usize] += f64::from(*d);
    }
    sse
}

/// Move each empty centroid onto the point farthest from its own centroid.
fn reseed_empty(
    points: &[f32],
    dim: usize,
    assignments: &[u32],
    counts: &[usize],
    centroids: &mut [f32],
) {
    let empty: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] == 0).collect();
    if empty.is_empty() {
        return;
    }
    let n = assignments.len();
    let mut far: Vec<(f32, usize)> = (0..n)
        .map(|i| {
            let c = assignments[i] as usize;
            (
                l2_sq(row(points, dim, i), &centroids[c * dim..(c + 1) * dim]),
                i,
            )
        })
        .collect();
    // farthest first, lower index on ties
    far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (slot, c) in empty.into_iter().enumerate() {
        let i = far[slot % n].1;
        centroids[c * dim..(c + 1) * dim].copy_from_slice(row(points, dim, i));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_min_matches_sequential_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for len in 1..40 {
            let v: Vec<f32> = (0..len).map(|_| rng.random_range(0..5) as f32).collect();
            let mut want = (0, f32::INFINITY);
            for (i, &x) in v.iter().enumerate() {
                if x < want.1 {
                    want = (i, x);
                }
            }
            assert_eq!(first_min(&v), want, "{v:?}");
        }
    }
    use rand_distr::{Distribution, Normal};

    #[test]
    fn saturated_k_has_zero_distortion() {
        let pts = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0];
        let km = kmeans(&pts, 2, 4, 25, 1);
        assert_eq!(km.final_distortion(), 0.0);
        let mut cents: Vec<_> = km
            .centroids
            .chunks(2)
            .map(|c| (c[0] as i32, c[1] as i32))
            .collect();
        cents.sort();
        assert_eq!(cents, [(0, 0), (0, 1), (1, 0), (5, 5)]);
    }

    #[test]
    fn identical_points_single_cluster() {
        let pts = [2.5f32, -1.0].repeat(10);
        let km = kmeans(&pts, 2, 1, 25, 3);
        assert_eq!(km.centroid(0), [2.5, -1.0]);
    }

    #[test]
    fn more_clusters_than_points() {
        let pts = [1.0f32, 2.0, 3.0];
        let km = kmeans(&pts, 1, 5, 25, 0);
        assert_eq!(km.k(), 5);
        assert_eq!(km.final_distortion(), 0.0);
        assert!(km.centroids.iter().all(|c| pts.contains(c)));
    }

    #[test]
    fn separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0f32, 0.1).unwrap();
        let mut pts = Vec::new();
        for i in 0..200 {
            let (cx, cy) = if i % 2 == 0 {
                (-10.0, 0.0)
            } else {
                (10.0, 3.0)
            };
            pts.push(cx + noise.sample(&mut rng));
            pts.push(cy + noise.sample(&mut rng));
        }
        let km = kmeans(&pts, 2, 2, 25, 4);
        for c in 0..2 {
            let blob: Vec<&[f32]> = pts
                .chunks(2)
                .enumerate()
                .filter(|(i, _)| km.assignments[*i] as usize == c)
                .map(|(_, p)| p)
                .collect();
            assert_eq!(blob.len(), 100);
            let (xmin, xmax) = blob
                .iter()
                .fold((f32::MAX, f32::MIN), |a, p| (a.0.min(p[0]), a.1.max(p[0])));
            let (ymin, ymax) = blob
                .iter()
                .fold((f32::MAX, f32::MIN), |a, p| (a.0.min(p[1]), a.1.max(p[1])));
            let cen = km.centroid(c);
            assert!(cen[0] >= xmin && cen[0] <= xmax && cen[1] >= ymin && cen[1] <= ymax);
        }
    }

    #[test]
    fn distortion_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<f32> = (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let km = kmeans(&pts, 3, 17, 25, 8);
        assert!(km.distortion.len() > 1);
        for w in km.distortion.windows(2) {
            assert!(w[1] <= w[0], "{:?}", km.distortion);
        }
    }
}
