//! k-means with k-means++ seeding, and variance-region labeling of
//! path-loss samples.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PathLossDataset;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RESTARTS: usize = 10;
const MAX_LLOYD_ITERATIONS: usize = 300;
/// Half-width of the distance window used for local dispersion, meters.
pub const DISPERSION_HALF_WINDOW_M: f64 = 1.0;
/// Within/total dispersion sum-of-squares ratio above which a labeling is
/// reported as low confidence.
pub const LOW_CONFIDENCE_RATIO: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let dim = points[0].len();
    for p in points {
        crate::model::check_len(dim, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("k-means input must be finite"));
        }
    }
    Ok(dim)
}

/// k-means++ seeding.
pub fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from the given centroids until assignments stop changing.
///
/// An empty cluster is re-seeded at the point farthest from its current
/// centroid (lowest index on ties).
pub fn lloyd(points: &[Vec<f64>], init: Vec<Vec<f64>>) -> Result<KMeansResult> {
    let k = init.len();
    let dim = check_points(points, k)?;
    let mut centroids = init;
    let mut assignments = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (j, d) = nearest(p, &centroids);
            inertia += d;
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        trace.push(inertia);
        if !changed || iterations >= MAX_LLOYD_ITERATIONS {
            return Ok(KMeansResult {
                centroids,
                assignments,
                inertia,
                iterations,
                inertia_trace: trace,
            });
        }
        iterations += 1;

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let mut far = (0, -1.0);
            for (i, p) in points.iter().enumerate() {
                if counts[assignments[i]] < 2 {
                    continue;
                }
                let d = sq_dist(p, &centroids[assignments[i]]);
                if d > far.1 {
                    far = (i, d);
                }
            }
            counts[assignments[far.0]] -= 1;
            assignments[far.0] = j;
            counts[j] = 1;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (j, s) in sums.into_iter().enumerate() {
            centroids[j] = s.into_iter().map(|v| v / counts[j] as f64).collect();
        }
    }
}

/// Best of `restarts` seeded k-means runs by inertia (lowest restart index on ties).
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    check_points(points, k)?;
    if restarts == 0 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    let base = rng::derive_seed(seed, "kmeans");
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let init = kmeans_plus_plus(points, k, &mut rng::indexed(base, r as u64));
        let out = lloyd(points, init)?;
        if best.as_ref().is_none_or(|b| out.inertia < b.inertia) {
            best = Some(out);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// Cluster on scaled distance and local path-loss dispersion.
    #[default]
    DistanceDispersion,
    /// Cluster on scaled distance alone.
    DistanceOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionLabeling {
    pub dataset: PathLossDataset,
    /// Largest distance among high-variance samples, meters.
    pub boundary_m: f64,
    pub high_variance_count: usize,
    /// Within-cluster / total sum of squares of the dispersion feature.
    pub dispersion_ratio: f64,
    pub low_confidence: bool,
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, &mut hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Median of `values` over each point's `±half` distance window.
/// `order` must sort `dist` ascending.
fn rolling_median(dist: &[f64], values: &[f64], order: &[usize], half: f64) -> Vec<f64> {
    let mut out = vec![0.0; dist.len()];
    let (mut lo, mut hi) = (0, 0);
    let mut buf = Vec::new();
    for &i in order {
        while dist[order[lo]] < dist[i] - half {
            lo += 1;
        }
        while hi < order.len() && dist[order[hi]] <= dist[i] + half {
            hi += 1;
        }
        buf.clear();
        buf.extend(order[lo..hi].iter().map(|&j| values[j]));
        out[i] = median(&mut buf);
    }
    out
}

fn sorted_order(dist: &[f64], members: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut o: Vec<usize> = members.collect();
    o.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    o
}

/// Local path-loss dispersion per sample.
///
/// Each sample's absolute deviation from the rolling median of its own
/// scenario (angle, lane, turbulence) is smoothed into a rolling median
/// absolute deviation over all samples.
pub fn local_dispersion(ds: &PathLossDataset) -> Vec<f64> {
    let dist = ds.distances();
    let pl = ds.targets();
    let n = ds.len();
    let mut abs_dev = vec![0.0; n];
    let key = |i: usize| {
        let s = &ds.samples[i];
        (s.is_nlos(), s.same_lane, s.turbulence)
    };
    let mut groups: Vec<(bool, bool, bool)> = (0..n).map(key).collect();
    groups.sort_unstable();
    groups.dedup();
    for g in groups {
        let order = sorted_order(&dist, (0..n).filter(|&i| key(i) == g));
        let med = rolling_median(&dist, &pl, &order, DISPERSION_HALF_WINDOW_M);
        for &i in &order {
            abs_dev[i] = (pl[i] - med[i]).abs();
        }
    }
    let order = sorted_order(&dist, 0..n);
    rolling_median(&dist, &abs_dev, &order, DISPERSION_HALF_WINDOW_M)
}

fn scale_unit(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| 2.0 * (x - lo) / (hi - lo) - 1.0).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Labels every sample as high-variance (near field) or low-variance by
/// two-cluster k-means. The cluster with the smaller distance centroid is
/// the high-variance region.
pub fn label_variance_region(
    ds: &PathLossDataset,
    seed: u64,
    mode: RegionMode,
) -> Result<RegionLabeling> {
    if ds.len() < 2 {
        return Err(Error::invalid("variance-region labeling needs at least 2 samples"));
    }
    let dist = ds.distances();
    let dispersion = local_dispersion(ds);
    let sd = scale_unit(&dist);
    let sp = scale_unit(&dispersion);
    let points: Vec<Vec<f64>> = match mode {
        RegionMode::DistanceDispersion => sd.iter().zip(&sp).map(|(&a, &b)| vec![a, b]).collect(),
        RegionMode::DistanceOnly => sd.iter().map(|&a| vec![a]).collect(),
    };
    let km = kmeans(&points, 2, DEFAULT_RESTARTS, seed)?;
    let high = if km.centroids[0][0] <= km.centroids[1][0] { 0 } else { 1 };

    let mut out = ds.clone();
    let mut boundary = f64::NEG_INFINITY;
    let mut count = 0;
    for (s, &a) in out.samples.iter_mut().zip(&km.assignments) {
        let is_high = a == high;
        s.variance_region = Some(is_high);
        if is_high {
            count += 1;
            boundary = boundary.max(s.distance_m);
        }
    }

    let n = sp.len() as f64;
    let mean = sp.iter().sum::<f64>() / n;
    let total: f64 = sp.iter().map(|v| (v - mean).powi(2)).sum();
    let mut within = 0.0;
    for c in 0..2 {
        let members: Vec<f64> = sp
            .iter()
            .zip(&km.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(&v, _)| v)
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.iter().sum::<f64>() / members.len() as f64;
        within += members.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let ratio = if total > 0.0 { within / total } else { 1.0 };

    Ok(RegionLabeling {
        dataset: out,
        boundary_m: boundary,
        high_variance_count: count,
        dispersion_ratio: ratio,
        low_confidence: ratio > LOW_CONFIDENCE_RATIO,
    })
}
