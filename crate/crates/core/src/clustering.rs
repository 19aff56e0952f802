//! Weighted K-means over mobility trajectories and Calinski-Harabasz
//! selection of the cluster count.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{FeatureSample, MobilityFeature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub max_iters: usize,
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iters: 300,
            restarts: 10,
        }
    }
}

/// `tau * sum(dx^2 + dy^2) + (1 - tau) * sum(dv^2)` over aligned slots.
pub fn feature_distance(d: &MobilityFeature, o: &MobilityFeature, tau: f64) -> Result<f64> {
    if d.len() != o.len() {
        return Err(Error::invalid(format!(
            "feature lengths differ: {} vs {}",
            d.len(),
            o.len()
        )));
    }
    Ok(distance_unchecked(&d.samples, &o.samples, tau))
}

fn distance_unchecked(d: &[FeatureSample], o: &[FeatureSample], tau: f64) -> f64 {
    let (mut pos, mut vel) = (0.0, 0.0);
    for (a, b) in d.iter().zip(o) {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let dv = a.v - b.v;
        pos += dx * dx + dy * dy;
        vel += dv * dv;
    }
    tau * pos + (1.0 - tau) * vel
}

fn mean_feature<'a>(members: impl Iterator<Item = &'a MobilityFeature>, len: usize) -> MobilityFeature {
    let mut acc = vec![
        FeatureSample {
            x: 0.0,
            y: 0.0,
            v: 0.0
        };
        len
    ];
    let mut count = 0usize;
    for f in members {
        count += 1;
        for (a, s) in acc.iter_mut().zip(&f.samples) {
            a.x += s.x;
            a.y += s.y;
            a.v += s.v;
        }
    }
    let n = count.max(1) as f64;
    for a in &mut acc {
        a.x /= n;
        a.y /= n;
        a.v /= n;
    }
    MobilityFeature { samples: acc }
}

/// Coordinate-wise mean of all features.
pub fn global_centroid(features: &[MobilityFeature]) -> Result<MobilityFeature> {
    let len = check_features(features)?;
    Ok(mean_feature(features.iter(), len))
}

fn check_features(features: &[MobilityFeature]) -> Result<usize> {
    let first = features
        .first()
        .ok_or_else(|| Error::invalid("no features"))?;
    let len = first.len();
    if features.iter().any(|f| f.len() != len) {
        return Err(Error::invalid("features have different lengths"));
    }
    Ok(len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<MobilityFeature>,
    /// Cluster index per feature, in input order.
    pub assignments: Vec<usize>,
    pub h_count: usize,
    pub tau: f64,
    /// Total intra-cluster distance.
    pub objective: f64,
    /// Objective after every assignment step of the final Lloyd run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn members(&self, h: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, a)| **a == h)
            .map(|(i, _)| i)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.h_count];
        for a in &self.assignments {
            sizes[*a] += 1;
        }
        sizes
    }
}

fn assign(
    features: &[MobilityFeature],
    centroids: &[MobilityFeature],
    tau: f64,
    assignments: &mut [usize],
    dists: &mut [f64],
) -> f64 {
    let mut total = 0.0;
    for (i, f) in features.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (h, c) in centroids.iter().enumerate() {
            let d = distance_unchecked(&f.samples, &c.samples, tau);
            if d < best_d {
                best_d = d;
                best = h;
            }
        }
        assignments[i] = best;
        dists[i] = best_d;
        total += best_d;
    }
    total
}

fn objective(features: &[MobilityFeature], model_centroids: &[MobilityFeature], assignments: &[usize], tau: f64) -> f64 {
    features
        .iter()
        .zip(assignments)
        .map(|(f, &h)| distance_unchecked(&f.samples, &model_centroids[h].samples, tau))
        .sum()
}

/// One Lloyd run from `h` distinct randomly chosen features.
pub fn kmeans<R: Rng + ?Sized>(
    features: &[MobilityFeature],
    h: usize,
    tau: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<ClusterModel> {
    let len = check_features(features)?;
    if h == 0 || h > features.len() {
        return Err(Error::invalid(format!(
            "cluster count {h} must lie in 1..={}",
            features.len()
        )));
    }
    let n = features.len();
    let mut centroids: Vec<MobilityFeature> = sample(rng, n, h)
        .into_iter()
        .map(|i| features[i].clone())
        .collect();
    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        let total = assign(features, &centroids, tau, &mut assignments, &mut dists);
        trace.push(total);
        iterations += 1;

        let mut next: Vec<MobilityFeature> = (0..h)
            .map(|c| {
                mean_feature(
                    features
                        .iter()
                        .zip(&assignments)
                        .filter(|(_, a)| **a == c)
                        .map(|(f, _)| f),
                    len,
                )
            })
            .collect();

        // Empty clusters take over the point farthest from its centroid.
        let mut counts = vec![0usize; h];
        for a in &assignments {
            counts[*a] += 1;
        }
        for c in 0..h {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]));
                if let Some(i) = far {
                    counts[assignments[i]] -= 1;
                    assignments[i] = c;
                    counts[c] = 1;
                    dists[i] = 0.0;
                    next[c] = features[i].clone();
                }
            }
        }
        if counts.iter().any(|c| *c == 0) {
            // Only reachable with duplicate points; recompute donor means.
            for c in 0..h {
                next[c] = mean_feature(
                    features
                        .iter()
                        .zip(&assignments)
                        .filter(|(_, a)| **a == c)
                        .map(|(f, _)| f),
                    len,
                );
            }
        }

        let shifted = next != centroids;
        centroids = next;
        if !shifted || iterations >= max_iters {
            break;
        }
    }

    let obj = objective(features, &centroids, &assignments, tau);
    Ok(ClusterModel {
        centroids,
        assignments,
        h_count: h,
        tau,
        objective: obj,
        objective_trace: trace,
        iterations,
    })
}

/// Best of `restarts` Lloyd runs by objective.
pub fn kmeans_restarts<R: Rng + ?Sized>(
    features: &[MobilityFeature],
    h: usize,
    tau: f64,
    opts: KMeansOptions,
    rng: &mut R,
) -> Result<ClusterModel> {
    let mut best: Option<ClusterModel> = None;
    for _ in 0..opts.restarts.max(1) {
        let m = kmeans(features, h, tau, opts.max_iters, rng)?;
        if best.as_ref().is_none_or(|b| m.objective < b.objective) {
            best = Some(m);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Calinski-Harabasz index with the trajectory distance. Returns
/// `f64::INFINITY` when every cluster is a single repeated point.
pub fn chi(features: &[MobilityFeature], model: &ClusterModel) -> Result<f64> {
    if model.h_count < 2 {
        return Err(Error::invalid("CHI needs at least two clusters"));
    }
    if model.assignments.len() != features.len() {
        return Err(Error::invalid("assignments do not match features"));
    }
    let h = model.h_count;
    let n = features.len();
    let o = global_centroid(features)?;
    let sizes = model.cluster_sizes();
    let mut between = 0.0;
    for (c, centroid) in model.centroids.iter().enumerate() {
        between += sizes[c] as f64 * feature_distance(centroid, &o, model.tau)?;
    }
    let within = objective(features, &model.centroids, &model.assignments, model.tau);
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(between / within * (n as f64 - h as f64) / (h as f64 - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub h: usize,
    pub chi: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub model: ClusterModel,
    pub chi: f64,
    pub candidates: Vec<Candidate>,
}

/// Clusters with every `H` in `2..=h_max` and keeps the highest-CHI model.
pub fn select_h<R: Rng + ?Sized>(
    features: &[MobilityFeature],
    h_max: usize,
    tau: f64,
    opts: KMeansOptions,
    rng: &mut R,
) -> Result<Selection> {
    if features.len() < 2 {
        return Err(Error::invalid("need at least two features to cluster"));
    }
    if h_max < 2 {
        return Err(Error::invalid("h_max must be at least 2"));
    }
    let mut best: Option<(ClusterModel, f64)> = None;
    let mut candidates = Vec::new();
    for h in 2..=h_max.min(features.len()) {
        let model = kmeans_restarts(features, h, tau, opts, rng)?;
        let score = chi(features, &model)?;
        candidates.push(Candidate {
            h,
            chi: score,
            objective: model.objective,
        });
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((model, score));
        }
    }
    let (model, chi) = best.expect("h_max >= 2 and at least two features");
    Ok(Selection {
        model,
        chi,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn feat(points: &[(f64, f64, f64)]) -> MobilityFeature {
        MobilityFeature {
            samples: points
                .iter()
                .map(|&(x, y, v)| FeatureSample { x, y, v })
                .collect(),
        }
    }

    #[test]
    fn distance_examples() {
        let a = feat(&[(1.0, 2.0, 3.0), (4.0, 5.0, 6.0)]);
        assert_eq!(feature_distance(&a, &a, 0.3).unwrap(), 0.0);
        let b = feat(&[(1.0, 2.0, 0.0), (4.0, 5.0, 9.0)]);
        assert_eq!(feature_distance(&a, &b, 1.0).unwrap(), 0.0);
        let d = feat(&[(1.0, 0.0, 2.0)]);
        let o = feat(&[(0.0, 0.0, 0.0)]);
        assert_eq!(feature_distance(&d, &o, 0.5).unwrap(), 2.5);
        assert!(feature_distance(&a, &d, 0.5).is_err());
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let fs = vec![
            feat(&[(0.0, 0.0, 1.0)]),
            feat(&[(2.0, 4.0, 3.0)]),
            feat(&[(4.0, 2.0, 2.0)]),
        ];
        let m = kmeans(&fs, 1, 0.5, 300, &mut rng_from_seed(1)).unwrap();
        assert_eq!(m.centroids[0], feat(&[(2.0, 2.0, 2.0)]));
        assert!(m.assignments.iter().all(|a| *a == 0));
    }

    #[test]
    fn lloyd_objective_never_increases() {
        let mut rng = rng_from_seed(8);
        let fs: Vec<_> = (0..60)
            .map(|_| {
                feat(
                    &(0..5)
                        .map(|_| (rng.random::<f64>() * 16.0, rng.random::<f64>() * 16.0, rng.random::<f64>() * 3.0))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        for seed in 0..20 {
            let m = kmeans(&fs, 4, 0.5, 300, &mut rng_from_seed(seed)).unwrap();
            for w in m.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", m.objective_trace);
            }
            assert!(m.objective <= *m.objective_trace.last().unwrap() + 1e-9);
        }
    }

    #[test]
    fn chi_infinite_on_zero_dispersion() {
        let fs = vec![
            feat(&[(0.0, 0.0, 1.0)]),
            feat(&[(0.0, 0.0, 1.0)]),
            feat(&[(9.0, 9.0, 1.0)]),
            feat(&[(9.0, 9.0, 1.0)]),
        ];
        let m = kmeans_restarts(&fs, 2, 1.0, KMeansOptions::default(), &mut rng_from_seed(2)).unwrap();
        assert_eq!(chi(&fs, &m).unwrap(), f64::INFINITY);
    }

    #[test]
    fn chi_hand_computed_instance() {
        // x-only points 0, 2 | 10, 12 with tau = 1, T_u = 1.
        // Centroids 1 and 11, global mean 6.
        // between = 2*25 + 2*25 = 100, within = 4 * 1 = 4, scale (4-2)/(2-1) = 2.
        let fs = vec![
            feat(&[(0.0, 0.0, 0.0)]),
            feat(&[(2.0, 0.0, 0.0)]),
            feat(&[(10.0, 0.0, 0.0)]),
            feat(&[(12.0, 0.0, 0.0)]),
        ];
        let m = ClusterModel {
            centroids: vec![feat(&[(1.0, 0.0, 0.0)]), feat(&[(11.0, 0.0, 0.0)])],
            assignments: vec![0, 0, 1, 1],
            h_count: 2,
            tau: 1.0,
            objective: 4.0,
            objective_trace: vec![],
            iterations: 1,
        };
        assert!((chi(&fs, &m).unwrap() - 50.0).abs() < 1e-12);
        let relabeled = ClusterModel {
            centroids: vec![m.centroids[1].clone(), m.centroids[0].clone()],
            assignments: vec![1, 1, 0, 0],
            ..m.clone()
        };
        assert_eq!(chi(&fs, &relabeled).unwrap(), chi(&fs, &m).unwrap());
    }

    #[test]
    fn select_h_finds_three_separated_groups() {
        let mut rng = rng_from_seed(5);
        let centers = [(2.0, 2.0, 1.0), (14.0, 2.0, 2.0), (8.0, 14.0, 3.0)];
        let mut fs = Vec::new();
        for c in centers {
            for _ in 0..5 {
                fs.push(feat(&[(
                    c.0 + rng.random::<f64>() * 0.2,
                    c.1 + rng.random::<f64>() * 0.2,
                    c.2,
                )]));
            }
        }
        let sel = select_h(&fs, 3, 0.5, KMeansOptions::default(), &mut rng).unwrap();
        assert_eq!(sel.model.h_count, 3);
        let only2 = select_h(&fs, 2, 0.5, KMeansOptions::default(), &mut rng).unwrap();
        assert_eq!(only2.model.h_count, 2);
        assert_eq!(only2.candidates.len(), 1);
    }

    #[test]
    fn select_h_input_errors() {
        let fs = vec![feat(&[(0.0, 0.0, 0.0)])];
        assert!(select_h(&fs, 3, 0.5, KMeansOptions::default(), &mut rng_from_seed(0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn assignments_partition_all_points(seed in 0u64..500, n in 3usize..20, h in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let fs: Vec<_> = (0..n).map(|_| feat(&[(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>())])).collect();
            let h = h.min(n);
            let m = kmeans(&fs, h, 0.5, 300, &mut rng).unwrap();
            proptest::prop_assert_eq!(m.assignments.len(), n);
            proptest::prop_assert!(m.assignments.iter().all(|a| *a < h));
            proptest::prop_assert!(m.cluster_sizes().iter().all(|s| *s > 0));
        }
    }
}
