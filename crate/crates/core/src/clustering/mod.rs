//! ε-ball clustering and the per-cluster moments the proxy expansion needs.
//!
//! Clustering is a single greedy pass: the first row not yet assigned seeds a
//! cluster consisting of every unassigned row within Euclidean distance ε of
//! that *seed*. Centroids are member means, so members sit within 2ε of their
//! centroid by the triangle inequality. The pass is deterministic in the row
//! order, and the grid-accelerated backend used for large inputs produces
//! bit-identical results to the brute-force scan.
//!
//! For each cluster the moments needed to evaluate the summed second-order
//! proxy in O(1) per cluster are precomputed: the member count N_j, the
//! centroid z^c_j, the first deviation moment Σ(z_k − z^c_j), and the
//! deviation scatter B_j = Σ(z_k − z^c_j)(z_k − z^c_j)ᵀ.

mod artifact;

use ndarray::{Array1, Array2, ArrayView2};
use std::collections::HashMap;

use crate::error::{Error, Result};

/// Row count at or above which the greedy pass switches from the brute-force
/// neighbor scan to a spatial-grid index.
const GRID_THRESHOLD: usize = 50_000;

/// How many of the leading coordinates the grid index bins on. Candidates
/// from the grid are always verified with exact full-dimensional distances,
/// so this only affects speed, never results.
const GRID_DIMS: usize = 4;

/// Per-column affine standardization record: v ↦ (v − mean) / scale.
///
/// Scales are sample standard deviations (n−1 denominator). Exempt columns
/// (intercepts, binary responses) pass through with mean 0 and scale 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub exempt: Vec<bool>,
}

impl Standardization {
    /// The identity record of width `d` (nothing shifted or scaled).
    pub fn identity(d: usize) -> Self {
        Standardization {
            means: vec![0.0; d],
            scales: vec![1.0; d],
            exempt: vec![true; d],
        }
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    /// Apply the record to a matrix with matching column count.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.width() {
            return Err(Error::DimensionMismatch {
                context: "Standardization::apply".to_string(),
                expected: self.width(),
                got: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for j in 0..self.width() {
            if self.exempt[j] {
                continue;
            }
            let (m, s) = (self.means[j], self.scales[j]);
            for v in out.column_mut(j).iter_mut() {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Center and scale each non-exempt column to mean 0, sample sd 1.
///
/// `names` is used in error messages only and may be empty. A non-exempt
/// column with zero variance is an error: it cannot be scaled, and silently
/// passing it through would distort every distance.
pub fn standardize(
    x: ArrayView2<f64>,
    exempt: &[bool],
    names: &[String],
) -> Result<(Array2<f64>, Standardization)> {
    let (n, d) = x.dim();
    if exempt.len() != d {
        return Err(Error::DimensionMismatch {
            context: "standardize exempt mask".to_string(),
            expected: d,
            got: exempt.len(),
        });
    }
    let mut means = vec![0.0; d];
    let mut scales = vec![1.0; d];
    for j in 0..d {
        if exempt[j] {
            continue;
        }
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
        let var = if n > 1 { ss / (n as f64 - 1.0) } else { 0.0 };
        if var == 0.0 || !var.is_finite() {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
            return Err(Error::ZeroVariance { index: j, name });
        }
        means[j] = mean;
        scales[j] = var.sqrt();
    }
    let record = Standardization {
        means,
        scales,
        exempt: exempt.to_vec(),
    };
    let out = record.apply(x)?;
    Ok((out, record))
}

/// One ε-ball cluster with its proxy moments, in data-space coordinates
/// z = (y, x) when built from a dataset, or raw point coordinates when built
/// from a bare matrix.
#[derive(Clone, Debug)]
pub struct Cluster {
    /// Row index (into the clustered input) of the seed point.
    pub seed_row: usize,
    /// Member count N_j.
    pub count: usize,
    /// Centroid: the member mean.
    pub centroid: Array1<f64>,
    /// Σ_k (z_k − centroid) over members.
    pub first_moment: Array1<f64>,
    /// B_j = Σ_k (z_k − centroid)(z_k − centroid)ᵀ over members.
    pub second_moment: Array2<f64>,
    /// Response class label, present when clustering was done per class.
    pub label: Option<f64>,
}

/// A fitted clustering: the clusters plus the row → cluster assignment.
#[derive(Clone, Debug)]
pub struct ClusterModel {
    /// Ball radius used by the greedy pass.
    pub epsilon: f64,
    /// Dimension of centroids and moments.
    pub dim: usize,
    /// Total rows of the underlying dataset (clustered or not).
    pub n_total: usize,
    /// Rows covered by some cluster (rows outside the clustered stratum are
    /// excluded).
    pub n_clustered: usize,
    pub clusters: Vec<Cluster>,
    /// Length `n_total`; cluster index, or −1 for rows outside the clustered
    /// stratum.
    pub assignment: Vec<i64>,
    /// Standardization applied to the covariates before clustering (identity
    /// when the caller clustered raw coordinates).
    pub standardization: Standardization,
    /// Whether rows were clustered separately per response class.
    pub by_class: bool,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Fraction of clustered rows that became cluster centroids, N_C / n.
    ///
    /// This is the knob to watch while choosing ε: it is the share of the
    /// data the proxy evaluates at every iteration.
    pub fn monitor_fraction(&self) -> f64 {
        if self.n_clustered == 0 {
            return 0.0;
        }
        self.clusters.len() as f64 / self.n_clustered as f64
    }

    /// Internal consistency checks; run after loading an artifact.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidArtifact {
            path: "<memory>".to_string(),
            reason,
        };
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(fail(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.assignment.len() != self.n_total {
            return Err(fail(format!(
                "assignment length {} != n_total {}",
                self.assignment.len(),
                self.n_total
            )));
        }
        let n_c = self.clusters.len() as i64;
        let mut covered = 0usize;
        let mut counts = vec![0usize; self.clusters.len()];
        for (row, &a) in self.assignment.iter().enumerate() {
            if a == -1 {
                continue;
            }
            if a < 0 || a >= n_c {
                return Err(fail(format!("row {row} assigned to invalid cluster {a}")));
            }
            counts[a as usize] += 1;
            covered += 1;
        }
        if covered != self.n_clustered {
            return Err(fail(format!(
                "assignment covers {covered} rows but n_clustered is {}",
                self.n_clustered
            )));
        }
        for (j, c) in self.clusters.iter().enumerate() {
            if c.count != counts[j] {
                return Err(fail(format!(
                    "cluster {j} records {} members but assignment gives {}",
                    c.count, counts[j]
                )));
            }
            if c.count == 0 {
                return Err(fail(format!("cluster {j} is empty")));
            }
            if c.centroid.len() != self.dim
                || c.first_moment.len() != self.dim
                || c.second_moment.dim() != (self.dim, self.dim)
            {
                return Err(fail(format!("cluster {j} has mismatched dimensions")));
            }
        }
        Ok(())
    }

    /// Rows not covered by any cluster, in row order.
    pub fn unclustered_rows(&self) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == -1)
            .map(|(r, _)| r)
            .collect()
    }
}

/// Moments for one membership list.
#[derive(Clone, Debug)]
pub struct ClusterStats {
    pub count: usize,
    pub centroid: Array1<f64>,
    pub first_moment: Array1<f64>,
    pub second_moment: Array2<f64>,
}

/// Compute {N_j, centroid, Σ deviations, Σ outer deviations} for each
/// membership list over the given points.
pub fn precompute_cluster_stats(
    points: ArrayView2<f64>,
    memberships: &[Vec<usize>],
) -> Vec<ClusterStats> {
    let d = points.ncols();
    memberships
        .iter()
        .map(|members| {
            let nj = members.len();
            let mut centroid = Array1::<f64>::zeros(d);
            for &k in members {
                for j in 0..d {
                    centroid[j] += points[[k, j]];
                }
            }
            centroid.mapv_inplace(|v| v / nj as f64);
            let mut first = Array1::<f64>::zeros(d);
            let mut second = Array2::<f64>::zeros((d, d));
            let mut dev = vec![0.0; d];
            for &k in members {
                for j in 0..d {
                    dev[j] = points[[k, j]] - centroid[j];
                    first[j] += dev[j];
                }
                for a in 0..d {
                    for b in 0..=a {
                        second[[a, b]] += dev[a] * dev[b];
                    }
                }
            }
            // mirror the lower triangle so stored symmetry is bitwise
            for a in 0..d {
                for b in (a + 1)..d {
                    second[[a, b]] = second[[b, a]];
                }
            }
            ClusterStats {
                count: nj,
                centroid,
                first_moment: first,
                second_moment: second,
            }
        })
        .collect()
}

/// Progress callback: (rows assigned so far, clusters formed so far).
pub type Progress<'a> = &'a mut dyn FnMut(usize, usize);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Backend {
    Brute,
    Grid,
}

/// Greedy ε-ball pass over `points`; returns seed indices and sorted member
/// lists in formation order.
fn greedy_pass(
    points: ArrayView2<f64>,
    epsilon: f64,
    backend: Backend,
    mut progress: Option<Progress>,
) -> Vec<(usize, Vec<usize>)> {
    let n = points.nrows();
    let eps2 = epsilon * epsilon;
    let mut assigned = vec![false; n];
    let mut clusters: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut n_assigned = 0usize;
    let mut next_report = 10_000usize;

    let dist2 = |a: usize, b: usize| -> f64 {
        let (ra, rb) = (points.row(a), points.row(b));
        let mut s = 0.0;
        for j in 0..ra.len() {
            let d = ra[j] - rb[j];
            s += d * d;
        }
        s
    };

    match backend {
        Backend::Brute => {
            for i in 0..n {
                if assigned[i] {
                    continue;
                }
                let mut members = vec![i];
                assigned[i] = true;
                for k in (i + 1)..n {
                    if !assigned[k] && dist2(i, k) <= eps2 {
                        assigned[k] = true;
                        members.push(k);
                    }
                }
                n_assigned += members.len();
                clusters.push((i, members));
                if let Some(cb) = progress.as_mut() {
                    if n_assigned >= next_report {
                        cb(n_assigned, clusters.len());
                        next_report += 10_000;
                    }
                }
            }
        }
        Backend::Grid => {
            let d = points.ncols();
            let q = d.min(GRID_DIMS);
            let key_of = |row: usize| -> [i64; GRID_DIMS] {
                let mut key = [0i64; GRID_DIMS];
                for j in 0..q {
                    key[j] = (points[[row, j]] / epsilon).floor() as i64;
                }
                key
            };
            let mut cells: HashMap<[i64; GRID_DIMS], Vec<u32>> = HashMap::new();
            for row in 0..n {
                cells.entry(key_of(row)).or_default().push(row as u32);
            }
            let mut neighbor_keys = Vec::new();
            for i in 0..n {
                if assigned[i] {
                    continue;
                }
                let base = key_of(i);
                neighbor_keys.clear();
                neighbor_keys.push(base);
                for j in 0..q {
                    let mut next = Vec::with_capacity(neighbor_keys.len() * 3);
                    for key in &neighbor_keys {
                        for off in [-1i64, 0, 1] {
                            let mut k2 = *key;
                            k2[j] = base[j] + off;
                            next.push(k2);
                        }
                    }
                    next.sort_unstable();
                    next.dedup();
                    neighbor_keys = next;
                }
                let mut members = Vec::new();
                for key in &neighbor_keys {
                    if let Some(rows) = cells.get(key) {
                        for &r in rows {
                            let r = r as usize;
                            if !assigned[r] && dist2(i, r) <= eps2 {
                                members.push(r);
                            }
                        }
                    }
                }
                members.sort_unstable();
                for &m in &members {
                    assigned[m] = true;
                }
                // drop assigned members from their cells to keep scans short
                let mut touched: Vec<[i64; GRID_DIMS]> =
                    members.iter().map(|&m| key_of(m)).collect();
                touched.sort_unstable();
                touched.dedup();
                for key in touched {
                    if let Some(rows) = cells.get_mut(&key) {
                        rows.retain(|&r| !assigned[r as usize]);
                        if rows.is_empty() {
                            cells.remove(&key);
                        }
                    }
                }
                n_assigned += members.len();
                clusters.push((i, members));
                if let Some(cb) = progress.as_mut() {
                    if n_assigned >= next_report {
                        cb(n_assigned, clusters.len());
                        next_report += 10_000;
                    }
                }
            }
        }
    }
    clusters
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidValue {
            name: "epsilon".to_string(),
            reason: format!("must be a positive finite real, got {epsilon}"),
        });
    }
    Ok(())
}

fn cluster_impl(
    points: ArrayView2<f64>,
    epsilon: f64,
    backend: Backend,
    progress: Option<Progress>,
) -> Result<ClusterModel> {
    check_epsilon(epsilon)?;
    let n = points.nrows();
    if n == 0 {
        return Err(Error::InvalidValue {
            name: "points".to_string(),
            reason: "cannot cluster an empty point set".to_string(),
        });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "cluster input points".to_string(),
            row: None,
        });
    }
    let raw = greedy_pass(points, epsilon, backend, progress);
    let memberships: Vec<Vec<usize>> = raw.iter().map(|(_, m)| m.clone()).collect();
    let stats = precompute_cluster_stats(points, &memberships);
    let mut assignment = vec![-1i64; n];
    for (cid, (_, members)) in raw.iter().enumerate() {
        for &m in members {
            assignment[m] = cid as i64;
        }
    }
    let clusters = raw
        .iter()
        .zip(stats)
        .map(|((seed, _), s)| Cluster {
            seed_row: *seed,
            count: s.count,
            centroid: s.centroid,
            first_moment: s.first_moment,
            second_moment: s.second_moment,
            label: None,
        })
        .collect();
    Ok(ClusterModel {
        epsilon,
        dim: points.ncols(),
        n_total: n,
        n_clustered: n,
        clusters,
        assignment,
        standardization: Standardization::identity(points.ncols()),
        by_class: false,
    })
}

/// Cluster the rows of a matrix with the greedy ε-ball pass.
///
/// Rows are taken as-is: standardize them first if the columns are not on
/// comparable scales. Inputs of 50,000 rows and above are processed through a
/// spatial grid; the results are identical to the brute-force scan either
/// way.
pub fn cluster(points: ArrayView2<f64>, epsilon: f64) -> Result<ClusterModel> {
    cluster_with_progress(points, epsilon, None)
}

/// [`cluster`] with a progress callback invoked every ~10,000 assigned rows.
pub fn cluster_with_progress(
    points: ArrayView2<f64>,
    epsilon: f64,
    progress: Option<Progress>,
) -> Result<ClusterModel> {
    let backend = if points.nrows() >= GRID_THRESHOLD {
        Backend::Grid
    } else {
        Backend::Brute
    };
    cluster_impl(points, epsilon, backend, progress)
}

/// [`cluster`] restricted to a subset of rows.
///
/// Rows outside `rows` are assigned −1 (the exact stratum); everything else
/// is identical to clustering the subset matrix on its own, with seed rows
/// and the assignment mapped back to the original row indices. `rows = None`
/// clusters every row.
pub fn cluster_rows(
    points: ArrayView2<f64>,
    epsilon: f64,
    rows: Option<&[usize]>,
    progress: Option<Progress>,
) -> Result<ClusterModel> {
    let n_total = points.nrows();
    let selected: Vec<usize> = match rows {
        Some(r) => {
            for &k in r {
                if k >= n_total {
                    return Err(Error::InvalidValue {
                        name: "rows".to_string(),
                        reason: format!("row index {k} out of range for {n_total} rows"),
                    });
                }
            }
            r.to_vec()
        }
        None => return cluster_with_progress(points, epsilon, progress),
    };
    if selected.is_empty() {
        return Err(Error::InvalidValue {
            name: "rows".to_string(),
            reason: "cannot cluster an empty row selection".to_string(),
        });
    }
    let d = points.ncols();
    let mut sub = Array2::<f64>::zeros((selected.len(), d));
    for (i, &k) in selected.iter().enumerate() {
        sub.row_mut(i).assign(&points.row(k));
    }
    let local = cluster_with_progress(sub.view(), epsilon, progress)?;
    let mut assignment = vec![-1i64; n_total];
    for (i, &k) in selected.iter().enumerate() {
        assignment[k] = local.assignment[i];
    }
    let clusters = local
        .clusters
        .into_iter()
        .map(|c| Cluster {
            seed_row: selected[c.seed_row],
            ..c
        })
        .collect();
    Ok(ClusterModel {
        epsilon,
        dim: d,
        n_total,
        n_clustered: selected.len(),
        clusters,
        assignment,
        standardization: Standardization::identity(d),
        by_class: false,
    })
}

/// Cluster covariate rows separately within each response class.
///
/// For a discrete response, rows are grouped by exact response value (classes
/// ordered ascending) and each group is clustered on its covariates alone.
/// Clusters are then lifted to data-space z = (y, x): the centroid gets the
/// class label as its response coordinate, and the response components of the
/// moments are exactly zero. `rows` restricts clustering to a subset of rows
/// (e.g. the estimated stratum); excluded rows are assigned −1.
pub fn cluster_by_class(
    y: &[f64],
    x: ArrayView2<f64>,
    epsilon: f64,
    rows: Option<&[usize]>,
    mut progress: Option<Progress>,
) -> Result<ClusterModel> {
    check_epsilon(epsilon)?;
    let n_total = y.len();
    if x.nrows() != n_total {
        return Err(Error::DimensionMismatch {
            context: "cluster_by_class response vs covariate rows".to_string(),
            expected: n_total,
            got: x.nrows(),
        });
    }
    let selected: Vec<usize> = match rows {
        Some(r) => {
            for &k in r {
                if k >= n_total {
                    return Err(Error::InvalidValue {
                        name: "rows".to_string(),
                        reason: format!("row index {k} out of range for {n_total} rows"),
                    });
                }
            }
            r.to_vec()
        }
        None => (0..n_total).collect(),
    };
    if selected.is_empty() {
        return Err(Error::InvalidValue {
            name: "rows".to_string(),
            reason: "cannot cluster an empty row selection".to_string(),
        });
    }

    // distinct class labels, ascending
    let mut labels: Vec<f64> = Vec::new();
    for &k in &selected {
        if !y[k].is_finite() {
            return Err(Error::NonFinite {
                context: "cluster_by_class response".to_string(),
                row: Some(k),
            });
        }
        if !labels.contains(&y[k]) {
            labels.push(y[k]);
        }
    }
    labels.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let d = x.ncols();
    let dim = d + 1;
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut assignment = vec![-1i64; n_total];
    let mut assigned_before = 0usize;

    for &label in &labels {
        let class_rows: Vec<usize> = selected.iter().copied().filter(|&k| y[k] == label).collect();
        let mut class_x = Array2::<f64>::zeros((class_rows.len(), d));
        for (i, &k) in class_rows.iter().enumerate() {
            class_x.row_mut(i).assign(&x.row(k));
        }
        let offset = clusters.len() as i64;
        let sub = match progress.as_mut() {
            Some(outer) => {
                let done = assigned_before;
                let off = offset as usize;
                let mut forward =
                    |rows_done: usize, n_clusters: usize| outer(done + rows_done, off + n_clusters);
                cluster_with_progress(class_x.view(), epsilon, Some(&mut forward))?
            }
            None => cluster(class_x.view(), epsilon)?,
        };
        assigned_before += class_rows.len();
        for (local, &orig) in class_rows.iter().enumerate() {
            assignment[orig] = offset + sub.assignment[local];
        }
        for c in sub.clusters {
            // lift covariate-space moments into z = (y, x) with zero response
            // components: within a class every member shares the label exactly
            let mut centroid = Array1::<f64>::zeros(dim);
            centroid[0] = label;
            centroid.slice_mut(ndarray::s![1..]).assign(&c.centroid);
            let mut first = Array1::<f64>::zeros(dim);
            first.slice_mut(ndarray::s![1..]).assign(&c.first_moment);
            let mut second = Array2::<f64>::zeros((dim, dim));
            second
                .slice_mut(ndarray::s![1.., 1..])
                .assign(&c.second_moment);
            clusters.push(Cluster {
                seed_row: class_rows[c.seed_row],
                count: c.count,
                centroid,
                first_moment: first,
                second_moment: second,
                label: Some(label),
            });
        }
    }

    Ok(ClusterModel {
        epsilon,
        dim,
        n_total,
        n_clustered: selected.len(),
        clusters,
        assignment,
        standardization: Standardization::identity(d),
        by_class: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points_1d(vals: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((vals.len(), 1), vals.to_vec()).unwrap()
    }

    #[test]
    fn standardize_centers_and_scales_with_sample_sd() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let exempt = vec![false, true];
        let (out, record) = standardize(x.view(), &exempt, &[]).unwrap();
        // column (1,2,3): mean 2, sample sd 1 → (−1, 0, 1)
        assert_relative_eq!(out[[0, 0]], -1.0, epsilon = 1e-15);
        assert_relative_eq!(out[[1, 0]], 0.0, epsilon = 1e-15);
        assert_relative_eq!(out[[2, 0]], 1.0, epsilon = 1e-15);
        assert_relative_eq!(record.means[0], 2.0);
        assert_relative_eq!(record.scales[0], 1.0);
        // exempt column untouched
        for k in 0..3 {
            assert_eq!(out[[k, 1]], 5.0);
        }
        assert_eq!(record.scales[1], 1.0);
    }

    #[test]
    fn standardize_rejects_constant_column() {
        let x = array![[1.0, 7.0], [2.0, 7.0]];
        let names = vec!["a".to_string(), "flat".to_string()];
        match standardize(x.view(), &[false, false], &names) {
            Err(Error::ZeroVariance { index: 1, name }) => assert_eq!(name, "flat"),
            other => panic!("expected zero-variance error, got {other:?}"),
        }
    }

    #[test]
    fn standardization_record_reapplies_to_new_data() {
        let x = array![[1.0], [2.0], [3.0]];
        let (_, record) = standardize(x.view(), &[false], &[]).unwrap();
        let fresh = array![[4.0]];
        let out = record.apply(fresh.view()).unwrap();
        assert_relative_eq!(out[[0, 0]], 2.0, epsilon = 1e-15); // (4−2)/1
    }

    #[test]
    fn greedy_hand_trace_one_dimension() {
        // ε = 0.6 over (0, 0.5, 1.1, 5, 5.4):
        // row 0 seeds {0, 0.5}; 1.1 is 1.1 from the seed → next seed {1.1};
        // 5 seeds {5, 5.4}
        let pts = points_1d(&[0.0, 0.5, 1.1, 5.0, 5.4]);
        let model = cluster(pts.view(), 0.6).unwrap();
        assert_eq!(model.n_clusters(), 3);
        assert_eq!(model.assignment, vec![0, 0, 1, 2, 2]);
        assert_eq!(model.clusters[0].seed_row, 0);
        assert_eq!(model.clusters[1].seed_row, 2);
        assert_eq!(model.clusters[2].seed_row, 3);
        assert_relative_eq!(model.clusters[0].centroid[0], 0.25);
        assert_relative_eq!(model.clusters[2].centroid[0], 5.2);
        model.validate().unwrap();
    }

    #[test]
    fn epsilon_bounds_distance_to_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 400;
        let pts = Array2::from_shape_fn((n, 3), |_| rng.random_range(-2.0..2.0));
        let eps = 0.8;
        let model = cluster(pts.view(), eps).unwrap();
        model.validate().unwrap();
        for (cid, c) in model.clusters.iter().enumerate() {
            for row in 0..n {
                if model.assignment[row] == cid as i64 {
                    let mut d2 = 0.0;
                    for j in 0..3 {
                        let d = pts[[row, j]] - pts[[c.seed_row, j]];
                        d2 += d * d;
                    }
                    assert!(
                        d2.sqrt() <= eps + 1e-12,
                        "row {row} is {} from seed of cluster {cid}",
                        d2.sqrt()
                    );
                    // and within 2ε of the centroid by the triangle inequality
                    let mut c2 = 0.0;
                    for j in 0..3 {
                        let d = pts[[row, j]] - c.centroid[j];
                        c2 += d * d;
                    }
                    assert!(c2.sqrt() <= 2.0 * eps + 1e-12);
                }
            }
        }
    }

    #[test]
    fn clustering_is_a_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pts = Array2::from_shape_fn((300, 2), |_| rng.random_range(-1.0..1.0));
        let model = cluster(pts.view(), 0.3).unwrap();
        let total: usize = model.clusters.iter().map(|c| c.count).sum();
        assert_eq!(total, 300);
        assert!(model.assignment.iter().all(|&a| a >= 0));
        model.validate().unwrap();
    }

    #[test]
    fn tiny_epsilon_gives_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = Array2::from_shape_fn((50, 2), |_| rng.random_range(-1.0..1.0));
        let model = cluster(pts.view(), 1e-12).unwrap();
        assert_eq!(model.n_clusters(), 50);
        for (cid, c) in model.clusters.iter().enumerate() {
            assert_eq!(c.count, 1);
            assert_eq!(c.seed_row, cid);
            // singleton moments are exactly zero
            assert!(c.first_moment.iter().all(|&v| v == 0.0));
            assert!(c.second_moment.iter().all(|&v| v == 0.0));
        }
        assert_relative_eq!(model.monitor_fraction(), 1.0);
    }

    #[test]
    fn huge_epsilon_gives_one_cluster() {
        let pts = points_1d(&[0.0, 1.0, 2.0, 3.0]);
        let model = cluster(pts.view(), 100.0).unwrap();
        assert_eq!(model.n_clusters(), 1);
        assert_eq!(model.clusters[0].count, 4);
        assert_relative_eq!(model.monitor_fraction(), 0.25);
    }

    #[test]
    fn cluster_stats_match_hand_trace() {
        // cluster {(0,0), (2,0)}: centroid (1,0), first moment exactly (0,0),
        // B = [[2,0],[0,0]]
        let pts = array![[0.0, 0.0], [2.0, 0.0]];
        let stats = precompute_cluster_stats(pts.view(), &[vec![0, 1]]);
        assert_eq!(stats.len(), 1);
        let s = &stats[0];
        assert_eq!(s.count, 2);
        assert_relative_eq!(s.centroid[0], 1.0);
        assert_relative_eq!(s.centroid[1], 0.0);
        assert_eq!(s.first_moment[0], 0.0);
        assert_eq!(s.first_moment[1], 0.0);
        assert_relative_eq!(s.second_moment[[0, 0]], 2.0);
        assert_eq!(s.second_moment[[0, 1]], 0.0);
        assert_eq!(s.second_moment[[1, 0]], 0.0);
        assert_eq!(s.second_moment[[1, 1]], 0.0);
    }

    #[test]
    fn cluster_stats_first_moment_is_near_zero_generally() {
        // the centroid is the member mean, so Σ(z−c) only carries rounding
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = Array2::from_shape_fn((100, 3), |_| rng.random_range(-5.0..5.0));
        let members: Vec<usize> = (0..100).collect();
        let stats = precompute_cluster_stats(pts.view(), &[members]);
        for &v in stats[0].first_moment.iter() {
            assert!(v.abs() < 1e-10, "first moment component {v}");
        }
    }

    #[test]
    fn second_moment_is_bitwise_symmetric_and_psd_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pts = Array2::from_shape_fn((200, 4), |_| rng.random_range(-1.0..1.0));
        let model = cluster(pts.view(), 0.7).unwrap();
        for c in &model.clusters {
            for i in 0..4 {
                assert!(c.second_moment[[i, i]] >= 0.0);
                for j in 0..4 {
                    assert_eq!(
                        c.second_moment[[i, j]].to_bits(),
                        c.second_moment[[j, i]].to_bits()
                    );
                }
            }
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let pts = Array2::from_shape_fn((500, 3), |_| rng.random_range(-2.0..2.0));
        let a = cluster(pts.view(), 0.5).unwrap();
        let b = cluster(pts.view(), 0.5).unwrap();
        assert_eq!(a.assignment, b.assignment);
        for (ca, cb) in a.clusters.iter().zip(&b.clusters) {
            assert_eq!(ca.seed_row, cb.seed_row);
            for j in 0..3 {
                assert_eq!(ca.centroid[j].to_bits(), cb.centroid[j].to_bits());
                assert_eq!(ca.first_moment[j].to_bits(), cb.first_moment[j].to_bits());
            }
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(
                        ca.second_moment[[i, j]].to_bits(),
                        cb.second_moment[[i, j]].to_bits()
                    );
                }
            }
        }
    }

    #[test]
    fn grid_backend_matches_brute_force() {
        // exercise both backends explicitly on the same input, including a
        // dimension above the grid's binning width
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for d in [2usize, 6] {
            let pts = Array2::from_shape_fn((3_000, d), |_| rng.random_range(-2.0..2.0));
            let a = cluster_impl(pts.view(), 0.6, Backend::Brute, None).unwrap();
            let b = cluster_impl(pts.view(), 0.6, Backend::Grid, None).unwrap();
            assert_eq!(a.assignment, b.assignment, "d = {d}");
            assert_eq!(a.n_clusters(), b.n_clusters());
            for (ca, cb) in a.clusters.iter().zip(&b.clusters) {
                assert_eq!(ca.seed_row, cb.seed_row);
                for j in 0..d {
                    assert_eq!(ca.centroid[j].to_bits(), cb.centroid[j].to_bits());
                }
            }
        }
    }

    #[test]
    fn large_input_grid_selection_matches_brute_force() {
        // past the 50,000-row threshold cluster() takes the grid path; force
        // the brute backend for comparison
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let n = 60_000;
        let pts = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let auto = cluster(pts.view(), 0.25).unwrap();
        let brute = cluster_impl(pts.view(), 0.25, Backend::Brute, None).unwrap();
        assert_eq!(auto.assignment, brute.assignment);
        assert_eq!(auto.n_clusters(), brute.n_clusters());
    }

    #[test]
    fn by_class_binary_huge_epsilon_gives_one_cluster_per_class() {
        let y = vec![0.0, 1.0, 0.0, 1.0, 0.0];
        let x = array![[0.1], [5.0], [0.3], [5.2], [-0.1]];
        let model = cluster_by_class(&y, x.view(), 1e6, None, None).unwrap();
        assert_eq!(model.n_clusters(), 2);
        assert!(model.by_class);
        assert_eq!(model.clusters[0].label, Some(0.0));
        assert_eq!(model.clusters[1].label, Some(1.0));
        assert_eq!(model.clusters[0].count, 3);
        assert_eq!(model.clusters[1].count, 2);
        // centroid response coordinate is the class label
        assert_eq!(model.clusters[0].centroid[0], 0.0);
        assert_eq!(model.clusters[1].centroid[0], 1.0);
        // response components of the moments are exactly zero
        assert_eq!(model.clusters[0].first_moment[0], 0.0);
        assert_eq!(model.clusters[0].second_moment[[0, 0]], 0.0);
        assert_eq!(model.clusters[0].second_moment[[0, 1]], 0.0);
        assert_eq!(model.assignment, vec![0, 1, 0, 1, 0]);
        model.validate().unwrap();
    }

    #[test]
    fn by_class_two_single_points_give_two_singletons() {
        let y = vec![1.0, 0.0];
        let x = array![[0.0], [0.0]];
        let model = cluster_by_class(&y, x.view(), 0.5, None, None).unwrap();
        assert_eq!(model.n_clusters(), 2);
        assert!(model.clusters.iter().all(|c| c.count == 1));
    }

    #[test]
    fn by_class_counts_sum_like_independent_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let n = 500;
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
        let joint = cluster_by_class(&y, x.view(), 0.4, None, None).unwrap();

        for label in [0.0, 1.0] {
            let rows: Vec<usize> = (0..n).filter(|&k| y[k] == label).collect();
            let mut xc = Array2::<f64>::zeros((rows.len(), 2));
            for (i, &k) in rows.iter().enumerate() {
                xc.row_mut(i).assign(&x.row(k));
            }
            let solo = cluster(xc.view(), 0.4).unwrap();
            let count_in_joint = joint
                .clusters
                .iter()
                .filter(|c| c.label == Some(label))
                .count();
            assert_eq!(count_in_joint, solo.n_clusters(), "class {label}");
        }
    }

    #[test]
    fn by_class_row_subset_marks_excluded_rows() {
        let y = vec![0.0, 1.0, 0.0, 1.0];
        let x = array![[0.0], [1.0], [0.1], [1.1]];
        let rows = vec![0, 2];
        let model = cluster_by_class(&y, x.view(), 0.5, Some(&rows), None).unwrap();
        assert_eq!(model.n_clustered, 2);
        assert_eq!(model.assignment[1], -1);
        assert_eq!(model.assignment[3], -1);
        assert!(model.assignment[0] >= 0);
        assert_eq!(model.unclustered_rows(), vec![1, 3]);
        model.validate().unwrap();
    }

    #[test]
    fn monitor_fraction_matches_reference_ratio() {
        // 173,135 clusters over 4,664,957 clustered rows ≈ 3.71%
        let frac: f64 = 173_135.0 / 4_664_957.0;
        assert!((frac - 0.0371).abs() < 5e-5);
        // and the method computes exactly that ratio on a small model
        let pts = points_1d(&[0.0, 0.4, 10.0]);
        let model = cluster(pts.view(), 0.5).unwrap();
        assert_relative_eq!(model.monitor_fraction(), 2.0 / 3.0);
    }

    #[test]
    fn progress_callback_reports_monotone_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts = Array2::from_shape_fn((25_000, 2), |_| rng.random_range(-1.0..1.0));
        let mut reports: Vec<(usize, usize)> = Vec::new();
        let mut cb = |rows: usize, clusters: usize| reports.push((rows, clusters));
        cluster_with_progress(pts.view(), 0.05, Some(&mut cb)).unwrap();
        assert!(!reports.is_empty());
        for w in reports.windows(2) {
            assert!(w[1].0 >= w[0].0);
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn rejects_bad_epsilon_and_empty_input() {
        let pts = points_1d(&[0.0, 1.0]);
        assert!(cluster(pts.view(), 0.0).is_err());
        assert!(cluster(pts.view(), -1.0).is_err());
        assert!(cluster(pts.view(), f64::NAN).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(cluster(empty.view(), 0.5).is_err());
    }

    #[test]
    fn subset_clustering_maps_back_to_original_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let pts = Array2::from_shape_fn((300, 3), |_| rng.random_range(-2.0..2.0));
        // exclude every fifth row, as a stratum predicate would
        let rows: Vec<usize> = (0..300).filter(|k| k % 5 != 0).collect();
        let model = cluster_rows(pts.view(), 0.8, Some(&rows), None).unwrap();
        model.validate().unwrap();
        assert_eq!(model.n_total, 300);
        assert_eq!(model.n_clustered, rows.len());
        for k in (0..300).step_by(5) {
            assert_eq!(model.assignment[k], -1);
        }
        // must match clustering the subset matrix directly, up to the row map
        let mut sub = Array2::<f64>::zeros((rows.len(), 3));
        for (i, &k) in rows.iter().enumerate() {
            sub.row_mut(i).assign(&pts.row(k));
        }
        let direct = cluster(sub.view(), 0.8).unwrap();
        assert_eq!(model.n_clusters(), direct.n_clusters());
        for (c, d) in model.clusters.iter().zip(&direct.clusters) {
            assert_eq!(c.seed_row, rows[d.seed_row]);
            assert_eq!(c.count, d.count);
            assert_eq!(c.centroid, d.centroid);
            assert_eq!(c.second_moment, d.second_moment);
        }
        for (i, &k) in rows.iter().enumerate() {
            assert_eq!(model.assignment[k], direct.assignment[i]);
        }
        // rows = None is plain whole-matrix clustering
        let all = cluster_rows(pts.view(), 0.8, None, None).unwrap();
        assert_eq!(all.n_clustered, 300);
        assert!(cluster_rows(pts.view(), 0.8, Some(&[]), None).is_err());
        assert!(cluster_rows(pts.view(), 0.8, Some(&[300]), None).is_err());
    }
}
