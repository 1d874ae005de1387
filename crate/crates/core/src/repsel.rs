//! Dissimilarity-based sparse representative selection.
//!
//! Given pairwise dissimilarities `d_ij`, the combinatorial problem picks a set
//! `S` minimizing `lambda |S| + sum_j min_{i in S} d_ij`. The relaxed problem
//! replaces the binary membership matrix with `Z` whose columns lie on the
//! probability simplex and the row-support count with the row max-norm:
//!
//! ```text
//! min_Z  lambda * sum_i max_j z_ij + sum_ij z_ij d_ij   s.t.  z_.j in simplex
//! ```
//!
//! It is solved by operator splitting (ADMM): a row-wise proximal step on the
//! `l_inf` regularizer plus the linear term, alternating with a Euclidean
//! projection of every column onto the simplex.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest instance the exhaustive oracle accepts.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix(Array2<f64>);

impl DissimilarityMatrix {
    pub fn new(d: Array2<f64>) -> Result<Self> {
        let (n, m) = d.dim();
        if n != m || n == 0 {
            return Err(Error::Dimension(format!("dissimilarity matrix is {n}x{m}")));
        }
        for ((i, j), &v) in d.indexed_iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidValue(format!("d[{i}][{j}] = {v}")));
            }
            if i == j && v != 0.0 {
                return Err(Error::InvalidValue(format!(
                    "nonzero diagonal d[{i}][{i}] = {v}"
                )));
            }
            if v != d[[j, i]] {
                return Err(Error::InvalidValue(format!("asymmetric entry ({i}, {j})")));
            }
        }
        Ok(Self(d))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Every entry multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.mapv(|v| v * factor))
    }

    /// Rows and columns reordered so that new object `a` is old object `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        Self::new(Array2::from_shape_fn((n, n), |(a, b)| {
            self.0[[perm[a], perm[b]]]
        }))
    }
}

/// Relaxed membership matrix; `z[i][j]` is how much object `i` represents `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix(Array2<f64>);

impl MembershipMatrix {
    pub fn new(z: Array2<f64>) -> Result<Self> {
        let (n, m) = z.dim();
        if n != m || n == 0 {
            return Err(Error::Dimension(format!("membership matrix is {n}x{m}")));
        }
        if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidValue(
                "membership entry outside [0, 1]".into(),
            ));
        }
        for (j, col) in z.axis_iter(Axis(1)).enumerate() {
            let s: f64 = col.sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidValue(format!("column {j} sums to {s}")));
            }
        }
        Ok(Self(z))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.0.axis_iter(Axis(0)).map(|r| r.sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepselConfig {
    /// Row-sparsity weight; `None` means `0.1 * max_ij d_ij`.
    pub lambda: Option<f64>,
    /// Number of representatives to keep.
    pub k: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Splitting penalty, relative to the largest dissimilarity.
    pub rho: f64,
}

impl Default for RepselConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            k: 4,
            tol: 1e-6,
            max_iters: 10_000,
            rho: 1.0,
        }
    }
}

impl RepselConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lambda must be positive, got {l}")));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.tol > 0.0) || !(self.rho > 0.0) {
            return Err(Error::Config("tol and rho must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolve_lambda(&self, d: &DissimilarityMatrix) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda(d))
    }
}

/// `0.1 * max_ij d_ij`, or 1 when every dissimilarity is zero.
pub fn default_lambda(d: &DissimilarityMatrix) -> f64 {
    let m = d.max();
    if m > 0.0 {
        0.1 * m
    } else {
        1.0
    }
}

/// Pairwise Euclidean distances.
pub fn dissimilarity_matrix(features: &[Vec<f64>]) -> Result<DissimilarityMatrix> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Empty("no feature vectors".into()));
    }
    let dim = features[0].len();
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::Dimension(format!(
                "vector {i} has length {}, expected {dim}",
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature vector {i}")));
        }
    }
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let dist = features[i]
                .iter()
                .zip(&features[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    DissimilarityMatrix::new(d)
}

/// `lambda * sum_i max_j z_ij + sum_ij z_ij d_ij`.
pub fn relaxed_objective(d: &DissimilarityMatrix, lambda: f64, z: ArrayView2<'_, f64>) -> f64 {
    let reg: f64 = z
        .axis_iter(Axis(0))
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .sum();
    let fit: f64 = z.iter().zip(d.view().iter()).map(|(a, b)| a * b).sum();
    lambda * reg + fit
}

/// `lambda |S| + sum_j min_{i in S} d_ij`.
pub fn combinatorial_cost(d: &DissimilarityMatrix, lambda: f64, subset: &[usize]) -> f64 {
    let dv = d.view();
    let fit: f64 = (0..d.n())
        .map(|j| {
            subset
                .iter()
                .map(|&i| dv[[i, j]])
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    lambda * subset.len() as f64 + fit
}

/// Euclidean projection onto `{x >= 0, sum x = radius}`, in place.
fn project_simplex(v: &mut [f64], radius: f64) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - radius) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// `prox_{tau ||.||_inf}(v) = v - P_{||.||_1 <= tau}(v)`, in place.
fn prox_linf(v: &mut [f64], tau: f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= tau {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut mag: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    project_simplex(&mut mag, tau);
    for (x, p) in v.iter_mut().zip(mag) {
        *x -= x.signum() * p;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Iteration budget exhausted; the best iterate found is returned.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub z: MembershipMatrix,
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Objective of the best feasible iterate after each iteration.
    pub objective_trace: Vec<f64>,
    /// True when a rounded binary assignment replaced the splitting iterate.
    pub rounded: bool,
}

/// Nearest-member assignment for a candidate subset; returns the members that
/// actually represent something, and the resulting combinatorial cost.
fn assign(
    d: &DissimilarityMatrix,
    lambda: f64,
    candidates: &[usize],
) -> (Vec<usize>, Vec<usize>, f64) {
    let dv = d.view();
    let n = d.n();
    let mut owner = vec![0; n];
    let mut fit = 0.0;
    for j in 0..n {
        let mut best = candidates[0];
        for &i in &candidates[1..] {
            if dv[[i, j]] < dv[[best, j]] {
                best = i;
            }
        }
        owner[j] = best;
        fit += dv[[best, j]];
    }
    let mut used: Vec<usize> = owner.clone();
    used.sort_unstable();
    used.dedup();
    (used.clone(), owner, lambda * used.len() as f64 + fit)
}

/// Greedy drop descent: repeatedly remove the member whose removal lowers the
/// combinatorial cost most, preferring the larger index on ties.
fn descend(d: &DissimilarityMatrix, lambda: f64, support: &[usize]) -> (Vec<usize>, f64) {
    let (mut current, _, mut cost) = assign(d, lambda, support);
    while current.len() > 1 {
        let mut step: Option<(usize, f64)> = None;
        for pos in (0..current.len()).rev() {
            let mut trial = current.clone();
            trial.remove(pos);
            let (_, _, c) = assign(d, lambda, &trial);
            if c < cost && step.is_none_or(|(_, b)| c < b) {
                step = Some((pos, c));
            }
        }
        match step {
            Some((pos, c)) => {
                current.remove(pos);
                cost = c;
            }
            None => break,
        }
    }
    (current, cost)
}

/// Binary membership built from the splitting iterate by trying a few
/// supports (row max-norm levels and top row sums), improving each by drop
/// descent, and keeping the cheapest.
fn round(d: &DissimilarityMatrix, lambda: f64, z: ArrayView2<'_, f64>) -> (Array2<f64>, f64) {
    let n = d.n();
    let row_max: Vec<f64> = z
        .axis_iter(Axis(0))
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .collect();
    let peak = row_max.iter().copied().fold(0.0, f64::max);
    let mut supports: Vec<Vec<usize>> = [0.9, 0.5, 0.1, 1e-2, 1e-3]
        .iter()
        .map(|&level| (0..n).filter(|&i| row_max[i] >= level * peak).collect())
        .collect();
    let sums: Vec<f64> = z.axis_iter(Axis(0)).map(|r| r.sum()).collect();
    let ranked = rank_by(&sums);
    let top = (1..=n)
        .map(|t| {
            let mut s = ranked[..t].to_vec();
            s.sort_unstable();
            let (_, _, c) = assign(d, lambda, &s);
            (s, c)
        })
        .fold(None::<(Vec<usize>, f64)>, |best, (s, c)| match best {
            Some((_, b)) if b <= c => best,
            _ => Some((s, c)),
        });
    supports.extend(top.map(|t| t.0));
    supports.retain(|s| !s.is_empty());
    supports.sort();
    supports.dedup();

    let mut best: Option<(Vec<usize>, f64)> = None;
    for s in &supports {
        let (members, cost) = descend(d, lambda, s);
        let better = match &best {
            None => true,
            Some((m, c)) => cost < *c || (cost == *c && members < *m),
        };
        if better {
            best = Some((members, cost));
        }
    }
    let (members, cost) = best.expect("at least one support");
    let (_, owner, _) = assign(d, lambda, &members);
    let mut zb = Array2::zeros((n, n));
    for (j, &i) in owner.iter().enumerate() {
        zb[[i, j]] = 1.0;
    }
    (zb, cost)
}

/// Solve the relaxed problem.
///
/// Non-convergence is reported through [`SolveStatus`], with the best feasible
/// iterate returned.
pub fn solve_relaxed(d: &DissimilarityMatrix, cfg: &RepselConfig) -> Result<RelaxedSolution> {
    cfg.validate()?;
    let n = d.n();
    let lambda = cfg.resolve_lambda(d);
    let scale = if d.max() > 0.0 { d.max() } else { 1.0 };
    let rho = cfg.rho * scale;
    let dv = d.view();

    let mut c = Array2::from_elem((n, n), 1.0 / n as f64);
    let mut u = Array2::<f64>::zeros((n, n));
    let mut z = c.clone();
    let mut prev_obj = relaxed_objective(d, lambda, c.view());
    let mut best = (c.clone(), prev_obj);
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; n];

    if n == 1 {
        status = SolveStatus::Converged;
        trace.push(prev_obj);
    }
    while status != SolveStatus::Converged && iterations < cfg.max_iters {
        iterations += 1;
        for i in 0..n {
            for j in 0..n {
                row[j] = c[[i, j]] - u[[i, j]] - dv[[i, j]] / rho;
            }
            prox_linf(&mut row, lambda / rho);
            for j in 0..n {
                z[[i, j]] = row[j];
            }
        }
        let mut dual = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                col[i] = z[[i, j]] + u[[i, j]];
            }
            project_simplex(&mut col, 1.0);
            for i in 0..n {
                dual = dual.max((col[i] - c[[i, j]]).abs());
                c[[i, j]] = col[i];
            }
        }
        let mut primal = 0.0f64;
        for ((uij, zij), cij) in u.iter_mut().zip(z.iter()).zip(c.iter()) {
            let r = zij - cij;
            primal = primal.max(r.abs());
            *uij += r;
        }
        let obj = relaxed_objective(d, lambda, c.view());
        if obj < best.1 {
            best = (c.clone(), obj);
        }
        trace.push(best.1);
        let decrease = (prev_obj - obj).abs();
        prev_obj = obj;
        if decrease <= cfg.tol * obj.max(f64::MIN_POSITIVE) && primal <= cfg.tol && dual <= cfg.tol
        {
            status = SolveStatus::Converged;
        }
    }

    let (mut z_best, mut objective) = best;
    let mut rounded = false;
    let (zb, cost) = round(d, lambda, z_best.view());
    if cost <= objective * (1.0 + 1e-12) {
        z_best = zb;
        objective = cost;
        rounded = true;
        if let Some(last) = trace.last_mut() {
            *last = last.min(cost);
        }
    }
    // simplex projection leaves entries in [0, 1]; clean up rounding dust
    z_best.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Ok(RelaxedSolution {
        z: MembershipMatrix::new(z_best)?,
        lambda,
        objective,
        iterations,
        status,
        objective_trace: trace,
        rounded,
    })
}

/// Indices sorted by value descending, ties by smaller index.
fn rank_by(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// All rows ordered by row sum, largest first, ties by smaller index.
pub fn rank_rows(z: &MembershipMatrix) -> Vec<usize> {
    rank_by(&z.row_sums())
}

/// The `k` rows with the largest sums, returned in ascending index order.
pub fn select_representatives(z: &MembershipMatrix, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > z.n() {
        return Err(Error::InvalidValue(format!(
            "cannot select {k} representatives out of {}",
            z.n()
        )));
    }
    let mut top = rank_rows(z)[..k].to_vec();
    top.sort_unstable();
    Ok(top)
}

/// Exhaustive minimization of the combinatorial objective over all non-empty
/// subsets. Among optimal subsets the lexicographically smallest is returned.
pub fn exact_representatives(d: &DissimilarityMatrix, lambda: f64) -> Result<(Vec<usize>, f64)> {
    let n = d.n();
    if n > EXACT_MAX_N {
        return Err(Error::InvalidValue(format!(
            "exhaustive search limited to n <= {EXACT_MAX_N}, got {n}"
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 1u32..(1 << n) {
        let subset: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let cost = combinatorial_cost(d, lambda, &subset);
        let better = match &best {
            None => true,
            Some((s, c)) => {
                let tie = 1e-12 * c.abs().max(1.0);
                cost < c - tie || ((cost - c).abs() <= tie && subset < *s)
            }
        };
        if better {
            best = Some((subset, cost));
        }
    }
    Ok(best.expect("n >= 1"))
}

/// Key-frame indices: dissimilarities, relaxed solve, top-`k` rows.
pub fn extract_keyframes(frame_features: &[Vec<f64>], cfg: &RepselConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if frame_features.len() < cfg.k {
        return Err(Error::InvalidValue(format!(
            "{} frames, cannot pick {}",
            frame_features.len(),
            cfg.k
        )));
    }
    let d = dissimilarity_matrix(frame_features)?;
    let sol = solve_relaxed(&d, cfg)?;
    if sol.status != SolveStatus::Converged {
        log::warn!(
            "representative selection stopped after {} iterations without converging",
            sol.iterations
        );
    }
    select_representatives(&sol.z, cfg.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn two_point(dist: f64) -> DissimilarityMatrix {
        DissimilarityMatrix::new(array![[0.0, dist], [dist, 0.0]]).unwrap()
    }

    #[test]
    fn distances_examples() {
        let d = dissimilarity_matrix(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(d.view().iter().all(|&v| v == 0.0));
        let d = dissimilarity_matrix(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(d.view()[[0, 1]], 5.0);
        assert_eq!(d.view()[[1, 0]], 5.0);
        assert!(dissimilarity_matrix(&[vec![0.0], vec![1.0, 2.0]]).is_err());
        assert!(dissimilarity_matrix(&[vec![f64::INFINITY]]).is_err());
        assert!(dissimilarity_matrix(&[]).is_err());
    }

    #[test]
    fn matrix_validation() {
        assert!(DissimilarityMatrix::new(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(DissimilarityMatrix::new(array![[1.0]]).is_err());
        assert!(DissimilarityMatrix::new(array![[0.0, -1.0], [-1.0, 0.0]]).is_err());
        assert!(MembershipMatrix::new(array![[0.5, 1.0], [0.4, 0.0]]).is_err());
        assert!(MembershipMatrix::new(array![[0.5, 1.0], [0.5, 0.0]]).is_ok());
    }

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.2, 0.3, 0.5];
        project_simplex(&mut v, 1.0);
        assert_eq!(v, vec![0.2, 0.3, 0.5]);
        let mut v = vec![2.0, 0.0];
        project_simplex(&mut v, 1.0);
        assert_eq!(v, vec![1.0, 0.0]);
        let mut v = vec![-1.0, -1.0, -1.0, -1.0];
        project_simplex(&mut v, 1.0);
        assert_eq!(v, vec![0.25; 4]);
    }

    #[test]
    fn linf_prox_matches_moreau_identity() {
        // small vector inside the l1 ball collapses to zero
        let mut v = vec![0.1, -0.1];
        prox_linf(&mut v, 0.5);
        assert_eq!(v, vec![0.0, 0.0]);
        // largest entries are shrunk to a common level
        let mut v = vec![3.0, 1.0, -2.8];
        prox_linf(&mut v, 1.0);
        assert_abs_diff_eq!(v[0], 2.4, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2], -2.4, epsilon = 1e-12);
    }

    #[test]
    fn single_object_is_its_own_representative() {
        let d = DissimilarityMatrix::new(array![[0.0]]).unwrap();
        let sol = solve_relaxed(
            &d,
            &RepselConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sol.z.view(), array![[1.0]].view());
    }

    #[test]
    fn identical_objects_cost_lambda() {
        let d = DissimilarityMatrix::new(Array2::zeros((5, 5))).unwrap();
        let cfg = RepselConfig {
            lambda: Some(0.7),
            ..Default::default()
        };
        let sol = solve_relaxed(&d, &cfg).unwrap();
        assert_abs_diff_eq!(sol.objective, 0.7, epsilon = 1e-4);
        assert_eq!(
            sol.z.row_sums().iter().filter(|&&s| s > 1e-9).count(),
            1,
            "all columns concentrate on one row"
        );
    }

    #[test]
    fn row_selection_tie_rule_and_range() {
        let eye = MembershipMatrix::new(Array2::eye(3)).unwrap();
        assert_eq!(select_representatives(&eye, 2).unwrap(), vec![0, 1]);
        assert!(select_representatives(&eye, 0).is_err());
        assert!(select_representatives(&eye, 4).is_err());
        let dominant =
            MembershipMatrix::new(array![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
                .unwrap();
        assert_eq!(rank_rows(&dominant)[0], 2);
        assert_eq!(select_representatives(&dominant, 1).unwrap(), vec![2]);
    }

    #[test]
    fn exact_two_point_cases() {
        let (s, c) = exact_representatives(&two_point(1.0), 10.0).unwrap();
        assert_eq!(s, vec![0]);
        assert_abs_diff_eq!(c, 11.0, epsilon = 1e-12);
        let (s, c) = exact_representatives(&two_point(1.0), 0.1).unwrap();
        assert_eq!(s, vec![0, 1]);
        assert_abs_diff_eq!(c, 0.2, epsilon = 1e-12);
        let big = DissimilarityMatrix::new(Array2::zeros((13, 13))).unwrap();
        assert!(exact_representatives(&big, 1.0).is_err());
    }

    #[test]
    fn keyframes_with_n_equal_k_returns_everything() {
        let frames = vec![vec![0.0], vec![5.0], vec![9.0]];
        let cfg = RepselConfig {
            k: 3,
            ..Default::default()
        };
        assert_eq!(extract_keyframes(&frames, &cfg).unwrap(), vec![0, 1, 2]);
        let cfg = RepselConfig {
            k: 4,
            ..Default::default()
        };
        assert!(extract_keyframes(&frames, &cfg).is_err());
    }
}
