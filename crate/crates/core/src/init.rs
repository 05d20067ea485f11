//! Data-driven rule initialization.
//!
//! Rule centers are placed on training samples whose target is a strict local
//! extremum over their K nearest neighbors, preferring samples from dense
//! neighborhoods. Each rule's feature transform whitens the local covariance
//! of its neighborhood, so the transformed neighbor cloud has identity second
//! moment and the rule starts with circular activation contours in feature
//! space. Shape parameters start as plain Gaussians with a thin uncertainty
//! footprint, type-reduction weights start balanced, and each consequent is
//! the center sample's target.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{Network, Rule};

/// Default initial shape-uncertainty regulator.
pub const DEFAULT_EPSILON_DELTA: f64 = 0.1;

/// Relative floor applied to covariance eigenvalues before inversion.
pub const EIGENVALUE_FLOOR: f64 = 1e-8;

/// A training sample eligible to become a rule center.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCenter {
    /// Row index in the training set.
    pub index: usize,
    pub position: DVector<f64>,
    /// Target of the sample; becomes the rule consequent.
    pub output: f64,
    /// Mean squared distance to the K nearest neighbors; lower is denser.
    pub density: f64,
}

fn squared_distance(inputs: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut d = 0.0;
    for c in 0..inputs.ncols() {
        let diff = inputs[(a, c)] - inputs[(b, c)];
        d += diff * diff;
    }
    d
}

/// Indices of the `k` samples nearest to row `query` (query excluded), by
/// Euclidean distance with ties broken toward lower index.
pub fn knn(inputs: &DMatrix<f64>, query: usize, k: usize) -> Result<Vec<usize>> {
    let n = inputs.nrows();
    if k == 0 || k >= n {
        return Err(Error::Config(format!("k must satisfy 1 <= k < {n}, got {k}")));
    }
    if query >= n {
        return Err(Error::Config(format!("query index {query} out of range ({n} samples)")));
    }
    let mut order: Vec<(f64, usize)> = (0..n)
        .filter(|&i| i != query)
        .map(|i| (squared_distance(inputs, query, i), i))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(k).map(|(_, i)| i).collect())
}

fn density_of(inputs: &DMatrix<f64>, query: usize, neighbors: &[usize]) -> f64 {
    let sum: f64 = neighbors.iter().map(|&i| squared_distance(inputs, query, i)).sum();
    sum / neighbors.len() as f64
}

fn candidate_at(ds: &Dataset, index: usize, neighbors: &[usize]) -> CandidateCenter {
    CandidateCenter {
        index,
        position: ds.row(index),
        output: ds.targets[index],
        density: density_of(&ds.inputs, index, neighbors),
    }
}

/// Every sample whose target is strictly above, or strictly below, all
/// targets of its `k` nearest neighbors, in index order.
pub fn find_candidates(ds: &Dataset, k: usize) -> Result<Vec<CandidateCenter>> {
    let mut out = Vec::new();
    for i in 0..ds.len() {
        let neighbors = knn(&ds.inputs, i, k)?;
        let y = ds.targets[i];
        let above = neighbors.iter().all(|&j| y > ds.targets[j]);
        let below = neighbors.iter().all(|&j| y < ds.targets[j]);
        if above || below {
            out.push(candidate_at(ds, i, &neighbors));
        }
    }
    Ok(out)
}

/// Picks the `r` candidates with lowest density (ties toward lower index).
/// When fewer than `r` candidates exist, the remaining slots are filled with
/// the unchosen samples whose targets deviate most from the target median,
/// and a warning is logged.
pub fn select_centers(candidates: &[CandidateCenter], ds: &Dataset, r: usize, k: usize) -> Result<Vec<CandidateCenter>> {
    if r == 0 {
        return Err(Error::Config("need at least one rule".into()));
    }
    let mut sorted: Vec<&CandidateCenter> = candidates.iter().collect();
    sorted.sort_by(|a, b| a.density.total_cmp(&b.density).then(a.index.cmp(&b.index)));
    let mut selected: Vec<CandidateCenter> = sorted.into_iter().take(r).cloned().collect();
    if selected.len() < r {
        let missing = r - selected.len();
        warn!(
            "only {} local-extremum candidates for {} rules; filling {} slot(s) with extreme-target samples",
            selected.len(),
            r,
            missing
        );
        let mut targets: Vec<f64> = ds.targets.iter().copied().collect();
        targets.sort_by(f64::total_cmp);
        let median = if targets.len() % 2 == 1 {
            targets[targets.len() / 2]
        } else {
            0.5 * (targets[targets.len() / 2 - 1] + targets[targets.len() / 2])
        };
        let mut spread: Vec<(f64, usize)> = (0..ds.len())
            .filter(|i| !selected.iter().any(|c| c.index == *i))
            .map(|i| ((ds.targets[i] - median).abs(), i))
            .collect();
        // Largest deviation first, then lower index.
        spread.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in spread.iter().take(missing) {
            let neighbors = knn(&ds.inputs, i, k)?;
            selected.push(candidate_at(ds, i, &neighbors));
        }
        if selected.len() < r {
            return Err(Error::Config(format!(
                "dataset of {} samples cannot seed {} rules",
                ds.len(),
                r
            )));
        }
    }
    Ok(selected)
}

/// Second-moment matrix of the neighbor cloud about `center` (not about the
/// cloud's own mean): `(1/K) sum (x - m)(x - m)^T`.
pub fn local_covariance(inputs: &DMatrix<f64>, neighbors: &[usize], center: &DVector<f64>) -> DMatrix<f64> {
    let n = inputs.ncols();
    let mut q = DMatrix::zeros(n, n);
    for &i in neighbors {
        let d = DVector::from_fn(n, |c, _| inputs[(i, c)] - center[c]);
        q += &d * d.transpose();
    }
    q / neighbors.len() as f64
}

/// Eigendecomposition-based whitening plus the regularized covariance it
/// inverts. Rows of the returned transform are eigenvectors scaled by inverse
/// square-root eigenvalues, ordered by descending eigenvalue, each with its
/// first non-negligible component made positive. Eigenvalues below
/// `1e-8 * max(lambda_max, 1)` are floored there so collinear clouds still
/// yield a finite transform.
pub fn whitening_with_regularized(q: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: q.ncols(), what: "covariance columns" });
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite covariance".into()));
    }
    let sym = (q + q.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let lambda_max = eig.eigenvalues[order[0]];
    let floor = EIGENVALUE_FLOOR * lambda_max.max(1.0);

    let mut gamma = DMatrix::zeros(n, n);
    let mut q_reg = DMatrix::zeros(n, n);
    for (row, &idx) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[idx].max(floor);
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        let scale = 1.0 / lambda.sqrt();
        for c in 0..n {
            gamma[(row, c)] = v[c] * scale;
        }
        q_reg += lambda * &v * v.transpose();
    }
    Ok((gamma, q_reg))
}

/// Whitening transform of a symmetric positive semidefinite matrix.
pub fn whitening_transform(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(whitening_with_regularized(q)?.0)
}

/// Builds an R-rule network from the training data: density-selected extremum
/// centers, per-rule whitening transforms, unit shape regulators, uncertainty
/// regulators at `epsilon_delta`, balanced type-reduction weights, and
/// center-sample consequents.
pub fn initialize(ds: &Dataset, r: usize, epsilon_delta: f64) -> Result<Network> {
    if ds.is_empty() {
        return Err(Error::Config("cannot initialize from an empty dataset".into()));
    }
    if r == 0 || r > ds.len() {
        return Err(Error::Config(format!(
            "rule count {r} must satisfy 1 <= R <= {} samples",
            ds.len()
        )));
    }
    if ds.len() < 2 {
        return Err(Error::Config("need at least two samples to form neighborhoods".into()));
    }
    if !(0.0..1.0).contains(&epsilon_delta) {
        return Err(Error::Domain(format!(
            "epsilon_delta must lie in [0, 1) to keep beta^2 - delta^2 > 0, got {epsilon_delta}"
        )));
    }
    let n = ds.dims();
    let k = (ds.len() / r).clamp(1, ds.len() - 1);
    let candidates = find_candidates(ds, k)?;
    let centers = select_centers(&candidates, ds, r, k)?;

    let mut rules = Vec::with_capacity(r);
    for c in &centers {
        let neighbors = knn(&ds.inputs, c.index, k)?;
        let q = local_covariance(&ds.inputs, &neighbors, &c.position);
        let gamma = whitening_transform(&q)?;
        rules.push(Rule {
            center: c.position.clone(),
            transform: gamma,
            beta: DVector::from_element(n, 1.0),
            delta: DVector::from_element(n, epsilon_delta),
            v1: 0.5,
            v2: 0.5,
            consequent: c.output,
        });
    }
    Network::new(rules)
}
