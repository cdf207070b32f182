//! Permutation-minimized error metrics for Monte Carlo studies.
//!
//! Estimated class labels are positional, so all comparisons minimize over
//! column permutations of the truth. The search is exhaustive over the `K!`
//! permutations, which is trivially cheap for the class counts that matter
//! here; a guard rejects `K` above [`MAX_PERMUTATION_CLASSES`].

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimate::Method;
use crate::model::{ItemParams, MembershipMatrix};

/// Upper bound on `K` for the exhaustive permutation search.
pub const MAX_PERMUTATION_CLASSES: usize = 10;

/// One Monte Carlo measurement.
#[derive(Debug, Clone)]
pub struct MetricRecord {
    pub method: Method,
    pub rel_l1: f64,
    pub rel_l2: f64,
    pub k_true: usize,
    pub k_selected: usize,
    /// Free-form snapshot of the generating configuration.
    pub config: String,
}

fn permutations(k: usize) -> Result<Vec<Vec<usize>>> {
    if k > MAX_PERMUTATION_CLASSES {
        return Err(Error::TooManyClasses { k, max: MAX_PERMUTATION_CLASSES });
    }
    Ok((0..k).permutations(k).collect())
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Entrywise l1 distance between `estimate` and `truth` with columns of the
/// truth permuted by `perm`, divided by the subject count.
fn l1_at(estimate: &DMatrix<f64>, truth: &DMatrix<f64>, perm: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..estimate.nrows() {
        for c in 0..estimate.ncols() {
            total += (estimate[(i, c)] - truth[(i, perm[c])]).abs();
        }
    }
    total / estimate.nrows() as f64
}

/// Relative l1 membership error: the minimum over all column permutations of
/// the entrywise l1 distance between the estimate and the permuted truth,
/// divided by the number of subjects.
pub fn relative_l1_error(estimate: &MembershipMatrix, truth: &MembershipMatrix) -> Result<f64> {
    relative_l1_error_with_permutation(estimate, truth).map(|(err, _)| err)
}

/// As [`relative_l1_error`], also returning the minimizing permutation
/// (entry `c` gives the truth column matched to estimate column `c`).
pub fn relative_l1_error_with_permutation(
    estimate: &MembershipMatrix,
    truth: &MembershipMatrix,
) -> Result<(f64, Vec<usize>)> {
    let (a, b) = (estimate.matrix(), truth.matrix());
    check_same_shape(a, b, "membership matrices")?;
    let mut best = f64::INFINITY;
    let mut best_perm = Vec::new();
    for perm in permutations(a.ncols())? {
        let err = l1_at(a, b, &perm);
        if err < best {
            best = err;
            best_perm = perm;
        }
    }
    Ok((best, best_perm))
}

/// Largest row-wise l1 deviation between the estimate and the permuted
/// truth, minimized over column permutations. A per-subject diagnostic
/// companion to [`relative_l1_error`].
pub fn max_row_l1_error(estimate: &MembershipMatrix, truth: &MembershipMatrix) -> Result<f64> {
    let (a, b) = (estimate.matrix(), truth.matrix());
    check_same_shape(a, b, "membership matrices")?;
    let mut best = f64::INFINITY;
    for perm in permutations(a.ncols())? {
        let mut worst_row = 0.0f64;
        for i in 0..a.nrows() {
            let mut row = 0.0;
            for c in 0..a.ncols() {
                row += (a[(i, c)] - b[(i, perm[c])]).abs();
            }
            worst_row = worst_row.max(row);
        }
        best = best.min(worst_row);
    }
    Ok(best)
}

fn summed_layers(params: &ItemParams) -> DMatrix<f64> {
    let mut total = params.layers()[0].clone();
    for layer in &params.layers()[1..] {
        total += layer;
    }
    total
}

/// Relative l2 item-parameter error at a fixed permutation: the layers are
/// summed before taking the Frobenius norm.
pub fn relative_l2_error_at(
    estimate: &ItemParams,
    truth: &ItemParams,
    perm: &[usize],
) -> Result<f64> {
    if estimate.num_layers() != truth.num_layers() {
        return Err(Error::DimensionMismatch(format!(
            "item-parameter layer counts: {} vs {}",
            estimate.num_layers(),
            truth.num_layers()
        )));
    }
    check_same_shape(&estimate.layers()[0], &truth.layers()[0], "item-parameter matrices")?;
    if perm.len() != estimate.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "permutation length {} for {} classes",
            perm.len(),
            estimate.num_classes()
        )));
    }
    let est_sum = summed_layers(estimate);
    let true_sum = summed_layers(truth);
    let denom = true_sum.norm();
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let mut sq = 0.0;
    for j in 0..est_sum.nrows() {
        for c in 0..est_sum.ncols() {
            let d = est_sum[(j, c)] - true_sum[(j, perm[c])];
            sq += d * d;
        }
    }
    Ok(sq.sqrt() / denom)
}

/// Relative l2 item-parameter error: the Frobenius norm of the summed layer
/// differences (layers are summed before the norm), divided by the
/// Frobenius norm of the summed truth, minimized over column permutations.
pub fn relative_l2_error(estimate: &ItemParams, truth: &ItemParams) -> Result<f64> {
    let mut best = f64::INFINITY;
    for perm in permutations(estimate.num_classes())? {
        best = best.min(relative_l2_error_at(estimate, truth, &perm)?);
    }
    Ok(best)
}

/// Fraction of records whose selected class count equals the true one.
pub fn accuracy_rate(records: &[MetricRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("metric records"));
    }
    let hits = records.iter().filter(|r| r.k_selected == r.k_true).count();
    Ok(hits as f64 / records.len() as f64)
}
