//! Aggregation matrices, truncated spectral decompositions, and the
//! successive projection algorithm used for simplex vertex hunting.
//!
//! The estimation pipelines aggregate the per-layer Gram matrices
//! `R_l R_l'` in one of three ways: with the diagonal removed (debiased),
//! as-is, or by summing the raw responses and taking left singular vectors.
//! Leading eigenpairs are ordered by eigenvalue magnitude; column signs are
//! unspecified and every consumer must be invariant to per-column flips.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::ResponseTensor;

/// Relative threshold below which the trailing retained eigenvalue or
/// singular value flags the decomposition as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Relative symmetry tolerance accepted by [`top_k_eigen`].
const SYMMETRY_TOL: f64 = 1e-10;

/// Residual-norm threshold (relative to the first selection) at which the
/// successive projection algorithm declares the input degenerate.
const SPA_RESIDUAL_TOL: f64 = 1e-12;

/// Leading part of a spectral decomposition.
///
/// `values` are the retained eigenvalues (or singular values) ordered by
/// descending magnitude; `vectors` holds the matching orthonormal columns.
/// `rank_deficient` is a warning flag raised when the trailing retained
/// value is negligible relative to the Frobenius norm of the input.
#[derive(Debug, Clone)]
pub struct SpectralPair {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub rank_deficient: bool,
}

/// Distinct row indices selected as simplex vertices, in selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexIndexSet {
    indices: Vec<usize>,
}

impl VertexIndexSet {
    /// Wraps explicit indices after checking distinctness.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let mut seen = indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != indices.len() {
            return Err(Error::DegenerateInput("vertex indices must be distinct".into()));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Debiased sum of Gram matrices `S = sum_l (R_l R_l' - D_l)` with
/// `D_l(i,i) = sum_j R_l(i,j)^2`.
///
/// Each layer's diagonal correction equals the diagonal of its Gram matrix
/// exactly, so `S` has an exactly zero diagonal.
pub fn debiased_sum_of_grams(responses: &ResponseTensor) -> DMatrix<f64> {
    let mut s = sum_of_grams(responses);
    for i in 0..s.nrows() {
        s[(i, i)] = 0.0;
    }
    s
}

/// Plain sum of Gram matrices `sum_l R_l R_l'` (diagonal included).
pub fn sum_of_grams(responses: &ResponseTensor) -> DMatrix<f64> {
    let n = responses.num_subjects();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for l in 0..responses.num_layers() {
        let r = responses.layer_f64(l);
        s += &r * r.transpose();
    }
    s
}

/// Elementwise sum of the response layers; entries lie in `[0, L * M]`.
pub fn sum_responses(responses: &ResponseTensor) -> DMatrix<f64> {
    let mut total = responses.layer_f64(0);
    for l in 1..responses.num_layers() {
        total += responses.layer_f64(l);
    }
    total
}

/// Leading `k` eigenpairs of a symmetric matrix, ordered by `|eigenvalue|`.
///
/// The input is symmetrized as `(A + A') / 2` before decomposition to absorb
/// accumulation error; inputs asymmetric beyond a relative `1e-10` are
/// rejected. Column signs are unspecified.
pub fn top_k_eigen(sym: &DMatrix<f64>, k: usize) -> Result<SpectralPair> {
    let n = sym.nrows();
    if sym.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            n,
            sym.ncols()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!(
            "cannot take {k} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let scale = sym.amax();
    if scale > 0.0 {
        let max_dev = (sym - sym.transpose()).amax();
        if max_dev > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { max_dev });
        }
    }
    let symmetrized = (sym + sym.transpose()).scale(0.5);
    let fro = symmetrized.norm();
    let eig = SymmetricEigen::new(symmetrized);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, k, |i, c| eig.eigenvectors[(i, order[c])]);
    let rank_deficient = fro == 0.0 || values[k - 1].abs() < RANK_TOL * fro;
    Ok(SpectralPair { values, vectors, rank_deficient })
}

/// Leading `k` left singular vectors and singular values of a rectangular
/// matrix, ordered by descending singular value.
pub fn top_k_left_singular(rect: &DMatrix<f64>, k: usize) -> Result<SpectralPair> {
    let (n, j) = (rect.nrows(), rect.ncols());
    if k == 0 || k > n.min(j) {
        return Err(Error::DimensionMismatch(format!(
            "cannot take {k} singular triplets of a {n}x{j} matrix"
        )));
    }
    let fro = rect.norm();
    let svd = rect.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sigma = &svd.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| {
        sigma[b]
            .partial_cmp(&sigma[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order[..k].iter().map(|&i| sigma[i]).collect();
    let vectors = DMatrix::from_fn(n, k, |i, c| u[(i, order[c])]);
    let rank_deficient = fro == 0.0 || values[k - 1] < RANK_TOL * fro;
    Ok(SpectralPair { values, vectors, rank_deficient })
}

/// Successive projection algorithm: hunts `k` simplex vertices among the
/// rows of `u`.
///
/// Repeats `k` times: select the row with the largest Euclidean norm in the
/// current residual matrix (ties broken by the lowest row index), then
/// project every row onto the orthogonal complement of the selected row.
/// Returns the selected indices in selection order. If the residual
/// collapses before `k` selections the input has fewer than `k` numerically
/// distinct vertices and an error is returned.
pub fn spa(u: &DMatrix<f64>, k: usize) -> Result<VertexIndexSet> {
    let n = u.nrows();
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!(
            "cannot select {k} vertices among {n} rows"
        )));
    }
    if u.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "expected {k} columns for {k} vertices, got {}",
            u.ncols()
        )));
    }

    let mut residual = u.clone();
    let mut indices = Vec::with_capacity(k);
    let mut reference_norm = 0.0;
    for step in 0..k {
        let mut best = 0;
        let mut best_norm = -1.0;
        for i in 0..n {
            let norm = residual.row(i).norm();
            if norm > best_norm {
                best_norm = norm;
                best = i;
            }
        }
        if step == 0 {
            reference_norm = best_norm;
        }
        if best_norm <= SPA_RESIDUAL_TOL * reference_norm || best_norm == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "residual vanished after {step} of {k} vertex selections"
            )));
        }
        indices.push(best);

        let direction = residual.row(best) / best_norm;
        for i in 0..n {
            let proj = residual.row(i).dot(&direction);
            let mut row = residual.row_mut(i);
            row -= direction.scale(proj);
        }
    }
    Ok(VertexIndexSet { indices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Full eigendecomposition of a small symmetric matrix by the classic
    /// cyclic Jacobi rotation method. Independent of the production path.
    fn jacobi_eigenvalues(mat: &DMatrix<f64>) -> Vec<f64> {
        let n = mat.nrows();
        let mut a = mat.clone();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = c * aip - s * aiq;
                        a[(i, q)] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let api = a[(p, i)];
                        let aqi = a[(q, i)];
                        a[(p, i)] = c * api - s * aqi;
                        a[(q, i)] = s * api + c * aqi;
                    }
                }
            }
        }
        let mut values: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        values.sort_by(|x, y| y.abs().partial_cmp(&x.abs()).unwrap());
        values
    }

    fn tensor(layers: Vec<DMatrix<u32>>, max_choice: u32) -> ResponseTensor {
        ResponseTensor::new(layers, max_choice).unwrap()
    }

    fn random_tensor(seed: u64, n: usize, j: usize, l: usize) -> ResponseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..l)
            .map(|_| DMatrix::from_fn(n, j, |_, _| rng.gen_range(0..=5u32)))
            .collect();
        tensor(layers, 5)
    }

    #[test]
    fn debiased_gram_of_zero_tensor_is_zero() {
        let r = tensor(vec![DMatrix::zeros(3, 2)], 5);
        assert_eq!(debiased_sum_of_grams(&r), DMatrix::zeros(3, 3));
    }

    #[test]
    fn debiased_gram_hand_example() {
        // R = [[1,2],[3,0]]: R R' = [[5,3],[3,9]], D = diag(5,9).
        let r = tensor(vec![dmatrix![1u32, 2; 3, 0]], 3);
        assert_eq!(debiased_sum_of_grams(&r), dmatrix![0.0, 3.0; 3.0, 0.0]);
        assert_eq!(sum_of_grams(&r), dmatrix![5.0, 3.0; 3.0, 9.0]);
    }

    #[test]
    fn duplicating_a_layer_doubles_the_debiased_gram() {
        let r = random_tensor(1, 6, 4, 2);
        let doubled = tensor(
            r.layers().iter().chain(r.layers()).cloned().collect(),
            r.max_choice(),
        );
        assert_relative_eq!(
            debiased_sum_of_grams(&doubled),
            debiased_sum_of_grams(&r).scale(2.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn debiased_gram_diagonal_is_exactly_zero() {
        let r = random_tensor(2, 8, 5, 3);
        let s = debiased_sum_of_grams(&r);
        for i in 0..8 {
            assert_eq!(s[(i, i)], 0.0);
        }
        // Per-layer check: each layer's Gram minus its diagonal correction.
        for l in 0..r.num_layers() {
            let rf = r.layer_f64(l);
            let g = &rf * rf.transpose();
            for i in 0..8 {
                let d: f64 = rf.row(i).iter().map(|v| v * v).sum();
                assert_eq!(g[(i, i)] - d, 0.0);
            }
        }
    }

    #[test]
    fn biased_minus_debiased_is_nonnegative_diagonal() {
        let r = random_tensor(3, 6, 4, 2);
        let diff = sum_of_grams(&r) - debiased_sum_of_grams(&r);
        for i in 0..6 {
            for j in 0..6 {
                if i == j {
                    assert!(diff[(i, i)] >= 0.0);
                } else {
                    assert_eq!(diff[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn sum_responses_trivial_cases() {
        let zero = tensor(vec![DMatrix::zeros(2, 2); 2], 5);
        assert_eq!(sum_responses(&zero), DMatrix::zeros(2, 2));

        let single = tensor(vec![dmatrix![1u32, 2; 3, 4]], 5);
        assert_eq!(sum_responses(&single), dmatrix![1.0, 2.0; 3.0, 4.0]);

        let doubled = tensor(vec![dmatrix![1u32, 2; 3, 4]; 2], 5);
        assert_eq!(sum_responses(&doubled), dmatrix![2.0, 4.0; 6.0, 8.0]);
    }

    #[test]
    fn eigen_of_diagonal_matrix() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, -2.0]));
        let pair = top_k_eigen(&m, 2).unwrap();
        assert_relative_eq!(pair.values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(pair.values[1], -2.0, epsilon = 1e-12);
        assert_relative_eq!(pair.vectors.column(0).abs(), DVector::from_vec(vec![1.0, 0.0, 0.0]), epsilon = 1e-10);
        assert_relative_eq!(pair.vectors.column(1).abs(), DVector::from_vec(vec![0.0, 0.0, 1.0]), epsilon = 1e-10);
        assert!(!pair.rank_deficient);
    }

    fn random_symmetric(seed: u64, n: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&a + a.transpose()).scale(0.5)
    }

    #[test]
    fn full_eigendecomposition_reconstructs_input() {
        let m = random_symmetric(4, 6);
        let pair = top_k_eigen(&m, 6).unwrap();
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(pair.values.clone()));
        let reconstruction = &pair.vectors * lambda * pair.vectors.transpose();
        assert!((reconstruction - &m).norm() <= 1e-8 * m.norm());
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        let m = random_symmetric(5, 5);
        let pair = top_k_eigen(&m, 2).unwrap();
        let oracle = jacobi_eigenvalues(&m);
        for i in 0..2 {
            assert_relative_eq!(pair.values[i].abs(), oracle[i].abs(), epsilon = 1e-8);
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal_with_small_residuals() {
        let m = random_symmetric(6, 12);
        let pair = top_k_eigen(&m, 4).unwrap();
        let gram = pair.vectors.transpose() * &pair.vectors;
        assert!((gram - DMatrix::identity(4, 4)).norm() <= 1e-8);
        for c in 0..4 {
            let u = pair.vectors.column(c);
            let residual = &m * u - u.scale(pair.values[c]);
            assert!(residual.norm() <= 1e-8 * m.norm());
        }
    }

    #[test]
    fn eigen_flags_rank_deficiency_without_failing() {
        // Rank-1 matrix, two pairs requested.
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let pair = top_k_eigen(&m, 2).unwrap();
        assert!(pair.rank_deficient);
        assert_relative_eq!(pair.values[0], 14.0, epsilon = 1e-10);
    }

    #[test]
    fn eigen_rejects_asymmetric_and_oversized_requests() {
        let m = dmatrix![0.0, 1.0; 0.0, 0.0];
        assert!(matches!(top_k_eigen(&m, 1), Err(Error::NotSymmetric { .. })));
        let sym = DMatrix::<f64>::identity(2, 2);
        assert!(top_k_eigen(&sym, 3).is_err());
    }

    #[test]
    fn left_singular_vectors_of_diagonal_matrix() {
        let mut m = DMatrix::zeros(4, 3);
        m[(0, 0)] = 2.0;
        m[(1, 1)] = 5.0;
        m[(2, 2)] = 1.0;
        let pair = top_k_left_singular(&m, 2).unwrap();
        assert_relative_eq!(pair.values[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(pair.values[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(pair.vectors.column(0).abs(), DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]), epsilon = 1e-10);
        assert_relative_eq!(pair.vectors.column(1).abs(), DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]), epsilon = 1e-10);
    }

    #[test]
    fn zero_matrix_is_flagged_degenerate() {
        let m = DMatrix::<f64>::zeros(4, 3);
        let pair = top_k_left_singular(&m, 2).unwrap();
        assert!(pair.rank_deficient);
    }

    #[test]
    fn singular_values_match_gram_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-2.0..2.0));
        let pair = top_k_left_singular(&m, 4).unwrap();
        // Squares of singular values are the eigenvalues of M' M.
        let gram = m.transpose() * &m;
        let oracle = jacobi_eigenvalues(&gram);
        for i in 0..4 {
            assert_relative_eq!(pair.values[i] * pair.values[i], oracle[i], epsilon = 1e-8);
        }
        let ortho = pair.vectors.transpose() * &pair.vectors;
        assert!((ortho - DMatrix::identity(4, 4)).norm() <= 1e-8);
        // Residual check through the right factor: v_k = M' u_k / sigma_k.
        for c in 0..4 {
            let u = pair.vectors.column(c);
            let v = m.transpose() * u / pair.values[c];
            let residual = &m * v - u.scale(pair.values[c]);
            assert!(residual.norm() <= 1e-8 * m.norm());
        }
    }

    #[test]
    fn spa_follows_manual_trace() {
        // Rows (1,0), (0,1), (0.5,0.5): pick row 0 (tie at norm 1 broken by
        // lowest index), project, then row 1 keeps norm 1 while row 2 drops
        // to 0.5.
        let u = dmatrix![1.0, 0.0; 0.0, 1.0; 0.5, 0.5];
        let picked = spa(&u, 2).unwrap();
        assert_eq!(picked.indices(), &[0, 1]);
    }

    #[test]
    fn spa_recovers_identity_vertices_among_interior_points() {
        let u = dmatrix![
            1.0, 0.0, 0.0;
            0.2, 0.5, 0.3;
            0.0, 1.0, 0.0;
            0.3, 0.3, 0.4;
            0.0, 0.0, 1.0;
        ];
        let picked = spa(&u, 3).unwrap();
        let mut sorted = picked.indices().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 2, 4]);
    }

    #[test]
    fn spa_on_square_identity_selects_every_row() {
        let picked = spa(&DMatrix::identity(3, 3), 3).unwrap();
        let mut sorted = picked.indices().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn spa_rejects_rank_deficient_input() {
        // All rows parallel: a single projection wipes the residual.
        let u = dmatrix![1.0, 1.0; 2.0, 2.0; 3.0, 3.0];
        assert!(matches!(spa(&u, 2), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn spa_is_equivariant_under_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 9;
        let pure = DMatrix::<f64>::identity(3, 3);
        let mut rows = Vec::new();
        for i in 0..3 {
            rows.push(pure.row(i).clone_owned());
        }
        for _ in 3..n {
            let a: f64 = rng.gen_range(0.05..0.9);
            let b: f64 = rng.gen_range(0.05..(1.0 - a).max(0.06));
            let c = 1.0 - a - b;
            rows.push(nalgebra::RowDVector::from_vec(vec![a, b, c.max(0.0)]));
        }
        let u = DMatrix::from_rows(&rows);
        let base = spa(&u, 3).unwrap();

        // Rotate rows by 4 positions.
        let shift = 4;
        let permuted = DMatrix::from_fn(n, 3, |i, j| u[((i + shift) % n, j)]);
        let moved = spa(&permuted, 3).unwrap();
        let expected: Vec<usize> = base
            .indices()
            .iter()
            .map(|&i| (i + n - shift) % n)
            .collect();
        assert_eq!(moved.indices(), expected.as_slice());
    }

    /// Exact recovery on separable inputs: for valid memberships with at
    /// least one pure row per class and a nonsingular mixing matrix, SPA
    /// must return pure rows covering every class.
    #[test]
    fn spa_exact_recovery_on_random_separable_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..100 {
            let k = rng.gen_range(2..=4usize);
            let n = rng.gen_range(k + 1..=50usize);
            let mut membership = DMatrix::<f64>::zeros(n, k);
            for c in 0..k {
                membership[(c, c)] = 1.0;
            }
            for i in k..n {
                if rng.gen_bool(0.3) {
                    membership[(i, rng.gen_range(0..k))] = 1.0;
                } else {
                    let mut weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let total: f64 = weights.iter().sum();
                    weights.iter_mut().for_each(|w| *w /= total);
                    for (c, w) in weights.iter().enumerate() {
                        membership[(i, c)] = *w;
                    }
                }
            }
            let mixing = loop {
                let w = DMatrix::<f64>::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
                if w.determinant().abs() > 0.1 {
                    break w;
                }
            };
            let u = &membership * &mixing;
            let picked = spa(&u, k).unwrap();
            let mut classes: Vec<usize> = picked
                .indices()
                .iter()
                .map(|&i| {
                    let row = membership.row(i);
                    let mut best = 0;
                    for c in 0..k {
                        if row[c] > row[best] {
                            best = c;
                        }
                    }
                    assert!(
                        (row[best] - 1.0).abs() < 1e-9,
                        "trial {trial}: selected row {i} is not pure"
                    );
                    best
                })
                .collect();
            classes.sort_unstable();
            classes.dedup();
            assert_eq!(classes.len(), k, "trial {trial}: classes not covered");
        }
    }
}
