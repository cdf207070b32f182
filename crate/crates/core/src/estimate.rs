//! Membership and item-parameter estimation pipelines.
//!
//! All three pipelines share the same tail: hunt `K` simplex vertices among
//! the rows of a leading-eigenvector (or left-singular-vector) matrix with
//! the successive projection algorithm, recover memberships by inverting the
//! vertex submatrix with a clip-and-normalize step, then regress the item
//! parameters layer by layer. They differ only in the aggregate whose
//! spectrum is taken:
//!
//! * [`gom_dsog`] — debiased sum of Gram matrices (zero diagonal),
//! * [`gom_sog`] — plain sum of Gram matrices,
//! * [`gom_sum`] — left singular vectors of the summed responses.
//!
//! [`ideal_recover`] runs the same tail on the exact population aggregate
//! and recovers the true parameters up to one shared column permutation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ItemParams, MembershipMatrix, PopulationTensor, ResponseTensor};
use crate::spectral::{
    debiased_sum_of_grams, spa, sum_of_grams, sum_responses, top_k_eigen, top_k_left_singular,
    VertexIndexSet,
};

/// Condition-number guard for the vertex submatrix and the membership Gram
/// matrix; solves beyond this are refused.
pub const CONDITION_LIMIT: f64 = 1e10;

/// The three estimation pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Debiased sum of Gram matrices.
    Dsog,
    /// Sum of Gram matrices, diagonal kept.
    Sog,
    /// SVD of the elementwise sum of the response layers.
    Sum,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dsog, Method::Sog, Method::Sum];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dsog => "dsog",
            Method::Sog => "sog",
            Method::Sum => "sum",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsog" => Ok(Method::Dsog),
            "sog" => Ok(Method::Sog),
            "sum" => Ok(Method::Sum),
            other => Err(Error::Config(format!(
                "unknown method '{other}', expected dsog | sog | sum"
            ))),
        }
    }
}

/// Numerical side information from one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationDiagnostics {
    /// Condition number of the vertex submatrix that was inverted.
    pub vertex_condition: f64,
    /// Rows in which at least one negative coefficient was clipped to zero.
    pub clipped_rows: usize,
    /// Rows that were entirely nonpositive and fell back to the uniform row.
    pub rescued_zero_rows: usize,
}

/// Output of an estimation pipeline.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub memberships: MembershipMatrix,
    pub item_params: ItemParams,
    pub vertices: VertexIndexSet,
    pub diagnostics: EstimationDiagnostics,
}

/// Membership matrix recovered from eigenvector rows, plus the bookkeeping
/// produced along the way.
#[derive(Debug, Clone)]
pub struct MembershipRecovery {
    pub memberships: MembershipMatrix,
    pub vertex_condition: f64,
    pub clipped_rows: usize,
    pub rescued_zero_rows: usize,
}

fn condition_number(mat: &DMatrix<f64>) -> f64 {
    let svd = mat.clone().svd(false, false);
    let mut max = 0.0f64;
    let mut min = f64::INFINITY;
    for &s in svd.singular_values.iter() {
        max = max.max(s);
        min = min.min(s);
    }
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Recovers memberships from eigenvector rows and a vertex index set.
///
/// Solves `H = U * U(vertices, :)^{-1}`, clips negative coefficients to
/// zero, and normalizes each row to sum one. A row that is entirely
/// nonpositive after clipping would have an undefined normalization; it is
/// assigned the uniform row `1/K` and counted in the diagnostics.
pub fn memberships_from_vertices(
    u: &DMatrix<f64>,
    vertices: &VertexIndexSet,
) -> Result<MembershipRecovery> {
    let k = u.ncols();
    if vertices.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} vertices do not form a square {k}x{k} submatrix",
            vertices.len()
        )));
    }
    let vertex_rows = DMatrix::from_fn(k, k, |r, c| u[(vertices.indices()[r], c)]);
    let vertex_condition = condition_number(&vertex_rows);
    if !vertex_condition.is_finite() || vertex_condition > CONDITION_LIMIT {
        return Err(Error::VertexDegeneracy { condition: vertex_condition });
    }

    // H = U V^{-1} through the transposed system V' H' = U'.
    let lu = vertex_rows.transpose().lu();
    let h_t = lu
        .solve(&u.transpose())
        .ok_or(Error::VertexDegeneracy { condition: vertex_condition })?;
    let mut h = h_t.transpose();

    let mut clipped_rows = 0;
    let mut rescued_zero_rows = 0;
    let uniform = 1.0 / k as f64;
    for i in 0..h.nrows() {
        if (0..k).all(|c| h[(i, c)] <= 0.0) {
            for c in 0..k {
                h[(i, c)] = uniform;
            }
            rescued_zero_rows += 1;
            continue;
        }
        let mut clipped = false;
        let mut sum = 0.0;
        for c in 0..k {
            if h[(i, c)] < 0.0 {
                h[(i, c)] = 0.0;
                clipped = true;
            }
            sum += h[(i, c)];
        }
        if clipped {
            clipped_rows += 1;
        }
        for c in 0..k {
            h[(i, c)] /= sum;
        }
    }

    Ok(MembershipRecovery {
        memberships: MembershipMatrix::new(h)?,
        vertex_condition,
        clipped_rows,
        rescued_zero_rows,
    })
}

/// Least-squares item parameters `Theta_l = R_l' P (P' P)^{-1}` per layer.
///
/// Estimates are reported raw; see [`ItemParams::clamped`] for a bounded
/// view.
pub fn estimate_item_params(
    responses: &ResponseTensor,
    memberships: &MembershipMatrix,
) -> Result<ItemParams> {
    item_params_from_layers(&responses.layers_f64(), memberships)
}

fn item_params_from_layers(
    layers: &[DMatrix<f64>],
    memberships: &MembershipMatrix,
) -> Result<ItemParams> {
    let pi = memberships.matrix();
    if layers.iter().any(|m| m.nrows() != pi.nrows()) {
        return Err(Error::DimensionMismatch(
            "response layers and membership matrix disagree on subject count".into(),
        ));
    }
    let gram = pi.transpose() * pi;
    let condition = condition_number(&gram);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::RankDeficient { condition });
    }
    let lu = gram.lu();
    let estimates = layers
        .iter()
        .map(|r| {
            let rhs = pi.transpose() * r; // K x J
            lu.solve(&rhs)
                .map(|x| x.transpose())
                .ok_or(Error::RankDeficient { condition })
        })
        .collect::<Result<Vec<_>>>()?;
    ItemParams::new(estimates)
}

fn check_class_count(k: usize, n: usize, j: usize) -> Result<()> {
    if k == 0 || k > n.min(j) {
        return Err(Error::Config(format!(
            "class count {k} outside 1..=min({n}, {j})"
        )));
    }
    Ok(())
}

fn finish_pipeline(
    u: &DMatrix<f64>,
    layers: &[DMatrix<f64>],
    k: usize,
) -> Result<EstimationResult> {
    let vertices = spa(u, k)?;
    let recovery = memberships_from_vertices(u, &vertices)?;
    let item_params = item_params_from_layers(layers, &recovery.memberships)?;
    Ok(EstimationResult {
        memberships: recovery.memberships,
        item_params,
        vertices,
        diagnostics: EstimationDiagnostics {
            vertex_condition: recovery.vertex_condition,
            clipped_rows: recovery.clipped_rows,
            rescued_zero_rows: recovery.rescued_zero_rows,
        },
    })
}

/// GoM-DSoG: spectral estimation from the debiased sum of Gram matrices.
pub fn gom_dsog(responses: &ResponseTensor, k: usize) -> Result<EstimationResult> {
    check_class_count(k, responses.num_subjects(), responses.num_items())?;
    let aggregate = debiased_sum_of_grams(responses);
    let pair = top_k_eigen(&aggregate, k)?;
    finish_pipeline(&pair.vectors, &responses.layers_f64(), k)
}

/// GoM-SoG: the same pipeline on the biased (diagonal-keeping) aggregate.
pub fn gom_sog(responses: &ResponseTensor, k: usize) -> Result<EstimationResult> {
    check_class_count(k, responses.num_subjects(), responses.num_items())?;
    let aggregate = sum_of_grams(responses);
    let pair = top_k_eigen(&aggregate, k)?;
    finish_pipeline(&pair.vectors, &responses.layers_f64(), k)
}

/// GoM-Sum: left singular vectors of the elementwise layer sum.
pub fn gom_sum(responses: &ResponseTensor, k: usize) -> Result<EstimationResult> {
    check_class_count(k, responses.num_subjects(), responses.num_items())?;
    let summed = sum_responses(responses);
    let pair = top_k_left_singular(&summed, k)?;
    finish_pipeline(&pair.vectors, &responses.layers_f64(), k)
}

/// Dispatches to the pipeline selected by `method`.
pub fn run_method(
    method: Method,
    responses: &ResponseTensor,
    k: usize,
) -> Result<EstimationResult> {
    match method {
        Method::Dsog => gom_dsog(responses, k),
        Method::Sog => gom_sog(responses, k),
        Method::Sum => gom_sum(responses, k),
    }
}

/// Noiseless oracle: runs the shared pipeline on the exact population
/// aggregate `sum_l P_l P_l'` (no debiasing; the aggregate is exact).
///
/// When the summed item-parameter Gram has full rank `k`, the eigenvector
/// rows form an exact simplex and the true memberships and item parameters
/// come back exactly, up to one shared column permutation. A rank-deficient
/// aggregate is rejected.
pub fn ideal_recover(population: &PopulationTensor, k: usize) -> Result<EstimationResult> {
    check_class_count(k, population.num_subjects(), population.num_items())?;
    let n = population.num_subjects();
    let mut aggregate = DMatrix::<f64>::zeros(n, n);
    for layer in population.layers() {
        aggregate += layer * layer.transpose();
    }
    let pair = top_k_eigen(&aggregate, k)?;
    if pair.rank_deficient {
        return Err(Error::DegenerateInput(format!(
            "population aggregate has rank below {k}"
        )));
    }
    finish_pipeline(&pair.vectors, population.layers(), k)
}
