//! Selection of the number of latent classes by averaged fuzzy modularity.
//!
//! For each candidate class count `k` the chosen pipeline produces a
//! membership matrix, which is scored by a layer-averaged, membership-
//! weighted modularity of the Gram matrices `G_l = R_l R_l'`. The candidate
//! maximizing the score is selected, ties going to the smaller `k`
//! (parsimony). With one layer and a hard partition the score reduces to the
//! classic Newman-Girvan modularity of `G_1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimate::{run_method, Method};
use crate::model::{MembershipMatrix, ResponseTensor};

/// Modularity value of one candidate class count.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub k: usize,
    /// Averaged fuzzy modularity; `-inf` when the pipeline failed for this `k`.
    pub q: f64,
    pub failed: bool,
}

/// Scores for all candidates `1..=k_c` plus the selected class count.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularityReport {
    /// One entry per candidate, ascending in `k`.
    pub per_k: Vec<CandidateScore>,
    /// The `k` maximizing the score; ties break toward the smallest `k`.
    pub selected_k: usize,
    /// Total Gram weight per layer; zero-weight layers contribute nothing.
    pub per_layer_eta: Vec<f64>,
}

impl ModularityReport {
    /// Score of the selected candidate.
    pub fn selected_q(&self) -> f64 {
        self.per_k[self.selected_k - 1].q
    }
}

struct LayerGrams {
    grams: Vec<DMatrix<f64>>,
    degrees: Vec<DVector<f64>>,
    etas: Vec<f64>,
}

fn layer_grams(responses: &ResponseTensor) -> LayerGrams {
    let mut grams = Vec::with_capacity(responses.num_layers());
    let mut degrees = Vec::with_capacity(responses.num_layers());
    let mut etas = Vec::with_capacity(responses.num_layers());
    for l in 0..responses.num_layers() {
        let r = responses.layer_f64(l);
        let g = &r * r.transpose();
        let degree = DVector::from_fn(g.nrows(), |i, _| g.row(i).sum());
        etas.push(degree.sum());
        grams.push(g);
        degrees.push(degree);
    }
    LayerGrams { grams, degrees, etas }
}

/// Score shared by [`averaged_fuzzy_modularity`] and [`select_num_classes`].
///
/// Per layer with total weight `eta > 0` the contribution is
/// `(tr(P' G P) - |P' d|^2 / eta) / eta`, where `d` holds the row sums of
/// `G`; this equals the double sum over subject pairs of
/// `(G(i,j) - d(i) d(j) / eta) P(i,:) P(j,:)' / eta`. Layers with `eta = 0`
/// carry no partition information and contribute zero.
fn modularity_from_grams(layers: &LayerGrams, memberships: &MembershipMatrix) -> f64 {
    let pi = memberships.matrix();
    let mut total = 0.0;
    for ((g, degree), &eta) in layers
        .grams
        .iter()
        .zip(&layers.degrees)
        .zip(&layers.etas)
    {
        if eta == 0.0 {
            continue;
        }
        let coupling = (pi.component_mul(&(g * pi))).sum();
        let weighted = pi.transpose() * degree;
        total += (coupling - weighted.norm_squared() / eta) / eta;
    }
    total / layers.grams.len() as f64
}

/// Averaged fuzzy modularity of a membership matrix against the response
/// tensor's Gram matrices.
pub fn averaged_fuzzy_modularity(
    responses: &ResponseTensor,
    memberships: &MembershipMatrix,
) -> Result<f64> {
    if memberships.num_subjects() != responses.num_subjects() {
        return Err(Error::DimensionMismatch(format!(
            "membership rows {} vs subjects {}",
            memberships.num_subjects(),
            responses.num_subjects()
        )));
    }
    Ok(modularity_from_grams(&layer_grams(responses), memberships))
}

fn scan_candidates(
    layers: &LayerGrams,
    k_c: usize,
    mut candidate_memberships: impl FnMut(usize) -> Result<MembershipMatrix>,
) -> (Vec<CandidateScore>, usize) {
    let mut per_k = Vec::with_capacity(k_c);
    for k in 1..=k_c {
        match candidate_memberships(k) {
            Ok(memberships) => {
                let q = modularity_from_grams(layers, &memberships);
                per_k.push(CandidateScore { k, q, failed: false });
            }
            Err(_) => per_k.push(CandidateScore { k, q: f64::NEG_INFINITY, failed: true }),
        }
    }
    let mut selected_k = 1;
    for score in &per_k {
        if score.q > per_k[selected_k - 1].q {
            selected_k = score.k;
        }
    }
    (per_k, selected_k)
}

/// Runs `method` for every candidate `k in 1..=k_c`, scores each candidate's
/// membership matrix, and selects the maximizer.
///
/// A pipeline failure at some `k` records that candidate as failed with
/// score `-inf` and the scan continues.
pub fn select_num_classes(
    responses: &ResponseTensor,
    k_c: usize,
    method: Method,
) -> Result<ModularityReport> {
    let limit = responses.num_subjects().min(responses.num_items());
    if k_c == 0 || k_c > limit {
        return Err(Error::Config(format!(
            "candidate bound {k_c} outside 1..=min(subjects, items) = {limit}"
        )));
    }
    let layers = layer_grams(responses);
    let (per_k, selected_k) = scan_candidates(&layers, k_c, |k| {
        run_method(method, responses, k).map(|result| result.memberships)
    });
    Ok(ModularityReport { per_k, selected_k, per_layer_eta: layers.etas })
}
