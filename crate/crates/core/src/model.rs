//! Domain types and simulation for the multi-layer grade-of-membership model.
//!
//! A dataset consists of `L` response matrices over the same `N` subjects and
//! `J` items. Every subject carries a row-stochastic membership vector over
//! `K` latent classes that is shared across layers; layer `l` has an
//! item-parameter matrix `Theta_l = rho * B_l` with entries in `[0, M]`,
//! where `rho` controls the overall sparsity of the data. Entry `(i, j)` of
//! layer `l` is drawn as `Binomial(M, P(i,:) Theta_l(j,:)' / M)`, so the
//! population (noiseless) response is `P Theta_l'`.

use nalgebra::DMatrix;
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance for row-stochasticity and purity checks.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A validated row-stochastic membership matrix (`N x K`).
///
/// Each row holds the weights with which one subject belongs to the `K`
/// latent classes. Rows sum to one within [`ROW_SUM_TOL`] and entries lie in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix(DMatrix<f64>);

impl MembershipMatrix {
    /// Wraps a matrix after checking row-stochasticity and entry range.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() == 0 || mat.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "membership matrix must be nonempty".into(),
            ));
        }
        for i in 0..mat.nrows() {
            let mut sum = 0.0;
            for j in 0..mat.ncols() {
                let v = mat[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        name: "membership entry",
                        value: v,
                        min: 0.0,
                        max: 1.0,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::DimensionMismatch(format!(
                    "membership row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self(mat))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn num_subjects(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.ncols()
    }

    /// Returns the class index if row `i` equals a standard basis vector
    /// within [`ROW_SUM_TOL`], i.e. the subject is pure.
    pub fn pure_class(&self, i: usize) -> Option<usize> {
        pure_class_of_row(&self.0, i)
    }

    /// Indices of all pure rows, in row order.
    pub fn pure_rows(&self) -> Vec<usize> {
        (0..self.0.nrows())
            .filter(|&i| self.pure_class(i).is_some())
            .collect()
    }
}

fn pure_class_of_row(mat: &DMatrix<f64>, i: usize) -> Option<usize> {
    let mut best = 0;
    for j in 0..mat.ncols() {
        if mat[(i, j)] > mat[(i, best)] {
            best = j;
        }
    }
    let ok = (0..mat.ncols()).all(|j| {
        let target = if j == best { 1.0 } else { 0.0 };
        (mat[(i, j)] - target).abs() <= ROW_SUM_TOL
    });
    if ok {
        Some(best)
    } else {
        None
    }
}

/// Item-parameter matrices, one `J x K` matrix per layer.
///
/// Model-true parameters live in `[0, M]`; estimates are reported raw and
/// carry no range guarantee. Use [`ItemParams::clamped`] when a bounded view
/// is wanted for interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemParams {
    layers: Vec<DMatrix<f64>>,
}

impl ItemParams {
    pub fn new(layers: Vec<DMatrix<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("item-parameter layers"));
        }
        let (j, k) = (layers[0].nrows(), layers[0].ncols());
        for (l, m) in layers.iter().enumerate() {
            if m.nrows() != j || m.ncols() != k {
                return Err(Error::DimensionMismatch(format!(
                    "item-parameter layer {l} is {}x{}, expected {j}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_items(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[0].ncols()
    }

    /// Copy with every entry clamped to `[0, max_choice]`.
    pub fn clamped(&self, max_choice: u32) -> Self {
        let hi = f64::from(max_choice);
        Self {
            layers: self
                .layers
                .iter()
                .map(|m| m.map(|v| v.clamp(0.0, hi)))
                .collect(),
        }
    }
}

/// Observed multi-layer responses: `L` matrices of integers in `{0, ..., M}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTensor {
    layers: Vec<DMatrix<u32>>,
    max_choice: u32,
}

impl ResponseTensor {
    pub fn new(layers: Vec<DMatrix<u32>>, max_choice: u32) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("response layers"));
        }
        let (n, j) = (layers[0].nrows(), layers[0].ncols());
        for (l, m) in layers.iter().enumerate() {
            if m.nrows() != n || m.ncols() != j {
                return Err(Error::DimensionMismatch(format!(
                    "response layer {l} is {}x{}, expected {n}x{j}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if let Some(v) = m.iter().find(|&&v| v > max_choice) {
                return Err(Error::OutOfRange {
                    name: "response entry",
                    value: f64::from(*v),
                    min: 0.0,
                    max: f64::from(max_choice),
                });
            }
        }
        Ok(Self { layers, max_choice })
    }

    pub fn layers(&self) -> &[DMatrix<u32>] {
        &self.layers
    }

    pub fn max_choice(&self) -> u32 {
        self.max_choice
    }

    pub fn num_subjects(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn num_items(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layer `l` converted to floating point, for linear algebra.
    pub fn layer_f64(&self, l: usize) -> DMatrix<f64> {
        self.layers[l].map(f64::from)
    }

    pub fn layers_f64(&self) -> Vec<DMatrix<f64>> {
        (0..self.num_layers()).map(|l| self.layer_f64(l)).collect()
    }
}

/// Noiseless expected responses, one real `N x J` matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTensor {
    layers: Vec<DMatrix<f64>>,
}

impl PopulationTensor {
    pub fn new(layers: Vec<DMatrix<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("population layers"));
        }
        let (n, j) = (layers[0].nrows(), layers[0].ncols());
        for (l, m) in layers.iter().enumerate() {
            if m.nrows() != n || m.ncols() != j {
                return Err(Error::DimensionMismatch(format!(
                    "population layer {l} is {}x{}, expected {n}x{j}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub fn num_subjects(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn num_items(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn max_entry(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|m| m.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Full parameterization of the generating model.
///
/// The membership and basis matrices are stored raw so that candidate
/// parameters can be assembled freely and checked with [`validate_model`];
/// `Theta_l = sparsity * item_bases[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Candidate membership matrix (`N x K`).
    pub membership: DMatrix<f64>,
    /// Per-layer basis matrices `B_l` (`J x K`, entries in `[0, 1]`).
    pub item_bases: Vec<DMatrix<f64>>,
    /// Sparsity parameter `rho` in `(0, M]`; scales the bases into `Theta_l`.
    pub sparsity: f64,
    /// Number of choices per item (`M`); responses live in `{0, ..., M}`.
    pub max_choice: u32,
}

impl ModelParams {
    pub fn num_subjects(&self) -> usize {
        self.membership.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.membership.ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.item_bases.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_bases.first().map_or(0, DMatrix::nrows)
    }

    /// The item-parameter matrices `Theta_l = rho * B_l`.
    pub fn item_params(&self) -> Result<ItemParams> {
        ItemParams::new(
            self.item_bases
                .iter()
                .map(|b| b.scale(self.sparsity))
                .collect(),
        )
    }

    /// The membership matrix as a validated row-stochastic wrapper.
    pub fn validated_membership(&self) -> Result<MembershipMatrix> {
        MembershipMatrix::new(self.membership.clone())
    }
}

/// One violated model invariant, with enough indices to locate it.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { row: usize, sum: f64 },
    MembershipEntry { row: usize, col: usize, value: f64 },
    NoPureSubject { class: usize },
    BasisEntry { layer: usize, row: usize, col: usize, value: f64 },
    Sparsity { value: f64, max: f64 },
    LayerShape { layer: usize, rows: usize, cols: usize },
    TooManyClasses { classes: usize, limit: usize },
    EmptyDimension { what: &'static str },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RowSum { row, sum } => {
                write!(f, "membership row {row} sums to {sum}, expected 1")
            }
            Violation::MembershipEntry { row, col, value } => {
                write!(f, "membership entry ({row}, {col}) = {value} outside [0, 1]")
            }
            Violation::NoPureSubject { class } => {
                write!(f, "class {class} has no pure subject")
            }
            Violation::BasisEntry { layer, row, col, value } => write!(
                f,
                "basis entry ({row}, {col}) of layer {layer} = {value} outside [0, 1]"
            ),
            Violation::Sparsity { value, max } => {
                write!(f, "sparsity {value} outside (0, {max}]")
            }
            Violation::LayerShape { layer, rows, cols } => {
                write!(f, "basis layer {layer} has inconsistent shape {rows}x{cols}")
            }
            Violation::TooManyClasses { classes, limit } => {
                write!(f, "{classes} classes exceed min(subjects, items) = {limit}")
            }
            Violation::EmptyDimension { what } => write!(f, "{what} must be nonempty"),
        }
    }
}

/// Outcome of [`validate_model`]: empty means every invariant holds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// Checks every model invariant and reports all violations with indices.
///
/// Checked, in order: membership entry range and row sums, at least one pure
/// subject per class, basis entry range and shape consistency, sparsity in
/// `(0, M]`, nonempty dimensions, and `K <= min(N, J)`.
pub fn validate_model(params: &ModelParams) -> ValidationReport {
    let mut violations = Vec::new();
    let pi = &params.membership;
    let (n, k) = (pi.nrows(), pi.ncols());

    if n == 0 {
        violations.push(Violation::EmptyDimension { what: "subjects" });
    }
    if k == 0 {
        violations.push(Violation::EmptyDimension { what: "classes" });
    }
    if params.item_bases.is_empty() {
        violations.push(Violation::EmptyDimension { what: "layers" });
    }
    if params.max_choice == 0 {
        violations.push(Violation::EmptyDimension { what: "choices per item" });
    }

    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..k {
            let v = pi[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                violations.push(Violation::MembershipEntry { row: i, col: j, value: v });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            violations.push(Violation::RowSum { row: i, sum });
        }
    }

    let mut class_has_pure = vec![false; k];
    for i in 0..n {
        if let Some(c) = pure_class_of_row(pi, i) {
            class_has_pure[c] = true;
        }
    }
    for (c, has) in class_has_pure.iter().enumerate() {
        if !has {
            violations.push(Violation::NoPureSubject { class: c });
        }
    }

    let j_items = params.num_items();
    for (l, b) in params.item_bases.iter().enumerate() {
        if b.nrows() != j_items || b.ncols() != k {
            violations.push(Violation::LayerShape {
                layer: l,
                rows: b.nrows(),
                cols: b.ncols(),
            });
            continue;
        }
        for r in 0..b.nrows() {
            for c in 0..b.ncols() {
                let v = b[(r, c)];
                if !(0.0..=1.0).contains(&v) {
                    violations.push(Violation::BasisEntry { layer: l, row: r, col: c, value: v });
                }
            }
        }
    }

    let m = f64::from(params.max_choice);
    if !(params.sparsity > 0.0 && params.sparsity <= m) {
        violations.push(Violation::Sparsity { value: params.sparsity, max: m });
    }

    if j_items > 0 && n > 0 && k > n.min(j_items) {
        violations.push(Violation::TooManyClasses {
            classes: k,
            limit: n.min(j_items),
        });
    }

    ValidationReport { violations }
}

/// Population responses `P Theta_l'` for each layer; entries lie in `[0, rho]`.
pub fn population_response(params: &ModelParams) -> Result<PopulationTensor> {
    let report = validate_model(params);
    if !report.is_ok() {
        return Err(Error::InvalidModel(report));
    }
    let layers = params
        .item_bases
        .iter()
        .map(|b| &params.membership * b.scale(params.sparsity).transpose())
        .collect();
    PopulationTensor::new(layers)
}

/// Probability that a subject with population value `r` selects choice `m`
/// out of `max_choice`: `C(M, m) (r/M)^m (1 - r/M)^(M-m)`.
pub fn response_probability(r: f64, max_choice: u32, m: u32) -> Result<f64> {
    let cap = f64::from(max_choice);
    if !(0.0..=cap).contains(&r) {
        return Err(Error::OutOfRange { name: "population value", value: r, min: 0.0, max: cap });
    }
    if m > max_choice {
        return Err(Error::OutOfRange {
            name: "choice",
            value: f64::from(m),
            min: 0.0,
            max: cap,
        });
    }
    let p = r / cap;
    let mut coeff = 1.0;
    for i in 0..m {
        coeff *= f64::from(max_choice - i) / f64::from(i + 1);
    }
    Ok(coeff * p.powi(m as i32) * (1.0 - p).powi((max_choice - m) as i32))
}

/// Draws a response tensor entrywise from `Binomial(M, r/M)`.
///
/// Each binomial variate is realized as `M` independent Bernoulli draws from
/// a ChaCha8 stream seeded with `seed`; layers are visited in order and each
/// layer row-major, so identical inputs always reproduce the same tensor.
pub fn sample_responses(
    pop: &PopulationTensor,
    max_choice: u32,
    seed: u64,
) -> Result<ResponseTensor> {
    let cap = f64::from(max_choice);
    for layer in pop.layers() {
        if let Some(v) = layer.iter().find(|v| !(0.0..=cap).contains(*v)) {
            return Err(Error::OutOfRange {
                name: "population entry",
                value: *v,
                min: 0.0,
                max: cap,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = pop
        .layers()
        .iter()
        .map(|layer| {
            let mut out = DMatrix::<u32>::zeros(layer.nrows(), layer.ncols());
            for i in 0..layer.nrows() {
                for j in 0..layer.ncols() {
                    let p = layer[(i, j)] / cap;
                    let mut count = 0;
                    for _ in 0..max_choice {
                        if rng.gen::<f64>() < p {
                            count += 1;
                        }
                    }
                    out[(i, j)] = count;
                }
            }
            out
        })
        .collect();
    ResponseTensor::new(layers, max_choice)
}

/// Uniform draw from the open interval `(0, 1)`.
pub(crate) fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Open01)
}
