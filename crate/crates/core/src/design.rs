//! Synthetic-instance generation for Monte Carlo studies.
//!
//! An [`InstanceSpec`] fixes the dimensions, sparsity, and a base seed; each
//! replication derives its own ChaCha8 stream from `seed_base + rep`, draws a
//! membership matrix with a fixed block of pure subjects per class, draws the
//! item bases uniformly, and samples a response tensor. Everything is a pure
//! function of the spec and the replication index, so replications can run in
//! parallel in any order without changing results.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{open_unit, population_response, sample_responses, ModelParams, ResponseTensor};

/// Dimensions and sampling controls for one simulated design point.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    /// Number of subjects `N`.
    pub num_subjects: usize,
    /// Number of items `J`.
    pub num_items: usize,
    /// Number of latent classes `K`.
    pub num_classes: usize,
    /// Number of layers `L`.
    pub num_layers: usize,
    /// Choices per item `M`.
    pub max_choice: u32,
    /// Pure subjects per class `N0`; these occupy the leading rows.
    pub pure_per_class: usize,
    /// Sparsity parameter `rho`, in `(0, M]`.
    pub sparsity: f64,
    /// Base seed; replication `rep` uses `seed_base + rep`.
    pub seed_base: u64,
}

impl InstanceSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_subjects: usize,
        num_items: usize,
        num_classes: usize,
        num_layers: usize,
        max_choice: u32,
        pure_per_class: usize,
        sparsity: f64,
        seed_base: u64,
    ) -> Self {
        Self {
            num_subjects,
            num_items,
            num_classes,
            num_layers,
            max_choice,
            pure_per_class,
            sparsity,
            seed_base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_subjects == 0
            || self.num_items == 0
            || self.num_classes == 0
            || self.num_layers == 0
            || self.max_choice == 0
        {
            return Err(Error::Config("all dimensions must be at least 1".into()));
        }
        if self.num_classes > self.num_subjects.min(self.num_items) {
            return Err(Error::Config(format!(
                "{} classes exceed min(subjects, items) = {}",
                self.num_classes,
                self.num_subjects.min(self.num_items)
            )));
        }
        if self.pure_per_class == 0 {
            return Err(Error::Config("need at least one pure subject per class".into()));
        }
        if self.pure_per_class * self.num_classes > self.num_subjects {
            return Err(Error::Config(format!(
                "{} pure subjects per class times {} classes exceed {} subjects",
                self.pure_per_class, self.num_classes, self.num_subjects
            )));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= f64::from(self.max_choice)) {
            return Err(Error::Config(format!(
                "sparsity {} outside (0, {}]",
                self.sparsity, self.max_choice
            )));
        }
        Ok(())
    }

    /// Rows occupied by pure subjects: class `k` owns rows
    /// `k * pure_per_class .. (k + 1) * pure_per_class`.
    pub fn pure_rows(&self) -> Vec<usize> {
        (0..self.pure_per_class * self.num_classes).collect()
    }
}

/// Generates one simulated replication.
///
/// The membership matrix places `pure_per_class` pure subjects per class in
/// the leading rows, grouped by class. Each remaining row draws
/// `u_k / (K - 1)` for the first `K - 1` classes with `u_k` uniform on
/// `(0, 1)`, and puts the residual weight on class `K`; with a single class
/// the column is constant one. Item bases are uniform on `(0, 1)`. Draw
/// order is fixed (membership rows ascending, then bases layer by layer
/// row-major, then the response seed), making the output a pure function of
/// `(spec, rep)`.
pub fn generate_experiment_instance(
    spec: &InstanceSpec,
    rep: u64,
) -> Result<(ModelParams, ResponseTensor)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed_base.wrapping_add(rep));
    let (n, j, k, l) = (
        spec.num_subjects,
        spec.num_items,
        spec.num_classes,
        spec.num_layers,
    );

    let mut membership = DMatrix::<f64>::zeros(n, k);
    let pure_total = spec.pure_per_class * k;
    for i in 0..pure_total {
        membership[(i, i / spec.pure_per_class)] = 1.0;
    }
    for i in pure_total..n {
        if k == 1 {
            membership[(i, 0)] = 1.0;
        } else {
            let mut rest = 0.0;
            for c in 0..k - 1 {
                let w = open_unit(&mut rng) / (k - 1) as f64;
                membership[(i, c)] = w;
                rest += w;
            }
            membership[(i, k - 1)] = 1.0 - rest;
        }
    }

    let item_bases = (0..l)
        .map(|_| {
            let mut b = DMatrix::<f64>::zeros(j, k);
            for r in 0..j {
                for c in 0..k {
                    b[(r, c)] = open_unit(&mut rng);
                }
            }
            b
        })
        .collect();

    let params = ModelParams {
        membership,
        item_bases,
        sparsity: spec.sparsity,
        max_choice: spec.max_choice,
    };
    let response_seed = rng.gen::<u64>();
    let pop = population_response(&params)?;
    let responses = sample_responses(&pop, spec.max_choice, response_seed)?;
    Ok((params, responses))
}
