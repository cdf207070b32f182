//! Declarative Monte Carlo experiment configurations and built-in presets.
//!
//! A configuration fixes one swept parameter with its value grid plus the
//! remaining dimensions, replication count, selection bound, seed, and
//! method set. The ten built-in presets cover five sweeps (subject count,
//! layer count, sparsity, pure-subject count, class count), each in a
//! sparse and a dense variant. Derived quantities follow the shared
//! conventions: items default to a fifth of the subjects, five choices per
//! item, and the pure block scales with the sweep where the design says so.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use mlgom::design::InstanceSpec;
use mlgom::estimate::Method;
use serde::{Deserialize, Serialize};

/// Default base seed for presets; override with `--seed`.
pub const DEFAULT_SEED: u64 = 42;

/// Default candidate bound for class-count selection.
pub const DEFAULT_KC: usize = 8;

/// Default replication count per grid point.
pub const DEFAULT_REPS: u64 = 50;

/// The model parameter swept over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Subjects,
    Layers,
    Sparsity,
    PureSubjects,
    Classes,
}

impl SweepParam {
    /// Column label used in result files and plots.
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::Subjects => "N",
            SweepParam::Layers => "L",
            SweepParam::Sparsity => "rho",
            SweepParam::PureSubjects => "N0",
            SweepParam::Classes => "K",
        }
    }
}

/// Subject count, possibly tied to the class count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectRule {
    /// Taken from the grid; only valid when sweeping the subject count.
    Swept,
    Fixed(usize),
    /// `N = per_class * K`.
    PerClass(usize),
}

/// Item count, by default a fifth of the subjects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemRule {
    FifthOfSubjects,
    Fixed(usize),
}

/// Pure subjects per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PureRule {
    /// Taken from the grid; only valid when sweeping the pure count.
    Swept,
    Fixed(usize),
    /// `N0 = fraction * N`, required to land on an integer.
    FractionOfSubjects(f64),
    /// `N0 = N / K`, required to divide evenly.
    EvenSplit,
}

/// One experiment: a sweep over `grid` with everything else fixed.
///
/// The field matching the swept parameter is ignored; grid values take its
/// place point by point (`layers`, `classes`, and `sparsity` may hold any
/// value when swept, while the rule enums carry an explicit `Swept` marker).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Identifier echoed into result rows, e.g. `exp1-sparse` or `custom`.
    pub experiment: String,
    pub sweep: SweepParam,
    pub grid: Vec<f64>,
    pub subjects: SubjectRule,
    #[serde(default = "default_items")]
    pub items: ItemRule,
    pub classes: usize,
    pub layers: usize,
    #[serde(default = "default_max_choice")]
    pub max_choice: u32,
    pub pure_subjects: PureRule,
    pub sparsity: f64,
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(default = "default_kc")]
    pub candidate_bound: usize,
    #[serde(default = "default_seed")]
    pub seed_base: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
}

fn default_items() -> ItemRule {
    ItemRule::FifthOfSubjects
}

fn default_max_choice() -> u32 {
    5
}

fn default_reps() -> u64 {
    DEFAULT_REPS
}

fn default_kc() -> usize {
    DEFAULT_KC
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.name().to_string()).collect()
}

/// Names of the ten built-in presets.
pub const PRESET_NAMES: [&str; 10] = [
    "exp1-sparse",
    "exp1-dense",
    "exp2-sparse",
    "exp2-dense",
    "exp3-sparse",
    "exp3-dense",
    "exp4-sparse",
    "exp4-dense",
    "exp5-sparse",
    "exp5-dense",
];

impl ExperimentConfig {
    /// Builds one of the named presets.
    pub fn preset(name: &str) -> anyhow::Result<Self> {
        let grid_ints = |lo: usize, hi: usize, step: usize| -> Vec<f64> {
            (lo..=hi).step_by(step).map(|v| v as f64).collect()
        };
        let base = |sweep, grid, subjects, pure_subjects, layers, sparsity| Self {
            experiment: name.to_string(),
            sweep,
            grid,
            subjects,
            items: ItemRule::FifthOfSubjects,
            classes: 3,
            layers,
            max_choice: 5,
            pure_subjects,
            sparsity,
            reps: DEFAULT_REPS,
            candidate_bound: DEFAULT_KC,
            seed_base: DEFAULT_SEED,
            methods: default_methods(),
        };
        let cfg = match name {
            // Sweep the subject count; a fifth of the subjects per class is
            // pure.
            "exp1-sparse" => base(
                SweepParam::Subjects,
                grid_ints(100, 1000, 100),
                SubjectRule::Swept,
                PureRule::FractionOfSubjects(0.2),
                5,
                0.2,
            ),
            "exp1-dense" => base(
                SweepParam::Subjects,
                grid_ints(100, 1000, 100),
                SubjectRule::Swept,
                PureRule::FractionOfSubjects(0.2),
                5,
                5.0,
            ),
            // Sweep the layer count at 500 subjects.
            "exp2-sparse" => base(
                SweepParam::Layers,
                grid_ints(1, 10, 1),
                SubjectRule::Fixed(500),
                PureRule::Fixed(100),
                0,
                0.2,
            ),
            "exp2-dense" => base(
                SweepParam::Layers,
                grid_ints(1, 10, 1),
                SubjectRule::Fixed(500),
                PureRule::Fixed(100),
                0,
                5.0,
            ),
            // Sweep the sparsity parameter.
            "exp3-sparse" => base(
                SweepParam::Sparsity,
                (1..=10).map(|i| i as f64 * 0.05).collect(),
                SubjectRule::Fixed(500),
                PureRule::Fixed(100),
                5,
                0.0,
            ),
            "exp3-dense" => base(
                SweepParam::Sparsity,
                (1..=10).map(|i| i as f64 * 0.5).collect(),
                SubjectRule::Fixed(500),
                PureRule::Fixed(100),
                5,
                0.0,
            ),
            // Sweep the pure-subject count at 600 subjects and 10 layers.
            "exp4-sparse" => base(
                SweepParam::PureSubjects,
                grid_ints(20, 200, 20),
                SubjectRule::Fixed(600),
                PureRule::Swept,
                10,
                0.2,
            ),
            "exp4-dense" => base(
                SweepParam::PureSubjects,
                grid_ints(20, 200, 20),
                SubjectRule::Fixed(600),
                PureRule::Swept,
                10,
                5.0,
            ),
            // Sweep the class count with 100 subjects per class, evenly pure.
            "exp5-sparse" => base(
                SweepParam::Classes,
                grid_ints(1, 8, 1),
                SubjectRule::PerClass(100),
                PureRule::EvenSplit,
                5,
                0.5,
            ),
            "exp5-dense" => base(
                SweepParam::Classes,
                grid_ints(1, 8, 1),
                SubjectRule::PerClass(100),
                PureRule::EvenSplit,
                5,
                5.0,
            ),
            other => bail!(
                "unknown preset '{other}'; expected one of {}",
                PRESET_NAMES.join(", ")
            ),
        };
        Ok(cfg)
    }

    /// Reads a configuration from a JSON file.
    pub fn from_json_file(path: &Path) -> anyhow::Result<Self> {
        let file = std::fs::File::open(path)
            .with_context(|| format!("cannot open config {}", path.display()))?;
        let cfg: Self = serde_json::from_reader(std::io::BufReader::new(file))
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(cfg)
    }

    /// Parsed method set, in configuration order.
    pub fn parsed_methods(&self) -> anyhow::Result<Vec<Method>> {
        if self.methods.is_empty() {
            bail!("method list is empty");
        }
        self.methods
            .iter()
            .map(|name| Method::from_str(name).map_err(anyhow::Error::from))
            .collect()
    }

    fn integral(value: f64, what: &str) -> anyhow::Result<usize> {
        if value < 0.5 || (value - value.round()).abs() > 1e-9 {
            bail!("{what} = {value} is not a positive integer");
        }
        Ok(value.round() as usize)
    }

    /// Resolves one grid point to a concrete instance specification.
    pub fn resolve_point(&self, value: f64) -> anyhow::Result<InstanceSpec> {
        let mut classes = self.classes;
        let mut layers = self.layers;
        let mut sparsity = self.sparsity;
        let mut swept_subjects = None;
        let mut swept_pure = None;
        match self.sweep {
            SweepParam::Subjects => swept_subjects = Some(Self::integral(value, "subject count")?),
            SweepParam::Layers => layers = Self::integral(value, "layer count")?,
            SweepParam::Sparsity => sparsity = value,
            SweepParam::PureSubjects => {
                swept_pure = Some(Self::integral(value, "pure-subject count")?)
            }
            SweepParam::Classes => classes = Self::integral(value, "class count")?,
        }

        let subjects = match (swept_subjects, self.subjects) {
            (Some(n), _) => n,
            (None, SubjectRule::Swept) => {
                bail!("subject rule is 'swept' but the sweep is over {:?}", self.sweep)
            }
            (None, SubjectRule::Fixed(n)) => n,
            (None, SubjectRule::PerClass(per)) => per * classes,
        };
        if subjects == 0 {
            bail!("subject count resolves to zero");
        }

        let items = match self.items {
            ItemRule::Fixed(j) => j,
            ItemRule::FifthOfSubjects => {
                if subjects % 5 != 0 {
                    bail!("subject count {subjects} is not divisible by 5, so the default item rule does not apply");
                }
                subjects / 5
            }
        };

        let pure = match (swept_pure, self.pure_subjects) {
            (Some(n0), _) => n0,
            (None, PureRule::Swept) => {
                bail!("pure-subject rule is 'swept' but the sweep is over {:?}", self.sweep)
            }
            (None, PureRule::Fixed(n0)) => n0,
            (None, PureRule::FractionOfSubjects(f)) => {
                let raw = subjects as f64 * f;
                Self::integral(raw, "pure-subject count")?
            }
            (None, PureRule::EvenSplit) => {
                if subjects % classes != 0 {
                    bail!("subject count {subjects} does not split evenly over {classes} classes");
                }
                subjects / classes
            }
        };

        let spec = InstanceSpec::new(
            subjects,
            items,
            classes,
            layers,
            self.max_choice,
            pure,
            sparsity,
            self.seed_base,
        );
        spec.validate()?;
        if self.candidate_bound == 0 || self.candidate_bound > subjects.min(items) {
            bail!(
                "candidate bound {} outside 1..=min({subjects}, {items})",
                self.candidate_bound
            );
        }
        Ok(spec)
    }

    /// Checks the whole configuration, resolving every grid point.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.grid.is_empty() {
            bail!("grid is empty");
        }
        if self.reps == 0 {
            bail!("replication count must be at least 1");
        }
        self.parsed_methods()?;
        for &value in &self.grid {
            self.resolve_point(value)
                .with_context(|| format!("grid point {value} is invalid"))?;
        }
        Ok(())
    }
}
