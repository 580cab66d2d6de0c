//! Built-in objective functions and the catalog that names them.

pub mod continuous;
pub mod discrete;

use thiserror::Error;

use crate::registry::{BenchmarkType, Direction, Registry, RegistryEntry, RegistryError};
use crate::wire::ValueKind;
use crate::worker::BenchmarkDefinition;

pub use continuous::{map_unit_to_domain, ContinuousFunction, ContinuousSpec};
pub use discrete::{DiscreteFunction, DiscreteSpec, Wrapper, TRAP_BLOCK};

pub const CONTINUOUS_PREFIX: &str = "bbob-";
pub const DISCRETE_PREFIX: &str = "pbo-";

pub const DEFAULT_CONTINUOUS_DIM: usize = 10;
pub const DEFAULT_DISCRETE_DIM: usize = 64;

/// Port used by the built-in registry for the continuous worker.
pub const CONTINUOUS_WORKER_PORT: u16 = 50052;
/// Port used by the built-in registry for the pseudo-boolean worker.
pub const DISCRETE_WORKER_PORT: u16 = 50053;

const NEUTRALITY_BLOCK: usize = 3;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("no built-in benchmark named `{0}`")]
    Unknown(String),
    #[error("`{name}` cannot be built with {dimensions} dimensions: {reason}")]
    BadDimensions {
        name: String,
        dimensions: usize,
        reason: String,
    },
}

/// W-model variants of a base function offered by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Plain,
    Dummy1,
    Dummy2,
    Neutrality,
}

impl Variant {
    fn suffix(self) -> &'static str {
        match self {
            Variant::Plain => "",
            Variant::Dummy1 => "dummy1",
            Variant::Dummy2 => "dummy2",
            Variant::Neutrality => "neutrality",
        }
    }

    fn wrappers(self, n: usize) -> Vec<Wrapper> {
        match self {
            Variant::Plain => vec![],
            Variant::Dummy1 => vec![Wrapper::Dummy { m: n / 2, seed: 1 }],
            Variant::Dummy2 => vec![Wrapper::Dummy {
                m: n * 9 / 10,
                seed: 2,
            }],
            Variant::Neutrality => vec![Wrapper::Neutrality {
                mu: NEUTRALITY_BLOCK,
            }],
        }
    }
}

/// The sixteen benchmarks of the default registry, ascending.
pub fn core_names() -> Vec<String> {
    let mut names: Vec<String> = ContinuousFunction::ALL
        .iter()
        .map(|f| format!("{CONTINUOUS_PREFIX}{}", f.name()))
        .chain(
            DiscreteFunction::ALL
                .iter()
                .map(|f| format!("{DISCRETE_PREFIX}{}", f.name())),
        )
        .collect();
    names.sort();
    names
}

/// Every name [`definition`] accepts: the core set plus W-model variants of
/// onemax and leadingones.
pub fn all_names() -> Vec<String> {
    let mut names = core_names();
    for base in [DiscreteFunction::OneMax, DiscreteFunction::LeadingOnes] {
        for v in [Variant::Dummy1, Variant::Dummy2, Variant::Neutrality] {
            names.push(format!("{DISCRETE_PREFIX}{}{}", base.name(), v.suffix()));
        }
    }
    names.sort();
    names
}

pub fn default_dimensions(name: &str) -> Option<usize> {
    if name.starts_with(CONTINUOUS_PREFIX) {
        parse_continuous(name).map(|_| DEFAULT_CONTINUOUS_DIM)
    } else {
        let (function, variant) = parse_discrete(name)?;
        Some(match (function, variant) {
            (_, Variant::Neutrality) => 63,
            // smallest whole number of trap blocks covering the default size
            (DiscreteFunction::ConcatenatedTrap, _) => {
                DEFAULT_DISCRETE_DIM.div_ceil(TRAP_BLOCK) * TRAP_BLOCK
            }
            _ => DEFAULT_DISCRETE_DIM,
        })
    }
}

fn parse_continuous(name: &str) -> Option<ContinuousFunction> {
    name.strip_prefix(CONTINUOUS_PREFIX)?.parse().ok()
}

fn parse_discrete(name: &str) -> Option<(DiscreteFunction, Variant)> {
    let rest = name.strip_prefix(DISCRETE_PREFIX)?;
    if let Ok(f) = rest.parse() {
        return Some((f, Variant::Plain));
    }
    for base in [DiscreteFunction::OneMax, DiscreteFunction::LeadingOnes] {
        if let Some(suffix) = rest.strip_prefix(base.name()) {
            for v in [Variant::Dummy1, Variant::Dummy2, Variant::Neutrality] {
                if suffix == v.suffix() {
                    return Some((base, v));
                }
            }
        }
    }
    None
}

/// Builds the built-in benchmark `name` at the requested dimension.
pub fn definition(name: &str, dimensions: usize) -> Result<BenchmarkDefinition, CatalogError> {
    let bad = |reason: String| CatalogError::BadDimensions {
        name: name.to_owned(),
        dimensions,
        reason,
    };
    if let Some(function) = parse_continuous(name) {
        let spec = ContinuousSpec::new(function, dimensions).map_err(|e| bad(e.to_string()))?;
        return Ok(continuous_definition(name, spec));
    }
    if let Some((function, variant)) = parse_discrete(name) {
        let spec = DiscreteSpec::with_wrappers(function, dimensions, variant.wrappers(dimensions))
            .map_err(|e| bad(e.to_string()))?;
        return Ok(discrete_definition(name, spec));
    }
    Err(CatalogError::Unknown(name.to_owned()))
}

pub fn continuous_definition(name: &str, spec: ContinuousSpec) -> BenchmarkDefinition {
    let description = format!(
        "{} on [-5,5]^{} behind unit-cube inputs, minimized",
        spec.function(),
        spec.dimensions()
    );
    let dims = spec.dimensions();
    BenchmarkDefinition::new(
        name,
        dims,
        ValueKind::Continuous,
        Direction::Min,
        move |u| spec.evaluate(u),
    )
    .with_description(description)
}

pub fn discrete_definition(name: &str, spec: DiscreteSpec) -> BenchmarkDefinition {
    let description = match spec.function() {
        DiscreteFunction::Labs => "merit factor n^2/(2E) of the ±1 sequence, maximized".to_owned(),
        DiscreteFunction::NQueens => "queens placed minus attacking pairs, maximized".to_owned(),
        f => format!("{f}, maximized"),
    };
    let dims = spec.input_len();
    BenchmarkDefinition::new(name, dims, ValueKind::Binary, Direction::Max, move |x| {
        let bits: Vec<bool> = x.iter().map(|&v| v == 1.0).collect();
        spec.evaluate(&bits)
    })
    .with_description(description)
}

/// Registry entries for the sixteen core benchmarks at default sizes,
/// continuous ones on one worker and pseudo-boolean ones on another.
pub fn builtin_registry(start_command: Option<Vec<String>>) -> Result<Registry, RegistryError> {
    let entries = core_names().into_iter().map(|name| {
        let dims = default_dimensions(&name).expect("core names are known");
        let entry = if name.starts_with(CONTINUOUS_PREFIX) {
            RegistryEntry::new(
                &name,
                CONTINUOUS_WORKER_PORT,
                dims,
                BenchmarkType::PurelyContinuous,
            )
        } else {
            RegistryEntry::new(&name, DISCRETE_WORKER_PORT, dims, BenchmarkType::Binary)
                .with_direction(Direction::Max)
        };
        match &start_command {
            Some(argv) => entry.with_start_command(argv.clone()),
            None => entry,
        }
    });
    Registry::from_entries(entries.collect::<Vec<_>>())
}
