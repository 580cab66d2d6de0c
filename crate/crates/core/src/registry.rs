//! Benchmark registry: the JSON document mapping benchmark names to the
//! worker ports serving them, plus per-benchmark metadata.
//!
//! ```json
//! {
//!   "lasso-dna": { "port": 50053, "dimensions": 180, "type": "purely_continuous" }
//! }
//! ```
//!
//! Optional per-entry fields: `direction` (`"min"` or `"max"`, default
//! `"min"`), `start_command` (argv used to spawn the worker) and
//! `num_categories` (required for categorical entries).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::wire::{ErrorCode, ValueKind};

pub const MIN_PORT: u16 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Min => "min",
            Direction::Max => "max",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Homogeneous variable type of a registered benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkType {
    PurelyContinuous,
    Binary,
    Categorical,
    Ordinal,
}

impl BenchmarkType {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkType::PurelyContinuous => "purely_continuous",
            BenchmarkType::Binary => "binary",
            BenchmarkType::Categorical => "categorical",
            BenchmarkType::Ordinal => "ordinal",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "purely_continuous" => BenchmarkType::PurelyContinuous,
            "binary" => BenchmarkType::Binary,
            "categorical" => BenchmarkType::Categorical,
            "ordinal" => BenchmarkType::Ordinal,
            _ => return None,
        })
    }

    pub fn value_kind(self) -> ValueKind {
        match self {
            BenchmarkType::PurelyContinuous => ValueKind::Continuous,
            BenchmarkType::Binary => ValueKind::Binary,
            BenchmarkType::Categorical => ValueKind::Categorical,
            BenchmarkType::Ordinal => ValueKind::Ordinal,
        }
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read registry {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("registry is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate benchmark name `{0}`")]
    Duplicate(String),
    #[error("invalid benchmark name `{0}`: must match [a-z0-9-]+")]
    InvalidName(String),
    #[error("benchmark `{name}`: {reason}")]
    InvalidEntry { name: String, reason: String },
    #[error("benchmark `{name}`: missing required field `{field}`")]
    MissingField { name: String, field: &'static str },
    #[error("benchmark `{name}`: port {port} outside {MIN_PORT}-65535")]
    PortOutOfRange { name: String, port: i64 },
    #[error("benchmark `{name}`: categorical entries require `num_categories`")]
    MissingCategories { name: String },
    #[error("benchmarks `{first}` and `{second}` share port {port} but declare different start commands")]
    PortConflict {
        port: u16,
        first: String,
        second: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegistryEntry {
    #[serde(skip)]
    pub name: String,
    pub port: u16,
    pub dimensions: usize,
    #[serde(rename = "type")]
    pub benchmark_type: BenchmarkType,
    pub direction: Direction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_command: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_categories: Option<Vec<u32>>,
}

impl RegistryEntry {
    pub fn new(
        name: impl Into<String>,
        port: u16,
        dimensions: usize,
        benchmark_type: BenchmarkType,
    ) -> Self {
        Self {
            name: name.into(),
            port,
            dimensions,
            benchmark_type,
            direction: Direction::Min,
            start_command: None,
            num_categories: None,
        }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_start_command<S: Into<String>>(
        mut self,
        argv: impl IntoIterator<Item = S>,
    ) -> Self {
        self.start_command = Some(argv.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_num_categories(mut self, sizes: Vec<u32>) -> Self {
        self.num_categories = Some(sizes);
        self
    }

    pub fn value_kind(&self) -> ValueKind {
        self.benchmark_type.value_kind()
    }

    /// Entry as a JSON object including its name.
    pub fn to_json(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("registry entry serializes");
        value["name"] = serde_json::Value::from(self.name.clone());
        value
    }

    fn validate(&self) -> Result<(), RegistryError> {
        if !is_valid_name(&self.name) {
            return Err(RegistryError::InvalidName(self.name.clone()));
        }
        if self.port < MIN_PORT {
            return Err(RegistryError::PortOutOfRange {
                name: self.name.clone(),
                port: self.port.into(),
            });
        }
        let invalid = |reason: String| RegistryError::InvalidEntry {
            name: self.name.clone(),
            reason,
        };
        if self.dimensions == 0 {
            return Err(invalid("dimensions must be positive".into()));
        }
        if matches!(&self.start_command, Some(argv) if argv.is_empty() || argv[0].is_empty()) {
            return Err(invalid("start_command must name a program".into()));
        }
        match (&self.num_categories, self.benchmark_type) {
            (None, BenchmarkType::Categorical) => {
                return Err(RegistryError::MissingCategories {
                    name: self.name.clone(),
                });
            }
            (Some(sizes), BenchmarkType::Categorical) => {
                if sizes.len() != self.dimensions {
                    return Err(invalid(format!(
                        "num_categories has {} entries, expected {}",
                        sizes.len(),
                        self.dimensions
                    )));
                }
                if sizes.contains(&0) {
                    return Err(invalid("category counts must be positive".into()));
                }
            }
            (Some(_), _) => {
                return Err(invalid(
                    "num_categories is only allowed on categorical entries".into(),
                ))
            }
            (None, _) => {}
        }
        Ok(())
    }
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// Validated, immutable set of registry entries keyed by name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl Registry {
    pub fn from_entries(
        entries: impl IntoIterator<Item = RegistryEntry>,
    ) -> Result<Self, RegistryError> {
        let mut map = BTreeMap::new();
        for entry in entries {
            entry.validate()?;
            if map.contains_key(&entry.name) {
                return Err(RegistryError::Duplicate(entry.name));
            }
            map.insert(entry.name.clone(), entry);
        }
        check_shared_ports(&map)?;
        Ok(Self { entries: map })
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.to_owned(),
            source,
        })?;
        load_registry(&text)
    }

    pub fn lookup(&self, name: &str) -> Result<&RegistryEntry, ErrorCode> {
        self.entries.get(name).ok_or(ErrorCode::UnknownBenchmark)
    }

    /// Entries in ascending name order.
    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct worker ports, ascending.
    pub fn ports(&self) -> Vec<u16> {
        let mut ports: Vec<u16> = self.entries.values().map(|e| e.port).collect();
        ports.sort_unstable();
        ports.dedup();
        ports
    }

    /// Entries served by the worker on `port`.
    pub fn on_port(&self, port: u16) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values().filter(move |e| e.port == port)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("registry serializes")
    }
}

pub fn load_registry(text: &str) -> Result<Registry, RegistryError> {
    let RawRegistry(raw) = serde_json::from_str(text)?;
    let mut seen = std::collections::HashSet::new();
    let mut entries = Vec::with_capacity(raw.len());
    for (name, value) in raw {
        if !seen.insert(name.clone()) {
            return Err(RegistryError::Duplicate(name));
        }
        entries.push(parse_entry(name, value)?);
    }
    Registry::from_entries(entries)
}

fn parse_entry(name: String, value: serde_json::Value) -> Result<RegistryEntry, RegistryError> {
    if !is_valid_name(&name) {
        return Err(RegistryError::InvalidName(name));
    }
    let raw: RawEntry = serde_json::from_value(value).map_err(|e| RegistryError::InvalidEntry {
        name: name.clone(),
        reason: e.to_string(),
    })?;
    let missing = |field| RegistryError::MissingField {
        name: name.clone(),
        field,
    };
    let port = raw.port.ok_or_else(|| missing("port"))?;
    let dimensions = raw.dimensions.ok_or_else(|| missing("dimensions"))?;
    let type_name = raw.benchmark_type.ok_or_else(|| missing("type"))?;

    if !(i64::from(MIN_PORT)..=65535).contains(&port) {
        return Err(RegistryError::PortOutOfRange { name, port });
    }
    if dimensions <= 0 {
        return Err(RegistryError::InvalidEntry {
            name,
            reason: format!("dimensions must be positive, got {dimensions}"),
        });
    }
    let benchmark_type =
        BenchmarkType::parse(&type_name).ok_or_else(|| RegistryError::InvalidEntry {
            name: name.clone(),
            reason: format!("unknown type `{type_name}`"),
        })?;
    let num_categories = match raw.num_categories {
        Some(sizes) => Some(
            sizes
                .into_iter()
                .map(u32::try_from)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| RegistryError::InvalidEntry {
                    name: name.clone(),
                    reason: "num_categories must be positive counts".into(),
                })?,
        ),
        None => None,
    };
    Ok(RegistryEntry {
        name,
        port: port as u16,
        dimensions: dimensions as usize,
        benchmark_type,
        direction: raw.direction.unwrap_or(Direction::Min),
        start_command: raw.start_command,
        num_categories,
    })
}

fn check_shared_ports(entries: &BTreeMap<String, RegistryEntry>) -> Result<(), RegistryError> {
    let mut owners: HashMap<u16, &RegistryEntry> = HashMap::new();
    for entry in entries.values() {
        match owners.get(&entry.port) {
            Some(first) if first.start_command != entry.start_command => {
                return Err(RegistryError::PortConflict {
                    port: entry.port,
                    first: first.name.clone(),
                    second: entry.name.clone(),
                });
            }
            Some(_) => {}
            None => {
                owners.insert(entry.port, entry);
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawEntry {
    port: Option<i64>,
    dimensions: Option<i64>,
    #[serde(rename = "type")]
    benchmark_type: Option<String>,
    direction: Option<Direction>,
    start_command: Option<Vec<String>>,
    num_categories: Option<Vec<i64>>,
}

/// Top-level object as an ordered list of pairs, keeping duplicate keys so
/// they can be reported instead of silently overwritten.
struct RawRegistry(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for RawRegistry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairsVisitor;

        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = RawRegistry;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object mapping benchmark names to entries")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<RawRegistry, A::Error> {
                let mut pairs = Vec::new();
                while let Some(pair) = map.next_entry::<String, serde_json::Value>()? {
                    pairs.push(pair);
                }
                Ok(RawRegistry(pairs))
            }
        }

        deserializer.deserialize_map(PairsVisitor)
    }
}
