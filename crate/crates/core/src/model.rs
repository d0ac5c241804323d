// SPDX-License-Identifier: Apache-2.0
//! TOML model files.
//!
//! ```toml
//! schema_version = 1
//! name = "isomerization"
//! species = ["A", "B"]
//! initial_state = { A = 1 }
//!
//! [[parameter]]
//! name = "c1"
//! value = 1.0
//!
//! [[reaction]]
//! reactants = { A = 1 }
//! products = { B = 1 }
//! rate = { law = "mass_action", parameter = "c1" }
//!
//! [[observable]]
//! name = "in_a"
//! kind = "indicator"
//! states = [[1, 0]]
//!
//! [truncation]
//! kind = "conservation"
//! weights = { A = 1, B = 1 }
//! total = 1
//! ```
//!
//! Species omitted from `initial_state`, `reactants` or `products` count as
//! zero. Unknown keys are rejected.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, Observable, RateLaw, Reaction, ReactionNetwork, State};
use crate::oracle::TruncationSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0}")]
    Syntax(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("{context}: unknown species `{name}`")]
    UnknownSpecies { context: String, name: String },
    #[error("{context}: unknown parameter `{name}`")]
    UnknownParameter { context: String, name: String },
    #[error("{context}: negative stoichiometry for `{species}`")]
    NegativeStoichiometry { context: String, species: String },
    #[error("{context}: negative initial count for `{species}`")]
    NegativeCount { context: String, species: String },
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("cannot serialize model: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub species: Vec<String>,
    #[serde(default)]
    pub initial_state: BTreeMap<String, i64>,
    #[serde(default, rename = "parameter")]
    pub parameters: Vec<ParameterEntry>,
    #[serde(default, rename = "reaction")]
    pub reactions: Vec<ReactionEntry>,
    #[serde(default, rename = "observable", skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<ObservableEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterEntry {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub reactants: BTreeMap<String, i64>,
    #[serde(default)]
    pub products: BTreeMap<String, i64>,
    pub rate: RateEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateEntry {
    MassAction {
        parameter: String,
    },
    Hill {
        parameter: String,
        species: String,
        exponent: u32,
    },
    Repression {
        rate: String,
        threshold: String,
        species: String,
        exponent: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableEntry {
    Species {
        name: String,
        species: String,
    },
    Linear {
        name: String,
        coefficients: BTreeMap<String, f64>,
    },
    Indicator {
        name: String,
        states: Vec<Vec<u32>>,
    },
    Custom {
        name: String,
        table: Vec<TableEntry>,
    },
}

impl ObservableEntry {
    pub fn name(&self) -> &str {
        match self {
            ObservableEntry::Species { name, .. }
            | ObservableEntry::Linear { name, .. }
            | ObservableEntry::Indicator { name, .. }
            | ObservableEntry::Custom { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub state: Vec<u32>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruncationEntry {
    /// All states with `Σ w_i x_i = total`.
    Conservation {
        weights: BTreeMap<String, u32>,
        total: u32,
    },
    /// States reachable from the initial state within per-species caps.
    Box { max: BTreeMap<String, u32> },
}

/// A fully resolved model: network plus nominal parameters, initial state,
/// named observables and an optional truncation for the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub network: ReactionNetwork,
    pub params: Vec<f64>,
    pub initial: State,
    pub observables: Vec<NamedObservable>,
    pub truncation: Option<TruncationSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedObservable {
    pub name: String,
    pub observable: Observable,
}

impl Model {
    pub fn observable(&self, name: &str) -> Option<&Observable> {
        self.observables
            .iter()
            .find(|o| o.name == name)
            .map(|o| &o.observable)
    }
}

impl ModelFile {
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(ModelError::SchemaVersion(file.schema_version));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String, ModelError> {
        toml::to_string(self).map_err(|e| ModelError::Serialize(e.to_string()))
    }

    pub fn build(&self) -> Result<Model, ModelError> {
        let species_idx = |ctx: &str, name: &str| {
            self.species
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| ModelError::UnknownSpecies {
                    context: ctx.to_string(),
                    name: name.to_string(),
                })
        };
        let param_names: Vec<String> = self.parameters.iter().map(|p| p.name.clone()).collect();
        let param_idx = |ctx: &str, name: &str| {
            param_names
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| ModelError::UnknownParameter {
                    context: ctx.to_string(),
                    name: name.to_string(),
                })
        };
        let n = self.species.len();

        let mut reactions = Vec::with_capacity(self.reactions.len());
        for (j, entry) in self.reactions.iter().enumerate() {
            let ctx = match &entry.name {
                Some(name) => format!("reaction {} (`{name}`)", j + 1),
                None => format!("reaction {}", j + 1),
            };
            let vector = |map: &BTreeMap<String, i64>| -> Result<Vec<u32>, ModelError> {
                let mut v = vec![0u32; n];
                for (name, &count) in map {
                    let i = species_idx(&ctx, name)?;
                    if count < 0 {
                        return Err(ModelError::NegativeStoichiometry {
                            context: ctx.clone(),
                            species: name.clone(),
                        });
                    }
                    v[i] = u32::try_from(count).map_err(|_| ModelError::Invalid {
                        context: ctx.clone(),
                        message: format!("stoichiometry for `{name}` too large"),
                    })?;
                }
                Ok(v)
            };
            let reactants = vector(&entry.reactants)?;
            let products = vector(&entry.products)?;
            let law = match &entry.rate {
                RateEntry::MassAction { parameter } => RateLaw::MassAction {
                    param: param_idx(&ctx, parameter)?,
                },
                RateEntry::Hill {
                    parameter,
                    species,
                    exponent,
                } => RateLaw::Hill {
                    param: param_idx(&ctx, parameter)?,
                    exponent: *exponent,
                    species: species_idx(&ctx, species)?,
                },
                RateEntry::Repression {
                    rate,
                    threshold,
                    species,
                    exponent,
                } => RateLaw::Repression {
                    rate: param_idx(&ctx, rate)?,
                    threshold: param_idx(&ctx, threshold)?,
                    exponent: *exponent,
                    species: species_idx(&ctx, species)?,
                },
            };
            reactions.push(Reaction::new(reactants, products, law));
        }
        let network = ReactionNetwork::new(self.species.clone(), param_names, reactions)?;

        let mut params = Vec::with_capacity(self.parameters.len());
        for p in &self.parameters {
            if !p.value.is_finite() || p.value <= 0.0 {
                return Err(ModelError::Invalid {
                    context: format!("parameter `{}`", p.name),
                    message: "value must be finite and strictly positive".into(),
                });
            }
            params.push(p.value);
        }

        let mut initial = vec![0u32; n];
        for (name, &count) in &self.initial_state {
            let i = species_idx("initial_state", name)?;
            if count < 0 {
                return Err(ModelError::NegativeCount {
                    context: "initial_state".into(),
                    species: name.clone(),
                });
            }
            initial[i] = u32::try_from(count).map_err(|_| ModelError::Invalid {
                context: "initial_state".into(),
                message: format!("count for `{name}` too large"),
            })?;
        }

        let mut observables: Vec<NamedObservable> = Vec::new();
        for o in &self.observables {
            let ctx = format!("observable `{}`", o.name());
            if observables.iter().any(|x| x.name == o.name()) {
                return Err(ModelError::Invalid {
                    context: ctx,
                    message: "duplicate observable name".into(),
                });
            }
            let check_len = |s: &Vec<u32>| {
                if s.len() == n {
                    Ok(State::new(s.clone()))
                } else {
                    Err(ModelError::Invalid {
                        context: ctx.clone(),
                        message: format!("state {s:?} has length {}, expected {n}", s.len()),
                    })
                }
            };
            let observable = match o {
                ObservableEntry::Species { species, .. } => {
                    Observable::SpeciesCount(species_idx(&ctx, species)?)
                }
                ObservableEntry::Linear { coefficients, .. } => {
                    let mut w = vec![0.0; n];
                    for (name, &v) in coefficients {
                        w[species_idx(&ctx, name)?] = v;
                    }
                    Observable::LinearCombination(w)
                }
                ObservableEntry::Indicator { states, .. } => Observable::Indicator(
                    states.iter().map(check_len).collect::<Result<_, _>>()?,
                ),
                ObservableEntry::Custom { table, .. } => {
                    let mut map = HashMap::new();
                    for e in table {
                        map.insert(check_len(&e.state)?, e.value);
                    }
                    Observable::Custom(map)
                }
            };
            observables.push(NamedObservable {
                name: o.name().to_string(),
                observable,
            });
        }

        let truncation = match &self.truncation {
            None => None,
            Some(TruncationEntry::Conservation { weights, total }) => {
                let mut w = vec![0u32; n];
                for (name, &v) in weights {
                    w[species_idx("truncation", name)?] = v;
                }
                if w.contains(&0) {
                    return Err(ModelError::Invalid {
                        context: "truncation".into(),
                        message: "conservation weights must be positive for every species".into(),
                    });
                }
                Some(TruncationSpec::Conservation {
                    weights: w,
                    total: *total,
                })
            }
            Some(TruncationEntry::Box { max }) => {
                let mut caps = vec![None; n];
                for (name, &v) in max {
                    caps[species_idx("truncation", name)?] = Some(v);
                }
                let caps: Option<Vec<u32>> = caps.into_iter().collect();
                let caps = caps.ok_or_else(|| ModelError::Invalid {
                    context: "truncation".into(),
                    message: "box truncation needs a cap for every species".into(),
                })?;
                Some(TruncationSpec::Box { max: caps })
            }
        };

        Ok(Model {
            name: self.name.clone().unwrap_or_else(|| "model".into()),
            network,
            params,
            initial: State::new(initial),
            observables,
            truncation,
        })
    }
}

/// Parses a model file into a validated network (plus the rest of the model).
pub fn parse_model(text: &str) -> Result<Model, ModelError> {
    ModelFile::from_toml(text)?.build()
}

/// Parses a model file and returns only its reaction network.
pub fn parse_network(text: &str) -> Result<ReactionNetwork, ModelError> {
    Ok(parse_model(text)?.network)
}

/// Golden fixtures shipped with the crate.
pub mod fixtures {
    pub const LINEAR: &str = include_str!("../models/linear.toml");
    pub const TWO_GENE: &str = include_str!("../models/twogene.toml");
    pub const ISOMERIZATION: &str = include_str!("../models/isomerization.toml");
    pub const PURE_DEATH: &str = include_str!("../models/pure_death.toml");
    pub const BIRTH_DEATH: &str = include_str!("../models/birth_death.toml");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fixture() {
        let m = parse_model(fixtures::LINEAR).unwrap();
        assert_eq!(m.network.n_reactions(), 4);
        assert_eq!(m.network.n_species(), 3);
        assert_eq!(m.network.reactions()[0].net, vec![-1, 1, 0]);
        assert_eq!(m.params, vec![10.0, 20.0, 0.03, 0.02]);
        assert_eq!(m.initial, State::new(vec![5, 5, 0]));
    }

    #[test]
    fn two_gene_fixture() {
        let m = parse_model(fixtures::TWO_GENE).unwrap();
        assert_eq!(m.network.n_reactions(), 12);
        assert_eq!(m.network.n_species(), 6);
        assert_eq!(
            m.params,
            vec![1.0, 60.0, 0.1, 1.0, 0.5, 0.02, 0.08, 0.02, 0.1]
        );
        assert_eq!(m.initial, State::zeros(6));
        // a5 = k1 pA (pA - 1)
        let x = State::new(vec![0, 3, 0, 0, 0, 0]);
        let a5 = crate::network::intensity(&m.network, 4, &x, &m.params).unwrap();
        assert!((a5 - 0.12).abs() < 1e-15);
    }

    #[test]
    fn all_fixtures_round_trip() {
        for text in [
            fixtures::LINEAR,
            fixtures::TWO_GENE,
            fixtures::ISOMERIZATION,
            fixtures::PURE_DEATH,
            fixtures::BIRTH_DEATH,
        ] {
            let file = ModelFile::from_toml(text).unwrap();
            let again = ModelFile::from_toml(&file.to_toml().unwrap()).unwrap();
            assert_eq!(file, again);
            assert_eq!(file.build().unwrap(), again.build().unwrap());
        }
    }

    #[test]
    fn empty_reaction_list_is_rejected() {
        let text = "schema_version = 1\nspecies = [\"A\"]\n";
        let err = parse_network(text).unwrap_err();
        assert_eq!(err.to_string(), "network must contain ≥1 reaction");
    }

    #[test]
    fn schema_errors() {
        let base = r#"
schema_version = 1
species = ["A"]
[[parameter]]
name = "c"
value = 1.0
"#;
        let unknown_species = format!(
            "{base}[[reaction]]\nreactants = {{ B = 1 }}\nrate = {{ law = \"mass_action\", parameter = \"c\" }}\n"
        );
        assert!(matches!(
            parse_network(&unknown_species),
            Err(ModelError::UnknownSpecies { .. })
        ));
        let unknown_param = format!(
            "{base}[[reaction]]\nreactants = {{ A = 1 }}\nrate = {{ law = \"mass_action\", parameter = \"k\" }}\n"
        );
        assert!(matches!(
            parse_network(&unknown_param),
            Err(ModelError::UnknownParameter { .. })
        ));
        let negative = format!(
            "{base}[[reaction]]\nreactants = {{ A = -1 }}\nrate = {{ law = \"mass_action\", parameter = \"c\" }}\n"
        );
        assert!(matches!(
            parse_network(&negative),
            Err(ModelError::NegativeStoichiometry { .. })
        ));
        let unknown_key = format!("{base}colour = \"red\"\n");
        let err = parse_network(&unknown_key).unwrap_err();
        assert!(matches!(err, ModelError::Syntax(_)));
        assert!(err.to_string().contains("line"), "{err}");
    }
}
