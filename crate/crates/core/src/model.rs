//! Netlist data model: nodes, typed elements and JSON loading.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("element {id}: {reason}")]
    Element { id: String, reason: String },
    #[error("unsupported junction topology: {0}")]
    UnsupportedJunctionTopology(String),
    #[error("invalid bond graph: {0}")]
    InvalidBondGraph(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhysicalDomain {
    Electrical,
    TranslationalMechanical,
    RotationalMechanical,
    Fluidic,
    Thermal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Eulerian,
    Lagrangian,
}

/// Observer convention of a domain. Mechanical domains are Lagrangian.
pub fn domain_view(domain: PhysicalDomain) -> View {
    match domain {
        PhysicalDomain::Electrical | PhysicalDomain::Fluidic | PhysicalDomain::Thermal => {
            View::Eulerian
        }
        PhysicalDomain::TranslationalMechanical | PhysicalDomain::RotationalMechanical => {
            View::Lagrangian
        }
    }
}

impl PhysicalDomain {
    pub const ALL: [PhysicalDomain; 5] = [
        PhysicalDomain::Electrical,
        PhysicalDomain::TranslationalMechanical,
        PhysicalDomain::RotationalMechanical,
        PhysicalDomain::Fluidic,
        PhysicalDomain::Thermal,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PhysicalDomain::Electrical => "electrical",
            PhysicalDomain::TranslationalMechanical => "translational",
            PhysicalDomain::RotationalMechanical => "rotational",
            PhysicalDomain::Fluidic => "fluidic",
            PhysicalDomain::Thermal => "thermal",
        }
    }

    pub fn across(self) -> &'static str {
        match self {
            PhysicalDomain::Electrical => "voltage",
            PhysicalDomain::TranslationalMechanical => "velocity",
            PhysicalDomain::RotationalMechanical => "angular velocity",
            PhysicalDomain::Fluidic => "pressure",
            PhysicalDomain::Thermal => "temperature",
        }
    }

    pub fn through(self) -> &'static str {
        match self {
            PhysicalDomain::Electrical => "current",
            PhysicalDomain::TranslationalMechanical => "force",
            PhysicalDomain::RotationalMechanical => "torque",
            PhysicalDomain::Fluidic => "volumetric flow rate",
            PhysicalDomain::Thermal => "heat flow rate",
        }
    }

    /// Short symbol used when naming state variables, e.g. `V_C1` or `i_L1`.
    pub fn across_symbol(self) -> &'static str {
        match self {
            PhysicalDomain::Electrical | PhysicalDomain::TranslationalMechanical => "V",
            PhysicalDomain::RotationalMechanical => "w",
            PhysicalDomain::Fluidic => "P",
            PhysicalDomain::Thermal => "T",
        }
    }

    pub fn through_symbol(self) -> &'static str {
        match self {
            PhysicalDomain::Electrical => "i",
            PhysicalDomain::TranslationalMechanical => "F",
            PhysicalDomain::RotationalMechanical => "tau",
            PhysicalDomain::Fluidic => "Q",
            PhysicalDomain::Thermal => "Qdot",
        }
    }
}

impl FromStr for PhysicalDomain {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "electrical" => Ok(PhysicalDomain::Electrical),
            "translational" | "translational_mechanical" => {
                Ok(PhysicalDomain::TranslationalMechanical)
            }
            "rotational" | "rotational_mechanical" => Ok(PhysicalDomain::RotationalMechanical),
            "fluidic" | "hydraulic" => Ok(PhysicalDomain::Fluidic),
            "thermal" => Ok(PhysicalDomain::Thermal),
            _ => Err(ModelError::UnknownDomain(s.to_string())),
        }
    }
}

impl fmt::Display for PhysicalDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub domain: PhysicalDomain,
    pub is_ground: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    AcrossSource,
    ThroughSource,
    DType,
    AType,
    TType,
    Transformer,
    Gyrator,
}

impl ElementKind {
    pub fn is_source(self) -> bool {
        matches!(self, ElementKind::AcrossSource | ElementKind::ThroughSource)
    }

    pub fn is_two_port(self) -> bool {
        matches!(self, ElementKind::Transformer | ElementKind::Gyrator)
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::AcrossSource => "across_source",
            ElementKind::ThroughSource => "through_source",
            ElementKind::DType => "d_type",
            ElementKind::AType => "a_type",
            ElementKind::TType => "t_type",
            ElementKind::Transformer => "transformer",
            ElementKind::Gyrator => "gyrator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn suffix(self) -> &'static str {
        match self {
            Side::A => "a",
            Side::B => "b",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminals {
    /// Positive through flows from the first node to the second.
    OnePort(String, String),
    TwoPort {
        a: (String, String),
        b: (String, String),
    },
}

impl Terminals {
    /// Edges contributed to the graph: one for a one-port, one per side for a two-port.
    pub fn edges(&self) -> Vec<(Option<Side>, &str, &str)> {
        match self {
            Terminals::OnePort(p, q) => vec![(None, p.as_str(), q.as_str())],
            Terminals::TwoPort { a, b } => vec![
                (Some(Side::A), a.0.as_str(), a.1.as_str()),
                (Some(Side::B), b.0.as_str(), b.1.as_str()),
            ],
        }
    }

    pub fn pair(&self, side: Option<Side>) -> (&str, &str) {
        match (self, side) {
            (Terminals::OnePort(p, q), _) => (p, q),
            (Terminals::TwoPort { a, .. }, None | Some(Side::A)) => (&a.0, &a.1),
            (Terminals::TwoPort { b, .. }, Some(Side::B)) => (&b.0, &b.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSignal {
    Step {
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// `(time, value)` pairs held constant until the next sample.
    SampledSeries { samples: Vec<(f64, f64)> },
}

fn unit() -> f64 {
    1.0
}

impl Default for SourceSignal {
    fn default() -> Self {
        SourceSignal::Step { amplitude: 1.0 }
    }
}

impl SourceSignal {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            SourceSignal::Step { amplitude } => *amplitude,
            SourceSignal::SampledSeries { samples } => {
                let mut v = samples.first().map(|s| s.1).unwrap_or(0.0);
                for &(ts, vs) in samples {
                    if ts <= t + 1e-12 * t.abs().max(1.0) {
                        v = vs;
                    } else {
                        break;
                    }
                }
                v
            }
        }
    }

    /// True when the signal is defined on the whole interval.
    pub fn covers(&self, t_first: f64, t_last: f64) -> bool {
        match self {
            SourceSignal::Step { .. } => true,
            SourceSignal::SampledSeries { samples } => match (samples.first(), samples.last()) {
                (Some(first), Some(last)) => {
                    let slack = 1e-12 * t_last.abs().max(1.0);
                    first.0 <= t_first + slack && last.0 >= t_last - slack
                }
                _ => false,
            },
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            SourceSignal::Step { amplitude } => amplitude.is_finite(),
            SourceSignal::SampledSeries { samples } => {
                !samples.is_empty()
                    && samples.iter().all(|s| s.0.is_finite() && s.1.is_finite())
                    && samples.windows(2).all(|w| w[0].0 < w[1].0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    pub kind: ElementKind,
    /// Resistance, capacitance or inductance analog, transformer ratio or gyration coefficient.
    /// Unused for sources.
    pub parameter: f64,
    pub terminals: Terminals,
    pub signal: Option<SourceSignal>,
}

impl Element {
    /// Source signal, defaulting to a unit step.
    pub fn signal(&self) -> SourceSignal {
        self.signal.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulation {
    pub dt: f64,
    pub horizon: f64,
}

impl Simulation {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub name: String,
    pub nodes: Vec<Node>,
    pub elements: Vec<Element>,
    /// Default time grid carried by the model file.
    pub simulation: Option<Simulation>,
}

impl SystemModel {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn is_ground(&self, id: &str) -> bool {
        self.node(id).is_some_and(|n| n.is_ground)
    }

    /// Source elements in declaration order; these are the model inputs.
    pub fn sources(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.kind.is_source())
    }

    pub fn domain_of(&self, element: &Element, side: Option<Side>) -> Option<PhysicalDomain> {
        let (p, _) = element.terminals.pair(side);
        self.node(p).map(|n| n.domain)
    }

    /// Parses either a linear-graph model or a bond-graph model (`"bondgraph": true`).
    pub fn from_json_str(text: &str) -> Result<SystemModel, ModelError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("bondgraph").and_then(|b| b.as_bool()) == Some(true) {
            let bg: crate::bondgraph::BondGraphModel = serde_json::from_value(value)?;
            return crate::bondgraph::bondgraph_to_lineargraph(&bg);
        }
        let raw: RawModel = serde_json::from_value(value)?;
        raw.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SystemModel, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SystemModel::from_json_str(&text)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: String,
    #[serde(default)]
    #[allow(dead_code)]
    bondgraph: bool,
    nodes: Vec<RawNode>,
    elements: Vec<RawElement>,
    simulation: Option<Simulation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    domain: String,
    #[serde(default)]
    ground: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    id: String,
    kind: ElementKind,
    parameter: Option<f64>,
    reciprocal: Option<f64>,
    terminals: RawTerminals,
    signal: Option<SourceSignal>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTerminals {
    Pair([String; 2]),
    Sides { a: [String; 2], b: [String; 2] },
}

/// Resolves `parameter` / `reciprocal` (exactly one may be given).
pub(crate) fn resolve_parameter(
    id: &str,
    parameter: Option<f64>,
    reciprocal: Option<f64>,
    required: bool,
) -> Result<f64, ModelError> {
    match (parameter, reciprocal) {
        (Some(_), Some(_)) => Err(ModelError::Element {
            id: id.to_string(),
            reason: "give either `parameter` or `reciprocal`, not both".into(),
        }),
        (Some(p), None) => Ok(p),
        (None, Some(r)) => Ok(1.0 / r),
        (None, None) if required => Err(ModelError::Element {
            id: id.to_string(),
            reason: "missing parameter".into(),
        }),
        (None, None) => Ok(0.0),
    }
}

impl RawModel {
    fn into_model(self) -> Result<SystemModel, ModelError> {
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| {
                Ok(Node {
                    domain: n.domain.parse()?,
                    id: n.id,
                    is_ground: n.ground,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let elements = self
            .elements
            .into_iter()
            .map(|e| {
                let parameter =
                    resolve_parameter(&e.id, e.parameter, e.reciprocal, !e.kind.is_source())?;
                let terminals = match (e.terminals, e.kind.is_two_port()) {
                    (RawTerminals::Pair([p, q]), false) => Terminals::OnePort(p, q),
                    (RawTerminals::Sides { a: [a1, a2], b: [b1, b2] }, true) => {
                        Terminals::TwoPort {
                            a: (a1, a2),
                            b: (b1, b2),
                        }
                    }
                    (_, two_port) => {
                        return Err(ModelError::Element {
                            id: e.id,
                            reason: if two_port {
                                "two-port terminals must be {\"a\": [..], \"b\": [..]}".into()
                            } else {
                                "one-port terminals must be a pair of node ids".into()
                            },
                        })
                    }
                };
                if e.signal.is_some() && !e.kind.is_source() {
                    return Err(ModelError::Element {
                        id: e.id,
                        reason: "only sources carry a signal".into(),
                    });
                }
                Ok(Element {
                    id: e.id,
                    kind: e.kind,
                    parameter,
                    terminals,
                    signal: e.signal,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(SystemModel {
            name: self.name,
            nodes,
            elements,
            simulation: self.simulation,
        })
    }
}

/// Index of node ids for quick lookups.
pub(crate) fn node_lookup(model: &SystemModel) -> HashMap<&str, usize> {
    model
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn views_per_domain() {
        assert_eq!(domain_view(PhysicalDomain::Electrical), View::Eulerian);
        assert_eq!(
            domain_view(PhysicalDomain::TranslationalMechanical),
            View::Lagrangian
        );
        assert_eq!(domain_view(PhysicalDomain::Thermal), View::Eulerian);
        assert_eq!(domain_view(PhysicalDomain::Fluidic), View::Eulerian);
        assert_eq!(
            domain_view(PhysicalDomain::RotationalMechanical),
            View::Lagrangian
        );
    }

    #[test]
    fn domain_names_round_trip() {
        for d in PhysicalDomain::ALL {
            assert_eq!(d.key().parse::<PhysicalDomain>().unwrap(), d);
        }
        assert!(matches!(
            "acoustic".parse::<PhysicalDomain>(),
            Err(ModelError::UnknownDomain(_))
        ));
    }

    #[test]
    fn step_and_sampled_signals() {
        let s = SourceSignal::Step { amplitude: 2.5 };
        assert_eq!(s.value_at(0.3), 2.5);
        let z = SourceSignal::SampledSeries {
            samples: vec![(0.0, 1.0), (0.5, 3.0), (1.0, -1.0)],
        };
        assert_eq!(z.value_at(0.2), 1.0);
        assert_eq!(z.value_at(0.5), 3.0);
        assert_eq!(z.value_at(0.99), 3.0);
        assert_eq!(z.value_at(2.0), -1.0);
        assert!(z.covers(0.1, 1.0));
        assert!(!z.covers(0.1, 1.5));
    }

    #[test]
    fn reciprocal_parameter() {
        let text = r#"{"name":"m","nodes":[{"id":"a","domain":"rotational"},{"id":"g","domain":"rotational","ground":true}],
            "elements":[{"id":"s","kind":"through_source","terminals":["g","a"]},
                        {"id":"b","kind":"d_type","reciprocal":4.0,"terminals":["a","g"]}]}"#;
        let m = SystemModel::from_json_str(text).unwrap();
        assert_eq!(m.elements[1].parameter, 0.25);
        assert_eq!(m.elements[0].signal(), SourceSignal::Step { amplitude: 1.0 });
        assert_eq!(m.nodes[1].domain, PhysicalDomain::RotationalMechanical);
    }

    #[test]
    fn rejects_missing_parameter_and_bad_terminals() {
        let text = r#"{"name":"m","nodes":[],"elements":[{"id":"R","kind":"d_type","terminals":["a","b"]}]}"#;
        assert!(matches!(
            SystemModel::from_json_str(text),
            Err(ModelError::Element { .. })
        ));
        let text = r#"{"name":"m","nodes":[],"elements":[{"id":"T","kind":"transformer","parameter":2,"terminals":["a","b"]}]}"#;
        assert!(matches!(
            SystemModel::from_json_str(text),
            Err(ModelError::Element { .. })
        ));
        let text = r#"{"name":"m","nodes":[{"id":"a","domain":"sonic"}],"elements":[]}"#;
        assert!(matches!(
            SystemModel::from_json_str(text),
            Err(ModelError::UnknownDomain(_))
        ));
    }
}
