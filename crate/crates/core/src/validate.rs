//! Structural checks on a `SystemModel`.

use std::collections::HashSet;
use std::fmt;

use crate::graph::DisjointSet;
use crate::model::{node_lookup, ElementKind, PhysicalDomain, SystemModel, Terminals};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    NoGround,
    MultipleGrounds,
    DisconnectedSubnet,
    AcrossSourceLoop,
    ThroughSourceCutset,
    ThermalTType,
    DuplicateId,
    UnknownNode,
    DomainMismatch,
    SelfLoop,
    BadParameter,
    BadSignal,
    NoSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    pub fn mentions(&self, text: &str) -> bool {
        self.issues.iter().any(|i| i.message.contains(text))
    }

    fn push(&mut self, kind: IssueKind, message: String) {
        self.issues.push(Issue { kind, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "ok");
        }
        for issue in &self.issues {
            writeln!(f, "{}", issue.message)?;
        }
        Ok(())
    }
}

/// Lists every violation of the model invariants. An empty report means well-formed.
pub fn validate_model(model: &SystemModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let lookup = node_lookup(model);

    let mut seen = HashSet::new();
    for n in &model.nodes {
        if !seen.insert(n.id.as_str()) {
            report.push(IssueKind::DuplicateId, format!("duplicate node id `{}`", n.id));
        }
    }
    let mut seen = HashSet::new();
    for e in &model.elements {
        if !seen.insert(e.id.as_str()) {
            report.push(IssueKind::DuplicateId, format!("duplicate element id `{}`", e.id));
        }
    }

    // Graph edges whose endpoints resolve, tagged with the element kind.
    let mut edges: Vec<(usize, usize, ElementKind, &str)> = Vec::new();
    for e in &model.elements {
        let mut resolved = true;
        for (side, p, q) in e.terminals.edges() {
            let side = side.map(|s| format!(" side {}", s.suffix())).unwrap_or_default();
            for id in [p, q] {
                if !lookup.contains_key(id) {
                    report.push(
                        IssueKind::UnknownNode,
                        format!("element {}{side} references unknown node `{id}`", e.id),
                    );
                    resolved = false;
                }
            }
            if p == q {
                report.push(
                    IssueKind::SelfLoop,
                    format!("element {}{side} has both terminals on `{p}`", e.id),
                );
                resolved = false;
            }
            if let (Some(&ip), Some(&iq)) = (lookup.get(p), lookup.get(q)) {
                if model.nodes[ip].domain != model.nodes[iq].domain {
                    report.push(
                        IssueKind::DomainMismatch,
                        format!(
                            "element {}{side} joins {} node `{p}` to {} node `{q}`",
                            e.id, model.nodes[ip].domain, model.nodes[iq].domain
                        ),
                    );
                }
            }
        }
        if resolved {
            for (_, p, q) in e.terminals.edges() {
                edges.push((lookup[p], lookup[q], e.kind, e.id.as_str()));
            }
        }

        let p = e.parameter;
        match e.kind {
            ElementKind::DType | ElementKind::AType | ElementKind::TType => {
                if !(p.is_finite() && p > 0.0) {
                    report.push(
                        IssueKind::BadParameter,
                        format!("element {} needs a positive finite parameter, got {p}", e.id),
                    );
                }
            }
            ElementKind::Transformer | ElementKind::Gyrator => {
                if !(p.is_finite() && p != 0.0) {
                    report.push(
                        IssueKind::BadParameter,
                        format!("element {} needs a nonzero finite parameter, got {p}", e.id),
                    );
                }
            }
            ElementKind::AcrossSource | ElementKind::ThroughSource => {
                if !e.signal().is_valid() {
                    report.push(
                        IssueKind::BadSignal,
                        format!("source {} has an invalid signal", e.id),
                    );
                }
            }
        }
        if e.kind == ElementKind::TType {
            if let Terminals::OnePort(t1, _) = &e.terminals {
                if model.node(t1).map(|n| n.domain) == Some(PhysicalDomain::Thermal) {
                    report.push(
                        IssueKind::ThermalTType,
                        format!("thermal TType element {} (no thermal inductance exists)", e.id),
                    );
                }
            }
        }
    }

    if model.sources().next().is_none() {
        report.push(IssueKind::NoSource, "no source element".to_string());
    }

    let n = model.nodes.len();
    if !model.nodes.iter().any(|n| n.is_ground) {
        report.push(IssueKind::NoGround, "no ground node".to_string());
    } else {
        let mut ds = DisjointSet::new(n);
        for &(p, q, _, _) in &edges {
            ds.union(p, q);
        }
        for comp in ds.components() {
            let grounds: Vec<&str> = comp
                .iter()
                .filter(|&&i| model.nodes[i].is_ground)
                .map(|&i| model.nodes[i].id.as_str())
                .collect();
            let names: Vec<&str> = comp.iter().map(|&i| model.nodes[i].id.as_str()).collect();
            match grounds.len() {
                0 => report.push(
                    IssueKind::DisconnectedSubnet,
                    format!("disconnected subnet without ground: {}", names.join(", ")),
                ),
                1 => {}
                _ => report.push(
                    IssueKind::MultipleGrounds,
                    format!("multiple grounds in one subnet: {}", grounds.join(", ")),
                ),
            }
        }
    }

    let mut across = DisjointSet::new(n);
    for &(p, q, kind, id) in &edges {
        if kind == ElementKind::AcrossSource && !across.union(p, q) {
            report.push(
                IssueKind::AcrossSourceLoop,
                format!("loop of AcrossSources closed by {id}"),
            );
        }
    }

    let mut without_through = DisjointSet::new(n);
    for &(p, q, kind, _) in &edges {
        if kind != ElementKind::ThroughSource {
            without_through.union(p, q);
        }
    }
    let cut: Vec<&str> = edges
        .iter()
        .filter(|&&(p, q, kind, _)| kind == ElementKind::ThroughSource && !without_through.same(p, q))
        .map(|&(_, _, _, id)| id)
        .collect();
    if !cut.is_empty() {
        report.push(
            IssueKind::ThroughSourceCutset,
            format!("cutset of ThroughSources: {}", cut.join(", ")),
        );
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn bundled_fixtures_are_clean() {
        for name in fixtures::NAMES {
            let m = fixtures::load(name).unwrap();
            let r = validate_model(&m);
            assert!(r.is_empty(), "{name}: {r}");
        }
    }

    #[test]
    fn empty_model_has_no_ground() {
        let m = SystemModel {
            name: "empty".into(),
            nodes: vec![],
            elements: vec![],
            simulation: None,
        };
        let r = validate_model(&m);
        assert!(r.mentions("no ground node"));
    }

    #[test]
    fn thermal_inductor_rejected() {
        let text = r#"{"name":"t","nodes":[{"id":"a","domain":"thermal"},{"id":"g","domain":"thermal","ground":true}],
          "elements":[{"id":"Q","kind":"through_source","terminals":["g","a"]},
                      {"id":"R","kind":"d_type","parameter":1,"terminals":["a","g"]},
                      {"id":"L","kind":"t_type","parameter":1,"terminals":["a","g"]}]}"#;
        let r = validate_model(&SystemModel::from_json_str(text).unwrap());
        assert!(r.has(IssueKind::ThermalTType));
        assert_eq!(r.issues.len(), 1);
    }

    #[test]
    fn two_grounds_in_one_subnet() {
        let text = r#"{"name":"t","nodes":[{"id":"a","domain":"electrical","ground":true},{"id":"g","domain":"electrical","ground":true}],
          "elements":[{"id":"V","kind":"across_source","terminals":["g","a"]}]}"#;
        let r = validate_model(&SystemModel::from_json_str(text).unwrap());
        assert!(r.mentions("multiple grounds in one subnet"));
    }

    #[test]
    fn source_loop_and_cutset() {
        let m = fixtures::load("malformed/across_source_loop").unwrap();
        assert!(validate_model(&m).has(IssueKind::AcrossSourceLoop));
        let m = fixtures::load("malformed/through_source_cutset").unwrap();
        let r = validate_model(&m);
        assert!(r.has(IssueKind::ThroughSourceCutset));
        assert!(r.mentions("I1") && r.mentions("I2"));
    }

    #[test]
    fn bad_parameters_reported() {
        let mut m = fixtures::load("electrical").unwrap();
        m.elements[1].parameter = -3.0;
        m.elements[3].parameter = f64::NAN;
        let r = validate_model(&m);
        assert_eq!(r.issues.iter().filter(|i| i.kind == IssueKind::BadParameter).count(), 2);
    }
}
