//! Bond-graph input and its conversion to the linear-graph netlist.
//!
//! Junctions holding a common across value (0-junctions in Eulerian domains,
//! 1-junctions in Lagrangian domains) become nodes. The other junction type
//! carries a common through value and becomes a series chain of elements.

use std::collections::{BTreeMap, HashMap};

use serde::Deserialize;

use crate::graph::DisjointSet;
use crate::model::{
    domain_view, resolve_parameter, Element, ElementKind, ModelError, Node, PhysicalDomain,
    Simulation, SourceSignal, SystemModel, Terminals, View,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
pub enum BgKind {
    Se,
    Sf,
    R,
    C,
    I,
    TF,
    GY,
}

impl BgKind {
    fn is_source(self) -> bool {
        matches!(self, BgKind::Se | BgKind::Sf)
    }

    fn is_two_port(self) -> bool {
        matches!(self, BgKind::TF | BgKind::GY)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BgElement {
    pub id: String,
    pub kind: BgKind,
    pub parameter: Option<f64>,
    pub reciprocal: Option<f64>,
    pub signal: Option<SourceSignal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum JunctionKind {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Junction {
    pub id: String,
    pub kind: JunctionKind,
    pub domain: String,
    /// Node name when the junction becomes a node.
    pub node: Option<String>,
    /// Names of the intermediate nodes when the junction becomes a series chain.
    pub chain_nodes: Option<Vec<String>>,
}

/// Power bond; positive power flows `from` → `to`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bond {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondGraphModel {
    pub name: String,
    #[serde(default)]
    pub bondgraph: bool,
    /// Ground node name per domain key.
    #[serde(default)]
    pub grounds: BTreeMap<String, String>,
    pub elements: Vec<BgElement>,
    pub junctions: Vec<Junction>,
    pub bonds: Vec<Bond>,
    pub simulation: Option<Simulation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// Bond points into the junction.
    In,
    /// Bond points out of the junction.
    Out,
}

#[derive(Debug, Clone, Copy)]
struct Attachment {
    element: usize,
    group: usize,
    dir: Dir,
    bond: usize,
}

fn unsupported(msg: impl Into<String>) -> ModelError {
    ModelError::UnsupportedJunctionTopology(msg.into())
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidBondGraph(msg.into())
}

/// Converts a bond graph to the equivalent linear-graph `SystemModel`.
pub fn bondgraph_to_lineargraph(bg: &BondGraphModel) -> Result<SystemModel, ModelError> {
    let domains = bg
        .junctions
        .iter()
        .map(|j| j.domain.parse::<PhysicalDomain>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut ground_names: HashMap<PhysicalDomain, String> = HashMap::new();
    for (key, name) in &bg.grounds {
        ground_names.insert(key.parse()?, name.clone());
    }

    let junction_index: HashMap<&str, usize> = bg
        .junctions
        .iter()
        .enumerate()
        .map(|(i, j)| (j.id.as_str(), i))
        .collect();
    let element_index: HashMap<&str, usize> = bg
        .elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();
    if junction_index.len() != bg.junctions.len() || element_index.len() != bg.elements.len() {
        return Err(invalid("duplicate junction or element id"));
    }
    if let Some(j) = bg.junctions.iter().find(|j| element_index.contains_key(j.id.as_str())) {
        return Err(invalid(format!("`{}` names both a junction and an element", j.id)));
    }

    let holds_node = |j: usize| -> bool {
        matches!(
            (bg.junctions[j].kind, domain_view(domains[j])),
            (JunctionKind::Zero, View::Eulerian) | (JunctionKind::One, View::Lagrangian)
        )
    };

    // Merge directly bonded junctions of the same kind.
    let nj = bg.junctions.len();
    let mut merge = DisjointSet::new(nj);
    let mut cross_links: Vec<(usize, usize, usize)> = Vec::new();
    let mut attachments: Vec<Attachment> = Vec::new();
    for (bi, bond) in bg.bonds.iter().enumerate() {
        let from_j = junction_index.get(bond.from.as_str()).copied();
        let to_j = junction_index.get(bond.to.as_str()).copied();
        let from_e = element_index.get(bond.from.as_str()).copied();
        let to_e = element_index.get(bond.to.as_str()).copied();
        match (from_j, to_j, from_e, to_e) {
            (Some(a), Some(b), _, _) => {
                if domains[a] != domains[b] {
                    return Err(unsupported(format!(
                        "bond {} -> {} joins junctions of different domains",
                        bond.from, bond.to
                    )));
                }
                if bg.junctions[a].kind == bg.junctions[b].kind {
                    merge.union(a, b);
                } else {
                    cross_links.push((a, b, bi));
                }
            }
            (Some(j), None, None, Some(e)) => attachments.push(Attachment {
                element: e,
                group: j,
                dir: Dir::Out,
                bond: bi,
            }),
            (None, Some(j), Some(e), None) => attachments.push(Attachment {
                element: e,
                group: j,
                dir: Dir::In,
                bond: bi,
            }),
            _ => {
                return Err(invalid(format!(
                    "bond {} -> {} must join an element and a junction or two junctions",
                    bond.from, bond.to
                )))
            }
        }
    }
    for a in &mut attachments {
        a.group = merge.find(a.group);
    }

    // Groups of merged junctions, keyed by representative, in declaration order.
    let mut groups: Vec<usize> = Vec::new();
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for j in 0..nj {
        let r = merge.find(j);
        if !members.contains_key(&r) {
            groups.push(r);
        }
        members.entry(r).or_default().push(j);
    }

    let mut nodes: Vec<Node> = Vec::new();
    let mut group_node: HashMap<usize, String> = HashMap::new();
    let mut used_grounds: Vec<PhysicalDomain> = Vec::new();
    let ground_of = |d: PhysicalDomain, used: &mut Vec<PhysicalDomain>| -> String {
        if !used.contains(&d) {
            used.push(d);
        }
        ground_names
            .get(&d)
            .cloned()
            .unwrap_or_else(|| format!("{}_ground", d.key()))
    };
    for &g in &groups {
        if holds_node(g) {
            let ms = &members[&g];
            let name = ms
                .iter()
                .find_map(|&j| bg.junctions[j].node.clone())
                .unwrap_or_else(|| bg.junctions[ms[0]].id.clone());
            group_node.insert(g, name);
        }
    }

    // Terminal placement for each element port: (element, port index) -> (t1, t2).
    let mut placement: HashMap<(usize, usize), (String, String, PhysicalDomain)> = HashMap::new();
    let port_of = |a: &Attachment| -> Result<usize, ModelError> {
        let e = &bg.elements[a.element];
        if e.kind.is_two_port() {
            // Power enters on port 1 and leaves on port 2.
            Ok(if a.dir == Dir::Out { 0 } else { 1 })
        } else {
            Ok(0)
        }
    };
    // Whether the bond direction matches the element's natural orientation.
    let natural = |a: &Attachment| -> bool {
        let e = &bg.elements[a.element];
        if e.kind.is_two_port() {
            true
        } else if e.kind.is_source() {
            a.dir == Dir::In
        } else {
            a.dir == Dir::Out
        }
    };
    // Port 2 of a two-port and sources are placed source-like: flow enters t2.
    let source_like = |a: &Attachment| -> bool {
        let e = &bg.elements[a.element];
        e.kind.is_source() || (e.kind.is_two_port() && a.dir == Dir::In)
    };

    for &g in &groups {
        let domain = domains[g];
        let mut attached: Vec<&Attachment> = attachments.iter().filter(|a| a.group == g).collect();
        attached.sort_by_key(|a| a.bond);

        if let Some(name) = group_node.get(&g) {
            nodes.push(Node {
                id: name.clone(),
                domain,
                is_ground: false,
            });
            for a in attached {
                let ground = ground_of(domain, &mut used_grounds);
                let (mut t1, mut t2) = if source_like(a) {
                    (ground, name.clone())
                } else {
                    (name.clone(), ground)
                };
                if !natural(a) {
                    std::mem::swap(&mut t1, &mut t2);
                }
                placement.insert((a.element, port_of(a)?), (t1, t2, domain));
            }
            continue;
        }

        // Series chain: find the node ends.
        let ms = &members[&g];
        let mut ends: Vec<(usize, Dir, usize)> = Vec::new();
        for &(x, y, bi) in &cross_links {
            let (rx, ry) = (merge.find(x), merge.find(y));
            if rx == g {
                ends.push((ry, Dir::Out, bi));
            } else if ry == g {
                ends.push((rx, Dir::In, bi));
            }
        }
        ends.sort_by_key(|e| e.2);
        let jid = &bg.junctions[ms[0]].id;
        let name_of = |grp: usize| -> Result<String, ModelError> {
            group_node.get(&grp).cloned().ok_or_else(|| {
                unsupported(format!("junction {jid} is bonded to another series junction"))
            })
        };
        let ground = ground_of(domain, &mut used_grounds);
        let (a_end, b_end) = match ends.as_slice() {
            [] => (ground.clone(), ground.clone()),
            [(n, Dir::In, _)] => (name_of(*n)?, ground.clone()),
            [(n, Dir::Out, _)] => (ground.clone(), name_of(*n)?),
            [(n1, d1, _), (n2, d2, _)] if d1 != d2 && n1 != n2 => {
                if *d1 == Dir::In {
                    (name_of(*n1)?, name_of(*n2)?)
                } else {
                    (name_of(*n2)?, name_of(*n1)?)
                }
            }
            [_, _] => {
                return Err(unsupported(format!(
                    "junction {jid} needs one bond in from a node and one bond out to a node"
                )))
            }
            _ => {
                return Err(unsupported(format!(
                    "junction {jid} joins {} nodes; a series junction can join at most two",
                    ends.len()
                )))
            }
        };
        if attached.is_empty() {
            return Err(unsupported(format!("junction {jid} carries no elements")));
        }
        let given: Vec<String> = ms
            .iter()
            .filter_map(|&j| bg.junctions[j].chain_nodes.clone())
            .flatten()
            .collect();
        let needed = attached.len() - 1;
        let inner: Vec<String> = if given.is_empty() {
            (1..=needed).map(|i| format!("{jid}.{i}")).collect()
        } else if given.len() == needed {
            given
        } else {
            return Err(invalid(format!(
                "junction {jid} has {} elements in series and needs {needed} chain_nodes, got {}",
                attached.len(),
                given.len()
            )));
        };
        for n in &inner {
            nodes.push(Node {
                id: n.clone(),
                domain,
                is_ground: false,
            });
        }
        let mut points = vec![a_end];
        points.extend(inner);
        points.push(b_end);
        for (i, a) in attached.iter().enumerate() {
            let (mut t1, mut t2) = (points[i].clone(), points[i + 1].clone());
            if !natural(a) {
                std::mem::swap(&mut t1, &mut t2);
            }
            placement.insert((a.element, port_of(a)?), (t1, t2, domain));
        }
    }

    for d in &used_grounds {
        nodes.push(Node {
            id: ground_names
                .get(d)
                .cloned()
                .unwrap_or_else(|| format!("{}_ground", d.key())),
            domain: *d,
            is_ground: true,
        });
    }

    let mut elements = Vec::with_capacity(bg.elements.len());
    for (i, e) in bg.elements.iter().enumerate() {
        let bonds: Vec<&Attachment> = attachments.iter().filter(|a| a.element == i).collect();
        let expected = if e.kind.is_two_port() { 2 } else { 1 };
        if bonds.len() != expected {
            return Err(invalid(format!(
                "element {} has {} bonds, expected {expected}",
                e.id,
                bonds.len()
            )));
        }
        if e.kind.is_two_port() && bonds[0].dir == bonds[1].dir {
            return Err(invalid(format!(
                "two-port {} needs one bond in (port 1) and one bond out (port 2)",
                e.id
            )));
        }
        let p = resolve_parameter(&e.id, e.parameter, e.reciprocal, !e.kind.is_source())?;
        let signal = if e.kind.is_source() {
            e.signal.clone()
        } else if e.signal.is_some() {
            return Err(invalid(format!("only sources carry a signal ({})", e.id)));
        } else {
            None
        };
        if e.kind.is_two_port() {
            let (a1, a2, da) = placement[&(i, 0)].clone();
            let (s1, s2, db) = placement[&(i, 1)].clone();
            let (kind, parameter) = two_port_mapping(e.kind, domain_view(da), domain_view(db), p);
            elements.push(Element {
                id: e.id.clone(),
                kind,
                parameter,
                terminals: Terminals::TwoPort {
                    a: (a1, a2),
                    b: (s2, s1),
                },
                signal: None,
            });
        } else {
            let (t1, t2, d) = placement[&(i, 0)].clone();
            let view = domain_view(d);
            let (kind, parameter) = match (e.kind, view) {
                (BgKind::Se, View::Eulerian) | (BgKind::Sf, View::Lagrangian) => {
                    (ElementKind::AcrossSource, 0.0)
                }
                (BgKind::Sf, View::Eulerian) | (BgKind::Se, View::Lagrangian) => {
                    (ElementKind::ThroughSource, 0.0)
                }
                (BgKind::R, View::Eulerian) => (ElementKind::DType, p),
                (BgKind::R, View::Lagrangian) => (ElementKind::DType, 1.0 / p),
                (BgKind::C, View::Eulerian) | (BgKind::I, View::Lagrangian) => {
                    (ElementKind::AType, p)
                }
                (BgKind::I, View::Eulerian) | (BgKind::C, View::Lagrangian) => {
                    (ElementKind::TType, p)
                }
                (BgKind::TF | BgKind::GY, _) => unreachable!("two-ports handled above"),
            };
            elements.push(Element {
                id: e.id.clone(),
                kind,
                parameter,
                terminals: Terminals::OnePort(t1, t2),
                signal,
            });
        }
    }

    Ok(SystemModel {
        name: bg.name.clone(),
        nodes,
        elements,
        simulation: bg.simulation,
    })
}

/// Linear-graph two-port equivalent of a bond-graph TF or GY with modulus `m`,
/// given the view on port 1 (side a) and port 2 (side b).
pub fn two_port_mapping(kind: BgKind, a: View, b: View, m: f64) -> (ElementKind, f64) {
    use View::{Eulerian as E, Lagrangian as L};
    match (kind, a, b) {
        (BgKind::TF, E, E) => (ElementKind::Transformer, m),
        (BgKind::TF, L, L) => (ElementKind::Transformer, 1.0 / m),
        (BgKind::TF, E, L) => (ElementKind::Gyrator, -m),
        (BgKind::TF, L, E) => (ElementKind::Gyrator, -1.0 / m),
        (BgKind::GY, E, E) => (ElementKind::Gyrator, -m),
        (BgKind::GY, L, L) => (ElementKind::Gyrator, -1.0 / m),
        (BgKind::GY, E, L) => (ElementKind::Transformer, m),
        (BgKind::GY, L, E) => (ElementKind::Transformer, 1.0 / m),
        _ => panic!("two_port_mapping called with a one-port kind"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SystemModel, ModelError> {
        SystemModel::from_json_str(text)
    }

    #[test]
    fn effort_source_and_resistor_on_one_junction() {
        let m = parse(
            r#"{"name":"loop","bondgraph":true,"grounds":{"electrical":"g"},
            "elements":[{"id":"V","kind":"Se"},{"id":"R","kind":"R","parameter":5}],
            "junctions":[{"id":"j","kind":"1","domain":"electrical"}],
            "bonds":[{"from":"V","to":"j"},{"from":"j","to":"R"}]}"#,
        )
        .unwrap();
        assert_eq!(m.nodes.len(), 2);
        assert_eq!(m.nodes[0].id, "j.1");
        assert!(m.nodes[1].is_ground);
        assert_eq!(m.elements[0].kind, ElementKind::AcrossSource);
        assert_eq!(
            m.elements[0].terminals,
            Terminals::OnePort("g".into(), "j.1".into())
        );
        assert_eq!(m.elements[1].kind, ElementKind::DType);
        assert_eq!(
            m.elements[1].terminals,
            Terminals::OnePort("j.1".into(), "g".into())
        );
    }

    #[test]
    fn lagrangian_mapping_swaps_roles() {
        let m = parse(
            r#"{"name":"mech","bondgraph":true,
            "elements":[{"id":"F","kind":"Se"},{"id":"m","kind":"I","parameter":3},
                        {"id":"k","kind":"C","parameter":0.5},{"id":"b","kind":"R","parameter":4},
                        {"id":"v","kind":"Sf"}],
            "junctions":[{"id":"j","kind":"1","domain":"translational","node":"x"}],
            "bonds":[{"from":"F","to":"j"},{"from":"j","to":"m"},{"from":"j","to":"k"},
                     {"from":"j","to":"b"},{"from":"v","to":"j"}]}"#,
        )
        .unwrap();
        let kinds: Vec<_> = m.elements.iter().map(|e| (e.kind, e.parameter)).collect();
        assert_eq!(
            kinds,
            vec![
                (ElementKind::ThroughSource, 0.0),
                (ElementKind::AType, 3.0),
                (ElementKind::TType, 0.5),
                (ElementKind::DType, 0.25),
                (ElementKind::AcrossSource, 0.0),
            ]
        );
        assert_eq!(m.nodes[1].id, "translational_ground");
    }

    #[test]
    fn reversed_bond_flips_orientation() {
        let m = parse(
            r#"{"name":"r","bondgraph":true,"grounds":{"fluidic":"g"},
            "elements":[{"id":"Q","kind":"Sf"},{"id":"R","kind":"R","parameter":1}],
            "junctions":[{"id":"j","kind":"0","domain":"fluidic","node":"p"}],
            "bonds":[{"from":"Q","to":"j"},{"from":"R","to":"j"}]}"#,
        )
        .unwrap();
        assert_eq!(m.elements[1].terminals, Terminals::OnePort("g".into(), "p".into()));
    }

    #[test]
    fn unknown_domain_is_reported() {
        let err = parse(
            r#"{"name":"x","bondgraph":true,"elements":[{"id":"V","kind":"Se"}],
            "junctions":[{"id":"j","kind":"1","domain":"magnetic"}],
            "bonds":[{"from":"V","to":"j"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::UnknownDomain(d) if d == "magnetic"));
    }

    #[test]
    fn series_junction_with_three_nodes_is_unsupported() {
        let err = parse(
            r#"{"name":"x","bondgraph":true,
            "elements":[{"id":"R","kind":"R","parameter":1}],
            "junctions":[{"id":"s","kind":"1","domain":"electrical"},
                         {"id":"a","kind":"0","domain":"electrical"},
                         {"id":"b","kind":"0","domain":"electrical"},
                         {"id":"c","kind":"0","domain":"electrical"}],
            "bonds":[{"from":"a","to":"s"},{"from":"s","to":"b"},{"from":"s","to":"c"},
                     {"from":"s","to":"R"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::UnsupportedJunctionTopology(_)));
    }

    #[test]
    fn same_kind_junctions_merge() {
        let m = parse(
            r#"{"name":"x","bondgraph":true,"grounds":{"electrical":"g"},
            "elements":[{"id":"I","kind":"Sf"},{"id":"C","kind":"C","parameter":1},
                        {"id":"R","kind":"R","parameter":2}],
            "junctions":[{"id":"a","kind":"0","domain":"electrical","node":"n"},
                         {"id":"b","kind":"0","domain":"electrical"}],
            "bonds":[{"from":"I","to":"a"},{"from":"a","to":"b"},{"from":"b","to":"C"},
                     {"from":"a","to":"R"}]}"#,
        )
        .unwrap();
        assert_eq!(m.nodes.len(), 2);
        assert!(m.elements.iter().skip(1).all(|e| e.terminals == Terminals::OnePort("n".into(), "g".into())));
    }

    #[test]
    fn two_port_table() {
        use View::{Eulerian as E, Lagrangian as L};
        assert_eq!(two_port_mapping(BgKind::TF, E, E, 4.0), (ElementKind::Transformer, 4.0));
        assert_eq!(two_port_mapping(BgKind::TF, L, L, 4.0), (ElementKind::Transformer, 0.25));
        assert_eq!(two_port_mapping(BgKind::TF, E, L, 4.0), (ElementKind::Gyrator, -4.0));
        assert_eq!(two_port_mapping(BgKind::GY, E, L, 4.0), (ElementKind::Transformer, 4.0));
        assert_eq!(two_port_mapping(BgKind::GY, L, E, 4.0), (ElementKind::Transformer, 0.25));
        assert_eq!(two_port_mapping(BgKind::GY, E, E, 4.0), (ElementKind::Gyrator, -4.0));
    }

    #[test]
    fn element_with_two_bonds_is_rejected() {
        let err = parse(
            r#"{"name":"x","bondgraph":true,
            "elements":[{"id":"V","kind":"Se"},{"id":"R","kind":"R","parameter":1}],
            "junctions":[{"id":"j","kind":"1","domain":"electrical"}],
            "bonds":[{"from":"V","to":"j"},{"from":"j","to":"R"},{"from":"j","to":"V"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::InvalidBondGraph(_)));
    }
}
