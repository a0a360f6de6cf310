//! Normal-tree construction and state-variable selection.

use std::fmt;

use thiserror::Error;

use crate::graph::{forest_path, DisjointSet};
use crate::model::{node_lookup, ElementKind, Side, SystemModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("AcrossSource {element} closes a loop of AcrossSources ({})", loop_elements.join(", "))]
    AcrossSourceLoop {
        element: String,
        loop_elements: Vec<String>,
    },
    #[error("ThroughSource {element} is forced into the tree (cutset of ThroughSources)")]
    ThroughSourceCutset { element: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// A tree or link entry. Two-port sides are listed separately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub element: String,
    pub side: Option<Side>,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            Some(s) => write!(f, "{}.{}", self.element, s.suffix()),
            None => f.write_str(&self.element),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    AcrossOfATypeInTree,
    ThroughOfTTypeInCotree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVar {
    pub element: String,
    pub variable: StateKind,
    pub name: String,
}

/// Storage element whose variable depends on others: an AType left out of the
/// tree or a TType forced into it.
#[derive(Debug, Clone, PartialEq)]
pub struct DependentStorage {
    pub element: String,
    /// The dependency runs through a source, so the state equation would need a
    /// derivative of an input.
    pub involves_source: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalTree {
    /// In insertion order.
    pub tree_elements: Vec<Branch>,
    /// In declaration order.
    pub link_elements: Vec<Branch>,
    pub state_variables: Vec<StateVar>,
    pub dependent_storage: Vec<DependentStorage>,
}

impl NormalTree {
    pub fn has_dependent_storage(&self) -> bool {
        !self.dependent_storage.is_empty()
    }

    pub fn in_tree(&self, element: &str, side: Option<Side>) -> bool {
        self.tree_elements
            .iter()
            .any(|b| b.element == element && b.side == side)
    }

    /// `tree: a, b; links: c, d`
    pub fn summary(&self) -> String {
        let join = |v: &[Branch]| v.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ");
        format!(
            "tree: {}; links: {}",
            join(&self.tree_elements),
            join(&self.link_elements)
        )
    }
}

struct Edge {
    element: usize,
    side: Option<Side>,
    kind: ElementKind,
    from: usize,
    to: usize,
}

/// Greedy spanning-forest insertion in priority order: AcrossSources, ATypes,
/// transformer and gyrator sides, DTypes, TTypes, ThroughSources. Ties follow
/// declaration order; an element closing a loop is left out.
pub fn build_normal_tree(model: &SystemModel) -> Result<NormalTree, TreeError> {
    let lookup = node_lookup(model);
    let mut edges = Vec::new();
    for (i, e) in model.elements.iter().enumerate() {
        for (side, p, q) in e.terminals.edges() {
            let (Some(&from), Some(&to)) = (lookup.get(p), lookup.get(q)) else {
                return Err(TreeError::InvalidModel(format!(
                    "element {} references an unknown node",
                    e.id
                )));
            };
            edges.push(Edge {
                element: i,
                side,
                kind: e.kind,
                from,
                to,
            });
        }
    }
    let n = model.nodes.len();
    let mut ds = DisjointSet::new(n);
    let mut in_tree = vec![false; edges.len()];
    let mut order: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();

    let branch = |k: usize| Branch {
        element: model.elements[edges[k].element].id.clone(),
        side: edges[k].side,
    };
    let tree_pairs = |order: &[usize]| -> Vec<(usize, usize)> {
        order.iter().map(|&k| (edges[k].from, edges[k].to)).collect()
    };
    let path_kinds = |order: &[usize], from: usize, to: usize| -> Vec<usize> {
        forest_path(n, &tree_pairs(order), from, to)
            .unwrap_or_default()
            .into_iter()
            .map(|i| order[i])
            .collect()
    };

    let of_kind = |kind: ElementKind| -> Vec<usize> {
        let mut ks: Vec<usize> = (0..edges.len()).filter(|&k| edges[k].kind == kind).collect();
        ks.sort_by_key(|&k| edges[k].element);
        ks
    };

    for k in of_kind(ElementKind::AcrossSource) {
        if ds.union(edges[k].from, edges[k].to) {
            in_tree[k] = true;
            order.push(k);
        } else {
            let path = path_kinds(&order, edges[k].from, edges[k].to);
            let mut loop_elements: Vec<String> = path.iter().map(|&p| branch(p).to_string()).collect();
            loop_elements.push(branch(k).to_string());
            return Err(TreeError::AcrossSourceLoop {
                element: branch(k).to_string(),
                loop_elements,
            });
        }
    }

    for k in of_kind(ElementKind::AType) {
        if ds.union(edges[k].from, edges[k].to) {
            in_tree[k] = true;
            order.push(k);
        } else {
            let path = path_kinds(&order, edges[k].from, edges[k].to);
            dependent.push(DependentStorage {
                element: branch(k).element,
                involves_source: path.iter().any(|&p| edges[p].kind == ElementKind::AcrossSource),
            });
        }
    }

    // Two-ports in declaration order; sides a and b are adjacent in `edges`.
    let two_ports: Vec<usize> = (0..edges.len())
        .filter(|&k| edges[k].kind.is_two_port() && edges[k].side == Some(Side::A))
        .collect();
    for ka in two_ports {
        let kb = ka + 1;
        if edges[ka].kind == ElementKind::Transformer {
            for k in [ka, kb] {
                if ds.union(edges[k].from, edges[k].to) {
                    in_tree[k] = true;
                    order.push(k);
                    break;
                }
            }
        } else {
            let mut trial = ds.clone();
            if trial.union(edges[ka].from, edges[ka].to) && trial.union(edges[kb].from, edges[kb].to) {
                ds = trial;
                in_tree[ka] = true;
                in_tree[kb] = true;
                order.push(ka);
                order.push(kb);
            }
        }
    }

    for k in of_kind(ElementKind::DType) {
        if ds.union(edges[k].from, edges[k].to) {
            in_tree[k] = true;
            order.push(k);
        }
    }

    let mut trapped = Vec::new();
    for k in of_kind(ElementKind::TType) {
        if ds.union(edges[k].from, edges[k].to) {
            in_tree[k] = true;
            order.push(k);
            trapped.push(k);
        }
    }

    for k in of_kind(ElementKind::ThroughSource) {
        if ds.union(edges[k].from, edges[k].to) {
            return Err(TreeError::ThroughSourceCutset {
                element: branch(k).element,
            });
        }
    }

    for k in trapped {
        let involves_source = of_kind(ElementKind::ThroughSource)
            .into_iter()
            .any(|s| path_kinds(&order, edges[s].from, edges[s].to).contains(&k));
        dependent.push(DependentStorage {
            element: branch(k).element,
            involves_source,
        });
    }

    let tree_elements: Vec<Branch> = order.iter().map(|&k| branch(k)).collect();
    let link_elements: Vec<Branch> = (0..edges.len()).filter(|&k| !in_tree[k]).map(branch).collect();

    let mut state_variables = Vec::new();
    for (k, edge) in edges.iter().enumerate() {
        let e = &model.elements[edge.element];
        let domain = model.nodes[edge.from].domain;
        if edge.kind == ElementKind::AType && in_tree[k] {
            state_variables.push(StateVar {
                element: e.id.clone(),
                variable: StateKind::AcrossOfATypeInTree,
                name: format!("{}_{}", domain.across_symbol(), e.id),
            });
        }
    }
    for (k, edge) in edges.iter().enumerate() {
        let e = &model.elements[edge.element];
        let domain = model.nodes[edge.from].domain;
        if edge.kind == ElementKind::TType && !in_tree[k] {
            state_variables.push(StateVar {
                element: e.id.clone(),
                variable: StateKind::ThroughOfTTypeInCotree,
                name: format!("{}_{}", domain.through_symbol(), e.id),
            });
        }
    }

    Ok(NormalTree {
        tree_elements,
        link_elements,
        state_variables,
        dependent_storage: dependent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn names(v: &[Branch]) -> Vec<String> {
        v.iter().map(|b| b.to_string()).collect()
    }

    #[test]
    fn electrical_tree() {
        let t = build_normal_tree(&fixtures::load("electrical").unwrap()).unwrap();
        assert_eq!(names(&t.tree_elements), ["V_s", "C1", "R1", "R2"]);
        assert_eq!(names(&t.link_elements), ["L1", "L2", "R3"]);
        let states: Vec<_> = t.state_variables.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(states, ["V_C1", "i_L1", "i_L2"]);
        assert!(!t.has_dependent_storage());
    }

    #[test]
    fn translational_tree_summary() {
        let t = build_normal_tree(&fixtures::load("translational").unwrap()).unwrap();
        assert_eq!(t.summary(), "tree: m1, m2, b2; links: F_s, b1, k1, k2");
        let states: Vec<_> = t.state_variables.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(states, ["V_m1", "V_m2", "F_k1", "F_k2"]);
    }

    #[test]
    fn electromechanical_tree_takes_electrical_side() {
        let t = build_normal_tree(&fixtures::load("electromechanical").unwrap()).unwrap();
        assert_eq!(names(&t.tree_elements), ["V_s", "J", "M.a", "R"]);
        assert_eq!(names(&t.link_elements), ["L", "M.b", "B"]);
    }

    #[test]
    fn parallel_across_sources() {
        let err = build_normal_tree(&fixtures::load("malformed/across_source_loop").unwrap()).unwrap_err();
        assert_eq!(
            err,
            TreeError::AcrossSourceLoop {
                element: "V2".into(),
                loop_elements: vec!["V1".into(), "V2".into()],
            }
        );
    }

    #[test]
    fn through_source_cutset() {
        let err = build_normal_tree(&fixtures::load("malformed/through_source_cutset").unwrap()).unwrap_err();
        assert!(matches!(err, TreeError::ThroughSourceCutset { .. }));
    }

    #[test]
    fn dependent_storage_flags() {
        let t = build_normal_tree(&fixtures::load("malformed/underdetermined").unwrap()).unwrap();
        assert_eq!(
            t.dependent_storage,
            vec![DependentStorage {
                element: "L1".into(),
                involves_source: false
            }]
        );
        let t = build_normal_tree(&fixtures::load("malformed/inconsistent").unwrap()).unwrap();
        assert_eq!(
            t.dependent_storage,
            vec![DependentStorage {
                element: "L".into(),
                involves_source: true
            }]
        );
    }

    #[test]
    fn capacitor_across_voltage_source_needs_input_derivative() {
        let m = SystemModel::from_json_str(
            r#"{"name":"c","nodes":[{"id":"a","domain":"electrical"},{"id":"g","domain":"electrical","ground":true}],
            "elements":[{"id":"V","kind":"across_source","terminals":["g","a"]},
                        {"id":"C","kind":"a_type","parameter":1,"terminals":["a","g"]}]}"#,
        )
        .unwrap();
        let t = build_normal_tree(&m).unwrap();
        assert_eq!(t.dependent_storage[0].element, "C");
        assert!(t.dependent_storage[0].involves_source);
    }

    #[test]
    fn gyrator_both_or_neither() {
        // Side a would close a loop through V, so neither side enters the tree.
        let m = SystemModel::from_json_str(
            r#"{"name":"g","nodes":[{"id":"a","domain":"electrical"},{"id":"b","domain":"electrical"},
               {"id":"g","domain":"electrical","ground":true}],
            "elements":[{"id":"V","kind":"across_source","terminals":["g","a"]},
                        {"id":"C","kind":"a_type","parameter":1,"terminals":["b","g"]},
                        {"id":"X","kind":"gyrator","parameter":3,"terminals":{"a":["a","g"],"b":["b","g"]}},
                        {"id":"R","kind":"d_type","parameter":1,"terminals":["a","b"]}]}"#,
        )
        .unwrap();
        let t = build_normal_tree(&m).unwrap();
        assert!(!t.in_tree("X", Some(Side::A)));
        assert!(!t.in_tree("X", Some(Side::B)));
    }
}
