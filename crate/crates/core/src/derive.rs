//! State-space derivation by linear elimination over the element laws.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{ElementKind, SystemModel};
use crate::net::{build_esn, reduced_incidence, EngineeringSystemNet, NetError};
use crate::tree::NormalTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeriveError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("dependent energy storage in {}; not supported", elements.join(", "))]
    DependentStorage { elements: Vec<String> },
    #[error("state equation needs input derivatives (storage {} depends on a source)", elements.join(", "))]
    UnsupportedDerivativeFeedthrough { elements: Vec<String> },
    #[error("singular algebraic system; unsolvable variables: {}", variables.join(", "))]
    SingularAlgebraicSystem { variables: Vec<String> },
}

/// `ẋ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub state_names: Vec<String>,
    /// Element id of each state.
    pub state_elements: Vec<String>,
    /// Source element ids in declaration order.
    pub input_names: Vec<String>,
}

impl StateSpace {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names
            .iter()
            .position(|s| s == name)
            .or_else(|| self.state_elements.iter().position(|s| s == name))
    }

    /// A and B side by side as CSV, one row per state.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state");
        for s in &self.state_names {
            let _ = write!(out, ",A:{s}");
        }
        for u in &self.input_names {
            let _ = write!(out, ",B:{u}");
        }
        out.push('\n');
        for (i, s) in self.state_names.iter().enumerate() {
            out.push_str(s);
            for j in 0..self.a.ncols() {
                let _ = write!(out, ",{}", self.a[(i, j)] + 0.0);
            }
            for j in 0..self.b.ncols() {
                let _ = write!(out, ",{}", self.b[(i, j)] + 0.0);
            }
            out.push('\n');
        }
        out
    }
}

/// Element variables as functions of state and input: `v = P x + Q u`.
/// Labels are `U[capability]` then `y[node]` for non-ground nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMap {
    pub labels: Vec<String>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub state_space: StateSpace,
    pub outputs: OutputMap,
    /// One line per equation used in the elimination.
    pub laws: Vec<String>,
}

struct Row {
    tag: String,
    z: Vec<(usize, f64)>,
    x: Vec<(usize, f64)>,
    u: Vec<(usize, f64)>,
}

pub fn variable_labels(esn: &EngineeringSystemNet) -> Vec<String> {
    esn.capabilities
        .iter()
        .map(|c| format!("U[{}]", c.id))
        .chain(esn.non_ground_ids().into_iter().map(|n| format!("y[{n}]")))
        .collect()
}

fn describe(row: &Row, z_labels: &[String], x_labels: &[String], u_labels: &[String]) -> String {
    fn terms(out: &mut String, t: &[(usize, f64)], labels: &[String]) {
        if t.is_empty() {
            out.push_str(" 0");
        }
        for (i, &(k, c)) in t.iter().enumerate() {
            let sign = if c < 0.0 { "-" } else if i == 0 { "" } else { "+" };
            let mag = c.abs();
            if mag == 1.0 {
                let _ = write!(out, " {sign}{}", labels[k]);
            } else {
                let _ = write!(out, " {sign}{mag}*{}", labels[k]);
            }
        }
    }
    let mut s = format!("{}:", row.tag);
    terms(&mut s, &row.z, z_labels);
    s.push_str(" =");
    let mut rhs: Vec<(usize, f64)> = row.x.clone();
    let n = x_labels.len();
    rhs.extend(row.u.iter().map(|&(k, c)| (k + n, c)));
    let all: Vec<String> = x_labels.iter().chain(u_labels).cloned().collect();
    terms(&mut s, &rhs, &all);
    s
}

/// Derives `ẋ = A x + B u` and the element-variable map for a model and its normal tree.
pub fn derive(model: &SystemModel, tree: &NormalTree) -> Result<Derivation, DeriveError> {
    let needs_input_derivative: Vec<String> = tree
        .dependent_storage
        .iter()
        .filter(|d| d.involves_source)
        .map(|d| d.element.clone())
        .collect();
    if !needs_input_derivative.is_empty() {
        return Err(DeriveError::UnsupportedDerivativeFeedthrough {
            elements: needs_input_derivative,
        });
    }
    if tree.has_dependent_storage() {
        return Err(DeriveError::DependentStorage {
            elements: tree.dependent_storage.iter().map(|d| d.element.clone()).collect(),
        });
    }

    let esn = build_esn(model)?;
    let red = reduced_incidence(&esn)?;
    let nc = esn.capabilities.len();
    let ny = red.nrows();
    let states = &tree.state_variables;
    let ns = states.len();
    let inputs: Vec<String> = model.sources().map(|e| e.id.clone()).collect();
    let n = nc + ny + ns;

    let state_of = |element: &str| states.iter().position(|s| s.element == element);
    let input_of = |element: &str| inputs.iter().position(|s| s == element);
    let y_col = |p: usize| nc + p;
    let drop = |c: usize| -> Vec<(usize, f64)> {
        esn.capability_drop(c).into_iter().map(|(p, w)| (y_col(p), w)).collect()
    };
    let non_ground = esn.non_ground_ids();

    let mut rows: Vec<Row> = Vec::with_capacity(n);
    for (r, node) in non_ground.iter().enumerate() {
        let z = (0..nc).filter(|&c| red[(r, c)] != 0.0).map(|c| (c, red[(r, c)])).collect();
        rows.push(Row {
            tag: format!("continuity {node}"),
            z,
            x: vec![],
            u: vec![],
        });
    }
    for (c, cap) in esn.capabilities.iter().enumerate() {
        let e = model.element(&cap.element).expect("capability element");
        let p = e.parameter;
        let tag = format!("{} ({})", cap.id, e.kind.name());
        match e.kind {
            ElementKind::AcrossSource => {
                let z = drop(c).into_iter().map(|(k, w)| (k, -w)).collect();
                rows.push(Row { tag, z, x: vec![], u: vec![(input_of(&e.id).unwrap(), 1.0)] });
            }
            ElementKind::ThroughSource => {
                rows.push(Row { tag, z: vec![(c, 1.0)], x: vec![], u: vec![(input_of(&e.id).unwrap(), 1.0)] });
            }
            ElementKind::DType => {
                let mut z = vec![(c, 1.0)];
                z.extend(drop(c).into_iter().map(|(k, w)| (k, -w / p)));
                rows.push(Row { tag, z, x: vec![], u: vec![] });
            }
            ElementKind::AType => {
                let s = state_of(&e.id).expect("AType state");
                rows.push(Row { tag: tag.clone(), z: drop(c), x: vec![(s, 1.0)], u: vec![] });
                rows.push(Row { tag, z: vec![(c, 1.0), (nc + ny + s, -p)], x: vec![], u: vec![] });
            }
            ElementKind::TType => {
                let s = state_of(&e.id).expect("TType state");
                rows.push(Row { tag: tag.clone(), z: vec![(c, 1.0)], x: vec![(s, 1.0)], u: vec![] });
                let mut z = vec![(nc + ny + s, p)];
                z.extend(drop(c).into_iter().map(|(k, w)| (k, -w)));
                rows.push(Row { tag, z, x: vec![], u: vec![] });
            }
            ElementKind::Transformer => {
                rows.push(Row { tag, z: drop(c), x: vec![], u: vec![] });
            }
            ElementKind::Gyrator => {
                let (partner, sign) = match cap.side {
                    Some(crate::model::Side::A) => (format!("{}.b", e.id), -1.0),
                    _ => (format!("{}.a", e.id), 1.0),
                };
                let other = esn.capability_index(&partner).expect("gyrator partner");
                let mut z = drop(c);
                z.push((other, sign * p));
                rows.push(Row { tag, z, x: vec![], u: vec![] });
            }
        }
    }
    debug_assert_eq!(rows.len(), n);

    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut h = DMatrix::<f64>::zeros(n, ns);
    let mut j = DMatrix::<f64>::zeros(n, inputs.len());
    for (r, row) in rows.iter().enumerate() {
        for &(k, w) in &row.z {
            g[(r, k)] += w;
        }
        for &(k, w) in &row.x {
            h[(r, k)] += w;
        }
        for &(k, w) in &row.u {
            j[(r, k)] += w;
        }
    }

    let mut z_labels = variable_labels(&esn);
    z_labels.extend(states.iter().map(|s| format!("d/dt {}", s.name)));
    let x_labels: Vec<String> = states.iter().map(|s| s.name.clone()).collect();
    let u_labels: Vec<String> = inputs.iter().map(|s| format!("u[{s}]")).collect();
    let laws = rows.iter().map(|r| describe(r, &z_labels, &x_labels, &u_labels)).collect();

    if n > 0 {
        let svd = g.clone().svd(false, true);
        let smax: f64 = svd.singular_values.max();
        let tol = 1e-12 * smax * n as f64;
        if svd.singular_values.iter().any(|&s| s <= tol) {
            let vt = svd.v_t.as_ref().expect("right singular vectors");
            let mut hit = vec![false; n];
            for (k, &s) in svd.singular_values.iter().enumerate() {
                if s <= tol {
                    for i in 0..n {
                        if vt[(k, i)].abs() > 1e-8 {
                            hit[i] = true;
                        }
                    }
                }
            }
            return Err(DeriveError::SingularAlgebraicSystem {
                variables: (0..n).filter(|&i| hit[i]).map(|i| z_labels[i].clone()).collect(),
            });
        }
    }
    let lu = g.lu();
    let sol_x = lu.solve(&h).unwrap_or_else(|| DMatrix::zeros(n, ns));
    let sol_u = lu.solve(&j).unwrap_or_else(|| DMatrix::zeros(n, inputs.len()));

    let nv = nc + ny;
    let state_space = StateSpace {
        a: sol_x.rows(nv, ns).into_owned(),
        b: sol_u.rows(nv, ns).into_owned(),
        state_names: x_labels,
        state_elements: states.iter().map(|s| s.element.clone()).collect(),
        input_names: inputs,
    };
    let outputs = OutputMap {
        labels: z_labels[..nv].to_vec(),
        p: sol_x.rows(0, nv).into_owned(),
        q: sol_u.rows(0, nv).into_owned(),
    };
    Ok(Derivation {
        state_space,
        outputs,
        laws,
    })
}

/// State-space part of [`derive`].
pub fn derive_state_space(model: &SystemModel, tree: &NormalTree) -> Result<StateSpace, DeriveError> {
    derive(model, tree).map(|d| d.state_space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tree::build_normal_tree;

    fn ss(name: &str) -> StateSpace {
        let m = fixtures::load(name).unwrap();
        let t = build_normal_tree(&m).unwrap();
        derive_state_space(&m, &t).unwrap()
    }

    fn close(a: &DMatrix<f64>, b: &[f64]) {
        let g = DMatrix::from_row_slice(a.nrows(), a.ncols(), b);
        for (x, y) in a.iter().zip(g.iter()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-12), "{a} vs {g}");
        }
    }

    #[test]
    fn electrical_matrices() {
        let s = ss("electrical");
        let (r1, r2, r3, l1, l2, c1) = (200.0, 200.0, 220.0, 0.1, 0.15, 1e-5);
        close(
            &s.a,
            &[
                -1.0 / (r3 * c1), 1.0 / c1, -1.0 / c1,
                -1.0 / l1, -r1 / l1, 0.0,
                1.0 / l2, 0.0, -r2 / l2,
            ],
        );
        close(&s.b, &[0.0, 1.0 / l1, 0.0]);
        assert_eq!(s.input_names, ["V_s"]);
    }

    #[test]
    fn rotational_matrices() {
        let s = ss("rotational");
        let (j, k, b) = (0.5, 2.0, 0.5);
        close(&s.a, &[-b / j, -1.0 / j, k, 0.0]);
        close(&s.b, &[1.0 / j, 0.0]);
    }

    #[test]
    fn stateless_loop_exposes_current() {
        let m = SystemModel::from_json_str(
            r#"{"name":"vr","nodes":[{"id":"n","domain":"electrical"},{"id":"g","domain":"electrical","ground":true}],
            "elements":[{"id":"V","kind":"across_source","terminals":["g","n"],"signal":{"kind":"step","amplitude":6}},
                        {"id":"R","kind":"d_type","parameter":3,"terminals":["n","g"]}]}"#,
        )
        .unwrap();
        let d = derive(&m, &build_normal_tree(&m).unwrap()).unwrap();
        assert_eq!(d.state_space.order(), 0);
        let r = d.outputs.labels.iter().position(|l| l == "U[R]").unwrap();
        assert!((d.outputs.q[(r, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dependent_storage_rejected() {
        let m = fixtures::load("malformed/underdetermined").unwrap();
        let err = derive(&m, &build_normal_tree(&m).unwrap()).unwrap_err();
        assert_eq!(err, DeriveError::DependentStorage { elements: vec!["L1".into()] });
        let m = fixtures::load("malformed/inconsistent").unwrap();
        let err = derive(&m, &build_normal_tree(&m).unwrap()).unwrap_err();
        assert!(matches!(err, DeriveError::UnsupportedDerivativeFeedthrough { .. }));
    }

    #[test]
    fn laws_listed_per_equation() {
        let m = fixtures::load("electrical").unwrap();
        let d = derive(&m, &build_normal_tree(&m).unwrap()).unwrap();
        assert_eq!(d.laws.len(), 4 + 7 + 3);
        assert!(d.laws.iter().any(|l| l.starts_with("continuity V_S:")));
        assert!(d.laws.iter().any(|l| l.starts_with("R1 (d_type): U[R1] -0.005*y[V_S] +0.005*y[V_RL] = 0")), "{:#?}", d.laws);
    }

    #[test]
    fn gyrator_conserves_power() {
        let m = SystemModel::from_json_str(
            r#"{"name":"g","nodes":[{"id":"a","domain":"electrical"},{"id":"b","domain":"electrical"},
               {"id":"g","domain":"electrical","ground":true}],
            "elements":[{"id":"V","kind":"across_source","terminals":["g","a"]},
                        {"id":"X","kind":"gyrator","parameter":3,"terminals":{"a":["a","g"],"b":["b","g"]}},
                        {"id":"R","kind":"d_type","parameter":2,"terminals":["b","g"]}]}"#,
        )
        .unwrap();
        let d = derive(&m, &build_normal_tree(&m).unwrap()).unwrap();
        let q = &d.outputs.q;
        let at = |l: &str| q[(d.outputs.labels.iter().position(|x| x == l).unwrap(), 0)];
        // Side a at 1 V fixes the side b flow at 1/3, which returns through R.
        let (ua, ub, ya, yb) = (at("U[X.a]"), at("U[X.b]"), at("y[a]"), at("y[b]"));
        assert!((ua * ya + ub * yb).abs() < 1e-12);
        assert!((ub - 1.0 / 3.0).abs() < 1e-12, "{ub}");
        assert!((yb - 2.0 * at("U[R]")).abs() < 1e-12);
    }
}
