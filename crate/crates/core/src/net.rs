//! Engineering system net: buffers (nodes), capabilities (elements) and the
//! weighted incidence matrices between them.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{domain_view, node_lookup, ElementKind, Side, SystemModel, Terminals, View};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("reduced incidence is rank deficient; floating nodes: {}", nodes.join(", "))]
    RankDeficient { nodes: Vec<String> },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    InjectPowerAcrossImposed,
    InjectPowerThroughImposed,
    DissipatePower,
    StorePotentialEnergy,
    StoreKineticEnergy,
    TransformPower,
    GyratePower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capability {
    pub id: String,
    pub element: String,
    /// Set for the two capabilities of a gyrator.
    pub side: Option<Side>,
    pub kind: ElementKind,
    pub process: Process,
    /// (buffer index, weight) pairs with positive weights.
    pub pulls: Vec<(usize, f64)>,
    pub injects: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineeringSystemNet {
    pub buffers: Vec<String>,
    pub grounds: Vec<bool>,
    pub capabilities: Vec<Capability>,
    pub m_plus: DMatrix<f64>,
    pub m_minus: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marking {
    pub q_b: DVector<f64>,
    pub q_e: DVector<f64>,
}

impl EngineeringSystemNet {
    /// `M = M⁺ − M⁻`.
    pub fn m(&self) -> DMatrix<f64> {
        &self.m_plus - &self.m_minus
    }

    pub fn capability_ids(&self) -> Vec<String> {
        self.capabilities.iter().map(|c| c.id.clone()).collect()
    }

    pub fn capability_index(&self, id: &str) -> Option<usize> {
        self.capabilities.iter().position(|c| c.id == id)
    }

    pub fn buffer_index(&self, id: &str) -> Option<usize> {
        self.buffers.iter().position(|b| b == id)
    }

    /// Indices of non-ground buffers, in buffer order.
    pub fn non_ground(&self) -> Vec<usize> {
        (0..self.buffers.len()).filter(|&i| !self.grounds[i]).collect()
    }

    pub fn non_ground_ids(&self) -> Vec<String> {
        self.non_ground().into_iter().map(|i| self.buffers[i].clone()).collect()
    }

    /// `M` with ground rows removed, without the rank check.
    pub fn reduced(&self) -> DMatrix<f64> {
        let m = self.m();
        let rows = self.non_ground();
        DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
    }

    /// Position of each buffer among the non-ground buffers.
    pub fn y_positions(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.grounds
            .iter()
            .map(|&g| {
                (!g).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    /// Across drop seen by capability `c`, `((−M)ᵀ y)_c`, as sparse coefficients
    /// over non-ground positions. For a transformer this is `drop_a − n·drop_b`.
    pub fn capability_drop(&self, c: usize) -> Vec<(usize, f64)> {
        let pos = self.y_positions();
        let mut out = Vec::new();
        for (i, p) in pos.into_iter().enumerate() {
            let w = self.m_plus[(i, c)] - self.m_minus[(i, c)];
            if let (Some(p), true) = (p, w != 0.0) {
                out.push((p, -w));
            }
        }
        out
    }

    /// Element power `Σ U_ψ · ((−M)ᵀ y)_ψ` for flows `u` and non-ground across values `y`.
    pub fn total_power(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let drops = -self.reduced().transpose() * y;
        u.dot(&drops)
    }
}

fn process_for(kind: ElementKind, view: View) -> Process {
    match (kind, view) {
        (ElementKind::AcrossSource, _) => Process::InjectPowerAcrossImposed,
        (ElementKind::ThroughSource, _) => Process::InjectPowerThroughImposed,
        (ElementKind::DType, _) => Process::DissipatePower,
        (ElementKind::AType, View::Eulerian) | (ElementKind::TType, View::Lagrangian) => {
            Process::StorePotentialEnergy
        }
        (ElementKind::TType, View::Eulerian) | (ElementKind::AType, View::Lagrangian) => {
            Process::StoreKineticEnergy
        }
        (ElementKind::Transformer, _) => Process::TransformPower,
        (ElementKind::Gyrator, _) => Process::GyratePower,
    }
}

/// Builds the net: one buffer per node, one capability per element (two for a gyrator).
/// Columns follow element declaration order, rows node declaration order.
pub fn build_esn(model: &SystemModel) -> Result<EngineeringSystemNet, NetError> {
    let lookup = node_lookup(model);
    if lookup.len() != model.nodes.len() {
        return Err(NetError::InvalidModel("duplicate node id".into()));
    }
    let mut ids = HashSet::new();
    for e in &model.elements {
        if !ids.insert(e.id.as_str()) {
            return Err(NetError::InvalidModel(format!("duplicate element id `{}`", e.id)));
        }
        if !e.parameter.is_finite() {
            return Err(NetError::InvalidModel(format!("element {} has a non-finite parameter", e.id)));
        }
        for (_, p, q) in e.terminals.edges() {
            for id in [p, q] {
                if !lookup.contains_key(id) {
                    return Err(NetError::InvalidModel(format!(
                        "element {} references unknown node `{id}`",
                        e.id
                    )));
                }
            }
            if p == q {
                return Err(NetError::InvalidModel(format!("element {} is a self loop", e.id)));
            }
        }
    }

    let ground = |i: usize| model.nodes[i].is_ground;
    let mut capabilities = Vec::new();
    for e in &model.elements {
        let view = model
            .domain_of(e, None)
            .map(domain_view)
            .unwrap_or(View::Eulerian);
        let mut cap = |id: String, side: Option<Side>, entries: Vec<(usize, f64)>| {
            let mut pulls = Vec::new();
            let mut injects = Vec::new();
            for (node, w) in entries {
                if w > 0.0 {
                    injects.push((node, w));
                } else if w < 0.0 {
                    pulls.push((node, -w));
                }
            }
            capabilities.push(Capability {
                id,
                element: e.id.clone(),
                side,
                kind: e.kind,
                process: process_for(e.kind, view),
                pulls,
                injects,
            });
        };
        match &e.terminals {
            Terminals::OnePort(p, q) => {
                let (ip, iq) = (lookup[p.as_str()], lookup[q.as_str()]);
                let mut entries = vec![(ip, -1.0), (iq, 1.0)];
                // A source crossing the system boundary only touches its non-ground terminal.
                if e.kind.is_source() && ground(ip) != ground(iq) {
                    entries.retain(|&(n, _)| !ground(n));
                }
                cap(e.id.clone(), None, entries);
            }
            Terminals::TwoPort { a, b } => {
                let (a1, a2) = (lookup[a.0.as_str()], lookup[a.1.as_str()]);
                let (b1, b2) = (lookup[b.0.as_str()], lookup[b.1.as_str()]);
                if e.kind == ElementKind::Transformer {
                    let n = e.parameter;
                    cap(e.id.clone(), None, vec![(a1, -1.0), (a2, 1.0), (b1, n), (b2, -n)]);
                } else {
                    cap(format!("{}.a", e.id), Some(Side::A), vec![(a1, -1.0), (a2, 1.0)]);
                    cap(format!("{}.b", e.id), Some(Side::B), vec![(b1, -1.0), (b2, 1.0)]);
                }
            }
        }
    }

    let (nb, nc) = (model.nodes.len(), capabilities.len());
    let mut m_plus = DMatrix::zeros(nb, nc);
    let mut m_minus = DMatrix::zeros(nb, nc);
    for (c, cap) in capabilities.iter().enumerate() {
        for &(n, w) in &cap.injects {
            m_plus[(n, c)] += w;
        }
        for &(n, w) in &cap.pulls {
            m_minus[(n, c)] += w;
        }
    }
    Ok(EngineeringSystemNet {
        buffers: model.nodes.iter().map(|n| n.id.clone()).collect(),
        grounds: model.nodes.iter().map(|n| n.is_ground).collect(),
        capabilities,
        m_plus,
        m_minus,
    })
}

/// `M` without ground rows. Fails when the rows are linearly dependent, which
/// happens when part of the net floats without a ground.
pub fn reduced_incidence(esn: &EngineeringSystemNet) -> Result<DMatrix<f64>, NetError> {
    let red = esn.reduced();
    let r = red.nrows();
    if r == 0 {
        return Ok(red);
    }
    let gram = &red * red.transpose();
    let eig = gram.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-10 * scale;
    let rows = esn.non_ground();
    let mut floating = vec![false; r];
    let mut deficient = false;
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= tol {
            deficient = true;
            for (i, f) in floating.iter_mut().enumerate() {
                if eig.eigenvectors[(i, k)].abs() > 1e-8 {
                    *f = true;
                }
            }
        }
    }
    if deficient {
        let nodes = (0..r)
            .filter(|&i| floating[i])
            .map(|i| esn.buffers[rows[i]].clone())
            .collect();
        return Err(NetError::RankDeficient { nodes });
    }
    Ok(red)
}

/// One firing step: `Q_B' = Q_B + M⁺U⁺ΔT − M⁻U⁻ΔT`, `Q_E' = Q_E − U⁺ΔT + U⁻ΔT`.
pub fn esn_step(
    esn: &EngineeringSystemNet,
    q: &Marking,
    u_minus: &DVector<f64>,
    u_plus: &DVector<f64>,
    dt: f64,
) -> Result<Marking, NetError> {
    let nc = esn.capabilities.len();
    let nb = esn.buffers.len();
    if u_minus.len() != nc || u_plus.len() != nc || q.q_e.len() != nc || q.q_b.len() != nb {
        return Err(NetError::DimensionMismatch(format!(
            "expected {nb} buffers and {nc} capabilities, got Q_B {}, Q_E {}, U- {}, U+ {}",
            q.q_b.len(),
            q.q_e.len(),
            u_minus.len(),
            u_plus.len()
        )));
    }
    let q_b = &q.q_b + (&esn.m_plus * u_plus) * dt - (&esn.m_minus * u_minus) * dt;
    let q_e = &q.q_e - u_plus * dt + u_minus * dt;
    Ok(Marking { q_b, q_e })
}

/// Matrix as CSV with a header row of column labels and a label per row.
pub fn matrix_csv(m: &DMatrix<f64>, rows: &[String], cols: &[String]) -> String {
    let mut out = String::from("buffer");
    for c in cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        out.push_str(r);
        for j in 0..m.ncols() {
            let _ = write!(out, ",{}", m[(i, j)] + 0.0);
        }
        out.push('\n');
    }
    out
}

/// Nonzero entries as `row col value` lines (0-based indices).
pub fn matrix_triplets(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{i} {j} {v}");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn electrical_net_shape() {
        let esn = build_esn(&fixtures::load("electrical").unwrap()).unwrap();
        assert_eq!(esn.buffers.len(), 5);
        assert_eq!(esn.capabilities.len(), 7);
        let red = reduced_incidence(&esn).unwrap();
        assert_eq!(red.shape(), (4, 7));
        assert!(esn.m_plus.iter().all(|&v| v >= 0.0));
        assert!(esn.m_minus.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn column_sums() {
        let esn = build_esn(&fixtures::load("electrical").unwrap()).unwrap();
        let m = esn.m();
        for (c, cap) in esn.capabilities.iter().enumerate() {
            let col = m.column(c);
            if cap.kind.is_source() {
                assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 1);
            } else {
                assert_eq!(col.sum(), 0.0);
            }
        }
    }

    #[test]
    fn single_source_and_resistor() {
        let m = SystemModel::from_json_str(
            r#"{"name":"t","nodes":[{"id":"n1","domain":"electrical"},{"id":"g","domain":"electrical","ground":true}],
            "elements":[{"id":"V","kind":"across_source","terminals":["g","n1"]},
                        {"id":"R","kind":"d_type","parameter":2,"terminals":["n1","g"]}]}"#,
        )
        .unwrap();
        let red = reduced_incidence(&build_esn(&m).unwrap()).unwrap();
        assert_eq!(red, DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
    }

    #[test]
    fn processes_follow_view() {
        let esn = build_esn(&fixtures::load("translational").unwrap()).unwrap();
        let m1 = &esn.capabilities[esn.capability_index("m1").unwrap()];
        assert_eq!(m1.process, Process::StoreKineticEnergy);
        let k1 = &esn.capabilities[esn.capability_index("k1").unwrap()];
        assert_eq!(k1.process, Process::StorePotentialEnergy);
        let esn = build_esn(&fixtures::load("electrical").unwrap()).unwrap();
        assert_eq!(esn.capabilities[3].process, Process::StorePotentialEnergy);
        assert_eq!(esn.capabilities[0].process, Process::InjectPowerAcrossImposed);
    }

    #[test]
    fn step_dimension_mismatch() {
        let esn = build_esn(&fixtures::load("rotational").unwrap()).unwrap();
        let q = Marking {
            q_b: DVector::zeros(2),
            q_e: DVector::zeros(4),
        };
        let bad = DVector::zeros(3);
        let ok = DVector::zeros(4);
        assert!(matches!(
            esn_step(&esn, &q, &bad, &ok, 0.1),
            Err(NetError::DimensionMismatch(_))
        ));
        assert_eq!(esn_step(&esn, &q, &ok, &ok, 0.1).unwrap(), q);
    }

    #[test]
    fn gyrator_has_two_capabilities() {
        let m = SystemModel::from_json_str(
            r#"{"name":"g","nodes":[{"id":"a","domain":"electrical"},{"id":"b","domain":"electrical"},
               {"id":"g","domain":"electrical","ground":true}],
            "elements":[{"id":"V","kind":"across_source","terminals":["g","a"]},
                        {"id":"X","kind":"gyrator","parameter":3,"terminals":{"a":["a","g"],"b":["b","g"]}},
                        {"id":"R","kind":"d_type","parameter":1,"terminals":["b","g"]}]}"#,
        )
        .unwrap();
        let esn = build_esn(&m).unwrap();
        assert_eq!(esn.capability_ids(), vec!["V", "X.a", "X.b", "R"]);
    }

    #[test]
    fn csv_and_triplets() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.5, 2.0]);
        let csv = matrix_csv(&m, &["r1".into(), "r2".into()], &["c1".into(), "c2".into()]);
        assert_eq!(csv, "buffer,c1,c2\nr1,1,0\nr2,-0.5,2\n");
        assert_eq!(matrix_triplets(&m), "0 0 1\n1 0 -0.5\n1 1 2\n");
    }
}
