//! Time-stepped network flow feasibility problem over a uniform grid.
//!
//! Unknowns per step are the capability flows `U[k]` and the absolute across
//! values `y[k]` of non-ground buffers. Constraints are continuity, element
//! laws discretized with forward Euler, source impositions and initial
//! conditions. The system is square for well-posed models and is solved in one
//! sparse LU.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::derive::variable_labels;
use crate::model::{ElementKind, Side, SystemModel};
use crate::net::{reduced_incidence, EngineeringSystemNet, NetError};

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("initial condition `{0}` does not name a storage element or state")]
    UnknownInitialCondition(String),
    #[error("signal of {element} does not cover the time grid")]
    SignalCoverage { element: String },
    #[error("underdetermined: no defining equation for {}", variables.join(", "))]
    Underdetermined { variables: Vec<String> },
    #[error("inconsistent constraints: {}", rows.join(", "))]
    Inconsistent { rows: Vec<String> },
    #[error("solver residual {residual:e} exceeds tolerance")]
    Numerical { residual: f64 },
    #[error("labels differ: {0}")]
    LabelMismatch(String),
    #[error("time grids differ")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<TimeGrid, SolveError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SolveError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if steps < 2 {
            return Err(SolveError::InvalidGrid(format!("need at least 2 steps, got {steps}")));
        }
        Ok(TimeGrid { dt, steps })
    }

    /// Grid covering `horizon` with step `dt`.
    pub fn over(dt: f64, horizon: f64) -> Result<TimeGrid, SolveError> {
        TimeGrid::new(dt, (horizon / dt).round() as usize)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `k·dT` for `k = 1..=K`.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }
}

/// Flat index layout: step `k` holds `U[k]` then `y[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub capabilities: Vec<String>,
    pub nodes: Vec<String>,
    pub steps: usize,
}

impl VariableLayout {
    pub fn block(&self) -> usize {
        self.capabilities.len() + self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.block() * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flow of capability `c` at step `k` (1-based).
    pub fn u(&self, c: usize, k: usize) -> usize {
        (k - 1) * self.block() + c
    }

    /// Across value of non-ground node position `p` at step `k`.
    pub fn y(&self, p: usize, k: usize) -> usize {
        (k - 1) * self.block() + self.capabilities.len() + p
    }

    pub fn index_of(&self, label: &str, k: usize) -> Option<usize> {
        let inner = |prefix: &str| label.strip_prefix(prefix)?.strip_suffix(']');
        if let Some(id) = inner("U[") {
            return self.capabilities.iter().position(|c| c == id).map(|c| self.u(c, k));
        }
        let id = inner("y[")?;
        self.nodes.iter().position(|n| n == id).map(|p| self.y(p, k))
    }

    /// `U[id]@k` or `y[id]@k`.
    pub fn label(&self, index: usize) -> String {
        let (k, r) = (index / self.block() + 1, index % self.block());
        let nc = self.capabilities.len();
        if r < nc {
            format!("U[{}]@{k}", self.capabilities[r])
        } else {
            format!("y[{}]@{k}", self.nodes[r - nc])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowKind {
    Continuity,
    SourceU,
    SourceY,
    RLaw,
    LLaw,
    CLaw,
    TransformerLaw,
    GyratorLaw,
    InitU,
    InitY,
}

/// Where a constraint row came from. `step` is the law's own step, so an
/// inductor law coupling `k` and `k+1` is tagged `@k`. Initial conditions carry no step.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTag {
    pub kind: RowKind,
    pub subject: String,
    pub step: Option<usize>,
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}[{}]", self.kind, self.subject)?;
        if let Some(k) = self.step {
            write!(f, "@{k}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub layout: VariableLayout,
    pub grid: TimeGrid,
    /// `(row, col, value)`; duplicates are summed.
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub row_tags: Vec<RowTag>,
    /// Grid step whose unknowns each row defines; rows only touch steps `k` and `k−1`.
    pub row_block: Vec<usize>,
}

impl ConstraintSystem {
    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn cols(&self) -> usize {
        self.layout.len()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn count(&self, kind: RowKind) -> usize {
        self.row_tags.iter().filter(|t| t.kind == kind).count()
    }

    /// Triplet text: a size line, one `row col value` line per entry, then
    /// `rhs row value tag` lines.
    pub fn dump(&self) -> String {
        let mut out = format!("# rows {} cols {} nnz {}\n", self.rows(), self.cols(), self.triplets.len());
        for &(i, j, v) in &self.triplets {
            let _ = writeln!(out, "{i} {j} {v}");
        }
        for (i, (b, t)) in self.rhs.iter().zip(&self.row_tags).enumerate() {
            let _ = writeln!(out, "rhs {i} {b} {t}");
        }
        out
    }

    fn residual(&self, x: &[f64]) -> f64 {
        let mut r: Vec<f64> = self.rhs.iter().map(|b| -b).collect();
        for &(i, j, v) in &self.triplets {
            r[i] += v * x[j];
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-variable histories on a time grid; row `k−1` of `values` is step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    pub values: DMatrix<f64>,
}

impl Trajectories {
    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let j = self.labels.iter().position(|l| l == label)?;
        Some(self.values.column(j).iter().copied().collect())
    }

    pub fn last(&self, label: &str) -> Option<f64> {
        self.column(label)?.last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t}");
            for j in 0..self.values.ncols() {
                let _ = write!(out, ",{}", self.values[(k, j)]);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub trajectories: Trajectories,
    /// Infinity norm of `A z − b`.
    pub residual: f64,
}

fn storage_state_names(model: &SystemModel, id: &str) -> Vec<String> {
    let Some(e) = model.element(id) else {
        return vec![];
    };
    let Some(d) = model.domain_of(e, None) else {
        return vec![];
    };
    match e.kind {
        ElementKind::AType => vec![format!("{}_{id}", d.across_symbol())],
        ElementKind::TType => vec![format!("{}_{id}", d.through_symbol())],
        _ => vec![],
    }
}

/// Builds the constraint system. `ics` maps storage element ids or state names
/// to initial values; missing entries default to zero.
pub fn assemble(
    model: &SystemModel,
    esn: &EngineeringSystemNet,
    grid: TimeGrid,
    ics: &BTreeMap<String, f64>,
) -> Result<ConstraintSystem, SolveError> {
    let grid = TimeGrid::new(grid.dt, grid.steps)?;
    let red = reduced_incidence(esn)?;
    let layout = VariableLayout {
        capabilities: esn.capability_ids(),
        nodes: esn.non_ground_ids(),
        steps: grid.steps,
    };
    let (t_first, t_last) = (grid.time(1), grid.horizon());
    for e in model.sources() {
        if !e.signal().covers(t_first, t_last) {
            return Err(SolveError::SignalCoverage { element: e.id.clone() });
        }
    }

    let mut used = BTreeSet::new();
    let mut ic = |id: &str| -> f64 {
        let mut keys = vec![id.to_string()];
        keys.extend(storage_state_names(model, id));
        for key in keys {
            if let Some(&v) = ics.get(&key) {
                used.insert(key);
                return v;
            }
        }
        0.0
    };

    let nc = esn.capabilities.len();
    let drops: Vec<Vec<(usize, f64)>> = (0..nc).map(|c| esn.capability_drop(c)).collect();
    let elements: Vec<_> = esn
        .capabilities
        .iter()
        .map(|c| model.element(&c.element).expect("capability element"))
        .collect();
    let storage: Vec<usize> = (0..nc)
        .filter(|&c| matches!(elements[c].kind, ElementKind::AType | ElementKind::TType))
        .collect();
    let init: Vec<f64> = storage.iter().map(|&c| ic(&elements[c].id)).collect();
    for key in ics.keys() {
        if !used.contains(key) {
            return Err(SolveError::UnknownInitialCondition(key.clone()));
        }
    }

    let mut cs = ConstraintSystem {
        layout,
        grid,
        triplets: Vec::new(),
        rhs: Vec::new(),
        row_tags: Vec::new(),
        row_block: Vec::new(),
    };
    let ids = esn.capability_ids();
    let nodes = esn.non_ground_ids();
    let push = |cs: &mut ConstraintSystem, entries: Vec<(usize, f64)>, rhs: f64, kind, subject: &str, step, block| {
        let row = cs.rhs.len();
        cs.triplets.extend(entries.into_iter().map(|(j, v)| (row, j, v)));
        cs.rhs.push(rhs);
        cs.row_tags.push(RowTag { kind, subject: subject.to_string(), step });
        cs.row_block.push(block);
    };

    for k in 1..=grid.steps {
        let l = cs.layout.clone();
        let dy = |c: usize, k: usize, scale: f64| -> Vec<(usize, f64)> {
            drops[c].iter().map(|&(p, w)| (l.y(p, k), w * scale)).collect()
        };
        let t = grid.time(k);
        for (r, node) in nodes.iter().enumerate() {
            let entries = (0..nc).filter(|&c| red[(r, c)] != 0.0).map(|c| (l.u(c, k), red[(r, c)])).collect();
            push(&mut cs, entries, 0.0, RowKind::Continuity, node, Some(k), k);
        }
        for c in 0..nc {
            let e = elements[c];
            let p = e.parameter;
            match e.kind {
                ElementKind::ThroughSource => {
                    push(&mut cs, vec![(l.u(c, k), 1.0)], e.signal().value_at(t), RowKind::SourceU, &ids[c], Some(k), k);
                }
                ElementKind::AcrossSource => {
                    push(&mut cs, dy(c, k, -1.0), e.signal().value_at(t), RowKind::SourceY, &ids[c], Some(k), k);
                }
                ElementKind::DType => {
                    let mut entries = vec![(l.u(c, k), 1.0)];
                    entries.extend(dy(c, k, -1.0 / p));
                    push(&mut cs, entries, 0.0, RowKind::RLaw, &ids[c], Some(k), k);
                }
                ElementKind::Transformer => {
                    push(&mut cs, dy(c, k, 1.0), 0.0, RowKind::TransformerLaw, &ids[c], Some(k), k);
                }
                ElementKind::Gyrator => {
                    let (partner, sign) = match esn.capabilities[c].side {
                        Some(Side::A) => (format!("{}.b", e.id), -1.0),
                        _ => (format!("{}.a", e.id), 1.0),
                    };
                    let other = esn.capability_index(&partner).expect("gyrator partner");
                    let mut entries = dy(c, k, 1.0);
                    entries.push((l.u(other, k), sign * p));
                    push(&mut cs, entries, 0.0, RowKind::GyratorLaw, &ids[c], Some(k), k);
                }
                ElementKind::AType | ElementKind::TType => {}
            }
        }
        for (s, &c) in storage.iter().enumerate() {
            let e = elements[c];
            let p = e.parameter;
            match (e.kind, k) {
                (ElementKind::TType, 1) => {
                    push(&mut cs, vec![(l.u(c, 1), 1.0)], init[s], RowKind::InitU, &ids[c], None, 1);
                }
                (ElementKind::AType, 1) => {
                    push(&mut cs, dy(c, 1, 1.0), init[s], RowKind::InitY, &ids[c], None, 1);
                }
                (ElementKind::TType, _) => {
                    let mut entries = vec![(l.u(c, k), 1.0), (l.u(c, k - 1), -1.0)];
                    entries.extend(dy(c, k - 1, -grid.dt / p));
                    push(&mut cs, entries, 0.0, RowKind::LLaw, &ids[c], Some(k - 1), k);
                }
                _ => {
                    let mut entries = vec![(l.u(c, k - 1), grid.dt)];
                    entries.extend(dy(c, k, -p));
                    entries.extend(dy(c, k - 1, p));
                    push(&mut cs, entries, 0.0, RowKind::CLaw, &ids[c], Some(k - 1), k);
                }
            }
        }
    }
    Ok(cs)
}

pub fn solve(cs: &ConstraintSystem) -> Result<Solution, SolveError> {
    solve_with_tol(cs, DEFAULT_RESIDUAL_TOL)
}

/// Sparse LU solve with a residual check. `tol` is scaled by `max(1, ‖b‖∞)`.
pub fn solve_with_tol(cs: &ConstraintSystem, tol: f64) -> Result<Solution, SolveError> {
    let n = cs.cols();
    let scale = cs.rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if !cs.is_square() || n == 0 {
        return Err(diagnose(cs, tol * scale));
    }
    let (d, _) = block_matrices(cs, 1);
    if numerical_rank(&d) < d.ncols() {
        return Err(diagnose(cs, tol * scale));
    }
    let triplets: Vec<Triplet<usize, usize, f64>> =
        cs.triplets.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|_| SolveError::Numerical { residual: f64::INFINITY })?;
    let Ok(lu) = a.sp_lu() else {
        return Err(diagnose(cs, tol * scale));
    };
    let b = Mat::<f64>::from_fn(n, 1, |i, _| cs.rhs[i]);
    let x = lu.solve(&b);
    let z: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let residual = cs.residual(&z);
    if residual.is_nan() || residual > tol * scale {
        return match diagnose(cs, tol * scale) {
            SolveError::Numerical { .. } => Err(SolveError::Numerical { residual }),
            other => Err(other),
        };
    }
    let block = cs.layout.block();
    let values = DMatrix::from_fn(cs.layout.steps, block, |k, j| z[k * block + j]);
    let mut labels: Vec<String> = cs.layout.capabilities.iter().map(|c| format!("U[{c}]")).collect();
    labels.extend(cs.layout.nodes.iter().map(|p| format!("y[{p}]")));
    Ok(Solution {
        trajectories: Trajectories {
            times: cs.grid.times(),
            labels,
            values,
        },
        residual,
    })
}

/// Rows of block `k`: coefficients on step-`k` unknowns and on step-`k−1` unknowns.
fn block_matrices(cs: &ConstraintSystem, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let rows: Vec<usize> = (0..cs.rows()).filter(|&i| cs.row_block[i] == k).collect();
    let nb = cs.layout.block();
    let first = rows.first().copied().unwrap_or(0);
    let mut d = DMatrix::zeros(rows.len(), nb);
    let mut prev = DMatrix::zeros(rows.len(), nb);
    for &(i, j, v) in &cs.triplets {
        if cs.row_block[i] != k {
            continue;
        }
        let (step, col) = (j / nb + 1, j % nb);
        if step == k {
            d[(i - first, col)] += v;
        } else {
            prev[(i - first, col)] += v;
        }
    }
    (d, prev)
}

fn svd_tol(m: &DMatrix<f64>) -> f64 {
    let s = m.nrows().max(m.ncols()).max(1) as f64;
    1e-11 * s * m.iter().fold(1.0f64, |a, v| a.max(v.abs()))
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let tol = svd_tol(m);
    m.clone().singular_values().iter().filter(|&&s| s > tol).count()
}

/// Square zero-padded copy so that a thin SVD yields full null spaces.
fn padded(m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = m.nrows().max(m.ncols());
    let mut p = DMatrix::zeros(s, s);
    p.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    p
}

/// Walks the blocks in time order and reports the first rank or consistency failure.
pub fn diagnose(cs: &ConstraintSystem, tol: f64) -> SolveError {
    let nb = cs.layout.block();
    let mut z_prev = DVector::zeros(nb);
    for k in 1..=cs.layout.steps {
        let rows: Vec<usize> = (0..cs.rows()).filter(|&i| cs.row_block[i] == k).collect();
        let (d, prev) = block_matrices(cs, k);
        let r = DVector::from_iterator(rows.len(), rows.iter().map(|&i| cs.rhs[i])) - &prev * &z_prev;
        let (m, n) = (d.nrows(), d.ncols());
        let svd = padded(&d).svd(true, true);
        let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
        let stol = svd_tol(&d);
        let null: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&s| svd.singular_values[s] <= stol)
            .collect();

        let mut conflicting = BTreeSet::new();
        for &s in &null {
            let w = u.column(s);
            let proj: f64 = (0..m).map(|i| w[i] * r[i]).sum();
            if proj.abs() > tol {
                for i in 0..m {
                    if w[i].abs() > 1e-8 {
                        conflicting.insert(rows[i]);
                    }
                }
            }
        }
        if !conflicting.is_empty() {
            return SolveError::Inconsistent {
                rows: conflicting.into_iter().map(|i| cs.row_tags[i].to_string()).collect(),
            };
        }
        let mut free = BTreeSet::new();
        for &s in &null {
            for j in 0..n {
                if vt[(s, j)].abs() > 1e-8 {
                    free.insert(j);
                }
            }
        }
        if !free.is_empty() {
            return SolveError::Underdetermined {
                variables: free.into_iter().map(|j| cs.layout.label((k - 1) * nb + j)).collect(),
            };
        }
        let mut rp = DVector::zeros(m.max(n));
        rp.rows_mut(0, m).copy_from(&r);
        let z = svd.solve(&rp, stol).map(|z| z.rows(0, n).into_owned());
        match z {
            Ok(z) => z_prev = z,
            Err(_) => break,
        }
    }
    SolveError::Numerical { residual: f64::NAN }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub label: String,
    pub max_abs: f64,
    /// `max_abs` over the larger of the two peak magnitudes; 0 when both are zero.
    pub max_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub deviations: Vec<Deviation>,
    pub tol: f64,
}

impl ComparisonReport {
    pub fn max_rel(&self) -> f64 {
        self.deviations.iter().fold(0.0, |m, d| m.max(d.max_rel))
    }

    pub fn max_abs(&self) -> f64 {
        self.deviations.iter().fold(0.0, |m, d| m.max(d.max_abs))
    }

    pub fn passed(&self) -> bool {
        self.max_rel() <= self.tol
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,max_abs,max_rel,pass\n");
        for d in &self.deviations {
            let _ = writeln!(out, "{},{},{},{}", d.label, d.max_abs, d.max_rel, d.max_rel <= self.tol);
        }
        out
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let worst = self
            .deviations
            .iter()
            .max_by(|a, b| a.max_rel.total_cmp(&b.max_rel))
            .map(|d| d.label.as_str())
            .unwrap_or("-");
        write!(
            f,
            "{}: max relative deviation {:.3e} ({worst}), max absolute {:.3e}, tolerance {:.1e}",
            if self.passed() { "pass" } else { "fail" },
            self.max_rel(),
            self.max_abs(),
            self.tol
        )
    }
}

/// Per-variable deviation between two trajectory sets on the same grid.
pub fn compare(a: &Trajectories, b: &Trajectories, tol: f64) -> Result<ComparisonReport, SolveError> {
    let sa: BTreeSet<&String> = a.labels.iter().collect();
    let sb: BTreeSet<&String> = b.labels.iter().collect();
    if sa != sb {
        let diff: Vec<String> = sa.symmetric_difference(&sb).map(|s| s.to_string()).collect();
        return Err(SolveError::LabelMismatch(diff.join(", ")));
    }
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0))
    {
        return Err(SolveError::GridMismatch);
    }
    let mut deviations = Vec::new();
    for (ja, label) in a.labels.iter().enumerate() {
        let jb = b.labels.iter().position(|l| l == label).unwrap();
        let (ca, cb) = (a.values.column(ja), b.values.column(jb));
        let max_abs = ca.iter().zip(cb.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let peak = ca.amax().max(cb.amax());
        let max_rel = if peak == 0.0 { 0.0 } else { max_abs / peak };
        deviations.push(Deviation {
            label: label.clone(),
            max_abs,
            max_rel,
        });
    }
    Ok(ComparisonReport { deviations, tol })
}

/// Largest per-step violations of the power balance and of continuity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    pub tellegen: f64,
    pub continuity: f64,
}

pub fn check_invariants(esn: &EngineeringSystemNet, traj: &Trajectories) -> InvariantReport {
    let red = esn.reduced();
    let labels = variable_labels(esn);
    let nc = esn.capabilities.len();
    let cols: Vec<usize> = labels
        .iter()
        .map(|l| traj.labels.iter().position(|t| t == l).expect("trajectory label"))
        .collect();
    let mut report = InvariantReport { tellegen: 0.0, continuity: 0.0 };
    for k in 0..traj.times.len() {
        let u = DVector::from_iterator(nc, cols[..nc].iter().map(|&j| traj.values[(k, j)]));
        let y = DVector::from_iterator(cols.len() - nc, cols[nc..].iter().map(|&j| traj.values[(k, j)]));
        report.tellegen = report.tellegen.max(esn.total_power(&u, &y).abs());
        report.continuity = report.continuity.max((&red * &u).amax());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::net::build_esn;

    fn system(name: &str, steps: usize) -> (SystemModel, EngineeringSystemNet, ConstraintSystem) {
        let m = fixtures::load(name).unwrap();
        let esn = build_esn(&m).unwrap();
        let dt = m.simulation.unwrap().dt;
        let cs = assemble(&m, &esn, TimeGrid::new(dt, steps).unwrap(), &BTreeMap::new()).unwrap();
        (m, esn, cs)
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(0.1, 1).is_err());
        let g = TimeGrid::over(0.1, 1.5).unwrap();
        assert_eq!(g.steps, 15);
        assert_eq!(g.times()[0], 0.1);
    }

    #[test]
    fn layout_is_bijective() {
        let l = VariableLayout {
            capabilities: vec!["a".into(), "b".into()],
            nodes: vec!["n".into()],
            steps: 3,
        };
        let mut seen = BTreeSet::new();
        for k in 1..=3 {
            for c in 0..2 {
                assert!(seen.insert(l.u(c, k)));
            }
            assert!(seen.insert(l.y(0, k)));
        }
        assert_eq!(seen.len(), l.len());
        assert_eq!(l.label(l.y(0, 2)), "y[n]@2");
        assert_eq!(l.index_of("U[b]", 3), Some(l.u(1, 3)));
    }

    #[test]
    fn electrical_blocks() {
        let (_, _, cs) = system("electrical", 3);
        assert!(cs.is_square());
        assert_eq!(cs.count(RowKind::Continuity), 12);
        assert_eq!(cs.count(RowKind::RLaw), 9);
        assert_eq!(cs.count(RowKind::LLaw), 4);
        assert_eq!(cs.count(RowKind::CLaw), 2);
        assert_eq!(cs.count(RowKind::SourceY), 3);
        assert_eq!(cs.count(RowKind::InitU), 2);
        assert_eq!(cs.count(RowKind::InitY), 1);
        // R3 law at step 2 carries 1/220 against y[V_C1].
        let row = cs
            .row_tags
            .iter()
            .position(|t| t.to_string() == "RLaw[R3]@2")
            .unwrap();
        let col = cs.layout.index_of("y[V_C1]", 2).unwrap();
        let v: f64 = cs.triplets.iter().filter(|t| t.0 == row && t.1 == col).map(|t| t.2).sum();
        assert!((v + 1.0 / 220.0).abs() < 1e-15);
    }

    #[test]
    fn thermal_has_no_inductor_rows() {
        let (_, _, cs) = system("thermal", 5);
        assert_eq!(cs.count(RowKind::LLaw), 0);
        assert_eq!(cs.count(RowKind::InitU), 0);
        assert!(cs.is_square());
    }

    #[test]
    fn homogeneous_system_solves_to_zero() {
        let mut m = fixtures::load("electrical").unwrap();
        m.elements[0].signal = Some(crate::model::SourceSignal::Step { amplitude: 0.0 });
        let esn = build_esn(&m).unwrap();
        let cs = assemble(&m, &esn, TimeGrid::new(1e-4, 2).unwrap(), &BTreeMap::new()).unwrap();
        let s = solve(&cs).unwrap();
        assert!(s.trajectories.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn thermal_reaches_steady_state() {
        let (_, esn, cs) = system("thermal", 300);
        let t = solve(&cs).unwrap().trajectories;
        assert!((t.last("y[T_Ch]").unwrap() - 0.2).abs() < 1e-3);
        assert!((t.last("y[T_Ci]").unwrap() - 0.2).abs() < 1e-3);
        let inv = check_invariants(&esn, &t);
        assert!(inv.tellegen < 1e-9 && inv.continuity < 1e-10);
    }

    #[test]
    fn rotational_spring_carries_source_torque() {
        // Forward Euler at dT = 0.1 damps slower than the continuous system, so run 40 s.
        let (_, _, cs) = system("rotational", 400);
        let t = solve(&cs).unwrap().trajectories;
        assert!(t.last("y[w_J]").unwrap().abs() < 1e-3);
        assert!((t.last("U[K]").unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn initial_condition_overrides() {
        let m = fixtures::load("electrical").unwrap();
        let esn = build_esn(&m).unwrap();
        let grid = TimeGrid::new(1e-4, 3).unwrap();
        let ics = BTreeMap::from([("i_L1".to_string(), 0.5), ("C1".to_string(), 0.25)]);
        let t = solve(&assemble(&m, &esn, grid, &ics).unwrap()).unwrap().trajectories;
        assert_eq!(t.column("U[L1]").unwrap()[0], 0.5);
        assert!((t.column("y[V_C1]").unwrap()[0] - 0.25).abs() < 1e-15);
        let bad = BTreeMap::from([("R1".to_string(), 1.0)]);
        assert_eq!(
            assemble(&m, &esn, grid, &bad).unwrap_err(),
            SolveError::UnknownInitialCondition("R1".into())
        );
    }

    #[test]
    fn sampled_signal_must_cover_grid() {
        let mut m = fixtures::load("thermal").unwrap();
        m.elements[0].signal = Some(crate::model::SourceSignal::SampledSeries {
            samples: vec![(0.0, 1.0), (0.2, 0.0)],
        });
        let esn = build_esn(&m).unwrap();
        let err = assemble(&m, &esn, TimeGrid::new(0.1, 5).unwrap(), &BTreeMap::new()).unwrap_err();
        assert_eq!(err, SolveError::SignalCoverage { element: "Q_s".into() });
    }

    #[test]
    fn inconsistent_and_underdetermined() {
        let (_, _, cs) = system("malformed/inconsistent", 10);
        let SolveError::Inconsistent { rows } = solve(&cs).unwrap_err() else {
            panic!("expected Inconsistent");
        };
        assert_eq!(rows, ["Continuity[n1]@1", "SourceU[I]@1", "InitU[L]"]);
        let (_, _, cs) = system("malformed/underdetermined", 10);
        assert_eq!(
            solve(&cs).unwrap_err(),
            SolveError::Underdetermined { variables: vec!["y[n3]@1".into()] }
        );
    }

    #[test]
    fn compare_checks_labels_and_grid() {
        let (_, _, cs) = system("thermal", 4);
        let t = solve(&cs).unwrap().trajectories;
        let r = compare(&t, &t, 1e-12).unwrap();
        assert!(r.passed() && r.max_abs() == 0.0);
        let mut other = t.clone();
        other.labels[0] = "U[zz]".into();
        assert!(matches!(compare(&t, &other, 1e-6), Err(SolveError::LabelMismatch(_))));
        let mut other = t.clone();
        other.times[1] += 1.0;
        assert_eq!(compare(&t, &other, 1e-6).unwrap_err(), SolveError::GridMismatch);
    }

    #[test]
    fn csv_and_dump_formats() {
        let (_, _, cs) = system("rotational", 2);
        let dump = cs.dump();
        assert!(dump.starts_with("# rows 10 cols 10"));
        assert!(dump.contains("rhs 1 1 SourceU[tau_s]@1"));
        let t = solve(&cs).unwrap().trajectories;
        let csv = t.to_csv();
        assert!(csv.starts_with("time,U[tau_s],U[J],U[K],U[b],y[w_J]\n0.1,1,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
