//! End-to-end helpers shared by the command line and the C interface.

use std::collections::BTreeMap;

use nalgebra::DVector;
use thiserror::Error;

use crate::derive::{derive, DeriveError, Derivation};
use crate::hfnmcf::{assemble, solve_with_tol, ConstraintSystem, SolveError, Solution, TimeGrid, Trajectories};
use crate::model::{ModelError, SystemModel};
use crate::net::{build_esn, reduced_incidence, EngineeringSystemNet, NetError};
use crate::oracle::{euler_integrate, rk4_integrate, OdeRun, OracleError};
use crate::tree::{build_normal_tree, NormalTree, TreeError};
use crate::validate::{validate_model, ValidationReport};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model is not well formed:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// 1 ill-formed model, 2 solver diagnosis, 3 I/O, 4 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Model(ModelError::Io { .. }) | Error::Io { .. } => 3,
            Error::Model(_) | Error::Invalid(_) => 1,
            Error::Solve(SolveError::Underdetermined { .. })
            | Error::Solve(SolveError::Inconsistent { .. })
            | Error::Solve(SolveError::Numerical { .. }) => 2,
            _ => 4,
        }
    }
}

pub fn check(model: &SystemModel) -> Result<(), Error> {
    let report = validate_model(model);
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(report))
    }
}

/// Validated model with its net and normal tree.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub model: SystemModel,
    pub esn: EngineeringSystemNet,
    pub tree: NormalTree,
}

pub fn analyze(model: SystemModel) -> Result<Analysis, Error> {
    check(&model)?;
    let esn = build_esn(&model)?;
    reduced_incidence(&esn)?;
    let tree = build_normal_tree(&model)?;
    Ok(Analysis { model, esn, tree })
}

impl Analysis {
    pub fn derivation(&self) -> Result<Derivation, Error> {
        Ok(derive(&self.model, &self.tree)?)
    }

    /// The model's own grid unless `dt` or `steps` override it.
    pub fn grid(&self, dt: Option<f64>, steps: Option<usize>) -> Result<TimeGrid, Error> {
        let sim = self.model.simulation;
        let dt = dt.or(sim.map(|s| s.dt));
        let Some(dt) = dt else {
            return Err(Error::Usage("no time step: pass --dt or add a simulation block".into()));
        };
        let steps = match (steps, sim) {
            (Some(k), _) => k,
            (None, Some(s)) => (s.horizon / dt).round() as usize,
            (None, None) => return Err(Error::Usage("no step count: pass --steps".into())),
        };
        Ok(TimeGrid::new(dt, steps)?)
    }

    pub fn constraint_system(&self, grid: TimeGrid, ics: &BTreeMap<String, f64>) -> Result<ConstraintSystem, Error> {
        Ok(assemble(&self.model, &self.esn, grid, ics)?)
    }

    pub fn solve(&self, grid: TimeGrid, ics: &BTreeMap<String, f64>, tol: f64) -> Result<Solution, Error> {
        Ok(solve_with_tol(&self.constraint_system(grid, ics)?, tol)?)
    }

    /// Oracle run over the element variables, Euler or RK4.
    pub fn simulate(
        &self,
        derivation: &Derivation,
        grid: TimeGrid,
        ics: &BTreeMap<String, f64>,
        method: Method,
    ) -> Result<Trajectories, Error> {
        let ss = &derivation.state_space;
        let x0 = initial_state(ss, ics)?;
        let inputs = ss
            .input_names
            .iter()
            .map(|id| self.model.element(id).expect("input element").signal())
            .collect();
        let run = OdeRun { ss, outputs: Some(&derivation.outputs), inputs, grid, x0 };
        Ok(match method {
            Method::Euler => euler_integrate(&run)?,
            Method::Rk4 => rk4_integrate(&run)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk4,
}

/// State vector from initial conditions keyed by state name or element id.
pub fn initial_state(ss: &crate::derive::StateSpace, ics: &BTreeMap<String, f64>) -> Result<DVector<f64>, Error> {
    let mut x0 = DVector::zeros(ss.order());
    for (key, &v) in ics {
        let i = ss
            .state_index(key)
            .ok_or_else(|| SolveError::UnknownInitialCondition(key.clone()))?;
        x0[i] = v;
    }
    Ok(x0)
}

/// Parses `name=value`.
pub fn parse_ic(text: &str) -> Result<(String, f64), String> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{text}`"))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn exit_codes() {
        let invalid = Error::Invalid(ValidationReport::default());
        assert_eq!(invalid.exit_code(), 1);
        let e = Error::Solve(SolveError::Underdetermined { variables: vec![] });
        assert_eq!(e.exit_code(), 2);
        let e = Error::Model(ModelError::Io {
            path: "x".into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "x"),
        });
        assert_eq!(e.exit_code(), 3);
        assert_eq!(Error::Usage("x".into()).exit_code(), 4);
    }

    #[test]
    fn grid_defaults_and_overrides() {
        let a = analyze(fixtures::load("electromechanical").unwrap()).unwrap();
        assert_eq!(a.grid(None, None).unwrap(), TimeGrid { dt: 1e-3, steps: 300 });
        assert_eq!(a.grid(Some(1e-4), None).unwrap().steps, 3000);
        assert_eq!(a.grid(None, Some(7)).unwrap().steps, 7);
    }

    #[test]
    fn ic_parsing() {
        assert_eq!(parse_ic("i_L1 = 0.5"), Ok(("i_L1".into(), 0.5)));
        assert!(parse_ic("x").is_err());
        assert!(parse_ic("x=abc").is_err());
    }

    #[test]
    fn initial_state_by_name_or_element() {
        let a = analyze(fixtures::load("electrical").unwrap()).unwrap();
        let ss = a.derivation().unwrap().state_space;
        let ics = BTreeMap::from([("C1".to_string(), 2.0), ("i_L2".to_string(), 3.0)]);
        assert_eq!(initial_state(&ss, &ics).unwrap().as_slice(), &[2.0, 0.0, 3.0]);
        let bad = BTreeMap::from([("R1".to_string(), 1.0)]);
        assert!(initial_state(&ss, &bad).is_err());
    }
}
