//! Fixed-step reference integrators for `ẋ = A x + B u` and the DC operating point.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::derive::{OutputMap, StateSpace};
use crate::hfnmcf::{TimeGrid, Trajectories};
use crate::model::SourceSignal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("A is singular; no unique DC operating point")]
    SingularA,
}

/// One integration run. Element variables are reconstructed through `outputs`
/// when given; otherwise the trajectories hold the states.
#[derive(Debug, Clone)]
pub struct OdeRun<'a> {
    pub ss: &'a StateSpace,
    pub outputs: Option<&'a OutputMap>,
    /// One signal per input, in `ss.input_names` order.
    pub inputs: Vec<SourceSignal>,
    pub grid: TimeGrid,
    pub x0: DVector<f64>,
}

impl OdeRun<'_> {
    fn check(&self) -> Result<(), OracleError> {
        let (n, m) = (self.ss.a.nrows(), self.ss.b.ncols());
        if self.ss.a.ncols() != n || self.ss.b.nrows() != n {
            return Err(OracleError::DimensionMismatch(format!(
                "A is {}x{}, B is {}x{}",
                n,
                self.ss.a.ncols(),
                self.ss.b.nrows(),
                m
            )));
        }
        if self.x0.len() != n {
            return Err(OracleError::DimensionMismatch(format!("x0 has {} entries for {n} states", self.x0.len())));
        }
        if self.inputs.len() != m {
            return Err(OracleError::DimensionMismatch(format!("{} signals for {m} inputs", self.inputs.len())));
        }
        if let Some(o) = self.outputs {
            if o.p.ncols() != n || o.q.ncols() != m || o.p.nrows() != o.labels.len() || o.q.nrows() != o.labels.len() {
                return Err(OracleError::DimensionMismatch("output map does not fit the state space".into()));
            }
        }
        Ok(())
    }

    fn u(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|s| s.value_at(t)))
    }

    fn f(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        &self.ss.a * x + &self.ss.b * self.u(t)
    }

    fn record(&self, xs: &[DVector<f64>]) -> Trajectories {
        let times = self.grid.times();
        match self.outputs {
            Some(o) => {
                let values = DMatrix::from_fn(xs.len(), o.labels.len(), |k, j| {
                    let u = self.u(times[k]);
                    (o.p.row(j) * &xs[k])[0] + (o.q.row(j) * u)[0]
                });
                Trajectories { times, labels: o.labels.clone(), values }
            }
            None => Trajectories {
                values: DMatrix::from_fn(xs.len(), self.ss.order(), |k, j| xs[k][j]),
                times,
                labels: self.ss.state_names.clone(),
            },
        }
    }
}

/// `x[1] = x0`, `x[k+1] = x[k] + dT·(A x[k] + B u(t_k))` with `t_k = k·dT`.
pub fn euler_integrate(run: &OdeRun) -> Result<Trajectories, OracleError> {
    run.check()?;
    let dt = run.grid.dt;
    let mut xs = vec![run.x0.clone()];
    for k in 1..run.grid.steps {
        let x = &xs[k - 1];
        let next = x + run.f(x, run.grid.time(k)) * dt;
        xs.push(next);
    }
    Ok(run.record(&xs))
}

/// Classical fourth-order Runge-Kutta on the same grid, same starting point.
pub fn rk4_integrate(run: &OdeRun) -> Result<Trajectories, OracleError> {
    run.check()?;
    let dt = run.grid.dt;
    let mut xs = vec![run.x0.clone()];
    for k in 1..run.grid.steps {
        let (x, t) = (&xs[k - 1], run.grid.time(k));
        let k1 = run.f(x, t);
        let k2 = run.f(&(x + &k1 * (dt / 2.0)), t + dt / 2.0);
        let k3 = run.f(&(x + &k2 * (dt / 2.0)), t + dt / 2.0);
        let k4 = run.f(&(x + &k3 * dt), t + dt);
        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        xs.push(next);
    }
    Ok(run.record(&xs))
}

/// `x* = −A⁻¹ B u`.
pub fn dc_steady_state(ss: &StateSpace, u: &DVector<f64>) -> Result<DVector<f64>, OracleError> {
    if u.len() != ss.b.ncols() {
        return Err(OracleError::DimensionMismatch(format!("{} inputs for {} columns of B", u.len(), ss.b.ncols())));
    }
    let n = ss.order();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let scale = ss.a.amax().max(f64::MIN_POSITIVE);
    let sv = ss.a.clone().singular_values();
    if sv.min() <= 1e-12 * scale * n as f64 {
        return Err(OracleError::SingularA);
    }
    let rhs = -(&ss.b * u);
    ss.a.clone().lu().solve(&rhs).ok_or(OracleError::SingularA)
}

/// Slowest time constant `1 / min |Re λ|` over the eigenvalues of A with negative real part.
pub fn dominant_time_constant(ss: &StateSpace) -> Option<f64> {
    if ss.order() == 0 {
        return None;
    }
    let slowest = ss
        .a
        .complex_eigenvalues()
        .iter()
        .map(|l| -l.re)
        .filter(|&r| r > 0.0)
        .fold(f64::INFINITY, f64::min);
    slowest.is_finite().then(|| 1.0 / slowest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derive::derive;
    use crate::fixtures;
    use crate::tree::build_normal_tree;

    fn scalar(a: f64, b: f64) -> StateSpace {
        StateSpace {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            state_names: vec!["x".into()],
            state_elements: vec!["x".into()],
            input_names: vec!["u".into()],
        }
    }

    fn run(ss: &StateSpace, dt: f64, steps: usize, x0: f64) -> OdeRun<'_> {
        OdeRun {
            ss,
            outputs: None,
            inputs: vec![SourceSignal::default()],
            grid: TimeGrid::new(dt, steps).unwrap(),
            x0: DVector::from_element(1, x0),
        }
    }

    #[test]
    fn constant_when_a_and_b_vanish() {
        let ss = scalar(0.0, 0.0);
        for t in [euler_integrate(&run(&ss, 0.1, 5, 3.0)).unwrap(), rk4_integrate(&run(&ss, 0.1, 5, 3.0)).unwrap()] {
            assert!(t.values.iter().all(|v| *v == 3.0));
        }
    }

    #[test]
    fn rk4_exponential_decay() {
        let ss = scalar(-1.0, 0.0);
        let t = rk4_integrate(&run(&ss, 0.1, 11, 1.0)).unwrap();
        assert!((t.values[(10, 0)] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn euler_is_the_recurrence() {
        let ss = scalar(-2.0, 1.0);
        let t = euler_integrate(&run(&ss, 0.1, 3, 0.0)).unwrap();
        assert_eq!(t.values.column(0).as_slice(), &[0.0, 0.1, 0.1 + 0.1 * (1.0 - 0.2)]);
    }

    #[test]
    fn dimension_checks() {
        let ss = scalar(-1.0, 1.0);
        let mut r = run(&ss, 0.1, 3, 0.0);
        r.x0 = DVector::zeros(2);
        assert!(matches!(euler_integrate(&r), Err(OracleError::DimensionMismatch(_))));
        let mut r = run(&ss, 0.1, 3, 0.0);
        r.inputs.clear();
        assert!(matches!(rk4_integrate(&r), Err(OracleError::DimensionMismatch(_))));
    }

    #[test]
    fn electrical_dc_point() {
        let m = fixtures::load("electrical").unwrap();
        let ss = derive(&m, &build_normal_tree(&m).unwrap()).unwrap().state_space;
        let x = dc_steady_state(&ss, &DVector::from_element(1, 1.0)).unwrap();
        let par = 200.0 * 220.0 / 420.0;
        let i = 1.0 / (200.0 + par);
        assert!((x[1] - i).abs() < 1e-12);
        assert!((x[0] - i * par).abs() < 1e-12);
    }

    #[test]
    fn thermal_dc_point_and_singular() {
        let m = fixtures::load("thermal").unwrap();
        let ss = derive(&m, &build_normal_tree(&m).unwrap()).unwrap().state_space;
        let x = dc_steady_state(&ss, &DVector::from_element(1, 1.0)).unwrap();
        assert!((x[0] - 0.2).abs() < 1e-12 && (x[1] - 0.2).abs() < 1e-12);
        let ss = scalar(0.0, 1.0);
        assert_eq!(dc_steady_state(&ss, &DVector::from_element(1, 1.0)), Err(OracleError::SingularA));
    }

    #[test]
    fn euler_approaches_dc_current() {
        let m = fixtures::load("electrical").unwrap();
        let d = derive(&m, &build_normal_tree(&m).unwrap()).unwrap();
        let r = OdeRun {
            ss: &d.state_space,
            outputs: Some(&d.outputs),
            inputs: vec![SourceSignal::default()],
            grid: TimeGrid::new(1e-4, 100).unwrap(),
            x0: DVector::zeros(3),
        };
        let t = euler_integrate(&r).unwrap();
        // Underdamped: the inductor current overshoots before settling.
        let i = t.column("U[L1]").unwrap();
        let dc = 1.0 / (200.0 + 200.0 * 220.0 / 420.0);
        assert!(i.iter().cloned().fold(0.0, f64::max) > dc);
        assert!((i[99] - dc).abs() < 1e-2 * dc);
        assert!(dominant_time_constant(&d.state_space).unwrap() > 0.0);
    }
}
