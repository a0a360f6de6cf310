//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::fixtures;
use crate::hfnmcf::{compare, DEFAULT_RESIDUAL_TOL};
use crate::net::{matrix_csv, matrix_triplets};
use crate::pipeline::{analyze, parse_ic, Analysis, Error, Method};
use crate::validate::validate_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Check model invariants
    Validate,
    /// Incidence matrices of the engineering system net
    Net,
    /// Normal tree and state variables
    Tree,
    /// State-space matrices A and B
    Derive,
    /// Solve the time-stepped flow problem
    Solve,
    /// Integrate the state-space model
    Simulate,
    /// Solve and simulate, then compare
    Compare,
    /// Every output at once
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "hfnet", version, about = "Multi-domain lumped-parameter network solver")]
pub struct RunConfig {
    pub command: Command,
    /// Model file, or the name of a bundled fixture (e.g. `electrical`)
    pub model: Option<String>,
    /// Time step in seconds
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of time steps K
    #[arg(long)]
    pub steps: Option<usize>,
    /// Initial condition, by state name or element id
    #[arg(long = "ic", value_name = "NAME=VALUE", value_parser = parse_ic)]
    pub ic: Vec<(String, f64)>,
    /// Directory for output files; without it results go to stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the assembled sparse system as triplets
    #[arg(long)]
    pub dump_system: bool,
    /// Relative tolerance for comparisons
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Integrator used by `simulate`
    #[arg(long, value_enum, default_value_t = MethodArg::Euler)]
    pub method: MethodArg,
    /// Run `all` over every bundled fixture (writes into one subdirectory each)
    #[arg(long)]
    pub fixtures: bool,
}

struct Sink<'a> {
    dir: Option<PathBuf>,
    stdout: &'a mut dyn Write,
}

impl Sink<'_> {
    /// Writes `content` to `dir/file`, or to stdout under a heading.
    fn emit(&mut self, file: &str, content: &str) -> Result<(), Error> {
        match &self.dir {
            Some(dir) => {
                let io = |source| Error::Io { path: dir.join(file).display().to_string(), source };
                std::fs::create_dir_all(dir).map_err(io)?;
                std::fs::write(dir.join(file), content).map_err(io)
            }
            None => {
                let _ = writeln!(self.stdout, "# {file}");
                let _ = self.stdout.write_all(content.as_bytes());
                Ok(())
            }
        }
    }

    fn say(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.stdout, "{}", line.as_ref());
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                let _ = stderr.write_all(text.as_bytes());
            }
            return code;
        }
    };
    match run(&config, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(config: &RunConfig, stdout: &mut dyn Write) -> Result<i32, Error> {
    if config.fixtures {
        if config.command != Command::All {
            return Err(Error::Usage("--fixtures only applies to `all`".into()));
        }
        let mut worst = 0;
        for name in fixtures::NAMES {
            let _ = writeln!(stdout, "== {name}");
            let mut sub = config.clone();
            sub.model = Some(name.to_string());
            sub.fixtures = false;
            sub.out = config.out.as_ref().map(|d| d.join(name));
            let code = match run(&sub, stdout) {
                Ok(c) => c,
                Err(e) => {
                    let _ = writeln!(stdout, "error: {e}");
                    e.exit_code()
                }
            };
            worst = worst.max(code);
        }
        return Ok(worst);
    }
    let Some(arg) = &config.model else {
        return Err(Error::Usage("missing model file or fixture name".into()));
    };
    let model = fixtures::resolve(arg)?;
    let mut sink = Sink { dir: config.out.clone(), stdout };

    if config.command == Command::Validate {
        let report = validate_model(&model);
        sink.say(report.to_string().trim_end());
        return Ok(if report.is_empty() { 0 } else { 1 });
    }
    let a = analyze(model)?;
    let ics: BTreeMap<String, f64> = config.ic.iter().cloned().collect();
    let c = config.command;
    let all = c == Command::All;

    if c == Command::Net || all {
        write_net(&a, &mut sink)?;
    }
    if c == Command::Tree || all {
        sink.say(a.tree.summary());
        let states: Vec<&str> = a.tree.state_variables.iter().map(|s| s.name.as_str()).collect();
        sink.say(format!("states: {}", states.join(", ")));
        if sink.dir.is_some() {
            sink.emit("tree.txt", &format!("{}\nstates: {}\n", a.tree.summary(), states.join(", ")))?;
        }
    }
    let derivation = if matches!(c, Command::Derive | Command::Simulate | Command::Compare | Command::All) {
        Some(a.derivation()?)
    } else {
        None
    };
    if c == Command::Derive || all {
        let d = derivation.as_ref().unwrap();
        sink.emit("state_space.csv", &d.state_space.to_csv())?;
        sink.emit("laws.txt", &(d.laws.join("\n") + "\n"))?;
    }
    if c == Command::Validate || c == Command::Net || c == Command::Tree || c == Command::Derive {
        return Ok(0);
    }

    let grid = a.grid(config.dt, config.steps)?;
    let solved = if matches!(c, Command::Solve | Command::Compare | Command::All) {
        let cs = a.constraint_system(grid, &ics)?;
        if config.dump_system {
            sink.emit("system.txt", &cs.dump())?;
        }
        let s = crate::hfnmcf::solve_with_tol(&cs, DEFAULT_RESIDUAL_TOL).map_err(Error::Solve)?;
        sink.say(format!(
            "solved {} unknowns over {} steps, residual {:.3e}",
            cs.cols(),
            grid.steps,
            s.residual
        ));
        sink.emit("hfnmcf.csv", &s.trajectories.to_csv())?;
        Some(s.trajectories)
    } else {
        None
    };
    let method = match config.method {
        MethodArg::Euler => Method::Euler,
        MethodArg::Rk4 => Method::Rk4,
    };
    if c == Command::Simulate {
        let t = a.simulate(derivation.as_ref().unwrap(), grid, &ics, method)?;
        sink.emit(if method == Method::Euler { "euler.csv" } else { "rk4.csv" }, &t.to_csv())?;
        return Ok(0);
    }
    if let (Some(h), Some(d)) = (&solved, &derivation) {
        let euler = a.simulate(d, grid, &ics, Method::Euler)?;
        sink.emit("euler.csv", &euler.to_csv())?;
        let report = compare(h, &euler, config.tol)?;
        sink.emit("compare.csv", &report.to_csv())?;
        sink.say(report.to_string());
        return Ok(if report.passed() { 0 } else { 4 });
    }
    Ok(0)
}

fn write_net(a: &Analysis, sink: &mut Sink) -> Result<(), Error> {
    let esn = &a.esn;
    let caps = esn.capability_ids();
    let red = esn.reduced();
    let rows = esn.non_ground_ids();
    if sink.dir.is_none() {
        return sink.emit("M_reduced.csv", &matrix_csv(&red, &rows, &caps));
    }
    let all = &esn.buffers;
    sink.emit("M_plus.csv", &matrix_csv(&esn.m_plus, all, &caps))?;
    sink.emit("M_minus.csv", &matrix_csv(&esn.m_minus, all, &caps))?;
    sink.emit("M.csv", &matrix_csv(&esn.m(), all, &caps))?;
    sink.emit("M_reduced.csv", &matrix_csv(&red, &rows, &caps))?;
    sink.emit("M_plus.txt", &matrix_triplets(&esn.m_plus))?;
    sink.emit("M_minus.txt", &matrix_triplets(&esn.m_minus))?;
    sink.emit("M.txt", &matrix_triplets(&esn.m()))
}
