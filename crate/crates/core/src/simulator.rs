//! Simulation-model bindings: in-process functions and external processes.
//!
//! # Line protocol for external simulators
//!
//! An external simulator is a child process that reads one request per line
//! from standard input and answers one line on standard output:
//!
//! - request: the comma-separated decimal components of `x`, e.g.
//!   `0.25,-1.5,3.0`
//! - response: a single decimal number, the value `m(x)`
//!
//! The process is spawned on first use and must keep answering until its
//! standard input is closed, which is the termination signal; the wrapper
//! closes stdin and waits for exit when dropped. A non-numeric or missing
//! response is a protocol error.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

type SimFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// An evaluable map `x -> m(x)`.
#[derive(Clone)]
pub enum SimulationModel {
    Builtin {
        name: String,
        f: Arc<SimFn>,
    },
    External(Arc<Mutex<ExternalSimulator>>),
}

impl std::fmt::Debug for SimulationModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimulationModel::Builtin { name, .. } => write!(f, "SimulationModel::Builtin({name})"),
            SimulationModel::External(_) => write!(f, "SimulationModel::External"),
        }
    }
}

impl SimulationModel {
    pub fn from_fn<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        SimulationModel::Builtin {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Shifts an existing model by a constant, `m(x) + offset`.
    pub fn with_offset(self, offset: f64) -> Self {
        if offset == 0.0 {
            return self;
        }
        let name = format!("{self:?}+{offset}");
        SimulationModel::from_fn(name, move |x| self.eval(x).unwrap_or(f64::NAN) + offset)
    }

    /// Spawns an external simulator process from a command line.
    pub fn external(program: &str, args: &[String]) -> Result<Self> {
        Ok(SimulationModel::External(Arc::new(Mutex::new(
            ExternalSimulator::spawn(program, args)?,
        ))))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            SimulationModel::Builtin { f, .. } => {
                let v = f(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteData(format!(
                        "simulation model returned {v}"
                    )))
                }
            }
            SimulationModel::External(sim) => {
                let mut sim = sim.lock().map_err(|_| {
                    Error::SimulatorProtocol("simulator mutex poisoned".into())
                })?;
                sim.eval(x)
            }
        }
    }
}

/// Child-process simulator speaking the line protocol.
pub struct ExternalSimulator {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    command: String,
}

impl std::fmt::Debug for ExternalSimulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExternalSimulator({})", self.command)
    }
}

impl ExternalSimulator {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| {
                Error::SimulatorProtocol(format!("failed to spawn '{program}': {e}"))
            })?;
        let stdin = child.stdin.take().ok_or_else(|| {
            Error::SimulatorProtocol("child has no standard input".into())
        })?;
        let stdout = child.stdout.take().ok_or_else(|| {
            Error::SimulatorProtocol("child has no standard output".into())
        })?;
        Ok(Self {
            child,
            stdin: Some(stdin),
            stdout: BufReader::new(stdout),
            command: format!("{program} {}", args.join(" ")),
        })
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let request = x
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let stdin = self.stdin.as_mut().ok_or_else(|| {
            Error::SimulatorProtocol("simulator stdin already closed".into())
        })?;
        writeln!(stdin, "{request}")
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::SimulatorProtocol(format!("write failed: {e}")))?;
        let mut line = String::new();
        let read = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::SimulatorProtocol(format!("read failed: {e}")))?;
        if read == 0 {
            return Err(Error::SimulatorProtocol(
                "simulator closed its output before answering".into(),
            ));
        }
        let trimmed = line.trim();
        trimmed.parse::<f64>().map_err(|_| {
            Error::SimulatorProtocol(format!("non-numeric response '{trimmed}'"))
        })
    }
}

impl Drop for ExternalSimulator {
    fn drop(&mut self) {
        // Closing stdin tells the child to exit; reap it to avoid zombies.
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}
