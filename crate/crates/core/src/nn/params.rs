//! Named parameter collections and the text checkpoint format.
//!
//! ```text
//! relayflow-checkpoint 1
//! arch mfl
//! tensors 2
//! conv1.w1 3 32
//! 1.25e-1 -3.0517578125e-5 ...
//! conv1.b 1 32
//! ...
//! ```
//!
//! Values are written in Rust's shortest round-trip exponent form, so a
//! save/load cycle reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::{Gradients, NnError, Tape, Tensor, Var};

const MAGIC: &str = "relayflow-checkpoint 1";

/// Ordered, named list of trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Appends a `rows × cols` tensor drawn uniformly from `±1/√fan_in`.
    pub fn push_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let t = Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound));
        self.push(name, t)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every tensor as a parameter leaf on `tape`, in order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Gradients for the leaves returned by [`ParamSet::bind`], zero where
    /// the output did not depend on a parameter.
    pub fn collect_grads(&self, tape: &Tape, grads: &Gradients, vars: &[Var]) -> Vec<Tensor> {
        vars.iter().map(|&v| grads.wrt(tape, v)).collect()
    }

    /// Checks that `other` has the same names and shapes, in order.
    pub fn check_layout(&self, other: &ParamSet) -> Result<(), NnError> {
        if self.names != other.names {
            return Err(NnError::ParamNames {
                expected: self.names.clone(),
                found: other.names.clone(),
            });
        }
        for (name, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.shape() != b.shape() {
                return Err(NnError::ParamMismatch {
                    name: name.clone(),
                    expected: a.shape(),
                    found: b.shape(),
                });
            }
        }
        Ok(())
    }
}

/// A parsed checkpoint: architecture tag plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    pub params: ParamSet,
}

pub fn render_checkpoint(arch: &str, params: &ParamSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "arch {arch}");
    let _ = writeln!(out, "tensors {}", params.len());
    for (name, t) in params.names.iter().zip(&params.tensors) {
        let _ = writeln!(out, "{name} {} {}", t.rows(), t.cols());
        let line: Vec<String> = t.data().iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn save_checkpoint(path: &Path, arch: &str, params: &ParamSet) -> Result<(), NnError> {
    std::fs::write(path, render_checkpoint(arch, params))?;
    Ok(())
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint, NnError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| NnError::Truncated(format!("missing {what}")))
    };
    let malformed = |line: usize, detail: String| NnError::Malformed { line, detail };

    let (ln, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(malformed(ln, format!("expected {MAGIC:?}")));
    }
    let (ln, arch_line) = next("arch line")?;
    let arch = arch_line
        .strip_prefix("arch ")
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .ok_or_else(|| malformed(ln, "expected `arch <name>`".into()))?
        .to_string();
    let (ln, count_line) = next("tensor count")?;
    let count: usize = count_line
        .strip_prefix("tensors ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| malformed(ln, "expected `tensors <count>`".into()))?;

    let mut params = ParamSet::new();
    for k in 0..count {
        let (ln, head) = next(&format!("header of tensor {k}"))?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        let [name, rows, cols] = fields[..] else {
            return Err(malformed(ln, "expected `<name> <rows> <cols>`".into()));
        };
        let rows: usize = rows.parse().map_err(|_| malformed(ln, format!("bad row count {rows:?}")))?;
        let cols: usize = cols.parse().map_err(|_| malformed(ln, format!("bad column count {cols:?}")))?;
        let (ln, body) = next(&format!("values of tensor {name}"))?;
        let values = body
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| malformed(ln, format!("bad number {tok:?}"))))
            .collect::<Result<Vec<f64>, NnError>>()?;
        if values.len() < rows * cols {
            return Err(NnError::Truncated(format!(
                "tensor {name} has {} of {} values",
                values.len(),
                rows * cols
            )));
        }
        let t = Tensor::new(rows, cols, values).map_err(|e| malformed(ln, e.to_string()))?;
        params.push(name, t);
    }
    Ok(Checkpoint { arch, params })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}
