//! Plain-text tensor container.
//!
//! ```text
//! MINA-CHECKPOINT 1
//! header <one line of free text, usually JSON>
//! tensors <count>
//! tensor <name> <ndim> <dim_0> ... <dim_k>
//! <row-major values, space separated, shortest round-trip exponent form>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::tensor::{NamedTensors, Parameters, Tensor};
use crate::error::{MinaError, Result};

const MAGIC: &str = "MINA-CHECKPOINT 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: String,
    pub tensors: NamedTensors,
}

impl Checkpoint {
    pub fn from_params<P: Parameters>(header: impl Into<String>, params: &P) -> Self {
        Checkpoint {
            header: header.into(),
            tensors: NamedTensors(params.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "header {}", self.header.replace('\n', " "));
        let _ = writeln!(s, "tensors {}", self.tensors.0.len());
        for (name, t) in &self.tensors.0 {
            let _ = write!(s, "tensor {name} {}", t.shape().len());
            for d in t.shape() {
                let _ = write!(s, " {d}");
            }
            s.push('\n');
            let values: Vec<String> = t.data().iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&values.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |m: String| MinaError::Checkpoint(m);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(err("missing or unsupported version line".into()));
        }
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("header "))
            .ok_or_else(|| err("missing header line".into()))?
            .to_string();
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("tensors "))
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| err("missing tensor count".into()))?;
        let mut tensors = NamedTensors::default();
        for i in 0..count {
            let desc = lines
                .next()
                .ok_or_else(|| err(format!("tensor {i}: missing descriptor")))?;
            let mut parts = desc.split_whitespace();
            if parts.next() != Some("tensor") {
                return Err(err(format!("tensor {i}: malformed descriptor")));
            }
            let name = parts.next().ok_or_else(|| err(format!("tensor {i}: missing name")))?;
            let ndim: usize = parts
                .next()
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| err(format!("`{name}`: bad rank")))?;
            let shape: Vec<usize> = parts
                .map(|d| d.parse().map_err(|_| err(format!("`{name}`: bad dimension `{d}`"))))
                .collect::<Result<_>>()?;
            if shape.len() != ndim {
                return Err(err(format!("`{name}`: rank {ndim} but {} dims", shape.len())));
            }
            let values_line = lines.next().ok_or_else(|| err(format!("`{name}`: missing values")))?;
            let values: Vec<f64> = values_line
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| err(format!("`{name}`: bad value `{v}`"))))
                .collect::<Result<_>>()?;
            tensors.push(name, Tensor::from_vec(&shape, values)?);
        }
        Ok(Checkpoint { header, tensors })
    }

    /// Copies stored tensors into `params`, matching by name and shape.
    pub fn load_into<P: Parameters>(&self, params: &mut P) -> Result<()> {
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.tensors.0.len() {
            return Err(MinaError::Checkpoint(format!(
                "model has {} tensors, checkpoint has {}",
                names.len(),
                self.tensors.0.len()
            )));
        }
        for (name, target) in names.iter().zip(params.tensors_mut()) {
            let stored = self
                .tensors
                .get(name)
                .ok_or_else(|| MinaError::Checkpoint(format!("missing tensor `{name}`")))?;
            if stored.shape() != target.shape() {
                return Err(MinaError::Checkpoint(format!(
                    "`{name}`: stored shape {:?}, model expects {:?}",
                    stored.shape(),
                    target.shape()
                )));
            }
            target.data_mut().copy_from_slice(stored.data());
        }
        Ok(())
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| MinaError::io(parent, e))?;
    }
    fs::write(path, checkpoint.to_text()).map_err(|e| MinaError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| MinaError::io(path, e))?;
    Checkpoint::parse(&text)
}
