//! Versioned flat text checkpoints shared by the goal policy and the ending
//! predictor.
//!
//! Layout, one item per line:
//!
//! ```text
//! goalnav-checkpoint 1
//! kind policy
//! meta {"arch":{...}}
//! len 12345
//! <one f64 per line>
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so save/load is exact.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ending::{NepmArch, NepmNet, NepmParams};
use crate::error::{NavError, Result};
use crate::goal_policy::{PolicyArch, PolicyNet, PolicyParams};

pub const MAGIC: &str = "goalnav-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub theta: Vec<f64>,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} {VERSION}\nkind {}\nmeta {}\nlen {}\n", self.kind, self.meta, self.theta.len());
        for v in &self.theta {
            let _ = writeln!(s, "{v:?}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| NavError::Parse(format!("checkpoint truncated before {key:?}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| NavError::Parse(format!("expected {key:?} line, got {line:?}")))
        };
        let version = field(MAGIC)?;
        if version != VERSION.to_string() {
            return Err(NavError::Parse(format!("unsupported checkpoint version {version}")));
        }
        let kind = field("kind")?;
        let meta = serde_json::from_str(&field("meta")?).map_err(|e| NavError::Parse(format!("checkpoint meta: {e}")))?;
        let len: usize = field("len")?.parse().map_err(|_| NavError::Parse("bad checkpoint length".into()))?;
        let theta = lines
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<f64>().map_err(|_| NavError::Parse(format!("bad parameter value {l:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if theta.len() != len {
            return Err(NavError::Parse(format!("checkpoint declares {len} values but holds {}", theta.len())));
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(NavError::Numerical("checkpoint holds non-finite parameters".into()));
        }
        Ok(Checkpoint { kind, meta, theta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NavError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(NavError::Parse(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyMeta {
    arch: PolicyArch,
}

#[derive(Serialize, Deserialize)]
struct NepmMeta {
    arch: NepmArch,
    max_range_m: f64,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain structs serialize")
}

fn from_value<T: for<'de> Deserialize<'de>>(v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| NavError::Parse(format!("checkpoint meta: {e}")))
}

impl From<&PolicyParams> for Checkpoint {
    fn from(p: &PolicyParams) -> Self {
        Checkpoint { kind: "policy".into(), meta: to_value(&PolicyMeta { arch: p.arch }), theta: p.theta.clone() }
    }
}

impl From<&NepmParams> for Checkpoint {
    fn from(p: &NepmParams) -> Self {
        let meta = to_value(&NepmMeta { arch: p.arch, max_range_m: p.max_range_m });
        Checkpoint { kind: "nepm".into(), meta, theta: p.theta.clone() }
    }
}

impl TryFrom<Checkpoint> for PolicyParams {
    type Error = NavError;

    fn try_from(c: Checkpoint) -> Result<Self> {
        c.expect_kind("policy")?;
        let meta: PolicyMeta = from_value(c.meta)?;
        let n = PolicyNet::new(meta.arch).n_params();
        if c.theta.len() != n {
            return Err(NavError::Parse(format!("policy architecture needs {n} values, checkpoint has {}", c.theta.len())));
        }
        Ok(PolicyParams { arch: meta.arch, theta: c.theta })
    }
}

impl TryFrom<Checkpoint> for NepmParams {
    type Error = NavError;

    fn try_from(c: Checkpoint) -> Result<Self> {
        c.expect_kind("nepm")?;
        let meta: NepmMeta = from_value(c.meta)?;
        let n = NepmNet::new(meta.arch).n_params();
        if c.theta.len() != n {
            return Err(NavError::Parse(format!("ending architecture needs {n} values, checkpoint has {}", c.theta.len())));
        }
        Ok(NepmParams { arch: meta.arch, theta: c.theta, max_range_m: meta.max_range_m })
    }
}
