//! Plain-text tensor archive.
//!
//! ```text
//! coil-tensors 1
//! <name> <rows> <cols> <v_0> <v_1> ... <v_{rows*cols-1}>
//! ```
//!
//! One tensor per line, values in row-major order, printed with Rust's
//! shortest round-trip float formatting so that reading back is lossless.
//! Names must not contain whitespace.

use std::fmt::Write as _;
use std::path::Path;

use super::tensor::Tensor;
use super::DiffError;

pub const ARCHIVE_MAGIC: &str = "coil-tensors";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    entries: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        assert!(
            !name.is_empty() && !name.contains(char::is_whitespace),
            "archive names must be nonempty and whitespace-free"
        );
        self.entries.push((name, tensor));
    }

    pub fn insert_all(&mut self, prefix: &str, tensors: &[Tensor]) {
        for (i, t) in tensors.iter().enumerate() {
            self.insert(format!("{prefix}.{i}"), t.clone());
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, DiffError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| DiffError::Checkpoint(format!("missing tensor `{name}`")))
    }

    /// Collects `prefix.0`, `prefix.1`, ... in order.
    pub fn get_all(&self, prefix: &str) -> Vec<Tensor> {
        let mut out = Vec::new();
        while let Ok(t) = self.get(&format!("{prefix}.{}", out.len())) {
            out.push(t.clone());
        }
        out
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{ARCHIVE_MAGIC} {ARCHIVE_VERSION}\n");
        for (name, t) in &self.entries {
            let _ = write!(s, "{name} {} {}", t.rows(), t.cols());
            for v in t.data() {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DiffError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let mut parts = header.split_whitespace();
        if parts.next() != Some(ARCHIVE_MAGIC) {
            return Err(DiffError::Checkpoint("not a coil tensor archive".into()));
        }
        match parts.next().and_then(|v| v.parse::<u32>().ok()) {
            Some(ARCHIVE_VERSION) => {}
            other => {
                return Err(DiffError::Checkpoint(format!(
                    "unsupported archive version {other:?}"
                )))
            }
        }
        let mut archive = TensorArchive::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| DiffError::Checkpoint(format!("line {}: {what}", idx + 1));
            let mut fields = line.split_whitespace();
            let name = fields.next().ok_or_else(|| bad("missing name"))?;
            let rows: usize = fields
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad row count"))?;
            let cols: usize = fields
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad column count"))?;
            let data = fields
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad value")))
                .collect::<Result<Vec<_>, _>>()?;
            let t = Tensor::from_vec(rows, cols, data).map_err(|_| bad("value count mismatch"))?;
            archive.entries.push((name.to_string(), t));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffError> {
        std::fs::write(path, self.to_text()).map_err(|e| DiffError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DiffError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn text_round_trip_is_lossless(
            rows in 1usize..4,
            cols in 1usize..4,
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 16)
        ) {
            let data: Vec<f64> = seed.iter().cycle().take(rows * cols).copied().collect();
            let mut a = TensorArchive::new();
            a.insert("w", Tensor::from_vec(rows, cols, data).unwrap());
            a.insert("b", Tensor::scalar(-0.1));
            let back = TensorArchive::from_text(&a.to_text()).unwrap();
            prop_assert_eq!(back, a);
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        assert!(TensorArchive::from_text("something else\n").is_err());
    }
}
