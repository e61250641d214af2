//! Per-segment class scores and their TSV form.

use std::collections::HashMap;
use std::path::Path;

use crate::data::SCENES;
use crate::error::{read_text, write_file, Error, Result};

/// Pre-softmax scores of one system, one row per segment.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub system: String,
    pub ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(system: impl Into<String>, ids: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self { system: system.into(), ids, scores };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.scores.len() {
            return Err(Error::Dimension(format!(
                "{}: {} ids for {} score rows",
                self.system,
                self.ids.len(),
                self.scores.len()
            )));
        }
        let k = self.n_classes();
        for (id, row) in self.ids.iter().zip(&self.scores) {
            if row.len() != k {
                return Err(Error::Dimension(format!(
                    "{}: segment {id} has {} scores, expected {k}",
                    self.system,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("{}: segment {id} has a non-finite score", self.system)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.scores.first().map_or(SCENES.len(), Vec::len)
    }

    /// Arg-max class per segment, lowest index on ties.
    pub fn predictions(&self) -> Vec<usize> {
        self.scores.iter().map(|s| crate::train::argmax(s)).collect()
    }

    /// Reorders rows to follow `ids`, which must be a permutation of ours.
    pub fn aligned_to(&self, ids: &[String]) -> Result<ScoreMatrix> {
        let index: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        if index.len() != self.ids.len() {
            return Err(Error::Alignment(format!("{} lists a segment twice", self.system)));
        }
        if ids.len() != self.ids.len() {
            return Err(Error::Alignment(format!(
                "{} scores {} segments, expected {}",
                self.system,
                self.ids.len(),
                ids.len()
            )));
        }
        let scores = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| self.scores[i].clone())
                    .ok_or_else(|| Error::Alignment(format!("{} has no score for segment {id}", self.system)))
            })
            .collect::<Result<_>>()?;
        Ok(ScoreMatrix { system: self.system.clone(), ids: ids.to_vec(), scores })
    }

    /// Header `#classes<TAB>names...`, then `id<TAB>scores...` per row.
    /// Scores use the shortest representation that parses back exactly.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("#classes");
        for name in &SCENES[..self.n_classes().min(SCENES.len())] {
            s.push('\t');
            s.push_str(name);
        }
        s.push('\n');
        for (id, row) in self.ids.iter().zip(&self.scores) {
            s.push_str(id);
            for v in row {
                s.push('\t');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(system: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let k = match lines.next() {
            Some((_, h)) if h.starts_with("#classes") => h.split('\t').count() - 1,
            _ => return Err(Error::line(1, "score file must start with a #classes header")),
        };
        if k == 0 {
            return Err(Error::line(1, "score header lists no classes"));
        }
        let (mut ids, mut scores) = (Vec::new(), Vec::new());
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| f.trim().parse::<f64>().map_err(|_| Error::line(i + 1, format!("bad score {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != k {
                return Err(Error::line(i + 1, format!("{} scores for {k} classes", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::line(i + 1, "non-finite score"));
            }
            ids.push(id);
            scores.push(row);
        }
        Self::new(system, ids, scores)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let system = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_tsv(system, &read_text(path)?).map_err(|e| e.context(path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_tsv().as_bytes())
    }
}
