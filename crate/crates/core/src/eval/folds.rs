//! Location-grouped cross-validation folds.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::ManifestRow;
use crate::error::{read_text, write_file, Error, Result};
use crate::rng::{mix, Stream};

pub const DEFAULT_FOLDS: usize = 4;

/// Assignment of every recording location to a fold `1..=k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub locations: BTreeMap<String, usize>,
}

fn location_hash(seed: u64, location: &str) -> u64 {
    // FNV-1a folded into the seeded mixer.
    let h = location.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    mix(seed, Stream::Folds, h, location.len() as u64)
}

/// Greedy location-grouped assignment. Locations are taken largest first
/// (ties in seeded hash order) and each joins the fold that keeps the sum
/// of squared per-class fold counts smallest; ties go to the fold with
/// fewer segments, then the lower index. The result does not depend on
/// manifest row order.
pub fn make_folds(rows: &[ManifestRow], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::Config("fold count must be positive".into()));
    }
    let n_classes = rows.iter().map(|r| r.label + 1).max().unwrap_or(0);
    let mut per_location: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in rows {
        per_location.entry(r.location_id()).or_insert_with(|| vec![0; n_classes])[r.label] += 1;
    }
    for c in 0..n_classes {
        let n_loc = per_location.values().filter(|v| v[c] > 0).count();
        if n_loc > 0 && n_loc < k {
            return Err(Error::Config(format!("class {c} is recorded at {n_loc} locations, fewer than {k} folds")));
        }
    }
    let mut order: Vec<(&String, &Vec<usize>)> = per_location.iter().collect();
    order.sort_by_key(|(loc, counts)| (std::cmp::Reverse(counts.iter().sum::<usize>()), location_hash(seed, loc)));

    let mut fold_counts = vec![vec![0usize; n_classes]; k];
    let mut locations = BTreeMap::new();
    for (loc, counts) in order {
        let best = (0..k)
            .min_by_key(|&f| {
                // Change in sum of squares from adding this location.
                let delta: usize = counts.iter().zip(&fold_counts[f]).map(|(&c, &have)| 2 * have * c + c * c).sum();
                (delta, fold_counts[f].iter().sum::<usize>(), f)
            })
            .expect("k > 0");
        for (have, c) in fold_counts[best].iter_mut().zip(counts) {
            *have += c;
        }
        locations.insert(loc.clone(), best + 1);
    }
    Ok(FoldPlan { k, seed, locations })
}

impl FoldPlan {
    pub fn fold_of(&self, row: &ManifestRow) -> Result<usize> {
        self.locations.get(&row.location_id()).copied().ok_or_else(|| {
            Error::Input(format!("location {} of {} is not in the fold plan", row.location_id(), row.path))
        })
    }

    /// Rows in fold `fold` and the rest, both in manifest order.
    pub fn split<'a>(
        &self,
        rows: &'a [ManifestRow],
        fold: usize,
    ) -> Result<(Vec<&'a ManifestRow>, Vec<&'a ManifestRow>)> {
        if fold < 1 || fold > self.k {
            return Err(Error::Config(format!("fold {fold} outside 1..={}", self.k)));
        }
        let (mut held, mut rest) = (Vec::new(), Vec::new());
        for r in rows {
            if self.fold_of(r)? == fold {
                held.push(r)
            } else {
                rest.push(r)
            }
        }
        Ok((held, rest))
    }

    /// Per-fold segment counts of each class, `[fold][class]`.
    pub fn class_counts(&self, rows: &[ManifestRow], n_classes: usize) -> Result<Vec<Vec<usize>>> {
        let mut out = vec![vec![0; n_classes]; self.k];
        for r in rows {
            out[self.fold_of(r)? - 1][r.label] += 1;
        }
        Ok(out)
    }

    /// Largest `(max - min) / mean` of a class's per-fold counts.
    pub fn imbalance(&self, rows: &[ManifestRow], n_classes: usize) -> Result<f64> {
        let counts = self.class_counts(rows, n_classes)?;
        Ok((0..n_classes)
            .filter_map(|c| {
                let col: Vec<usize> = counts.iter().map(|f| f[c]).collect();
                let total: usize = col.iter().sum();
                (total > 0).then(|| {
                    let (lo, hi) = (col.iter().min().unwrap(), col.iter().max().unwrap());
                    (hi - lo) as f64 / (total as f64 / self.k as f64)
                })
            })
            .fold(0.0, f64::max))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# folds={} seed={}\nlocation_id\tfold\n", self.k, self.seed);
        for (loc, f) in &self.locations {
            s.push_str(&format!("{loc}\t{f}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut k = None;
        let mut seed = 0;
        let mut locations = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("folds", v)) => k = v.parse().ok(),
                        Some(("seed", v)) => seed = v.parse().map_err(|_| Error::line(i + 1, "bad seed"))?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() || line == "location_id\tfold" {
                continue;
            }
            let (loc, fold) = line.split_once('\t').ok_or_else(|| Error::line(i + 1, "expected location<TAB>fold"))?;
            let fold: usize = fold.parse().map_err(|_| Error::line(i + 1, format!("bad fold {fold:?}")))?;
            if fold == 0 || locations.insert(loc.to_string(), fold).is_some() {
                return Err(Error::line(i + 1, format!("invalid or repeated entry for {loc}")));
            }
        }
        let max_fold = locations.values().copied().max().unwrap_or(0);
        let k = k.unwrap_or(max_fold);
        if max_fold > k || k == 0 {
            return Err(Error::Input(format!("fold plan names fold {max_fold} but declares {k} folds")));
        }
        Ok(Self { k, seed, locations })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_text(path)?).map_err(|e| e.context(path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_manifest, SynthOptions};

    #[test]
    fn balanced_grid_is_perfect() {
        let rows = synth_manifest(&SynthOptions::new(16, 0));
        let plan = make_folds(&rows, 4, 3).unwrap();
        assert_eq!(plan.imbalance(&rows, 10).unwrap(), 0.0);
        for f in plan.class_counts(&rows, 10).unwrap() {
            assert!(f.iter().all(|&c| c == 4));
        }
    }

    #[test]
    fn too_few_locations() {
        let rows = synth_manifest(&SynthOptions::new(4, 0));
        assert!(matches!(make_folds(&rows, 5, 0), Err(Error::Config(_))));
    }

    #[test]
    fn file_round_trip() {
        let rows = synth_manifest(&SynthOptions::new(8, 0));
        let plan = make_folds(&rows, 4, 11).unwrap();
        assert_eq!(FoldPlan::from_text(&plan.to_text()).unwrap(), plan);
        assert!(matches!(FoldPlan::from_text("a\tx\n"), Err(Error::Line { line: 1, .. })));
    }
}
