//! Dataset manifest: a TSV with header `filename<TAB>scene_label`, file
//! names following `scene-city-location-segment-device.wav`.

use std::fmt;

use crate::error::{Error, Result};

/// The ten scene classes, in report order.
pub const SCENES: [&str; 10] = [
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
];

pub fn scene_index(label: &str) -> Option<usize> {
    SCENES.iter().position(|&s| s == label)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    /// Path as written in the manifest (relative to the dataset root).
    pub path: String,
    pub scene: String,
    pub label: usize,
    pub city: String,
    pub location: String,
    pub segment: String,
    pub device: String,
}

impl ManifestRow {
    /// Recording location, unique across cities.
    pub fn location_id(&self) -> String {
        format!("{}-{}", self.city, self.location)
    }

    /// File stem, used as the segment identifier everywhere downstream.
    pub fn segment_id(&self) -> String {
        let name = self.path.rsplit('/').next().unwrap_or(&self.path);
        name.strip_suffix(".wav").unwrap_or(name).to_string()
    }
}

/// A rejected manifest line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub errors: Vec<RowError>,
    pub warnings: Vec<String>,
}

pub const HEADER: &str = "filename\tscene_label";

fn parse_row(line: &str) -> std::result::Result<ManifestRow, String> {
    let mut cols = line.split('\t');
    let (path, label) = match (cols.next(), cols.next(), cols.next()) {
        (Some(p), Some(l), None) => (p.trim(), l.trim()),
        _ => return Err("expected two tab-separated columns".into()),
    };
    let label_idx = scene_index(label).ok_or_else(|| format!("unknown scene label {label:?}"))?;
    let name = path.rsplit('/').next().unwrap_or(path);
    let stem = name.strip_suffix(".wav").ok_or_else(|| format!("{name:?} does not end in .wav"))?;
    let parts: Vec<&str> = stem.split('-').collect();
    let [scene, city, location, segment, device] = parts[..] else {
        return Err(format!("{name:?} is not scene-city-location-segment-device.wav"));
    };
    if [scene, city, location, segment, device].iter().any(|p| p.is_empty()) {
        return Err(format!("{name:?} has an empty field"));
    }
    if scene != label {
        return Err(format!("file name scene {scene:?} disagrees with label {label:?}"));
    }
    Ok(ManifestRow {
        path: path.to_string(),
        scene: scene.to_string(),
        label: label_idx,
        city: city.to_string(),
        location: location.to_string(),
        segment: segment.to_string(),
        device: device.to_string(),
    })
}

/// Parses a manifest. Malformed rows are collected in `errors`; with
/// `strict` the first one is returned as an error instead.
pub fn parse_manifest(text: &str, strict: bool) -> Result<Manifest> {
    let mut out = Manifest::default();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        None => {
            out.warnings.push("manifest is empty".into());
            return Ok(out);
        }
        Some((_, header)) if header.trim_end() == HEADER => {}
        Some(_) => return Err(Error::format(0, format!("manifest must start with header {HEADER:?}"))),
    }
    for (i, line) in lines {
        match parse_row(line) {
            Ok(row) => out.rows.push(row),
            Err(message) if strict => return Err(Error::line(i + 1, message)),
            Err(message) => out.errors.push(RowError { line: i + 1, message }),
        }
    }
    Ok(out)
}

pub fn render_manifest(rows: &[ManifestRow]) -> String {
    let mut s = format!("{HEADER}\n");
    for r in rows {
        s.push_str(&format!("{}\t{}\n", r.path, r.scene));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_fields() {
        let m = parse_manifest("filename\tscene_label\nairport-barcelona-0-7-a.wav\tairport\n", true).unwrap();
        let r = &m.rows[0];
        assert_eq!(
            (r.scene.as_str(), r.city.as_str(), r.location.as_str(), r.segment.as_str(), r.device.as_str()),
            ("airport", "barcelona", "0", "7", "a")
        );
        assert_eq!(r.location_id(), "barcelona-0");
        assert_eq!(r.segment_id(), "airport-barcelona-0-7-a");
    }

    #[test]
    fn bad_rows_are_collected_with_lines() {
        let text =
            "filename\tscene_label\nbeach-x-0-1-a.wav\tbeach\naudio/bus-lyon-1-2-a.wav\tbus\nbus-lyon.wav\tbus\n";
        let m = parse_manifest(text, false).unwrap();
        assert_eq!(m.rows.len(), 1);
        assert_eq!(m.rows[0].path, "audio/bus-lyon-1-2-a.wav");
        assert_eq!(m.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 4]);
        assert!(matches!(parse_manifest(text, true), Err(Error::Line { line: 2, .. })));
    }

    #[test]
    fn header_and_empty_file() {
        assert!(matches!(parse_manifest("a\tb\n", false), Err(Error::Format { offset: 0, .. })));
        let m = parse_manifest("", false).unwrap();
        assert!(m.rows.is_empty());
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn render_round_trips() {
        let text = "filename\tscene_label\naudio/tram-paris-3-9-b.wav\ttram\n";
        let m = parse_manifest(text, true).unwrap();
        assert_eq!(render_manifest(&m.rows), text);
    }
}
