//! Per-class accuracy, confusion matrix and the scene accuracy table.

use std::collections::HashMap;

use crate::data::SCENES;
use crate::error::{Error, Result};
use crate::fusion::ScoreMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub class_names: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Unweighted mean of per-class accuracies.
pub fn average_accuracy(per_class: &[f64]) -> f64 {
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

/// `"street_pedestrian"` to `"Street Pedestrian"`.
pub fn display_name(scene: &str) -> String {
    scene
        .split('_')
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect::<String>()).unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

impl Report {
    pub fn n_classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn class_totals(&self) -> Vec<usize> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    /// Percent correct per class; `None` for classes without segments.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let total: usize = row.iter().sum();
                (total > 0).then(|| 100.0 * row[c] as f64 / total as f64)
            })
            .collect()
    }

    /// Mean of the per-class accuracies of classes present.
    pub fn average(&self) -> f64 {
        let present: Vec<f64> = self.per_class_accuracy().into_iter().flatten().collect();
        average_accuracy(&present)
    }

    /// Percent of all segments classified correctly.
    pub fn raw_accuracy(&self) -> f64 {
        let total: usize = self.class_totals().iter().sum();
        let correct: usize = (0..self.n_classes()).map(|c| self.confusion[c][c]).sum();
        100.0 * correct as f64 / total as f64
    }

    /// Scene table with one decimal, average row, and raw accuracy.
    pub fn render(&self) -> String {
        render_table(&[("Accuracy [%]", self.per_class_accuracy())], &self.class_names)
            + &format!("{:<20}{:>14.1}\n", "Raw accuracy", self.raw_accuracy())
    }

    pub fn confusion_tsv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for n in &self.class_names {
            s.push('\t');
            s.push_str(n);
        }
        s.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            s.push_str(name);
            for v in row {
                s.push_str(&format!("\t{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Side-by-side accuracy columns in the scene table layout.
pub fn render_table(columns: &[(&str, Vec<Option<f64>>)], class_names: &[String]) -> String {
    let mut s = format!("{:<20}", "Scene label");
    for (title, _) in columns {
        s.push_str(&format!("{title:>14}"));
    }
    s.push('\n');
    for (c, name) in class_names.iter().enumerate() {
        s.push_str(&format!("{:<20}", display_name(name)));
        for (_, vals) in columns {
            match vals.get(c).copied().flatten() {
                Some(v) => s.push_str(&format!("{v:>14.1}")),
                None => s.push_str(&format!("{:>14}", "-")),
            }
        }
        s.push('\n');
    }
    s.push_str(&format!("{:<20}", "Average"));
    for (_, vals) in columns {
        let present: Vec<f64> = vals.iter().copied().flatten().collect();
        s.push_str(&format!("{:>14.1}", average_accuracy(&present)));
    }
    s.push('\n');
    s
}

/// Evaluates arg-max predictions against labels keyed by segment id.
pub fn evaluate(scores: &ScoreMatrix, labels: &HashMap<String, usize>) -> Result<Report> {
    let k = scores.n_classes();
    let predicted = scores.predictions();
    let mut confusion = vec![vec![0; k]; k];
    for (id, p) in scores.ids.iter().zip(predicted) {
        let &y = labels.get(id).ok_or_else(|| Error::Input(format!("no label for segment {id}")))?;
        if y >= k {
            return Err(Error::Input(format!("segment {id} has unknown label {y}")));
        }
        confusion[y][p] += 1;
    }
    if scores.is_empty() {
        return Err(Error::Input("no segments to evaluate".into()));
    }
    let class_names = (0..k).map(|c| SCENES.get(c).map_or_else(|| format!("class_{c}"), |s| s.to_string())).collect();
    Ok(Report { class_names, confusion })
}

/// Report from hard predictions instead of scores.
pub fn evaluate_labels(
    ids: &[String],
    predicted: &[usize],
    labels: &HashMap<String, usize>,
    k: usize,
) -> Result<Report> {
    let scores = predicted.iter().map(|&p| (0..k).map(|c| if c == p { 1.0 } else { 0.0 }).collect()).collect();
    evaluate(&ScoreMatrix::new("votes", ids.to_vec(), scores)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[usize]) -> (ScoreMatrix, HashMap<String, usize>) {
        let ids: Vec<String> = (0..labels.len()).map(|i| format!("s{i}")).collect();
        let scores = labels.iter().map(|&y| (0..10).map(|c| if c == y { 1.0 } else { 0.0 }).collect()).collect();
        let map = ids.iter().cloned().zip(labels.iter().copied()).collect();
        (ScoreMatrix::new("x", ids, scores).unwrap(), map)
    }

    #[test]
    fn perfect_scores() {
        let labels: Vec<usize> = (0..30).map(|i| i % 10).collect();
        let (s, map) = one_hot(&labels);
        let r = evaluate(&s, &map).unwrap();
        assert!(r.per_class_accuracy().iter().all(|a| *a == Some(100.0)));
        assert_eq!(r.average(), 100.0);
        let text = r.render();
        let avg = text.lines().find(|l| l.starts_with("Average")).unwrap();
        assert!(avg.ends_with(" 100.0"), "{avg}");
    }

    #[test]
    fn half_right_single_class() {
        let (mut s, map) = one_hot(&[3, 3]);
        s.scores[1] = vec![0.0; 10];
        let r = evaluate(&s, &map).unwrap();
        assert_eq!(r.per_class_accuracy()[3], Some(50.0));
        assert_eq!(r.average(), 50.0);
        assert_eq!(r.class_totals()[3], 2);
    }

    #[test]
    fn unknown_segment() {
        let (s, _) = one_hot(&[1]);
        assert!(matches!(evaluate(&s, &HashMap::new()), Err(Error::Input(_))));
    }

    #[test]
    fn names() {
        assert_eq!(display_name("metro_station"), "Metro Station");
    }
}
