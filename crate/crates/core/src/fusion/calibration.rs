//! Affine multiclass logistic-regression fusion: `sum_i alpha_i s_i + beta`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scores::ScoreMatrix;
use crate::error::{read_text, write_file, Error, Result};

pub const MAX_ITERATIONS: usize = 10_000;
pub const GRADIENT_TOLERANCE: f64 = 1e-7;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationModel {
    pub systems: Vec<String>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Diagnostics of a calibration fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub initial_nll: f64,
    pub final_nll: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting at the initial value.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl CalibrationModel {
    pub fn identity(system: &str, n_classes: usize) -> Self {
        Self { systems: vec![system.into()], alpha: vec![1.0], beta: vec![0.0; n_classes] }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Input(format!("bad calibration model: {e}")))?;
        if m.systems.len() != m.alpha.len() || m.beta.is_empty() {
            return Err(Error::Input("calibration model needs one alpha per system and a beta vector".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?).map_err(|e| e.context(path.display()))
    }
}

/// Checks that every system scores the same segments in the same order.
pub fn check_aligned(systems: &[ScoreMatrix]) -> Result<()> {
    let first = systems.first().ok_or_else(|| Error::Config("no score systems given".into()))?;
    for s in &systems[1..] {
        if s.ids != first.ids {
            return Err(Error::Alignment(format!(
                "{} and {} do not list the same segments in the same order",
                first.system, s.system
            )));
        }
        if s.n_classes() != first.n_classes() {
            return Err(Error::Alignment(format!("{} and {} differ in class count", first.system, s.system)));
        }
    }
    Ok(())
}

struct Problem<'a> {
    systems: &'a [ScoreMatrix],
    labels: &'a [usize],
    k: usize,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        self.systems.len() + self.k
    }

    /// Mean negative log-likelihood and, optionally, its gradient.
    fn eval(&self, theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let n_sys = self.systems.len();
        let (alpha, beta) = theta.split_at(n_sys);
        let mut grad = if want_grad { vec![0.0; theta.len()] } else { Vec::new() };
        let mut total = 0.0;
        let mut fused = vec![0.0; self.k];
        for (j, &y) in self.labels.iter().enumerate() {
            fused.copy_from_slice(beta);
            for (a, s) in alpha.iter().zip(self.systems) {
                for (f, v) in fused.iter_mut().zip(&s.scores[j]) {
                    *f += a * v;
                }
            }
            let max = fused.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = fused.iter().map(|f| (f - max).exp()).sum();
            total += max + z.ln() - fused[y];
            if want_grad {
                for c in 0..self.k {
                    let r = (fused[c] - max).exp() / z - if c == y { 1.0 } else { 0.0 };
                    grad[n_sys + c] += r;
                    for (i, s) in self.systems.iter().enumerate() {
                        grad[i] += r * s.scores[j][c];
                    }
                }
            }
        }
        let n = self.labels.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (total / n, grad)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fits the fusion weights by minimizing mean cross-entropy with gradient
/// descent: Barzilai-Borwein trial steps, Armijo backtracking, starting
/// from `alpha = 1/n`, `beta = 0`.
pub fn fit_calibration(systems: &[ScoreMatrix], labels: &[usize]) -> Result<(CalibrationModel, FitReport)> {
    check_aligned(systems)?;
    let k = systems[0].n_classes();
    if labels.len() != systems[0].len() {
        return Err(Error::Alignment(format!("{} labels for {} segments", labels.len(), systems[0].len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Input(format!("label {bad} outside {k} classes")));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::Config("calibration needs labels from at least two classes".into()));
    }
    let problem = Problem { systems, labels, k };
    let n_sys = systems.len();
    let mut theta = vec![1.0 / n_sys as f64; n_sys];
    theta.extend(std::iter::repeat_n(0.0, k));
    let (mut f, mut g) = problem.eval(&theta, true);
    let initial = f;
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = inf_norm(&g) < GRADIENT_TOLERANCE;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let mut t = step;
        let (candidate, f_new) = loop {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(x, gi)| x - t * gi).collect();
            let (fc, _) = problem.eval(&cand, false);
            if fc <= f - ARMIJO * t * gg {
                break (Some(cand), fc);
            }
            t *= 0.5;
            if t < 1e-20 {
                break (None, f);
            }
        };
        let Some(candidate) = candidate else { break };
        let (_, g_new) = problem.eval(&candidate, true);
        let s: Vec<f64> = candidate.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { t * 2.0 };
        theta = candidate;
        f = f_new;
        g = g_new;
        trace.push(f);
        converged = inf_norm(&g) < GRADIENT_TOLERANCE;
    }
    let model = CalibrationModel {
        systems: systems.iter().map(|s| s.system.clone()).collect(),
        alpha: theta[..n_sys].to_vec(),
        beta: theta[n_sys..].to_vec(),
    };
    debug_assert_eq!(theta.len(), problem.n_params());
    Ok((model, FitReport { initial_nll: initial, final_nll: f, iterations, trace, converged }))
}

/// Mean cross-entropy of the fused scores.
pub fn fused_nll(model: &CalibrationModel, systems: &[ScoreMatrix], labels: &[usize]) -> Result<f64> {
    let fused = apply_calibration(model, systems)?;
    Ok(crate::train::cross_entropy(&fused.scores, labels))
}

/// `sum_i alpha_i s_i + beta` per segment.
pub fn apply_calibration(model: &CalibrationModel, systems: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    if systems.len() != model.alpha.len() {
        return Err(Error::Config(format!("calibration expects {} systems, got {}", model.alpha.len(), systems.len())));
    }
    check_aligned(systems)?;
    let k = systems[0].n_classes();
    if k != model.beta.len() {
        return Err(Error::Config(format!("calibration has {} classes, scores {k}", model.beta.len())));
    }
    let scores = (0..systems[0].len())
        .map(|j| {
            let mut f = model.beta.clone();
            for (a, s) in model.alpha.iter().zip(systems) {
                for (fc, v) in f.iter_mut().zip(&s.scores[j]) {
                    *fc += a * v;
                }
            }
            f
        })
        .collect();
    ScoreMatrix::new("fused", systems[0].ids.clone(), scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(name: &str, scores: Vec<Vec<f64>>) -> ScoreMatrix {
        let ids = (0..scores.len()).map(|i| format!("s{i}")).collect();
        ScoreMatrix::new(name, ids, scores).unwrap()
    }

    #[test]
    fn identity_model_is_identity() {
        let s = sys("a", vec![vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]);
        let out = apply_calibration(&CalibrationModel::identity("a", 3), std::slice::from_ref(&s)).unwrap();
        assert_eq!(out.scores, s.scores);
    }

    #[test]
    fn opposite_systems_cancel() {
        let a = sys("a", vec![vec![1.0, -2.0], vec![0.5, 3.0]]);
        let b = sys("b", a.scores.iter().map(|r| r.iter().map(|v| -v).collect()).collect());
        let m =
            CalibrationModel { systems: vec!["a".into(), "b".into()], alpha: vec![0.5, 0.5], beta: vec![0.25, -1.0] };
        let out = apply_calibration(&m, &[a, b]).unwrap();
        assert!(out.scores.iter().all(|r| r == &vec![0.25, -1.0]));
    }

    #[test]
    fn fit_never_worsens_and_is_monotone() {
        let a = sys("a", vec![vec![2.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.5], vec![0.3, 0.0]]);
        let (m, r) = fit_calibration(std::slice::from_ref(&a), &[0, 1, 0, 1]).unwrap();
        assert!(r.final_nll <= r.initial_nll);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((fused_nll(&m, &[a], &[0, 1, 0, 1]).unwrap() - r.final_nll).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = sys("a", vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(fit_calibration(std::slice::from_ref(&a), &[1, 1]), Err(Error::Config(_))));
        let mut b = a.clone();
        b.ids.swap(0, 1);
        assert!(matches!(fit_calibration(&[a.clone(), b], &[0, 1]), Err(Error::Alignment(_))));
        let m = CalibrationModel::identity("a", 2);
        assert!(matches!(apply_calibration(&m, &[a.clone(), a]), Err(Error::Config(_))));
    }

    #[test]
    fn model_file_round_trip() {
        let m = CalibrationModel { systems: vec!["x".into()], alpha: vec![0.1 + 0.2], beta: vec![1e-300, -3.5] };
        assert_eq!(CalibrationModel::from_json(&m.to_json()).unwrap(), m);
        assert!(CalibrationModel::from_json("{\"systems\":[],\"alpha\":[1],\"beta\":[0]}").is_err());
    }
}
