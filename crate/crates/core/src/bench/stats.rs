//! Descriptive statistics and Pearson correlation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::HumanJudgment;
use crate::{Error, Result};

/// Mean and standard error of the mean of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    /// Sample standard deviation over √n; 0 when n < 2.
    pub sem: f64,
    pub n: usize,
}

impl MeanSem {
    /// True when the SEM is a placeholder because there was one value.
    pub fn degenerate(&self) -> bool {
        self.n < 2
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

pub fn mean_sem(values: &[f64]) -> Option<MeanSem> {
    let m = mean(values)?;
    let sem = sample_std(values).map_or(0.0, |s| s / (values.len() as f64).sqrt());
    Some(MeanSem { mean: m, sem, n: values.len() })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} values paired with {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!("{} pairs, need at least 3", x.len())));
    }
    let (mx, my) = (mean(x).unwrap_or(0.0), mean(y).unwrap_or(0.0));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InsufficientData("one side has zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Pairs used.
    pub n: usize,
    /// Judged items with no machine value.
    pub missing_machine: usize,
    /// Machine-scored items with no judgment.
    pub missing_human: usize,
}

/// Pearson r between human scores and a machine metric, joined on item id.
pub fn correlate(human: &[HumanJudgment], machine: &BTreeMap<String, f64>) -> Result<Correlation> {
    let mut judged = BTreeMap::new();
    for j in human {
        if judged.insert(j.item_id.as_str(), f64::from(j.score)).is_some() {
            return Err(Error::invalid(format!("item {} judged twice", j.item_id)));
        }
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (id, &score) in &judged {
        if let Some(&m) = machine.get(*id) {
            xs.push(score);
            ys.push(m);
        }
    }
    let n = xs.len();
    let r = pearson(&xs, &ys)?;
    Ok(Correlation {
        r,
        n,
        missing_machine: judged.len() - n,
        missing_human: machine.len() - n,
    })
}
