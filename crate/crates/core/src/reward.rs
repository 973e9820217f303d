//! Goal-conditioned value `V(o; goal) = S(φ(o), embed(goal))`, the potential
//! reward `V(o_{t+1}) − V(o_t)`, per-frame cost curves and their quality
//! metrics.
//!
//! Units: `value` and `potential_reward` use the γ-weighted similarity
//! (range `±1/(1−γ)`); cost curves report the plain negative cosine, i.e.
//! `−(1−γ)·value`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::encoders::Encoders;
use crate::error::{Error, Result};
use crate::objectives::{cosine, similarity};
use crate::worldgen::Image;

#[derive(Debug, Clone, PartialEq)]
pub enum GoalSpec {
    Image(Image),
    Text(Vec<usize>),
}

impl GoalSpec {
    pub fn kind(&self) -> GoalKind {
        match self {
            GoalSpec::Image(_) => GoalKind::Image,
            GoalSpec::Text(_) => GoalKind::Text,
        }
    }

    pub fn embed(&self, enc: &Encoders) -> Result<Vec<f64>> {
        match self {
            GoalSpec::Image(frame) => enc.encode_image(frame),
            GoalSpec::Text(ids) => enc.encode_text(ids),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalKind {
    Image,
    Text,
}

pub fn value(enc: &Encoders, frame: &Image, goal: &GoalSpec, gamma: f64) -> Result<f64> {
    similarity(&enc.encode_image(frame)?, &goal.embed(enc)?, gamma)
}

pub fn potential_reward(enc: &Encoders, o_t: &Image, o_t1: &Image, goal: &GoalSpec, gamma: f64) -> Result<f64> {
    let g = goal.embed(enc)?;
    let v1 = similarity(&enc.encode_image(o_t1)?, &g, gamma)?;
    let v0 = similarity(&enc.encode_image(o_t)?, &g, gamma)?;
    Ok(v1 - v0)
}

/// Values of every frame against one pre-embedded goal.
pub fn values_against(enc: &Encoders, frames: &[&Image], goal_embedding: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let emb = enc.encode_images(frames)?;
    emb.rows()
        .into_iter()
        .map(|row| similarity(row.as_slice().expect("contiguous row"), goal_embedding, gamma))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub values: Vec<f64>,
    pub goal: GoalKind,
}

impl CostCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-frame negative cosine similarity to the goal, in frame order.
pub fn cost_curve(enc: &Encoders, frames: &[Image], goal: &GoalSpec) -> Result<CostCurve> {
    if frames.is_empty() {
        return Err(Error::CurveTooShort(0));
    }
    let g = goal.embed(enc)?;
    let refs: Vec<&Image> = frames.iter().collect();
    let emb = enc.encode_images(&refs)?;
    let values = emb
        .rows()
        .into_iter()
        .map(|row| cosine(row.as_slice().expect("contiguous row"), &g).map(|c| -c))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostCurve {
        values,
        goal: goal.kind(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveMetrics {
    pub spearman: f64,
    pub monotone_fraction: f64,
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Spearman correlation of frame index with negated cost (+1: cost falls
/// steadily; a constant curve scores 0) and the fraction of strictly
/// decreasing steps.
pub fn curve_metrics(curve: &CostCurve) -> Result<CurveMetrics> {
    let n = curve.len();
    if n < 2 {
        return Err(Error::CurveTooShort(n));
    }
    let index: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let negated: Vec<f64> = curve.values.iter().map(|c| -c).collect();
    let spearman = pearson(&average_ranks(&index), &average_ranks(&negated));
    let falling = curve.values.windows(2).filter(|w| w[1] < w[0]).count();
    Ok(CurveMetrics {
        spearman,
        monotone_fraction: falling as f64 / (n - 1) as f64,
    })
}

/// `frame,neg_cos_image_goal,neg_cos_text_goal`, keeping only the columns
/// that were requested.
pub fn curves_csv(image: Option<&CostCurve>, text: Option<&CostCurve>) -> Result<String> {
    let n = image.or(text).map(CostCurve::len).unwrap_or(0);
    if image.is_some_and(|c| c.len() != n) || text.is_some_and(|c| c.len() != n) {
        return Err(Error::shape("curves_csv", "curves differ in length"));
    }
    let mut out = String::from("frame");
    if image.is_some() {
        out.push_str(",neg_cos_image_goal");
    }
    if text.is_some() {
        out.push_str(",neg_cos_text_goal");
    }
    out.push('\n');
    for i in 0..n {
        let _ = write!(out, "{i}");
        for c in [image, text].into_iter().flatten() {
            let _ = write!(out, ",{}", c.values[i]);
        }
        out.push('\n');
    }
    Ok(out)
}
