use serde::{Deserialize, Serialize};

use super::batch::{LossConfig, OuterScale, SampledBatch};
use crate::diffnet::{ParamStore, Tape, Var};
use crate::encoders::{text_tape, vision_tape, EncoderConfig, Encoders};
use crate::error::{Error, Result};
use crate::worldgen::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Liv,
    VipI,
    VipL,
    Infonce,
    MultimodalVip,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Liv,
        Objective::VipI,
        Objective::VipL,
        Objective::Infonce,
        Objective::MultimodalVip,
    ];

    pub fn needs_text(self) -> bool {
        !matches!(self, Objective::VipI)
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Liv => "liv",
            Objective::VipI => "vip-i",
            Objective::VipL => "vip-l",
            Objective::Infonce => "infonce",
            Objective::MultimodalVip => "mm-vip",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "liv" => Ok(Objective::Liv),
            "vip-i" | "vip_i" => Ok(Objective::VipI),
            "vip-l" | "vip_l" => Ok(Objective::VipL),
            "infonce" => Ok(Objective::Infonce),
            "mm-vip" | "multimodal_vip" => Ok(Objective::MultimodalVip),
            other => Err(Error::InvalidConfig(format!("unknown objective {other:?}"))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unit-normalized embeddings of one batch, recorded on a tape.
pub struct BatchEmbeddings {
    pub initial: Var,
    pub mid: Var,
    pub next: Var,
    pub goal: Var,
    pub text: Option<Var>,
}

/// Runs φ once over the stacked `[o_t; o_k; o_{k+1}; g]` frames and ψ over
/// the slot texts (when `with_text`), then normalizes every row.
pub fn embed_batch(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &EncoderConfig,
    batch: &SampledBatch,
    with_text: bool,
) -> Result<BatchEmbeddings> {
    let b = batch.len();
    let frames: Vec<&Image> = batch
        .initial
        .iter()
        .chain(&batch.mid)
        .chain(&batch.next)
        .chain(&batch.goal)
        .collect();
    let all = vision_tape(tape, params, cfg, &frames)?;
    let all = tape.row_normalize(all)?;
    let idx = |part: usize| (part * b..(part + 1) * b).collect::<Vec<_>>();
    let initial = tape.select_rows(all, &idx(0))?;
    let mid = tape.select_rows(all, &idx(1))?;
    let next = tape.select_rows(all, &idx(2))?;
    let goal = tape.select_rows(all, &idx(3))?;
    let text = if with_text {
        let texts = batch.texts()?;
        let t = text_tape(tape, params, &texts)?;
        Some(tape.row_normalize(t)?)
    } else {
        None
    };
    Ok(BatchEmbeddings {
        initial,
        mid,
        next,
        goal,
        text,
    })
}

fn text_of(e: &BatchEmbeddings) -> Result<Var> {
    e.text.ok_or(Error::MissingText(0))
}

/// `(1−γ)/B Σ −S(o_t, g) + log (1/B) Σ exp[S(o_k, g) + 1 − γ S(o_{k+1}, g)]`
/// with matched goals and a single batch-level log.
pub fn vip_i_tape(tape: &mut Tape, e: &BatchEmbeddings, gamma: f64) -> Result<Var> {
    let inv = 1.0 / (1.0 - gamma);
    let cos_t = tape.row_dot(e.initial, e.goal)?;
    let s_t = tape.scale(cos_t, inv);
    let mean_t = tape.mean(s_t);
    let first = tape.scale(mean_t, -(1.0 - gamma));
    let cos_k = tape.row_dot(e.mid, e.goal)?;
    let cos_k1 = tape.row_dot(e.next, e.goal)?;
    let s_k = tape.scale(cos_k, inv);
    let s_k1 = tape.scale(cos_k1, inv * gamma);
    let diff = tape.sub(s_k, s_k1)?;
    let inner = tape.add_scalar(diff, 1.0);
    let second = tape.log_mean_exp_all(inner);
    tape.add(first, second)
}

/// Per-text log with cross-batch frame negatives:
/// `(1/B) Σ_i [−(1−γ) S(o_t^i, l^i) + log (1/B) Σ_j exp(S(o_k^j, l^i) + 1 − γ S(o_{k+1}^j, l^i))]`.
pub fn vip_l_tape(tape: &mut Tape, e: &BatchEmbeddings, gamma: f64) -> Result<Var> {
    let text = text_of(e)?;
    let inv = 1.0 / (1.0 - gamma);
    let cos_t = tape.row_dot(e.initial, text)?;
    let s_t = tape.scale(cos_t, inv);
    let mean_t = tape.mean(s_t);
    let first = tape.scale(mean_t, -(1.0 - gamma));
    let cos_k = tape.matmul_nt(text, e.mid)?;
    let cos_k1 = tape.matmul_nt(text, e.next)?;
    let s_k = tape.scale(cos_k, inv);
    let s_k1 = tape.scale(cos_k1, inv * gamma);
    let diff = tape.sub(s_k, s_k1)?;
    let inner = tape.add_scalar(diff, 1.0);
    let per_text = tape.row_log_mean_exp(inner);
    let second = tape.mean(per_text);
    tape.add(first, second)
}

/// Goal-frame/text contrastive loss with logits `(1−γ)·S = cos`; image
/// negatives per text, optionally averaged with the text-negative direction.
pub fn infonce_tape(tape: &mut Tape, e: &BatchEmbeddings, cfg: &LossConfig) -> Result<Var> {
    let text = text_of(e)?;
    let logits = tape.matmul_nt(text, e.goal)?;
    let positives = tape.diag(logits)?;
    let mean_pos = tape.mean(positives);
    let image_neg = tape.row_log_mean_exp(logits);
    let mean_image_neg = tape.mean(image_neg);
    let mut loss = tape.sub(mean_image_neg, mean_pos)?;
    if cfg.infonce_symmetric {
        let transposed = tape.transpose(logits);
        let text_neg = tape.row_log_mean_exp(transposed);
        let mean_text_neg = tape.mean(text_neg);
        let other = tape.sub(mean_text_neg, mean_pos)?;
        let both = tape.add(loss, other)?;
        loss = tape.scale(both, 0.5);
    }
    Ok(match cfg.infonce_outer_scale {
        OuterScale::One => loss,
        OuterScale::OneMinusGamma => tape.scale(loss, 1.0 - cfg.gamma),
    })
}

/// Tape handles of an objective's total and its named components.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub vip_i: Option<Var>,
    pub infonce: Option<Var>,
    pub vip_l: Option<Var>,
}

/// Scalar values read off a [`LossTerms`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossValues {
    pub total: f64,
    pub vip_i: Option<f64>,
    pub infonce: Option<f64>,
    pub vip_l: Option<f64>,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> LossValues {
        LossValues {
            total: tape.scalar(self.total),
            vip_i: self.vip_i.map(|v| tape.scalar(v)),
            infonce: self.infonce.map(|v| tape.scalar(v)),
            vip_l: self.vip_l.map(|v| tape.scalar(v)),
        }
    }
}

pub fn objective_tape(
    tape: &mut Tape,
    params: &ParamStore,
    enc: &EncoderConfig,
    batch: &SampledBatch,
    objective: Objective,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    cfg.validate()?;
    let e = embed_batch(tape, params, enc, batch, objective.needs_text())?;
    let gamma = cfg.gamma;
    let terms = match objective {
        Objective::VipI => {
            let v = vip_i_tape(tape, &e, gamma)?;
            LossTerms { total: v, vip_i: Some(v), infonce: None, vip_l: None }
        }
        Objective::VipL => {
            let v = vip_l_tape(tape, &e, gamma)?;
            LossTerms { total: v, vip_i: None, infonce: None, vip_l: Some(v) }
        }
        Objective::Infonce => {
            let v = infonce_tape(tape, &e, cfg)?;
            LossTerms { total: v, vip_i: None, infonce: Some(v), vip_l: None }
        }
        Objective::Liv => {
            let a = vip_i_tape(tape, &e, gamma)?;
            let b = infonce_tape(tape, &e, cfg)?;
            let total = tape.add(a, b)?;
            LossTerms { total, vip_i: Some(a), infonce: Some(b), vip_l: None }
        }
        Objective::MultimodalVip => {
            let a = vip_i_tape(tape, &e, gamma)?;
            let b = vip_l_tape(tape, &e, gamma)?;
            let total = tape.add(a, b)?;
            LossTerms { total, vip_i: Some(a), infonce: None, vip_l: Some(b) }
        }
    };
    Ok(terms)
}

/// Evaluates one objective on a batch without differentiating it.
pub fn evaluate(enc: &Encoders, batch: &SampledBatch, objective: Objective, cfg: &LossConfig) -> Result<LossValues> {
    let mut tape = Tape::new();
    let terms = objective_tape(&mut tape, &enc.params, &enc.config, batch, objective, cfg)?;
    let values = terms.values(&tape);
    if !values.total.is_finite() {
        return Err(Error::Numeric("loss".into()));
    }
    Ok(values)
}

pub fn vip_i_loss(enc: &Encoders, batch: &SampledBatch, gamma: f64) -> Result<f64> {
    Ok(evaluate(enc, batch, Objective::VipI, &LossConfig::with_gamma(gamma))?.total)
}

pub fn vip_l_loss(enc: &Encoders, batch: &SampledBatch, gamma: f64) -> Result<f64> {
    Ok(evaluate(enc, batch, Objective::VipL, &LossConfig::with_gamma(gamma))?.total)
}

pub fn infonce_loss(enc: &Encoders, batch: &SampledBatch, cfg: &LossConfig) -> Result<f64> {
    Ok(evaluate(enc, batch, Objective::Infonce, cfg)?.total)
}

pub fn liv_loss(enc: &Encoders, batch: &SampledBatch, cfg: &LossConfig) -> Result<f64> {
    Ok(evaluate(enc, batch, Objective::Liv, cfg)?.total)
}

pub fn multimodal_vip_loss(enc: &Encoders, batch: &SampledBatch, gamma: f64) -> Result<f64> {
    Ok(evaluate(enc, batch, Objective::MultimodalVip, &LossConfig::with_gamma(gamma))?.total)
}
