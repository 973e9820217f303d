use rand::Rng as _;

use super::params::{Gradients, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::worldgen::Rng;

/// Evaluates `loss` and differentiates it with the reverse-mode tape.
pub fn loss_gradient<F>(params: &ParamStore, loss: F) -> Result<(f64, Gradients)>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, params)?;
    let value = tape.scalar(out);
    if !value.is_finite() {
        return Err(Error::Numeric("loss".into()));
    }
    let grads = tape.gradients(out, params)?;
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::Numeric(format!("gradient of {name}")));
    }
    Ok((value, grads))
}

pub fn loss_value<F>(params: &ParamStore, loss: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, params)?;
    Ok(tape.scalar(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index where the worst error occurred.
    pub worst: Option<(String, usize)>,
    pub samples: usize,
}

/// Compares analytic gradients with central differences on `samples`
/// uniformly chosen scalars. Relative error uses
/// `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn finite_diff_check<F>(
    params: &ParamStore,
    loss: F,
    step: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if !(step > 0.0) || samples == 0 {
        return Err(Error::InvalidConfig("finite_diff_check needs step > 0 and samples ≥ 1".into()));
    }
    let (_, grads) = loss_gradient(params, &loss)?;
    let total = params.num_scalars();
    if total == 0 {
        return Err(Error::InvalidConfig("no parameters to check".into()));
    }
    let names: Vec<(String, usize)> = params.iter().map(|(k, t)| (k.clone(), t.len())).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        samples,
    };
    let mut probe = params.clone();
    for _ in 0..samples {
        let mut flat = rng.random_range(0..total);
        let (name, idx) = names
            .iter()
            .find_map(|(k, n)| {
                if flat < *n {
                    Some((k.clone(), flat))
                } else {
                    flat -= n;
                    None
                }
            })
            .expect("index within total");
        let original = params.get(&name).unwrap().data[idx];
        probe.get_mut(&name).unwrap().data[idx] = original + step;
        let plus = loss_value(&probe, &loss)?;
        probe.get_mut(&name).unwrap().data[idx] = original - step;
        let minus = loss_value(&probe, &loss)?;
        probe.get_mut(&name).unwrap().data[idx] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(name));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads.get(&name).unwrap().data[idx];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((name, idx));
        }
    }
    Ok(report)
}
