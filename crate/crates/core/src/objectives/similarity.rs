use crate::diffnet::NORM_FLOOR;
use crate::error::{Error, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Plain cosine similarity; zero-norm inputs are rejected.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine", format!("{} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    for n in [na, nb] {
        if !(n >= NORM_FLOOR) {
            return Err(Error::DegenerateEmbedding { norm: n });
        }
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// γ-weighted cosine `cos(a,b) / (1−γ)`, valued in `[−1/(1−γ), 1/(1−γ)]`.
pub fn similarity(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    Ok(cosine(a, b)? / (1.0 - gamma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let a = [0.3, -1.2, 2.0];
        assert!((similarity(&a, &a, 0.98).unwrap() - 50.0).abs() < 1e-9);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((similarity(&a, &neg, 0.96).unwrap() + 25.0).abs() < 1e-9);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 3.0], 0.98).unwrap(), 0.0);
    }

    #[test]
    fn zero_vector_is_rejected() {
        assert!(matches!(
            similarity(&[0.0, 0.0], &[1.0, 0.0], 0.9),
            Err(Error::DegenerateEmbedding { .. })
        ));
    }
}
