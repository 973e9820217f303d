use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worldgen::Rng;

/// A dense real tensor stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rank ≤ 2 view as a matrix; vectors become a single row.
    pub fn as_matrix(&self) -> ArrayView2<'_, f64> {
        let (r, c) = self.matrix_dims();
        ArrayView2::from_shape((r, c), &self.data).expect("tensor length matches shape")
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        self.as_matrix().to_owned()
    }

    pub(crate) fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => (other[..other.len() - 1].iter().product(), other[other.len() - 1]),
        }
    }
}

/// Named parameter tensors, iterated in lexicographic name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

pub type Gradients = ParamStore;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(&t.shape)))
                .collect(),
        }
    }

    /// Parameters whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, t)| (k.clone(), t.clone()))
                .collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|((ka, ta), (kb, tb))| ka == kb && ta.shape == tb.shape)
    }

    /// First parameter (in name order) holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|(_, t)| t.data.iter().any(|x| !x.is_finite()))
            .map(|(k, _)| k.as_str())
    }

    /// Adds a ReLU MLP under `prefix.layer<i>.{W,b}`: He-uniform weights,
    /// zero biases, values representable in `f32`.
    pub fn init_mlp(&mut self, prefix: &str, dims: &[usize], rng: &mut Rng) -> Result<()> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!(
                "mlp {prefix} needs ≥2 positive widths, got {dims:?}"
            )));
        }
        for (i, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound) as f32 as f64)
                .collect();
            self.insert(format!("{prefix}.layer{i}.W"), Tensor::from_vec(&[fan_in, fan_out], w)?)?;
            self.insert(format!("{prefix}.layer{i}.b"), Tensor::zeros(&[fan_out]))?;
        }
        Ok(())
    }

    pub fn init_table(&mut self, name: &str, rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Result<()> {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-scale..scale) as f32 as f64)
            .collect();
        self.insert(name, Tensor::from_vec(&[rows, cols], data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::rng_from_seed;

    #[test]
    fn iteration_is_lexicographic() {
        let mut p = ParamStore::new();
        p.insert("b", Tensor::zeros(&[1])).unwrap();
        p.insert("a", Tensor::zeros(&[2])).unwrap();
        p.insert("a.x", Tensor::zeros(&[3])).unwrap();
        let names: Vec<_> = p.names().cloned().collect();
        assert_eq!(names, vec!["a", "a.x", "b"]);
        assert_eq!(p.num_scalars(), 6);
        assert!(p.insert("a", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn mlp_init_is_seeded_and_f32_exact() {
        let mut a = ParamStore::new();
        a.init_mlp("net", &[5, 4, 2], &mut rng_from_seed(3)).unwrap();
        let mut b = ParamStore::new();
        b.init_mlp("net", &[5, 4, 2], &mut rng_from_seed(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get("net.layer0.W").unwrap().shape, vec![5, 4]);
        assert_eq!(a.get("net.layer1.b").unwrap().shape, vec![2]);
        for (_, t) in a.iter() {
            assert!(t.data.iter().all(|&x| x as f32 as f64 == x));
        }
    }
}
