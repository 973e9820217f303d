use ndarray::{Array2, ArrayView2};

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

fn layer_names(prefix: &str, i: usize) -> (String, String) {
    (format!("{prefix}.layer{i}.W"), format!("{prefix}.layer{i}.b"))
}

/// Number of consecutive `prefix.layer<i>` blocks present in `store`.
pub fn mlp_depth(store: &ParamStore, prefix: &str) -> usize {
    (0..)
        .take_while(|&i| store.contains(&layer_names(prefix, i).0))
        .count()
}

/// Layer widths `[in, hidden.., out]` read back from the stored shapes.
pub fn mlp_dims(store: &ParamStore, prefix: &str) -> Result<Vec<usize>> {
    let depth = mlp_depth(store, prefix);
    if depth == 0 {
        return Err(Error::shape(prefix, "no layers found"));
    }
    let mut dims = Vec::with_capacity(depth + 1);
    for i in 0..depth {
        let (w, _) = layer_names(prefix, i);
        let (r, c) = store.get(&w).expect("layer present").matrix_dims();
        if i == 0 {
            dims.push(r);
        }
        dims.push(c);
    }
    Ok(dims)
}

fn layer_shapes(store: &ParamStore, prefix: &str, i: usize, in_width: usize) -> Result<(usize, usize)> {
    let (w, b) = layer_names(prefix, i);
    let wt = store.get(&w).ok_or_else(|| Error::shape(&w, "missing weight"))?;
    let bt = store.get(&b).ok_or_else(|| Error::shape(&b, "missing bias"))?;
    let (r, c) = wt.matrix_dims();
    if wt.shape.len() != 2 || r != in_width {
        return Err(Error::shape(
            format!("{prefix}.layer{i}"),
            format!("weight {:?} cannot take input width {in_width}", wt.shape),
        ));
    }
    if bt.len() != c {
        return Err(Error::shape(
            format!("{prefix}.layer{i}"),
            format!("bias {:?} does not match output width {c}", bt.shape),
        ));
    }
    Ok((r, c))
}

/// Batched forward pass without recording a tape: affine→ReLU on hidden
/// layers, affine only on the last.
pub fn mlp_forward_batch(store: &ParamStore, prefix: &str, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let depth = mlp_depth(store, prefix);
    if depth == 0 {
        return Err(Error::shape(prefix, "no layers found"));
    }
    let mut h = input.to_owned();
    for i in 0..depth {
        layer_shapes(store, prefix, i, h.ncols())?;
        let (w, b) = layer_names(prefix, i);
        h = h.dot(&store.get(&w).unwrap().as_matrix()) + &store.get(&b).unwrap().as_matrix();
        if i + 1 < depth {
            h.mapv_inplace(|a| a.max(0.0));
        }
    }
    Ok(h)
}

pub fn mlp_forward(store: &ParamStore, prefix: &str, input: &[f64]) -> Result<Vec<f64>> {
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
    Ok(mlp_forward_batch(store, prefix, x)?.into_raw_vec_and_offset().0)
}

/// Records the same network on a tape, one row per example.
pub fn mlp_tape(tape: &mut Tape, store: &ParamStore, prefix: &str, input: Var) -> Result<Var> {
    let depth = mlp_depth(store, prefix);
    if depth == 0 {
        return Err(Error::shape(prefix, "no layers found"));
    }
    let mut h = input;
    for i in 0..depth {
        layer_shapes(store, prefix, i, tape.shape(h).1)?;
        let (w, b) = layer_names(prefix, i);
        let wv = tape.param(store, &w)?;
        let bv = tape.param(store, &b)?;
        let z = tape.matmul(h, wv)?;
        h = tape.add_bias(z, bv)?;
        if i + 1 < depth {
            h = tape.relu(h);
        }
    }
    Ok(h)
}
