//! Finite-difference verification of the tape gradients.

use super::{Graph, NnError, Tensor};

/// Shape and starting values of one leaf handed to [`check_gradients`].
#[derive(Debug, Clone)]
pub struct LeafSpec {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl LeafSpec {
    pub fn new(shape: &[usize], values: Vec<f64>) -> Self {
        Self {
            shape: shape.to_vec(),
            values,
        }
    }
}

const STEP: f64 = 1e-4;

/// Compares analytic gradients against central differences.
///
/// `build` must deterministically assemble a scalar-output graph from the
/// supplied leaves; anything it creates internally (dropout masks, labels)
/// stays frozen across the rebuilds. Returns the maximum relative error
/// `|a - n| / max(|a|, |n|, 1e-8)` over every element of every leaf.
pub fn check_gradients<F>(leaves: &[LeafSpec], build: F) -> Result<f64, NnError>
where
    F: Fn(&mut Graph, &[Tensor]) -> Result<Tensor, NnError>,
{
    let run = |values: &[Vec<f64>]| -> Result<(f64, Vec<Vec<f64>>), NnError> {
        let mut graph = Graph::new();
        let tensors: Vec<Tensor> = leaves
            .iter()
            .zip(values)
            .map(|(spec, vals)| graph.leaf(&spec.shape, vals.clone()))
            .collect::<Result<_, _>>()?;
        let out = build(&mut graph, &tensors)?;
        if graph.value(out).len() != 1 {
            return Err(NnError::NotScalar(graph.value(out).len()));
        }
        let value = graph.value(out)[0];
        graph.backward(out)?;
        let grads = tensors.iter().map(|t| graph.grad(*t).to_vec()).collect();
        Ok((value, grads))
    };

    let base: Vec<Vec<f64>> = leaves.iter().map(|l| l.values.clone()).collect();
    let (_, analytic) = run(&base)?;

    let mut worst: f64 = 0.0;
    for (li, leaf) in leaves.iter().enumerate() {
        for vi in 0..leaf.values.len() {
            let mut plus = base.clone();
            plus[li][vi] += STEP;
            let mut minus = base.clone();
            minus[li][vi] -= STEP;
            let (f_plus, _) = run(&plus)?;
            let (f_minus, _) = run(&minus)?;
            let numeric = (f_plus - f_minus) / (2.0 * STEP);
            let a = analytic[li][vi];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
