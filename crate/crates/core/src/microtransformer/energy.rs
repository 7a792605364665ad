use super::forward::{Attention, BlockTrace};
use super::spec::TransformerSpec;
use crate::error::{invalid, Result};
use crate::numerics::{norm2, Matrix};

/// `E_l = Σ_h Σ_t ‖h_t‖²` for one block.
pub fn block_energy(block: &BlockTrace) -> f64 {
    block.heads.iter().flat_map(|h| h.steps.iter()).map(|s| norm2(&s.context).powi(2)).sum()
}

/// Discounted energies `γ^(l-1) E_l` for `l = 1..=depth` on one input.
pub fn layer_energies(x0: &Matrix, spec: &TransformerSpec, depth: usize, gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let blocks = spec.run_from(x0, Attention::Softmax, depth)?;
    Ok(blocks.iter().enumerate().map(|(l, b)| gamma.powi(l as i32) * block_energy(b)).collect())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("discount {gamma} outside (0, 1)")));
    }
    Ok(())
}

/// Supremum over the inputs of the discounted energy up to `depth`. Zero on
/// the empty set.
pub fn semantic_energy(inputs: &[Matrix], spec: &TransformerSpec, depth: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let mut best = 0.0f64;
    for x in inputs {
        let e: f64 = layer_energies(x, spec, depth, gamma)?.iter().sum();
        best = best.max(e);
    }
    Ok(best)
}

/// The inputs together with every intermediate state up to `depth` blocks.
/// Exact duplicates are kept once; order is inputs first, then states by
/// input and depth.
pub fn emergence_states(inputs: &[Matrix], spec: &TransformerSpec, depth: usize) -> Result<Vec<Matrix>> {
    let mut out: Vec<Matrix> = Vec::new();
    let push = |m: Matrix, out: &mut Vec<Matrix>| {
        if !out.contains(&m) {
            out.push(m);
        }
    };
    for x in inputs {
        push(x.clone(), &mut out);
    }
    for x in inputs {
        for b in spec.run_from(x, Attention::Softmax, depth)? {
            push(Matrix::from_rows(&b.output)?, &mut out);
        }
    }
    Ok(out)
}
