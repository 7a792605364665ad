use serde::Serialize;

use super::spec::{BlockWeights, TransformerSpec};
use crate::error::{invalid, Error, Result};
use crate::numerics::{dot, softmax, Matrix, ProbVec};

/// Kernel feature maps for linear attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMap {
    /// `elu(x) + 1`
    Elu1p,
    Relu,
}

impl FeatureMap {
    fn apply(&self, x: f64) -> f64 {
        match self {
            FeatureMap::Elu1p => {
                if x > 0.0 {
                    x + 1.0
                } else {
                    x.exp()
                }
            }
            FeatureMap::Relu => x.max(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "feature_map")]
pub enum Attention {
    Softmax,
    Linear(FeatureMap),
}

/// One head at one position.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeadStep {
    pub query: Vec<f64>,
    /// Keys of positions `0..=t`.
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    /// Scaled dot products for softmax attention, kernel values for linear.
    pub scores: Vec<f64>,
    pub weights: ProbVec,
    pub context: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeadTrace {
    pub steps: Vec<HeadStep>,
    /// `l = o_T U` at the final position.
    pub logits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockTrace {
    pub input: Vec<Vec<f64>>,
    pub heads: Vec<HeadTrace>,
    /// `a`, the summed head outputs per position.
    pub attention: Vec<Vec<f64>>,
    /// `z`, the FFN output per position.
    pub ffn: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
}

/// `L = L_0 + L_a + L_f` at the final position.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogitSplit {
    pub input: Vec<f64>,
    pub attention: Vec<f64>,
    pub ffn: Vec<f64>,
    pub total: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForwardTrace {
    pub tokens: Vec<usize>,
    pub attention: Attention,
    pub blocks: Vec<BlockTrace>,
    pub logits: LogitSplit,
    pub distribution: ProbVec,
}

impl ForwardTrace {
    pub fn input(&self) -> Matrix {
        Matrix::from_rows(&self.blocks[0].input).expect("rectangular trace")
    }

    pub fn output(&self) -> Matrix {
        Matrix::from_rows(&self.blocks.last().expect("at least one block").output).expect("rectangular trace")
    }

    /// Per-head logits of every head in every block.
    pub fn head_logits(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().flat_map(|b| b.heads.iter().map(|h| h.logits.clone())).collect()
    }

    pub fn head_distributions(&self) -> Result<Vec<ProbVec>> {
        self.head_logits().iter().map(|l| softmax(l)).collect()
    }

    pub fn argmax(&self) -> usize {
        self.distribution.argmax()
    }

    /// Head step of `head` in `block` at the final position.
    pub fn last_step(&self, block: usize, head: usize) -> &HeadStep {
        self.blocks[block].heads[head].steps.last().expect("nonempty sequence")
    }
}

fn rows_times(x: &Matrix, w: &Matrix) -> Result<Vec<Vec<f64>>> {
    Ok(x.matmul(w)?.row_vectors())
}

fn add_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

fn run_block(block: &BlockWeights, x: &Matrix, kind: Attention, d_k: usize) -> Result<BlockTrace> {
    let t_len = x.rows();
    let d_model = x.cols();
    let mut attention = vec![vec![0.0; d_model]; t_len];
    let mut heads = Vec::with_capacity(block.heads.len());
    for w in &block.heads {
        let q = rows_times(x, &w.wq)?;
        let k = rows_times(x, &w.wk)?;
        let v = rows_times(x, &w.wv)?;
        let mut steps = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let keys = k[..=t].to_vec();
            let values = v[..=t].to_vec();
            let (scores, weights) = match kind {
                Attention::Softmax => {
                    let scale = 1.0 / (d_k as f64).sqrt();
                    let s: Vec<f64> = keys.iter().map(|kr| dot(&q[t], kr) * scale).collect();
                    let a = softmax(&s)?;
                    (s, a)
                }
                Attention::Linear(phi) => {
                    let fq: Vec<f64> = q[t].iter().map(|z| phi.apply(*z)).collect();
                    let s: Vec<f64> = keys
                        .iter()
                        .map(|kr| dot(&fq, &kr.iter().map(|z| phi.apply(*z)).collect::<Vec<_>>()))
                        .collect();
                    let norm: f64 = s.iter().sum();
                    if norm <= 0.0 {
                        return Err(Error::DegenerateInput(format!(
                            "linear attention normalizer is {norm} at position {t}"
                        )));
                    }
                    let a = ProbVec::new(s.iter().map(|x| x / norm).collect())?;
                    (s, a)
                }
            };
            let mut context = vec![0.0; w.wv.cols()];
            for (a, vr) in weights.iter().zip(&values) {
                for (c, vv) in context.iter_mut().zip(vr) {
                    *c += a * vv;
                }
            }
            let output = w.wo.left_mul(&context)?;
            for (acc, o) in attention[t].iter_mut().zip(&output) {
                *acc += o;
            }
            steps.push(HeadStep { query: q[t].clone(), keys, values, scores, weights, context, output });
        }
        heads.push(HeadTrace { steps, logits: Vec::new() });
    }
    let x_rows = x.row_vectors();
    let pre = add_rows(&x_rows, &attention);
    let f = &block.ffn;
    let mut ffn = Vec::with_capacity(t_len);
    for row in &pre {
        let hidden: Vec<f64> =
            f.w1.left_mul(row)?.iter().zip(&f.b1).map(|(h, b)| (h + b).max(0.0)).collect();
        ffn.push(f.w2.left_mul(&hidden)?.iter().zip(&f.b2).map(|(z, b)| z + b).collect());
    }
    let output = add_rows(&pre, &ffn);
    Ok(BlockTrace { input: x_rows, heads, attention, ffn, output })
}

impl TransformerSpec {
    fn embed(&self, tokens: &[usize]) -> Result<Matrix> {
        let d = self.dims();
        if tokens.is_empty() {
            return Err(invalid("empty token sequence"));
        }
        if tokens.len() > d.seq_len {
            return Err(invalid(format!("{} tokens exceed the context of {}", tokens.len(), d.seq_len)));
        }
        let mut rows = Vec::with_capacity(tokens.len());
        for (t, tok) in tokens.iter().enumerate() {
            if *tok >= d.vocab {
                return Err(invalid(format!("token {tok} outside a vocabulary of {}", d.vocab)));
            }
            let mut r = self.embedding().row(*tok).to_vec();
            if let Some(p) = self.positional() {
                r.iter_mut().zip(p.row(t)).for_each(|(a, b)| *a += b);
            }
            rows.push(r);
        }
        Matrix::from_rows(&rows)
    }

    /// Runs `depth` blocks from an input matrix.
    pub fn run_from(&self, x0: &Matrix, kind: Attention, depth: usize) -> Result<Vec<BlockTrace>> {
        let d = self.dims();
        if x0.cols() != d.d_model || x0.rows() == 0 {
            return Err(invalid(format!("input is {:?}, expected Tx{}", x0.shape(), d.d_model)));
        }
        let mut x = x0.clone();
        let mut out = Vec::with_capacity(depth);
        for l in 0..depth {
            let b = run_block(self.block(l), &x, kind, d.d_k)?;
            x = Matrix::from_rows(&b.output)?;
            out.push(b);
        }
        Ok(out)
    }

    fn trace(&self, tokens: &[usize], kind: Attention) -> Result<ForwardTrace> {
        let x0 = self.embed(tokens)?;
        let mut blocks = self.run_from(&x0, kind, self.blocks().len())?;
        let u = self.unembedding();
        let last = tokens.len() - 1;
        let input = u.left_mul(x0.row(last))?;
        let d_vocab = input.len();
        let mut att = vec![0.0; d_vocab];
        let mut ffn = vec![0.0; d_vocab];
        for b in &mut blocks {
            for h in &mut b.heads {
                h.logits = u.left_mul(&h.steps[last].output)?;
            }
            let la = u.left_mul(&b.attention[last])?;
            let lf = u.left_mul(&b.ffn[last])?;
            att.iter_mut().zip(&la).for_each(|(a, x)| *a += x);
            ffn.iter_mut().zip(&lf).for_each(|(a, x)| *a += x);
        }
        let total = u.left_mul(&blocks.last().expect("one block").output[last])?;
        let distribution = softmax(&total)?;
        Ok(ForwardTrace {
            tokens: tokens.to_vec(),
            attention: kind,
            blocks,
            logits: LogitSplit { input, attention: att, ffn, total },
            distribution,
        })
    }

    /// Causal softmax-attention forward pass with a full trace.
    pub fn forward(&self, tokens: &[usize]) -> Result<ForwardTrace> {
        self.trace(tokens, Attention::Softmax)
    }

    /// The same pass with kernelized attention `φ(Q)·φ(K_i) / Σ_j φ(Q)·φ(K_j)`.
    pub fn linear_attention_forward(&self, tokens: &[usize], phi: FeatureMap) -> Result<ForwardTrace> {
        self.trace(tokens, Attention::Linear(phi))
    }

    /// Head outputs at `t` computed the concatenated way: `[h_1 … h_H] W̃_O`
    /// with `W̃_O` the vertical stack of every `W_O`.
    pub fn concatenated_output(&self, block: &BlockTrace, layer: usize, t: usize) -> Result<Vec<f64>> {
        let weights = self.block(layer);
        let concat: Vec<f64> = block.heads.iter().flat_map(|h| h.steps[t].context.clone()).collect();
        let stacked: Vec<Vec<f64>> = weights.heads.iter().flat_map(|w| w.wo.row_vectors()).collect();
        Matrix::from_rows(&stacked)?.left_mul(&concat)
    }
}
