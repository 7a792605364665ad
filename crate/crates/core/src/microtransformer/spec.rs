use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::Matrix;

/// Architecture counts, as listed in a bundle manifest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d_model: usize,
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_ff: usize,
    pub vocab: usize,
    pub seq_len: usize,
    #[serde(default = "one")]
    pub blocks: usize,
    #[serde(default)]
    pub positional: bool,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FfnWeights {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub heads: Vec<HeadWeights>,
    pub ffn: FfnWeights,
}

/// Every weight of the model. The unembedding is always `Eᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerSpec {
    dims: Dims,
    embedding: Matrix,
    unembedding: Matrix,
    blocks: Vec<BlockWeights>,
    positional: Option<Matrix>,
    vocab: Option<Vec<String>>,
}

fn expect_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(invalid(format!("{name} is {:?}, expected {rows}x{cols}", m.shape())));
    }
    Ok(())
}

impl TransformerSpec {
    pub fn new(
        dims: Dims,
        embedding: Matrix,
        blocks: Vec<BlockWeights>,
        positional: Option<Matrix>,
        vocab: Option<Vec<String>>,
    ) -> Result<Self> {
        let d = dims;
        if d.d_model == 0 || d.vocab == 0 || d.seq_len == 0 || d.heads == 0 || d.blocks == 0 {
            return Err(invalid("all counts must be positive"));
        }
        expect_shape("E", &embedding, d.vocab, d.d_model)?;
        if blocks.len() != d.blocks {
            return Err(invalid(format!("{} blocks given, manifest says {}", blocks.len(), d.blocks)));
        }
        for (b, block) in blocks.iter().enumerate() {
            if block.heads.len() != d.heads {
                return Err(invalid(format!("block {b}: {} heads, expected {}", block.heads.len(), d.heads)));
            }
            for (h, w) in block.heads.iter().enumerate() {
                expect_shape(&format!("block {b} WQ.h{}", h + 1), &w.wq, d.d_model, d.d_k)?;
                expect_shape(&format!("block {b} WK.h{}", h + 1), &w.wk, d.d_model, d.d_k)?;
                expect_shape(&format!("block {b} WV.h{}", h + 1), &w.wv, d.d_model, d.d_v)?;
                expect_shape(&format!("block {b} WO.h{}", h + 1), &w.wo, d.d_v, d.d_model)?;
            }
            let f = &block.ffn;
            expect_shape(&format!("block {b} W1"), &f.w1, d.d_model, d.d_ff)?;
            expect_shape(&format!("block {b} W2"), &f.w2, d.d_ff, d.d_model)?;
            if f.b1.len() != d.d_ff || f.b2.len() != d.d_model {
                return Err(invalid(format!("block {b}: bias lengths do not match d_ff / d_model")));
            }
            if f.b1.iter().chain(&f.b2).any(|x| !x.is_finite()) {
                return Err(invalid(format!("block {b}: non-finite bias")));
            }
        }
        match (&positional, d.positional) {
            (Some(p), true) => expect_shape("P", p, d.seq_len, d.d_model)?,
            (None, false) => {}
            _ => return Err(invalid("positional matrix and manifest flag disagree")),
        }
        if let Some(v) = &vocab {
            if v.len() != d.vocab {
                return Err(invalid(format!("vocabulary has {} entries, expected {}", v.len(), d.vocab)));
            }
        }
        let unembedding = embedding.transpose();
        Ok(TransformerSpec { dims, embedding, unembedding, blocks, positional, vocab })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn embedding(&self) -> &Matrix {
        &self.embedding
    }

    pub fn unembedding(&self) -> &Matrix {
        &self.unembedding
    }

    pub fn blocks(&self) -> &[BlockWeights] {
        &self.blocks
    }

    /// Block applied at layer `l` (0-based); layers past the stack reuse the
    /// last block.
    pub fn block(&self, l: usize) -> &BlockWeights {
        &self.blocks[l.min(self.blocks.len() - 1)]
    }

    pub fn positional(&self) -> Option<&Matrix> {
        self.positional.as_ref()
    }

    pub fn vocab(&self) -> Option<&[String]> {
        self.vocab.as_deref()
    }

    pub fn token_name(&self, id: usize) -> String {
        self.vocab.as_ref().and_then(|v| v.get(id).cloned()).unwrap_or_else(|| id.to_string())
    }

    /// Whitespace separated tokens, each a vocabulary entry or an index.
    pub fn parse_tokens(&self, text: &str) -> Result<Vec<usize>> {
        text.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|tok| {
                if let Some(i) = self.vocab.as_ref().and_then(|v| v.iter().position(|w| w == tok)) {
                    return Ok(i);
                }
                tok.parse::<usize>().map_err(|_| invalid(format!("unknown token {tok:?}")))
            })
            .collect()
    }

    /// The same architecture with every attention and FFN weight zeroed.
    pub fn zeroed(&self) -> TransformerSpec {
        let mut s = self.clone();
        for b in &mut s.blocks {
            for h in &mut b.heads {
                h.wq = h.wq.scale(0.0);
                h.wk = h.wk.scale(0.0);
                h.wv = h.wv.scale(0.0);
                h.wo = h.wo.scale(0.0);
            }
            b.ffn.w1 = b.ffn.w1.scale(0.0);
            b.ffn.w2 = b.ffn.w2.scale(0.0);
            b.ffn.b1.iter_mut().for_each(|x| *x = 0.0);
            b.ffn.b2.iter_mut().for_each(|x| *x = 0.0);
        }
        s
    }

    /// The two-head model that completes "The quick brown" with "fox".
    pub fn builtin() -> TransformerSpec {
        let dims = Dims {
            d_model: 5,
            heads: 2,
            d_k: 2,
            d_v: 2,
            d_ff: 6,
            vocab: 6,
            seq_len: 3,
            blocks: 1,
            positional: false,
        };
        let mut e = Matrix::zeros(6, 5);
        for i in 0..5 {
            e.set(i + 1, i, 1.0);
        }
        let sparse = |rows, cols, entries: &[(usize, usize, f64)]| {
            let mut m = Matrix::zeros(rows, cols);
            for (r, c, v) in entries {
                m.set(*r, *c, *v);
            }
            m
        };
        // both heads read only "brown" (row 2 of d_model)
        let head1 = HeadWeights {
            wq: sparse(5, 2, &[(2, 1, 1.0)]),
            wk: sparse(5, 2, &[(2, 1, 1.0)]),
            wv: sparse(5, 2, &[(2, 1, 3.0)]),
            wo: sparse(2, 5, &[(1, 3, 1.0)]),
        };
        let head2 = HeadWeights {
            wq: sparse(5, 2, &[(2, 0, 1.0)]),
            wk: sparse(5, 2, &[(2, 0, 1.0)]),
            wv: sparse(5, 2, &[(2, 0, 1.2)]),
            wo: sparse(2, 5, &[(0, 4, 1.0)]),
        };
        let mut w1 = Matrix::zeros(5, 6);
        for i in 0..5 {
            w1.set(i, i, 1.0);
        }
        let w2 = sparse(
            6,
            5,
            &[(2, 2, 0.13), (3, 3, -0.13), (3, 4, -0.05), (4, 0, -0.05), (4, 1, 0.35)],
        );
        let ffn = FfnWeights { w1, b1: vec![0.0; 6], w2, b2: vec![0.0; 5] };
        let vocab = ["PAD", "The", "quick", "brown", "fox", "dog"].map(String::from).to_vec();
        TransformerSpec::new(dims, e, vec![BlockWeights { heads: vec![head1, head2], ffn }], None, Some(vocab))
            .expect("builtin weights are consistent")
    }
}
