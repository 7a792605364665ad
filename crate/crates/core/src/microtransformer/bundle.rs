//! Weight bundles: a directory with `manifest.toml`, one `.mat` file per
//! matrix and an optional `vocab.txt` (one token per line).
//!
//! A `.mat` file starts with a `rows cols` line followed by the entries in
//! row-major order, whitespace separated. `#` starts a comment. Biases are
//! stored as `1 n` matrices. With more than one block every per-block file
//! name is prefixed by `block{b}.` (1-based).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::spec::{BlockWeights, Dims, FfnWeights, HeadWeights, TransformerSpec};
use crate::error::{invalid, Error, Result};
use crate::knowledge::read_text_file;
use crate::numerics::Matrix;

pub fn parse_mat(text: &str) -> Result<Matrix> {
    let mut nums = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .map(String::from);
    let mut dim = |what: &str| -> Result<usize> {
        let tok = nums.next().ok_or_else(|| Error::Parse(format!("missing {what} in header")))?;
        tok.parse().map_err(|_| Error::Parse(format!("bad {what} {tok:?}")))
    };
    let rows = dim("rows")?;
    let cols = dim("cols")?;
    let data = nums
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if data.len() != rows * cols {
        return Err(Error::Parse(format!("header says {rows}x{cols}, found {} entries", data.len())));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse("non-finite entry".into()));
    }
    Matrix::new(rows, cols, data).map_err(|e| Error::Parse(e.to_string()))
}

pub fn format_mat(m: &Matrix) -> String {
    let mut s = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

fn prefix(dims: &Dims, b: usize) -> String {
    if dims.blocks > 1 {
        format!("block{}.", b + 1)
    } else {
        String::new()
    }
}

fn mat(dir: &Path, name: &str) -> Result<Matrix> {
    let path = dir.join(name);
    parse_mat(&read_text_file(&path)?).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn bias(dir: &Path, name: &str) -> Result<Vec<f64>> {
    let m = mat(dir, name)?;
    if m.rows() != 1 {
        return Err(invalid(format!("{name} must be a single row")));
    }
    Ok(m.row(0).to_vec())
}

pub fn load_bundle(dir: &Path) -> Result<TransformerSpec> {
    let manifest = read_text_file(&dir.join("manifest.toml"))?;
    let dims: Dims = toml::from_str(&manifest).map_err(|e| Error::Parse(format!("manifest.toml: {e}")))?;
    let embedding = mat(dir, "E.mat")?;
    if dir.join("U.mat").exists() && mat(dir, "U.mat")? != embedding.transpose() {
        return Err(invalid("U.mat is not the transpose of E.mat"));
    }
    let mut blocks = Vec::with_capacity(dims.blocks);
    for b in 0..dims.blocks {
        let p = prefix(&dims, b);
        let heads = (1..=dims.heads)
            .map(|h| {
                Ok(HeadWeights {
                    wq: mat(dir, &format!("{p}WQ.h{h}.mat"))?,
                    wk: mat(dir, &format!("{p}WK.h{h}.mat"))?,
                    wv: mat(dir, &format!("{p}WV.h{h}.mat"))?,
                    wo: mat(dir, &format!("{p}WO.h{h}.mat"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ffn = FfnWeights {
            w1: mat(dir, &format!("{p}W1.mat"))?,
            b1: bias(dir, &format!("{p}b1.mat"))?,
            w2: mat(dir, &format!("{p}W2.mat"))?,
            b2: bias(dir, &format!("{p}b2.mat"))?,
        };
        blocks.push(BlockWeights { heads, ffn });
    }
    let positional = if dims.positional { Some(mat(dir, "P.mat")?) } else { None };
    let vocab_path = dir.join("vocab.txt");
    let vocab = if vocab_path.exists() {
        let v: Vec<String> = read_text_file(&vocab_path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Some(v)
    } else {
        None
    };
    TransformerSpec::new(dims, embedding, blocks, positional, vocab)
}

pub fn save_bundle(spec: &TransformerSpec, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io { path: dir.display().to_string(), message: e.to_string() };
    fs::create_dir_all(dir).map_err(io)?;
    let write = |name: &str, text: String| fs::write(dir.join(name), text).map_err(io);
    let dims = spec.dims();
    write("manifest.toml", toml::to_string(&dims).map_err(|e| Error::Parse(e.to_string()))?)?;
    write("E.mat", format_mat(spec.embedding()))?;
    let row = |v: &[f64]| Matrix::new(1, v.len(), v.to_vec()).expect("row vector");
    for (b, block) in spec.blocks().iter().enumerate() {
        let p = prefix(&dims, b);
        for (h, w) in block.heads.iter().enumerate() {
            let h = h + 1;
            write(&format!("{p}WQ.h{h}.mat"), format_mat(&w.wq))?;
            write(&format!("{p}WK.h{h}.mat"), format_mat(&w.wk))?;
            write(&format!("{p}WV.h{h}.mat"), format_mat(&w.wv))?;
            write(&format!("{p}WO.h{h}.mat"), format_mat(&w.wo))?;
        }
        write(&format!("{p}W1.mat"), format_mat(&block.ffn.w1))?;
        write(&format!("{p}W2.mat"), format_mat(&block.ffn.w2))?;
        write(&format!("{p}b1.mat"), format_mat(&row(&block.ffn.b1)))?;
        write(&format!("{p}b2.mat"), format_mat(&row(&block.ffn.b2)))?;
    }
    if let Some(pm) = spec.positional() {
        write("P.mat", format_mat(pm))?;
    }
    if let Some(v) = spec.vocab() {
        write("vocab.txt", v.join("\n") + "\n")?;
    }
    Ok(())
}
