//! SDPA sparse format (`.dat-s`).
//!
//! The SDPA primal reads `min c^T x s.t. sum_i x_i F_i - F_0 >= 0`, so `F_i = B_i`
//! and `F_0 = -B_0`. The objective offset, the block labels and the relaxation
//! metadata travel in `*` comment lines, which other SDPA readers ignore.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::relax::{AffineBlock, SdpProblem, SymSparse};

pub fn export_sdpa(problem: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "* offset {:.16e}", problem.offset);
    if let Some(n) = problem.n_vars {
        let _ = writeln!(out, "* n_vars {n}");
    }
    if let Some(r) = problem.order {
        let _ = writeln!(out, "* order {r}");
    }
    for (k, b) in problem.blocks.iter().enumerate() {
        let _ = writeln!(out, "* block {} {}", k + 1, b.label);
    }
    let _ = writeln!(out, "{}", problem.n_y);
    let _ = writeln!(out, "{}", problem.blocks.len());
    let sides: Vec<String> = problem.blocks.iter().map(|b| b.dim.to_string()).collect();
    let _ = writeln!(out, "{}", sides.join(" "));
    let c: Vec<String> = problem.objective.iter().map(|v| format!("{v:.16e}")).collect();
    let _ = writeln!(out, "{}", c.join(" "));
    for (k, b) in problem.blocks.iter().enumerate() {
        for &(i, j, v) in &b.constant.entries {
            let _ = writeln!(out, "0 {} {} {} {:.16e}", k + 1, i + 1, j + 1, -v);
        }
    }
    // entries sorted by matrix number, then block
    let mut by_var: BTreeMap<usize, Vec<(usize, &SymSparse)>> = BTreeMap::new();
    for (k, b) in problem.blocks.iter().enumerate() {
        for (i, s) in &b.coeffs {
            by_var.entry(*i).or_default().push((k, s));
        }
    }
    for (i, list) in by_var {
        for (k, s) in list {
            for &(p, q, v) in &s.entries {
                let _ = writeln!(out, "{} {} {} {} {:.16e}", i + 1, k + 1, p + 1, q + 1, v);
            }
        }
    }
    out
}

pub fn write_sdpa(problem: &SdpProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, export_sdpa(problem))?;
    Ok(())
}

pub fn read_sdpa(path: impl AsRef<Path>) -> Result<SdpProblem> {
    import_sdpa(&std::fs::read_to_string(path)?)
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::SdpaParse {
        line,
        message: message.into(),
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| perr(self.last_line, format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn int(&mut self, what: &str) -> Result<(usize, i64)> {
        let (line, s) = self.next(what)?;
        let v = parse_num(s).ok_or_else(|| perr(line, format!("expected {what}, found {s:?}")))?;
        if v.fract() != 0.0 {
            return Err(perr(line, format!("expected integer {what}, found {s:?}")));
        }
        Ok((line, v as i64))
    }

    /// Drops trailing annotations such as `= mDIM` on a header line.
    fn skip_words(&mut self, line: usize) {
        while let Some(&(l, t)) = self.items.get(self.pos) {
            if l != line || parse_num(t).is_some() {
                break;
            }
            self.pos += 1;
        }
    }

    fn float(&mut self, what: &str) -> Result<(usize, f64)> {
        let (line, s) = self.next(what)?;
        let v = parse_num(s).ok_or_else(|| perr(line, format!("expected {what}, found {s:?}")))?;
        Ok((line, v))
    }
}

fn parse_num(s: &str) -> Option<f64> {
    s.parse::<f64>()
        .ok()
        .or_else(|| s.replace(['d', 'D'], "e").parse().ok())
        .filter(|v: &f64| v.is_finite())
}

/// Parses `.dat-s` text. Accepts `{ } ( ) ,` as separators, `*` and `"` comment
/// lines, and negative block sizes, which denote diagonal blocks and are
/// expanded into 1x1 blocks.
pub fn import_sdpa(text: &str) -> Result<SdpProblem> {
    let mut offset = 0.0;
    let mut n_vars = None;
    let mut order = None;
    let mut labels: BTreeMap<usize, String> = BTreeMap::new();
    let mut items = Vec::new();
    let mut last_line = 1;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        last_line = line;
        let t = raw.trim();
        if let Some(c) = t.strip_prefix('*') {
            let mut w = c.split_whitespace();
            match (w.next(), w.next()) {
                (Some("offset"), Some(v)) => offset = parse_num(v).ok_or_else(|| perr(line, "bad offset"))?,
                (Some("n_vars"), Some(v)) => n_vars = v.parse().ok(),
                (Some("order"), Some(v)) => order = v.parse().ok(),
                (Some("block"), Some(k)) => {
                    if let Ok(k) = k.parse::<usize>() {
                        let rest: Vec<&str> = w.collect();
                        labels.insert(k, rest.join(" "));
                    }
                }
                _ => {}
            }
            continue;
        }
        if t.starts_with('"') || t.is_empty() {
            continue;
        }
        for tok in raw.split(|c: char| c.is_whitespace() || "{}(),".contains(c)) {
            if !tok.is_empty() {
                items.push((line, tok));
            }
        }
    }
    let mut tk = Tokens {
        items,
        pos: 0,
        last_line,
    };
    let (line, m) = tk.int("number of constraint matrices")?;
    if m < 0 {
        return Err(perr(line, "negative number of matrices"));
    }
    let m = m as usize;
    tk.skip_words(line);
    let (line, nb) = tk.int("number of blocks")?;
    tk.skip_words(line);
    if nb <= 0 {
        return Err(perr(line, "number of blocks must be positive"));
    }
    // file block -> (first expanded block, side, diagonal)
    let mut layout = Vec::with_capacity(nb as usize);
    let mut dims = Vec::new();
    let mut origin = Vec::new();
    let mut line = line;
    for k in 0..nb as usize {
        let (l, s) = tk.int("block size")?;
        line = l;
        if s == 0 {
            return Err(perr(line, "block size 0"));
        }
        layout.push((dims.len(), s.unsigned_abs() as usize, s < 0));
        if s < 0 {
            for i in 0..s.unsigned_abs() as usize {
                dims.push(1);
                origin.push((k, Some(i)));
            }
        } else {
            dims.push(s as usize);
            origin.push((k, None));
        }
    }
    tk.skip_words(line);
    let mut objective = Vec::with_capacity(m);
    for _ in 0..m {
        objective.push(tk.float("objective coefficient")?.1);
    }
    let nblk = dims.len();
    let mut constant: Vec<BTreeMap<(u32, u32), f64>> = vec![BTreeMap::new(); nblk];
    let mut coeffs: Vec<BTreeMap<usize, BTreeMap<(u32, u32), f64>>> = vec![BTreeMap::new(); nblk];
    while tk.pos < tk.items.len() {
        let (line, matno) = tk.int("matrix number")?;
        let (_, blk) = tk.int("block number")?;
        let (_, i) = tk.int("row")?;
        let (_, j) = tk.int("column")?;
        let (_, v) = tk.float("value")?;
        if matno < 0 || matno as usize > m {
            return Err(perr(line, format!("matrix number {matno} outside 0..={m}")));
        }
        if blk < 1 || blk > nb {
            return Err(perr(line, format!("block number {blk} outside 1..={nb}")));
        }
        let (first, side, diagonal) = layout[blk as usize - 1];
        if i < 1 || j < 1 || i as usize > side || j as usize > side {
            return Err(perr(line, format!("entry ({i}, {j}) outside block of side {side}")));
        }
        let (i, j) = ((i.min(j) - 1) as usize, (i.max(j) - 1) as usize);
        let (target, p, q) = if diagonal {
            if i != j {
                return Err(perr(line, "off-diagonal entry in a diagonal block"));
            }
            (first + i, 0u32, 0u32)
        } else {
            (first, i as u32, j as u32)
        };
        if matno == 0 {
            *constant[target].entry((p, q)).or_default() -= v;
        } else {
            *coeffs[target]
                .entry(matno as usize - 1)
                .or_default()
                .entry((p, q))
                .or_default() += v;
        }
    }
    let to_sparse = |m: BTreeMap<(u32, u32), f64>| SymSparse {
        entries: m.into_iter().filter(|e| e.1 != 0.0).map(|((p, q), v)| (p, q, v)).collect(),
    };
    let blocks = constant
        .into_iter()
        .zip(coeffs)
        .enumerate()
        .map(|(k, (c, cs))| {
            let (fk, sub) = origin[k];
            let label = match (labels.get(&(fk + 1)), sub) {
                (Some(l), None) => l.clone(),
                (Some(l), Some(i)) => format!("{l}[{i}]"),
                (None, None) => format!("block{}", fk + 1),
                (None, Some(i)) => format!("block{}[{i}]", fk + 1),
            };
            AffineBlock {
                label,
                dim: dims[k],
                constant: to_sparse(c),
                coeffs: cs
                    .into_iter()
                    .map(|(i, s)| (i, to_sparse(s)))
                    .filter(|(_, s)| !s.entries.is_empty())
                    .collect(),
            }
        })
        .collect();
    Ok(SdpProblem {
        n_y: m,
        objective,
        offset,
        blocks,
        n_vars,
        order,
    })
}
