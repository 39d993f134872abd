//! Plain-text sparse dump of a [`ConeProgram`].
//!
//! ```text
//! conic-program v1
//! dims <vars> <rows> <nnz> <blocks>
//! objective <count> <constant>
//! <var> <coef>                  (count lines, ascending var)
//! matrix
//! <row> <var> <coef>            (nnz lines, row-major, ascending var)
//! offsets <count>
//! <row> <offset>                (count lines, nonzero offsets only)
//! cones
//! <zero|nonneg|soc|exp> <dim>   (blocks lines, in row order)
//! end
//! ```
//!
//! Row `r` evaluates to `Σ coef·x[var] + offset` and belongs to the cone of
//! the block that covers it. Numbers use Rust's shortest round-trip float
//! formatting, so parsing a dump reproduces the program bit for bit.

use std::fmt::Write;

use super::program::{AffineExpr, ConeKind, ConeProgram};
use crate::error::{Error, Result};

pub fn to_text(prog: &ConeProgram) -> String {
    let rows: Vec<(Vec<(usize, f64)>, f64)> = prog
        .blocks()
        .iter()
        .flat_map(|b| b.rows.iter().map(|r| (r.canonical_terms(), r.constant)))
        .collect();
    let nnz: usize = rows.iter().map(|(t, _)| t.len()).sum();
    let obj: Vec<(usize, f64)> = prog.objective().iter().copied().enumerate().filter(|(_, c)| *c != 0.0).collect();

    let mut out = String::new();
    out.push_str("conic-program v1\n");
    let _ = writeln!(out, "dims {} {} {} {}", prog.num_vars(), rows.len(), nnz, prog.blocks().len());
    let _ = writeln!(out, "objective {} {:?}", obj.len(), prog.objective_constant());
    for (v, c) in &obj {
        let _ = writeln!(out, "{v} {c:?}");
    }
    out.push_str("matrix\n");
    for (r, (terms, _)) in rows.iter().enumerate() {
        for (v, c) in terms {
            let _ = writeln!(out, "{r} {v} {c:?}");
        }
    }
    let offsets: Vec<(usize, f64)> = rows.iter().map(|(_, c)| *c).enumerate().filter(|(_, c)| *c != 0.0).collect();
    let _ = writeln!(out, "offsets {}", offsets.len());
    for (r, c) in offsets {
        let _ = writeln!(out, "{r} {c:?}");
    }
    out.push_str("cones\n");
    for b in prog.blocks() {
        let _ = writeln!(out, "{} {}", b.kind.tag(), b.dim());
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Result<Vec<&'a str>> {
        let (i, l) = self.inner.next().ok_or_else(|| self.err("unexpected end of dump"))?;
        self.line = i + 1;
        Ok(l.split_whitespace().collect())
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse { path: "<cone program dump>".into(), line: self.line, msg: msg.into() }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Vec<&'a str>> {
        let f = self.next_fields()?;
        if f.first() != Some(&kw) {
            return Err(self.err(&format!("expected '{kw}'")));
        }
        Ok(f)
    }

    fn num<T: std::str::FromStr>(&self, s: Option<&&str>) -> Result<T> {
        s.and_then(|s| s.parse().ok()).ok_or_else(|| self.err("malformed number"))
    }
}

pub fn from_text(text: &str) -> Result<ConeProgram> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let header = lines.next_fields()?;
    if header != ["conic-program", "v1"] {
        return Err(lines.err("bad header"));
    }
    let dims = lines.expect_keyword("dims")?;
    let num_vars: usize = lines.num(dims.get(1))?;
    let num_rows: usize = lines.num(dims.get(2))?;
    let nnz: usize = lines.num(dims.get(3))?;
    let num_blocks: usize = lines.num(dims.get(4))?;

    let obj = lines.expect_keyword("objective")?;
    let obj_count: usize = lines.num(obj.get(1))?;
    let constant: f64 = lines.num(obj.get(2))?;
    let mut objective = vec![0.0; num_vars];
    for _ in 0..obj_count {
        let f = lines.next_fields()?;
        let v: usize = lines.num(f.first())?;
        if v >= num_vars {
            return Err(lines.err("objective variable out of range"));
        }
        objective[v] = lines.num(f.get(1))?;
    }

    lines.expect_keyword("matrix")?;
    let mut rows = vec![AffineExpr::default(); num_rows];
    for _ in 0..nnz {
        let f = lines.next_fields()?;
        let r: usize = lines.num(f.first())?;
        let v: usize = lines.num(f.get(1))?;
        let c: f64 = lines.num(f.get(2))?;
        rows.get_mut(r).ok_or_else(|| lines.err("row out of range"))?.add_term(v, c);
    }
    let off = lines.expect_keyword("offsets")?;
    let off_count: usize = lines.num(off.get(1))?;
    for _ in 0..off_count {
        let f = lines.next_fields()?;
        let r: usize = lines.num(f.first())?;
        rows.get_mut(r).ok_or_else(|| lines.err("row out of range"))?.constant = lines.num(f.get(1))?;
    }

    lines.expect_keyword("cones")?;
    let mut prog = ConeProgram::new();
    prog.push_raw(num_vars, objective, constant);
    let mut rows = rows.into_iter();
    for _ in 0..num_blocks {
        let f = lines.next_fields()?;
        let kind = f.first().and_then(|t| ConeKind::from_tag(t)).ok_or_else(|| lines.err("unknown cone"))?;
        let dim: usize = lines.num(f.get(1))?;
        let block_rows: Vec<AffineExpr> = rows.by_ref().take(dim).collect();
        if block_rows.len() != dim {
            return Err(lines.err("cone dimensions exceed row count"));
        }
        prog.add_block(kind, block_rows);
    }
    if rows.next().is_some() {
        return Err(lines.err("rows not covered by any cone"));
    }
    lines.expect_keyword("end")?;
    prog.validate()?;
    Ok(prog)
}
