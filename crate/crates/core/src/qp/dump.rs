//! Plain-text dump of `(H, g, A, b, G, h)`.
//!
//! ```text
//! %qp-dump 1
//! %matrix H <rows> <cols> <nnz>
//! <row> <col> <value>        (1-based, one entry per line)
//! %vector g <len>
//! <value>
//! ...
//! ```
//!
//! Blocks appear in the order `H g A b G h`. Values use the shortest
//! representation that round-trips exactly.

use std::io::{self, BufRead, Write};

use nalgebra::DVector;

use super::problem::QpProblem;
use super::sparse::CsrMatrix;

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn write_matrix(out: &mut impl Write, name: &str, m: &CsrMatrix) -> io::Result<()> {
    writeln!(out, "%matrix {name} {} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (r, c, v) in m.triplets() {
        writeln!(out, "{} {} {v:e}", r + 1, c + 1)?;
    }
    Ok(())
}

fn write_vector(out: &mut impl Write, name: &str, v: &DVector<f64>) -> io::Result<()> {
    writeln!(out, "%vector {name} {}", v.len())?;
    for x in v.iter() {
        writeln!(out, "{x:e}")?;
    }
    Ok(())
}

pub fn write_qp_dump(qp: &QpProblem, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "%qp-dump 1")?;
    write_matrix(&mut out, "H", &qp.hessian)?;
    write_vector(&mut out, "g", &qp.gradient)?;
    write_matrix(&mut out, "A", &qp.eq_matrix)?;
    write_vector(&mut out, "b", &qp.eq_rhs)?;
    write_matrix(&mut out, "G", &qp.ineq_matrix)?;
    write_vector(&mut out, "h", &qp.ineq_rhs)?;
    Ok(())
}

struct Lines<R> {
    inner: io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String, DumpError> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn err(&self, message: impl Into<String>) -> DumpError {
        DumpError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn header(&mut self, kind: &str, name: &str, fields: usize) -> Result<Vec<usize>, DumpError> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(kind) || parts.next() != Some(name) {
            return Err(self.err(format!("expected `{kind} {name}`")));
        }
        let dims: Result<Vec<usize>, _> = parts.map(str::parse).collect();
        match dims {
            Ok(d) if d.len() == fields => Ok(d),
            _ => Err(self.err("malformed dimensions")),
        }
    }

    fn value(&mut self, s: Option<&str>) -> Result<f64, DumpError> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err("malformed value"))
    }

    fn matrix(&mut self, name: &str) -> Result<CsrMatrix, DumpError> {
        let d = self.header("%matrix", name, 3)?;
        let mut t = Vec::with_capacity(d[2]);
        for _ in 0..d[2] {
            let line = self.next()?;
            let mut parts = line.split_whitespace();
            let idx = |p: Option<&str>| p.and_then(|s| s.parse::<usize>().ok()).filter(|&i| i >= 1);
            let (Some(r), Some(c)) = (idx(parts.next()), idx(parts.next())) else {
                return Err(self.err("malformed index"));
            };
            if r > d[0] || c > d[1] {
                return Err(self.err("index out of range"));
            }
            let v = self.value(parts.next())?;
            t.push((r - 1, c - 1, v));
        }
        Ok(CsrMatrix::from_triplets(d[0], d[1], &t))
    }

    fn vector(&mut self, name: &str) -> Result<DVector<f64>, DumpError> {
        let d = self.header("%vector", name, 1)?;
        let mut v = Vec::with_capacity(d[0]);
        for _ in 0..d[0] {
            let line = self.next()?;
            v.push(self.value(Some(line.trim()))?);
        }
        Ok(DVector::from_vec(v))
    }
}

pub fn read_qp_dump(input: impl BufRead) -> Result<QpProblem, DumpError> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    if lines.next()?.trim() != "%qp-dump 1" {
        return Err(lines.err("missing `%qp-dump 1` header"));
    }
    let qp = QpProblem {
        hessian: lines.matrix("H")?,
        gradient: lines.vector("g")?,
        eq_matrix: lines.matrix("A")?,
        eq_rhs: lines.vector("b")?,
        ineq_matrix: lines.matrix("G")?,
        ineq_rhs: lines.vector("h")?,
        layout: None,
    };
    qp.check().map_err(|e| lines.err(e.to_string()))?;
    Ok(qp)
}
