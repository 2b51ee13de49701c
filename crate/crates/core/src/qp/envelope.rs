//! Envelope (skyline) Cholesky factorization under a reverse Cuthill–McKee
//! ordering. Stage-structured KKT matrices become narrow-banded after
//! reordering, so the envelope stays small.

use std::collections::VecDeque;

/// Ordering and envelope shape of a symmetric sparsity pattern.
#[derive(Debug, Clone)]
pub struct EnvelopePattern {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// `inv[old] = new`.
    inv: Vec<usize>,
    /// First stored column of each (reordered) row.
    first: Vec<usize>,
    /// Offset of each row's first stored entry in the value buffer.
    offset: Vec<usize>,
    len: usize,
}

impl EnvelopePattern {
    /// `edges` lists off-diagonal couplings `(i, j)` in original indexing.
    pub fn analyze(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in edges {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, nbrs) in adj.iter().enumerate() {
            let i = inv[old];
            for &nb in nbrs {
                let j = inv[nb];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = vec![0; n];
        let mut len = 0;
        for i in 0..n {
            offset[i] = len;
            len += i - first[i] + 1;
        }
        Self {
            perm,
            inv,
            first,
            offset,
            len,
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored entries.
    pub fn envelope_len(&self) -> usize {
        self.len
    }

    pub fn zeros(&self) -> SymmetricEnvelope<'_> {
        SymmetricEnvelope {
            pattern: self,
            values: vec![0.0; self.len],
        }
    }
}

fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

/// Lower triangle of a symmetric matrix stored on an [`EnvelopePattern`].
#[derive(Debug, Clone)]
pub struct SymmetricEnvelope<'p> {
    pattern: &'p EnvelopePattern,
    values: Vec<f64>,
}

impl<'p> SymmetricEnvelope<'p> {
    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`), original indexing.
    ///
    /// Panics if the entry lies outside the analyzed pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = (self.pattern.inv[i], self.pattern.inv[j]);
        let (r, c) = if a >= b { (a, b) } else { (b, a) };
        assert!(c >= self.pattern.first[r], "entry ({i}, {j}) outside envelope");
        self.values[self.pattern.offset[r] + c - self.pattern.first[r]] += v;
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// In-place `L Lᵀ` factorization.
    pub fn factorize(mut self) -> Result<EnvelopeCholesky<'p>, NotPositiveDefinite> {
        let p = self.pattern;
        let n = p.dim();
        for i in 0..n {
            let fi = p.first[i];
            let oi = p.offset[i];
            for j in fi..i {
                let fj = p.first[j];
                let oj = p.offset[j];
                let start = fi.max(fj);
                let mut s = self.values[oi + j - fi];
                for k in start..j {
                    s -= self.values[oi + k - fi] * self.values[oj + k - fj];
                }
                let diag = self.values[oj + j - fj];
                self.values[oi + j - fi] = s / diag;
            }
            let mut d = self.values[oi + i - fi];
            for k in fi..i {
                let l = self.values[oi + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(NotPositiveDefinite { pivot: p.perm[i] });
            }
            self.values[oi + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            pattern: p,
            values: self.values,
            work: vec![0.0; n],
        })
    }
}

impl<'p> SymmetricEnvelope<'p> {
    /// In-place `L D Lᵀ` factorization with unit `L`, for quasi-definite
    /// matrices. No pivoting: fails on a zero or non-finite pivot.
    pub fn factorize_ldl(mut self) -> Result<EnvelopeLdl<'p>, NotPositiveDefinite> {
        let p = self.pattern;
        let n = p.dim();
        let mut t = vec![0.0; n];
        for i in 0..n {
            let fi = p.first[i];
            let oi = p.offset[i];
            for j in fi..i {
                let fj = p.first[j];
                let oj = p.offset[j];
                let mut s = self.values[oi + j - fi];
                for k in fi.max(fj)..j {
                    s -= t[k] * self.values[oj + k - fj];
                }
                t[j] = s;
                self.values[oi + j - fi] = s / self.values[oj + j - fj];
            }
            let mut d = self.values[oi + i - fi];
            for k in fi..i {
                d -= t[k] * self.values[oi + k - fi];
            }
            if d == 0.0 || !d.is_finite() {
                return Err(NotPositiveDefinite { pivot: p.perm[i] });
            }
            self.values[oi + i - fi] = d;
        }
        Ok(EnvelopeLdl {
            pattern: p,
            values: self.values,
            work: vec![0.0; n],
        })
    }
}

/// `L D Lᵀ` factor; the diagonal slots hold `D`.
#[derive(Debug, Clone)]
pub struct EnvelopeLdl<'p> {
    pattern: &'p EnvelopePattern,
    values: Vec<f64>,
    work: Vec<f64>,
}

impl EnvelopeLdl<'_> {
    /// Solves `K x = b` in place (original indexing).
    pub fn solve_in_place(&mut self, b: &mut [f64]) {
        let p = self.pattern;
        let n = p.dim();
        let w = &mut self.work;
        for i in 0..n {
            w[i] = b[p.perm[i]];
        }
        for i in 0..n {
            let fi = p.first[i];
            let oi = p.offset[i];
            let mut s = w[i];
            for k in fi..i {
                s -= self.values[oi + k - fi] * w[k];
            }
            w[i] = s;
        }
        for i in 0..n {
            w[i] /= self.values[p.offset[i] + i - p.first[i]];
        }
        for i in (0..n).rev() {
            let fi = p.first[i];
            let oi = p.offset[i];
            let xi = w[i];
            for k in fi..i {
                w[k] -= self.values[oi + k - fi] * xi;
            }
        }
        for i in 0..n {
            b[p.perm[i]] = w[i];
        }
    }

    /// Number of negative pivots (the inertia's negative count).
    pub fn negative_pivots(&self) -> usize {
        let p = self.pattern;
        (0..p.dim())
            .filter(|&i| self.values[p.offset[i] + i - p.first[i]] < 0.0)
            .count()
    }
}

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<'p> {
    pattern: &'p EnvelopePattern,
    values: Vec<f64>,
    work: Vec<f64>,
}

impl EnvelopeCholesky<'_> {
    /// Solves `K x = b` in place (original indexing).
    pub fn solve_in_place(&mut self, b: &mut [f64]) {
        let p = self.pattern;
        let n = p.dim();
        let w = &mut self.work;
        for i in 0..n {
            w[i] = b[p.perm[i]];
        }
        for i in 0..n {
            let fi = p.first[i];
            let oi = p.offset[i];
            let mut s = w[i];
            for k in fi..i {
                s -= self.values[oi + k - fi] * w[k];
            }
            w[i] = s / self.values[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = p.first[i];
            let oi = p.offset[i];
            w[i] /= self.values[oi + i - fi];
            let xi = w[i];
            for k in fi..i {
                w[k] -= self.values[oi + k - fi] * xi;
            }
        }
        for i in 0..n {
            b[p.perm[i]] = w[i];
        }
    }
}
