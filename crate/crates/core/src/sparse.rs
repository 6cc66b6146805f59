//! Minimal compressed-sparse-row matrix for exact many-body operators.

use faer::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a square matrix, summing duplicate entries and dropping exact zeros.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            debug_assert!(r < dim && c < dim);
            if let (Some(&lr), Some(&lc)) = (rows.last(), col_idx.last()) {
                if lr == r && lc == c {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            col_idx.push(c);
            values.push(v);
        }
        let keep: Vec<bool> = values.iter().map(|&v| v != 0.0).collect();
        let mut k = 0;
        rows.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        let mut k = 0;
        col_idx.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        values.retain(|&v| v != 0.0);
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        Self::from_triplets(self.dim, t)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Largest absolute entrywise difference, over the union of both patterns.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            let mut a = self.row(r).peekable();
            let mut b = other.row(r).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (None, None) => break,
                    (Some((ca, va)), Some((cb, vb))) if ca == cb => {
                        worst = worst.max((va - vb).abs());
                        a.next();
                        b.next();
                    }
                    (Some((ca, va)), Some((cb, _))) if ca < cb => {
                        worst = worst.max(va.abs());
                        a.next();
                    }
                    (Some(_), Some((_, vb))) => {
                        worst = worst.max(vb.abs());
                        b.next();
                    }
                    (Some((_, va)), None) => {
                        worst = worst.max(va.abs());
                        a.next();
                    }
                    (None, Some((_, vb))) => {
                        worst = worst.max(vb.abs());
                        b.next();
                    }
                }
            }
        }
        worst
    }

    /// Frobenius norm of `self · other − other · self`, computed densely row by row.
    pub fn commutator_norm(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        let mut col = vec![0.0; self.dim];
        let mut ab = vec![0.0; self.dim];
        let mut ba = vec![0.0; self.dim];
        let ot = other.transpose();
        let st = self.transpose();
        for j in 0..self.dim {
            // column j of A·B = A · (column j of B)
            col.iter_mut().for_each(|x| *x = 0.0);
            for (r, v) in ot.row(j) {
                col[r] = v;
            }
            self.matvec(&col, &mut ab);
            col.iter_mut().for_each(|x| *x = 0.0);
            for (r, v) in st.row(j) {
                col[r] = v;
            }
            other.matvec(&col, &mut ba);
            acc += ab.iter().zip(&ba).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        acc.sqrt()
    }
}
