//! Tensor fields over a [`Domain`].
//!
//! A field stores one `f64` plane per tensor component; symmetric rank-2
//! tensors keep only the upper triangle. The tensor dimension (number of
//! index values) is independent of the domain dimension: a spacetime vector
//! restricted to the boundary cylinder still has `n+1` components.

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Tensor rank of a field; the payload is the tensor dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    /// Contravariant or covariant rank-1; the distinction is carried by use.
    Vector(usize),
    /// Symmetric rank-2, upper-triangle storage.
    Sym2(usize),
}

impl Rank {
    pub fn comps(&self) -> usize {
        match *self {
            Rank::Scalar => 1,
            Rank::Vector(d) => d,
            Rank::Sym2(d) => d * (d + 1) / 2,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Rank::Scalar => 0,
            Rank::Vector(d) | Rank::Sym2(d) => d,
        }
    }
}

/// Upper-triangle component index for a symmetric pair `(a, b)` in dimension `d`.
pub fn sym_index(d: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    // row a starts after rows 0..a, which hold d, d-1, ..., d-a+1 entries
    a * d - a * (a + 1) / 2 + a + (b - a)
}

/// A dense tensor field over a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub rank: Rank,
    pub dom: Domain,
    /// Layout: `[comp][node]`, node index row-major over the domain.
    pub data: Vec<f64>,
}

impl TensorField {
    pub fn zeros(rank: Rank, dom: Domain) -> Self {
        let len = rank.comps() * dom.len();
        TensorField { rank, dom, data: vec![0.0; len] }
    }

    pub fn comps(&self) -> usize {
        self.rank.comps()
    }

    pub fn nodes(&self) -> usize {
        self.dom.len()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let n = self.nodes();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.nodes();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, node: usize) -> f64 {
        self.data[c * self.dom.len() + node]
    }

    pub fn set(&mut self, c: usize, node: usize, v: f64) {
        let n = self.dom.len();
        self.data[c * n + node] = v;
    }

    /// Symmetric component accessor for `Sym2` fields.
    pub fn sym(&self, a: usize, b: usize, node: usize) -> f64 {
        let d = self.rank.dim();
        self.get(sym_index(d, a, b), node)
    }

    pub fn sym_set(&mut self, a: usize, b: usize, node: usize, v: f64) {
        let d = self.rank.dim();
        self.set(sym_index(d, a, b), node, v);
    }

    /// Fill from a closure of (component, node multi-index).
    pub fn fill_with(&mut self, f: impl Fn(usize, &[usize]) -> f64) {
        let dom = self.dom.clone();
        for c in 0..self.comps() {
            for (flat, idx) in dom.iter_indices().enumerate() {
                self.set(c, flat, f(c, &idx));
            }
        }
    }

    pub fn from_fn(rank: Rank, dom: Domain, f: impl Fn(usize, &[f64]) -> f64) -> Self {
        let mut out = TensorField::zeros(rank, dom);
        let dom = out.dom.clone();
        for c in 0..out.comps() {
            for (flat, idx) in dom.iter_indices().enumerate() {
                let x = dom.coords(&idx);
                out.set(c, flat, f(c, &x));
            }
        }
        out
    }

    /// Max-norm over all components and nodes.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> TensorField {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add_scaled(&mut self, other: &TensorField, s: f64) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &TensorField) -> TensorField {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// Check rank compatibility, used by operator entry points.
    pub fn expect_rank(&self, rank: Rank) -> Result<()> {
        if self.rank == rank {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "rank mismatch: expected {:?}, got {:?}",
                rank, self.rank
            )))
        }
    }
}

/// Write a field as CSV: one row per node, coordinates first, then components.
pub fn field_to_csv(field: &TensorField, comp_names: &[&str]) -> String {
    let dom = &field.dom;
    let mut s = String::new();
    let axes: Vec<String> = (0..dom.ndim()).map(|a| format!("x{}", a)).collect();
    let mut header: Vec<String> = axes.clone();
    for c in comp_names {
        header.push((*c).to_string());
    }
    s.push_str(&header.join(","));
    s.push('\n');
    for (flat, idx) in dom.iter_indices().enumerate() {
        let mut row: Vec<String> = dom.coords(&idx).iter().map(|v| format!("{:.16e}", v)).collect();
        for c in 0..field.comps() {
            row.push(format!("{:.16e}", field.get(c, flat)));
        }
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_index_is_upper_triangle() {
        // d = 3: (0,0) (0,1) (0,2) (1,1) (1,2) (2,2)
        let want = [((0, 0), 0), ((0, 1), 1), ((0, 2), 2), ((1, 1), 3), ((1, 2), 4), ((2, 2), 5)];
        for ((a, b), k) in want {
            assert_eq!(sym_index(3, a, b), k, "({},{})", a, b);
            assert_eq!(sym_index(3, b, a), k);
        }
        assert_eq!(Rank::Sym2(4).comps(), 10);
    }

    #[test]
    fn linearity_of_field_ops_is_exact() {
        let dom = Domain::new(vec![4, 4], vec![0.5, 0.5], vec![0.0, 0.0]);
        let f = TensorField::from_fn(Rank::Vector(3), dom, |c, x| (c as f64 + 1.0) * x[0] * x[1]);
        let g = f.scaled(2.0);
        for i in 0..f.data.len() {
            assert_eq!(g.data[i], 2.0 * f.data[i]);
        }
    }
}
