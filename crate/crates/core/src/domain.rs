//! Rectangular node domains.
//!
//! Every discrete object in the crate lives on a `Domain`: an axis-aligned
//! box of nodes with per-axis spacing and origin. The bulk slab, the boundary
//! cylinder and the initial slice are all domains of different dimension;
//! field and stencil code is written once against this descriptor.

/// A rectangular grid of nodes. Axis 0 is time whenever the domain has a
/// time axis (bulk slab, boundary cylinder); spatial-only domains (the
/// initial slice) carry no time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    /// Node counts per axis.
    pub dims: Vec<usize>,
    /// Grid spacing per axis.
    pub spacings: Vec<f64>,
    /// Coordinate of node 0 per axis.
    pub origins: Vec<f64>,
}

impl Domain {
    pub fn new(dims: Vec<usize>, spacings: Vec<f64>, origins: Vec<f64>) -> Self {
        assert_eq!(dims.len(), spacings.len());
        assert_eq!(dims.len(), origins.len());
        Domain { dims, spacings, origins }
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major strides: the last axis is fastest.
    pub fn strides(&self) -> Vec<usize> {
        let n = self.ndim();
        let mut s = vec![1usize; n];
        for a in (0..n.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.dims[a + 1];
        }
        s
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.ndim());
        let mut f = 0usize;
        for a in 0..self.ndim() {
            debug_assert!(idx[a] < self.dims[a]);
            f = f * self.dims[a] + idx[a];
        }
        f
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let n = self.ndim();
        let mut idx = vec![0usize; n];
        for a in (0..n).rev() {
            idx[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
        idx
    }

    /// Coordinate of a node along one axis.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origins[axis] + self.spacings[axis] * i as f64
    }

    /// Full coordinate vector of a node given its multi-index.
    pub fn coords(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.ndim()).map(|a| self.coord(a, idx[a])).collect()
    }

    /// Iterate over all multi-indices in row-major order.
    pub fn iter_indices(&self) -> DomainIter {
        DomainIter { dims: self.dims.clone(), next: Some(vec![0; self.ndim()]) }
    }

    /// Sub-domain with the given axis removed at a fixed index (used to
    /// restrict the slab to a slice or to the boundary cylinder).
    pub fn without_axis(&self, axis: usize) -> Domain {
        let mut dims = self.dims.clone();
        let mut sp = self.spacings.clone();
        let mut or = self.origins.clone();
        dims.remove(axis);
        sp.remove(axis);
        or.remove(axis);
        Domain::new(dims, sp, or)
    }
}

pub struct DomainIter {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for DomainIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        if self.dims.iter().any(|&d| d == 0) {
            return None;
        }
        let mut nxt = cur.clone();
        for a in (0..self.dims.len()).rev() {
            nxt[a] += 1;
            if nxt[a] < self.dims[a] {
                self.next = Some(nxt);
                return Some(cur);
            }
            nxt[a] = 0;
        }
        self.next = None;
        Some(cur)
    }
}
