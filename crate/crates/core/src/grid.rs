//! The corner grid: a structured slab over `{t in [0,T], x1 in [-L1,0],
//! xA in [-LA/2, LA/2]}` with tagged node sets for the initial slice S, the
//! timelike boundary C = {x1 = 0} and the corner Sigma = S intersect C.

use crate::domain::Domain;
use crate::error::{validation, Result};
use crate::field::TensorField;

#[derive(Debug, Clone)]
pub struct GridConfig {
    /// Spatial dimension n (spacetime dimension n+1).
    pub n: usize,
    pub dt: f64,
    pub dx: f64,
    pub t_max: f64,
    pub l1: f64,
    pub la: f64,
    /// Maximum admissible dt/dx.
    pub cfl_bound: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 2, dt: 0.5 / 32.0, dx: 1.0 / 32.0, t_max: 1.0, l1: 1.0, la: 1.0, cfl_bound: 0.5 }
    }
}

impl GridConfig {
    pub fn with_resolution(n: usize, nx: usize, cfl: f64) -> Self {
        let dx = 1.0 / nx as f64;
        GridConfig { n, dt: cfl * dx, dx, t_max: 1.0, l1: 1.0, la: 1.0, cfl_bound: cfl + 1e-12 }
    }
}

/// Discretized corner domain with consistent S / C / Sigma tagging.
#[derive(Debug, Clone)]
pub struct CornerGrid {
    pub n: usize,
    pub dt: f64,
    pub dx: f64,
    pub t_max: f64,
    pub l1: f64,
    pub la: f64,
    pub steps: usize,
    /// Node counts per spatial axis, x1 first.
    pub sdims: Vec<usize>,
    pub cfl: f64,
}

fn count_nodes(extent: f64, h: f64, what: &str) -> Result<usize> {
    let m = extent / h;
    let k = m.round();
    if (m - k).abs() > 1e-9 * m.max(1.0) {
        return validation(format!("{} = {} is not an integer multiple of spacing {}", what, extent, h));
    }
    Ok(k as usize + 1)
}

impl CornerGrid {
    pub fn build(cfg: &GridConfig) -> Result<CornerGrid> {
        if cfg.n < 2 {
            return validation(format!("spatial dimension n = {} must be >= 2", cfg.n));
        }
        for (v, name) in [
            (cfg.dt, "dt"),
            (cfg.dx, "dx"),
            (cfg.t_max, "t_max"),
            (cfg.l1, "l1"),
            (cfg.la, "la"),
        ] {
            if !(v > 0.0) {
                return validation(format!("{} must be positive, got {}", name, v));
            }
        }
        let cfl = cfg.dt / cfg.dx;
        if cfl > cfg.cfl_bound {
            return validation(format!("CFL number {} exceeds bound {}", cfl, cfg.cfl_bound));
        }
        let steps = count_nodes(cfg.t_max, cfg.dt, "t_max")? - 1;
        let n1 = count_nodes(cfg.l1, cfg.dx, "l1")?;
        let na = count_nodes(cfg.la, cfg.dx, "la")?;
        let mut sdims = vec![n1];
        sdims.extend(std::iter::repeat(na).take(cfg.n - 1));
        for (a, &d) in sdims.iter().enumerate() {
            if d < 5 {
                return validation(format!(
                    "axis {} has only {} nodes; need >= 5 for one-sided stencil margins",
                    a, d
                ));
            }
        }
        if steps < 4 {
            return validation(format!("{} time steps; need >= 4", steps));
        }
        Ok(CornerGrid {
            n: cfg.n,
            dt: cfg.dt,
            dx: cfg.dx,
            t_max: cfg.t_max,
            l1: cfg.l1,
            la: cfg.la,
            steps,
            sdims,
            cfl,
        })
    }

    /// Spacetime tensor dimension.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    /// Full slab: axes `[t, x1, xA..]`.
    pub fn bulk_domain(&self) -> Domain {
        let mut dims = vec![self.steps + 1];
        dims.extend_from_slice(&self.sdims);
        let mut sp = vec![self.dt];
        sp.extend(std::iter::repeat(self.dx).take(self.n));
        let mut or = vec![0.0, -self.l1];
        or.extend(std::iter::repeat(-self.la / 2.0).take(self.n - 1));
        Domain::new(dims, sp, or)
    }

    /// Spatial slice: axes `[x1, xA..]`.
    pub fn spatial_domain(&self) -> Domain {
        self.bulk_domain().without_axis(0)
    }

    /// Boundary cylinder C = {x1 = 0}: axes `[t, xA..]`.
    pub fn boundary_domain(&self) -> Domain {
        self.bulk_domain().without_axis(1)
    }

    /// Boundary spatial section (one time slice of C): axes `[xA..]`.
    pub fn sigma_domain(&self) -> Domain {
        self.spatial_domain().without_axis(0)
    }

    pub fn spatial_len(&self) -> usize {
        self.spatial_domain().len()
    }

    pub fn sigma_len(&self) -> usize {
        self.sigma_domain().len()
    }

    /// Spatial flat index of a boundary section node (x1 at the C face).
    pub fn sigma_to_spatial(&self, sig: usize) -> usize {
        (self.sdims[0] - 1) * self.sigma_len() + sig
    }

    /// Bulk flat index from time slice and spatial index.
    pub fn bulk_index(&self, it: usize, sp: usize) -> usize {
        it * self.spatial_len() + sp
    }

    /// Boundary-domain flat index from time slice and sigma index.
    pub fn boundary_index(&self, it: usize, sig: usize) -> usize {
        it * self.sigma_len() + sig
    }

    /// Map a C-intrinsic tensor index (0 = t, 1.. = xA) to a spacetime index.
    pub fn c_to_spacetime(&self, a: usize) -> usize {
        if a == 0 {
            0
        } else {
            a + 1
        }
    }

    /// Map a slice tensor index (0.. = x1, xA..) to a spacetime index.
    pub fn s_to_spacetime(&self, i: usize) -> usize {
        i + 1
    }

    /// Number of x^A nodes on the corner Sigma (n=2: a line of nodes).
    pub fn sigma_node_count(&self) -> usize {
        self.sigma_len()
    }

    /// Restrict a bulk-domain field to one time slice.
    pub fn slice_of(&self, f: &TensorField, it: usize) -> TensorField {
        let nsp = self.spatial_len();
        let mut out = TensorField::zeros(f.rank, self.spatial_domain());
        for c in 0..f.comps() {
            let src = f.comp(c);
            out.comp_mut(c).copy_from_slice(&src[it * nsp..(it + 1) * nsp]);
        }
        out
    }

    /// Restrict a bulk-domain field to the boundary cylinder C.
    pub fn boundary_of(&self, f: &TensorField) -> TensorField {
        let nsp = self.spatial_len();
        let nsig = self.sigma_len();
        let nt = self.steps + 1;
        let mut out = TensorField::zeros(f.rank, self.boundary_domain());
        for c in 0..f.comps() {
            let src = f.comp(c);
            let dst = out.comp_mut(c);
            for it in 0..nt {
                for sig in 0..nsig {
                    dst[it * nsig + sig] = src[it * nsp + self.sigma_to_spatial(sig)];
                }
            }
        }
        out
    }

    /// Restrict a spatial-domain field to the Sigma section.
    pub fn sigma_of(&self, f: &TensorField) -> TensorField {
        let nsig = self.sigma_len();
        let mut out = TensorField::zeros(f.rank, self.sigma_domain());
        for c in 0..f.comps() {
            let src = f.comp(c);
            let dst = out.comp_mut(c);
            for sig in 0..nsig {
                dst[sig] = src[self.sigma_to_spatial(sig)];
            }
        }
        out
    }

    /// Max |f| over nodes within `margin` cells of an artificial outer face
    /// (x1 = -L1 and xA = +-LA/2). Used by the support-margin check; the
    /// physical faces S, C and the final time are not outer faces.
    pub fn outer_margin_max(&self, f: &TensorField, margin: usize) -> f64 {
        let dom = &f.dom;
        // locate which axes of the field domain are spatial: any axis whose
        // node count matches and spacing == dx, skipping a leading time axis.
        let offset = dom.ndim() - self.spatial_axes_of(dom);
        let mut worst = 0.0f64;
        for c in 0..f.comps() {
            let plane = f.comp(c);
            for (flat, idx) in dom.iter_indices().enumerate() {
                let mut near = false;
                for (k, &d) in self.sdims.iter().enumerate() {
                    let ax = offset + k;
                    if ax >= dom.ndim() {
                        continue;
                    }
                    let i = idx[ax];
                    if k == 0 {
                        if i < margin {
                            near = true;
                        }
                    } else if i < margin || i + margin >= d {
                        near = true;
                    }
                }
                if near {
                    worst = worst.max(plane[flat].abs());
                }
            }
        }
        worst
    }

    fn spatial_axes_of(&self, dom: &Domain) -> usize {
        if dom.ndim() == self.n + 1 || dom.ndim() == self.n {
            self.n.min(dom.ndim())
        } else {
            dom.ndim()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_count_matches_xa_nodes() {
        let g = CornerGrid::build(&GridConfig {
            n: 2,
            dt: 0.1,
            dx: 0.1,
            t_max: 1.0,
            l1: 1.0,
            la: 1.0,
            cfl_bound: 1.0,
        })
        .unwrap();
        assert_eq!(g.sigma_node_count(), 11);
        assert_eq!(g.sdims, vec![11, 11]);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let r = CornerGrid::build(&GridConfig {
            n: 2,
            dt: 0.5,
            dx: 0.1,
            t_max: 1.0,
            l1: 1.0,
            la: 1.0,
            cfl_bound: 0.5,
        });
        assert!(matches!(r, Err(crate::Error::Validation(_))));
    }

    #[test]
    fn sigma_is_two_dimensional_for_n3() {
        let g = CornerGrid::build(&GridConfig {
            n: 3,
            dt: 0.025,
            dx: 0.05,
            t_max: 0.5,
            l1: 0.5,
            la: 0.5,
            cfl_bound: 0.5,
        })
        .unwrap();
        assert_eq!(g.sigma_domain().ndim(), 2);
        assert_eq!(g.sigma_node_count(), 11 * 11);
    }

    #[test]
    fn negative_extent_is_rejected() {
        let r = CornerGrid::build(&GridConfig {
            n: 2,
            dt: -0.1,
            dx: 0.1,
            t_max: 1.0,
            l1: 1.0,
            la: 1.0,
            cfl_bound: 0.5,
        });
        assert!(r.is_err());
    }
}
