//! The target-data tuple driving the linear solve: bulk source, initial
//! data, boundary data and corner-angle data, plus constructors for zero
//! data, induced data (restricting an ambient deformation, the main test
//! oracle) and seeded random admissible data.

use crate::calculus::{self, GeomCache};
use crate::error::{validation, Result};
use crate::field::{Rank, TensorField};
use crate::frame::BoundaryFrame;
use crate::grid::CornerGrid;
use crate::metric::MetricField;
use crate::variations;

/// tau' = (F, (gamma', kappa', nu', V'_S)_S, (sigma', l', V'_C)_C, (alpha')_Sigma).
#[derive(Debug, Clone)]
pub struct TargetData {
    /// Bulk source, Sym2(n+1) on the bulk domain.
    pub f: TensorField,
    /// Initial metric variation, Sym2(n) slice indices, spatial domain.
    pub gamma_p: TensorField,
    /// Initial second-fundamental-form variation, Sym2(n), spatial domain.
    pub kappa_p: TensorField,
    /// Normal variation, Vector(n+1), spatial domain.
    pub nu_p: TensorField,
    /// Gauge data on S, Vector(n+1), spatial domain.
    pub v_s: TensorField,
    /// Trace-free conformal-class variation, Sym2(n) C-intrinsic, boundary domain.
    pub sigma_p: TensorField,
    /// Mean-curvature variation, scalar, boundary domain.
    pub ell_p: TensorField,
    /// Gauge data on C, Vector(n+1), boundary domain.
    pub v_c: TensorField,
    /// Corner-angle variation, scalar, Sigma domain.
    pub alpha_p: TensorField,
}

impl TargetData {
    pub fn zero(grid: &CornerGrid) -> TargetData {
        let d = grid.dim();
        let n = grid.n;
        TargetData {
            f: TensorField::zeros(Rank::Sym2(d), grid.bulk_domain()),
            gamma_p: TensorField::zeros(Rank::Sym2(n), grid.spatial_domain()),
            kappa_p: TensorField::zeros(Rank::Sym2(n), grid.spatial_domain()),
            nu_p: TensorField::zeros(Rank::Vector(d), grid.spatial_domain()),
            v_s: TensorField::zeros(Rank::Vector(d), grid.spatial_domain()),
            sigma_p: TensorField::zeros(Rank::Sym2(n), grid.boundary_domain()),
            ell_p: TensorField::zeros(Rank::Scalar, grid.boundary_domain()),
            v_c: TensorField::zeros(Rank::Vector(d), grid.boundary_domain()),
            alpha_p: TensorField::zeros(Rank::Scalar, grid.sigma_domain()),
        }
    }

    /// Exact linear scaling (used by linearity checks).
    pub fn scaled(&self, s: f64) -> TargetData {
        TargetData {
            f: self.f.scaled(s),
            gamma_p: self.gamma_p.scaled(s),
            kappa_p: self.kappa_p.scaled(s),
            nu_p: self.nu_p.scaled(s),
            v_s: self.v_s.scaled(s),
            sigma_p: self.sigma_p.scaled(s),
            ell_p: self.ell_p.scaled(s),
            v_c: self.v_c.scaled(s),
            alpha_p: self.alpha_p.scaled(s),
        }
    }

    pub fn add(&mut self, other: &TargetData, s: f64) {
        self.f.add_scaled(&other.f, s);
        self.gamma_p.add_scaled(&other.gamma_p, s);
        self.kappa_p.add_scaled(&other.kappa_p, s);
        self.nu_p.add_scaled(&other.nu_p, s);
        self.v_s.add_scaled(&other.v_s, s);
        self.sigma_p.add_scaled(&other.sigma_p, s);
        self.ell_p.add_scaled(&other.ell_p, s);
        self.v_c.add_scaled(&other.v_c, s);
        self.alpha_p.add_scaled(&other.alpha_p, s);
    }

    /// Invariant checks: trace-free sigma' and outer-face support margins.
    pub fn validate(&self, grid: &CornerGrid, gc_cache: &GeomCache) -> Result<()> {
        let n = grid.n;
        let mut worst = 0.0f64;
        for bn in 0..self.sigma_p.nodes() {
            let mut tr = 0.0;
            for a in 0..n {
                for b in 0..n {
                    tr += gc_cache.ginv.sym(a, b, bn) * self.sigma_p.sym(a, b, bn);
                }
            }
            worst = worst.max(tr.abs());
        }
        if worst > 1e-10 {
            return validation(format!("sigma' not trace-free: max |tr| = {}", worst));
        }
        for (name, field) in [("F", &self.f), ("gamma'", &self.gamma_p), ("kappa'", &self.kappa_p)]
        {
            let m = grid.outer_margin_max(field, 2);
            if m > 1e-12 {
                return validation(format!("{} violates the outer support margin ({})", name, m));
            }
        }
        Ok(())
    }
}

/// Target data induced by restricting an ambient deformation `h` (with time
/// derivative `hv`): the oracle of the verification suite. Produces data
/// that are corner-compatible by construction.
pub fn induced_from_ambient(
    g: &MetricField,
    frame: &BoundaryFrame,
    st_cache: &GeomCache,
    gc_cache: &GeomCache,
    h: &TensorField,
    hv: &TensorField,
) -> Result<TargetData> {
    let grid = &g.grid;
    let n = grid.n;
    let nsp = grid.spatial_len();

    let (f, _p) = calculus::lin_gauged_operator(st_cache, h);

    let h0 = grid.slice_of(h, 0);
    let hv0 = grid.slice_of(hv, 0);

    let mut gamma_p = TensorField::zeros(Rank::Sym2(n), grid.spatial_domain());
    for i in 0..n {
        for j in i..n {
            for sp in 0..nsp {
                gamma_p.sym_set(i, j, sp, h0.sym(i + 1, j + 1, sp));
            }
        }
    }
    let kappa_p = variations::slice_k_variation(g, frame, &h0, &hv0);
    let nu_p = variations::slice_normal_variation(g, &h0);

    let vprime = calculus::lin_gauge_vector(st_cache, h);
    let v_s = grid.slice_of(&vprime, 0);
    let v_c = grid.boundary_of(&vprime);

    // boundary split h^T = sigma' + u g_C
    let hb = grid.boundary_of(h);
    let mut sigma_p = TensorField::zeros(Rank::Sym2(n), grid.boundary_domain());
    for bn in 0..sigma_p.nodes() {
        let mut u = 0.0;
        for a in 0..n {
            for b in 0..n {
                u += gc_cache.ginv.sym(a, b, bn)
                    * hb.sym(grid.c_to_spacetime(a), grid.c_to_spacetime(b), bn);
            }
        }
        u /= n as f64;
        for a in 0..n {
            for b in a..n {
                let v = hb.sym(grid.c_to_spacetime(a), grid.c_to_spacetime(b), bn)
                    - u * frame.g_c.sym(a, b, bn);
                sigma_p.sym_set(a, b, bn, v);
            }
        }
    }
    let bv = variations::boundary_geometry_variation(g, frame, gc_cache, h, Some(hv))?;
    let ell_p = bv.h_p;
    let alpha_p = variations::alpha_variation(g, frame, &h0);

    Ok(TargetData { f, gamma_p, kappa_p, nu_p, v_s, sigma_p, ell_p, v_c, alpha_p })
}

/// Seeded random admissible target data: a random smooth compactly
/// supported ambient deformation, restricted. Compatibility holds by
/// construction; the seed fixes all randomness.
pub fn random_admissible(
    g: &MetricField,
    frame: &BoundaryFrame,
    st_cache: &GeomCache,
    gc_cache: &GeomCache,
    seed: u64,
    amplitude: f64,
) -> Result<(TargetData, TensorField, TensorField)> {
    let grid = &g.grid;
    let (h, hv) = random_smooth_deformation(grid, seed, amplitude);
    let tau = induced_from_ambient(g, frame, st_cache, gc_cache, &h, &hv)?;
    Ok((tau, h, hv))
}

/// Support radii keeping the window `cells` grid cells away from the outer
/// faces (stencils spread sources about three cells).
pub fn support_radii(grid: &CornerGrid, cells: f64) -> (f64, f64) {
    let r1 = 0.5 * grid.l1 - cells * grid.dx;
    let ra = 0.5 * grid.la - cells * grid.dx;
    (r1.max(0.1 * grid.l1), ra.max(0.1 * grid.la))
}

/// Random smooth compactly supported Sym2 deformation and its exact time
/// derivative: products of interior bumps with per-component trigonometric
/// modes drawn from a seeded generator. `radii` override the default
/// support (pass the coarsest grid's radii in convergence studies so the
/// data do not change with resolution).
pub fn random_smooth_deformation_with(
    grid: &CornerGrid,
    seed: u64,
    amplitude: f64,
    radii: (f64, f64),
) -> (TensorField, TensorField) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let ncomp = d * (d + 1) / 2;
    let mut modes = Vec::new();
    for _ in 0..ncomp {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let kt: f64 = rng.gen_range(0.5..2.0);
        let k1: f64 = rng.gen_range(0.5..2.0);
        let k2: f64 = rng.gen_range(0.5..2.0);
        let ph: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        modes.push((a, kt, k1, k2, ph));
    }
    // spatial window: away from outer faces, touching S and C freely
    let l1 = grid.l1;
    let (r1, ra) = radii;
    let win = move |x: &[f64]| -> f64 {
        let mut w = crate::metric::poly_window((x[1] + 0.5 * l1) / r1);
        for a in 2..x.len() {
            w *= crate::metric::poly_window(x[a] / ra);
        }
        w
    };
    let eval = |c: usize, x: &[f64], dt: bool| -> f64 {
        let (a, kt, k1, k2, ph) = modes[c];
        let sp = (k1 * x[1]).cos() * (k2 * x.get(2).copied().unwrap_or(0.0) + 0.4).sin();
        let extra = if x.len() > 3 { (x[3] * 1.1).cos() } else { 1.0 };
        if dt {
            amplitude * a * kt * (kt * x[0] + ph).cos() * sp * extra * win(x)
        } else {
            amplitude * a * (kt * x[0] + ph).sin() * sp * extra * win(x)
        }
    };
    let h = TensorField::from_fn(Rank::Sym2(d), grid.bulk_domain(), |c, x| eval(c, x, false));
    let hv = TensorField::from_fn(Rank::Sym2(d), grid.bulk_domain(), |c, x| eval(c, x, true));
    (h, hv)
}

pub fn random_smooth_deformation(
    grid: &CornerGrid,
    seed: u64,
    amplitude: f64,
) -> (TensorField, TensorField) {
    let radii = support_radii(grid, 6.0);
    random_smooth_deformation_with(grid, seed, amplitude, radii)
}

/// Random smooth deformation supported in a neighborhood of the corner,
/// touching S and C but vanishing near the outer faces (the identity-check
/// class: boundary restrictions are nonzero).
pub fn random_corner_deformation(
    grid: &CornerGrid,
    seed: u64,
    amplitude: f64,
    radii: (f64, f64),
) -> (TensorField, TensorField) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let ncomp = d * (d + 1) / 2;
    let mut modes = Vec::new();
    for _ in 0..ncomp {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let kt: f64 = rng.gen_range(0.5..2.0);
        let k1: f64 = rng.gen_range(0.5..2.0);
        let k2: f64 = rng.gen_range(0.5..2.0);
        let ph: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        modes.push((a, kt, k1, k2, ph));
    }
    let (r1, ra) = radii;
    let win = move |x: &[f64]| -> f64 {
        let mut w = crate::metric::poly_window(x[1] / r1);
        for a in 2..x.len() {
            w *= crate::metric::poly_window(x[a] / ra);
        }
        w
    };
    let eval = move |c: usize, x: &[f64], dt: bool| -> f64 {
        let (a, kt, k1, k2, ph) = modes[c];
        let sp = (k1 * x[1]).cos() * (k2 * x.get(2).copied().unwrap_or(0.0) + 0.4).sin();
        let extra = if x.len() > 3 { (x[3] * 1.1).cos() } else { 1.0 };
        if dt {
            amplitude * a * kt * (kt * x[0] + ph).cos() * sp * extra * win(x)
        } else {
            amplitude * a * (kt * x[0] + ph).sin() * sp * extra * win(x)
        }
    };
    let h = TensorField::from_fn(Rank::Sym2(d), grid.bulk_domain(), |c, x| eval(c, x, false));
    let hv = TensorField::from_fn(Rank::Sym2(d), grid.bulk_domain(), |c, x| eval(c, x, true));
    (h, hv)
}

/// Random smooth trigonometric Sym2 deformation without any window:
/// moderate derivatives everywhere, used by pointwise identity checks.
pub fn random_trig_deformation(
    grid: &CornerGrid,
    seed: u64,
    amplitude: f64,
) -> (TensorField, TensorField) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let ncomp = d * (d + 1) / 2;
    let mut modes = Vec::new();
    for _ in 0..ncomp {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let kt: f64 = rng.gen_range(0.5..1.8);
        let k1: f64 = rng.gen_range(0.5..1.8);
        let k2: f64 = rng.gen_range(0.5..1.8);
        let ph: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        modes.push((a, kt, k1, k2, ph));
    }
    let eval = move |c: usize, x: &[f64], dt: bool| -> f64 {
        let (a, kt, k1, k2, ph) = modes[c];
        let sp = (k1 * x[1]).cos() * (k2 * x.get(2).copied().unwrap_or(0.0) + 0.4).sin();
        let extra = if x.len() > 3 { (x[3] * 1.1).cos() } else { 1.0 };
        if dt {
            amplitude * a * kt * (kt * x[0] + ph).cos() * sp * extra
        } else {
            amplitude * a * (kt * x[0] + ph).sin() * sp * extra
        }
    };
    let h = TensorField::from_fn(Rank::Sym2(d), grid.bulk_domain(), |c, x| eval(c, x, false));
    let hv = TensorField::from_fn(Rank::Sym2(d), grid.bulk_domain(), |c, x| eval(c, x, true));
    (h, hv)
}

/// Corner-touching support radii: distance from the outer faces only.
pub fn corner_radii(grid: &CornerGrid, cells: f64) -> (f64, f64) {
    let r1 = grid.l1 - cells * grid.dx;
    let ra = 0.5 * grid.la - cells * grid.dx;
    (r1.max(0.2 * grid.l1), ra.max(0.2 * grid.la))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CornerGrid, GridConfig};
    use crate::metric::minkowski_corner;

    #[test]
    fn induced_data_is_trace_free_and_linear() {
        let grid = CornerGrid::build(&GridConfig::with_resolution(2, 24, 0.5)).unwrap();
        let g = minkowski_corner(0.2, &grid).unwrap();
        let frame = crate::frame::hypersurface_frame(&g).unwrap();
        let st_cache = GeomCache::spacetime(&g).unwrap();
        let gc_cache = GeomCache::intrinsic(grid.n, frame.g_c.clone(), false).unwrap();
        let (tau, h, hv) =
            random_admissible(&g, &frame, &st_cache, &gc_cache, 7, 0.1).unwrap();
        tau.validate(&grid, &gc_cache).unwrap();
        // linearity: induced(2h) = 2 induced(h) exactly
        let tau2 = induced_from_ambient(
            &g,
            &frame,
            &st_cache,
            &gc_cache,
            &h.scaled(2.0),
            &hv.scaled(2.0),
        )
        .unwrap();
        let mut diff = tau2.f.clone();
        diff.add_scaled(&tau.f, -2.0);
        assert!(diff.max_norm() < 1e-12);
        let mut diffa = tau2.alpha_p.clone();
        diffa.add_scaled(&tau.alpha_p, -2.0);
        assert!(diffa.max_norm() < 1e-13);
    }
}
