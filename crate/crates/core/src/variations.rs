//! Linearized extrinsic geometry: variations of the boundary second
//! fundamental form, the boundary mean curvature, the unit normals, the
//! slice second fundamental form and the corner angle under a metric
//! deformation `h`.

use crate::calculus::{self, GeomCache};
use crate::error::Result;
use crate::field::{Rank, TensorField};
use crate::frame::BoundaryFrame;
use crate::metric::MetricField;
use crate::stencil;

/// Lie derivative `(L_V h)_{ab}` for `V` on the metric domain (broadcast in
/// time when the background is static) and `h` on the bulk domain.
pub fn lie_sym2_metric_vector(
    g: &MetricField,
    v: &TensorField,
    h: &TensorField,
    hv: Option<&TensorField>,
) -> TensorField {
    let grid = &g.grid;
    let d = grid.dim();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let bulk = grid.bulk_domain();
    let dh = calculus::all_derivs(h); // bulk-domain derivatives (time real)
    // metric-domain derivatives of v per tensor direction
    let mdom = g.comp.dom.clone();
    let mlen = mdom.len();
    let ax_of = |e: usize| -> Option<usize> {
        if g.time_dependent {
            Some(e)
        } else if e == 0 {
            None
        } else {
            Some(e - 1)
        }
    };
    let mut dv = vec![vec![vec![0.0; mlen]; d]; d]; // [e][c]
    for e in 0..d {
        if let Some(ax) = ax_of(e) {
            for c in 0..d {
                stencil::diff1(&mdom, v.comp(c), ax, &mut dv[e][c]);
            }
        }
    }
    let mut out = TensorField::zeros(Rank::Sym2(d), bulk);
    for a in 0..d {
        for b in a..d {
            let k = crate::field::sym_index(d, a, b);
            for it in 0..nt {
                for sp in 0..nsp {
                    let node = it * nsp + sp;
                    let m = g.mnode_of_bulk(it, sp);
                    let mut s = 0.0;
                    for c in 0..d {
                        let dch = if c == 0 {
                            match hv {
                                Some(vel) => vel.sym(a, b, node),
                                None => dh[0][k][node],
                            }
                        } else {
                            dh[c][k][node]
                        };
                        s += v.get(c, m) * dch
                            + h.sym(c, b, node) * dv[a][c][m]
                            + h.sym(a, c, node) * dv[b][c][m];
                    }
                    out.sym_set(a, b, node, s);
                }
            }
        }
    }
    out
}

/// Variation of the outward unit boundary normal:
/// `nu'^a = -h^{a1}/sqrt(g^{11}) + 1/2 g^{a1} (g^{11})^{-3/2} h^{11}`,
/// evaluated on the bulk domain (meaningful near C).
pub fn boundary_normal_variation(g: &MetricField, h: &TensorField) -> TensorField {
    normal_variation(g, h, 1, 1.0)
}

/// Variation of the future unit slice normal:
/// `nu'^a = h^{a0}/sqrt(-g^{00}) + 1/2 g^{a0} (-g^{00})^{-3/2} h^{00}`.
pub fn slice_normal_variation(g: &MetricField, h: &TensorField) -> TensorField {
    normal_variation(g, h, 0, -1.0)
}

fn normal_variation(g: &MetricField, h: &TensorField, dir: usize, sgn: f64) -> TensorField {
    let grid = &g.grid;
    let d = grid.dim();
    let nsp = grid.spatial_len();
    let on_slice = h.dom.ndim() == grid.n; // h given on one slice only
    let nt = if on_slice { 1 } else { grid.steps + 1 };
    let dom = if on_slice { grid.spatial_domain() } else { grid.bulk_domain() };
    let mut out = TensorField::zeros(Rank::Vector(d), dom);
    for it in 0..nt {
        for sp in 0..nsp {
            let node = it * nsp + sp;
            let m = g.mnode_of_bulk(it, sp);
            let gi = crate::smallmat::inv(&g.matrix(m), d).expect("metric invertible");
            // raised h^{a dir} and h^{dir dir}
            let mut hup = vec![0.0; d];
            let mut hdd = 0.0;
            for a in 0..d {
                let mut s = 0.0;
                for mu in 0..d {
                    for nu in 0..d {
                        s += gi[a * d + mu] * gi[dir * d + nu] * h.sym(mu, nu, node);
                    }
                }
                hup[a] = s;
            }
            for mu in 0..d {
                for nu in 0..d {
                    hdd += gi[dir * d + mu] * gi[dir * d + nu] * h.sym(mu, nu, node);
                }
            }
            let gdd = sgn * gi[dir * d + dir]; // g^{11} or -g^{00}, positive
            for a in 0..d {
                // the prefactor and the normalization sign multiply to +1
                // in the second term for both normals
                let v = -sgn * hup[a] / gdd.sqrt()
                    + 0.5 * gi[a * d + dir] * gdd.powf(-1.5) * hdd;
                out.set(a, node, v);
            }
        }
    }
    out
}

/// Output of the boundary geometry variation.
pub struct BoundaryVariation {
    /// `(A'_h)^T` as a C-intrinsic Sym2(n) on the boundary domain.
    pub a_p: TensorField,
    /// `H'_h` on the boundary domain.
    pub h_p: TensorField,
    /// `nu'_h` as a spacetime vector on the boundary domain.
    pub nu_p: TensorField,
    /// the mixed components `h(nu)^T` (C-intrinsic one-form) on the
    /// boundary domain, shared with the evolution assemblies.
    pub hnu_t: TensorField,
    /// `h_{nu nu}` on the boundary domain.
    pub hnunu: TensorField,
}

/// `(A'_h)^T = 1/2 (L_nu h)^T - delta*_C h(nu)^T - 1/2 h_nunu A` and
/// `H'_h = 1/2 nu(tr_C h) - div_C h(nu)^T - 1/2 h_nunu H_C`.
pub fn boundary_geometry_variation(
    g: &MetricField,
    frame: &BoundaryFrame,
    gc_cache: &GeomCache,
    h: &TensorField,
    hv: Option<&TensorField>,
) -> Result<BoundaryVariation> {
    let grid = &g.grid;
    let n = grid.n;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let bdom = grid.boundary_domain();

    // h(nu)^T and h_nunu on the boundary
    let mut hnu_t = TensorField::zeros(Rank::Vector(n), bdom.clone());
    let mut hnunu = TensorField::zeros(Rank::Scalar, bdom.clone());
    for it in 0..nt {
        for sig in 0..nsig {
            let sp = grid.sigma_to_spatial(sig);
            let node = it * nsp + sp;
            let bn = it * nsig + sig;
            let m = g.mnode_of_bulk(it, sp);
            for a in 0..n {
                let sa = grid.c_to_spacetime(a);
                let mut s = 0.0;
                for b in 0..d {
                    s += h.sym(sa, b, node) * frame.nu_c_bulk.get(b, m);
                }
                hnu_t.set(a, bn, s);
            }
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    s += h.sym(a, b, node) * frame.nu_c_bulk.get(a, m) * frame.nu_c_bulk.get(b, m);
                }
            }
            hnunu.set(0, bn, s);
        }
    }

    // 1/2 (L_nu h)^T on the boundary
    let lie = lie_sym2_metric_vector(g, &frame.nu_c_bulk, h, hv);
    let lie_b = grid.boundary_of(&lie);

    // delta*_C of the one-form h(nu)^T
    let dstar = calculus::sym_grad_oneform(gc_cache, &hnu_t);

    let mut a_p = TensorField::zeros(Rank::Sym2(n), bdom.clone());
    for a in 0..n {
        for b in a..n {
            let sa = grid.c_to_spacetime(a);
            let sb = grid.c_to_spacetime(b);
            for bn in 0..a_p.nodes() {
                let v = 0.5 * lie_b.sym(sa, sb, bn)
                    - dstar.sym(a, b, bn)
                    - 0.5 * hnunu.get(0, bn) * frame.a_c.sym(a, b, bn);
                a_p.sym_set(a, b, bn, v);
            }
        }
    }

    // H'_h = 1/2 nu(tr_C h) - div_C h(nu)^T - 1/2 h_nunu H_C
    // layered boundary trace of h over the bulk domain
    let mut trh = TensorField::zeros(Rank::Scalar, grid.bulk_domain());
    for it in 0..nt {
        for sp in 0..nsp {
            let node = it * nsp + sp;
            let m = g.mnode_of_bulk(it, sp);
            // layer-induced metric block (C indices at this x1-layer)
            let mut blk = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    blk[a * n + b] =
                        g.comp.sym(grid.c_to_spacetime(a), grid.c_to_spacetime(b), m);
                }
            }
            let blki = crate::smallmat::inv(&blk, n).expect("layer metric nondegenerate");
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += blki[a * n + b]
                        * h.sym(grid.c_to_spacetime(a), grid.c_to_spacetime(b), node);
                }
            }
            trh.set(0, node, s);
        }
    }
    let nu_trh = normal_derivative_scalar(g, frame, &trh, None);
    let div_hnu = calculus::divergence_oneform(gc_cache, &hnu_t);
    let mut h_p = TensorField::zeros(Rank::Scalar, bdom.clone());
    for bn in 0..h_p.nodes() {
        let v = 0.5 * nu_trh.get(0, bn) - div_hnu.get(0, bn)
            - 0.5 * hnunu.get(0, bn) * frame.h_c.get(0, bn);
        h_p.set(0, bn, v);
    }

    let nu_var = boundary_normal_variation(g, h);
    let nu_p = grid.boundary_of(&nu_var);

    Ok(BoundaryVariation { a_p, h_p, nu_p, hnu_t, hnunu })
}

/// Directional derivative `nu^c d_c f` of a scalar bulk field at the
/// boundary, one-sided into the bulk along x1.
pub fn normal_derivative_scalar(
    g: &MetricField,
    frame: &BoundaryFrame,
    f: &TensorField,
    fv: Option<&TensorField>,
) -> TensorField {
    let grid = &g.grid;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let bulk = grid.bulk_domain();
    let df = calculus::all_derivs(f);
    let _ = &bulk;
    let mut out = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
    for it in 0..nt {
        for sig in 0..nsig {
            let sp = grid.sigma_to_spatial(sig);
            let node = it * nsp + sp;
            let m = g.mnode_of_bulk(it, sp);
            let mut s = 0.0;
            for c in 0..d {
                let dcf = if c == 0 {
                    match fv {
                        Some(v) => v.get(0, node),
                        None => df[0][0][node],
                    }
                } else {
                    df[c][0][node]
                };
                s += frame.nu_c_bulk.get(c, m) * dcf;
            }
            out.set(0, it * nsig + sig, s);
        }
    }
    out
}

/// Covariant normal derivative of a C-intrinsic one-form extended into the
/// bulk by layers: `(nabla_nu w)_a = nu^c d_c w_a - nu^c G^e_{ca} w_e`
/// projected tangentially. `w_layers` is a Vector(n) field on the bulk
/// domain holding the layer-wise extension of the one-form.
pub fn normal_derivative_oneform(
    g: &MetricField,
    frame: &BoundaryFrame,
    cache: &GeomCache,
    w_layers: &TensorField,
) -> TensorField {
    let grid = &g.grid;
    let d = grid.dim();
    let n = grid.n;
    let nsig = grid.sigma_len();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let dw = calculus::all_derivs(w_layers);
    let mut out = TensorField::zeros(Rank::Vector(n), grid.boundary_domain());
    for it in 0..nt {
        for sig in 0..nsig {
            let sp = grid.sigma_to_spatial(sig);
            let node = it * nsp + sp;
            let m = g.mnode_of_bulk(it, sp);
            for a in 0..n {
                let sa = grid.c_to_spacetime(a);
                let mut s = 0.0;
                for c in 0..d {
                    s += frame.nu_c_bulk.get(c, m) * dw[c][a][node];
                    // connection term: - nu^c G^e_{c sa} w_e with w a
                    // spacetime one-form supported on tangential components
                    if !cache.flat {
                        for e in 0..n {
                            let se = grid.c_to_spacetime(e);
                            s -= frame.nu_c_bulk.get(c, m)
                                * cache.gamma_at(se, c, sa, m)
                                * w_layers.get(e, node);
                        }
                    }
                }
                out.set(a, it * nsig + sig, s);
            }
        }
    }
    out
}

/// Slice second fundamental form variation
/// `K'_h = 1/2[(L_nu h) + (L_{nu'} g)]` restricted to slice indices, at the
/// initial slice, from the history `h` and its time derivative `hv`.
pub fn slice_k_variation(
    g: &MetricField,
    frame: &BoundaryFrame,
    h_slice: &TensorField,
    hv_slice: &TensorField,
) -> TensorField {
    let grid = &g.grid;
    let n = grid.n;
    let d = grid.dim();
    let nsp = grid.spatial_len();
    let sdom = grid.spatial_domain();
    // (L_nu h)_ij on the slice
    let dh = calculus::all_derivs(h_slice); // spatial derivatives of the slice components
    let mdom = g.comp.dom.clone();
    let mlen = mdom.len();
    let ax_of = |e: usize| -> Option<usize> {
        if g.time_dependent {
            Some(e)
        } else if e == 0 {
            None
        } else {
            Some(e - 1)
        }
    };
    let mut dnu = vec![vec![vec![0.0; mlen]; d]; d];
    for e in 0..d {
        if let Some(ax) = ax_of(e) {
            for c in 0..d {
                stencil::diff1(&mdom, frame.nu_s.comp(c), ax, &mut dnu[e][c]);
            }
        }
    }
    // nu' on the slice and its spatial derivatives
    let nu_p = slice_normal_variation(g, h_slice);
    let dnup = calculus::all_derivs(&nu_p);
    // metric derivatives on the metric domain
    let mut dg = vec![vec![vec![0.0; mlen]; g.comp.comps()]; d];
    for e in 0..d {
        if let Some(ax) = ax_of(e) {
            for k in 0..g.comp.comps() {
                stencil::diff1(&mdom, g.comp.comp(k), ax, &mut dg[e][k]);
            }
        }
    }

    let mut out = TensorField::zeros(Rank::Sym2(n), sdom);
    for i in 0..n {
        for j in i..n {
            let (si, sj) = (i + 1, j + 1);
            let k = crate::field::sym_index(d, si, sj);
            for sp in 0..nsp {
                let m = g.mnode_of_bulk(0, sp);
                let mut lie_nu_h = 0.0;
                let mut lie_nup_g = 0.0;
                for c in 0..d {
                    let dch = if c == 0 {
                        hv_slice.sym(si, sj, sp)
                    } else {
                        dh[c - 1][k][sp]
                    };
                    lie_nu_h += frame.nu_s.get(c, m) * dch;
                    // spatial-direction derivatives of nu and nu'
                    lie_nu_h += h_slice.sym(c, sj, sp) * dnu[si][c][m]
                        + h_slice.sym(si, c, sp) * dnu[sj][c][m];
                    lie_nup_g += nu_p.get(c, sp) * dg[c][k][m];
                    lie_nup_g += g.comp.sym(c, sj, m) * dnup[i][c][sp]
                        + g.comp.sym(si, c, m) * dnup[j][c][sp];
                }
                out.sym_set(i, j, sp, 0.5 * (lie_nu_h + lie_nup_g));
            }
        }
    }
    out
}

/// Corner angle variation
/// `alpha'_h = h(nu_S, nu_C) + g(nu'_S, nu_C) + g(nu_S, nu'_C)` on Sigma.
pub fn alpha_variation(
    g: &MetricField,
    frame: &BoundaryFrame,
    h_slice: &TensorField,
) -> TensorField {
    let grid = &g.grid;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nu_s_p = slice_normal_variation(g, h_slice);
    let nu_c_p = boundary_normal_variation(g, h_slice);
    let mut out = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let m = g.mnode_of_bulk(0, sp);
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                s += h_slice.sym(a, b, sp) * frame.nu_s.get(a, m) * frame.nu_c_bulk.get(b, m)
                    + g.comp.sym(a, b, m)
                        * (nu_s_p.get(a, sp) * frame.nu_c_bulk.get(b, m)
                            + frame.nu_s.get(a, m) * nu_c_p.get(b, sp));
            }
        }
        out.set(0, sig, s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::hypersurface_frame;
    use crate::grid::{CornerGrid, GridConfig};
    use crate::metric::{minkowski_corner, perturb_metric, BumpProfile, MetricField};

    fn grid(nx: usize) -> CornerGrid {
        CornerGrid::build(&GridConfig::with_resolution(2, nx, 0.5)).unwrap()
    }

    fn smooth_h(grid: &CornerGrid, amp: f64) -> TensorField {
        TensorField::from_fn(Rank::Sym2(3), grid.bulk_domain(), |c, x| {
            amp * (1.0 + 0.2 * c as f64)
                * (x[0] * 1.1 + 0.3).sin()
                * (x[1] * 0.9).cos()
                * (x[2] * 1.3).sin()
        })
    }

    #[test]
    fn normal_variations_match_finite_difference() {
        let gr = grid(8);
        let g0 = minkowski_corner(0.3, &gr).unwrap();
        let g = perturb_metric(&g0, &BumpProfile::gaussian_g22(&gr), 0.05).unwrap();
        let h = smooth_h(&gr, 1.0);
        let h0 = gr.slice_of(&h, 0);
        let nu_c_var = boundary_normal_variation(&g, &h0);
        let nu_s_var = slice_normal_variation(&g, &h0);
        // exact normals of g + s h at s = +-1e-4
        let s = 1e-4;
        let mk = |sgn: f64| -> MetricField {
            let mut gp = g.clone();
            // static background but h has time dependence; restrict to t=0
            for a in 0..3 {
                for b in a..3 {
                    for sp in 0..gr.spatial_len() {
                        let v = gp.comp.sym(a, b, sp) + sgn * s * h0.sym(a, b, sp);
                        gp.comp.sym_set(a, b, sp, v);
                    }
                }
            }
            gp
        };
        let gp = mk(1.0);
        let gm = mk(-1.0);
        let ncp = crate::frame::boundary_normal_field(&gp).unwrap();
        let ncm = crate::frame::boundary_normal_field(&gm).unwrap();
        let nsp2 = crate::frame::slice_normal_field(&gp).unwrap();
        let nsm = crate::frame::slice_normal_field(&gm).unwrap();
        let mut worst = 0.0f64;
        for sp in 0..gr.spatial_len() {
            for a in 0..3 {
                let fd_c = (ncp.get(a, sp) - ncm.get(a, sp)) / (2.0 * s);
                let fd_s = (nsp2.get(a, sp) - nsm.get(a, sp)) / (2.0 * s);
                worst = worst.max((fd_c - nu_c_var.get(a, sp)).abs());
                worst = worst.max((fd_s - nu_s_var.get(a, sp)).abs());
            }
        }
        assert!(worst < 1e-6, "normal variation mismatch {}", worst);
    }

    #[test]
    fn mean_curvature_variation_analytic_case() {
        // flat g, h with only h_22(x1) dependence: H'_h = 1/2 d_1 h_22
        let gr = grid(16);
        let g = minkowski_corner(0.0, &gr).unwrap();
        let frame = hypersurface_frame(&g).unwrap();
        let gc_cache = GeomCache::intrinsic(gr.n, frame.g_c.clone(), false).unwrap();
        let h = TensorField::from_fn(Rank::Sym2(3), gr.bulk_domain(), |c, x| {
            if c == crate::field::sym_index(3, 2, 2) {
                0.2 * (1.4 * x[1]).sin()
            } else {
                0.0
            }
        });
        let bv = boundary_geometry_variation(&g, &frame, &gc_cache, &h, None).unwrap();
        // at x1 = 0: 1/2 * 0.2 * 1.4 * cos(0)
        let want = 0.5 * 0.2 * 1.4;
        for bn in 0..bv.h_p.nodes() {
            assert!((bv.h_p.get(0, bn) - want).abs() < 1e-4, "{}", bv.h_p.get(0, bn));
        }
        // h = c g: A' and H' vanish at the flat corner (constant fields)
        let mut cg = TensorField::zeros(Rank::Sym2(3), gr.bulk_domain());
        for a in 0..3 {
            for b in a..3 {
                let v = g.comp.sym(a, b, 0) * 0.7;
                for node in 0..cg.nodes() {
                    cg.sym_set(a, b, node, v);
                }
            }
        }
        let bv2 = boundary_geometry_variation(&g, &frame, &gc_cache, &cg, None).unwrap();
        assert!(bv2.h_p.max_norm() < 1e-12);
        assert!(bv2.a_p.max_norm() < 1e-12);
    }

    #[test]
    fn a_variation_consistent_with_direct_route() {
        // displayed formula vs 1/2(L_nu h + L_{nu'} g)^T via finite
        // differences of the frame's A under g -> g + s h (static h slice)
        let gr = grid(12);
        let g0 = minkowski_corner(0.2, &gr).unwrap();
        let g = perturb_metric(&g0, &BumpProfile::curved_corner(&gr, 0.08), 1.0).unwrap();
        let frame = hypersurface_frame(&g).unwrap();
        let gc_cache = GeomCache::intrinsic(gr.n, frame.g_c.clone(), false).unwrap();
        // static deformation so the finite-difference route is well-defined
        let h = TensorField::from_fn(Rank::Sym2(3), gr.bulk_domain(), |c, x| {
            0.3 * (1.0 + 0.1 * c as f64) * (x[1] * 1.2).cos() * (x[2] * 0.8).sin()
        });
        let bv = boundary_geometry_variation(&g, &frame, &gc_cache, &h, None).unwrap();
        let s = 1e-5;
        let mk = |sgn: f64| -> MetricField {
            let mut gp = g.clone();
            for a in 0..3 {
                for b in a..3 {
                    for sp in 0..gr.spatial_len() {
                        let v = gp.comp.sym(a, b, sp) + sgn * s * h.sym(a, b, sp);
                        gp.comp.sym_set(a, b, sp, v);
                    }
                }
            }
            gp
        };
        let fp = hypersurface_frame(&mk(1.0)).unwrap();
        let fm = hypersurface_frame(&mk(-1.0)).unwrap();
        let mut worst = 0.0f64;
        let bdom = gr.boundary_domain();
        for (bn, idx) in bdom.iter_indices().enumerate() {
            // skip boundary-domain edges (frame differences are one-sided there)
            if idx.iter().zip(bdom.dims.iter()).any(|(&i, &d)| i < 2 || i + 2 >= d) {
                continue;
            }
            for a in 0..2 {
                for b in a..2 {
                    let fd = (fp.a_c.sym(a, b, bn) - fm.a_c.sym(a, b, bn)) / (2.0 * s);
                    worst = worst.max((fd - bv.a_p.sym(a, b, bn)).abs());
                }
                let fdh = (fp.h_c.get(0, bn) - fm.h_c.get(0, bn)) / (2.0 * s);
                worst = worst.max((fdh - bv.h_p.get(0, bn)).abs());
            }
        }
        assert!(worst < 5e-3, "A'/H' route mismatch {}", worst);
    }

    #[test]
    fn alpha_variation_matches_finite_difference() {
        let gr = grid(10);
        let g0 = minkowski_corner(0.4, &gr).unwrap();
        let g = perturb_metric(&g0, &BumpProfile::curved_corner(&gr, 0.05), 1.0).unwrap();
        let frame = hypersurface_frame(&g).unwrap();
        let h = smooth_h(&gr, 0.5);
        let h0 = gr.slice_of(&h, 0);
        let ap = alpha_variation(&g, &frame, &h0);
        let s = 1e-5;
        let mk = |sgn: f64| -> MetricField {
            let mut gp = g.clone();
            for a in 0..3 {
                for b in a..3 {
                    for sp in 0..gr.spatial_len() {
                        let v = gp.comp.sym(a, b, sp) + sgn * s * h0.sym(a, b, sp);
                        gp.comp.sym_set(a, b, sp, v);
                    }
                }
            }
            gp
        };
        let fp = hypersurface_frame(&mk(1.0)).unwrap();
        let fm = hypersurface_frame(&mk(-1.0)).unwrap();
        for sig in 0..gr.sigma_len() {
            let fd = (fp.alpha.get(0, sig) - fm.alpha.get(0, sig)) / (2.0 * s);
            assert!((fd - ap.get(0, sig)).abs() < 1e-6, "alpha' mismatch at {}", sig);
        }
    }
}
