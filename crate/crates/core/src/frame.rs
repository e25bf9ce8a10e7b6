//! Hypersurface frames at the initial slice S, the timelike boundary C and
//! the corner Sigma: unit normals, the future unit tangent of Sigma in C,
//! second fundamental forms, mean curvatures and the corner angle.

use crate::calculus::GeomCache;
use crate::error::{geometry, Result};
use crate::field::{Rank, TensorField};
use crate::grid::CornerGrid;
use crate::metric::MetricField;
use crate::smallmat;
use crate::stencil;

/// Frame data for a background metric. Boundary quantities live on the
/// boundary domain `[t, xA..]`; slice quantities at t = 0 on the spatial or
/// Sigma domains. All tensors are stored in the index conventions of their
/// home: spacetime (dim n+1), C-intrinsic (dim n) or S-intrinsic (dim n).
pub struct BoundaryFrame {
    pub grid: CornerGrid,
    /// Future-pointing unit timelike normal of the t-slices, on the metric
    /// domain (spatial for static backgrounds).
    pub nu_s: TensorField,
    /// Outward unit spacelike normal of C extended off the boundary, on the
    /// metric domain.
    pub nu_c_bulk: TensorField,
    /// nu_C restricted to the boundary domain.
    pub nu_c: TensorField,
    /// Unit future timelike tangent of the Sigma_t sections inside C.
    pub t_c: TensorField,
    /// Induced boundary metric on C (C-intrinsic Sym2(n)), boundary domain.
    pub g_c: TensorField,
    /// Second fundamental form of C (C-intrinsic Sym2(n)).
    pub a_c: TensorField,
    /// Mean curvature of C.
    pub h_c: TensorField,
    /// Corner angle g(nu_S, nu_C) on Sigma.
    pub alpha: TensorField,
    /// Slice metric gamma_ij at t = 0 (S-intrinsic Sym2(n)), spatial domain.
    pub gamma_s: TensorField,
    /// Second fundamental form of S at t = 0 (S-intrinsic Sym2(n)).
    pub k_s: TensorField,
    /// Outward unit normal of Sigma in (S, gamma), S-intrinsic, Sigma domain.
    pub n_sigma: TensorField,
    /// Second fundamental form of Sigma in S (Sigma-intrinsic Sym2(n-1)).
    pub b_sigma: TensorField,
    /// Mean curvature of Sigma in (S, gamma).
    pub h_sigma: TensorField,
    /// tr_Sigma K_S on Sigma.
    pub tr_sigma_k: TensorField,
    /// Mean curvature of Sigma in (C, g_C) with respect to T^C.
    pub h_sigma_c: TensorField,
}

/// Inverse metric matrix at a metric-domain node.
fn inverse_at(g: &MetricField, mnode: usize) -> Vec<f64> {
    let d = g.dim();
    smallmat::inv(&g.matrix(mnode), d).expect("nondegenerate metric")
}

/// Future unit timelike normal field `nu_S^a = -g^{a0}/sqrt(-g^{00})` on the
/// metric domain.
pub fn slice_normal_field(g: &MetricField) -> Result<TensorField> {
    let d = g.dim();
    let dom = g.comp.dom.clone();
    let mut out = TensorField::zeros(Rank::Vector(d), dom.clone());
    for node in 0..dom.len() {
        let gi = inverse_at(g, node);
        let g00 = gi[0];
        if !(g00 < 0.0) {
            return geometry(format!("S not spacelike at node {} (g^00 = {})", node, g00));
        }
        let nrm = (-g00).sqrt();
        for a in 0..d {
            out.set(a, node, -gi[a * d] / nrm);
        }
    }
    Ok(out)
}

/// Outward unit spacelike normal field `nu_C^a = g^{a1}/sqrt(g^{11})` on the
/// metric domain; only meaningful near C but defined wherever g^{11} > 0.
pub fn boundary_normal_field(g: &MetricField) -> Result<TensorField> {
    let d = g.dim();
    let dom = g.comp.dom.clone();
    let mut out = TensorField::zeros(Rank::Vector(d), dom.clone());
    for node in 0..dom.len() {
        let gi = inverse_at(g, node);
        let g11 = gi[d + 1];
        if !(g11 > 0.0) {
            return geometry(format!("C not timelike at node {} (g^11 = {})", node, g11));
        }
        let nrm = g11.sqrt();
        for a in 0..d {
            out.set(a, node, gi[a * d + 1] / nrm);
        }
    }
    Ok(out)
}

/// Restrict a metric-domain field to the boundary domain, broadcasting over
/// time for static backgrounds.
pub fn metric_field_to_boundary(grid: &CornerGrid, g: &MetricField, f: &TensorField) -> TensorField {
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;
    let mut out = TensorField::zeros(f.rank, grid.boundary_domain());
    for c in 0..f.comps() {
        for it in 0..nt {
            for sig in 0..nsig {
                let sp = grid.sigma_to_spatial(sig);
                let m = g.mnode_of_bulk(it, sp);
                out.set(c, it * nsig + sig, f.get(c, m));
            }
        }
    }
    out
}

/// Induced boundary metric on C as a C-intrinsic Sym2(n) over the boundary
/// domain.
pub fn boundary_metric(grid: &CornerGrid, g: &MetricField) -> TensorField {
    let n = grid.n;
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;
    let mut out = TensorField::zeros(Rank::Sym2(n), grid.boundary_domain());
    for a in 0..n {
        for b in a..n {
            let sa = grid.c_to_spacetime(a);
            let sb = grid.c_to_spacetime(b);
            for it in 0..nt {
                for sig in 0..nsig {
                    let sp = grid.sigma_to_spatial(sig);
                    out.sym_set(a, b, it * nsig + sig, g.at(it, sp, sa, sb));
                }
            }
        }
    }
    out
}

/// Slice metric gamma_ij at a time slice as S-intrinsic Sym2(n) over the
/// spatial domain.
pub fn slice_metric(grid: &CornerGrid, g: &MetricField, it: usize) -> TensorField {
    let n = grid.n;
    let nsp = grid.spatial_len();
    let mut out = TensorField::zeros(Rank::Sym2(n), grid.spatial_domain());
    for i in 0..n {
        for j in i..n {
            for sp in 0..nsp {
                out.sym_set(i, j, sp, g.at(it, sp, i + 1, j + 1));
            }
        }
    }
    out
}

/// Lie derivative `(L_V g)_{ab}` of the metric along a vector field given on
/// the metric domain, evaluated on the metric domain. Time derivatives of a
/// static metric vanish.
pub fn lie_metric(g: &MetricField, v: &TensorField) -> TensorField {
    let d = g.dim();
    let dom = g.comp.dom.clone();
    let len = dom.len();
    let ax_of = |e: usize| -> Option<usize> {
        if g.time_dependent {
            Some(e)
        } else if e == 0 {
            None
        } else {
            Some(e - 1)
        }
    };
    let deriv = |f: &TensorField, c: usize, e: usize| -> Vec<f64> {
        let mut out = vec![0.0; len];
        if let Some(ax) = ax_of(e) {
            stencil::diff1(&dom, f.comp(c), ax, &mut out);
        }
        out
    };
    let mut dg = Vec::new();
    for e in 0..d {
        let mut per = Vec::new();
        for k in 0..g.comp.comps() {
            per.push(deriv(&g.comp, k, e));
        }
        dg.push(per);
    }
    let mut dv = Vec::new();
    for e in 0..d {
        let mut per = Vec::new();
        for c in 0..d {
            per.push(deriv(v, c, e));
        }
        dv.push(per);
    }
    let mut out = TensorField::zeros(Rank::Sym2(d), dom);
    for a in 0..d {
        for b in a..d {
            let k = crate::field::sym_index(d, a, b);
            for node in 0..len {
                let mut s = 0.0;
                for c in 0..d {
                    s += v.get(c, node) * dg[c][k][node]
                        + g.comp.sym(c, b, node) * dv[a][c][node]
                        + g.comp.sym(a, c, node) * dv[b][c][node];
                }
                out.sym_set(a, b, node, s);
            }
        }
    }
    out
}


/// Second fundamental form and mean curvature of Sigma inside (S, gamma)
/// for an arbitrary slice metric field (used directly and by central
/// differencing for variations).
pub fn sigma_geometry_in_s(
    grid: &CornerGrid,
    gamma_s: &TensorField,
) -> Result<(TensorField, TensorField)> {
    let n = grid.n;
    let nsp = grid.spatial_len();
    let nsig = grid.sigma_len();
    let gs_cache = GeomCache::intrinsic(n, gamma_s.clone(), false)?;
    let mut n_field = TensorField::zeros(Rank::Vector(n), grid.spatial_domain());
    for sp in 0..nsp {
        let g11 = gs_cache.ginv.sym(0, 0, sp);
        let nrm = g11.sqrt();
        for i in 0..n {
            n_field.set(i, sp, gs_cache.ginv.sym(i, 0, sp) / nrm);
        }
    }
    let dgs = crate::calculus::all_derivs(gamma_s);
    let dnf = crate::calculus::all_derivs(&n_field);
    let mut b_sigma = TensorField::zeros(Rank::Sym2(n - 1), grid.sigma_domain());
    let mut h_sigma = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let mut blk = vec![0.0; (n - 1) * (n - 1)];
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                blk[aa * (n - 1) + bb] = gamma_s.sym(aa + 1, bb + 1, sp);
            }
        }
        let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
        for aa in 0..n - 1 {
            for bb in aa..n - 1 {
                let (si, sj) = (aa + 1, bb + 1);
                let k = crate::field::sym_index(n, si, sj);
                let mut lie_v = 0.0;
                for c in 0..n {
                    lie_v += n_field.get(c, sp) * dgs[c][k][sp]
                        + gamma_s.sym(c, sj, sp) * dnf[si][c][sp]
                        + gamma_s.sym(si, c, sp) * dnf[sj][c][sp];
                }
                b_sigma.sym_set(aa, bb, sig, 0.5 * lie_v);
            }
        }
        let mut hs = 0.0;
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                hs += blki[aa * (n - 1) + bb] * b_sigma.sym(aa, bb, sig);
            }
        }
        h_sigma.set(0, sig, hs);
    }
    Ok((b_sigma, h_sigma))
}

/// Mean curvature of Sigma inside (C, sigma) with respect to the future
/// unit normal of the t = 0 section, for an arbitrary boundary metric
/// field (C-intrinsic Sym2(n) on the boundary domain).
pub fn sigma_mean_curvature_in_c(grid: &CornerGrid, g_c: &TensorField) -> Result<TensorField> {
    let n = grid.n;
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;
    let bdom = grid.boundary_domain();
    // T from the lapse-shift of g_c
    let mut t_intr = TensorField::zeros(Rank::Vector(n), bdom.clone());
    for it in 0..nt {
        for sig in 0..nsig {
            let bn = it * nsig + sig;
            let rho2 = -g_c.sym(0, 0, bn);
            let mut blk = vec![0.0; (n - 1) * (n - 1)];
            for aa in 0..n - 1 {
                for bb in 0..n - 1 {
                    blk[aa * (n - 1) + bb] = g_c.sym(aa + 1, bb + 1, bn);
                }
            }
            let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
            let mut wup = vec![0.0; n - 1];
            for aa in 0..n - 1 {
                for bb in 0..n - 1 {
                    wup[aa] += blki[aa * (n - 1) + bb] * g_c.sym(0, bb + 1, bn);
                }
            }
            let mut w2 = 0.0;
            for aa in 0..n - 1 {
                w2 += wup[aa] * g_c.sym(0, aa + 1, bn);
            }
            let nrm = (rho2 + w2).sqrt();
            t_intr.set(0, bn, 1.0 / nrm);
            for aa in 0..n - 1 {
                t_intr.set(aa + 1, bn, -wup[aa] / nrm);
            }
        }
    }
    let dgc = crate::calculus::all_derivs(g_c);
    let dtc = crate::calculus::all_derivs(&t_intr);
    let mut out = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    for sig in 0..nsig {
        let bn = sig;
        let mut blk = vec![0.0; (n - 1) * (n - 1)];
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                blk[aa * (n - 1) + bb] = g_c.sym(aa + 1, bb + 1, bn);
            }
        }
        let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
        let mut acc = 0.0;
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                let (ca, cb) = (aa + 1, bb + 1);
                let k = crate::field::sym_index(n, ca, cb);
                let mut lie_v = 0.0;
                for c in 0..n {
                    lie_v += t_intr.get(c, bn) * dgc[c][k][bn]
                        + g_c.sym(c, cb, bn) * dtc[ca][c][bn]
                        + g_c.sym(ca, c, bn) * dtc[cb][c][bn];
                }
                acc += blki[aa * (n - 1) + bb] * 0.5 * lie_v;
            }
        }
        out.set(0, sig, acc);
    }
    Ok(out)
}

/// Build the full frame. Checks that S is spacelike and C timelike.
pub fn hypersurface_frame(g: &MetricField) -> Result<BoundaryFrame> {
    let grid = g.grid.clone();
    let n = grid.n;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;

    let nu_s = slice_normal_field(g)?;
    let nu_c_bulk = boundary_normal_field(g)?;
    let nu_c = metric_field_to_boundary(&grid, g, &nu_c_bulk);
    let g_c = boundary_metric(&grid, g);

    // A = 1/2 (L_{nu_C} g)^T restricted to C-tangential coordinate pairs
    let lie = lie_metric(g, &nu_c_bulk);
    let mut a_c = TensorField::zeros(Rank::Sym2(n), grid.boundary_domain());
    for a in 0..n {
        for b in a..n {
            let sa = grid.c_to_spacetime(a);
            let sb = grid.c_to_spacetime(b);
            for it in 0..nt {
                for sig in 0..nsig {
                    let sp = grid.sigma_to_spatial(sig);
                    let m = g.mnode_of_bulk(it, sp);
                    a_c.sym_set(a, b, it * nsig + sig, 0.5 * lie.sym(sa, sb, m));
                }
            }
        }
    }

    // H_C = g_C^{ab} A_ab
    let gc_cache = GeomCache::intrinsic(n, g_c.clone(), false)?;
    let mut h_c = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
    for node in 0..h_c.nodes() {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += gc_cache.ginv.sym(a, b, node) * a_c.sym(a, b, node);
            }
        }
        h_c.set(0, node, s);
    }

    // T^C from the boundary metric lapse-shift: rho^2 = -(g_C)_00, w_A = (g_C)_{0A}
    let mut t_c = TensorField::zeros(Rank::Vector(d), grid.boundary_domain());
    for it in 0..nt {
        for sig in 0..nsig {
            let bn = it * nsig + sig;
            let rho2 = -g_c.sym(0, 0, bn);
            let mut blk = vec![0.0; (n - 1) * (n - 1)];
            for aa in 0..n - 1 {
                for bb in 0..n - 1 {
                    blk[aa * (n - 1) + bb] = g_c.sym(aa + 1, bb + 1, bn);
                }
            }
            let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
            let mut w2 = 0.0;
            let mut wup = vec![0.0; n - 1];
            for aa in 0..n - 1 {
                for bb in 0..n - 1 {
                    wup[aa] += blki[aa * (n - 1) + bb] * g_c.sym(0, bb + 1, bn);
                }
            }
            for aa in 0..n - 1 {
                w2 += wup[aa] * g_c.sym(0, aa + 1, bn);
            }
            let nrm = (rho2 + w2).sqrt();
            t_c.set(0, bn, 1.0 / nrm);
            for aa in 0..n - 1 {
                t_c.set(grid.c_to_spacetime(aa + 1), bn, -wup[aa] / nrm);
            }
        }
    }

    // slice quantities at t = 0
    let gamma_s = slice_metric(&grid, g, 0);
    let lie_s = lie_metric(g, &nu_s);
    let nsp = grid.spatial_len();
    let mut k_s = TensorField::zeros(Rank::Sym2(n), grid.spatial_domain());
    for i in 0..n {
        for j in i..n {
            for sp in 0..nsp {
                let m = g.mnode_of_bulk(0, sp);
                k_s.sym_set(i, j, sp, 0.5 * lie_s.sym(i + 1, j + 1, m));
            }
        }
    }

    // outward unit normal of Sigma in (S, gamma)
    let gs_cache = GeomCache::intrinsic(n, gamma_s.clone(), false)?;
    let mut n_field = TensorField::zeros(Rank::Vector(n), grid.spatial_domain());
    for sp in 0..nsp {
        let g11 = gs_cache.ginv.sym(0, 0, sp);
        let nrm = g11.sqrt();
        for i in 0..n {
            n_field.set(i, sp, gs_cache.ginv.sym(i, 0, sp) / nrm);
        }
    }
    let n_sigma = grid.sigma_of(&n_field);

    // B_Sigma = 1/2 (L_N gamma)_AB on Sigma (Sigma-intrinsic indices)
    let dgs = crate::calculus::all_derivs(&gamma_s);
    let dnf = crate::calculus::all_derivs(&n_field);
    let mut b_sigma = TensorField::zeros(Rank::Sym2(n - 1), grid.sigma_domain());
    let mut h_sigma = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    let mut tr_sigma_k = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    let mut alpha = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let mut blk = vec![0.0; (n - 1) * (n - 1)];
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                blk[aa * (n - 1) + bb] = gamma_s.sym(aa + 1, bb + 1, sp);
            }
        }
        let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
        for aa in 0..n - 1 {
            for bb in aa..n - 1 {
                let (si, sj) = (aa + 1, bb + 1);
                let k = crate::field::sym_index(n, si, sj);
                let mut lie_v = 0.0;
                for c in 0..n {
                    lie_v += n_field.get(c, sp) * dgs[c][k][sp]
                        + gamma_s.sym(c, sj, sp) * dnf[si][c][sp]
                        + gamma_s.sym(si, c, sp) * dnf[sj][c][sp];
                }
                b_sigma.sym_set(aa, bb, sig, 0.5 * lie_v);
            }
        }
        let mut hs = 0.0;
        let mut trk = 0.0;
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                hs += blki[aa * (n - 1) + bb] * b_sigma.sym(aa, bb, sig);
                trk += blki[aa * (n - 1) + bb] * k_s.sym(aa + 1, bb + 1, sp);
            }
        }
        h_sigma.set(0, sig, hs);
        tr_sigma_k.set(0, sig, trk);

        let m = g.mnode_of_bulk(0, sp);
        let mut al = 0.0;
        for a in 0..d {
            for b in 0..d {
                al += g.comp.sym(a, b, m) * nu_s.get(a, m) * nu_c_bulk.get(b, m);
            }
        }
        alpha.set(0, sig, al);
    }

    // H_sigma_c = 1/2 gamma_Sigma^{AB} (L_{T^C} g_C)_AB at Sigma (t = 0)
    let dgc = crate::calculus::all_derivs(&g_c);
    let bdom = grid.boundary_domain();
    let mut t_c_intr = TensorField::zeros(Rank::Vector(n), bdom);
    for a in 0..n {
        for node in 0..t_c_intr.nodes() {
            t_c_intr.set(a, node, t_c.get(grid.c_to_spacetime(a), node));
        }
    }
    let dtc = crate::calculus::all_derivs(&t_c_intr);
    let mut h_sigma_c = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    for sig in 0..nsig {
        let bn = sig; // t = 0
        let mut blk = vec![0.0; (n - 1) * (n - 1)];
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                blk[aa * (n - 1) + bb] = g_c.sym(aa + 1, bb + 1, bn);
            }
        }
        let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
        let mut acc = 0.0;
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                let (ca, cb) = (aa + 1, bb + 1);
                let k = crate::field::sym_index(n, ca, cb);
                let mut lie_v = 0.0;
                for c in 0..n {
                    lie_v += t_c_intr.get(c, bn) * dgc[c][k][bn]
                        + g_c.sym(c, cb, bn) * dtc[ca][c][bn]
                        + g_c.sym(ca, c, bn) * dtc[cb][c][bn];
                }
                acc += blki[aa * (n - 1) + bb] * 0.5 * lie_v;
            }
        }
        h_sigma_c.set(0, sig, acc);
    }

    Ok(BoundaryFrame {
        grid,
        nu_s,
        nu_c_bulk,
        nu_c,
        t_c,
        g_c,
        a_c,
        h_c,
        alpha,
        gamma_s,
        k_s,
        n_sigma,
        b_sigma,
        h_sigma,
        tr_sigma_k,
        h_sigma_c,
    })
}
