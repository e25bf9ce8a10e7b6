//! Riemannian calculus on the initial slice: linearized scalar curvature,
//! the linearized Gauss and Gauss-Codazzi (Hamiltonian and momentum)
//! constraint residuals, and the slice energy-variation pieces shared with
//! the gauge Cauchy-data determination.
//!
//! Constraint map (signs pinned by the identity "the map annihilates data
//! induced by any metric", checked symbolically and in tests):
//! `C0 = |k|^2 - (tr k)^2 - R_gamma + tr_gamma Q + Q(nu,nu)`,
//! `C_i = div(k - (tr k) gamma)_i - Q(nu, .)_i`.

use crate::calculus::{self, GeomCache};
use crate::error::Result;
use crate::field::{sym_index, Rank, TensorField};
use crate::frame::BoundaryFrame;
use crate::grid::CornerGrid;

/// Constraint residual fields on S.
#[derive(Debug, Clone)]
pub struct ConstraintResidual {
    pub c0: TensorField,
    pub ci: TensorField,
}

/// Linearized scalar curvature in direction `k` on a Riemannian cache:
/// `R'_k = div div k - lap(tr k) - <Ric, k>`.
pub fn lin_scalar_curvature(cache: &GeomCache, k: &TensorField) -> TensorField {
    let dh = calculus::divergence_sym2(cache, k); // (delta k)_b = -div
    let grad_dh = calculus::cov_grad_oneform(cache, &dh);
    let tr = calculus::trace_sym2(cache, k);
    let lap_tr = calculus::box_scalar(cache, &tr); // metric trace of the Hessian
    let d = cache.dim;
    let len = k.nodes();
    let mut out = TensorField::zeros(Rank::Scalar, k.dom.clone());
    for node in 0..len {
        let m = cache.mnode(node, len);
        // div div k = delta delta k with two sign flips
        let mut dd = 0.0;
        for a in 0..d {
            for b in 0..d {
                dd -= cache.ginv.sym(a, b, m) * grad_dh[a * d + b][node];
            }
        }
        let mut ric_k = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        ric_k += cache.ginv.sym(a, c, m)
                            * cache.ginv.sym(b, e, m)
                            * cache.ricci.sym(c, e, m)
                            * k.sym(a, b, node);
                    }
                }
            }
        }
        out.set(0, node, dd - lap_tr.get(0, node) - ric_k);
    }
    out
}

/// Variation of `div_gamma T` for `T = kappa - (tr kappa) gamma` under
/// `(gamma', kappa')`, plus the direct `T'` contribution:
/// `d/ds[div_{gamma+s gamma'}(T(gamma+s gamma', kappa+s kappa'))]_i`.
fn momentum_variation(
    cache: &GeomCache,
    kappa: &TensorField,
    gamma_p: &TensorField,
    kappa_p: &TensorField,
) -> TensorField {
    let d = cache.dim;
    let nsym = d * (d + 1) / 2;
    let len = kappa.nodes();
    let dom = kappa.dom.clone();

    // background T and its covariant gradient
    let trk = calculus::trace_sym2(cache, kappa);
    let mut t_bg = kappa.clone();
    for a in 0..d {
        for b in a..d {
            for node in 0..len {
                let m = cache.mnode(node, len);
                let v = t_bg.sym(a, b, node) - trk.get(0, node) * cache.g.sym(a, b, m);
                t_bg.sym_set(a, b, node, v);
            }
        }
    }
    let grad_t = calculus::cov_grad_sym2(cache, &t_bg);

    // T' = kappa' - (tr kappa)' gamma - (tr kappa) gamma'
    // with (tr kappa)' = tr kappa' - <gamma', kappa>
    let mut trk_p = TensorField::zeros(Rank::Scalar, dom.clone());
    for node in 0..len {
        let m = cache.mnode(node, len);
        let mut s = 0.0;
        let mut pairing = 0.0;
        for a in 0..d {
            for b in 0..d {
                s += cache.ginv.sym(a, b, m) * kappa_p.sym(a, b, node);
                for c in 0..d {
                    for e in 0..d {
                        pairing += cache.ginv.sym(a, c, m)
                            * cache.ginv.sym(b, e, m)
                            * gamma_p.sym(c, e, node)
                            * kappa.sym(a, b, node);
                    }
                }
            }
        }
        trk_p.set(0, node, s - pairing);
    }
    let mut t_p = kappa_p.clone();
    for a in 0..d {
        for b in a..d {
            for node in 0..len {
                let m = cache.mnode(node, len);
                let v = t_p.sym(a, b, node)
                    - trk_p.get(0, node) * cache.g.sym(a, b, m)
                    - trk.get(0, node) * gamma_p.sym(a, b, node);
                t_p.sym_set(a, b, node, v);
            }
        }
    }
    let grad_tp = calculus::cov_grad_sym2(cache, &t_p);
    let grad_gp = calculus::cov_grad_sym2(cache, gamma_p);

    let mut out = TensorField::zeros(Rank::Vector(d), dom);
    for j in 0..d {
        for node in 0..len {
            let m = cache.mnode(node, len);
            let mut s = 0.0;
            for i in 0..d {
                for k in 0..d {
                    let gik = cache.ginv.sym(i, k, m);
                    s += gik * grad_tp[i * nsym + sym_index(d, k, j)][node];
                    // -(gamma'^{ik}) nabla_i T_kj
                    let mut gpik = 0.0;
                    for c in 0..d {
                        for e in 0..d {
                            gpik += cache.ginv.sym(i, c, m)
                                * cache.ginv.sym(k, e, m)
                                * gamma_p.sym(c, e, node);
                        }
                    }
                    s -= gpik * grad_t[i * nsym + sym_index(d, k, j)][node];
                    // -g^{ik}[G'^m_{ik} T_mj + G'^m_{ij} T_km]
                    if gik != 0.0 {
                        for mm in 0..d {
                            let gp_ik = gamma_var_at(cache, &grad_gp, mm, i, k, node, m);
                            let gp_ij = gamma_var_at(cache, &grad_gp, mm, i, j, node, m);
                            s -= gik
                                * (gp_ik * t_bg.sym(mm, j, node) + gp_ij * t_bg.sym(k, mm, node));
                        }
                    }
                }
            }
            out.set(j, node, s);
        }
    }
    out
}

fn gamma_var_at(
    cache: &GeomCache,
    grad_gp: &[Vec<f64>],
    f: usize,
    a: usize,
    c: usize,
    node: usize,
    m: usize,
) -> f64 {
    let d = cache.dim;
    let nsym = d * (d + 1) / 2;
    let mut s = 0.0;
    for fp in 0..d {
        s += cache.ginv.sym(f, fp, m)
            * (grad_gp[a * nsym + sym_index(d, fp, c)][node]
                + grad_gp[c * nsym + sym_index(d, fp, a)][node]
                - grad_gp[fp * nsym + sym_index(d, a, c)][node]);
    }
    0.5 * s
}

/// Slice energy-variation pieces: the variation of
/// `E(nu,nu) = 1/2 (R_gamma + (tr k)^2 - |k|^2)` and
/// `E(nu, .)^tangential = div(k - tr k gamma)` as functionals of the target
/// initial-data variation `(gamma', kappa')` alone.
pub struct SliceEnergyVariation {
    pub e_nn: TensorField,
    pub e_ni: TensorField,
}

pub fn slice_energy_variation(
    gs_cache: &GeomCache,
    kappa: &TensorField,
    gamma_p: &TensorField,
    kappa_p: &TensorField,
) -> SliceEnergyVariation {
    let d = gs_cache.dim;
    let len = gamma_p.nodes();
    let rp = lin_scalar_curvature(gs_cache, gamma_p);
    let mut e_nn = TensorField::zeros(Rank::Scalar, gamma_p.dom.clone());
    for node in 0..len {
        let m = gs_cache.mnode(node, len);
        let mut trk = 0.0;
        let mut trkp = 0.0;
        let mut pairing = 0.0;
        let mut kkp = 0.0;
        for a in 0..d {
            for b in 0..d {
                let gab = gs_cache.ginv.sym(a, b, m);
                trk += gab * kappa.sym(a, b, node);
                trkp += gab * kappa_p.sym(a, b, node);
                for c in 0..d {
                    for e in 0..d {
                        let up = gs_cache.ginv.sym(a, c, m) * gs_cache.ginv.sym(b, e, m);
                        pairing += up * gamma_p.sym(c, e, node) * kappa.sym(a, b, node);
                        kkp += up * kappa_p.sym(c, e, node) * kappa.sym(a, b, node);
                    }
                }
            }
        }
        // d|k|^2 = 2<k, k'> - 2 <gamma', k o k>; assembled directly:
        let mut dk2 = 2.0 * kkp;
        {
            // subtract 2 gamma'^{ac} k_a^b k_{cb}
            let mut corr = 0.0;
            for a in 0..d {
                for c in 0..d {
                    let mut gpac = 0.0;
                    for e in 0..d {
                        for f in 0..d {
                            gpac += gs_cache.ginv.sym(a, e, m)
                                * gs_cache.ginv.sym(c, f, m)
                                * gamma_p.sym(e, f, node);
                        }
                    }
                    let mut kk = 0.0;
                    for b in 0..d {
                        for e in 0..d {
                            kk += gs_cache.ginv.sym(b, e, m)
                                * kappa.sym(a, b, node)
                                * kappa.sym(c, e, node);
                        }
                    }
                    corr += gpac * kk;
                }
            }
            dk2 -= 2.0 * corr;
        }
        let v = 0.5 * (rp.get(0, node) + 2.0 * trk * (trkp - pairing) - dk2);
        e_nn.set(0, node, v);
    }
    let e_ni = momentum_variation(gs_cache, kappa, gamma_p, kappa_p);
    SliceEnergyVariation { e_nn, e_ni }
}

/// Nonlinear constraint map evaluated on data induced by a metric; used by
/// tests to pin signs: must vanish identically for every metric.
pub fn nonlinear_constraints(
    grid: &CornerGrid,
    frame: &BoundaryFrame,
    ambient_ricci_at_slice: &TensorField,
    nu_s_slice: &TensorField,
) -> Result<ConstraintResidual> {
    let n = grid.n;
    let nsp = grid.spatial_len();
    let gs_cache = GeomCache::intrinsic(n, frame.gamma_s.clone(), false)?;
    let kappa = &frame.k_s;
    let q = ambient_ricci_at_slice;
    let mut c0 = TensorField::zeros(Rank::Scalar, grid.spatial_domain());
    for sp in 0..nsp {
        let mut k2 = 0.0;
        let mut trk = 0.0;
        let mut trq = 0.0;
        for i in 0..n {
            for j in 0..n {
                let gij = gs_cache.ginv.sym(i, j, sp);
                trk += gij * kappa.sym(i, j, sp);
                // tr_gamma Q over slice directions (spacetime indices i+1)
                trq += gij * q.sym(i + 1, j + 1, sp);
                for a in 0..n {
                    for b in 0..n {
                        k2 += gij
                            * gs_cache.ginv.sym(a, b, sp)
                            * kappa.sym(i, a, sp)
                            * kappa.sym(j, b, sp);
                    }
                }
            }
        }
        let mut qnn = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                qnn += q.sym(a, b, sp) * nu_s_slice.get(a, sp) * nu_s_slice.get(b, sp);
            }
        }
        c0.set(0, sp, k2 - trk * trk - gs_cache.scal[sp] + trq + qnn);
    }
    // momentum: div(k - trk gamma) - Q(nu, .)
    let zero_gp = TensorField::zeros(Rank::Sym2(n), grid.spatial_domain());
    let dv = momentum_variation(&gs_cache, &zero_gp, &zero_gp, kappa);
    // momentum_variation with (0, kappa') linearizes around T = -0*...; the
    // direct nonlinear divergence equals the variation at kappa' = kappa
    // only for the linear-in-kappa part, which div(k - trk g) is.
    let mut ci = TensorField::zeros(Rank::Vector(n), grid.spatial_domain());
    for j in 0..n {
        for sp in 0..nsp {
            let mut qn = 0.0;
            for a in 0..=n {
                qn += q.sym(a, j + 1, sp) * nu_s_slice.get(a, sp);
            }
            ci.set(j, sp, dv.get(j, sp) - qn);
        }
    }
    Ok(ConstraintResidual { c0, ci })
}

/// Linearized constraint map about `(gamma_S, K_S, nu_S, Q = Ric_g)`,
/// evaluated on `(gamma', kappa', nu', Q')`.
pub fn lin_constraints(
    grid: &CornerGrid,
    frame: &BoundaryFrame,
    q_bg_slice: &TensorField,
    nu_s_slice: &TensorField,
    gamma_p: &TensorField,
    kappa_p: &TensorField,
    nu_p: &TensorField,
    q_p_slice: &TensorField,
) -> Result<ConstraintResidual> {
    let n = grid.n;
    let nsp = grid.spatial_len();
    let gs_cache = GeomCache::intrinsic(n, frame.gamma_s.clone(), false)?;
    let ev = slice_energy_variation(&gs_cache, &frame.k_s, gamma_p, kappa_p);
    // C0' = -2 e_nn + [tr_gamma Q' - <gamma', Q> + Q'(nu,nu) + 2 Q(nu', nu)]
    let mut c0 = TensorField::zeros(Rank::Scalar, grid.spatial_domain());
    for sp in 0..nsp {
        let mut trqp = 0.0;
        let mut gq = 0.0;
        for i in 0..n {
            for j in 0..n {
                trqp += gs_cache.ginv.sym(i, j, sp) * q_p_slice.sym(i + 1, j + 1, sp);
                for a in 0..n {
                    for b in 0..n {
                        gq += gs_cache.ginv.sym(i, a, sp)
                            * gs_cache.ginv.sym(j, b, sp)
                            * gamma_p.sym(a, b, sp)
                            * q_bg_slice.sym(i + 1, j + 1, sp);
                    }
                }
            }
        }
        let mut qpnn = 0.0;
        let mut qnpn = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                qpnn += q_p_slice.sym(a, b, sp) * nu_s_slice.get(a, sp) * nu_s_slice.get(b, sp);
                qnpn += q_bg_slice.sym(a, b, sp) * nu_p.get(a, sp) * nu_s_slice.get(b, sp);
            }
        }
        c0.set(0, sp, -2.0 * ev.e_nn.get(0, sp) + trqp - gq + qpnn + 2.0 * qnpn);
    }
    // C_i' = e_ni - Q'(nu, .)_i - Q(nu', .)_i
    let mut ci = TensorField::zeros(Rank::Vector(n), grid.spatial_domain());
    for j in 0..n {
        for sp in 0..nsp {
            let mut qp = 0.0;
            let mut qnp = 0.0;
            for a in 0..=n {
                qp += q_p_slice.sym(a, j + 1, sp) * nu_s_slice.get(a, sp);
                qnp += q_bg_slice.sym(a, j + 1, sp) * nu_p.get(a, sp);
            }
            ci.set(j, sp, ev.e_ni.get(j, sp) - qp - qnp);
        }
    }
    Ok(ConstraintResidual { c0, ci })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::hypersurface_frame;
    use crate::grid::{CornerGrid, GridConfig};
    use crate::metric::{minkowski_corner, MetricField};

    fn grid(nx: usize) -> CornerGrid {
        CornerGrid::build(&GridConfig::with_resolution(2, nx, 0.5)).unwrap()
    }

    /// ambient Ricci of the background restricted to a slice (slice 0)
    fn ricci_slice(g: &MetricField) -> TensorField {
        let cache = GeomCache::spacetime(g).unwrap();
        if g.time_dependent {
            g.grid.slice_of(&cache.ricci, 0)
        } else {
            cache.ricci.clone()
        }
    }

    #[test]
    fn nonlinear_constraints_vanish_on_curved_metric() {
        // the defining identity: the constraint map annihilates induced data
        let run = |nx: usize| -> f64 {
            let gr = grid(nx);
            let g = MetricField::from_fn(&gr, true, |x, a, b| {
                let f = 0.08 * (x[0] + x[1]).sin() * (x[2]).cos();
                let p = 0.04 * (2.0 * x[0] - x[1]).cos() * (x[2] + x[1]).sin();
                let base: f64 = if a != b { 0.0 } else if a == 0 { -1.0 } else { 1.0 };
                match (a, b) {
                    (0, 0) => base - f,
                    (0, 1) => p,
                    (1, 1) => base + f,
                    (1, 2) => 0.5 * p,
                    (2, 2) => base + 0.06 * (x[1]).cos() * (x[2]).cos(),
                    _ => base,
                }
            });
            let frame = hypersurface_frame(&g).unwrap();
            let q = ricci_slice(&g);
            let nu = gr.slice_of(&crate::frame::slice_normal_field(&g).unwrap(), 0);
            let r = nonlinear_constraints(&gr, &frame, &q, &nu).unwrap();
            // interior max (edge one-sided third derivatives are noisier)
            let dom = gr.spatial_domain();
            let mut worst = 0.0f64;
            for (sp, idx) in dom.iter_indices().enumerate() {
                if idx.iter().zip(dom.dims.iter()).all(|(&i, &d)| i >= 2 && i + 2 < d) {
                    worst = worst.max(r.c0.get(0, sp).abs());
                    for j in 0..2 {
                        worst = worst.max(r.ci.get(j, sp).abs());
                    }
                }
            }
            worst
        };
        let e1 = run(12);
        let e2 = run(24);
        assert!(e2 < 2e-3, "residual {}", e2);
        assert!(e1 / e2 > 2.5, "ratio {}", e1 / e2);
    }

    fn lin_vs_fd_mismatch(nx: usize) -> f64 {
        // central difference of the nonlinear map; the two discretizations
        // agree to stencil order
        let gr = grid(nx);
        let g = minkowski_corner(0.0, &gr).unwrap();
        let frame = hypersurface_frame(&g).unwrap();
        let q0 = TensorField::zeros(Rank::Sym2(3), gr.spatial_domain());
        let nu = gr.slice_of(&crate::frame::slice_normal_field(&g).unwrap(), 0);
        // smooth variations
        let gamma_p = TensorField::from_fn(Rank::Sym2(2), gr.spatial_domain(), |c, x| {
            0.3 * (c as f64 + 1.0) * (x[0] * 1.2).sin() * (x[1] * 0.9).cos()
        });
        let kappa_p = TensorField::from_fn(Rank::Sym2(2), gr.spatial_domain(), |c, x| {
            0.2 * (c as f64 + 0.5) * (x[0] * 0.7).cos() * (x[1] * 1.3).sin()
        });
        let nu_p = TensorField::zeros(Rank::Vector(3), gr.spatial_domain());
        let lin = lin_constraints(&gr, &frame, &q0, &nu, &gamma_p, &kappa_p, &nu_p, &q0).unwrap();

        // nonlinear at gamma +- s gamma', kappa +- s kappa' with Q = 0, flat bg
        let s = 1e-5;
        let eval = |sgn: f64| -> (TensorField, TensorField) {
            let mut gam = frame.gamma_s.clone();
            gam.add_scaled(&gamma_p, sgn * s);
            let mut kap = frame.k_s.clone();
            kap.add_scaled(&kappa_p, sgn * s);
            let cache = GeomCache::intrinsic(2, gam.clone(), false).unwrap();
            let nsp = gr.spatial_len();
            let mut c0 = TensorField::zeros(Rank::Scalar, gr.spatial_domain());
            for sp in 0..nsp {
                let mut k2 = 0.0;
                let mut trk = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        let gij = cache.ginv.sym(i, j, sp);
                        trk += gij * kap.sym(i, j, sp);
                        for a in 0..2 {
                            for b in 0..2 {
                                k2 += gij
                                    * cache.ginv.sym(a, b, sp)
                                    * kap.sym(i, a, sp)
                                    * kap.sym(j, b, sp);
                            }
                        }
                    }
                }
                c0.set(0, sp, k2 - trk * trk - cache.scal[sp]);
            }
            let zero = TensorField::zeros(Rank::Sym2(2), gr.spatial_domain());
            let ci = momentum_variation(&cache, &zero, &zero, &kap);
            (c0, ci)
        };
        let (c0p, cip) = eval(1.0);
        let (c0m, cim) = eval(-1.0);
        let mut fd0 = c0p.sub(&c0m).scaled(1.0 / (2.0 * s));
        let mut fdi = cip.sub(&cim).scaled(1.0 / (2.0 * s));
        fd0.add_scaled(&lin.c0, -1.0);
        fdi.add_scaled(&lin.ci, -1.0);
        let dom = gr.spatial_domain();
        let mut worst = 0.0f64;
        for (sp, idx) in dom.iter_indices().enumerate() {
            if idx.iter().zip(dom.dims.iter()).all(|(&i, &d)| i >= 2 && i + 2 < d) {
                worst = worst.max(fd0.get(0, sp).abs());
                for j in 0..2 {
                    worst = worst.max(fdi.get(j, sp).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn linearized_constraints_match_nonlinear_difference() {
        let e1 = lin_vs_fd_mismatch(12);
        let e2 = lin_vs_fd_mismatch(24);
        assert!(e2 < 1e-3, "mismatch {}", e2);
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn all_zero_variation_gives_zero() {
        let gr = grid(8);
        let g = minkowski_corner(0.3, &gr).unwrap();
        let frame = hypersurface_frame(&g).unwrap();
        let z2 = TensorField::zeros(Rank::Sym2(2), gr.spatial_domain());
        let z3 = TensorField::zeros(Rank::Sym2(3), gr.spatial_domain());
        let zv = TensorField::zeros(Rank::Vector(3), gr.spatial_domain());
        let nu = gr.slice_of(&crate::frame::slice_normal_field(&g).unwrap(), 0);
        let r = lin_constraints(&gr, &frame, &z3, &nu, &z2, &z2, &zv, &z3).unwrap();
        assert_eq!(r.c0.max_norm(), 0.0);
        assert_eq!(r.ci.max_norm(), 0.0);
    }
}
