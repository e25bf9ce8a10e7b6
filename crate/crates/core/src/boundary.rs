//! The boundary evolution system on the timelike cylinder: assembly of the
//! right sides of the wave equation for the conformal factor `u`, the wave
//! equation for the mixed components `h(nu)^T`, and the transport equation
//! for `h_{nu nu}`, in their target-data (Y), triangular (Z) and
//! epsilon-small (E) pieces; the solvers for the three equations; the
//! component Dirichlet assembly; and the gauge boundary identity checks.

use crate::calculus::{self, GeomCache};
use crate::error::Result;
use crate::field::{Rank, TensorField};
use crate::frame::{hypersurface_frame, BoundaryFrame};
use crate::gauge::{OneFormWaveLower, ScalarCurvatureLower};
use crate::grid::CornerGrid;
use crate::metric::MetricField;
use crate::target::TargetData;
use crate::variations;
use crate::wave::{self, Dirichlet, Source, WaveProblem, WaveSolution};

/// Prepared background shared by the boundary system and the iteration.
pub struct Setup {
    pub grid: CornerGrid,
    pub g: MetricField,
    pub frame: BoundaryFrame,
    pub st_cache: GeomCache,
    pub gc_cache: GeomCache,
    /// One boundary-intrinsic cache per x1 layer (layer 0 = deepest,
    /// last = the boundary C itself), for layered Bianchi operators.
    pub layer_caches: Vec<GeomCache>,
    /// T^C in C-intrinsic components on the boundary domain.
    pub t_intr: TensorField,
    /// Ambient covariant acceleration `nabla_nu nu` on the boundary domain.
    pub nu_dot: TensorField,
}

impl Setup {
    pub fn new(g: MetricField) -> Result<Setup> {
        let grid = g.grid.clone();
        let n = grid.n;
        let d = grid.dim();
        let frame = hypersurface_frame(&g)?;
        let st_cache = GeomCache::spacetime(&g)?;
        let gc_cache = GeomCache::intrinsic(n, frame.g_c.clone(), !g.time_dependent)?;

        // layer caches: boundary-domain metric of each x1 layer
        let n1 = grid.sdims[0];
        let nsig = grid.sigma_len();
        let nt = grid.steps + 1;
        let mut layer_caches = Vec::with_capacity(n1);
        for i1 in 0..n1 {
            let mut gl = TensorField::zeros(Rank::Sym2(n), grid.boundary_domain());
            for a in 0..n {
                for b in a..n {
                    let sa = grid.c_to_spacetime(a);
                    let sb = grid.c_to_spacetime(b);
                    for it in 0..nt {
                        for sig in 0..nsig {
                            let sp = i1 * nsig + sig;
                            gl.sym_set(a, b, it * nsig + sig, g.at(it, sp, sa, sb));
                        }
                    }
                }
            }
            layer_caches.push(GeomCache::intrinsic(n, gl, !g.time_dependent)?);
        }

        // T^C intrinsic components
        let mut t_intr = TensorField::zeros(Rank::Vector(n), grid.boundary_domain());
        for a in 0..n {
            for bn in 0..t_intr.nodes() {
                t_intr.set(a, bn, frame.t_c.get(grid.c_to_spacetime(a), bn));
            }
        }

        // nabla_nu nu at the boundary
        let mut nu_dot = TensorField::zeros(Rank::Vector(d), grid.boundary_domain());
        {
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
                        crate::stencil::diff1(&mdom, frame.nu_c_bulk.comp(c), ax, &mut dnu[e][c]);
                    }
                }
            }
            for it in 0..nt {
                for sig in 0..nsig {
                    let sp = grid.sigma_to_spatial(sig);
                    let m = g.mnode_of_bulk(it, sp);
                    for a in 0..d {
                        let mut s = 0.0;
                        for c in 0..d {
                            let mut cov = dnu[c][a][m];
                            if !st_cache.flat {
                                for e in 0..d {
                                    cov += st_cache.gamma_at(a, c, e, m)
                                        * frame.nu_c_bulk.get(e, m);
                                }
                            }
                            s += frame.nu_c_bulk.get(c, m) * cov;
                        }
                        nu_dot.set(a, it * nsig + sig, s);
                    }
                }
            }
        }

        Ok(Setup { grid, g, frame, st_cache, gc_cache, layer_caches, t_intr, nu_dot })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Pair a bulk Sym2 with the boundary normal: tangential one-form and
    /// normal-normal scalar on the boundary domain.
    pub fn contract_with_normal(&self, t: &TensorField) -> (TensorField, TensorField) {
        let grid = &self.grid;
        let n = grid.n;
        let d = grid.dim();
        let nsig = grid.sigma_len();
        let nsp = grid.spatial_len();
        let nt = grid.steps + 1;
        let mut tang = TensorField::zeros(Rank::Vector(n), grid.boundary_domain());
        let mut norm = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
        for it in 0..nt {
            for sig in 0..nsig {
                let sp = grid.sigma_to_spatial(sig);
                let node = it * nsp + sp;
                let bn = it * nsig + sig;
                let m = self.g.mnode_of_bulk(it, sp);
                for a in 0..n {
                    let sa = grid.c_to_spacetime(a);
                    let mut s = 0.0;
                    for b in 0..d {
                        s += t.sym(sa, b, node) * self.frame.nu_c_bulk.get(b, m);
                    }
                    tang.set(a, bn, s);
                }
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += t.sym(a, b, node)
                            * self.frame.nu_c_bulk.get(a, m)
                            * self.frame.nu_c_bulk.get(b, m);
                    }
                }
                norm.set(0, bn, s);
            }
        }
        (tang, norm)
    }

    /// Trace and normal-normal contraction of a bulk Sym2 at the boundary.
    pub fn trace_and_nn(&self, t: &TensorField) -> (TensorField, TensorField) {
        let grid = &self.grid;
        let d = grid.dim();
        let nsig = grid.sigma_len();
        let nsp = grid.spatial_len();
        let nt = grid.steps + 1;
        let mut tr = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
        let (_, nn) = self.contract_with_normal(t);
        for it in 0..nt {
            for sig in 0..nsig {
                let sp = grid.sigma_to_spatial(sig);
                let node = it * nsp + sp;
                let m = self.g.mnode_of_bulk(it, sp);
                let gi = crate::smallmat::inv(&self.g.matrix(m), d).expect("metric invertible");
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += gi[a * d + b] * t.sym(a, b, node);
                    }
                }
                tr.set(0, it * nsig + sig, s);
            }
        }
        (tr, nn)
    }

    /// Layer-wise boundary Bianchi of the tangential restriction of a bulk
    /// Sym2, as a Vector(n) field on the bulk domain.
    pub fn layered_boundary_bianchi(&self, h: &TensorField) -> TensorField {
        let grid = &self.grid;
        let n = grid.n;
        let n1 = grid.sdims[0];
        let nsig = grid.sigma_len();
        let nsp = grid.spatial_len();
        let nt = grid.steps + 1;
        let mut out = TensorField::zeros(Rank::Vector(n), grid.bulk_domain());
        for i1 in 0..n1 {
            // tangential restriction on this layer as a boundary-domain field
            let mut ht = TensorField::zeros(Rank::Sym2(n), grid.boundary_domain());
            for a in 0..n {
                for b in a..n {
                    let sa = grid.c_to_spacetime(a);
                    let sb = grid.c_to_spacetime(b);
                    for it in 0..nt {
                        for sig in 0..nsig {
                            ht.sym_set(
                                a,
                                b,
                                it * nsig + sig,
                                h.sym(sa, sb, it * nsp + i1 * nsig + sig),
                            );
                        }
                    }
                }
            }
            let bh = calculus::bianchi(&self.layer_caches[i1], &ht);
            for a in 0..n {
                for it in 0..nt {
                    for sig in 0..nsig {
                        out.set(a, it * nsp + i1 * nsig + sig, bh.get(a, it * nsig + sig));
                    }
                }
            }
        }
        out
    }

    /// Layer-wise extension of `h(nu, .)^T` over the bulk domain (Vector(n),
    /// C-intrinsic components).
    pub fn layered_hnu(&self, h: &TensorField) -> TensorField {
        let grid = &self.grid;
        let n = grid.n;
        let d = grid.dim();
        let nsp = grid.spatial_len();
        let nt = grid.steps + 1;
        let mut out = TensorField::zeros(Rank::Vector(n), grid.bulk_domain());
        for it in 0..nt {
            for sp in 0..nsp {
                let node = it * nsp + sp;
                let m = self.g.mnode_of_bulk(it, sp);
                for a in 0..n {
                    let sa = grid.c_to_spacetime(a);
                    let mut s = 0.0;
                    for b in 0..d {
                        s += h.sym(sa, b, node) * self.frame.nu_c_bulk.get(b, m);
                    }
                    out.set(a, node, s);
                }
            }
        }
        out
    }
}

/// Y term of the conformal-factor equation:
/// `Y = -R'_{sigma'} + tr_g(F - delta* V'_F) - 2 (F - delta* V'_F)(nu, nu)`.
pub fn assemble_y_u(setup: &Setup, tau: &TargetData, v_f_low: &TensorField) -> TensorField {
    let rp = crate::slice::lin_scalar_curvature(&setup.gc_cache, &tau.sigma_p);
    let dstar = calculus::sym_grad_oneform(&setup.st_cache, v_f_low);
    let mut t = tau.f.clone();
    t.add_scaled(&dstar, -1.0);
    let (tr, nn) = setup.trace_and_nn(&t);
    let mut out = TensorField::zeros(Rank::Scalar, setup.grid.boundary_domain());
    for bn in 0..out.nodes() {
        out.set(0, bn, -rp.get(0, bn) + tr.get(0, bn) - 2.0 * nn.get(0, bn));
    }
    out
}

/// E term of the conformal-factor equation (all coefficients vanish at the
/// exactly flat corner):
/// `E = -2<A'_h, A> + 2 H_C H'_h + 2 <A o A, h> - tr[dW + L] + 2 [dW + L](nu,nu)
///      - 4 Ric(nu, nu'_h) - <Ric, h>`,
/// where `dW = delta*(W'_h)` and `L = (delta*)'_h V = 1/2 L_V h`.
pub fn assemble_e_u(
    setup: &Setup,
    h: &TensorField,
    hv: Option<&TensorField>,
    gauge_w_low: Option<&TensorField>,
) -> Result<TensorField> {
    let grid = &setup.grid;
    let n = grid.n;
    let d = grid.dim();
    let mut out = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
    if setup.st_cache.flat && gauge_w_low.is_none() {
        return Ok(out);
    }
    let bv = variations::boundary_geometry_variation(&setup.g, &setup.frame, &setup.gc_cache, h, hv)?;
    // gauge contribution delta* W' + 1/2 L_V h on the bulk
    let mut gax = TensorField::zeros(Rank::Sym2(d), grid.bulk_domain());
    if let Some(wl) = gauge_w_low {
        let ds = calculus::sym_grad_oneform(&setup.st_cache, wl);
        gax.add_scaled(&ds, 1.0);
    }
    if !setup.st_cache.flat {
        let lie = half_lie_v(setup, h);
        gax.add_scaled(&lie, 1.0);
    }
    let (trg, nng) = setup.trace_and_nn(&gax);
    let nsig = grid.sigma_len();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    for it in 0..nt {
        for sig in 0..nsig {
            let bn = it * nsig + sig;
            let sp = grid.sigma_to_spatial(sig);
            let node = it * nsp + sp;
            let m = setup.g.mnode_of_bulk(it, sp);
            // C-intrinsic pairings
            let mut apa = 0.0;
            let mut aah = 0.0;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for e in 0..n {
                            let up = setup.gc_cache.ginv.sym(a, c, bn)
                                * setup.gc_cache.ginv.sym(b, e, bn);
                            apa += up * bv.a_p.sym(a, b, bn) * setup.frame.a_c.sym(c, e, bn);
                            // (A o A)_{ab} = A_a^f A_{fb}
                            let mut aoa = 0.0;
                            for f in 0..n {
                                for q in 0..n {
                                    aoa += setup.frame.a_c.sym(a, f, bn)
                                        * setup.gc_cache.ginv.sym(f, q, bn)
                                        * setup.frame.a_c.sym(q, b, bn);
                                }
                            }
                            aah += up
                                * aoa
                                * h.sym(grid.c_to_spacetime(c), grid.c_to_spacetime(e), node);
                        }
                    }
                }
            }
            // ambient pairings
            let mut ric_nup = 0.0;
            let mut ric_h = 0.0;
            if !setup.st_cache.flat {
                let gi = crate::smallmat::inv(&setup.g.matrix(m), d).expect("metric");
                for a in 0..d {
                    for b in 0..d {
                        ric_nup += setup.st_cache.ricci.sym(a, b, m)
                            * setup.frame.nu_c_bulk.get(a, m)
                            * bv.nu_p.get(b, bn);
                        for c in 0..d {
                            for e in 0..d {
                                ric_h += gi[a * d + c]
                                    * gi[b * d + e]
                                    * setup.st_cache.ricci.sym(c, e, m)
                                    * h.sym(a, b, node);
                            }
                        }
                    }
                }
            }
            let v = -2.0 * apa + 2.0 * setup.frame.h_c.get(0, bn) * bv.h_p.get(0, bn)
                + 2.0 * aah
                - trg.get(0, bn)
                + 2.0 * nng.get(0, bn)
                - 4.0 * ric_nup
                - ric_h;
            out.set(0, bn, v);
        }
    }
    Ok(out)
}

/// `1/2 L_V h` on the bulk with the background gauge vector.
fn half_lie_v(setup: &Setup, h: &TensorField) -> TensorField {
    let grid = &setup.grid;
    let d = grid.dim();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let mut v = TensorField::zeros(Rank::Vector(d), grid.bulk_domain());
    for c in 0..d {
        for it in 0..nt {
            for sp in 0..nsp {
                let m = setup.g.mnode_of_bulk(it, sp);
                v.set(c, it * nsp + sp, -setup.st_cache.cgamma_at(c, m));
            }
        }
    }
    calculus::lie_sym2(&v, h).scaled(0.5)
}

/// Y-hat term of the mixed-components equation:
/// `1/2 d_C ell' + (F - delta* V'_F)(nu)^T`.
pub fn assemble_yhat(setup: &Setup, tau: &TargetData, v_f_low: &TensorField) -> TensorField {
    let n = setup.n();
    let dl = calculus::all_derivs(&tau.ell_p);
    let dstar = calculus::sym_grad_oneform(&setup.st_cache, v_f_low);
    let mut t = tau.f.clone();
    t.add_scaled(&dstar, -1.0);
    let (tang, _) = setup.contract_with_normal(&t);
    let mut out = tang;
    for a in 0..n {
        let plane = out.comp_mut(a);
        for (bn, v) in plane.iter_mut().enumerate() {
            *v += 0.5 * dl[a][0][bn];
        }
    }
    out
}

/// Z-hat term: `1/2 nabla_nu (beta_C h^T)`, tangentially projected, using
/// the layered Bianchi extension.
pub fn assemble_zhat(setup: &Setup, h: &TensorField) -> TensorField {
    let layered = setup.layered_boundary_bianchi(h);
    let d = variations::normal_derivative_oneform(
        &setup.g,
        &setup.frame,
        &setup.st_cache,
        &layered,
    );
    d.scaled(0.5)
}

/// E-hat term of the mixed-components equation.
pub fn assemble_ehat(
    setup: &Setup,
    h: &TensorField,
    hv: Option<&TensorField>,
    gauge_w_low: Option<&TensorField>,
) -> Result<TensorField> {
    let grid = &setup.grid;
    let n = grid.n;
    let d = grid.dim();
    let mut out = TensorField::zeros(Rank::Vector(n), grid.boundary_domain());
    if setup.st_cache.flat && gauge_w_low.is_none() {
        return Ok(out);
    }
    let bv = variations::boundary_geometry_variation(&setup.g, &setup.frame, &setup.gc_cache, h, hv)?;
    let hb = boundary_tangential(setup, h);
    // beta'_{h^T} A
    let bpa = calculus::bianchi_variation(&setup.gc_cache, &hb, &setup.frame.a_c);
    out.add_scaled(&bpa, 1.0);
    // -[delta* W' + 1/2 L_V h](nu)^T
    let mut gax = TensorField::zeros(Rank::Sym2(d), grid.bulk_domain());
    if let Some(wl) = gauge_w_low {
        let ds = calculus::sym_grad_oneform(&setup.st_cache, wl);
        gax.add_scaled(&ds, 1.0);
    }
    if !setup.st_cache.flat {
        let lie = half_lie_v(setup, h);
        gax.add_scaled(&lie, 1.0);
    }
    let (tang, _) = setup.contract_with_normal(&gax);
    out.add_scaled(&tang, -1.0);
    // + Ric(nu'_h)^T
    if !setup.st_cache.flat {
        let nsig = grid.sigma_len();
        let nt = grid.steps + 1;
        for a in 0..n {
            let sa = grid.c_to_spacetime(a);
            for it in 0..nt {
                for sig in 0..nsig {
                    let bn = it * nsig + sig;
                    let m = setup.g.mnode_of_bulk(it, grid.sigma_to_spatial(sig));
                    let mut s = 0.0;
                    for b in 0..d {
                        s += setup.st_cache.ricci.sym(sa, b, m) * bv.nu_p.get(b, bn);
                    }
                    let old = out.get(a, bn);
                    out.set(a, bn, old + s);
                }
            }
        }
    }
    // -1/2 [A(beta_C h^T) + beta'_{2A} h^T + beta_C(h_nunu A)]
    let bh = calculus::bianchi(&setup.gc_cache, &hb);
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;
    for a in 0..n {
        for it in 0..nt {
            for sig in 0..nsig {
                let bn = it * nsig + sig;
                let mut s = 0.0;
                for b in 0..n {
                    for c in 0..n {
                        s += setup.frame.a_c.sym(a, b, bn)
                            * setup.gc_cache.ginv.sym(b, c, bn)
                            * bh.get(c, bn);
                    }
                }
                let old = out.get(a, bn);
                out.set(a, bn, old - 0.5 * s);
            }
        }
    }
    let bp2a = calculus::bianchi_variation(&setup.gc_cache, &setup.frame.a_c.scaled(2.0), &hb);
    out.add_scaled(&bp2a, -0.5);
    let (_, hnunu) = setup.contract_with_normal(h);
    let mut hnna = setup.frame.a_c.clone();
    for a in 0..n {
        for b in a..n {
            for bn in 0..hnunu.nodes() {
                let v = hnna.sym(a, b, bn) * hnunu.get(0, bn);
                hnna.sym_set(a, b, bn, v);
            }
        }
    }
    let bhnna = calculus::bianchi(&setup.gc_cache, &hnna);
    out.add_scaled(&bhnna, -0.5);
    Ok(out)
}

/// Boundary tangential restriction of a bulk Sym2 as a C-intrinsic Sym2.
pub fn boundary_tangential(setup: &Setup, h: &TensorField) -> TensorField {
    let grid = &setup.grid;
    let n = grid.n;
    let nsig = grid.sigma_len();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let mut out = TensorField::zeros(Rank::Sym2(n), grid.boundary_domain());
    for a in 0..n {
        for b in a..n {
            let sa = grid.c_to_spacetime(a);
            let sb = grid.c_to_spacetime(b);
            for it in 0..nt {
                for sig in 0..nsig {
                    out.sym_set(
                        a,
                        b,
                        it * nsig + sig,
                        h.sym(sa, sb, it * nsp + grid.sigma_to_spatial(sig)),
                    );
                }
            }
        }
    }
    out
}

/// Y-tilde term of the transport equation: `(V'_F)(T^C)` (one-form pairing).
pub fn assemble_ytilde(setup: &Setup, v_f_low: &TensorField) -> TensorField {
    let grid = &setup.grid;
    let d = grid.dim();
    let vb = grid.boundary_of(v_f_low);
    let mut out = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
    for bn in 0..out.nodes() {
        let mut s = 0.0;
        for a in 0..d {
            s += vb.get(a, bn) * setup.frame.t_c.get(a, bn);
        }
        out.set(0, bn, s);
    }
    out
}

/// Z-tilde term:
/// `-beta_C h^T(T) + h(T,nu) H_C + <h(nu)^T, A(T)> + <nabla_nu h(nu)^T, T>
///   - h^T(T, nabla_nu nu)`.
pub fn assemble_ztilde(setup: &Setup, h: &TensorField) -> TensorField {
    let grid = &setup.grid;
    let n = grid.n;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let hb = boundary_tangential(setup, h);
    let bh = calculus::bianchi(&setup.gc_cache, &hb);
    let hnu_layers = setup.layered_hnu(h);
    let dnu_hnu = variations::normal_derivative_oneform(
        &setup.g,
        &setup.frame,
        &setup.st_cache,
        &hnu_layers,
    );
    let mut out = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
    for it in 0..nt {
        for sig in 0..nsig {
            let bn = it * nsig + sig;
            let sp = grid.sigma_to_spatial(sig);
            let node = it * nsp + sp;
            let m = setup.g.mnode_of_bulk(it, sp);
            // -beta_C h^T(T)
            let mut s = 0.0;
            for a in 0..n {
                s -= bh.get(a, bn) * setup.t_intr.get(a, bn);
            }
            // + h(T, nu) H_C
            let mut htnu = 0.0;
            for a in 0..d {
                for b in 0..d {
                    htnu += h.sym(a, b, node)
                        * setup.frame.t_c.get(a, bn)
                        * setup.frame.nu_c_bulk.get(b, m);
                }
            }
            s += htnu * setup.frame.h_c.get(0, bn);
            // + <h(nu)^T, A(T)>  (one-forms paired with g_C inverse)
            let mut hnuat = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let mut at_b = 0.0;
                    for c in 0..n {
                        at_b += setup.frame.a_c.sym(b, c, bn) * setup.t_intr.get(c, bn);
                    }
                    hnuat += setup.gc_cache.ginv.sym(a, b, bn)
                        * hnu_layers.get(a, node)
                        * at_b;
                }
            }
            s += hnuat;
            // + <nabla_nu h(nu)^T, T> (one-form against the vector)
            for a in 0..n {
                s += dnu_hnu.get(a, bn) * setup.t_intr.get(a, bn);
            }
            // - h^T(T, nabla_nu nu)
            let mut htn = 0.0;
            for a in 0..d {
                for b in 0..d {
                    htn += h.sym(a, b, node) * setup.frame.t_c.get(a, bn) * setup.nu_dot.get(b, bn);
                }
            }
            s -= htn;
            out.set(0, bn, s);
        }
    }
    out
}

/// E-tilde term: `[W'_h + <h, D^2 x^a> d_a](T^C)`.
pub fn assemble_etilde(
    setup: &Setup,
    h: &TensorField,
    gauge_w_low: Option<&TensorField>,
) -> TensorField {
    let grid = &setup.grid;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let mut out = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
    if let Some(wl) = gauge_w_low {
        let wb = grid.boundary_of(wl);
        for bn in 0..out.nodes() {
            let mut s = 0.0;
            for a in 0..d {
                s += wb.get(a, bn) * setup.frame.t_c.get(a, bn);
            }
            out.set(0, bn, s);
        }
    }
    if !setup.st_cache.flat {
        for it in 0..nt {
            for sig in 0..nsig {
                let bn = it * nsig + sig;
                let sp = grid.sigma_to_spatial(sig);
                let node = it * nsp + sp;
                let m = setup.g.mnode_of_bulk(it, sp);
                let gi = crate::smallmat::inv(&setup.g.matrix(m), d).expect("metric");
                // <h, D^2 x^a> = -G^a_{bc} h^{bc}; pair with T lowered
                let mut s = 0.0;
                for a in 0..d {
                    let mut y = 0.0;
                    for b in 0..d {
                        for c in 0..d {
                            let mut hup = 0.0;
                            for e in 0..d {
                                for f in 0..d {
                                    hup += gi[b * d + e] * gi[c * d + f] * h.sym(e, f, node);
                                }
                            }
                            y -= setup.st_cache.gamma_at(a, b, c, m) * hup;
                        }
                    }
                    // lower against T: g_{a e} T^e
                    let mut tl = 0.0;
                    for e in 0..d {
                        tl += setup.g.comp.sym(a, e, m) * setup.frame.t_c.get(e, bn);
                    }
                    s += y * tl;
                }
                let old = out.get(0, bn);
                out.set(0, bn, old + s);
            }
        }
    }
    out
}

/// Solve the conformal-factor equation
/// `-(n-1)/n box_C u - (1/n) R_C u = rhs` with the given Sigma data.
pub fn solve_u_equation(
    setup: &Setup,
    rhs: &TensorField,
    init_value: &TensorField,
    init_velocity: &TensorField,
) -> Result<WaveSolution> {
    // for u = (1/n) tr_C h the equation reads -(n-1) box_C u - R_C u = rhs
    // (the displayed (n-1)/n coefficients belong to the tr_C h variable)
    let n = setup.n() as f64;
    let f_eff = rhs.scaled(1.0 / (2.0 * (n - 1.0)));
    let lower = ScalarCurvatureLower { cache: &setup.gc_cache, coef: -1.0 / (2.0 * (n - 1.0)) };
    wave::solve_wave(
        &WaveProblem {
            cache: &setup.gc_cache,
            comps: 1,
            source: Source::Field(&f_eff),
            lower: Some(&lower),
            init_value,
            init_velocity,
            dirichlet: Dirichlet::Zero,
            compat_tol: 1e-6,
        },
        &setup.grid.boundary_domain(),
    )
}

/// Solve the mixed-components equation
/// `-1/2 [box_C + Ric_C] h(nu)^T = rhs` (one-form components on C).
pub fn solve_hnu_equation(
    setup: &Setup,
    rhs: &TensorField,
    init_value: &TensorField,
    init_velocity: &TensorField,
) -> Result<WaveSolution> {
    let lower =
        OneFormWaveLower { cache: &setup.gc_cache, ric_coef: 1.0, with_gauge_transport: false };
    wave::solve_wave(
        &WaveProblem {
            cache: &setup.gc_cache,
            comps: setup.n(),
            source: Source::Field(rhs),
            lower: Some(&lower),
            init_value,
            init_velocity,
            dirichlet: Dirichlet::Zero,
            compat_tol: 1e-6,
        },
        &setup.grid.boundary_domain(),
    )
}

/// Solve the transport equation `1/2 T^C(h_nunu) = rhs`.
pub fn solve_hnunu_equation(
    setup: &Setup,
    rhs: &TensorField,
    init_value: &TensorField,
) -> Result<TensorField> {
    wave::solve_transport(&setup.grid.boundary_domain(), &setup.t_intr, rhs, init_value, 1)
}

/// Assemble component Dirichlet data `h_{ab}|_C` (value and velocity series
/// on the boundary domain) from the boundary unknowns.
pub fn dirichlet_from_boundary_unknowns(
    setup: &Setup,
    sigma_p: &TensorField,
    u: &TensorField,
    hnu: &TensorField,
    hnunu: &TensorField,
) -> (TensorField, TensorField) {
    let grid = &setup.grid;
    let n = grid.n;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;
    let mut val = TensorField::zeros(Rank::Sym2(d), grid.boundary_domain());
    for it in 0..nt {
        for sig in 0..nsig {
            let bn = it * nsig + sig;
            let m = setup.g.mnode_of_bulk(it, grid.sigma_to_spatial(sig));
            let nu: Vec<f64> = (0..d).map(|a| setup.frame.nu_c_bulk.get(a, m)).collect();
            // tangential block
            for a in 0..n {
                for b in a..n {
                    let v = sigma_p.sym(a, b, bn) + u.get(0, bn) * setup.frame.g_c.sym(a, b, bn);
                    val.sym_set(grid.c_to_spacetime(a), grid.c_to_spacetime(b), bn, v);
                }
            }
            // mixed: h_{1, s(b)} from h(nu, s(b)) = hnu_b
            for b in 0..n {
                let sb = grid.c_to_spacetime(b);
                let mut s = hnu.get(b, bn);
                for al in 0..d {
                    if al != 1 {
                        s -= nu[al] * val.sym(al, sb, bn);
                    }
                }
                val.sym_set(1, sb, bn, s / nu[1]);
            }
            // normal-normal: h_11 from h(nu, nu) = hnunu
            let mut s = hnunu.get(0, bn);
            for al in 0..d {
                for be in 0..d {
                    if al != 1 || be != 1 {
                        s -= nu[al] * nu[be] * val.sym(al, be, bn);
                    }
                }
            }
            val.sym_set(1, 1, bn, s / (nu[1] * nu[1]));
        }
    }
    let vel = crate::gauge::time_derivative_series(&val, grid);
    (val, vel)
}

/// Residuals of the gauge boundary identities, both sides assembled
/// independently; report-only.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundaryIdentityReport {
    pub tangential_residual: f64,
    pub normal_residual: f64,
}

pub fn gauge_boundary_identity_check(
    setup: &Setup,
    h: &TensorField,
    hv: Option<&TensorField>,
) -> Result<BoundaryIdentityReport> {
    let grid = &setup.grid;
    let n = grid.n;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;

    let bh_bulk = calculus::bianchi(&setup.st_cache, h);
    let bh_b = grid.boundary_of(&bh_bulk);
    let hb = boundary_tangential(setup, h);
    let (hnu, hnunu) = setup.contract_with_normal(h);
    let (trh, _) = {
        // boundary trace tr_C h
        let mut tr = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
        for bn in 0..tr.nodes() {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += setup.gc_cache.ginv.sym(a, b, bn) * hb.sym(a, b, bn);
                }
            }
            tr.set(0, bn, s);
        }
        (tr, ())
    };

    // (4): (beta h)^T = -nabla_nu h(nu)^T + delta_C ring(h)
    //      + 1/2 d_C((1 - 2/n) tr_C h + h_nunu) - (A + H_C g_C) h(nu)^T
    let hnu_layers = setup.layered_hnu(h);
    let dnu_hnu = variations::normal_derivative_oneform(
        &setup.g,
        &setup.frame,
        &setup.st_cache,
        &hnu_layers,
    );
    // trace-free part of h^T
    let mut ring = hb.clone();
    for a in 0..n {
        for b in a..n {
            for bn in 0..ring.nodes() {
                let v = ring.sym(a, b, bn)
                    - trh.get(0, bn) / n as f64 * setup.frame.g_c.sym(a, b, bn);
                ring.sym_set(a, b, bn, v);
            }
        }
    }
    let delta_ring = calculus::divergence_sym2(&setup.gc_cache, &ring);
    // scalar combination and its boundary gradient
    let mut comb = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
    for bn in 0..comb.nodes() {
        comb.set(0, bn, (1.0 - 2.0 / n as f64) * trh.get(0, bn) + hnunu.get(0, bn));
    }
    let dcomb = calculus::all_derivs(&comb);

    let mut tangential_residual = 0.0f64;
    for it in 0..nt {
        for sig in 0..nsig {
            let bn = it * nsig + sig;
            for b in 0..n {
                let sb = grid.c_to_spacetime(b);
                let lhs = bh_b.get(sb, bn);
                let mut rhs = -dnu_hnu.get(b, bn) + delta_ring.get(b, bn)
                    + 0.5 * dcomb[b][0][bn];
                for a in 0..n {
                    for c in 0..n {
                        rhs -= (setup.frame.a_c.sym(b, a, bn)
                            + setup.frame.h_c.get(0, bn) * setup.frame.g_c.sym(b, a, bn))
                            * setup.gc_cache.ginv.sym(a, c, bn)
                            * hnu.get(c, bn);
                    }
                }
                tangential_residual = tangential_residual.max((lhs - rhs).abs());
            }
        }
    }

    // (5): beta h(nu) = -1/2 nu(h_nunu) + H'_h - h_nunu H_C + <A, h^T>
    let bv = variations::boundary_geometry_variation(&setup.g, &setup.frame, &setup.gc_cache, h, hv)?;
    // layered h_nunu extension and its normal derivative
    let nsp = grid.spatial_len();
    let mut hnn_layers = TensorField::zeros(Rank::Scalar, grid.bulk_domain());
    for it in 0..nt {
        for sp in 0..nsp {
            let node = it * nsp + sp;
            let m = setup.g.mnode_of_bulk(it, sp);
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    s += h.sym(a, b, node)
                        * setup.frame.nu_c_bulk.get(a, m)
                        * setup.frame.nu_c_bulk.get(b, m);
                }
            }
            hnn_layers.set(0, node, s);
        }
    }
    let nu_hnn = variations::normal_derivative_scalar(&setup.g, &setup.frame, &hnn_layers, None);
    let mut normal_residual = 0.0f64;
    for it in 0..nt {
        for sig in 0..nsig {
            let bn = it * nsig + sig;
            let m = setup.g.mnode_of_bulk(it, grid.sigma_to_spatial(sig));
            let mut lhs = 0.0;
            for a in 0..d {
                let mut up = 0.0;
                let gi = crate::smallmat::inv(&setup.g.matrix(m), d).expect("metric");
                for b in 0..d {
                    up += gi[a * d + b] * bh_b.get(b, bn);
                }
                let mut nul = 0.0;
                for b in 0..d {
                    nul += setup.g.comp.sym(a, b, m) * setup.frame.nu_c_bulk.get(b, m);
                }
                lhs += up * nul;
            }
            let mut ah = 0.0;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for e in 0..n {
                            ah += setup.gc_cache.ginv.sym(a, c, bn)
                                * setup.gc_cache.ginv.sym(b, e, bn)
                                * setup.frame.a_c.sym(c, e, bn)
                                * hb.sym(a, b, bn);
                        }
                    }
                }
            }
            let rhs = -0.5 * nu_hnn.get(0, bn) + bv.h_p.get(0, bn)
                - hnunu.get(0, bn) * setup.frame.h_c.get(0, bn)
                + ah;
            normal_residual = normal_residual.max((lhs - rhs).abs());
        }
    }
    Ok(BoundaryIdentityReport { tangential_residual, normal_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use crate::metric::{minkowski_corner, perturb_metric, BumpProfile};
    use crate::target;

    fn flat_setup(nx: usize, a0: f64) -> Setup {
        let gr = crate::grid::CornerGrid::build(&GridConfig::with_resolution(2, nx, 0.5)).unwrap();
        Setup::new(minkowski_corner(a0, &gr).unwrap()).unwrap()
    }

    fn curved_setup(nx: usize, a0: f64, eps: f64) -> Setup {
        let gr = crate::grid::CornerGrid::build(&GridConfig::with_resolution(2, nx, 0.5)).unwrap();
        let g0 = minkowski_corner(a0, &gr).unwrap();
        let g = perturb_metric(&g0, &BumpProfile::gaussian_g22(&gr), eps).unwrap();
        Setup::new(g).unwrap()
    }

    fn random_h(setup: &Setup, seed: u64, amp: f64) -> (TensorField, TensorField) {
        target::random_smooth_deformation(&setup.grid, seed, amp)
    }

    #[test]
    fn boundary_identities_on_random_h_converge() {
        let run = |nx: usize| -> (f64, f64) {
            let setup = flat_setup(nx, 0.0);
            let radii = target::support_radii(&setup.grid, 6.0);
            let _ = radii;
            let (h, hv) =
                target::random_corner_deformation(&setup.grid, 5, 0.3, (0.8, 0.4));
            let rep = gauge_boundary_identity_check(&setup, &h, Some(&hv)).unwrap();
            (rep.tangential_residual, rep.normal_residual)
        };
        let (t1, n1) = run(16);
        let (t2, n2) = run(32);
        assert!(t2 < 2e-2, "tangential {}", t2);
        assert!(n2 < 2e-2, "normal {}", n2);
        // at the diagonal flat corner both sides assemble from identical
        // stencils and the residual sits at rounding level; convergence is
        // asserted only above the rounding floor
        if t2 > 1e-12 {
            assert!(t1 / t2 > 3.0 && t1 / t2 < 6.5, "tangential ratio {}", t1 / t2);
        }
        if n2 > 1e-12 {
            assert!(n1 / n2 > 3.0 && n1 / n2 < 6.5, "normal ratio {}", n1 / n2);
        }
    }

    #[test]
    fn boundary_identities_vanish_for_cg_at_flat() {
        let setup = flat_setup(12, 0.0);
        let mut cg = TensorField::zeros(Rank::Sym2(3), setup.grid.bulk_domain());
        for a in 0..3 {
            for b in a..3 {
                let v = setup.g.comp.sym(a, b, 0) * 0.8;
                for node in 0..cg.nodes() {
                    cg.sym_set(a, b, node, v);
                }
            }
        }
        let zero = TensorField::zeros(Rank::Sym2(3), setup.grid.bulk_domain());
        let rep = gauge_boundary_identity_check(&setup, &cg, Some(&zero)).unwrap();
        assert!(rep.tangential_residual < 1e-12, "{}", rep.tangential_residual);
        assert!(rep.normal_residual < 1e-12, "{}", rep.normal_residual);
    }

    /// The conformal-factor equation is the linearized Gauss identity along
    /// C: with V'_F := V'_h (so W' = 0) and F := L(h), the equation holds
    /// for ANY smooth h to stencil order.
    pub(super) fn u_identity_residual(setup: &Setup, h: &TensorField, hv: &TensorField) -> f64 {
        let grid = &setup.grid;
        let n = grid.n as f64;
        let (f, _) = calculus::lin_gauged_operator(&setup.st_cache, h);
        let vph = calculus::lin_gauge_vector(&setup.st_cache, h);
        // lowered
        let d = grid.dim();
        let nsp = grid.spatial_len();
        let nt = grid.steps + 1;
        let mut vl = TensorField::zeros(Rank::Vector(d), grid.bulk_domain());
        for b in 0..d {
            for it in 0..nt {
                for sp in 0..nsp {
                    let m = setup.g.mnode_of_bulk(it, sp);
                    let mut s = 0.0;
                    for c in 0..d {
                        s += setup.g.comp.sym(b, c, m) * vph.get(c, it * nsp + sp);
                    }
                    vl.set(b, it * nsp + sp, s);
                }
            }
        }
        let mut tau = TargetData::zero(grid);
        tau.f = f;
        // sigma' = trace-free part of h^T
        let hb = boundary_tangential(setup, h);
        let mut trh = TensorField::zeros(Rank::Scalar, grid.boundary_domain());
        for bn in 0..trh.nodes() {
            let mut s = 0.0;
            for a in 0..grid.n {
                for b in 0..grid.n {
                    s += setup.gc_cache.ginv.sym(a, b, bn) * hb.sym(a, b, bn);
                }
            }
            trh.set(0, bn, s);
        }
        let mut sigma_p = hb.clone();
        for a in 0..grid.n {
            for b in a..grid.n {
                for bn in 0..sigma_p.nodes() {
                    let v = sigma_p.sym(a, b, bn)
                        - trh.get(0, bn) / n * setup.frame.g_c.sym(a, b, bn);
                    sigma_p.sym_set(a, b, bn, v);
                }
            }
        }
        tau.sigma_p = sigma_p;
        let y = assemble_y_u(setup, &tau, &vl);
        let e = assemble_e_u(setup, h, Some(hv), None).unwrap();
        // u = (1/n) tr_C h; apply the boundary wave operator
        let u = trh.scaled(1.0 / n);
        let boxu = calculus::box_scalar(&setup.gc_cache, &u);
        let mut worst = 0.0f64;
        let bdom = grid.boundary_domain();
        for (bn, idx) in bdom.iter_indices().enumerate() {
            if idx.iter().zip(bdom.dims.iter()).any(|(&i, &dd)| i < 2 || i + 2 >= dd) {
                continue;
            }
            let mbn = if setup.gc_cache.len() == bdom.len() { bn } else { bn % setup.gc_cache.len() };
            let lhs =
                -(n - 1.0) * boxu.get(0, bn) - setup.gc_cache.scal[mbn] * u.get(0, bn);
            let rhs = y.get(0, bn) + e.get(0, bn);
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }

    #[test]
    fn u_equation_is_the_linearized_gauss_identity() {
        let run = |nx: usize, curved: bool| -> f64 {
            let setup =
                if curved { curved_setup(nx, 0.2, 0.05) } else { flat_setup(nx, 0.3) };
            let (h, hv) = target::random_trig_deformation(&setup.grid, 9, 0.3);
            u_identity_residual(&setup, &h, &hv)
        };
        let f1 = run(16, false);
        let f2 = run(32, false);
        assert!(f2 < 5e-4, "flat residual {}", f2);
        assert!(f1 / f2 > 3.0, "flat ratio {}", f1 / f2);
        let c1 = run(16, true);
        let c2 = run(32, true);
        assert!(c2 < 5e-2, "curved residual {}", c2);
        assert!(c1 / c2 > 2.5, "curved ratio {}", c1 / c2);
    }

    /// The mixed-components equation against independently assembled sides.
    pub(super) fn hnu_identity_residual(setup: &Setup, h: &TensorField, hv: &TensorField) -> f64 {
        let grid = &setup.grid;
        let d = grid.dim();
        let nsp = grid.spatial_len();
        let nt = grid.steps + 1;
        let (f, _) = calculus::lin_gauged_operator(&setup.st_cache, h);
        let vph = calculus::lin_gauge_vector(&setup.st_cache, h);
        let mut vl = TensorField::zeros(Rank::Vector(d), grid.bulk_domain());
        for b in 0..d {
            for it in 0..nt {
                for sp in 0..nsp {
                    let m = setup.g.mnode_of_bulk(it, sp);
                    let mut s = 0.0;
                    for c in 0..d {
                        s += setup.g.comp.sym(b, c, m) * vph.get(c, it * nsp + sp);
                    }
                    vl.set(b, it * nsp + sp, s);
                }
            }
        }
        let mut tau = TargetData::zero(grid);
        tau.f = f;
        let bv =
            variations::boundary_geometry_variation(&setup.g, &setup.frame, &setup.gc_cache, h, Some(hv))
                .unwrap();
        tau.ell_p = bv.h_p.clone();
        let yhat = assemble_yhat(setup, &tau, &vl);
        let zhat = assemble_zhat(setup, h);
        let ehat = assemble_ehat(setup, h, Some(hv), None).unwrap();
        // lhs: -1/2[box_C + Ric_C] h(nu)^T
        let (hnu, _) = setup.contract_with_normal(h);
        let boxh = calculus::oneform_box(&setup.gc_cache, &hnu);
        let mut worst = 0.0f64;
        let bdom = grid.boundary_domain();
        for (bn, idx) in bdom.iter_indices().enumerate() {
            if idx.iter().zip(bdom.dims.iter()).any(|(&i, &dd)| i < 2 || i + 2 >= dd) {
                continue;
            }
            let mbn = if setup.gc_cache.len() == bdom.len() { bn } else { bn % setup.gc_cache.len() };
            for a in 0..grid.n {
                let mut ric = 0.0;
                if !setup.gc_cache.flat {
                    for b in 0..grid.n {
                        for c in 0..grid.n {
                            ric += setup.gc_cache.ginv.sym(b, c, mbn)
                                * setup.gc_cache.ricci.sym(a, b, mbn)
                                * hnu.get(c, bn);
                        }
                    }
                }
                let lhs = -0.5 * (boxh.get(a, bn) + ric);
                let rhs = yhat.get(a, bn) + zhat.get(a, bn) + ehat.get(a, bn);
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    #[test]
    fn hnu_equation_is_the_linearized_codazzi_identity() {
        let run = |nx: usize, curved: bool| -> f64 {
            let setup =
                if curved { curved_setup(nx, 0.2, 0.05) } else { flat_setup(nx, 0.3) };
            let (h, hv) = target::random_trig_deformation(&setup.grid, 13, 0.3);
            hnu_identity_residual(&setup, &h, &hv)
        };
        let f1 = run(16, false);
        let f2 = run(32, false);
        assert!(f2 < 5e-4, "flat residual {}", f2);
        assert!(f1 / f2 > 3.0, "flat ratio {}", f1 / f2);
        let c1 = run(16, true);
        let c2 = run(32, true);
        assert!(c2 < 5e-2, "curved residual {}", c2);
        assert!(c1 / c2 > 2.5, "curved ratio {}", c1 / c2);
    }

    /// Transport identity: `1/2 T(h_nunu) = Ytilde + Ztilde + Etilde` with
    /// V'_F := V'_h.
    pub(super) fn transport_identity_residual(setup: &Setup, h: &TensorField) -> f64 {
        let grid = &setup.grid;
        let d = grid.dim();
        let nsp = grid.spatial_len();
        let nt = grid.steps + 1;
        let vph = calculus::lin_gauge_vector(&setup.st_cache, h);
        let mut vl = TensorField::zeros(Rank::Vector(d), grid.bulk_domain());
        for b in 0..d {
            for it in 0..nt {
                for sp in 0..nsp {
                    let m = setup.g.mnode_of_bulk(it, sp);
                    let mut s = 0.0;
                    for c in 0..d {
                        s += setup.g.comp.sym(b, c, m) * vph.get(c, it * nsp + sp);
                    }
                    vl.set(b, it * nsp + sp, s);
                }
            }
        }
        let ytilde = assemble_ytilde(setup, &vl);
        let ztilde = assemble_ztilde(setup, h);
        let etilde = assemble_etilde(setup, h, None);
        let (_, hnunu) = setup.contract_with_normal(h);
        let dh = calculus::all_derivs(&hnunu);
        let mut worst = 0.0f64;
        let bdom = grid.boundary_domain();
        for (bn, idx) in bdom.iter_indices().enumerate() {
            if idx.iter().zip(bdom.dims.iter()).any(|(&i, &dd)| i < 2 || i + 2 >= dd) {
                continue;
            }
            let mut t_dir = 0.0;
            for a in 0..grid.n {
                t_dir += setup.t_intr.get(a, bn) * dh[a][0][bn];
            }
            let lhs = 0.5 * t_dir;
            let rhs = ytilde.get(0, bn) + ztilde.get(0, bn) + etilde.get(0, bn);
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }

    #[test]
    fn transport_equation_identity() {
        let run = |nx: usize, curved: bool| -> f64 {
            let setup =
                if curved { curved_setup(nx, 0.2, 0.05) } else { flat_setup(nx, 0.3) };
            let (h, _hv) = target::random_trig_deformation(&setup.grid, 17, 0.3);
            transport_identity_residual(&setup, &h)
        };
        let f1 = run(16, false);
        let f2 = run(32, false);
        assert!(f2 < 2e-2, "flat residual {}", f2);
        if f2 > 1e-12 {
            assert!(f1 / f2 > 3.0, "flat ratio {}", f1 / f2);
        }
        let c2 = run(32, true);
        assert!(c2 < 5e-2, "curved residual {}", c2);
    }

    fn hnu_manufactured_error(nx: usize) -> f64 {
        // ell' = -box Psi gives the exact solution hnu = d Psi of the
        // Yhat-only equation at the flat corner
        let setup = flat_setup(nx, 0.0);
        let grid = &setup.grid;
        let om = 1.7;
        // sin^2(om t) cos^2(pi x2): the gradient vanishes on the xA faces
        // and at t = 0, so the manufactured one-form solution w = d Psi has
        // admissible zero initial values and face data
        let psi = |x: &[f64]| -> f64 {
            (om * x[0]).sin().powi(2) * (std::f64::consts::PI * x[1]).cos().powi(2)
        };
        // exact one-form solution w_a = d_a Psi on C (C coords: t, x2)
        let e = 1e-4;
        let dpsi = |x: &[f64], a: usize| -> f64 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += e;
            xm[a] -= e;
            (psi(&xp) - psi(&xm)) / (2.0 * e)
        };
        let boxpsi = |x: &[f64]| -> f64 {
            let mut s = 0.0;
            for a in 0..2 {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[a] += e;
                xm[a] -= e;
                let sgn = if a == 0 { -1.0 } else { 1.0 };
                s += sgn * (psi(&xp) - 2.0 * psi(x) + psi(&xm)) / (e * e);
            }
            s
        };
        // rhs = 1/2 d ell' with ell' = -box Psi => rhs = -1/2 d box Psi
        let rhs = TensorField::from_fn(Rank::Vector(2), grid.boundary_domain(), |a, x| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += e;
            xm[a] -= e;
            -0.5 * (boxpsi(&xp) - boxpsi(&xm)) / (2.0 * e)
        });
        let init = TensorField::from_fn(Rank::Vector(2), grid.sigma_domain(), |a, x| {
            dpsi(&[0.0, x[0]], a)
        });
        let init_v = TensorField::from_fn(Rank::Vector(2), grid.sigma_domain(), |a, x| {
            let ee = 1e-4;
            (dpsi(&[ee, x[0]], a) - dpsi(&[-ee, x[0]], a)) / (2.0 * ee)
        });
        let sol = solve_hnu_equation(&setup, &rhs, &init, &init_v).unwrap();
        // compare against d Psi at the final time
        let nsig = grid.sigma_len();
        let sigdom = grid.sigma_domain();
        let mut worst = 0.0f64;
        for (sig, idx) in sigdom.iter_indices().enumerate() {
            let x2 = sigdom.coords(&idx)[0];
            for a in 0..2 {
                let want = dpsi(&[grid.t_max, x2], a);
                let got = sol.w.get(a, grid.steps * nsig + sig);
                worst = worst.max((got - want).abs());
            }
        }
        worst
    }

    #[test]
    fn hnu_bump_source_matches_manufactured_potential() {
        let e1 = hnu_manufactured_error(24);
        let e2 = hnu_manufactured_error(48);
        assert!(e2 < 1e-2, "error {}", e2);
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }
}


#[cfg(test)]
mod diag2 {
    use super::*;
    use crate::grid::GridConfig;
    use crate::metric::minkowski_corner;

    #[test]
    fn diag_single_component() {
        let gr = crate::grid::CornerGrid::build(&GridConfig::with_resolution(2, 16, 0.5)).unwrap();
        let setup = Setup::new(minkowski_corner(0.3, &gr).unwrap()).unwrap();
        for comp in 0..6usize {
            let h = TensorField::from_fn(Rank::Sym2(3), gr.bulk_domain(), |c, x| {
                if c == comp {
                    0.1 * (1.1 * x[0] + 0.3).sin() * (0.9 * x[1]).cos() * (1.3 * x[2]).sin()
                } else {
                    0.0
                }
            });
            let hv = TensorField::from_fn(Rank::Sym2(3), gr.bulk_domain(), |c, x| {
                if c == comp {
                    0.1 * 1.1 * (1.1 * x[0] + 0.3).cos() * (0.9 * x[1]).cos() * (1.3 * x[2]).sin()
                } else {
                    0.0
                }
            });
            let ru = super::tests::u_identity_residual(&setup, &h, &hv);
            let rh = super::tests::hnu_identity_residual(&setup, &h, &hv);
            println!("comp {}: u={:.3e} hnu={:.3e}", comp, ru, rh);
        }
    }
}
