//! Corner machinery: the linearized compatibility conditions between
//! initial, boundary and corner data along Sigma, the corner Cauchy data
//! determining the full component initial data `(h, d_t h)` on S, and the
//! corner-angle-dependent initial velocity of the conformal factor.

use crate::calculus::{self, GeomCache};
use crate::error::Result;
use crate::field::{Rank, TensorField};
use crate::frame::{self, BoundaryFrame};
use crate::metric::MetricField;
use crate::smallmat;
use crate::target::TargetData;

/// Per-condition residuals of the linearized corner compatibility
/// conditions; algebraic conditions and the first-order condition carry
/// separate tolerances.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CornerDataReport {
    /// Trace-free part of `gamma' - sigma' - u g` on Sigma (C0 metric match).
    pub c0_metric: f64,
    /// `|phi'|` on Sigma: deviation from the volume-normalized gauge
    /// (informational; the conformal-factor value is solved, not imposed).
    pub volume_normalization: f64,
    /// Lapse-shift match of the nu'-determined mixed components against the
    /// boundary-data route.
    pub lapse_shift: f64,
    /// The corner-angle formula for the `01` component.
    pub x1_formula: f64,
    /// Normalization consistency of the normal variation.
    pub normal_match: f64,
    /// First-order compatibility (the Lie-derivative condition).
    pub first_order: f64,
    /// Residual between the velocity identity and an ambient field's
    /// conformal-factor velocity; zero unless checked against an ambient
    /// deformation.
    pub u_velocity: f64,
    pub tol_algebraic: f64,
    pub tol_first_order: f64,
    pub pass: bool,
}

/// Tolerances for the compatibility check: algebraic identities hold to
/// rounding for admissible data, the first-order condition to stencil order.
#[derive(Debug, Clone, Copy)]
pub struct CornerTolerances {
    pub algebraic: f64,
    pub first_order: f64,
}

impl CornerTolerances {
    pub fn for_grid(grid: &crate::grid::CornerGrid, data_scale: f64) -> CornerTolerances {
        let s = data_scale.max(1.0);
        CornerTolerances {
            algebraic: 1e-7 * s,
            first_order: (20.0 * grid.dx * grid.dx * s).max(1e-7),
        }
    }
}

/// The conformal-factor value on Sigma determined by the C0 compatibility:
/// `u = (tr_Sigma gamma' - tr_Sigma sigma') / (n - 1)`.
pub fn u_on_sigma(
    g: &MetricField,
    frame: &BoundaryFrame,
    tau: &TargetData,
) -> TensorField {
    let grid = &g.grid;
    let n = grid.n;
    let nsig = grid.sigma_len();
    let mut out = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let mut blk = vec![0.0; (n - 1) * (n - 1)];
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                blk[aa * (n - 1) + bb] = frame.gamma_s.sym(aa + 1, bb + 1, sp);
            }
        }
        let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
        let mut trg = 0.0;
        let mut trs = 0.0;
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                let w = blki[aa * (n - 1) + bb];
                trg += w * tau.gamma_p.sym(aa + 1, bb + 1, sp);
                trs += w * tau.sigma_p.sym(aa + 1, bb + 1, sig);
            }
        }
        out.set(0, sig, (trg - trs) / (n as f64 - 1.0));
    }
    out
}

/// Mixed initial components `h_{0 beta}` on S solved from the normal
/// variation target (pointwise linear system per node).
pub fn mixed_components_from_nu(
    g: &MetricField,
    tau_nu_p: &TensorField,
    h_ij: &TensorField,
) -> Result<TensorField> {
    let grid = &g.grid;
    let d = grid.dim();
    let n = grid.n;
    let nsp = grid.spatial_len();
    let mut out = TensorField::zeros(Rank::Sym2(d), grid.spatial_domain());
    // copy the spatial block
    for i in 0..n {
        for j in i..n {
            for sp in 0..nsp {
                out.sym_set(i + 1, j + 1, sp, h_ij.sym(i, j, sp));
            }
        }
    }
    for sp in 0..nsp {
        let m = g.mnode_of_bulk(0, sp);
        let gi = smallmat::inv(&g.matrix(m), d).expect("metric invertible");
        let n00 = -gi[0];
        let sq = n00.sqrt();
        // nu'(h)^a = h^{a0}/sq + 1/2 g^{a0} n00^{-3/2} h^{00}
        // as a linear map of the unknowns x_beta = h_{0 beta}
        let raise_a0 = |a: usize, h_full: &dyn Fn(usize, usize) -> f64| -> f64 {
            let mut s = 0.0;
            for mu in 0..d {
                for nu in 0..d {
                    s += gi[a * d + mu] * gi[nu] * h_full(mu, nu);
                }
            }
            s
        };
        let eval = |x: &[f64]| -> Vec<f64> {
            let h_full = |mu: usize, nu: usize| -> f64 {
                if mu == 0 && nu == 0 {
                    x[0]
                } else if mu == 0 {
                    x[nu]
                } else if nu == 0 {
                    x[mu]
                } else {
                    h_ij.sym(mu - 1, nu - 1, sp)
                }
            };
            let h00 = raise_a0(0, &h_full);
            (0..d)
                .map(|a| raise_a0(a, &h_full) / sq + 0.5 * gi[a * d] * n00.powf(-1.5) * h00)
                .collect()
        };
        // note: nu'^a = h^{a0}/sqrt(-g^00) + 1/2 g^{a0} (-g^{00})^{-3/2} h^{00}
        // where h^{00} enters with its raised sign; eval uses the same
        // algebra as `slice_normal_variation` (checked against it in tests).
        let zero = vec![0.0; d];
        let base = eval(&zero);
        let mut mat = vec![0.0; d * d];
        for beta in 0..d {
            let mut e = vec![0.0; d];
            e[beta] = 1.0;
            let col = eval(&e);
            for a in 0..d {
                mat[a * d + beta] = col[a] - base[a];
            }
        }
        let rhs: Vec<f64> = (0..d).map(|a| tau_nu_p.get(a, sp) - base[a]).collect();
        let x = smallmat::solve(&mat, &rhs, d)
            .ok_or_else(|| crate::Error::Numerical("normal-variation system degenerate".into()))?;
        out.sym_set(0, 0, sp, x[0]);
        for i in 1..d {
            out.sym_set(0, i, sp, x[i]);
        }
    }
    Ok(out)
}

/// Full corner Cauchy data `(h, d_t h)` on S determined by the target data.
/// The corner-angle dependence is carried by the normal-variation data at
/// Sigma (the compatibility conditions tie them together).
pub fn corner_cauchy_data(
    g: &MetricField,
    frame: &BoundaryFrame,
    st_cache: &GeomCache,
    tau: &TargetData,
) -> Result<(TensorField, TensorField)> {
    let grid = &g.grid;
    let d = grid.dim();
    let n = grid.n;
    let nsp = grid.spatial_len();

    // values: gamma' fills the spatial block, nu' pins h_{0 beta}
    let h_s = mixed_components_from_nu(g, &tau.nu_p, &tau.gamma_p)?;

    // velocities of the spatial block from kappa':
    // 2 kappa' = (L_{nu'} g) + (L_nu h) restricted to slice indices
    let dh = calculus::all_derivs(&h_s); // spatial derivatives of all comps
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
    let mut dg = vec![vec![vec![0.0; mlen]; g.comp.comps()]; d];
    for e in 0..d {
        if let Some(ax) = ax_of(e) {
            for c in 0..d {
                crate::stencil::diff1(&mdom, frame.nu_s.comp(c), ax, &mut dnu[e][c]);
            }
            for k in 0..g.comp.comps() {
                crate::stencil::diff1(&mdom, g.comp.comp(k), ax, &mut dg[e][k]);
            }
        }
    }
    let dnup = calculus::all_derivs(&tau.nu_p);

    let mut hv_s = TensorField::zeros(Rank::Sym2(d), grid.spatial_domain());
    for i in 0..n {
        for j in i..n {
            let (si, sj) = (i + 1, j + 1);
            let k = crate::field::sym_index(d, si, sj);
            for sp in 0..nsp {
                let m = g.mnode_of_bulk(0, sp);
                // (L_{nu'} g)_ij
                let mut lie_nup_g = 0.0;
                for c in 0..d {
                    lie_nup_g += tau.nu_p.get(c, sp) * dg[c][k][m]
                        + g.comp.sym(c, sj, m) * dnup[i][c][sp]
                        + g.comp.sym(si, c, m) * dnup[j][c][sp];
                }
                // (L_nu h)_ij without the time term
                let mut lie_nu_h = 0.0;
                for c in 1..d {
                    lie_nu_h += frame.nu_s.get(c, m) * dh[c - 1][k][sp];
                }
                for c in 0..d {
                    lie_nu_h += h_s.sym(c, sj, sp) * dnu[si][c][m]
                        + h_s.sym(si, c, sp) * dnu[sj][c][m];
                }
                let dt = (2.0 * tau.kappa_p.sym(i, j, sp) - lie_nup_g - lie_nu_h)
                    / frame.nu_s.get(0, m);
                hv_s.sym_set(si, sj, sp, dt);
            }
        }
    }

    // velocities of the mixed components from the gauge data V'_S:
    // V'(h, dh)^c is linear in d_t h_{0 beta}; extract columns per node.
    let dh_s = calculus::all_derivs(&h_s);
    for sp in 0..nsp {
        let m = g.mnode_of_bulk(0, sp);
        let gi = smallmat::inv(&g.matrix(m), d).expect("metric invertible");
        // evaluation of V'^c given the time derivatives x of h_{0 beta}
        let eval = |x: &[f64]| -> Vec<f64> {
            let dth = |mu: usize, nu: usize| -> f64 {
                if mu == 0 && nu == 0 {
                    x[0]
                } else if mu == 0 {
                    x[nu]
                } else if nu == 0 {
                    x[mu]
                } else {
                    hv_s.sym(mu, nu, sp)
                }
            };
            let deriv_h = |e: usize, a: usize, b: usize| -> f64 {
                if e == 0 {
                    dth(a, b)
                } else {
                    dh_s[e - 1][crate::field::sym_index(d, a, b)][sp]
                }
            };
            let mut hup = vec![0.0; d * d];
            for a in 0..d {
                for b in 0..d {
                    let mut s = 0.0;
                    for e in 0..d {
                        for f in 0..d {
                            s += gi[a * d + e] * gi[b * d + f] * h_s.sym(e, f, sp);
                        }
                    }
                    hup[a * d + b] = s;
                }
            }
            let mut out = vec![0.0; d];
            for c in 0..d {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        if !st_cache.flat {
                            s += hup[a * d + b] * st_cache.gamma_at(c, a, b, m) / (d as f64)
                                * (d as f64);
                        }
                        let gab = gi[a * d + b];
                        if gab == 0.0 {
                            continue;
                        }
                        let mut gp = 0.0;
                        for f in 0..d {
                            gp += 0.5
                                * gi[c * d + f]
                                * (deriv_h(a, f, b) + deriv_h(b, f, a) - deriv_h(f, a, b));
                        }
                        if !st_cache.flat {
                            for f in 0..d {
                                for e in 0..d {
                                    gp -= hup[c * d + f]
                                        * g.comp.sym(f, e, m)
                                        * st_cache.gamma_at(e, a, b, m);
                                }
                            }
                        }
                        s -= gab * gp;
                    }
                }
                out[c] = s;
            }
            out
        };
        let zero = vec![0.0; d];
        let base = eval(&zero);
        let mut mat = vec![0.0; d * d];
        for beta in 0..d {
            let mut e = vec![0.0; d];
            e[beta] = 1.0;
            let col = eval(&e);
            for c in 0..d {
                mat[c * d + beta] = col[c] - base[c];
            }
        }
        let rhs: Vec<f64> = (0..d).map(|c| tau.v_s.get(c, sp) - base[c]).collect();
        let x = smallmat::solve(&mat, &rhs, d)
            .ok_or_else(|| crate::Error::Numerical("gauge-data system degenerate".into()))?;
        hv_s.sym_set(0, 0, sp, x[0]);
        for i in 1..d {
            hv_s.sym_set(0, i, sp, x[i]);
        }
    }

    Ok((h_s, hv_s))
}

/// Linearization of the conformal-factor velocity identity, solved for
/// `T^C(phi)'`:
/// `[sqrt(1+a^2) (tr_Sigma kappa)' + (a a'/sqrt(1+a^2)) tr_Sigma K
///   - a' H_Sigma - a H'_Sigma - H'_sigma] / (n-1)`.
pub fn corner_u_velocity(
    g: &MetricField,
    frame: &BoundaryFrame,
    tau: &TargetData,
) -> Result<TensorField> {
    let grid = &g.grid;
    let n = grid.n;
    let nsig = grid.sigma_len();

    // H'_Sigma by central differencing of the nonlinear Sigma geometry in S
    let s = 1e-6;
    let mut gp = frame.gamma_s.clone();
    gp.add_scaled(&tau.gamma_p, s);
    let mut gm = frame.gamma_s.clone();
    gm.add_scaled(&tau.gamma_p, -s);
    let (_, hp) = frame::sigma_geometry_in_s(grid, &gp)?;
    let (_, hm) = frame::sigma_geometry_in_s(grid, &gm)?;
    let mut h_sigma_p = hp.sub(&hm).scaled(1.0 / (2.0 * s));

    // H'_sigma by central differencing in the boundary metric direction
    // sigma' (the conformal representative variation)
    let mut gcp = frame.g_c.clone();
    gcp.add_scaled(&tau.sigma_p, s);
    let mut gcm = frame.g_c.clone();
    gcm.add_scaled(&tau.sigma_p, -s);
    let hcp = frame::sigma_mean_curvature_in_c(grid, &gcp)?;
    let hcm = frame::sigma_mean_curvature_in_c(grid, &gcm)?;
    let h_sigma_c_p = hcp.sub(&hcm).scaled(1.0 / (2.0 * s));

    let mut out = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let a = frame.alpha.get(0, sig);
        let ap = tau.alpha_p.get(0, sig);
        let root = (1.0 + a * a).sqrt();
        // (tr_Sigma kappa)' = gamma_Sigma^{AB} kappa'_AB - gamma'^{AB} K_AB
        let mut blk = vec![0.0; (n - 1) * (n - 1)];
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                blk[aa * (n - 1) + bb] = frame.gamma_s.sym(aa + 1, bb + 1, sp);
            }
        }
        let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
        let mut trkp = 0.0;
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                trkp += blki[aa * (n - 1) + bb] * tau.kappa_p.sym(aa + 1, bb + 1, sp);
                // - gamma'^{AB} K_AB
                for cc in 0..n - 1 {
                    for ddx in 0..n - 1 {
                        trkp -= blki[aa * (n - 1) + cc]
                            * blki[bb * (n - 1) + ddx]
                            * tau.gamma_p.sym(cc + 1, ddx + 1, sp)
                            * frame.k_s.sym(aa + 1, bb + 1, sp);
                    }
                }
            }
        }
        let v = (root * trkp + (a * ap / root) * frame.tr_sigma_k.get(0, sig)
            - ap * frame.h_sigma.get(0, sig)
            - a * h_sigma_p.get(0, sig)
            - h_sigma_c_p.get(0, sig))
            / (n as f64 - 1.0);
        out.set(0, sig, v);
    }
    let _ = &mut h_sigma_p;
    Ok(out)
}

/// Initial velocity of the boundary unknown `u = (1/n) tr_C h` at Sigma:
/// `d_t u = S * 2 T^C(phi)' + w^A d_A u` with `S = sqrt(rho^2 + |w|^2)`
/// (the factor 2 links u to the conformal factor variation).
pub fn u_initial_velocity(
    g: &MetricField,
    frame: &BoundaryFrame,
    tau: &TargetData,
    u_sigma: &TensorField,
) -> Result<TensorField> {
    let grid = &g.grid;
    let nsig = grid.sigma_len();
    let uvel = corner_u_velocity(g, frame, tau)?;
    // tangential derivatives of u on Sigma
    let du = calculus::all_derivs(u_sigma);
    let mut out = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
    for sig in 0..nsig {
        // T^C = (d_t - w^A d_A)/S: d_t u = S * T(u) + w^A d_A u
        let t0 = frame.t_c.get(0, sig); // = 1/S
        let s_norm = 1.0 / t0;
        let mut shift = 0.0;
        for aa in 0..grid.n - 1 {
            let t_a = frame.t_c.get(grid.c_to_spacetime(aa + 1), sig); // = -w^A/S
            shift += -t_a * s_norm * du[aa][0][sig];
        }
        out.set(0, sig, s_norm * 2.0 * uvel.get(0, sig) + shift);
    }
    Ok(out)
}

/// Evaluate the compatibility conditions; report-only.
pub fn corner_compatibility_check(
    g: &MetricField,
    frame: &BoundaryFrame,
    tau: &TargetData,
    tol: CornerTolerances,
) -> Result<CornerDataReport> {
    let grid = &g.grid;
    let d = grid.dim();
    let n = grid.n;
    let nsig = grid.sigma_len();

    let u_sig = u_on_sigma(g, frame, tau);

    // C0 metric match: trace-free part of gamma' - sigma' - u g on Sigma
    let mut c0_metric = 0.0f64;
    let mut volume = 0.0f64;
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let u = u_sig.get(0, sig);
        volume = volume.max(0.5 * u.abs());
        for aa in 0..n - 1 {
            for bb in aa..n - 1 {
                let r = tau.gamma_p.sym(aa + 1, bb + 1, sp)
                    - tau.sigma_p.sym(aa + 1, bb + 1, sig)
                    - u * frame.gamma_s.sym(aa + 1, bb + 1, sp);
                c0_metric = c0_metric.max(r.abs());
            }
        }
    }

    // nu'-route mixed components at Sigma
    let h_s = mixed_components_from_nu(g, &tau.nu_p, &tau.gamma_p)?;

    // lapse-shift match: h_{0a} = sigma'_{0a} + u (g_C)_{0a} for a in C
    let mut lapse_shift = 0.0f64;
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let u = u_sig.get(0, sig);
        for a in 0..n {
            let sa = grid.c_to_spacetime(a);
            let want = tau.sigma_p.sym(0, a, sig) + u * frame.g_c.sym(0, a, sig);
            let got = h_s.sym(0, sa, sp);
            lapse_shift = lapse_shift.max((got - want).abs());
        }
    }

    // X1 formula: h_{01} = X'_1 assembled from (alpha', sigma', gamma')
    let mut x1_res = 0.0f64;
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let u = u_sig.get(0, sig);
        let a = frame.alpha.get(0, sig);
        let ap = tau.alpha_p.get(0, sig);
        // background lapse-shift of the boundary metric at Sigma
        let rho2 = -frame.g_c.sym(0, 0, sig);
        let rho = rho2.sqrt();
        let mut blk = vec![0.0; (n - 1) * (n - 1)];
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                blk[aa * (n - 1) + bb] = frame.g_c.sym(aa + 1, bb + 1, sig);
            }
        }
        let blki = smallmat::inv(&blk, n - 1).expect("Sigma metric nondegenerate");
        let w: Vec<f64> = (0..n - 1).map(|aa| frame.g_c.sym(0, aa + 1, sig)).collect();
        let mut wup = vec![0.0; n - 1];
        let mut w2 = 0.0;
        for aa in 0..n - 1 {
            for bb in 0..n - 1 {
                wup[aa] += blki[aa * (n - 1) + bb] * w[bb];
            }
        }
        for aa in 0..n - 1 {
            w2 += wup[aa] * w[aa];
        }
        let s_norm = (rho2 + w2).sqrt();
        // variations of the sigma-side data: the boundary metric variation
        // at Sigma is h^T = sigma' + u g_C
        let hboundary = |ca: usize, cb: usize| -> f64 {
            tau.sigma_p.sym(ca, cb, sig) + u * frame.g_c.sym(ca, cb, sig)
        };
        let rho_p = -hboundary(0, 0) / (2.0 * rho);
        let w_p: Vec<f64> = (0..n - 1).map(|aa| hboundary(0, aa + 1)).collect();
        // |w|^2 variation: 2 w^A w'_A - gamma'^{AB} w_A w_B
        let mut w2_p = 0.0;
        for aa in 0..n - 1 {
            w2_p += 2.0 * wup[aa] * w_p[aa];
            for bb in 0..n - 1 {
                for cc in 0..n - 1 {
                    for ddx in 0..n - 1 {
                        w2_p -= blki[aa * (n - 1) + cc]
                            * blki[bb * (n - 1) + ddx]
                            * hboundary(cc + 1, ddx + 1)
                            * w[aa]
                            * w[bb];
                    }
                }
            }
        }
        let s_p = (rho * rho_p + 0.5 * w2_p) / s_norm;
        // N and its variation under gamma'
        let gs_inv_blk = {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = frame.gamma_s.sym(i, j, sp);
                }
            }
            smallmat::inv(&m, n).expect("slice metric nondegenerate")
        };
        let g11 = gs_inv_blk[0];
        let nvec: Vec<f64> = (0..n).map(|i| gs_inv_blk[i * n] / g11.sqrt()).collect();
        // N'^i from gamma' (Riemannian version of the normal variation)
        let mut gup = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for e in 0..n {
                    for f in 0..n {
                        s += gs_inv_blk[i * n + e]
                            * gs_inv_blk[j * n + f]
                            * tau.gamma_p.sym(e, f, sp);
                    }
                }
                gup[i * n + j] = s;
            }
        }
        let np: Vec<f64> = (0..n)
            .map(|i| {
                -gup[i * n] / g11.sqrt() + 0.5 * gs_inv_blk[i * n] * g11.powf(-1.5) * gup[0]
            })
            .collect();
        // X1 = -(1/N^1)(a S + w_A N^A); its linearization
        let n1 = nvec[0];
        let mut w_na = 0.0;
        let mut w_na_p = 0.0;
        for aa in 0..n - 1 {
            w_na += w[aa] * nvec[aa + 1];
            w_na_p += w_p[aa] * nvec[aa + 1] + w[aa] * np[aa + 1];
        }
        let x1p = np[0] / (n1 * n1) * (a * s_norm + w_na)
            - (ap * s_norm + a * s_p + w_na_p) / n1;
        let got = h_s.sym(0, 1, sp);
        x1_res = x1_res.max((got - x1p).abs());
    }

    // normal-variation normalization: 2 g(nu', nu) + h(nu, nu) = 0
    let mut normal_match = 0.0f64;
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let m = g.mnode_of_bulk(0, sp);
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                s += 2.0 * g.comp.sym(a, b, m) * tau.nu_p.get(a, sp) * frame.nu_s.get(b, m)
                    + h_s.sym(a, b, sp) * frame.nu_s.get(a, m) * frame.nu_s.get(b, m);
            }
        }
        normal_match = normal_match.max(s.abs());
    }

    // first-order condition:
    // (L_T sigma)' + 2 (T phi)' sigma + 2 T(phi) sigma'
    //   - [sqrt(1+a^2)]' kappa - sqrt(1+a^2) kappa' + a' B + a B' = 0 on Sigma
    let uvel = corner_u_velocity(g, frame, tau)?;
    let sfd = 1e-6;
    let (bp_f, _) = {
        let mut gp = frame.gamma_s.clone();
        gp.add_scaled(&tau.gamma_p, sfd);
        frame::sigma_geometry_in_s(grid, &gp)?
    };
    let (bm_f, _) = {
        let mut gm = frame.gamma_s.clone();
        gm.add_scaled(&tau.gamma_p, -sfd);
        frame::sigma_geometry_in_s(grid, &gm)?
    };
    let b_var = bp_f.sub(&bm_f).scaled(1.0 / (2.0 * sfd));

    // (L_T sigma)' = L_{T'} g_C + L_T sigma'; both via central differences
    // of the boundary Lie machinery: vary g_C by sigma' and recompute the
    // Lie derivative of the t = 0 section normal
    let lie_var = {
        let mut gcp = frame.g_c.clone();
        gcp.add_scaled(&tau.sigma_p, sfd);
        let mut gcm = frame.g_c.clone();
        gcm.add_scaled(&tau.sigma_p, -sfd);
        let lp = boundary_t_lie(grid, &gcp)?;
        let lm = boundary_t_lie(grid, &gcm)?;
        lp.sub(&lm).scaled(1.0 / (2.0 * sfd))
    };
    let t_phi_bg = {
        // background T(phi) from the velocity identity
        let mut out = TensorField::zeros(Rank::Scalar, grid.sigma_domain());
        for sig in 0..nsig {
            let a = frame.alpha.get(0, sig);
            let v = ((1.0 + a * a).sqrt() * frame.tr_sigma_k.get(0, sig)
                - a * frame.h_sigma.get(0, sig)
                - frame.h_sigma_c.get(0, sig))
                / (n as f64 - 1.0);
            out.set(0, sig, v);
        }
        out
    };
    let mut first_order = 0.0f64;
    for sig in 0..nsig {
        let sp = grid.sigma_to_spatial(sig);
        let a = frame.alpha.get(0, sig);
        let ap = tau.alpha_p.get(0, sig);
        let root = (1.0 + a * a).sqrt();
        for aa in 0..n - 1 {
            for bb in aa..n - 1 {
                let r = lie_var.sym(aa, bb, sig)
                    + 2.0 * uvel.get(0, sig) * frame.g_c.sym(aa + 1, bb + 1, sig)
                    + 2.0 * t_phi_bg.get(0, sig) * tau.sigma_p.sym(aa + 1, bb + 1, sig)
                    - (a * ap / root) * frame.k_s.sym(aa + 1, bb + 1, sp)
                    - root * tau.kappa_p.sym(aa + 1, bb + 1, sp)
                    + ap * frame.b_sigma.sym(aa, bb, sig)
                    + a * b_var.sym(aa, bb, sig);
                first_order = first_order.max(r.abs());
            }
        }
    }

    let pass = c0_metric <= tol.algebraic
        && lapse_shift <= tol.algebraic
        && x1_res <= tol.algebraic
        && normal_match <= tol.algebraic
        && first_order <= tol.first_order;
    Ok(CornerDataReport {
        c0_metric,
        volume_normalization: volume,
        lapse_shift,
        x1_formula: x1_res,
        normal_match,
        first_order,
        u_velocity: 0.0,
        tol_algebraic: tol.algebraic,
        tol_first_order: tol.first_order,
        pass,
    })
}

/// `(L_T g_C)_AB` on Sigma for a given boundary metric, with T the future
/// unit normal of the t = 0 section (Sigma-intrinsic Sym2 output).
fn boundary_t_lie(grid: &crate::grid::CornerGrid, g_c: &TensorField) -> Result<TensorField> {
    let n = grid.n;
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;
    let bdom = grid.boundary_domain();
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
    let dgc = calculus::all_derivs(g_c);
    let dtc = calculus::all_derivs(&t_intr);
    let mut out = TensorField::zeros(Rank::Sym2(n - 1), grid.sigma_domain());
    for sig in 0..nsig {
        let bn = sig;
        for aa in 0..n - 1 {
            for bb in aa..n - 1 {
                let (ca, cb) = (aa + 1, bb + 1);
                let k = crate::field::sym_index(n, ca, cb);
                let mut lie_v = 0.0;
                for c in 0..n {
                    lie_v += t_intr.get(c, bn) * dgc[c][k][bn]
                        + g_c.sym(c, cb, bn) * dtc[ca][c][bn]
                        + g_c.sym(ca, c, bn) * dtc[cb][c][bn];
                }
                out.sym_set(aa, bb, sig, lie_v);
            }
        }
    }
    Ok(out)
}

/// Residual between the velocity identity and the directly computed
/// conformal-factor velocity of an ambient deformation (oracle check).
pub fn u_velocity_ambient_residual(
    g: &MetricField,
    frame: &BoundaryFrame,
    gc_cache: &GeomCache,
    tau: &TargetData,
    h: &TensorField,
    hv: &TensorField,
) -> Result<f64> {
    let grid = &g.grid;
    let n = grid.n;
    let nsig = grid.sigma_len();
    let nsp = grid.spatial_len();
    // u = (1/n) tr_C h on the boundary, exact time derivative from hv plus
    // the variation of the boundary inverse metric (static backgrounds)
    let hb = grid.boundary_of(h);
    let hvb = grid.boundary_of(hv);
    let _ = &hb;
    let u_sig = u_on_sigma(g, frame, tau);
    let u_dot = u_initial_velocity(g, frame, tau, &u_sig)?;
    let mut worst = 0.0f64;
    for sig in 0..nsig {
        let mut dtu = 0.0;
        for a in 0..n {
            for b in 0..n {
                dtu += gc_cache.ginv.sym(a, b, sig)
                    * hvb.sym(grid.c_to_spacetime(a), grid.c_to_spacetime(b), sig);
            }
        }
        dtu /= n as f64;
        worst = worst.max((dtu - u_dot.get(0, sig)).abs());
    }
    let _ = nsp;
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::hypersurface_frame;
    use crate::grid::{CornerGrid, GridConfig};
    use crate::metric::{minkowski_corner, perturb_metric, BumpProfile};
    use crate::target;

    fn setup(
        nx: usize,
        alpha0: f64,
        curved: Option<f64>,
    ) -> (CornerGrid, MetricField, BoundaryFrame, GeomCache, GeomCache) {
        let gr = CornerGrid::build(&GridConfig::with_resolution(2, nx, 0.5)).unwrap();
        let g0 = minkowski_corner(alpha0, &gr).unwrap();
        let g = match curved {
            Some(hs) => perturb_metric(&g0, &BumpProfile::curved_corner(&gr, hs), 1.0).unwrap(),
            None => g0,
        };
        let frame = hypersurface_frame(&g).unwrap();
        let st = GeomCache::spacetime(&g).unwrap();
        let gc = GeomCache::intrinsic(gr.n, frame.g_c.clone(), false).unwrap();
        (gr, g, frame, st, gc)
    }

    #[test]
    fn zero_data_passes_with_zero_residuals() {
        let (gr, g, frame, _st, _gc) = setup(12, 0.3, None);
        let tau = TargetData::zero(&gr);
        let tol = CornerTolerances::for_grid(&gr, 1.0);
        let rep = corner_compatibility_check(&g, &frame, &tau, tol).unwrap();
        assert!(rep.pass, "{:?}", rep);
        assert_eq!(rep.c0_metric, 0.0);
        assert_eq!(rep.x1_formula, 0.0);
        assert_eq!(rep.first_order, 0.0);
    }

    #[test]
    fn induced_data_passes_and_reconstructs() {
        let (gr, g, frame, st, gc) = setup(24, 0.2, Some(0.08));
        let (tau, h, hv) =
            target::random_admissible(&g, &frame, &st, &gc, 11, 0.05).unwrap();
        let tol = CornerTolerances::for_grid(&gr, 1.0);
        let rep = corner_compatibility_check(&g, &frame, &tau, tol).unwrap();
        assert!(rep.pass, "{:?}", rep);
        // corner Cauchy data reproduce (h, d_t h)|_S
        let (h_s, hv_s) = corner_cauchy_data(&g, &frame, &st, &tau).unwrap();
        let h0 = gr.slice_of(&h, 0);
        let hv0 = gr.slice_of(&hv, 0);
        let dval = h_s.sub(&h0).max_norm();
        assert!(dval < 1e-10, "value reconstruction error {}", dval);
        let dvel = hv_s.sub(&hv0).max_norm();
        // velocities involve first differences: stencil-order agreement
        assert!(dvel < 5e-3, "velocity reconstruction error {}", dvel);
    }

    #[test]
    fn mismatched_data_fails_with_matching_residual() {
        let (gr, g, frame, st, gc) = setup(16, 0.0, None);
        let (mut tau, _h, _hv) =
            target::random_admissible(&g, &frame, &st, &gc, 3, 0.05).unwrap();
        // inject a 1e-3 defect into gamma' at the corner (trace-free part)
        let nsig = gr.sigma_len();
        for sig in 0..nsig {
            let sp = gr.sigma_to_spatial(sig);
            let v = tau.gamma_p.sym(1, 1, sp) + 1e-3;
            tau.gamma_p.sym_set(1, 1, sp, v);
        }
        let tol = CornerTolerances::for_grid(&gr, 1.0);
        let rep = corner_compatibility_check(&g, &frame, &tau, tol).unwrap();
        // the defect lands in the trace at n=2 (Sigma is one-dimensional),
        // which moves u and the lapse-shift match
        assert!(!rep.pass, "{:?}", rep);
        let worst = rep
            .lapse_shift
            .max(rep.c0_metric)
            .max(rep.x1_formula);
        assert!(worst > 2e-4 && worst < 5e-3, "residual {}", worst);
    }

    #[test]
    fn u_velocity_examples() {
        // flat corner, alpha' = a: coefficient degenerates to zero
        let (gr, g, frame, _st, _gc) = setup(12, 0.0, None);
        let mut tau = TargetData::zero(&gr);
        for sig in 0..gr.sigma_len() {
            tau.alpha_p.set(0, sig, 0.7);
        }
        let v = corner_u_velocity(&g, &frame, &tau).unwrap();
        assert!(v.max_norm() < 1e-12, "flat corner coupling {}", v.max_norm());

        // curved corner with H_Sigma ~ 0.1: d(uvel)/d(alpha') = -H_Sigma/(n-1)
        let (gr2, g2, frame2, _st2, _gc2) = setup(16, 0.0, Some(0.1));
        let mut tau2 = TargetData::zero(&gr2);
        let a = 0.3;
        for sig in 0..gr2.sigma_len() {
            tau2.alpha_p.set(0, sig, a);
        }
        let v2 = corner_u_velocity(&g2, &frame2, &tau2).unwrap();
        for sig in 0..gr2.sigma_len() {
            let want = -frame2.h_sigma.get(0, sig) * a / (gr2.n as f64 - 1.0);
            assert!(
                (v2.get(0, sig) - want).abs() < 1e-10,
                "{} vs {}",
                v2.get(0, sig),
                want
            );
        }

        // tr_Sigma kappa' = c at the flat corner: c/(n-1)
        let (gr3, g3, frame3, _st3, _gc3) = setup(12, 0.0, None);
        let mut tau3 = TargetData::zero(&gr3);
        let c = 0.4;
        for sp in 0..gr3.spatial_len() {
            tau3.kappa_p.sym_set(1, 1, sp, c);
        }
        let v3 = corner_u_velocity(&g3, &frame3, &tau3).unwrap();
        for sig in 0..gr3.sigma_len() {
            assert!((v3.get(0, sig) - c).abs() < 1e-12, "{}", v3.get(0, sig));
        }
    }

    #[test]
    fn alpha_prime_sensitivity_coefficient() {
        // d(uvel)/d(alpha') = [-H_Sigma + (a/sqrt(1+a^2)) tr_Sigma K]/(n-1)
        let (gr, g, frame, _st, _gc) = setup(16, 0.5, Some(0.08));
        let mut tau_a = TargetData::zero(&gr);
        for sig in 0..gr.sigma_len() {
            tau_a.alpha_p.set(0, sig, 1.0);
        }
        let v = corner_u_velocity(&g, &frame, &tau_a).unwrap();
        for sig in 0..gr.sigma_len() {
            let a = frame.alpha.get(0, sig);
            let want = (-frame.h_sigma.get(0, sig)
                + a / (1.0 + a * a).sqrt() * frame.tr_sigma_k.get(0, sig))
                / (gr.n as f64 - 1.0);
            assert!((v.get(0, sig) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn alpha_only_difference_moves_mixed_components() {
        // two data sets differing only in the corner angle induce initial
        // data differing only in the h_{01}-type components at Sigma: build
        // them via ambient fields whose difference is the angle deformation
        let (gr, g, frame, st, gc) = setup(16, 0.0, None);
        // ambient deformation supported at the corner with h_01 only
        let h_angle = TensorField::from_fn(Rank::Sym2(3), gr.bulk_domain(), |cidx, x| {
            if cidx == crate::field::sym_index(3, 0, 1) {
                -0.1 * crate::metric::bump((x[1] * x[1] + x[2] * x[2]).sqrt() / 0.4)
            } else {
                0.0
            }
        });
        let zero_v = TensorField::zeros(Rank::Sym2(3), gr.bulk_domain());
        let tau1 = target::induced_from_ambient(&g, &frame, &st, &gc, &zero_v, &zero_v).unwrap();
        let tau2 = target::induced_from_ambient(&g, &frame, &st, &gc, &h_angle, &zero_v).unwrap();
        // the two alpha' differ where the bump meets Sigma
        let mut da = tau2.alpha_p.clone();
        da.add_scaled(&tau1.alpha_p, -1.0);
        assert!(da.max_norm() > 1e-3, "alpha' difference {}", da.max_norm());
        // reconstruct both: values differ only in the 0-row components
        let (h1, _hv1) = corner_cauchy_data(&g, &frame, &st, &tau1).unwrap();
        let (h2, _hv2) = corner_cauchy_data(&g, &frame, &st, &tau2).unwrap();
        let diff = h2.sub(&h1);
        for i in 1..3 {
            for j in i..3 {
                let k = crate::field::sym_index(3, i, j);
                assert!(diff.comp(k).iter().all(|v| v.abs() < 1e-14));
            }
        }
        assert!(diff.max_norm() > 1e-3);
    }
}
