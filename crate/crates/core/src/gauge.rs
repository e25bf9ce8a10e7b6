//! The harmonic-gauge system: the background gauge field, its
//! linearization, the gauge wave equations with Cauchy data determined by
//! the target data through the linearized constraints, the split
//! `V' = V'_F + W'_h` (plus the stage corrections `X'`), the propagation
//! check, and harmonic-coordinate construction.

use crate::calculus::{self, GeomCache};
use crate::error::{numerical, Result};
use crate::field::{Rank, TensorField};
use crate::frame::BoundaryFrame;
use crate::grid::CornerGrid;
use crate::metric::MetricField;
use crate::slice;
use crate::smallmat;
use crate::wave::{self, Dirichlet, LowerOrder, Source, WaveProblem, WaveSolution};

/// Background gauge field `V^c = box_g x^c` as a vector on the bulk domain.
pub fn gauge_field(g: &MetricField) -> Result<TensorField> {
    let grid = &g.grid;
    let d = grid.dim();
    let cache = GeomCache::spacetime(g)?;
    let mut out = TensorField::zeros(Rank::Vector(d), grid.bulk_domain());
    for c in 0..d {
        let coord = TensorField::from_fn(Rank::Scalar, grid.bulk_domain(), |_, x| x[c]);
        let b = calculus::box_scalar(&cache, &coord);
        out.comp_mut(c).copy_from_slice(b.comp(0));
    }
    Ok(out)
}

/// Gauge Cauchy data determined by the target data.
pub struct GaugeCauchy {
    /// V' on S (vector components).
    pub v_s: TensorField,
    /// time derivative of the vector components of V' on S.
    pub v_s_dot: TensorField,
    /// V' on C.
    pub v_c: TensorField,
}

/// Determine `(V'|_S, d_t V'|_S, V'|_C)` from the target data. The time
/// derivative is reconstructed from the linearized constraint identity: the
/// combination `delta* V'(nu) - 1/2 (div V') nu` is determined along S by
/// the data, and with `V'|_S` given this pins the normal derivative.
#[allow(clippy::too_many_arguments)]
pub fn gauge_cauchy_data(
    g: &MetricField,
    frame: &BoundaryFrame,
    st_cache: &GeomCache,
    f_bulk: &TensorField,
    gamma_p: &TensorField,
    kappa_p: &TensorField,
    nu_p: &TensorField,
    v_s_data: &TensorField,
    v_c_data: &TensorField,
    h_s: &TensorField,
) -> Result<GaugeCauchy> {
    let grid = &g.grid;
    let d = grid.dim();
    let n = grid.n;
    let nsp = grid.spatial_len();

    // slice geometry pieces of the constraint identity
    let gs_cache = GeomCache::intrinsic(n, frame.gamma_s.clone(), false)?;
    let ev = slice::slice_energy_variation(&gs_cache, &frame.k_s, gamma_p, kappa_p);

    // background pieces at t = 0: Einstein tensor and Q = Ric + delta* V
    let ric0 = if g.time_dependent {
        grid.slice_of(&st_cache.ricci, 0)
    } else {
        st_cache.ricci.clone()
    };
    let scal0: Vec<f64> = (0..nsp)
        .map(|sp| st_cache.scal[g.mnode_of_bulk(0, sp)])
        .collect();
    let vbg = gauge_field(g)?;
    let dstar_v = calculus::killing(st_cache, &vbg);
    let dstar_v0 = grid.slice_of(&dstar_v, 0);

    // lowered V' on S and its tangential covariant derivative pieces
    let mut vl = TensorField::zeros(Rank::Vector(d), grid.spatial_domain());
    for b in 0..d {
        for sp in 0..nsp {
            let m = g.mnode_of_bulk(0, sp);
            let mut s = 0.0;
            for c in 0..d {
                s += g.comp.sym(b, c, m) * v_s_data.get(c, sp);
            }
            vl.set(b, sp, s);
        }
    }
    let dvl = calculus::all_derivs(&vl); // spatial axes only

    let f0 = grid.slice_of(f_bulk, 0);

    let mut v_s_dot = TensorField::zeros(Rank::Vector(d), grid.spatial_domain());
    for sp in 0..nsp {
        let m = g.mnode_of_bulk(0, sp);
        let gi = smallmat::inv(&g.matrix(m), d).expect("metric invertible");
        let nu: Vec<f64> = (0..d).map(|a| frame.nu_s.get(a, m)).collect();
        let nul: Vec<f64> = (0..d)
            .map(|b| (0..d).map(|c| g.comp.sym(b, c, m) * nu[c]).sum())
            .collect();

        // known part of LHS with d_t V'_lowered set to zero
        // T0_ab = nabla_a Vl_b with the time derivative dropped
        let mut t0 = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                let da = if a == 0 { 0.0 } else { dvl[a - 1][b][sp] };
                let mut s = da;
                if !st_cache.flat {
                    for c in 0..d {
                        s -= st_cache.gamma_at(c, a, b, g.mnode_of_bulk(0, sp)) * vl.get(c, sp);
                    }
                }
                t0[a * d + b] = s;
            }
        }
        let mut known = vec![0.0; d];
        for b in 0..d {
            let mut s = 0.0;
            for a in 0..d {
                s += 0.5 * nu[a] * (t0[b * d + a] + t0[a * d + b]);
            }
            let mut div0 = 0.0;
            for a in 0..d {
                for c in 0..d {
                    div0 += gi[a * d + c] * t0[a * d + c];
                }
            }
            known[b] = s - 0.5 * nul[b] * div0;
        }

        // coefficient matrix for x = d_t Vl
        let mut mmat = vec![0.0; d * d];
        for b in 0..d {
            for mu in 0..d {
                let mut v = 0.0;
                if b == 0 {
                    v += 0.5 * nu[mu];
                }
                if b == mu {
                    v += 0.5 * nu[0];
                }
                v -= 0.5 * nul[b] * gi[mu];
                mmat[b * d + mu] = v;
            }
        }

        // RHS of the constraint identity
        // -[E(nu)]'_{data} reconstructed from (e_nn, e_ni)
        let e_ni: Vec<f64> = (0..n).map(|i| ev.e_ni.get(i, sp)).collect();
        let e_nn = ev.e_nn.get(0, sp);
        let mut e_form = vec![0.0; d];
        for i in 0..n {
            e_form[i + 1] = e_ni[i];
        }
        let tang: f64 = (1..d).map(|i| e_form[i] * nu[i]).sum();
        e_form[0] = (e_nn - tang) / nu[0];

        // background Einstein tensor applied to nu'
        let mut e_nu_p = vec![0.0; d];
        for b in 0..d {
            let mut s = 0.0;
            for a in 0..d {
                s += (ric0.sym(b, a, sp) - 0.5 * scal0[sp] * g.comp.sym(b, a, m)) * nu_p.get(a, sp);
            }
            e_nu_p[b] = s;
        }

        // [F - 1/2 (tr F) g](nu) and the Q-terms
        let mut trf = 0.0;
        for a in 0..d {
            for b in 0..d {
                trf += gi[a * d + b] * f0.sym(a, b, sp);
            }
        }
        let mut q = vec![0.0; d * d];
        let mut trq = 0.0;
        let mut hq = 0.0;
        for a in 0..d {
            for b in 0..d {
                q[a * d + b] = ric0.sym(a, b, sp) + dstar_v0.sym(a, b, sp);
            }
        }
        for a in 0..d {
            for b in 0..d {
                trq += gi[a * d + b] * q[a * d + b];
                for c in 0..d {
                    for e in 0..d {
                        hq += gi[a * d + c] * gi[b * d + e] * h_s.sym(c, e, sp) * q[a * d + b];
                    }
                }
            }
        }
        let mut rhs = vec![0.0; d];
        for b in 0..d {
            let mut fnu = 0.0;
            for a in 0..d {
                fnu += f0.sym(b, a, sp) * nu[a];
            }
            let mut hnu = 0.0;
            for a in 0..d {
                hnu += h_s.sym(b, a, sp) * nu[a];
            }
            rhs[b] = -e_form[b] + e_nu_p[b] + fnu - 0.5 * trf * nul[b] + 0.5 * hq * nul[b]
                - 0.5 * trq * hnu
                - known[b];
        }
        let x = smallmat::solve(&mmat, &rhs, d)
            .ok_or_else(|| crate::Error::Numerical("degenerate gauge data system".into()))?;
        // raise: d_t V'^c = g^{c mu} x_mu (static background lowering)
        for c in 0..d {
            let mut s = 0.0;
            for mu in 0..d {
                s += gi[c * d + mu] * x[mu];
            }
            v_s_dot.set(c, sp, s);
        }
    }

    Ok(GaugeCauchy { v_s: v_s_data.clone(), v_s_dot, v_c: v_c_data.clone() })
}

/// Lower-order terms for one-form wave equations
/// `-1/2[box w + ric_coef Ric(w)] (+ 1/2 nabla_V w) = rhs`, brought to the
/// kernel form `-1/2 box_scalar w + P = F`.
pub struct OneFormWaveLower<'a> {
    pub cache: &'a GeomCache,
    /// Multiplies `Ric_a^c w_c` inside the bracket (1.0 for the gauge and
    /// boundary systems, 0.0 to drop).
    pub ric_coef: f64,
    /// Background gauge vector for the `+1/2 nabla_V w` term (bulk only).
    pub with_gauge_transport: bool,
}

impl<'a> LowerOrder for OneFormWaveLower<'a> {
    fn eval(
        &self,
        it: usize,
        w: &[Vec<f64>],
        v: &[Vec<f64>],
        dw: &[Vec<Vec<f64>>],
        out: &mut [Vec<f64>],
    ) {
        let cache = self.cache;
        let d = cache.dim;
        if cache.flat {
            return;
        }
        let nsp = w[0].len();
        let mbase = if cache.len() == nsp { 0 } else { it * nsp };
        for mu in 0..d {
            for sp in 0..nsp {
                let m = mbase + sp;
                // X_mu = boxT w_mu - box_scalar w_mu (first-order in w)
                let mut x = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        let gab = cache.ginv.sym(a, b, m);
                        if gab == 0.0 {
                            continue;
                        }
                        let mut t = 0.0;
                        for c in 0..d {
                            let daw_c = if a == 0 { v[c][sp] } else { dw[a - 1][c][sp] };
                            let dbw_c = if b == 0 { v[c][sp] } else { dw[b - 1][c][sp] };
                            let _ = daw_c;
                            t += cache.dgamma_at(a, c, b, mu, m) * w[c][sp]
                                + cache.gamma_at(c, b, mu, m) * if a == 0 { v[c][sp] } else { dw[a - 1][c][sp] }
                                + cache.gamma_at(c, a, mu, m) * dbw_c;
                            // - G^c_{a mu} G^e_{bc} w_e term
                            for e in 0..d {
                                t -= cache.gamma_at(c, a, mu, m)
                                    * cache.gamma_at(e, b, c, m)
                                    * w[e][sp];
                            }
                        }
                        x -= gab * t;
                    }
                }
                // + c^c G^e_{c mu} w_e
                for c in 0..d {
                    for e in 0..d {
                        x += cache.cgamma_at(c, m) * cache.gamma_at(e, c, mu, m) * w[e][sp];
                    }
                }
                let mut p = -0.5 * x;
                // -1/2 ric_coef Ric_mu^c w_c
                if self.ric_coef != 0.0 {
                    let mut r = 0.0;
                    for a in 0..d {
                        for c in 0..d {
                            r += cache.ginv.sym(a, c, m) * cache.ricci.sym(mu, a, m) * w[c][sp];
                        }
                    }
                    p -= 0.5 * self.ric_coef * r;
                }
                // +1/2 (nabla_V w)_mu with V = -cgamma
                if self.with_gauge_transport {
                    let mut tv = 0.0;
                    for a in 0..d {
                        let va = -cache.cgamma_at(a, m);
                        if va == 0.0 {
                            continue;
                        }
                        let daw = if a == 0 { v[mu][sp] } else { dw[a - 1][mu][sp] };
                        let mut cov = daw;
                        for c in 0..d {
                            cov -= cache.gamma_at(c, a, mu, m) * w[c][sp];
                        }
                        tv += va * cov;
                    }
                    p += 0.5 * tv;
                }
                out[mu][sp] += p;
            }
        }
    }
}

/// Zeroth-order scalar term `P(u) = coef * scal * u` (the boundary scalar
/// equation's curvature term in kernel form).
pub struct ScalarCurvatureLower<'a> {
    pub cache: &'a GeomCache,
    pub coef: f64,
}

impl<'a> LowerOrder for ScalarCurvatureLower<'a> {
    fn eval(
        &self,
        it: usize,
        w: &[Vec<f64>],
        _v: &[Vec<f64>],
        _dw: &[Vec<Vec<f64>>],
        out: &mut [Vec<f64>],
    ) {
        if self.cache.flat {
            return;
        }
        let nsp = w[0].len();
        let mbase = if self.cache.len() == nsp { 0 } else { it * nsp };
        for sp in 0..nsp {
            out[0][sp] += self.coef * self.cache.scal[mbase + sp] * w[0][sp];
        }
    }
}

/// The gauge split state.
pub struct GaugeState {
    /// V'_F as lowered one-form components, full history.
    pub v_f: WaveSolution,
    /// Accumulated corrections W'_h + X'_h (lowered, zero-data solves).
    pub corrections: Option<TensorField>,
}

impl GaugeState {
    /// Total V' = V'_F + W'_h + X'_h, lowered components.
    pub fn total(&self) -> TensorField {
        let mut out = self.v_f.w.clone();
        if let Some(c) = &self.corrections {
            out.add_scaled(c, 1.0);
        }
        out
    }
}

/// Lower a vector field on some domain with the metric sampled per node.
pub fn lower_on_slice(g: &MetricField, it: usize, v: &TensorField) -> TensorField {
    let grid = &g.grid;
    let d = grid.dim();
    let nsp = grid.spatial_len();
    let mut out = TensorField::zeros(Rank::Vector(d), v.dom.clone());
    for b in 0..d {
        for sp in 0..nsp {
            let m = g.mnode_of_bulk(it, sp);
            let mut s = 0.0;
            for c in 0..d {
                s += g.comp.sym(b, c, m) * v.get(c, sp);
            }
            out.set(b, sp, s);
        }
    }
    out
}

/// Lower a vector field on the boundary domain.
pub fn lower_on_boundary(g: &MetricField, v: &TensorField) -> TensorField {
    let grid = &g.grid;
    let d = grid.dim();
    let nsig = grid.sigma_len();
    let nt = grid.steps + 1;
    let mut out = TensorField::zeros(Rank::Vector(d), grid.boundary_domain());
    for b in 0..d {
        for it in 0..nt {
            for sig in 0..nsig {
                let m = g.mnode_of_bulk(it, grid.sigma_to_spatial(sig));
                let mut s = 0.0;
                for c in 0..d {
                    s += g.comp.sym(b, c, m) * v.get(c, it * nsig + sig);
                }
                out.set(b, it * nsig + sig, s);
            }
        }
    }
    out
}

/// Solve the gauge wave equation for V'_F:
/// `-1/2[box V' + Ric(V')] + 1/2 nabla_V V' = beta_g F`, lowered components,
/// with the Cauchy data from `gauge_cauchy_data` and Dirichlet data on C.
pub fn solve_v_f(
    g: &MetricField,
    st_cache: &GeomCache,
    f_bulk: &TensorField,
    cauchy: &GaugeCauchy,
) -> Result<WaveSolution> {
    let grid = &g.grid;
    let d = grid.dim();
    let src = calculus::bianchi(st_cache, f_bulk);
    let lower = OneFormWaveLower { cache: st_cache, ric_coef: 1.0, with_gauge_transport: true };
    // data: lowered
    let v_s_l = lower_on_slice(g, 0, &cauchy.v_s);
    let v_c_l = lower_on_boundary(g, &cauchy.v_c);
    // lowered time derivative (static backgrounds: lowering commutes)
    let v_s_dot_l = lower_on_slice(g, 0, &cauchy.v_s_dot);
    // boundary velocity: finite difference of the series in the kernel's
    // Hermite interpolation needs a velocity series; use time differences
    let v_c_vel = time_derivative_series(&v_c_l, grid);
    let sol = wave::solve_wave(
        &WaveProblem {
            cache: st_cache,
            comps: d,
            source: Source::Field(&src),
            lower: Some(&lower),
            init_value: &v_s_l,
            init_velocity: &v_s_dot_l,
            dirichlet: Dirichlet::FaceSeries { axis: 1, value: &v_c_l, velocity: &v_c_vel },
            compat_tol: 1e-6,
        },
        &grid.bulk_domain(),
    )?;
    Ok(sol)
}

/// Time-difference series of a boundary-domain field (used as the velocity
/// channel of Dirichlet data given only as a value series).
pub fn time_derivative_series(f: &TensorField, _grid: &CornerGrid) -> TensorField {
    let mut out = TensorField::zeros(f.rank, f.dom.clone());
    for c in 0..f.comps() {
        let mut plane = vec![0.0; f.nodes()];
        crate::stencil::diff1(&f.dom, f.comp(c), 0, &mut plane);
        out.comp_mut(c).copy_from_slice(&plane);
    }
    out
}

/// Solve a zero-data gauge correction equation with the given one-form
/// source: `-1/2[box w + Ric(w)] + 1/2 nabla_V w = src`.
pub fn solve_gauge_correction(
    g: &MetricField,
    st_cache: &GeomCache,
    src: &TensorField,
) -> Result<WaveSolution> {
    let grid = &g.grid;
    let d = grid.dim();
    let lower = OneFormWaveLower { cache: st_cache, ric_coef: 1.0, with_gauge_transport: true };
    let zero_v = TensorField::zeros(Rank::Vector(d), grid.spatial_domain());
    wave::solve_wave(
        &WaveProblem {
            cache: st_cache,
            comps: d,
            source: Source::Field(src),
            lower: Some(&lower),
            init_value: &zero_v,
            init_velocity: &zero_v.clone(),
            dirichlet: Dirichlet::Zero,
            compat_tol: 1e-6,
        },
        &grid.bulk_domain(),
    )
}

/// Source of the W'_h equation:
/// `beta'_h(Ric_g) - beta_g(1/2 L_V h) + 1/2 nabla_V (V'_h)`, identically
/// zero at flat backgrounds and at any background with `Ric = V = 0`.
pub fn w_source(
    g: &MetricField,
    st_cache: &GeomCache,
    h: &TensorField,
) -> Result<TensorField> {
    let grid = &g.grid;
    let d = grid.dim();
    if st_cache.flat {
        return Ok(TensorField::zeros(Rank::Vector(d), grid.bulk_domain()));
    }
    // ambient Ricci broadcast to the bulk domain
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let mut ric_bulk = TensorField::zeros(Rank::Sym2(d), grid.bulk_domain());
    for k in 0..ric_bulk.comps() {
        for it in 0..nt {
            for sp in 0..nsp {
                let m = g.mnode_of_bulk(it, sp);
                let v = st_cache.ricci.get(k, m);
                ric_bulk.set(k, it * nsp + sp, v);
            }
        }
    }
    let mut src = calculus::bianchi_variation(st_cache, h, &ric_bulk);
    // - beta(1/2 L_V h)
    let mut vfield = TensorField::zeros(Rank::Vector(d), grid.bulk_domain());
    for c in 0..d {
        for it in 0..nt {
            for sp in 0..nsp {
                let m = g.mnode_of_bulk(it, sp);
                vfield.set(c, it * nsp + sp, -st_cache.cgamma_at(c, m));
            }
        }
    }
    let lie = calculus::lie_sym2(&vfield, h);
    let beta_lie = calculus::bianchi(st_cache, &lie.scaled(0.5));
    src.add_scaled(&beta_lie, -1.0);
    // + 1/2 nabla_V (V'_h) with V'_h = lin_gauge(h) (lowered for the form)
    let vph = calculus::lin_gauge_vector(st_cache, h);
    // lower
    let mut vph_l = TensorField::zeros(Rank::Vector(d), grid.bulk_domain());
    for b in 0..d {
        for it in 0..nt {
            for sp in 0..nsp {
                let m = g.mnode_of_bulk(it, sp);
                let mut s = 0.0;
                for c in 0..d {
                    s += g.comp.sym(b, c, m) * vph.get(c, it * nsp + sp);
                }
                vph_l.set(b, it * nsp + sp, s);
            }
        }
    }
    let grad = calculus::cov_grad_oneform(st_cache, &vph_l);
    for mu in 0..d {
        let plane = src.comp_mut(mu);
        for it in 0..nt {
            for sp in 0..nsp {
                let node = it * nsp + sp;
                let m = g.mnode_of_bulk(it, sp);
                let mut s = 0.0;
                for a in 0..d {
                    s += -st_cache.cgamma_at(a, m) * grad[a * d + mu][node];
                }
                plane[node] += 0.5 * s;
            }
        }
    }
    // note: bianchi/bianchi_variation return one-forms already; the W'
    // equation is solved in lowered components throughout
    Ok(src)
}

/// Gauge residual report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GaugeResidualReport {
    pub sup_norm: f64,
    pub slice_norms: Vec<f64>,
    pub threshold: f64,
    pub pass: bool,
}

/// Sup-norm of the linearized gauge field of a solved deformation over the
/// slab, with per-slice norms; PASS iff below the threshold.
pub fn gauge_propagation_check(
    g: &MetricField,
    st_cache: &GeomCache,
    h: &TensorField,
    threshold: f64,
) -> GaugeResidualReport {
    let grid = &g.grid;
    let vph = calculus::lin_gauge_vector(st_cache, h);
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let mut slice_norms = Vec::with_capacity(nt);
    let mut sup = 0.0f64;
    for it in 0..nt {
        let mut m = 0.0f64;
        for c in 0..vph.comps() {
            for sp in 0..nsp {
                m = m.max(vph.get(c, it * nsp + sp).abs());
            }
        }
        slice_norms.push(m);
        sup = sup.max(m);
    }
    GaugeResidualReport { sup_norm: sup, slice_norms, threshold, pass: sup <= threshold }
}

/// Harmonic coordinates: solve `box_g y^a = 0` with `y^a = x^a` data by
/// solving for the deviation `z = y - x` (zero data, source `1/2 V^a`),
/// then pull the metric back through the coordinate change.
pub fn harmonic_coordinates(g: &MetricField) -> Result<(TensorField, MetricField)> {
    let grid = &g.grid;
    let d = grid.dim();
    let st_cache = GeomCache::spacetime(g)?;
    let vbg = gauge_field(g)?;
    // -1/2 box z = 1/2 V  (componentwise scalar solves)
    let src = vbg.scaled(0.5);
    let zero_v = TensorField::zeros(Rank::Vector(d), grid.spatial_domain());
    let sol = wave::solve_wave(
        &WaveProblem {
            cache: &st_cache,
            comps: d,
            source: Source::Field(&src),
            lower: None,
            init_value: &zero_v,
            init_velocity: &zero_v.clone(),
            dirichlet: Dirichlet::Zero,
            compat_tol: 1e-8,
        },
        &grid.bulk_domain(),
    )?;
    // y = x + z
    let mut y = TensorField::from_fn(Rank::Vector(d), grid.bulk_domain(), |c, x| x[c]);
    y.add_scaled(&sol.w, 1.0);

    // Jacobian J^a_b = d y^a / d x^b on the bulk domain
    let dy = calculus::all_derivs(&y);
    let bulk = grid.bulk_domain();
    let len = bulk.len();
    // check nondegeneracy
    for node in 0..len {
        let mut jm = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                jm[a * d + b] = dy[b][a][node];
            }
        }
        let det = smallmat::det(&jm, d);
        if (det - 1.0).abs() > 0.5 {
            return numerical(format!("harmonic coordinate map degenerate (det J = {})", det));
        }
    }

    // pullback: gt_{mu nu}(y_node) = g_{ab}(x(y)) (dx/dy)^a_mu (dx/dy)^b_nu
    // with x(y) found by the contraction fixed point x <- x - (y(x) - y*).
    let mut gt = MetricField::from_fn(grid, true, |_, _, _| 0.0);
    for (node, idx) in bulk.iter_indices().enumerate() {
        let ystar = bulk.coords(&idx);
        let mut x = ystar.clone();
        for _ in 0..50 {
            let mut yx = vec![0.0; d];
            let mut ok = true;
            for c in 0..d {
                match crate::metric::interp_cubic(&bulk, y.comp(c), &x) {
                    Ok(v) => yx[c] = v,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            let mut delta = 0.0f64;
            for c in 0..d {
                let corr = yx[c] - ystar[c];
                x[c] -= corr;
                delta = delta.max(corr.abs());
            }
            // keep the sample point inside the chart
            for c in 0..d {
                let lo = bulk.origins[c];
                let hi = lo + bulk.spacings[c] * (bulk.dims[c] - 1) as f64;
                x[c] = x[c].clamp(lo.min(hi), lo.max(hi));
            }
            if delta < 1e-13 {
                break;
            }
        }
        // J at x by interpolation, inverted
        let mut jm = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                jm[a * d + b] = crate::metric::interp_cubic(&bulk, &dy[b][a], &x)?;
            }
        }
        let jinv = smallmat::inv(&jm, d)
            .ok_or_else(|| crate::Error::Numerical("jacobian singular".into()))?;
        // g at x
        for mu in 0..d {
            for nuu in mu..d {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        let gab = if g.time_dependent {
                            crate::metric::interp_cubic(
                                &g.comp.dom,
                                g.comp.comp(crate::field::sym_index(d, a, b)),
                                &x,
                            )?
                        } else {
                            crate::metric::interp_cubic(
                                &g.comp.dom,
                                g.comp.comp(crate::field::sym_index(d, a, b)),
                                &x[1..],
                            )?
                        };
                        s += gab * jinv[a * d + mu] * jinv[b * d + nuu];
                    }
                }
                gt.comp.sym_set(mu, nuu, node, s);
            }
        }
    }
    Ok((y, gt))
}
