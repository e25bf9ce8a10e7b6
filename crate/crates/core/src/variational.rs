//! The uniqueness mechanism as numerical checks: the formal self-adjointness
//! defect of the divergence-gauged linearized Einstein operator over
//! windowed deformation classes, the slice symplectic form, and the
//! zero-data stability probe of the solver.

use crate::boundary::Setup;
use crate::calculus::{self, GeomCache};
use crate::error::{validation, Result};
use crate::field::{Rank, TensorField};
use crate::ibcvp::{self, SolveOptions};
use crate::target::TargetData;
use crate::variations;

/// C^3 ramp: 0 for u <= 0, 1 for u >= 1.
pub fn ramp(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * u * (35.0 - 84.0 * u + 70.0 * u * u - 20.0 * u * u * u)
    }
}

/// A windowed random deformation of the self-adjointness class: vanishes to
/// high order near the chosen time end and near every spatial face.
pub fn windowed_deformation(
    grid: &crate::grid::CornerGrid,
    seed: u64,
    amplitude: f64,
    vanish_at_start: bool,
) -> TensorField {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let ncomp = d * (d + 1) / 2;
    let mut modes = Vec::new();
    for _ in 0..ncomp {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let kt: f64 = rng.gen_range(0.5..1.5);
        let k1: f64 = rng.gen_range(0.5..1.5);
        let k2: f64 = rng.gen_range(0.5..1.5);
        modes.push((a, kt, k1, k2));
    }
    let t_max = grid.t_max;
    let l1 = grid.l1;
    let la = grid.la;
    // fixed dead zones: exactly zero in a resolution-independent margin of
    // the constrained ends (keeps the deformation identical across nested
    // grids in convergence studies)
    let ddt = 0.2 * t_max;
    let ddx = 0.12 * l1.min(la);
    TensorField::from_fn(Rank::Sym2(d), grid.bulk_domain(), move |c, x| {
        let (a, kt, k1, k2) = modes[c];
        let tw = if vanish_at_start {
            ramp((x[0] - ddt) / (0.35 * t_max))
        } else {
            ramp((t_max - x[0] - ddt) / (0.35 * t_max))
        };
        // spatial window vanishing near x1 faces and xA faces
        let w1 = ramp((x[1] + l1 - ddx) / (0.3 * l1)) * ramp((-x[1] - ddx) / (0.3 * l1));
        let mut w = tw * w1;
        for xa in x.iter().skip(2) {
            w *= ramp((xa + la / 2.0 - ddx) / (0.3 * la))
                * ramp((la / 2.0 - xa - ddx) / (0.3 * la));
        }
        amplitude * a * (kt * x[0] + 0.3).sin() * (k1 * x[1]).cos() * (k2 * x[2] + 0.2).sin() * w
    })
}

fn band_max(_grid: &crate::grid::CornerGrid, f: &TensorField, at_start: bool, cells: usize) -> f64 {
    let dom = f.dom.clone();
    let mut worst = 0.0f64;
    for (node, idx) in dom.iter_indices().enumerate() {
        let mut in_band = false;
        if at_start {
            if idx[0] < cells {
                in_band = true;
            }
        } else if idx[0] + cells >= dom.dims[0] {
            in_band = true;
        }
        for a in 1..dom.ndim() {
            if idx[a] < cells || idx[a] + cells >= dom.dims[a] {
                in_band = true;
            }
        }
        if in_band {
            for c in 0..f.comps() {
                worst = worst.max(f.get(c, node).abs());
            }
        }
    }
    worst
}

/// `|int <Lt h, k> dv - int <h, Lt k> dv|` with the Lorentzian pairing.
/// `h` must carry zero data at the initial end and the spatial faces, `k`
/// at the final end; violations are rejected.
pub fn selfadjoint_defect(setup: &Setup, h: &TensorField, k: &TensorField) -> Result<f64> {
    let grid = &setup.grid;
    let scale = h.max_norm().max(k.max_norm()).max(1e-300);
    let hb = band_max(grid, h, true, 2);
    let kb = band_max(grid, k, false, 2);
    if hb > 1e-10 * scale {
        return validation(format!("h violates the initial/face window (band max {})", hb));
    }
    if kb > 1e-10 * scale {
        return validation(format!("k violates the final/face window (band max {})", kb));
    }
    Ok(selfadjoint_pairing_defect(setup, h, k))
}

/// The raw pairing defect without the class checks (used by the negative
/// control).
pub fn selfadjoint_pairing_defect(setup: &Setup, h: &TensorField, k: &TensorField) -> f64 {
    let st = &setup.st_cache;
    let lh = calculus::lin_einstein_gauged(st, h);
    let lk = calculus::lin_einstein_gauged(st, k);
    let a = lorentz_pairing_integral(setup, &lh, k);
    let b = lorentz_pairing_integral(setup, h, &lk);
    (a - b).abs()
}

/// `int <a, b> sqrt(-det g) dt dx` with `<a,b> = g^{ac} g^{bd} a_{ab} b_{cd}`.
pub fn lorentz_pairing_integral(setup: &Setup, a: &TensorField, b: &TensorField) -> f64 {
    let grid = &setup.grid;
    let d = grid.dim();
    let nsp = grid.spatial_len();
    let nt = grid.steps + 1;
    let vol: f64 = grid.dt * grid.dx.powi(grid.n as i32);
    let st = &setup.st_cache;
    let mut acc = 0.0;
    for it in 0..nt {
        // trapezoid in time
        let wt = if it == 0 || it == nt - 1 { 0.5 } else { 1.0 };
        for sp in 0..nsp {
            let node = it * nsp + sp;
            let m = setup.g.mnode_of_bulk(it, sp);
            let mut s = 0.0;
            for aa in 0..d {
                for bb in 0..d {
                    for cc in 0..d {
                        for dd in 0..d {
                            s += st.ginv.sym(aa, cc, m)
                                * st.ginv.sym(bb, dd, m)
                                * a.sym(aa, bb, node)
                                * b.sym(cc, dd, node);
                        }
                    }
                }
            }
            acc += wt * s * st.sqrt_det[m] * vol;
        }
    }
    acc
}

/// Slice symplectic form:
/// `Omega_S(h,k) = -int_S [ <K'_h, k> - <K'_k, h>
///   + 1/2( tr_S h (<K_S,k> + 2 (tr K)'_k) - tr_S k (<K_S,h> + 2 (tr K)'_h) ) ] dv_gamma`
/// at the time slice `it` (static backgrounds).
pub fn symplectic_form(
    setup: &Setup,
    h: &TensorField,
    hv: &TensorField,
    k: &TensorField,
    kv: &TensorField,
    it: usize,
) -> Result<f64> {
    let grid = &setup.grid;
    let n = grid.n;
    let h_sl = grid.slice_of(h, it);
    let hv_sl = grid.slice_of(hv, it);
    let k_sl = grid.slice_of(k, it);
    let kv_sl = grid.slice_of(kv, it);
    let kp_h = variations::slice_k_variation(&setup.g, &setup.frame, &h_sl, &hv_sl);
    let kp_k = variations::slice_k_variation(&setup.g, &setup.frame, &k_sl, &kv_sl);
    let gs_cache = GeomCache::intrinsic(n, setup.frame.gamma_s.clone(), false)?;
    let nsp = grid.spatial_len();
    let vol = grid.dx.powi(n as i32);
    let sdom = grid.spatial_domain();
    let mut wts = vec![1.0f64; nsp];
    for (flat, idx) in sdom.iter_indices().enumerate() {
        for a in 0..sdom.ndim() {
            if idx[a] == 0 || idx[a] + 1 == sdom.dims[a] {
                wts[flat] *= 0.5;
            }
        }
    }
    let mut acc = 0.0;
    for sp in 0..nsp {
        // slice restrictions of h and k
        let pair = |a: &TensorField, b: &TensorField| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for p in 0..n {
                        for q in 0..n {
                            s += gs_cache.ginv.sym(i, p, sp)
                                * gs_cache.ginv.sym(j, q, sp)
                                * a.sym(i, j, sp)
                                * b.sym(p + 1, q + 1, sp);
                        }
                    }
                }
            }
            s
        };
        let pair_ss = |a: &TensorField, b: &TensorField| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for p in 0..n {
                        for q in 0..n {
                            s += gs_cache.ginv.sym(i, p, sp)
                                * gs_cache.ginv.sym(j, q, sp)
                                * a.sym(i, j, sp)
                                * b.sym(p, q, sp);
                        }
                    }
                }
            }
            s
        };
        let tr_slice = |a: &TensorField| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += gs_cache.ginv.sym(i, j, sp) * a.sym(i + 1, j + 1, sp);
                }
            }
            s
        };
        let tr_s = |a: &TensorField| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += gs_cache.ginv.sym(i, j, sp) * a.sym(i, j, sp);
                }
            }
            s
        };
        // (tr K)'_h = tr K'_h - <h_S, K_S>
        let trk_p_h = tr_s(&kp_h) - pair(&setup.frame.k_s, h);
        let trk_p_k = tr_s(&kp_k) - pair(&setup.frame.k_s, k);
        let kh_k = pair_ss(&kp_h, &slice_spatial(&k_sl, n)) * 1.0;
        let kk_h = pair_ss(&kp_k, &slice_spatial(&h_sl, n)) * 1.0;
        let ks_k = pair(&setup.frame.k_s, k);
        let ks_h = pair(&setup.frame.k_s, h);
        let v = kh_k - kk_h
            + 0.5 * (tr_slice(h) * (ks_k + 2.0 * trk_p_k) - tr_slice(k) * (ks_h + 2.0 * trk_p_h));
        acc -= v * gs_cache.sqrt_det[sp] * vol * wts[sp];
    }
    // note: `pair(a_slice_tensor, b_bulk)` uses the bulk field's spatial
    // components at the current slice; h and k here are the slice
    // restrictions taken above
    let _ = (grid, nsp);
    Ok(acc)
}

fn slice_spatial(f_sl: &TensorField, n: usize) -> TensorField {
    // spatial block of a spacetime Sym2 slice as S-intrinsic Sym2(n)
    let mut out = TensorField::zeros(Rank::Sym2(n), f_sl.dom.clone());
    for i in 0..n {
        for j in i..n {
            for sp in 0..f_sl.nodes() {
                out.sym_set(i, j, sp, f_sl.sym(i + 1, j + 1, sp));
            }
        }
    }
    out
}

/// Zero-data decay probe: run the solver with zero target data and a seed
/// injected into the Step-0 initial state; report the amplification.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProbeReport {
    pub seed_amplitude: f64,
    pub final_norm: f64,
    pub growth_factor: f64,
    pub pass: bool,
}

pub fn uniqueness_probe(setup: &Setup, seed_amplitude: f64, seed: u64) -> Result<ProbeReport> {
    let grid = &setup.grid;
    if seed_amplitude == 0.0 {
        let tau = TargetData::zero(grid);
        let (h, _, _) = ibcvp::solve_linear_ibcvp(setup, &tau, &SolveOptions::default())?;
        return Ok(ProbeReport {
            seed_amplitude: 0.0,
            final_norm: h.w.max_norm(),
            growth_factor: if h.w.max_norm() == 0.0 { 0.0 } else { f64::INFINITY },
            pass: h.w.max_norm() == 0.0,
        });
    }
    // zero target data, seeded initial state: encode the seed through the
    // initial-data entries of the target (a compatible gamma'-bump away
    // from the corner)
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n;
    let mut tau = TargetData::zero(grid);
    let l1 = grid.l1;
    let la = grid.la;
    let phases: Vec<f64> =
        (0..n * (n + 1) / 2).map(|_| rng.gen_range(0.0..std::f64::consts::PI)).collect();
    let gamma_seed = TensorField::from_fn(Rank::Sym2(n), grid.spatial_domain(), |c, x| {
        let w = crate::metric::poly_window((x[0] + 0.5 * l1) / (0.3 * l1))
            * crate::metric::poly_window(x[1] / (0.3 * la));
        seed_amplitude * (1.3 * x[0] + phases[c]).sin() * w
    });
    tau.gamma_p = gamma_seed;
    let (h, _, _) = ibcvp::solve_linear_ibcvp(setup, &tau, &SolveOptions::default())?;
    // growth over the slab relative to the seed
    let final_norm = {
        let nsp = grid.spatial_len();
        let mut m = 0.0f64;
        for c in 0..h.w.comps() {
            for sp in 0..nsp {
                m = m.max(h.w.get(c, grid.steps * nsp + sp).abs());
            }
        }
        m
    };
    let growth = final_norm / seed_amplitude;
    Ok(ProbeReport {
        seed_amplitude,
        final_norm,
        growth_factor: growth,
        pass: growth <= 100.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CornerGrid, GridConfig};
    use crate::metric::minkowski_corner;

    fn flat_setup(nx: usize) -> Setup {
        let gr = CornerGrid::build(&GridConfig::with_resolution(2, nx, 0.5)).unwrap();
        Setup::new(minkowski_corner(0.0, &gr).unwrap()).unwrap()
    }

    #[test]
    fn defect_zero_for_zero_fields() {
        let setup = flat_setup(12);
        let z = TensorField::zeros(Rank::Sym2(3), setup.grid.bulk_domain());
        assert_eq!(selfadjoint_defect(&setup, &z, &z).unwrap(), 0.0);
    }

    #[test]
    fn defect_second_order_and_negative_control() {
        let run = |nx: usize| -> f64 {
            let setup = flat_setup(nx);
            let h = windowed_deformation(&setup.grid, 31, 0.5, true);
            let k = windowed_deformation(&setup.grid, 32, 0.5, false);
            selfadjoint_defect(&setup, &h, &k).unwrap()
        };
        let d1 = run(16);
        let d2 = run(32);
        println!("defects {:e} {:e}", d1, d2);
        assert!(d2 < 1e-2, "defect {}", d2);
        // with constant coefficients the centered interior stencils are
        // exactly self-adjoint for the plain quadrature, so the defect of
        // admissible pairs sits at rounding level; assert convergence only
        // above a rounding floor
        if d2 > 1e-11 {
            let order = (d1 / d2).log2();
            assert!(order > 1.5, "order {}", order);
        }

        // negative control: k with a tail at the final slice
        let setup = flat_setup(16);
        let h = windowed_deformation(&setup.grid, 31, 0.5, true);
        let mut k = windowed_deformation(&setup.grid, 32, 0.5, false);
        let nsp = setup.grid.spatial_len();
        let tail = TensorField::from_fn(Rank::Sym2(3), setup.grid.bulk_domain(), |_, x| {
            1e-2 * (x[0] / setup.grid.t_max).powi(2)
                * crate::metric::poly_window((x[1] + 0.5) / 0.3)
                * crate::metric::poly_window(x[2] / 0.3)
        });
        k.add_scaled(&tail, 1.0);
        assert!(selfadjoint_defect(&setup, &h, &k).is_err());
        let defect = selfadjoint_pairing_defect(&setup, &h, &k);
        let clean = run(16);
        assert!(defect > 20.0 * clean, "violation defect {} vs clean {}", defect, clean);
        let _ = nsp;
    }

    #[test]
    fn symplectic_antisymmetric_and_data_local() {
        let setup = flat_setup(16);
        let (h, hv) = crate::target::random_trig_deformation(&setup.grid, 41, 0.4);
        let (k, kv) = crate::target::random_trig_deformation(&setup.grid, 42, 0.4);
        let it = setup.grid.steps / 2;
        let whk = symplectic_form(&setup, &h, &hv, &k, &kv, it).unwrap();
        let wkh = symplectic_form(&setup, &k, &kv, &h, &hv, it).unwrap();
        assert!((whk + wkh).abs() < 1e-12 * whk.abs().max(1.0), "{} vs {}", whk, wkh);
        assert!(whk.abs() > 1e-6, "form unexpectedly degenerate");
        // zero initial data of h on the slice kills the form for any k
        let z = TensorField::zeros(Rank::Sym2(3), setup.grid.bulk_domain());
        let w0 = symplectic_form(&setup, &z, &z.clone(), &k, &kv, it).unwrap();
        assert_eq!(w0, 0.0);
    }

    #[test]
    fn symplectic_matches_hand_value() {
        // flat background, K_S = 0:
        // Omega = -int [<K'_h, k> - <K'_k, h> + tr h (tr K'_k) - tr k (tr K'_h)]
        // pick h with d_t h_11 = 2, else 0: K'_h = diag(1, 0); h = 0 on slice
        // pick k with k_11 = 1 constant, d_t k = 0, k(nu) = 0: K'_k = 0
        // => integrand = <K'_h, k> + tr h * 0 - tr k * (tr K'_h)
        //    = 1 * 1 - 1 * 1 ... evaluate directly
        let setup = flat_setup(12);
        let grid = &setup.grid;
        let h = TensorField::from_fn(Rank::Sym2(3), grid.bulk_domain(), |c, x| {
            if c == crate::field::sym_index(3, 1, 1) {
                2.0 * x[0]
            } else {
                0.0
            }
        });
        let hv = TensorField::from_fn(Rank::Sym2(3), grid.bulk_domain(), |c, _| {
            if c == crate::field::sym_index(3, 1, 1) {
                2.0
            } else {
                0.0
            }
        });
        let k = TensorField::from_fn(Rank::Sym2(3), grid.bulk_domain(), |c, _| {
            if c == crate::field::sym_index(3, 1, 1) {
                1.0
            } else {
                0.0
            }
        });
        let kv = TensorField::zeros(Rank::Sym2(3), grid.bulk_domain());
        // at t=0: h_slice = 0, so only -<K'_k, h> + ... = 0 terms with h
        // vanish; K'_k = 0 since k is static with zero mixed components;
        // K'_h = (1/2) d_t h = diag(1,0): integrand = <K'_h, k> - 0
        //   + 1/2( tr h (0 + 0) - tr k (0 + 2 tr K'_h) )
        //   = 1 - (1)(1)... tr k = 1, tr K'_h = 1: 1/2 * (0 - 1*2*1) = -1
        // total integrand = 1 - 1 = 0 at t=0
        let w0 = symplectic_form(&setup, &h, &hv, &k, &kv, 0).unwrap();
        assert!(w0.abs() < 1e-12, "{}", w0);
        // at t with h_11 = 2t: additional terms from tr_S h:
        // integrand = <K'_h,k> + 1/2( tr h (<K,k> + 2 tr K'_k) - tr k (<K,h> + 2 tr K'_h) )
        //           = 1 + 1/2(2t * 0 - 1 * (0 + 2)) = 1 - 1 = 0; area = 1
        let it = grid.steps / 2;
        let wmid = symplectic_form(&setup, &h, &hv, &k, &kv, it).unwrap();
        assert!(wmid.abs() < 1e-12, "{}", wmid);
        // make it nonzero: k with k_22 = x1 so that <K'_h, k> changes while
        // the trace terms differ
        let k2 = TensorField::from_fn(Rank::Sym2(3), grid.bulk_domain(), |c, x| {
            if c == crate::field::sym_index(3, 2, 2) {
                x[1]
            } else {
                0.0
            }
        });
        let w2 = symplectic_form(&setup, &h, &hv, &k2, &kv, 0).unwrap();
        // integrand: <K'_h, k2> = 0 (orthogonal components);
        // tr k2 = x1, (tr K)'_h = 1: bracket = 1/2(0 - x1 * 2) = -x1;
        // Omega = -int(-x1) = int_{-1}^{0} x1 dx1 * int dy = -1/2
        assert!((w2 + 0.5).abs() < 1e-12, "{}", w2);
    }

    #[test]
    fn uniqueness_probe_bounded() {
        let setup = flat_setup(16);
        let rep0 = uniqueness_probe(&setup, 0.0, 1).unwrap();
        assert!(rep0.pass);
        let rep = uniqueness_probe(&setup, 1e-12, 1).unwrap();
        assert!(rep.final_norm <= 1e-10, "final {}", rep.final_norm);
        assert!(rep.pass, "{:?}", rep);
    }
}

