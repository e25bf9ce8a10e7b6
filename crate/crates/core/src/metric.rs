//! Lorentzian metric fields on the corner grid: the constant-coefficient
//! model metric parameterized by the corner angle, smooth compactly supported
//! perturbations, the coordinate rescaling map, and the localization report
//! measuring closeness to the best-fit model metric.

use crate::domain::Domain;
use crate::error::{numerical, validation, Result};
use crate::field::{Rank, TensorField};
use crate::grid::CornerGrid;
use crate::smallmat;
use crate::stencil;

/// Component array `g_{ab}` over the grid. Static metrics store a single
/// spatial slice; time-dependent metrics store the full slab.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub grid: CornerGrid,
    pub time_dependent: bool,
    /// Sym2(n+1) over the spatial domain (static) or the bulk domain.
    pub comp: TensorField,
    /// Set when the field is constant-coefficient (model metrics).
    pub constant: Option<Vec<f64>>,
}

impl MetricField {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Metric-node index for a bulk node (drops the time slice when static).
    pub fn mnode_of_bulk(&self, it: usize, sp: usize) -> usize {
        if self.time_dependent {
            self.grid.bulk_index(it, sp)
        } else {
            sp
        }
    }

    pub fn at(&self, it: usize, sp: usize, a: usize, b: usize) -> f64 {
        self.comp.sym(a, b, self.mnode_of_bulk(it, sp))
    }

    /// Dense matrix of components at a metric node.
    pub fn matrix(&self, mnode: usize) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                m[a * d + b] = self.comp.sym(a, b, mnode);
            }
        }
        m
    }

    /// Check Lorentzian nondegeneracy (det < 0) at every node.
    pub fn check_lorentzian(&self) -> Result<()> {
        let d = self.dim();
        for node in 0..self.comp.nodes() {
            let det = smallmat::det(&self.matrix(node), d);
            if !(det < 0.0) {
                return numerical(format!(
                    "metric degenerate or signature lost at node {} (det = {})",
                    node, det
                ));
            }
        }
        Ok(())
    }

    pub fn from_fn(
        grid: &CornerGrid,
        time_dependent: bool,
        f: impl Fn(&[f64], usize, usize) -> f64,
    ) -> MetricField {
        let d = grid.dim();
        let dom = if time_dependent { grid.bulk_domain() } else { grid.spatial_domain() };
        let mut comp = TensorField::zeros(Rank::Sym2(d), dom.clone());
        for (flat, idx) in dom.iter_indices().enumerate() {
            let xs = dom.coords(&idx);
            // spatial-only domains get t = 0 prepended for the closure
            let coords: Vec<f64> = if time_dependent {
                xs
            } else {
                let mut c = vec![0.0];
                c.extend(xs);
                c
            };
            for a in 0..d {
                for b in a..d {
                    comp.sym_set(a, b, flat, f(&coords, a, b));
                }
            }
        }
        MetricField { grid: grid.clone(), time_dependent, comp, constant: None }
    }
}

/// Model metric components: `g_00 = -1`, `g_01 = -alpha0`, `g_ii = 1`.
pub fn model_components(dim: usize, alpha0: f64) -> Vec<f64> {
    let rank = Rank::Sym2(dim);
    let mut c = vec![0.0; rank.comps()];
    let idx = |a: usize, b: usize| crate::field::sym_index(dim, a, b);
    c[idx(0, 0)] = -1.0;
    c[idx(0, 1)] = -alpha0;
    for i in 1..dim {
        c[idx(i, i)] = 1.0;
    }
    c
}

/// The flat Minkowski-corner model metric with corner angle `alpha0`.
pub fn minkowski_corner(alpha0: f64, grid: &CornerGrid) -> Result<MetricField> {
    minkowski_corner_bounded(alpha0, grid, 2.0)
}

pub fn minkowski_corner_bounded(alpha0: f64, grid: &CornerGrid, alpha_max: f64) -> Result<MetricField> {
    if alpha0.abs() >= alpha_max {
        return validation(format!("|alpha0| = {} must be < {}", alpha0.abs(), alpha_max));
    }
    let d = grid.dim();
    let vals = model_components(d, alpha0);
    let dom = grid.spatial_domain();
    let mut comp = TensorField::zeros(Rank::Sym2(d), dom);
    for k in 0..vals.len() {
        for v in comp.comp_mut(k) {
            *v = vals[k];
        }
    }
    Ok(MetricField { grid: grid.clone(), time_dependent: false, comp, constant: Some(vals) })
}

/// C-infinity bump: exp(-r^2/(1-r^2)) for r < 1, zero outside. Equals 1 at
/// the center and vanishes with all derivatives at r = 1.
pub fn bump(r: f64) -> f64 {
    if r * r >= 1.0 {
        0.0
    } else {
        (-r * r / (1.0 - r * r)).exp()
    }
}

/// Polynomial window `(1 - r^2)^4` for `r < 1`, zero outside: compactly
/// supported, C^3 at the edge, with moderate higher derivatives (unlike the
/// exponential bump, whose fourth derivatives near the support edge are
/// four orders of magnitude larger).
pub fn poly_window(r: f64) -> f64 {
    let q = 1.0 - r * r;
    if q <= 0.0 {
        0.0
    } else {
        q * q * q * q
    }
}

/// Radial argument for a spatial bump centered at `center` with width `w`.
fn radial(coords: &[f64], center: &[f64], w: f64) -> f64 {
    let mut s = 0.0;
    for (x, c) in coords.iter().zip(center.iter()) {
        s += (x - c) * (x - c);
    }
    s.sqrt() / w
}

/// Named smooth perturbation profiles. All are compactly supported away from
/// the artificial outer faces (checked at construction).
#[derive(Debug, Clone)]
pub enum BumpProfile {
    /// Bump in a single metric component, centered in space (and optionally
    /// localized in time).
    Component { a: usize, b: usize, center: Vec<f64>, width: f64 },
    /// Spatial-metric perturbation `q_AA = c * x1 * bump` giving the corner
    /// Sigma a mean curvature of roughly `h_sigma` inside (S, gamma).
    CurvedCorner { h_sigma: f64, width: f64 },
}

impl BumpProfile {
    /// Default component bump: g_22, centered near the corner.
    pub fn gaussian_g22(grid: &CornerGrid) -> BumpProfile {
        let mut center = vec![-grid.l1 * 0.45];
        center.extend(std::iter::repeat(0.0).take(grid.n - 1));
        BumpProfile::Component { a: 2, b: 2, center, width: 0.35 * grid.l1.min(grid.la / 2.0) }
    }

    pub fn curved_corner(grid: &CornerGrid, h_sigma: f64) -> BumpProfile {
        BumpProfile::CurvedCorner { h_sigma, width: 0.6 * grid.l1.min(grid.la / 2.0) }
    }

    /// Evaluate the unit-amplitude profile component q_{ab} at coordinates
    /// `(t, x1, xA..)`.
    pub fn eval(&self, grid: &CornerGrid, coords: &[f64], a: usize, b: usize) -> f64 {
        match self {
            BumpProfile::Component { a: pa, b: pb, center, width } => {
                let (pa, pb) = if pa <= pb { (*pa, *pb) } else { (*pb, *pa) };
                let (qa, qb) = if a <= b { (a, b) } else { (b, a) };
                if (qa, qb) != (pa, pb) {
                    return 0.0;
                }
                bump(radial(&coords[1..], center, *width))
            }
            BumpProfile::CurvedCorner { h_sigma, width } => {
                if a == b && a >= 2 {
                    let c = 2.0 * h_sigma / (grid.n as f64 - 1.0);
                    // center the radial factor at the corner x1 = 0, xA = 0
                    let center = vec![0.0; grid.n];
                    c * coords[1] * bump(radial(&coords[1..], &center, *width))
                } else {
                    0.0
                }
            }
        }
    }
}

/// `g = g0 + eps * q` with `q` the named profile; Lorentzian signature and
/// the outer-face support margin are checked.
pub fn perturb_metric(g0: &MetricField, profile: &BumpProfile, eps: f64) -> Result<MetricField> {
    if eps == 0.0 {
        return Ok(g0.clone());
    }
    let grid = g0.grid.clone();
    let mut out = g0.clone();
    out.constant = None;
    let dom = out.comp.dom.clone();
    let mut dev = TensorField::zeros(out.comp.rank, dom.clone());
    for (flat, idx) in dom.iter_indices().enumerate() {
        let xs = dom.coords(&idx);
        let coords: Vec<f64> = if g0.time_dependent {
            xs
        } else {
            let mut c = vec![0.0];
            c.extend(xs);
            c
        };
        for a in 0..grid.dim() {
            for b in a..grid.dim() {
                let q = profile.eval(&grid, &coords, a, b);
                if q != 0.0 {
                    dev.sym_set(a, b, flat, eps * q);
                    let v = out.comp.sym(a, b, flat) + eps * q;
                    out.comp.sym_set(a, b, flat, v);
                }
            }
        }
    }
    // support margin: the perturbation must vanish near the outer faces
    let m = grid.outer_margin_max(&dev, 2);
    if m > 1e-14 {
        return validation(format!("perturbation touches an outer face (margin max {})", m));
    }
    out.check_lorentzian()?;
    Ok(out)
}

/// Coordinate rescaling: the rescaled chart covers the same physical region
/// with coordinates `x~ = x / lambda`, so the new field at `x~` samples the
/// old field at `lambda * x~` and k-th chart differences scale by lambda^k.
/// The chart spacing is kept, hence the node counts grow by `1/lambda`
/// (the physical node separation shrinks by `lambda`). Multilinear
/// interpolation on the source grid; exact for `lambda = 1`.
pub fn rescale(g: &MetricField, lambda: f64) -> Result<MetricField> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return validation(format!("lambda = {} outside (0, 1]", lambda));
    }
    let grid = &g.grid;
    let steps = (grid.t_max / (lambda * grid.dt)).floor() as usize;
    let n1 = (grid.l1 / (lambda * grid.dx)).floor() as usize + 1;
    let na = (grid.la / (lambda * grid.dx)).floor() as usize + 1;
    let mut sdims = vec![n1];
    sdims.extend(std::iter::repeat(na).take(grid.n - 1));
    let new_grid = CornerGrid {
        n: grid.n,
        dt: grid.dt,
        dx: grid.dx,
        t_max: steps as f64 * grid.dt,
        l1: (n1 - 1) as f64 * grid.dx,
        la: (na - 1) as f64 * grid.dx,
        steps,
        sdims,
        cfl: grid.cfl,
    };
    if let Some(c) = &g.constant {
        let dom = new_grid.spatial_domain();
        let mut comp = TensorField::zeros(g.comp.rank, dom);
        for k in 0..comp.comps() {
            for v in comp.comp_mut(k) {
                *v = c[k];
            }
        }
        return Ok(MetricField {
            grid: new_grid,
            time_dependent: false,
            comp,
            constant: Some(c.clone()),
        });
    }
    let src_dom = g.comp.dom.clone();
    let dst_dom = if g.time_dependent { new_grid.bulk_domain() } else { new_grid.spatial_domain() };
    let mut comp = TensorField::zeros(g.comp.rank, dst_dom.clone());
    for (flat, idx) in dst_dom.iter_indices().enumerate() {
        let mut sample = Vec::with_capacity(dst_dom.ndim());
        for a in 0..dst_dom.ndim() {
            let lo = src_dom.origins[a];
            let hi = lo + src_dom.spacings[a] * (src_dom.dims[a] - 1) as f64;
            let x = lambda * dst_dom.coord(a, idx[a]);
            sample.push(x.clamp(lo.min(hi), lo.max(hi)));
        }
        for k in 0..comp.comps() {
            let v = interp_cubic(&src_dom, g.comp.comp(k), &sample)?;
            comp.set(k, flat, v);
        }
    }
    Ok(MetricField { grid: new_grid, time_dependent: g.time_dependent, comp, constant: None })
}

/// Tensor-product cubic (4-point Lagrange) interpolation of a plane at an
/// in-domain point; stencils clamp to one-sided near the edges. Exact on
/// cubics, error O(h^4), so differentiated interpolants keep second-order
/// difference accuracy.
pub fn interp_cubic(dom: &Domain, plane: &[f64], x: &[f64]) -> Result<f64> {
    let nd = dom.ndim();
    let mut base = vec![0usize; nd];
    let mut wts = vec![[0.0f64; 4]; nd];
    for a in 0..nd {
        let u = (x[a] - dom.origins[a]) / dom.spacings[a];
        if u < -1e-9 || u > (dom.dims[a] - 1) as f64 + 1e-9 {
            return validation(format!("sample point outside domain on axis {}", a));
        }
        let i = (u.floor() as isize - 1).clamp(0, dom.dims[a] as isize - 4) as usize;
        base[a] = i;
        // Lagrange weights for nodes i..i+3 at parameter u
        for k in 0..4 {
            let xk = (i + k) as f64;
            let mut w = 1.0;
            for j in 0..4 {
                if j != k {
                    let xj = (i + j) as f64;
                    w *= (u - xj) / (xk - xj);
                }
            }
            wts[a][k] = w;
        }
    }
    let strides = dom.strides();
    let mut acc = 0.0;
    let corners = 4usize.pow(nd as u32);
    for corner in 0..corners {
        let mut w = 1.0;
        let mut off = 0usize;
        let mut rem = corner;
        for a in 0..nd {
            let k = rem % 4;
            rem /= 4;
            w *= wts[a][k];
            off += strides[a] * (base[a] + k);
        }
        acc += w * plane[off];
    }
    Ok(acc)
}

/// Multilinear interpolation of a plane at an arbitrary in-domain point.
pub fn interp_multilinear(dom: &Domain, plane: &[f64], x: &[f64]) -> Result<f64> {
    let nd = dom.ndim();
    let mut base = vec![0usize; nd];
    let mut frac = vec![0.0; nd];
    for a in 0..nd {
        let u = (x[a] - dom.origins[a]) / dom.spacings[a];
        if u < -1e-9 || u > (dom.dims[a] - 1) as f64 + 1e-9 {
            return validation(format!("sample point outside domain on axis {}", a));
        }
        let i = u.floor().clamp(0.0, (dom.dims[a] - 2) as f64);
        base[a] = i as usize;
        frac[a] = (u - i).clamp(0.0, 1.0);
    }
    let strides = dom.strides();
    let corners = 1usize << nd;
    let mut acc = 0.0;
    for corner in 0..corners {
        let mut w = 1.0;
        let mut off = 0usize;
        for a in 0..nd {
            if corner >> a & 1 == 1 {
                w *= frac[a];
                off += strides[a] * (base[a] + 1);
            } else {
                w *= 1.0 - frac[a];
                off += strides[a] * base[a];
            }
        }
        acc += w * plane[off];
    }
    Ok(acc)
}

/// Localization report: max-norms of k-th differences of `g - g_{alpha0}`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LocalizationReport {
    pub eps_k: Vec<f64>,
    pub eps: f64,
    pub alpha0: f64,
}

/// Least-squares fit of the model angle over Sigma-adjacent nodes, then
/// max-norms of the k-th coordinate differences of the deviation.
pub fn localization_epsilon(g: &MetricField, k_max: usize) -> Result<LocalizationReport> {
    if k_max > 3 {
        return validation("k_max must be <= 3 (stencil width limit)");
    }
    let grid = &g.grid;
    let d = grid.dim();
    // fit alpha0 = -mean(g_01) over spatial nodes within 2 cells of Sigma
    let sdom = grid.spatial_domain();
    let mut sum = 0.0;
    let mut count = 0usize;
    let n1 = grid.sdims[0];
    for (flat, idx) in sdom.iter_indices().enumerate() {
        if idx[0] + 2 >= n1 {
            let mnode = if g.time_dependent { flat } else { flat };
            sum += g.comp.sym(0, 1, mnode);
            count += 1;
        }
    }
    let alpha0 = -sum / count.max(1) as f64;
    let model = model_components(d, alpha0);

    let mut dev = g.comp.clone();
    for k in 0..dev.comps() {
        let m = model[k];
        for v in dev.comp_mut(k) {
            *v -= m;
        }
    }
    let dom = dev.dom.clone();
    let mut eps_k = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut worst = 0.0f64;
        for c in 0..dev.comps() {
            let m = if k == 0 {
                dev.comp(c).iter().fold(0.0f64, |m, v| m.max(v.abs()))
            } else {
                stencil::kth_difference_max(&dom, dev.comp(c), k)
            };
            worst = worst.max(m);
        }
        eps_k.push(worst);
    }
    let eps = eps_k.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(LocalizationReport { eps_k, eps, alpha0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;

    fn grid() -> CornerGrid {
        CornerGrid::build(&GridConfig::with_resolution(2, 16, 0.5)).unwrap()
    }

    #[test]
    fn model_metric_components() {
        let g = minkowski_corner(0.0, &grid()).unwrap();
        let c = g.constant.as_ref().unwrap();
        assert_eq!(c[crate::field::sym_index(3, 0, 0)], -1.0);
        assert_eq!(c[crate::field::sym_index(3, 1, 1)], 1.0);
        assert_eq!(c[crate::field::sym_index(3, 2, 2)], 1.0);
        assert_eq!(c[crate::field::sym_index(3, 0, 1)], 0.0);
        g.check_lorentzian().unwrap();
    }

    #[test]
    fn corner_angle_in_cross_term() {
        let g = minkowski_corner(0.3, &grid()).unwrap();
        assert_eq!(g.at(0, 0, 0, 1), -0.3);
        g.check_lorentzian().unwrap();
        assert!(minkowski_corner(2.5, &grid()).is_err());
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let g0 = minkowski_corner(0.1, &grid()).unwrap();
        let g = perturb_metric(&g0, &BumpProfile::gaussian_g22(&grid()), 0.0).unwrap();
        assert_eq!(g.comp.data, g0.comp.data);
    }

    #[test]
    fn localization_measures_bump_amplitude() {
        let gr = grid();
        let g0 = minkowski_corner(0.7, &gr).unwrap();
        let rep0 = localization_epsilon(&g0, 2).unwrap();
        assert!(rep0.eps < 1e-13);
        assert!((rep0.alpha0 - 0.7).abs() < 1e-13);

        let profile = BumpProfile::gaussian_g22(&gr);
        let g = perturb_metric(&g0, &profile, 0.01).unwrap();
        let rep = localization_epsilon(&g, 0).unwrap();
        // expected: 0.01 * max over grid nodes of the profile
        let dom = gr.spatial_domain();
        let mut qmax = 0.0f64;
        for idx in dom.iter_indices() {
            let mut coords = vec![0.0];
            coords.extend(dom.coords(&idx));
            qmax = qmax.max(profile.eval(&gr, &coords, 2, 2).abs());
        }
        assert!((rep.eps_k[0] - 0.01 * qmax).abs() < 1e-12, "eps0 = {}", rep.eps_k[0]);
        assert!(rep.eps_k[0] > 0.005 && rep.eps_k[0] < 0.02);
    }

    #[test]
    fn rescale_shrinks_differences() {
        let gr = CornerGrid::build(&GridConfig::with_resolution(2, 64, 0.5)).unwrap();
        let g0 = minkowski_corner(0.0, &gr).unwrap();
        let g = perturb_metric(&g0, &BumpProfile::gaussian_g22(&gr), 0.01).unwrap();
        let r1 = localization_epsilon(&g, 1).unwrap();
        let gh = rescale(&g, 0.5).unwrap();
        let r2 = localization_epsilon(&gh, 1).unwrap();
        // identity at lambda = 1
        let gid = rescale(&g, 1.0).unwrap();
        let ri = localization_epsilon(&gid, 1).unwrap();
        assert!((ri.eps_k[1] - r1.eps_k[1]).abs() <= 1e-12 * r1.eps_k[1].max(1.0));
        let ratio = r2.eps_k[1] / r1.eps_k[1];
        assert!((ratio - 0.5).abs() < 0.06, "ratio {}", ratio);
        // constant metrics have identical components under rescaling
        let gc = rescale(&g0, 0.37).unwrap();
        assert_eq!(gc.constant.as_ref().unwrap(), g0.constant.as_ref().unwrap());
    }
}
