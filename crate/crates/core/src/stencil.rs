//! Second-order finite differences on rectangular domains.
//!
//! Centered stencils in the interior, one-sided second-order stencils on the
//! first and last node of each axis. Mixed second derivatives are composed
//! from two first-difference passes, which keeps them second order also when
//! one factor is one-sided at an edge.

use crate::domain::Domain;

/// First difference of the plane `f` along `axis`, written into `out`.
///
/// Interior nodes use the 4th-order 5-point centered stencil, the two nodes
/// nearest each edge use 3rd-order 4-point biased stencils. Keeping every
/// first-difference stencil at least 3rd order makes compositions of two
/// first differences uniformly 2nd order: an O(h^2) jump between stencil
/// truncation families would otherwise differentiate to O(h).
pub fn diff1(dom: &Domain, f: &[f64], axis: usize, out: &mut [f64]) {
    let strides = dom.strides();
    let st = strides[axis];
    let n = dom.dims[axis];
    let h = dom.spacings[axis];
    assert!(n >= 5, "axis {} too short for one-sided stencils", axis);
    let inv6h = 1.0 / (6.0 * h);
    let inv12h = 1.0 / (12.0 * h);
    for (flat, idx) in dom.iter_indices().enumerate() {
        let i = idx[axis];
        out[flat] = if i == 0 {
            (-11.0 * f[flat] + 18.0 * f[flat + st] - 9.0 * f[flat + 2 * st]
                + 2.0 * f[flat + 3 * st])
                * inv6h
        } else if i == 1 {
            (-2.0 * f[flat - st] - 3.0 * f[flat] + 6.0 * f[flat + st] - f[flat + 2 * st]) * inv6h
        } else if i == n - 1 {
            (11.0 * f[flat] - 18.0 * f[flat - st] + 9.0 * f[flat - 2 * st]
                - 2.0 * f[flat - 3 * st])
                * inv6h
        } else if i == n - 2 {
            (2.0 * f[flat + st] + 3.0 * f[flat] - 6.0 * f[flat - st] + f[flat - 2 * st]) * inv6h
        } else {
            (f[flat - 2 * st] - 8.0 * f[flat - st] + 8.0 * f[flat + st] - f[flat + 2 * st])
                * inv12h
        };
    }
}

/// Pure second difference along one axis (compact three/four point stencils).
pub fn diff2(dom: &Domain, f: &[f64], axis: usize, out: &mut [f64]) {
    let strides = dom.strides();
    let st = strides[axis];
    let n = dom.dims[axis];
    let h = dom.spacings[axis];
    assert!(n >= 4, "axis {} too short for one-sided stencils", axis);
    let invh2 = 1.0 / (h * h);
    for (flat, idx) in dom.iter_indices().enumerate() {
        let i = idx[axis];
        out[flat] = if i == 0 {
            (2.0 * f[flat] - 5.0 * f[flat + st] + 4.0 * f[flat + 2 * st] - f[flat + 3 * st])
                * invh2
        } else if i == n - 1 {
            (2.0 * f[flat] - 5.0 * f[flat - st] + 4.0 * f[flat - 2 * st] - f[flat - 3 * st])
                * invh2
        } else {
            (f[flat + st] - 2.0 * f[flat] + f[flat - st]) * invh2
        };
    }
}

/// Mixed second derivative: `diff1` along `a` then `diff1` along `b`.
/// For `a == b` this is NOT the compact `diff2`; callers choose which they need.
pub fn diff_mixed(dom: &Domain, f: &[f64], a: usize, b: usize, out: &mut [f64]) {
    let mut tmp = vec![0.0; f.len()];
    diff1(dom, f, a, &mut tmp);
    diff1(dom, &tmp, b, out);
}

/// All first derivatives of a plane: `out[axis][node]`.
pub fn gradient(dom: &Domain, f: &[f64]) -> Vec<Vec<f64>> {
    (0..dom.ndim())
        .map(|a| {
            let mut out = vec![0.0; f.len()];
            diff1(dom, f, a, &mut out);
            out
        })
        .collect()
}

/// k-th order multi-index differences, used by the localization report.
/// Applies `diff1` repeatedly per multi-index entry and returns the max norm
/// over all multi-indices of total order exactly `k`.
pub fn kth_difference_max(dom: &Domain, f: &[f64], k: usize) -> f64 {
    fn rec(dom: &Domain, cur: &[f64], left: usize, from_axis: usize, best: &mut f64) {
        if left == 0 {
            let m = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m > *best {
                *best = m;
            }
            return;
        }
        for a in from_axis..dom.ndim() {
            let mut nxt = vec![0.0; cur.len()];
            diff1(dom, cur, a, &mut nxt);
            rec(dom, &nxt, left - 1, a, best);
        }
    }
    let mut best = 0.0;
    rec(dom, f, k, 0, &mut best);
    best
}
