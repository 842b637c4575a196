//! Conservative pullback of cell averages along characteristics.
//!
//! The value of `f(Y(s;t,·)) J(s;t,·)` averaged over target cell `i` equals the
//! integral of `f` over `[Y(s;t,e_i), Y(s;t,e_{i+1})]` divided by the cell
//! width. The source is reconstructed piecewise linearly with limited slopes,
//! so the map preserves nonnegativity and the integral of everything that
//! stays on the grid.

use crate::grid::SizeGrid;

/// Preimages of the grid edges under one flow map.
#[derive(Clone, Debug)]
pub(crate) enum Pullback {
    Identity,
    Edges(Vec<f64>),
}

/// Limited slopes of the linear reconstruction in `v` (zero in the end cells).
pub(crate) fn slopes(grid: &SizeGrid, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let e = grid.edges();
    let mid = |k: usize| 0.5 * (e[k] + e[k + 1]);
    let mut s = vec![0.0; n];
    for k in 1..n.saturating_sub(1) {
        let left = (f[k] - f[k - 1]) / (mid(k) - mid(k - 1));
        let right = (f[k + 1] - f[k]) / (mid(k + 1) - mid(k));
        s[k] = minmod(left, right);
    }
    s
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Adds `weight · pullback(f)` to `out`.
pub(crate) fn accumulate(
    grid: &SizeGrid,
    map: &Pullback,
    f: &[f64],
    slope: &[f64],
    weight: f64,
    out: &mut [f64],
) {
    if weight == 0.0 {
        return;
    }
    let edges = match map {
        Pullback::Identity => {
            out.iter_mut().zip(f).for_each(|(o, x)| *o += weight * x);
            return;
        }
        Pullback::Edges(p) => p,
    };
    let e = grid.edges();
    let w = grid.widths();
    let n = grid.cells();
    let (vmin, vmax) = (grid.vmin(), grid.vmax());
    let mut k = 0;
    for i in 0..n {
        let a = edges[i].max(vmin);
        let b = edges[i + 1].min(vmax);
        if b <= a {
            continue;
        }
        while k + 1 < n && e[k + 1] <= a {
            k += 1;
        }
        let mut total = 0.0;
        let mut j = k;
        while j < n && e[j] < b {
            let lo = a.max(e[j]);
            let hi = b.min(e[j + 1]);
            if hi > lo {
                let m = 0.5 * (e[j] + e[j + 1]);
                total += (hi - lo) * (f[j] + slope[j] * (0.5 * (lo + hi) - m));
            }
            j += 1;
        }
        out[i] += weight * total / w[i];
    }
}
