//! Geometric size grids, cell-averaged densities, moments and weighted norms.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{domain, Error, Result};

/// Geometric grid on `[vmin, vmax]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeGrid {
    vmin: f64,
    vmax: f64,
    edges: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
    log_ratio: f64,
}

impl SizeGrid {
    /// Geometric edges `vmin · r^i`; centers are geometric means of adjacent edges.
    pub fn new(vmin: f64, vmax: f64, cells: usize) -> Result<Self> {
        if !(vmin > 0.0 && vmin.is_finite() && vmax.is_finite() && vmax > vmin) {
            return Err(domain(format!("grid needs 0 < vmin < vmax, got ({vmin}, {vmax})")));
        }
        if cells < 2 {
            return Err(domain(format!("grid needs at least 2 cells, got {cells}")));
        }
        let log_ratio = (vmax / vmin).ln() / cells as f64;
        let mut edges: Vec<f64> =
            (0..=cells).map(|i| vmin * (i as f64 * log_ratio).exp()).collect();
        edges[0] = vmin;
        edges[cells] = vmax;
        let centers = edges.windows(2).map(|e| (e[0] * e[1]).sqrt()).collect();
        let widths = edges.windows(2).map(|e| e[1] - e[0]).collect();
        Ok(Self { vmin, vmax, edges, centers, widths, log_ratio })
    }

    pub fn shared(vmin: f64, vmax: f64, cells: usize) -> Result<Arc<Self>> {
        Self::new(vmin, vmax, cells).map(Arc::new)
    }

    pub fn vmin(&self) -> f64 {
        self.vmin
    }

    pub fn vmax(&self) -> f64 {
        self.vmax
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// `ln(edges[i+1] / edges[i])`
    pub fn log_ratio(&self) -> f64 {
        self.log_ratio
    }

    /// Index of the cell containing `v`, if `v ∈ [vmin, vmax]`.
    pub fn cell_of(&self, v: f64) -> Option<usize> {
        if !(v >= self.vmin && v <= self.vmax) {
            return None;
        }
        let n = self.cells();
        let mut k = (((v / self.vmin).ln() / self.log_ratio).floor().max(0.0) as usize).min(n - 1);
        while k > 0 && v < self.edges[k] {
            k -= 1;
        }
        while k + 1 < n && v >= self.edges[k + 1] {
            k += 1;
        }
        Some(k)
    }

    /// Index `k` with `centers[k] ≤ v < centers[k+1]`, if any.
    pub fn pivot_below(&self, v: f64) -> Option<usize> {
        let n = self.cells();
        let c = &self.centers;
        if !(v >= c[0] && v < c[n - 1]) {
            return None;
        }
        let mut k = (((v / c[0]).ln() / self.log_ratio).floor().max(0.0) as usize).min(n - 2);
        while k > 0 && v < c[k] {
            k -= 1;
        }
        while k + 2 < n && v >= c[k + 1] {
            k += 1;
        }
        Some(k)
    }

    /// Stable textual identity for hashing.
    pub fn descriptor(&self) -> String {
        format!("geometric;vmin={:e};vmax={:e};cells={}", self.vmin, self.vmax, self.cells())
    }
}

/// Cell-averaged number density on a [`SizeGrid`] at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    grid: Arc<SizeGrid>,
    values: Vec<f64>,
    pub time: f64,
}

impl DensityState {
    pub fn new(grid: Arc<SizeGrid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(domain(format!(
                "density has {} values for a grid of {} cells",
                values.len(),
                grid.cells()
            )));
        }
        if let Some(bad) = values.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
            return Err(domain(format!("density values must be finite and nonnegative, found {bad}")));
        }
        Ok(Self { grid, values, time })
    }

    /// Skips validation; callers guarantee length and sign.
    pub(crate) fn from_parts(grid: Arc<SizeGrid>, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), grid.cells());
        Self { grid, values, time }
    }

    pub fn zeros(grid: Arc<SizeGrid>, time: f64) -> Self {
        let n = grid.cells();
        Self { grid, values: vec![0.0; n], time }
    }

    pub fn grid(&self) -> &Arc<SizeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|x| x * factor).collect(), self.time)
    }

    /// Pointwise sum of two states on the same grid.
    pub fn added(&self, other: &Self) -> Result<Self> {
        check_same_grid(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self::new(self.grid.clone(), values, self.time)
    }

    /// `M_m = Σ x_i^m c_i w_i`
    pub fn moment(&self, m: f64) -> f64 {
        let g = &self.grid;
        self.values
            .iter()
            .zip(g.centers())
            .zip(g.widths())
            .map(|((c, x), w)| pow(*x, m) * c * w)
            .sum()
    }

    /// `Σ |c_i| w_i`
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().zip(self.grid.widths()).map(|(c, w)| c.abs() * w).sum()
    }

    /// `∫_R^∞ v c dv` over the cells whose center is at least `r`.
    pub fn tail_first_moment(&self, r: f64) -> f64 {
        let g = &self.grid;
        let start = g.centers().partition_point(|&x| x < r);
        (start..g.cells()).map(|i| g.centers()[i] * self.values[i] * g.widths()[i]).sum()
    }

    /// Piecewise-linear interpolation in `ln v` between cell centers, constant
    /// between the outer centers and the grid ends, zero outside `[vmin, vmax]`.
    pub fn sample(&self, v: f64) -> f64 {
        let g = &self.grid;
        if !(v >= g.vmin() && v <= g.vmax()) {
            return 0.0;
        }
        let c = g.centers();
        let n = g.cells();
        if v <= c[0] {
            return self.values[0];
        }
        if v >= c[n - 1] {
            return self.values[n - 1];
        }
        let k = g.pivot_below(v).expect("v between outer centers");
        let theta = (v / c[k]).ln() / (c[k + 1] / c[k]).ln();
        (1.0 - theta) * self.values[k] + theta * self.values[k + 1]
    }
}

#[inline]
fn pow(x: f64, m: f64) -> f64 {
    if m == 0.0 {
        1.0
    } else if m == 1.0 {
        x
    } else if m == 2.0 {
        x * x
    } else {
        x.powf(m)
    }
}

fn check_same_grid(a: &DensityState, b: &DensityState) -> Result<()> {
    if Arc::ptr_eq(&a.grid, &b.grid) || a.grid == b.grid {
        Ok(())
    } else {
        Err(domain("states live on different grids"))
    }
}

/// `Σ (x_i^{-β} + x_i) |a_i - b_i| w_i`
pub fn weighted_norm(a: &DensityState, b: &DensityState, beta: f64) -> Result<f64> {
    check_same_grid(a, b)?;
    let g = &a.grid;
    Ok((0..g.cells())
        .map(|i| {
            let x = g.centers()[i];
            (x.powf(-beta) + x) * (a.values[i] - b.values[i]).abs() * g.widths()[i]
        })
        .sum())
}

/// `Σ |a_i - b_i| w_i`
pub fn l1_distance(a: &DensityState, b: &DensityState) -> Result<f64> {
    check_same_grid(a, b)?;
    let g = &a.grid;
    Ok((0..g.cells()).map(|i| (a.values[i] - b.values[i]).abs() * g.widths()[i]).sum())
}

/// Families of initial data.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    /// `e^{-v/scale}`
    Exponential { scale: f64 },
    /// `v^exponent` on `[lo, hi]`, zero elsewhere.
    TruncatedPowerLaw { exponent: f64, lo: f64, hi: f64 },
    /// Two-column text file `(volume, density)`, linear interpolation in `v`,
    /// zero outside the tabulated range.
    Tabulated(PathBuf),
}

impl InitialData {
    /// Whether `∫_0 v^{-2β} c_0 dv` converges at the origin.
    pub fn singular_moment_finite(&self, beta: f64) -> bool {
        match self {
            Self::Exponential { .. } => 2.0 * beta < 1.0,
            Self::TruncatedPowerLaw { exponent, lo, .. } => *lo > 0.0 || exponent - 2.0 * beta > -1.0,
            // tables start at a positive volume
            Self::Tabulated(_) => true,
        }
    }
}

/// Two-point-per-abscissa Gauss–Legendre rule with 5 nodes on `[-1, 1]`.
const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
];

fn gauss5(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * GAUSS5.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Moments of a freshly projected state.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionReport {
    pub beta: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    /// `M_{-2β}`
    pub m_neg: f64,
}

impl ProjectionReport {
    pub fn of(state: &DensityState, beta: f64) -> Self {
        Self {
            beta,
            m0: state.moment(0.0),
            m1: state.moment(1.0),
            m2: state.moment(2.0),
            m_neg: state.moment(-2.0 * beta),
        }
    }
}

/// Cell averages of `data` by 5-point Gauss quadrature on each cell (restricted
/// to the support of `data`).
pub fn project_initial(
    data: &InitialData,
    grid: &Arc<SizeGrid>,
    beta: f64,
) -> Result<(DensityState, ProjectionReport)> {
    let values = match data {
        InitialData::Exponential { scale } => {
            if !(*scale > 0.0) {
                return Err(domain(format!("exponential scale must be positive, got {scale}")));
            }
            project_fn(grid, |v| (-v / scale).exp(), 0.0, f64::INFINITY)
        }
        InitialData::TruncatedPowerLaw { exponent, lo, hi } => {
            if !(*lo >= 0.0 && hi > lo) {
                return Err(domain(format!("power law needs 0 <= lo < hi, got [{lo}, {hi}]")));
            }
            project_fn(grid, |v| v.powf(*exponent), *lo, *hi)
        }
        InitialData::Tabulated(path) => {
            let table = read_table(path)?;
            project_fn(grid, |v| table.eval(v), table.volumes[0], *table.volumes.last().unwrap())
        }
    };
    let state = DensityState::new(grid.clone(), values, 0.0)
        .map_err(|e| Error::Input(format!("projected initial data invalid: {e}")))?;
    let report = ProjectionReport::of(&state, beta);
    Ok((state, report))
}

fn project_fn(grid: &SizeGrid, f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let e = grid.edges();
    (0..grid.cells())
        .map(|i| {
            let (a, b) = (e[i].max(lo), e[i + 1].min(hi));
            if b > a {
                gauss5(&f, a, b) / grid.widths()[i]
            } else {
                0.0
            }
        })
        .collect()
}

/// Tabulated initial density.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub volumes: Vec<f64>,
    pub densities: Vec<f64>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut volumes = Vec::new();
        let mut densities = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::Input(format!("line {}: expected two columns", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Input(format!("line {}: not a number: {s}", lineno + 1)))
            };
            let (v, c) = (parse(cols[0])?, parse(cols[1])?);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("line {}: volume must be positive", lineno + 1)));
            }
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Input(format!("line {}: negative or non-finite density {c}", lineno + 1)));
            }
            if volumes.last().is_some_and(|&last| v <= last) {
                return Err(Error::Input(format!("line {}: volumes must strictly increase", lineno + 1)));
            }
            volumes.push(v);
            densities.push(c);
        }
        if volumes.len() < 2 {
            return Err(Error::Input("table needs at least two rows".into()));
        }
        Ok(Self { volumes, densities })
    }

    pub fn eval(&self, v: f64) -> f64 {
        let k = self.volumes.partition_point(|&x| x <= v);
        if k == 0 || k == self.volumes.len() && v > self.volumes[k - 1] {
            return 0.0;
        }
        if k == self.volumes.len() {
            return self.densities[k - 1];
        }
        let (v0, v1) = (self.volumes[k - 1], self.volumes[k]);
        let th = (v - v0) / (v1 - v0);
        (1.0 - th) * self.densities[k - 1] + th * self.densities[k]
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    Table::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_cell_grid() {
        let g = SizeGrid::new(1.0, 4.0, 2).unwrap();
        assert_eq!(g.edges().len(), 3);
        assert_relative_eq!(g.edges()[1], 2.0, max_relative = 1e-15);
        assert_relative_eq!(g.centers()[0], 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(g.centers()[1], 2.0 * 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn edge_ratio_is_constant() {
        let g = SizeGrid::new(1e-4, 1e4, 256).unwrap();
        let want = 10f64.powf(8.0 / 256.0);
        for e in g.edges().windows(2) {
            assert_relative_eq!(e[1] / e[0], want, max_relative = 1e-12);
        }
        assert_eq!(g.edges()[0], 1e-4);
        assert_eq!(g.edges()[256], 1e4);
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(SizeGrid::new(1.0, 1.0, 8).is_err());
        assert!(SizeGrid::new(0.0, 1.0, 8).is_err());
        assert!(SizeGrid::new(2.0, 1.0, 8).is_err());
    }

    #[test]
    fn cell_lookup() {
        let g = SizeGrid::new(1e-3, 1e3, 60).unwrap();
        for i in 0..60 {
            assert_eq!(g.cell_of(g.centers()[i]), Some(i));
            assert_eq!(g.cell_of(g.edges()[i]), Some(i));
        }
        assert_eq!(g.cell_of(1e3), Some(59));
        assert_eq!(g.cell_of(2e3), None);
        for i in 0..59 {
            assert_eq!(g.pivot_below(g.centers()[i]), Some(i));
            assert_eq!(g.pivot_below(g.centers()[i] * 1.0001), Some(i));
        }
        assert_eq!(g.pivot_below(g.centers()[59]), None);
    }

    #[test]
    fn indicator_first_moment() {
        let g = SizeGrid::shared(1.0, 2.0, 256).unwrap();
        let s = DensityState::new(g.clone(), vec![1.0; 256], 0.0).unwrap();
        assert_relative_eq!(s.moment(1.0), 1.5, max_relative = 1e-5);
        assert_relative_eq!(s.moment(0.0), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn exponential_moments() {
        let g = SizeGrid::shared(1e-4, 1e2, 512).unwrap();
        let (s, rep) = project_initial(&InitialData::Exponential { scale: 1.0 }, &g, 0.25).unwrap();
        assert!((s.moment(0.0) - 1.0).abs() < 1e-3);
        assert!((rep.m0 - 1.0).abs() < 1e-3);
        assert!((rep.m2 - 2.0).abs() < 1e-3);
        // the cells below 1e-4 miss ∫_0^{1e-4} v^{-1/2} dv = 0.02 of Γ(1/2) = √π
        let gamma_half = std::f64::consts::PI.sqrt();
        assert!((rep.m_neg - (gamma_half - 0.02)).abs() < 1e-3, "{}", rep.m_neg);
        let fine = SizeGrid::shared(1e-6, 1e2, 512).unwrap();
        let (f, _) = project_initial(&InitialData::Exponential { scale: 1.0 }, &fine, 0.25).unwrap();
        assert!((f.moment(-0.5) - gamma_half).abs() < 1e-2, "{}", f.moment(-0.5));
        for (v, x) in s.values().iter().zip(g.centers()).take(400) {
            assert_relative_eq!(*v, (-x).exp(), max_relative = 1e-3);
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let g = SizeGrid::shared(1.0, 4.0, 512).unwrap();
        let a = DensityState::new(g.clone(), vec![1.0; 512], 0.0).unwrap();
        let zero = DensityState::zeros(g.clone(), 0.0);
        assert_eq!(weighted_norm(&a, &a, 0.5).unwrap(), 0.0);
        assert_relative_eq!(weighted_norm(&a, &zero, 0.5).unwrap(), 9.5, max_relative = 1e-5);
        let a2 = a.scaled(2.0).unwrap();
        assert_relative_eq!(
            weighted_norm(&a2, &zero, 0.5).unwrap(),
            2.0 * weighted_norm(&a, &zero, 0.5).unwrap(),
            max_relative = 1e-15
        );
        let other = DensityState::zeros(SizeGrid::shared(1.0, 4.0, 64).unwrap(), 0.0);
        assert!(weighted_norm(&a, &other, 0.5).is_err());
    }

    #[test]
    fn power_law_indicator() {
        let g = SizeGrid::shared(0.1, 10.0, 64).unwrap();
        let data = InitialData::TruncatedPowerLaw { exponent: 0.0, lo: 1.0, hi: 2.0 };
        let (s, rep) = project_initial(&data, &g, 0.3).unwrap();
        assert_relative_eq!(rep.m0, 1.0, max_relative = 1e-12);
        for (i, v) in s.values().iter().enumerate() {
            let (a, b) = (g.edges()[i], g.edges()[i + 1]);
            if a >= 1.0 && b <= 2.0 {
                assert_relative_eq!(*v, 1.0, max_relative = 1e-14);
            } else if b <= 1.0 || a >= 2.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn table_parsing() {
        let t = Table::parse("# volume density\n0.5 1.0\n1.0 2.0 # trailing\n\n2.0 0.0\n").unwrap();
        assert_eq!(t.volumes, vec![0.5, 1.0, 2.0]);
        assert_eq!(t.eval(0.75), 1.5);
        assert_eq!(t.eval(0.1), 0.0);
        assert_eq!(t.eval(3.0), 0.0);
        assert!(matches!(Table::parse("1 1\n2 -1\n"), Err(Error::Input(_))));
        assert!(matches!(Table::parse("1 1\n1 2\n"), Err(Error::Input(_))));
        let missing = project_initial(
            &InitialData::Tabulated("/nonexistent/table.txt".into()),
            &SizeGrid::shared(0.1, 10.0, 8).unwrap(),
            0.3,
        );
        assert!(matches!(missing, Err(Error::Input(_))));
    }

    #[test]
    fn sampling() {
        let g = SizeGrid::shared(1e-2, 1e2, 16).unwrap();
        let vals: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let s = DensityState::new(g.clone(), vals, 0.0).unwrap();
        for i in 0..16 {
            assert_eq!(s.sample(g.centers()[i]), i as f64);
        }
        assert_eq!(s.sample(1e-3), 0.0);
        assert_eq!(s.sample(1e3), 0.0);
        let flat = DensityState::new(g.clone(), vec![0.7; 16], 0.0).unwrap();
        let mid = (g.centers()[3] * g.centers()[4]).sqrt();
        assert_relative_eq!(flat.sample(mid), 0.7, max_relative = 1e-15);
        let halfway = s.sample((g.centers()[5] * g.centers()[6]).sqrt());
        assert_relative_eq!(halfway, 5.5, max_relative = 1e-12);
    }

    #[test]
    fn tail_at_vmin_is_full_mass() {
        let g = SizeGrid::shared(1e-2, 1e2, 32).unwrap();
        let (s, _) = project_initial(&InitialData::Exponential { scale: 1.0 }, &g, 0.3).unwrap();
        assert_eq!(s.tail_first_moment(g.vmin()), s.moment(1.0));
        assert!(s.tail_first_moment(50.0) < s.tail_first_moment(25.0));
    }
}
