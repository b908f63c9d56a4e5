//! Trajectory deviations, matrix-structure summaries of the rotated rung
//! coupling, and eigenstate diagonal statistics.

use rayon::prelude::*;

use crate::basis::MagDiff;
use crate::error::{Error, Result};
use crate::grid::check_same_times;
use crate::operator::SparseOperator;
use crate::propagation::ObservableSeries;
use crate::spectral::{SpectralDecomposition, VBlock, WindowProjector};
use crate::stochastic::DistributionSeries;

/// `∫|a_Q - a_S| dt / (t_end - t_0)` by the trapezoidal rule.
pub fn delta_metric(times_q: &[f64], a_q: &[f64], times_s: &[f64], a_s: &[f64]) -> Result<f64> {
    check_same_times(times_q, times_s)?;
    if a_q.len() != times_q.len() || a_s.len() != times_s.len() {
        return Err(Error::GridMismatch("series and time grid lengths differ".into()));
    }
    if times_q.len() < 2 {
        return Err(Error::GridMismatch("delta needs at least two grid points".into()));
    }
    let mut integral = 0.0;
    for k in 1..times_q.len() {
        let d0 = (a_q[k - 1] - a_s[k - 1]).abs();
        let d1 = (a_q[k] - a_s[k]).abs();
        integral += 0.5 * (times_q[k] - times_q[k - 1]) * (d0 + d1);
    }
    Ok(integral / (times_q[times_q.len() - 1] - times_q[0]))
}

/// δ values of one class of initial states.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaClass {
    pub name: String,
    pub deltas: Vec<f64>,
}

impl DeltaClass {
    pub fn mean(&self) -> f64 {
        self.deltas.iter().sum::<f64>() / self.deltas.len().max(1) as f64
    }
}

/// Per-state δ values grouped by class, with the mean trajectories compared.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaReport {
    pub classes: Vec<DeltaClass>,
    pub times: Vec<f64>,
    /// Quantum `a(t)` of the reference state and the stochastic prediction.
    pub quantum_mean: Vec<f64>,
    pub stochastic_mean: Vec<f64>,
}

impl DeltaReport {
    pub fn class(&self, name: &str) -> Option<&DeltaClass> {
        self.classes.iter().find(|c| c.name == name)
    }
}

/// The 50×50-style raw sub-block nearest zero energy.
#[derive(Clone, Debug, PartialEq)]
pub struct FineBlock {
    pub row_energies: Vec<f64>,
    pub col_energies: Vec<f64>,
    /// Row-major values, `row_energies.len() × col_energies.len()`.
    pub values: Vec<f64>,
}

impl FineBlock {
    /// Element mean and its standard error.
    pub fn mean_and_stderr(&self) -> (f64, f64) {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarseBin {
    pub row_center: f64,
    pub col_center: f64,
    /// Sum of `|V_nm|²` over the bin.
    pub sum_sq: f64,
    pub count: usize,
}

impl CoarseBin {
    pub fn mean_sq(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_sq / self.count as f64
        }
    }
}

/// One axis of the coarse grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BinAxis {
    pub origin: f64,
    pub width: f64,
    pub count: usize,
}

impl BinAxis {
    /// Bins of `width` from the smallest energy; degenerate levels (within
    /// `1e-9`) share the bin of their lowest member.
    fn new(energies: &[f64], width: f64) -> Self {
        let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let count = (((hi - lo) / width).ceil() as usize).max(1);
        Self { origin: lo, width, count }
    }

    fn assign(&self, energies: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..energies.len()).collect();
        order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]).then(a.cmp(&b)));
        let mut out = vec![0; energies.len()];
        let mut anchor = f64::NEG_INFINITY;
        let mut bin = 0;
        for &i in &order {
            if energies[i] - anchor > 1e-9 {
                anchor = energies[i];
                bin = (((anchor - self.origin) / self.width).floor() as usize).min(self.count - 1);
            }
            out[i] = bin;
        }
        out
    }

    pub fn center(&self, k: usize) -> f64 {
        self.origin + (k as f64 + 0.5) * self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockStructureReport {
    pub from: MagDiff,
    pub to: MagDiff,
    pub fine: FineBlock,
    pub row_axis: BinAxis,
    pub col_axis: BinAxis,
    /// Row-major over `(row bin, column bin)`, including empty bins.
    pub coarse: Vec<CoarseBin>,
    /// Set when the block was smaller than the requested fine size.
    pub notice: Option<String>,
}

impl BlockStructureReport {
    /// Element-weighted mean `|V|²` over bins whose centre distance lies in `[lo, hi)`.
    pub fn mean_sq_by_energy_difference(&self, lo: f64, hi: f64) -> Option<f64> {
        let (mut sum, mut count) = (0.0, 0usize);
        for b in &self.coarse {
            let d = (b.row_center - b.col_center).abs();
            if d >= lo && d < hi {
                sum += b.sum_sq;
                count += b.count;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    pub fn total_weight(&self) -> f64 {
        self.coarse.iter().map(|b| b.sum_sq).sum()
    }

    pub fn total_count(&self) -> usize {
        self.coarse.iter().map(|b| b.count).sum()
    }
}

/// Indices of the `k` energies nearest zero, returned in ascending energy.
fn nearest_zero(energies: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].abs().total_cmp(&energies[b].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]).then(a.cmp(&b)));
    order
}

pub fn block_structure(block: &VBlock, fine_size: usize, bin_width: f64) -> Result<BlockStructureReport> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidConfig(format!("bin width must be positive, got {bin_width}")));
    }
    let (nr, nc) = block.matrix.dim();
    let notice = (fine_size > nr.min(nc)).then(|| {
        format!("block is {nr}x{nc}; fine block shrunk from {fine_size} to {}", nr.min(nc))
    });
    let rows = nearest_zero(&block.row_energies, fine_size.min(nr));
    let cols = nearest_zero(&block.col_energies, fine_size.min(nc));
    let mut values = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            values.push(block.matrix[[r, c]]);
        }
    }
    let fine = FineBlock {
        row_energies: rows.iter().map(|&r| block.row_energies[r]).collect(),
        col_energies: cols.iter().map(|&c| block.col_energies[c]).collect(),
        values,
    };
    let row_axis = BinAxis::new(&block.row_energies, bin_width);
    let col_axis = BinAxis::new(&block.col_energies, bin_width);
    let row_bin = row_axis.assign(&block.row_energies);
    let col_bin = col_axis.assign(&block.col_energies);
    let ncb = col_axis.count;
    // per-row partial sums, merged in row order
    let partial: Vec<(usize, Vec<f64>, Vec<usize>)> = block
        .matrix
        .outer_iter()
        .into_par_iter()
        .enumerate()
        .map(|(r, row)| {
            let mut sums = vec![0.0; ncb];
            let mut counts = vec![0usize; ncb];
            for (c, v) in row.iter().enumerate() {
                sums[col_bin[c]] += v * v;
                counts[col_bin[c]] += 1;
            }
            (row_bin[r], sums, counts)
        })
        .collect();
    let mut sum_sq = vec![0.0; row_axis.count * ncb];
    let mut count = vec![0usize; row_axis.count * ncb];
    for (rb, sums, counts) in partial {
        for c in 0..ncb {
            sum_sq[rb * ncb + c] += sums[c];
            count[rb * ncb + c] += counts[c];
        }
    }
    let mut coarse = Vec::with_capacity(sum_sq.len());
    for rb in 0..row_axis.count {
        for cb in 0..ncb {
            coarse.push(CoarseBin {
                row_center: row_axis.center(rb),
                col_center: col_axis.center(cb),
                sum_sq: sum_sq[rb * ncb + cb],
                count: count[rb * ncb + cb],
            });
        }
    }
    Ok(BlockStructureReport {
        from: block.from,
        to: block.to,
        fine,
        row_axis,
        col_axis,
        coarse,
        notice,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EthRow {
    pub energy: f64,
    pub x_diag: f64,
    pub x2_diag: f64,
    pub parity: i8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EthReport {
    pub rows: Vec<EthRow>,
    pub max_abs_x: f64,
    pub mean_x2: f64,
    pub std_x2: f64,
}

fn squared(op: &SparseOperator) -> Result<SparseOperator> {
    let diag = op.diagonal_values();
    let is_diagonal = (0..op.dim()).all(|i| op.row(i).all(|(j, _)| j == i));
    if !is_diagonal {
        return Err(Error::InvalidConfig("observable must be diagonal in the sector basis".into()));
    }
    Ok(SparseOperator::diagonal(diag.iter().map(|v| v * v).collect()))
}

/// `<n|x̂|n>` and `<n|x̂²|n>` for the eigenstates in `window`.
pub fn eth_diagonals(spec: &SpectralDecomposition, x: &SparseOperator, window: &WindowProjector) -> Result<EthReport> {
    let x2 = squared(x)?;
    let xd = spec.diagonal_elements(x, &window.indices)?;
    let x2d = spec.diagonal_elements(&x2, &window.indices)?;
    let parities = spec.parities();
    let rows: Vec<EthRow> = window
        .indices
        .iter()
        .enumerate()
        .map(|(k, &n)| EthRow {
            energy: spec.energies()[n],
            x_diag: xd[k],
            x2_diag: x2d[k],
            parity: parities.map_or(0, |p| p[n]),
        })
        .collect();
    let n = rows.len().max(1) as f64;
    let mean_x2 = rows.iter().map(|r| r.x2_diag).sum::<f64>() / n;
    let std_x2 = (rows.iter().map(|r| (r.x2_diag - mean_x2).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EthReport {
        max_abs_x: rows.iter().map(|r| r.x_diag.abs()).fold(0.0, f64::max),
        rows,
        mean_x2,
        std_x2,
    })
}

/// `Σ_n <n|x̂²|n>` over every eigenstate.
pub fn sector_trace_x2(spec: &SpectralDecomposition, x: &SparseOperator) -> Result<f64> {
    let all: Vec<usize> = (0..spec.len()).collect();
    Ok(spec.diagonal_elements(&squared(x)?, &all)?.iter().sum())
}

/// Pointwise deviations between a quantum and a stochastic series.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub labels: Vec<MagDiff>,
    pub times: Vec<f64>,
    /// `quantum - stochastic` per time and `X`.
    pub dp: Vec<Vec<f64>>,
    pub da: Vec<f64>,
    pub dvar: Vec<f64>,
    pub sup_p: f64,
    pub sup_a: f64,
    pub sup_var: f64,
}

pub fn compare_report(quantum: &ObservableSeries, stochastic: &DistributionSeries) -> Result<CompareReport> {
    check_same_times(&quantum.times, &stochastic.times)?;
    if quantum.labels != stochastic.labels {
        return Err(Error::GridMismatch("series cover different X values".into()));
    }
    let (a_s, v_s) = crate::stochastic::moments(stochastic);
    let dp: Vec<Vec<f64>> = quantum
        .probs
        .iter()
        .zip(&stochastic.probs)
        .map(|(p, q)| p.iter().zip(q).map(|(a, b)| a - b).collect())
        .collect();
    let da: Vec<f64> = quantum.mean.iter().zip(&a_s).map(|(a, b)| a - b).collect();
    let dvar: Vec<f64> = quantum.variance.iter().zip(&v_s).map(|(a, b)| a - b).collect();
    let sup = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok(CompareReport {
        sup_p: dp.iter().map(|r| sup(r)).fold(0.0, f64::max),
        sup_a: sup(&da),
        sup_var: sup(&dvar),
        labels: quantum.labels.clone(),
        times: quantum.times.clone(),
        dp,
        da,
        dvar,
    })
}
