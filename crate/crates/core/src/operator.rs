//! Real sparse operators on a sector basis and the ladder Hamiltonian terms.

use ndarray::Array2;
use num_complex::Complex64;

use crate::basis::{LadderConfig, MagDiff, SectorBasis};
use crate::error::{Error, Result};

/// Row-compressed real matrix.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds from per-row `(column, value)` lists; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_rows(dim: usize, rows: Vec<Vec<(usize, f64)>>, symmetric: bool) -> Self {
        assert_eq!(rows.len(), dim);
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                assert!(c < dim, "column {c} out of range for dimension {dim}");
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != 0.0 {
                    cols.push(c as u32);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
            symmetric,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(vec![1.0; dim])
    }

    pub fn diagonal(diag: Vec<f64>) -> Self {
        let dim = diag.len();
        Self::from_rows(dim, diag.into_iter().enumerate().map(|(i, d)| vec![(i, d)]).collect(), true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal_values().iter().sum()
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &SparseOperator, scale: f64) -> Result<SparseOperator> {
        check_dim(self.dim, other.dim)?;
        let rows = (0..self.dim)
            .map(|i| {
                self.row(i)
                    .chain(other.row(i).map(|(c, v)| (c, scale * v)))
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(self.dim, rows, self.symmetric && other.symmetric))
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        check_dim(self.dim, v.len())?;
        check_dim(self.dim, out.len())?;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += v[self.cols[k] as usize] * self.vals[k];
            }
            *o = acc;
        }
        Ok(())
    }

    pub fn apply_real(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        Ok((0..self.dim)
            .map(|i| self.row(i).map(|(c, a)| a * v[c]).sum())
            .collect())
    }

    /// `<v|A|v>` for a complex vector.
    pub fn expectation(&self, v: &[Complex64]) -> Result<Complex64> {
        let av = self.apply(v)?;
        Ok(v.iter().zip(&av).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            for (c, v) in self.row(i) {
                m[[i, c]] += v;
            }
        }
        m
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for (c, v) in self.row(i) {
                worst = worst.max((v - self.get(c, i)).abs());
            }
        }
        worst
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn bit(pattern: u32, site: usize) -> bool {
    (pattern >> site) & 1 == 1
}

/// Adds `scale * (S^x S^x + S^y S^y + Δ S^z S^z)` on bond `(i, j)` to `rows`.
fn add_xxz_bond(
    basis: &SectorBasis,
    rows: &mut [Vec<(usize, f64)>],
    i: usize,
    j: usize,
    scale: f64,
    anisotropy: f64,
    flip: bool,
    ising: bool,
) {
    for (k, &s) in basis.states().iter().enumerate() {
        let aligned = bit(s, i) == bit(s, j);
        if ising {
            let zz = if aligned { 0.25 } else { -0.25 };
            rows[k].push((k, scale * anisotropy * zz));
        }
        if flip && !aligned {
            let t = s ^ (1 << i) ^ (1 << j);
            let target = basis.index_of(t).expect("flip-flop preserves the sector");
            rows[target].push((k, scale * 0.5));
        }
    }
}

fn empty_rows(basis: &SectorBasis) -> Vec<Vec<(usize, f64)>> {
    vec![Vec::new(); basis.dim()]
}

/// Two decoupled open XXZ chains along the beams.
pub fn build_h0(basis: &SectorBasis, config: &LadderConfig) -> SparseOperator {
    let l = basis.rungs();
    let scale = config.beam_coupling * config.convention.bilinear_scale();
    let mut rows = empty_rows(basis);
    for offset in [0, l] {
        for i in 0..l - 1 {
            add_xxz_bond(basis, &mut rows, offset + i, offset + i + 1, scale, config.anisotropy, true, true);
        }
    }
    SparseOperator::from_rows(basis.dim(), rows, true)
}

fn build_rungs(basis: &SectorBasis, config: &LadderConfig, flip: bool, ising: bool) -> SparseOperator {
    let l = basis.rungs();
    let scale = config.convention.bilinear_scale();
    let mut rows = empty_rows(basis);
    for i in 0..l {
        add_xxz_bond(basis, &mut rows, i, l + i, scale, config.anisotropy, flip, ising);
    }
    SparseOperator::from_rows(basis.dim(), rows, true)
}

/// Rung coupling at unit strength; `κ` enters only through [`build_hamiltonian`].
pub fn build_v(basis: &SectorBasis, config: &LadderConfig) -> SparseOperator {
    build_rungs(basis, config, true, true)
}

/// Flip-flop part of the rung coupling: the only term changing `X`.
pub fn build_v_flip(basis: &SectorBasis, config: &LadderConfig) -> SparseOperator {
    build_rungs(basis, config, true, false)
}

/// `H = H0 + κ V`.
pub fn build_hamiltonian(basis: &SectorBasis, config: &LadderConfig) -> SparseOperator {
    build_h0(basis, config)
        .add_scaled(&build_v(basis, config), config.rung_coupling)
        .expect("same basis")
}

/// Diagonal magnetization-difference observable.
pub fn build_x_observable(basis: &SectorBasis) -> SparseOperator {
    SparseOperator::diagonal(
        basis
            .states()
            .iter()
            .map(|&s| basis.mag_diff(s).value())
            .collect(),
    )
}

/// One block of the partition of the sector by `X`.
#[derive(Clone, Debug)]
pub struct XSubspace {
    pub x: MagDiff,
    /// Sector indices, ascending.
    pub indices: Vec<usize>,
}

impl XSubspace {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn weight(&self, v: &[Complex64]) -> f64 {
        self.indices.iter().map(|&i| v[i].norm_sqr()).sum()
    }
}

/// Projectors `P_X`, ascending in `X`, covering the whole sector.
#[derive(Clone, Debug)]
pub struct XProjectors {
    subspaces: Vec<XSubspace>,
    label_of: Vec<usize>,
}

impl XProjectors {
    pub fn build(basis: &SectorBasis) -> Self {
        let values = basis.mag_diff_values();
        let mut subspaces: Vec<XSubspace> = values
            .iter()
            .map(|&x| XSubspace { x, indices: Vec::new() })
            .collect();
        let mut label_of = Vec::with_capacity(basis.dim());
        for (k, &s) in basis.states().iter().enumerate() {
            let x = basis.mag_diff(s);
            let pos = values.binary_search(&x).expect("X value in range");
            subspaces[pos].indices.push(k);
            label_of.push(pos);
        }
        Self { subspaces, label_of }
    }

    pub fn subspaces(&self) -> &[XSubspace] {
        &self.subspaces
    }

    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    pub fn labels(&self) -> Vec<MagDiff> {
        self.subspaces.iter().map(|s| s.x).collect()
    }

    pub fn position(&self, x: MagDiff) -> Option<usize> {
        self.subspaces.iter().position(|s| s.x == x)
    }

    pub fn get(&self, x: MagDiff) -> Option<&XSubspace> {
        self.position(x).map(|p| &self.subspaces[p])
    }

    /// Position (into [`Self::subspaces`]) of the block containing sector index `k`.
    pub fn block_of(&self, k: usize) -> usize {
        self.label_of[k]
    }

    /// `P_X` for every `X` of a state vector.
    pub fn distribution(&self, v: &[Complex64]) -> Vec<f64> {
        let mut p = vec![0.0; self.subspaces.len()];
        for (k, a) in v.iter().enumerate() {
            p[self.label_of[k]] += a.norm_sqr();
        }
        p
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subspaces.iter().map(XSubspace::dim).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::binomial;

    fn setup(l: usize) -> (LadderConfig, SectorBasis) {
        let cfg = LadderConfig::with_rungs(l);
        let b = SectorBasis::build(&cfg).unwrap();
        (cfg, b)
    }

    fn commutator_norm(a: &SparseOperator, b: &SparseOperator) -> f64 {
        let (a, b) = (a.to_dense(), b.to_dense());
        let c = a.dot(&b) - b.dot(&a);
        c.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn flip_flop_amplitude_is_half_j() {
        let (cfg, b) = setup(2);
        let h0 = build_h0(&b, &cfg);
        // left beam 01, right beam 10 -> left 10, right 10
        let s = b.index_of(b.compose(0b01, 0b10)).unwrap();
        let t = b.index_of(b.compose(0b10, 0b10)).unwrap();
        assert_eq!(h0.get(t, s), 0.5);
        let pauli = LadderConfig {
            convention: crate::basis::SpinConvention::Pauli,
            ..cfg
        };
        assert_eq!(build_h0(&b, &pauli).get(t, s), 2.0);
    }

    #[test]
    fn off_diagonal_entries_bounded_by_bond_count() {
        let (cfg, b) = setup(8);
        let h0 = build_h0(&b, &cfg);
        for i in 0..b.dim() {
            let off = h0.row(i).filter(|&(c, _)| c != i).count();
            assert!(off <= 2 * (8 - 1));
        }
    }

    #[test]
    fn operators_are_symmetric() {
        let (cfg, b) = setup(4);
        for op in [build_h0(&b, &cfg), build_v(&b, &cfg), build_hamiltonian(&b, &cfg)] {
            assert!(op.is_symmetric());
            assert_eq!(op.asymmetry(), 0.0);
        }
    }

    #[test]
    fn h0_and_x_commute_with_projectors() {
        for l in 2..=4 {
            let (cfg, b) = setup(l);
            let h0 = build_h0(&b, &cfg);
            let x = build_x_observable(&b);
            assert!(commutator_norm(&h0, &x) < 1e-12);
            for sub in XProjectors::build(&b).subspaces() {
                let mut d = vec![0.0; b.dim()];
                for &i in &sub.indices {
                    d[i] = 1.0;
                }
                let p = SparseOperator::diagonal(d);
                assert!(commutator_norm(&h0, &p) < 1e-12);
            }
        }
    }

    #[test]
    fn rung_flips_only_connect_neighbouring_x() {
        let (cfg, b) = setup(4);
        let v = build_v(&b, &cfg);
        for i in 0..b.dim() {
            let xi = b.mag_diff(b.state(i)).twice();
            for (j, _) in v.row(i) {
                let xj = b.mag_diff(b.state(j)).twice();
                assert!(i == j || (xi - xj).abs() == 2);
                if i != j {
                    assert_ne!(xi, xj);
                }
            }
        }
        // the Ising part is diagonal and commutes with every P_X
        let ising = v.add_scaled(&build_v_flip(&b, &cfg), -1.0).unwrap();
        for i in 0..b.dim() {
            assert!(ising.row(i).all(|(c, _)| c == i));
        }
    }

    #[test]
    fn flip_weight_between_x_blocks() {
        let (cfg, b) = setup(8);
        let v = build_v_flip(&b, &cfg);
        let proj = XProjectors::build(&b);
        for x in -4..4 {
            let from = proj.get(MagDiff::from_int(x)).unwrap();
            let to = proj.position(MagDiff::from_int(x + 1)).unwrap();
            let mut sum = 0.0;
            for &c in &from.indices {
                // column c of a symmetric matrix equals row c
                for (r, val) in v.row(c) {
                    if proj.block_of(r) == to {
                        sum += val * val;
                    }
                }
            }
            let d = from.dim() as f64;
            let expected = 0.25 * d * ((4 - x) * (4 - x)) as f64 / 8.0;
            assert!((sum - expected).abs() < 1e-9, "X={x}: {sum} vs {expected}");
        }
    }

    #[test]
    fn x_observable_values() {
        let (_, b) = setup(8);
        let x = build_x_observable(&b);
        assert_eq!(x.get(b.index_of(0x00ff).unwrap(), b.index_of(0x00ff).unwrap()), 4.0);
        let s = b.index_of(0b0000_0111_0001_1111).unwrap();
        assert_eq!(x.get(s, s), 1.0);
        assert_eq!(x.trace(), 0.0);
    }

    #[test]
    fn projector_dimensions() {
        let (_, b) = setup(8);
        let p = XProjectors::build(&b);
        let dims = p.dims();
        assert_eq!(dims, vec![1, 64, 784, 3136, 4900, 3136, 784, 64, 1]);
        assert_eq!(dims.iter().sum::<usize>(), 12870);
        for (sub, d) in p.subspaces().iter().zip(&dims) {
            let nl = (4 + sub.x.twice() / 2) as usize;
            assert_eq!(*d as u64, binomial(8, nl) * binomial(8, 8 - nl));
        }
        let mut seen = vec![false; b.dim()];
        for sub in p.subspaces() {
            for &i in &sub.indices {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn apply_matches_dense() {
        let (cfg, b) = setup(2);
        let h = build_hamiltonian(&b, &cfg);
        let dense = h.to_dense();
        let v: Vec<Complex64> = (0..b.dim())
            .map(|i| Complex64::new(i as f64 * 0.3 - 0.5, 1.0 / (i as f64 + 1.0)))
            .collect();
        let hv = h.apply(&v).unwrap();
        for i in 0..b.dim() {
            let expected: Complex64 = (0..b.dim()).map(|j| v[j] * dense[[i, j]]).sum();
            assert!((hv[i] - expected).norm() < 1e-14);
        }
        assert!(h.expectation(&v).unwrap().im.abs() < 1e-14);
        assert_eq!(SparseOperator::identity(b.dim()).apply(&v).unwrap(), v);
        assert!(matches!(
            h.apply(&v[..3]),
            Err(Error::DimensionMismatch { expected: 6, got: 3 })
        ));
    }

    #[test]
    fn beam_swap_symmetry() {
        let (cfg, b) = setup(3);
        let h = build_hamiltonian(&b, &cfg);
        let x = build_x_observable(&b);
        let perm = b.swap_permutation();
        for i in 0..b.dim() {
            for (j, v) in h.row(i) {
                assert!((h.get(perm[i], perm[j]) - v).abs() < 1e-14);
            }
            assert_eq!(x.get(perm[i], perm[i]), -x.get(i, i));
        }
    }
}
