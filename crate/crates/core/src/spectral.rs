//! Eigen-decompositions of sector operators, energy windows, and the
//! product eigenbasis of the decoupled beams.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::basis::{fixed_weight_patterns, LadderConfig, MagDiff, SectorBasis};
use crate::error::{Error, Result};
use crate::lapack::{symmetric_eigen, EigenRange};
use crate::operator::SparseOperator;

/// Default largest matrix dimension handed to the dense eigensolver.
pub const DEFAULT_DENSE_CEILING: usize = 20_000;

/// Relative gap below which neighbouring eigenvalues count as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub struct DenseOptions {
    pub ceiling: usize,
}

impl Default for DenseOptions {
    fn default() -> Self {
        Self {
            ceiling: DEFAULT_DENSE_CEILING,
        }
    }
}

/// Sector states spanning one beam-swap parity block.
#[derive(Clone, Debug)]
struct ParityEmbedding {
    parity: i8,
    /// Per local state: primary sector index, partner index and the
    /// coefficient of each (partner == primary for swap-invariant patterns).
    terms: Vec<(usize, usize, f64, f64)>,
}

impl ParityEmbedding {
    fn build(perm: &[usize], parity: i8) -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let terms = (0..perm.len())
            .filter_map(|i| {
                let j = perm[i];
                match i.cmp(&j) {
                    std::cmp::Ordering::Less => Some((i, j, r, parity as f64 * r)),
                    std::cmp::Ordering::Equal if parity > 0 => Some((i, i, 1.0, 0.0)),
                    _ => None,
                }
            })
            .collect();
        Self { parity, terms }
    }

    fn dim(&self) -> usize {
        self.terms.len()
    }

    fn embed(&self, local: impl Iterator<Item = f64>, out: &mut [f64]) {
        for (&(i, j, ci, cj), c) in self.terms.iter().zip(local) {
            if i == j {
                out[i] = c * ci;
            } else {
                out[i] = c * ci;
                out[j] = c * cj;
            }
        }
    }

    /// Dense restriction of a swap-symmetric operator to this block.
    fn restrict(&self, op: &SparseOperator) -> Array2<f64> {
        let n = self.dim();
        let dim = op.dim();
        // sector index -> (local index, coefficient)
        let mut local = vec![(usize::MAX, 0.0); dim];
        for (a, &(i, j, ci, cj)) in self.terms.iter().enumerate() {
            local[i] = (a, ci);
            if i != j {
                local[j] = (a, cj);
            }
        }
        let mut m = Array2::zeros((n, n));
        for (b, &(i, j, ci, cj)) in self.terms.iter().enumerate() {
            let mut add = |k: usize, c: f64| {
                for (r, v) in op.row(k) {
                    let (a, cr) = local[r];
                    if a != usize::MAX {
                        m[[a, b]] += cr * v * c;
                    }
                }
            };
            add(i, ci);
            if i != j {
                add(j, cj);
            }
        }
        m
    }
}

#[derive(Clone, Debug)]
struct ParityBlock {
    embedding: ParityEmbedding,
    vectors: Array2<f64>,
}

#[derive(Clone, Debug)]
enum Storage {
    Dense(Array2<f64>),
    Blocked {
        blocks: Vec<ParityBlock>,
        /// Global eigen-index -> (block, local column).
        location: Vec<(usize, usize)>,
    },
}

/// Ascending eigenvalues with access to the orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    dim: usize,
    energies: Vec<f64>,
    parity: Option<Vec<i8>>,
    storage: Storage,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Beam-swap parity (+1, -1, or 0 when undetermined) per eigenvector.
    pub fn parities(&self) -> Option<&[i8]> {
        self.parity.as_deref()
    }

    /// Eigenvector `n` in sector coordinates.
    pub fn vector(&self, n: usize) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(v) => v.column(n).to_vec(),
            Storage::Blocked { blocks, location } => {
                let (b, col) = location[n];
                let block = &blocks[b];
                let mut out = vec![0.0; self.dim];
                block.embedding.embed(block.vectors.column(col).iter().copied(), &mut out);
                out
            }
        }
    }

    /// Eigenvectors `indices` as the columns of a `dim × indices.len()` matrix.
    pub fn vectors(&self, indices: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((self.dim, indices.len()));
        let columns: Vec<Vec<f64>> = indices.par_iter().map(|&n| self.vector(n)).collect();
        for (c, col) in columns.into_iter().enumerate() {
            out.column_mut(c).assign(&ndarray::Array1::from(col));
        }
        out
    }

    /// `<n|A|n>` for each requested eigenvector.
    pub fn diagonal_elements(&self, op: &SparseOperator, indices: &[usize]) -> Result<Vec<f64>> {
        if op.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: op.dim(),
            });
        }
        indices
            .par_iter()
            .map(|&n| {
                let v = self.vector(n);
                let av = op.apply_real(&v)?;
                Ok(v.iter().zip(&av).map(|(a, b)| a * b).sum())
            })
            .collect()
    }

    /// Coefficients `<n|psi>` of a real vector in the eigenbasis.
    pub fn project_real(&self, psi: &[f64]) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|n| self.vector(n).iter().zip(psi).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Full dense diagonalization; degenerate multiplets are rotated to
/// definite beam-swap parity when `swap` is given.
pub fn diagonalize_dense(
    op: &SparseOperator,
    swap: Option<&[usize]>,
    opts: DenseOptions,
) -> Result<SpectralDecomposition> {
    let dim = op.dim();
    if dim > opts.ceiling {
        return Err(Error::OverBudget {
            dim,
            ceiling: opts.ceiling,
        });
    }
    let (energies, mut vectors) = symmetric_eigen(op.to_dense(), EigenRange::All)?;
    let parity = match swap {
        Some(perm) => Some(resolve_parity(&energies, &mut vectors, perm)?),
        None => None,
    };
    Ok(SpectralDecomposition {
        dim,
        energies,
        parity,
        storage: Storage::Dense(vectors),
    })
}

fn degenerate_groups(energies: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=energies.len() {
        let split = i == energies.len()
            || (energies[i] - energies[i - 1]).abs() > DEGENERACY_TOL * energies[i].abs().max(1.0);
        if split {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

fn resolve_parity(energies: &[f64], vectors: &mut Array2<f64>, perm: &[usize]) -> Result<Vec<i8>> {
    let mut parity = vec![0i8; energies.len()];
    for group in degenerate_groups(energies) {
        let g = group.len();
        let block = vectors.slice(s![.., group.clone()]).to_owned();
        let swapped = Array2::from_shape_fn(block.dim(), |(i, c)| block[[perm[i], c]]);
        let overlap = block.t().dot(&swapped);
        let labels = if g == 1 {
            vec![overlap[[0, 0]]]
        } else {
            let sym = (&overlap + &overlap.t()) * 0.5;
            let (vals, rot) = symmetric_eigen(sym, EigenRange::All)?;
            vectors.slice_mut(s![.., group.clone()]).assign(&block.dot(&rot));
            vals
        };
        for (k, val) in labels.into_iter().enumerate() {
            parity[group.start + k] = if val > 0.5 {
                1
            } else if val < -0.5 {
                -1
            } else {
                0
            };
        }
    }
    Ok(parity)
}

/// Diagonalizes a beam-swap-symmetric operator separately in the even and
/// odd parity blocks. Every eigenvector then has definite parity and the
/// dense problems are half the sector dimension.
pub fn diagonalize_parity_blocks(
    op: &SparseOperator,
    basis: &SectorBasis,
    opts: DenseOptions,
) -> Result<SpectralDecomposition> {
    let perm = basis.swap_permutation();
    if op.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: op.dim(),
        });
    }
    for i in 0..op.dim() {
        for (j, v) in op.row(i) {
            if (op.get(perm[i], perm[j]) - v).abs() > 1e-14 * v.abs().max(1.0) {
                return Err(Error::InvalidConfig(
                    "operator is not invariant under the beam swap".into(),
                ));
            }
        }
    }
    let mut blocks = Vec::with_capacity(2);
    let mut tagged: Vec<(f64, usize, usize)> = Vec::with_capacity(op.dim());
    for parity in [1i8, -1] {
        let embedding = ParityEmbedding::build(&perm, parity);
        if embedding.dim() > opts.ceiling {
            return Err(Error::OverBudget {
                dim: embedding.dim(),
                ceiling: opts.ceiling,
            });
        }
        let local = embedding.restrict(op);
        let (vals, vectors) = symmetric_eigen(local, EigenRange::All)?;
        let b = blocks.len();
        tagged.extend(vals.into_iter().enumerate().map(|(c, e)| (e, b, c)));
        blocks.push(ParityBlock { embedding, vectors });
    }
    // ties broken by block then column, so the order is reproducible
    tagged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let energies = tagged.iter().map(|t| t.0).collect();
    let parity = tagged.iter().map(|t| blocks[t.1].embedding.parity).collect();
    let location = tagged.iter().map(|t| (t.1, t.2)).collect();
    Ok(SpectralDecomposition {
        dim: op.dim(),
        energies,
        parity: Some(parity),
        storage: Storage::Blocked { blocks, location },
    })
}

/// Spectral projector onto the eigenstates with energy in the closed
/// interval `[center - width/2, center + width/2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowProjector {
    pub center: f64,
    pub width: f64,
    /// Eigen-indices inside the window, ascending.
    pub indices: Vec<usize>,
}

impl WindowProjector {
    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, n: usize) -> bool {
        self.indices.binary_search(&n).is_ok()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.center - self.width / 2.0, self.center + self.width / 2.0)
    }
}

pub fn window_projector(spec: &SpectralDecomposition, center: f64, width: f64) -> Result<WindowProjector> {
    if !(width > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "window width must be positive, got {width}"
        )));
    }
    let (lo, hi) = (center - width / 2.0, center + width / 2.0);
    let indices = spec
        .energies()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e >= lo && e <= hi)
        .map(|(i, _)| i)
        .collect();
    Ok(WindowProjector {
        center,
        width,
        indices,
    })
}

/// Eigenpairs of one open XXZ chain in a fixed up-spin sector.
#[derive(Clone, Debug)]
pub struct ChainSector {
    pub up: usize,
    pub patterns: Vec<u32>,
    pub energies: Vec<f64>,
    /// Column `a` is eigenvector `a` over `patterns`.
    pub vectors: Array2<f64>,
}

impl ChainSector {
    pub fn dim(&self) -> usize {
        self.patterns.len()
    }
}

fn chain_sector(config: &LadderConfig, up: usize) -> Result<ChainSector> {
    let l = config.rungs;
    let patterns = fixed_weight_patterns(l, up);
    let d = patterns.len();
    let scale = config.beam_coupling * config.convention.bilinear_scale();
    let mut h = Array2::zeros((d, d));
    for (k, &s) in patterns.iter().enumerate() {
        for i in 0..l - 1 {
            let aligned = ((s >> i) & 1) == ((s >> (i + 1)) & 1);
            h[[k, k]] += scale * config.anisotropy * if aligned { 0.25 } else { -0.25 };
            if !aligned {
                let t = s ^ (0b11 << i);
                let j = patterns.binary_search(&t).expect("flip stays in the chain sector");
                h[[j, k]] += scale * 0.5;
            }
        }
    }
    let (energies, vectors) = symmetric_eigen(h, EigenRange::All)?;
    Ok(ChainSector {
        up,
        patterns,
        energies,
        vectors,
    })
}

/// One `X` subspace written as a product of a left and a right chain sector.
#[derive(Clone, Debug)]
pub struct ProductBlock {
    pub x: MagDiff,
    pub left_up: usize,
    pub right_up: usize,
    /// Sector index of pattern pair `(a', b')` at position `a' * d_R + b'`.
    pub coords: Vec<usize>,
    /// `ε_L(a) + ε_R(b)` at position `a * d_R + b`.
    pub energies: Vec<f64>,
}

impl ProductBlock {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// The eigenbasis of `H0` as products of single-chain eigenstates.
#[derive(Clone, Debug)]
pub struct ChainFactorizedBasis {
    config: LadderConfig,
    chains: Vec<ChainSector>,
    blocks: Vec<ProductBlock>,
    sector_dim: usize,
}

pub fn chain_factorize_h0(config: &LadderConfig) -> Result<ChainFactorizedBasis> {
    config.validate()?;
    let basis = SectorBasis::build(config)?;
    let l = config.rungs;
    let chains = (0..=l).map(|up| chain_sector(config, up)).collect::<Result<Vec<_>>>()?;
    let total = basis.up_count();
    let mut blocks = Vec::new();
    for x in basis.mag_diff_values() {
        let left_up = ((x.twice() + total as i32) / 2) as usize;
        let right_up = total - left_up;
        let (cl, cr) = (&chains[left_up], &chains[right_up]);
        let mut coords = Vec::with_capacity(cl.dim() * cr.dim());
        let mut energies = Vec::with_capacity(cl.dim() * cr.dim());
        for (a, &pl) in cl.patterns.iter().enumerate() {
            for (b, &pr) in cr.patterns.iter().enumerate() {
                coords.push(basis.index_of(basis.compose(pl, pr)).expect("pattern in sector"));
                energies.push(cl.energies[a] + cr.energies[b]);
            }
        }
        blocks.push(ProductBlock {
            x,
            left_up,
            right_up,
            coords,
            energies,
        });
    }
    Ok(ChainFactorizedBasis {
        config: config.clone(),
        chains,
        blocks,
        sector_dim: basis.dim(),
    })
}

impl ChainFactorizedBasis {
    pub fn config(&self) -> &LadderConfig {
        &self.config
    }

    pub fn chain(&self, up: usize) -> &ChainSector {
        &self.chains[up]
    }

    pub fn blocks(&self) -> &[ProductBlock] {
        &self.blocks
    }

    pub fn block(&self, x: MagDiff) -> Option<&ProductBlock> {
        self.blocks.iter().find(|b| b.x == x)
    }

    pub fn sector_dim(&self) -> usize {
        self.sector_dim
    }

    /// All product energies, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.blocks.iter().flat_map(|b| b.energies.iter().copied()).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Product eigenstate `|a>_L |b>_R` of block `x` in sector coordinates.
    pub fn product_state(&self, x: MagDiff, a: usize, b: usize) -> Option<Vec<f64>> {
        let block = self.block(x)?;
        let (cl, cr) = (&self.chains[block.left_up], &self.chains[block.right_up]);
        let mut out = vec![0.0; self.sector_dim];
        for ap in 0..cl.dim() {
            for bp in 0..cr.dim() {
                out[block.coords[ap * cr.dim() + bp]] = cl.vectors[[ap, a]] * cr.vectors[[bp, b]];
            }
        }
        Some(out)
    }

    /// Rotates each row, read as a `d_L × d_R` matrix `M`, to `U_L^T M U_R`.
    fn rotate_rows(&self, mat: ArrayView2<f64>, block: &ProductBlock) -> Array2<f64> {
        let (ul, ur) = (
            &self.chains[block.left_up].vectors,
            &self.chains[block.right_up].vectors,
        );
        let (dl, dr) = (ul.nrows(), ur.nrows());
        let mut out = Array2::zeros(mat.raw_dim());
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(mat.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut dst, src)| {
                let m = src.to_owned().into_shape_with_order((dl, dr)).expect("row length d_L * d_R");
                let r = ul.t().dot(&m).dot(ur);
                dst.assign(&r.into_shape_with_order(dl * dr).expect("same size"));
            });
        out
    }
}

/// Matrix block `<n|V|m>` for `n` in `Y`, `m` in `X`, in the `H0` eigenbasis.
#[derive(Clone, Debug)]
pub struct VBlock {
    pub from: MagDiff,
    pub to: MagDiff,
    /// `d_Y × d_X`.
    pub matrix: Array2<f64>,
    pub row_energies: Vec<f64>,
    pub col_energies: Vec<f64>,
}

impl VBlock {
    pub fn frobenius_sq(&self) -> f64 {
        self.matrix.iter().map(|v| v * v).sum()
    }
}

/// Transition block of a symmetric operator between neighbouring `X`
/// subspaces, rotated into the product eigenbasis of `H0`.
pub fn dirac_rotate_v_block(
    cfb: &ChainFactorizedBasis,
    v: &SparseOperator,
    x: MagDiff,
    y: MagDiff,
) -> Result<VBlock> {
    if (y.twice() - x.twice()).abs() != 2 {
        return Err(Error::NoTransition {
            from: x.value(),
            to: y.value(),
        });
    }
    if v.dim() != cfb.sector_dim {
        return Err(Error::DimensionMismatch {
            expected: cfb.sector_dim,
            got: v.dim(),
        });
    }
    if !v.is_symmetric() {
        return Err(Error::InvalidConfig("transition blocks need a symmetric operator".into()));
    }
    let (bx, by) = match (cfb.block(x), cfb.block(y)) {
        (Some(bx), Some(by)) => (bx, by),
        _ => {
            return Err(Error::NoTransition {
                from: x.value(),
                to: y.value(),
            })
        }
    };
    let mut row_local = vec![usize::MAX; cfb.sector_dim];
    for (p, &k) in by.coords.iter().enumerate() {
        row_local[k] = p;
    }
    // Computational-basis block, stored transposed (d_X × d_Y) so each
    // row is a column of V read off a row of the symmetric matrix.
    let mut t = Array2::zeros((bx.dim(), by.dim()));
    for (c, &k) in bx.coords.iter().enumerate() {
        for (r, val) in v.row(k) {
            let p = row_local[r];
            if p != usize::MAX {
                t[[c, p]] = val;
            }
        }
    }
    let half = cfb.rotate_rows(t.view(), by); // (d_X × d_Y), Y side rotated
    let full = cfb.rotate_rows(half.t().as_standard_layout().view(), bx); // (d_Y × d_X)
    Ok(VBlock {
        from: x,
        to: y,
        matrix: full,
        row_energies: by.energies.clone(),
        col_energies: bx.energies.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{build_h0, build_hamiltonian, build_v_flip, XProjectors};

    fn max_orthonormality_error(spec: &SpectralDecomposition) -> f64 {
        let all: Vec<usize> = (0..spec.len()).collect();
        let v = spec.vectors(&all);
        let g = v.t().dot(&v);
        let mut worst = 0.0f64;
        for ((i, j), x) in g.indexed_iter() {
            worst = worst.max((x - if i == j { 1.0 } else { 0.0 }).abs());
        }
        worst
    }

    #[test]
    fn flip_flop_pair() {
        let op = SparseOperator::from_rows(2, vec![vec![(1, 0.5)], vec![(0, 0.5)]], true);
        let spec = diagonalize_dense(&op, None, DenseOptions::default()).unwrap();
        assert!((spec.energies()[0] + 0.5).abs() < 1e-15);
        assert!((spec.energies()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn over_budget_is_refused() {
        let op = SparseOperator::identity(10);
        let err = diagonalize_dense(&op, None, DenseOptions { ceiling: 5 }).unwrap_err();
        assert!(matches!(err, Error::OverBudget { dim: 10, ceiling: 5 }));
    }

    #[test]
    fn dense_parity_resolution() {
        let cfg = LadderConfig::with_rungs(4);
        let b = SectorBasis::build(&cfg).unwrap();
        let h = build_hamiltonian(&b, &cfg);
        let perm = b.swap_permutation();
        let spec = diagonalize_dense(&h, Some(&perm), DenseOptions::default()).unwrap();
        assert!(max_orthonormality_error(&spec) < 1e-10);
        let trace: f64 = spec.energies().iter().sum();
        assert!((trace - h.trace()).abs() < 1e-8);
        for n in 0..spec.len() {
            let v = spec.vector(n);
            let p = spec.parities().unwrap()[n] as f64;
            assert!(p != 0.0);
            let worst = (0..v.len()).map(|i| (v[perm[i]] - p * v[i]).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-8, "state {n}: {worst}");
        }
    }

    #[test]
    fn parity_blocks_match_dense() {
        let cfg = LadderConfig::with_rungs(4);
        let b = SectorBasis::build(&cfg).unwrap();
        let h = build_hamiltonian(&b, &cfg);
        let dense = diagonalize_dense(&h, None, DenseOptions::default()).unwrap();
        let blocked = diagonalize_parity_blocks(&h, &b, DenseOptions::default()).unwrap();
        assert_eq!(dense.len(), blocked.len());
        for (a, c) in dense.energies().iter().zip(blocked.energies()) {
            assert!((a - c).abs() < 1e-10);
        }
        assert!(max_orthonormality_error(&blocked) < 1e-10);
        // residual of H v = E v
        for n in 0..blocked.len() {
            let v = blocked.vector(n);
            let hv = h.apply_real(&v).unwrap();
            let e = blocked.energies()[n];
            let res: f64 = hv.iter().zip(&v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-10);
        }
    }

    #[test]
    fn window_ranks() {
        let cfg = LadderConfig::with_rungs(3);
        let b = SectorBasis::build(&cfg).unwrap();
        let spec = diagonalize_dense(&build_hamiltonian(&b, &cfg), None, DenseOptions::default()).unwrap();
        let all = window_projector(&spec, 0.0, 1e3).unwrap();
        assert_eq!(all.rank(), b.dim());
        let lo = window_projector(&spec, -1.0, 2.0).unwrap();
        let hi = window_projector(&spec, 1.0 + 1e-6, 2.0 - 1e-6).unwrap();
        assert!(lo.indices.iter().all(|i| !hi.contains(*i)));
        let (lo_edge, hi_edge) = lo.bounds();
        assert_eq!(
            lo.rank(),
            spec.energies().iter().filter(|&&e| e >= lo_edge && e <= hi_edge).count()
        );
        assert!(window_projector(&spec, 0.0, 0.0).is_err());
        assert!(window_projector(&spec, 100.0, 1.0).unwrap().is_empty());
    }

    #[test]
    fn window_edges_are_closed() {
        let op = SparseOperator::diagonal(vec![-1.0, 0.0, 1.0, 1.5]);
        let spec = diagonalize_dense(&op, None, DenseOptions::default()).unwrap();
        assert_eq!(window_projector(&spec, 0.0, 2.0).unwrap().indices, vec![0, 1, 2]);
    }

    #[test]
    fn chain_sector_dimensions() {
        let cfb = chain_factorize_h0(&LadderConfig::default()).unwrap();
        assert_eq!(cfb.chain(4).dim(), 70);
        let dims: Vec<usize> = cfb.blocks().iter().map(ProductBlock::dim).collect();
        assert_eq!(dims, vec![1, 64, 784, 3136, 4900, 3136, 784, 64, 1]);
    }

    #[test]
    fn product_energies_reproduce_h0_spectrum() {
        let cfg = LadderConfig::with_rungs(3);
        let b = SectorBasis::build(&cfg).unwrap();
        let h0 = build_h0(&b, &cfg);
        let dense = diagonalize_dense(&h0, None, DenseOptions::default()).unwrap();
        let cfb = chain_factorize_h0(&cfg).unwrap();
        let product = cfb.spectrum();
        assert_eq!(product.len(), dense.len());
        for (a, c) in product.iter().zip(dense.energies()) {
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn product_states_are_h0_eigenstates() {
        let cfg = LadderConfig::with_rungs(5);
        let b = SectorBasis::build(&cfg).unwrap();
        let h0 = build_h0(&b, &cfg);
        let cfb = chain_factorize_h0(&cfg).unwrap();
        for block in cfb.blocks() {
            let dr = cfb.chain(block.right_up).dim();
            for p in (0..block.dim()).step_by(7) {
                let (a, c) = (p / dr, p % dr);
                let v = cfb.product_state(block.x, a, c).unwrap();
                let hv = h0.apply_real(&v).unwrap();
                let e = block.energies[p];
                let expectation: f64 = hv.iter().zip(&v).map(|(x, y)| x * y).sum();
                assert!((expectation - e).abs() < 1e-10);
                let res: f64 = hv.iter().zip(&v).map(|(x, y)| (x - e * y).powi(2)).sum::<f64>().sqrt();
                assert!(res < 1e-9);
            }
        }
    }

    #[test]
    fn h0_ground_state_is_two_chain_ground_states() {
        let cfg = LadderConfig::default();
        let cfb = chain_factorize_h0(&cfg).unwrap();
        // independent dense diagonalization of one 8-site chain at half filling
        let chain_cfg = LadderConfig::with_rungs(4);
        let _ = chain_cfg;
        let c = cfb.chain(4);
        let mut dense = Array2::<f64>::zeros((70, 70));
        for (k, &s) in c.patterns.iter().enumerate() {
            for i in 0..7 {
                let up_i = (s >> i) & 1;
                let up_j = (s >> (i + 1)) & 1;
                dense[[k, k]] += 0.6 * if up_i == up_j { 0.25 } else { -0.25 };
                if up_i != up_j {
                    let t = s ^ (0b11 << i);
                    let j = c.patterns.iter().position(|&p| p == t).unwrap();
                    dense[[j, k]] += 0.5;
                }
            }
        }
        let (e, _) = symmetric_eigen(dense, EigenRange::All).unwrap();
        let block0 = cfb.block(MagDiff::from_int(0)).unwrap();
        let ground = block0.energies.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((ground - 2.0 * e[0]).abs() < 1e-10);
    }

    #[test]
    fn v_block_shape_and_norm() {
        let cfg = LadderConfig::with_rungs(6);
        let b = SectorBasis::build(&cfg).unwrap();
        let v = build_v_flip(&b, &cfg);
        let cfb = chain_factorize_h0(&cfg).unwrap();
        let proj = XProjectors::build(&b);
        let x = MagDiff::from_int(0);
        let y = MagDiff::from_int(1);
        let block = dirac_rotate_v_block(&cfb, &v, x, y).unwrap();
        assert_eq!(block.matrix.dim(), (proj.get(y).unwrap().dim(), proj.get(x).unwrap().dim()));
        let to = proj.position(y).unwrap();
        let mut comp = 0.0;
        for &c in &proj.get(x).unwrap().indices {
            for (r, val) in v.row(c) {
                if proj.block_of(r) == to {
                    comp += val * val;
                }
            }
        }
        assert!((block.frobenius_sq() - comp).abs() < 1e-10 * comp);
        assert!(matches!(
            dirac_rotate_v_block(&cfb, &v, x, MagDiff::from_int(2)),
            Err(Error::NoTransition { .. })
        ));
    }

    #[test]
    fn v_block_matches_dense_change_of_basis() {
        let cfg = LadderConfig::with_rungs(2);
        let b = SectorBasis::build(&cfg).unwrap();
        let v = build_v_flip(&b, &cfg);
        let cfb = chain_factorize_h0(&cfg).unwrap();
        let vd = v.to_dense();
        for (x, y) in [(0, 1), (1, 0), (-1, 0)] {
            let (x, y) = (MagDiff::from_int(x), MagDiff::from_int(y));
            let block = dirac_rotate_v_block(&cfb, &v, x, y).unwrap();
            let (bx, by) = (cfb.block(x).unwrap(), cfb.block(y).unwrap());
            let drx = cfb.chain(bx.right_up).dim();
            let dry = cfb.chain(by.right_up).dim();
            for n in 0..by.dim() {
                let vn = cfb.product_state(y, n / dry, n % dry).unwrap();
                for m in 0..bx.dim() {
                    let vm = cfb.product_state(x, m / drx, m % drx).unwrap();
                    let mut expected = 0.0;
                    for i in 0..b.dim() {
                        for j in 0..b.dim() {
                            expected += vn[i] * vd[[i, j]] * vm[j];
                        }
                    }
                    assert!((block.matrix[[n, m]] - expected).abs() < 1e-12);
                }
            }
        }
    }
}
