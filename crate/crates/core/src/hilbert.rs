//! Basis indexing, states, and sparse operators on the 3^n tensor-product
//! space of n three-level emitters.
//!
//! Basis convention: emitter 1 is the least-significant base-3 digit, so a
//! level assignment `[l1, l2, ..., ln]` maps to index `Σ_j l_j · 3^(j-1)`.
//! This ordering is load-bearing for every golden file and must not change.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Hard cap on the emitter count. 3^8 = 6561 keeps a dense density matrix
/// (~4.3e7 complex entries) within desktop memory.
pub const MAX_EMITTERS: usize = 8;

/// One of the three emitter levels, ordered g < f < e.
///
/// `e -> f` couples to the waveguide, `e -> g` and `f -> g` are free-space
/// channels. The integer values 0, 1, 2 are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    G = 0,
    F = 1,
    E = 2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::G, Level::F, Level::E];

    pub fn from_digit(d: usize) -> Level {
        match d {
            0 => Level::G,
            1 => Level::F,
            2 => Level::E,
            _ => panic!("base-3 digit out of range: {d}"),
        }
    }

    pub fn digit(self) -> usize {
        self as usize
    }
}

/// Hilbert-space dimension 3^n, rejecting emitter counts past [`MAX_EMITTERS`].
pub fn basis_dim(n_emitters: usize) -> Result<usize> {
    if n_emitters > MAX_EMITTERS {
        return Err(Error::CapacityExceeded {
            n: n_emitters,
            max: MAX_EMITTERS,
        });
    }
    Ok(3usize.pow(n_emitters as u32))
}

/// Basis index of a level assignment, emitter 1 least significant.
pub fn basis_index(levels: &[Level]) -> usize {
    levels
        .iter()
        .rev()
        .fold(0, |acc, level| acc * 3 + level.digit())
}

/// Inverse of [`basis_index`].
pub fn decode_basis_index(mut index: usize, n_emitters: usize) -> Vec<Level> {
    let mut levels = Vec::with_capacity(n_emitters);
    for _ in 0..n_emitters {
        levels.push(Level::from_digit(index % 3));
        index /= 3;
    }
    levels
}

/// Digit of `level` for emitter `j` (1-based) within basis state `index`.
#[inline]
pub fn level_at(index: usize, j: usize) -> Level {
    Level::from_digit(index / 3usize.pow((j - 1) as u32) % 3)
}

/// Pure state of `n_emitters` three-level emitters, dense complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_emitters: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Zero-filled (invalid as a physical state until amplitudes are set).
    pub fn zeros(n_emitters: usize) -> Result<StateVector> {
        let dim = basis_dim(n_emitters)?;
        Ok(StateVector {
            n_emitters,
            amplitudes: vec![C64::ZERO; dim],
        })
    }

    /// Computational basis state for a level assignment.
    pub fn basis_state(levels: &[Level]) -> Result<StateVector> {
        let mut psi = StateVector::zeros(levels.len())?;
        psi.amplitudes[basis_index(levels)] = C64::ONE;
        Ok(psi)
    }

    /// All emitters in |g>.
    pub fn ground(n_emitters: usize) -> Result<StateVector> {
        StateVector::basis_state(&vec![Level::G; n_emitters])
    }

    pub fn from_amplitudes(n_emitters: usize, amplitudes: Vec<C64>) -> Result<StateVector> {
        let dim = basis_dim(n_emitters)?;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: amplitudes.len(),
            });
        }
        Ok(StateVector {
            n_emitters,
            amplitudes,
        })
    }

    pub fn n_emitters(&self) -> usize {
        self.n_emitters
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale to unit norm. Errors on (near-)zero vectors.
    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if norm < 1e-12 {
            return Err(Error::Numerical(
                "cannot normalize a vanishing state vector".into(),
            ));
        }
        let inv = 1.0 / norm;
        for a in &mut self.amplitudes {
            *a *= inv;
        }
        Ok(())
    }

    /// Inner product <self|other>.
    pub fn dot(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Density matrix on the 3^n space, dense row-major storage.
///
/// Construction does not enforce physicality; [`DensityMatrix::validate`]
/// checks Hermiticity, unit trace, and (spot-checked) positivity, and the
/// integrators call it at sampled times only. Raw Lindblad-generator outputs
/// (trace ~ 0) use the same container.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_emitters: usize,
    dim: usize,
    elements: Vec<C64>,
}

impl DensityMatrix {
    pub fn zeros(n_emitters: usize) -> Result<DensityMatrix> {
        let dim = basis_dim(n_emitters)?;
        Ok(DensityMatrix {
            n_emitters,
            dim,
            elements: vec![C64::ZERO; dim * dim],
        })
    }

    /// Projector |psi><psi|.
    pub fn from_pure(psi: &StateVector) -> DensityMatrix {
        let dim = psi.dim();
        let mut elements = vec![C64::ZERO; dim * dim];
        for (r, a) in psi.amplitudes.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            for (c, b) in psi.amplitudes.iter().enumerate() {
                elements[r * dim + c] += a * b.conj();
            }
        }
        DensityMatrix {
            n_emitters: psi.n_emitters,
            dim,
            elements,
        }
    }

    pub fn n_emitters(&self) -> usize {
        self.n_emitters
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.elements[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.elements[row * self.dim + col] = value;
    }

    pub fn elements(&self) -> &[C64] {
        &self.elements
    }

    pub(crate) fn elements_mut(&mut self) -> &mut [C64] {
        &mut self.elements
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// max |rho - rho^dagger| over entries.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in r..self.dim {
                let d = (self.get(r, c) - self.get(c, r).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let m = faer::Mat::from_fn(self.dim, self.dim, |r, c| {
            0.5 * (self.get(r, c) + self.get(c, r).conj())
        });
        let evd = faer::linalg::solvers::SelfAdjointEigen::new(m.as_ref(), faer::Side::Lower)
            .map_err(|_| Error::Eigen)?;
        let mut eigs: Vec<f64> = (0..self.dim).map(|i| evd.S()[i].re).collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        Ok(eigs)
    }

    /// Check the state invariants: Hermitian within 1e-10, unit trace within
    /// 1e-8, eigenvalues >= -1e-8.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix not Hermitian: |rho - rho^+| = {herm:.3e}"
            )));
        }
        let trace = self.trace();
        if (trace.re - 1.0).abs() > 1e-8 || trace.im.abs() > 1e-8 {
            return Err(Error::Numerical(format!(
                "density matrix trace {trace} differs from 1"
            )));
        }
        let min_eig = self.eigenvalues()?.first().copied().unwrap_or(0.0);
        if min_eig < -1e-8 {
            return Err(Error::Numerical(format!(
                "density matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(())
    }

    /// self += weight * other
    pub fn add_scaled(&mut self, weight: C64, other: &DensityMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.elements.iter_mut().zip(&other.elements) {
            *a += weight * b;
        }
    }

    pub fn scale(&mut self, factor: C64) {
        for a in &mut self.elements {
            *a *= factor;
        }
    }
}

/// Sparse complex operator in compressed-row form. The sparsity structure is
/// fixed at construction; all algebra returns new operators.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl OperatorMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> OperatorMatrix {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            debug_assert!(r < dim && c < dim);
            match merged.last_mut() {
                Some((lr, lc, lv)) if *lr == r && *lc == c => *lv += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != C64::ZERO);

        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(merged.len());
        let mut values = Vec::with_capacity(merged.len());
        let mut row = 0;
        for (r, c, v) in merged {
            while row < r {
                row += 1;
                row_ptr[row] = col_idx.len();
            }
            col_idx.push(c);
            values.push(v);
        }
        while row < dim {
            row += 1;
            row_ptr[row] = col_idx.len();
        }
        OperatorMatrix {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(dim: usize) -> OperatorMatrix {
        OperatorMatrix {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![C64::ONE; dim],
        }
    }

    pub fn zero(dim: usize) -> OperatorMatrix {
        OperatorMatrix {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        for k in self.row_ptr[row]..self.row_ptr[row + 1] {
            if self.col_idx[k] == col {
                return self.values[k];
            }
        }
        C64::ZERO
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> OperatorMatrix {
        let triplets = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        OperatorMatrix::from_triplets(self.dim, triplets)
    }

    /// self + weight * other
    pub fn add_scaled(&self, weight: C64, other: &OperatorMatrix) -> OperatorMatrix {
        debug_assert_eq!(self.dim, other.dim);
        let mut triplets: Vec<_> = self.triplets().collect();
        triplets.extend(other.triplets().map(|(r, c, v)| (r, c, weight * v)));
        OperatorMatrix::from_triplets(self.dim, triplets)
    }

    pub fn scaled(&self, factor: C64) -> OperatorMatrix {
        let triplets = self
            .triplets()
            .map(|(r, c, v)| (r, c, factor * v))
            .collect();
        OperatorMatrix::from_triplets(self.dim, triplets)
    }

    /// Sparse product self * other.
    pub fn matmul(&self, other: &OperatorMatrix) -> OperatorMatrix {
        debug_assert_eq!(self.dim, other.dim);
        let mut triplets = Vec::new();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.col_idx[k];
                let left = self.values[k];
                for k2 in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    triplets.push((r, other.col_idx[k2], left * other.values[k2]));
                }
            }
        }
        OperatorMatrix::from_triplets(self.dim, triplets)
    }

    /// Exact sparse matrix-vector product; no renormalization.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: psi.dim(),
            });
        }
        let mut out = vec![C64::ZERO; self.dim];
        self.apply_slice(psi.amplitudes(), &mut out);
        Ok(StateVector {
            n_emitters: psi.n_emitters,
            amplitudes: out,
        })
    }

    #[inline]
    pub(crate) fn apply_slice(&self, input: &[C64], output: &mut [C64]) {
        for r in 0..self.dim {
            let mut acc = C64::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * input[self.col_idx[k]];
            }
            output[r] = acc;
        }
    }

    /// output += weight * (self * input)
    #[inline]
    pub(crate) fn apply_scaled_accumulate(&self, input: &[C64], output: &mut [C64], weight: C64) {
        for r in 0..self.dim {
            let mut acc = C64::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * input[self.col_idx[k]];
            }
            output[r] += weight * acc;
        }
    }

    /// ||self * input||^2 without materializing the product.
    #[inline]
    pub(crate) fn apply_norm_sqr(&self, input: &[C64]) -> f64 {
        let mut total = 0.0;
        for r in 0..self.dim {
            let mut acc = C64::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * input[self.col_idx[k]];
            }
            total += acc.norm_sqr();
        }
        total
    }

    /// Dense product self * rho (sparse left-multiplication).
    pub(crate) fn mul_dense(&self, rho: &DensityMatrix, out: &mut DensityMatrix) {
        let dim = self.dim;
        out.elements_mut().fill(C64::ZERO);
        for r in 0..dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.col_idx[k];
                let v = self.values[k];
                let src = &rho.elements[mid * dim..(mid + 1) * dim];
                let dst = &mut out.elements[r * dim..(r + 1) * dim];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
    }

    /// Dense product rho * self (sparse right-multiplication).
    pub(crate) fn mul_dense_right(&self, rho: &DensityMatrix, out: &mut DensityMatrix) {
        let dim = self.dim;
        out.elements_mut().fill(C64::ZERO);
        // (rho * A)_{r c} = sum_m rho_{r m} A_{m c}; iterate A rows as m.
        for m in 0..dim {
            for k in self.row_ptr[m]..self.row_ptr[m + 1] {
                let c = self.col_idx[k];
                let v = self.values[k];
                for r in 0..dim {
                    out.elements[r * dim + c] += rho.elements[r * dim + m] * v;
                }
            }
        }
    }

    /// <psi| self |psi>.
    pub fn expectation_state(&self, psi: &StateVector) -> Result<C64> {
        if psi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: psi.dim(),
            });
        }
        let amps = psi.amplitudes();
        let mut acc = C64::ZERO;
        for r in 0..self.dim {
            let mut row = C64::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * amps[self.col_idx[k]];
            }
            acc += amps[r].conj() * row;
        }
        Ok(acc)
    }

    /// Tr(self * rho).
    pub fn expectation_density(&self, rho: &DensityMatrix) -> Result<C64> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        let mut acc = C64::ZERO;
        for (r, c, v) in self.triplets() {
            acc += v * rho.get(c, r);
        }
        Ok(acc)
    }

    /// max |A - A^dagger| over entries.
    pub fn hermiticity_error(&self) -> f64 {
        let dag = self.dagger();
        let mut worst = 0.0f64;
        for (r, c, v) in self.triplets() {
            worst = worst.max((v - dag.get(r, c)).norm());
        }
        for (r, c, v) in dag.triplets() {
            worst = worst.max((v - self.get(r, c)).norm());
        }
        worst
    }
}

/// Single-emitter transition operator sigma_ab^j = |a><b| on emitter `j`
/// (1-based), identity elsewhere. Exactly 3^(n-1) entries, all equal to 1.
pub fn transition_operator(
    j: usize,
    a: Level,
    b: Level,
    n_emitters: usize,
) -> Result<OperatorMatrix> {
    let dim = basis_dim(n_emitters)?;
    if j == 0 || j > n_emitters {
        return Err(Error::EmitterOutOfRange {
            index: j,
            count: n_emitters,
        });
    }
    let stride = 3isize.pow((j - 1) as u32);
    let shift = (a.digit() as isize - b.digit() as isize) * stride;
    let mut triplets = Vec::with_capacity(dim / 3);
    for col in 0..dim {
        if level_at(col, j) == b {
            triplets.push(((col as isize + shift) as usize, col, C64::ONE));
        }
    }
    Ok(OperatorMatrix::from_triplets(dim, triplets))
}

/// Expectation value of `op` in a pure or mixed state.
pub enum StateRef<'a> {
    Pure(&'a StateVector),
    Mixed(&'a DensityMatrix),
}

pub fn expectation(op: &OperatorMatrix, state: StateRef<'_>) -> Result<C64> {
    match state {
        StateRef::Pure(psi) => op.expectation_state(psi),
        StateRef::Mixed(rho) => op.expectation_density(rho),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectories::rng::CounterRng;
    use Level::{E, F, G};

    fn random_operator(dim: usize, nnz: usize, rng: &mut CounterRng) -> OperatorMatrix {
        let triplets = (0..nnz)
            .map(|_| {
                (
                    (rng.next_f64() * dim as f64) as usize % dim,
                    (rng.next_f64() * dim as f64) as usize % dim,
                    C64::new(rng.next_f64() - 0.5, rng.next_f64() - 0.5),
                )
            })
            .collect();
        OperatorMatrix::from_triplets(dim, triplets)
    }

    fn random_state(n: usize, rng: &mut CounterRng) -> StateVector {
        let dim = basis_dim(n).unwrap();
        let amps = (0..dim)
            .map(|_| C64::new(rng.next_f64() - 0.5, rng.next_f64() - 0.5))
            .collect();
        let mut psi = StateVector::from_amplitudes(n, amps).unwrap();
        psi.normalize().unwrap();
        psi
    }

    fn dense(op: &OperatorMatrix) -> Vec<Vec<C64>> {
        let mut out = vec![vec![C64::ZERO; op.dim()]; op.dim()];
        for (r, c, v) in op.triplets() {
            out[r][c] += v;
        }
        out
    }

    #[test]
    fn basis_dim_values() {
        assert_eq!(basis_dim(1).unwrap(), 3);
        assert_eq!(basis_dim(3).unwrap(), 27);
        assert_eq!(basis_dim(0).unwrap(), 1);
        assert!(matches!(
            basis_dim(9),
            Err(Error::CapacityExceeded { n: 9, max: 8 })
        ));
    }

    #[test]
    fn expectation_facade_covers_both_state_kinds() {
        let proj_e = transition_operator(1, E, E, 1).unwrap();
        let e = StateVector::basis_state(&[E]).unwrap();
        let rho = DensityMatrix::from_pure(&e);
        let pure = expectation(&proj_e, StateRef::Pure(&e)).unwrap();
        let mixed = expectation(&proj_e, StateRef::Mixed(&rho)).unwrap();
        assert!((pure.re - 1.0).abs() < 1e-15);
        assert!((mixed.re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn basis_index_values() {
        assert_eq!(basis_index(&[G, G, G]), 0);
        assert_eq!(basis_index(&[E, G, G]), 2);
        assert_eq!(basis_index(&[E, E, E]), 26);
    }

    #[test]
    fn basis_index_bijection() {
        for n in 1..=4usize {
            let dim = basis_dim(n).unwrap();
            for idx in 0..dim {
                let levels = decode_basis_index(idx, n);
                assert_eq!(levels.len(), n);
                assert_eq!(basis_index(&levels), idx);
            }
        }
    }

    #[test]
    fn transition_operator_single_emitter() {
        let op = transition_operator(1, E, F, 1).unwrap();
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.get(2, 1), C64::ONE);
    }

    #[test]
    fn transition_operator_shape() {
        let mut rng = CounterRng::for_stream(11, 0);
        for _ in 0..30 {
            let n = 1 + (rng.next_u64() % 4) as usize;
            let j = 1 + (rng.next_u64() as usize % n);
            let a = Level::from_digit(rng.next_u64() as usize % 3);
            let b = Level::from_digit(rng.next_u64() as usize % 3);
            let op = transition_operator(j, a, b, n).unwrap();
            assert_eq!(op.nnz(), basis_dim(n - 1).unwrap());
            assert!(op.triplets().all(|(_, _, v)| v == C64::ONE));
        }
        assert!(matches!(
            transition_operator(4, E, F, 3),
            Err(Error::EmitterOutOfRange { index: 4, count: 3 })
        ));
    }

    #[test]
    fn transition_operator_algebra() {
        // sigma_ef . sigma_fe is the |e><e| projector at that slot
        let ef = transition_operator(2, E, F, 3).unwrap();
        let fe = transition_operator(2, F, E, 3).unwrap();
        let proj = ef.matmul(&fe);
        let expected = transition_operator(2, E, E, 3).unwrap();
        assert_eq!(dense(&proj), dense(&expected));

        // transition operators are nilpotent
        let sq = ef.matmul(&ef);
        assert_eq!(sq.nnz(), 0);
    }

    #[test]
    fn adjoint_pairs() {
        let mut rng = CounterRng::for_stream(12, 0);
        for _ in 0..30 {
            let n = 1 + (rng.next_u64() % 4) as usize;
            let j = 1 + (rng.next_u64() as usize % n);
            let a = Level::from_digit(rng.next_u64() as usize % 3);
            let b = Level::from_digit(rng.next_u64() as usize % 3);
            let fwd = transition_operator(j, a, b, n).unwrap();
            let back = transition_operator(j, b, a, n).unwrap();
            assert_eq!(dense(&fwd.dagger()), dense(&back));
        }
    }

    #[test]
    fn distinct_emitters_commute() {
        let mut rng = CounterRng::for_stream(13, 0);
        for _ in 0..20 {
            let n = 2 + (rng.next_u64() % 3) as usize;
            let j = 1 + (rng.next_u64() as usize % n);
            let mut l = 1 + (rng.next_u64() as usize % n);
            if l == j {
                l = l % n + 1;
            }
            let pick = |rng: &mut CounterRng| Level::from_digit(rng.next_u64() as usize % 3);
            let a = transition_operator(j, pick(&mut rng), pick(&mut rng), n).unwrap();
            let b = transition_operator(l, pick(&mut rng), pick(&mut rng), n).unwrap();
            let comm = a.matmul(&b).add_scaled(-C64::ONE, &b.matmul(&a));
            assert_eq!(
                comm.nnz(),
                0,
                "operators on emitters {j} and {l} must commute"
            );
        }
    }

    #[test]
    fn apply_examples() {
        let id = OperatorMatrix::identity(3);
        let e = StateVector::basis_state(&[E]).unwrap();
        assert_eq!(id.apply(&e).unwrap(), e);

        let fe = transition_operator(1, F, E, 1).unwrap();
        let f = StateVector::basis_state(&[F]).unwrap();
        assert_eq!(fe.apply(&e).unwrap(), f);

        let g = StateVector::basis_state(&[G]).unwrap();
        assert_eq!(fe.apply(&g).unwrap().norm(), 0.0);

        let psi2 = StateVector::ground(2).unwrap();
        assert!(matches!(
            fe.apply(&psi2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matmul_against_dense_reference() {
        let mut rng = CounterRng::for_stream(14, 0);
        for _ in 0..10 {
            let dim = 9;
            let a = random_operator(dim, 12, &mut rng);
            let b = random_operator(dim, 12, &mut rng);
            let product = a.matmul(&b);
            let (da, db) = (dense(&a), dense(&b));
            for r in 0..dim {
                for c in 0..dim {
                    let mut want = C64::ZERO;
                    for m in 0..dim {
                        want += da[r][m] * db[m][c];
                    }
                    assert!((product.get(r, c) - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn expectation_examples() {
        let proj_e = transition_operator(1, E, E, 1).unwrap();
        let e = StateVector::basis_state(&[E]).unwrap();
        let f = StateVector::basis_state(&[F]).unwrap();
        assert!((proj_e.expectation_state(&e).unwrap().re - 1.0).abs() < 1e-15);
        assert!(proj_e.expectation_state(&f).unwrap().norm() < 1e-15);

        // mixture 1/2 |e><e| + 1/2 |g><g|
        let g = StateVector::basis_state(&[G]).unwrap();
        let mut rho = DensityMatrix::from_pure(&e);
        rho.scale(C64::new(0.5, 0.0));
        rho.add_scaled(C64::new(0.5, 0.0), &DensityMatrix::from_pure(&g));
        assert!((proj_e.expectation_density(&rho).unwrap().re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hermitian_expectation_is_real() {
        let mut rng = CounterRng::for_stream(15, 0);
        for _ in 0..20 {
            let n = 1 + (rng.next_u64() % 3) as usize;
            let dim = basis_dim(n).unwrap();
            let b = random_operator(dim, 3 * dim, &mut rng);
            let h = b.add_scaled(C64::ONE, &b.dagger());
            assert!(h.hermiticity_error() < 1e-12);
            let psi = random_state(n, &mut rng);
            assert!(h.expectation_state(&psi).unwrap().im.abs() < 1e-10);
        }
    }

    #[test]
    fn density_matrix_validate() {
        let e = StateVector::basis_state(&[E, G]).unwrap();
        let rho = DensityMatrix::from_pure(&e);
        rho.validate().unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-15);

        let mut bad = rho.clone();
        bad.set(0, 1, C64::new(0.5, 0.3));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn state_vector_norm_and_dot() {
        let mut rng = CounterRng::for_stream(16, 0);
        let psi = random_state(2, &mut rng);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        assert!((psi.dot(&psi).re - 1.0).abs() < 1e-12);
        assert!(psi.dot(&psi).im.abs() < 1e-14);
    }
}
