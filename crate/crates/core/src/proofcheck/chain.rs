//! Sequential per-bin measurement maps and the arrow-flip analysis.

use rand::Rng;

use super::linalg::{self, c, lift_a, max_abs, partial_trace_a, psd_sqrt, trace_norm, CMatrix};
use super::model::{invariance_violation, DensityMatrix, ParityModel};
use super::ProofError;
use crate::entropy::{classical_min_entropy, CQDistribution};
use crate::scalar::Real;
use crate::trace::{h_map, DualSymbol, DualTrace, ReducedTrace};

/// Longest outcome sequence accepted by [`enumerate_chain`].
pub const MAX_ENUMERATION_BINS: usize = 10;

/// Completely positive map on the A factor in operator-sum form.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausMap<T: Real> {
    ops: Vec<CMatrix<T>>,
}

impl<T: Real> KrausMap<T> {
    pub fn new(ops: Vec<CMatrix<T>>) -> Result<Self, ProofError> {
        let d = ops.first().map_or(0, |k| k.nrows());
        for k in &ops {
            if !k.is_square() {
                return Err(ProofError::NotSquare { rows: k.nrows(), cols: k.ncols() });
            }
            if k.nrows() != d {
                return Err(ProofError::DimensionMismatch { expected: d, found: k.nrows() });
            }
        }
        Ok(Self { ops })
    }

    pub fn operators(&self) -> &[CMatrix<T>] {
        &self.ops
    }

    /// `X ↦ Σ_k K X K†` on an operator of the A factor.
    pub fn apply(&self, x: &CMatrix<T>) -> CMatrix<T> {
        let d = x.nrows();
        self.ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + linalg::sandwich(k, x))
    }

    /// The map applied as `M ⊗ id_E` on `A ⊗ E`.
    pub fn apply_lifted(&self, rho: &CMatrix<T>, d_e: usize) -> CMatrix<T> {
        let d = rho.nrows();
        self.ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| acc + linalg::sandwich(&lift_a(k, d_e), rho))
    }

    /// `Σ_k K†K`.
    pub fn effect(&self, d_a: usize) -> CMatrix<T> {
        self.ops
            .iter()
            .fold(CMatrix::zeros(d_a, d_a), |acc, k| acc + k.adjoint() * k)
    }

    /// `R ∘ self` where `R` has Kraus operators `outer`.
    fn then(&self, outer: &[CMatrix<T>]) -> Self {
        let ops = outer
            .iter()
            .flat_map(|r| self.ops.iter().map(move |k| r * k))
            .collect();
        Self { ops }
    }
}

/// One map per outcome of a bin, together with the parity model it must
/// respect.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementChain<T: Real> {
    maps: [KrausMap<T>; 4],
    model: ParityModel<T>,
}

impl<T: Real> MeasurementChain<T> {
    /// Validates trace preservation and `M↑ ∘ P̃ = M↓`.
    pub fn new(
        neither: KrausMap<T>,
        up: KrausMap<T>,
        down: KrausMap<T>,
        both: KrausMap<T>,
        model: ParityModel<T>,
    ) -> Result<Self, ProofError> {
        let chain = Self::new_unchecked(neither, up, down, both, model)?;
        let tp = chain.trace_preservation_violation();
        if tp > T::spectral_tol() {
            return Err(ProofError::NotTracePreserving { violation: tp.to_f64_lossy() });
        }
        let cov = chain.covariance_violation();
        if cov > T::identity_tol() {
            return Err(ProofError::NotCovariant { violation: cov.to_f64_lossy() });
        }
        Ok(chain)
    }

    /// Dimension checks only.
    pub fn new_unchecked(
        neither: KrausMap<T>,
        up: KrausMap<T>,
        down: KrausMap<T>,
        both: KrausMap<T>,
        model: ParityModel<T>,
    ) -> Result<Self, ProofError> {
        let d_a = model.d_a();
        for map in [&neither, &up, &down, &both] {
            for k in map.operators() {
                if k.nrows() != d_a {
                    return Err(ProofError::DimensionMismatch { expected: d_a, found: k.nrows() });
                }
            }
        }
        Ok(Self { maps: [neither, up, down, both], model })
    }

    /// Random covariant instrument.
    ///
    /// Single-detection maps are `{B_i E↑}` and `{B_i P E↓}` for a random
    /// contraction family `B_i`; the leftover effect is split between
    /// "neither" and "both" through random unitaries. With `reset` every
    /// map is followed by the symmetrizing channel `X ↦ (X + PXP)/2`.
    pub fn random<R: Rng + ?Sized>(model: ParityModel<T>, reset: bool, rng: &mut R) -> Self {
        let d_a = model.d_a();
        let p = model.parity().clone();
        let iso = linalg::random_isometry::<T, R>(4 * d_a, d_a, rng);
        let block = |i: usize| iso.rows(i * d_a, d_a).into_owned();
        let (b1, b2) = (block(0), block(1));
        let up_ops: Vec<_> = [&b1, &b2].iter().map(|b| *b * model.e_up()).collect();
        let down_ops: Vec<_> = [&b1, &b2].iter().map(|b| *b * &p * model.e_down()).collect();

        let up_map = KrausMap { ops: up_ops };
        let down_map = KrausMap { ops: down_ops };
        let rest = linalg::identity::<T>(d_a) - up_map.effect(d_a) - down_map.effect(d_a);
        let root = psd_sqrt(&rest);
        let t: f64 = rng.random_range(0.2..0.8);
        let u1 = linalg::random_unitary::<T, R>(d_a, rng);
        let u2 = linalg::random_unitary::<T, R>(d_a, rng);
        let neither = KrausMap { ops: vec![u1 * &root * c::<T>(t.sqrt(), 0.0)] };
        let both = KrausMap { ops: vec![u2 * &root * c::<T>((1.0 - t).sqrt(), 0.0)] };

        let mut chain = Self { maps: [neither, up_map, down_map, both], model };
        if reset {
            chain = chain.with_reset();
        }
        chain
    }

    /// Projective direction measurement with trivial "neither"/"both"
    /// branches, optionally followed by the reset channel.
    pub fn projective(model: ParityModel<T>, reset: bool) -> Self {
        let d_a = model.d_a();
        let zero = CMatrix::zeros(d_a, d_a);
        let up = KrausMap { ops: vec![model.e_up().clone()] };
        let down = KrausMap { ops: vec![model.e_down().clone()] };
        let none = KrausMap { ops: vec![zero.clone()] };
        let both = KrausMap { ops: vec![zero] };
        let chain = Self { maps: [none, up, down, both], model };
        if reset {
            chain.with_reset()
        } else {
            chain
        }
    }

    /// Appends `X ↦ (X + PXP)/2` to every outcome map.
    pub fn with_reset(self) -> Self {
        let p = self.model.parity();
        let h = c::<T>(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let outer = [linalg::identity::<T>(p.nrows()) * h, p * h];
        let maps = self.maps.map(|m| m.then(&outer));
        Self { maps, model: self.model }
    }

    pub fn model(&self) -> &ParityModel<T> {
        &self.model
    }

    pub fn map(&self, w: DualSymbol) -> &KrausMap<T> {
        &self.maps[w.code() as usize]
    }

    /// `max |Σ_w Σ_k K†K − I|`.
    pub fn trace_preservation_violation(&self) -> T {
        let d_a = self.model.d_a();
        let total = self
            .maps
            .iter()
            .fold(CMatrix::zeros(d_a, d_a), |acc, m| acc + m.effect(d_a));
        max_abs(&(total - linalg::identity::<T>(d_a)))
    }

    /// Largest entry of `M↑(P X P) − M↓(X)` over the matrix units `X`.
    pub fn covariance_violation(&self) -> T {
        let d_a = self.model.d_a();
        let p = self.model.parity();
        let mut worst = T::zero();
        for i in 0..d_a {
            for j in 0..d_a {
                let mut x = CMatrix::zeros(d_a, d_a);
                x[(i, j)] = c(1.0, 0.0);
                let lhs = self.map(DualSymbol::Up).apply(&(p * &x * p));
                let rhs = self.map(DualSymbol::Down).apply(&x);
                worst = worst.max(max_abs(&(lhs - rhs)));
            }
        }
        worst
    }

    fn step(&self, rho: &CMatrix<T>, w: DualSymbol) -> CMatrix<T> {
        self.map(w).apply_lifted(rho, self.model.d_e())
    }

    fn check_state(&self, rho: &DensityMatrix<T>) -> Result<(), ProofError> {
        if rho.dim() != self.model.dim() {
            return Err(ProofError::DimensionMismatch { expected: self.model.dim(), found: rho.dim() });
        }
        Ok(())
    }
}

/// Applies the maps for `outcomes` in order.
///
/// Returns the sub-normalized conditional state whose trace is the
/// probability of the sequence. Every bin must start from a parity
/// invariant state; the first breach is reported with its bin index.
pub fn run_chain<T: Real>(
    rho0: &DensityMatrix<T>,
    chain: &MeasurementChain<T>,
    outcomes: &[DualSymbol],
) -> Result<DensityMatrix<T>, ProofError> {
    chain.check_state(rho0)?;
    let mut rho = rho0.matrix().clone();
    for (bin, &w) in outcomes.iter().enumerate() {
        let v = invariance_violation(&rho, chain.model());
        if v > T::identity_tol() {
            return Err(ProofError::InvarianceBroken { bin, violation: v.to_f64_lossy() });
        }
        rho = chain.step(&rho, w);
    }
    Ok(DensityMatrix::from_matrix_unchecked(rho))
}

/// Eve's conditional states for every outcome sequence of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEnsemble<T: Real> {
    n: usize,
    d_e: usize,
    eve: Vec<CMatrix<T>>,
    max_invariance_violation: T,
}

/// Enumerates all `4^n` sequences, requiring invariance at every bin start.
pub fn enumerate_chain<T: Real>(
    rho0: &DensityMatrix<T>,
    chain: &MeasurementChain<T>,
    n: usize,
) -> Result<ChainEnsemble<T>, ProofError> {
    let ens = enumerate_chain_unchecked(rho0, chain, n)?;
    if ens.max_invariance_violation > T::identity_tol() {
        return Err(ProofError::InvarianceBroken {
            bin: n,
            violation: ens.max_invariance_violation.to_f64_lossy(),
        });
    }
    Ok(ens)
}

/// Enumeration that records, rather than rejects, invariance breaches.
pub fn enumerate_chain_unchecked<T: Real>(
    rho0: &DensityMatrix<T>,
    chain: &MeasurementChain<T>,
    n: usize,
) -> Result<ChainEnsemble<T>, ProofError> {
    chain.check_state(rho0)?;
    if n > MAX_ENUMERATION_BINS {
        return Err(ProofError::ChainTooLong { n, max: MAX_ENUMERATION_BINS });
    }
    let (d_a, d_e) = (chain.model().d_a(), chain.model().d_e());
    let mut eve = Vec::with_capacity(1 << (2 * n));
    let mut worst = T::zero();
    descend(chain, rho0.matrix(), n, d_a, d_e, &mut eve, &mut worst);
    Ok(ChainEnsemble { n, d_e, eve, max_invariance_violation: worst })
}

// Depth-first in symbol-code order, so leaves land at their base-4 index.
fn descend<T: Real>(
    chain: &MeasurementChain<T>,
    rho: &CMatrix<T>,
    remaining: usize,
    d_a: usize,
    d_e: usize,
    eve: &mut Vec<CMatrix<T>>,
    worst: &mut T,
) {
    *worst = (*worst).max(invariance_violation(rho, chain.model()));
    if remaining == 0 {
        eve.push(partial_trace_a(rho, d_a, d_e));
        return;
    }
    for w in DualSymbol::ALL {
        let next = chain.step(rho, w);
        descend(chain, &next, remaining - 1, d_a, d_e, eve, worst);
    }
}

fn sequence_index(w: &[DualSymbol]) -> usize {
    w.iter().fold(0, |acc, s| acc * 4 + s.code() as usize)
}

fn sequence_at(mut index: usize, n: usize) -> Vec<DualSymbol> {
    let mut out = vec![DualSymbol::Neither; n];
    for slot in out.iter_mut().rev() {
        *slot = DualSymbol::from_code((index % 4) as u8).expect("two-bit code");
        index /= 4;
    }
    out
}

impl<T: Real> ChainEnsemble<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn max_invariance_violation(&self) -> T {
        self.max_invariance_violation
    }

    /// `ρ_E^w` for a sequence of the enumerated length.
    pub fn eve_state(&self, w: &[DualSymbol]) -> Result<&CMatrix<T>, ProofError> {
        if w.len() != self.n {
            return Err(ProofError::DimensionMismatch { expected: self.n, found: w.len() });
        }
        Ok(&self.eve[sequence_index(w)])
    }

    pub fn probability(&self, w: &[DualSymbol]) -> Result<T, ProofError> {
        Ok(self.eve_state(w)?.trace().re)
    }

    /// Every sequence with `h(w) = reduced`.
    pub fn fiber(&self, reduced: &ReducedTrace) -> Result<Vec<Vec<DualSymbol>>, ProofError> {
        if reduced.len() != self.n {
            return Err(ProofError::DimensionMismatch { expected: self.n, found: reduced.len() });
        }
        Ok(reduced.preimages().map(|t| t.symbols().to_vec()).collect())
    }

    /// Largest `‖ρ_E^w − ρ_E^w'‖₁` over pairs sharing a reduced trace.
    pub fn arrow_flip_violation(&self) -> T {
        let mut worst = T::zero();
        let mut seen = vec![false; self.eve.len()];
        for start in 0..self.eve.len() {
            if seen[start] || self.n == 0 {
                continue;
            }
            let w = sequence_at(start, self.n);
            let reduced = h_map(&DualTrace::new(w).expect("non-empty"));
            let members: Vec<usize> = reduced.preimages().map(|t| sequence_index(t.symbols())).collect();
            for (a, &i) in members.iter().enumerate() {
                seen[i] = true;
                for &j in &members[a + 1..] {
                    worst = worst.max(trace_norm(&(&self.eve[i] - &self.eve[j])));
                }
            }
        }
        worst
    }

    /// Largest off-diagonal entry over all of Eve's states.
    pub fn off_diagonal(&self) -> T {
        let mut worst = T::zero();
        for m in &self.eve {
            for i in 0..self.d_e {
                for j in 0..self.d_e {
                    if i != j {
                        worst = worst.max(m[(i, j)].norm_sqr().sqrt());
                    }
                }
            }
        }
        worst
    }

    /// Joint table `P(g(w), e)` from the diagonals of Eve's states.
    pub fn classical_g_table(&self) -> Result<CQDistribution<T>, ProofError> {
        let rows = 1usize << self.n;
        let mut probs = vec![T::zero(); rows * self.d_e];
        for (index, m) in self.eve.iter().enumerate() {
            let w = DualTrace::new(sequence_at(index, self.n)).expect("non-empty");
            let z = crate::trace::g_map(&w);
            let row = z.iter().fold(0usize, |acc, b| (acc << 1) | b as usize);
            for e in 0..self.d_e {
                probs[row * self.d_e + e] += m[(e, e)].re.max(T::zero());
            }
        }
        CQDistribution::new(probs, rows, self.d_e).map_err(|e| ProofError::Classical(e.to_string()))
    }
}

/// Min-entropy of `W` given `h(W) = reduced` and Eve.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleEventEntropy<T> {
    /// `log₂` of the fiber size.
    pub bits: T,
    pub members: usize,
    /// Largest trace distance between fiber members.
    pub spread: T,
    /// Probability of observing `reduced`.
    pub probability: T,
    /// Exact classical value when Eve's states are diagonal and the fiber
    /// has nonzero probability.
    pub classical_bits: Option<T>,
}

pub fn single_event_entropy<T: Real>(
    ensemble: &ChainEnsemble<T>,
    reduced: &ReducedTrace,
) -> Result<SingleEventEntropy<T>, ProofError> {
    if ensemble.is_empty() {
        return Err(ProofError::ChainTooLong { n: 0, max: MAX_ENUMERATION_BINS });
    }
    let fiber = ensemble.fiber(reduced)?;
    let states: Vec<&CMatrix<T>> = fiber
        .iter()
        .map(|w| ensemble.eve_state(w))
        .collect::<Result<_, _>>()?;
    let mut spread = T::zero();
    for (a, x) in states.iter().enumerate() {
        for y in &states[a + 1..] {
            spread = spread.max(trace_norm(&(*x - *y)));
        }
    }
    if spread > T::identity_tol() {
        return Err(ProofError::FiberStatesDiffer { spread: spread.to_f64_lossy() });
    }
    let members = states.len();
    let bits = T::lit(members as f64).log2();
    let probability = states.iter().fold(T::zero(), |acc, m| acc + m.trace().re);

    let diagonal = ensemble.off_diagonal() <= T::identity_tol();
    let classical_bits = if diagonal && probability > T::spectral_tol() {
        let d_e = ensemble.d_e;
        let probs = states
            .iter()
            .flat_map(|m| (0..d_e).map(move |e| m[(e, e)].re.max(T::zero()) / probability))
            .collect();
        let table = CQDistribution::new(probs, members, d_e).map_err(|e| ProofError::Classical(e.to_string()))?;
        let value = classical_min_entropy(&table).map_err(|e| ProofError::Classical(e.to_string()))?;
        if (value - bits).abs() > T::spectral_tol() {
            return Err(ProofError::ClassicalMismatch {
                counted: bits.to_f64_lossy(),
                classical: value.to_f64_lossy(),
            });
        }
        Some(value)
    } else {
        None
    };
    Ok(SingleEventEntropy { bits, members, spread, probability, classical_bits })
}

/// Initial state `Σ_e q_e σ_e ⊗ |e⟩⟨e|` with parity-invariant `σ_e`, so
/// that Eve's side stays classical along any chain.
pub fn random_classical_eve_state<T: Real, R: Rng + ?Sized>(model: &ParityModel<T>, rng: &mut R) -> DensityMatrix<T> {
    let (d_a, d_e) = (model.d_a(), model.d_e());
    let weights: Vec<f64> = (0..d_e).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut rho = CMatrix::zeros(d_a * d_e, d_a * d_e);
    for (e, w) in weights.iter().enumerate() {
        let sigma = linalg::random_state::<T, R>(d_a, d_a, rng);
        let sym = (&sigma + model.parity() * &sigma * model.parity()) * c::<T>(0.5 * w / total, 0.0);
        let mut proj = CMatrix::zeros(d_e, d_e);
        proj[(e, e)] = c(1.0, 0.0);
        rho += sym.kronecker(&proj);
    }
    DensityMatrix::from_matrix_unchecked(rho)
}
