use std::collections::HashMap;

use crate::error::{Error, Result};

/// Default upper bound on the Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 8192;

/// Product basis truncated to at most `n_max` excitations.
///
/// States are bit patterns (bit `j` set ⇔ emitter `j` excited), grouped by
/// excitation number and, within a group, ordered lexicographically by the
/// sorted list of excited emitters.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    n_emitters: usize,
    n_max: usize,
    states: Vec<u64>,
    offsets: Vec<usize>,
    index: HashMap<u64, usize>,
}

/// `C(n, k)` with saturation instead of overflow.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Dimension of the basis with up to `n_max` excitations among `n` emitters.
pub fn truncated_dimension(n: usize, n_max: usize) -> usize {
    (0..=n_max.min(n)).fold(0usize, |acc, k| acc.saturating_add(binomial(n, k)))
}

fn push_combinations(n: usize, k: usize, start: usize, current: u64, out: &mut Vec<u64>) {
    if k == 0 {
        out.push(current);
        return;
    }
    for j in start..=n - k {
        push_combinations(n, k - 1, j + 1, current | (1u64 << j), out);
    }
}

impl Basis {
    pub fn new(n: usize, n_max: usize) -> Result<Self> {
        Self::with_budget(n, n_max, DEFAULT_MAX_DIM)
    }

    pub fn with_budget(n: usize, n_max: usize, max_dim: usize) -> Result<Self> {
        if n == 0 || n > 63 {
            return Err(Error::InvalidArgument(format!(
                "basis supports 1..=63 emitters, got {n}"
            )));
        }
        if n_max == 0 || n_max > n {
            return Err(Error::InvalidArgument(format!(
                "excitation cutoff must satisfy 1 <= n_max <= N, got n_max = {n_max}, N = {n}"
            )));
        }
        let dim = truncated_dimension(n, n_max);
        if dim > max_dim {
            return Err(Error::ResourceLimit {
                what: format!("basis dimension (N = {n}, n_max = {n_max})"),
                requested: dim,
                budget: max_dim,
            });
        }
        let mut states = Vec::with_capacity(dim);
        let mut offsets = Vec::with_capacity(n_max + 2);
        for k in 0..=n_max {
            offsets.push(states.len());
            push_combinations(n, k, 0, 0, &mut states);
        }
        offsets.push(states.len());
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self {
            n_emitters: n,
            n_max,
            states,
            offsets,
            index,
        })
    }

    pub fn n_emitters(&self) -> usize {
        self.n_emitters
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, i: usize) -> u64 {
        self.states[i]
    }

    /// Position of a bit pattern, `None` when it lies outside the truncation.
    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.index.get(&state).copied()
    }

    /// Index range of the `k`-excitation block.
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn block_dim(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    pub fn excitations(&self, i: usize) -> usize {
        self.states[i].count_ones() as usize
    }

    pub fn is_full(&self) -> bool {
        self.n_max == self.n_emitters
    }
}
