//! Algorithm-level accounting of slow-memory words and flops.
//!
//! Counters model the algorithm's data movement, not the host cache: every
//! kernel charges exactly the streams it conceptually reads and writes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Slow-memory traffic terms. The first five partition the words of one
/// CG iteration: `SemStreams + ReductionWeights + SolutionUpdate +
/// ReductionReload + GatherScatter = 13n + 2n + 3n + 2n + 2 n_gs` for the
/// stored variant and `8n + 2n + 3n + 2n + 2 n_gs` with rematerialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traffic {
    /// CG vectors r, p, w plus the geometry stream.
    SemStreams,
    /// The `c` vector, once per weighted reduction.
    ReductionWeights,
    /// Reading x and p, writing x.
    SolutionUpdate,
    /// Reloading p and w for `<p, w, c>` after the gather-scatter.
    ReductionReload,
    /// One read and one write per point taking part in a group.
    GatherScatter,
    /// Initial residual, outside the per-iteration totals.
    Initial,
    /// Direct kernel calls outside a solve.
    Standalone,
}

impl Traffic {
    pub const ITERATION: [Traffic; 5] = [
        Traffic::SemStreams,
        Traffic::ReductionWeights,
        Traffic::SolutionUpdate,
        Traffic::ReductionReload,
        Traffic::GatherScatter,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `p = r + beta p`, fused into the operator pass.
    PUpdate,
    /// Local Laplacian `A_L p`.
    Operator,
    GatherScatter,
    /// The two c-weighted inner products.
    Reduction,
    /// `x += alpha p`, `r -= alpha w`.
    Axpy,
    /// Initial residual and its norm.
    Initial,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCount {
    pub read: u64,
    pub written: u64,
}

impl WordCount {
    pub fn total(&self) -> u64 {
        self.read + self.written
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    word_bytes: usize,
    traffic: BTreeMap<Traffic, WordCount>,
    flops: BTreeMap<Kernel, u64>,
}

impl Ledger {
    pub fn new(word_bytes: usize) -> Self {
        Ledger {
            word_bytes,
            ..Default::default()
        }
    }

    pub fn for_precision<T: crate::Real>() -> Self {
        Self::new(T::WORD_BYTES)
    }

    pub fn word_bytes(&self) -> usize {
        self.word_bytes
    }

    pub fn read(&mut self, tag: Traffic, words: u64) {
        self.traffic.entry(tag).or_default().read += words;
    }

    pub fn write(&mut self, tag: Traffic, words: u64) {
        self.traffic.entry(tag).or_default().written += words;
    }

    pub fn flops(&mut self, kernel: Kernel, count: u64) {
        *self.flops.entry(kernel).or_default() += count;
    }

    pub fn words(&self, tag: Traffic) -> WordCount {
        self.traffic.get(&tag).copied().unwrap_or_default()
    }

    pub fn flops_of(&self, kernel: Kernel) -> u64 {
        self.flops.get(&kernel).copied().unwrap_or(0)
    }

    pub fn total_words(&self) -> u64 {
        self.traffic.values().map(WordCount::total).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_words() * self.word_bytes as u64
    }

    pub fn total_flops(&self) -> u64 {
        self.flops.values().sum()
    }

    /// Words of the five per-iteration terms, excluding setup and direct calls.
    pub fn iteration_words(&self) -> u64 {
        Traffic::ITERATION
            .iter()
            .map(|&t| self.words(t).total())
            .sum()
    }

    /// Flops charged by the CG loop proper. Gather-scatter additions and
    /// the initial residual are left out.
    pub fn iteration_flops(&self) -> u64 {
        [
            Kernel::PUpdate,
            Kernel::Operator,
            Kernel::Reduction,
            Kernel::Axpy,
        ]
        .iter()
        .map(|&k| self.flops_of(k))
        .sum()
    }

    pub fn traffic(&self) -> impl Iterator<Item = (Traffic, WordCount)> + '_ {
        self.traffic.iter().map(|(k, v)| (*k, *v))
    }

    pub fn kernels(&self) -> impl Iterator<Item = (Kernel, u64)> + '_ {
        self.flops.iter().map(|(k, v)| (*k, *v))
    }

    /// Counter increments since `earlier`, which must be a prefix of this ledger.
    pub fn since(&self, earlier: &Ledger) -> Ledger {
        let mut out = Ledger::new(self.word_bytes);
        for (tag, wc) in self.traffic() {
            let before = earlier.words(tag);
            out.traffic.insert(
                tag,
                WordCount {
                    read: wc.read - before.read,
                    written: wc.written - before.written,
                },
            );
        }
        for (k, f) in self.kernels() {
            out.flops.insert(k, f - earlier.flops_of(k));
        }
        out
    }
}
