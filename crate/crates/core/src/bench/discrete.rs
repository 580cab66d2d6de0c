//! Pseudo-boolean benchmark functions and W-model style wrappers.
//!
//! All functions here are maximized.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscreteFunction {
    OneMax,
    LeadingOnes,
    Linear,
    Labs,
    IsingRing,
    NQueens,
    ConcatenatedTrap,
}

pub const TRAP_BLOCK: usize = 5;

impl DiscreteFunction {
    pub const ALL: [DiscreteFunction; 7] = [
        DiscreteFunction::OneMax,
        DiscreteFunction::LeadingOnes,
        DiscreteFunction::Linear,
        DiscreteFunction::Labs,
        DiscreteFunction::IsingRing,
        DiscreteFunction::NQueens,
        DiscreteFunction::ConcatenatedTrap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DiscreteFunction::OneMax => "onemax",
            DiscreteFunction::LeadingOnes => "leadingones",
            DiscreteFunction::Linear => "linear",
            DiscreteFunction::Labs => "labs",
            DiscreteFunction::IsingRing => "isingring",
            DiscreteFunction::NQueens => "nqueens",
            DiscreteFunction::ConcatenatedTrap => "concatenatedtrap",
        }
    }

    /// Checks that `len` bits form a valid input for this function.
    pub fn check_length(self, len: usize) -> Result<(), SpecError> {
        let ok = match self {
            DiscreteFunction::Labs => len >= 2,
            DiscreteFunction::NQueens => len >= 1 && board_edge(len).is_some(),
            DiscreteFunction::ConcatenatedTrap => {
                len >= TRAP_BLOCK && len.is_multiple_of(TRAP_BLOCK)
            }
            _ => len >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(SpecError::BadLength {
                function: self,
                len,
            })
        }
    }

    /// Function value on `x`. The length must satisfy [`Self::check_length`].
    pub fn eval(self, x: &[bool]) -> f64 {
        match self {
            DiscreteFunction::OneMax => ones(x) as f64,
            DiscreteFunction::LeadingOnes => x.iter().take_while(|&&b| b).count() as f64,
            DiscreteFunction::Linear => x
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i + 1)
                .sum::<usize>() as f64,
            DiscreteFunction::Labs => labs_merit_factor(x),
            DiscreteFunction::IsingRing => {
                let n = x.len();
                (0..n).filter(|&i| x[i] == x[(i + 1) % n]).count() as f64
            }
            DiscreteFunction::NQueens => nqueens(x),
            DiscreteFunction::ConcatenatedTrap => x
                .chunks(TRAP_BLOCK)
                .map(|block| {
                    let k = ones(block);
                    if k == TRAP_BLOCK {
                        TRAP_BLOCK as f64
                    } else {
                        (TRAP_BLOCK - 1 - k) as f64
                    }
                })
                .sum(),
        }
    }
}

impl fmt::Display for DiscreteFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiscreteFunction {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| SpecError::UnknownFunction(s.to_owned()))
    }
}

fn ones(x: &[bool]) -> usize {
    x.iter().filter(|&&b| b).count()
}

fn board_edge(len: usize) -> Option<usize> {
    let n = (len as f64).sqrt().round() as usize;
    (n * n == len).then_some(n)
}

/// Merit factor `n² / (2E)` with `E = Σ_k C_k²` the aperiodic
/// autocorrelation energy of the ±1 sequence.
fn labs_merit_factor(x: &[bool]) -> f64 {
    let n = x.len();
    let s: Vec<i64> = x.iter().map(|&b| if b { 1 } else { -1 }).collect();
    let energy: i64 = (1..n)
        .map(|k| {
            let c: i64 = (0..n - k).map(|i| s[i] * s[i + k]).sum();
            c * c
        })
        .sum();
    // C_{n-1} = ±1, so energy >= 1 whenever n >= 2
    (n * n) as f64 / (2 * energy) as f64
}

/// Queens placed minus attacking pairs. A pair attacks when it shares a row,
/// column or diagonal, regardless of queens in between.
fn nqueens(x: &[bool]) -> f64 {
    let n = board_edge(x.len()).expect("nqueens input is a square board");
    let mut rows = vec![0i64; n];
    let mut cols = vec![0i64; n];
    let mut diag = vec![0i64; 2 * n - 1];
    let mut anti = vec![0i64; 2 * n - 1];
    let mut queens = 0i64;
    for (idx, _) in x.iter().enumerate().filter(|(_, &b)| b) {
        let (r, c) = (idx / n, idx % n);
        rows[r] += 1;
        cols[c] += 1;
        diag[r + n - 1 - c] += 1;
        anti[r + c] += 1;
        queens += 1;
    }
    let pairs: i64 = [rows, cols, diag, anti]
        .iter()
        .flatten()
        .map(|&k| k * (k - 1) / 2)
        .sum();
    (queens - pairs) as f64
}

/// Input transformation applied before the base function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrapper {
    /// Keep only `m` bits at a seeded, fixed set of positions.
    Dummy { m: usize, seed: u64 },
    /// Collapse each block of `mu` bits to its majority bit, ties to 0.
    Neutrality { mu: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Stage {
    Select(Vec<usize>),
    Majority(usize),
}

impl Stage {
    fn apply(&self, x: &[bool]) -> Vec<bool> {
        match self {
            Stage::Select(idx) => idx.iter().map(|&i| x[i]).collect(),
            Stage::Majority(mu) => x
                .chunks(*mu)
                .map(|block| 2 * ones(block) > block.len())
                .collect(),
        }
    }
}

/// Sorted positions kept by a dummy wrapper. Depends only on
/// `(seed, len, m)`.
pub fn dummy_indices(seed: u64, len: usize, m: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, len, m).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("unknown discrete function `{0}`")]
    UnknownFunction(String),
    #[error("{function} cannot take {len} input bits")]
    BadLength {
        function: DiscreteFunction,
        len: usize,
    },
    #[error("dummy wrapper keeps {m} of {len} bits")]
    DummyTooLarge { m: usize, len: usize },
    #[error("neutrality block {mu} does not divide {len} bits")]
    NeutralityBlock { mu: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpec {
    function: DiscreteFunction,
    input_len: usize,
    wrappers: Vec<Wrapper>,
    stages: Vec<Stage>,
}

impl DiscreteSpec {
    pub fn new(function: DiscreteFunction, input_len: usize) -> Result<Self, SpecError> {
        Self::with_wrappers(function, input_len, Vec::new())
    }

    /// `wrappers` are applied in order to the raw input; the last one feeds
    /// the base function.
    pub fn with_wrappers(
        function: DiscreteFunction,
        input_len: usize,
        wrappers: Vec<Wrapper>,
    ) -> Result<Self, SpecError> {
        let mut len = input_len;
        let mut stages = Vec::with_capacity(wrappers.len());
        for w in &wrappers {
            match *w {
                Wrapper::Dummy { m, seed } => {
                    if m == 0 || m > len {
                        return Err(SpecError::DummyTooLarge { m, len });
                    }
                    stages.push(Stage::Select(dummy_indices(seed, len, m)));
                    len = m;
                }
                Wrapper::Neutrality { mu } => {
                    if mu == 0 || !len.is_multiple_of(mu) {
                        return Err(SpecError::NeutralityBlock { mu, len });
                    }
                    stages.push(Stage::Majority(mu));
                    len /= mu;
                }
            }
        }
        function.check_length(len)?;
        Ok(Self {
            function,
            input_len,
            wrappers,
            stages,
        })
    }

    pub fn function(&self) -> DiscreteFunction {
        self.function
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn wrappers(&self) -> &[Wrapper] {
        &self.wrappers
    }

    pub fn evaluate(&self, x: &[bool]) -> f64 {
        debug_assert_eq!(x.len(), self.input_len);
        let mut bits = x.to_vec();
        for stage in &self.stages {
            bits = stage.apply(&bits);
        }
        self.function.eval(&bits)
    }
}
