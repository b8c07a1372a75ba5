//! Symbol sequences sampled from epsilon-machines.
//!
//! Randomness is counter-based: draw `i` of a run is the `i`-th 64-bit word
//! of a ChaCha8 keystream keyed by the seed, so any step can be regenerated
//! on its own. Draw 0 picks the initial state from the stationary
//! distribution; draw `t + 1` picks the symbol emitted at step `t`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{stationary_distribution, EpsilonMachine, MachineError};
use crate::seeds::unit_f64;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("series file: {0}")]
    Io(#[from] std::io::Error),
    #[error("series metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSeries {
    pub symbols: Vec<u8>,
    /// `states[t]` is the state that emitted `symbols[t]`.
    pub states: Option<Vec<usize>>,
    pub seed: u64,
    pub machine_id: String,
}

impl SimulatedSeries {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Random access into the draw sequence of one seed.
struct Draws {
    rng: ChaCha8Rng,
}

impl Draws {
    fn at(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(2 * index as u128);
        Self { rng }
    }

    #[inline]
    fn next(&mut self) -> f64 {
        unit_f64(self.rng.next_u64())
    }
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Stationary-start simulation of `length` symbols.
pub fn simulate(
    machine: &EpsilonMachine,
    length: usize,
    seed: u64,
) -> Result<SimulatedSeries, GeneratorError> {
    let pi = stationary_distribution(machine)?;
    let mut draws = Draws::at(seed, 0);
    let start = pick(pi.probabilities(), draws.next());
    let (symbols, states) = run_from(machine, start, &mut draws, length);
    Ok(SimulatedSeries { symbols, states: Some(states), seed, machine_id: String::new() })
}

/// Regenerates steps `first_step..first_step + length` of the run with
/// `seed`, given the state occupied at `first_step`. Output is identical to
/// the same slice of [`simulate`].
pub fn simulate_segment(
    machine: &EpsilonMachine,
    state_at_first_step: usize,
    first_step: usize,
    length: usize,
    seed: u64,
) -> (Vec<u8>, Vec<usize>) {
    let mut draws = Draws::at(seed, first_step as u64 + 1);
    run_from(machine, state_at_first_step, &mut draws, length)
}

fn run_from(
    machine: &EpsilonMachine,
    start: usize,
    draws: &mut Draws,
    length: usize,
) -> (Vec<u8>, Vec<usize>) {
    let mut symbols = Vec::with_capacity(length);
    let mut states = Vec::with_capacity(length);
    let mut state = start;
    for _ in 0..length {
        let x = pick(machine.emission_row(state), draws.next());
        symbols.push(x as u8);
        states.push(state);
        state = machine
            .next_state(state, x)
            .expect("emitted symbol has a transition in a valid machine");
    }
    (symbols, states)
}

fn context_table_size(alphabet: usize, m: usize) -> Result<usize, GeneratorError> {
    alphabet
        .checked_pow(m as u32 + 1)
        .filter(|&s| s <= 1 << 28)
        .ok_or_else(|| GeneratorError::InvalidArgument(format!("context order {m} too large")))
}

/// Per-position information density `−ln p̂(x_t | x_{t−m:t})` under the
/// plug-in conditional distribution of the whole series.
fn information_density(symbols: &[u8], m: usize, alphabet: usize) -> Result<Vec<f64>, GeneratorError> {
    if symbols.len() <= m {
        return Err(GeneratorError::InsufficientData(format!(
            "{} symbols cannot supply order-{m} contexts",
            symbols.len()
        )));
    }
    let table = context_table_size(alphabet, m)?;
    let modulus = table / alphabet; // alphabet^m
    let mut counts = vec![0u32; table];
    let mut window = 0usize;
    for &x in &symbols[..m] {
        window = (window * alphabet + x as usize) % modulus.max(1);
    }
    let mut codes = Vec::with_capacity(symbols.len() - m);
    for &x in &symbols[m..] {
        let code = window * alphabet + x as usize;
        counts[code] += 1;
        codes.push(code);
        window = if modulus > 1 { code % modulus } else { 0 };
    }
    let n = codes.len();
    let observed = (0..modulus.max(1))
        .filter(|&c| counts[c * alphabet..(c + 1) * alphabet].iter().any(|&k| k > 0))
        .count();
    if n < 10 * observed {
        return Err(GeneratorError::InsufficientData(format!(
            "{n} positions over {observed} observed contexts (< 10 per context)"
        )));
    }
    let context_totals: Vec<u32> = (0..modulus.max(1))
        .map(|c| counts[c * alphabet..(c + 1) * alphabet].iter().sum())
        .collect();
    Ok(codes
        .into_iter()
        .map(|code| {
            let ctx_total = context_totals[code / alphabet] as f64;
            -(counts[code] as f64 / ctx_total).ln()
        })
        .collect())
}

/// Plug-in estimate of `H[X_0 | X_{−m:0}]` in nats from `(m+1)`-gram counts.
pub fn empirical_conditional_entropy(
    symbols: &[u8],
    m: usize,
    alphabet: usize,
) -> Result<f64, GeneratorError> {
    let dens = information_density(symbols, m, alphabet)?;
    Ok(dens.iter().sum::<f64>() / dens.len() as f64)
}

/// Plug-in estimate together with a batch-means standard error, which
/// accounts for serial correlation in the series.
pub fn empirical_conditional_entropy_with_se(
    symbols: &[u8],
    m: usize,
    alphabet: usize,
    n_batches: usize,
) -> Result<(f64, f64), GeneratorError> {
    let dens = information_density(symbols, m, alphabet)?;
    if n_batches < 2 || dens.len() < n_batches {
        return Err(GeneratorError::InvalidArgument("need at least 2 non-empty batches".into()));
    }
    let estimate = dens.iter().sum::<f64>() / dens.len() as f64;
    let size = dens.len() / n_batches;
    let means: Vec<f64> = dens
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let se = crate::stats::std_dev(&means) / (means.len() as f64).sqrt();
    Ok((estimate, se))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetadata {
    pub machine_id: String,
    pub seed: u64,
    pub length: usize,
    pub alphabet_size: usize,
}

/// Path of the sidecar metadata document for a series file.
pub fn metadata_path(series_path: &Path) -> PathBuf {
    let mut name = series_path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes one ASCII digit per symbol (no newlines) plus a JSON sidecar.
pub fn write_series(
    path: &Path,
    series: &SimulatedSeries,
    alphabet_size: usize,
) -> Result<(), GeneratorError> {
    if alphabet_size > 10 {
        return Err(GeneratorError::InvalidArgument("series files hold at most 10 symbols".into()));
    }
    let text: Vec<u8> = series.symbols.iter().map(|&x| b'0' + x).collect();
    fs::write(path, text)?;
    let meta = SeriesMetadata {
        machine_id: series.machine_id.clone(),
        seed: series.seed,
        length: series.len(),
        alphabet_size,
    };
    fs::write(metadata_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<SimulatedSeries, GeneratorError> {
    let meta: SeriesMetadata = serde_json::from_str(&fs::read_to_string(metadata_path(path))?)?;
    let raw = fs::read(path)?;
    let symbols: Vec<u8> = raw
        .iter()
        .map(|&c| {
            let x = c.wrapping_sub(b'0');
            if (x as usize) < meta.alphabet_size {
                Ok(x)
            } else {
                Err(GeneratorError::InvalidArgument(format!("unexpected byte {c:#x} in series")))
            }
        })
        .collect::<Result<_, _>>()?;
    if symbols.len() != meta.length {
        return Err(GeneratorError::InvalidArgument(format!(
            "series has {} symbols, metadata says {}",
            symbols.len(),
            meta.length
        )));
    }
    Ok(SimulatedSeries { symbols, states: None, seed: meta.seed, machine_id: meta.machine_id })
}
