//! Partition entropy, itinerary entropy rates, the `F`-Jacobian potential and
//! the Gibbs defect `h + int phi^F`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::measure::{GridMeasure, GridPartition};
use crate::system::{check_point, SmoothSystem};
use crate::tangent::{forward_frames, SplittingSource};

/// Default Gibbs tolerance at desk scale.
pub const DEFAULT_GIBBS_TOLERANCE: f64 = 0.15;

/// Fewer than this many samples per distinct word marks an estimate as undersampled.
pub const MIN_SAMPLES_PER_WORD: f64 = 10.0;

/// `-sum w log w` over positive weights.
pub fn shannon_entropy(measure: &GridMeasure) -> f64 {
    entropy_of_weights(measure.weights())
}

pub fn entropy_of_weights(weights: &[f64]) -> f64 {
    -weights.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum::<f64>()
}

/// Length-`N` symbol words with optional sample weights.
#[derive(Clone, Debug)]
pub struct ItinerarySample {
    partition: Option<GridPartition>,
    alphabet: usize,
    depth: usize,
    symbols: Vec<u32>,
    weights: Option<Vec<f64>>,
}

impl ItinerarySample {
    /// Words from an explicit symbol source (test doubles, external data).
    pub fn from_words(alphabet: usize, depth: usize, words: Vec<Vec<u32>>) -> Result<Self> {
        if depth == 0 {
            return Err(LabError::InvalidArgument("itinerary depth N must be >= 1".into()));
        }
        let mut symbols = Vec::with_capacity(words.len() * depth);
        for w in &words {
            if w.len() != depth || w.iter().any(|&s| s as usize >= alphabet) {
                return Err(LabError::InvalidArgument(format!(
                    "word {w:?} is not {depth} symbols below {alphabet}"
                )));
            }
            symbols.extend_from_slice(w);
        }
        if symbols.is_empty() {
            return Err(LabError::InvalidArgument("no words".into()));
        }
        Ok(Self {
            partition: None,
            alphabet,
            depth,
            symbols,
            weights: None,
        })
    }

    /// One word `(c(x), c(fx), ..., c(f^{N-1}x))` per initial condition.
    pub fn from_initial_conditions<S: SmoothSystem + ?Sized>(
        system: &S,
        ics: &[Vec<f64>],
        partition: &GridPartition,
        depth: usize,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(LabError::InvalidArgument("itinerary depth N must be >= 1".into()));
        }
        let words: Vec<Vec<u32>> = ics
            .par_iter()
            .map(|x| {
                check_point(system.space(), x)?;
                let mut w = Vec::with_capacity(depth);
                let mut cur = x.clone();
                let mut next = vec![0.0; x.len()];
                for i in 0..depth {
                    w.push(partition.cell_index(&cur)? as u32);
                    if i + 1 < depth {
                        system.apply_into(&cur, &mut next)?;
                        std::mem::swap(&mut cur, &mut next);
                    }
                }
                Ok(w)
            })
            .collect::<Result<_>>()?;
        Self::from_partition_words(partition, depth, words)
    }

    /// Sliding windows of length `N` along orbits: the words seen by the
    /// empirical measure of `f^burn_in(x), ..., f^{n-1}(x)`.
    pub fn from_orbit_windows<S: SmoothSystem + ?Sized>(
        system: &S,
        ics: &[Vec<f64>],
        n: usize,
        burn_in: usize,
        partition: &GridPartition,
        depth: usize,
    ) -> Result<Self> {
        if depth == 0 || n <= burn_in {
            return Err(LabError::InvalidArgument(format!(
                "need depth >= 1 and n > burn_in (depth {depth}, n {n}, burn_in {burn_in})"
            )));
        }
        let per_ic: Vec<Vec<Vec<u32>>> = ics
            .par_iter()
            .map(|x| {
                check_point(system.space(), x)?;
                let total = n + depth - 1;
                let mut cells = Vec::with_capacity(total - burn_in);
                let mut cur = x.clone();
                let mut next = vec![0.0; x.len()];
                for i in 0..total {
                    if i >= burn_in {
                        cells.push(partition.cell_index(&cur)? as u32);
                    }
                    if i + 1 < total {
                        system.apply_into(&cur, &mut next)?;
                        if !system.space().contains(&next) {
                            return Err(LabError::Escape { index: i + 1 });
                        }
                        std::mem::swap(&mut cur, &mut next);
                    }
                }
                Ok(cells.windows(depth).map(|w| w.to_vec()).collect())
            })
            .collect::<Result<_>>()?;
        Self::from_partition_words(partition, depth, per_ic.into_iter().flatten().collect())
    }

    fn from_partition_words(partition: &GridPartition, depth: usize, words: Vec<Vec<u32>>) -> Result<Self> {
        let mut s = Self::from_words(partition.cell_count(), depth, words)?;
        s.partition = Some(partition.clone());
        Ok(s)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(LabError::InvalidArgument("one nonnegative weight per word required".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn partition(&self) -> Option<&GridPartition> {
        self.partition.as_ref()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.symbols.len() / self.depth
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn word(&self, i: usize) -> &[u32] {
        &self.symbols[i * self.depth..(i + 1) * self.depth]
    }

    /// `(H_len, distinct words)` of the length-`len` prefixes.
    pub fn block_entropy(&self, len: usize) -> Result<(f64, usize)> {
        if len == 0 {
            return Ok((0.0, 1));
        }
        if len > self.depth {
            return Err(LabError::InvalidArgument(format!("block length {len} > depth {}", self.depth)));
        }
        let bits = usize::BITS - (self.alphabet.max(2) - 1).leading_zeros();
        if bits as usize * len > 128 {
            return Err(LabError::InvalidArgument(format!(
                "words of {len} symbols over {} letters do not fit a 128-bit key",
                self.alphabet
            )));
        }
        let mut keyed: Vec<(u128, f64)> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let key = self.word(i)[..len]
                    .iter()
                    .fold(0u128, |acc, &s| (acc << bits) | s as u128);
                (key, self.weights.as_ref().map_or(1.0, |w| w[i]))
            })
            .collect();
        keyed.par_sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let total: f64 = keyed.iter().map(|k| k.1).sum();
        let mut masses = Vec::new();
        let mut i = 0;
        while i < keyed.len() {
            let mut j = i;
            let mut mass = 0.0;
            while j < keyed.len() && keyed[j].0 == keyed[i].0 {
                mass += keyed[j].1;
                j += 1;
            }
            masses.push(mass / total);
            i = j;
        }
        Ok((entropy_of_weights(&masses), masses.len()))
    }
}

/// Block and conditional entropy-rate estimates from one itinerary sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItineraryEntropy {
    pub depth: usize,
    /// `H_N / N`.
    pub per_symbol: f64,
    /// `H_N - H_{N-1}`, the entropy of the last symbol given the first `N - 1`.
    pub conditional: f64,
    pub block_entropy: f64,
    pub distinct_words: usize,
    pub samples: usize,
    /// Fewer than [`MIN_SAMPLES_PER_WORD`] samples per distinct word.
    pub undersampled: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyEstimator {
    /// `H_N / N`.
    Block,
    /// `H_N - H_{N-1}`.
    #[default]
    Conditional,
}

impl ItineraryEntropy {
    pub fn estimate(&self, which: EntropyEstimator) -> f64 {
        match which {
            EntropyEstimator::Block => self.per_symbol,
            EntropyEstimator::Conditional => self.conditional,
        }
    }
}

pub fn itinerary_entropy_rate(sample: &ItinerarySample) -> Result<ItineraryEntropy> {
    let n = sample.depth();
    let (h_n, distinct) = sample.block_entropy(n)?;
    let (h_prev, _) = sample.block_entropy(n - 1)?;
    let samples = sample.len();
    Ok(ItineraryEntropy {
        depth: n,
        per_symbol: h_n / n as f64,
        conditional: h_n - h_prev,
        block_entropy: h_n,
        distinct_words: distinct,
        samples,
        undersampled: (samples as f64) < MIN_SAMPLES_PER_WORD * distinct as f64,
    })
}

/// `-1/2 log det(G^T G)` with `G = jac * frame`.
pub fn phi_f_from_jacobian(jac: &DMatrix<f64>, frame: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
    let g = jac * frame;
    let det = (g.transpose() * &g).determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(LabError::SingularPotential { point: x.to_vec() });
    }
    Ok(-0.5 * det.ln())
}

/// `phi^F(x) = -log |det Df(x)|_F|` for an orthonormal frame of `F`.
pub fn potential_phi_f<S: SmoothSystem + ?Sized>(system: &S, x: &[f64], frame: &DMatrix<f64>) -> Result<f64> {
    if frame.nrows() != x.len() {
        return Err(LabError::DimensionMismatch {
            expected: x.len(),
            got: frame.nrows(),
        });
    }
    phi_f_from_jacobian(&crate::system::jacobian_at(system, x), frame, x)
}

/// `phi^F` along `x, ..., f^{m-1}(x)` with frames from `source` at every point.
pub fn potential_along_orbit(
    system: &dyn SmoothSystem,
    x: &[f64],
    m: usize,
    source: &dyn SplittingSource,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(LabError::InvalidArgument("m must be >= 1".into()));
    }
    check_point(system.space(), x)?;
    let mut out = Vec::with_capacity(m);
    let mut cur = x.to_vec();
    let mut next = vec![0.0; x.len()];
    for i in 0..m {
        let split = source.splitting_at(system, &cur)?;
        let jac = system.apply_with_jacobian(&cur, &mut next)?;
        out.push(phi_f_from_jacobian(&jac, &split.f_frame, &cur)?);
        if i + 1 < m {
            if !system.space().contains(&next) {
                return Err(LabError::Escape { index: i + 1 });
            }
            std::mem::swap(&mut cur, &mut next);
        }
    }
    Ok(out)
}

/// `phi^F` along an orbit with `F` transported forward from a generic frame
/// (after `burn_in` steps), for systems where per-point estimation is too costly.
pub fn potential_along_transported_frames<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    burn_in: usize,
    m: usize,
    dim_f: usize,
) -> Result<Vec<f64>> {
    let (orbit, frames) = forward_frames(system, x, burn_in, m, dim_f)?;
    orbit
        .points
        .iter()
        .zip(&frames)
        .map(|(p, f)| potential_phi_f(system, p, f))
        .collect()
}

/// Prefix sums `S_1, ..., S_m` of a potential sequence.
pub fn birkhoff_prefix_sums(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// `h + int phi^F` and the Gibbs `F`-state flag.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GibbsReport {
    pub entropy_estimate: f64,
    pub potential_average: f64,
    pub defect: f64,
    pub tolerance: f64,
    /// `defect >= -tolerance`.
    pub gibbs_compatible: bool,
    pub entropy_samples: usize,
    pub potential_samples: usize,
    pub undersampled: bool,
}

pub fn gibbs_defect(h: f64, potential_avg: f64, tolerance: f64) -> GibbsReport {
    let defect = h + potential_avg;
    GibbsReport {
        entropy_estimate: h,
        potential_average: potential_avg,
        defect,
        tolerance,
        gibbs_compatible: defect >= -tolerance,
        entropy_samples: 0,
        potential_samples: 0,
        undersampled: false,
    }
}

/// Empirical modulus of continuity of `phi^F`: the largest `|phi(x) - phi(y)|`
/// over sampled pairs with `d(x, y) < radius`.
pub fn phi_continuity_modulus(
    system: &dyn SmoothSystem,
    source: &dyn SplittingSource,
    points: &[Vec<f64>],
    radius: f64,
) -> Result<f64> {
    let values: Vec<f64> = points
        .par_iter()
        .map(|p| {
            let s = source.splitting_at(system, p)?;
            potential_phi_f(system, p, &s.f_frame)
        })
        .collect::<Result<_>>()?;
    let space = system.space();
    let mut worst: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if space.distance(&points[i], &points[j]) < radius {
                worst = worst.max((values[i] - values[j]).abs());
            }
        }
    }
    Ok(worst)
}
