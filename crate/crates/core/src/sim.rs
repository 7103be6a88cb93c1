//! Monte Carlo SchWARMA simulation of dephasing probe experiments.
//!
//! Each trajectory draws fresh noise samples `y[0..K-1]` from every model,
//! accumulates the toggling-frame phase `phi = sum_k s[k] y[k]` and records
//! `cos phi`; the survival probability of a sequence is
//! `(1 + mean cos phi) / 2`. Every trajectory owns an RNG stream derived
//! from `(seed, sequence, trajectory)`, so results do not depend on how
//! the work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::arma::{csv_err, is_stationary, parse_f64, ArmaModel, PowerSpectrum, TrajectorySampler};
use crate::error::{QnsError, Result};
use crate::probe::{survival_from_chi, FilterBank, ProbeSequence};

/// Measured (or simulated) survival probabilities for a set of probes.
#[derive(Debug, Clone, PartialEq)]
pub struct QnsDataset {
    sequences: Vec<ProbeSequence>,
    probs: Vec<f64>,
    shots: u64,
    trajectories: usize,
    seed: u64,
}

impl QnsDataset {
    /// `shots = 0` marks exact probabilities; `trajectories = 0` marks
    /// probabilities taken from the analytic Gaussian limit (or external data).
    pub fn new(
        sequences: Vec<ProbeSequence>,
        probs: Vec<f64>,
        shots: u64,
        trajectories: usize,
        seed: u64,
    ) -> Result<Self> {
        if sequences.len() != probs.len() {
            return Err(QnsError::InvalidArgument(format!(
                "{} sequences but {} probabilities",
                sequences.len(),
                probs.len()
            )));
        }
        if sequences.is_empty() {
            return Err(QnsError::InvalidArgument("dataset is empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(QnsError::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
        Ok(QnsDataset { sequences, probs, shots, trajectories, seed })
    }

    pub fn sequences(&self) -> &[ProbeSequence] {
        &self.sequences
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn trajectories(&self) -> usize {
        self.trajectories
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Gate count shared by every sequence (the first one's, if mixed).
    pub fn gate_count(&self) -> usize {
        self.sequences[0].gate_count()
    }

    /// Same sequences and metadata with different probabilities.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        QnsDataset::new(self.sequences.clone(), probs, self.shots, self.trajectories, self.seed)
    }
}

/// splitmix64 finaliser, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the substream addressed by `path` under `seed`.
pub fn substream_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

const SHOT_STREAM: u64 = u64::MAX;

/// Binomial measurement of `shots` projective shots at survival probability
/// `p`; `shots = 0` returns `p` unchanged. This is the single place where
/// measurement noise enters (applied once per sequence, after averaging
/// over trajectories).
pub fn apply_shot_noise<R: rand::Rng>(p: f64, shots: u64, rng: &mut R) -> f64 {
    if shots == 0 {
        return p;
    }
    let p = p.clamp(0.0, 1.0);
    let binom = Binomial::new(shots, p).expect("probability clamped to [0, 1]");
    binom.sample(rng) as f64 / shots as f64
}

/// Pairwise summation; the result depends only on the order of `xs`.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Simulate a QNS experiment driven by the sum of independent `models`.
pub fn simulate_qns(
    models: &[ArmaModel],
    seqs: &[ProbeSequence],
    trajectories: usize,
    shots: u64,
    seed: u64,
) -> Result<QnsDataset> {
    if trajectories == 0 {
        return Err(QnsError::InvalidCounts("trajectories must be at least 1".into()));
    }
    if models.iter().any(|m| !is_stationary(m)) {
        return Err(QnsError::NotStationary);
    }
    let probs: Vec<f64> = seqs
        .iter()
        .enumerate()
        .map(|(k, seq)| {
            let cosines: Vec<f64> = (0..trajectories)
                .into_par_iter()
                .map_init(
                    || {
                        let samplers: Vec<TrajectorySampler> = models
                            .iter()
                            .map(|m| TrajectorySampler::new(m).expect("checked stationary"))
                            .collect();
                        (samplers, vec![0.0; seq.gate_count()])
                    },
                    |(samplers, noise), m| {
                        let mut rng =
                            ChaCha8Rng::seed_from_u64(substream_seed(seed, &[k as u64, m as u64]));
                        noise.iter_mut().for_each(|v| *v = 0.0);
                        for sampler in samplers.iter_mut() {
                            let y = sampler.sample(&mut rng, seq.gate_count());
                            noise.iter_mut().zip(y).for_each(|(acc, v)| *acc += v);
                        }
                        let phi: f64 = seq.signs().iter().zip(noise.iter()).map(|(s, y)| s * y).sum();
                        phi.cos()
                    },
                )
                .collect();
            let mean = pairwise_sum(&cosines) / trajectories as f64;
            let p_bar = 0.5 * (1.0 + mean);
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, &[k as u64, SHOT_STREAM]));
            apply_shot_noise(p_bar, shots, &mut rng)
        })
        .collect();
    QnsDataset::new(seqs.to_vec(), probs, shots, trajectories, seed)
}

/// Dataset in the infinite-trajectory limit: `p_k` from the overlap
/// integral of `spectrum`, followed by optional shot noise. The returned
/// dataset records `trajectories = 0`.
pub fn expected_dataset<S: PowerSpectrum + ?Sized>(
    spectrum: &S,
    seqs: &[ProbeSequence],
    shots: u64,
    seed: u64,
) -> Result<QnsDataset> {
    let bank = FilterBank::with_default_grid(seqs);
    let chi = bank.chi(spectrum)?;
    let probs = chi
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, &[k as u64, SHOT_STREAM]));
            apply_shot_noise(survival_from_chi(c), shots, &mut rng)
        })
        .collect();
    QnsDataset::new(seqs.to_vec(), probs, shots, 0, seed)
}

const DATASET_HEADER: [&str; 4] = ["seq_index", "gate_count", "shots", "prob"];

/// Write the dataset CSV. Simulation metadata goes in leading `#` lines.
pub fn write_dataset<W: Write>(dataset: &QnsDataset, mut w: W) -> Result<()> {
    writeln!(w, "# trajectories={}", dataset.trajectories)?;
    writeln!(w, "# seed={}", dataset.seed)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(DATASET_HEADER).map_err(csv_err)?;
    for (seq, p) in dataset.sequences.iter().zip(&dataset.probs) {
        wtr.write_record([
            seq.index().to_string(),
            seq.gate_count().to_string(),
            dataset.shots.to_string(),
            p.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &QnsDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(dataset, std::io::BufWriter::new(file))
}

/// Parse a dataset CSV. The metadata lines are optional (experimental data
/// has none); the header must be exactly `seq_index,gate_count,shots,prob`.
pub fn read_dataset<R: Read>(r: R) -> Result<QnsDataset> {
    let malformed = |msg: String| QnsError::MalformedFile(msg);
    let mut trajectories = 0usize;
    let mut seed = 0u64;
    let mut body = String::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if let Some(meta) = line.strip_prefix('#') {
            let (key, value) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| malformed(format!("bad metadata line {line:?}")))?;
            let bad = |_| malformed(format!("bad metadata value {value:?}"));
            match key.trim() {
                "trajectories" => trajectories = value.trim().parse().map_err(bad)?,
                "seed" => seed = value.trim().parse().map_err(bad)?,
                other => return Err(malformed(format!("unknown metadata key {other:?}"))),
            }
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(malformed(format!(
            "expected header {}, found {}",
            DATASET_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut sequences = Vec::new();
    let mut probs = Vec::new();
    let mut shots: Option<u64> = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .trim()
                .parse::<u64>()
                .map_err(|_| malformed(format!("row {row}: {} is not an integer: {:?}", DATASET_HEADER[i], &rec[i])))
        };
        let index = int(0)? as usize;
        let gate_count = int(1)? as usize;
        let row_shots = int(2)?;
        let p = parse_f64(&rec[3])?;
        if !(0.0..=1.0).contains(&p) {
            return Err(malformed(format!("row {row}: probability {p} outside [0, 1]")));
        }
        match shots {
            None => shots = Some(row_shots),
            Some(s) if s != row_shots => {
                return Err(malformed(format!("row {row}: shots {row_shots} differs from {s}")))
            }
            _ => {}
        }
        let seq = ProbeSequence::fttps(gate_count, index).map_err(|e| malformed(format!("row {row}: {e}")))?;
        sequences.push(seq);
        probs.push(p);
    }
    if probs.is_empty() {
        return Err(malformed("dataset has no rows".into()));
    }
    QnsDataset::new(sequences, probs, shots.unwrap_or(0), trajectories, seed)
        .map_err(|e| malformed(e.to_string()))
}

pub fn load_dataset(path: &Path) -> Result<QnsDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file)
}
