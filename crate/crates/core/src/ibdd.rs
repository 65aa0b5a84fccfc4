//! Support-fraction baseline: an ongoing sequence is normal while enough
//! historical sequences contain it verbatim.

use std::ops::Deref;

use crate::detect::{check_theta, Verdict};
use crate::error::{Error, Result};
use crate::geohash::CellToken;
use crate::mining::is_subsequence;

/// How a historical sequence supports an ongoing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupportMode {
    /// Contiguous run of tokens.
    #[default]
    Substring,
    /// Tokens in order, gaps allowed.
    Subsequence,
}

impl std::str::FromStr for SupportMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "substring" => Ok(SupportMode::Substring),
            "subsequence" => Ok(SupportMode::Subsequence),
            _ => Err(Error::Config(format!("unknown support mode {s:?} (expected substring|subsequence)"))),
        }
    }
}

pub fn supports<T: PartialEq>(h: &[T], v: &[T], mode: SupportMode) -> bool {
    match mode {
        SupportMode::Substring => v.is_empty() || h.windows(v.len()).any(|w| w == v),
        SupportMode::Subsequence => is_subsequence(v, h),
    }
}

#[derive(Debug, Clone)]
pub struct SupportSet {
    pub sequences: Vec<Vec<CellToken>>,
    pub theta_prime: f64,
    pub mode: SupportMode,
}

impl SupportSet {
    pub fn new(sequences: Vec<Vec<CellToken>>, theta_prime: f64, mode: SupportMode) -> Result<Self> {
        check_theta("theta_prime", theta_prime)?;
        if sequences.is_empty() {
            return Err(Error::Empty("support set"));
        }
        Ok(SupportSet { sequences, theta_prime, mode })
    }

    /// Fraction of historical sequences supporting `v` (full recheck).
    pub fn fraction(&self, v: &[CellToken]) -> f64 {
        let n = self.sequences.iter().filter(|h| supports(h, v, self.mode)).count();
        n as f64 / self.sequences.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbddStep {
    pub fraction: f64,
    /// `1 - min fraction so far`; non-decreasing like the primary score.
    pub anomaly_score: f64,
    pub verdict: Verdict,
}

/// Incremental iBDD state: for each historical sequence, the set of positions
/// where a match of the current prefix ends (substring mode) or the greedy
/// earliest match end (subsequence mode).
#[derive(Debug, Clone)]
pub struct IbddState<S> {
    set: S,
    live: Vec<Vec<usize>>,
    len: usize,
    min_fraction: f64,
    verdict: Verdict,
}

impl<S: Deref<Target = SupportSet>> IbddState<S> {
    pub fn new(set: S) -> Self {
        let live = vec![Vec::new(); set.sequences.len()];
        IbddState { set, live, len: 0, min_fraction: 1.0, verdict: Verdict::Normal }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&mut self, token: CellToken) -> IbddStep {
        let first = self.len == 0;
        let mut supported = 0usize;
        for (h, live) in self.set.sequences.iter().zip(self.live.iter_mut()) {
            match self.set.mode {
                SupportMode::Substring => {
                    if first {
                        live.extend(h.iter().enumerate().filter(|(_, t)| **t == token).map(|(i, _)| i));
                    } else {
                        live.retain_mut(|end| {
                            *end += 1;
                            *end < h.len() && h[*end] == token
                        });
                    }
                }
                SupportMode::Subsequence => {
                    // greedy earliest embedding; `live` holds one position
                    if first || !live.is_empty() {
                        let from = live.first().map_or(0, |&e| e + 1);
                        live.clear();
                        if let Some(off) = h[from.min(h.len())..].iter().position(|t| *t == token) {
                            live.push(from + off);
                        }
                    }
                }
            }
            if !live.is_empty() {
                supported += 1;
            }
        }
        self.len += 1;
        let fraction = supported as f64 / self.set.sequences.len() as f64;
        self.min_fraction = self.min_fraction.min(fraction);
        if fraction < self.set.theta_prime {
            self.verdict = Verdict::Anomalous;
        }
        IbddStep { fraction, anomaly_score: 1.0 - self.min_fraction, verdict: self.verdict }
    }
}

/// One-shot check of a complete sequence.
pub fn ibdd_step(set: &SupportSet, v: &[CellToken]) -> Result<Verdict> {
    if v.is_empty() {
        return Err(Error::Empty("ongoing sequence"));
    }
    Ok(if set.fraction(v) < set.theta_prime { Verdict::Anomalous } else { Verdict::Normal })
}
