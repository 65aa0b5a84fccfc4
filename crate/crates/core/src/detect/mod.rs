//! Online scoring of an ongoing token sequence against a pattern set.

pub mod align;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geohash::CellToken;
use crate::mining::{Pattern, PatternSet};

pub use align::{align, smith_waterman, Alignment, AlignmentParams};

/// Best normalized match count of `v` against any pattern, in [0, 1].
/// An empty pattern list scores 0.
pub fn similarity<T: PartialEq>(patterns: &[Pattern<T>], v: &[T], params: &AlignmentParams) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut best = 0usize;
    for p in patterns {
        if p.tokens.is_empty() {
            continue;
        }
        best = best.max(align(&p.tokens, v, params).matches as usize);
        if best >= v.len() {
            break;
        }
    }
    (best as f64 / v.len() as f64).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Normal,
    Anomalous,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Normal => "normal",
            Verdict::Anomalous => "anomalous",
        })
    }
}

impl FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Verdict::Normal),
            "anomalous" => Ok(Verdict::Anomalous),
            _ => Err(Error::Config(format!("unknown verdict {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Proposed,
    Ibdd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Proposed => "proposed",
            Method::Ibdd => "ibdd",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "ibdd" => Ok(Method::Ibdd),
            _ => Err(Error::Config(format!("unknown method {s:?} (expected proposed|ibdd)"))),
        }
    }
}

pub fn check_theta(name: &str, theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("0 < {name} <= 1 violated ({theta})")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub score: f64,
    pub anomaly_score: f64,
    pub verdict: Verdict,
}

/// A pattern snapshot with an inverted token index for exact, pruned
/// similarity queries.
#[derive(Debug, Clone)]
pub struct PatternIndex {
    set: PatternSet,
    /// token -> (pattern index, occurrences of the token in the pattern)
    postings: HashMap<CellToken, Vec<(u32, u32)>>,
}

impl PatternIndex {
    pub fn new(set: PatternSet) -> Self {
        let mut postings: HashMap<CellToken, Vec<(u32, u32)>> = HashMap::new();
        for (i, p) in set.patterns.iter().enumerate() {
            let mut counts: HashMap<CellToken, u32> = HashMap::new();
            for &t in &p.tokens {
                *counts.entry(t).or_default() += 1;
            }
            for (t, c) in counts {
                postings.entry(t).or_default().push((i as u32, c));
            }
        }
        PatternIndex { set, postings }
    }

    pub fn set(&self) -> &PatternSet {
        &self.set
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

impl From<PatternSet> for PatternIndex {
    fn from(set: PatternSet) -> Self {
        PatternIndex::new(set)
    }
}

/// Per-trajectory detector state over an immutable pattern snapshot.
///
/// For every pattern `U` the state keeps `bound(U) = sum over tokens t of
/// min(count_U(t), count_V(t))`, an upper bound on the matched positions of
/// any alignment of `U` with the ongoing sequence `V`. Each step aligns
/// patterns in decreasing bound order and stops once no remaining bound can
/// beat the best match count, which gives exactly [`similarity`].
#[derive(Debug, Clone)]
pub struct DetectorState {
    index: Arc<PatternIndex>,
    params: AlignmentParams,
    theta: f64,
    ongoing: Vec<CellToken>,
    counts: HashMap<CellToken, u32>,
    bounds: Vec<u32>,
    touched: Vec<u32>,
    scores: Vec<f64>,
    anomaly_score: f64,
    verdict: Verdict,
}

impl DetectorState {
    pub fn new(index: Arc<PatternIndex>, params: AlignmentParams, theta: f64) -> Result<Self> {
        params.validate()?;
        check_theta("theta", theta)?;
        let n = index.len();
        Ok(DetectorState {
            index,
            params,
            theta,
            ongoing: Vec::new(),
            counts: HashMap::new(),
            bounds: vec![0; n],
            touched: Vec::new(),
            scores: Vec::new(),
            anomaly_score: 0.0,
            verdict: Verdict::Normal,
        })
    }

    pub fn index(&self) -> &Arc<PatternIndex> {
        &self.index
    }

    pub fn ongoing(&self) -> &[CellToken] {
        &self.ongoing
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn anomaly_score(&self) -> f64 {
        self.anomaly_score
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    /// Append a token and rescore the whole ongoing sequence.
    pub fn step(&mut self, token: CellToken) -> Step {
        self.ongoing.push(token);
        let c = self.counts.entry(token).or_default();
        *c += 1;
        if let Some(list) = self.index.postings.get(&token) {
            for &(p, in_pattern) in list {
                if *c <= in_pattern {
                    if self.bounds[p as usize] == 0 {
                        self.touched.push(p);
                    }
                    self.bounds[p as usize] += 1;
                }
            }
        }
        let bounds = &self.bounds;
        self.touched.sort_unstable_by(|&a, &b| bounds[b as usize].cmp(&bounds[a as usize]).then(a.cmp(&b)));
        let v_len = self.ongoing.len();
        let mut best = 0usize;
        for &p in &self.touched {
            if bounds[p as usize] as usize <= best || best >= v_len {
                break;
            }
            let u = &self.index.set.patterns[p as usize].tokens;
            best = best.max(align(u, &self.ongoing, &self.params).matches as usize);
        }
        let s = (best as f64 / v_len as f64).clamp(0.0, 1.0);
        self.scores.push(s);
        self.anomaly_score = self.anomaly_score.max(1.0 - s);
        if self.anomaly_score > self.theta {
            self.verdict = Verdict::Anomalous;
        }
        Step { score: s, anomaly_score: self.anomaly_score, verdict: self.verdict }
    }

    /// Forget the ongoing trajectory, keeping the snapshot.
    pub fn reset(&mut self) {
        self.ongoing.clear();
        self.counts.clear();
        for &p in &self.touched {
            self.bounds[p as usize] = 0;
        }
        self.touched.clear();
        self.scores.clear();
        self.anomaly_score = 0.0;
        self.verdict = Verdict::Normal;
    }
}

/// Anomaly scores `1 - running min` of a score series.
pub fn anomaly_scores(scores: &[f64]) -> Vec<f64> {
    let mut min = f64::INFINITY;
    scores
        .iter()
        .map(|&s| {
            min = min.min(s);
            1.0 - min
        })
        .collect()
}

/// Cost estimate of one step, in alignment cell updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityEstimate {
    /// `|D| * |V|^2`
    pub bound: u64,
    /// `sum over U of |U| * |V|`
    pub exact: u64,
}

pub fn complexity_guard<T>(patterns: &[Pattern<T>], v_len: usize) -> ComplexityEstimate {
    let v = v_len as u64;
    ComplexityEstimate {
        bound: patterns.len() as u64 * v * v,
        exact: patterns.iter().map(|p| p.tokens.len() as u64 * v).sum(),
    }
}

/// One line of the detection event log.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub person_id: String,
    pub trajectory_id: u64,
    pub timestamp: f64,
    pub score: f64,
    pub anomaly_score: f64,
    pub verdict: Verdict,
    pub method: Method,
}

impl DetectionEvent {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},method={}",
            self.person_id, self.trajectory_id, self.timestamp, self.score, self.anomaly_score, self.verdict, self.method
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let err = |msg: String| Error::Parse { line: 0, msg };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        Ok(DetectionEvent {
            person_id: f[0].to_string(),
            trajectory_id: f[1].parse().map_err(|_| err(format!("bad trajectory id {:?}", f[1])))?,
            timestamp: num(f[2])?,
            score: num(f[3])?,
            anomaly_score: num(f[4])?,
            verdict: f[5].parse()?,
            method: f[6].strip_prefix("method=").ok_or_else(|| err("missing method=".into()))?.parse()?,
        })
    }
}
