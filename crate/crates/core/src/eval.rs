//! Leave-one-out evaluation of both detectors on a labeled corpus: score
//! AUC, verdict accuracy, detection delay and timings over a parameter grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::detect::{AlignmentParams, DetectorState, Method, PatternIndex};
use crate::error::{Error, Result};
use crate::geohash::{sequence_from_trajectory, CellToken, SequenceBuilder};
use crate::ibdd::{IbddState, SupportMode, SupportSet};
use crate::mining::mine;
use crate::preprocess::{compress_stream, Block, PreprocessConfig};
use crate::region::{discover_regions, segment_block, GeofencedRegion, RegionConfig, Trajectory};
use crate::synth::{Corpus, CorpusTrajectory, Label};

/// Area under the ROC curve of `scores` (higher = more anomalous) against
/// `positive` labels, via the rank statistic; tied pairs count one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Config(format!("{} scores for {} labels", scores.len(), positive.len())));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Detected { seconds: f64, premature: bool },
    Undetected,
}

/// Delay between divergence and the first anomalous verdict. Detections
/// before the divergence count as zero delay and are flagged premature.
pub fn detection_delay(divergence_time: Option<f64>, detected_at: Option<f64>) -> Result<Delay> {
    let div = divergence_time.ok_or(Error::MissingDivergence(0))?;
    Ok(match detected_at {
        None => Delay::Undetected,
        Some(t) => Delay::Detected { seconds: (t - div).max(0.0), premature: t < div },
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Everything the offline and online paths need besides the thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSettings {
    pub preprocess: PreprocessConfig,
    pub region: RegionConfig,
    pub eta: usize,
    pub alignment: AlignmentParams,
    pub support_mode: SupportMode,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        DetectionSettings {
            preprocess: PreprocessConfig::default(),
            region: RegionConfig::default(),
            eta: 1,
            alignment: AlignmentParams::default(),
            support_mode: SupportMode::Substring,
        }
    }
}

/// Completed trajectories of historical blocks, as token sequences.
pub fn history_sequences(blocks: &[Block], regions: &[GeofencedRegion], precision: u8) -> Vec<Vec<CellToken>> {
    blocks
        .iter()
        .flat_map(|b| segment_block(b, regions))
        .filter(|t| !t.is_ongoing())
        .map(|t| sequence_from_trajectory(&t, precision).tokens)
        .collect()
}

/// Time-stamped tokens of a trajectory; each token carries the timestamp of
/// the stay point that produced it.
pub fn timed_tokens(t: &Trajectory, precision: u8) -> Vec<(f64, CellToken)> {
    let mut b = SequenceBuilder::new(precision);
    let mut out = Vec::new();
    for sp in &t.points {
        let added = b.push(&sp.point);
        let toks = b.tokens();
        out.extend(toks[toks.len() - added..].iter().map(|&tok| (sp.timestamp(), tok)));
    }
    out
}

/// Non-decreasing anomaly score of one held-out corpus item over time
/// (maximum over the item's trajectories).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSeries {
    pub steps: Vec<(f64, f64)>,
}

impl ScoreSeries {
    pub fn final_score(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.1)
    }

    /// First time the score exceeds `threshold`.
    pub fn first_above(&self, threshold: f64) -> Option<f64> {
        self.steps.iter().find(|s| s.1 > threshold).map(|s| s.0)
    }

    fn from_runs(mut runs: Vec<(f64, f64)>) -> Self {
        runs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut max = 0.0f64;
        ScoreSeries {
            steps: runs
                .into_iter()
                .map(|(t, a)| {
                    max = max.max(a);
                    (t, max)
                })
                .collect(),
        }
    }
}

/// One held-out trajectory replayed by one method at one precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub id: usize,
    pub label: Label,
    pub pair: usize,
    pub divergence_time: Option<f64>,
    pub trajectories: usize,
    pub tokens: usize,
    pub series: ScoreSeries,
    pub detect_s: f64,
    pub fit_s: f64,
}

impl ItemRecord {
    pub fn final_score(&self) -> f64 {
        self.series.final_score()
    }
}

/// Threshold on the item score series that corresponds to a method
/// threshold: `a > theta` for the proposed detector, `fraction < theta'`
/// (i.e. `1 - min fraction > 1 - theta'`) for iBDD.
pub fn score_threshold(method: Method, theta: f64) -> f64 {
    match method {
        Method::Proposed => theta,
        Method::Ibdd => 1.0 - theta,
    }
}

fn replay_proposed(
    trajectories: &[Trajectory],
    patterns: &Arc<PatternIndex>,
    settings: &DetectionSettings,
    precision: u8,
) -> Result<(ScoreSeries, usize, f64)> {
    let mut runs = Vec::new();
    let mut tokens = 0;
    let mut elapsed = 0.0;
    for t in trajectories {
        let timed = timed_tokens(t, precision);
        tokens += timed.len();
        let mut det = DetectorState::new(patterns.clone(), settings.alignment, 1.0)?;
        let start = Instant::now();
        for &(ts, tok) in &timed {
            runs.push((ts, det.step(tok).anomaly_score));
        }
        elapsed += start.elapsed().as_secs_f64();
    }
    Ok((ScoreSeries::from_runs(runs), tokens, elapsed))
}

fn replay_ibdd(trajectories: &[Trajectory], support: &SupportSet, precision: u8) -> (ScoreSeries, usize, f64) {
    let mut runs = Vec::new();
    let mut tokens = 0;
    let mut elapsed = 0.0;
    for t in trajectories {
        let timed = timed_tokens(t, precision);
        tokens += timed.len();
        let mut st = IbddState::new(support);
        let start = Instant::now();
        for &(ts, tok) in &timed {
            runs.push((ts, st.step(tok).anomaly_score));
        }
        elapsed += start.elapsed().as_secs_f64();
    }
    (ScoreSeries::from_runs(runs), tokens, elapsed)
}

/// Grid of a leave-one-out run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub precisions: Vec<u8>,
    pub thetas: Vec<f64>,
    pub theta_primes: Vec<f64>,
    pub methods: Vec<Method>,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            precisions: vec![17, 18, 19],
            thetas: vec![0.20, 0.40, 0.60],
            theta_primes: vec![0.20, 0.10, 0.05],
            methods: vec![Method::Proposed, Method::Ibdd],
        }
    }
}

/// Per-(method, precision) item records of a leave-one-out run.
#[derive(Debug, Clone, Default)]
pub struct LooRun {
    pub records: BTreeMap<(MethodKey, u8), Vec<ItemRecord>>,
}

/// Orderable method key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKey {
    Proposed,
    Ibdd,
}

impl From<Method> for MethodKey {
    fn from(m: Method) -> Self {
        match m {
            Method::Proposed => MethodKey::Proposed,
            Method::Ibdd => MethodKey::Ibdd,
        }
    }
}

impl From<MethodKey> for Method {
    fn from(m: MethodKey) -> Self {
        match m {
            MethodKey::Proposed => Method::Proposed,
            MethodKey::Ibdd => Method::Ibdd,
        }
    }
}

/// Segmented trajectories of an item that overlap its walk. Excursions
/// during the dwells (stay noise leaving the buffered hull for a point or
/// two) are trajectories of their own and are not part of the labeled walk.
pub fn walk_trajectories(blocks: &[Block], regions: &[GeofencedRegion], item: &CorpusTrajectory) -> Vec<Trajectory> {
    blocks
        .iter()
        .flat_map(|b| segment_block(b, regions))
        .filter(|t| {
            let first = t.points.first().map_or(f64::INFINITY, |p| p.timestamp());
            let last = t.points.last().map_or(f64::NEG_INFINITY, |p| p.timestamp());
            first < item.walk_end && last > item.walk_start
        })
        .collect()
}

fn split_records(
    corpus: &Corpus,
    blocks: &[Vec<Block>],
    held_out: usize,
    settings: &DetectionSettings,
    grid: &EvalGrid,
) -> Result<Vec<((MethodKey, u8), ItemRecord)>> {
    let item = &corpus.trajectories[held_out];
    let fit_start = Instant::now();
    let training: Vec<Block> =
        blocks.iter().enumerate().filter(|&(i, _)| i != held_out).flat_map(|(_, b)| b.iter().cloned()).collect();
    let regions = discover_regions(&training, &[], &settings.region);
    let region_s = fit_start.elapsed().as_secs_f64();
    let test = walk_trajectories(&blocks[held_out], &regions, item);

    let mut out = Vec::new();
    for &precision in &grid.precisions {
        let hash_start = Instant::now();
        let history = history_sequences(&training, &regions, precision);
        let hash_s = hash_start.elapsed().as_secs_f64();
        for &method in &grid.methods {
            let record = |series, tokens, detect_s, fit_s| ItemRecord {
                id: item.id,
                label: item.label,
                pair: item.pair,
                divergence_time: item.divergence_time,
                trajectories: test.len(),
                tokens,
                series,
                detect_s,
                fit_s,
            };
            let rec = match method {
                Method::Proposed => {
                    let mine_start = Instant::now();
                    let patterns = Arc::new(PatternIndex::new(mine(&history, settings.eta, precision)));
                    let fit_s = region_s + hash_s + mine_start.elapsed().as_secs_f64();
                    let (series, tokens, detect_s) = replay_proposed(&test, &patterns, settings, precision)?;
                    record(series, tokens, detect_s, fit_s)
                }
                Method::Ibdd => {
                    let build_start = Instant::now();
                    // θ' only affects verdicts; the score series is threshold-free
                    let support = SupportSet::new(history.clone(), 1.0, settings.support_mode)?;
                    let fit_s = region_s + hash_s + build_start.elapsed().as_secs_f64();
                    let (series, tokens, detect_s) = replay_ibdd(&test, &support, precision);
                    record(series, tokens, detect_s, fit_s)
                }
            };
            out.push(((MethodKey::from(method), precision), rec));
        }
    }
    Ok(out)
}

/// Leave-one-out over the whole corpus: for every item, regions, history
/// sequences and models are rebuilt from the other items, then the item is
/// replayed token by token. Splits run in parallel.
pub fn leave_one_out_grid(corpus: &Corpus, settings: &DetectionSettings, grid: &EvalGrid) -> Result<LooRun> {
    settings.preprocess.validate()?;
    settings.region.validate()?;
    settings.alignment.validate()?;
    let blocks: Vec<Vec<Block>> = corpus
        .trajectories
        .iter()
        .map(|t| compress_stream(&corpus.person_id, &t.points, &settings.preprocess))
        .collect::<Result<_>>()?;
    let per_split: Vec<Vec<((MethodKey, u8), ItemRecord)>> = (0..corpus.trajectories.len())
        .into_par_iter()
        .map(|i| split_records(corpus, &blocks, i, settings, grid))
        .collect::<Result<_>>()?;
    let mut run = LooRun::default();
    for split in per_split {
        for (key, rec) in split {
            run.records.entry(key).or_default().push(rec);
        }
    }
    Ok(run)
}

/// Single-method, single-precision leave-one-out.
pub fn leave_one_out(corpus: &Corpus, method: Method, precision: u8, settings: &DetectionSettings) -> Result<Vec<ItemRecord>> {
    let grid = EvalGrid { precisions: vec![precision], methods: vec![method], ..EvalGrid::default() };
    let mut run = leave_one_out_grid(corpus, settings, &grid)?;
    Ok(run.records.remove(&(method.into(), precision)).unwrap_or_default())
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub method: Method,
    pub theta: f64,
    pub precision: u8,
    /// Rank AUC of the final anomaly scores.
    pub auc: f64,
    pub median_delay_s: Option<f64>,
    pub median_detect_s: f64,
    pub median_fit_s: f64,
    /// AUC of the binary verdicts (balanced accuracy).
    pub verdict_auc: f64,
    pub detected: usize,
    pub missed: usize,
    pub premature: usize,
    pub false_positives: usize,
}

/// Summarize item records at one threshold.
pub fn summarize(method: Method, theta: f64, precision: u8, records: &[ItemRecord]) -> Result<EvalResult> {
    let positive: Vec<bool> = records.iter().map(|r| r.label == Label::Anomalous).collect();
    let scores: Vec<f64> = records.iter().map(ItemRecord::final_score).collect();
    let thr = score_threshold(method, theta);
    let verdicts: Vec<f64> = scores.iter().map(|&s| if s > thr { 1.0 } else { 0.0 }).collect();
    let mut delays = Vec::new();
    let (mut detected, mut missed, mut premature, mut false_positives) = (0, 0, 0, 0);
    for (r, &v) in records.iter().zip(&verdicts) {
        if r.label == Label::Normal {
            false_positives += (v > 0.0) as usize;
            continue;
        }
        match detection_delay(r.divergence_time, r.series.first_above(thr)).map_err(|_| Error::MissingDivergence(r.id))? {
            Delay::Detected { seconds, premature: p } => {
                detected += 1;
                premature += p as usize;
                delays.push(seconds);
            }
            Delay::Undetected => missed += 1,
        }
    }
    let detect: Vec<f64> = records.iter().map(|r| r.detect_s).collect();
    let fit: Vec<f64> = records.iter().map(|r| r.fit_s).collect();
    Ok(EvalResult {
        method,
        theta,
        precision,
        auc: roc_auc(&scores, &positive)?,
        median_delay_s: median(&delays),
        median_detect_s: median(&detect).unwrap_or(0.0),
        median_fit_s: median(&fit).unwrap_or(0.0),
        verdict_auc: roc_auc(&verdicts, &positive)?,
        detected,
        missed,
        premature,
        false_positives,
    })
}

/// All grid rows of a run: θ rows for the proposed method, θ' rows for iBDD.
pub fn evaluate_run(run: &LooRun, grid: &EvalGrid) -> Result<Vec<EvalResult>> {
    let mut rows = Vec::new();
    for (&(key, precision), records) in &run.records {
        let method = Method::from(key);
        let thetas = match method {
            Method::Proposed => &grid.thetas,
            Method::Ibdd => &grid.theta_primes,
        };
        for &theta in thetas {
            rows.push(summarize(method, theta, precision, records)?);
        }
    }
    Ok(rows)
}

/// Median online/offline wall-clock times per item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub median_detect_s: f64,
    pub median_fit_s: f64,
    pub items: usize,
}

pub fn timing_report(records: &[ItemRecord]) -> Option<TimingReport> {
    let detect: Vec<f64> = records.iter().map(|r| r.detect_s).collect();
    let fit: Vec<f64> = records.iter().map(|r| r.fit_s).collect();
    Some(TimingReport { median_detect_s: median(&detect)?, median_fit_s: median(&fit)?, items: records.len() })
}

/// Per-step detection cost measured at `|V| = n` and `|V| = 2n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCheck {
    pub method: Method,
    pub v_len: usize,
    pub small_step_s: f64,
    pub large_step_s: f64,
}

impl ScalingCheck {
    pub fn ratio(&self) -> f64 {
        self.large_step_s / self.small_step_s
    }
}

/// Empirical per-step scaling on random token sequences over a small
/// alphabet, where bound pruning cannot skip alignments. The reference set
/// holds `d` sequences as long as the ongoing one (`max |U| = |T|`). Each
/// figure is the best of `reps` timings of the last `n / 10` steps.
pub fn scaling_check(method: Method, n: usize, d: usize, reps: usize, seed: u64) -> Result<ScalingCheck> {
    use rand::{Rng, SeedableRng};
    if n < 10 || d == 0 || reps == 0 {
        return Err(Error::Config(format!("scaling check needs n >= 10, d >= 1, reps >= 1 (n={n}, d={d}, reps={reps})")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut per_step = |len: usize| -> Result<f64> {
        let mut seq = |len: usize| -> Vec<CellToken> {
            (0..len).map(|_| CellToken::new(18, rng.random_range(0..16)).expect("valid code")).collect()
        };
        let reference: Vec<Vec<CellToken>> = (0..d).map(|_| seq(len)).collect();
        let v = seq(len);
        let window = len / 10;
        let (warm, timed) = v.split_at(len - window);
        let mut best = f64::INFINITY;
        match method {
            Method::Proposed => {
                let patterns = reference.into_iter().map(|t| crate::mining::Pattern::new(1, t)).collect();
                let set = crate::mining::PatternSet { eta: 1, precision: 18, source_hash: String::new(), patterns };
                let mut det = DetectorState::new(Arc::new(PatternIndex::new(set)), AlignmentParams::default(), 1.0)?;
                for &t in warm {
                        det.step(t);
                    }
                for _ in 0..reps {
                    let mut run = det.clone();
                    let t0 = Instant::now();
                    for &t in timed {
                        run.step(t);
                    }
                    best = best.min(t0.elapsed().as_secs_f64());
                }
            }
            Method::Ibdd => {
                let set = SupportSet::new(reference, 0.1, SupportMode::Substring)?;
                let mut st = IbddState::new(&set);
                for &t in warm {
                        st.step(t);
                    }
                for _ in 0..reps {
                    let mut run = st.clone();
                    let t0 = Instant::now();
                    for &t in timed {
                        run.step(t);
                    }
                    best = best.min(t0.elapsed().as_secs_f64());
                }
            }
        }
        Ok(best / window as f64)
    };
    let small_step_s = per_step(n)?;
    let large_step_s = per_step(2 * n)?;
    Ok(ScalingCheck { method, v_len: n, small_step_s, large_step_s })
}

pub const RECORD_HEADER: &str =
    "method,theta,precision,auc,median_delay_s,median_detect_s,median_fit_s,verdict_auc,detected,missed,premature,false_positives";

impl EvalResult {
    pub fn to_record(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.theta,
            self.precision,
            self.auc,
            self.median_delay_s.map_or(String::new(), |d| d.to_string()),
            self.median_detect_s,
            self.median_fit_s,
            self.verdict_auc,
            self.detected,
            self.missed,
            self.premature,
            self.false_positives
        )
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let err = |msg: String| Error::Parse { line: 0, msg };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 12 {
            return Err(err(format!("expected 12 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad count {s:?}")));
        Ok(EvalResult {
            method: f[0].parse()?,
            theta: num(f[1])?,
            precision: f[2].parse().map_err(|_| err(format!("bad precision {:?}", f[2])))?,
            auc: num(f[3])?,
            median_delay_s: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            median_detect_s: num(f[5])?,
            median_fit_s: num(f[6])?,
            verdict_auc: num(f[7])?,
            detected: int(f[8])?,
            missed: int(f[9])?,
            premature: int(f[10])?,
            false_positives: int(f[11])?,
        })
    }
}

pub fn write_records<W: Write>(rows: &[EvalResult], mut w: W) -> Result<()> {
    writeln!(w, "{RECORD_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_record())?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<EvalResult>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with("method,") {
            continue;
        }
        out.push(EvalResult::from_record(&line)?);
    }
    Ok(out)
}

/// Aligned text table, one block per method.
pub fn render_table(rows: &[EvalResult]) -> String {
    let mut s = String::new();
    for method in [Method::Proposed, Method::Ibdd] {
        let mine: Vec<&EvalResult> = rows.iter().filter(|r| r.method == method).collect();
        if mine.is_empty() {
            continue;
        }
        let theta = if method == Method::Proposed { "theta" } else { "theta'" };
        let _ = writeln!(s, "{method}");
        let _ = writeln!(
            s,
            "{theta:>7} {:>9} {:>7} {:>10} {:>13} {:>11} {:>9} {:>10}",
            "precision", "AUC", "Delay (s)", "Detection (s)", "Fitting (s)", "Verd.AUC", "det/miss/FP"
        );
        for r in mine {
            let delay = r.median_delay_s.map_or("-".to_string(), |d| format!("{d:.1}"));
            let _ = writeln!(
                s,
                "{:>7.2} {:>9} {:>7.4} {:>10} {:>13.6} {:>11.4} {:>9.4} {:>10}",
                r.theta,
                r.precision,
                r.auc,
                delay,
                r.median_detect_s,
                r.median_fit_s,
                r.verdict_auc,
                format!("{}/{}/{}", r.detected, r.missed, r.false_positives)
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise(scores: &[f64], pos: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if pos[i] && !pos[j] {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[true, false, true, false, false, false]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass)));
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn auc_shuffled_labels_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 4000;
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut labels: Vec<bool> = (0..n).map(|i| i % 5 == 0).collect();
        labels.shuffle(&mut rng);
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 0.04, "{auc}");
    }

    #[test]
    fn auc_matches_pairwise_and_is_rank_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..300 {
            let n = rng.random_range(2..=50);
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..8) as f64) / 4.0).collect();
            let mut pos: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            pos[0] = true;
            pos[1] = false;
            let auc = roc_auc(&scores, &pos).unwrap();
            assert!((auc - pairwise(&scores, &pos)).abs() < 1e-12);
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            assert!((roc_auc(&transformed, &pos).unwrap() - auc).abs() < 1e-12);
        }
    }

    #[test]
    fn delay_conventions() {
        assert_eq!(detection_delay(Some(100.0), Some(100.0)).unwrap(), Delay::Detected { seconds: 0.0, premature: false });
        assert_eq!(detection_delay(Some(100.0), Some(466.0)).unwrap(), Delay::Detected { seconds: 366.0, premature: false });
        assert_eq!(detection_delay(Some(100.0), Some(40.0)).unwrap(), Delay::Detected { seconds: 0.0, premature: true });
        assert_eq!(detection_delay(Some(100.0), None).unwrap(), Delay::Undetected);
        assert!(detection_delay(None, Some(1.0)).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert!(timing_report(&[]).is_none());
    }

    fn item(id: usize, label: Label, div: Option<f64>, steps: Vec<(f64, f64)>) -> ItemRecord {
        ItemRecord {
            id,
            label,
            pair: 0,
            divergence_time: div,
            trajectories: 1,
            tokens: steps.len(),
            series: ScoreSeries { steps },
            detect_s: 0.001 * id as f64,
            fit_s: 0.5,
        }
    }

    #[test]
    fn summary_counts_and_delays() {
        let records = vec![
            item(0, Label::Normal, None, vec![(0.0, 0.0), (10.0, 0.1)]),
            item(1, Label::Normal, None, vec![(0.0, 0.0), (10.0, 0.5)]),
            item(2, Label::Anomalous, Some(5.0), vec![(0.0, 0.0), (10.0, 0.3), (20.0, 0.7)]),
            item(3, Label::Anomalous, Some(25.0), vec![(0.0, 0.0), (10.0, 0.5)]),
        ];
        let r = summarize(Method::Proposed, 0.4, 18, &records).unwrap();
        assert_eq!((r.detected, r.missed, r.premature, r.false_positives), (2, 0, 1, 1));
        assert_eq!(r.median_delay_s, Some(7.5));
        assert_eq!(r.auc, 0.875);
        let r = summarize(Method::Proposed, 0.6, 18, &records).unwrap();
        assert_eq!((r.detected, r.missed), (1, 1));
        assert_eq!(r.median_delay_s, Some(15.0));
        // iBDD thresholds act on 1 - fraction
        let r = summarize(Method::Ibdd, 0.4, 18, &records).unwrap();
        assert_eq!(r.detected, 1);
    }

    #[test]
    fn records_roundtrip_and_table_shape() {
        let records = vec![
            item(0, Label::Normal, None, vec![(0.0, 0.1)]),
            item(1, Label::Anomalous, Some(0.0), vec![(1.0, 0.9)]),
        ];
        let mut rows = Vec::new();
        for theta in [0.2, 0.4, 0.6] {
            for precision in [17, 18, 19] {
                rows.push(summarize(Method::Proposed, theta, precision, &records).unwrap());
            }
        }
        let mut buf = Vec::new();
        write_records(&rows, &mut buf).unwrap();
        assert_eq!(read_records(&buf[..]).unwrap(), rows);
        let table = render_table(&rows);
        assert_eq!(table.lines().count(), 2 + 9);
        let single = render_table(&rows[..1]);
        assert_eq!(single.lines().count(), 3);
    }
}
