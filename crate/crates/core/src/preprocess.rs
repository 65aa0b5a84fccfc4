//! Online preprocessing of a per-person point stream: acceleration-based
//! noise filtering, block partitioning and stay-point contraction.
//!
//! The streaming path ([`Preprocessor`]) and the batch path
//! ([`compress_stream`], [`compress_block`]) produce identical blocks.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::geo::{haversine, kinematics, median_point, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// Temporal split threshold (s).
    pub epsilon: f64,
    /// Spatial split threshold (m).
    pub gamma: f64,
    /// Contraction radius around the running median (m).
    pub xi_prime: f64,
    /// Maximum drift of a stay point from any point it replaces (m).
    pub alpha: f64,
    /// Points whose absolute acceleration exceeds this bound are dropped (m/s²).
    pub max_abs_accel: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { epsilon: 300.0, gamma: 500.0, xi_prime: 28.0, alpha: 100.0, max_abs_accel: 5.0 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon > 0 violated (epsilon = {})", self.epsilon)));
        }
        if !(self.xi_prime > 0.0) {
            return Err(Error::Config(format!("xi_prime > 0 violated (xi_prime = {})", self.xi_prime)));
        }
        if !(self.xi_prime < self.alpha) {
            return Err(Error::Config(format!(
                "xi_prime < alpha violated ({} >= {})",
                self.xi_prime, self.alpha
            )));
        }
        if !(self.alpha < self.gamma) {
            return Err(Error::Config(format!("alpha < gamma violated ({} >= {})", self.alpha, self.gamma)));
        }
        if !(self.max_abs_accel > 0.0) {
            return Err(Error::Config(format!(
                "max_abs_accel > 0 violated (max_abs_accel = {})",
                self.max_abs_accel
            )));
        }
        Ok(())
    }
}

/// A contracted run of points. `point.timestamp` is the start of the run and
/// `weight` its duration; uncontracted points have weight 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StayPoint {
    pub point: GeoPoint,
    pub weight: f64,
}

impl StayPoint {
    pub fn timestamp(&self) -> f64 {
        self.point.timestamp
    }

    pub fn end(&self) -> f64 {
        self.point.timestamp + self.weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub person_id: String,
    pub points: Vec<StayPoint>,
    pub open: bool,
}

impl Block {
    pub fn new(person_id: impl Into<String>) -> Self {
        Block { person_id: person_id.into(), points: Vec::new(), open: true }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseVerdict {
    Keep,
    Drop,
}

/// Drops `cur` iff its absolute acceleration is strictly above the bound.
pub fn filter_noise(
    prev: &GeoPoint,
    prev_speed: f64,
    cur: &GeoPoint,
    cfg: &PreprocessConfig,
) -> Result<NoiseVerdict> {
    let k = kinematics(prev, prev_speed, cur)?;
    Ok(if k.abs_acceleration > cfg.max_abs_accel { NoiseVerdict::Drop } else { NoiseVerdict::Keep })
}

/// Whether `cur` starts a new block after `prev`.
pub fn splits_block(prev: &GeoPoint, cur: &GeoPoint, cfg: &PreprocessConfig) -> bool {
    cur.timestamp - prev.timestamp >= cfg.epsilon || haversine(prev, cur) >= cfg.gamma
}

#[derive(Debug, Clone, PartialEq)]
pub enum Contraction {
    Continue,
    Flush(StayPoint),
}

/// Collapse a non-empty run into a single stay point.
pub fn stay_point_of(run: &[GeoPoint]) -> Result<StayPoint> {
    let median = median_point(run)?;
    let first = run[0].timestamp;
    let last = run[run.len() - 1].timestamp;
    Ok(StayPoint { point: median.with_timestamp(first), weight: last - first })
}

/// One contraction step. Absorbs `next` into `buffer` when it lies within
/// `xi_prime` of the buffer's median and the updated median stays within
/// `alpha` of every buffered point; otherwise flushes the buffer as a stay
/// point and restarts it at `next`.
pub fn contract(buffer: &mut Vec<GeoPoint>, next: GeoPoint, cfg: &PreprocessConfig) -> Result<Contraction> {
    if buffer.is_empty() {
        buffer.push(next);
        return Ok(Contraction::Continue);
    }
    if absorbs(buffer, &next, cfg)? {
        buffer.push(next);
        return Ok(Contraction::Continue);
    }
    let sp = stay_point_of(buffer)?;
    buffer.clear();
    buffer.push(next);
    Ok(Contraction::Flush(sp))
}

fn absorbs(buffer: &[GeoPoint], next: &GeoPoint, cfg: &PreprocessConfig) -> Result<bool> {
    let median = median_point(buffer)?;
    if haversine(&median, next) >= cfg.xi_prime {
        return Ok(false);
    }
    let mut extended = buffer.to_vec();
    extended.push(*next);
    let updated = median_point(&extended)?;
    Ok(extended.iter().all(|p| haversine(&updated, p) < cfg.alpha))
}

/// Result of ingesting a single point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOutcome {
    /// Stay points finalized by this point, in emission order.
    pub stay_points: Vec<StayPoint>,
    /// The block finalized by this point, if the point started a new block.
    pub closed_block: Option<Block>,
    /// The point was rejected by the noise filter.
    pub dropped: bool,
}

/// Per-person streaming preprocessing state.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    cfg: PreprocessConfig,
    last: Option<GeoPoint>,
    last_speed: f64,
    buffer: Vec<GeoPoint>,
    block: Block,
}

impl Preprocessor {
    pub fn new(person_id: impl Into<String>, cfg: PreprocessConfig) -> Self {
        Preprocessor { cfg, last: None, last_speed: 0.0, buffer: Vec::new(), block: Block::new(person_id) }
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.cfg
    }

    /// The block currently being built (without the pending contraction buffer).
    pub fn current_block(&self) -> &Block {
        &self.block
    }

    pub fn pending(&self) -> &[GeoPoint] {
        &self.buffer
    }

    pub fn ingest(&mut self, p: GeoPoint) -> Result<IngestOutcome> {
        p.validate()?;
        let mut out = IngestOutcome::default();
        let Some(last) = self.last else {
            self.last = Some(p);
            self.last_speed = 0.0;
            self.buffer.push(p);
            return Ok(out);
        };
        if p.timestamp <= last.timestamp {
            return Err(Error::OutOfOrder { last: last.timestamp, got: p.timestamp });
        }
        let temporal_split = p.timestamp - last.timestamp >= self.cfg.epsilon;
        if !temporal_split {
            let k = kinematics(&last, self.last_speed, &p)?;
            if k.abs_acceleration > self.cfg.max_abs_accel {
                out.dropped = true;
                return Ok(out);
            }
            self.last_speed = k.speed;
        } else {
            self.last_speed = 0.0;
        }
        self.last = Some(p);

        if splits_block(&last, &p, &self.cfg) {
            if let Some(sp) = self.flush_buffer()? {
                out.stay_points.push(sp);
            }
            let person = self.block.person_id.clone();
            let mut closed = std::mem::replace(&mut self.block, Block::new(person));
            closed.open = false;
            out.closed_block = Some(closed);
            self.buffer.push(p);
            return Ok(out);
        }

        if let Contraction::Flush(sp) = contract(&mut self.buffer, p, &self.cfg)? {
            self.block.points.push(sp);
            out.stay_points.push(sp);
        }
        Ok(out)
    }

    fn flush_buffer(&mut self) -> Result<Option<StayPoint>> {
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let sp = stay_point_of(&self.buffer)?;
        self.buffer.clear();
        self.block.points.push(sp);
        Ok(Some(sp))
    }

    /// End of stream: flush the pending buffer and close the current block.
    /// Returns the final stay point (if any) and the closed block (if non-empty).
    pub fn finish(&mut self) -> Result<(Option<StayPoint>, Option<Block>)> {
        let sp = self.flush_buffer()?;
        let person = self.block.person_id.clone();
        let mut closed = std::mem::replace(&mut self.block, Block::new(person));
        closed.open = false;
        self.last = None;
        self.last_speed = 0.0;
        Ok((sp, if closed.is_empty() { None } else { Some(closed) }))
    }
}

/// Batch contraction of one block's raw points (no block splitting).
pub fn compress_block(person_id: &str, raw: &[GeoPoint], cfg: &PreprocessConfig) -> Result<Block> {
    check_sorted(raw)?;
    let mut block = Block::new(person_id);
    block.open = false;
    let mut start = 0;
    while start < raw.len() {
        let mut end = start + 1;
        while end < raw.len() && absorbs(&raw[start..end], &raw[end], cfg)? {
            end += 1;
        }
        block.points.push(stay_point_of(&raw[start..end])?);
        start = end;
    }
    Ok(block)
}

/// Batch equivalent of feeding `raw` through a [`Preprocessor`] and calling
/// [`Preprocessor::finish`]: noise filtering, block partitioning, contraction.
pub fn compress_stream(person_id: &str, raw: &[GeoPoint], cfg: &PreprocessConfig) -> Result<Vec<Block>> {
    check_sorted(raw)?;
    let kept = filter_stream(raw, cfg)?;
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=kept.len() {
        if i == kept.len() || splits_block(&kept[i - 1], &kept[i], cfg) {
            blocks.push(compress_block(person_id, &kept[start..i], cfg)?);
            start = i;
        }
    }
    Ok(blocks)
}

/// The points surviving the noise filter.
pub fn filter_stream(raw: &[GeoPoint], cfg: &PreprocessConfig) -> Result<Vec<GeoPoint>> {
    let mut kept: Vec<GeoPoint> = Vec::with_capacity(raw.len());
    let mut speed = 0.0;
    for p in raw {
        match kept.last() {
            None => kept.push(*p),
            Some(last) if p.timestamp - last.timestamp >= cfg.epsilon => {
                speed = 0.0;
                kept.push(*p);
            }
            Some(last) => {
                let k = kinematics(last, speed, p)?;
                if k.abs_acceleration <= cfg.max_abs_accel {
                    speed = k.speed;
                    kept.push(*p);
                }
            }
        }
    }
    Ok(kept)
}

fn check_sorted(raw: &[GeoPoint]) -> Result<()> {
    for w in raw.windows(2) {
        if w[1].timestamp <= w[0].timestamp {
            return Err(Error::OutOfOrder { last: w[0].timestamp, got: w[1].timestamp });
        }
    }
    Ok(())
}

/// One raw input record.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub person_id: String,
    pub point: GeoPoint,
}

/// Parse a `person_id,timestamp,lat,lon` line.
pub fn parse_record(line: &str) -> Option<PointRecord> {
    let mut parts = line.split(',').map(str::trim);
    let person_id = parts.next().filter(|s| !s.is_empty())?.to_string();
    let timestamp: f64 = parts.next()?.parse().ok()?;
    let lat: f64 = parts.next()?.parse().ok()?;
    let lon: f64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    let point = GeoPoint::new(lat, lon, timestamp).ok()?;
    Some(PointRecord { person_id, point })
}

pub fn format_record(person_id: &str, p: &GeoPoint) -> String {
    format!("{},{},{:.7},{:.7}", person_id, p.timestamp, p.lat, p.lon)
}

/// One person's points as a record stream, one line per point.
pub fn format_stream(person_id: &str, points: &[GeoPoint]) -> String {
    let mut s = String::new();
    for p in points {
        s.push_str(&format_record(person_id, p));
        s.push('\n');
    }
    s
}

/// Parse a record stream. Blank lines and `#` comments are ignored; other
/// invalid lines are counted and skipped.
pub fn read_records<R: BufRead>(reader: R) -> Result<(Vec<PointRecord>, usize)> {
    let mut records = Vec::new();
    let mut invalid = 0;
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_record(trimmed) {
            Some(r) => records.push(r),
            None => invalid += 1,
        }
    }
    Ok((records, invalid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalFrame;

    fn frame() -> LocalFrame {
        LocalFrame::new(GeoPoint::at(55.4, 10.4))
    }

    fn pt(x: f64, y: f64, t: f64) -> GeoPoint {
        frame().to_geo(x, y).with_timestamp(t)
    }

    fn feed(raw: &[GeoPoint], cfg: PreprocessConfig) -> Vec<Block> {
        let mut pre = Preprocessor::new("p", cfg);
        let mut blocks = Vec::new();
        for p in raw {
            if let Some(b) = pre.ingest(*p).unwrap().closed_block {
                blocks.push(b);
            }
        }
        if let (_, Some(b)) = pre.finish().unwrap() {
            blocks.push(b);
        }
        blocks
    }

    #[test]
    fn noise_filter_boundaries() {
        let cfg = PreprocessConfig::default();
        let a = pt(0.0, 0.0, 0.0);
        assert_eq!(filter_noise(&a, 0.0, &pt(0.0, 0.0, 10.0), &cfg).unwrap(), NoiseVerdict::Keep);
        // 500 m in 1 s from rest: speed 500, accel 500.
        let far = pt(500.0, 0.0, 1.0);
        let big = PreprocessConfig { max_abs_accel: 5.0, ..cfg };
        assert_eq!(filter_noise(&a, 0.0, &far, &big).unwrap(), NoiseVerdict::Drop);
        // 50 m/s² with a 5 m/s² bound.
        let p = pt(50.0, 0.0, 1.0);
        let k = kinematics(&a, 0.0, &p).unwrap();
        assert!((k.abs_acceleration - 50.0).abs() < 0.1);
        assert_eq!(filter_noise(&a, 0.0, &p, &big).unwrap(), NoiseVerdict::Drop);
        // exactly at the bound: keep
        let at_bound = PreprocessConfig { max_abs_accel: k.abs_acceleration, ..cfg };
        assert_eq!(filter_noise(&a, 0.0, &p, &at_bound).unwrap(), NoiseVerdict::Keep);
    }

    #[test]
    fn temporal_split_at_epsilon() {
        let cfg = PreprocessConfig::default();
        let mut pre = Preprocessor::new("p", cfg);
        pre.ingest(pt(0.0, 0.0, 0.0)).unwrap();
        let out = pre.ingest(pt(0.0, 0.0, 301.0)).unwrap();
        assert!(out.closed_block.is_some());
        let mut pre = Preprocessor::new("p", cfg);
        pre.ingest(pt(0.0, 0.0, 0.0)).unwrap();
        assert!(pre.ingest(pt(0.0, 0.0, 300.0)).unwrap().closed_block.is_some());
    }

    #[test]
    fn spatial_split_at_gamma() {
        let cfg = PreprocessConfig { max_abs_accel: 1e9, ..Default::default() };
        let mut pre = Preprocessor::new("p", cfg);
        pre.ingest(pt(0.0, 0.0, 0.0)).unwrap();
        let out = pre.ingest(pt(600.0, 0.0, 100.0)).unwrap();
        let closed = out.closed_block.unwrap();
        assert_eq!(closed.points.len(), 1);
        assert!(!closed.open);
    }

    #[test]
    fn small_step_no_block_event() {
        let cfg = PreprocessConfig::default();
        let mut pre = Preprocessor::new("p", cfg);
        pre.ingest(pt(0.0, 0.0, 0.0)).unwrap();
        let out = pre.ingest(pt(5.0, 0.0, 10.0)).unwrap();
        assert!(out.closed_block.is_none());
        assert!(out.stay_points.is_empty());
    }

    #[test]
    fn out_of_order_is_rejected_and_state_kept() {
        let mut pre = Preprocessor::new("p", PreprocessConfig::default());
        pre.ingest(pt(0.0, 0.0, 10.0)).unwrap();
        let before = pre.pending().to_vec();
        assert!(matches!(pre.ingest(pt(1.0, 0.0, 5.0)), Err(Error::OutOfOrder { .. })));
        assert!(pre.ingest(pt(1.0, 0.0, 10.0)).is_err());
        assert_eq!(pre.pending(), &before[..]);
    }

    #[test]
    fn jittered_stay_contracts_to_one_point() {
        // 180 points within 10 m of the origin over 900 s.
        let cfg = PreprocessConfig::default();
        let raw: Vec<GeoPoint> = (0..=180)
            .map(|i| {
                let a = i as f64 * 2.399;
                let r = 9.0 * ((i * 7919) % 100) as f64 / 100.0;
                pt(r * a.cos(), r * a.sin(), i as f64 * 5.0)
            })
            .collect();
        let block = compress_block("p", &raw, &cfg).unwrap();
        assert_eq!(block.points.len(), 1);
        assert_eq!(block.points[0].weight, 900.0);
        assert_eq!(block.points[0].timestamp(), 0.0);
        assert_eq!(feed(&raw, cfg), vec![block]);
    }

    #[test]
    fn distant_points_stay_separate() {
        let cfg = PreprocessConfig { max_abs_accel: 1e9, gamma: 5000.0, ..Default::default() };
        let raw = [pt(0.0, 0.0, 0.0), pt(1000.0, 0.0, 60.0)];
        let block = compress_block("p", &raw, &cfg).unwrap();
        assert_eq!(block.points.len(), 2);
        assert!(block.points.iter().all(|s| s.weight == 0.0));
    }

    #[test]
    fn slow_drift_flushes_at_alpha() {
        // The walker advances 20 m at a time and lingers twice as long at each
        // new spot, so the median trails just behind the newest points: every
        // arrival is within xi' of the running median, yet the spread grows
        // until the first point is alpha away from the median.
        let cfg = PreprocessConfig::default();
        let mut raw = Vec::new();
        let mut t = 0.0;
        for k in 0..7 {
            for _ in 0..(1 << k) {
                raw.push(pt(20.0 * k as f64, 0.0, t));
                t += 10.0;
            }
        }
        let block = compress_block("p", &raw, &cfg).unwrap();
        assert!(block.points.len() > 1);
        let run = (block.points[0].weight / 10.0).round() as usize + 1;
        // offline check of both conditions at the flush
        let before = median_point(&raw[..run]).unwrap();
        assert!(raw[..run].iter().all(|p| haversine(&before, p) < cfg.alpha));
        assert!(haversine(&before, &raw[run]) < cfg.xi_prime, "step condition still held");
        let after = median_point(&raw[..=run]).unwrap();
        let spread = raw[..=run].iter().map(|p| haversine(&after, p)).fold(0.0, f64::max);
        assert!(spread >= cfg.alpha, "flush caused by the alpha condition");
        assert_eq!(feed(&raw, cfg), vec![block]);
    }

    #[test]
    fn empty_and_sparse_inputs() {
        let cfg = PreprocessConfig::default();
        assert!(compress_block("p", &[], &cfg).unwrap().is_empty());
        assert!(compress_stream("p", &[], &cfg).unwrap().is_empty());
        let raw: Vec<GeoPoint> = (0..10).map(|i| pt(100.0 * i as f64, 0.0, 30.0 * i as f64)).collect();
        let block = compress_block("p", &raw, &cfg).unwrap();
        assert_eq!(block.len(), 10);
        assert!(block.points.iter().all(|s| s.weight == 0.0));
    }

    #[test]
    fn unsorted_batch_input_is_an_error() {
        let cfg = PreprocessConfig::default();
        assert!(compress_block("p", &[pt(0.0, 0.0, 5.0), pt(0.0, 0.0, 1.0)], &cfg).is_err());
    }

    #[test]
    fn config_validation_names_the_inequality() {
        let bad = PreprocessConfig { alpha: 20.0, ..Default::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("xi_prime < alpha"), "{msg}");
        let bad = PreprocessConfig { alpha: 600.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("alpha < gamma"));
        assert!(PreprocessConfig::default().validate().is_ok());
    }

    #[test]
    fn record_parsing() {
        let input = "a,10,55.4,10.4\n\n# c\nbad line\nb,11,95,0\nc,12,55.0,10.0,extra\nd,13,55,10\n";
        let (recs, invalid) = read_records(input.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(invalid, 3);
        assert_eq!(recs[0].person_id, "a");
        assert_eq!(recs[1].point.timestamp, 13.0);
    }
}
