//! Online path: raw points → stay points → trajectories → token steps →
//! detection events, against whichever snapshot was current when the
//! trajectory started.

use std::sync::Arc;

use crate::detect::{DetectionEvent, DetectorState, Method, Verdict};
use crate::error::Result;
use crate::geo::GeoPoint;
use crate::geohash::SequenceBuilder;
use crate::ibdd::{IbddState, SupportSet};
use crate::preprocess::{Block, Preprocessor, StayPoint};
use crate::region::{GeofencedRegion, RegionId, SegmentEvent, Segmenter};

use super::config::PipelineConfig;
use super::refresh::{Snapshot, SnapshotCell};

/// Outcome of one tracked trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub trajectory_id: u64,
    pub generation: u64,
    pub origin: RegionId,
    /// `None` when the block ended before a region was reached.
    pub destination: Option<RegionId>,
    pub start: f64,
    pub end: f64,
    pub tokens: usize,
    pub anomaly_score: f64,
    pub verdict: Verdict,
    /// Time of the first anomalous verdict.
    pub first_anomalous: Option<f64>,
}

#[derive(Debug, Default)]
pub struct TrackerOutput {
    pub events: Vec<DetectionEvent>,
    pub finished: Vec<TrajectorySummary>,
    pub closed_block: Option<Block>,
    pub dropped: bool,
}

enum Detector {
    Proposed(DetectorState),
    Ibdd(Option<IbddState<Arc<SupportSet>>>),
}

struct Active {
    id: u64,
    generation: u64,
    origin: RegionId,
    start: f64,
    end: f64,
    builder: SequenceBuilder,
    detector: Detector,
    anomaly_score: f64,
    verdict: Verdict,
    first_anomalous: Option<f64>,
}

pub struct OnlineTracker {
    person_id: String,
    cfg: PipelineConfig,
    cell: Arc<SnapshotCell>,
    snapshot: Arc<Snapshot>,
    pre: Preprocessor,
    seg: Segmenter<Arc<[GeofencedRegion]>>,
    active: Option<Active>,
    next_id: u64,
}

impl OnlineTracker {
    pub fn new(person_id: impl Into<String>, cfg: PipelineConfig, cell: Arc<SnapshotCell>) -> Result<Self> {
        cfg.validate()?;
        let person_id = person_id.into();
        let snapshot = cell.load();
        Ok(OnlineTracker {
            pre: Preprocessor::new(person_id.clone(), cfg.preprocess),
            seg: Segmenter::new(person_id.clone(), snapshot.regions.clone()),
            person_id,
            cfg,
            cell,
            snapshot,
            active: None,
            next_id: 0,
        })
    }

    /// Generation of the snapshot the tracker currently uses.
    pub fn generation(&self) -> u64 {
        self.snapshot.generation
    }

    pub fn in_trajectory(&self) -> bool {
        self.active.is_some()
    }

    pub fn ingest(&mut self, p: GeoPoint) -> Result<TrackerOutput> {
        let outcome = self.pre.ingest(p)?;
        let mut out = TrackerOutput { dropped: outcome.dropped, ..Default::default() };
        for sp in outcome.stay_points {
            self.push_stay_point(sp, &mut out)?;
        }
        if let Some(block) = outcome.closed_block {
            self.close_block(&mut out);
            out.closed_block = Some(block);
        }
        Ok(out)
    }

    /// End of stream: flush pending points and close the open block.
    pub fn finish(&mut self) -> Result<TrackerOutput> {
        let (sp, block) = self.pre.finish()?;
        let mut out = TrackerOutput::default();
        if let Some(sp) = sp {
            self.push_stay_point(sp, &mut out)?;
        }
        self.close_block(&mut out);
        out.closed_block = block;
        Ok(out)
    }

    fn refresh_snapshot(&mut self) {
        if self.active.is_some() {
            return;
        }
        let latest = self.cell.load();
        if latest.generation != self.snapshot.generation && self.seg.replace_regions(latest.regions.clone()).is_ok() {
            self.snapshot = latest;
        }
    }

    fn push_stay_point(&mut self, sp: StayPoint, out: &mut TrackerOutput) -> Result<()> {
        self.refresh_snapshot();
        match self.seg.push(sp) {
            Some(SegmentEvent::Started { origin, points }) => {
                self.start(origin, points[0].timestamp())?;
                for q in points {
                    self.feed(q, out);
                }
            }
            Some(SegmentEvent::Extended(q)) => self.feed(q, out),
            Some(SegmentEvent::Finished(t)) => {
                self.feed(*t.points.last().expect("finished trajectory has points"), out);
                self.close(t.destination_region, out);
            }
            None => {}
        }
        Ok(())
    }

    fn close_block(&mut self, out: &mut TrackerOutput) {
        if self.seg.finish().is_some() {
            self.close(None, out);
        }
        self.refresh_snapshot();
    }

    fn start(&mut self, origin: RegionId, start: f64) -> Result<()> {
        let detector = match self.cfg.method {
            Method::Proposed => Detector::Proposed(DetectorState::new(
                self.snapshot.patterns.clone(),
                self.cfg.alignment,
                self.cfg.theta,
            )?),
            Method::Ibdd => Detector::Ibdd(self.snapshot.support.clone().map(IbddState::new)),
        };
        self.active = Some(Active {
            id: self.next_id,
            generation: self.snapshot.generation,
            origin,
            start,
            end: start,
            builder: SequenceBuilder::new(self.cfg.precision),
            detector,
            anomaly_score: 0.0,
            verdict: Verdict::Normal,
            first_anomalous: None,
        });
        self.next_id += 1;
        Ok(())
    }

    fn feed(&mut self, sp: StayPoint, out: &mut TrackerOutput) {
        let Some(a) = self.active.as_mut() else { return };
        let ts = sp.timestamp();
        a.end = ts;
        let added = a.builder.push(&sp.point);
        let tokens = a.builder.tokens();
        for &tok in &tokens[tokens.len() - added..] {
            let (score, anomaly_score, verdict) = match &mut a.detector {
                Detector::Proposed(d) => {
                    let s = d.step(tok);
                    (s.score, s.anomaly_score, s.verdict)
                }
                Detector::Ibdd(Some(d)) => {
                    let s = d.step(tok);
                    (s.fraction, s.anomaly_score, s.verdict)
                }
                // nothing to support the sequence
                Detector::Ibdd(None) => (0.0, 1.0, Verdict::Anomalous),
            };
            a.anomaly_score = anomaly_score;
            a.verdict = verdict;
            if verdict == Verdict::Anomalous && a.first_anomalous.is_none() {
                a.first_anomalous = Some(ts);
            }
            out.events.push(DetectionEvent {
                person_id: self.person_id.clone(),
                trajectory_id: a.id,
                timestamp: ts,
                score,
                anomaly_score,
                verdict,
                method: self.cfg.method,
            });
        }
    }

    fn close(&mut self, destination: Option<RegionId>, out: &mut TrackerOutput) {
        if let Some(a) = self.active.take() {
            out.finished.push(TrajectorySummary {
                trajectory_id: a.id,
                generation: a.generation,
                origin: a.origin,
                destination,
                start: a.start,
                end: a.end,
                tokens: a.builder.tokens().len(),
                anomaly_score: a.anomaly_score,
                verdict: a.verdict,
                first_anomalous: a.first_anomalous,
            });
        }
    }
}
