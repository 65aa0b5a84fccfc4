use std::sync::Arc;

use wander_core::detect::{DetectorState, Verdict};
use wander_core::eval::timed_tokens;
use wander_core::pipeline::{periodic_refresh, OnlineTracker, PipelineConfig, Snapshot, SnapshotCell};
use wander_core::preprocess::{compress_stream, Block};
use wander_core::region::segment_block;
use wander_core::synth::{generate_corpus, Corpus, CorpusSpec, NoiseModel, WaypointGraph};

fn corpus(per_pair: Vec<(usize, usize)>, seed: u64) -> Corpus {
    let spec = CorpusSpec { per_pair, ..CorpusSpec::default() };
    generate_corpus(&WaypointGraph::bundled(), &spec, &NoiseModel::default(), seed).unwrap()
}

fn blocks(c: &Corpus, cfg: &PipelineConfig) -> Vec<Block> {
    compress_stream(&c.person_id, &c.all_points(), &cfg.preprocess).unwrap()
}

fn cfg() -> PipelineConfig {
    PipelineConfig { precision: 17, ..PipelineConfig::default() }
}

fn region_lines(s: &Snapshot) -> Vec<String> {
    s.regions.iter().map(|r| r.to_line()).collect()
}

#[test]
fn refresh_on_unchanged_blocks_is_deterministic() {
    let cfg = cfg();
    let b = blocks(&corpus(vec![(4, 1), (4, 0), (3, 1)], 5), &cfg);
    let empty = Snapshot::empty(&cfg);
    let s1 = periodic_refresh(&b, &empty, &cfg).unwrap();
    let s2 = periodic_refresh(&b, &empty, &cfg).unwrap();
    assert_eq!(s1.generation, 1);
    assert_eq!(region_lines(&s1), region_lines(&s2));
    assert_eq!(s1.history, s2.history);
    assert_eq!(s1.patterns.set(), s2.patterns.set());
    // a second generation on the same data keeps region ids and patterns
    let s3 = periodic_refresh(&b, &s1, &cfg).unwrap();
    assert_eq!(s3.generation, 2);
    assert_eq!(region_lines(&s3), region_lines(&s1));
    assert_eq!(s3.patterns.set().patterns, s1.patterns.set().patterns);
}

#[test]
fn a_new_route_yields_new_patterns_after_refresh() {
    let cfg = cfg();
    let old = blocks(&corpus(vec![(3, 0), (3, 0)], 8), &cfg);
    let s1 = periodic_refresh(&old, &Snapshot::empty(&cfg), &cfg).unwrap();
    let new_route = blocks(&corpus(vec![(0, 0), (0, 0), (2, 0)], 9), &cfg);
    let mut all = old.clone();
    all.extend(new_route.iter().cloned());
    let s2 = periodic_refresh(&all, &s1, &cfg).unwrap();
    assert!(s2.regions.len() > s1.regions.len());
    // every region of the first generation keeps its id
    for r in s1.regions.iter() {
        assert!(s2.regions.iter().any(|q| q.region_id == r.region_id && q.hull == r.hull));
    }
    let known: std::collections::HashSet<_> = s1.patterns.set().patterns.iter().map(|p| &p.tokens).collect();
    let fresh: Vec<_> = s2.patterns.set().patterns.iter().filter(|p| !known.contains(&p.tokens)).collect();
    assert!(!fresh.is_empty());
    // the new route itself is now fully explained by some pattern
    let seq = &s2.history.last().unwrap().tokens;
    let sim = wander_core::detect::similarity(&s2.patterns.set().patterns, seq, &cfg.alignment);
    assert!((sim - 1.0).abs() < 1e-12, "{sim}");
}

#[test]
fn refresh_mid_trajectory_does_not_affect_the_trajectory_in_flight() {
    let cfg = cfg();
    let c = corpus(vec![(3, 0), (3, 0)], 11);
    let b = blocks(&c, &cfg);
    let s1 = periodic_refresh(&b, &Snapshot::empty(&cfg), &cfg).unwrap();
    let cell = Arc::new(SnapshotCell::new(s1));
    let mut tracker = OnlineTracker::new("p1", cfg.clone(), cell.clone()).unwrap();
    let mut summaries = Vec::new();
    let mut published = false;
    for p in c.all_points() {
        let out = tracker.ingest(p).unwrap();
        summaries.extend(out.finished);
        if !published && tracker.in_trajectory() {
            // an empty-history snapshot would flag everything
            let mut next = Snapshot::empty(&cfg);
            next.generation = 7;
            next.regions = cell.load().regions.clone();
            cell.publish(next);
            published = true;
            assert_eq!(tracker.generation(), 1);
        }
    }
    summaries.extend(tracker.finish().unwrap().finished);
    let walks: Vec<_> = summaries.iter().filter(|s| s.tokens > 5).collect();
    assert_eq!(walks.len(), 6);
    assert_eq!(walks[0].generation, 1);
    assert_eq!(walks[0].verdict, Verdict::Normal);
    for w in &walks[1..] {
        assert_eq!(w.generation, 7);
        assert_eq!(w.verdict, Verdict::Anomalous);
    }
}

#[test]
fn online_tracker_matches_batch_replay() {
    let cfg = cfg();
    let history = corpus(vec![(5, 1), (5, 1)], 21);
    let s = periodic_refresh(&blocks(&history, &cfg), &Snapshot::empty(&cfg), &cfg).unwrap();
    let cell = Arc::new(SnapshotCell::new(s));
    let snap = cell.load();

    let fresh = corpus(vec![(2, 1), (2, 1)], 22);
    let mut tracker = OnlineTracker::new("p1", cfg.clone(), cell.clone()).unwrap();
    let mut online = Vec::new();
    for p in fresh.all_points() {
        online.extend(tracker.ingest(p).unwrap().events);
    }
    online.extend(tracker.finish().unwrap().events);

    let mut batch = Vec::new();
    for block in blocks(&fresh, &cfg) {
        for t in segment_block(&block, &snap.regions) {
            let mut det = DetectorState::new(snap.patterns.clone(), cfg.alignment, cfg.theta).unwrap();
            for (ts, tok) in timed_tokens(&t, cfg.precision) {
                let step = det.step(tok);
                batch.push((ts, step.score, step.anomaly_score, step.verdict));
            }
        }
    }
    let online: Vec<_> = online.iter().map(|e| (e.timestamp, e.score, e.anomaly_score, e.verdict)).collect();
    assert_eq!(online, batch);
}
