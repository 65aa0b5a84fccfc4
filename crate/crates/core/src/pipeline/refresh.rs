//! Offline refresh: regions, historical sequences and patterns recomputed
//! from the block store and published together as one snapshot.

use std::sync::{Arc, RwLock};

use crate::detect::PatternIndex;
use crate::geohash::{sequence_from_trajectory, GeohashSequence};
use crate::ibdd::SupportSet;
use crate::mining::{mine, PatternSet};
use crate::preprocess::Block;
use crate::region::{discover_regions, segment_block, GeofencedRegion};
use crate::error::Result;

use super::config::PipelineConfig;

/// Regions and patterns from the same refresh generation.
#[derive(Debug)]
pub struct Snapshot {
    pub generation: u64,
    pub regions: Arc<[GeofencedRegion]>,
    pub history: Vec<GeohashSequence>,
    pub patterns: Arc<PatternIndex>,
    /// Historical sequences for the baseline; `None` with an empty history.
    pub support: Option<Arc<SupportSet>>,
}

impl Snapshot {
    pub fn empty(cfg: &PipelineConfig) -> Self {
        Snapshot {
            generation: 0,
            regions: Arc::from(Vec::new()),
            history: Vec::new(),
            patterns: Arc::new(PatternIndex::new(PatternSet::empty(cfg.eta, cfg.precision))),
            support: None,
        }
    }

    /// Assemble a snapshot from stored regions and patterns.
    pub fn from_parts(
        generation: u64,
        regions: Vec<GeofencedRegion>,
        history: Vec<GeohashSequence>,
        patterns: PatternSet,
        cfg: &PipelineConfig,
    ) -> Result<Self> {
        let support = support_set(&history, cfg)?;
        Ok(Snapshot {
            generation,
            regions: Arc::from(regions),
            history,
            patterns: Arc::new(PatternIndex::new(patterns)),
            support,
        })
    }
}

fn support_set(history: &[GeohashSequence], cfg: &PipelineConfig) -> Result<Option<Arc<SupportSet>>> {
    if history.is_empty() {
        return Ok(None);
    }
    let seqs = history.iter().map(|h| h.tokens.clone()).collect();
    Ok(Some(Arc::new(SupportSet::new(seqs, cfg.theta_prime, cfg.support_mode)?)))
}

/// Completed trajectories of every block as token sequences.
pub fn build_history(blocks: &[Block], regions: &[GeofencedRegion], precision: u8) -> Vec<GeohashSequence> {
    blocks
        .iter()
        .flat_map(|b| segment_block(b, regions))
        .filter(|t| !t.is_ongoing())
        .map(|t| sequence_from_trajectory(&t, precision))
        .collect()
}

/// Recompute regions (inheriting ids from `previous`), re-segment and
/// re-hash the blocks and re-mine the patterns.
pub fn periodic_refresh(
    blocks: &[Block],
    previous: &Snapshot,
    cfg: &PipelineConfig,
) -> Result<Snapshot> {
    let regions = discover_regions(blocks, &previous.regions, &cfg.region);
    let history = build_history(blocks, &regions, cfg.precision);
    let db: Vec<_> = history.iter().map(|h| h.tokens.clone()).collect();
    let patterns = mine(&db, cfg.eta, cfg.precision);
    Snapshot::from_parts(previous.generation + 1, regions, history, patterns, cfg)
}

/// The published snapshot. Readers clone the `Arc` and keep using it for as
/// long as they need; writers replace the whole pair at once.
#[derive(Debug)]
pub struct SnapshotCell {
    current: RwLock<Arc<Snapshot>>,
}

impl SnapshotCell {
    pub fn new(snapshot: Snapshot) -> Self {
        SnapshotCell { current: RwLock::new(Arc::new(snapshot)) }
    }

    pub fn load(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock").clone()
    }

    pub fn publish(&self, snapshot: Snapshot) {
        *self.current.write().expect("snapshot lock") = Arc::new(snapshot);
    }
}
