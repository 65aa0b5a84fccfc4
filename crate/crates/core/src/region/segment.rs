use std::ops::Deref;

use crate::preprocess::{Block, StayPoint};

use super::{region_of, GeofencedRegion, RegionId};

/// Part of a block between two region visits. `destination_region` is `None`
/// while the trajectory is still ongoing (or the block ended mid-walk).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub person_id: String,
    pub origin_region: RegionId,
    pub destination_region: Option<RegionId>,
    pub points: Vec<StayPoint>,
}

impl Trajectory {
    pub fn is_ongoing(&self) -> bool {
        self.destination_region.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentEvent {
    /// A trajectory left `origin`; carries the last in-region point and the
    /// first outside point.
    Started { origin: RegionId, points: [StayPoint; 2] },
    Extended(StayPoint),
    /// The trajectory reached a region; `trajectory` includes that point.
    Finished(Trajectory),
}

/// Streaming segmentation of one block against a fixed region snapshot
/// (borrowed or shared).
#[derive(Debug, Clone)]
pub struct Segmenter<R> {
    regions: R,
    person_id: String,
    last_inside: Option<(StayPoint, RegionId)>,
    current: Option<Trajectory>,
}

impl<R: Deref<Target = [GeofencedRegion]>> Segmenter<R> {
    pub fn new(person_id: impl Into<String>, regions: R) -> Self {
        Segmenter { regions, person_id: person_id.into(), last_inside: None, current: None }
    }

    pub fn regions(&self) -> &[GeofencedRegion] {
        &self.regions
    }

    /// Swap in a new region snapshot between trajectories. While a
    /// trajectory is in flight the snapshot is handed back unchanged.
    pub fn replace_regions(&mut self, regions: R) -> std::result::Result<(), R> {
        if self.current.is_some() {
            return Err(regions);
        }
        self.last_inside =
            self.last_inside.and_then(|(sp, _)| region_of(&regions, &sp.point).map(|r| (sp, r.region_id)));
        self.regions = regions;
        Ok(())
    }

    pub fn current(&self) -> Option<&Trajectory> {
        self.current.as_ref()
    }

    pub fn push(&mut self, sp: StayPoint) -> Option<SegmentEvent> {
        match region_of(&self.regions, &sp.point).map(|r| r.region_id) {
            Some(region) => {
                self.last_inside = Some((sp, region));
                self.current.take().map(|mut t| {
                    t.points.push(sp);
                    t.destination_region = Some(region);
                    SegmentEvent::Finished(t)
                })
            }
            None => {
                if let Some(t) = self.current.as_mut() {
                    t.points.push(sp);
                    return Some(SegmentEvent::Extended(sp));
                }
                let (origin_point, origin) = self.last_inside?;
                self.current = Some(Trajectory {
                    person_id: self.person_id.clone(),
                    origin_region: origin,
                    destination_region: None,
                    points: vec![origin_point, sp],
                });
                Some(SegmentEvent::Started { origin, points: [origin_point, sp] })
            }
        }
    }

    /// End of block: the unfinished trajectory, if any.
    pub fn finish(&mut self) -> Option<Trajectory> {
        self.last_inside = None;
        self.current.take()
    }
}

/// Cut a block into trajectories; a trailing unfinished walk is returned as
/// an ongoing trajectory.
pub fn segment_block(block: &Block, regions: &[GeofencedRegion]) -> Vec<Trajectory> {
    let mut seg = Segmenter::new(block.person_id.clone(), regions);
    let mut out = Vec::new();
    for sp in &block.points {
        if let Some(SegmentEvent::Finished(t)) = seg.push(*sp) {
            out.push(t);
        }
    }
    out.extend(seg.finish());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, LocalFrame};

    fn frame() -> LocalFrame {
        LocalFrame::new(GeoPoint::at(55.4, 10.4))
    }

    fn sp(x: f64, t: f64, weight: f64) -> StayPoint {
        StayPoint { point: frame().to_geo(x, 0.0).with_timestamp(t), weight }
    }

    fn regions() -> Vec<GeofencedRegion> {
        vec![
            GeofencedRegion::from_members(RegionId(0), vec![sp(0.0, 0.0, 900.0)], 14.0),
            GeofencedRegion::from_members(RegionId(1), vec![sp(1000.0, 0.0, 900.0)], 14.0),
        ]
    }

    fn walk(from: f64, to: f64, t0: f64) -> Vec<StayPoint> {
        (1..10).map(|i| sp(from + (to - from) * i as f64 / 10.0, t0 + 20.0 * i as f64, 0.0)).collect()
    }

    #[test]
    fn back_and_forth_alternates() {
        let mut pts = vec![sp(1.0, 0.0, 900.0)];
        pts.extend(walk(0.0, 1000.0, 900.0));
        pts.push(sp(999.0, 1200.0, 900.0));
        pts.extend(walk(1000.0, 0.0, 2100.0));
        pts.push(sp(2.0, 2400.0, 900.0));
        let block = Block { person_id: "p".into(), points: pts, open: false };
        let trajs = segment_block(&block, &regions());
        assert_eq!(trajs.len(), 2);
        assert_eq!((trajs[0].origin_region, trajs[0].destination_region), (RegionId(0), Some(RegionId(1))));
        assert_eq!((trajs[1].origin_region, trajs[1].destination_region), (RegionId(1), Some(RegionId(0))));
        for t in &trajs {
            assert_eq!(t.points.len(), 11);
            let rs = regions();
            let inside = |p: &StayPoint| region_of(&rs, &p.point).is_some();
            assert!(inside(&t.points[0]) && inside(t.points.last().unwrap()));
            assert!(t.points[1..t.points.len() - 1].iter().all(|p| !inside(p)));
        }
    }

    #[test]
    fn block_inside_one_region_has_no_trajectories() {
        let block = Block {
            person_id: "p".into(),
            points: vec![sp(0.0, 0.0, 900.0), sp(5.0, 900.0, 0.0), sp(3.0, 920.0, 100.0)],
            open: false,
        };
        assert!(segment_block(&block, &regions()).is_empty());
    }

    #[test]
    fn truncated_walk_is_ongoing() {
        let mut pts = vec![sp(0.0, 0.0, 900.0)];
        pts.extend(walk(0.0, 600.0, 900.0));
        let block = Block { person_id: "p".into(), points: pts, open: true };
        let trajs = segment_block(&block, &regions());
        assert_eq!(trajs.len(), 1);
        assert!(trajs[0].is_ongoing());
        assert_eq!(trajs[0].points.len(), 10);
    }

    #[test]
    fn no_regions_means_no_trajectories() {
        let block = Block { person_id: "p".into(), points: walk(0.0, 1000.0, 0.0), open: false };
        assert!(segment_block(&block, &[]).is_empty());
    }
}
