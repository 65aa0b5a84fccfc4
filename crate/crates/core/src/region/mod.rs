//! Geofenced regions discovered from heavy stay points across blocks, and the
//! segmentation of blocks into trajectories between those regions.

pub mod hull;
pub mod louvain;
mod segment;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::{haversine, GeoPoint, LocalFrame};
use crate::preprocess::{Block, StayPoint};

pub use louvain::{louvain, modularity, WeightedGraph};
pub use segment::{segment_block, SegmentEvent, Segmenter, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId(pub u32);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for RegionId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.parse().map(RegionId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionConfig {
    /// Minimum stay-point weight (s) for a stay point to become a graph node.
    pub tau: f64,
    /// Edge radius (m).
    pub xi_double_prime: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig { tau: 600.0, xi_double_prime: 28.0 }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau > 0 violated (tau = {})", self.tau)));
        }
        if !(self.xi_double_prime > 0.0) {
            return Err(Error::Config(format!(
                "xi_double_prime > 0 violated (xi_double_prime = {})",
                self.xi_double_prime
            )));
        }
        Ok(())
    }

    /// Containment slack around a hull.
    pub fn buffer_m(&self) -> f64 {
        self.xi_double_prime / 2.0
    }
}

/// Heavy stay points linked when within `xi_double_prime` of each other.
#[derive(Debug, Clone, Default)]
pub struct StaypointGraph {
    pub nodes: Vec<StayPoint>,
    pub graph: WeightedGraph,
}

/// Edge weight `1 - d / xi''`, kept strictly positive.
pub fn edge_weight(d: f64, xi_double_prime: f64) -> f64 {
    (1.0 - d / xi_double_prime).clamp(f64::MIN_POSITIVE, 1.0)
}

pub fn build_staypoint_graph(blocks: &[Block], cfg: &RegionConfig) -> StaypointGraph {
    let nodes: Vec<StayPoint> =
        blocks.iter().flat_map(|b| b.points.iter()).filter(|s| s.weight > cfg.tau).copied().collect();
    let mut graph = WeightedGraph::with_nodes(nodes.len());
    // sort by latitude so only a narrow band needs a distance check
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| nodes[a].point.lat.total_cmp(&nodes[b].point.lat).then(a.cmp(&b)));
    let band_deg = (cfg.xi_double_prime / crate::geo::EARTH_RADIUS_M).to_degrees() * 1.01;
    let mut pairs = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if nodes[j].point.lat - nodes[i].point.lat > band_deg {
                break;
            }
            let d = haversine(&nodes[i].point, &nodes[j].point);
            if d <= cfg.xi_double_prime {
                pairs.push((i.min(j), i.max(j), edge_weight(d, cfg.xi_double_prime)));
            }
        }
    }
    pairs.sort_by_key(|&(i, j, _)| (i, j));
    for (i, j, w) in pairs {
        graph.add_edge(i, j, w);
    }
    StaypointGraph { nodes, graph }
}

pub fn louvain_cluster(g: &StaypointGraph) -> Vec<Vec<usize>> {
    louvain(&g.graph)
}

/// Convex hull of a cluster of stay points, buffered for containment tests.
#[derive(Debug, Clone, PartialEq)]
pub struct GeofencedRegion {
    pub region_id: RegionId,
    /// Hull vertices, counter-clockwise; one or two vertices when degenerate.
    pub hull: Vec<GeoPoint>,
    pub centroid: GeoPoint,
    /// Containment slack (m) around the hull.
    pub buffer_m: f64,
    pub members: Vec<StayPoint>,
    hull_xy: Vec<hull::Xy>,
    bbox: (f64, f64, f64, f64),
}

impl GeofencedRegion {
    pub fn new(region_id: RegionId, centroid: GeoPoint, hull: Vec<GeoPoint>, buffer_m: f64) -> Self {
        let frame = LocalFrame::new(centroid);
        let hull_xy: Vec<hull::Xy> = hull.iter().map(|p| frame.to_xy(p)).collect();
        let pad = (buffer_m / crate::geo::EARTH_RADIUS_M).to_degrees() * 1.5;
        let lon_pad = pad / centroid.lat.to_radians().cos().max(1e-6);
        let (mut min_lat, mut max_lat, mut min_lon, mut max_lon) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            min_lat = min_lat.min(p.lat);
            max_lat = max_lat.max(p.lat);
            min_lon = min_lon.min(p.lon);
            max_lon = max_lon.max(p.lon);
        }
        GeofencedRegion {
            region_id,
            hull,
            centroid,
            buffer_m,
            members: Vec::new(),
            hull_xy,
            bbox: (min_lat - pad, max_lat + pad, min_lon - lon_pad, max_lon + lon_pad),
        }
    }

    pub fn from_members(region_id: RegionId, members: Vec<StayPoint>, buffer_m: f64) -> Self {
        let n = members.len() as f64;
        let centroid = GeoPoint::at(
            members.iter().map(|s| s.point.lat).sum::<f64>() / n,
            members.iter().map(|s| s.point.lon).sum::<f64>() / n,
        );
        let frame = LocalFrame::new(centroid);
        let xy: Vec<hull::Xy> = members.iter().map(|s| frame.to_xy(&s.point)).collect();
        let hull: Vec<GeoPoint> = hull::convex_hull(&xy).into_iter().map(|(x, y)| frame.to_geo(x, y)).collect();
        let mut region = GeofencedRegion::new(region_id, centroid, hull, buffer_m);
        region.members = members;
        region
    }

    /// Distance (m) from `p` to the unbuffered hull, 0 inside.
    pub fn distance_to_hull(&self, p: &GeoPoint) -> f64 {
        let frame = LocalFrame::new(self.centroid);
        hull::distance_to_hull(&self.hull_xy, frame.to_xy(p))
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        let (a, b, c, d) = self.bbox;
        if p.lat < a || p.lat > b || p.lon < c || p.lon > d {
            return false;
        }
        self.distance_to_hull(p) <= self.buffer_m
    }

    pub fn is_degenerate(&self) -> bool {
        self.hull.len() <= 2
    }

    /// `region_id;lat,lon lat,lon …;lat,lon`
    pub fn to_line(&self) -> String {
        let verts: Vec<String> = self.hull.iter().map(|p| format!("{},{}", p.lat, p.lon)).collect();
        format!("{};{};{},{}", self.region_id, verts.join(" "), self.centroid.lat, self.centroid.lon)
    }

    pub fn from_line(line: &str, buffer_m: f64) -> Result<Self> {
        let bad = |msg: &str| Error::Parse { line: 0, msg: format!("{msg}: {line:?}") };
        let fields: Vec<&str> = line.split(';').collect();
        if fields.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let id: RegionId = fields[0].trim().parse().map_err(|_| bad("bad region id"))?;
        let parse_pt = |s: &str| -> Result<GeoPoint> {
            let (a, b) = s.split_once(',').ok_or_else(|| bad("bad vertex"))?;
            let lat: f64 = a.parse().map_err(|_| bad("bad latitude"))?;
            let lon: f64 = b.parse().map_err(|_| bad("bad longitude"))?;
            GeoPoint::new(lat, lon, 0.0)
        };
        let hull = fields[1].split_whitespace().map(parse_pt).collect::<Result<Vec<_>>>()?;
        if hull.is_empty() {
            return Err(bad("empty hull"));
        }
        let centroid = parse_pt(fields[2].trim())?;
        Ok(GeofencedRegion::new(id, centroid, hull, buffer_m))
    }
}

/// The region containing `p`; when buffers overlap, the nearest centroid wins.
pub fn region_of<'a>(regions: &'a [GeofencedRegion], p: &GeoPoint) -> Option<&'a GeofencedRegion> {
    regions
        .iter()
        .filter(|r| r.contains(p))
        .min_by(|a, b| haversine(&a.centroid, p).total_cmp(&haversine(&b.centroid, p)))
}

/// One region per cluster. A cluster whose centroid lies within
/// `xi_double_prime` of a previous region's centroid inherits its id;
/// otherwise it gets a fresh id above every id seen so far.
pub fn regions_from_clusters(
    clusters: &[Vec<usize>],
    nodes: &[StayPoint],
    previous: &[GeofencedRegion],
    cfg: &RegionConfig,
) -> Vec<GeofencedRegion> {
    let mut next_id = previous.iter().map(|r| r.region_id.0 + 1).max().unwrap_or(0);
    let mut used = vec![false; previous.len()];
    let mut out = Vec::with_capacity(clusters.len());
    for cluster in clusters {
        let members: Vec<StayPoint> = cluster.iter().map(|&i| nodes[i]).collect();
        if members.is_empty() {
            continue;
        }
        let mut region = GeofencedRegion::from_members(RegionId(0), members, cfg.buffer_m());
        let inherited = previous
            .iter()
            .enumerate()
            .filter(|(k, r)| !used[*k] && haversine(&r.centroid, &region.centroid) <= cfg.xi_double_prime)
            .min_by(|a, b| {
                haversine(&a.1.centroid, &region.centroid).total_cmp(&haversine(&b.1.centroid, &region.centroid))
            });
        region.region_id = match inherited {
            Some((k, r)) => {
                used[k] = true;
                r.region_id
            }
            None => {
                next_id += 1;
                RegionId(next_id - 1)
            }
        };
        out.push(region);
    }
    out
}

/// Graph construction, clustering and hull building in one call.
pub fn discover_regions(blocks: &[Block], previous: &[GeofencedRegion], cfg: &RegionConfig) -> Vec<GeofencedRegion> {
    let g = build_staypoint_graph(blocks, cfg);
    let clusters = louvain_cluster(&g);
    regions_from_clusters(&clusters, &g.nodes, previous, cfg)
}
