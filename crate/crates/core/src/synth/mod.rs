//! Synthetic labeled walking trajectories over a waypoint graph.

pub mod graph;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocalFrame};
use crate::preprocess::{format_record, read_records};
use crate::region::hull::Xy;

pub use graph::{shortest_path, RegionPair, WaypointGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Fixed part of the sampling interval (s).
    pub dt_base: f64,
    /// Scale of the folded-Gaussian part of the sampling interval (s).
    pub dt_noise: f64,
    pub speed_mean: f64,
    pub speed_sd: f64,
    /// Per-axis position noise (m).
    pub pos_noise_sd: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { dt_base: 5.0, dt_noise: 20.0, speed_mean: 4.0, speed_sd: 0.5, pos_noise_sd: 8.75 }
    }
}

impl NoiseModel {
    pub fn noise_free() -> Self {
        NoiseModel { dt_noise: 0.0, speed_sd: 0.0, pos_noise_sd: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dt_base", self.dt_base), ("speed_mean", self.speed_mean)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} > 0 violated ({v})")));
            }
        }
        for (name, v) in [("dt_noise", self.dt_noise), ("speed_sd", self.speed_sd), ("pos_noise_sd", self.pos_noise_sd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} >= 0 violated ({v})")));
            }
        }
        Ok(())
    }

    /// Deviation from the normal route (m) that counts as divergence.
    pub fn divergence_threshold(&self) -> f64 {
        (3.0 * self.pos_noise_sd).max(1.0)
    }
}

struct Sampler {
    dt: Normal<f64>,
    speed: Normal<f64>,
    pos: Normal<f64>,
    dt_base: f64,
}

impl Sampler {
    fn new(noise: &NoiseModel) -> Result<Self> {
        noise.validate()?;
        let bad = |e: rand_distr::NormalError| Error::Config(e.to_string());
        Ok(Sampler {
            dt: Normal::new(0.0, noise.dt_noise).map_err(bad)?,
            speed: Normal::new(noise.speed_mean, noise.speed_sd).map_err(bad)?,
            pos: Normal::new(0.0, noise.pos_noise_sd).map_err(bad)?,
            dt_base: noise.dt_base,
        })
    }

    fn dt<R: Rng>(&self, rng: &mut R) -> f64 {
        self.dt_base + self.dt.sample(rng).abs()
    }

    fn speed<R: Rng>(&self, rng: &mut R) -> f64 {
        loop {
            let v = self.speed.sample(rng);
            if v > 0.0 {
                return v;
            }
        }
    }

    fn jitter<R: Rng>(&self, rng: &mut R, (x, y): Xy) -> Xy {
        (x + self.pos.sample(rng), y + self.pos.sample(rng))
    }
}

pub fn polyline_length(line: &[Xy]) -> f64 {
    line.windows(2).map(|w| dist(w[0], w[1])).sum()
}

fn dist(a: Xy, b: Xy) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Point at arc length `s` (clamped to the ends).
pub fn point_at(line: &[Xy], s: f64) -> Xy {
    let mut left = s.max(0.0);
    for w in line.windows(2) {
        let len = dist(w[0], w[1]);
        if left <= len && len > 0.0 {
            let f = left / len;
            return (w[0].0 + f * (w[1].0 - w[0].0), w[0].1 + f * (w[1].1 - w[0].1));
        }
        left -= len;
    }
    *line.last().expect("non-empty polyline")
}

/// Distance from `p` to the polyline and the arc length of the closest point.
pub fn project_onto_polyline(line: &[Xy], p: Xy) -> (f64, f64) {
    if line.len() == 1 {
        return (dist(line[0], p), 0.0);
    }
    let mut best = (f64::INFINITY, 0.0);
    let mut start = 0.0;
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = dist(a, b);
        let f = if len > 0.0 {
            (((p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1)) / (len * len)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1));
        let d = dist(p, q);
        if d < best.0 {
            best = (d, start + f * len);
        }
        start += len;
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Anomalous,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        })
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "anomalous" => Ok(Label::Anomalous),
            _ => Err(Error::Parse { line: 0, msg: format!("unknown label {s:?}") }),
        }
    }
}

/// A generated walk: noisy emitted points and their noise-free positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub points: Vec<GeoPoint>,
    pub clean: Vec<GeoPoint>,
    pub label: Label,
    pub pair: usize,
    pub divergence_time: Option<f64>,
}

fn frame() -> LocalFrame {
    LocalFrame::new(GeoPoint::at(55.4, 10.4))
}

fn polyline(g: &WaypointGraph, path: &[usize]) -> Vec<Xy> {
    let f = frame();
    path.iter().map(|&n| f.to_xy(&g.nodes[n])).collect()
}

/// Walk `line` from its start at time `t0`, emitting the start point and one
/// point per sampled step, ending exactly at the last vertex.
fn walk<R: Rng>(line: &[Xy], s: &Sampler, rng: &mut R, t0: f64) -> (Vec<GeoPoint>, Vec<GeoPoint>) {
    let f = frame();
    let total = polyline_length(line);
    let mut t = t0;
    let mut arc = 0.0;
    let mut noisy = Vec::new();
    let mut clean = Vec::new();
    loop {
        let c = point_at(line, arc);
        let (x, y) = s.jitter(rng, c);
        noisy.push(f.to_geo(x, y).with_timestamp(t));
        clean.push(f.to_geo(c.0, c.1).with_timestamp(t));
        if arc >= total {
            break;
        }
        let dt = s.dt(rng);
        t += dt;
        arc = (arc + dt * s.speed(rng)).min(total);
    }
    (noisy, clean)
}

/// Noisy samples around a fixed position during `[t_start, t_end)`.
fn stay<R: Rng>(at: Xy, s: &Sampler, rng: &mut R, t_start: f64, t_end: f64) -> Vec<GeoPoint> {
    let f = frame();
    let mut out = Vec::new();
    let mut t = t_start;
    while t < t_end {
        let (x, y) = s.jitter(rng, at);
        out.push(f.to_geo(x, y).with_timestamp(t));
        t += s.dt(rng);
    }
    out
}

fn pair_of(g: &WaypointGraph, pair: usize) -> Result<&RegionPair> {
    g.pairs.get(pair).ok_or_else(|| Error::Config(format!("unknown region pair {pair}")))
}

pub fn generate_normal(g: &WaypointGraph, pair: usize, noise: &NoiseModel, seed: u64) -> Result<LabeledTrajectory> {
    let rp = pair_of(g, pair)?;
    let path = shortest_path(g, rp.origin, rp.destination)?;
    let s = Sampler::new(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, clean) = walk(&polyline(g, &path), &s, &mut rng, 0.0);
    Ok(LabeledTrajectory { points, clean, label: Label::Normal, pair, divergence_time: None })
}

/// Origin -> each detour node in turn -> destination, by shortest paths.
pub fn detour_path(g: &WaypointGraph, pair: usize, detours: &[usize]) -> Result<Vec<usize>> {
    let rp = pair_of(g, pair)?;
    let stops: Vec<usize> = std::iter::once(rp.origin).chain(detours.iter().copied()).chain([rp.destination]).collect();
    let mut path = vec![rp.origin];
    for w in stops.windows(2) {
        path.extend(shortest_path(g, w[0], w[1])?.into_iter().skip(1));
    }
    Ok(path)
}

/// Walk forced through `detours`. The divergence time is the first emitted
/// point whose noise-free position is farther than
/// [`NoiseModel::divergence_threshold`] from the normal route; a detour that
/// never leaves the route is rejected.
pub fn generate_anomalous(
    g: &WaypointGraph,
    pair: usize,
    detours: &[usize],
    noise: &NoiseModel,
    seed: u64,
) -> Result<LabeledTrajectory> {
    if detours.is_empty() || detours.len() > 4 {
        return Err(Error::Config(format!("1 <= detour count <= 4 violated ({})", detours.len())));
    }
    let rp = pair_of(g, pair)?;
    let normal = polyline(g, &shortest_path(g, rp.origin, rp.destination)?);
    let path = detour_path(g, pair, detours)?;
    let s = Sampler::new(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, clean) = walk(&polyline(g, &path), &s, &mut rng, 0.0);
    let f = frame();
    let divergence_time = clean
        .iter()
        .find(|c| project_onto_polyline(&normal, f.to_xy(c)).0 > noise.divergence_threshold())
        .map(|c| c.timestamp)
        .ok_or_else(|| Error::DegenerateDetour(format!("pair {pair} via {detours:?} never leaves the normal route")))?;
    Ok(LabeledTrajectory { points, clean, label: Label::Anomalous, pair, divergence_time: Some(divergence_time) })
}

fn shift(points: &mut [GeoPoint], dt: f64) {
    for p in points {
        p.timestamp += dt;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub person_id: String,
    /// `(normal, anomalous)` trajectory counts per region pair.
    pub per_pair: Vec<(usize, usize)>,
    /// Dwell at each end of a trajectory (s).
    pub stay_s: f64,
    /// Idle time between consecutive trajectories (s); longer than the block
    /// split threshold so every trajectory is its own block.
    pub gap_s: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            person_id: "p1".into(),
            per_pair: vec![(29, 4), (29, 4), (29, 3), (28, 3), (28, 3), (28, 3), (28, 3)],
            stay_s: 900.0,
            gap_s: 3600.0,
        }
    }
}

impl CorpusSpec {
    pub fn totals(&self) -> (usize, usize) {
        self.per_pair.iter().fold((0, 0), |(n, a), &(pn, pa)| (n + pn, a + pa))
    }
}

/// One corpus trajectory: dwell at the origin, the walk, dwell at the
/// destination, all on one clock.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTrajectory {
    pub id: usize,
    pub label: Label,
    pub pair: usize,
    pub divergence_time: Option<f64>,
    pub start: f64,
    pub end: f64,
    /// Time span of the walk itself, between the two dwells.
    pub walk_start: f64,
    pub walk_end: f64,
    pub points: Vec<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub person_id: String,
    pub trajectories: Vec<CorpusTrajectory>,
}

const LABEL_HEADER: &str = "trajectory_id,label,pair,divergence_time,start,end,walk_start,walk_end";

impl Corpus {
    pub fn counts(&self) -> (usize, usize) {
        let anomalous = self.trajectories.iter().filter(|t| t.label == Label::Anomalous).count();
        (self.trajectories.len() - anomalous, anomalous)
    }

    pub fn all_points(&self) -> Vec<GeoPoint> {
        self.trajectories.iter().flat_map(|t| t.points.iter().copied()).collect()
    }

    pub fn write_points<W: Write>(&self, mut w: W) -> Result<()> {
        for p in self.trajectories.iter().flat_map(|t| &t.points) {
            writeln!(w, "{}", format_record(&self.person_id, p))?;
        }
        Ok(())
    }

    pub fn write_labels<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{LABEL_HEADER}")?;
        for t in &self.trajectories {
            let div = t.divergence_time.map_or(String::new(), |d| d.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                t.id, t.label, t.pair, div, t.start, t.end, t.walk_start, t.walk_end
            )?;
        }
        Ok(())
    }

    /// Rebuild a corpus from a point stream and its label sidecar; points are
    /// assigned to trajectories by time span.
    pub fn read<P: BufRead, L: BufRead>(points: P, labels: L) -> Result<Corpus> {
        let (records, _) = read_records(points)?;
        let person_id = records.first().map(|r| r.person_id.clone()).unwrap_or_default();
        let mut trajectories = Vec::new();
        for (i, line) in labels.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == LABEL_HEADER {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(err(format!("expected 8 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
            trajectories.push(CorpusTrajectory {
                id: f[0].parse().map_err(|_| err(format!("bad id {:?}", f[0])))?,
                label: f[1].parse()?,
                pair: f[2].parse().map_err(|_| err(format!("bad pair {:?}", f[2])))?,
                divergence_time: if f[3].is_empty() { None } else { Some(num(f[3])?) },
                start: num(f[4])?,
                end: num(f[5])?,
                walk_start: num(f[6])?,
                walk_end: num(f[7])?,
                points: Vec::new(),
            });
        }
        for r in records {
            if let Some(t) = trajectories.iter_mut().find(|t| t.start <= r.point.timestamp && r.point.timestamp <= t.end) {
                t.points.push(r.point);
            }
        }
        Ok(Corpus { person_id, trajectories })
    }
}

/// Labeled corpus per `spec`. Each trajectory draws from its own stream of
/// the master seed, so trajectories are independent of each other's length.
pub fn generate_corpus(g: &WaypointGraph, spec: &CorpusSpec, noise: &NoiseModel, seed: u64) -> Result<Corpus> {
    if spec.per_pair.len() > g.pairs.len() {
        return Err(Error::Config(format!("corpus lists {} pairs, graph has {}", spec.per_pair.len(), g.pairs.len())));
    }
    let s = Sampler::new(noise)?;
    let mut plan: Vec<(usize, Label, usize)> = Vec::new();
    for (pair, &(n, a)) in spec.per_pair.iter().enumerate() {
        plan.extend((0..n).map(|k| (pair, Label::Normal, k)));
        plan.extend((0..a).map(|k| (pair, Label::Anomalous, k)));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    plan.shuffle(&mut order_rng);

    // The anomalies of a pair visit 1, 2, 3, 4, 1, … detour points in turn.
    // Points are dealt from a shuffled candidate list so that anomalies of the
    // same pair share points only once the candidates run out.
    let mut detour_rng = ChaCha8Rng::seed_from_u64(seed);
    detour_rng.set_stream(u64::MAX);
    let detours: Vec<Vec<Vec<usize>>> = spec
        .per_pair
        .iter()
        .enumerate()
        .map(|(pair, &(_, a))| {
            let cands = &g.pairs[pair].detour_candidates;
            let mut deck: Vec<usize> = (0..cands.len()).collect();
            deck.shuffle(&mut detour_rng);
            let mut next = 0;
            (0..a)
                .map(|k| {
                    let want = (k % 4 + 1).min(cands.len());
                    let mut idx: Vec<usize> = (0..want).map(|j| deck[(next + j) % deck.len()]).collect();
                    next += want;
                    // visit in along-route order
                    idx.sort_unstable();
                    idx.into_iter().map(|i| cands[i]).collect()
                })
                .collect()
        })
        .collect();

    let f = frame();
    let mut trajectories = Vec::with_capacity(plan.len());
    let mut clock = 0.0;
    for (id, &(pair, label, k)) in plan.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64 + 1);
        let rp = &g.pairs[pair];
        let walk_seed: u64 = rng.random();
        let mut t = match label {
            Label::Normal => generate_normal(g, pair, noise, walk_seed)?,
            Label::Anomalous => generate_anomalous(g, pair, &detours[pair][k], noise, walk_seed)?,
        };
        let start = clock;
        let origin = f.to_xy(&g.nodes[rp.origin]);
        let destination = f.to_xy(&g.nodes[rp.destination]);
        let mut points = stay(origin, &s, &mut rng, start, start + spec.stay_s);
        let walk_start = start + spec.stay_s;
        shift(&mut t.points, walk_start);
        let walk_end = t.points.last().expect("walk emits points").timestamp;
        points.extend(t.points);
        let dt = s.dt(&mut rng);
        points.extend(stay(destination, &s, &mut rng, walk_end + dt, walk_end + dt + spec.stay_s));
        let end = points.last().expect("non-empty").timestamp;
        trajectories.push(CorpusTrajectory {
            id,
            label,
            pair,
            divergence_time: t.divergence_time.map(|d| d + walk_start),
            start,
            end,
            walk_start,
            walk_end,
            points,
        });
        clock = end + spec.gap_s;
    }
    Ok(Corpus { person_id: spec.person_id.clone(), trajectories })
}

/// Back-and-forth walking between two anchors with a dwell of `stay_s` at
/// each end, repeated until at least `min_points` points were emitted. The
/// anchor pair is the one whose route length is closest to `route_m`.
pub fn back_and_forth(
    g: &WaypointGraph,
    noise: &NoiseModel,
    stay_s: f64,
    route_m: f64,
    min_points: usize,
    seed: u64,
) -> Result<Vec<GeoPoint>> {
    let anchors: Vec<usize> = g.pairs.iter().flat_map(|p| [p.origin, p.destination]).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (i, &a) in anchors.iter().enumerate() {
        for &b in &anchors[i + 1..] {
            let path = shortest_path(g, a, b)?;
            let gap = (g.path_length(&path) - route_m).abs();
            if best.as_ref().is_none_or(|(bg, _)| gap < *bg) {
                best = Some((gap, path));
            }
        }
    }
    let (_, path) = best.ok_or(Error::Empty("anchor pairs"))?;
    let forward = polyline(g, &path);
    let backward: Vec<Xy> = forward.iter().rev().copied().collect();
    let s = Sampler::new(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<GeoPoint> = Vec::new();
    let mut t = 0.0;
    let mut leg = 0;
    while out.len() < min_points {
        let line = if leg % 2 == 0 { &forward } else { &backward };
        out.extend(stay(line[0], &s, &mut rng, t, t + stay_s));
        t = out.last().map_or(t, |p| p.timestamp) + s.dt(&mut rng);
        let (walked, _) = walk(line, &s, &mut rng, t);
        t = walked.last().expect("walk emits points").timestamp + s.dt(&mut rng);
        out.extend(walked);
        leg += 1;
    }
    Ok(out)
}
