//! Hilbert-curve cell tokens and interpolated, deduplicated token sequences.
//!
//! A token at precision `p` indexes a cell of a `2^p × 2^p` grid laid over
//! longitude `[-180, 180)` and latitude `[-90, 90)`; cells are twice as wide
//! (in degrees) as they are tall. Codes are Hilbert-curve positions, so the
//! parent cell at precision `p - 1` is `code >> 2`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::{haversine, GeoPoint, EARTH_RADIUS_M};
use crate::region::RegionId;

pub const MIN_PRECISION: u8 = 1;
pub const MAX_PRECISION: u8 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellToken {
    pub precision: u8,
    pub code: u64,
}

impl CellToken {
    pub fn new(precision: u8, code: u64) -> Result<Self> {
        check_precision(precision)?;
        if code >= 1u64 << (2 * precision as u32) {
            return Err(Error::Config(format!("code {code} out of range for precision {precision}")));
        }
        Ok(CellToken { precision, code })
    }

    /// Grid column (longitude) and row (latitude).
    pub fn grid_xy(&self) -> (u64, u64) {
        hilbert_d2xy(self.precision, self.code)
    }

    pub fn from_grid_xy(precision: u8, x: u64, y: u64) -> Self {
        CellToken { precision, code: hilbert_xy2d(precision, x, y) }
    }

    /// Edge or corner neighbor (a cell is not its own neighbor).
    pub fn is_adjacent(&self, other: &CellToken) -> bool {
        if self.precision != other.precision || self == other {
            return false;
        }
        let (ax, ay) = self.grid_xy();
        let (bx, by) = other.grid_xy();
        ax.abs_diff(bx) <= 1 && ay.abs_diff(by) <= 1
    }

    /// The containing cell `levels` precisions coarser.
    pub fn truncate(&self, levels: u8) -> CellToken {
        CellToken { precision: self.precision - levels, code: self.code >> (2 * levels as u32) }
    }
}

impl fmt::Display for CellToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.precision, self.code)
    }
}

impl FromStr for CellToken {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse { line: 0, msg: format!("bad token {s:?}") };
        let (p, c) = s.split_once(':').ok_or_else(bad)?;
        let precision: u8 = p.parse().map_err(|_| bad())?;
        let code: u64 = c.parse().map_err(|_| bad())?;
        CellToken::new(precision, code)
    }
}

pub fn check_precision(precision: u8) -> Result<()> {
    if (MIN_PRECISION..=MAX_PRECISION).contains(&precision) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "precision in [{MIN_PRECISION}, {MAX_PRECISION}] violated (precision = {precision})"
        )))
    }
}

fn hilbert_rot(n: u64, x: &mut u64, y: &mut u64, rx: u64, ry: u64) {
    if ry == 0 {
        if rx == 1 {
            *x = n.wrapping_sub(1).wrapping_sub(*x);
            *y = n.wrapping_sub(1).wrapping_sub(*y);
        }
        std::mem::swap(x, y);
    }
}

fn hilbert_xy2d(order: u8, mut x: u64, mut y: u64) -> u64 {
    let n = 1u64 << order;
    let mut d = 0u64;
    let mut s = n / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        hilbert_rot(n, &mut x, &mut y, rx, ry);
        x &= n - 1;
        y &= n - 1;
        s /= 2;
    }
    d
}

fn hilbert_d2xy(order: u8, d: u64) -> (u64, u64) {
    let n = 1u64 << order;
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = d;
    let mut s = 1u64;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        hilbert_rot(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x, y)
}

pub fn encode(p: &GeoPoint, precision: u8) -> CellToken {
    let n = 1u64 << precision;
    let quantize = |v: f64, lo: f64, span: f64| -> u64 {
        let f = ((v - lo) / span * n as f64).floor();
        (f.max(0.0) as u64).min(n - 1)
    };
    let x = quantize(p.lon, -180.0, 360.0);
    let y = quantize(p.lat, -90.0, 180.0);
    CellToken::from_grid_xy(precision, x, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBounds {
    pub center: GeoPoint,
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl CellBounds {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lat..self.max_lat).contains(&p.lat) && (self.min_lon..self.max_lon).contains(&p.lon)
    }
}

pub fn decode_center(t: &CellToken) -> CellBounds {
    let n = (1u64 << t.precision) as f64;
    let (x, y) = t.grid_xy();
    let dlon = 360.0 / n;
    let dlat = 180.0 / n;
    let min_lon = -180.0 + x as f64 * dlon;
    let min_lat = -90.0 + y as f64 * dlat;
    CellBounds {
        center: GeoPoint::at(min_lat + dlat / 2.0, min_lon + dlon / 2.0),
        min_lat,
        max_lat: min_lat + dlat,
        min_lon,
        max_lon: min_lon + dlon,
    }
}

/// Largest per-axis distance (m) between a point and its cell center: half the
/// cell width along the equator.
pub fn max_encoding_error_m(precision: u8) -> f64 {
    let half_width_deg = 180.0 / (1u64 << precision) as f64;
    half_width_deg.to_radians() * EARTH_RADIUS_M
}

/// Cell width and height in meters at a given latitude.
pub fn cell_size_m(precision: u8, lat: f64) -> (f64, f64) {
    let n = (1u64 << precision) as f64;
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    ((360.0 / n) * k * lat.to_radians().cos(), (180.0 / n) * k)
}

/// A trajectory rendered as cell tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct GeohashSequence {
    pub person_id: String,
    pub origin_region: RegionId,
    pub destination_region: Option<RegionId>,
    pub tokens: Vec<CellToken>,
}

impl GeohashSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `person origin destination tok tok …`; an unset destination is `-`.
    pub fn to_line(&self) -> String {
        let dest = self.destination_region.map_or_else(|| "-".to_string(), |r| r.to_string());
        let mut line = format!("{} {} {}", self.person_id, self.origin_region, dest);
        for t in &self.tokens {
            line.push(' ');
            line.push_str(&t.to_string());
        }
        line
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let bad = |msg: &str| Error::Parse { line: 0, msg: msg.to_string() };
        let person_id = parts.next().ok_or_else(|| bad("missing person id"))?.to_string();
        let origin_region: RegionId =
            parts.next().ok_or_else(|| bad("missing origin"))?.parse().map_err(|_| bad("bad origin"))?;
        let dest = parts.next().ok_or_else(|| bad("missing destination"))?;
        let destination_region =
            if dest == "-" { None } else { Some(dest.parse().map_err(|_| bad("bad destination"))?) };
        let tokens = parts.map(CellToken::from_str).collect::<Result<Vec<_>>>()?;
        Ok(GeohashSequence { person_id, origin_region, destination_region, tokens })
    }
}

fn unit_vector(p: &GeoPoint) -> [f64; 3] {
    let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Point at fraction `f` along the great circle from `a` to `b`.
fn slerp(a: &GeoPoint, b: &GeoPoint, f: f64) -> GeoPoint {
    let (u, v) = (unit_vector(a), unit_vector(b));
    let dot = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    if omega < 1e-15 {
        return *a;
    }
    let (wa, wb) = (((1.0 - f) * omega).sin() / omega.sin(), (f * omega).sin() / omega.sin());
    let w = [wa * u[0] + wb * v[0], wa * u[1] + wb * v[1], wa * u[2] + wb * v[2]];
    let lat = w[2].atan2(w[0].hypot(w[1])).to_degrees();
    let lon = w[1].atan2(w[0]).to_degrees();
    GeoPoint::at(lat, lon)
}

/// Incremental sequence construction: encodes points as they arrive, fills
/// gaps between non-adjacent cells and merges consecutive duplicates.
#[derive(Debug, Clone)]
pub struct SequenceBuilder {
    precision: u8,
    tokens: Vec<CellToken>,
}

impl SequenceBuilder {
    pub fn new(precision: u8) -> Self {
        SequenceBuilder { precision, tokens: Vec::new() }
    }

    pub fn tokens(&self) -> &[CellToken] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<CellToken> {
        self.tokens
    }

    /// Appends the tokens produced by `p`, returning how many were added.
    pub fn push(&mut self, p: &GeoPoint) -> usize {
        let before = self.tokens.len();
        let cell = encode(p, self.precision);
        match self.tokens.last().copied() {
            None => self.tokens.push(cell),
            Some(last) if last == cell => {}
            Some(last) if last.is_adjacent(&cell) => self.tokens.push(cell),
            Some(last) => self.interpolate(last, cell),
        }
        self.tokens.len() - before
    }

    fn interpolate(&mut self, from: CellToken, to: CellToken) {
        let a = decode_center(&from).center;
        let b = decode_center(&to).center;
        let (w, h) = cell_size_m(self.precision, (a.lat + b.lat) / 2.0);
        let step = 0.45 * w.min(h);
        let dist = haversine(&a, &b);
        let steps = (dist / step).ceil().max(1.0) as usize;
        for i in 1..=steps {
            let q = if i == steps { b } else { slerp(&a, &b, i as f64 / steps as f64) };
            let cell = encode(&q, self.precision);
            let last = *self.tokens.last().expect("interpolation starts after a token");
            if cell == last {
                continue;
            }
            if !last.is_adjacent(&cell) {
                // A sample landed two cells away; bridge through the
                // intermediate cell along the grid diagonal.
                let (lx, ly) = last.grid_xy();
                let (cx, cy) = cell.grid_xy();
                let step_toward = |l: u64, c: u64| if c > l { l + 1 } else if c < l { l - 1 } else { l };
                self.tokens.push(CellToken::from_grid_xy(self.precision, step_toward(lx, cx), step_toward(ly, cy)));
            }
            self.tokens.push(cell);
        }
    }
}

/// Token sequence for a list of positions.
pub fn tokens_from_points<'a>(points: impl IntoIterator<Item = &'a GeoPoint>, precision: u8) -> Vec<CellToken> {
    let mut b = SequenceBuilder::new(precision);
    for p in points {
        b.push(p);
    }
    b.into_tokens()
}

pub fn sequence_from_trajectory(t: &crate::region::Trajectory, precision: u8) -> GeohashSequence {
    GeohashSequence {
        person_id: t.person_id.clone(),
        origin_region: t.origin_region,
        destination_region: t.destination_region,
        tokens: tokens_from_points(t.points.iter().map(|s| &s.point), precision),
    }
}

/// Neighbor and dedup invariants of a token list.
pub fn is_well_formed(tokens: &[CellToken]) -> bool {
    tokens.windows(2).all(|w| w[0].is_adjacent(&w[1]))
}
