//! Planar convex hull (monotone chain) and buffered containment.

pub type Xy = (f64, f64);

fn cross(o: Xy, a: Xy, b: Xy) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull without collinear vertices. Degenerate inputs give
/// a single point or the two endpoints of a segment.
pub fn convex_hull(points: &[Xy]) -> Vec<Xy> {
    let mut pts: Vec<Xy> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<Xy> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Xy> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_distance(p: Xy, a: Xy, b: Xy) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Distance from `p` to a convex hull; 0 inside.
pub fn distance_to_hull(hull: &[Xy], p: Xy) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => (p.0 - hull[0].0).hypot(p.1 - hull[0].1),
        2 => segment_distance(p, hull[0], hull[1]),
        n => {
            let inside = (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0.0);
            if inside {
                0.0
            } else {
                (0..n).map(|i| segment_distance(p, hull[i], hull[(i + 1) % n])).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

pub fn is_convex_ccw(hull: &[Xy]) -> bool {
    let n = hull.len();
    n < 3 || (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], hull[(i + 2) % n]) > 0.0)
}
