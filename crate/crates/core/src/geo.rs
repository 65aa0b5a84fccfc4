//! Geospatial primitives: points, haversine distance, kinematics and the
//! componentwise median used for stay-point contraction.

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A timestamped position in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, timestamp: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon, timestamp };
        p.validate()?;
        Ok(p)
    }

    /// Coordinates without a meaningful timestamp.
    pub fn at(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon, timestamp: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let lat_ok = self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat);
        let lon_ok = self.lon.is_finite() && (-180.0..=180.0).contains(&self.lon);
        if !lat_ok || !lon_ok {
            return Err(Error::InvalidCoordinate { lat: self.lat, lon: self.lon });
        }
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(Error::InvalidTimestamp(self.timestamp));
        }
        Ok(())
    }

    pub fn with_timestamp(self, timestamp: f64) -> Self {
        GeoPoint { timestamp, ..self }
    }

    pub fn distance(&self, other: &GeoPoint) -> f64 {
        haversine(self, other)
    }
}

/// Great-circle distance in meters.
pub fn haversine(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    /// m/s
    pub speed: f64,
    /// m/s²
    pub abs_acceleration: f64,
}

/// Speed at `cur` and absolute acceleration relative to `prev_speed`.
pub fn kinematics(prev: &GeoPoint, prev_speed: f64, cur: &GeoPoint) -> Result<Kinematics> {
    let dt = cur.timestamp - prev.timestamp;
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::NonPositiveTimeDelta(dt));
    }
    let speed = haversine(prev, cur) / dt;
    let abs_acceleration = (speed - prev_speed).abs() / dt;
    Ok(Kinematics { speed, abs_acceleration })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Componentwise median of latitude and longitude. The returned point carries
/// the timestamp of the first input point.
pub fn median_point(points: &[GeoPoint]) -> Result<GeoPoint> {
    let first = points.first().ok_or(Error::Empty("median of no points"))?;
    let mut lats: Vec<f64> = points.iter().map(|p| p.lat).collect();
    let mut lons: Vec<f64> = points.iter().map(|p| p.lon).collect();
    Ok(GeoPoint { lat: median(&mut lats), lon: median(&mut lons), timestamp: first.timestamp })
}

/// Local equirectangular projection around an origin, in meters.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: GeoPoint,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        LocalFrame { origin, cos_lat: origin.lat.to_radians().cos() }
    }

    pub fn to_xy(&self, p: &GeoPoint) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let x = (p.lon - self.origin.lon) * k * self.cos_lat;
        let y = (p.lat - self.origin.lat) * k;
        (x, y)
    }

    pub fn to_geo(&self, x: f64, y: f64) -> GeoPoint {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        GeoPoint::at(self.origin.lat + y / k, self.origin.lon + x / (k * self.cos_lat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_distance_is_zero() {
        let p = GeoPoint::at(55.4, 10.4);
        assert_eq!(haversine(&p, &p), 0.0);
    }

    #[test]
    fn quarter_meridian() {
        let d = haversine(&GeoPoint::at(0.0, 0.0), &GeoPoint::at(90.0, 0.0));
        let expected = std::f64::consts::FRAC_PI_2 * EARTH_RADIUS_M;
        assert!((d - expected).abs() < 1.0);
        assert!((d - 10_007_543.0).abs() < 1.0);
    }

    #[test]
    fn one_degree_of_longitude_on_equator() {
        let d = haversine(&GeoPoint::at(0.0, 0.0), &GeoPoint::at(0.0, 1.0));
        assert!((d - 111_195.0).abs() < 1.0, "{d}");
    }

    #[test]
    fn kinematics_examples() {
        let a = GeoPoint::at(0.0, 0.0);
        let k = kinematics(&a, 0.0, &a.with_timestamp(10.0)).unwrap();
        assert_eq!((k.speed, k.abs_acceleration), (0.0, 0.0));

        // 100 m due north.
        let dlat = (100.0 / EARTH_RADIUS_M).to_degrees();
        let b = GeoPoint { lat: dlat, lon: 0.0, timestamp: 10.0 };
        let k = kinematics(&a, 0.0, &b).unwrap();
        assert!((k.speed - 10.0).abs() < 1e-9);
        assert!((k.abs_acceleration - 1.0).abs() < 1e-9);
        let k = kinematics(&a, 20.0, &b).unwrap();
        assert!((k.abs_acceleration - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kinematics_rejects_non_positive_dt() {
        let a = GeoPoint::at(0.0, 0.0).with_timestamp(5.0);
        assert!(matches!(kinematics(&a, 0.0, &a), Err(Error::NonPositiveTimeDelta(_))));
        assert!(kinematics(&a, 0.0, &a.with_timestamp(4.0)).is_err());
    }

    #[test]
    fn median_examples() {
        let p = GeoPoint::at(3.0, 4.0);
        assert_eq!(median_point(&[p]).unwrap(), p);
        let m = median_point(&[GeoPoint::at(1.0, 0.0), GeoPoint::at(2.0, 0.0), GeoPoint::at(100.0, 0.0)])
            .unwrap();
        assert_eq!(m.lat, 2.0);
        let m = median_point(&[GeoPoint::at(1.0, 2.0), GeoPoint::at(3.0, 4.0)]).unwrap();
        assert_eq!((m.lat, m.lon), (2.0, 3.0));
        assert!(median_point(&[]).is_err());
    }

    #[test]
    fn validation() {
        assert!(GeoPoint::new(91.0, 0.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 0.0, -1.0).is_err());
        assert!(GeoPoint::new(0.0, 0.0, f64::NAN).is_err());
        assert!(GeoPoint::new(-90.0, 180.0, 0.0).is_ok());
    }

    #[test]
    fn local_frame_roundtrip() {
        let f = LocalFrame::new(GeoPoint::at(55.4, 10.4));
        let p = GeoPoint::at(55.401, 10.402);
        let (x, y) = f.to_xy(&p);
        let q = f.to_geo(x, y);
        assert!((p.lat - q.lat).abs() < 1e-12 && (p.lon - q.lon).abs() < 1e-12);
        assert!((x.hypot(y) - haversine(&p, &GeoPoint::at(55.4, 10.4))).abs() < 0.5);
    }
}
