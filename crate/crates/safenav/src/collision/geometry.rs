//! Convex polygon helpers: validation, hulls, Minkowski differences and
//! separating-axis overlap.

use nalgebra::{Rotation2, Vector2};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex polygon with counter-clockwise vertices relative to a reference
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices
            .iter()
            .any(|v| !(v.x.is_finite() && v.y.is_finite()))
        {
            return Err(Error::InvalidInput(
                "polygon has non-finite vertices".into(),
            ));
        }
        let n = vertices.len();
        let scale = (0..n)
            .map(|i| (vertices[(i + 1) % n] - vertices[i]).norm())
            .fold(0.0, f64::max)
            .max(1e-300);
        for i in 0..n {
            let c = cross(&vertices[i], &vertices[(i + 1) % n], &vertices[(i + 2) % n]);
            if c < -1e-12 * scale * scale {
                return Err(Error::DegenerateGeometry(format!(
                    "polygon is not convex and counter-clockwise at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        let poly = ConvexPolygon { vertices };
        if poly.area() <= 1e-12 * scale * scale {
            return Err(Error::DegenerateGeometry("polygon has zero area".into()));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle centred on the reference point.
    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        let (w, h) = (width / 2.0, height / 2.0);
        ConvexPolygon::new(vec![
            Point::new(-w, -h),
            Point::new(w, -h),
            Point::new(w, h),
            Point::new(-w, h),
        ])
    }

    /// Regular polygon with its vertices on a circle of the given radius.
    pub fn regular(sides: usize, radius: f64) -> Result<Self> {
        let verts = (0..sides)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / sides as f64;
                Point::new(radius * t.cos(), radius * t.sin())
            })
            .collect();
        ConvexPolygon::new(verts)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (a, b) = (&self.vertices[i], &self.vertices[(i + 1) % n]);
                a.x * b.y - a.y * b.x
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn rotated(&self, theta: f64) -> ConvexPolygon {
        let r = Rotation2::new(theta);
        ConvexPolygon {
            vertices: self.vertices.iter().map(|v| r * v).collect(),
        }
    }

    pub fn translated(&self, t: &Point) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|v| v + t).collect(),
        }
    }

    /// Largest distance from the reference point to the polygon.
    pub fn circumradius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Whether `p` lies inside or on the boundary.
    pub fn contains(&self, p: &Point) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % n], p) >= -1e-12)
    }
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, without
/// collinear points.
pub fn convex_hull(points: &[Point]) -> Result<ConvexPolygon> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-15);
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry(
            "hull has fewer than 3 distinct points".into(),
        ));
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for (pass, seq) in [pts.clone(), pts.iter().rev().copied().collect()]
        .into_iter()
        .enumerate()
    {
        // Lower hull first, then the upper hull without disturbing it.
        let floor = if pass == 0 { 0 } else { hull.len() - 1 };
        for p in seq {
            while hull.len() >= floor + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }
    ConvexPolygon::new(hull)
}

/// `S ⊖ R = {s − r}`: the set of relative displacements at which the two
/// polygons touch or overlap.
pub fn minkowski_difference(s: &ConvexPolygon, r: &ConvexPolygon) -> Result<ConvexPolygon> {
    let mut pts = Vec::with_capacity(s.vertices.len() * r.vertices.len());
    for a in &s.vertices {
        for b in &r.vertices {
            pts.push(a - b);
        }
    }
    convex_hull(&pts)
}

fn project(poly: &ConvexPolygon, axis: &Point) -> (f64, f64) {
    poly.vertices
        .iter()
        .map(|v| v.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        })
}

/// Separating-axis overlap test (touching counts as overlap).
pub fn polygons_overlap(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    for poly in [a, b] {
        let n = poly.vertices.len();
        for i in 0..n {
            let e = poly.vertices[(i + 1) % n] - poly.vertices[i];
            let axis = Point::new(-e.y, e.x);
            let (a0, a1) = project(a, &axis);
            let (b0, b1) = project(b, &axis);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
    }
    true
}
