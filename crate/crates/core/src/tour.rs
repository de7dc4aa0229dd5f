//! Tours, their costs, and reading a tour off a ring of particles.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::instances::{CityInstance, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TourError {
    #[error("not a permutation of 0..{n}: duplicates {duplicates:?}, missing {missing:?}, out of range {out_of_range:?}")]
    NotAPermutation { n: usize, duplicates: Vec<usize>, missing: Vec<usize>, out_of_range: Vec<usize> },
    #[error("percent error needs a positive exact cost, got {0}")]
    NonPositiveExact(f64),
    #[error("expected {expected} positions, got {got}")]
    PositionCount { expected: usize, got: usize },
    #[error("particle {0} sits on the origin; its angle is undefined")]
    DegenerateAngle(usize),
    #[error("particle {0} has a non-finite position")]
    NonFinitePosition(usize),
    #[error("malformed tour text: {0}")]
    Format(String),
}

/// A closed tour in canonical orientation: it starts at city 0 and its
/// second city is the smaller of city 0's two neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Tour {
    order: Vec<usize>,
    cost: f64,
}

impl Tour {
    /// Validates `order`, rotates it into canonical form and measures it.
    pub fn new(inst: &CityInstance, order: Vec<usize>) -> Result<Self, TourError> {
        validate_permutation(&order, inst.len())?;
        let order = canonicalize(order);
        let cost = cycle_length(inst, &order);
        Ok(Self { order, cost })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `cost=<value>` on the first line, then the 0-based city order.
    pub fn to_text(&self) -> String {
        let order: Vec<String> = self.order.iter().map(usize::to_string).collect();
        format!("cost={:?}\n{}\n", self.cost, order.join(" "))
    }
}

impl fmt::Display for Tour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// A tour read back from text; the cost is whatever the file states.
#[derive(Debug, Clone, PartialEq)]
pub struct TourFile {
    pub cost: f64,
    pub order: Vec<usize>,
}

impl FromStr for TourFile {
    type Err = TourError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| TourError::Format("empty input".into()))?;
        let cost = head
            .trim()
            .strip_prefix("cost=")
            .ok_or_else(|| TourError::Format(format!("expected 'cost=<value>', got '{head}'")))?
            .parse::<f64>()
            .map_err(|e| TourError::Format(e.to_string()))?;
        let order = lines
            .flat_map(str::split_whitespace)
            .map(|t| t.parse::<usize>().map_err(|e| TourError::Format(format!("'{t}': {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { cost, order })
    }
}

fn validate_permutation(order: &[usize], n: usize) -> Result<(), TourError> {
    let mut count = vec![0usize; n];
    let mut out_of_range = Vec::new();
    for &i in order {
        match count.get_mut(i) {
            Some(c) => *c += 1,
            None => out_of_range.push(i),
        }
    }
    let duplicates: Vec<usize> = (0..n).filter(|&i| count[i] > 1).collect();
    let missing: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    if duplicates.is_empty() && missing.is_empty() && out_of_range.is_empty() && order.len() == n {
        Ok(())
    } else {
        Err(TourError::NotAPermutation { n, duplicates, missing, out_of_range })
    }
}

fn canonicalize(mut order: Vec<usize>) -> Vec<usize> {
    let n = order.len();
    if n == 0 {
        return order;
    }
    let start = order.iter().position(|&c| c == 0).unwrap_or(0);
    order.rotate_left(start);
    if n > 2 && order[n - 1] < order[1] {
        order[1..].reverse();
    }
    order
}

fn cycle_length(inst: &CityInstance, order: &[usize]) -> f64 {
    let n = order.len();
    let mut total = 0.0;
    for k in 0..n {
        total += inst.dist(order[k], order[(k + 1) % n]);
    }
    total
}

/// Length of the closed cycle visiting `order`, including the closing edge.
pub fn tour_cost(inst: &CityInstance, order: &[usize]) -> Result<f64, TourError> {
    validate_permutation(order, inst.len())?;
    Ok(cycle_length(inst, order))
}

/// `(approx - exact) / exact * 100`.
pub fn percent_error(approx_cost: f64, exact_cost: f64) -> Result<f64, TourError> {
    if !(exact_cost > 0.0) {
        return Err(TourError::NonPositiveExact(exact_cost));
    }
    Ok((approx_cost - exact_cost) / exact_cost * 100.0)
}

/// Orders cities by the polar angle of their particle around `origin`, in
/// `[0, 2 pi)`; equal angles go nearer-first, then by index. The cost is
/// measured on the instance's own coordinates.
pub fn extract_tour(inst: &CityInstance, final_positions: &[Point], origin: Point) -> Result<Tour, TourError> {
    if final_positions.len() != inst.len() {
        return Err(TourError::PositionCount { expected: inst.len(), got: final_positions.len() });
    }
    let mut keyed = Vec::with_capacity(final_positions.len());
    for (i, &p) in final_positions.iter().enumerate() {
        if !p.is_finite() {
            return Err(TourError::NonFinitePosition(i));
        }
        let rel = p - origin;
        if rel.x == 0.0 && rel.y == 0.0 {
            return Err(TourError::DegenerateAngle(i));
        }
        let mut angle = rel.y.atan2(rel.x);
        if angle < 0.0 {
            angle += TAU;
        }
        if angle >= TAU {
            angle = 0.0;
        }
        keyed.push((angle, rel.norm(), i));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    Tour::new(inst, keyed.into_iter().map(|k| k.2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_grid;

    fn square() -> CityInstance {
        CityInstance::new(
            "square",
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn square_costs() {
        let sq = square();
        assert_eq!(tour_cost(&sq, &[0, 1, 2, 3]).unwrap(), 4.0);
        assert_eq!(tour_cost(&sq, &[3, 2, 1, 0]).unwrap(), 4.0);
        assert!((tour_cost(&sq, &[0, 2, 1, 3]).unwrap() - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn grid_snake_is_optimal_length() {
        let g = gen_grid(4, 4).unwrap();
        // down column 0, then snake back up through columns 3..1 in rows 1..3
        let idx = |r: usize, c: usize| r * 4 + c;
        let mut order = vec![idx(3, 0), idx(2, 0), idx(1, 0), idx(0, 0), idx(0, 1), idx(0, 2), idx(0, 3)];
        order.extend([idx(1, 3), idx(1, 2), idx(1, 1), idx(2, 1), idx(2, 2), idx(2, 3), idx(3, 3), idx(3, 2), idx(3, 1)]);
        let c = tour_cost(&g, &order).unwrap();
        assert!((c - 16.0).abs() < 1e-12);
        assert_eq!(format!("{c:.3}"), "16.000");
    }

    #[test]
    fn invalid_orders() {
        let sq = square();
        let err = tour_cost(&sq, &[0, 1, 1, 3]).unwrap_err();
        assert_eq!(
            err,
            TourError::NotAPermutation { n: 4, duplicates: vec![1], missing: vec![2], out_of_range: vec![] }
        );
        assert!(tour_cost(&sq, &[0, 1, 2]).is_err());
        assert!(tour_cost(&sq, &[0, 1, 2, 7]).is_err());
    }

    #[test]
    fn percent_errors() {
        let pe = percent_error(12.0 + 4.0 * 2f64.sqrt(), 16.0).unwrap();
        assert_eq!(format!("{pe:.3}"), "10.355");
        assert_eq!(format!("{:.3}", percent_error(17.657, 16.0).unwrap()), "10.356");
        assert_eq!(percent_error(3.5, 3.5).unwrap(), 0.0);
        assert!((percent_error(36967.234, 33523.708).unwrap() - 10.272).abs() < 1e-3);
        assert!(percent_error(1.0, 0.0).is_err());
        assert!(percent_error(1.0, -2.0).is_err());
    }

    fn polar(deg: f64, r: f64) -> Point {
        let a = deg.to_radians();
        Point::new(r * a.cos(), r * a.sin())
    }

    #[test]
    fn extract_three_angles() {
        let tri = CityInstance::new("t", vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 3.0)]).unwrap();
        let pos = [polar(0.0, 1.0), polar(120.0, 1.0), polar(240.0, 1.0)];
        let t = extract_tour(&tri, &pos, Point::ORIGIN).unwrap();
        assert_eq!(t.order(), &[0, 1, 2]);
    }

    #[test]
    fn extract_square_cost_four() {
        let pos = [polar(10.0, 1.0), polar(100.0, 1.0), polar(190.0, 1.0), polar(280.0, 1.0)];
        let t = extract_tour(&square(), &pos, Point::ORIGIN).unwrap();
        assert_eq!(t.order(), &[0, 1, 2, 3]);
        assert_eq!(t.cost(), 4.0);
    }

    #[test]
    fn extract_rotation_invariant() {
        let g = gen_grid(3, 4).unwrap();
        let base: Vec<Point> = (0..12).map(|i| polar(i as f64 * 29.0 + 3.0, 1.0 + 0.01 * i as f64)).collect();
        let t0 = extract_tour(&g, &base, Point::ORIGIN).unwrap();
        for rot in [17.0_f64, 95.0, 200.0, 333.0] {
            let (s, c) = rot.to_radians().sin_cos();
            let rotated: Vec<Point> = base.iter().map(|p| Point::new(c * p.x - s * p.y, s * p.x + c * p.y)).collect();
            let t = extract_tour(&g, &rotated, Point::ORIGIN).unwrap();
            assert_eq!(t.order(), t0.order());
            assert_eq!(t.cost(), t0.cost());
        }
    }

    #[test]
    fn equal_angles_nearer_first() {
        let sq = square();
        let pos = [polar(45.0, 2.0), polar(45.0, 1.0), polar(180.0, 1.0), polar(270.0, 1.0)];
        let t = extract_tour(&sq, &pos, Point::ORIGIN).unwrap();
        // raw angular order 1, 0, 2, 3; canonical form starts at 0 towards 1
        assert_eq!(t.order(), &[0, 1, 3, 2]);
    }

    #[test]
    fn origin_particle_rejected() {
        let pos = [Point::ORIGIN, polar(90.0, 1.0), polar(180.0, 1.0), polar(270.0, 1.0)];
        assert_eq!(extract_tour(&square(), &pos, Point::ORIGIN), Err(TourError::DegenerateAngle(0)));
        assert!(matches!(extract_tour(&square(), &pos[..3], Point::ORIGIN), Err(TourError::PositionCount { .. })));
    }

    #[test]
    fn canonical_orientation() {
        let sq = square();
        let t = Tour::new(&sq, vec![2, 1, 0, 3]).unwrap();
        assert_eq!(t.order(), &[0, 1, 2, 3]);
        let t = Tour::new(&sq, vec![3, 2, 1, 0]).unwrap();
        assert_eq!(t.order(), &[0, 1, 2, 3]);
    }

    #[test]
    fn text_round_trip() {
        let t = Tour::new(&square(), vec![0, 2, 1, 3]).unwrap();
        let parsed: TourFile = t.to_text().parse().unwrap();
        assert_eq!(parsed.order, t.order());
        assert_eq!(parsed.cost, t.cost());
        assert!("costs=3\n0 1 2".parse::<TourFile>().is_err());
        assert!("cost=3\n0 x 2".parse::<TourFile>().is_err());
    }
}
