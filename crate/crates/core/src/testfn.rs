//! Two-dimensional nonconvex test objective and optimizer path recording.
//!
//! The objective is a sum of three squared residuals,
//!
//! ```text
//! f(x, y) = (1.5 - x^2 + x y)^2 + (2.25 - x^2 + x y^2)^2 + (2.625 - x^2 + x y^3)^2
//! ```
//!
//! studied on the box `x in [-4, 0]`, `y in [-2, 3]`. Note the `x^2` terms:
//! this is not the classical Beale function and its minimizer is not `(3, 0.5)`.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimizer marked on the objective's path plots, to two decimals.
pub const REFERENCE_OPTIMUM: (f64, f64) = (-0.74, 1.40);

/// Euclidean radius around [`REFERENCE_OPTIMUM`] that counts as reaching it.
pub const DEFAULT_SUCCESS_RADIUS: f64 = 0.05;

/// Axis-aligned search box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Domain {
    /// `[-4, 0] x [-2, 3]`.
    pub const TOY: Domain = Domain {
        x: (-4.0, 0.0),
        y: (-2.0, 3.0),
    };

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x.0..=self.x.1).contains(&x) && (self.y.0..=self.y.1).contains(&y)
    }
}

const A1: f64 = 1.5;
const A2: f64 = 2.25;
const A3: f64 = 2.625;

fn residuals<T: Scalar>(x: T, y: T) -> (T, T, T) {
    let x2 = x * x;
    (
        T::lit(A1) - x2 + x * y,
        T::lit(A2) - x2 + x * y * y,
        T::lit(A3) - x2 + x * y * y * y,
    )
}

pub fn toy_value<T: Scalar>(x: T, y: T) -> T {
    let (r1, r2, r3) = residuals(x, y);
    r1 * r1 + r2 * r2 + r3 * r3
}

/// Exact `(df/dx, df/dy)`. Every `y`-derivative term carries a factor `x`.
pub fn toy_gradient<T: Scalar>(x: T, y: T) -> (T, T) {
    let (r1, r2, r3) = residuals(x, y);
    let two = T::lit(2.0);
    let two_x = two * x;
    let y2 = y * y;
    let dx = two * (r1 * (y - two_x) + r2 * (y2 - two_x) + r3 * (y2 * y - two_x));
    let dy = two * x * (r1 + two * r2 * y + T::lit(3.0) * r3 * y2);
    (dx, dy)
}

/// The toy objective with its domain and reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyProblem {
    pub domain: Domain,
    pub reference: (f64, f64),
    pub success_radius: f64,
}

impl Default for ToyProblem {
    fn default() -> Self {
        Self {
            domain: Domain::TOY,
            reference: REFERENCE_OPTIMUM,
            success_radius: DEFAULT_SUCCESS_RADIUS,
        }
    }
}

impl ToyProblem {
    pub fn distance_to_reference(&self, x: f64, y: f64) -> f64 {
        (x - self.reference.0).hypot(y - self.reference.1)
    }

    pub fn reached(&self, x: f64, y: f64) -> bool {
        self.distance_to_reference(x, y) <= self.success_radius
    }
}

/// Result of an exhaustive grid scan.
#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub resolution: (usize, usize),
    pub spacing: (f64, f64),
    pub argmin: (f64, f64),
    pub argmin_index: (usize, usize),
    pub value: f64,
    pub distance_to_reference: f64,
    pub on_boundary: bool,
}

/// Scans an `nx x ny` grid (endpoints included) and returns the point of
/// smallest value. Ties go to the lowest `(ix, iy)` index in row-major order.
pub fn grid_search(domain: Domain, nx: usize, ny: usize) -> Result<GridReport> {
    if nx < 2 || ny < 2 {
        return Err(Error::domain(format!("grid needs at least 2x2 points, got {nx}x{ny}")));
    }
    if !(domain.x.0 < domain.x.1 && domain.y.0 < domain.y.1) {
        return Err(Error::domain(format!("empty domain {domain:?}")));
    }
    let dx = (domain.x.1 - domain.x.0) / (nx - 1) as f64;
    let dy = (domain.y.1 - domain.y.0) / (ny - 1) as f64;
    let xs: Vec<f64> = (0..nx).map(|i| domain.x.0 + i as f64 * dx).collect();
    let ys: Vec<f64> = (0..ny).map(|j| domain.y.0 + j as f64 * dy).collect();

    let mut best = (f64::INFINITY, 0, 0);
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let v = toy_value(x, y);
            if v < best.0 {
                best = (v, i, j);
            }
        }
    }
    let (value, i, j) = best;
    let argmin = (xs[i], ys[j]);
    Ok(GridReport {
        resolution: (nx, ny),
        spacing: (dx, dy),
        argmin,
        argmin_index: (i, j),
        value,
        distance_to_reference: (argmin.0 - REFERENCE_OPTIMUM.0).hypot(argmin.1 - REFERENCE_OPTIMUM.1),
        on_boundary: i == 0 || j == 0 || i == nx - 1 || j == ny - 1,
    })
}

/// 2000 x 2000 scan of the toy domain.
pub fn verify_reference_optimum() -> GridReport {
    grid_search(Domain::TOY, 2000, 2000).expect("toy domain grid is well-formed")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub f: f64,
}

/// Recorded optimizer path; step indices start at 0 and strictly increase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: usize, x: f64, y: f64) -> Result<()> {
        match self.points.last() {
            None if step != 0 => return Err(Error::domain(format!("trajectory must start at step 0, got {step}"))),
            Some(last) if step <= last.step => {
                return Err(Error::domain(format!(
                    "trajectory step {step} does not follow {}",
                    last.step
                )))
            }
            _ => {}
        }
        self.points.push(TrajectoryPoint {
            step,
            x,
            y,
            f: toy_value(x, y),
        });
        Ok(())
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `step,x,y,f` header followed by one row per recorded point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,x,y,f")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.step, p.x, p.y, p.f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_origin_and_on_y_axis() {
        assert_eq!(toy_value(0.0, 0.0), 14.203125);
        assert_eq!(toy_value(0.0, 7.3), 14.203125);
    }

    #[test]
    fn y_derivative_vanishes_on_y_axis() {
        assert_eq!(toy_gradient(0.0, 1.0).1, 0.0);
        for y in [-2.0, -0.3, 0.0, 1.7, 3.0] {
            assert_eq!(toy_gradient(0.0f64, y).1, 0.0);
        }
    }

    #[test]
    fn value_at_reference_matches_substitution() {
        // direct substitution, written independently of `residuals`
        let (x, y): (f64, f64) = (-0.74, 1.40);
        let oracle = (1.5 - x.powi(2) + x * y).powi(2)
            + (2.25 - x.powi(2) + x * y.powi(2)).powi(2)
            + (2.625 - x.powi(2) + x * y.powi(3)).powi(2);
        assert!((toy_value(x, y) - oracle).abs() <= 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let v32 = toy_value(-1.0f32, 0.5f32);
        let v64 = toy_value(-1.0f64, 0.5f64);
        assert!((v32 as f64 - v64).abs() < 1e-5);
    }

    #[test]
    fn coarse_grid_has_unique_argmin() {
        let a = grid_search(Domain::TOY, 10, 10).unwrap();
        let b = grid_search(Domain::TOY, 10, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.value.is_finite());
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // f is constant along x = 0, so on a domain that only touches x = 0
        // from the right every point of the column x = 0 ties.
        let dom = Domain {
            x: (0.0, 1e-300),
            y: (-1.0, 1.0),
        };
        let r = grid_search(dom, 2, 5).unwrap();
        assert_eq!(r.argmin_index.1, 0);
    }

    #[test]
    fn shrunken_domain_puts_argmin_on_boundary() {
        let dom = Domain {
            x: (-4.0, -2.0),
            y: (-2.0, 0.0),
        };
        let r = grid_search(dom, 200, 200).unwrap();
        // (-1.5, -0.33) is a local minimum outside this box too, so the
        // minimum must sit on the edge.
        assert!(r.on_boundary, "{r:?}");
    }

    #[test]
    fn trajectory_steps_increase() {
        let mut t = Trajectory::new();
        assert!(t.push(1, 0.0, 0.0).is_err());
        t.push(0, 0.0, 0.0).unwrap();
        t.push(5, -1.0, 1.0).unwrap();
        assert!(t.push(5, 0.0, 0.0).is_err());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,x,y,f\n0,0,0,14.203125\n5,-1,1,"));
    }
}
