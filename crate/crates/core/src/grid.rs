//! Uniform node-based grid over a rectangle, with boundary classification.
//!
//! Unknowns live on the `(nx + 1) × (ny + 1)` nodes of a grid with `nx × ny`
//! cells. Boundary nodes are the "faces" of the discrete boundary: each carries
//! the outward normal of the side it belongs to and one [`FaceTag`]. Corner
//! nodes belong to two sides and inherit the tag of the side on which the
//! boundary velocity has the larger normal component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Extent {
    pub fn unit() -> Self {
        Extent { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn normal(self) -> [f64; 3] {
        match self {
            Side::Left => [-1.0, 0.0, 0.0],
            Side::Right => [1.0, 0.0, 0.0],
            Side::Bottom => [0.0, -1.0, 0.0],
            Side::Top => [0.0, 1.0, 0.0],
        }
    }

    /// Axis (0 = x, 1 = y) along which the normal points.
    pub fn normal_axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FaceTag {
    Inflow,
    Outflow,
    Wall,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    pub i: usize,
    pub j: usize,
    /// Sides this node lies on; corners have two.
    pub sides: Vec<Side>,
    /// Side whose normal is used for this node (the dominant face at corners).
    pub side: Side,
    pub tag: FaceTag,
}

impl BoundaryNode {
    pub fn normal(&self) -> [f64; 3] {
        self.side.normal()
    }

    pub fn is_corner(&self) -> bool {
        self.sides.len() > 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub extent: Extent,
    boundary: Vec<BoundaryNode>,
    boundary_slot: Vec<Option<usize>>,
}

/// Relative size below which a normal velocity counts as zero.
const ZERO_FLUX_EPS: f64 = 1e-12;

impl Grid {
    pub fn new(nx: usize, ny: usize, extent: Extent) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!("need nx, ny >= 4, got {nx} x {ny}")));
        }
        if !(extent.width() > 0.0 && extent.height() > 0.0) {
            return Err(Error::InvalidGrid(format!("degenerate extent {extent:?}")));
        }
        let hx = extent.width() / nx as f64;
        let hy = extent.height() / ny as f64;
        let ni = nx + 1;
        let nj = ny + 1;
        let mut boundary = Vec::with_capacity(2 * (nx + ny));
        let mut push = |i: usize, j: usize| {
            let mut sides = Vec::with_capacity(2);
            if i == 0 {
                sides.push(Side::Left);
            }
            if i == nx {
                sides.push(Side::Right);
            }
            if j == 0 {
                sides.push(Side::Bottom);
            }
            if j == ny {
                sides.push(Side::Top);
            }
            boundary.push(BoundaryNode {
                node: j * ni + i,
                i,
                j,
                side: sides[0],
                sides,
                tag: FaceTag::Wall,
            });
        };
        // Counter-clockwise loop starting at the lower-left corner.
        for i in 0..=nx {
            push(i, 0);
        }
        for j in 1..=ny {
            push(nx, j);
        }
        for i in (0..nx).rev() {
            push(i, ny);
        }
        for j in (1..ny).rev() {
            push(0, j);
        }
        let mut boundary_slot = vec![None; ni * nj];
        for (slot, b) in boundary.iter().enumerate() {
            boundary_slot[b.node] = Some(slot);
        }
        Ok(Grid { nx, ny, hx, hy, extent, boundary, boundary_slot })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Grid::new(n, n, Extent::unit())
    }

    pub fn ni(&self) -> usize {
        self.nx + 1
    }

    pub fn nj(&self) -> usize {
        self.ny + 1
    }

    pub fn len(&self) -> usize {
        self.ni() * self.nj()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> Shape {
        Shape { ni: self.ni(), nj: self.nj() }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ni() + i
    }

    #[inline]
    pub fn ij(&self, node: usize) -> (usize, usize) {
        (node % self.ni(), node / self.ni())
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.extent.x0 + i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.extent.y0 + j as f64 * self.hy
    }

    pub fn point(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.ij(node);
        (self.x(i), self.y(j))
    }

    pub fn min_spacing(&self) -> f64 {
        self.hx.min(self.hy)
    }

    pub fn area(&self) -> f64 {
        self.extent.width() * self.extent.height()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary_slot[node].is_some()
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i < self.nx && j < self.ny
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn boundary_node(&self, node: usize) -> Option<&BoundaryNode> {
        self.boundary_slot[node].map(|s| &self.boundary[s])
    }

    /// Index of a boundary node in `boundary()`.
    pub fn slot(&self, node: usize) -> Option<usize> {
        self.boundary_slot[node]
    }

    pub fn tag(&self, node: usize) -> Option<FaceTag> {
        self.boundary_node(node).map(|b| b.tag)
    }

    pub fn inflow_nodes(&self) -> impl Iterator<Item = &BoundaryNode> {
        self.boundary.iter().filter(|b| b.tag == FaceTag::Inflow)
    }

    /// Trapezoidal quadrature weight of a node (midpoint rule on the dual cell).
    pub fn weight(&self, node: usize) -> f64 {
        let (i, j) = self.ij(node);
        let wx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        wx * wy * self.hx * self.hy
    }

    /// Arc-length weight of a boundary node along the boundary loop.
    pub fn boundary_weight(&self, b: &BoundaryNode) -> f64 {
        b.sides.iter().map(|&s| self.side_weight(b, s)).sum()
    }

    /// Arc-length weight of a boundary node restricted to one side.
    pub fn side_weight(&self, b: &BoundaryNode, side: Side) -> f64 {
        if !b.sides.contains(&side) {
            return 0.0;
        }
        let h = if side.normal_axis() == 0 { self.hy } else { self.hx };
        if b.is_corner() {
            0.5 * h
        } else {
            h
        }
    }

    pub fn contains(&self, x: f64, y: f64, eps: f64) -> bool {
        let e = &self.extent;
        x >= e.x0 - eps && x <= e.x1 + eps && y >= e.y0 - eps && y <= e.y1 + eps
    }

    /// Boundary node nearest to a point on the given side.
    pub fn nearest_on_side(&self, side: Side, x: f64, y: f64) -> &BoundaryNode {
        let node = match side {
            Side::Left | Side::Right => {
                let i = if side == Side::Left { 0 } else { self.nx };
                let j = (((y - self.extent.y0) / self.hy).round().max(0.0) as usize).min(self.ny);
                self.idx(i, j)
            }
            Side::Bottom | Side::Top => {
                let j = if side == Side::Bottom { 0 } else { self.ny };
                let i = (((x - self.extent.x0) / self.hx).round().max(0.0) as usize).min(self.nx);
                self.idx(i, j)
            }
        };
        self.boundary_node(node).expect("node on side is a boundary node")
    }

    /// Assign face tags from the boundary velocity.
    ///
    /// A face is INFLOW iff `u_B·n <= -c`, OUTFLOW iff `u_B·n > 0` and WALL
    /// when the normal component vanishes. Inward velocities weaker than `c`
    /// are rejected, as are inflow faces that do not form one connected
    /// segment of the boundary loop.
    pub fn classify_boundary<F>(&self, mut u_b: F, threshold: f64) -> Result<Grid>
    where
        F: FnMut(f64, f64) -> [f64; 3],
    {
        if !(threshold > 0.0) {
            return Err(Error::InvalidParameter(format!("inflow threshold must be > 0, got {threshold}")));
        }
        let mut out = self.clone();
        let mut ambiguous = 0usize;
        let mut weakest = f64::INFINITY;
        for b in out.boundary.iter_mut() {
            let (x, y) = (self.x(b.i), self.y(b.j));
            let u = u_b(x, y);
            let scale = 1.0 + u.iter().map(|c| c.abs()).fold(0.0, f64::max);
            let mut best = (b.sides[0], dot(u, b.sides[0].normal()));
            for &s in &b.sides[1..] {
                let un = dot(u, s.normal());
                if un.abs() > best.1.abs() {
                    best = (s, un);
                }
            }
            let (side, un) = best;
            b.side = side;
            b.tag = if un.abs() <= ZERO_FLUX_EPS * scale {
                FaceTag::Wall
            } else if un > 0.0 {
                FaceTag::Outflow
            } else if un <= -threshold {
                FaceTag::Inflow
            } else {
                ambiguous += 1;
                weakest = weakest.min(-un);
                FaceTag::Wall
            };
        }
        if ambiguous > 0 {
            return Err(Error::AmbiguousInflow { count: ambiguous, threshold, weakest: -weakest });
        }
        let runs = out.inflow_runs();
        if runs > 1 {
            return Err(Error::DisconnectedInflow { runs });
        }
        Ok(out)
    }

    /// Number of maximal runs of consecutive INFLOW faces along the closed boundary loop.
    pub fn inflow_runs(&self) -> usize {
        let n = self.boundary.len();
        let inflow: Vec<bool> = self.boundary.iter().map(|b| b.tag == FaceTag::Inflow).collect();
        if inflow.iter().all(|&f| f) {
            return 1;
        }
        (0..n).filter(|&k| inflow[k] && !inflow[(k + n - 1) % n]).count()
    }

    /// Replace all tags, e.g. when restoring a previously classified grid.
    pub fn with_tags(&self, tags: &[(FaceTag, Side)]) -> Result<Grid> {
        if tags.len() != self.boundary.len() {
            return Err(Error::ShapeMismatch(format!("{} tags for {} boundary nodes", tags.len(), self.boundary.len())));
        }
        let mut out = self.clone();
        for (b, &(tag, side)) in out.boundary.iter_mut().zip(tags) {
            if !b.sides.contains(&side) {
                return Err(Error::InvalidGrid(format!("node ({}, {}) is not on side {side:?}", b.i, b.j)));
            }
            b.tag = tag;
            b.side = side;
        }
        Ok(out)
    }
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags_on(grid: &Grid, side: Side) -> Vec<FaceTag> {
        grid.boundary().iter().filter(|b| b.sides.contains(&side) && !b.is_corner()).map(|b| b.tag).collect()
    }

    #[test]
    fn rejects_small_grids() {
        assert!(Grid::new(3, 8, Extent::unit()).is_err());
        assert!(Grid::new(8, 8, Extent { x0: 0.0, x1: 0.0, y0: 0.0, y1: 1.0 }).is_err());
    }

    #[test]
    fn boundary_loop_covers_every_boundary_node_once() {
        let g = Grid::new(6, 5, Extent::unit()).unwrap();
        assert_eq!(g.boundary().len(), 2 * (6 + 5));
        let mut seen = vec![0; g.len()];
        for b in g.boundary() {
            seen[b.node] += 1;
        }
        for node in 0..g.len() {
            let (i, j) = g.ij(node);
            let expected = usize::from(!g.is_interior(i, j));
            assert_eq!(seen[node], expected);
        }
    }

    #[test]
    fn weights_integrate_area_and_perimeter() {
        let g = Grid::new(7, 5, Extent { x0: -1.0, x1: 2.0, y0: 0.0, y1: 0.5 }).unwrap();
        let area: f64 = (0..g.len()).map(|k| g.weight(k)).sum();
        assert!((area - 1.5).abs() < 1e-14);
        let perimeter: f64 = g.boundary().iter().map(|b| g.boundary_weight(b)).sum();
        assert!((perimeter - 7.0).abs() < 1e-14);
        let left: f64 = g.boundary().iter().map(|b| g.side_weight(b, Side::Left)).sum();
        assert!((left - 0.5).abs() < 1e-14);
    }

    #[test]
    fn left_edge_with_inward_velocity_is_inflow() {
        let g = Grid::unit_square(8).unwrap();
        let tagged = g.classify_boundary(|_, _| [1.0, 0.0, 0.0], 0.5).unwrap();
        assert!(tags_on(&tagged, Side::Left).iter().all(|&t| t == FaceTag::Inflow));
        assert!(tags_on(&tagged, Side::Right).iter().all(|&t| t == FaceTag::Outflow));
        assert!(tags_on(&tagged, Side::Top).iter().all(|&t| t == FaceTag::Wall));
        assert!(tags_on(&tagged, Side::Bottom).iter().all(|&t| t == FaceTag::Wall));
        // corners follow the dominant face
        let corner = tagged.boundary_node(tagged.idx(0, 0)).unwrap();
        assert_eq!((corner.tag, corner.side), (FaceTag::Inflow, Side::Left));
        assert_eq!(tagged.inflow_runs(), 1);
    }

    #[test]
    fn zero_velocity_gives_all_walls() {
        let g = Grid::unit_square(8).unwrap();
        let tagged = g.classify_boundary(|_, _| [0.0; 3], 0.5).unwrap();
        assert!(tagged.boundary().iter().all(|b| b.tag == FaceTag::Wall));
        assert_eq!(tagged.inflow_runs(), 0);
    }

    #[test]
    fn weak_inflow_is_ambiguous() {
        let g = Grid::unit_square(8).unwrap();
        let err = g.classify_boundary(|x, _| if x < 1e-12 { [0.3, 0.0, 0.0] } else { [0.0; 3] }, 0.5);
        assert!(matches!(err, Err(Error::AmbiguousInflow { .. })));
    }

    #[test]
    fn two_inflow_segments_are_disconnected() {
        let g = Grid::unit_square(8).unwrap();
        // inflow through left and right edges, walls top and bottom
        let err = g.classify_boundary(|x, _| if x < 0.5 { [1.0, 0.0, 0.0] } else { [-1.0, 0.0, 0.0] }, 0.5);
        assert!(matches!(err, Err(Error::DisconnectedInflow { runs: 2 })));
    }

    #[test]
    fn tags_partition_the_boundary() {
        let g = Grid::new(9, 6, Extent::unit()).unwrap();
        let tagged = g.classify_boundary(|x, y| [1.0 - x, y - 0.5, 0.0], 0.5).unwrap_or_else(|_| g.clone());
        let counts = tagged.boundary().iter().fold([0; 3], |mut acc, b| {
            acc[b.tag as usize] += 1;
            acc
        });
        assert_eq!(counts.iter().sum::<usize>(), tagged.boundary().len());
    }
}
