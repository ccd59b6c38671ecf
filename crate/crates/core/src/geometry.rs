//! Uniform binary box tree and all index bookkeeping.
//!
//! Boxes are numbered breadth-first starting from the root (`id = 1`); the
//! children of box `t` are `2t` (alpha: west or south half) and `2t + 1`
//! (beta: east or north half), so every parent precedes its children. Level
//! `l` holds `2^l` boxes, the leaves live on level `levels - 1`, and the split
//! axis alternates per level starting with a vertical cut at the root.
//!
//! Every corner-free edge point is identified by an integer lattice key
//! ([`EdgePoint`]) rather than by its coordinates, so sibling interfaces line
//! up exactly without any floating-point matching.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::spectral::cheb_nodes;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid rectangle [{xmin}, {xmax}] x [{ymin}, {ymax}]")]
    InvalidRect { xmin: f64, xmax: f64, ymin: f64, ymax: f64 },
    #[error("tree needs at least 1 level and at most {max}, got {got}")]
    Levels { got: usize, max: usize },
    #[error("leaf order n_c must be at least 4, got {0}")]
    Order(usize),
    #[error("boxes {alpha} and {beta} are not siblings")]
    NotSiblings { alpha: usize, beta: usize },
    #[error("interface between boxes {alpha} and {beta} has mismatched discretizations")]
    MismatchedInterface { alpha: usize, beta: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self, GeometryError> {
        let ok = [xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite()) && xmax > xmin && ymax > ymin;
        if !ok {
            return Err(GeometryError::InvalidRect { xmin, xmax, ymin, ymax });
        }
        Ok(Rect { xmin, xmax, ymin, ymax })
    }

    pub fn unit_square() -> Self {
        Rect {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
}

/// Orientation of the cut that separates a box's two children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitAxis {
    /// Children are west (alpha) and east (beta).
    Vertical,
    /// Children are south (alpha) and north (beta).
    Horizontal,
}

/// Side of a box, in the leaf boundary ordering `[S, E, N, W]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    South,
    East,
    North,
    West,
}

impl Side {
    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::South => [0.0, -1.0],
            Side::East => [1.0, 0.0],
            Side::North => [0.0, 1.0],
            Side::West => [-1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeOrientation {
    Vertical,
    Horizontal,
}

/// Lattice key of a corner-free edge point.
///
/// `line` indexes the grid line of leaf edges (`0..=nx` for vertical lines,
/// `0..=ny` for horizontal ones), `cell` the leaf cell along that line and
/// `node` the Chebyshev node inside the cell (`1..n_c - 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgePoint {
    pub orientation: EdgeOrientation,
    pub line: u32,
    pub cell: u32,
    pub node: u32,
}

/// Half-open range of leaf cells covered by a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRange {
    pub ix0: usize,
    pub ix1: usize,
    pub iy0: usize,
    pub iy1: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxNode {
    pub id: usize,
    pub level: usize,
    pub rect: Rect,
    pub cells: CellRange,
    pub parent: Option<usize>,
    pub children: Option<(usize, usize)>,
    pub split_axis: Option<SplitAxis>,
}

impl BoxNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Leaf index sets into the full `n_c x n_c` tensor grid (`ix + n_c * iy`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafIndexSets {
    pub n_c: usize,
    pub south: Vec<usize>,
    pub east: Vec<usize>,
    pub north: Vec<usize>,
    pub west: Vec<usize>,
    pub interior: Vec<usize>,
}

impl LeafIndexSets {
    /// `I_b = [I_s, I_e, I_n, I_w]`.
    pub fn boundary(&self) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.n_b());
        b.extend(&self.south);
        b.extend(&self.east);
        b.extend(&self.north);
        b.extend(&self.west);
        b
    }

    /// `I = [I_b, I_i]`.
    pub fn all(&self) -> Vec<usize> {
        let mut v = self.boundary();
        v.extend(&self.interior);
        v
    }

    pub fn n_b(&self) -> usize {
        4 * self.n_c - 8
    }

    pub fn n_i(&self) -> usize {
        (self.n_c - 2) * (self.n_c - 2)
    }

    pub fn n_total(&self) -> usize {
        self.n_c * self.n_c - 4
    }
}

/// Corner-free boundary and interior index sets of a leaf.
pub fn leaf_index_sets(n_c: usize) -> Result<LeafIndexSets, GeometryError> {
    if n_c < 4 {
        return Err(GeometryError::Order(n_c));
    }
    let at = |ix: usize, iy: usize| ix + n_c * iy;
    let inner = 1..n_c - 1;
    Ok(LeafIndexSets {
        n_c,
        south: inner.clone().map(|ix| at(ix, 0)).collect(),
        east: inner.clone().map(|iy| at(n_c - 1, iy)).collect(),
        north: inner.clone().map(|ix| at(ix, n_c - 1)).collect(),
        west: inner.clone().map(|iy| at(0, iy)).collect(),
        interior: inner
            .clone()
            .flat_map(|iy| inner.clone().map(move |ix| at(ix, iy)))
            .collect(),
    })
}

/// Partition of two siblings' boundary points for a merge.
///
/// All entries are positions in the respective child's boundary vector. The
/// interface lists are sorted along the shared edge so position `k` in
/// `i3_alpha` and in `i3_beta` is the same physical point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceSets {
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
    pub i3_alpha: Vec<usize>,
    pub i3_beta: Vec<usize>,
}

impl InterfaceSets {
    pub fn n1(&self) -> usize {
        self.i1.len()
    }

    pub fn n2(&self) -> usize {
        self.i2.len()
    }

    pub fn n3(&self) -> usize {
        self.i3_alpha.len()
    }

    /// `|I_1| + |I_2|`, the parent's boundary size.
    pub fn exterior(&self) -> usize {
        self.i1.len() + self.i2.len()
    }
}

/// Leaf-major numbering of every distinct discretization point.
///
/// Leaves are visited in id order and each contributes its `[I_b, I_i]`
/// points; an edge point shared by two leaves belongs to the lower id.
#[derive(Debug, Clone)]
pub struct GlobalNumbering {
    pub coords: Vec<[f64; 2]>,
    /// For each leaf (in id order) the global index of each local point.
    pub leaf_maps: Vec<Vec<usize>>,
    /// For each leaf the local positions it owns.
    pub leaf_owned: Vec<Vec<usize>>,
}

impl GlobalNumbering {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// A point on the domain boundary with its outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct BoxTree {
    pub domain: Rect,
    pub levels: usize,
    pub n_c: usize,
    /// Leaf cells in x and y.
    pub nx: usize,
    pub ny: usize,
    nodes: Vec<BoxNode>,
    boundaries: Vec<Vec<EdgePoint>>,
    interfaces: Vec<Option<InterfaceSets>>,
    xnodes: Vec<Vec<f64>>,
    ynodes: Vec<Vec<f64>>,
    numbering: GlobalNumbering,
}

const MAX_LEVELS: usize = 30;

/// Builds the uniform tree with `levels` levels over `domain`.
pub fn build_uniform_tree(domain: Rect, levels: usize, n_c: usize) -> Result<BoxTree, GeometryError> {
    Rect::new(domain.xmin, domain.xmax, domain.ymin, domain.ymax)?;
    if levels == 0 || levels > MAX_LEVELS {
        return Err(GeometryError::Levels {
            got: levels,
            max: MAX_LEVELS,
        });
    }
    if n_c < 4 {
        return Err(GeometryError::Order(n_c));
    }
    let splits = levels - 1;
    let nx = 1usize << splits.div_ceil(2);
    let ny = 1usize << (splits / 2);
    let xline = |i: usize| domain.xmin + domain.width() * (i as f64 / nx as f64);
    let yline = |j: usize| domain.ymin + domain.height() * (j as f64 / ny as f64);
    let rect_of = |c: CellRange| Rect {
        xmin: xline(c.ix0),
        xmax: xline(c.ix1),
        ymin: yline(c.iy0),
        ymax: yline(c.iy1),
    };

    let n_boxes = (1usize << levels) - 1;
    let mut nodes: Vec<BoxNode> = Vec::with_capacity(n_boxes);
    let root_cells = CellRange {
        ix0: 0,
        ix1: nx,
        iy0: 0,
        iy1: ny,
    };
    nodes.push(BoxNode {
        id: 1,
        level: 0,
        rect: rect_of(root_cells),
        cells: root_cells,
        parent: None,
        children: None,
        split_axis: None,
    });
    for id in 1..=n_boxes {
        let (level, cells) = {
            let n = &nodes[id - 1];
            (n.level, n.cells)
        };
        if level + 1 == levels {
            continue;
        }
        let axis = if level % 2 == 0 {
            SplitAxis::Vertical
        } else {
            SplitAxis::Horizontal
        };
        let (a, b) = match axis {
            SplitAxis::Vertical => {
                let mid = (cells.ix0 + cells.ix1) / 2;
                (CellRange { ix1: mid, ..cells }, CellRange { ix0: mid, ..cells })
            }
            SplitAxis::Horizontal => {
                let mid = (cells.iy0 + cells.iy1) / 2;
                (CellRange { iy1: mid, ..cells }, CellRange { iy0: mid, ..cells })
            }
        };
        nodes[id - 1].children = Some((2 * id, 2 * id + 1));
        nodes[id - 1].split_axis = Some(axis);
        for (child, c) in [(2 * id, a), (2 * id + 1, b)] {
            debug_assert_eq!(nodes.len() + 1, child);
            nodes.push(BoxNode {
                id: child,
                level: level + 1,
                rect: rect_of(c),
                cells: c,
                parent: Some(id),
                children: None,
                split_axis: None,
            });
        }
    }

    let xnodes: Vec<Vec<f64>> = (0..nx).map(|i| cheb_nodes(n_c, xline(i), xline(i + 1)).nodes).collect();
    let ynodes: Vec<Vec<f64>> = (0..ny).map(|j| cheb_nodes(n_c, yline(j), yline(j + 1)).nodes).collect();

    let mut tree = BoxTree {
        domain,
        levels,
        n_c,
        nx,
        ny,
        nodes,
        boundaries: vec![Vec::new(); n_boxes],
        interfaces: vec![None; n_boxes],
        xnodes,
        ynodes,
        numbering: GlobalNumbering {
            coords: Vec::new(),
            leaf_maps: Vec::new(),
            leaf_owned: Vec::new(),
        },
    };

    for id in tree.level_range(levels - 1) {
        tree.boundaries[id - 1] = leaf_boundary_keys(tree.nodes[id - 1].cells, n_c);
    }
    for level in (0..levels - 1).rev() {
        for id in tree.level_range(level) {
            let (a, b) = tree.nodes[id - 1].children.unwrap();
            let sets = sibling_interface_sets(&tree, a, b)?;
            let mut bd = Vec::with_capacity(sets.exterior());
            bd.extend(sets.i1.iter().map(|&p| tree.boundaries[a - 1][p]));
            bd.extend(sets.i2.iter().map(|&p| tree.boundaries[b - 1][p]));
            tree.boundaries[id - 1] = bd;
            tree.interfaces[id - 1] = Some(sets);
        }
    }
    tree.numbering = tree.compute_numbering();
    Ok(tree)
}

fn leaf_boundary_keys(c: CellRange, n_c: usize) -> Vec<EdgePoint> {
    let (ix, iy) = (c.ix0 as u32, c.iy0 as u32);
    let side = |orientation, line, cell| {
        (1..n_c as u32 - 1).map(move |node| EdgePoint {
            orientation,
            line,
            cell,
            node,
        })
    };
    use EdgeOrientation::*;
    side(Horizontal, iy, ix)
        .chain(side(Vertical, ix + 1, iy))
        .chain(side(Horizontal, iy + 1, ix))
        .chain(side(Vertical, ix, iy))
        .collect()
}

/// Splits the boundaries of siblings `alpha` and `beta` into `I_1`, `I_2`, `I_3`.
pub fn sibling_interface_sets(tree: &BoxTree, alpha: usize, beta: usize) -> Result<InterfaceSets, GeometryError> {
    let na = tree.node(alpha);
    let nb = tree.node(beta);
    let parent = match (na.parent, nb.parent) {
        (Some(p), Some(q)) if p == q && tree.node(p).children == Some((alpha, beta)) => tree.node(p),
        _ => return Err(GeometryError::NotSiblings { alpha, beta }),
    };
    let (orientation, line) = match parent.split_axis.unwrap() {
        SplitAxis::Vertical => (EdgeOrientation::Vertical, na.cells.ix1 as u32),
        SplitAxis::Horizontal => (EdgeOrientation::Horizontal, na.cells.iy1 as u32),
    };
    let on_interface = |k: &EdgePoint| k.orientation == orientation && k.line == line;
    let split = |keys: &[EdgePoint]| {
        let mut outer = Vec::new();
        let mut shared = Vec::new();
        for (pos, k) in keys.iter().enumerate() {
            if on_interface(k) {
                shared.push(pos);
            } else {
                outer.push(pos);
            }
        }
        shared.sort_by_key(|&p| (keys[p].cell, keys[p].node));
        (outer, shared)
    };
    let ka = tree.boundary_keys(alpha);
    let kb = tree.boundary_keys(beta);
    let (i1, i3_alpha) = split(ka);
    let (i2, i3_beta) = split(kb);
    let matched = i3_alpha.len() == i3_beta.len()
        && !i3_alpha.is_empty()
        && i3_alpha.iter().zip(&i3_beta).all(|(&p, &q)| ka[p] == kb[q]);
    if !matched {
        return Err(GeometryError::MismatchedInterface { alpha, beta });
    }
    Ok(InterfaceSets {
        i1,
        i2,
        i3_alpha,
        i3_beta,
    })
}

impl BoxTree {
    pub fn n_boxes(&self) -> usize {
        self.nodes.len()
    }

    /// `N_boxes^l = 2^l`.
    pub fn boxes_on_level(&self, level: usize) -> usize {
        1 << level
    }

    pub fn leaf_level(&self) -> usize {
        self.levels - 1
    }

    pub fn n_leaves(&self) -> usize {
        self.boxes_on_level(self.leaf_level())
    }

    /// Box ids on `level`, ascending.
    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        (1 << level)..(1 << (level + 1))
    }

    pub fn node(&self, id: usize) -> &BoxNode {
        &self.nodes[id - 1]
    }

    pub fn nodes(&self) -> &[BoxNode] {
        &self.nodes
    }

    /// Position of a leaf in leaf order, or `None` for interior boxes.
    pub fn leaf_index(&self, id: usize) -> Option<usize> {
        self.node(id).is_leaf().then(|| id - (1 << self.leaf_level()))
    }

    pub fn leaf_ids(&self) -> std::ops::Range<usize> {
        self.level_range(self.leaf_level())
    }

    /// Ordered boundary keys of a box (`[I_s, I_e, I_n, I_w]` for leaves,
    /// `[I_1, I_2]` for merged boxes).
    pub fn boundary_keys(&self, id: usize) -> &[EdgePoint] {
        &self.boundaries[id - 1]
    }

    pub fn interface(&self, id: usize) -> Option<&InterfaceSets> {
        self.interfaces[id - 1].as_ref()
    }

    /// Chebyshev nodes of leaf cell column `i` (x) and row `j` (y).
    pub fn cell_nodes(&self, i: usize, j: usize) -> (&[f64], &[f64]) {
        (&self.xnodes[i], &self.ynodes[j])
    }

    pub fn point_coords(&self, k: &EdgePoint) -> [f64; 2] {
        let (cell, node) = (k.cell as usize, k.node as usize);
        match k.orientation {
            EdgeOrientation::Vertical => {
                let x = if (k.line as usize) < self.nx {
                    self.xnodes[k.line as usize][0]
                } else {
                    self.xnodes[self.nx - 1][self.n_c - 1]
                };
                [x, self.ynodes[cell][node]]
            }
            EdgeOrientation::Horizontal => {
                let y = if (k.line as usize) < self.ny {
                    self.ynodes[k.line as usize][0]
                } else {
                    self.ynodes[self.ny - 1][self.n_c - 1]
                };
                [self.xnodes[cell][node], y]
            }
        }
    }

    /// Side of the domain a key lies on, if any.
    pub fn domain_side(&self, k: &EdgePoint) -> Option<Side> {
        match (k.orientation, k.line as usize) {
            (EdgeOrientation::Horizontal, 0) => Some(Side::South),
            (EdgeOrientation::Horizontal, l) if l == self.ny => Some(Side::North),
            (EdgeOrientation::Vertical, 0) => Some(Side::West),
            (EdgeOrientation::Vertical, l) if l == self.nx => Some(Side::East),
            _ => None,
        }
    }

    /// Root boundary points in root boundary order.
    pub fn root_boundary(&self) -> Vec<BoundaryPoint> {
        self.boundary_keys(1)
            .iter()
            .map(|k| {
                let [x, y] = self.point_coords(k);
                BoundaryPoint {
                    x,
                    y,
                    side: self.domain_side(k).expect("root boundary key on domain edge"),
                }
            })
            .collect()
    }

    /// Coordinates of leaf interior points in `I_i` order.
    pub fn leaf_interior_coords(&self, id: usize) -> Vec<[f64; 2]> {
        let c = self.node(id).cells;
        let (xs, ys) = self.cell_nodes(c.ix0, c.iy0);
        let inner = 1..self.n_c - 1;
        inner
            .clone()
            .flat_map(|iy| inner.clone().map(move |ix| [xs[ix], ys[iy]]))
            .collect()
    }

    pub fn numbering(&self) -> &GlobalNumbering {
        &self.numbering
    }

    /// Number of distinct discretization points.
    pub fn n_points(&self) -> usize {
        self.numbering.len()
    }

    fn compute_numbering(&self) -> GlobalNumbering {
        let mut coords = Vec::new();
        let mut seen: HashMap<EdgePoint, usize> = HashMap::new();
        let mut leaf_maps = Vec::with_capacity(self.n_leaves());
        let mut leaf_owned = Vec::with_capacity(self.n_leaves());
        for id in self.leaf_ids() {
            let mut map = Vec::with_capacity(self.n_c * self.n_c - 4);
            let mut owned = Vec::new();
            for k in self.boundary_keys(id) {
                let g = *seen.entry(*k).or_insert_with(|| {
                    owned.push(map.len());
                    coords.push(self.point_coords(k));
                    coords.len() - 1
                });
                map.push(g);
            }
            for p in self.leaf_interior_coords(id) {
                owned.push(map.len());
                map.push(coords.len());
                coords.push(p);
            }
            leaf_maps.push(map);
            leaf_owned.push(owned);
        }
        GlobalNumbering {
            coords,
            leaf_maps,
            leaf_owned,
        }
    }

    /// Text dump, one line per box: `id level leaf? rect child_ids`.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let children = match n.children {
                Some((a, b)) => format!("{a},{b}"),
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{} {} {} [{},{}]x[{},{}] {}",
                n.id,
                n.level,
                if n.is_leaf() { "leaf" } else { "node" },
                n.rect.xmin,
                n.rect.xmax,
                n.rect.ymin,
                n.rect.ymax,
                children
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_by_four_has_31_boxes() {
        let t = build_uniform_tree(Rect::unit_square(), 5, 6).unwrap();
        assert_eq!(t.n_boxes(), 31);
        assert_eq!((t.nx, t.ny), (4, 4));
        assert_eq!(t.n_leaves(), 16);
    }

    #[test]
    fn single_level_tree() {
        let t = build_uniform_tree(Rect::unit_square(), 1, 6).unwrap();
        assert_eq!(t.n_boxes(), 1);
        assert!(t.node(1).is_leaf());
        assert_eq!(t.leaf_index(1), Some(0));
        assert_eq!(t.boundary_keys(1).len(), 16);
    }

    #[test]
    fn level_counts_for_three_levels() {
        let t = build_uniform_tree(Rect::unit_square(), 3, 6).unwrap();
        let counts: Vec<usize> = (0..3)
            .map(|l| t.nodes().iter().filter(|n| n.level == l).count())
            .collect();
        assert_eq!(counts, vec![1, 2, 4]);
        for (l, &c) in counts.iter().enumerate() {
            assert_eq!(c, t.boxes_on_level(l));
        }
    }

    #[test]
    fn parents_precede_children_and_tile() {
        let t = build_uniform_tree(Rect::new(-1.0, 2.0, 0.0, 0.5).unwrap(), 6, 5).unwrap();
        assert_eq!(t.node(1).parent, None);
        for n in t.nodes() {
            if let Some(p) = n.parent {
                assert!(p < n.id);
            }
            if let Some((a, b)) = n.children {
                let (ra, rb) = (t.node(a).rect, t.node(b).rect);
                match n.split_axis.unwrap() {
                    SplitAxis::Vertical => {
                        assert_eq!(ra.xmax, rb.xmin);
                        assert_eq!((ra.xmin, rb.xmax), (n.rect.xmin, n.rect.xmax));
                        assert_eq!((ra.ymin, ra.ymax), (n.rect.ymin, n.rect.ymax));
                        assert_eq!((rb.ymin, rb.ymax), (n.rect.ymin, n.rect.ymax));
                    }
                    SplitAxis::Horizontal => {
                        assert_eq!(ra.ymax, rb.ymin);
                        assert_eq!((ra.ymin, rb.ymax), (n.rect.ymin, n.rect.ymax));
                        assert_eq!((ra.xmin, ra.xmax), (n.rect.xmin, n.rect.xmax));
                    }
                }
            }
        }
        // uniform level sizes
        for l in 0..t.levels {
            let ids = t.level_range(l);
            let r0 = t.node(ids.start).rect;
            for id in ids {
                let r = t.node(id).rect;
                assert!((r.width() - r0.width()).abs() < 1e-12);
                assert!((r.height() - r0.height()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_uniform_tree(Rect::unit_square(), 0, 6).is_err());
        assert!(build_uniform_tree(Rect::unit_square(), 3, 3).is_err());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn leaf_set_sizes() {
        for (n_c, nb, ni) in [(16, 56, 196), (4, 8, 4)] {
            let s = leaf_index_sets(n_c).unwrap();
            assert_eq!(s.boundary().len(), nb);
            assert_eq!(s.interior.len(), ni);
            assert_eq!(s.all().len(), n_c * n_c - 4);
        }
        assert!(leaf_index_sets(3).is_err());
    }

    #[test]
    fn leaf_sets_cover_grid_without_corners() {
        let n_c = 6;
        let s = leaf_index_sets(n_c).unwrap();
        let mut hits = vec![0; n_c * n_c];
        for i in s.all() {
            hits[i] += 1;
        }
        let corners = [0, n_c - 1, n_c * (n_c - 1), n_c * n_c - 1];
        for (k, &h) in hits.iter().enumerate() {
            let expect = if corners.contains(&k) { 0 } else { 1 };
            assert_eq!(h, expect, "grid index {k}");
        }
    }

    #[test]
    fn two_leaf_interface_sizes() {
        for (n_c, n3, n1) in [(16, 14, 42), (4, 2, 6)] {
            let t = build_uniform_tree(Rect::unit_square(), 2, n_c).unwrap();
            let s = t.interface(1).unwrap();
            assert_eq!(s.n3(), n3);
            assert_eq!(s.n1(), n1);
            assert_eq!(s.n2(), n1);
        }
    }

    #[test]
    fn interface_points_coincide_and_union_counts() {
        let n_c = 7;
        let t = build_uniform_tree(Rect::unit_square(), 6, n_c).unwrap();
        for id in 1..=t.n_boxes() {
            let Some(s) = t.interface(id) else { continue };
            let (a, b) = t.node(id).children.unwrap();
            for (&p, &q) in s.i3_alpha.iter().zip(&s.i3_beta) {
                let pa = t.point_coords(&t.boundary_keys(a)[p]);
                let pb = t.point_coords(&t.boundary_keys(b)[q]);
                assert_eq!(pa, pb);
            }
            let c = t.node(id).cells;
            let cells = (c.ix1 - c.ix0) + (c.iy1 - c.iy0);
            assert_eq!(s.exterior(), 2 * cells * (n_c - 2));
            // the parent boundary contains exactly the points on its rectangle's edges
            let r = t.node(id).rect;
            for k in t.boundary_keys(id) {
                let [x, y] = t.point_coords(k);
                let on_edge = x == r.xmin || x == r.xmax || y == r.ymin || y == r.ymax;
                assert!(on_edge);
            }
        }
    }

    #[test]
    fn non_siblings_rejected() {
        let t = build_uniform_tree(Rect::unit_square(), 3, 5).unwrap();
        assert!(matches!(
            sibling_interface_sets(&t, 4, 6),
            Err(GeometryError::NotSiblings { .. })
        ));
    }

    #[test]
    fn numbering_counts_distinct_points() {
        let n_c = 6;
        let t = build_uniform_tree(Rect::unit_square(), 5, n_c).unwrap();
        let (nx, ny) = (t.nx, t.ny);
        let edges = (nx + 1) * ny + (ny + 1) * nx;
        let expect = nx * ny * (n_c - 2) * (n_c - 2) + edges * (n_c - 2);
        assert_eq!(t.n_points(), expect);
        let num = t.numbering();
        let owned: usize = num.leaf_owned.iter().map(Vec::len).sum();
        assert_eq!(owned, expect);
        for (leaf, map) in num.leaf_maps.iter().enumerate() {
            assert_eq!(map.len(), n_c * n_c - 4);
            let id = t.leaf_ids().start + leaf;
            for (pos, k) in t.boundary_keys(id).iter().enumerate() {
                assert_eq!(num.coords[map[pos]], t.point_coords(k));
            }
        }
    }

    #[test]
    fn root_boundary_sides() {
        let t = build_uniform_tree(Rect::unit_square(), 4, 5).unwrap();
        let rb = t.root_boundary();
        assert_eq!(rb.len(), 2 * (t.nx + t.ny) * 3);
        for p in rb {
            match p.side {
                Side::South => assert_eq!(p.y, 0.0),
                Side::North => assert_eq!(p.y, 1.0),
                Side::West => assert_eq!(p.x, 0.0),
                Side::East => assert_eq!(p.x, 1.0),
            }
        }
    }

    #[test]
    fn describe_lists_every_box() {
        let t = build_uniform_tree(Rect::unit_square(), 3, 5).unwrap();
        let d = t.describe();
        assert_eq!(d.lines().count(), 7);
        assert!(d.lines().next().unwrap().starts_with("1 0 node"));
        assert!(d.lines().last().unwrap().ends_with(" -"));
    }
}
