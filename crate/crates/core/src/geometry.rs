//! Leaf layout, the global deduplicated mesh, and the binary merge tree with
//! its index vectors.
//!
//! Mesh nodes live on an integer lattice: leaf cell `(cx, cy)` owns lattice
//! points `cx·(p−1) ..= (cx+1)·(p−1)` along the first axis (likewise for the
//! second), so nodes shared between leaves are identified exactly. Global
//! indices follow the lexicographic lattice order `(I, J)`, which is also the
//! lexicographic order of the coordinates `(x₁, x₂)`.

use std::collections::VecDeque;

use crate::error::{HpsError, Result};
use crate::pde::DomainShape;
use crate::spectral::TensorGrid;

/// Leaf layout: an `nx × ny` occupancy mask of square cells of side `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub p: usize,
    pub nx: usize,
    pub ny: usize,
    /// Cell `(cx, cy)` is stored at `cx + nx * cy`.
    pub mask: Vec<bool>,
    pub h: f64,
    pub origin: [f64; 2],
}

impl DomainSpec {
    /// `[0,1]²` split into `n × n` leaves.
    pub fn unit_square(p: usize, n: usize) -> Self {
        Self::rectangle(p, n, n, 1.0 / n as f64)
    }

    pub fn rectangle(p: usize, nx: usize, ny: usize, h: f64) -> Self {
        Self {
            p,
            nx,
            ny,
            mask: vec![true; nx * ny],
            h,
            origin: [0.0, 0.0],
        }
    }

    /// `[0,2]² \ [1,2]²` with `n` leaves per unit length.
    pub fn l_shape(p: usize, n: usize) -> Self {
        let m = 2 * n;
        let mask = (0..m * m)
            .map(|idx| {
                let (cx, cy) = (idx % m, idx / m);
                !(cx >= n && cy >= n)
            })
            .collect();
        Self {
            p,
            nx: m,
            ny: m,
            mask,
            h: 1.0 / n as f64,
            origin: [0.0, 0.0],
        }
    }

    /// Layout for a built-in domain with `n` leaves per unit length.
    pub fn for_shape(shape: DomainShape, p: usize, n: usize) -> Self {
        match shape {
            DomainShape::UnitSquare => Self::unit_square(p, n),
            DomainShape::LShape => Self::l_shape(p, n),
        }
    }

    pub fn from_mask(p: usize, nx: usize, ny: usize, mask: Vec<bool>, h: f64) -> Self {
        Self {
            p,
            nx,
            ny,
            mask,
            h,
            origin: [0.0, 0.0],
        }
    }

    pub fn occupied(&self, cx: isize, cy: isize) -> bool {
        cx >= 0
            && cy >= 0
            && (cx as usize) < self.nx
            && (cy as usize) < self.ny
            && self.mask[cx as usize + self.nx * cy as usize]
    }

    /// Occupied cells in `(cx, cy)` lexicographic order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for cx in 0..self.nx {
            for cy in 0..self.ny {
                if self.mask[cx + self.nx * cy] {
                    out.push((cx, cy));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 3 {
            return Err(HpsError::InvalidArgument(format!("leaf order p must be >= 3, got {}", self.p)));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(HpsError::InvalidArgument("layout needs nx, ny >= 1".into()));
        }
        if self.mask.len() != self.nx * self.ny {
            return Err(HpsError::DimensionMismatch {
                expected: self.nx * self.ny,
                got: self.mask.len(),
            });
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(HpsError::InvalidArgument(format!("leaf side must be > 0, got {}", self.h)));
        }
        let cells = self.cells();
        if cells.is_empty() {
            return Err(HpsError::InvalidArgument("layout has no occupied cells".into()));
        }
        if !connected(&cells) {
            return Err(HpsError::UndecomposableLayout("occupied cells are not connected".into()));
        }
        Ok(())
    }

    pub fn leaf_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// 4-connectivity of a sorted cell list.
fn connected(cells: &[(usize, usize)]) -> bool {
    if cells.is_empty() {
        return false;
    }
    let mut seen = vec![false; cells.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        let (x, y) = cells[i];
        let nbrs = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        for nb in nbrs {
            if let Ok(j) = cells.binary_search(&nb) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
    }
    count == cells.len()
}

/// The deduplicated mesh over all leaves.
#[derive(Clone, Debug)]
pub struct GlobalMesh {
    pub p: usize,
    /// Lattice extent `(nx(p−1)+1, ny(p−1)+1)`.
    pub lattice_dims: (usize, usize),
    lattice_to_global: Vec<usize>,
    /// Lattice position of each global node.
    pub lattice: Vec<(usize, usize)>,
    pub coords: Vec<[f64; 2]>,
    /// Occupied cells, one per leaf, in `DomainSpec::cells` order.
    pub leaf_cells: Vec<(usize, usize)>,
    /// For each leaf, local grid index `k` → global node index.
    pub leaf_maps: Vec<Vec<usize>>,
}

impl GlobalMesh {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn global_at(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.lattice_dims.0 || j >= self.lattice_dims.1 {
            return None;
        }
        let g = self.lattice_to_global[i * self.lattice_dims.1 + j];
        (g != usize::MAX).then_some(g)
    }

    /// Nearest mesh node to `x` and its distance.
    pub fn nearest(&self, x: [f64; 2]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (g, c) in self.coords.iter().enumerate() {
            let d = (c[0] - x[0]).hypot(c[1] - x[1]);
            if d < best.1 {
                best = (g, d);
            }
        }
        best
    }
}

/// Position along one axis of lattice index `li ∈ [0, p−1]` inside a cell of
/// side `h` starting at `x0`, matching the grid nodes of [`TensorGrid`].
fn lattice_offset(li: usize, p: usize, h: f64) -> f64 {
    let m = (p - 1) as f64;
    let a = 0.5 * h;
    let s = ((2 * li) as f64 - m) * std::f64::consts::PI / (2.0 * m);
    a + a * s.sin()
}

pub fn build_mesh(spec: &DomainSpec) -> Result<GlobalMesh> {
    spec.validate()?;
    let m = spec.p - 1;
    let dims = (spec.nx * m + 1, spec.ny * m + 1);
    let cells_touching = |i: usize, n: usize| -> Vec<isize> {
        let c = (i / m) as isize;
        if i.is_multiple_of(m) {
            vec![c - 1, c]
        } else {
            vec![c]
        }
        .into_iter()
        .filter(|&v| v >= 0 && (v as usize) < n)
        .collect()
    };

    let mut lattice_to_global = vec![usize::MAX; dims.0 * dims.1];
    let mut lattice = Vec::new();
    let mut coords = Vec::new();
    for i in 0..dims.0 {
        let xs = cells_touching(i, spec.nx);
        for j in 0..dims.1 {
            let ys = cells_touching(j, spec.ny);
            let inside = xs.iter().any(|&cx| ys.iter().any(|&cy| spec.occupied(cx, cy)));
            if !inside {
                continue;
            }
            lattice_to_global[i * dims.1 + j] = lattice.len();
            lattice.push((i, j));
            let (cx, li) = if i == dims.0 - 1 { (spec.nx - 1, m) } else { (i / m, i % m) };
            let (cy, lj) = if j == dims.1 - 1 { (spec.ny - 1, m) } else { (j / m, j % m) };
            coords.push([
                spec.origin[0] + cx as f64 * spec.h + lattice_offset(li, spec.p, spec.h),
                spec.origin[1] + cy as f64 * spec.h + lattice_offset(lj, spec.p, spec.h),
            ]);
        }
    }

    let p = spec.p;
    let leaf_cells = spec.cells();
    let leaf_maps = leaf_cells
        .iter()
        .map(|&(cx, cy)| {
            (0..p * p)
                .map(|k| {
                    // local (i, j) counts from the +a end of each axis
                    let (i, j) = (k / p, k % p);
                    let li = cx * m + (m - i);
                    let lj = cy * m + (m - j);
                    lattice_to_global[li * dims.1 + lj]
                })
                .collect()
        })
        .collect();

    Ok(GlobalMesh {
        p,
        lattice_dims: dims,
        lattice_to_global,
        lattice,
        coords,
        leaf_cells,
        leaf_maps,
    })
}

/// Which way the shared edge of a parent's two children runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// Children side by side; the interface is vertical and merges use `V` (∂₁).
    Vertical,
    /// Children stacked; the interface is horizontal and merges use `W` (∂₂).
    Horizontal,
}

/// Split of the two children's boundary nodes at a merge (global indices,
/// each list sorted).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition {
    /// Boundary of the first child only.
    pub i1: Vec<usize>,
    /// Boundary of the second child only.
    pub i2: Vec<usize>,
    /// Shared by both children and on the boundary of the union.
    pub i3: Vec<usize>,
    /// Shared by both children and interior to the union.
    pub i4: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TreeNode {
    /// 1-based; parents precede children, the root is 1.
    pub id: usize,
    pub parent: Option<usize>,
    /// `(first, second)` child ids; the first child lies at lower coordinate.
    pub children: Option<(usize, usize)>,
    /// Cells covered, sorted.
    pub cells: Vec<(usize, usize)>,
    /// Physical bounding box `[[x_min, x_max], [y_min, y_max]]`.
    pub extent: [[f64; 2]; 2],
    pub orientation: Option<Orientation>,
    /// Leaf index into `GlobalMesh::leaf_maps` for leaves.
    pub leaf: Option<usize>,
    /// Boundary nodes (global, sorted).
    pub ext: Vec<usize>,
    /// Owned interior nodes: all interior nodes for a leaf, `I4` for a parent.
    pub int: Vec<usize>,
    pub partition: Option<Partition>,
    pub level: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn contains_cell(&self, cx: isize, cy: isize) -> bool {
        cx >= 0 && cy >= 0 && self.cells.binary_search(&(cx as usize, cy as usize)).is_ok()
    }
}

/// Lattice-geometry queries against a set of cells.
pub(crate) struct CellRegion<'a> {
    m: usize,
    contains: &'a dyn Fn(isize, isize) -> bool,
}

impl<'a> CellRegion<'a> {
    pub(crate) fn new(p: usize, contains: &'a dyn Fn(isize, isize) -> bool) -> Self {
        Self { m: p - 1, contains }
    }

    fn touching(&self, i: usize) -> ([isize; 2], usize) {
        let c = (i / self.m) as isize;
        if i.is_multiple_of(self.m) {
            ([c - 1, c], 2)
        } else {
            ([c, c], 1)
        }
    }

    /// True if lattice point `(i, j)` lies on the boundary of the region.
    pub(crate) fn on_boundary(&self, (i, j): (usize, usize)) -> bool {
        let (xs, nx) = self.touching(i);
        let (ys, ny) = self.touching(j);
        let mut inside = 0;
        for &cx in &xs[..nx] {
            for &cy in &ys[..ny] {
                if (self.contains)(cx, cy) {
                    inside += 1;
                }
            }
        }
        inside > 0 && inside < nx * ny
    }

    /// True if `(i, j)` touches a boundary segment running in the `x₂`
    /// direction (a segment with normal `±e₁`).
    pub(crate) fn on_vertical_segment(&self, (i, j): (usize, usize)) -> bool {
        if i % self.m != 0 {
            return false;
        }
        let x = (i / self.m) as isize;
        let (ys, ny) = self.touching(j);
        ys[..ny]
            .iter()
            .any(|&cy| (self.contains)(x - 1, cy) != (self.contains)(x, cy))
    }

    pub(crate) fn on_horizontal_segment(&self, (i, j): (usize, usize)) -> bool {
        if j % self.m != 0 {
            return false;
        }
        let y = (j / self.m) as isize;
        let (xs, nx) = self.touching(i);
        xs[..nx]
            .iter()
            .any(|&cx| (self.contains)(cx, y - 1) != (self.contains)(cx, y))
    }
}

struct Draft {
    cells: Vec<(usize, usize)>,
    children: Option<(usize, usize, Orientation)>,
}

fn bbox(cells: &[(usize, usize)]) -> (usize, usize, usize, usize) {
    let x0 = cells.iter().map(|c| c.0).min().unwrap();
    let x1 = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let y0 = cells.iter().map(|c| c.1).min().unwrap();
    let y1 = cells.iter().map(|c| c.1).max().unwrap() + 1;
    (x0, x1, y0, y1)
}

type Cells = Vec<(usize, usize)>;

/// Bisects a cell set across its longer axis (ties: first axis), falling back
/// to the other axis if the halves would be empty or disconnected.
fn bisect(cells: &[(usize, usize)]) -> Result<(Cells, Cells, Orientation)> {
    let (x0, x1, y0, y1) = bbox(cells);
    let (w, h) = (x1 - x0, y1 - y0);
    let axes = if w >= h { [0usize, 1] } else { [1, 0] };
    for axis in axes {
        let (lo, len) = if axis == 0 { (x0, w) } else { (y0, h) };
        if len < 2 {
            continue;
        }
        let mid = lo + len / 2;
        let (a, b): (Vec<_>, Vec<_>) = cells
            .iter()
            .partition(|c| if axis == 0 { c.0 < mid } else { c.1 < mid });
        if !a.is_empty() && !b.is_empty() && connected(&a) && connected(&b) {
            let o = if axis == 0 {
                Orientation::Vertical
            } else {
                Orientation::Horizontal
            };
            return Ok((a, b, o));
        }
    }
    Err(HpsError::UndecomposableLayout(format!(
        "cells in bounding box x∈[{x0},{x1}) y∈[{y0},{y1}) admit no connected bisection"
    )))
}

/// Builds the merge tree: recursive bisection, breadth-first numbering from
/// the root (id 1), then index vectors and merge partitions bottom-up.
pub fn build_tree(spec: &DomainSpec, mesh: &GlobalMesh) -> Result<Vec<TreeNode>> {
    spec.validate()?;
    let mut drafts = vec![Draft {
        cells: spec.cells(),
        children: None,
    }];
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        if drafts[i].cells.len() == 1 {
            continue;
        }
        let (a, b, o) = bisect(&drafts[i].cells)?;
        let ia = drafts.len();
        drafts.push(Draft { cells: a, children: None });
        drafts.push(Draft { cells: b, children: None });
        drafts[i].children = Some((ia, ia + 1, o));
        stack.push(ia);
        stack.push(ia + 1);
    }

    // Breadth-first renumbering.
    let mut order = Vec::with_capacity(drafts.len());
    let mut new_id = vec![0usize; drafts.len()];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        new_id[i] = order.len() + 1;
        order.push(i);
        if let Some((a, b, _)) = drafts[i].children {
            queue.push_back(a);
            queue.push_back(b);
        }
    }

    let leaf_index = |cell: (usize, usize)| mesh.leaf_cells.binary_search(&cell).ok();
    let mut nodes: Vec<TreeNode> = order
        .iter()
        .map(|&i| {
            let d = &drafts[i];
            let (x0, x1, y0, y1) = bbox(&d.cells);
            let f = |c: usize, o: f64| o + c as f64 * spec.h;
            TreeNode {
                id: new_id[i],
                parent: None,
                children: d.children.map(|(a, b, _)| (new_id[a], new_id[b])),
                cells: d.cells.clone(),
                extent: [
                    [f(x0, spec.origin[0]), f(x1, spec.origin[0])],
                    [f(y0, spec.origin[1]), f(y1, spec.origin[1])],
                ],
                orientation: d.children.map(|(_, _, o)| o),
                leaf: if d.children.is_none() {
                    leaf_index(d.cells[0])
                } else {
                    None
                },
                ext: Vec::new(),
                int: Vec::new(),
                partition: None,
                level: 0,
            }
        })
        .collect();
    for idx in 0..nodes.len() {
        if let Some((a, b)) = nodes[idx].children {
            let id = nodes[idx].id;
            let level = nodes[idx].level + 1;
            for c in [a, b] {
                nodes[c - 1].parent = Some(id);
                nodes[c - 1].level = level;
            }
        }
    }

    let grid_ext_int = local_partition(spec.p);
    for idx in (0..nodes.len()).rev() {
        if nodes[idx].is_leaf() {
            let leaf = nodes[idx].leaf.ok_or_else(|| {
                HpsError::InconsistentChildren {
                    node: nodes[idx].id,
                    reason: "leaf cell missing from mesh".into(),
                }
            })?;
            let map = &mesh.leaf_maps[leaf];
            nodes[idx].ext = grid_ext_int.0.iter().map(|&k| map[k]).collect();
            nodes[idx].int = grid_ext_int.1.iter().map(|&k| map[k]).collect();
            debug_assert!(nodes[idx].ext.windows(2).all(|w| w[0] < w[1]));
        } else {
            let part = partition_interface(&nodes, idx, mesh)?;
            let mut ext: Vec<usize> = part
                .i1
                .iter()
                .chain(&part.i2)
                .chain(&part.i3)
                .copied()
                .collect();
            ext.sort_unstable();
            nodes[idx].ext = ext;
            nodes[idx].int = part.i4.clone();
            nodes[idx].partition = Some(part);
        }
    }
    Ok(nodes)
}

/// Local boundary/interior index lists of a `p × p` grid, in the same order as
/// [`TensorGrid`].
pub(crate) fn local_partition(p: usize) -> (Vec<usize>, Vec<usize>) {
    let on_edge = |k: usize| {
        let (i, j) = (k / p, k % p);
        i == 0 || j == 0 || i == p - 1 || j == p - 1
    };
    let mut ext = Vec::with_capacity(4 * p - 4);
    for i in (0..p).rev() {
        for j in (0..p).rev() {
            if on_edge(i * p + j) {
                ext.push(i * p + j);
            }
        }
    }
    let int = (0..p * p).filter(|&k| !on_edge(k)).collect();
    (ext, int)
}

/// Splits the children's boundary nodes of parent `nodes[idx]` into
/// `I1..I4`. Children must already carry their `ext` lists.
pub fn partition_interface(nodes: &[TreeNode], idx: usize, mesh: &GlobalMesh) -> Result<Partition> {
    let parent = &nodes[idx];
    let (a, b) = parent.children.ok_or_else(|| HpsError::InconsistentChildren {
        node: parent.id,
        reason: "not a parent".into(),
    })?;
    let (ea, eb) = (&nodes[a - 1].ext, &nodes[b - 1].ext);
    if ea.is_empty() || eb.is_empty() {
        return Err(HpsError::InconsistentChildren {
            node: parent.id,
            reason: "children have no boundary index vectors".into(),
        });
    }
    let contains = |cx: isize, cy: isize| parent.contains_cell(cx, cy);
    let region = CellRegion::new(mesh.p, &contains);

    let mut part = Partition::default();
    let (mut i, mut j) = (0, 0);
    while i < ea.len() || j < eb.len() {
        match (ea.get(i), eb.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                if region.on_boundary(mesh.lattice[x]) {
                    part.i3.push(x);
                } else {
                    part.i4.push(x);
                }
                i += 1;
                j += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                part.i1.push(x);
                i += 1;
            }
            (Some(_), Some(&y)) => {
                part.i2.push(y);
                j += 1;
            }
            (Some(&x), None) => {
                part.i1.push(x);
                i += 1;
            }
            (None, Some(&y)) => {
                part.i2.push(y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if part.i4.is_empty() {
        return Err(HpsError::InconsistentChildren {
            node: parent.id,
            reason: "children share no interface interior".into(),
        });
    }
    for &x in part.i1.iter().chain(&part.i2) {
        if !region.on_boundary(mesh.lattice[x]) {
            return Err(HpsError::InconsistentChildren {
                node: parent.id,
                reason: format!("exclusive node {x} is interior to the union"),
            });
        }
    }
    Ok(part)
}

/// Mesh, tree and layout bundled together.
#[derive(Clone, Debug)]
pub struct SolverTree {
    pub spec: DomainSpec,
    pub mesh: GlobalMesh,
    pub nodes: Vec<TreeNode>,
}

impl SolverTree {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        let mesh = build_mesh(&spec)?;
        let nodes = build_tree(&spec, &mesh)?;
        Ok(Self { spec, mesh, nodes })
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id - 1]
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Boundary `Γ` of the whole domain (global indices, sorted).
    pub fn boundary(&self) -> &[usize] {
        &self.nodes[0].ext
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// A reference leaf grid (all leaves share it up to translation).
    pub fn leaf_grid(&self) -> Result<TensorGrid> {
        TensorGrid::new(self.spec.p, 0.5 * self.spec.h, [0.5 * self.spec.h, 0.5 * self.spec.h])
    }

    /// Boundary nodes of `node` lying on a boundary segment with normal
    /// `±e₁` (`vertical = true`) or `±e₂`, as positions into `node.ext`.
    pub fn normal_rows(&self, node: &TreeNode, vertical: bool) -> Vec<usize> {
        let contains = |cx: isize, cy: isize| node.contains_cell(cx, cy);
        let region = CellRegion::new(self.spec.p, &contains);
        node.ext
            .iter()
            .enumerate()
            .filter(|(_, &g)| {
                let l = self.mesh.lattice[g];
                if vertical {
                    region.on_vertical_segment(l)
                } else {
                    region.on_horizontal_segment(l)
                }
            })
            .map(|(pos, _)| pos)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_count(n: usize, p: usize) -> usize {
        let m = n * (p - 1);
        m * m + 2 * m + 1
    }

    #[test]
    fn mesh_sizes() {
        assert_eq!(build_mesh(&DomainSpec::unit_square(5, 1)).unwrap().len(), 25);
        assert_eq!(build_mesh(&DomainSpec::unit_square(21, 4)).unwrap().len(), 6561);
        assert_eq!(build_mesh(&DomainSpec::unit_square(3, 2)).unwrap().len(), 25);
        for (n, p) in [(2, 6), (4, 11), (8, 5)] {
            assert_eq!(build_mesh(&DomainSpec::unit_square(p, n)).unwrap().len(), square_count(n, p));
        }
    }

    #[test]
    fn mesh_shares_interface_nodes() {
        let spec = DomainSpec::unit_square(6, 2);
        let mesh = build_mesh(&spec).unwrap();
        // the centre node is shared by all four leaves
        let centre = mesh.nearest([0.5, 0.5]).0;
        let owners = mesh.leaf_maps.iter().filter(|m| m.contains(&centre)).count();
        assert_eq!(owners, 4);
        assert_eq!(mesh.coords[centre], [0.5, 0.5]);
        // every leaf map is a bijection onto p² distinct nodes
        for map in &mesh.leaf_maps {
            let mut v = map.clone();
            v.sort();
            v.dedup();
            assert_eq!(v.len(), 36);
        }
    }

    #[test]
    fn leaf_map_matches_grid_coordinates() {
        let spec = DomainSpec::unit_square(7, 3);
        let mesh = build_mesh(&spec).unwrap();
        for (leaf, &(cx, cy)) in mesh.leaf_cells.iter().enumerate() {
            let h = spec.h;
            let g = TensorGrid::new(7, h / 2.0, [(cx as f64 + 0.5) * h, (cy as f64 + 0.5) * h]).unwrap();
            for k in 0..49 {
                let a = mesh.coords[mesh.leaf_maps[leaf][k]];
                let b = g.nodes[k];
                assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn four_by_four_tree() {
        let t = SolverTree::new(DomainSpec::unit_square(5, 4)).unwrap();
        assert_eq!(t.nodes.len(), 31);
        assert_eq!(t.nodes.iter().filter(|n| n.is_leaf()).count(), 16);
        assert_eq!(t.root().id, 1);
        for n in &t.nodes {
            if let Some(p) = n.parent {
                assert!(p < n.id);
            }
        }
        assert_eq!(t.depth(), 4);
        assert!(t.nodes.iter().filter(|n| n.is_leaf()).all(|n| n.level == 4));
    }

    #[test]
    fn stacked_pair_is_horizontal() {
        let t = SolverTree::new(DomainSpec::rectangle(5, 1, 2, 0.5)).unwrap();
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.root().orientation, Some(Orientation::Horizontal));
    }

    #[test]
    fn side_by_side_partition_counts() {
        for (p, i1, i3, i4) in [(21, 59, 2, 19), (3, 5, 2, 1)] {
            let t = SolverTree::new(DomainSpec::rectangle(p, 2, 1, 1.0)).unwrap();
            let root = t.root();
            assert_eq!(root.orientation, Some(Orientation::Vertical));
            let part = root.partition.as_ref().unwrap();
            assert_eq!(part.i1.len(), i1);
            assert_eq!(part.i2.len(), i1);
            assert_eq!(part.i3.len(), i3);
            assert_eq!(part.i4.len(), i4);
            assert_eq!(root.int, part.i4);
        }
    }

    #[test]
    fn l_shape_merge_puts_reentrant_corner_in_i3() {
        let spec = DomainSpec::from_mask(3, 2, 2, vec![true, true, true, false], 1.0);
        let t = SolverTree::new(spec).unwrap();
        assert_eq!(t.nodes.iter().filter(|n| n.is_leaf()).count(), 3);
        assert_eq!(t.nodes.len(), 5);
        let root = t.root();
        assert_eq!(root.orientation, Some(Orientation::Vertical));
        let (a, b) = root.children.unwrap();
        assert_eq!(t.node(a).extent, [[0.0, 1.0], [0.0, 2.0]]);
        assert_eq!(t.node(b).extent, [[1.0, 2.0], [0.0, 1.0]]);
        let part = root.partition.as_ref().unwrap();
        let corner = t.mesh.nearest([1.0, 1.0]).0;
        assert!(part.i3.contains(&corner));
        let coords: Vec<[f64; 2]> = part.i3.iter().map(|&g| t.mesh.coords[g]).collect();
        assert_eq!(coords, vec![[1.0, 0.0], [1.0, 1.0]]);
        assert_eq!(part.i4.len(), 1);
    }

    #[test]
    fn undecomposable_layout_rejected() {
        let spec = DomainSpec::from_mask(4, 2, 2, vec![true, false, false, true], 1.0);
        assert!(matches!(
            SolverTree::new(spec),
            Err(HpsError::UndecomposableLayout(_))
        ));
    }

    #[test]
    fn interior_sets_are_disjoint_and_cover_non_boundary_nodes() {
        for spec in [
            DomainSpec::unit_square(6, 4),
            DomainSpec::l_shape(5, 2),
            DomainSpec::rectangle(4, 3, 2, 0.5),
        ] {
            let t = SolverTree::new(spec).unwrap();
            let mut seen = vec![0u8; t.mesh.len()];
            for &g in t.boundary() {
                seen[g] += 1;
            }
            for n in &t.nodes {
                for &g in &n.int {
                    seen[g] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn parent_ext_is_union_of_i1_i2_i3() {
        let t = SolverTree::new(DomainSpec::unit_square(5, 4)).unwrap();
        for n in t.nodes.iter().filter(|n| !n.is_leaf()) {
            let part = n.partition.as_ref().unwrap();
            let mut u: Vec<usize> = part.i1.iter().chain(&part.i2).chain(&part.i3).copied().collect();
            u.sort();
            assert_eq!(u, n.ext);
            if n.cells.len() > 1 {
                assert_eq!(part.i3.len(), 2);
            }
        }
    }

    #[test]
    fn l_shape_area_and_count() {
        let spec = DomainSpec::l_shape(11, 8);
        assert_eq!(spec.leaf_count() as f64 * spec.h * spec.h, 3.0);
        let mesh = build_mesh(&spec).unwrap();
        let m = 80;
        assert_eq!(mesh.len(), 3 * m * m + 4 * m + 1);
    }

    #[test]
    fn normal_rows_of_a_leaf() {
        let t = SolverTree::new(DomainSpec::unit_square(21, 1)).unwrap();
        let root = t.root();
        assert_eq!(root.ext.len(), 80);
        assert_eq!(t.normal_rows(root, true).len(), 42);
        assert_eq!(t.normal_rows(root, false).len(), 42);
    }
}
