//! Upward pre-computation sweep, downward solve sweep, the dense reference
//! solver, error metrics and operator-tree persistence.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use faer::{Col, Mat};
use rayon::prelude::*;

use crate::error::{HpsError, Result};
use crate::geometry::{DomainSpec, Orientation, SolverTree};
use crate::hps::{leaf_factor, merge, DtnRows, FactorOptions, MergeMaps, OperatorTriple, RowSelection};
use crate::linalg::Factored;
use crate::pde::{assemble_rows, EllipticOperator, Problem, ReferenceSolution};
use crate::spectral::TensorGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverOptions {
    pub factor: FactorOptions,
    /// Keep only the derivative rows later merges or the root actually use.
    pub restrict_rows: bool,
}

/// Result of the pre-computation: every solution operator plus the root's
/// boundary derivative operators.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub tree: SolverTree,
    /// `U` per node, indexed by `id − 1`.
    pub u: Vec<Mat<f64>>,
    pub root_v: DtnRows,
    pub root_w: DtnRows,
    /// Reciprocal condition estimate per node, indexed by `id − 1`.
    pub rcond: Vec<f64>,
    /// Seconds spent in the pre-computation sweep.
    pub t_inv: f64,
    pub restrict_rows: bool,
}

impl SolverState {
    /// Bytes held by the retained operators.
    pub fn memory_bytes(&self) -> usize {
        let entries: usize = self.u.iter().map(|m| m.nrows() * m.ncols()).sum::<usize>()
            + self.root_v.mat.nrows() * self.root_v.mat.ncols()
            + self.root_w.mat.nrows() * self.root_w.mat.ncols();
        entries * std::mem::size_of::<f64>()
    }

    /// Retained reals per degree of freedom.
    pub fn reals_per_dof(&self) -> f64 {
        (self.memory_bytes() / std::mem::size_of::<f64>()) as f64 / self.tree.mesh.len() as f64
    }

    pub fn min_rcond(&self) -> f64 {
        self.rcond.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_leaf_rcond(&self) -> f64 {
        self.min_rcond_where(true)
    }

    pub fn min_merge_rcond(&self) -> f64 {
        self.min_rcond_where(false)
    }

    fn min_rcond_where(&self, leaves: bool) -> f64 {
        self.tree
            .nodes
            .iter()
            .filter(|n| n.is_leaf() == leaves)
            .map(|n| self.rcond[n.id - 1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Coordinates of the boundary nodes, in boundary order.
    pub fn boundary_points(&self) -> Vec<[f64; 2]> {
        self.tree.boundary().iter().map(|&g| self.tree.mesh.coords[g]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    /// Values at every mesh node, in global order.
    pub u: Vec<f64>,
    /// `∂₁u` at the boundary nodes, in boundary order.
    pub v_bnd: Vec<f64>,
    /// `∂₂u` at the boundary nodes.
    pub w_bnd: Vec<f64>,
    pub t_solve: f64,
}

fn leaf_points(tree: &SolverTree, leaf: usize) -> Vec<[f64; 2]> {
    tree.mesh.leaf_maps[leaf].iter().map(|&g| tree.mesh.coords[g]).collect()
}

fn leaf_interior_rows(tree: &SolverTree, grid: &TensorGrid, op: &EllipticOperator, leaf: usize) -> Result<Mat<f64>> {
    assemble_rows(grid, op, &leaf_points(tree, leaf), &grid.int)
}

fn merge_maps(tree: &SolverTree) -> Result<Vec<Option<MergeMaps>>> {
    tree.nodes
        .iter()
        .map(|n| match (n.children, &n.partition) {
            (Some((a, b)), Some(part)) => MergeMaps::new(&n.ext, &tree.node(a).ext, &tree.node(b).ext, part)
                .map(Some)
                .map_err(|e| match e {
                    HpsError::InconsistentChildren { reason, .. } => HpsError::InconsistentChildren { node: n.id, reason },
                    other => other,
                }),
            _ => Ok(None),
        })
        .collect()
}

/// Derivative rows each node must produce: what its parent reads from it
/// plus the interface rows of its own merge. The root keeps everything.
fn demanded_rows(tree: &SolverTree, maps: &[Option<MergeMaps>]) -> Vec<RowSelection> {
    let mut need: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new()); tree.nodes.len()];
    let root_len = tree.root().ext.len();
    need[0] = ((0..root_len).collect(), (0..root_len).collect());
    for node in &tree.nodes {
        let (Some((a, b)), Some(m)) = (node.children, &maps[node.id - 1]) else {
            continue;
        };
        let (pv, pw) = need[node.id - 1].clone();
        let mut push = |rows: &[usize], into_v: bool| {
            for &r in rows {
                let (sa, sb) = match m.parent_source[r] {
                    crate::hps::Source::Alpha(x) => (Some(x), None),
                    crate::hps::Source::Beta(y) => (None, Some(y)),
                    crate::hps::Source::Both(x, y) => (Some(x), Some(y)),
                };
                for (child, pos) in [(a, sa), (b, sb)] {
                    if let Some(pos) = pos {
                        let slot = &mut need[child - 1];
                        if into_v {
                            slot.0.push(pos);
                        } else {
                            slot.1.push(pos);
                        }
                    }
                }
            }
        };
        push(&pv, true);
        push(&pw, false);
        let vertical = node.orientation == Some(Orientation::Vertical);
        for (child, rows) in [(a, &m.a4), (b, &m.b4)] {
            let slot = &mut need[child - 1];
            if vertical {
                slot.0.extend_from_slice(rows);
            } else {
                slot.1.extend_from_slice(rows);
            }
        }
    }
    need.into_iter()
        .map(|(mut v, mut w)| {
            v.sort_unstable();
            v.dedup();
            w.sort_unstable();
            w.dedup();
            RowSelection { v: Some(v), w: Some(w) }
        })
        .collect()
}

/// Builds every node's operators from the leaves up.
pub fn precompute(tree: SolverTree, op: &EllipticOperator, opts: &SolverOptions) -> Result<SolverState> {
    let maps = merge_maps(&tree)?;
    let grid = tree.leaf_grid()?;
    let selections = if opts.restrict_rows {
        demanded_rows(&tree, &maps)
    } else {
        vec![RowSelection::all(); tree.nodes.len()]
    };

    let start = Instant::now();
    let depth = tree.depth();
    let mut active: Vec<Option<OperatorTriple>> = vec![None; tree.nodes.len()];
    let mut u: Vec<Option<Mat<f64>>> = vec![None; tree.nodes.len()];
    let mut rcond = vec![f64::NAN; tree.nodes.len()];

    for level in (0..=depth).rev() {
        let ids: Vec<usize> = tree.nodes.iter().filter(|n| n.level == level).map(|n| n.id).collect();
        let built: Vec<(usize, OperatorTriple)> = ids
            .par_iter()
            .map(|&id| -> Result<(usize, OperatorTriple)> {
                let node = tree.node(id);
                let select = &selections[id - 1];
                let triple = match node.children {
                    None => {
                        let leaf = node.leaf.expect("leaf node carries a leaf index");
                        let a = leaf_interior_rows(&tree, &grid, op, leaf)?;
                        leaf_factor(a.as_ref(), &grid, select, id, &opts.factor)?
                    }
                    Some((a, b)) => {
                        let (ta, tb) = (active[a - 1].as_ref(), active[b - 1].as_ref());
                        let (Some(ta), Some(tb)) = (ta, tb) else {
                            return Err(HpsError::InconsistentChildren {
                                node: id,
                                reason: "child operators missing".into(),
                            });
                        };
                        let m = maps[id - 1].as_ref().expect("parent has merge maps");
                        let o = node.orientation.expect("parent has an orientation");
                        merge(ta, tb, m, o, select, id, &opts.factor)?
                    }
                };
                Ok((id, triple))
            })
            .collect::<Result<Vec<_>>>()?;
        for (id, triple) in built {
            if let Some((a, b)) = tree.node(id).children {
                for c in [a, b] {
                    if let Some(t) = active[c - 1].take() {
                        u[c - 1] = Some(t.u);
                    }
                }
            }
            rcond[id - 1] = triple.rcond;
            active[id - 1] = Some(triple);
        }
    }
    let root = active[0].take().expect("root operators built");
    u[0] = Some(root.u);
    let t_inv = start.elapsed().as_secs_f64();

    Ok(SolverState {
        u: u.into_iter().map(|m| m.expect("every node retains U")).collect(),
        root_v: root.v,
        root_w: root.w,
        rcond,
        t_inv,
        restrict_rows: opts.restrict_rows,
        tree,
    })
}

/// Solves for Dirichlet data `f` given in boundary order.
pub fn solve(state: &SolverState, f: &[f64]) -> Result<Solution> {
    let tree = &state.tree;
    let gamma = tree.boundary();
    if f.len() != gamma.len() {
        return Err(HpsError::DimensionMismatch {
            expected: gamma.len(),
            got: f.len(),
        });
    }
    let start = Instant::now();
    let mut u = vec![0.0; tree.mesh.len()];
    for (&g, &v) in gamma.iter().zip(f) {
        u[g] = v;
    }
    for node in &tree.nodes {
        let ue = Col::<f64>::from_fn(node.ext.len(), |k| u[node.ext[k]]);
        let ui = &state.u[node.id - 1] * &ue;
        for (k, &g) in node.int.iter().enumerate() {
            u[g] = ui[k];
        }
    }
    let v_bnd = state.root_v.apply(f);
    let w_bnd = state.root_w.apply(f);
    let t_solve = start.elapsed().as_secs_f64();
    Ok(Solution { u, v_bnd, w_bnd, t_solve })
}

/// Samples the problem's boundary data on `Γ`.
pub fn boundary_data(tree: &SolverTree, problem: &Problem) -> Vec<f64> {
    tree.boundary().iter().map(|&g| (problem.boundary)(tree.mesh.coords[g])).collect()
}

/// Leaf weights with which derivative rows at global node `g` enter node
/// `id`'s boundary operator.
fn derivative_weights(tree: &SolverTree, id: usize, g: usize, scale: f64, out: &mut Vec<(usize, f64)>) {
    let node = tree.node(id);
    match node.children {
        None => out.push((node.leaf.expect("leaf index"), scale)),
        Some((a, b)) => {
            let in_a = tree.node(a).ext.binary_search(&g).is_ok();
            let in_b = tree.node(b).ext.binary_search(&g).is_ok();
            match (in_a, in_b) {
                (true, true) => {
                    derivative_weights(tree, a, g, 0.5 * scale, out);
                    derivative_weights(tree, b, g, 0.5 * scale, out);
                }
                (true, false) => derivative_weights(tree, a, g, scale, out),
                (false, true) => derivative_weights(tree, b, g, scale, out),
                (false, false) => {}
            }
        }
    }
}

/// Direct solve of the full composite collocation system: interior
/// equations on every leaf, flux continuity at every interface node (with
/// the same averaging the merges apply), Dirichlet rows on `Γ`.
pub fn dense_oracle(tree: &SolverTree, op: &EllipticOperator, f: &[f64]) -> Result<Solution> {
    let gamma = tree.boundary();
    if f.len() != gamma.len() {
        return Err(HpsError::DimensionMismatch {
            expected: gamma.len(),
            got: f.len(),
        });
    }
    let start = Instant::now();
    let n = tree.mesh.len();
    let grid = tree.leaf_grid()?;
    let local_index = |leaf: usize, g: usize| -> usize {
        tree.mesh.leaf_maps[leaf].iter().position(|&x| x == g).expect("node lies on leaf")
    };
    let mut a = Mat::<f64>::zeros(n, n);
    let mut rhs = Col::<f64>::zeros(n);

    for (&g, &v) in gamma.iter().zip(f) {
        a[(g, g)] = 1.0;
        rhs[g] = v;
    }
    for leaf in 0..tree.mesh.leaf_maps.len() {
        let rows = leaf_interior_rows(tree, &grid, op, leaf)?;
        let map = &tree.mesh.leaf_maps[leaf];
        for (r, &k) in grid.int.iter().enumerate() {
            for j in 0..map.len() {
                a[(map[k], map[j])] += rows[(r, j)];
            }
        }
    }
    let add_derivative = |a: &mut Mat<f64>, row: usize, d: &Mat<f64>, weights: &[(usize, f64)], sign: f64, g: usize| {
        for &(leaf, w) in weights {
            let k = local_index(leaf, g);
            let map = &tree.mesh.leaf_maps[leaf];
            for j in 0..map.len() {
                a[(row, map[j])] += sign * w * d[(k, j)];
            }
        }
    };
    for node in tree.nodes.iter().filter(|n| !n.is_leaf()) {
        let (ca, cb) = node.children.expect("parent");
        let d = match node.orientation.expect("parent orientation") {
            Orientation::Vertical => &grid.d,
            Orientation::Horizontal => &grid.e,
        };
        for &g in &node.int {
            let (mut wa, mut wb) = (Vec::new(), Vec::new());
            derivative_weights(tree, ca, g, 1.0, &mut wa);
            derivative_weights(tree, cb, g, 1.0, &mut wb);
            add_derivative(&mut a, g, d, &wa, 1.0, g);
            add_derivative(&mut a, g, d, &wb, -1.0, g);
        }
    }
    let lu = Factored::new(a.as_ref());
    if !(lu.rcond.is_finite() && lu.rcond > f64::EPSILON) {
        return Err(HpsError::SingularSystem { rcond: lu.rcond });
    }
    let sol = lu.solve_col(&rhs);
    let mut u: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    for (&g, &v) in gamma.iter().zip(f) {
        u[g] = v;
    }

    let mut v_bnd = Vec::with_capacity(gamma.len());
    let mut w_bnd = Vec::with_capacity(gamma.len());
    for &g in gamma {
        let mut weights = Vec::new();
        derivative_weights(tree, 1, g, 1.0, &mut weights);
        let mut dv = 0.0;
        let mut dw = 0.0;
        for &(leaf, w) in &weights {
            let k = local_index(leaf, g);
            let map = &tree.mesh.leaf_maps[leaf];
            for j in 0..map.len() {
                dv += w * grid.d[(k, j)] * u[map[j]];
                dw += w * grid.e[(k, j)] * u[map[j]];
            }
        }
        v_bnd.push(dv);
        w_bnd.push(dw);
    }
    Ok(Solution {
        u,
        v_bnd,
        w_bnd,
        t_solve: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    /// Max error of `u` over all mesh nodes.
    pub e_pot: f64,
    /// Max error of either gradient component over `Γ`.
    pub e_grad: f64,
}

pub fn error_metrics(tree: &SolverTree, solution: &Solution, reference: &dyn ReferenceSolution) -> Result<ErrorMetrics> {
    let mut e_pot = 0.0f64;
    for (g, x) in tree.mesh.coords.iter().enumerate() {
        e_pot = e_pot.max((solution.u[g] - reference.value(*x)?).abs());
    }
    let mut e_grad = 0.0f64;
    for (k, &g) in tree.boundary().iter().enumerate() {
        let grad = reference.gradient(tree.mesh.coords[g])?;
        e_grad = e_grad
            .max((solution.v_bnd[k] - grad[0]).abs())
            .max((solution.w_bnd[k] - grad[1]).abs());
    }
    Ok(ErrorMetrics { e_pot, e_grad })
}

/// Global index of the mesh node nearest `x`. With `tolerance` set, a probe
/// farther than that from every node is an error instead of being snapped.
pub fn snap_probe(tree: &SolverTree, x: [f64; 2], tolerance: Option<f64>) -> Result<usize> {
    let (g, dist) = tree.mesh.nearest(x);
    match tolerance {
        Some(tol) if dist > tol => Err(HpsError::ProbeNotOnMesh { point: x, distance: dist }),
        _ => Ok(g),
    }
}

/// Position of a boundary probe within `Γ`.
pub fn snap_boundary_probe(tree: &SolverTree, x: [f64; 2], tolerance: Option<f64>) -> Result<usize> {
    let gamma = tree.boundary();
    let mut best = (0, f64::INFINITY);
    for (k, &g) in gamma.iter().enumerate() {
        let c = tree.mesh.coords[g];
        let d = (c[0] - x[0]).hypot(c[1] - x[1]);
        if d < best.1 {
            best = (k, d);
        }
    }
    match tolerance {
        Some(tol) if best.1 > tol => Err(HpsError::ProbeNotOnMesh { point: x, distance: best.1 }),
        _ => Ok(best.0),
    }
}

/// One refinement level of a pointwise convergence study.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dofs: usize,
    pub u_interior: f64,
    pub w_boundary: f64,
    /// `u_N(x̂) − u_{4N}(x̂)`; absent on the finest level.
    pub e_int: Option<f64>,
    /// `w_N(ŷ) − w_{4N}(ŷ)`; absent on the finest level.
    pub e_bnd: Option<f64>,
}

/// Probe values of one run: `u` at the interior probe and `∂₂u` at the
/// boundary probe.
pub fn probe_values(
    state: &SolverState,
    solution: &Solution,
    interior: [f64; 2],
    boundary: [f64; 2],
    tolerance: Option<f64>,
) -> Result<(f64, f64)> {
    let gi = snap_probe(&state.tree, interior, tolerance)?;
    let kb = snap_boundary_probe(&state.tree, boundary, tolerance)?;
    Ok((solution.u[gi], solution.w_bnd[kb]))
}

/// Builds, pre-computes and solves one problem instance.
pub fn run_problem(problem: &Problem, spec: DomainSpec, opts: &SolverOptions) -> Result<(SolverState, Solution)> {
    let tree = SolverTree::new(spec)?;
    let f = boundary_data(&tree, problem);
    let state = precompute(tree, &problem.operator, opts)?;
    let solution = solve(&state, &f)?;
    Ok((state, solution))
}

/// Runs `make_problem(n)` for each `n` and differences successive probe
/// values.
pub fn pointwise_convergence(
    make_problem: impl Fn(usize) -> Problem,
    p: usize,
    ns: &[usize],
    interior: [f64; 2],
    boundary: [f64; 2],
    tolerance: Option<f64>,
    opts: &SolverOptions,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let problem = make_problem(n);
        let spec = DomainSpec::for_shape(problem.shape, p, n);
        let (state, sol) = run_problem(&problem, spec, opts)?;
        let (ui, wb) = probe_values(&state, &sol, interior, boundary, tolerance)?;
        rows.push(ConvergenceRow {
            n,
            dofs: state.tree.mesh.len(),
            u_interior: ui,
            w_boundary: wb,
            e_int: None,
            e_bnd: None,
        });
    }
    difference_rows(&mut rows);
    Ok(rows)
}

/// Fills `e_int`/`e_bnd` from successive probe values.
pub fn difference_rows(rows: &mut [ConvergenceRow]) {
    for i in 0..rows.len() {
        if i + 1 < rows.len() {
            rows[i].e_int = Some(rows[i].u_interior - rows[i + 1].u_interior);
            rows[i].e_bnd = Some(rows[i].w_boundary - rows[i + 1].w_boundary);
        } else {
            rows[i].e_int = None;
            rows[i].e_bnd = None;
        }
    }
}

const MAGIC: &[u8; 8] = b"HPSOPTS\0";
const FORMAT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| HpsError::Format(format!("value {v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_mat(w: &mut impl Write, m: &Mat<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(m.nrows() * m.ncols() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_mat(r: &mut impl Read, rows: usize, cols: usize) -> Result<Mat<f64>> {
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf)?;
    Ok(Mat::from_fn(rows, cols, |i, j| {
        let k = 8 * (i * cols + j);
        f64::from_le_bytes(buf[k..k + 8].try_into().expect("8 bytes"))
    }))
}

fn put_rows(w: &mut impl Write, d: &DtnRows) -> Result<()> {
    put_u32(w, d.rows.len())?;
    for &r in &d.rows {
        put_u32(w, r)?;
    }
    Ok(())
}

fn get_rows(r: &mut impl Read) -> Result<Vec<usize>> {
    let n = get_u32(r)?;
    (0..n).map(|_| get_u32(r)).collect()
}

impl SolverState {
    /// Writes the layout and all retained operators (little-endian).
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let spec = &self.tree.spec;
        w.write_all(MAGIC)?;
        put_u32(w, FORMAT_VERSION as usize)?;
        put_u32(w, spec.p)?;
        put_u32(w, spec.nx)?;
        put_u32(w, spec.ny)?;
        put_f64(w, spec.h)?;
        put_f64(w, spec.origin[0])?;
        put_f64(w, spec.origin[1])?;
        w.write_all(&spec.mask.iter().map(|&b| b as u8).collect::<Vec<u8>>())?;
        w.write_all(&[self.restrict_rows as u8])?;
        put_f64(w, self.t_inv)?;
        put_u32(w, self.u.len())?;
        for (m, rc) in self.u.iter().zip(&self.rcond) {
            put_u32(w, m.nrows())?;
            put_u32(w, m.ncols())?;
            put_f64(w, *rc)?;
        }
        put_rows(w, &self.root_v)?;
        put_rows(w, &self.root_w)?;
        for m in &self.u {
            put_mat(w, m)?;
        }
        put_mat(w, &self.root_v.mat)?;
        put_mat(w, &self.root_w.mat)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(HpsError::Format("not an operator file".into()));
        }
        let version = get_u32(r)?;
        if version != FORMAT_VERSION as usize {
            return Err(HpsError::Format(format!("unsupported format version {version}")));
        }
        let p = get_u32(r)?;
        let nx = get_u32(r)?;
        let ny = get_u32(r)?;
        let h = get_f64(r)?;
        let origin = [get_f64(r)?, get_f64(r)?];
        let mut mask = vec![0u8; nx * ny];
        r.read_exact(&mut mask)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let t_inv = get_f64(r)?;
        let spec = DomainSpec {
            p,
            nx,
            ny,
            mask: mask.into_iter().map(|b| b != 0).collect(),
            h,
            origin,
        };
        let tree = SolverTree::new(spec)?;
        let count = get_u32(r)?;
        if count != tree.nodes.len() {
            return Err(HpsError::Format(format!(
                "file has {count} nodes, layout implies {}",
                tree.nodes.len()
            )));
        }
        let mut shapes = Vec::with_capacity(count);
        let mut rcond = Vec::with_capacity(count);
        for node in &tree.nodes {
            let (rows, cols) = (get_u32(r)?, get_u32(r)?);
            if rows != node.int.len() || cols != node.ext.len() {
                return Err(HpsError::Format(format!("node {} has shape {rows}x{cols}", node.id)));
            }
            shapes.push((rows, cols));
            rcond.push(get_f64(r)?);
        }
        let vrows = get_rows(r)?;
        let wrows = get_rows(r)?;
        let m = tree.root().ext.len();
        if vrows.iter().chain(&wrows).any(|&x| x >= m) {
            return Err(HpsError::Format("root row index out of range".into()));
        }
        let u = shapes
            .iter()
            .map(|&(a, b)| get_mat(r, a, b))
            .collect::<Result<Vec<_>>>()?;
        let vmat = get_mat(r, vrows.len(), m)?;
        let wmat = get_mat(r, wrows.len(), m)?;
        Ok(Self {
            tree,
            u,
            root_v: DtnRows { rows: vrows, mat: vmat },
            root_w: DtnRows { rows: wrows, mat: wmat },
            rcond,
            t_inv,
            restrict_rows: flag[0] != 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{helmholtz_reference, HelmholtzProblem};

    fn state(spec: DomainSpec, op: &EllipticOperator) -> SolverState {
        precompute(SolverTree::new(spec).unwrap(), op, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn single_leaf_state() {
        let s = state(DomainSpec::unit_square(6, 1), &EllipticOperator::laplace());
        assert_eq!(s.u.len(), 1);
        assert_eq!((s.root_v.mat.nrows(), s.root_v.mat.ncols()), (20, 20));
        assert_eq!(s.memory_bytes(), 8 * (16 * 20 + 2 * 400));
    }

    #[test]
    fn laplace_constant_data() {
        let s = state(DomainSpec::unit_square(8, 4), &EllipticOperator::laplace());
        let f = vec![1.0; s.tree.boundary().len()];
        let sol = solve(&s, &f).unwrap();
        assert!(sol.u.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(sol.v_bnd.iter().chain(&sol.w_bnd).all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn boundary_values_are_assigned() {
        let s = state(DomainSpec::unit_square(5, 2), &HelmholtzProblem::new(3.0).operator());
        let f: Vec<f64> = (0..s.tree.boundary().len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let sol = solve(&s, &f).unwrap();
        for (k, &g) in s.tree.boundary().iter().enumerate() {
            assert_eq!(sol.u[g].to_bits(), f[k].to_bits());
        }
        assert!(matches!(solve(&s, &f[1..]), Err(HpsError::DimensionMismatch { .. })));
    }

    #[test]
    fn hierarchical_matches_dense_oracle() {
        let op = HelmholtzProblem::new(5.0).operator();
        let tree = SolverTree::new(DomainSpec::unit_square(8, 2)).unwrap();
        let f: Vec<f64> = (0..tree.boundary().len()).map(|k| (k as f64 * 1.3).cos()).collect();
        let oracle = dense_oracle(&tree, &op, &f).unwrap();
        let s = precompute(tree, &op, &SolverOptions::default()).unwrap();
        let sol = solve(&s, &f).unwrap();
        let scale = oracle.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = sol.u.iter().zip(&oracle.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-10 * scale, "{diff}");
        let gscale = oracle.v_bnd.iter().chain(&oracle.w_bnd).fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in sol.v_bnd.iter().chain(&sol.w_bnd).zip(oracle.v_bnd.iter().chain(&oracle.w_bnd)) {
            assert!((a - b).abs() <= 1e-10 * gscale);
        }
    }

    #[test]
    fn oracle_reproduces_harmonic_polynomial() {
        let tree = SolverTree::new(DomainSpec::unit_square(8, 2)).unwrap();
        let exact = |x: [f64; 2]| x[0] * x[0] - x[1] * x[1];
        let f: Vec<f64> = tree.boundary().iter().map(|&g| exact(tree.mesh.coords[g])).collect();
        let sol = dense_oracle(&tree, &EllipticOperator::laplace(), &f).unwrap();
        for (g, x) in tree.mesh.coords.iter().enumerate() {
            assert!((sol.u[g] - exact(*x)).abs() < 1e-11);
        }
    }

    #[test]
    fn restricted_rows_give_same_solution() {
        let op = HelmholtzProblem::new(7.0).operator();
        let spec = DomainSpec::l_shape(7, 2);
        let full = state(spec.clone(), &op);
        let tree = SolverTree::new(spec).unwrap();
        let lean = precompute(tree, &op, &SolverOptions { restrict_rows: true, ..Default::default() }).unwrap();
        assert!(lean.memory_bytes() <= full.memory_bytes());
        let f: Vec<f64> = (0..full.tree.boundary().len()).map(|k| 1.0 + (k as f64).sqrt().sin()).collect();
        let a = solve(&full, &f).unwrap();
        let b = solve(&lean, &f).unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn error_metrics_measure_max_deviation() {
        let kappa = 4.0;
        let s = state(DomainSpec::unit_square(12, 2), &HelmholtzProblem::new(kappa).operator());
        let reference = helmholtz_reference(kappa, [-0.2, 0.4]);
        let mut sol = Solution {
            u: s.tree.mesh.coords.iter().map(|&x| reference.value(x).unwrap()).collect(),
            v_bnd: s.boundary_points().iter().map(|&x| reference.gradient(x).unwrap()[0]).collect(),
            w_bnd: s.boundary_points().iter().map(|&x| reference.gradient(x).unwrap()[1]).collect(),
            t_solve: 0.0,
        };
        let m = error_metrics(&s.tree, &sol, &reference).unwrap();
        assert_eq!((m.e_pot, m.e_grad), (0.0, 0.0));
        let interior = s.tree.root().int[3];
        sol.u[interior] += 1e-3;
        let m = error_metrics(&s.tree, &sol, &reference).unwrap();
        assert!((m.e_pot - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn probes_snap_to_nodes() {
        let tree = SolverTree::new(DomainSpec::unit_square(21, 4)).unwrap();
        let g = snap_probe(&tree, [0.75, 0.25], Some(1e-14)).unwrap();
        assert_eq!(tree.mesh.coords[g], [0.75, 0.25]);
        let k = snap_boundary_probe(&tree, [0.75, 0.0], Some(0.0)).unwrap();
        assert_eq!(tree.mesh.coords[tree.boundary()[k]], [0.75, 0.0]);
        assert!(matches!(
            snap_probe(&tree, [0.7512, 0.25], Some(1e-6)),
            Err(HpsError::ProbeNotOnMesh { .. })
        ));
    }

    #[test]
    fn difference_of_converged_sequence_is_zero() {
        let row = |n| ConvergenceRow {
            n,
            dofs: 0,
            u_interior: 1.5,
            w_boundary: -2.0,
            e_int: None,
            e_bnd: None,
        };
        let mut rows = vec![row(2), row(4), row(8)];
        difference_rows(&mut rows);
        assert_eq!(rows[0].e_int, Some(0.0));
        assert_eq!(rows[1].e_bnd, Some(0.0));
        assert_eq!(rows[2].e_int, None);
    }

    #[test]
    fn serialization_round_trip() {
        let s = state(DomainSpec::l_shape(6, 1), &HelmholtzProblem::new(2.0).operator());
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let t = SolverState::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(s.u.len(), t.u.len());
        for (a, b) in s.u.iter().zip(&t.u) {
            assert_eq!(a, b);
        }
        assert_eq!(s.root_v.mat, t.root_v.mat);
        let f: Vec<f64> = (0..s.tree.boundary().len()).map(|k| k as f64).collect();
        assert_eq!(solve(&s, &f).unwrap().u, solve(&t, &f).unwrap().u);
        buf[0] = b'X';
        assert!(matches!(SolverState::read_from(&mut buf.as_slice()), Err(HpsError::Format(_))));
    }
}
