//! Leaf factorization and the pairwise merge of Dirichlet-to-Neumann pairs.

use faer::{Mat, MatRef};

use crate::error::{HpsError, Result};
use crate::geometry::{Orientation, Partition};
use crate::linalg::{gather, gather_rows, Factored};
use crate::spectral::TensorGrid;

/// Default lower bound on the reciprocal condition estimate.
pub const DEFAULT_RCOND_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorOptions {
    pub rcond_min: f64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            rcond_min: DEFAULT_RCOND_MIN,
        }
    }
}

/// Selected rows of a boundary derivative operator: row `k` of `mat` is the
/// full row for boundary position `rows[k]`.
#[derive(Clone, Debug)]
pub struct DtnRows {
    /// Positions into the node's boundary list, strictly increasing.
    pub rows: Vec<usize>,
    pub mat: Mat<f64>,
}

impl DtnRows {
    pub fn full(mat: Mat<f64>) -> Self {
        Self {
            rows: (0..mat.nrows()).collect(),
            mat,
        }
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.mat.ncols()
    }

    /// Row of `mat` holding boundary position `pos`.
    pub fn locate(&self, pos: usize) -> Option<usize> {
        self.rows.binary_search(&pos).ok()
    }

    /// Keeps only the listed boundary positions (which must be present).
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let local = self.locate_all(keep)?;
        Ok(Self {
            rows: keep.to_vec(),
            mat: gather_rows(self.mat.as_ref(), &local),
        })
    }

    fn locate_all(&self, positions: &[usize]) -> Result<Vec<usize>> {
        positions
            .iter()
            .map(|&p| {
                self.locate(p).ok_or_else(|| HpsError::InconsistentChildren {
                    node: 0,
                    reason: format!("derivative row for boundary position {p} was not retained"),
                })
            })
            .collect()
    }

    /// Applies the operator to boundary data, giving derivative values at the
    /// retained rows.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let x = faer::ColRef::from_slice(f);
        let y = &self.mat * x;
        (0..y.nrows()).map(|i| y[i]).collect()
    }
}

/// Solution operator and boundary derivative operators of one tree node.
#[derive(Clone, Debug)]
pub struct OperatorTriple {
    /// `|I_i| × |I_e|`: boundary values to interior values.
    pub u: Mat<f64>,
    /// Boundary values to `∂₁u` on the boundary.
    pub v: DtnRows,
    /// Boundary values to `∂₂u` on the boundary.
    pub w: DtnRows,
    pub rcond: f64,
}

impl OperatorTriple {
    pub fn normal(&self, orientation: Orientation) -> &DtnRows {
        match orientation {
            Orientation::Vertical => &self.v,
            Orientation::Horizontal => &self.w,
        }
    }

    pub fn boundary_len(&self) -> usize {
        self.u.ncols()
    }
}

/// Which derivative rows to produce; `None` means all.
#[derive(Clone, Debug, Default)]
pub struct RowSelection {
    pub v: Option<Vec<usize>>,
    pub w: Option<Vec<usize>>,
}

impl RowSelection {
    pub fn all() -> Self {
        Self::default()
    }
}

fn check_rcond(rcond: f64, opts: &FactorOptions) -> bool {
    rcond.is_finite() && rcond >= opts.rcond_min
}

/// Factors one leaf. `a_int` holds the interior rows of `A` (all `p²`
/// columns), in `grid.int` order.
pub fn leaf_factor(
    a_int: MatRef<'_, f64>,
    grid: &TensorGrid,
    select: &RowSelection,
    node: usize,
    opts: &FactorOptions,
) -> Result<OperatorTriple> {
    let n = grid.len();
    if a_int.nrows() != grid.int.len() || a_int.ncols() != n {
        return Err(HpsError::DimensionMismatch {
            expected: grid.int.len() * n,
            got: a_int.nrows() * a_int.ncols(),
        });
    }
    let local: Vec<usize> = (0..grid.int.len()).collect();
    let a_ii = gather(a_int, &local, &grid.int);
    let a_ie = gather(a_int, &local, &grid.ext);
    let lu = Factored::new(a_ii.as_ref());
    if !check_rcond(lu.rcond, opts) {
        return Err(HpsError::ResonantLeaf {
            node,
            rcond: lu.rcond,
            threshold: opts.rcond_min,
        });
    }
    let mut u = lu.solve(a_ie.as_ref());
    for j in 0..u.ncols() {
        for i in 0..u.nrows() {
            u[(i, j)] = -u[(i, j)];
        }
    }
    let derivative = |m: &Mat<f64>, sel: &Option<Vec<usize>>| -> DtnRows {
        let rows: Vec<usize> = sel.clone().unwrap_or_else(|| (0..grid.ext.len()).collect());
        let grid_rows: Vec<usize> = rows.iter().map(|&r| grid.ext[r]).collect();
        let mut out = gather(m.as_ref(), &grid_rows, &grid.ext);
        out += gather(m.as_ref(), &grid_rows, &grid.int) * &u;
        DtnRows { rows, mat: out }
    };
    let v = derivative(&grid.d, &select.v);
    let w = derivative(&grid.e, &select.w);
    Ok(OperatorTriple {
        u,
        v,
        w,
        rcond: lu.rcond,
    })
}

/// Where each parent boundary value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Alpha(usize),
    Beta(usize),
    Both(usize, usize),
}

/// Index bookkeeping for one merge, in terms of positions into the children's
/// and the parent's boundary lists.
#[derive(Clone, Debug)]
pub struct MergeMaps {
    /// Positions of the `I4` nodes in the first child's boundary list.
    pub a4: Vec<usize>,
    /// Positions of the `I4` nodes in the second child's boundary list.
    pub b4: Vec<usize>,
    /// First-child boundary position → parent boundary position (`None` on `I4`).
    pub alpha_to_parent: Vec<Option<usize>>,
    pub beta_to_parent: Vec<Option<usize>>,
    /// Per parent boundary position.
    pub parent_source: Vec<Source>,
}

impl MergeMaps {
    /// All lists hold global node indices and are sorted.
    pub fn new(parent_ext: &[usize], alpha_ext: &[usize], beta_ext: &[usize], part: &Partition) -> Result<Self> {
        let find = |list: &[usize], g: usize| {
            list.binary_search(&g).map_err(|_| HpsError::InconsistentChildren {
                node: 0,
                reason: format!("node {g} missing from a boundary list"),
            })
        };
        let a4 = part.i4.iter().map(|&g| find(alpha_ext, g)).collect::<Result<Vec<_>>>()?;
        let b4 = part.i4.iter().map(|&g| find(beta_ext, g)).collect::<Result<Vec<_>>>()?;
        let mut alpha_to_parent = vec![None; alpha_ext.len()];
        let mut beta_to_parent = vec![None; beta_ext.len()];
        let mut parent_source = Vec::with_capacity(parent_ext.len());
        for (pos, &g) in parent_ext.iter().enumerate() {
            let a = alpha_ext.binary_search(&g).ok();
            let b = beta_ext.binary_search(&g).ok();
            let src = match (a, b) {
                (Some(a), Some(b)) => Source::Both(a, b),
                (Some(a), None) => Source::Alpha(a),
                (None, Some(b)) => Source::Beta(b),
                (None, None) => {
                    return Err(HpsError::InconsistentChildren {
                        node: 0,
                        reason: format!("parent boundary node {g} belongs to neither child"),
                    })
                }
            };
            if let Some(a) = a {
                alpha_to_parent[a] = Some(pos);
            }
            if let Some(b) = b {
                beta_to_parent[b] = Some(pos);
            }
            parent_source.push(src);
        }
        let covered = |m: &[Option<usize>]| m.iter().filter(|x| x.is_some()).count();
        if covered(&alpha_to_parent) + a4.len() != alpha_ext.len()
            || covered(&beta_to_parent) + b4.len() != beta_ext.len()
        {
            return Err(HpsError::InconsistentChildren {
                node: 0,
                reason: "child boundary nodes are neither interface nor parent boundary".into(),
            });
        }
        Ok(Self {
            a4,
            b4,
            alpha_to_parent,
            beta_to_parent,
            parent_source,
        })
    }

    pub fn parent_len(&self) -> usize {
        self.parent_source.len()
    }
}

fn tag(err: HpsError, node: usize) -> HpsError {
    match err {
        HpsError::InconsistentChildren { reason, .. } => HpsError::InconsistentChildren { node, reason },
        other => other,
    }
}

/// Merges two sibling triples into the parent's.
pub fn merge(
    alpha: &OperatorTriple,
    beta: &OperatorTriple,
    maps: &MergeMaps,
    orientation: Orientation,
    select: &RowSelection,
    node: usize,
    opts: &FactorOptions,
) -> Result<OperatorTriple> {
    let na = alpha.normal(orientation);
    let nb = beta.normal(orientation);
    let ra4 = na.locate_all(&maps.a4).map_err(|e| tag(e, node))?;
    let rb4 = nb.locate_all(&maps.b4).map_err(|e| tag(e, node))?;
    let m = maps.parent_len();
    let k = maps.a4.len();

    // S u₄ = R u_e  with  S = Nα₄₄ − Nβ₄₄.
    let mut s = gather(na.mat.as_ref(), &ra4, &maps.a4);
    s -= gather(nb.mat.as_ref(), &rb4, &maps.b4);
    let mut r = Mat::<f64>::zeros(k, m);
    for (q, dest) in maps.alpha_to_parent.iter().enumerate() {
        if let Some(pc) = *dest {
            for i in 0..k {
                r[(i, pc)] -= na.mat[(ra4[i], q)];
            }
        }
    }
    for (q, dest) in maps.beta_to_parent.iter().enumerate() {
        if let Some(pc) = *dest {
            for i in 0..k {
                r[(i, pc)] += nb.mat[(rb4[i], q)];
            }
        }
    }
    let lu = Factored::new(s.as_ref());
    if !check_rcond(lu.rcond, opts) {
        return Err(HpsError::ResonantMerge {
            node,
            rcond: lu.rcond,
            threshold: opts.rcond_min,
        });
    }
    let u = lu.solve(r.as_ref());

    let v = combine(&alpha.v, &beta.v, maps, &u, &select.v).map_err(|e| tag(e, node))?;
    let w = combine(&alpha.w, &beta.w, maps, &u, &select.w).map_err(|e| tag(e, node))?;
    Ok(OperatorTriple {
        u,
        v,
        w,
        rcond: lu.rcond,
    })
}

/// Parent derivative rows from one child's rows: direct columns scattered to
/// parent positions plus the interface columns composed with `U`.
fn lift(child: &DtnRows, rows: &[usize], child4: &[usize], to_parent: &[Option<usize>], u: &Mat<f64>) -> Result<Mat<f64>> {
    let local = child.locate_all(rows)?;
    let mut out = gather(child.mat.as_ref(), &local, child4) * u;
    for (q, dest) in to_parent.iter().enumerate() {
        if let Some(pc) = *dest {
            for (i, &li) in local.iter().enumerate() {
                out[(i, pc)] += child.mat[(li, q)];
            }
        }
    }
    Ok(out)
}

fn combine(
    alpha: &DtnRows,
    beta: &DtnRows,
    maps: &MergeMaps,
    u: &Mat<f64>,
    select: &Option<Vec<usize>>,
) -> Result<DtnRows> {
    let rows: Vec<usize> = select.clone().unwrap_or_else(|| (0..maps.parent_len()).collect());
    let mut a_rows = Vec::new();
    let mut b_rows = Vec::new();
    for &pr in &rows {
        match maps.parent_source[pr] {
            Source::Alpha(a) => a_rows.push(a),
            Source::Beta(b) => b_rows.push(b),
            Source::Both(a, b) => {
                a_rows.push(a);
                b_rows.push(b);
            }
        }
    }
    a_rows.sort_unstable();
    b_rows.sort_unstable();
    let from_a = lift(alpha, &a_rows, &maps.a4, &maps.alpha_to_parent, u)?;
    let from_b = lift(beta, &b_rows, &maps.b4, &maps.beta_to_parent, u)?;

    let m = maps.parent_len();
    let mut mat = Mat::<f64>::zeros(rows.len(), m);
    for (i, &pr) in rows.iter().enumerate() {
        match maps.parent_source[pr] {
            Source::Alpha(a) => {
                let la = a_rows.binary_search(&a).unwrap();
                for j in 0..m {
                    mat[(i, j)] = from_a[(la, j)];
                }
            }
            Source::Beta(b) => {
                let lb = b_rows.binary_search(&b).unwrap();
                for j in 0..m {
                    mat[(i, j)] = from_b[(lb, j)];
                }
            }
            Source::Both(a, b) => {
                let la = a_rows.binary_search(&a).unwrap();
                let lb = b_rows.binary_search(&b).unwrap();
                for j in 0..m {
                    mat[(i, j)] = 0.5 * (from_a[(la, j)] + from_b[(lb, j)]);
                }
            }
        }
    }
    Ok(DtnRows { rows, mat })
}

/// Drops derivative rows not listed in `keep_v` / `keep_w`. With both `None`
/// the triple is returned unchanged.
pub fn restrict_to_normal_rows(
    triple: OperatorTriple,
    keep_v: Option<&[usize]>,
    keep_w: Option<&[usize]>,
) -> Result<OperatorTriple> {
    let v = match keep_v {
        Some(k) => triple.v.restrict(k)?,
        None => triple.v,
    };
    let w = match keep_w {
        Some(k) => triple.w.restrict(k)?,
        None => triple.w,
    };
    Ok(OperatorTriple {
        u: triple.u,
        v,
        w,
        rcond: triple.rcond,
    })
}
