//! Chebyshev nodes and spectral differentiation matrices on tensor-product
//! patches.
//!
//! Local node ordering is fixed for the whole crate: on a `p × p` patch the
//! node with (0-based) index `k = i * p + j` sits at `(t_i + c₁, t_j + c₂)`,
//! where `t` are the Chebyshev nodes in decreasing order. `D` differentiates
//! in the first coordinate, `E` in the second.

use faer::Mat;

use crate::error::{HpsError, Result};

/// Chebyshev nodes `t_i = a·cos(iπ/(p−1))`, `i = 0..p`, in decreasing order.
///
/// Evaluated through the equivalent sine form so the set is exactly
/// symmetric about the origin and the middle node (odd `p`) is exactly zero.
pub fn cheb_nodes(p: usize, a: f64) -> Result<Vec<f64>> {
    check_args(p, a)?;
    let m = (p - 1) as f64;
    Ok((0..p)
        .map(|i| {
            let s = (m - 2.0 * i as f64) * std::f64::consts::PI / (2.0 * m);
            a * s.sin()
        })
        .collect())
}

/// First-derivative matrix of the degree `p−1` interpolant on `cheb_nodes(p, a)`.
///
/// Off-diagonal entries use the barycentric formula with node differences
/// evaluated through sine products; the diagonal is the negative row sum.
pub fn cheb_diff_1d(p: usize, a: f64) -> Result<Mat<f64>> {
    check_args(p, a)?;
    let inv_diff = node_inverse_differences(p, a);
    let weight = |i: usize| if i == 0 || i == p - 1 { 2.0 } else { 1.0 };
    let mut d = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                d[(i, j)] = weight(i) / weight(j) * sign * inv_diff[(i, j)];
            }
        }
    }
    fill_diagonal_by_row_sum(&mut d);
    Ok(d)
}

/// Second-derivative matrix of the degree `p−1` interpolant, from the
/// first-derivative matrix by the differentiation recursion
/// `D⁽²⁾ᵢⱼ = 2 D⁽¹⁾ᵢⱼ (D⁽¹⁾ᵢᵢ − 1/(tᵢ − tⱼ))`, diagonal by negative row sum.
///
/// Mathematically equal to `D₁·D₁` but avoids the rounding growth of the
/// product for large `p`.
pub fn cheb_diff2_1d(p: usize, a: f64) -> Result<Mat<f64>> {
    let d1 = cheb_diff_1d(p, a)?;
    let inv_diff = node_inverse_differences(p, a);
    let mut d2 = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                d2[(i, j)] = 2.0 * d1[(i, j)] * (d1[(i, i)] - inv_diff[(i, j)]);
            }
        }
    }
    fill_diagonal_by_row_sum(&mut d2);
    Ok(d2)
}

/// `1/(t_i − t_j)` off the diagonal, with the difference evaluated as
/// `2a sin((i+j)π/(2m)) sin((j−i)π/(2m))` to avoid cancellation.
fn node_inverse_differences(p: usize, a: f64) -> Mat<f64> {
    let m = (p - 1) as f64;
    let half_pi = std::f64::consts::FRAC_PI_2;
    Mat::from_fn(p, p, |i, j| {
        if i == j {
            0.0
        } else {
            let diff = 2.0
                * a
                * ((i + j) as f64 * half_pi / m).sin()
                * ((j as f64 - i as f64) * half_pi / m).sin();
            1.0 / diff
        }
    })
}

fn fill_diagonal_by_row_sum(d: &mut Mat<f64>) {
    let p = d.nrows();
    for i in 0..p {
        let mut s = 0.0;
        for j in 0..p {
            if j != i {
                s += d[(i, j)];
            }
        }
        d[(i, i)] = -s;
    }
}

fn check_args(p: usize, a: f64) -> Result<()> {
    if p < 2 {
        return Err(HpsError::InvalidArgument(format!("need p >= 2, got {p}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(HpsError::InvalidArgument(format!("need half-width a > 0, got {a}")));
    }
    Ok(())
}

/// Chebyshev grid and first-derivative matrix on one interval `[-a, a]`.
#[derive(Debug, Clone)]
pub struct Cheb1D {
    pub p: usize,
    pub a: f64,
    pub t: Vec<f64>,
    pub d1: Mat<f64>,
}

impl Cheb1D {
    pub fn new(p: usize, a: f64) -> Result<Self> {
        Ok(Self {
            p,
            a,
            t: cheb_nodes(p, a)?,
            d1: cheb_diff_1d(p, a)?,
        })
    }
}

/// A `p × p` Chebyshev tensor grid with its 2D differentiation matrices.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub p: usize,
    /// Half-widths per axis (equal for square patches).
    pub half_width: [f64; 2],
    pub center: [f64; 2],
    pub axis1: Cheb1D,
    pub axis2: Cheb1D,
    pub nodes: Vec<[f64; 2]>,
    /// ∂₁
    pub d: Mat<f64>,
    /// ∂₂
    pub e: Mat<f64>,
    /// ∂₁², built as `D₁⁽²⁾ ⊗ I`.
    pub d2: Mat<f64>,
    /// ∂₂², built as `I ⊗ D₁⁽²⁾`.
    pub e2: Mat<f64>,
    /// ∂₁∂₂, built as `D₁ ⊗ D₁`.
    pub de: Mat<f64>,
    /// −Δ, defined as `−(d2 + e2)`.
    pub l: Mat<f64>,
    /// Boundary nodes, sorted lexicographically by `(x₁, x₂)`.
    pub ext: Vec<usize>,
    /// Interior nodes, in increasing local index.
    pub int: Vec<usize>,
}

impl TensorGrid {
    /// Square patch of half-width `a` centred at `center`.
    pub fn new(p: usize, a: f64, center: [f64; 2]) -> Result<Self> {
        Self::rectangular(p, [a, a], center)
    }

    pub fn rectangular(p: usize, half_width: [f64; 2], center: [f64; 2]) -> Result<Self> {
        if p < 3 {
            return Err(HpsError::InvalidArgument(format!(
                "tensor grid needs p >= 3 for a nonempty interior, got {p}"
            )));
        }
        let axis1 = Cheb1D::new(p, half_width[0])?;
        let axis2 = Cheb1D::new(p, half_width[1])?;
        let n = p * p;
        let nodes = (0..n)
            .map(|k| [axis1.t[k / p] + center[0], axis2.t[k % p] + center[1]])
            .collect();

        let sq1 = cheb_diff2_1d(p, half_width[0])?;
        let sq2 = cheb_diff2_1d(p, half_width[1])?;
        let d = kron_left(&axis1.d1, p);
        let e = kron_right(&axis2.d1, p);
        let d2 = kron_left(&sq1, p);
        let e2 = kron_right(&sq2, p);
        let de = Mat::<f64>::from_fn(n, n, |r, c| {
            axis1.d1[(r / p, c / p)] * axis2.d1[(r % p, c % p)]
        });
        let l = Mat::<f64>::from_fn(n, n, |r, c| -(d2[(r, c)] + e2[(r, c)]));

        let on_edge = |k: usize| {
            let (i, j) = (k / p, k % p);
            i == 0 || j == 0 || i == p - 1 || j == p - 1
        };
        // x₁ increases with decreasing i; same for x₂ and j.
        let mut ext = Vec::with_capacity(4 * p - 4);
        for i in (0..p).rev() {
            for j in (0..p).rev() {
                let k = i * p + j;
                if on_edge(k) {
                    ext.push(k);
                }
            }
        }
        let int = (0..n).filter(|&k| !on_edge(k)).collect();

        Ok(Self {
            p,
            half_width,
            center,
            axis1,
            axis2,
            nodes,
            d,
            e,
            d2,
            e2,
            de,
            l,
            ext,
            int,
        })
    }

    pub fn len(&self) -> usize {
        self.p * self.p
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `m ⊗ I_p`: acts on the first (slow) index.
fn kron_left(m: &Mat<f64>, p: usize) -> Mat<f64> {
    let n = p * p;
    let mut out = Mat::<f64>::zeros(n, n);
    for i in 0..p {
        for a in 0..p {
            let v = m[(i, a)];
            for j in 0..p {
                out[(i * p + j, a * p + j)] = v;
            }
        }
    }
    out
}

/// `I_p ⊗ m`: acts on the second (fast) index.
fn kron_right(m: &Mat<f64>, p: usize) -> Mat<f64> {
    let n = p * p;
    let mut out = Mat::<f64>::zeros(n, n);
    for i in 0..p {
        for j in 0..p {
            for b in 0..p {
                out[(i * p + j, i * p + b)] = m[(j, b)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn nodes_small_cases() {
        let t = cheb_nodes(3, 1.0).unwrap();
        assert_eq!(t, vec![1.0, 0.0, -1.0]);
        assert_eq!(cheb_nodes(2, 2.0).unwrap(), vec![2.0, -2.0]);
        let t = cheb_nodes(5, 0.5).unwrap();
        let expect = [0.5, 0.5 * (std::f64::consts::PI / 4.0).cos(), 0.0, -0.5 * (std::f64::consts::PI / 4.0).cos(), -0.5];
        for (x, y) in t.iter().zip(expect) {
            assert!((x - y).abs() < 1e-16, "{x} vs {y}");
        }
    }

    #[test]
    fn nodes_match_cosine_definition() {
        for p in [4, 7, 21, 41] {
            let t = cheb_nodes(p, 1.3).unwrap();
            for (i, ti) in t.iter().enumerate() {
                let c = 1.3 * (i as f64 * std::f64::consts::PI / (p - 1) as f64).cos();
                assert!((ti - c).abs() < 4e-16, "p={p} i={i}");
            }
            for i in 1..p {
                assert!(t[i] < t[i - 1]);
            }
        }
    }

    #[test]
    fn bad_arguments_rejected() {
        assert!(cheb_nodes(1, 1.0).is_err());
        assert!(cheb_nodes(4, 0.0).is_err());
        assert!(cheb_diff_1d(4, -1.0).is_err());
        assert!(TensorGrid::new(2, 1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn diff_p2_is_secant() {
        let d = cheb_diff_1d(2, 1.0).unwrap();
        let expect = [[0.5, -0.5], [0.5, -0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((d[(i, j)] - expect[i][j]).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn diff_p3_on_square() {
        let d = cheb_diff_1d(3, 1.0).unwrap();
        let u = [1.0, 0.0, 1.0];
        let du: Vec<f64> = (0..3).map(|i| (0..3).map(|j| d[(i, j)] * u[j]).sum()).collect();
        for (x, y) in du.iter().zip([2.0, 0.0, -2.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn diff_p21_high_power() {
        let (p, a) = (21, 1.0);
        let t = cheb_nodes(p, a).unwrap();
        let d = cheb_diff_1d(p, a).unwrap();
        let f: Vec<f64> = t.iter().map(|x| x.powi(20)).collect();
        let exact: Vec<f64> = t.iter().map(|x| 20.0 * x.powi(19)).collect();
        let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..p {
            let got: f64 = (0..p).map(|j| d[(i, j)] * f[j]).sum();
            assert!((got - exact[i]).abs() <= 1e-12 * scale, "i={i}: {got} vs {}", exact[i]);
        }
    }

    #[test]
    fn diff_rows_sum_to_zero() {
        for p in [5, 16, 41] {
            let d = cheb_diff_1d(p, 0.25).unwrap();
            let m = max_abs(d.as_ref());
            for i in 0..p {
                let s: f64 = (0..p).map(|j| d[(i, j)]).sum();
                assert!(s.abs() <= 1e-13 * m);
            }
        }
    }

    #[test]
    fn grid_p3_partition() {
        let g = TensorGrid::new(3, 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(g.ext.len(), 8);
        assert_eq!(g.int, vec![4]);
        assert_eq!(g.nodes[4], [0.0, 0.0]);
    }

    #[test]
    fn grid_partition_sizes_and_ordering() {
        for p in [4, 9, 21] {
            let g = TensorGrid::new(p, 0.5, [1.0, -2.0]).unwrap();
            assert_eq!(g.ext.len(), 4 * p - 4);
            assert_eq!(g.int.len(), (p - 2) * (p - 2));
            let mut all: Vec<usize> = g.ext.iter().chain(g.int.iter()).copied().collect();
            all.sort();
            assert_eq!(all, (0..p * p).collect::<Vec<_>>());
            for w in g.ext.windows(2) {
                let (x, y) = (g.nodes[w[0]], g.nodes[w[1]]);
                assert!(x[0] < y[0] || (x[0] == y[0] && x[1] < y[1]));
            }
        }
    }

    #[test]
    fn laplacian_is_negated_sum_of_squares() {
        let g = TensorGrid::new(6, 0.3, [0.0, 0.0]).unwrap();
        for r in 0..36 {
            for c in 0..36 {
                assert_eq!(g.l[(r, c)].to_bits(), (-(g.d2[(r, c)] + g.e2[(r, c)])).to_bits());
            }
        }
        let dd = &g.d * &g.d;
        let ee = &g.e * &g.e;
        let scale = max_abs(dd.as_ref());
        for r in 0..36 {
            for c in 0..36 {
                assert!((dd[(r, c)] - g.d2[(r, c)]).abs() <= 1e-13 * scale);
                assert!((ee[(r, c)] - g.e2[(r, c)]).abs() <= 1e-13 * scale);
            }
        }
    }

    #[test]
    fn simple_fields() {
        let g = TensorGrid::new(7, 1.0, [0.2, 0.1]).unwrap();
        let n = g.len();
        let x1: Vec<f64> = g.nodes.iter().map(|x| x[0]).collect();
        let q: Vec<f64> = g.nodes.iter().map(|x| x[0] * x[0] + x[1] * x[1]).collect();
        for k in 0..n {
            let dx: f64 = (0..n).map(|j| g.d[(k, j)] * x1[j]).sum();
            let lq: f64 = (0..n).map(|j| g.l[(k, j)] * q[j]).sum();
            assert!((dx - 1.0).abs() < 1e-13);
            assert!((lq + 4.0).abs() < 1e-11);
        }
    }

    #[test]
    fn reflection_antisymmetry() {
        // Reversing both axes maps every node to its mirror image and flips D.
        let p = 8;
        let g = TensorGrid::new(p, 1.0, [0.0, 0.0]).unwrap();
        let n = p * p;
        let rev = |k: usize| n - 1 - k;
        for k in 0..n {
            let (a, b) = (g.nodes[k], g.nodes[rev(k)]);
            assert_eq!(a[0], -b[0]);
            assert_eq!(a[1], -b[1]);
        }
        let scale = max_abs(g.d.as_ref());
        for r in 0..n {
            for c in 0..n {
                assert!((g.d[(rev(r), rev(c))] + g.d[(r, c)]).abs() <= 1e-13 * scale);
            }
        }
    }
}
