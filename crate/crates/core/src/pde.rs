//! PDE description: coefficient fields, leaf collocation matrices, analytic
//! reference solutions and the built-in experiment catalog.
//!
//! The operator is
//! `A u = −c11 ∂₁²u − 2 c12 ∂₁∂₂u − c22 ∂₂²u + c1 ∂₁u + c2 ∂₂u + c u`,
//! and the interior equation is always `A u = 0`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use faer::Mat;

use crate::bessel::bessel_y01;
use crate::error::{HpsError, Result};
use crate::spectral::TensorGrid;

pub type Field = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// A scalar coefficient. `Zero` and `Constant` let assembly skip work and keep
/// the constant-coefficient matrices exact.
#[derive(Clone)]
pub enum Coefficient {
    Zero,
    Constant(f64),
    Field(Field),
}

impl Coefficient {
    pub fn field(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Field(Arc::new(f))
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::Constant(v) => *v,
            Coefficient::Field(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Zero => write!(f, "Zero"),
            Coefficient::Constant(v) => write!(f, "Constant({v})"),
            Coefficient::Field(_) => write!(f, "Field(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EllipticOperator {
    pub c11: Coefficient,
    pub c12: Coefficient,
    pub c22: Coefficient,
    pub c1: Coefficient,
    pub c2: Coefficient,
    pub c: Coefficient,
}

impl EllipticOperator {
    /// `−Δ`
    pub fn laplace() -> Self {
        Self {
            c11: Coefficient::Constant(1.0),
            c12: Coefficient::Zero,
            c22: Coefficient::Constant(1.0),
            c1: Coefficient::Zero,
            c2: Coefficient::Zero,
            c: Coefficient::Zero,
        }
    }

    /// `−Δ − κ²(1 − b(x))`
    pub fn helmholtz(problem: &HelmholtzProblem) -> Self {
        let k2 = problem.kappa * problem.kappa;
        let c = match &problem.b {
            None if k2 == 0.0 => Coefficient::Zero,
            None => Coefficient::Constant(-k2),
            Some(b) => {
                let b = b.clone();
                Coefficient::field(move |x| -k2 * (1.0 - b(x)))
            }
        };
        Self { c, ..Self::laplace() }
    }

    /// `−Δ − s ∂₂`
    pub fn convection_diffusion(strength: f64) -> Self {
        Self {
            c2: if strength == 0.0 {
                Coefficient::Zero
            } else {
                Coefficient::Constant(-strength)
            },
            ..Self::laplace()
        }
    }

    /// True when constants solve `A u = 0` (no zeroth-order term).
    pub fn annihilates_constants(&self) -> bool {
        self.c.is_zero()
    }
}

/// `−Δu − κ²(1 − b(x))u = 0`; `b = None` means `b ≡ 0`.
#[derive(Clone)]
pub struct HelmholtzProblem {
    pub kappa: f64,
    pub b: Option<Field>,
}

impl HelmholtzProblem {
    pub fn new(kappa: f64) -> Self {
        Self { kappa, b: None }
    }

    pub fn with_potential(kappa: f64, b: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kappa,
            b: Some(Arc::new(b)),
        }
    }

    pub fn operator(&self) -> EllipticOperator {
        EllipticOperator::helmholtz(self)
    }
}

/// Assembles `A` on the grid's own node coordinates.
pub fn assemble_leaf_matrix(grid: &TensorGrid, op: &EllipticOperator) -> Result<Mat<f64>> {
    let rows: Vec<usize> = (0..grid.len()).collect();
    assemble_rows(grid, op, &grid.nodes, &rows)
}

/// Rows `rows` of `A`, with coefficients sampled at `points` (one per local
/// grid node). Ellipticity and finiteness are checked on every sampled row.
pub fn assemble_rows(
    grid: &TensorGrid,
    op: &EllipticOperator,
    points: &[[f64; 2]],
    rows: &[usize],
) -> Result<Mat<f64>> {
    let n = grid.len();
    if points.len() != n {
        return Err(HpsError::DimensionMismatch {
            expected: n,
            got: points.len(),
        });
    }
    let sample = |name: &'static str, c: &Coefficient| -> Result<Option<Vec<f64>>> {
        if c.is_zero() {
            return Ok(None);
        }
        rows.iter()
            .map(|&k| {
                let v = c.eval(points[k]);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(HpsError::NonFiniteCoefficient {
                        field: name,
                        node: k,
                        x: points[k],
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some)
    };
    let c11 = sample("c11", &op.c11)?;
    let c12 = sample("c12", &op.c12)?;
    let c22 = sample("c22", &op.c22)?;
    let c1 = sample("c1", &op.c1)?;
    let c2 = sample("c2", &op.c2)?;
    let c0 = sample("c", &op.c)?;

    for (r, &k) in rows.iter().enumerate() {
        let a11 = c11.as_ref().map_or(0.0, |v| v[r]);
        let a12 = c12.as_ref().map_or(0.0, |v| v[r]);
        let a22 = c22.as_ref().map_or(0.0, |v| v[r]);
        let det = a11 * a22 - a12 * a12;
        if !(a11 > 0.0 && det > 0.0) {
            return Err(HpsError::EllipticityViolation {
                node: k,
                x: points[k],
                c11: a11,
                det,
            });
        }
    }

    let mut a = Mat::<f64>::zeros(rows.len(), n);
    for (r, &k) in rows.iter().enumerate() {
        for j in 0..n {
            let mut v = 0.0;
            if let Some(s) = &c11 {
                v += -s[r] * grid.d2[(k, j)];
            }
            if let Some(s) = &c12 {
                v += -2.0 * s[r] * grid.de[(k, j)];
            }
            if let Some(s) = &c22 {
                v += -s[r] * grid.e2[(k, j)];
            }
            if let Some(s) = &c1 {
                v += s[r] * grid.d[(k, j)];
            }
            if let Some(s) = &c2 {
                v += s[r] * grid.e[(k, j)];
            }
            a[(r, j)] = v;
        }
        if let Some(s) = &c0 {
            a[(r, k)] += s[r];
        }
    }
    Ok(a)
}

/// Exact solution with its gradient.
pub trait ReferenceSolution: Send + Sync {
    fn value(&self, x: [f64; 2]) -> Result<f64>;
    fn gradient(&self, x: [f64; 2]) -> Result<[f64; 2]>;
}

/// `u(x) = Y₀(κ|x − x̂|)`, a free-space Helmholtz solution away from `x̂`.
#[derive(Clone, Copy, Debug)]
pub struct BesselReference {
    pub kappa: f64,
    pub xhat: [f64; 2],
}

pub fn helmholtz_reference(kappa: f64, xhat: [f64; 2]) -> BesselReference {
    BesselReference { kappa, xhat }
}

impl BesselReference {
    fn radius(&self, x: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let d = [x[0] - self.xhat[0], x[1] - self.xhat[1]];
        let r = d[0].hypot(d[1]);
        if r == 0.0 {
            return Err(HpsError::Domain(format!(
                "reference solution is singular at its source {:?}",
                self.xhat
            )));
        }
        Ok((r, d))
    }
}

impl ReferenceSolution for BesselReference {
    fn value(&self, x: [f64; 2]) -> Result<f64> {
        let (r, _) = self.radius(x)?;
        Ok(bessel_y01(self.kappa * r)?.0)
    }

    fn gradient(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let (r, d) = self.radius(x)?;
        let (_, y1) = bessel_y01(self.kappa * r)?;
        let s = -self.kappa * y1 / r;
        Ok([s * d[0], s * d[1]])
    }
}

/// Region covered by the leaf boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainShape {
    /// `[0,1]²`
    UnitSquare,
    /// `[0,2]² \ [1,2]²`
    LShape,
}

impl DomainShape {
    pub fn area(&self) -> f64 {
        match self {
            DomainShape::UnitSquare => 1.0,
            DomainShape::LShape => 3.0,
        }
    }

    /// Side length of the bounding square.
    pub fn extent(&self) -> f64 {
        match self {
            DomainShape::UnitSquare => 1.0,
            DomainShape::LShape => 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Constant,
    Bump,
    Lshape,
    Convdiff,
    Custom,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Constant => "constant",
            ProblemKind::Bump => "bump",
            ProblemKind::Lshape => "lshape",
            ProblemKind::Convdiff => "convdiff",
            ProblemKind::Custom => "custom",
        }
    }
}

/// Everything needed to run one experiment except the discretization.
#[derive(Clone)]
pub struct Problem {
    pub kind: ProblemKind,
    pub shape: DomainShape,
    /// Wave number; zero for non-Helmholtz operators.
    pub kappa: f64,
    pub convection: f64,
    pub operator: EllipticOperator,
    pub boundary: Field,
    pub reference: Option<BesselReference>,
    pub probe_interior: Option<[f64; 2]>,
    pub probe_boundary: Option<[f64; 2]>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("kind", &self.kind)
            .field("shape", &self.shape)
            .field("kappa", &self.kappa)
            .field("convection", &self.convection)
            .field("probe_interior", &self.probe_interior)
            .field("probe_boundary", &self.probe_boundary)
            .finish()
    }
}

/// `κ = 2π·n(p−1)/ppw`: keeps `ppw` nodes per wavelength on a unit length
/// carrying `n` leaves.
pub fn kappa_for_ppw(n: usize, p: usize, ppw: f64) -> f64 {
    2.0 * PI * (n * (p - 1)) as f64 / ppw
}

/// Points per wavelength for a given `κ`, the inverse of [`kappa_for_ppw`].
pub fn ppw_for_kappa(n: usize, p: usize, kappa: f64) -> f64 {
    2.0 * PI * (n * (p - 1)) as f64 / kappa
}

pub const CONSTANT_SOURCE: [f64; 2] = [-0.2, 0.4];
pub const BUMP_KAPPA: f64 = 80.0;
pub const LSHAPE_KAPPA: f64 = 40.0;
pub const CONVDIFF_STRENGTH: f64 = 1000.0;

/// `b(x) = (sin 4πx₁ · sin 4πx₂)²`
pub fn bump_potential(x: [f64; 2]) -> f64 {
    let s = (4.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin();
    s * s
}

fn oscillatory_boundary(x: [f64; 2]) -> f64 {
    (8.0 * x[0]).cos() * (1.0 - 2.0 * x[1])
}

fn convection_boundary(x: [f64; 2]) -> f64 {
    x[0].cos() * x[1].exp()
}

impl Problem {
    /// Constant-coefficient Helmholtz on `[0,1]²` with `Y₀` boundary data.
    pub fn constant(kappa: f64) -> Self {
        let reference = helmholtz_reference(kappa, CONSTANT_SOURCE);
        let boundary: Field = Arc::new(move |x| reference.value(x).unwrap_or(f64::NAN));
        Self {
            kind: ProblemKind::Constant,
            shape: DomainShape::UnitSquare,
            kappa,
            convection: 0.0,
            operator: HelmholtzProblem::new(kappa).operator(),
            boundary,
            reference: Some(reference),
            probe_interior: None,
            probe_boundary: None,
        }
    }

    /// Variable-coefficient Helmholtz with the periodic bump potential.
    pub fn bump(kappa: f64) -> Self {
        Self {
            kind: ProblemKind::Bump,
            shape: DomainShape::UnitSquare,
            kappa,
            convection: 0.0,
            operator: HelmholtzProblem::with_potential(kappa, bump_potential).operator(),
            boundary: Arc::new(oscillatory_boundary),
            reference: None,
            probe_interior: Some([0.75, 0.25]),
            probe_boundary: Some([0.75, 0.0]),
        }
    }

    /// Constant-coefficient Helmholtz on the L-shaped domain with `f ≡ 1`.
    pub fn lshape(kappa: f64) -> Self {
        Self {
            kind: ProblemKind::Lshape,
            shape: DomainShape::LShape,
            kappa,
            convection: 0.0,
            operator: HelmholtzProblem::new(kappa).operator(),
            boundary: Arc::new(|_| 1.0),
            reference: None,
            probe_interior: Some([0.75, 0.75]),
            probe_boundary: Some([1.25, 1.0]),
        }
    }

    /// `−Δu − s∂₂u = 0` on `[0,1]²`.
    pub fn convdiff(strength: f64) -> Self {
        Self {
            kind: ProblemKind::Convdiff,
            shape: DomainShape::UnitSquare,
            kappa: 0.0,
            convection: strength,
            operator: EllipticOperator::convection_diffusion(strength),
            boundary: Arc::new(convection_boundary),
            reference: None,
            probe_interior: Some([0.75, 0.25]),
            probe_boundary: Some([0.75, 0.0]),
        }
    }

    /// `−Δu − s∂₂u − κ²u = 0` on `[0,1]²` with the oscillatory boundary data.
    pub fn custom(kappa: f64, strength: f64) -> Self {
        let mut operator = EllipticOperator::convection_diffusion(strength);
        if kappa != 0.0 {
            operator.c = Coefficient::Constant(-kappa * kappa);
        }
        Self {
            kind: ProblemKind::Custom,
            shape: DomainShape::UnitSquare,
            kappa,
            convection: strength,
            operator,
            boundary: Arc::new(oscillatory_boundary),
            reference: None,
            probe_interior: Some([0.75, 0.25]),
            probe_boundary: Some([0.75, 0.0]),
        }
    }
}

/// Default parameters of one built-in experiment.
#[derive(Clone, Copy, Debug)]
pub struct ProblemDescriptor {
    pub kind: ProblemKind,
    pub shape: DomainShape,
    /// Fixed wave number, if the experiment fixes one.
    pub kappa: Option<f64>,
    /// Points-per-wavelength policy, if the wave number follows the mesh.
    pub ppw: Option<f64>,
    pub convection: f64,
    pub source: Option<[f64; 2]>,
    pub probe_interior: Option<[f64; 2]>,
    pub probe_boundary: Option<[f64; 2]>,
}

impl ProblemDescriptor {
    /// Instantiates the problem for a mesh with `n` leaves per unit length
    /// and order `p`.
    pub fn instantiate(&self, n: usize, p: usize) -> Problem {
        let kappa = self
            .kappa
            .or_else(|| self.ppw.map(|ppw| kappa_for_ppw(n, p, ppw)))
            .unwrap_or(0.0);
        match self.kind {
            ProblemKind::Constant => Problem::constant(kappa),
            ProblemKind::Bump => Problem::bump(kappa),
            ProblemKind::Lshape => Problem::lshape(kappa),
            ProblemKind::Convdiff => Problem::convdiff(self.convection),
            ProblemKind::Custom => Problem::custom(kappa, self.convection),
        }
    }
}

/// The four experiment families with their standard parameters.
pub fn builtin_problems() -> Vec<ProblemDescriptor> {
    vec![
        ProblemDescriptor {
            kind: ProblemKind::Constant,
            shape: DomainShape::UnitSquare,
            kappa: None,
            ppw: Some(12.0),
            convection: 0.0,
            source: Some(CONSTANT_SOURCE),
            probe_interior: None,
            probe_boundary: None,
        },
        ProblemDescriptor {
            kind: ProblemKind::Bump,
            shape: DomainShape::UnitSquare,
            kappa: Some(BUMP_KAPPA),
            ppw: None,
            convection: 0.0,
            source: None,
            probe_interior: Some([0.75, 0.25]),
            probe_boundary: Some([0.75, 0.0]),
        },
        ProblemDescriptor {
            kind: ProblemKind::Lshape,
            shape: DomainShape::LShape,
            kappa: Some(LSHAPE_KAPPA),
            ppw: None,
            convection: 0.0,
            source: None,
            probe_interior: Some([0.75, 0.75]),
            probe_boundary: Some([1.25, 1.0]),
        },
        ProblemDescriptor {
            kind: ProblemKind::Convdiff,
            shape: DomainShape::UnitSquare,
            kappa: None,
            ppw: None,
            convection: CONVDIFF_STRENGTH,
            source: None,
            probe_interior: Some([0.75, 0.25]),
            probe_boundary: Some([0.75, 0.0]),
        },
    ]
}

pub fn builtin_problem(kind: ProblemKind) -> Option<ProblemDescriptor> {
    builtin_problems().into_iter().find(|d| d.kind == kind)
}
