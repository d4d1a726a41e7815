//! Uniform tensor grids on intervals and rectangles, with the discrete
//! operators and quadratures the solvers are built on.
//!
//! Dirichlet grids store interior nodes only; the boundary value enters
//! through a ghost node equal to zero. Neumann grids store the boundary
//! nodes as well and close the Laplacian by reflection. Quadrature is the
//! composite rectangle rule on Dirichlet grids and the trapezoid rule
//! (half weights on faces) on Neumann grids, which makes
//! `inner(-Δu, u) == seminorm_h1(u)^2` exact on both.

use std::ops::{Deref, DerefMut};

use crate::error::{check_len, Result, SviError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    lengths: Vec<f64>,
    counts: Vec<usize>,
    h: Vec<f64>,
    coords: Vec<Vec<f64>>,
    bc: BoundaryKind,
    boundary_mask: Vec<bool>,
}

/// Builds a grid with `n` stored nodes per axis.
pub fn build_grid(dim: usize, lengths: &[f64], n: usize, bc: BoundaryKind) -> Result<Grid> {
    Grid::new(dim, lengths, &vec![n; dim.max(1)], bc)
}

impl Grid {
    /// Builds a grid with a per-axis node count.
    pub fn new(dim: usize, lengths: &[f64], counts: &[usize], bc: BoundaryKind) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(SviError::Config(format!("grid dim must be 1 or 2, got {dim}")));
        }
        if lengths.len() != dim || counts.len() != dim {
            return Err(SviError::Config(format!(
                "grid needs {dim} lengths and counts, got {} and {}",
                lengths.len(),
                counts.len()
            )));
        }
        let mut h = Vec::with_capacity(dim);
        let mut coords = Vec::with_capacity(dim);
        for (&len, &n) in lengths.iter().zip(counts) {
            if !(len.is_finite() && len > 0.0) {
                return Err(SviError::Config(format!("grid length must be > 0, got {len}")));
            }
            if n < 3 {
                return Err(SviError::Config(format!("grid needs n >= 3 nodes per axis, got {n}")));
            }
            let (step, axis): (f64, Vec<f64>) = match bc {
                BoundaryKind::Dirichlet => {
                    let step = len / (n + 1) as f64;
                    (step, (1..=n).map(|i| i as f64 * step).collect())
                }
                BoundaryKind::Neumann => {
                    let step = len / (n - 1) as f64;
                    (step, (0..n).map(|i| i as f64 * step).collect())
                }
            };
            h.push(step);
            coords.push(axis);
        }
        let total: usize = counts.iter().product();
        let mut grid = Grid {
            dim,
            lengths: lengths.to_vec(),
            counts: counts.to_vec(),
            h,
            coords,
            bc,
            boundary_mask: vec![false; total],
        };
        if bc == BoundaryKind::Neumann {
            let mask: Vec<bool> = (0..total).map(|idx| grid.faces(idx).next().is_some()).collect();
            grid.boundary_mask = mask;
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    pub fn len(&self) -> usize {
        self.boundary_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary_mask.is_empty()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn count(&self, axis: usize) -> usize {
        self.counts[axis]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn min_h(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn axis_coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary_mask[idx]
    }

    fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.counts[0]
        }
    }

    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 + self.counts[0] * i1
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.counts[0], idx / self.counts[0]]
        }
    }

    /// Physical position of a node; the second entry is 0 in 1D.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let mut xi = [0.0; 2];
        for (axis, x) in xi.iter_mut().enumerate().take(self.dim) {
            *x = self.coords[axis][mi[axis]];
        }
        xi
    }

    /// Faces of the domain a node sits on, as `(axis, outward sign)`.
    /// Empty for every node of a Dirichlet grid.
    pub fn faces(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let mi = self.multi_index(idx);
        let neumann = self.bc == BoundaryKind::Neumann;
        (0..self.dim).flat_map(move |axis| {
            let n = self.counts[axis];
            let lo = (neumann && mi[axis] == 0).then_some((axis, -1.0));
            let hi = (neumann && mi[axis] == n - 1).then_some((axis, 1.0));
            lo.into_iter().chain(hi)
        })
    }

    fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        let h = self.h[axis];
        match self.bc {
            BoundaryKind::Dirichlet => h,
            BoundaryKind::Neumann => {
                if i == 0 || i == self.counts[axis] - 1 {
                    0.5 * h
                } else {
                    h
                }
            }
        }
    }

    /// Volume quadrature weights.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let mi = self.multi_index(idx);
                (0..self.dim).map(|a| self.axis_weight(a, mi[a])).product()
            })
            .collect()
    }

    /// Surface quadrature weights; zero away from the boundary and on
    /// Dirichlet grids (whose stored nodes never touch the boundary).
    pub fn boundary_weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let mi = self.multi_index(idx);
                self.faces(idx)
                    .map(|(axis, _)| {
                        (0..self.dim)
                            .filter(|&b| b != axis)
                            .map(|b| self.axis_weight(b, mi[b]))
                            .product::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    /// Boundary nodes in index order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.boundary_mask[i]).collect()
    }

    pub fn field_from_fn(&self, f: impl Fn([f64; 2]) -> f64) -> Field {
        Field((0..self.len()).map(|i| f(self.position(i))).collect())
    }

    pub fn zeros(&self) -> Field {
        Field(vec![0.0; self.len()])
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        check_len(self.len(), u.len())
    }

    /// Neighbour values along an axis; out-of-range neighbours are ghosts
    /// (zero for Dirichlet, reflected for Neumann).
    #[inline]
    pub(crate) fn neighbours(&self, u: &[f64], idx: usize, axis: usize) -> (f64, f64) {
        let mi = self.multi_index(idx);
        let i = mi[axis];
        let n = self.counts[axis];
        let s = self.stride(axis);
        let left = if i > 0 { Some(u[idx - s]) } else { None };
        let right = if i + 1 < n { Some(u[idx + s]) } else { None };
        match self.bc {
            BoundaryKind::Dirichlet => (left.unwrap_or(0.0), right.unwrap_or(0.0)),
            BoundaryKind::Neumann => (
                left.unwrap_or_else(|| u[idx + s]),
                right.unwrap_or_else(|| u[idx - s]),
            ),
        }
    }

    pub(crate) fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        for (idx, o) in out.iter_mut().enumerate() {
            let c = u[idx];
            let mut acc = 0.0;
            for axis in 0..self.dim {
                let (l, r) = self.neighbours(u, idx, axis);
                let h = self.h[axis];
                acc += (l - 2.0 * c + r) / (h * h);
            }
            *o = acc;
        }
    }

    pub(crate) fn gradient_axis_into(&self, u: &[f64], axis: usize, out: &mut [f64]) {
        let n = self.counts[axis];
        let s = self.stride(axis);
        let h = self.h[axis];
        for (idx, o) in out.iter_mut().enumerate() {
            let i = self.multi_index(idx)[axis];
            *o = if i == 0 {
                (-3.0 * u[idx] + 4.0 * u[idx + s] - u[idx + 2 * s]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * u[idx] - 4.0 * u[idx - s] + u[idx - 2 * s]) / (2.0 * h)
            } else {
                (u[idx + s] - u[idx - s]) / (2.0 * h)
            };
        }
    }
}

/// Values of a scalar quantity at every stored node at one instant.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Field(vec![c; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

/// One field per spatial axis.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct VectorField {
    pub components: Vec<Field>,
}

impl VectorField {
    pub fn zeros(dim: usize, n: usize) -> Self {
        VectorField { components: vec![Field::zeros(n); dim] }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Pointwise Euclidean dot product.
    pub fn dot(&self, other: &VectorField) -> Field {
        let n = self.components.first().map_or(0, |c| c.len());
        let mut out = Field::zeros(n);
        for (a, b) in self.components.iter().zip(&other.components) {
            for ((o, x), y) in out.iter_mut().zip(a.iter()).zip(b.iter()) {
                *o += x * y;
            }
        }
        out
    }

    pub fn norm_sq(&self) -> Field {
        self.dot(self)
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        VectorField { components: self.components.iter().map(|c| c.map(|v| s * v)).collect() }
    }

    /// Largest pointwise Euclidean length.
    pub fn max_norm(&self) -> f64 {
        self.norm_sq().max_abs().sqrt()
    }
}

pub fn apply_laplacian(grid: &Grid, u: &[f64]) -> Result<Field> {
    grid.check(u)?;
    let mut out = grid.zeros();
    grid.laplacian_into(u, &mut out);
    Ok(out)
}

/// Centered differences inside, second-order one-sided on the first and
/// last stored node of each axis.
pub fn apply_gradient(grid: &Grid, u: &[f64]) -> Result<VectorField> {
    grid.check(u)?;
    let mut components = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let mut c = grid.zeros();
        grid.gradient_axis_into(u, axis, &mut c);
        components.push(c);
    }
    Ok(VectorField { components })
}

pub fn inner(grid: &Grid, u: &[f64], v: &[f64]) -> Result<f64> {
    grid.check(u)?;
    grid.check(v)?;
    Ok(grid.weights().iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum())
}

pub fn norm_l2(grid: &Grid, u: &[f64]) -> Result<f64> {
    Ok(inner(grid, u, u)?.sqrt())
}

/// Integral of `u` over the domain.
pub fn mass(grid: &Grid, u: &[f64]) -> Result<f64> {
    grid.check(u)?;
    Ok(grid.weights().iter().zip(u).map(|(w, a)| w * a).sum())
}

/// Discrete `|∇u|_2` from forward differences on every grid edge,
/// including the edges to the zero ghosts of a Dirichlet grid.
pub fn seminorm_h1(grid: &Grid, u: &[f64]) -> Result<f64> {
    grid.check(u)?;
    let mut acc = 0.0;
    for axis in 0..grid.dim() {
        let h = grid.h(axis);
        let n = grid.count(axis);
        let s = grid.stride(axis);
        for idx in 0..grid.len() {
            let mi = grid.multi_index(idx);
            // transverse weight
            let w: f64 = (0..grid.dim())
                .filter(|&b| b != axis)
                .map(|b| grid.axis_weight(b, mi[b]))
                .product();
            let i = mi[axis];
            if i + 1 < n {
                let d = (u[idx + s] - u[idx]) / h;
                acc += w * h * d * d;
            }
            if grid.bc() == BoundaryKind::Dirichlet {
                if i == 0 {
                    let d = u[idx] / h;
                    acc += w * h * d * d;
                }
                if i == n - 1 {
                    let d = u[idx] / h;
                    acc += w * h * d * d;
                }
            }
        }
    }
    Ok(acc.sqrt())
}

/// L² norm of the boundary trace. Zero on Dirichlet grids.
pub fn boundary_norm_l2(grid: &Grid, u: &[f64]) -> Result<f64> {
    grid.check(u)?;
    Ok(grid
        .boundary_weights()
        .iter()
        .zip(u)
        .map(|(w, a)| w * a * a)
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn line(n: usize) -> Grid {
        build_grid(1, &[1.0], n, BoundaryKind::Dirichlet).unwrap()
    }

    #[test]
    fn spacing_and_nodes() {
        let g = line(3);
        assert_relative_eq!(g.h(0), 0.25);
        assert_eq!(g.axis_coords(0), &[0.25, 0.5, 0.75]);

        let g2 = build_grid(2, &[1.0, 2.0], 4, BoundaryKind::Dirichlet).unwrap();
        assert_eq!(g2.len(), 16);
        assert_relative_eq!(g2.h(0), 0.2);
        assert_relative_eq!(g2.h(1), 0.4);

        let gn = build_grid(1, &[2.0], 5, BoundaryKind::Neumann).unwrap();
        assert_relative_eq!(gn.h(0), 0.5);
        assert_eq!(gn.axis_coords(0), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(gn.boundary_nodes(), vec![0, 4]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(build_grid(1, &[1.0], 2, BoundaryKind::Dirichlet).is_err());
        assert!(build_grid(3, &[1.0, 1.0, 1.0], 4, BoundaryKind::Dirichlet).is_err());
        assert!(build_grid(1, &[0.0], 4, BoundaryKind::Dirichlet).is_err());
        assert!(build_grid(1, &[-1.0], 4, BoundaryKind::Neumann).is_err());
        assert!(build_grid(2, &[1.0], 4, BoundaryKind::Neumann).is_err());
    }

    #[test]
    fn laplacian_kills_affine_inside() {
        let g = line(20);
        let u = g.field_from_fn(|x| 2.0 + 3.0 * x[0]);
        let lap = apply_laplacian(&g, &u).unwrap();
        for v in &lap[1..g.len() - 1] {
            assert!(v.abs() < 1e-9);
        }
        let zero = apply_laplacian(&g, &g.zeros()).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn laplacian_of_sine() {
        let g = line(255);
        let u = g.field_from_fn(|x| (PI * x[0]).sin());
        let lap = apply_laplacian(&g, &u).unwrap();
        for (i, v) in lap.iter().enumerate() {
            let exact = -PI * PI * u[i];
            assert!(((v - exact) / exact).abs() <= 1e-3);
        }
    }

    #[test]
    fn gradient_cases() {
        let g = line(10);
        let u = g.field_from_fn(|x| 3.0 * x[0]);
        let grad = apply_gradient(&g, &u).unwrap();
        for v in grad.components[0].iter() {
            assert_relative_eq!(*v, 3.0, epsilon = 1e-12);
        }
        let c = Field::constant(g.len(), 4.0);
        assert!(apply_gradient(&g, &c).unwrap().max_norm() < 1e-12);

        let g = line(255);
        let u = g.field_from_fn(|x| (PI * x[0]).sin());
        let grad = apply_gradient(&g, &u).unwrap();
        let mut worst: f64 = 0.0;
        for (i, v) in grad.components[0].iter().enumerate() {
            worst = worst.max((v - PI * (PI * g.position(i)[0]).cos()).abs());
        }
        assert!(worst / PI <= 1e-3);
    }

    #[test]
    fn norms() {
        let g = line(255);
        let one = Field::constant(g.len(), 1.0);
        assert!((norm_l2(&g, &one).unwrap() - 0.999).abs() <= g.h(0));
        let s = g.field_from_fn(|x| (PI * x[0]).sin());
        assert!((norm_l2(&g, &s).unwrap().powi(2) - 0.5).abs() < 1e-3);
        let z = g.zeros();
        assert_eq!(norm_l2(&g, &z).unwrap(), 0.0);
        assert_eq!(seminorm_h1(&g, &z).unwrap(), 0.0);
        assert_eq!(boundary_norm_l2(&g, &z).unwrap(), 0.0);
        assert!(inner(&g, &z, &one[..3]).is_err());
    }

    #[test]
    fn boundary_weights_cover_perimeter() {
        let g = build_grid(2, &[1.0, 2.0], 9, BoundaryKind::Neumann).unwrap();
        let total: f64 = g.boundary_weights().iter().sum();
        assert_relative_eq!(total, 6.0, epsilon = 1e-12);
        let vol: f64 = g.weights().iter().sum();
        assert_relative_eq!(vol, 2.0, epsilon = 1e-12);
        let gd = build_grid(2, &[1.0, 2.0], 9, BoundaryKind::Dirichlet).unwrap();
        assert!(gd.boundary_weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn summation_by_parts_matches_seminorm() {
        for bc in [BoundaryKind::Dirichlet, BoundaryKind::Neumann] {
            let g = build_grid(2, &[1.0, 1.5], 7, bc).unwrap();
            let u = g.field_from_fn(|x| (1.3 * x[0]).sin() + x[1] * x[1] - 0.4 * x[0] * x[1]);
            let lap = apply_laplacian(&g, &u).unwrap();
            let lhs = -inner(&g, &lap, &u).unwrap();
            let rhs = seminorm_h1(&g, &u).unwrap().powi(2);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }
}
