//! Periodic grids and elementary difference operators.
//!
//! Nodes live on the d-dimensional torus with uniform spacing h along every
//! axis; fields are stored flattened with axis 0 fastest. Neighbor lookup goes
//! through precomputed per-axis wrap tables so hot loops never branch on the
//! boundary.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3 nodes per axis, got {0}")]
    AxisTooShort(usize),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("dims must be nonempty")]
    EmptyDims,
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    IncompatibleGrids,
}

/// Uniform periodic grid: node counts per axis and the common spacing h.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    dims: Vec<usize>,
    h: f64,
    strides: Vec<usize>,
    next: Vec<Vec<usize>>,
    prev: Vec<Vec<usize>>,
}

impl TorusGrid {
    pub fn new(dims: &[usize], h: f64) -> Result<Self, GridError> {
        if dims.is_empty() {
            return Err(GridError::EmptyDims);
        }
        if let Some(&n) = dims.iter().find(|&&n| n < 3) {
            return Err(GridError::AxisTooShort(n));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(GridError::BadSpacing(h));
        }
        let mut strides = vec![1usize; dims.len()];
        for ax in 1..dims.len() {
            strides[ax] = strides[ax - 1] * dims[ax - 1];
        }
        let next = dims
            .iter()
            .map(|&n| (0..n).map(|i| if i + 1 == n { 0 } else { i + 1 }).collect())
            .collect();
        let prev = dims
            .iter()
            .map(|&n| (0..n).map(|i| if i == 0 { n - 1 } else { i - 1 }).collect())
            .collect();
        Ok(TorusGrid { dims: dims.to_vec(), h, strides, next, prev })
    }

    /// Unit 1D torus with n nodes, h = 1/n.
    pub fn unit_1d(n: usize) -> Result<Self, GridError> {
        TorusGrid::new(&[n], 1.0 / n as f64)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one node, h^d.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dims.len() as i32)
    }

    /// Total measure of the torus.
    pub fn measure(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Flat index of the +1 neighbor of `idx` along `axis`, given that
    /// coordinate's current value.
    #[inline]
    pub fn shift_up(&self, idx: usize, axis: usize, coord: usize) -> usize {
        idx - coord * self.strides[axis] + self.next[axis][coord] * self.strides[axis]
    }

    #[inline]
    pub fn shift_down(&self, idx: usize, axis: usize, coord: usize) -> usize {
        idx - coord * self.strides[axis] + self.prev[axis][coord] * self.strides[axis]
    }

    /// Coordinate along `axis` of a flat index.
    #[inline]
    pub fn coord(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.dims[axis]
    }

    /// Flat index of the +1 neighbor along `axis` (coordinate looked up).
    #[inline]
    pub fn up(&self, idx: usize, axis: usize) -> usize {
        self.shift_up(idx, axis, self.coord(idx, axis))
    }

    #[inline]
    pub fn down(&self, idx: usize, axis: usize) -> usize {
        self.shift_down(idx, axis, self.coord(idx, axis))
    }
}

/// A scalar sample per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        let n = grid.len();
        ScalarField { grid, values: vec![value; n] }
    }

    /// Sample a function of the node position (1D grids).
    pub fn from_fn_1d(grid: TorusGrid, f: impl Fn(f64) -> f64) -> Self {
        assert_eq!(grid.ndim(), 1);
        let h = grid.h();
        let values = (0..grid.len()).map(|i| f(i as f64 * h)).collect();
        ScalarField { grid, values }
    }
}

/// One component per axis, each stored like a scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: TorusGrid,
    pub components: Vec<Vec<f64>>,
}

/// Forward difference along one axis: (f_{i+1} - f_i)/h.
pub fn forward_diff(f: &ScalarField, axis: usize) -> ScalarField {
    let g = &f.grid;
    let h = g.h();
    let mut out = vec![0.0; f.values.len()];
    for i in 0..f.values.len() {
        out[i] = (f.values[g.up(i, axis)] - f.values[i]) / h;
    }
    ScalarField { grid: g.clone(), values: out }
}

/// Backward difference along one axis: (f_i - f_{i-1})/h.
pub fn backward_diff(f: &ScalarField, axis: usize) -> ScalarField {
    let g = &f.grid;
    let h = g.h();
    let mut out = vec![0.0; f.values.len()];
    for i in 0..f.values.len() {
        out[i] = (f.values[i] - f.values[g.down(i, axis)]) / h;
    }
    ScalarField { grid: g.clone(), values: out }
}

/// Forward gradient: component mu is the forward difference along mu.
pub fn gradient_fwd(f: &ScalarField) -> VectorField {
    let components = (0..f.grid.ndim()).map(|ax| forward_diff(f, ax).values).collect();
    VectorField { grid: f.grid.clone(), components }
}

/// Backward gradient.
pub fn gradient_bwd(f: &ScalarField) -> VectorField {
    let components = (0..f.grid.ndim()).map(|ax| backward_diff(f, ax).values).collect();
    VectorField { grid: f.grid.clone(), components }
}

/// Forward divergence: sum over axes of forward differences of components.
pub fn divergence_fwd(field: &VectorField) -> ScalarField {
    let g = &field.grid;
    let h = g.h();
    let mut out = vec![0.0; g.len()];
    for (ax, comp) in field.components.iter().enumerate() {
        for i in 0..out.len() {
            out[i] += (comp[g.up(i, ax)] - comp[i]) / h;
        }
    }
    ScalarField { grid: g.clone(), values: out }
}

/// Discrete Laplacian as the composition of forward divergence with the
/// backward gradient; the arithmetic matches that composition term for term.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = &f.grid;
    let h = g.h();
    let mut out = vec![0.0; f.values.len()];
    for ax in 0..g.ndim() {
        for i in 0..out.len() {
            let up = g.up(i, ax);
            let dn = g.down(i, ax);
            out[i] += ((f.values[up] - f.values[i]) / h - (f.values[i] - f.values[dn]) / h) / h;
        }
    }
    ScalarField { grid: g.clone(), values: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &TorusGrid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.gen_range(0.25..4.0)).collect();
        ScalarField { grid: grid.clone(), values }
    }

    #[test]
    fn forward_diff_example() {
        let g = TorusGrid::new(&[4], 1.0).unwrap();
        let f = ScalarField::new(g, vec![0.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!(forward_diff(&f, 0).values, vec![1.0, 1.0, -2.0, 0.0]);
    }

    #[test]
    fn laplacian_example() {
        let g = TorusGrid::new(&[4], 1.0).unwrap();
        let f = ScalarField::new(g, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(laplacian(&f).values, vec![1.0, -2.0, 1.0, 0.0]);
    }

    #[test]
    fn laplacian_is_div_of_bwd_gradient() {
        for dims in [vec![7usize], vec![5, 6]] {
            let g = TorusGrid::new(&dims, 0.1).unwrap();
            let f = random_field(&g, 1);
            let composed = divergence_fwd(&gradient_bwd(&f));
            assert_eq!(laplacian(&f).values, composed.values);
        }
    }

    #[test]
    fn summation_by_parts() {
        // sum v div+ F = - sum grad- v . F on the torus
        for dims in [vec![9usize], vec![6, 5]] {
            let g = TorusGrid::new(&dims, 0.25).unwrap();
            let v = random_field(&g, 2);
            let comps: Vec<Vec<f64>> =
                (0..g.ndim()).map(|ax| random_field(&g, 10 + ax as u64).values).collect();
            let ff = VectorField { grid: g.clone(), components: comps };
            let lhs: f64 =
                v.values.iter().zip(divergence_fwd(&ff).values.iter()).map(|(a, b)| a * b).sum();
            let gv = gradient_bwd(&v);
            let mut rhs = 0.0;
            for ax in 0..g.ndim() {
                rhs -= gv.components[ax]
                    .iter()
                    .zip(ff.components[ax].iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!((lhs - rhs).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn product_rule_pointwise() {
        // div+(v grad- v) = v lap v + |grad+ v|^2 at every node
        for dims in [vec![11usize], vec![7, 9]] {
            let g = TorusGrid::new(&dims, 0.125).unwrap();
            let v = random_field(&g, 3);
            let gv = gradient_bwd(&v);
            let comps = (0..g.ndim())
                .map(|ax| {
                    gv.components[ax]
                        .iter()
                        .zip(v.values.iter())
                        .map(|(d, vi)| vi * d)
                        .collect::<Vec<f64>>()
                })
                .collect();
            let lhs = divergence_fwd(&VectorField { grid: g.clone(), components: comps });
            let lap = laplacian(&v);
            let gp = gradient_fwd(&v);
            for i in 0..g.len() {
                let grad_sq: f64 = gp.components.iter().map(|c| c[i] * c[i]).sum();
                let rhs = v.values[i] * lap.values[i] + grad_sq;
                let scale = lhs.values[i].abs().max(rhs.abs()).max(1.0);
                assert!((lhs.values[i] - rhs).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn operators_commute_with_rotation() {
        let g = TorusGrid::new(&[12], 0.5).unwrap();
        let f = random_field(&g, 4);
        let shift = 5usize;
        let rotated = ScalarField::new(
            g.clone(),
            (0..12).map(|i| f.values[(i + shift) % 12]).collect(),
        )
        .unwrap();
        let a = laplacian(&rotated);
        let b = laplacian(&f);
        for i in 0..12 {
            assert_eq!(a.values[i], b.values[(i + shift) % 12]);
        }
    }

    #[test]
    fn neighbor_tables_wrap() {
        let g = TorusGrid::new(&[4, 3], 1.0).unwrap();
        // index = x + 4 y
        assert_eq!(g.up(3, 0), 0);
        assert_eq!(g.down(0, 0), 3);
        assert_eq!(g.up(8, 1), 0);
        assert_eq!(g.down(1, 1), 9);
        assert_eq!(g.len(), 12);
        assert!((g.cell_volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constructor_validation() {
        assert!(TorusGrid::new(&[2], 0.5).is_err());
        assert!(TorusGrid::new(&[], 0.5).is_err());
        assert!(TorusGrid::new(&[5], 0.0).is_err());
        let g = TorusGrid::new(&[5], 0.2).unwrap();
        assert!(ScalarField::new(g, vec![0.0; 4]).is_err());
    }
}
