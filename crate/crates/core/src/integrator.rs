//! Adaptive time integration for the stiff semi-discrete systems.
//!
//! Three methods are provided: implicit Euler with step-doubling error
//! control, variable-step BDF2 (the default for stiff runs), and explicit
//! Dormand-Prince RK45 for mildly stiff horizons. The implicit methods use a
//! modified Newton iteration with a positivity-preserving step-halving line
//! search, so trajectories stay inside the admissible cone u > 0; a step that
//! cannot be completed positively shrinks until `dt_min` and then reports
//! `PositivityLoss`.
//!
//! Jacobians are assembled by finite differences with simultaneous column
//! perturbations: columns are grouped by a greedy coloring of the conflict
//! graph induced by the system stencil, so one rhs evaluation fills a whole
//! color class. Linear systems are solved by a banded LU with partial
//! pivoting plus a low-rank Woodbury correction for the periodic corner
//! entries (1D), by BiCGSTAB with Jacobi preconditioning on a CSR matrix
//! (2D), matrix-free with finite-difference products, or by dense LU, which
//! also serves as the fallback when a banded factorization breaks down.

use thiserror::Error;

use crate::grid::TorusGrid;
use crate::scheme1d::{self, SchemeConfig};
use crate::scheme2d::{self, Scheme2DConfig};

/// Right-hand side with a known coupling stencil.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Evaluate du/dt at (t, u) into `out`. Returns false when u lies outside
    /// the admissible set (nonpositive or non-finite entries).
    fn rhs(&self, t: f64, u: &[f64], out: &mut [f64]) -> bool;

    /// Indices the i-th rhs component depends on, including i itself. Drives
    /// the finite-difference Jacobian coloring; the default dense stencil
    /// disables sparse assembly.
    fn stencil(&self, _i: usize) -> Vec<usize> {
        (0..self.dim()).collect()
    }
}

/// 1D scheme as an autonomous ODE system with stencil radius 2.
pub struct Scheme1DSystem<'a> {
    pub config: &'a SchemeConfig,
    pub grid: &'a TorusGrid,
}

impl OdeSystem for Scheme1DSystem<'_> {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn rhs(&self, _t: f64, u: &[f64], out: &mut [f64]) -> bool {
        match scheme1d::rhs(u, self.config, self.grid) {
            Ok(du) => {
                out.copy_from_slice(&du);
                true
            }
            Err(_) => false,
        }
    }

    fn stencil(&self, i: usize) -> Vec<usize> {
        let up = self.grid.up(i, 0);
        let dn = self.grid.down(i, 0);
        vec![self.grid.down(dn, 0), dn, i, up, self.grid.up(up, 0)]
    }
}

/// 2D scheme as an autonomous ODE system; the stencil is the 13-point
/// diamond of 1-norm radius 2.
pub struct Scheme2DSystem<'a> {
    pub config: &'a Scheme2DConfig,
    pub grid: &'a TorusGrid,
}

impl OdeSystem for Scheme2DSystem<'_> {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn rhs(&self, _t: f64, u: &[f64], out: &mut [f64]) -> bool {
        match scheme2d::rhs_2d(u, self.config, self.grid) {
            Ok(du) => {
                out.copy_from_slice(&du);
                true
            }
            Err(_) => false,
        }
    }

    fn stencil(&self, i: usize) -> Vec<usize> {
        let g = self.grid;
        let (xp, xm) = (g.up(i, 0), g.down(i, 0));
        let (yp, ym) = (g.up(i, 1), g.down(i, 1));
        let mut s = vec![
            i,
            xp,
            xm,
            yp,
            ym,
            g.up(xp, 0),
            g.down(xm, 0),
            g.up(yp, 1),
            g.down(ym, 1),
            g.up(xp, 1),
            g.down(xp, 1),
            g.up(xm, 1),
            g.down(xm, 1),
        ];
        // small grids alias distinct offsets onto the same node
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ImplicitEuler,
    Bdf2,
    ExplicitRk45,
}

/// How the Newton matrix I - gamma dt J is represented and solved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JacobianKind {
    /// Dense LU. Reference path, quadratic memory.
    Dense,
    /// Periodic band of the given half-width: banded LU plus a Woodbury
    /// correction for the wrap-around corners, dense fallback on breakdown.
    Banded { bandwidth: usize },
    /// CSR assembly from the stencil, solved by Jacobi-BiCGSTAB.
    Sparse,
    /// No stored matrix; BiCGSTAB with finite-difference products.
    MatrixFree,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
    /// Initial step; nonpositive requests span * 1e-6.
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_steps: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub jacobian: JacobianKind,
    /// Reject any state or stage with a nonpositive entry.
    pub require_positive: bool,
    pub safety: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Bdf2,
            atol: 1e-8,
            rtol: 1e-6,
            dt_init: 0.0,
            dt_min: 1e-14,
            dt_max: f64::INFINITY,
            max_steps: 500_000,
            newton_tol: 0.05,
            newton_max_iter: 12,
            jacobian: JacobianKind::Banded { bandwidth: 2 },
            require_positive: true,
            safety: 0.9,
        }
    }
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("invalid solver configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("initial state is not strictly positive at component {index}")]
    NonpositiveInitial { index: usize },
    #[error("step size fell below dt_min = {dt_min:e} at t = {t:e}")]
    StepSizeUnderflow { t: f64, dt_min: f64 },
    #[error("no positive update exists at t = {t:e} even at dt_min")]
    PositivityLoss { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t:e}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error("right-hand side failed at the initial state")]
    InitialRhsFailure,
}

/// Per-step report passed to observers after each accepted step.
#[derive(Debug, Clone, Copy)]
pub struct StepResult {
    /// Time after the step.
    pub t: f64,
    /// Step size the step was taken with.
    pub dt: f64,
    /// Newton iterations spent (zero for explicit steps).
    pub newton_iters: usize,
    /// Weighted error estimate that admitted the step.
    pub error_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub t_final: f64,
    pub u: Vec<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub newton_iters: usize,
    /// Requested sample times with linearly interpolated states.
    pub samples: Vec<(f64, Vec<f64>)>,
}

fn validate(config: &SolverConfig, span: f64) -> Result<(), IntegrateError> {
    let bad = |reason: &str| Err(IntegrateError::InvalidConfig { reason: reason.to_string() });
    if !(span > 0.0) {
        return bad("integration span must be positive");
    }
    if !(config.atol > 0.0) || !(config.rtol >= 0.0) {
        return bad("atol must be positive and rtol nonnegative");
    }
    if !(config.dt_min > 0.0) || !(config.dt_max >= config.dt_min) {
        return bad("need 0 < dt_min <= dt_max");
    }
    if config.max_steps == 0 {
        return bad("max_steps must be positive");
    }
    if !(config.newton_tol > 0.0) || config.newton_max_iter == 0 {
        return bad("Newton tolerance and iteration budget must be positive");
    }
    if !(config.safety > 0.0 && config.safety < 1.0) {
        return bad("safety factor must lie in (0, 1)");
    }
    if let JacobianKind::Banded { bandwidth } = config.jacobian {
        if bandwidth == 0 {
            return bad("bandwidth must be positive");
        }
    }
    Ok(())
}

fn wrms(err: &[f64], u: &[f64], atol: f64, rtol: f64) -> f64 {
    let n = err.len().max(1);
    let sum: f64 = err
        .iter()
        .zip(u.iter())
        .map(|(e, x)| {
            let w = atol + rtol * x.abs();
            (e / w) * (e / w)
        })
        .sum();
    (sum / n as f64).sqrt()
}

fn all_positive(u: &[f64]) -> bool {
    u.iter().all(|&x| x > 0.0 && x.is_finite())
}

// ---------------------------------------------------------------------------
// Linear algebra internals
// ---------------------------------------------------------------------------

mod linalg {
    /// Dense LU with partial pivoting; factors in place, returns None on a
    /// numerically singular pivot.
    pub struct DenseLu {
        n: usize,
        a: Vec<f64>,
        piv: Vec<usize>,
    }

    impl DenseLu {
        pub fn factor(mut a: Vec<f64>, n: usize) -> Option<DenseLu> {
            let mut piv = vec![0usize; n];
            for k in 0..n {
                let mut p = k;
                let mut best = a[k * n + k].abs();
                for i in k + 1..n {
                    let v = a[i * n + k].abs();
                    if v > best {
                        best = v;
                        p = i;
                    }
                }
                if !(best > f64::MIN_POSITIVE) || !best.is_finite() {
                    return None;
                }
                piv[k] = p;
                if p != k {
                    for j in 0..n {
                        a.swap(k * n + j, p * n + j);
                    }
                }
                let pivot = a[k * n + k];
                for i in k + 1..n {
                    let m = a[i * n + k] / pivot;
                    a[i * n + k] = m;
                    if m != 0.0 {
                        for j in k + 1..n {
                            a[i * n + j] -= m * a[k * n + j];
                        }
                    }
                }
            }
            Some(DenseLu { n, a, piv })
        }

        pub fn solve(&self, b: &mut [f64]) {
            let n = self.n;
            // rows were swapped L part included, so permute fully up front
            for k in 0..n {
                b.swap(k, self.piv[k]);
            }
            for k in 0..n {
                let bk = b[k];
                if bk != 0.0 {
                    for i in k + 1..n {
                        b[i] -= self.a[i * n + k] * bk;
                    }
                }
            }
            for k in (0..n).rev() {
                let mut s = b[k];
                for j in k + 1..n {
                    s -= self.a[k * n + j] * b[j];
                }
                b[k] = s / self.a[k * n + k];
            }
        }
    }

    /// Band matrix with kl sub- and ku superdiagonals in LAPACK-style storage
    /// with kl fill rows for pivoting.
    pub struct Banded {
        pub n: usize,
        pub kl: usize,
        pub ku: usize,
        /// (2 kl + ku + 1) x n, entry (i, j) at row kl + ku + i - j.
        pub data: Vec<f64>,
    }

    impl Banded {
        pub fn zeros(n: usize, kl: usize, ku: usize) -> Banded {
            Banded { n, kl, ku, data: vec![0.0; (2 * kl + ku + 1) * n] }
        }

        pub fn set(&mut self, i: usize, j: usize, v: f64) {
            debug_assert!(j + self.kl >= i && i + self.ku >= j);
            let r = self.kl + self.ku + i - j;
            self.data[r * self.n + j] = v;
        }
    }

    /// LU factorization of a band matrix with partial pivoting (row swaps
    /// widen the upper band by kl).
    pub struct BandedLu {
        m: Banded,
        piv: Vec<usize>,
    }

    impl BandedLu {
        pub fn factor(mut m: Banded) -> Option<BandedLu> {
            let (n, kl, ku_eff) = (m.n, m.kl, m.ku + m.kl);
            let mut piv = vec![0usize; n];
            let row = |i: usize, j: usize| (kl + m.ku + i - j) * n + j;
            for j in 0..n {
                let km = kl.min(n - 1 - j);
                let mut p = 0usize;
                let mut best = m.data[row(j, j)].abs();
                for off in 1..=km {
                    let v = m.data[row(j + off, j)].abs();
                    if v > best {
                        best = v;
                        p = off;
                    }
                }
                if !(best > 1e-300) || !best.is_finite() {
                    return None;
                }
                piv[j] = j + p;
                let ju = (j + ku_eff).min(n - 1);
                if p != 0 {
                    for c in j..=ju {
                        let (r1, r2) = (row(j, c), row(j + p, c));
                        m.data.swap(r1, r2);
                    }
                }
                let pivot = m.data[row(j, j)];
                for off in 1..=km {
                    m.data[row(j + off, j)] /= pivot;
                }
                for c in j + 1..=ju {
                    let f = m.data[row(j, c)];
                    if f != 0.0 {
                        for off in 1..=km {
                            let mult = m.data[row(j + off, j)];
                            m.data[row(j + off, c)] -= mult * f;
                        }
                    }
                }
            }
            Some(BandedLu { m, piv })
        }

        pub fn solve(&self, b: &mut [f64]) {
            let (n, kl) = (self.m.n, self.m.kl);
            let ku_eff = self.m.ku + kl;
            let row = |i: usize, j: usize| (kl + self.m.ku + i - j) * n + j;
            for j in 0..n {
                b.swap(j, self.piv[j]);
                let bj = b[j];
                if bj != 0.0 {
                    let km = kl.min(n - 1 - j);
                    for off in 1..=km {
                        b[j + off] -= self.m.data[row(j + off, j)] * bj;
                    }
                }
            }
            for j in (0..n).rev() {
                let x = b[j] / self.m.data[row(j, j)];
                b[j] = x;
                if x != 0.0 {
                    let reach = ku_eff.min(j);
                    for off in 1..=reach {
                        b[j - off] -= self.m.data[row(j - off, j)] * x;
                    }
                }
            }
        }
    }

    /// Band solver with a rank-2k Woodbury correction for the periodic
    /// corner entries of a wrapped stencil.
    pub struct PeriodicBandLu {
        lu: BandedLu,
        /// Rows carrying corner entries.
        rows: Vec<usize>,
        /// Dense correction rows: corr[r][c] for r in rows.
        corr: Vec<Vec<(usize, f64)>>,
        /// A^-1 U columns.
        z: Vec<Vec<f64>>,
        /// LU of the capacitance I + C A^-1 U.
        cap: DenseLu,
    }

    impl PeriodicBandLu {
        /// `band` holds the in-band part; `corners` lists (i, j, value)
        /// entries outside the band (wrap-around couplings).
        pub fn factor(band: Banded, corners: &[(usize, usize, f64)]) -> Option<PeriodicBandLu> {
            let n = band.n;
            let lu = BandedLu::factor(band)?;
            let mut rows: Vec<usize> = corners.iter().map(|&(i, _, _)| i).collect();
            rows.sort_unstable();
            rows.dedup();
            let k = rows.len();
            let mut corr: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
            for &(i, j, v) in corners {
                let r = rows.binary_search(&i).unwrap();
                corr[r].push((j, v));
            }
            // Z = A^-1 U with U = [e_r for r in rows]
            let mut z = Vec::with_capacity(k);
            for &r in &rows {
                let mut col = vec![0.0; n];
                col[r] = 1.0;
                lu.solve(&mut col);
                z.push(col);
            }
            // capacitance S = I + C Z, k x k dense
            let mut s = vec![0.0; k * k];
            for (a, cr) in corr.iter().enumerate() {
                for b in 0..k {
                    let dot: f64 = cr.iter().map(|&(j, v)| v * z[b][j]).sum();
                    s[a * k + b] = dot + if a == b { 1.0 } else { 0.0 };
                }
            }
            let cap = DenseLu::factor(s, k)?;
            Some(PeriodicBandLu { lu, rows: rows.clone(), corr, z, cap })
        }

        pub fn solve(&self, b: &mut [f64]) {
            self.lu.solve(b);
            let k = self.rows.len();
            if k == 0 {
                return;
            }
            let mut w: Vec<f64> = self
                .corr
                .iter()
                .map(|cr| cr.iter().map(|&(j, v)| v * b[j]).sum())
                .collect();
            self.cap.solve(&mut w);
            for (zc, &wc) in self.z.iter().zip(w.iter()) {
                if wc != 0.0 {
                    for (bi, zi) in b.iter_mut().zip(zc.iter()) {
                        *bi -= zi * wc;
                    }
                }
            }
        }
    }

    /// Compressed sparse rows with a cached diagonal for Jacobi sweeps.
    pub struct Csr {
        pub n: usize,
        pub indptr: Vec<usize>,
        pub indices: Vec<usize>,
        pub data: Vec<f64>,
        pub diag: Vec<f64>,
    }

    impl Csr {
        /// Build from per-column entry lists.
        pub fn from_columns(n: usize, cols: &[Vec<(usize, f64)>]) -> Csr {
            let mut counts = vec![0usize; n + 1];
            for col in cols {
                for &(i, _) in col {
                    counts[i + 1] += 1;
                }
            }
            for i in 0..n {
                counts[i + 1] += counts[i];
            }
            let nnz = counts[n];
            let mut indices = vec![0usize; nnz];
            let mut data = vec![0.0; nnz];
            let mut cursor = counts.clone();
            for (j, col) in cols.iter().enumerate() {
                for &(i, v) in col {
                    let p = cursor[i];
                    indices[p] = j;
                    data[p] = v;
                    cursor[i] += 1;
                }
            }
            let mut diag = vec![1.0; n];
            for i in 0..n {
                for p in counts[i]..counts[i + 1] {
                    if indices[p] == i {
                        diag[i] = data[p];
                    }
                }
            }
            Csr { n, indptr: counts, indices, data, diag }
        }

        pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
            for i in 0..self.n {
                let mut s = 0.0;
                for p in self.indptr[i]..self.indptr[i + 1] {
                    s += self.data[p] * x[self.indices[p]];
                }
                out[i] = s;
            }
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    fn norm2(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    /// Preconditioned BiCGSTAB; `op` applies the matrix, `precond` the
    /// (approximate) inverse preconditioner. Solves to a relative residual.
    pub fn bicgstab<F, P>(
        mut op: F,
        mut precond: P,
        b: &[f64],
        x0: &[f64],
        rel_tol: f64,
        max_iter: usize,
    ) -> Option<Vec<f64>>
    where
        F: FnMut(&[f64], &mut [f64]),
        P: FnMut(&mut [f64]),
    {
        let n = b.len();
        let mut x = x0.to_vec();
        let mut r = vec![0.0; n];
        op(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        if norm2(&r) <= rel_tol * bnorm {
            return Some(x);
        }
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut t = vec![0.0; n];
        for _ in 0..max_iter {
            let rho_new = dot(&r0, &r);
            if rho_new.abs() < 1e-300 {
                return None;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let mut ph = p.clone();
            precond(&mut ph);
            op(&ph, &mut v);
            let denom = dot(&r0, &v);
            if denom.abs() < 1e-300 {
                return None;
            }
            alpha = rho / denom;
            let mut s = vec![0.0; n];
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) <= rel_tol * bnorm {
                for i in 0..n {
                    x[i] += alpha * ph[i];
                }
                return Some(x);
            }
            let mut sh = s.clone();
            precond(&mut sh);
            op(&sh, &mut t);
            let tt = dot(&t, &t);
            if tt.abs() < 1e-300 {
                return None;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm2(&r) <= rel_tol * bnorm {
                return Some(x);
            }
            if omega.abs() < 1e-300 {
                return None;
            }
        }
        None
    }

    /// Greedy coloring of columns so that no two columns of one color share
    /// a row of the coupling pattern. `col_rows[j]` lists rows hit by column
    /// j; returns color classes of column indices.
    pub fn color_columns(n: usize, col_rows: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, rows) in col_rows.iter().enumerate() {
            for &i in rows {
                row_cols[i].push(j);
            }
        }
        let mut color = vec![usize::MAX; n];
        let mut classes: Vec<Vec<usize>> = Vec::new();
        let mut forbidden: Vec<usize> = Vec::new();
        for j in 0..n {
            forbidden.clear();
            for &i in &col_rows[j] {
                for &k in &row_cols[i] {
                    if color[k] != usize::MAX {
                        forbidden.push(color[k]);
                    }
                }
            }
            forbidden.sort_unstable();
            forbidden.dedup();
            let mut c = 0usize;
            for &f in &forbidden {
                if f == c {
                    c += 1;
                } else if f > c {
                    break;
                }
            }
            color[j] = c;
            if c == classes.len() {
                classes.push(Vec::new());
            }
            classes[c].push(j);
        }
        classes
    }

}

// ---------------------------------------------------------------------------
// Newton machinery
// ---------------------------------------------------------------------------

/// Factored Newton matrix behind a uniform solve interface.
enum NewtonMatrix {
    Dense(linalg::DenseLu),
    Banded(linalg::PeriodicBandLu),
    Sparse(linalg::Csr),
    Free,
}

enum NewtonFailure {
    /// Iteration did not contract within budget.
    Diverged,
    /// Positivity damping blocked the update.
    PositivityBlocked,
    /// Linear solver broke down.
    LinearSolve,
}

struct Workspace {
    /// Color classes of column indices, shared by all sparse-ish kinds.
    classes: Option<Vec<Vec<usize>>>,
    /// Rows hit by each column.
    col_rows: Vec<Vec<usize>>,
    newton_iters: usize,
}

impl Workspace {
    fn new() -> Workspace {
        Workspace { classes: None, col_rows: Vec::new(), newton_iters: 0 }
    }

    fn ensure_coloring<S: OdeSystem + ?Sized>(&mut self, system: &S) {
        if self.classes.is_some() {
            return;
        }
        let n = system.dim();
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in system.stencil(i) {
                col_rows[j].push(i);
            }
        }
        for rows in col_rows.iter_mut() {
            rows.sort_unstable();
            rows.dedup();
        }
        self.classes = Some(linalg::color_columns(n, &col_rows));
        self.col_rows = col_rows;
    }
}

/// Columns of M = I - gdt J(u), approximated by colored forward differences.
fn fd_matrix_columns<S: OdeSystem + ?Sized>(
    system: &S,
    t: f64,
    u: &[f64],
    f_u: &[f64],
    gdt: f64,
    atol: f64,
    ws: &mut Workspace,
) -> Option<Vec<Vec<(usize, f64)>>> {
    ws.ensure_coloring(system);
    let n = system.dim();
    let classes = ws.classes.as_ref().unwrap();
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut up = u.to_vec();
    let mut fp = vec![0.0; n];
    for class in classes {
        for &j in class {
            let eps = sqrt_eps * u[j].abs().max(atol);
            up[j] = u[j] + eps;
        }
        if !system.rhs(t, &up, &mut fp) {
            return None;
        }
        for &j in class {
            let eps = up[j] - u[j];
            for &i in &ws.col_rows[j] {
                let jf = (fp[i] - f_u[i]) / eps;
                let v = if i == j { 1.0 - gdt * jf } else { -gdt * jf };
                cols[j].push((i, v));
            }
            up[j] = u[j];
        }
    }
    Some(cols)
}

fn build_newton_matrix<S: OdeSystem + ?Sized>(
    system: &S,
    t: f64,
    u: &[f64],
    f_u: &[f64],
    gdt: f64,
    config: &SolverConfig,
    ws: &mut Workspace,
) -> Result<NewtonMatrix, NewtonFailure> {
    let n = system.dim();
    match &config.jacobian {
        JacobianKind::MatrixFree => Ok(NewtonMatrix::Free),
        kind => {
            let cols = fd_matrix_columns(system, t, u, f_u, gdt, config.atol, ws)
                .ok_or(NewtonFailure::LinearSolve)?;
            match kind {
                JacobianKind::Dense => {
                    let mut a = vec![0.0; n * n];
                    for (j, col) in cols.iter().enumerate() {
                        for &(i, v) in col {
                            a[i * n + j] = v;
                        }
                    }
                    linalg::DenseLu::factor(a, n)
                        .map(NewtonMatrix::Dense)
                        .ok_or(NewtonFailure::LinearSolve)
                }
                JacobianKind::Banded { bandwidth } => {
                    let bw = *bandwidth;
                    let mut band = linalg::Banded::zeros(n, bw, bw);
                    let mut corners = Vec::new();
                    for (j, col) in cols.iter().enumerate() {
                        for &(i, v) in col {
                            if j + bw >= i && i + bw >= j {
                                band.set(i, j, v);
                            } else {
                                corners.push((i, j, v));
                            }
                        }
                    }
                    if let Some(lu) = linalg::PeriodicBandLu::factor(band, &corners) {
                        return Ok(NewtonMatrix::Banded(lu));
                    }
                    // fallback: assemble dense from the same columns
                    let mut a = vec![0.0; n * n];
                    for (j, col) in cols.iter().enumerate() {
                        for &(i, v) in col {
                            a[i * n + j] = v;
                        }
                    }
                    linalg::DenseLu::factor(a, n)
                        .map(NewtonMatrix::Dense)
                        .ok_or(NewtonFailure::LinearSolve)
                }
                JacobianKind::Sparse => {
                    Ok(NewtonMatrix::Sparse(linalg::Csr::from_columns(n, &cols)))
                }
                JacobianKind::MatrixFree => unreachable!(),
            }
        }
    }
}

impl NewtonMatrix {
    /// Solve M delta = g for the Newton correction.
    fn solve<S: OdeSystem + ?Sized>(
        &self,
        g: &[f64],
        system: &S,
        t: f64,
        u: &[f64],
        f_u: &[f64],
        gdt: f64,
    ) -> Option<Vec<f64>> {
        match self {
            NewtonMatrix::Dense(lu) => {
                let mut x = g.to_vec();
                lu.solve(&mut x);
                Some(x)
            }
            NewtonMatrix::Banded(lu) => {
                let mut x = g.to_vec();
                lu.solve(&mut x);
                Some(x)
            }
            NewtonMatrix::Sparse(a) => {
                let diag = a.diag.clone();
                linalg::bicgstab(
                    |v, out| a.matvec(v, out),
                    |v| {
                        for (vi, di) in v.iter_mut().zip(diag.iter()) {
                            if di.abs() > 1e-300 {
                                *vi /= di;
                            }
                        }
                    },
                    g,
                    &vec![0.0; g.len()],
                    1e-9,
                    600,
                )
            }
            NewtonMatrix::Free => {
                let n = g.len();
                let sqrt_eps = f64::EPSILON.sqrt();
                let unorm = u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
                let mut fw = vec![0.0; n];
                let mut uw = vec![0.0; n];
                linalg::bicgstab(
                    |w, out: &mut [f64]| {
                        let wnorm = w.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
                        if wnorm == 0.0 {
                            out.fill(0.0);
                            return;
                        }
                        let eps = sqrt_eps * (1.0 + unorm) / wnorm;
                        for i in 0..n {
                            uw[i] = u[i] + eps * w[i];
                        }
                        if system.rhs(t, &uw, &mut fw) {
                            for i in 0..n {
                                out[i] = w[i] - gdt * (fw[i] - f_u[i]) / eps;
                            }
                        } else {
                            // poisoned products force the caller to shrink dt
                            out.fill(f64::NAN);
                        }
                    },
                    |_| {},
                    g,
                    &vec![0.0; n],
                    1e-9,
                    800,
                )
            }
        }
    }
}

/// Solve x - gdt F(x) = c by modified Newton from the predictor `x0`, keeping
/// all iterates strictly positive when required. Returns the solution and the
/// iteration count.
#[allow(clippy::too_many_arguments)]
fn newton_solve<S: OdeSystem + ?Sized>(
    system: &S,
    t_new: f64,
    base: &[f64],
    c: &[f64],
    x0: &[f64],
    gdt: f64,
    config: &SolverConfig,
    ws: &mut Workspace,
) -> Result<(Vec<f64>, usize), NewtonFailure> {
    let n = system.dim();
    let mut f_base = vec![0.0; n];
    if !system.rhs(t_new, base, &mut f_base) {
        return Err(NewtonFailure::Diverged);
    }
    let matrix = build_newton_matrix(system, t_new, base, &f_base, gdt, config, ws)?;

    let mut x = x0.to_vec();
    if config.require_positive && !all_positive(&x) {
        // pull the predictor back toward the (positive) base state
        x.copy_from_slice(base);
    }
    let mut f_x = vec![0.0; n];
    let mut damped_any = false;
    let mut prev_res = f64::INFINITY;
    for iter in 1..=config.newton_max_iter {
        ws.newton_iters += 1;
        if !system.rhs(t_new, &x, &mut f_x) {
            return Err(NewtonFailure::Diverged);
        }
        let mut g = vec![0.0; n];
        let mut res = 0.0f64;
        let mut within_floor = true;
        for i in 0..n {
            g[i] = x[i] - gdt * f_x[i] - c[i];
            let w = config.atol + config.rtol * x[i].abs();
            res = res.max(g[i].abs() / w);
            let floor = 64.0 * f64::EPSILON * (x[i].abs() + c[i].abs() + (gdt * f_x[i]).abs());
            if g[i].abs() > floor.max(config.newton_tol * w) {
                within_floor = false;
            }
        }
        if iter > 1 && (res <= config.newton_tol || within_floor) {
            return Ok((x, iter - 1));
        }
        if iter > 3 && res > 0.9 * prev_res && res > config.newton_tol {
            return Err(if damped_any {
                NewtonFailure::PositivityBlocked
            } else {
                NewtonFailure::Diverged
            });
        }
        prev_res = res;
        let delta = matrix
            .solve(&g, system, t_new, base, &f_base, gdt)
            .ok_or(NewtonFailure::LinearSolve)?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(NewtonFailure::LinearSolve);
        }
        let mut s = 1.0f64;
        if config.require_positive {
            loop {
                let ok = x.iter().zip(delta.iter()).all(|(&xi, &di)| xi - s * di > 0.0);
                if ok {
                    break;
                }
                s *= 0.5;
                damped_any = true;
                if s < 1e-8 {
                    return Err(NewtonFailure::PositivityBlocked);
                }
            }
        }
        let mut winc = 0.0f64;
        for i in 0..n {
            x[i] -= s * delta[i];
            let w = config.atol + config.rtol * x[i].abs();
            winc = winc.max((s * delta[i]).abs() / w);
        }
        if s == 1.0 && winc <= config.newton_tol {
            return Ok((x, iter));
        }
    }
    Err(if damped_any { NewtonFailure::PositivityBlocked } else { NewtonFailure::Diverged })
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

struct Rk45Tableau;

impl Rk45Tableau {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 6] = [
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    /// Fifth-order weights (row 7 equals A[5], FSAL).
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
}

enum StepOutcome {
    Accepted { u_new: Vec<f64>, est: f64, newton_iters: usize },
    ErrorTooLarge { est: f64 },
    NeedsSmallerStep { positivity: bool },
}

#[allow(clippy::too_many_arguments)]
fn try_step<S: OdeSystem + ?Sized>(
    system: &S,
    method: Method,
    t: f64,
    dt: f64,
    u: &[f64],
    history: &[(f64, Vec<f64>)],
    config: &SolverConfig,
    ws: &mut Workspace,
) -> StepOutcome {
    let n = system.dim();
    match method {
        Method::ImplicitEuler => {
            // full step
            let full = match newton_solve(system, t + dt, u, u, u, dt, config, ws) {
                Ok((x, it)) => (x, it),
                Err(e) => {
                    return StepOutcome::NeedsSmallerStep {
                        positivity: matches!(e, NewtonFailure::PositivityBlocked),
                    }
                }
            };
            // two half steps sharing the half-step matrix scale
            let half = dt * 0.5;
            let mid = match newton_solve(system, t + half, u, u, u, half, config, ws) {
                Ok((x, it)) => (x, it),
                Err(e) => {
                    return StepOutcome::NeedsSmallerStep {
                        positivity: matches!(e, NewtonFailure::PositivityBlocked),
                    }
                }
            };
            let fine = match newton_solve(
                system,
                t + dt,
                &mid.0,
                &mid.0,
                &mid.0,
                half,
                config,
                ws,
            ) {
                Ok((x, it)) => (x, it),
                Err(e) => {
                    return StepOutcome::NeedsSmallerStep {
                        positivity: matches!(e, NewtonFailure::PositivityBlocked),
                    }
                }
            };
            let err: Vec<f64> =
                fine.0.iter().zip(full.0.iter()).map(|(a, b)| a - b).collect();
            let est = wrms(&err, u, config.atol, config.rtol);
            if est <= 1.0 {
                StepOutcome::Accepted {
                    u_new: fine.0,
                    est,
                    newton_iters: full.1 + mid.1 + fine.1,
                }
            } else {
                StepOutcome::ErrorTooLarge { est }
            }
        }
        Method::Bdf2 => {
            // history holds (t, u) of the previous accepted states, most
            // recent last; u equals history.last()
            let (t_prev, u_prev) = {
                let k = history.len();
                (&history[k - 2].0, &history[k - 2].1)
            };
            let dt_old = t - t_prev;
            let omega = dt / dt_old;
            let a1 = (1.0 + omega) * (1.0 + omega) / (1.0 + 2.0 * omega);
            let a2 = omega * omega / (1.0 + 2.0 * omega);
            let gdt = dt * (1.0 + omega) / (1.0 + 2.0 * omega);
            let c: Vec<f64> =
                u.iter().zip(u_prev.iter()).map(|(&un, &um)| a1 * un - a2 * um).collect();
            // predictor: extrapolate through the stored history
            let predictor = extrapolate(history, t + dt);
            let (x, iters) =
                match newton_solve(system, t + dt, u, &c, &predictor, gdt, config, ws) {
                    Ok(r) => r,
                    Err(e) => {
                        return StepOutcome::NeedsSmallerStep {
                            positivity: matches!(e, NewtonFailure::PositivityBlocked),
                        }
                    }
                };
            let err: Vec<f64> =
                x.iter().zip(predictor.iter()).map(|(a, b)| (a - b) / 3.0).collect();
            let est = wrms(&err, u, config.atol, config.rtol);
            if est <= 1.0 {
                StepOutcome::Accepted { u_new: x, est, newton_iters: iters }
            } else {
                StepOutcome::ErrorTooLarge { est }
            }
        }
        Method::ExplicitRk45 => {
            let mut k = vec![vec![0.0; n]; 7];
            if !system.rhs(t, u, &mut k[0]) {
                return StepOutcome::NeedsSmallerStep { positivity: true };
            }
            let mut stage = vec![0.0; n];
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = Rk45Tableau::A[s - 1][j];
                        if a != 0.0 {
                            acc += a * kj[i];
                        }
                    }
                    stage[i] = u[i] + dt * acc;
                }
                if config.require_positive && !all_positive(&stage) {
                    return StepOutcome::NeedsSmallerStep { positivity: true };
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                if !system.rhs(t + Rk45Tableau::C[s] * dt, &stage, &mut tail[0]) {
                    return StepOutcome::NeedsSmallerStep { positivity: true };
                }
            }
            let mut u_new = vec![0.0; n];
            let mut err = vec![0.0; n];
            for i in 0..n {
                let mut acc5 = 0.0;
                let mut acc_err = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    acc5 += Rk45Tableau::B5[j] * kj[i];
                    acc_err += (Rk45Tableau::B5[j] - Rk45Tableau::B4[j]) * kj[i];
                }
                u_new[i] = u[i] + dt * acc5;
                err[i] = dt * acc_err;
            }
            if config.require_positive && !all_positive(&u_new) {
                return StepOutcome::NeedsSmallerStep { positivity: true };
            }
            let est = wrms(&err, u, config.atol, config.rtol);
            if est <= 1.0 {
                StepOutcome::Accepted { u_new, est, newton_iters: 0 }
            } else {
                StepOutcome::ErrorTooLarge { est }
            }
        }
    }
}

/// Polynomial extrapolation through the stored history (two points linear,
/// three quadratic) evaluated at `t_new`.
fn extrapolate(history: &[(f64, Vec<f64>)], t_new: f64) -> Vec<f64> {
    let k = history.len();
    let pts = &history[k.saturating_sub(3)..];
    let n = pts[0].1.len();
    let mut out = vec![0.0; n];
    for (a, (ta, ua)) in pts.iter().enumerate() {
        let mut w = 1.0;
        for (b, (tb, _)) in pts.iter().enumerate() {
            if a != b {
                w *= (t_new - tb) / (ta - tb);
            }
        }
        for i in 0..n {
            out[i] += w * ua[i];
        }
    }
    out
}

/// Integrate du/dt = F(t, u) from t0 to t_end. `sample_times` requests dense
/// output by linear interpolation between accepted steps; `observer` is
/// called after every accepted step with the new state.
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &S,
    u0: &[f64],
    t0: f64,
    t_end: f64,
    config: &SolverConfig,
    sample_times: &[f64],
    mut observer: Option<&mut dyn FnMut(&StepResult, &[f64])>,
) -> Result<Solution, IntegrateError> {
    let span = t_end - t0;
    validate(config, span)?;
    if u0.len() != system.dim() {
        return Err(IntegrateError::InvalidConfig {
            reason: format!("state length {} does not match system dim {}", u0.len(), system.dim()),
        });
    }
    if config.require_positive {
        if let Some(i) = u0.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(IntegrateError::NonpositiveInitial { index: i });
        }
    }
    let mut probe = vec![0.0; system.dim()];
    if !system.rhs(t0, u0, &mut probe) {
        return Err(IntegrateError::InitialRhsFailure);
    }

    let mut samples_sorted: Vec<f64> = sample_times.to_vec();
    samples_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut next_sample = 0usize;
    let mut samples: Vec<(f64, Vec<f64>)> = Vec::with_capacity(samples_sorted.len());
    // samples at or before the start evaluate to the initial state
    while next_sample < samples_sorted.len() && samples_sorted[next_sample] <= t0 {
        samples.push((samples_sorted[next_sample], u0.to_vec()));
        next_sample += 1;
    }

    let mut ws = Workspace::new();
    let mut t = t0;
    let mut u = u0.to_vec();
    let mut history: Vec<(f64, Vec<f64>)> = vec![(t, u.clone())];
    let mut dt = if config.dt_init > 0.0 { config.dt_init } else { span * 1e-6 };
    dt = dt.clamp(config.dt_min, config.dt_max).min(span);
    let mut est_prev = 1.0f64;
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    let p_hat = |m: Method| match m {
        Method::ImplicitEuler => 2.0,
        Method::Bdf2 => 3.0,
        Method::ExplicitRk45 => 5.0,
    };

    while t < t_end - 1e-14 * span.max(1.0) {
        if accepted + rejected >= config.max_steps {
            return Err(IntegrateError::MaxStepsExceeded { t, max_steps: config.max_steps });
        }
        dt = dt.min(t_end - t);
        // BDF2 needs one starter step of implicit Euler
        let method = if config.method == Method::Bdf2 && history.len() < 2 {
            Method::ImplicitEuler
        } else {
            config.method
        };
        match try_step(system, method, t, dt, &u, &history, config, &mut ws) {
            StepOutcome::Accepted { u_new, est, newton_iters } => {
                t += dt;
                u = u_new;
                history.push((t, u.clone()));
                if history.len() > 3 {
                    history.remove(0);
                }
                accepted += 1;
                // dense output between the last two accepted states
                let (t_prev, u_prev) = {
                    let k = history.len();
                    (history[k - 2].0, &history[k - 2].1)
                };
                while next_sample < samples_sorted.len()
                    && samples_sorted[next_sample] <= t + 1e-14 * span.max(1.0)
                {
                    let ts = samples_sorted[next_sample].min(t);
                    let theta = ((ts - t_prev) / (t - t_prev)).clamp(0.0, 1.0);
                    let interp: Vec<f64> = u_prev
                        .iter()
                        .zip(u.iter())
                        .map(|(&a, &b)| a + theta * (b - a))
                        .collect();
                    samples.push((samples_sorted[next_sample], interp));
                    next_sample += 1;
                }
                if let Some(obs) = observer.as_mut() {
                    obs(&StepResult { t, dt, newton_iters, error_estimate: est }, &u);
                }
                let e = est.max(1e-10);
                let ph = p_hat(method);
                let fac = config.safety * e.powf(-0.7 / ph) * est_prev.powf(0.4 / ph);
                dt = (dt * fac.clamp(0.2, 5.0)).clamp(config.dt_min, config.dt_max);
                est_prev = e;
            }
            StepOutcome::ErrorTooLarge { est } => {
                rejected += 1;
                let ph = p_hat(method);
                let fac = (config.safety * est.max(1e-10).powf(-1.0 / ph)).clamp(0.1, 0.5);
                let dt_new = dt * fac;
                if dt_new < config.dt_min {
                    return Err(IntegrateError::StepSizeUnderflow { t, dt_min: config.dt_min });
                }
                dt = dt_new;
            }
            StepOutcome::NeedsSmallerStep { positivity } => {
                rejected += 1;
                if dt <= config.dt_min * 1.0000001 {
                    return Err(if positivity {
                        IntegrateError::PositivityLoss { t }
                    } else {
                        IntegrateError::StepSizeUnderflow { t, dt_min: config.dt_min }
                    });
                }
                dt = (dt * 0.5).max(config.dt_min);
            }
        }
    }

    // samples at t_end that the loop epsilon skipped
    while next_sample < samples_sorted.len() {
        samples.push((samples_sorted[next_sample], u.clone()));
        next_sample += 1;
    }

    Ok(Solution {
        t_final: t,
        u,
        steps_accepted: accepted,
        steps_rejected: rejected,
        newton_iters: ws.newton_iters,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{lambda4_optimal, lambda_general, EntropySpec, ModelParams};
    use crate::scheme1d::{AverageRule, SchemeVariant};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// u' = -u, dim 1.
    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, u: &[f64], out: &mut [f64]) -> bool {
            out[0] = -u[0];
            true
        }
    }

    /// u' = u (1 - u), logistic growth.
    struct Logistic;
    impl OdeSystem for Logistic {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, u: &[f64], out: &mut [f64]) -> bool {
            out[0] = u[0] * (1.0 - u[0]);
            true
        }
    }

    /// u' = -1; leaves the positive cone in finite time.
    struct Drain;
    impl OdeSystem for Drain {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, _u: &[f64], out: &mut [f64]) -> bool {
            out[0] = -1.0;
            true
        }
    }

    fn fixed_dt_config(method: Method, dt: f64) -> SolverConfig {
        SolverConfig {
            method,
            atol: 1.0,
            rtol: 1.0,
            dt_init: dt,
            dt_min: dt,
            dt_max: dt,
            newton_tol: 1e-10,
            newton_max_iter: 20,
            jacobian: JacobianKind::Dense,
            require_positive: false,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn implicit_euler_scalar_recurrence() {
        let dt = 0.1;
        let config = fixed_dt_config(Method::ImplicitEuler, dt);
        let sol = integrate(&Decay, &[1.0], 0.0, 0.5, &config, &[], None).unwrap();
        // implicit Euler with step doubling advances with the two-half-step
        // value: each accepted step multiplies by 1/(1 + dt/2)^2
        let per_step = 1.0 / (1.0 + dt / 2.0) / (1.0 + dt / 2.0);
        let expected = per_step.powi(5);
        assert_eq!(sol.steps_accepted, 5);
        assert!(
            (sol.u[0] - expected).abs() < 1e-9,
            "{} vs {}",
            sol.u[0],
            expected
        );
    }

    #[test]
    fn bdf2_scalar_recurrence() {
        let dt = 0.1;
        let config = fixed_dt_config(Method::Bdf2, dt);
        let sol = integrate(&Decay, &[1.0], 0.0, 0.3, &config, &[], None).unwrap();
        // starter step: implicit Euler via step doubling
        let u1 = 1.0 / (1.0 + dt / 2.0) / (1.0 + dt / 2.0);
        // then the uniform-step BDF2 recurrence u2 = (4 u1 - u0) / (3 + 2 dt)
        let u2 = (4.0 * u1 - 1.0) / (3.0 + 2.0 * dt);
        let u3 = (4.0 * u2 - u1) / (3.0 + 2.0 * dt);
        assert_eq!(sol.steps_accepted, 3);
        assert!((sol.u[0] - u3).abs() < 1e-9, "{} vs {}", sol.u[0], u3);
    }

    #[test]
    fn convergence_orders_on_logistic() {
        let exact = |t: f64| 1.0 / (1.0 + 9.0 * (-t as f64).exp());
        let run = |method: Method, dt: f64| {
            let config = fixed_dt_config(method, dt);
            let sol = integrate(&Logistic, &[0.1], 0.0, 1.0, &config, &[], None).unwrap();
            (sol.u[0] - exact(1.0)).abs()
        };
        let order = |method: Method, dt: f64| {
            let e1 = run(method, dt);
            let e2 = run(method, dt / 2.0);
            (e1 / e2).log2()
        };
        // step doubling estimates the error but leaves the order at one
        let p_ie = order(Method::ImplicitEuler, 0.05);
        assert!((0.8..1.4).contains(&p_ie), "IE order {p_ie}");
        let p_bdf = order(Method::Bdf2, 0.05);
        assert!((1.6..2.6).contains(&p_bdf), "BDF2 order {p_bdf}");
        let p_rk = order(Method::ExplicitRk45, 0.2);
        assert!((4.0..6.5).contains(&p_rk), "RK45 order {p_rk}");
    }

    #[test]
    fn positivity_loss_is_detected() {
        for method in [Method::ImplicitEuler, Method::Bdf2, Method::ExplicitRk45] {
            let config = SolverConfig {
                method,
                atol: 1e-8,
                rtol: 1e-6,
                dt_init: 0.05,
                dt_min: 1e-10,
                jacobian: JacobianKind::Dense,
                ..SolverConfig::default()
            };
            let err = integrate(&Drain, &[0.04], 0.0, 1.0, &config, &[], None).unwrap_err();
            assert!(
                matches!(err, IntegrateError::PositivityLoss { .. }),
                "{method:?}: {err:?}"
            );
        }
    }

    #[test]
    fn nonpositive_initial_state_is_rejected() {
        let config = SolverConfig { jacobian: JacobianKind::Dense, ..SolverConfig::default() };
        let err = integrate(&Decay, &[-1.0], 0.0, 1.0, &config, &[], None).unwrap_err();
        assert!(matches!(err, IntegrateError::NonpositiveInitial { index: 0 }));
    }

    #[test]
    fn max_steps_is_enforced() {
        let config = SolverConfig {
            method: Method::ExplicitRk45,
            max_steps: 3,
            dt_init: 1e-6,
            dt_max: 1e-6,
            jacobian: JacobianKind::Dense,
            require_positive: false,
            ..SolverConfig::default()
        };
        let err = integrate(&Decay, &[1.0], 0.0, 1.0, &config, &[], None).unwrap_err();
        assert!(matches!(err, IntegrateError::MaxStepsExceeded { .. }));
    }

    fn thin_film_setup() -> (SchemeConfig, TorusGrid, Vec<f64>) {
        let entropy = EntropySpec::new(0.0).unwrap();
        let model = ModelParams::thin_film(2.0).unwrap();
        let lambdas = lambda_general(entropy, model, lambda4_optimal(entropy, model)).unwrap();
        let config = SchemeConfig::new(
            entropy,
            model,
            lambdas,
            SchemeVariant::Central,
            AverageRule::Identity,
        )
        .unwrap();
        let n = 32;
        let grid = TorusGrid::unit_1d(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u: Vec<f64> = (0..n)
            .map(|i| {
                1.0 + 0.4 * (std::f64::consts::TAU * i as f64 / n as f64).sin()
                    + 0.05 * rng.gen_range(-1.0..1.0)
            })
            .collect();
        (config, grid, u)
    }

    #[test]
    fn stiff_run_conserves_mass_and_dissipates_entropy() {
        let (config, grid, u0) = thin_film_setup();
        let system = Scheme1DSystem { config: &config, grid: &grid };
        let solver = SolverConfig {
            method: Method::Bdf2,
            atol: 1e-10,
            rtol: 1e-8,
            jacobian: JacobianKind::Banded { bandwidth: 2 },
            ..SolverConfig::default()
        };
        let mut entropies: Vec<f64> = Vec::new();
        let h = grid.h();
        let mut observer = |_r: &StepResult, u: &[f64]| {
            let s: f64 = u.iter().map(|&x| -x.ln()).sum::<f64>() * h;
            entropies.push(s);
        };
        let sol = integrate(
            &system,
            &u0,
            0.0,
            2e-5,
            &solver,
            &[1e-5],
            Some(&mut observer),
        )
        .unwrap();
        assert!((sol.t_final - 2e-5).abs() < 1e-18);
        assert!(all_positive(&sol.u));
        let mass0: f64 = u0.iter().sum::<f64>() * h;
        let mass1: f64 = sol.u.iter().sum::<f64>() * h;
        assert!((mass1 - mass0).abs() < 1e-10 * mass0.abs());
        for w in entropies.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "entropy rose: {} -> {}", w[0], w[1]);
        }
        assert_eq!(sol.samples.len(), 1);
        assert!(sol.samples[0].0 == 1e-5);
        assert!(sol.steps_accepted > 0 && sol.newton_iters > 0);
    }

    #[test]
    fn jacobian_kinds_agree() {
        let (config, grid, u0) = thin_film_setup();
        let system = Scheme1DSystem { config: &config, grid: &grid };
        let run = |jac: JacobianKind| {
            let solver = SolverConfig {
                method: Method::Bdf2,
                atol: 1e-10,
                rtol: 1e-8,
                jacobian: jac,
                ..SolverConfig::default()
            };
            integrate(&system, &u0, 0.0, 5e-6, &solver, &[], None).unwrap().u
        };
        let reference = run(JacobianKind::Dense);
        for jac in [
            JacobianKind::Banded { bandwidth: 2 },
            JacobianKind::Sparse,
            JacobianKind::MatrixFree,
        ] {
            let got = run(jac.clone());
            let err = wrms(
                &got.iter().zip(reference.iter()).map(|(a, b)| a - b).collect::<Vec<_>>(),
                &reference,
                1e-8,
                1e-6,
            );
            assert!(err < 0.5, "{jac:?} deviates: wrms {err}");
        }
    }

    #[test]
    fn dense_output_interpolates_between_steps() {
        // u' = -u; dt_max keeps the interpolation intervals short enough
        // for the linear dense output to stay within 1e-4
        let config = SolverConfig {
            method: Method::ExplicitRk45,
            atol: 1e-9,
            rtol: 1e-9,
            dt_max: 0.02,
            jacobian: JacobianKind::Dense,
            ..SolverConfig::default()
        };
        let times = [0.1, 0.25, 0.5, 0.75, 1.0];
        let sol = integrate(&Decay, &[1.0], 0.0, 1.0, &config, &times, None).unwrap();
        assert_eq!(sol.samples.len(), times.len());
        for (ts, us) in &sol.samples {
            assert!((us[0] - (-ts).exp()).abs() < 1e-4, "t={ts}");
        }
    }

    #[test]
    fn invalid_configuration_is_reported() {
        let config = SolverConfig { atol: 0.0, ..SolverConfig::default() };
        let err = integrate(&Decay, &[1.0], 0.0, 1.0, &config, &[], None).unwrap_err();
        assert!(matches!(err, IntegrateError::InvalidConfig { .. }));
        let config = SolverConfig { dt_min: 1e-3, dt_max: 1e-6, ..SolverConfig::default() };
        let err = integrate(&Decay, &[1.0], 0.0, 1.0, &config, &[], None).unwrap_err();
        assert!(matches!(err, IntegrateError::InvalidConfig { .. }));
    }
}
