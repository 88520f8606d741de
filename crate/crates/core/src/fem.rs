//! Linear finite element reference solver for the Poisson, screened Poisson
//! and linear elastic models. Dirichlet data is imposed by elimination.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::mesh::{GAMMA_T, GAMMA_U};
use crate::problem::{post_fields, DemProblem, SolveError, SolveResult, SolverKind, StopReason};

/// Relative residual the conjugate gradient iteration aims for.
pub const CG_TOLERANCE: f64 = 1e-12;
/// Largest residual still accepted as converged.
pub const CG_ACCEPT: f64 = 1e-10;
/// Systems below this size fall back to a dense factorization when the
/// iteration fails.
pub const DENSE_FALLBACK: usize = 500;

/// Square sparse matrix in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries. The result does not depend on triplet order
    /// beyond floating point summation order, which follows the input.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(r, c, v) in triplets {
            *rows[r].entry(c).or_insert(0.0) += v;
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }
}

/// Stiffness matrix, load vector and Dirichlet constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// `(dof, value)`
    pub constraints: Vec<(usize, f64)>,
}

/// System over the unconstrained dofs, with the map back to the full one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Full dof index of each reduced unknown.
    pub free: Vec<usize>,
    /// Prescribed value per full dof (`None` when free).
    pub fixed: Vec<Option<f64>>,
}

impl ReducedSystem {
    /// Full solution vector from the reduced one.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (k, &dof) in self.free.iter().enumerate() {
            out[dof] = reduced[k];
        }
        out
    }
}

/// Assembles stiffness and loads over the problem's quadrature tables.
pub fn assemble(problem: &DemProblem) -> Result<SparseSystem, SolveError> {
    problem.validate()?;
    let m = &problem.material;
    if !m.is_linear() {
        return Err(SolveError::UnsupportedModel(m.name()));
    }
    let dim = problem.dim();
    let c = problem.components();
    let n = problem.mesh.node_count() * c;
    let screening = match m {
        crate::material::MaterialModel::ScreenedPoisson { k } => k * k,
        _ => 0.0,
    };
    let lame = m.elastic_lame(dim);

    let domain = &problem.tables.domain;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    let body = match &problem.body_force {
        Some(v) => v.sample(domain.points())?,
        None => Vec::new(),
    };
    for p in 0..domain.len() {
        let w = domain.weight(p);
        let nodes = domain.nodes(p);
        let grads = domain.grads(p);
        let shape = domain.shape(p);
        for (a, &na) in nodes.iter().enumerate() {
            for (b, &nb) in nodes.iter().enumerate() {
                let ga = grads[a];
                let gb = grads[b];
                match lame {
                    None => {
                        let dot: f64 = (0..dim).map(|k| ga[k] * gb[k]).sum();
                        let v = w * (dot + screening * shape[a] * shape[b]);
                        triplets.push((na, nb, v));
                    }
                    Some((lambda, mu)) => {
                        let dot: f64 = (0..dim).map(|k| ga[k] * gb[k]).sum();
                        for i in 0..dim {
                            for j in 0..dim {
                                let mut v = lambda * ga[i] * gb[j] + mu * ga[j] * gb[i];
                                if i == j {
                                    v += mu * dot;
                                }
                                triplets.push((na * c + i, nb * c + j, w * v));
                            }
                        }
                    }
                }
            }
            if !body.is_empty() {
                for i in 0..c {
                    rhs[na * c + i] += w * body[p * c + i] * shape[a];
                }
            }
        }
    }
    if let (Some(t), Some(table)) = (&problem.traction, problem.tables.boundary(GAMMA_T)) {
        let values = t.sample(table.points())?;
        for p in 0..table.len() {
            let w = table.weight(p);
            for (&node, &s) in table.nodes(p).iter().zip(table.shape(p)) {
                for i in 0..c {
                    rhs[node * c + i] += w * values[p * c + i] * s;
                }
            }
        }
    }

    let mut constraints = Vec::new();
    if let Some(d) = &problem.dirichlet {
        let nodes = problem.mesh.group_nodes(GAMMA_U);
        let points: Vec<_> = nodes.iter().map(|&i| problem.mesh.nodes[i]).collect();
        let values = d.value.sample(&points)?;
        for (k, &node) in nodes.iter().enumerate() {
            for i in 0..c {
                constraints.push((node * c + i, values[k * c + i]));
            }
        }
    }
    Ok(SparseSystem {
        matrix: CsrMatrix::from_triplets(n, &triplets),
        rhs,
        constraints,
    })
}

/// Eliminates constrained dofs, moving their contribution to the right-hand
/// side.
pub fn constrain(system: &SparseSystem) -> Result<ReducedSystem, SolveError> {
    let n = system.matrix.n();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &(dof, value) in &system.constraints {
        if dof >= n {
            return Err(SolveError::InvalidProblem(format!("constraint on dof {dof} of {n}")));
        }
        match fixed[dof] {
            Some(prev) if prev != value => {
                return Err(SolveError::DuplicateConstraint {
                    dof,
                    first: prev,
                    second: value,
                })
            }
            _ => fixed[dof] = Some(value),
        }
    }
    let free: Vec<usize> = (0..n).filter(|&d| fixed[d].is_none()).collect();
    let mut index = vec![usize::MAX; n];
    for (k, &d) in free.iter().enumerate() {
        index[d] = k;
    }
    let mut triplets = Vec::new();
    let mut rhs = Vec::with_capacity(free.len());
    for &r in &free {
        let mut b = system.rhs[r];
        for (c, v) in system.matrix.row(r) {
            match fixed[c] {
                Some(value) => b -= v * value,
                None => triplets.push((index[r], index[c], v)),
            }
        }
        rhs.push(b);
    }
    Ok(ReducedSystem {
        matrix: CsrMatrix::from_triplets(free.len(), &triplets),
        rhs,
        free,
        fixed,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients. Returns the solution and the
/// final relative residual, or `None` on breakdown (non-positive curvature
/// or diagonal).
fn pcg(a: &CsrMatrix, b: &[f64], max_iter: usize) -> (Option<Vec<f64>>, usize, f64) {
    let n = a.n();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (Some(vec![0.0; n]), 0, 0.0);
    }
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return (None, 0, 1.0);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return (None, it, rel);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bnorm;
        if rel < CG_TOLERANCE {
            return (Some(x), it + 1, rel);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (if rel < CG_ACCEPT { Some(x) } else { None }, max_iter, rel)
}

/// Solves a symmetric positive definite system.
pub fn solve_system(matrix: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    let n = matrix.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    let max_iter = 10 * n + 100;
    let (x, iterations, residual) = pcg(matrix, rhs, max_iter);
    if let Some(x) = x {
        return Ok(x);
    }
    if n < DENSE_FALLBACK {
        if let Some(chol) = matrix.to_dense().cholesky() {
            return Ok(chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec());
        }
    }
    Err(SolveError::NoConvergence { iterations, residual })
}

/// Assemble, constrain, solve, post-process.
pub fn fem_solve(problem: &DemProblem) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let system = assemble(problem)?;
    let reduced = constrain(&system)?;
    let x = solve_system(&reduced.matrix, &reduced.rhs)?;
    let solution = reduced.expand(&x);
    let c = problem.components();
    let fields = post_fields(&problem.material, &problem.tables.domain, &solution, c)?;
    let final_loss = crate::dem::LossContext::new(problem)?.loss(&solution)?.0.total;
    Ok(SolveResult {
        solver: SolverKind::Fem,
        components: c,
        solution,
        history: Vec::new(),
        stop_reason: StopReason::Solved,
        fields,
        wall_time: start.elapsed(),
        final_loss,
        normalization: None,
        networks: None,
        particular_mse: None,
    })
}
