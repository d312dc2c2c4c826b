//! Infeasible primal–dual path-following method with the HKM search
//! direction and Mehrotra's predictor–corrector.

use nalgebra::{DMatrix, DVector};

use super::{project_complex, ConicProgram, ConicSolver, Solution, SolveStatus};

/// Final acceptance thresholds, independent of the stopping tolerance.
const ACCEPT_GAP: f64 = 1e-6;
const ACCEPT_RESIDUAL: f64 = 1e-7;
const ACCEPT_PSD: f64 = 1e-7;
const DEPENDENCE_TOL: f64 = 1e-9;
const DIVERGENCE: f64 = 1e12;
const REFINEMENT_STEPS: usize = 2;
/// Relative Schur-system residual above which a search direction is rejected.
const DIRECTION_ACCURACY: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct InteriorPointSolver {
    pub tol: f64,
    pub max_iterations: usize,
    pub step_fraction: f64,
}

impl Default for InteriorPointSolver {
    fn default() -> Self {
        InteriorPointSolver { tol: super::default_tolerance(), max_iterations: 120, step_fraction: 0.95 }
    }
}

impl InteriorPointSolver {
    pub fn with_tolerance(tol: f64) -> Self {
        InteriorPointSolver { tol, ..Self::default() }
    }
}

impl ConicSolver for InteriorPointSolver {
    fn solve(&self, program: &ConicProgram) -> Solution {
        let reduced = match Reduced::new(program) {
            Ok(r) => r,
            Err(status) => {
                let solution = failed(program, status);
                super::record(&solution);
                return solution;
            }
        };
        let mut run = Iterate::start(&reduced);
        let outcome = run.iterate(&reduced, self);
        let mut solution = reduced.expand(program, &run);
        solution.status = match outcome {
            Outcome::Diverged(status) => status,
            Outcome::Finished => acceptance(program, &solution),
        };
        super::record(&solution);
        solution
    }
}

fn failed(program: &ConicProgram, status: SolveStatus) -> Solution {
    Solution {
        status,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        free: vec![0.0; program.free_count()],
        blocks: program.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect(),
        duals: vec![0.0; program.rows.len()],
        slacks: program.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect(),
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
    }
}

/// Checks the returned point against the original, unreduced program.
fn acceptance(program: &ConicProgram, sol: &Solution) -> SolveStatus {
    let scale_b = program.rows.iter().fold(1.0_f64, |acc, r| acc.max(r.rhs.abs()));
    let scale_c = program
        .blocks
        .iter()
        .map(|b| b.cost.abs().max())
        .chain(program.free_cost.iter().map(|c| c.abs()))
        .fold(1.0_f64, f64::max);
    let gap = sol.gap();
    let min_eig = sol
        .blocks
        .iter()
        .chain(sol.slacks.iter())
        .map(|m| if m.nrows() == 0 { 0.0 } else { m.clone().symmetric_eigen().eigenvalues.min() })
        .fold(f64::INFINITY, f64::min);
    let finite = sol.primal_objective.is_finite() && sol.dual_objective.is_finite();
    if finite
        && gap <= ACCEPT_GAP
        && sol.primal_residual <= ACCEPT_RESIDUAL * scale_b
        && sol.dual_residual <= ACCEPT_RESIDUAL * scale_c
        && min_eig >= -ACCEPT_PSD
    {
        SolveStatus::Optimal
    } else {
        SolveStatus::NumericalFailure
    }
}

struct BlockRow {
    row: usize,
    dense: DMatrix<f64>,
    entries: Vec<(usize, usize, f64)>,
}

/// The program after removing dependent rows and redundant free columns.
struct Reduced {
    free_kept: Vec<usize>,
    free_cost: DVector<f64>,
    /// `a_free[(i, k)]`: coefficient of kept free variable `k` in kept row `i`.
    a_free: DMatrix<f64>,
    rows_kept: Vec<usize>,
    b: DVector<f64>,
    sizes: Vec<usize>,
    complex: Vec<bool>,
    costs: Vec<DMatrix<f64>>,
    by_block: Vec<Vec<BlockRow>>,
}

/// Modified Gram–Schmidt with one reorthogonalization pass. Returns the
/// indices of independent vectors and, for every dependent vector `k`, the
/// coefficients of a null combination `Σ_l c_l v_l ≈ 0` with `c_k = 1`.
fn dependence(vectors: &[DVector<f64>]) -> (Vec<usize>, Vec<(usize, DVector<f64>)>) {
    let n = vectors.len();
    let mut basis: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    let mut independent = Vec::new();
    let mut dependent = Vec::new();
    for (k, v) in vectors.iter().enumerate() {
        let norm0 = v.norm();
        let mut r = v.clone();
        let mut combo = DVector::zeros(n);
        combo[k] = 1.0;
        for _ in 0..2 {
            for (q, t) in &basis {
                let alpha = q.dot(&r);
                r.axpy(-alpha, q, 1.0);
                combo.axpy(-alpha, t, 1.0);
            }
        }
        let rn = r.norm();
        if norm0 == 0.0 || rn <= DEPENDENCE_TOL * norm0 {
            dependent.push((k, combo));
        } else {
            basis.push((r / rn, combo / rn));
            independent.push(k);
        }
    }
    (independent, dependent)
}

impl Reduced {
    fn new(p: &ConicProgram) -> Result<Self, SolveStatus> {
        let m = p.rows.len();
        let nf = p.free_count();
        let sizes: Vec<usize> = p.blocks.iter().map(|b| b.size).collect();

        // redundant free columns: fixed at zero unless the cost sees the null direction
        let columns: Vec<DVector<f64>> = (0..nf)
            .map(|k| {
                let mut col = DVector::zeros(m);
                for (i, row) in p.rows.iter().enumerate() {
                    for &(kk, v) in &row.free {
                        if kk == k {
                            col[i] += v;
                        }
                    }
                }
                col
            })
            .collect();
        let (free_kept, free_null) = dependence(&columns);
        let cost = DVector::from_column_slice(&p.free_cost);
        let cost_scale = 1.0 + cost.norm();
        for (_, combo) in &free_null {
            if combo.dot(&cost).abs() > 1e-9 * cost_scale * combo.norm() {
                return Err(SolveStatus::Unbounded);
            }
        }
        let mut free_index = vec![usize::MAX; nf];
        for (kk, &k) in free_kept.iter().enumerate() {
            free_index[k] = kk;
        }

        // dependent rows: dropped if consistent, otherwise the program is infeasible
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(free_kept.len(), |acc, &s| {
                let o = *acc;
                *acc += s * (s + 1) / 2;
                Some(o)
            })
            .collect();
        let width = sizes.iter().map(|s| s * (s + 1) / 2).sum::<usize>() + free_kept.len();
        let row_vectors: Vec<DVector<f64>> = p
            .rows
            .iter()
            .map(|row| {
                let mut v = DVector::zeros(width);
                for &(k, c) in &row.free {
                    if free_index[k] != usize::MAX {
                        v[free_index[k]] += c;
                    }
                }
                for &(j, r, c, val) in &row.entries {
                    let tri = c * (c + 1) / 2 + r;
                    let weight = if r == c { 1.0 } else { std::f64::consts::SQRT_2 };
                    v[offsets[j] + tri] += weight * val;
                }
                v
            })
            .collect();
        let (rows_kept, row_null) = dependence(&row_vectors);
        let b_all = DVector::from_iterator(m, p.rows.iter().map(|r| r.rhs));
        let b_scale = 1.0 + b_all.norm();
        for (_, combo) in &row_null {
            if combo.dot(&b_all).abs() > 1e-8 * b_scale * combo.norm() {
                return Err(SolveStatus::Infeasible);
            }
        }

        let mk = rows_kept.len();
        let mut a_free = DMatrix::zeros(mk, free_kept.len());
        let mut by_block: Vec<Vec<BlockRow>> = sizes.iter().map(|_| Vec::new()).collect();
        for (ii, &i) in rows_kept.iter().enumerate() {
            let row = &p.rows[i];
            for &(k, c) in &row.free {
                if free_index[k] != usize::MAX {
                    a_free[(ii, free_index[k])] += c;
                }
            }
            let mut touched: Vec<usize> = row.entries.iter().map(|e| e.0).collect();
            touched.sort_unstable();
            touched.dedup();
            for j in touched {
                let mut dense = DMatrix::zeros(sizes[j], sizes[j]);
                for &(jj, r, c, val) in &row.entries {
                    if jj == j {
                        dense[(r, c)] += val;
                        if r != c {
                            dense[(c, r)] += val;
                        }
                    }
                }
                let mut entries = Vec::new();
                for c in 0..sizes[j] {
                    for r in 0..=c {
                        if dense[(r, c)] != 0.0 {
                            entries.push((r, c, dense[(r, c)]));
                        }
                    }
                }
                by_block[j].push(BlockRow { row: ii, dense, entries });
            }
        }
        let free_cost = DVector::from_iterator(free_kept.len(), free_kept.iter().map(|&k| p.free_cost[k]));
        Ok(Reduced {
            free_kept,
            free_cost,
            a_free,
            rows_kept: rows_kept.clone(),
            b: DVector::from_iterator(mk, rows_kept.iter().map(|&i| p.rows[i].rhs)),
            sizes,
            complex: p.blocks.iter().map(|b| b.complex).collect(),
            costs: p.blocks.iter().map(|b| b.cost.clone()).collect(),
            by_block,
        })
    }

    fn m(&self) -> usize {
        self.rows_kept.len()
    }

    fn nf(&self) -> usize {
        self.free_kept.len()
    }

    /// `A(X)` over kept rows, blocks only.
    fn apply(&self, xs: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (j, rows) in self.by_block.iter().enumerate() {
            for br in rows {
                out[br.row] += trace_sym(&br.entries, &xs[j]);
            }
        }
        out
    }

    /// `Σ_i y_i A_ij` for every block.
    fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.by_block
            .iter()
            .zip(&self.sizes)
            .map(|(rows, &s)| {
                let mut acc = DMatrix::zeros(s, s);
                for br in rows {
                    acc += &br.dense * y[br.row];
                }
                acc
            })
            .collect()
    }

    fn expand(&self, p: &ConicProgram, it: &Iterate) -> Solution {
        let mut free = vec![0.0; p.free_count()];
        for (kk, &k) in self.free_kept.iter().enumerate() {
            free[k] = it.x[kk];
        }
        let mut duals = vec![0.0; p.rows.len()];
        for (ii, &i) in self.rows_kept.iter().enumerate() {
            duals[i] = it.y[ii];
        }
        let primal_objective = p.free_cost.iter().zip(&free).map(|(c, x)| c * x).sum::<f64>()
            + p.blocks.iter().zip(&it.xs).map(|(b, x)| b.cost.dot(x)).sum::<f64>();
        let dual_objective = p.rows.iter().zip(&duals).map(|(r, y)| r.rhs * y).sum::<f64>();
        let primal_residual = (0..p.rows.len())
            .map(|i| (p.row_value(i, &free, &it.xs) - p.rows[i].rhs).abs())
            .fold(0.0, f64::max);
        // dual residual measured on the original rows, with dropped rows at zero
        let mut free_res = DVector::from_column_slice(&p.free_cost);
        let mut block_res: Vec<DMatrix<f64>> =
            p.blocks.iter().zip(&it.zs).map(|(b, z)| &b.cost - z).collect();
        for (row, &y) in p.rows.iter().zip(&duals) {
            for &(k, v) in &row.free {
                free_res[k] -= y * v;
            }
            for &(j, r, c, v) in &row.entries {
                block_res[j][(r, c)] -= y * v;
                if r != c {
                    block_res[j][(c, r)] -= y * v;
                }
            }
        }
        let dual_residual = block_res
            .iter()
            .map(|m| m.abs().max())
            .chain(free_res.iter().map(|v| v.abs()))
            .fold(0.0, f64::max);
        Solution {
            status: SolveStatus::NumericalFailure,
            primal_objective,
            dual_objective,
            free,
            blocks: it.xs.clone(),
            duals,
            slacks: it.zs.clone(),
            iterations: it.iterations,
            primal_residual,
            dual_residual,
        }
    }
}

/// `<A, X>` for a symmetric `A` given by its upper-triangular entries.
fn trace_sym(entries: &[(usize, usize, f64)], x: &DMatrix<f64>) -> f64 {
    entries
        .iter()
        .map(|&(r, c, v)| if r == c { v * x[(r, r)] } else { v * (x[(r, c)] + x[(c, r)]) })
        .sum()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest `α` with `X + α·dX ⪰ 0` (infinite if no limit).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    let l = chol.l();
    let linv = l.solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows()))?;
    let mut s = &linv * dx * linv.transpose();
    symmetrize(&mut s);
    let lambda = s.symmetric_eigen().eigenvalues.min();
    Some(if lambda >= 0.0 { f64::INFINITY } else { -1.0 / lambda })
}

enum Outcome {
    Finished,
    Diverged(SolveStatus),
}

struct Direction {
    dxs: Vec<DMatrix<f64>>,
    dzs: Vec<DMatrix<f64>>,
    dx: DVector<f64>,
    dy: DVector<f64>,
}

#[derive(Clone)]
struct Iterate {
    xs: Vec<DMatrix<f64>>,
    zs: Vec<DMatrix<f64>>,
    x: DVector<f64>,
    y: DVector<f64>,
    iterations: usize,
}

impl Iterate {
    fn start(r: &Reduced) -> Self {
        let mut xs = Vec::new();
        let mut zs = Vec::new();
        for (j, &n) in r.sizes.iter().enumerate() {
            let nf = n as f64;
            let mut xi: f64 = 10f64.max(nf.sqrt());
            let mut zeta: f64 = 10f64.max(nf.sqrt()).max(r.costs[j].norm());
            for br in &r.by_block[j] {
                let an = br.dense.norm();
                xi = xi.max(nf * (1.0 + r.b[br.row].abs()) / (1.0 + an));
                zeta = zeta.max(an);
            }
            xs.push(DMatrix::identity(n, n) * xi);
            zs.push(DMatrix::identity(n, n) * zeta);
        }
        Iterate { xs, zs, x: DVector::zeros(r.nf()), y: DVector::zeros(r.m()), iterations: 0 }
    }

    fn iterate(&mut self, r: &Reduced, cfg: &InteriorPointSolver) -> Outcome {
        let n_total: usize = r.sizes.iter().sum();
        let b_norm = 1.0 + r.b.norm();
        let c_norm = 1.0 + r.costs.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt() + r.free_cost.norm();
        let mut stalled = 0;
        let mut best: Option<(f64, Iterate)> = None;
        for it in 0..cfg.max_iterations {
            self.iterations = it;
            let rp = &r.b - r.apply(&self.xs) - &r.a_free * &self.x;
            let aty = r.adjoint(&self.y);
            let rd: Vec<DMatrix<f64>> =
                (0..r.sizes.len()).map(|j| &r.costs[j] - &self.zs[j] - &aty[j]).collect();
            let rf = &r.free_cost - r.a_free.transpose() * &self.y;
            let pobj = r.free_cost.dot(&self.x) + r.costs.iter().zip(&self.xs).map(|(c, x)| c.dot(x)).sum::<f64>();
            let dobj = r.b.dot(&self.y);
            let mu = if n_total == 0 {
                0.0
            } else {
                self.xs.iter().zip(&self.zs).map(|(x, z)| x.dot(z)).sum::<f64>() / n_total as f64
            };
            let pinf = rp.norm() / b_norm;
            let dinf = (rd.iter().map(|m| m.norm_squared()).sum::<f64>() + rf.norm_squared()).sqrt() / c_norm;
            let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if relgap < cfg.tol && pinf < cfg.tol && dinf < cfg.tol {
                return Outcome::Finished;
            }
            let merit = relgap.max(pinf).max(dinf);
            if merit.is_finite() && best.as_ref().is_none_or(|(m, _)| merit < *m) {
                best = Some((merit, self.clone()));
            }
            let x_norm = self.xs.iter().map(|x| x.norm()).fold(self.x.amax(), f64::max);
            if x_norm > DIVERGENCE && dinf < 1e-6 && pobj < -DIVERGENCE.sqrt() {
                return Outcome::Diverged(SolveStatus::Unbounded);
            }
            if self.y.amax() > DIVERGENCE && pinf > 1e-6 && dobj > DIVERGENCE.sqrt() {
                return Outcome::Diverged(SolveStatus::Infeasible);
            }
            if !pobj.is_finite() || !dobj.is_finite() {
                return self.fall_back(best);
            }

            let Some(newton) = Newton::factor(r, &self.xs, &self.zs) else {
                return self.fall_back(best);
            };
            let rc_aff: Vec<DMatrix<f64>> = self.xs.iter().zip(&self.zs).map(|(x, z)| -(x * z)).collect();
            let Some(aff) = newton.direction(r, &self.xs, &rp, &rd, &rf, &rc_aff) else {
                return self.fall_back(best);
            };
            let Some((ap, ad)) = self.step_lengths(&aff, 1.0) else {
                return self.fall_back(best);
            };
            let mu_aff = if n_total == 0 {
                0.0
            } else {
                self.xs
                    .iter()
                    .zip(&self.zs)
                    .enumerate()
                    .map(|(j, (x, z))| (x + &aff.dxs[j] * ap).dot(&(z + &aff.dzs[j] * ad)))
                    .sum::<f64>()
                    / n_total as f64
            };
            let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
            let rc: Vec<DMatrix<f64>> = (0..r.sizes.len())
                .map(|j| {
                    let n = r.sizes[j];
                    DMatrix::identity(n, n) * (sigma * mu) - &self.xs[j] * &self.zs[j] - &aff.dxs[j] * &aff.dzs[j]
                })
                .collect();
            let Some(dir) = newton.direction(r, &self.xs, &rp, &rd, &rf, &rc) else {
                return self.fall_back(best);
            };
            let Some((ap, ad)) = self.step_lengths(&dir, cfg.step_fraction) else {
                return self.fall_back(best);
            };
            for j in 0..r.sizes.len() {
                self.xs[j] += &dir.dxs[j] * ap;
                self.zs[j] += &dir.dzs[j] * ad;
                symmetrize(&mut self.xs[j]);
                symmetrize(&mut self.zs[j]);
                if r.complex[j] {
                    project_complex(&mut self.xs[j]);
                    project_complex(&mut self.zs[j]);
                }
            }
            self.x.axpy(ap, &dir.dx, 1.0);
            self.y.axpy(ad, &dir.dy, 1.0);
            if ap.max(ad) < 1e-10 {
                stalled += 1;
                if stalled >= 3 {
                    return self.fall_back(best);
                }
            } else {
                stalled = 0;
            }
        }
        self.iterations = cfg.max_iterations;
        self.fall_back(best)
    }

    /// Restores the best iterate seen, keeping the iteration count.
    fn fall_back(&mut self, best: Option<(f64, Iterate)>) -> Outcome {
        if let Some((_, it)) = best {
            let iterations = self.iterations;
            *self = it;
            self.iterations = iterations;
        }
        Outcome::Finished
    }

    fn step_lengths(&self, d: &Direction, fraction: f64) -> Option<(f64, f64)> {
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for j in 0..self.xs.len() {
            ap = ap.min(max_step(&self.xs[j], &d.dxs[j])?);
            ad = ad.min(max_step(&self.zs[j], &d.dzs[j])?);
        }
        Some(((fraction * ap).min(1.0), (fraction * ad).min(1.0)))
    }
}

/// Factored Newton system for one iteration.
struct Newton {
    zinv: Vec<DMatrix<f64>>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Newton {
    fn factor(r: &Reduced, xs: &[DMatrix<f64>], zs: &[DMatrix<f64>]) -> Option<Self> {
        let m = r.m();
        let nf = r.nf();
        let mut zinv = Vec::with_capacity(zs.len());
        for z in zs {
            let mut inv = z.clone().cholesky()?.inverse();
            symmetrize(&mut inv);
            zinv.push(inv);
        }
        let mut schur = DMatrix::zeros(m + nf, m + nf);
        for (j, rows) in r.by_block.iter().enumerate() {
            for bk in rows {
                let w = &xs[j] * &bk.dense * &zinv[j];
                for bi in rows {
                    schur[(bi.row, bk.row)] += trace_sym(&bi.entries, &w);
                }
            }
        }
        for i in 0..m {
            for k in (i + 1)..m {
                let v = 0.5 * (schur[(i, k)] + schur[(k, i)]);
                schur[(i, k)] = v;
                schur[(k, i)] = v;
            }
        }
        for i in 0..m {
            for k in 0..nf {
                schur[(i, m + k)] = r.a_free[(i, k)];
                schur[(m + k, i)] = r.a_free[(i, k)];
            }
        }
        let lu = schur.clone().lu();
        if lu.is_invertible() && lu.u().diagonal().iter().all(|v| v.is_finite()) {
            return Some(Newton { zinv, lu });
        }
        let reg = 1e-12 * (0..m).map(|i| schur[(i, i)].abs()).fold(1.0, f64::max);
        for i in 0..m {
            schur[(i, i)] += reg;
        }
        for k in 0..nf {
            schur[(m + k, m + k)] -= reg;
        }
        let lu = schur.lu();
        lu.is_invertible().then_some(Newton { zinv, lu })
    }

    fn direction(
        &self,
        r: &Reduced,
        xs: &[DMatrix<f64>],
        rp: &DVector<f64>,
        rd: &[DMatrix<f64>],
        rf: &DVector<f64>,
        rc: &[DMatrix<f64>],
    ) -> Option<Direction> {
        let m = r.m();
        let nf = r.nf();
        let g: Vec<DMatrix<f64>> =
            (0..xs.len()).map(|j| (&rc[j] - &xs[j] * &rd[j]) * &self.zinv[j]).collect();
        let h = rp - r.apply(&g);
        let mut rhs = DVector::zeros(m + nf);
        rhs.rows_mut(0, m).copy_from(&h);
        rhs.rows_mut(m, nf).copy_from(rf);
        let mut sol = self.lu.solve(&rhs)?;
        let scale = rhs.amax().max(f64::MIN_POSITIVE);
        for step in 0..=REFINEMENT_STEPS {
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let dy = sol.rows(0, m).into_owned();
            let dx = sol.rows(m, nf).into_owned();
            let aty = r.adjoint(&dy);
            let lifted: Vec<DMatrix<f64>> = (0..xs.len()).map(|j| &xs[j] * &aty[j] * &self.zinv[j]).collect();
            let mut residual = DVector::zeros(m + nf);
            residual.rows_mut(0, m).copy_from(&(&h - r.apply(&lifted) - &r.a_free * &dx));
            residual.rows_mut(m, nf).copy_from(&(rf - r.a_free.transpose() * &dy));
            let err = residual.amax() / scale;
            if err <= f64::EPSILON {
                break;
            }
            if step == REFINEMENT_STEPS {
                if err > DIRECTION_ACCURACY {
                    return None;
                }
                break;
            }
            sol += self.lu.solve(&residual)?;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dy = sol.rows(0, m).into_owned();
        let dx = sol.rows(m, nf).into_owned();
        let aty = r.adjoint(&dy);
        let mut dzs = Vec::with_capacity(xs.len());
        let mut dxs = Vec::with_capacity(xs.len());
        for j in 0..xs.len() {
            let dz = &rd[j] - &aty[j];
            let mut dxj = (&rc[j] - &xs[j] * &dz) * &self.zinv[j];
            symmetrize(&mut dxj);
            dxs.push(dxj);
            dzs.push(dz);
        }
        Some(Direction { dxs, dzs, dx, dy })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{solve, Row};

    /// `min <C, X>` over unit-trace `X ⪰ 0` is the smallest eigenvalue of `C`.
    #[test]
    fn minimum_eigenvalue_program() {
        let mut p = ConicProgram::default();
        let j = p.add_block(2, false);
        p.blocks[j].cost = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let mut row = Row { rhs: 1.0, ..Row::default() };
        row.add_entry(j, 0, 0, 1.0);
        row.add_entry(j, 1, 1, 1.0);
        p.rows.push(row);
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        let expected = 1.5 - 0.5f64.sqrt();
        assert!((sol.primal_objective - expected).abs() < 1e-8);
        assert!((sol.dual_objective - expected).abs() < 1e-8);
    }

    #[test]
    fn free_variables_and_redundant_rows() {
        // min t s.t. t − X_00 = 0, X_00 + X_11 = 2, 2X_00 + 2X_11 = 4, X ⪰ 0 → t = 0
        let mut p = ConicProgram::default();
        let t = p.add_free(1.0);
        let j = p.add_block(2, false);
        let mut r0 = Row { rhs: 0.0, free: vec![(t, 1.0)], ..Row::default() };
        r0.add_entry(j, 0, 0, -1.0);
        let mut r1 = Row { rhs: 2.0, ..Row::default() };
        r1.add_entry(j, 0, 0, 1.0);
        r1.add_entry(j, 1, 1, 1.0);
        let mut r2 = Row { rhs: 4.0, ..Row::default() };
        r2.add_entry(j, 0, 0, 2.0);
        r2.add_entry(j, 1, 1, 2.0);
        p.rows = vec![r0, r1, r2];
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal_objective.abs() < 1e-7);
        assert_eq!(sol.duals[2], 0.0);
    }

    #[test]
    fn inconsistent_rows_are_infeasible() {
        let mut p = ConicProgram::default();
        let j = p.add_block(1, false);
        let mut r1 = Row { rhs: 1.0, ..Row::default() };
        r1.add_entry(j, 0, 0, 1.0);
        let mut r2 = Row { rhs: 3.0, ..Row::default() };
        r2.add_entry(j, 0, 0, 2.0);
        p.rows = vec![r1, r2];
        assert_eq!(solve(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn free_null_direction_with_cost_is_unbounded() {
        // min t1 − t2 s.t. t1 − t2 + X = 1 is unbounded below only through the
        // null direction (1, 1), which has zero cost; add cost on it.
        let mut p = ConicProgram::default();
        let a = p.add_free(1.0);
        let b = p.add_free(0.0);
        let j = p.add_block(1, false);
        let mut r = Row { rhs: 1.0, free: vec![(a, 1.0), (b, 1.0)], ..Row::default() };
        r.add_entry(j, 0, 0, 1.0);
        p.rows.push(r);
        assert_eq!(solve(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn negative_lower_bound_is_detected_as_infeasible() {
        // X_00 = −1 with X ⪰ 0 has no solution
        let mut p = ConicProgram::default();
        let j = p.add_block(1, false);
        let mut r = Row { rhs: -1.0, ..Row::default() };
        r.add_entry(j, 0, 0, 1.0);
        p.rows.push(r);
        let status = solve(&p).status;
        assert!(matches!(status, SolveStatus::Infeasible | SolveStatus::NumericalFailure), "{status:?}");
    }

    #[test]
    fn dependence_finds_null_combinations() {
        let v = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![2.0, -3.0]),
        ];
        let (ind, dep) = dependence(&v);
        assert_eq!(ind, vec![0, 1]);
        assert_eq!(dep.len(), 1);
        let combo = &dep[0].1;
        let sum = &v[0] * combo[0] + &v[1] * combo[1] + &v[2] * combo[2];
        assert!(sum.norm() < 1e-12);
    }
}
