use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::prox_abs;
use crate::envelope::TargetModel;
use crate::error::{check_dim, invalid, Error, Result};
use crate::scalar::Scalar;

/// Dense `(m - order) x m` difference matrix built by the recursion
/// `D^(k+1) = D^(1)_{m-k} D^(k)_m`.
pub fn diff_matrix<T: Scalar>(m: usize, order: usize) -> Result<DMatrix<T>> {
    if m < order + 1 {
        return Err(invalid(format!("difference of order {order} needs m >= {}, got {m}", order + 1)));
    }
    let first = |rows: usize| {
        let mut d = DMatrix::<T>::zeros(rows - 1, rows);
        for i in 0..rows - 1 {
            d[(i, i)] = -T::one();
            d[(i, i + 1)] = T::one();
        }
        d
    };
    let mut d = DMatrix::<T>::identity(m, m);
    for k in 0..order {
        d = first(m - k) * d;
    }
    Ok(d)
}

/// Banded difference operator of a given order, applied without forming the
/// dense matrix.
#[derive(Debug, Clone)]
pub struct DiffOperator<T> {
    m: usize,
    stencil: Vec<T>,
}

impl<T: Scalar> DiffOperator<T> {
    pub fn new(m: usize, order: usize) -> Result<Self> {
        if m < order + 1 {
            return Err(invalid(format!("difference of order {order} needs m >= {}, got {m}", order + 1)));
        }
        // (-1)^(order - i) * binom(order, i)
        let mut stencil = vec![T::one()];
        for _ in 0..order {
            let mut next = vec![T::zero(); stencil.len() + 1];
            for (i, c) in stencil.iter().enumerate() {
                next[i] -= *c;
                next[i + 1] += *c;
            }
            stencil = next;
        }
        Ok(Self { m, stencil })
    }

    pub fn order(&self) -> usize {
        self.stencil.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> usize {
        self.m - self.order()
    }

    pub fn apply(&self, x: &[T], out: &mut [T]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.stencil.iter().zip(&x[j..]).map(|(c, v)| *c * *v).sum();
        }
    }

    pub fn apply_transpose(&self, u: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for (j, uj) in u.iter().enumerate() {
            for (i, c) in self.stencil.iter().enumerate() {
                out[j + i] += *c * *uj;
            }
        }
    }

    pub fn l1_norm(&self, x: &[T]) -> T {
        let mut d = vec![T::zero(); self.rows()];
        self.apply(x, &mut d);
        d.iter().map(|v| v.abs()).sum()
    }
}

/// Cholesky factor of the banded SPD matrix `I + rho D'D`.
#[derive(Debug, Clone)]
struct BandCholesky<T> {
    n: usize,
    bw: usize,
    // l[i * (bw + 1) + (i - j)] = L[i][j] for i - bw <= j <= i
    l: Vec<T>,
}

impl<T: Scalar> BandCholesky<T> {
    fn factor(op: &DiffOperator<T>, rho: T) -> Result<Self> {
        let n = op.cols();
        let bw = op.order();
        let w = bw + 1;
        let mut a = vec![T::zero(); n * w];
        for i in 0..n {
            a[i * w] = T::one();
        }
        for row in 0..op.rows() {
            for (p, cp) in op.stencil.iter().enumerate() {
                for (q, cq) in op.stencil.iter().enumerate().take(p + 1) {
                    a[(row + p) * w + (p - q)] += rho * *cp * *cq;
                }
            }
        }
        Self::from_band(n, bw, a)
    }

    /// Factors an SPD matrix given by its lower band,
    /// `a[i * (bw + 1) + (i - j)] = A[i][j]`.
    fn from_band(n: usize, bw: usize, a: Vec<T>) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![T::zero(); n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = a[i * w + (i - j)];
                for k in lo.max(j.saturating_sub(bw))..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if s <= T::zero() {
                        return Err(Error::LinearAlgebra("banded Cholesky lost positive definiteness"));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    fn solve_in_place(&self, b: &mut [T]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + w).min(self.n) {
                s -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self { rho: 1.0, tol: 1e-8, max_iter: 5000 }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmSolution<T> {
    pub eta: Vec<T>,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
}

/// Iterations with an unchanged sparsity pattern of `D eta` before the
/// active-set solve is attempted.
const POLISH_AFTER: usize = 5;
/// The active-set solve is also attempted at this iteration interval.
const POLISH_EVERY: usize = 50;
const POLISH_ROUNDS: usize = 25;

/// ADMM for `min_eta |eta - z|^2 / 2 + tau |D eta|_1`.
///
/// ADMM identifies the fused set `{j : (D eta)_j = 0}` long before its
/// iterates converge. Once the pattern has settled, the optimality system
/// restricted to it is solved directly and accepted if it satisfies the
/// optimality conditions, which makes the result exact.
#[derive(Debug, Clone)]
pub struct GeneralizedLasso<T> {
    op: DiffOperator<T>,
    chol: BandCholesky<T>,
    settings: AdmmSettings,
}

impl<T: Scalar> GeneralizedLasso<T> {
    pub fn new(m: usize, order: usize, settings: AdmmSettings) -> Result<Self> {
        if !(settings.rho > 0.0 && settings.tol > 0.0 && settings.max_iter > 0) {
            return Err(invalid("ADMM needs rho > 0, tol > 0 and max_iter > 0"));
        }
        let op = DiffOperator::new(m, order)?;
        let chol = BandCholesky::factor(&op, T::of(settings.rho))?;
        Ok(Self { op, chol, settings })
    }

    pub fn operator(&self) -> &DiffOperator<T> {
        &self.op
    }

    pub fn objective(&self, eta: &[T], z: &[T], tau: T) -> T {
        let fit: T = eta.iter().zip(z).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
        fit / T::of(2.0) + tau * self.op.l1_norm(eta)
    }

    /// Solves the optimality conditions with `pattern` as the guessed signs
    /// of `D eta` (0 = fused), then moves violating rows between the fused
    /// and bound sets and repeats. Returns `None` if no consistent pattern is
    /// found.
    fn polish(&self, z: &[T], tau: T, pattern: &[i8]) -> Option<Vec<T>> {
        let mut pattern = pattern.to_vec();
        let mut seen: Vec<Vec<i8>> = Vec::new();
        for _ in 0..POLISH_ROUNDS {
            let (v, eta, d) = self.solve_pattern(z, tau, &pattern)?;
            let scale = T::one() + eta.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
            let floor = T::of(1e-10) * scale;
            let slack = tau * T::of(1.0 + 1e-9);
            let mut next = pattern.clone();
            for j in 0..pattern.len() {
                if pattern[j] == 0 {
                    if v[j].abs() > slack {
                        next[j] = if v[j] > T::zero() { 1 } else { -1 };
                    }
                } else if T::of(f64::from(pattern[j])) * d[j] < -floor {
                    next[j] = 0;
                }
            }
            if next == pattern {
                return Some(eta);
            }
            seen.push(std::mem::replace(&mut pattern, next));
            if seen.contains(&pattern) {
                return None;
            }
        }
        None
    }

    /// Dual variable, primal point and `D eta` for a fixed sign pattern.
    fn solve_pattern(&self, z: &[T], tau: T, pattern: &[i8]) -> Option<(Vec<T>, Vec<T>, Vec<T>)> {
        let (m, p, order) = (self.op.cols(), self.op.rows(), self.op.order());
        let mut v: Vec<T> = pattern.iter().map(|s| T::of(f64::from(*s)) * tau).collect();
        let fused: Vec<usize> = (0..p).filter(|j| pattern[*j] == 0).collect();
        let mut back = vec![T::zero(); m];
        let mut d = vec![T::zero(); p];
        if !fused.is_empty() {
            // D_F D_F' is banded with bandwidth `order` in the compressed index.
            let nf = fused.len();
            let w = order + 1;
            let mut a = vec![T::zero(); nf * w];
            for (ia, ja) in fused.iter().enumerate() {
                for ib in ia.saturating_sub(order)..=ia {
                    let delta = ja - fused[ib];
                    if delta <= order {
                        a[ia * w + (ia - ib)] = (0..=order - delta)
                            .map(|i| self.op.stencil[i + delta] * self.op.stencil[i])
                            .sum();
                    }
                }
            }
            let chol = BandCholesky::from_band(nf, order, a).ok()?;
            self.op.apply_transpose(&v, &mut back);
            let r: Vec<T> = z.iter().zip(&back).map(|(zi, bi)| *zi - *bi).collect();
            self.op.apply(&r, &mut d);
            let mut rhs: Vec<T> = fused.iter().map(|j| d[*j]).collect();
            chol.solve_in_place(&mut rhs);
            for (j, x) in fused.iter().zip(rhs) {
                v[*j] = x;
            }
        }
        self.op.apply_transpose(&v, &mut back);
        let eta: Vec<T> = z.iter().zip(&back).map(|(zi, bi)| *zi - *bi).collect();
        self.op.apply(&eta, &mut d);
        if eta.iter().chain(&v).any(|x| !x.is_finite()) {
            return None;
        }
        Some((v, eta, d))
    }

    pub fn solve(&self, z: &[T], tau: T) -> Result<AdmmSolution<T>> {
        check_dim(self.op.cols(), z.len())?;
        if tau < T::zero() {
            return Err(invalid("penalty weight must be nonnegative"));
        }
        if tau == T::zero() || self.op.rows() == 0 {
            return Ok(AdmmSolution {
                eta: z.to_vec(),
                iterations: 0,
                primal_residual: T::zero(),
                dual_residual: T::zero(),
            });
        }
        let rho = T::of(self.settings.rho);
        let tol = T::of(self.settings.tol);
        let (m, p) = (self.op.cols(), self.op.rows());

        // Start from the fixed point that is exact when no difference of the
        // solution is fused: u = tau sign(Dz) / rho, eta = z - rho D'u.
        let mut d_eta = vec![T::zero(); p];
        self.op.apply(z, &mut d_eta);
        let mut u: Vec<T> = d_eta.iter().map(|v| v.signum() * tau / rho).collect();
        let mut back = vec![T::zero(); m];
        self.op.apply_transpose(&u, &mut back);
        let mut eta: Vec<T> = z.iter().zip(&back).map(|(zi, bi)| *zi - rho * *bi).collect();
        self.op.apply(&eta, &mut d_eta);
        let mut w: Vec<T> = d_eta.iter().zip(&u).map(|(d, uj)| prox_abs(*d + *uj, tau / rho)).collect();
        let mut w_old = vec![T::zero(); p];
        let mut diff = vec![T::zero(); p];
        let (mut r, mut s) = (T::infinity(), T::infinity());
        let mut stable = 0usize;
        let mut tried: Option<Vec<i8>> = None;

        for it in 1..=self.settings.max_iter {
            for j in 0..p {
                diff[j] = w[j] - u[j];
            }
            self.op.apply_transpose(&diff, &mut back);
            for i in 0..m {
                eta[i] = z[i] + rho * back[i];
            }
            self.chol.solve_in_place(&mut eta);
            self.op.apply(&eta, &mut d_eta);

            w_old.copy_from_slice(&w);
            let mut r2 = T::zero();
            for j in 0..p {
                w[j] = prox_abs(d_eta[j] + u[j], tau / rho);
                let gap = d_eta[j] - w[j];
                u[j] += gap;
                r2 += gap * gap;
                diff[j] = w[j] - w_old[j];
            }
            self.op.apply_transpose(&diff, &mut back);
            r = r2.sqrt();
            s = rho * back.iter().map(|v| *v * *v).sum::<T>().sqrt();
            if r < tol && s < tol {
                return Ok(AdmmSolution { eta, iterations: it, primal_residual: r, dual_residual: s });
            }

            let same = w.iter().zip(&w_old).all(|(a, b)| a.signum() == b.signum() && a.is_zero() == b.is_zero());
            stable = if same { stable + 1 } else { 0 };
            if stable >= POLISH_AFTER || it % POLISH_EVERY == 0 {
                let pattern: Vec<i8> = w.iter().map(|v| if v.is_zero() { 0 } else if *v > T::zero() { 1 } else { -1 }).collect();
                if tried.as_ref() != Some(&pattern) {
                    if let Some(eta) = self.polish(z, tau, &pattern) {
                        return Ok(AdmmSolution { eta, iterations: it, primal_residual: T::zero(), dual_residual: T::zero() });
                    }
                    tried = Some(pattern);
                }
            }
        }
        Err(Error::NotConverged {
            solver: "trend-filtering ADMM",
            iterations: self.settings.max_iter,
            residual: r.max(s).as_f64(),
        })
    }
}

/// Trend-filtering posterior `|y - mu|^2 / (2 sigma2) + alpha |D^(k+1) mu|_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendfilterSpec<T> {
    pub m: usize,
    /// Difference order minus one; 0 is the fused lasso.
    pub k: usize,
    pub alpha: T,
    pub sigma2: T,
    pub y: Vec<T>,
}

impl<T: Scalar> TrendfilterSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.m < self.k + 2 {
            return Err(invalid(format!("trend filtering needs m >= k + 2 (m = {}, k = {})", self.m, self.k)));
        }
        if !(self.alpha >= T::zero() && self.sigma2 > T::zero()) {
            return Err(invalid("trend filtering needs alpha >= 0 and sigma2 > 0"));
        }
        check_dim(self.m, self.y.len())
    }

    /// Center and penalty weight of the lasso subproblem solved by the prox.
    pub fn subproblem(&self, mu: &[T], lambda: T) -> (Vec<T>, T) {
        let s2 = self.sigma2;
        let denom = s2 + lambda;
        let z = mu.iter().zip(&self.y).map(|(m, y)| (s2 * *m + lambda * *y) / denom).collect();
        (z, self.alpha * s2 * lambda / denom)
    }
}

#[derive(Debug, Clone)]
pub struct TrendfilterModel<T: Scalar> {
    spec: TrendfilterSpec<T>,
    solver: GeneralizedLasso<T>,
}

impl<T: Scalar> TrendfilterModel<T> {
    pub fn new(spec: TrendfilterSpec<T>, settings: AdmmSettings) -> Result<Self> {
        spec.validate()?;
        let solver = GeneralizedLasso::new(spec.m, spec.k + 1, settings)?;
        Ok(Self { spec, solver })
    }

    pub fn spec(&self) -> &TrendfilterSpec<T> {
        &self.spec
    }

    pub fn solver(&self) -> &GeneralizedLasso<T> {
        &self.solver
    }
}

/// Prox of the trend-filtering potential via the lasso subproblem.
pub fn prox_trendfilter<T: Scalar>(model: &TrendfilterModel<T>, mu: &[T], lambda: T) -> Result<Vec<T>> {
    check_dim(model.spec.m, mu.len())?;
    let (z, tau) = model.spec.subproblem(mu, lambda);
    Ok(model.solver.solve(&z, tau)?.eta)
}

impl<T: Scalar> TargetModel<T> for TrendfilterModel<T> {
    fn dim(&self) -> usize {
        self.spec.m
    }

    fn potential(&self, mu: &[T]) -> T {
        let fit: T = mu.iter().zip(&self.spec.y).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
        fit / (T::of(2.0) * self.spec.sigma2) + self.spec.alpha * self.solver.op.l1_norm(mu)
    }

    fn prox(&self, mu: &[T], lambda: T) -> Result<Vec<T>> {
        prox_trendfilter(self, mu, lambda)
    }
}
