//! Iterative LQR over a generic scalar type.
//!
//! Every accept/reject decision reads primal values, so running the solver on
//! `f64`, [`crate::Dual`] or taped [`crate::autodiff::Var`] visits the same
//! iterates with bit-identical values.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::scalar::Scalar;

/// Next state with its Jacobians (`fx: n × n`, `fu: n × m`, row-major).
#[derive(Debug, Clone)]
pub struct Linearization<S> {
    pub next: Vec<S>,
    pub fx: Vec<S>,
    pub fu: Vec<S>,
}

/// Second-order expansion of a running cost at `(x, u)`.
#[derive(Debug, Clone)]
pub struct RunningExpansion<S> {
    pub lx: Vec<S>,
    pub lu: Vec<S>,
    pub lxx: Vec<S>,
    pub luu: Vec<S>,
    /// `m × n`.
    pub lux: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct TerminalExpansion<S> {
    pub lx: Vec<S>,
    pub lxx: Vec<S>,
}

/// A finite-horizon problem: `N` actions, `N + 1` states, running costs on
/// each `(x_t, u_t)` and a terminal cost on `x_N`.
pub trait TrajectoryProblem<S: Scalar> {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn step(&self, x: &[S], u: &[S]) -> Result<Vec<S>>;
    fn linearize(&self, x: &[S], u: &[S]) -> Result<Linearization<S>>;
    fn running_cost(&self, t: usize, x: &[f64], u: &[f64]) -> f64;
    fn running_expansion(&self, t: usize, x: &[S], u: &[S]) -> RunningExpansion<S>;
    fn terminal_cost(&self, x: &[f64]) -> f64;
    fn terminal_expansion(&self, x: &[S]) -> Result<TerminalExpansion<S>>;
    /// Symmetric bound applied to every action component.
    fn action_bound(&self) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlqrOptions {
    pub max_iters: usize,
    /// Smallest non-zero Levenberg-Marquardt regularization.
    pub mu_init: f64,
    pub mu_factor: f64,
    pub mu_max: f64,
    pub line_search_alphas: Vec<f64>,
    /// Absolute cost improvement below which the solve stops.
    pub convergence_tol: f64,
}

impl Default for IlqrOptions {
    fn default() -> Self {
        Self {
            max_iters: 10,
            mu_init: 1e-6,
            mu_factor: 10.0,
            mu_max: 1e6,
            line_search_alphas: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            convergence_tol: 1e-6,
        }
    }
}

impl IlqrOptions {
    pub fn validate(&self) -> Result<()> {
        let a = &self.line_search_alphas;
        if a.first() != Some(&1.0) || a.windows(2).any(|w| !(w[1] < w[0])) || a.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(
                "line-search alphas must start at 1 and strictly decrease".into(),
            ));
        }
        if self.max_iters == 0 || !(self.mu_init > 0.0) || !(self.mu_factor > 1.0) || !(self.mu_max >= self.mu_init) {
            return Err(Error::InvalidArgument("invalid iLQR iteration or regularization settings".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidArgument("convergence tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration record for debugging dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlqrIteration {
    pub cost: f64,
    pub expected_improvement: f64,
    pub mu: f64,
    /// Accepted step size, if any.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IlqrSolution<S> {
    pub actions: Vec<Vec<S>>,
    pub states: Vec<Vec<S>>,
    /// Total cost of the initial guess followed by every accepted iterate.
    pub cost_trace: Vec<f64>,
    pub iterations: Vec<IlqrIteration>,
    pub converged: bool,
    pub mu: f64,
    /// Line-search trials that did not reduce the cost.
    pub rejected_trials: usize,
}

fn values<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.value()).collect()
}

fn total_cost<S: Scalar, P: TrajectoryProblem<S> + ?Sized>(p: &P, xs: &[Vec<S>], us: &[Vec<S>]) -> f64 {
    let mut c = 0.0;
    for (t, u) in us.iter().enumerate() {
        c += p.running_cost(t, &values(&xs[t]), &values(u));
    }
    c + p.terminal_cost(&values(xs.last().unwrap()))
}

fn clamp_all<S: Scalar>(u: &mut [S], bound: Option<f64>) {
    if let Some(b) = bound {
        for v in u.iter_mut() {
            *v = v.clamp_to(-b, b);
        }
    }
}

fn rollout<S: Scalar, P: TrajectoryProblem<S> + ?Sized>(p: &P, x0: &[S], us: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    let mut xs = Vec::with_capacity(us.len() + 1);
    xs.push(x0.to_vec());
    for u in us {
        let next = p.step(xs.last().unwrap(), u)?;
        if next.iter().any(|v| !v.value().is_finite()) {
            return Err(Error::NonFinite("iLQR rollout"));
        }
        xs.push(next);
    }
    Ok(xs)
}

struct Gains<S> {
    k: Vec<Vec<S>>,
    big_k: Vec<Vec<S>>,
    dv1: f64,
    dv2: f64,
}

fn mat_t_vec<S: Scalar>(a: &[S], rows: usize, cols: usize, x: &[S]) -> Vec<S> {
    let mut y = vec![S::zero(); cols];
    for i in 0..rows {
        for j in 0..cols {
            y[j] += a[i * cols + j] * x[i];
        }
    }
    y
}

/// `Aᵀ B C` with `A: r × p`, `B: r × r`, `C: r × q`.
fn sandwich<S: Scalar>(a: &[S], b: &[S], c: &[S], r: usize, p: usize, q: usize) -> Vec<S> {
    let mut bc = vec![S::zero(); r * q];
    for i in 0..r {
        for l in 0..r {
            let bil = b[i * r + l];
            for j in 0..q {
                bc[i * q + j] += bil * c[l * q + j];
            }
        }
    }
    let mut out = vec![S::zero(); p * q];
    for i in 0..r {
        for a_col in 0..p {
            let aij = a[i * p + a_col];
            for j in 0..q {
                out[a_col * q + j] += aij * bc[i * q + j];
            }
        }
    }
    out
}

/// `k = −Q_uu⁻¹ Q_u` and `K = −Q_uu⁻¹ Q_ux` for a regularized `Q_uu`.
fn solve_gains<S: Scalar>(reg: &[S], qu: &[S], qux: &[S], m: usize, n: usize) -> Option<(Vec<S>, Vec<S>)> {
    let chol = cholesky(reg, m)?;
    let k = cholesky_solve(&chol, m, qu, 1).into_iter().map(|v| -v).collect();
    let kk = cholesky_solve(&chol, m, qux, n).into_iter().map(|v| -v).collect();
    Some((k, kk))
}

fn backward_pass<S: Scalar>(
    n: usize,
    m: usize,
    lin: &[Linearization<S>],
    run: &[RunningExpansion<S>],
    term: &TerminalExpansion<S>,
    us: &[Vec<S>],
    bound: Option<f64>,
    mu: f64,
) -> Option<Gains<S>> {
    let horizon = lin.len();
    let mut vx = term.lx.clone();
    let mut vxx = term.lxx.clone();
    let mut ks = vec![Vec::new(); horizon];
    let mut kks = vec![Vec::new(); horizon];
    let (mut dv1, mut dv2) = (0.0, 0.0);
    for t in (0..horizon).rev() {
        let (l, c) = (&lin[t], &run[t]);
        let mut qx = c.lx.clone();
        for (q, v) in qx.iter_mut().zip(mat_t_vec(&l.fx, n, n, &vx)) {
            *q += v;
        }
        let mut qu = c.lu.clone();
        for (q, v) in qu.iter_mut().zip(mat_t_vec(&l.fu, n, m, &vx)) {
            *q += v;
        }
        let mut qxx = sandwich(&l.fx, &vxx, &l.fx, n, n, n);
        for (q, v) in qxx.iter_mut().zip(&c.lxx) {
            *q += *v;
        }
        let mut quu = sandwich(&l.fu, &vxx, &l.fu, n, m, m);
        for (q, v) in quu.iter_mut().zip(&c.luu) {
            *q += *v;
        }
        let mut qux = sandwich(&l.fu, &vxx, &l.fx, n, m, n);
        for (q, v) in qux.iter_mut().zip(&c.lux) {
            *q += *v;
        }
        let mut reg = quu.clone();
        if mu > 0.0 {
            for i in 0..m {
                reg[i * m + i] = reg[i * m + i] + mu;
            }
        }
        let (mut k, mut kk) = solve_gains(&reg, &qu, &qux, m, n)?;
        // actions resting on the bound and pushed outward get no step; the
        // remaining dimensions are re-solved with those held fixed
        if let Some(b) = bound {
            let pinned: Vec<bool> = (0..m)
                .map(|i| {
                    let u = us[t][i].value();
                    (u >= b && k[i].value() > 0.0) || (u <= -b && k[i].value() < 0.0)
                })
                .collect();
            if pinned.iter().any(|&p| p) {
                let free: Vec<usize> = (0..m).filter(|&i| !pinned[i]).collect();
                k = vec![S::zero(); m];
                kk = vec![S::zero(); m * n];
                if !free.is_empty() {
                    let f = free.len();
                    let sub_reg: Vec<S> = free.iter().flat_map(|&i| free.iter().map(move |&j| (i, j))).map(|(i, j)| reg[i * m + j]).collect();
                    let sub_qu: Vec<S> = free.iter().map(|&i| qu[i]).collect();
                    let sub_qux: Vec<S> = free.iter().flat_map(|&i| qux[i * n..(i + 1) * n].iter().copied()).collect();
                    let (fk, fkk) = solve_gains(&sub_reg, &sub_qu, &sub_qux, f, n)?;
                    for (a, &i) in free.iter().enumerate() {
                        k[i] = fk[a];
                        kk[i * n..(i + 1) * n].copy_from_slice(&fkk[a * n..(a + 1) * n]);
                    }
                }
            }
        }

        // V_x = Q_x + Kᵀ Q_uu k + Kᵀ Q_u + Q_uxᵀ k
        let quu_k: Vec<S> = (0..m)
            .map(|i| (0..m).fold(S::zero(), |acc, j| acc + quu[i * m + j] * k[j]))
            .collect();
        let mut new_vx = qx;
        for j in 0..n {
            let mut acc = S::zero();
            for i in 0..m {
                acc += kk[i * n + j] * (quu_k[i] + qu[i]) + qux[i * n + j] * k[i];
            }
            new_vx[j] += acc;
        }
        // V_xx = Q_xx + Kᵀ Q_uu K + Kᵀ Q_ux + Q_uxᵀ K
        let kquuk = sandwich(&kk, &quu, &kk, m, n, n);
        let mut new_vxx = qxx;
        for i in 0..n {
            for j in 0..n {
                let mut acc = kquuk[i * n + j];
                for r in 0..m {
                    acc += kk[r * n + i] * qux[r * n + j] + qux[r * n + i] * kk[r * n + j];
                }
                new_vxx[i * n + j] += acc;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let s = (new_vxx[i * n + j] + new_vxx[j * n + i]) * 0.5;
                new_vxx[i * n + j] = s;
                new_vxx[j * n + i] = s;
            }
        }
        for i in 0..m {
            dv1 += k[i].value() * qu[i].value();
            dv2 += 0.5 * k[i].value() * quu_k[i].value();
        }
        vx = new_vx;
        vxx = new_vxx;
        ks[t] = k;
        kks[t] = kk;
    }
    Some(Gains {
        k: ks,
        big_k: kks,
        dv1,
        dv2,
    })
}

/// Minimizes the problem's total cost from `x0`, starting at `guess`.
///
/// The first iteration runs unregularized; `μ` rises to at least
/// `mu_init` after a failed factorization or a rejected line search and
/// decays after accepted steps. A solve that exceeds `mu_max` returns the
/// best iterate with `converged = false`.
pub fn ilqr_solve<S: Scalar, P: TrajectoryProblem<S> + ?Sized>(
    problem: &P,
    x0: &[S],
    guess: Vec<Vec<S>>,
    opts: &IlqrOptions,
) -> Result<IlqrSolution<S>> {
    let (n, m) = (problem.state_dim(), problem.action_dim());
    if x0.len() != n || guess.iter().any(|u| u.len() != m) {
        return Err(Error::Shape {
            what: "iLQR inputs",
            expected: n,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.value().is_finite()) {
        return Err(Error::NonFinite("iLQR initial state"));
    }
    let bound = problem.action_bound();
    let mut us = guess;
    for u in &mut us {
        clamp_all(u, bound);
    }
    let mut xs = rollout(problem, x0, &us)?;
    let mut cost = total_cost(problem, &xs, &us);
    if !cost.is_finite() {
        return Err(Error::NonFinite("iLQR cost"));
    }
    let mut sol = IlqrSolution {
        actions: Vec::new(),
        states: Vec::new(),
        cost_trace: vec![cost],
        iterations: Vec::new(),
        converged: false,
        mu: 0.0,
        rejected_trials: 0,
    };
    if us.is_empty() {
        sol.converged = true;
        sol.actions = us;
        sol.states = xs;
        return Ok(sol);
    }
    let mut mu = 0.0;
    let raise = |mu: f64| (mu * opts.mu_factor).max(opts.mu_init);
    for _ in 0..opts.max_iters {
        let mut lin = Vec::with_capacity(us.len());
        let mut run = Vec::with_capacity(us.len());
        for (t, u) in us.iter().enumerate() {
            lin.push(problem.linearize(&xs[t], u)?);
            run.push(problem.running_expansion(t, &xs[t], u));
        }
        let term = problem.terminal_expansion(xs.last().unwrap())?;
        let gains = loop {
            match backward_pass(n, m, &lin, &run, &term, &us, bound, mu) {
                Some(g) => break Some(g),
                None => {
                    mu = raise(mu);
                    if mu > opts.mu_max {
                        break None;
                    }
                }
            }
        };
        let Some(gains) = gains else {
            sol.iterations.push(IlqrIteration {
                cost,
                expected_improvement: 0.0,
                mu,
                alpha: None,
            });
            break;
        };
        let expected = -(gains.dv1 + gains.dv2);
        // nothing left to gain, e.g. every action pinned at its bound
        if !(expected > 0.0) {
            sol.iterations.push(IlqrIteration {
                cost,
                expected_improvement: expected,
                mu,
                alpha: None,
            });
            sol.converged = true;
            break;
        }
        let mut accepted = None;
        for &alpha in &opts.line_search_alphas {
            let mut new_us = Vec::with_capacity(us.len());
            let mut new_xs = Vec::with_capacity(xs.len());
            new_xs.push(x0.to_vec());
            let mut ok = true;
            for t in 0..us.len() {
                let xt = &new_xs[t];
                let mut u = us[t].clone();
                for i in 0..m {
                    let mut du = gains.k[t][i] * alpha;
                    for j in 0..n {
                        du += gains.big_k[t][i * n + j] * (xt[j] - xs[t][j]);
                    }
                    u[i] += du;
                }
                clamp_all(&mut u, bound);
                let next = problem.step(xt, &u)?;
                if next.iter().any(|v| !v.value().is_finite()) {
                    ok = false;
                    break;
                }
                new_us.push(u);
                new_xs.push(next);
            }
            if ok {
                let c = total_cost(problem, &new_xs, &new_us);
                if c < cost {
                    accepted = Some((alpha, c, new_xs, new_us));
                    break;
                }
            }
            sol.rejected_trials += 1;
        }
        match accepted {
            Some((alpha, c, new_xs, new_us)) => {
                let improvement = cost - c;
                sol.iterations.push(IlqrIteration {
                    cost: c,
                    expected_improvement: expected,
                    mu,
                    alpha: Some(alpha),
                });
                cost = c;
                xs = new_xs;
                us = new_us;
                sol.cost_trace.push(cost);
                mu /= opts.mu_factor;
                if mu < opts.mu_init {
                    mu = 0.0;
                }
                if improvement < opts.convergence_tol {
                    sol.converged = true;
                    break;
                }
            }
            None => {
                sol.iterations.push(IlqrIteration {
                    cost,
                    expected_improvement: expected,
                    mu,
                    alpha: None,
                });
                if expected < opts.convergence_tol {
                    sol.converged = true;
                    break;
                }
                mu = raise(mu);
                if mu > opts.mu_max {
                    break;
                }
            }
        }
    }
    sol.mu = mu;
    sol.actions = us;
    sol.states = xs;
    Ok(sol)
}
