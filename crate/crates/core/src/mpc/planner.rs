use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::cost::CostModel;
use super::ilqr::{
    ilqr_solve, IlqrSolution, Linearization, RunningExpansion, TerminalExpansion, TrajectoryProblem,
};
use super::MpcConfig;
use crate::autodiff::{Block, BlockVjp, Tape, Var};
use crate::env::Policy;
use crate::error::{check_len, Error, Result};
use crate::models::{renormalize_jacobian, BcPolicy, DynamicsModel, NextStatePredictor};
use crate::rng::Rng;
use crate::scalar::{Dual, Scalar};

const KIND_DYN: u32 = 1;
const KIND_DYN_LIN: u32 = 2;
const KIND_BC: u32 = 3;
const KIND_TARGET: u32 = 4;
const KIND_COST_GRAD: u32 = 5;

/// The models an MPC solve reads. All are treated as frozen except the cost
/// parameters on the differentiable path.
#[derive(Debug, Clone, Copy)]
pub struct PlanModels<'a> {
    pub dynamics: &'a DynamicsModel,
    pub cost: &'a CostModel,
    pub bc: &'a BcPolicy,
    pub predictor: &'a NextStatePredictor,
}

impl PlanModels<'_> {
    fn check(&self, s: &[f64]) -> Result<()> {
        let n = self.dynamics.state_dim();
        check_len("state", n, s.len())?;
        check_len("cost model state", n, self.cost.state_dim())?;
        check_len("policy state", n, self.bc.state_dim())?;
        check_len("predictor state", n, self.predictor.state_dim())?;
        check_len("policy action", self.dynamics.action_dim(), self.bc.net().output_dim())?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MPC state"));
        }
        Ok(())
    }

    fn action_bound(&self) -> f64 {
        self.bc.action_bound()
    }
}

/// Evaluation strategy shared by the plain and taped solves.
trait Backend<S: Scalar> {
    fn dynamics(&self, x: &[S], u: &[S]) -> Vec<S>;
    fn linearize(&self, x: &[S], u: &[S]) -> Linearization<S>;
    fn policy(&self, x: &[S]) -> Vec<S>;
    fn target(&self, x: &[S], horizon: usize) -> Vec<S>;
    /// `∇_x f_Φ(x ⊕ t)`.
    fn cost_grad(&self, x: &[S], t: &[S]) -> Vec<S>;
    fn weights(&self) -> (S, S);
}

fn vals<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.value()).collect()
}

fn concat<T: Copy>(a: &[T], b: &[T]) -> Vec<T> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn split_jacobian<S: Copy>(j: &[S], n: usize, m: usize) -> (Vec<S>, Vec<S>) {
    let d = n + m;
    let mut fx = Vec::with_capacity(n * n);
    let mut fu = Vec::with_capacity(n * m);
    for r in 0..n {
        fx.extend_from_slice(&j[r * d..r * d + n]);
        fu.extend_from_slice(&j[r * d + n..(r + 1) * d]);
    }
    (fx, fu)
}

fn dynamics_values(m: &DynamicsModel, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pass = m.pass(x, u);
    let (n, d) = (m.state_dim(), m.input_dim());
    let mut j = m.raw_jacobian(&pass);
    let mut col = vec![0.0; n];
    for c in 0..d {
        for r in 0..n {
            col[r] = j[r * d + c];
        }
        crate::models::renormalize_jvp(&pass.raw, m.trig_pairs(), &mut col);
        for r in 0..n {
            j[r * d + c] = col[r];
        }
    }
    (pass.next, j)
}

fn target_values(p: &NextStatePredictor, x: &[f64], horizon: usize) -> Vec<f64> {
    let mut s = x.to_vec();
    for _ in 0..horizon {
        s = p.predict_unchecked(&s, &[]);
    }
    s
}

struct Plain<'a>(PlanModels<'a>);

impl Backend<f64> for Plain<'_> {
    fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.0.dynamics.predict_unchecked(x, u)
    }

    fn linearize(&self, x: &[f64], u: &[f64]) -> Linearization<f64> {
        let (next, j) = dynamics_values(self.0.dynamics, x, u);
        let (fx, fu) = split_jacobian(&j, x.len(), u.len());
        Linearization { next, fx, fu }
    }

    fn policy(&self, x: &[f64]) -> Vec<f64> {
        self.0.bc.act_unchecked(x)
    }

    fn target(&self, x: &[f64], horizon: usize) -> Vec<f64> {
        target_values(self.0.predictor, x, horizon)
    }

    fn cost_grad(&self, x: &[f64], t: &[f64]) -> Vec<f64> {
        self.0.cost.network_grad(x, t)
    }

    fn weights(&self) -> (f64, f64) {
        self.0.cost.mix_weights()
    }
}

struct Taped<'a, 't> {
    models: PlanModels<'a>,
    tape: &'t Tape,
    we: Var<'t>,
    wl: Var<'t>,
}

impl<'t> Backend<Var<'t>> for Taped<'_, 't> {
    fn dynamics(&self, x: &[Var<'t>], u: &[Var<'t>]) -> Vec<Var<'t>> {
        let inputs = concat(x, u);
        let (xv, uv) = (vals(x), vals(u));
        let out = self.models.dynamics.predict_unchecked(&xv, &uv);
        self.tape.block(KIND_DYN, &inputs, &out, concat(&xv, &uv), false)
    }

    fn linearize(&self, x: &[Var<'t>], u: &[Var<'t>]) -> Linearization<Var<'t>> {
        let inputs = concat(x, u);
        let (xv, uv) = (vals(x), vals(u));
        let (next, j) = dynamics_values(self.models.dynamics, &xv, &uv);
        let outs = self.tape.block(KIND_DYN_LIN, &inputs, &concat(&next, &j), concat(&xv, &uv), false);
        let n = x.len();
        let (fx, fu) = split_jacobian(&outs[n..], n, u.len());
        Linearization {
            next: outs[..n].to_vec(),
            fx,
            fu,
        }
    }

    fn policy(&self, x: &[Var<'t>]) -> Vec<Var<'t>> {
        let xv = vals(x);
        let out = self.models.bc.act_unchecked(&xv);
        self.tape.block(KIND_BC, x, &out, xv, false)
    }

    fn target(&self, x: &[Var<'t>], horizon: usize) -> Vec<Var<'t>> {
        let xv = vals(x);
        let out = target_values(self.models.predictor, &xv, horizon);
        let mut payload = xv;
        payload.push(horizon as f64);
        self.tape.block(KIND_TARGET, x, &out, payload, false)
    }

    fn cost_grad(&self, x: &[Var<'t>], t: &[Var<'t>]) -> Vec<Var<'t>> {
        let (xv, tv) = (vals(x), vals(t));
        let out = self.models.cost.network_grad(&xv, &tv);
        self.tape.block(KIND_COST_GRAD, &concat(x, t), &out, concat(&xv, &tv), true)
    }

    fn weights(&self) -> (Var<'t>, Var<'t>) {
        (self.we, self.wl)
    }
}

struct Problem<'b, S, B> {
    backend: &'b B,
    cost: &'b CostModel,
    target: Vec<S>,
    target_values: Vec<f64>,
    weights: (S, S),
    gamma: f64,
    bound: f64,
    n: usize,
    m: usize,
}

impl<S: Scalar, B: Backend<S>> TrajectoryProblem<S> for Problem<'_, S, B> {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn action_dim(&self) -> usize {
        self.m
    }

    fn step(&self, x: &[S], u: &[S]) -> Result<Vec<S>> {
        Ok(self.backend.dynamics(x, u))
    }

    fn linearize(&self, x: &[S], u: &[S]) -> Result<Linearization<S>> {
        Ok(self.backend.linearize(x, u))
    }

    fn running_cost(&self, _: usize, _: &[f64], u: &[f64]) -> f64 {
        self.cost.staging_cost(u)
    }

    fn running_expansion(&self, _: usize, _: &[S], u: &[S]) -> RunningExpansion<S> {
        let two_c = 2.0 * self.cost.control_weight();
        let (n, m) = (self.n, self.m);
        let mut luu = vec![S::zero(); m * m];
        for i in 0..m {
            luu[i * m + i] = S::constant(two_c);
        }
        RunningExpansion {
            lx: vec![S::zero(); n],
            lu: u.iter().map(|&v| v * two_c).collect(),
            lxx: vec![S::zero(); n * n],
            luu,
            lux: vec![S::zero(); m * n],
        }
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        if self.gamma == 0.0 {
            return 0.0;
        }
        self.gamma * self.cost.terminal_cost_unchecked(x, &self.target_values)
    }

    fn terminal_expansion(&self, x: &[S]) -> Result<TerminalExpansion<S>> {
        let n = self.n;
        if self.gamma == 0.0 {
            return Ok(TerminalExpansion {
                lx: vec![S::zero(); n],
                lxx: vec![S::zero(); n * n],
            });
        }
        let (we, wl) = self.weights;
        let g = self.backend.cost_grad(x, &self.target);
        if g.iter().any(|v| !v.value().is_finite()) {
            return Err(Error::NonFinite("terminal cost gradient"));
        }
        let two_we = we * 2.0;
        let lx = (0..n)
            .map(|i| (two_we * (x[i] - self.target[i]) + wl * g[i]) * self.gamma)
            .collect();
        let mut lxx = vec![S::zero(); n * n];
        for i in 0..n {
            let wg = wl * g[i];
            for j in 0..n {
                let mut h = wg * g[j];
                if i == j {
                    h += two_we;
                }
                lxx[i * n + j] = h * self.gamma;
            }
        }
        Ok(TerminalExpansion { lx, lxx })
    }

    fn action_bound(&self) -> Option<f64> {
        Some(self.bound)
    }
}

fn plan<S: Scalar, B: Backend<S>>(
    backend: &B,
    models: &PlanModels<'_>,
    cfg: &MpcConfig,
    s: &[S],
    iters: usize,
) -> Result<(Vec<S>, IlqrSolution<S>)> {
    let bound = models.action_bound();
    let steps = cfg.horizon - 1;
    let mut guess = Vec::with_capacity(steps);
    let mut x = s.to_vec();
    for _ in 0..steps {
        let a = backend.policy(&x);
        x = backend.dynamics(&x, &a);
        guess.push(a);
    }
    let target = backend.target(s, cfg.horizon);
    let target_values = vals(&target);
    if target_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("predicted target"));
    }
    let problem = Problem {
        backend,
        cost: models.cost,
        target,
        target_values,
        weights: backend.weights(),
        gamma: cfg.gamma,
        bound,
        n: s.len(),
        m: models.dynamics.action_dim(),
    };
    let sol = ilqr_solve(&problem, s, guess, &cfg.ilqr_options(iters))?;
    let first = match sol.actions.first() {
        Some(a) => a.clone(),
        None => backend.policy(s).into_iter().map(|v| v.clamp_to(-bound, bound)).collect(),
    };
    Ok((first, sol))
}

/// Full iLQR solve from `s`: BC-seeded guess, target `𝒩^H(s)`.
pub fn mpc_plan(models: PlanModels<'_>, cfg: &MpcConfig, s: &[f64]) -> Result<IlqrSolution<f64>> {
    models.check(s)?;
    Ok(plan(&Plain(models), &models, cfg, s, cfg.max_ilqr_iters)?.1)
}

/// First action of the MPC solution at `s`.
pub fn mpc_policy(models: PlanModels<'_>, cfg: &MpcConfig, s: &[f64]) -> Result<Vec<f64>> {
    models.check(s)?;
    Ok(plan(&Plain(models), &models, cfg, s, cfg.max_ilqr_iters)?.0)
}

/// States and actions of a generator rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPath<T> {
    /// `p` states starting at `s0`.
    pub states: Vec<Vec<T>>,
    /// `p − 1` actions.
    pub actions: Vec<Vec<T>>,
}

/// Plain counterpart of [`differentiable_rollout`]: the same states and
/// actions, computed without recording.
pub fn generator_rollout(models: PlanModels<'_>, cfg: &MpcConfig, s0: &[f64], p: usize) -> Result<GeneratorPath<f64>> {
    models.check(s0)?;
    if p == 0 {
        return Err(Error::InvalidArgument("rollout length must be at least 1".into()));
    }
    let backend = Plain(models);
    let mut path = GeneratorPath {
        states: vec![s0.to_vec()],
        actions: Vec::new(),
    };
    for _ in 1..p {
        let s = path.states.last().unwrap();
        let (a, _) = plan(&backend, &models, cfg, s, cfg.unroll_iters)?;
        let next = backend.dynamics(s, &a);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator rollout"));
        }
        path.states.push(next);
        path.actions.push(a);
    }
    Ok(path)
}

/// [`mpc_policy`] as an environment [`Policy`].
pub struct MpcController<'a> {
    pub models: PlanModels<'a>,
    pub config: &'a MpcConfig,
}

impl Policy for MpcController<'_> {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        mpc_policy(self.models, self.config, state)
    }
}

/// Records a `p`-state generator rollout from `s0` on `tape`. Each action is
/// the first action of an iLQR solve truncated to `unroll_iters`, and each
/// transition is a step of the learned dynamics.
///
/// Step sizes, clamping and regularization are decided on primal values and
/// are constants of the differentiation. The dynamics network must be
/// piecewise linear so its Jacobian is locally constant.
pub fn differentiable_rollout<'t>(
    models: PlanModels<'_>,
    cfg: &MpcConfig,
    tape: &'t Tape,
    s0: &[f64],
    p: usize,
) -> Result<GeneratorPath<Var<'t>>> {
    models.check(s0)?;
    if p == 0 {
        return Err(Error::InvalidArgument("rollout length must be at least 1".into()));
    }
    if !models.dynamics.net().spec().is_piecewise_linear() {
        return Err(Error::InvalidArgument(
            "unrolled gradients need a piecewise-linear dynamics network".into(),
        ));
    }
    let k = models.cost.network_param_count();
    let (le, ll) = models.cost.logits();
    let backend = Taped {
        models,
        tape,
        we: tape.param(le, k).softplus(),
        wl: tape.param(ll, k + 1).softplus(),
    };
    let mut path = GeneratorPath {
        states: vec![s0.iter().map(|&v| Var::constant(v)).collect::<Vec<_>>()],
        actions: Vec::new(),
    };
    for _ in 1..p {
        let s = path.states.last().unwrap();
        let (a, _) = plan(&backend, &models, cfg, s, cfg.unroll_iters)?;
        let next = backend.dynamics(s, &a);
        if next.iter().any(|v| !v.value().is_finite()) {
            return Err(Error::NonFinite("generator rollout"));
        }
        path.states.push(next);
        path.actions.push(a);
    }
    Ok(path)
}

/// Resolves the blocks recorded by [`differentiable_rollout`]. Gradients
/// land in the generator parameter layout of [`CostModel::gen_params`].
pub struct PlanResolver<'a> {
    models: PlanModels<'a>,
}

impl<'a> PlanResolver<'a> {
    pub fn new(models: PlanModels<'a>) -> Self {
        Self { models }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl BlockVjp for PlanResolver<'_> {
    fn vjp(&self, block: &Block, out_adj: &[f64], in_adj: &mut [f64], param_grad: &mut [f64]) {
        let p = &block.payload;
        match block.kind {
            KIND_DYN => {
                let dynm = self.models.dynamics;
                let (x, u) = p.split_at(dynm.state_dim());
                let pass = dynm.pass(x, u);
                accumulate(in_adj, &dynm.vjp(&pass, out_adj, None));
            }
            KIND_DYN_LIN => {
                let dynm = self.models.dynamics;
                let (n, d) = (dynm.state_dim(), dynm.input_dim());
                let (x, u) = p.split_at(n);
                let pass = dynm.pass(x, u);
                let (adj_next, adj_j) = out_adj.split_at(n);
                accumulate(in_adj, &dynm.vjp(&pass, adj_next, None));
                let pairs = dynm.trig_pairs();
                if pairs.is_empty() || adj_j.iter().all(|&v| v == 0.0) {
                    return;
                }
                // J = R(y) J_y with J_y locally constant, so only R varies.
                let jy = dynm.raw_jacobian(&pass);
                let mut mm = vec![0.0; n * n];
                for i in 0..n {
                    for k in 0..n {
                        mm[i * n + k] = (0..d).map(|c| adj_j[i * d + c] * jy[k * d + c]).sum();
                    }
                }
                for xi in 0..d {
                    let y: Vec<Dual> = (0..n).map(|k| Dual::new(pass.raw[k], jy[k * d + xi])).collect();
                    let r = renormalize_jacobian(&y, pairs);
                    in_adj[xi] += r.iter().zip(&mm).map(|(a, b)| a.du * b).sum::<f64>();
                }
            }
            KIND_BC => {
                let pass = self.models.bc.pass(p);
                accumulate(in_adj, &self.models.bc.vjp(&pass, out_adj, None));
            }
            KIND_TARGET => {
                let pred = self.models.predictor;
                let (x, h) = p.split_at(p.len() - 1);
                let mut passes = Vec::with_capacity(h[0] as usize);
                let mut s = x.to_vec();
                for _ in 0..h[0] as usize {
                    let pass = pred.pass(&s, &[]);
                    s = pass.next.clone();
                    passes.push(pass);
                }
                let mut v = out_adj.to_vec();
                for pass in passes.iter().rev() {
                    v = pred.vjp(pass, &v, None);
                }
                accumulate(in_adj, &v);
            }
            KIND_COST_GRAD => {
                // Hessian-vector product by forward-over-reverse.
                let net = self.models.cost.net();
                let n = out_adj.len();
                let z: Vec<Dual> = p
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| Dual::new(v, if i < n { out_adj[i] } else { 0.0 }))
                    .collect();
                let params = net.params().as_slice();
                let trace = net.spec().forward_trace(params, &z).expect("cost network input shape");
                let mut pg = vec![Dual::zero(); params.len()];
                let gz = net
                    .spec()
                    .backward(params, &trace, &[Dual::new(1.0, 0.0)], &mut pg)
                    .expect("cost network gradient shape");
                for (a, g) in in_adj.iter_mut().zip(&gz) {
                    *a += g.du;
                }
                for (a, g) in param_grad.iter_mut().zip(&pg) {
                    *a += g.du;
                }
            }
            other => unreachable!("unknown block kind {other}"),
        }
    }
}

/// Loss and generator-parameter gradient for one rollout.
#[derive(Debug, Clone)]
pub struct RolloutGradient {
    pub path: GeneratorPath<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn seed_group<'t>(seeds: &mut Vec<(Var<'t>, f64)>, vs: &[Vec<Var<'t>>], adj: &[Vec<f64>]) -> Result<()> {
    check_len("path adjoints", vs.len(), adj.len())?;
    for (sv, av) in vs.iter().zip(adj) {
        check_len("path adjoint", sv.len(), av.len())?;
        seeds.extend(sv.iter().zip(av).map(|(v, a)| (*v, *a)));
    }
    Ok(())
}

/// Runs [`differentiable_rollout`] and back-propagates `loss`, which maps
/// the path to a value and its adjoints. An empty action adjoint means the
/// loss does not read actions.
pub fn rollout_gradient(
    models: PlanModels<'_>,
    cfg: &MpcConfig,
    s0: &[f64],
    p: usize,
    loss: impl FnOnce(&GeneratorPath<f64>) -> Result<(f64, GeneratorPath<f64>)>,
) -> Result<RolloutGradient> {
    let tape = Tape::new();
    let vars = differentiable_rollout(models, cfg, &tape, s0, p)?;
    let path = GeneratorPath {
        states: vars.states.iter().map(|s| vals(s)).collect(),
        actions: vars.actions.iter().map(|s| vals(s)).collect(),
    };
    let (value, adj) = loss(&path)?;
    let mut seeds = Vec::new();
    seed_group(&mut seeds, &vars.states, &adj.states)?;
    if !adj.actions.is_empty() {
        seed_group(&mut seeds, &vars.actions, &adj.actions)?;
    }
    let grads = tape.backward(&seeds, models.cost.gen_param_count(), &PlanResolver::new(models));
    if grads.params.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("generator gradient"));
    }
    Ok(RolloutGradient {
        path,
        loss: value,
        grad: grads.params,
    })
}

/// Simultaneous-perturbation gradient estimate of `loss` at `params`,
/// averaged over `samples` Rademacher directions.
pub fn spsa_gradient(
    params: &[f64],
    perturbation: f64,
    samples: usize,
    rng: &mut Rng,
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    if !(perturbation > 0.0) || samples == 0 {
        return Err(Error::InvalidArgument("SPSA needs a positive perturbation and sample count".into()));
    }
    let mut g = vec![0.0; params.len()];
    let mut plus = params.to_vec();
    let mut minus = params.to_vec();
    for _ in 0..samples {
        let delta: Vec<f64> = (0..params.len())
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        for i in 0..params.len() {
            plus[i] = params[i] + perturbation * delta[i];
            minus[i] = params[i] - perturbation * delta[i];
        }
        let diff = (loss(&plus)? - loss(&minus)?) / (2.0 * perturbation);
        for (gi, di) in g.iter_mut().zip(&delta) {
            *gi += diff * di;
        }
    }
    let s = samples as f64;
    g.iter_mut().for_each(|v| *v /= s);
    Ok(g)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::env::Task;
    use crate::math;
    use crate::mpc::CostConfig;
    use crate::nn::{Activation, NetworkSpec, OutputActivation};
    use crate::rng::rng_from_seed;

    pub struct Fixture {
        pub dynamics: DynamicsModel,
        pub cost: CostModel,
        pub bc: BcPolicy,
        pub predictor: NextStatePredictor,
    }

    impl Fixture {
        pub fn models(&self) -> PlanModels<'_> {
            PlanModels {
                dynamics: &self.dynamics,
                cost: &self.cost,
                bc: &self.bc,
                predictor: &self.predictor,
            }
        }
    }

    fn relu(sizes: Vec<usize>) -> NetworkSpec {
        NetworkSpec::uniform(sizes, Activation::Relu, OutputActivation::Identity).unwrap()
    }

    fn jitter(net: &mut crate::nn::DenseNet, scale: f64, seed: u64) {
        let mut rng = rng_from_seed(seed);
        net.update_params(|w| w.iter_mut().for_each(|v| *v += scale * rng.gen_range(-1.0..1.0)));
    }

    /// Small random models with non-trivial dynamics.
    pub fn fixture(task: Task, seed: u64) -> Fixture {
        let (n, m) = (task.state_dim(), task.action_dim());
        let mut dynamics = DynamicsModel::new(task, relu(vec![n + m, 24, 24, n]), seed).unwrap();
        jitter(dynamics.net_mut(), 0.05, seed + 1);
        let mut predictor = NextStatePredictor::new(task, relu(vec![n, 24, n]), seed + 2).unwrap();
        jitter(predictor.net_mut(), 0.05, seed + 3);
        let cost_cfg = CostConfig {
            hidden: 16,
            init_learned_weight: 0.5,
            init_engineered_weight: 1.0,
            ..CostConfig::default()
        };
        let bound = if task == Task::PendulumSwingup { 2.0 } else { 10.0 };
        Fixture {
            dynamics,
            cost: CostModel::new(&cost_cfg, n, seed + 4).unwrap(),
            bc: BcPolicy::new(relu(vec![n, 16, m]), bound, seed + 5).unwrap(),
            predictor,
        }
    }

    pub fn random_state(task: Task, rng: &mut Rng) -> Vec<f64> {
        let th: f64 = rng.gen_range(-3.0..3.0);
        match task {
            Task::PendulumSwingup => vec![math::cos(th), math::sin(th), rng.gen_range(-2.0..2.0)],
            Task::CartpoleBalance => vec![
                rng.gen_range(-1.0..1.0),
                math::cos(th),
                math::sin(th),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-2.0..2.0),
            ],
        }
    }

    fn sq_loss(path: &GeneratorPath<f64>) -> Result<(f64, GeneratorPath<f64>)> {
        let l = path.states.iter().flatten().map(|v| v * v).sum();
        let states = path.states.iter().map(|s| s.iter().map(|v| 2.0 * v).collect()).collect();
        Ok((
            l,
            GeneratorPath {
                states,
                actions: Vec::new(),
            },
        ))
    }

    fn action_loss(path: &GeneratorPath<f64>) -> Result<(f64, GeneratorPath<f64>)> {
        let (l, mut adj) = sq_loss(path)?;
        let la: f64 = path.actions.iter().flatten().map(|v| v * v).sum();
        adj.actions = path.actions.iter().map(|a| a.iter().map(|v| 2.0 * v).collect()).collect();
        Ok((l + la, adj))
    }

    #[test]
    fn zero_policy_without_terminal_cost_returns_zero() {
        let mut f = fixture(Task::PendulumSwingup, 1);
        let spec = f.bc.net().spec().clone();
        f.bc = BcPolicy::with_params(spec.clone(), crate::nn::NetworkParams::zeros(&spec), 2.0).unwrap();
        let cfg = MpcConfig {
            gamma: 0.0,
            ..MpcConfig::default()
        };
        let a = mpc_policy(f.models(), &cfg, &[0.0, 1.0, 0.5]).unwrap();
        assert_eq!(a, vec![0.0]);
    }

    #[test]
    fn policy_is_deterministic_and_bounded() {
        let f = fixture(Task::CartpoleBalance, 2);
        let cfg = MpcConfig::default();
        let mut rng = rng_from_seed(3);
        for _ in 0..5 {
            let s = random_state(Task::CartpoleBalance, &mut rng);
            let a = mpc_policy(f.models(), &cfg, &s).unwrap();
            assert_eq!(a, mpc_policy(f.models(), &cfg, &s).unwrap());
            assert!(a[0].abs() <= 10.0);
        }
    }

    #[test]
    fn cost_trace_is_monotone_on_random_pendulum_instances() {
        let cfg = MpcConfig::default();
        for k in 0..100u64 {
            let f = fixture(Task::PendulumSwingup, 100 + k);
            let mut rng = rng_from_seed(k);
            let s = random_state(Task::PendulumSwingup, &mut rng);
            let sol = mpc_plan(f.models(), &cfg, &s).unwrap();
            assert!(sol.cost_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", sol.cost_trace);
            assert!(sol.actions.iter().flatten().all(|a| a.abs() <= 2.0));
            assert_eq!(sol.actions.len(), cfg.horizon - 1);
        }
    }

    #[test]
    fn single_state_rollout_has_zero_gradient() {
        let f = fixture(Task::PendulumSwingup, 4);
        let r = rollout_gradient(f.models(), &MpcConfig::default(), &[1.0, 0.0, 0.3], 1, sq_loss).unwrap();
        assert_eq!(r.path.states, vec![vec![1.0, 0.0, 0.3]]);
        assert!(r.path.actions.is_empty());
        assert!(r.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn disconnected_network_gets_no_gradient() {
        let mut f = fixture(Task::PendulumSwingup, 5);
        let (le, _) = f.cost.logits();
        f.cost.set_logits(le, -800.0);
        assert_eq!(f.cost.mix_weights().1, 0.0);
        let r = rollout_gradient(f.models(), &MpcConfig::default(), &[0.0, 1.0, 0.3], 6, sq_loss).unwrap();
        let k = f.cost.network_param_count();
        assert!(r.grad[..k].iter().all(|&g| g == 0.0));
        assert!(r.grad[k] != 0.0);
    }

    #[test]
    fn full_unroll_matches_closed_loop_policy_bitwise() {
        for task in [Task::PendulumSwingup, Task::CartpoleBalance] {
            let f = fixture(task, 6);
            let cfg = MpcConfig {
                unroll_iters: 10,
                ..MpcConfig::default()
            };
            let mut rng = rng_from_seed(7);
            let s0 = random_state(task, &mut rng);
            let r = rollout_gradient(f.models(), &cfg, &s0, 6, sq_loss).unwrap();
            let mut s = s0.clone();
            let mut plain = vec![s.clone()];
            for _ in 1..6 {
                let a = mpc_policy(f.models(), &cfg, &s).unwrap();
                s = f.dynamics.predict(&s, &a).unwrap();
                plain.push(s.clone());
            }
            assert_eq!(r.path.states, plain);
            assert_eq!(generator_rollout(f.models(), &cfg, &s0, 6).unwrap().states, plain);
        }
    }

    fn directional_check(task: Task, seed: u64, loss: fn(&GeneratorPath<f64>) -> Result<(f64, GeneratorPath<f64>)>) {
        let f = fixture(task, seed);
        let cfg = MpcConfig::default();
        let mut rng = rng_from_seed(seed);
        let s0 = random_state(task, &mut rng);
        let r = rollout_gradient(f.models(), &cfg, &s0, 10, loss).unwrap();
        let base = f.cost.gen_params();
        let loss_at = |p: &[f64]| {
            let mut c = f.cost.clone();
            c.set_gen_params(p).unwrap();
            let models = PlanModels { cost: &c, ..f.models() };
            loss(&generator_rollout(models, &cfg, &s0, 10).unwrap()).unwrap().0
        };
        let eps = 1e-4;
        for _ in 0..10 {
            let v: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let plus: Vec<f64> = base.iter().zip(&v).map(|(p, d)| p + eps * d).collect();
            let minus: Vec<f64> = base.iter().zip(&v).map(|(p, d)| p - eps * d).collect();
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let an: f64 = r.grad.iter().zip(&v).map(|(g, d)| g * d).sum();
            assert!((fd - an).abs() <= 0.05 * fd.abs().max(1e-8), "{task:?} seed {seed}: fd {fd} vs {an}");
        }
    }

    #[test]
    fn directional_derivatives_match_central_differences() {
        directional_check(Task::PendulumSwingup, 11, sq_loss);
        directional_check(Task::CartpoleBalance, 12, sq_loss);
        directional_check(Task::PendulumSwingup, 13, action_loss);
    }

    #[test]
    fn spsa_recovers_linear_gradient() {
        let mut rng = rng_from_seed(1);
        let w = [1.0, -2.0, 0.5];
        let g = spsa_gradient(&[0.1, 0.2, 0.3], 1e-3, 400, &mut rng, |p| {
            Ok(p.iter().zip(&w).map(|(a, b)| a * b).sum())
        })
        .unwrap();
        for (a, b) in g.iter().zip(&w) {
            assert!((a - b).abs() < 0.35, "{g:?}");
        }
    }
}
