use ganmpc::env::{rollout, EnvSpec, Expert, PhysicalParams, Task, Trajectory};
use ganmpc::ganmpc::*;
use ganmpc::models::AuxTrainConfig;
use ganmpc::mpc::{rollout_gradient, CostConfig, GeneratorPath, MpcConfig};
use ganmpc::nn::{AdamConfig, AdamState};
use ganmpc::rng::rng_from_seed;
use proptest::prelude::*;

const STEPS: usize = 40;

fn spec(task: Task) -> EnvSpec {
    let mut s = EnvSpec::demonstrator(task);
    s.max_steps = STEPS;
    s
}

fn demos(task: Task, n: u64) -> Vec<Trajectory> {
    let s = spec(task);
    let mut e = Expert::new(&s).unwrap();
    (0..n).map(|i| rollout(&s, &mut e, i, STEPS).unwrap()).collect()
}

fn small_models() -> ModelConfig {
    ModelConfig {
        dynamics_layers: 3,
        dynamics_hidden: 16,
        bc_layers: 3,
        bc_hidden: 16,
        predictor_layers: 3,
        predictor_hidden: 16,
        disc_hidden: 8,
        cost: CostConfig {
            layers: 3,
            hidden: 8,
            ..CostConfig::default()
        },
        aux: AuxTrainConfig {
            epochs: 5,
            batch_size: 32,
            ..AuxTrainConfig::default()
        },
        dynamics_batch_size: 32,
        ..ModelConfig::default()
    }
}

fn hyper(algorithm: Algorithm, n_mpc: usize) -> GanMpcHyper {
    GanMpcHyper {
        algorithm,
        n_mpc,
        batch_size: 8,
        rollout_len: 5,
        ..GanMpcHyper::default()
    }
}

fn mpc() -> MpcConfig {
    MpcConfig {
        horizon: 4,
        max_ilqr_iters: 3,
        ..MpcConfig::default()
    }
}

struct Setup {
    spec: EnvSpec,
    demos: Vec<Trajectory>,
    models: ModelConfig,
    init: Initialization,
}

fn setup(task: Task) -> Setup {
    let demos = demos(task, 4);
    let models = small_models();
    let init = initialize(&spec(task), &demos, &models, 1, 11).unwrap();
    Setup {
        spec: spec(task),
        demos,
        models,
        init,
    }
}

fn run(s: &Setup, h: &GanMpcHyper, seed: u64) -> TrainState {
    let imitator = s.spec.clone().with_physical(PhysicalParams::pole_mass(2.0).unwrap());
    let mut state = TrainState::new(s.init.clone(), &imitator, h, &s.models, seed).unwrap();
    let mut sizes = Vec::new();
    train(&mut state, &imitator, &s.demos, h, &mpc(), RolloutSeeds { offset: 500 }, &mut |st| {
        sizes.push(st.buffer.len());
        Ok(())
    })
    .unwrap();
    let per = h.k_rollouts * STEPS;
    assert_eq!(sizes, (1..=h.n_mpc).map(|i| i * per).collect::<Vec<_>>());
    state
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

#[test]
fn zero_outer_iterations_leave_the_initial_state() {
    let s = setup(Task::PendulumSwingup);
    let h = hyper(Algorithm::GanMpc, 0);
    let fresh = TrainState::new(s.init.clone(), &s.spec, &h, &s.models, 3).unwrap();
    let done = run(&s, &h, 3);
    assert_eq!(json(&fresh), json(&done));
    assert_eq!(done.interaction_steps, 0);
}

#[test]
fn behavior_cloning_never_touches_the_environment() {
    let s = setup(Task::PendulumSwingup);
    let h = hyper(Algorithm::Bc, 10);
    let mut state = TrainState::new(s.init.clone(), &s.spec, &h, &s.models, 3).unwrap();
    let mut calls = 0;
    train(&mut state, &s.spec, &s.demos, &h, &mpc(), RolloutSeeds { offset: 0 }, &mut |_| {
        calls += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!((calls, state.interaction_steps, state.buffer.len()), (0, 0, 0));
}

#[test]
fn gan_training_is_deterministic_and_accounts_every_step() {
    let s = setup(Task::PendulumSwingup);
    let h = hyper(Algorithm::GanMpc, 2);
    let a = run(&s, &h, 5);
    let b = run(&s, &h, 5);
    assert_eq!(json(&a), json(&b));
    assert_eq!(a.interaction_steps, (2 * STEPS) as u64);
    assert_eq!(a.metrics.len(), 2);
    let m = &a.metrics[1];
    assert_eq!((m.iteration, m.buffer_size), (2, 2 * STEPS));
    assert!(m.disc_loss.unwrap().is_finite());
    assert!((0.0..=1.0).contains(&m.disc_accuracy.unwrap()));
    // the deployed parameters lag the live ones
    assert_ne!(a.cost_live.gen_params(), a.cost_deployed.gen_params());
    let c = run(&s, &h, 6);
    assert_ne!(json(&a.metrics), json(&c.metrics));
}

#[test]
fn baselines_deploy_their_live_parameters() {
    let s = setup(Task::CartpoleBalance);
    for alg in [Algorithm::L2MpcSa, Algorithm::L2MpcS] {
        let st = run(&s, &hyper(alg, 1), 2);
        assert_eq!(json(&st.cost_live), json(&st.cost_deployed));
        assert!(st.discriminator.is_none());
        assert!(st.metrics[0].disc_loss.is_none());
        assert!(st.metrics[0].gen_loss >= 0.0);
    }
}

#[test]
fn masked_discriminator_sees_only_visible_dimensions() {
    let s = setup(Task::PendulumSwingup);
    let h = GanMpcHyper {
        obs_mask: Some(vec![true, true, false]),
        ..hyper(Algorithm::GanMpc, 1)
    };
    let st = run(&s, &h, 4);
    let full = Discriminator::new(2, s.models.disc_hidden, 0).unwrap();
    assert_eq!(st.discriminator.unwrap().param_count(), full.param_count());
}

#[test]
fn windows_start_on_demonstration_states() {
    let d = demos(Task::PendulumSwingup, 3);
    let mut rng = rng_from_seed(9);
    let ws = sample_windows(&d, 64, 10, &mut rng).unwrap();
    assert_eq!(ws.len(), 64);
    let s = setup(Task::PendulumSwingup);
    let st = TrainState::new(s.init.clone(), &s.spec, &hyper(Algorithm::GanMpc, 1), &s.models, 1).unwrap();
    for w in &ws {
        let states = w.states(&d);
        assert_eq!(states.len(), 10);
        assert_eq!(w.actions(&d).len(), 9);
        assert_eq!(states[0], d[w.trajectory].states[w.start]);
        let path = ganmpc::mpc::generator_rollout(st.deployed(), &mpc(), &states[0], 10).unwrap();
        assert_eq!(path.states[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            states[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
    assert!(sample_windows(&d, 4, STEPS + 2, &mut rng).is_err());
}

#[test]
fn generator_objective_decreases_against_a_frozen_discriminator() {
    let s = setup(Task::PendulumSwingup);
    let h = hyper(Algorithm::GanMpc, 1);
    let mut st = TrainState::new(s.init.clone(), &s.spec, &h, &s.models, 7).unwrap();
    let disc = st.discriminator.clone().unwrap();
    let cfg = mpc();
    let starts: Vec<Vec<f64>> = s.demos.iter().map(|d| d.states[3].clone()).collect();
    let mut adam = AdamState::new(AdamConfig::default().with_learning_rate(1e-5), st.cost_live.gen_param_count());
    let mut losses = Vec::new();
    for _ in 0..6 {
        let mut loss = 0.0;
        let mut grad = vec![0.0; st.cost_live.gen_param_count()];
        for s0 in &starts {
            let r = rollout_gradient(st.deployed(), &cfg, s0, 5, |p: &GeneratorPath<f64>| {
                let (l, dx) = generator_objective(&disc, &p.states, 0.25)?;
                Ok((l, GeneratorPath { states: dx, actions: Vec::new() }))
            })
            .unwrap();
            loss += r.loss;
            grad.iter_mut().zip(&r.grad).for_each(|(g, v)| *g += v);
        }
        losses.push(loss);
        let mut p = st.cost_live.gen_params();
        adam.update(&mut p, &grad).unwrap();
        st.cost_live.set_gen_params(&p).unwrap();
        st.cost_deployed = st.cost_live.clone();
    }
    assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{losses:?}");
    assert!(losses[5] < losses[0], "{losses:?}");
}

fn path(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>) -> GeneratorPath<f64> {
    GeneratorPath { states, actions }
}

#[test]
fn l2_objective_vanishes_on_the_demonstration() {
    let d = demos(Task::CartpoleBalance, 1);
    let states = d[0].states[..6].to_vec();
    let actions = d[0].actions[..5].to_vec();
    for with_actions in [false, true] {
        let (loss, adj) =
            l2_objective(&path(states.clone(), actions.clone()), &states, &actions, &[true; 5], with_actions).unwrap();
        assert_eq!(loss, 0.0);
        assert!(adj.states.iter().chain(&adj.actions).flatten().all(|&g| g == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn state_action_loss_dominates_state_loss(
        vals in prop::collection::vec(-3.0f64..3.0, 4 * 3 + 3 + 4 * 3 + 3),
        mask in prop::collection::vec(any::<bool>(), 3),
    ) {
        let (a, b) = vals.split_at(15);
        let states = |v: &[f64]| v[..12].chunks(3).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let actions = |v: &[f64]| v[12..].chunks(1).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let mut mask = mask;
        mask[0] = true;
        let p = path(states(a), actions(a));
        let (s, _) = l2_objective(&p, &states(b), &actions(b), &mask, false).unwrap();
        let (sa, _) = l2_objective(&p, &states(b), &actions(b), &mask, true).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert!(sa >= s);
    }
}
