use ganmpc::env::{rollout, EnvSpec, Expert, PhysicalParams, Task, Trajectory};
use ganmpc::eval::relative_reward;
use ganmpc::models::*;
use ganmpc::nn::{Activation, AdamConfig, AdamState, NetworkSpec, OutputActivation};

fn demos(task: Task, n: u64) -> Vec<Trajectory> {
    let spec = EnvSpec::demonstrator(task);
    let mut e = Expert::new(&spec).unwrap();
    (0..n).map(|i| rollout(&spec, &mut e, i, spec.max_steps).unwrap()).collect()
}

fn relu(sizes: Vec<usize>) -> NetworkSpec {
    NetworkSpec::uniform(sizes, Activation::Relu, OutputActivation::Identity).unwrap()
}

#[test]
fn pretraining_halves_held_out_error() {
    let data = demos(Task::PendulumSwingup, 55);
    let (train, held) = data.split_at(50);
    let mut model = DynamicsModel::new(Task::PendulumSwingup, relu(vec![4, 200, 200, 3]), 1).unwrap();
    let mut adam = AdamState::new(AdamConfig::default(), model.net().params().len());
    // the identity prior is already a decent one-step model; measure the
    // untrained error after the normalizers are fitted
    let before = dynamics_mse(&model, held);
    pretrain_dynamics(&mut model, train, 2, 128, &mut adam, 3).unwrap();
    let after = dynamics_mse(&model, held);
    assert!(after <= 0.5 * before, "{before} -> {after}");
}

#[test]
fn bc_clones_the_pendulum_expert() {
    let data = demos(Task::PendulumSwingup, 50);
    let mut bc = BcPolicy::new(relu(vec![3, 128, 128, 1]), 2.0, 4).unwrap();
    train_bc(&mut bc, &data, &AuxTrainConfig::default(), 5).unwrap();
    let spec = EnvSpec::demonstrator(Task::PendulumSwingup);
    let mut e = Expert::new(&spec).unwrap();
    let seeds: Vec<u64> = (1_000..1_020).collect();
    let demo: Vec<f64> = seeds.iter().map(|&s| rollout(&spec, &mut e, s, 500).unwrap().total_reward()).collect();
    let mut p = &bc;
    let imit: Vec<f64> = seeds.iter().map(|&s| rollout(&spec, &mut p, s, 500).unwrap().total_reward()).collect();
    let r = relative_reward(&imit, &demo).unwrap();
    assert!((r - 0.951).abs() <= 0.15, "{r}");
}

#[test]
fn next_state_error_grows_with_horizon() {
    let data = demos(Task::PendulumSwingup, 50);
    let mut nsp = NextStatePredictor::new(Task::PendulumSwingup, relu(vec![3, 128, 128, 3]), 6).unwrap();
    train_next_state(&mut nsp, &data[..45], &AuxTrainConfig::default(), 7).unwrap();
    let err = |k: usize| {
        let mut total = 0.0;
        let mut count = 0;
        for t in &data[45..] {
            for i in (0..t.states.len() - k).step_by(7) {
                let p = predict_target(&nsp, &t.states[i], k).unwrap();
                total += p.iter().zip(&t.states[i + k]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                count += 1;
            }
        }
        total / count as f64
    };
    let (e1, e5) = (err(1), err(5));
    assert!(e1 < e5);
}

#[test]
fn finetuning_adapts_to_heavier_pole() {
    let data = demos(Task::PendulumSwingup, 50);
    let mut model = DynamicsModel::new(Task::PendulumSwingup, relu(vec![4, 200, 200, 3]), 1).unwrap();
    let mut adam = AdamState::new(AdamConfig::default(), model.net().params().len());
    pretrain_dynamics(&mut model, &data, 2, 128, &mut adam, 3).unwrap();
    let heavy = EnvSpec::demonstrator(Task::PendulumSwingup).with_physical(PhysicalParams::pole_mass(2.0).unwrap());
    let mut e = Expert::new(&EnvSpec::demonstrator(Task::PendulumSwingup)).unwrap();
    let mut noisy = |s: &[f64]| -> ganmpc::Result<Vec<f64>> {
        let a = ganmpc::env::Policy::act(&mut e, s)?;
        Ok(vec![(a[0] * 0.8 + 0.3 * (s[2] * 3.0).sin()).clamp(-2.0, 2.0)])
    };
    let mut buffer = ReplayBuffer::new(100_000).unwrap();
    for seed in 0..10 {
        let t = rollout(&heavy, &mut noisy, 500 + seed, 500).unwrap();
        buffer.push_trajectory(&t, Source::Imitator).unwrap();
    }
    let fresh: Vec<Trajectory> = (0..3).map(|s| rollout(&heavy, &mut noisy, 900 + s, 500).unwrap()).collect();
    let before = dynamics_mse(&model, &fresh);
    let rep = finetune_dynamics(&mut model, &buffer, 2, 128, &mut adam, 8).unwrap();
    let after = dynamics_mse(&model, &fresh);
    assert!(after < before);
    assert!(rep.epoch_losses.last().unwrap() <= &rep.epoch_losses[0]);
}

fn constant_trajectory(s: &[f64], a: f64, s2: &[f64]) -> Trajectory {
    Trajectory {
        states: vec![s.to_vec(), s2.to_vec()],
        actions: vec![vec![a]],
        rewards: vec![0.0],
    }
}

#[test]
fn zero_epochs_leave_dynamics_parameters_alone() {
    let data = demos(Task::PendulumSwingup, 2);
    let mut model = DynamicsModel::new(Task::PendulumSwingup, relu(vec![4, 16, 3]), 1).unwrap();
    let before = model.net().params().as_slice().to_vec();
    let mut adam = AdamState::new(AdamConfig::default(), before.len());
    pretrain_dynamics(&mut model, &data, 0, 128, &mut adam, 3).unwrap();
    assert_eq!(model.net().params().as_slice(), &before[..]);
    let mut buffer = ReplayBuffer::new(1000).unwrap();
    buffer.push_trajectory(&data[0], Source::Imitator).unwrap();
    finetune_dynamics(&mut model, &buffer, 0, 128, &mut adam, 3).unwrap();
    assert_eq!(model.net().params().as_slice(), &before[..]);
}

#[test]
fn dynamics_overfit_a_repeated_transition() {
    let s = [0.6, 0.8, -0.4];
    let next = [0.7f64.cos(), 0.7f64.sin(), 0.3];
    let demos = vec![constant_trajectory(&s, 0.5, &next); 32];
    let mut model = DynamicsModel::new(Task::PendulumSwingup, relu(vec![4, 32, 32, 3]), 2).unwrap();
    let mut adam = AdamState::new(AdamConfig::default(), model.net().params().len());
    pretrain_dynamics(&mut model, &demos, 500, 32, &mut adam, 3).unwrap();
    let mse = dynamics_mse(&model, &demos[..1]);
    assert!(mse < 1e-6, "{mse}");
}

#[test]
fn bc_learns_a_constant_action() {
    let mut data = demos(Task::PendulumSwingup, 5);
    for t in &mut data {
        t.actions.iter_mut().for_each(|a| a[0] = 0.7);
    }
    let mut bc = BcPolicy::new(relu(vec![3, 32, 1]), 2.0, 4).unwrap();
    let cfg = AuxTrainConfig {
        holdout_fraction: 0.0,
        ..AuxTrainConfig::default()
    };
    train_bc(&mut bc, &data, &cfg, 5).unwrap();
    let mse = data
        .iter()
        .flat_map(|t| t.states.iter())
        .map(|s| (bc.act(s).unwrap()[0] - 0.7).powi(2))
        .sum::<f64>()
        / data.iter().map(|t| t.states.len()).sum::<usize>() as f64;
    assert!(mse < 1e-4, "{mse}");
}

#[test]
fn static_demonstrations_are_predicted_exactly_at_initialization() {
    let s = [0.0, 1.0, 0.0];
    let demos = vec![constant_trajectory(&s, 0.0, &s); 4];
    let mut nsp = NextStatePredictor::new(Task::PendulumSwingup, relu(vec![3, 16, 3]), 6).unwrap();
    let cfg = AuxTrainConfig {
        epochs: 0,
        ..AuxTrainConfig::default()
    };
    train_next_state(&mut nsp, &demos, &cfg, 7).unwrap();
    let p = nsp.step(&s).unwrap();
    let mse = p.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 3.0;
    assert!(mse < 1e-8, "{mse}");
}

fn bc_loss(bc: &BcPolicy, data: &[Trajectory]) -> f64 {
    let pairs: Vec<_> = data.iter().flat_map(|t| t.transitions()).collect();
    pairs.iter().map(|(s, a, _)| (bc.act(s).unwrap()[0] - a[0]).powi(2)).sum::<f64>() / pairs.len() as f64
}

fn nsp_loss(nsp: &NextStatePredictor, data: &[Trajectory]) -> f64 {
    let pairs: Vec<_> = data.iter().flat_map(|t| t.transitions()).collect();
    pairs
        .iter()
        .map(|(s, _, s2)| nsp.step(s).unwrap().iter().zip(s2.iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 3.0)
        .sum::<f64>()
        / pairs.len() as f64
}

#[test]
fn ten_small_steps_reduce_every_training_loss() {
    let data: Vec<Trajectory> = demos(Task::PendulumSwingup, 2)
        .into_iter()
        .map(|mut t| {
            t.states.truncate(61);
            t.actions.truncate(60);
            t.rewards.truncate(60);
            t
        })
        .collect();
    let full = 120;
    let cfg = |epochs| AuxTrainConfig {
        epochs,
        batch_size: full,
        learning_rate: 1e-5,
        holdout_fraction: 0.0,
        ..AuxTrainConfig::default()
    };

    let mut model = DynamicsModel::new(Task::PendulumSwingup, relu(vec![4, 32, 32, 3]), 1).unwrap();
    let mut adam = AdamState::new(AdamConfig::default().with_learning_rate(1e-5), model.net().params().len());
    pretrain_dynamics(&mut model, &data, 0, full, &mut adam, 3).unwrap();
    let before = dynamics_mse(&model, &data);
    pretrain_dynamics(&mut model, &data, 10, full, &mut adam, 3).unwrap();
    let after = dynamics_mse(&model, &data);
    assert!(after < before, "dynamics {before} -> {after}");

    let mut bc = BcPolicy::new(relu(vec![3, 32, 32, 1]), 2.0, 4).unwrap();
    train_bc(&mut bc, &data, &cfg(0), 5).unwrap();
    let before = bc_loss(&bc, &data);
    train_bc(&mut bc, &data, &cfg(10), 5).unwrap();
    let after = bc_loss(&bc, &data);
    assert!(after < before, "bc {before} -> {after}");

    let mut nsp = NextStatePredictor::new(Task::PendulumSwingup, relu(vec![3, 32, 32, 3]), 6).unwrap();
    // a zero head starts at the identity; perturb it so there is a gradient
    nsp.net_mut()
        .update_params(|p| {
            p.iter_mut().enumerate().for_each(|(i, v)| *v += 1e-2 * ((i as f64) * 0.37).sin());
        });
    train_next_state(&mut nsp, &data, &cfg(0), 7).unwrap();
    let before = nsp_loss(&nsp, &data);
    train_next_state(&mut nsp, &data, &cfg(10), 7).unwrap();
    let after = nsp_loss(&nsp, &data);
    assert!(after < before, "next state {before} -> {after}");
}

mod jacobians {
    use super::*;
    use proptest::prelude::*;

    fn model(task: Task, seed: u64) -> DynamicsModel {
        let (n, m) = (task.state_dim(), task.action_dim());
        let mut d = DynamicsModel::new(task, relu(vec![n + m, 24, 24, n]), seed).unwrap();
        d.net_mut()
            .update_params(|p| {
                p.iter_mut().enumerate().for_each(|(i, v)| *v += 0.1 * ((i as f64) * 1.3 + seed as f64).sin());
            });
        d
    }

    fn check(d: &DynamicsModel, s: &[f64], a: &[f64]) -> Result<(), TestCaseError> {
        let (_, j) = d.jacobian(s, a).unwrap();
        let n = s.len();
        let cols = n + a.len();
        let h = 1e-6;
        for c in 0..cols {
            let mut x: Vec<f64> = s.iter().chain(a).copied().collect();
            x[c] += h;
            let up = d.predict(&x[..n], &x[n..]).unwrap();
            x[c] -= 2.0 * h;
            let down = d.predict(&x[..n], &x[n..]).unwrap();
            for r in 0..n {
                let fd = (up[r] - down[r]) / (2.0 * h);
                let an = j[r * cols + c];
                prop_assert!((fd - an).abs() <= 1e-4 * an.abs().max(1.0), "({r},{c}) {an} vs {fd}");
            }
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pendulum_dynamics(th in -3.1f64..3.1, w in -6.0f64..6.0, u in -2.0f64..2.0, seed in 0u64..4) {
            let d = model(Task::PendulumSwingup, seed);
            check(&d, &[th.cos(), th.sin(), w], &[u])?;
        }

        #[test]
        fn cartpole_dynamics(x in -1.0f64..1.0, th in -3.1f64..3.1, v in -2.0f64..2.0, w in -4.0f64..4.0, u in -1.0f64..1.0, seed in 0u64..4) {
            let d = model(Task::CartpoleBalance, seed);
            check(&d, &[x, th.cos(), th.sin(), v, w], &[u])?;
        }
    }
}
