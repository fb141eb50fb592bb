use proptest::prelude::*;

use yawguard::agents::{AgentRole, NetworkConfig, PolicyAgent};
use yawguard::checkpoint::{Checkpoint, CheckpointMetadata};
use yawguard::env::{EnvConfig, FarmEnv};
use yawguard::nn::Mlp;
use yawguard::noise::{apply_errors, AdversaryAction, NoiseBounds, SensorErrorState};
use yawguard::ppo::compute_gae;
use yawguard::seed;
use yawguard::signals::{SignalKind, Signals};
use yawguard::wake::{FarmLayout, InflowCondition, WakeModel};

fn random_mlp(sizes: &[usize], s: u64) -> Mlp {
    Mlp::orthogonal(sizes, 1.0, 1.0, &mut seed::stream(s, &[])).unwrap()
}

/// Σ_k c_k · out_k, the scalar whose gradient `backward` returns for output gradient c.
fn projected(net: &Mlp, x: &[f64], c: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(c).map(|(o, c)| o * c).sum()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= (1e-4 * a.abs().max(b.abs())).max(1e-8)
}

/// Direct evaluation A_t = Σ_l (γλ)^l δ_{t+l}, the sum cut at the first terminal.
fn gae_nested(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let v_next = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
    let delta = |t: usize| {
        let live = if dones[t] { 0.0 } else { 1.0 };
        rewards[t] + gamma * live * v_next(t) - values[t]
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for l in t..n {
                sum += w * delta(l);
                if dones[l] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mlp_gradients_match_central_differences(
        sizes in prop::collection::vec(1usize..6, 2..5),
        s in any::<u64>(),
    ) {
        let net = random_mlp(&sizes, s);
        let mut rng = seed::stream(s, &[1]);
        let x: Vec<f64> = (0..sizes[0]).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let c: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let g = net.backward(&x, &c).unwrap();
        let mut analytic = Vec::new();
        g.write_flat(&mut analytic);
        let mut flat = Vec::new();
        net.write_flat(&mut flat);
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut p = net.clone();
            let mut v = flat.clone();
            v[i] += h;
            p.read_flat(&v);
            let up = projected(&p, &x, &c);
            v[i] -= 2.0 * h;
            p.read_flat(&v);
            let down = projected(&p, &x, &c);
            let numeric = (up - down) / (2.0 * h);
            prop_assert!(close(analytic[i], numeric), "param {i}: {} vs {numeric}", analytic[i]);
        }
        // input gradient too
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let up = projected(&net, &xp, &c);
            xp[i] -= 2.0 * h;
            let down = projected(&net, &xp, &c);
            prop_assert!(close(g.input[[0, i]], (up - down) / (2.0 * h)));
        }
    }

    #[test]
    fn adversary_error_respects_budget(
        requests in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 8), 1..120),
    ) {
        let bounds = NoiseBounds::default();
        let mut state = SensorErrorState::zero(2);
        prop_assert!(state.errors().iter().all(|e| *e == Signals::ZERO));
        for r in &requests {
            let before = state.errors().to_vec();
            let action = AdversaryAction::from_normalized(r, &bounds).unwrap();
            state.apply_delta(&action, &bounds).unwrap();
            for (b, a) in before.iter().zip(state.errors()) {
                for k in SignalKind::ALL {
                    prop_assert!((a[k] - b[k]).abs() <= bounds.step_limit(k) * (1.0 + 1e-12));
                    prop_assert!(a[k].abs() <= bounds.max_bias[k]);
                }
            }
        }
    }

    #[test]
    fn coupling_is_exact_and_other_channels_additive(
        x in prop::array::uniform4(-100.0f64..100.0),
        e in prop::array::uniform4(-10.0f64..10.0),
    ) {
        let frame = [Signals::from_array(x)];
        let err = [Signals::from_array(e)];
        let s = apply_errors(&frame, &err)[0];
        prop_assert_eq!(s.speed, x[0] + e[0]);
        prop_assert_eq!(s.direction, x[1] + e[1]);
        prop_assert_eq!(s.yaw, x[2] + e[2] - e[1]);
        prop_assert_eq!(s.power, x[3] + e[3]);
    }

    #[test]
    fn recursive_gae_equals_nested_sum(
        steps in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, prop::bool::weighted(0.15)), 1..30),
        bootstrap in -2.0f64..2.0,
        gamma in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let (adv, ret) = compute_gae(&r, &v, &d, bootstrap, gamma, lambda);
        let oracle = gae_nested(&r, &v, &d, bootstrap, gamma, lambda);
        for t in 0..r.len() {
            prop_assert!((adv[t] - oracle[t]).abs() < 1e-12);
            prop_assert_eq!(ret[t], adv[t] + v[t]);
        }
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(s in any::<u64>(), width in 1usize..8) {
        let net = NetworkConfig { hidden: vec![width], initial_log_std: -0.3, ..NetworkConfig::default() };
        let agent = PolicyAgent::new(AgentRole::Adversary, 5, vec![0.4, 1.0, 2.0], &net, &mut seed::stream(s, &[])).unwrap();
        let ck = Checkpoint::from_agent(&agent, CheckpointMetadata {
            role: AgentRole::Adversary,
            schedule: "ssp".into(),
            iteration: 3,
            seed: s,
            total_env_steps: 7,
            label: "A3".into(),
        });
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap().to_agent().unwrap();
        prop_assert_eq!(back.flat_params(), agent.flat_params());
        prop_assert_eq!(back, agent);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Observations are normalized into [−1, 1] whatever the actions and
    /// (budget-respecting) errors, and the reward never sees the errors.
    #[test]
    fn observations_stay_normalized(
        speed in 6.0f64..=7.0,
        direction in 267.0f64..=273.0,
        moves in prop::collection::vec((prop::array::uniform2(-5.0f64..5.0), prop::collection::vec(-1.0f64..1.0, 8)), 200),
    ) {
        let mut env = FarmEnv::new(EnvConfig::default(), FarmLayout::default(), WakeModel::default()).unwrap();
        let mut twin = FarmEnv::new(EnvConfig::default(), FarmLayout::default(), WakeModel::default()).unwrap();
        let bounds = NoiseBounds::default();
        let inflow = InflowCondition::new(speed, direction);
        let mut rng = seed::stream(0, &[]);
        env.reset(Some(inflow), &mut rng).unwrap();
        twin.reset(Some(inflow), &mut rng).unwrap();
        let mut errors = SensorErrorState::zero(2);
        let clean = vec![Signals::ZERO; 2];
        for (delta, request) in &moves {
            errors.apply_delta(&AdversaryAction::from_normalized(request, &bounds).unwrap(), &bounds).unwrap();
            let out = env.step(delta, errors.errors()).unwrap();
            let reference = twin.step(delta, &clean).unwrap();
            prop_assert!(out.sensed_obs.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!(out.true_obs.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert_eq!(out.true_obs.as_slice(), reference.true_obs.as_slice());
            prop_assert_eq!(out.reward.reward.to_bits(), reference.reward.reward.to_bits());
        }
        prop_assert!(env.is_done());
    }
}
