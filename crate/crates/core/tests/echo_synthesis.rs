//! Echo synthesis, symbol division and user reception against explicit
//! matrix models.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use isac_core::arrayfield::{user_sinr, PowerAllocation};
use isac_core::channel::{realize_channel, ChannelOptions, RcsModel};
use isac_core::commlink::{effective_gain, Modulation};
use isac_core::echoes::{eec, gen_symbols, synth_echoes, user_rx};
use isac_core::powalloc::{allocate_schedule, PlanStatus, SlotPlan};
use isac_core::scenario::{
    build_scan_schedule, ClutterMap, ClutterUnit, Scene, SectorClass, SystemConfig, TargetSpec, UserSpec,
};
use isac_core::SPEED_OF_LIGHT;

const TAU: f64 = std::f64::consts::TAU;

fn steer(theta: f64, n: usize, c: &SystemConfig) -> DVector<Complex64> {
    DVector::from_fn(n, |i, _| Complex64::from_polar(1.0, TAU * c.spacing * c.f0 / SPEED_OF_LIGHT * theta.sin() * i as f64))
}

fn tiny_config() -> SystemConfig {
    let mut c = SystemConfig::half_wavelength(4, 4, 28e9, 1e6, 4, 4);
    c.n_slots = 2;
    c.theta_min = (-40f64).to_radians();
    c.theta_max = 45f64.to_radians();
    c.r_min = 10.0;
    c.r_max = 60.0;
    c.noise_var_sense = 0.0;
    c.noise_var_user = 1e-11;
    c
}

fn tiny_scene() -> Scene {
    Scene {
        users: vec![
            UserSpec::new(40.0, (-40f64).to_radians(), 2.0),
            UserSpec::new(35.0, 10f64.to_radians(), 2.0),
        ],
        targets: vec![
            TargetSpec::new(30.0, 44f64.to_radians(), 20.0, 1.0),
            TargetSpec::new(52.0, (-35f64).to_radians(), -31.0, 2.0),
        ],
        clutter: ClutterMap {
            units: vec![
                ClutterUnit { range: 21.0, angle: 0.3, mean_rcs: 0.5 },
                ClutterUnit { range: 47.5, angle: -0.6, mean_rcs: 1.5 },
                ClutterUnit { range: 12.25, angle: 0.9, mean_rcs: 0.2 },
            ],
        },
    }
}

#[test]
fn factorized_synthesis_matches_full_matrix_model() {
    let c = tiny_config();
    let scene = tiny_scene();
    let schedule = build_scan_schedule(&c);
    let plans = allocate_schedule(&schedule, &scene.users, &c).unwrap();
    assert_eq!(plans[0].sector, SectorClass::C4S(0));
    assert_eq!(plans[1].sector, SectorClass::S4S);
    assert!(plans[1].alloc.rho_s > 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let options = ChannelOptions { rcs_model: RcsModel::SwerlingI, ..Default::default() };
    let real = realize_channel(&scene, &c, options, &mut rng);
    let symbols = gen_symbols(&c, scene.users.len(), Modulation::Qam16, &mut rng);
    let echoes = synth_echoes(&real, &plans, &symbols, &scene.users, &c, &mut rng).unwrap();

    let (nt, nr) = (c.n_tx, c.n_rx);
    let ts = 1.0 / c.delta_f;
    let mut worst = 0.0f64;
    let mut peak = 0.0f64;
    for (q, plan) in plans.iter().enumerate() {
        let w_rx = steer(plan.angle, nr, &c) / Complex64::new((nr as f64).sqrt(), 0.0);
        for n in 0..c.n_symbols {
            for m in 0..c.n_subcarriers {
                let fm = c.f0 + m as f64 * c.delta_f;
                let mut h = DMatrix::<Complex64>::zeros(nr, nt);
                for s in &real.scatterers {
                    let phase = -2.0 * TAU * fm * s.range / SPEED_OF_LIGHT + 2.0 * TAU * c.f0 * s.velocity * n as f64 * ts / SPEED_OF_LIGHT;
                    let a = steer(s.angle, nr, &c) * steer(s.angle, nt, &c).adjoint();
                    h += a * Complex64::from_polar(s.amplitude, phase);
                }
                let scale = |rho: f64| Complex64::new((rho * c.tx_power / nt as f64).sqrt(), 0.0);
                let mut x = steer(plan.angle, nt, &c) * scale(plan.alloc.rho_s) * symbols.sense.get(q, n, m);
                for (p, u) in scene.users.iter().enumerate() {
                    x += steer(u.angle, nt, &c) * scale(plan.alloc.rho_c[p]) * symbols.comm[p].get(q, n, m);
                }
                let y = (w_rx.adjoint() * h * x)[(0, 0)];
                let got = echoes.get(q, n, m);
                worst = worst.max((got - y).norm());
                peak = peak.max(y.norm());
            }
        }
    }
    assert!(peak > 0.0);
    assert!(worst / peak <= 1e-10, "relative error {:e}", worst / peak);

    // symbol division undoes the illuminator's symbol exactly
    let e = eec(&echoes, &symbols, &plans).unwrap();
    for n in 0..c.n_symbols {
        for m in 0..c.n_subcarriers {
            let c4s = e.get(0, n, m) * symbols.comm[0].get(0, n, m);
            let s4s = e.get(1, n, m) * symbols.sense.get(1, n, m);
            assert!((c4s - echoes.get(0, n, m)).norm() <= 1e-12 * peak);
            assert!((s4s - echoes.get(1, n, m)).norm() <= 1e-12 * peak);
        }
    }
}

#[test]
fn static_scene_echo_is_constant_over_symbols() {
    let c = tiny_config();
    let mut scene = tiny_scene();
    scene.targets.clear();
    let schedule = build_scan_schedule(&c);
    let plans = allocate_schedule(&schedule, &scene.users, &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let real = realize_channel(&scene, &c, ChannelOptions::default(), &mut rng);
    let symbols = gen_symbols(&c, 2, Modulation::Qam16, &mut rng);
    // comm beams carry their own symbols, so isolate the sensing path
    let solo: Vec<SlotPlan> = plans
        .iter()
        .map(|p| SlotPlan {
            alloc: PowerAllocation::sensing_only(2),
            sector: SectorClass::S4S,
            status: PlanStatus::Optimal,
            ..p.clone()
        })
        .collect();
    let echoes = synth_echoes(&real, &solo, &symbols, &scene.users, &c, &mut rng).unwrap();
    let e_solo = eec(&echoes, &symbols, &solo).unwrap();
    for q in 0..2 {
        for m in 0..c.n_subcarriers {
            let first = e_solo.get(q, 0, m);
            for n in 1..c.n_symbols {
                assert!((e_solo.get(q, n, m) - first).norm() <= 1e-12 * first.norm().max(1e-300));
            }
        }
    }
}

#[test]
fn user_reception_matches_closed_form_sinr() {
    let mut c = SystemConfig::half_wavelength(16, 16, 28e9, 1e6, 64, 64);
    c.n_slots = 1;
    let users = vec![
        UserSpec::new(50.0, (-30f64).to_radians(), 1.0),
        UserSpec::new(80.0, 12f64.to_radians(), 1.0),
    ];
    // interference and noise of comparable size at both users
    let g = users[0].fading(&c);
    c.noise_var_user = 0.02 * c.tx_power * g * g * c.n_tx as f64;
    let alloc = PowerAllocation::new(0.4, vec![0.25, 0.35]).unwrap();
    let slot_angle = (-26f64).to_radians();
    let plan = SlotPlan {
        slot: 0,
        angle: slot_angle,
        sector: SectorClass::S4S,
        alloc: alloc.clone(),
        esp: 0.0,
        sinr: vec![],
        status: PlanStatus::Optimal,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut signal = [0.0; 2];
    let mut residual = [0.0; 2];
    let mut count = 0usize;
    for _ in 0..8 {
        let symbols = gen_symbols(&c, 2, Modulation::Qam16, &mut rng);
        let rx = user_rx(&users, &plan, &symbols, 0, &c, &mut rng);
        for (p, u) in users.iter().enumerate() {
            for (i, y) in rx[p].iter().enumerate() {
                let (n, m) = (i / c.n_subcarriers, i % c.n_subcarriers);
                let h = effective_gain(u, alloc.rho_c[p], m, &c);
                let s = symbols.comm[p].get(0, n, m);
                signal[p] += (h * s).norm_sqr();
                residual[p] += (y - h * s).norm_sqr();
            }
        }
        count += c.n_symbols * c.n_subcarriers;
    }
    assert!(count >= 30_000);
    for p in 0..2 {
        let measured = signal[p] / residual[p];
        let predicted = user_sinr(p, &alloc, &users, slot_angle, &c);
        let err = (measured / predicted - 1.0).abs();
        assert!(err < 0.05, "user {p}: measured {measured}, predicted {predicted}");
    }
}
