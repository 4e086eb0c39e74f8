use risfair::beamforming::mmse_beamformer;
use risfair::beamforming::sinr_per_user;
use risfair::model::{effective_channels, SystemConfig};
use risfair::parallel::Execution;
use risfair::power::allocate_power_instantaneous;
use risfair::schemes::*;

fn small() -> SystemConfig {
    SystemConfig::reference(3, 6, 8)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn scheme_names_round_trip() {
    for s in SchemeId::ALL {
        assert_eq!(s.to_string().parse::<SchemeId>().unwrap(), s);
    }
    assert_eq!("scheme 3".parse::<SchemeId>().unwrap(), SchemeId::S3);
    assert!("S7".parse::<SchemeId>().is_err());
}

#[test]
fn reported_sinr_is_reproducible() {
    let cfg = small();
    let caps = config_caps(&cfg).unwrap();
    let stats = draw_statistics(&cfg, 11, 0).unwrap();
    let opts = SchemeOptions::default();
    for trial in 0..3 {
        let real = draw_realization(&cfg, 11, trial);
        let ctx = SchemeContext {
            stats: &stats,
            caps: &caps,
            design: None,
            options: &opts,
            seed: 11,
            trial,
        };
        for s in SchemeId::ALL {
            let r = run_scheme(s, &real, &ctx).unwrap();
            r.phases.check_unit_modulus().unwrap();
            assert!(r.power.p_phys.iter().zip(&caps).all(|(p, c)| *p <= *c));
            let eff = effective_channels(&stats, &r.phases, &real).unwrap();
            let again = sinr_per_user(&eff.g, &r.power.p_phys, &r.beamformer, stats.noise_power).unwrap();
            for (a, b) in again.per_user.iter().zip(&r.sinr.per_user) {
                assert!(rel(*a, *b) < 1e-8, "{s}: {a} vs {b}");
            }
            if !s.statistical_power() {
                assert!(r.sinr.spread() <= 1e-6 * r.sinr.tau, "{s} spread {}", r.sinr.spread());
            }
        }
    }
}

#[test]
fn scheme_one_is_a_fixed_point_of_its_own_phases() {
    let cfg = small();
    let caps = config_caps(&cfg).unwrap();
    let stats = draw_statistics(&cfg, 3, 0).unwrap();
    let real = draw_realization(&cfg, 3, 0);
    let opts = SchemeOptions::default();
    let ctx = SchemeContext {
        stats: &stats,
        caps: &caps,
        design: None,
        options: &opts,
        seed: 3,
        trial: 0,
    };
    let r = run_scheme(SchemeId::S1, &real, &ctx).unwrap();
    assert!(r.round_history.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(r.rounds, r.round_history.len());
    let eff = effective_channels(&stats, &r.phases, &real).unwrap();
    let alloc = allocate_power_instantaneous(&eff.g_tilde, &stats.path_losses, &caps, stats.noise_power).unwrap();
    let beta = mmse_beamformer(&eff.g, &alloc.p_phys, stats.noise_power).unwrap();
    let again = sinr_per_user(&eff.g, &alloc.p_phys, &beta, stats.noise_power).unwrap();
    assert!(rel(again.tau, r.min_sinr()) < 1e-8);
}

#[test]
fn statistical_design_is_reused() {
    let cfg = small();
    let caps = config_caps(&cfg).unwrap();
    let stats = draw_statistics(&cfg, 5, 0).unwrap();
    let opts = SchemeOptions::default();
    let design = statistical_design(&stats, &caps, &opts.ascent).unwrap();
    assert!(design.tau_bar >= design.tau_bar_init);
    let real = draw_realization(&cfg, 5, 1);
    let with = SchemeContext {
        stats: &stats,
        caps: &caps,
        design: Some(&design),
        options: &opts,
        seed: 5,
        trial: 1,
    };
    let without = SchemeContext {
        design: None,
        ..with.clone()
    };
    for s in [SchemeId::S2, SchemeId::S3] {
        let a = run_scheme(s, &real, &with).unwrap();
        let b = run_scheme(s, &real, &without).unwrap();
        assert_eq!(a.phases, design.phases);
        assert_eq!(a.phases, b.phases);
        assert_eq!(a.sinr, b.sinr);
    }
    let pred = predicted_min_sinr(&stats, &caps, &design.phases).unwrap();
    assert!(rel(pred, design.tau_bar) < 1e-12);
}

#[test]
fn statistical_power_ignores_fading() {
    let cfg = small();
    let caps = config_caps(&cfg).unwrap();
    let stats = draw_statistics(&cfg, 8, 0).unwrap();
    let opts = SchemeOptions::default();
    let ctx = SchemeContext {
        stats: &stats,
        caps: &caps,
        design: None,
        options: &opts,
        seed: 8,
        trial: 0,
    };
    let a = run_scheme(SchemeId::S4, &draw_realization(&cfg, 8, 0), &ctx).unwrap();
    let b = run_scheme(SchemeId::S4, &draw_realization(&cfg, 8, 1), &ctx).unwrap();
    assert_eq!(a.power.p_phys, b.power.p_phys);
    let kf = cfg.users as f64;
    let received: Vec<f64> = a
        .power
        .p_phys
        .iter()
        .zip(&stats.path_losses)
        .map(|(p, l)| kf * p * l)
        .collect();
    assert!(received.iter().all(|r| rel(*r, received[0]) < 1e-12));
}

#[test]
fn single_trial_matches_run_scheme() {
    let cfg = small();
    let caps = config_caps(&cfg).unwrap();
    let stats = draw_statistics(&cfg, 21, 0).unwrap();
    let real = draw_realization(&cfg, 21, 0);
    let opts = MonteCarloOptions::default();
    for s in [SchemeId::S1, SchemeId::S2, SchemeId::S6] {
        let summary = monte_carlo(s, &cfg, 1, 21, &opts).unwrap();
        let ctx = SchemeContext {
            stats: &stats,
            caps: &caps,
            design: None,
            options: &opts.scheme,
            seed: 21,
            trial: 0,
        };
        let r = run_scheme(s, &real, &ctx).unwrap();
        assert_eq!(summary.trials, 1);
        assert_eq!(summary.mean_min_sinr, r.min_sinr());
        assert_eq!(summary.std_min_sinr, 0.0);
    }
}

#[test]
fn monte_carlo_is_deterministic() {
    let cfg = small();
    let schemes = [SchemeId::S2, SchemeId::S5, SchemeId::S6];
    let seq = MonteCarloOptions {
        execution: Execution::Sequential,
        ..Default::default()
    };
    let par = MonteCarloOptions::default();
    let a = monte_carlo_many(&schemes, &cfg, 6, 99, &seq).unwrap();
    let b = monte_carlo_many(&schemes, &cfg, 6, 99, &par).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.min_sinrs, y.min_sinrs);
        assert_eq!(x.mean_power_sum, y.mean_power_sum);
    }
    let redraw = MonteCarloOptions {
        redraw_statistics: true,
        ..Default::default()
    };
    let c = monte_carlo_many(&schemes, &cfg, 6, 99, &redraw).unwrap();
    let d = monte_carlo_many(&schemes, &cfg, 6, 99, &redraw).unwrap();
    assert_eq!(c[0].min_sinrs, d[0].min_sinrs);
    assert_ne!(c[0].min_sinrs, a[0].min_sinrs);
}

#[test]
fn common_random_numbers_across_calls() {
    let cfg = small();
    let opts = MonteCarloOptions::default();
    let together = monte_carlo_many(&[SchemeId::S5, SchemeId::S6], &cfg, 4, 1, &opts).unwrap();
    let alone = monte_carlo(SchemeId::S6, &cfg, 4, 1, &opts).unwrap();
    assert_eq!(together[1].min_sinrs, alone.min_sinrs);
}

#[test]
fn invalid_inputs_are_rejected() {
    let cfg = small();
    let opts = MonteCarloOptions::default();
    assert!(monte_carlo(SchemeId::S2, &cfg, 0, 1, &opts).is_err());
    assert!(monte_carlo_many(&[], &cfg, 1, 1, &opts).is_err());
    let stats = draw_statistics(&cfg, 1, 0).unwrap();
    let real = draw_realization(&cfg, 1, 0);
    let so = SchemeOptions::default();
    let ctx = SchemeContext {
        stats: &stats,
        caps: &[0.1],
        design: None,
        options: &so,
        seed: 1,
        trial: 0,
    };
    assert!(run_scheme(SchemeId::S5, &real, &ctx).is_err());
}
