use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete, DiscreteCDF};

use ioncrystal::dynamics::*;
use ioncrystal::presets;
use ioncrystal::reactions::*;

fn total_charge(state: &EnsembleState) -> f64 {
    state.ions().iter().filter(|i| i.alive).map(|i| state.species()[i.species].charge).sum()
}

fn be_cloud(n: usize, seed: u64) -> EnsembleState {
    let trap = presets::trap("be").unwrap();
    init_ensemble(&[(presets::species("Be+").unwrap(), n)], &trap, seed, 0.0).unwrap()
}

#[test]
fn library_channels_are_well_formed() {
    for c in channel_library() {
        c.validate().unwrap();
        if c.is_destructive() {
            assert!(c.branches.is_empty(), "{}", c.name);
            continue;
        }
        let sum: f64 = c.branches.iter().map(|b| b.fraction).sum();
        assert!((sum - 1.0).abs() < 1e-12, "{}", c.name);
        for b in &c.branches {
            assert_eq!(b.product.charge, c.reactant.charge, "{} -> {}", c.name, b.product.name);
        }
        if let Some(g) = c.gate {
            assert!((0.0..=1.0).contains(&g));
        }
    }
}

#[test]
fn hydrogen_chemistry_conserves_charge_and_ion_number() {
    let trap = presets::trap("be").unwrap();
    let names = ["Be+", "Ar+", "H2+", "H3+"];
    let counts: Vec<_> = names.iter().map(|n| (presets::species(n).unwrap(), 25)).collect();
    let mut st = init_ensemble(&counts, &trap, 4, 0.0).unwrap();
    let mut channels: Vec<_> = channel_library().into_iter().filter(|c| c.gas_name() == Some("H2")).collect();
    set_pressure(&mut channels, "H2", 1e-7);
    let (q0, n0) = (total_charge(&st), st.alive_count());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut log = ReactionLog::default();
    run_reactions(&mut st, &channels, 60.0, 0.5, None, &mut rng, &mut log).unwrap();
    assert!(!log.events.is_empty());
    assert_eq!(st.alive_count(), n0);
    assert!((total_charge(&st) - q0).abs() < 1e-30);
    assert!(log.events.iter().all(|e| e.time > 0.0 && e.time <= 60.0 + 1e-9));
}

#[test]
fn reacted_fraction_is_binomial() {
    // each ion reacts by time T with probability 1 - exp(-rate T)
    let (ions, replicas) = (40u64, 400);
    let channel = library_channel("Be+*+HD").unwrap().with_pressure(1e-6);
    let rate = channel_rate(&channel).unwrap();
    let duration = std::f64::consts::LN_2 / rate;
    let mut hist = vec![0usize; ions as usize + 1];
    for r in 0..replicas {
        let mut st = be_cloud(ions as usize, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + r);
        let mut log = ReactionLog::default();
        run_reactions(&mut st, &[channel.clone()], duration, duration / 16.0, None, &mut rng, &mut log).unwrap();
        hist[log.events.len()] += 1;
    }
    let dist = Binomial::new(0.5, ions).unwrap();
    // merge cells until each expects at least 5
    let (mut chi2, mut cells) = (0.0, 0);
    let (mut obs, mut exp) = (0.0, 0.0);
    for k in 0..=ions {
        obs += hist[k as usize] as f64;
        exp += replicas as f64 * dist.pmf(k);
        if exp >= 5.0 && replicas as f64 * (1.0 - dist.cdf(k)) >= 5.0 || k == ions {
            chi2 += (obs - exp).powi(2) / exp;
            cells += 1;
            obs = 0.0;
            exp = 0.0;
        }
    }
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 1e-3, "chi2 {chi2:.1} over {cells} cells, p = {p:.2e}");
}

#[test]
fn closed_gate_stops_photoactivated_channels() {
    let mut st = be_cloud(50, 2);
    let mut channels = vec![library_channel("Be+*+H2").unwrap().with_pressure(1e-6)];
    set_gates(&mut channels, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut log = ReactionLog::default();
    run_reactions(&mut st, &channels, 100.0, 1.0, None, &mut rng, &mut log).unwrap();
    assert!(log.events.is_empty());
    assert_eq!(st.counts(), vec![50]);
}

#[test]
fn photodestruction_removes_ions() {
    let trap = presets::trap("ba").unwrap();
    let af = presets::species("AF+").unwrap();
    let mut st = init_ensemble(&[(af, 30)], &trap, 5, 0.0).unwrap();
    let mut c = library_channel("photodestruction").unwrap();
    if let Trigger::Photon { intensity, .. } = &mut c.trigger {
        *intensity = 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut log = ReactionLog::default();
    run_reactions(&mut st, &[c], 200.0, 1.0, None, &mut rng, &mut log).unwrap();
    assert_eq!(st.alive_count(), 30 - log.events.len());
    assert!(log.events.iter().all(|e| e.product == "none"));
    assert!(!log.events.is_empty() && st.alive_count() > 0);
}

#[test]
fn heavier_products_settle_outside_be() {
    let be = presets::species("Be+").unwrap();
    let mut trap = presets::trap("be").unwrap();
    trap.v_ec = 8.0;
    let mut st = init_ensemble(&[(be, 150)], &trap, 6, 0.0).unwrap();
    let channels = vec![library_channel("Be+*+HD").unwrap().with_pressure(1e-6)];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut log = ReactionLog::default();
    run_reactions(&mut st, &channels, 3.0, 0.5, None, &mut rng, &mut log).unwrap();
    let mut cfg = ForceConfig::new(TrapMode::Pseudopotential, trap, 1.0);
    cfg.timestep = cfg.timestep_limit(&st);
    relax(&mut st, &cfg, 2e5, 2e-3).unwrap();

    let mean_rho = |name: &str| {
        let s = st.species_index(name).unwrap();
        let r: Vec<f64> =
            st.ions().iter().filter(|i| i.alive && i.species == s).map(|i| i.position[0].hypot(i.position[1])).collect();
        (r.iter().sum::<f64>() / r.len() as f64, r.len())
    };
    let (r_be, n_be) = mean_rho("Be+");
    let (r_bed, n_bed) = mean_rho("BeD+");
    assert!(n_be > 20 && n_bed > 10, "{n_be} Be+, {n_bed} BeD+");
    assert!(r_bed > r_be, "BeD+ at {r_bed:.3e} m, Be+ at {r_be:.3e} m");
}
